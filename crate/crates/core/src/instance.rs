//! Problem instances: prior, utility, feasible experiments, and file I/O.

use std::collections::HashMap;

use serde_json::{json, Map, Value as Json};

use crate::belief::{Belief, Experiment};
use crate::error::{Error, Result};
use crate::generators::{Generator, GeneratorSpec};
use crate::utility::{UtilitySpec, DEFAULT_TIE_EPS};
use crate::value::Value;

pub const DEFAULT_DELTA_FLOOR: f64 = 1e-9;

/// `(mu, F, v)`. Trivial experiments are always feasible and never listed.
#[derive(Clone, Debug)]
pub struct Instance {
    pub states: Vec<String>,
    pub prior: Belief,
    pub utility: UtilitySpec,
    pub experiments: Vec<Experiment>,
    pub generators: Vec<GeneratorSpec>,
    pub h: Option<usize>,
    pub delta: Option<f64>,
    pub v_bounds: Option<(f64, f64)>,
    pub tie_eps: f64,
    /// States are `(theta0, theta1)` pairs ordered 00, 01, 10, 11.
    pub product_pair: bool,
    pub notes: Option<String>,
    compiled: Vec<Generator>,
    by_mean: HashMap<Belief, Vec<usize>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.prior == other.prior
            && self.utility == other.utility
            && self.experiments == other.experiments
            && self.generators == other.generators
            && self.h == other.h
            && self.delta == other.delta
            && self.v_bounds == other.v_bounds
            && self.tie_eps == other.tie_eps
            && self.product_pair == other.product_pair
            && self.notes == other.notes
    }
}

/// Smallest infimum of the entropy gap found among inspected experiments.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EntropyGapReport {
    /// `+inf` when no nontrivial experiment was inspected.
    pub infimum: f64,
    pub witness: Option<Experiment>,
    /// The usable `delta`, or `None` when the infimum is at or below the floor.
    pub delta: Option<f64>,
    pub inspected: usize,
}

impl Instance {
    pub fn new(
        prior: Belief,
        utility: UtilitySpec,
        experiments: Vec<Experiment>,
        generators: Vec<GeneratorSpec>,
    ) -> Result<Self> {
        let states = (0..prior.dim()).map(|i| format!("s{i}")).collect();
        Self::assemble(Parts {
            states,
            prior,
            utility,
            experiments,
            generators,
            h: None,
            delta: None,
            v_bounds: None,
            tie_eps: DEFAULT_TIE_EPS,
            product_pair: false,
            notes: None,
        })
    }

    fn assemble(parts: Parts) -> Result<Self> {
        let dim = parts.prior.dim();
        if parts.states.len() != dim {
            return Err(Error::DimensionMismatch {
                path: "states".into(),
                expected: dim,
                found: parts.states.len(),
            });
        }
        parts.utility.validate(dim, "utility")?;
        let mut by_mean: HashMap<Belief, Vec<usize>> = HashMap::new();
        for (i, e) in parts.experiments.iter().enumerate() {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    path: format!("experiments[{i}]"),
                    expected: dim,
                    found: e.dim(),
                });
            }
            by_mean.entry(e.expectation()).or_default().push(i);
        }
        let compiled = parts
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| Generator::compile(g, dim, &format!("generators[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if let Some((lo, hi)) = parts.v_bounds {
            let (vmin, vmax) = parts.utility.range();
            if lo.is_nan() || hi.is_nan() || lo > hi || vmin < lo - 1e-12 || vmax > hi + 1e-12 {
                return Err(Error::InvalidDocument {
                    path: "v_bounds".into(),
                    message: format!("utility range [{vmin}, {vmax}] not within declared [{lo}, {hi}]"),
                });
            }
        }
        if parts.tie_eps.is_nan() || parts.tie_eps < 0.0 {
            return Err(Error::InvalidDocument {
                path: "tie_eps".into(),
                message: "must be nonnegative".into(),
            });
        }
        if parts.product_pair && dim != 4 {
            return Err(Error::InvalidDocument {
                path: "product_pair".into(),
                message: "product structure needs exactly 4 states".into(),
            });
        }
        let inst = Instance {
            states: parts.states,
            prior: parts.prior,
            utility: parts.utility,
            experiments: parts.experiments,
            generators: parts.generators,
            h: parts.h,
            delta: parts.delta,
            v_bounds: parts.v_bounds,
            tie_eps: parts.tie_eps,
            product_pair: parts.product_pair,
            notes: parts.notes,
            compiled,
            by_mean,
        };
        inst.check_support_bound()?;
        Ok(inst)
    }

    fn parts(&self) -> Parts {
        Parts {
            states: self.states.clone(),
            prior: self.prior.clone(),
            utility: self.utility.clone(),
            experiments: self.experiments.clone(),
            generators: self.generators.clone(),
            h: self.h,
            delta: self.delta,
            v_bounds: self.v_bounds,
            tie_eps: self.tie_eps,
            product_pair: self.product_pair,
            notes: self.notes.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Same instance started from another prior.
    pub fn with_prior(&self, prior: Belief) -> Result<Self> {
        prior.check_dim(self.dim(), "prior")?;
        let mut parts = self.parts();
        parts.prior = prior;
        Self::assemble(parts)
    }

    pub fn with_bounds(&self, lo: f64, hi: f64) -> Result<Self> {
        let mut parts = self.parts();
        parts.v_bounds = Some((lo, hi));
        Self::assemble(parts)
    }

    pub fn with_utility(&self, utility: UtilitySpec) -> Result<Self> {
        let mut parts = self.parts();
        parts.utility = utility;
        parts.v_bounds = None;
        Self::assemble(parts)
    }

    /// Every generator's resolution raised by `extra` refinement steps; a
    /// generator advances `params.refine_step` (default 1) per step.
    pub fn refined(&self, extra: u32) -> Result<Self> {
        let mut parts = self.parts();
        for g in &mut parts.generators {
            g.resolution += extra * g.refine_step();
        }
        Self::assemble(parts)
    }

    pub fn compiled_generator(&self, i: usize) -> Option<&Generator> {
        self.compiled.get(i)
    }

    pub fn has_generators(&self) -> bool {
        !self.generators.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.utility.is_exact()
    }

    /// `F(p)`: listed experiments with expectation `p`, then generator
    /// output, then the trivial experiment.
    pub fn feasible_at(&self, p: &Belief) -> Vec<Experiment> {
        let mut out: Vec<Experiment> = self
            .by_mean
            .get(p)
            .map(|ids| ids.iter().map(|&i| self.experiments[i].clone()).collect())
            .unwrap_or_default();
        for g in &self.compiled {
            for e in g.experiments_at(p) {
                if !out.contains(&e) {
                    out.push(e);
                }
            }
        }
        out.push(Experiment::trivial(p.clone()));
        out
    }

    pub fn eval_v(&self, p: &Belief) -> Result<Value> {
        self.utility.eval(p, self.tie_eps)
    }

    /// `(V_lo, V_hi)`: declared bounds, else the utility's range.
    pub fn bounds(&self) -> (f64, f64) {
        self.v_bounds.unwrap_or_else(|| self.utility.range())
    }

    /// Whether the instance declares a strictly positive lower utility bound.
    pub fn declares_positive_utility(&self) -> bool {
        matches!(self.v_bounds, Some((lo, _)) if lo > 0.0)
    }

    /// Largest support size over listed and generated experiments (at least 1).
    pub fn check_support_bound(&self) -> Result<usize> {
        let mut widest = 1;
        for (i, e) in self.experiments.iter().enumerate() {
            if let Some(h) = self.h {
                if e.len() > h {
                    return Err(Error::AssumptionViolated(format!(
                        "experiments[{i}] has support size {} > h = {h}",
                        e.len()
                    )));
                }
            }
            widest = widest.max(e.len());
        }
        for (i, g) in self.compiled.iter().enumerate() {
            let bound = g.support_bound();
            if let Some(h) = self.h {
                if bound > h {
                    return Err(Error::AssumptionViolated(format!(
                        "generators[{i}] emits support size {bound} > h = {h}"
                    )));
                }
            }
            widest = widest.max(bound);
        }
        Ok(widest)
    }

    /// Infimum of the expected-entropy reduction over nontrivial experiments:
    /// the whole listed set, every enumerable generator, and query-driven
    /// generators at each belief in `sample`.
    pub fn check_entropy_gap(&self, sample: &[Belief], delta_floor: f64) -> EntropyGapReport {
        let mut infimum = f64::INFINITY;
        let mut witness = None;
        let mut inspected = 0;
        let mut consider = |e: &Experiment| {
            if e.is_trivial() {
                return;
            }
            inspected += 1;
            let gap = e.entropy_gap();
            if gap < infimum {
                infimum = gap;
                witness = Some(e.clone());
            }
        };
        self.experiments.iter().for_each(&mut consider);
        for g in &self.compiled {
            match g.enumerable() {
                Some(all) => all.iter().for_each(&mut consider),
                None => {
                    for p in sample {
                        g.experiments_at(p).iter().for_each(&mut consider);
                    }
                }
            }
        }
        let delta = if infimum > delta_floor { Some(infimum) } else { None };
        EntropyGapReport {
            infimum,
            witness,
            delta,
            inspected,
        }
    }

    pub fn to_json(&self) -> Json {
        let mut doc = Map::new();
        doc.insert("states".into(), json!(self.states));
        doc.insert("prior".into(), self.prior.to_json());
        doc.insert("utility".into(), self.utility.to_json());
        doc.insert(
            "experiments".into(),
            Json::Array(self.experiments.iter().map(Experiment::to_json).collect()),
        );
        doc.insert(
            "generators".into(),
            Json::Array(self.generators.iter().map(GeneratorSpec::to_json).collect()),
        );
        if let Some(h) = self.h {
            doc.insert("h".into(), json!(h));
        }
        if let Some(d) = self.delta {
            doc.insert("delta".into(), json!(d));
        }
        if let Some((lo, hi)) = self.v_bounds {
            doc.insert("v_bounds".into(), json!([lo, hi]));
        }
        if self.tie_eps != DEFAULT_TIE_EPS {
            doc.insert("tie_eps".into(), json!(self.tie_eps));
        }
        if self.product_pair {
            doc.insert("product_pair".into(), json!(true));
        }
        if let Some(n) = &self.notes {
            doc.insert("notes".into(), json!(n));
        }
        Json::Object(doc)
    }

    pub fn from_json(doc: &Json) -> Result<Self> {
        let invalid = |path: &str, message: &str| Error::InvalidDocument {
            path: path.to_string(),
            message: message.to_string(),
        };
        if !doc.is_object() {
            return Err(invalid("$", "instance document must be a JSON object"));
        }
        let prior = Belief::from_json(doc.get("prior").ok_or_else(|| invalid("prior", "missing"))?, "prior")?;
        let states = match doc.get("states") {
            Some(s) => serde_json::from_value::<Vec<Json>>(s.clone())
                .map_err(|_| invalid("states", "must be a list"))?
                .into_iter()
                .map(|v| match v {
                    Json::String(s) => s,
                    other => other.to_string(),
                })
                .collect(),
            None => (0..prior.dim()).map(|i| format!("s{i}")).collect(),
        };
        let utility = UtilitySpec::from_json(
            doc.get("utility").ok_or_else(|| invalid("utility", "missing"))?,
            "utility",
        )?;
        let experiments = match doc.get("experiments") {
            None | Some(Json::Null) => Vec::new(),
            Some(Json::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, e)| Experiment::from_json(e, &format!("experiments[{i}]")))
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(invalid("experiments", "must be a list")),
        };
        let generators = match doc.get("generators") {
            None | Some(Json::Null) => Vec::new(),
            Some(Json::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, g)| GeneratorSpec::from_json(g, &format!("generators[{i}]")))
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(invalid("generators", "must be a list")),
        };
        let h = match doc.get("h") {
            None | Some(Json::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .filter(|&h| h >= 1)
                    .ok_or_else(|| invalid("h", "must be a positive integer"))? as usize,
            ),
        };
        let delta = match doc.get("delta") {
            None | Some(Json::Null) => None,
            Some(v) => Some(
                v.as_f64()
                    .filter(|&d| d > 0.0)
                    .ok_or_else(|| invalid("delta", "must be a positive number"))?,
            ),
        };
        let v_bounds = match doc.get("v_bounds") {
            None | Some(Json::Null) => None,
            Some(v) => {
                let pair: Vec<f64> =
                    serde_json::from_value(v.clone()).map_err(|_| invalid("v_bounds", "must be [lo, hi]"))?;
                if pair.len() != 2 {
                    return Err(invalid("v_bounds", "must be [lo, hi]"));
                }
                Some((pair[0], pair[1]))
            }
        };
        let tie_eps = doc.get("tie_eps").and_then(Json::as_f64).unwrap_or(DEFAULT_TIE_EPS);
        let product_pair = doc.get("product_pair").and_then(Json::as_bool).unwrap_or(false);
        let notes = doc.get("notes").and_then(Json::as_str).map(str::to_string);
        Self::assemble(Parts {
            states,
            prior,
            utility,
            experiments,
            generators,
            h,
            delta,
            v_bounds,
            tie_eps,
            product_pair,
            notes,
        })
    }
}

struct Parts {
    states: Vec<String>,
    prior: Belief,
    utility: UtilitySpec,
    experiments: Vec<Experiment>,
    generators: Vec<GeneratorSpec>,
    h: Option<usize>,
    delta: Option<f64>,
    v_bounds: Option<(f64, f64)>,
    tie_eps: f64,
    product_pair: bool,
    notes: Option<String>,
}

pub fn load_instance(bytes: &[u8]) -> Result<Instance> {
    let doc: Json = serde_json::from_slice(bytes).map_err(|e| Error::InvalidDocument {
        path: "$".into(),
        message: e.to_string(),
    })?;
    Instance::from_json(&doc)
}

pub fn save_instance(inst: &Instance) -> Vec<u8> {
    serde_json::to_vec_pretty(&inst.to_json()).expect("instance serializes")
}
