//! Parametric feasible-experiment families.
//!
//! A generator stands in for an infinite feasible set. At any query belief it
//! returns a finite, deterministic list of Bayes-plausible experiments; its
//! `resolution` controls how much of the family is realized, and raising the
//! resolution only ever adds experiments.

use std::collections::HashMap;

use serde_json::{json, Map, Value as Json};

use crate::belief::{dyadic_from_f64, rat, rational_to_f64, Belief, Experiment, Rational};
use crate::error::{Error, Result};

pub const ENTROPY_HALVING: &str = "binary_entropy_halving";
pub const TRIANGLE_LADDER: &str = "triangle_ladder";
pub const TRIANGLE_CENTER_SPREAD: &str = "triangle_center_spread";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub kind: String,
    pub params: Map<String, Json>,
    pub resolution: u32,
}

impl GeneratorSpec {
    pub fn new(kind: &str, resolution: u32) -> Self {
        GeneratorSpec {
            kind: kind.to_string(),
            params: Map::new(),
            resolution,
        }
    }

    pub fn refine_step(&self) -> u32 {
        self.params
            .get("refine_step")
            .and_then(Json::as_u64)
            .unwrap_or(1)
            .max(1) as u32
    }

    pub fn to_json(&self) -> Json {
        json!({"kind": self.kind, "params": self.params, "resolution": self.resolution})
    }

    pub fn from_json(value: &Json, path: &str) -> Result<Self> {
        let invalid = |message: &str| Error::InvalidDocument {
            path: path.to_string(),
            message: message.to_string(),
        };
        let kind = value
            .get("kind")
            .and_then(Json::as_str)
            .ok_or_else(|| invalid("generator needs a string \"kind\""))?;
        let params = match value.get("params") {
            None | Some(Json::Null) => Map::new(),
            Some(Json::Object(m)) => m.clone(),
            Some(_) => return Err(invalid("\"params\" must be an object")),
        };
        let resolution = value
            .get("resolution")
            .and_then(Json::as_u64)
            .filter(|&r| r >= 1 && r <= u32::MAX as u64)
            .ok_or_else(|| invalid("\"resolution\" must be a positive integer"))?;
        Ok(GeneratorSpec {
            kind: kind.to_string(),
            params,
            resolution: resolution as u32,
        })
    }
}

/// Compiled form of a [`GeneratorSpec`].
#[derive(Clone, Debug)]
pub enum Generator {
    EntropyHalving(EntropyHalving),
    TriangleLadder(TriangleLadder),
    CenterSpread(CenterSpread),
}

impl Generator {
    pub fn compile(spec: &GeneratorSpec, dim: usize, path: &str) -> Result<Self> {
        let need_dim = |d: usize| -> Result<()> {
            if dim != d {
                return Err(Error::InvalidDocument {
                    path: path.to_string(),
                    message: format!("generator {} needs {d} states, instance has {dim}", spec.kind),
                });
            }
            Ok(())
        };
        match spec.kind.as_str() {
            ENTROPY_HALVING => {
                need_dim(2)?;
                let bits = spec.params.get("precision_bits").and_then(Json::as_u64).unwrap_or(40) as u32;
                Ok(Generator::EntropyHalving(EntropyHalving {
                    levels: spec.resolution,
                    bits: bits.clamp(8, 60),
                }))
            }
            TRIANGLE_LADDER => {
                need_dim(3)?;
                let vertices = triangle_vertices(&spec.params, path)?;
                Ok(Generator::TriangleLadder(TriangleLadder::new(
                    vertices,
                    spec.resolution,
                )))
            }
            TRIANGLE_CENTER_SPREAD => {
                need_dim(3)?;
                Ok(Generator::CenterSpread(CenterSpread::new(spec, path)?))
            }
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }

    /// Experiments of the family whose expectation is exactly `p`.
    pub fn experiments_at(&self, p: &Belief) -> Vec<Experiment> {
        match self {
            Generator::EntropyHalving(g) => g.experiments_at(p).into_iter().collect(),
            Generator::TriangleLadder(g) => g.experiments_at(p).into_iter().collect(),
            Generator::CenterSpread(g) => {
                if p == &g.center {
                    g.spreads.clone()
                } else {
                    Vec::new()
                }
            }
        }
    }

    pub fn support_bound(&self) -> usize {
        2
    }

    /// All experiments the generator can ever emit, when that set is finite
    /// and independent of the query; `None` for query-driven families.
    pub fn enumerable(&self) -> Option<Vec<Experiment>> {
        match self {
            Generator::EntropyHalving(_) => None,
            Generator::TriangleLadder(g) => Some(g.all_experiments()),
            Generator::CenterSpread(g) => Some(g.spreads.clone()),
        }
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    -t * t.ln() - (1.0 - t) * (1.0 - t).ln()
}

/// Two-point spreads on binary beliefs that halve expected entropy, with
/// support symmetric about 1/2: from `t` to `{u, 1 - u}` where
/// `H(u) = H(t) / 2`. The family is realized down to entropy
/// `log 2 / 2^levels`; endpoints are bisected and snapped to `2^-bits`.
#[derive(Clone, Debug)]
pub struct EntropyHalving {
    pub levels: u32,
    pub bits: u32,
}

impl EntropyHalving {
    fn entropy_floor(&self) -> f64 {
        std::f64::consts::LN_2 / 2f64.powi(self.levels as i32)
    }

    /// Solves `H(u) = target` on `(0, 1/2]` by bisection.
    fn solve(target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if binary_entropy(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn experiments_at(&self, p: &Belief) -> Option<Experiment> {
        if p.dim() != 2 {
            return None;
        }
        let t = p.coord(0).clone();
        let one = rat(1, 1);
        let u = if t <= rat(1, 2) { t.clone() } else { &one - &t };
        if u <= rat(0, 1) {
            return None;
        }
        let target = binary_entropy(rational_to_f64(&u)) / 2.0;
        if target < self.entropy_floor() * (1.0 - 1e-9) {
            return None;
        }
        let child = dyadic_from_f64(Self::solve(target), self.bits);
        if child <= rat(0, 1) || child >= u {
            return None;
        }
        let mirror = &one - &child;
        let low_weight: Rational = (&mirror - &t) / (&mirror - &child);
        let high_weight = &one - &low_weight;
        Experiment::new(vec![
            (low_weight, Belief::binary(child).ok()?),
            (high_weight, Belief::binary(mirror).ok()?),
        ])
        .ok()
    }
}

fn triangle_vertices(params: &Map<String, Json>, path: &str) -> Result<[Belief; 3]> {
    match params.get("vertices") {
        None => Ok([
            Belief::point_mass(3, 2),
            Belief::point_mass(3, 1),
            Belief::point_mass(3, 0),
        ]),
        Some(Json::Array(items)) if items.len() == 3 => {
            let v = items
                .iter()
                .enumerate()
                .map(|(i, b)| Belief::from_json(b, &format!("{path}.params.vertices[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok([v[0].clone(), v[1].clone(), v[2].clone()])
        }
        Some(_) => Err(Error::InvalidDocument {
            path: format!("{path}.params.vertices"),
            message: "expected three beliefs".into(),
        }),
    }
}

fn midpoint(a: &Belief, b: &Belief) -> Belief {
    let half = rat(1, 2);
    Belief::new(
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| &half * x + &half * y)
            .collect(),
    )
    .expect("midpoint of beliefs is a belief")
}

/// Nested midpoint triangles: `A_i = (A_{i-1} + B_{i-1}) / 2`, `B_i = (B_{i-1}
/// + C_{i-1}) / 2`, `C_i = (C_{i-1} + A_{i-1}) / 2`, with one experiment at each
/// level-`i` vertex spreading back onto the two level-`i-1` vertices it
/// averages. Levels `1..=resolution` are realized.
#[derive(Clone, Debug)]
pub struct TriangleLadder {
    levels: Vec<[Belief; 3]>,
    index: HashMap<Belief, (usize, usize)>,
}

impl TriangleLadder {
    pub fn new(base: [Belief; 3], max_level: u32) -> Self {
        let mut levels = vec![base];
        for _ in 0..max_level {
            let [a, b, c] = levels.last().expect("nonempty").clone();
            levels.push([midpoint(&a, &b), midpoint(&b, &c), midpoint(&c, &a)]);
        }
        let mut index = HashMap::new();
        for (level, tri) in levels.iter().enumerate().skip(1) {
            for (k, p) in tri.iter().enumerate() {
                index.entry(p.clone()).or_insert((level, k));
            }
        }
        TriangleLadder { levels, index }
    }

    /// `(A_i, B_i, C_i)`.
    pub fn level(&self, i: usize) -> Option<&[Belief; 3]> {
        self.levels.get(i)
    }

    /// Level and vertex slot (0 = A, 1 = B, 2 = C) of a ladder belief.
    pub fn locate(&self, p: &Belief) -> Option<(usize, usize)> {
        if let Some(&hit) = self.index.get(p) {
            return Some(hit);
        }
        self.levels[0].iter().position(|v| v == p).map(|k| (0, k))
    }

    fn experiment(&self, level: usize, k: usize) -> Experiment {
        let prev = &self.levels[level - 1];
        Experiment::new(vec![
            (rat(1, 2), prev[k].clone()),
            (rat(1, 2), prev[(k + 1) % 3].clone()),
        ])
        .expect("ladder experiment is valid")
    }

    pub fn experiments_at(&self, p: &Belief) -> Option<Experiment> {
        let &(level, k) = self.index.get(p)?;
        Some(self.experiment(level, k))
    }

    fn all_experiments(&self) -> Vec<Experiment> {
        (1..self.levels.len())
            .flat_map(|level| (0..3).map(move |k| (level, k)))
            .map(|(level, k)| self.experiment(level, k))
            .collect()
    }
}

/// `D_i = (1/3 - 1/(3 4^i), 1/3 + 2/(3 4^i), 1/3 - 1/(3 4^i))`.
pub fn center_spread_target(i: u32) -> Belief {
    let scale = Rational::from_integer(num_bigint::BigInt::from(4u8).pow(i));
    let third = rat(1, 3);
    let small = rat(1, 3) / &scale;
    Belief::new(vec![&third - &small, &third + &small * rat(2, 1), &third - &small]).expect("D_i is a belief")
}

/// Spreads of the triangle centre onto a fixed belief `W` and the ladder
/// point `D_i`, with weights `1/(1 + 4^(i-1))` and `4^(i-1)/(1 + 4^(i-1))`,
/// for `i = first..=resolution`.
#[derive(Clone, Debug)]
pub struct CenterSpread {
    center: Belief,
    spreads: Vec<Experiment>,
}

impl CenterSpread {
    fn new(spec: &GeneratorSpec, path: &str) -> Result<Self> {
        let w = spec.params.get("w").ok_or_else(|| Error::InvalidDocument {
            path: format!("{path}.params"),
            message: "triangle_center_spread needs \"w\"".into(),
        })?;
        let w = Belief::from_json(w, &format!("{path}.params.w"))?;
        let first = spec.params.get("first").and_then(Json::as_u64).unwrap_or(0) as u32;
        let center = Belief::uniform(3);
        let mut spreads = Vec::new();
        for i in first..=spec.resolution {
            let four_pow = rat(4, 1).pow(i as i32 - 1);
            let w_weight = rat(1, 1) / (rat(1, 1) + &four_pow);
            let d_weight = &four_pow / (rat(1, 1) + &four_pow);
            let e = Experiment::new(vec![(w_weight, w.clone()), (d_weight, center_spread_target(i))])?;
            let mean = e.expectation();
            if mean != center {
                return Err(Error::NotBayesPlausible {
                    path: format!("{path}.params.w (spread index {i})"),
                    expected: center.to_string(),
                    found: mean.to_string(),
                });
            }
            spreads.push(e);
        }
        Ok(CenterSpread { center, spreads })
    }
}
