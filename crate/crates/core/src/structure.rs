//! Optimal structure: the concave closure at the prior and its contact set,
//! implementability of a belief set, the decomposition that certifies it,
//! exact experiments, the coincidence set and existence of an optimal policy.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::belief::{rat, rational_to_f64, serialize_rational, Belief, Experiment, Rational};
use crate::engine::{
    evaluate_policy, first_steps_reaching, verify_markov_optimal, MarkovPolicy, MarkovVerdict, PolicyValue,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, build_graph_from, universe_seeds, BeliefGraph, GraphLimits};
use crate::instance::{EntropyGapReport, Instance};
use crate::linalg;
use crate::solver::{edge_value, max_reach_exact, value_limit, LimitValues, Tolerances};
use crate::value::Value;

pub const DEFAULT_GRID: usize = 12;
/// Refinement steps tried when a finite graph cannot settle a question.
pub const DEFAULT_MAX_REFINE: u32 = 24;

/// `10^-1, ..., 10^-6`.
pub fn default_eps_grid() -> Vec<Rational> {
    (1..=6).map(|k| rat(1, 10i64.pow(k))).collect()
}

/// Best unrestricted spread of the prior and a supporting affine function.
#[derive(Clone, Debug, Serialize)]
pub struct ClosureResult {
    /// `v_hat(mu)`.
    pub value: Value,
    pub spread: Experiment,
    /// `f(p) = sum_s affine[s] p_s`, with `f >= v` on every inspected belief.
    pub affine: Vec<f64>,
    pub grid_resolution: usize,
    /// Binary instances inspect only `v`'s breakpoints and the endpoints.
    pub breakpoint_mode: bool,
    pub inspected: usize,
    /// Spread weights and the value are exact rationals.
    pub exact: bool,
    pub warnings: Vec<String>,
}

impl ClosureResult {
    pub fn affine_at(&self, p: &Belief) -> f64 {
        p.to_f64().iter().zip(&self.affine).map(|(a, b)| a * b).sum()
    }
}

/// All beliefs with denominators dividing `r`.
pub fn simplex_grid(dim: usize, r: usize) -> Vec<Belief> {
    fn fill(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            fill(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let r = r.max(1);
    let mut raw = Vec::new();
    fill(r, dim, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|ks| {
            Belief::new(ks.into_iter().map(|k| rat(k as i64, r as i64)).collect()).expect("grid point is a belief")
        })
        .collect()
}

fn inspected_beliefs(inst: &Instance, mu: &Belief, grid: usize) -> (Vec<Belief>, bool) {
    let dim = inst.dim();
    let breakpoint_mode = dim == 2;
    let mut points: Vec<Belief> = if breakpoint_mode {
        Vec::new()
    } else {
        simplex_grid(dim, grid)
    };
    let mut extra: Vec<Belief> = (0..dim).map(|s| Belief::point_mass(dim, s)).collect();
    extra.extend(inst.utility.special_beliefs(dim));
    extra.push(mu.clone());
    let mut seen: BTreeSet<Belief> = points.iter().cloned().collect();
    for p in extra {
        if p.dim() == dim && seen.insert(p.clone()) {
            points.push(p);
        }
    }
    (points, breakpoint_mode)
}

/// `v_hat(mu) = max { sum_j lambda_j v(q_j) : sum_j lambda_j q_j = mu }` over
/// the inspected beliefs, by linear programming. The dual gives the
/// supporting affine function; ties between optimal duals are broken by
/// minimizing `sum_s f(delta_s)`.
pub fn concave_closure(inst: &Instance, mu: &Belief, grid: usize) -> Result<ClosureResult> {
    if mu.dim() != inst.dim() {
        return Err(Error::DimensionMismatch {
            path: "prior".into(),
            expected: inst.dim(),
            found: mu.dim(),
        });
    }
    let (points, breakpoint_mode) = inspected_beliefs(inst, mu, grid);
    let values = points.iter().map(|p| inst.eval_v(p)).collect::<Result<Vec<_>>>()?;
    let mu_f = mu.to_f64();
    let mut warnings = Vec::new();

    let mut primal = minilp::Problem::new(minilp::OptimizationDirection::Maximize);
    let vars: Vec<minilp::Variable> = values
        .iter()
        .map(|v| primal.add_var(v.to_f64(), (0.0, f64::INFINITY)))
        .collect();
    for (s, &target) in mu_f.iter().enumerate() {
        let row: Vec<(minilp::Variable, f64)> = points
            .iter()
            .zip(&vars)
            .map(|(q, &x)| (x, rational_to_f64(q.coord(s))))
            .collect();
        primal.add_constraint(row, minilp::ComparisonOp::Eq, target);
    }
    let sol = primal.solve().map_err(|e| Error::Lp(format!("closure primal: {e}")))?;
    let support: Vec<usize> = (0..points.len()).filter(|&i| sol[vars[i]] > 1e-12).collect();

    let cols: Vec<Vec<Rational>> = support.iter().map(|&i| points[i].coords().to_vec()).collect();
    let weights = linalg::solve_columns(&cols, mu.coords())
        .filter(|w| w.iter().all(|x| *x >= Rational::zero()))
        .ok_or_else(|| Error::Lp("closure support is not affinely independent".into()))?;
    let atoms: Vec<(Rational, Belief)> = weights
        .iter()
        .zip(&support)
        .filter(|(w, _)| !w.is_zero())
        .map(|(w, &i)| (w.clone(), points[i].clone()))
        .collect();
    let spread = Experiment::new(atoms)?;
    let chosen: Vec<Value> = spread
        .atoms()
        .iter()
        .map(|a| inst.eval_v(&a.belief))
        .collect::<Result<_>>()?;
    let value = Value::weighted_sum(spread.atoms().iter().map(|a| &a.weight).zip(&chosen));
    if (value.to_f64() - sol.objective()).abs() > 1e-7 {
        warnings.push(format!(
            "exact spread value {} differs from the LP optimum {}",
            value,
            sol.objective()
        ));
    }

    let affine = supporting_affine(&points, &values, &mu_f, true)?;
    Ok(ClosureResult {
        exact: value.is_exact(),
        value,
        spread,
        affine,
        grid_resolution: grid,
        breakpoint_mode,
        inspected: points.len(),
        warnings,
    })
}

/// Dual of the closure program: `min f(mu)` over linear `f >= v` on
/// `points`, then optionally the smallest such `f` at the vertices.
fn supporting_affine(points: &[Belief], values: &[Value], mu: &[f64], tie_break: bool) -> Result<Vec<f64>> {
    let dim = mu.len();
    let build = |objective: &dyn Fn(usize) -> f64| {
        let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
        let c: Vec<minilp::Variable> = (0..dim)
            .map(|s| lp.add_var(objective(s), (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        for (q, v) in points.iter().zip(values) {
            let row: Vec<(minilp::Variable, f64)> = c
                .iter()
                .enumerate()
                .map(|(s, &x)| (x, rational_to_f64(q.coord(s))))
                .collect();
            lp.add_constraint(row, minilp::ComparisonOp::Ge, v.to_f64());
        }
        (lp, c)
    };
    let (lp, c) = build(&|s| mu[s]);
    let first = lp.solve().map_err(|e| Error::Lp(format!("closure dual: {e}")))?;
    let primary: Vec<f64> = c.iter().map(|&x| first[x]).collect();
    if !tie_break {
        return Ok(primary);
    }
    let (mut lp, c) = build(&|_| 1.0);
    let cap = first.objective() + 1e-12 * first.objective().abs().max(1.0);
    lp.add_constraint(
        c.iter().enumerate().map(|(s, &x)| (x, mu[s])).collect::<Vec<_>>(),
        minilp::ComparisonOp::Le,
        cap,
    );
    match lp.solve() {
        Ok(second) => Ok(c.iter().map(|&x| second[x]).collect()),
        Err(_) => Ok(primary),
    }
}

/// Beliefs where the supporting affine function touches `v`.
#[derive(Clone, Debug, Serialize)]
pub struct ContactSet {
    pub points: Vec<Belief>,
    pub closure: ClosureResult,
    /// The optimal spread's support lies in `points`, so `mu` is in their
    /// convex hull.
    pub hull_ok: bool,
}

impl ContactSet {
    pub fn contains(&self, p: &Belief) -> bool {
        self.points.contains(p)
    }
}

/// Inspected beliefs with `|f(p) - v(p)| <= value_eps`.
pub fn contact_set(inst: &Instance, mu: &Belief, grid: usize, value_eps: f64) -> Result<ContactSet> {
    let mut closure = concave_closure(inst, mu, grid)?;
    let (points, _) = inspected_beliefs(inst, mu, grid);
    let values = points.iter().map(|p| inst.eval_v(p)).collect::<Result<Vec<_>>>()?;
    let touching = |affine: &[f64]| -> Vec<Belief> {
        points
            .iter()
            .zip(&values)
            .filter(|(p, v)| {
                let f: f64 = p.to_f64().iter().zip(affine).map(|(a, b)| a * b).sum();
                (f - v.to_f64()).abs() <= value_eps
            })
            .map(|(p, _)| p.clone())
            .collect()
    };
    let covers = |set: &[Belief]| closure.spread.support().into_iter().all(|q| set.contains(q));
    let mut contact = touching(&closure.affine);
    let mut hull_ok = covers(&contact);
    if !hull_ok {
        closure
            .warnings
            .push("degenerate dual: tie-broken supporting function misses the spread; re-solved".into());
        let plain = supporting_affine(&points, &values, &mu.to_f64(), false)?;
        let retry = touching(&plain);
        if covers(&retry) {
            closure.affine = plain;
            contact = retry;
            hull_ok = true;
        }
    }
    Ok(ContactSet {
        points: contact,
        closure,
        hull_ok,
    })
}

/// Nodes from which some choice of allowed edges reaches `target` with
/// probability one, plus such a choice. Repeatedly drops nodes that cannot
/// reach the target while staying inside the candidate set; the choice
/// always takes an edge one layer closer to the target.
pub fn almost_sure_reach(
    graph: &BeliefGraph,
    target: &[bool],
    allowed: &dyn Fn(usize, usize) -> bool,
) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = graph.len();
    let mut win = vec![true; n];
    let stays = |u: usize, i: usize, win: &[bool]| allowed(u, i) && graph.edges[u][i].targets.iter().all(|&t| win[t]);
    loop {
        let mut reach = target.to_vec();
        loop {
            let mut changed = false;
            for u in 0..n {
                if reach[u] || !win[u] {
                    continue;
                }
                let ok = (0..graph.edges[u].len())
                    .any(|i| stays(u, i, &win) && graph.edges[u][i].targets.iter().any(|&t| reach[t]));
                if ok {
                    reach[u] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let next: Vec<bool> = (0..n).map(|u| win[u] && reach[u]).collect();
        if next == win {
            break;
        }
        win = next;
    }
    let mut layered = target.to_vec();
    let mut choice = vec![None; n];
    loop {
        let mut newly = Vec::new();
        for u in 0..n {
            if layered[u] || !win[u] {
                continue;
            }
            if let Some(i) = (0..graph.edges[u].len())
                .find(|&i| stays(u, i, &win) && graph.edges[u][i].targets.iter().any(|&t| layered[t]))
            {
                newly.push((u, i));
            }
        }
        if newly.is_empty() {
            break;
        }
        for (u, i) in newly {
            layered[u] = true;
            choice[u] = Some(i);
        }
    }
    (win, choice)
}

/// The Markov policy following `choice` from node 0, stopping wherever
/// `choice` has nothing.
fn policy_from_choice(graph: &BeliefGraph, choice: &[Option<usize>]) -> Result<MarkovPolicy> {
    let mut rho = BTreeMap::new();
    let mut z = BTreeSet::new();
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        match choice[u] {
            Some(i) => {
                let e = &graph.edges[u][i];
                rho.insert(graph.nodes[u].clone(), e.experiment.clone());
                for &t in &e.targets {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            None => {
                z.insert(graph.nodes[u].clone());
            }
        }
    }
    MarkovPolicy::new(graph.nodes[0].clone(), rho, z)
}

/// `D` and a witness experiment per belief of `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub d: BTreeSet<Belief>,
    pub witnesses: BTreeMap<Belief, Experiment>,
    /// The closure of the named experiments hit a limit.
    pub truncated: bool,
}

impl Serialize for Decomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl Decomposition {
    pub fn to_json(&self) -> Json {
        json!({
            "D": self.d.iter().map(Belief::to_json).collect::<Vec<_>>(),
            "witnesses": self.witnesses.iter().map(|(p, e)| json!({"at": p.to_json(), "do": e.to_json()})).collect::<Vec<_>>(),
            "truncated": self.truncated,
        })
    }
}

fn decomposition_in_order(
    graph: &BeliefGraph,
    o: &BTreeSet<Belief>,
    mu: &Belief,
    order: &[usize],
) -> Option<Decomposition> {
    if o.contains(mu) {
        return Some(Decomposition {
            d: BTreeSet::new(),
            witnesses: BTreeMap::new(),
            truncated: graph.truncated,
        });
    }
    let in_o: Vec<bool> = graph.nodes.iter().map(|p| o.contains(p)).collect();
    let mut alive: Vec<bool> = in_o.iter().map(|&x| !x).collect();
    let qualifies = |u: usize, alive: &[bool]| {
        graph.edges[u]
            .iter()
            .position(|e| e.targets.iter().all(|&t| alive[t] || in_o[t]))
    };
    loop {
        let mut changed = false;
        for &u in order {
            if alive[u] && qualifies(u, &alive).is_none() {
                alive[u] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mu_id = graph.index_of(mu)?;
    if !alive[mu_id] {
        return None;
    }
    let mut d = BTreeSet::new();
    let mut witnesses = BTreeMap::new();
    for u in 0..graph.len() {
        if alive[u] {
            let i = qualifies(u, &alive).expect("fixed point keeps only qualifying nodes");
            d.insert(graph.nodes[u].clone());
            witnesses.insert(graph.nodes[u].clone(), graph.edges[u][i].experiment.clone());
        }
    }
    Some(Decomposition {
        d,
        witnesses,
        truncated: graph.truncated,
    })
}

fn universe(inst: &Instance, limits: GraphLimits) -> BeliefGraph {
    build_graph_from(inst, &universe_seeds(inst), limits)
}

/// Largest `D` outside `O` in which every belief has a nontrivial feasible
/// experiment with support in `D` and `O`, over every belief the instance's
/// experiments can reach. `None` unless the prior is in `D` or `O`. Each
/// witness is the first qualifying experiment in feasible-set order.
pub fn find_decomposition(inst: &Instance, o: &BTreeSet<Belief>, limits: GraphLimits) -> Option<Decomposition> {
    let graph = universe(inst, limits);
    let order: Vec<usize> = (0..graph.len()).collect();
    decomposition_in_order(&graph, o, &inst.prior, &order)
}

/// [`find_decomposition`] pruning in a shuffled node order.
pub fn find_decomposition_shuffled(
    inst: &Instance,
    o: &BTreeSet<Belief>,
    limits: GraphLimits,
    seed: u64,
) -> Option<Decomposition> {
    let graph = universe(inst, limits);
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    decomposition_in_order(&graph, o, &inst.prior, &order)
}

/// Rechecks a decomposition exactly: the prior is in `D` or `O`, each
/// witness is a feasible nontrivial spread of its belief, and its support
/// stays in `D` and `O`.
pub fn check_decomposition(inst: &Instance, o: &BTreeSet<Belief>, dec: &Decomposition) -> Result<()> {
    if !dec.d.contains(&inst.prior) && !o.contains(&inst.prior) {
        return Err(Error::InvalidPolicy("prior is in neither D nor O".into()));
    }
    for p in &dec.d {
        let e = dec
            .witnesses
            .get(p)
            .ok_or_else(|| Error::InvalidPolicy(format!("no witness at {p}")))?;
        if e.is_trivial() || !inst.feasible_at(p).contains(e) {
            return Err(Error::InvalidPolicy(format!(
                "witness at {p} is not a feasible nontrivial spread"
            )));
        }
        if let Some(q) = e.support().into_iter().find(|q| !dec.d.contains(*q) && !o.contains(*q)) {
            return Err(Error::InvalidPolicy(format!(
                "witness at {p} reaches {q} outside D and O"
            )));
        }
    }
    Ok(())
}

/// How `O` is reached at one accuracy.
#[derive(Clone, Debug, Serialize)]
pub struct EpsWitness {
    #[serde(serialize_with = "serialize_rational")]
    pub eps: Rational,
    /// Refinement steps applied to the generators (0 without generators).
    pub refinement: u32,
    /// Probability of ending in `O` under the witness policy.
    #[serde(serialize_with = "serialize_rational")]
    pub probability: Rational,
    /// Steps after which `Pr[b_n in O] >= 1 - eps`.
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImplementabilityReport {
    pub implementable: bool,
    /// Decided by refining generators rather than on one finite graph.
    pub resolution_relative: bool,
    pub truncated: bool,
    pub o: Vec<Belief>,
    /// Members of `O` the reachable graph never meets.
    pub unreachable_o: Vec<Belief>,
    pub decomposition: Option<Decomposition>,
    pub witnesses: Vec<EpsWitness>,
    /// Markov policy reaching `O` on the unrefined graph.
    pub policy: Option<MarkovPolicy>,
    pub obstruction: Option<String>,
}

/// Whether the prior can hit `O` with probability at least `1 - eps` in
/// finitely many steps, for every `eps` in the grid.
///
/// On a finite graph this is the value-one reachability question for the
/// indicator of `O`, decided exactly. Generator-backed instances that fail
/// on their listed resolution are refined until each `eps` is met or
/// `max_refine` steps are spent.
pub fn is_implementable(
    inst: &Instance,
    o: &BTreeSet<Belief>,
    eps_grid: &[Rational],
    limits: GraphLimits,
    max_refine: u32,
) -> Result<ImplementabilityReport> {
    let decomposition = find_decomposition(inst, o, limits);
    let graph = build_graph(inst, limits);
    let target: Vec<bool> = graph.nodes.iter().map(|p| o.contains(p)).collect();
    let unreachable_o: Vec<Belief> = o.iter().filter(|p| graph.index_of(p).is_none()).cloned().collect();
    let (win, choice) = almost_sure_reach(&graph, &target, &|_, _| true);
    let mut report = ImplementabilityReport {
        implementable: false,
        resolution_relative: false,
        truncated: graph.truncated,
        o: o.iter().cloned().collect(),
        unreachable_o,
        decomposition,
        witnesses: Vec::new(),
        policy: None,
        obstruction: None,
    };
    if win[0] {
        let policy = policy_from_choice(&graph, &choice)?;
        let thresholds: Vec<Rational> = eps_grid.iter().map(|e| Rational::one() - e).collect();
        let steps = first_steps_reaching(&policy.mu, &policy, Some(o), &thresholds, usize::MAX);
        for (eps, n) in eps_grid.iter().zip(steps) {
            report.witnesses.push(EpsWitness {
                eps: eps.clone(),
                refinement: 0,
                probability: Rational::one(),
                steps: n.expect("almost-sure reach meets every threshold"),
            });
        }
        report.implementable = true;
        report.policy = Some(policy);
        return Ok(report);
    }
    if !inst.has_generators() {
        report.obstruction = Some(format!(
            "no strategy reaches O with probability one: {} of {} reachable beliefs are pruned",
            win.iter().filter(|w| !**w).count(),
            graph.len()
        ));
        return Ok(report);
    }
    report.resolution_relative = true;
    let mut probes: Vec<(u32, Rational, MarkovPolicy)> = Vec::new();
    let mut probe = |extra: u32| -> Result<(Rational, MarkovPolicy)> {
        if let Some((_, p, pol)) = probes.iter().find(|(x, _, _)| *x == extra) {
            return Ok((p.clone(), pol.clone()));
        }
        let refined = inst.refined(extra)?;
        let g = build_graph(&refined, limits);
        let target: Vec<bool> = g.nodes.iter().map(|p| o.contains(p)).collect();
        let (reach, choice) = max_reach_exact(&g, &target)?;
        let pol = policy_from_choice(&g, &choice)?;
        probes.push((extra, reach[0].clone(), pol.clone()));
        Ok((reach[0].clone(), pol))
    };
    let mut all = true;
    let mut start = 0;
    for eps in eps_grid {
        let mut found = None;
        for extra in start..=max_refine {
            let (p, pol) = probe(extra)?;
            if p > Rational::one() - eps {
                let n = first_steps_reaching(&pol.mu, &pol, Some(o), &[Rational::one() - eps], usize::MAX)[0]
                    .expect("reach probability exceeds the threshold");
                found = Some(EpsWitness {
                    eps: eps.clone(),
                    refinement: extra,
                    probability: p,
                    steps: n,
                });
                start = extra;
                break;
            }
        }
        match found {
            Some(w) => report.witnesses.push(w),
            None => {
                all = false;
                let best = probes
                    .iter()
                    .map(|(_, p, _)| p.clone())
                    .max()
                    .unwrap_or_else(Rational::zero);
                report.obstruction = Some(format!(
                    "after {max_refine} refinement steps O is reached with probability at most {} < 1 - {eps}",
                    rational_to_f64(&best)
                ));
                break;
            }
        }
    }
    report.implementable = all;
    Ok(report)
}

/// Per node, which nontrivial edges keep `v_inf` in expectation. Trivial
/// experiments are always exact and are not listed.
pub fn exact_experiments(graph: &BeliefGraph, limit: &LimitValues, value_eps: f64) -> Vec<Vec<bool>> {
    (0..graph.len())
        .map(|u| {
            graph.edges[u]
                .iter()
                .map(|e| edge_value(e, &limit.values).approx_eq(&limit.values[u], value_eps))
                .collect()
        })
        .collect()
}

/// Nodes where `v_inf = v`.
pub fn coincidence_set(graph: &BeliefGraph, inst: &Instance, limit: &LimitValues, value_eps: f64) -> Result<Vec<bool>> {
    graph
        .nodes
        .iter()
        .zip(&limit.values)
        .map(|(p, w)| Ok(inst.eval_v(p)?.approx_eq(w, value_eps)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    Exists,
    DoesNotExist,
    /// Each refinement of the generators strictly raises `v_inf(mu)`, so no
    /// policy at a fixed resolution is optimal.
    DoesNotExistResolutionRelative,
    UnknownTruncated,
}

impl Existence {
    pub fn label(&self) -> &'static str {
        match self {
            Existence::Exists => "exists",
            Existence::DoesNotExist => "does not exist",
            Existence::DoesNotExistResolutionRelative => "does not exist (resolution-relative)",
            Existence::UnknownTruncated => "unknown (truncated)",
        }
    }

    pub fn exists(&self) -> bool {
        *self == Existence::Exists
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistenceReport {
    pub status: Existence,
    pub v_inf: Value,
    pub limit_status: String,
    pub policy: Option<MarkovPolicy>,
    pub verdict: Option<MarkovVerdict>,
    pub policy_value: Option<PolicyValue>,
    pub coincidence: Vec<Belief>,
    /// `(belief, experiment)` for every exact nontrivial edge.
    pub exact_edges: Vec<(Belief, Experiment)>,
    /// `v_inf(mu)` at the listed resolution and the next refinements.
    pub refinement_values: Vec<Value>,
    pub obstruction: Option<String>,
}

/// Decides whether an optimal strategy exists from the prior: restrict play
/// to exact experiments and ask whether the coincidence set can be reached
/// with probability one. When it can, the memoryless selector found on the
/// way is the optimal Markov policy.
pub fn optimal_exists(inst: &Instance, limits: GraphLimits, tol: &Tolerances) -> Result<ExistenceReport> {
    let graph = build_graph(inst, limits);
    let limit = value_limit(&graph, inst, tol)?;
    let exact = exact_experiments(&graph, &limit, tol.value_eps);
    let n_set = coincidence_set(&graph, inst, &limit, tol.value_eps)?;
    let mut report = ExistenceReport {
        status: Existence::DoesNotExist,
        v_inf: limit.values[0].clone(),
        limit_status: limit.status.label(),
        policy: None,
        verdict: None,
        policy_value: None,
        coincidence: (0..graph.len())
            .filter(|&u| n_set[u])
            .map(|u| graph.nodes[u].clone())
            .collect(),
        exact_edges: (0..graph.len())
            .flat_map(|u| {
                let graph = &graph;
                exact[u]
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x)
                    .map(move |(i, _)| (graph.nodes[u].clone(), graph.edges[u][i].experiment.clone()))
            })
            .collect(),
        refinement_values: vec![limit.values[0].clone()],
        obstruction: None,
    };
    if graph.truncated {
        report.status = Existence::UnknownTruncated;
        report.obstruction = Some("the belief graph hit a depth or node limit".into());
        return Ok(report);
    }
    let (win, choice) = almost_sure_reach(&graph, &n_set, &|u, i| exact[u][i]);
    if !win[0] {
        report.obstruction = Some(format!(
            "exact experiments cannot bring the prior into the coincidence set with probability one \
             ({} of {} beliefs are losing)",
            win.iter().filter(|w| !**w).count(),
            graph.len()
        ));
        return Ok(report);
    }
    if inst.has_generators() {
        for extra in 1..=2 {
            let refined = inst.refined(extra)?;
            let g = build_graph(&refined, limits);
            let lim = value_limit(&g, &refined, tol)?;
            report.refinement_values.push(lim.values[0].clone());
        }
        let rising = report
            .refinement_values
            .windows(2)
            .all(|w| w[1].exceeds(&w[0], tol.value_eps));
        if rising {
            report.status = Existence::DoesNotExistResolutionRelative;
            report.obstruction = Some(format!(
                "v_inf(mu) rises with every refinement ({}); the finite-resolution optimum is not optimal",
                report
                    .refinement_values
                    .iter()
                    .map(Value::to_string)
                    .collect::<Vec<_>>()
                    .join(" < ")
            ));
            return Ok(report);
        }
    }
    let policy = policy_from_choice(&graph, &choice)?;
    let verdict = verify_markov_optimal(&policy, inst, &graph, &limit, tol.value_eps)?;
    let value = evaluate_policy(&policy.mu, &policy, inst, tol)?;
    report.status = Existence::Exists;
    report.policy = Some(policy);
    report.verdict = Some(verdict);
    report.policy_value = Some(value);
    Ok(report)
}

pub const ENTROPY_GAP_STAMP: &str = "equivalence not guaranteed (entropy-gap condition violated)";

/// The three statements about `O` that coincide under the entropy-gap
/// condition: `O` is implementable; a decomposition exists; some strategy
/// attains `v_hat(mu)`.
#[derive(Clone, Debug, Serialize)]
pub struct SupportEquivalenceReport {
    pub o: Vec<Belief>,
    pub v_hat: Value,
    pub implementable: bool,
    pub decomposable: bool,
    pub attains_closure: bool,
    pub agree: bool,
    pub entropy_gap: EntropyGapReport,
    pub support_bound: usize,
    pub stamp: Option<String>,
    pub implementability: ImplementabilityReport,
    pub existence: ExistenceReport,
}

pub struct AnalysisOptions {
    pub limits: GraphLimits,
    pub tol: Tolerances,
    pub grid: usize,
    pub eps_grid: Vec<Rational>,
    pub max_refine: u32,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            limits: GraphLimits::default(),
            tol: Tolerances::default(),
            grid: DEFAULT_GRID,
            eps_grid: default_eps_grid(),
            max_refine: DEFAULT_MAX_REFINE,
        }
    }
}

/// Evaluates the three statements for `O` (the contact set at the prior by
/// default) and stamps the report when the entropy gap of the instance's
/// experiments falls below `delta_floor`.
pub fn support_equivalence_report(
    inst: &Instance,
    o: Option<BTreeSet<Belief>>,
    opts: &AnalysisOptions,
) -> Result<SupportEquivalenceReport> {
    let support_bound = inst.check_support_bound()?;
    let closure = concave_closure(inst, &inst.prior, opts.grid)?;
    let o = match o {
        Some(o) => o,
        None => contact_set(inst, &inst.prior, opts.grid, opts.tol.value_eps)?
            .points
            .into_iter()
            .collect(),
    };
    let graph = build_graph(inst, opts.limits);
    let entropy_gap = inst.check_entropy_gap(&graph.nodes, opts.tol.delta_floor);
    let implementability = is_implementable(inst, &o, &opts.eps_grid, opts.limits, opts.max_refine)?;
    let decomposable = implementability.decomposition.is_some();
    let existence = optimal_exists(inst, opts.limits, &opts.tol)?;
    let attains_closure = existence.status.exists()
        && existence
            .policy_value
            .as_ref()
            .is_some_and(|pv| pv.contains(&closure.value, opts.tol.value_eps));
    let implementable = implementability.implementable;
    Ok(SupportEquivalenceReport {
        o: o.into_iter().collect(),
        v_hat: closure.value,
        implementable,
        decomposable,
        attains_closure,
        agree: implementable == decomposable && decomposable == attains_closure,
        stamp: entropy_gap.delta.is_none().then(|| ENTROPY_GAP_STAMP.to_string()),
        entropy_gap,
        support_bound,
        implementability,
        existence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::engine::absorption_witness;
    use crate::utility::UtilitySpec;

    fn t(n: i64, d: i64) -> Belief {
        Belief::binary(rat(n, d)).unwrap()
    }

    fn vertices() -> BTreeSet<Belief> {
        (0..3).map(|s| Belief::point_mass(3, s)).collect()
    }

    fn ladder_a1() -> Belief {
        Belief::from_fractions(&[(0, 1), (1, 2), (1, 2)]).unwrap()
    }

    #[test]
    fn grid_counts() {
        assert_eq!(simplex_grid(3, 4).len(), 15);
        assert_eq!(simplex_grid(2, 5).len(), 6);
    }

    #[test]
    fn binary_indicator_closure() {
        let inst = corpus::four_experiments();
        let c = concave_closure(&inst, &inst.prior, DEFAULT_GRID).unwrap();
        assert_eq!(c.value, Value::Exact(rat(1, 1)));
        assert!(c.breakpoint_mode && c.exact);
        assert_eq!(c.spread.weight_of(&t(0, 1)), rat(2, 3));
        assert_eq!(c.spread.weight_of(&t(1, 1)), rat(1, 3));
        let o = contact_set(&inst, &inst.prior, DEFAULT_GRID, 1e-9).unwrap();
        assert_eq!(
            o.points.iter().cloned().collect::<BTreeSet<_>>(),
            BTreeSet::from([t(0, 1), t(1, 1)])
        );
        assert!(o.hull_ok);
    }

    #[test]
    fn triangle_closure_uses_the_vertices() {
        let inst = corpus::triangle_f1();
        let c = concave_closure(&inst, &inst.prior, DEFAULT_GRID).unwrap();
        assert_eq!(c.value, Value::Exact(rat(1, 1)));
        for v in vertices() {
            assert_eq!(c.spread.weight_of(&v), rat(1, 3));
        }
        let o = contact_set(&inst, &inst.prior, DEFAULT_GRID, 1e-9).unwrap();
        assert_eq!(o.points.into_iter().collect::<BTreeSet<_>>(), vertices());
    }

    #[test]
    fn affine_utility_is_its_own_closure() {
        let utility = UtilitySpec::FiniteAction {
            actions: vec!["only".into()],
            receiver: vec![vec![0.0], vec![0.0]],
            sender: vec![vec![1.0], vec![3.0]],
        };
        let inst = Instance::new(t(1, 4), utility, vec![], vec![]).unwrap();
        let c = concave_closure(&inst, &inst.prior, 4).unwrap();
        assert!((c.value.to_f64() - 2.5).abs() < 1e-12);
        let o = contact_set(&inst, &inst.prior, 4, 1e-9).unwrap();
        assert_eq!(o.points.len(), c.inspected);
    }

    #[test]
    fn four_experiments_implementability() {
        let inst = corpus::four_experiments();
        let o = BTreeSet::from([t(0, 1), t(1, 1)]);
        let eps: Vec<Rational> = (1..=8).map(|k| rat(1, 1 << k)).collect();
        let r = is_implementable(&inst, &o, &eps, GraphLimits::default(), 0).unwrap();
        assert!(r.implementable && !r.resolution_relative);
        for (k, w) in (1..=8).zip(&r.witnesses) {
            assert_eq!(w.steps, k);
        }
        let policy = r.policy.unwrap();
        assert_eq!(policy.rho.get(&t(1, 3)), Some(&inst.experiments[0]));
        assert_eq!(policy.rho.get(&t(2, 3)), Some(&inst.experiments[2]));
        let dec = r.decomposition.unwrap();
        assert_eq!(dec.d, BTreeSet::from([t(1, 3), t(2, 3)]));
        assert_eq!(dec.witnesses[&t(1, 3)], inst.experiments[0]);
        assert_eq!(dec.witnesses[&t(2, 3)], inst.experiments[2]);
        check_decomposition(&inst, &o, &dec).unwrap();
        let at_prior = is_implementable(&inst, &BTreeSet::from([t(1, 3)]), &eps, GraphLimits::default(), 0).unwrap();
        assert!(at_prior.implementable);
        assert!(at_prior.witnesses.iter().all(|w| w.steps == 0));
        assert_eq!(
            find_decomposition(&inst, &BTreeSet::from([t(1, 3)]), GraphLimits::default())
                .unwrap()
                .d,
            BTreeSet::new()
        );
    }

    #[test]
    fn triangle_f1_implementability() {
        let inst = corpus::triangle_f1();
        let limits = GraphLimits {
            depth_limit: 12,
            node_limit: 10_000,
        };
        let from_center = is_implementable(&inst, &vertices(), &default_eps_grid(), limits, 4).unwrap();
        assert!(!from_center.implementable);
        assert!(from_center.decomposition.is_none());
        let from_a1 = inst.with_prior(ladder_a1()).unwrap();
        let r = is_implementable(&from_a1, &vertices(), &default_eps_grid(), limits, 4).unwrap();
        assert!(r.implementable);
        let dec = r.decomposition.unwrap();
        assert_eq!(dec.d.len(), 3 * 12);
        check_decomposition(&from_a1, &vertices(), &dec).unwrap();
        for seed in 0..5 {
            assert_eq!(
                find_decomposition_shuffled(&from_a1, &vertices(), limits, seed),
                Some(dec.clone())
            );
        }
    }

    #[test]
    fn four_experiments_exact_edges_and_coincidence() {
        let inst = corpus::four_experiments();
        let g = build_graph(&inst, GraphLimits::default());
        let lim = value_limit(&g, &inst, &Tolerances::default()).unwrap();
        let exact = exact_experiments(&g, &lim, 1e-9);
        for (u, edges) in g.edges.iter().enumerate() {
            for (i, e) in edges.iter().enumerate() {
                let expect = e.experiment == inst.experiments[0] || e.experiment == inst.experiments[2];
                assert_eq!(exact[u][i], expect, "{}", e.experiment);
            }
        }
        let n = coincidence_set(&g, &inst, &lim, 1e-9).unwrap();
        let n: BTreeSet<Belief> = (0..g.len()).filter(|&u| n[u]).map(|u| g.nodes[u].clone()).collect();
        assert_eq!(n, BTreeSet::from([t(0, 1), t(1, 2), t(1, 1)]));
    }

    #[test]
    fn four_experiments_optimal_policy() {
        let inst = corpus::four_experiments();
        let r = optimal_exists(&inst, GraphLimits::default(), &Tolerances::default()).unwrap();
        assert_eq!(r.status, Existence::Exists);
        let policy = r.policy.unwrap();
        assert_eq!(policy.rho.len(), 2);
        assert_eq!(policy.z, BTreeSet::from([t(0, 1), t(1, 1)]));
        assert!(r.verdict.unwrap().passed);
        assert!(r.policy_value.unwrap().contains(&Value::Exact(rat(1, 1)), 1e-9));
        let table = absorption_witness(&policy, &[rat(1, 8)], 100).unwrap();
        assert_eq!(table[0].1, 3);
    }

    #[test]
    fn entropy_halving_has_no_optimum() {
        let inst = corpus::entropy_halving();
        let r = optimal_exists(&inst, GraphLimits::default(), &Tolerances::default()).unwrap();
        assert_eq!(r.status, Existence::DoesNotExistResolutionRelative);
        assert!(r.policy.is_none());
    }

    #[test]
    fn triangle_f2_prefix_statements() {
        for prefix in [2, 3] {
            let inst = corpus::triangle_f2_prefix(prefix);
            let r = support_equivalence_report(&inst, Some(vertices()), &AnalysisOptions::default()).unwrap();
            assert!(r.implementable, "prefix {prefix}");
            assert!(!r.attains_closure);
            assert_eq!(r.existence.status, Existence::DoesNotExistResolutionRelative);
        }
    }

    #[test]
    fn four_experiments_statements_agree() {
        let inst = corpus::four_experiments();
        let r = support_equivalence_report(&inst, None, &AnalysisOptions::default()).unwrap();
        assert!(r.implementable && r.decomposable && r.attains_closure && r.agree);
        assert!(r.stamp.is_none());
        let doc = serde_json::to_value(&r).unwrap();
        assert_eq!(
            doc["implementability"]["decomposition"]["D"].as_array().unwrap().len(),
            2
        );
    }

    #[test]
    fn triangle_f1_statements_all_fail() {
        let inst = corpus::triangle_f1();
        let r = support_equivalence_report(&inst, None, &AnalysisOptions::default()).unwrap();
        assert!(!r.implementable && !r.decomposable && !r.attains_closure && r.agree);
    }
}
