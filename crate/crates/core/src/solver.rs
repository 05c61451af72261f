//! Finite-horizon values `v_n`, their limit `v_inf`, and certificate checks.

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{rational_to_f64, Belief, Rational};
use crate::error::{Error, Result};
use crate::graph::{BeliefGraph, Edge};
use crate::instance::{Instance, DEFAULT_DELTA_FLOOR};
use crate::linalg;
use crate::utility::UtilitySpec;
use crate::value::Value;

/// Numerical tolerances shared by the solver, the engine and the analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub value_eps: f64,
    pub fix_eps: f64,
    pub term_eps: f64,
    pub delta_floor: f64,
    /// Consecutive rounds with increment below `fix_eps` before stopping.
    pub window: usize,
    pub max_rounds: usize,
    pub depth_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            value_eps: 1e-9,
            fix_eps: 1e-12,
            term_eps: 1e-9,
            delta_floor: DEFAULT_DELTA_FLOOR,
            window: 20,
            max_rounds: 200_000,
            depth_cap: 10_000,
        }
    }
}

/// `v_0, ..., v_n` on every graph node.
#[derive(Clone, Debug, Serialize)]
pub struct ValueTable {
    /// `levels[k][node] = v_k(node)`.
    pub levels: Vec<Vec<Value>>,
    /// `argmax[k][node]` is the edge achieving `v_k`, `None` for the trivial
    /// experiment. `argmax[0]` is all `None`.
    pub argmax: Vec<Vec<Option<usize>>>,
    /// The graph was truncated: values are lower bounds only.
    pub lower_bound_only: bool,
    pub resolution_relative: bool,
}

impl ValueTable {
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[Value] {
        &self.levels[k]
    }

    pub fn at(&self, k: usize, node: usize) -> &Value {
        &self.levels[k][node]
    }
}

/// `v` at every node.
pub fn utility_values(graph: &BeliefGraph, inst: &Instance) -> Result<Vec<Value>> {
    graph.nodes.iter().map(|p| inst.eval_v(p)).collect()
}

pub(crate) fn edge_value(edge: &Edge, values: &[Value]) -> Value {
    Value::weighted_sum(edge.branches().map(|(w, t)| (w, &values[t])))
}

/// One application of the recursion: best of staying and every edge; the
/// first edge wins ties, staying only wins strictly.
fn bellman(graph: &BeliefGraph, prev: &[Value]) -> (Vec<Value>, Vec<Option<usize>>) {
    (0..graph.len())
        .into_par_iter()
        .map(|u| {
            let mut best: Option<(Value, usize)> = None;
            for (i, e) in graph.edges[u].iter().enumerate() {
                let q = edge_value(e, prev);
                match &best {
                    Some((b, _)) if q.compare(b) != std::cmp::Ordering::Greater => {}
                    _ => best = Some((q, i)),
                }
            }
            match best {
                Some((q, i)) if q.compare(&prev[u]) != std::cmp::Ordering::Less => (q, Some(i)),
                _ => (prev[u].clone(), None),
            }
        })
        .unzip()
}

/// `v_k(p) = max(v_{k-1}(p), max_e sum_j w_j v_{k-1}(p_j))` for `k = 1..=n`.
pub fn value_recursion(graph: &BeliefGraph, inst: &Instance, n: usize) -> Result<ValueTable> {
    let v0 = utility_values(graph, inst)?;
    let mut levels = vec![v0];
    let mut argmax = vec![vec![None; graph.len()]];
    for _ in 0..n {
        let (next, choice) = bellman(graph, levels.last().expect("nonempty"));
        levels.push(next);
        argmax.push(choice);
    }
    Ok(ValueTable {
        levels,
        argmax,
        lower_bound_only: graph.truncated,
        resolution_relative: graph.resolution_relative,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitStatus {
    /// Exact optimal reachability value of the utility's high set.
    ExactReachability,
    /// Every play stops within the graph's depth, so the recursion stabilizes.
    AcyclicExact,
    /// `|v_n - v_inf| <= eps` from the entropy-gap rate with gap `delta`.
    Certified { eps: f64, delta: f64, rounds: usize },
    /// Increment stayed below `fix_eps` for the stabilization window; no rate
    /// is known, so the value may still be below the limit.
    HeuristicFixedPoint,
    /// Round cap hit before stabilization.
    NotConverged,
}

impl LimitStatus {
    pub fn label(&self) -> String {
        match self {
            LimitStatus::ExactReachability => "exact (reachability solve)".into(),
            LimitStatus::AcyclicExact => "exact (acyclic graph)".into(),
            LimitStatus::Certified { eps, delta, rounds } => {
                format!("certified within {eps:e} after {rounds} rounds (entropy gap {delta:e})")
            }
            LimitStatus::HeuristicFixedPoint => "heuristic fixed point".into(),
            LimitStatus::NotConverged => "not converged".into(),
        }
    }
}

/// `v_inf` on every node.
#[derive(Clone, Debug, Serialize)]
pub struct LimitValues {
    pub values: Vec<Value>,
    pub status: LimitStatus,
    /// Value-iteration rounds run (0 when solved directly).
    pub rounds: usize,
    /// Largest gap between value iteration and the exact solve, if both ran.
    pub cross_check: Option<f64>,
    /// A maximizing edge per node, `None` to stop.
    pub choice: Vec<Option<usize>>,
    pub lower_bound_only: bool,
    pub resolution_relative: bool,
}

impl LimitValues {
    pub fn at(&self, node: usize) -> &Value {
        &self.values[node]
    }

    /// `v_inf(p)` for a graph belief.
    pub fn of(&self, graph: &BeliefGraph, p: &Belief) -> Option<&Value> {
        graph.index_of(p).map(|i| &self.values[i])
    }
}

/// Computes `v_inf`. Point-indicator utilities are solved exactly as a
/// maximal reachability problem; acyclic graphs by backward induction; other
/// graphs by value iteration with the stopping rule described on
/// [`LimitStatus`].
pub fn value_limit(graph: &BeliefGraph, inst: &Instance, tol: &Tolerances) -> Result<LimitValues> {
    let v0 = utility_values(graph, inst)?;
    let flags = |values, status, rounds, cross_check, choice| LimitValues {
        values,
        status,
        rounds,
        cross_check,
        choice,
        lower_bound_only: graph.truncated,
        resolution_relative: graph.resolution_relative,
    };
    if let UtilitySpec::PointIndicator { hi, lo, .. } = &inst.utility {
        let high = if hi > lo { hi } else { lo };
        let target: Vec<bool> = v0.iter().map(|v| v.as_exact() == Some(high)).collect();
        let (reach, choice) = max_reach_exact(graph, &target)?;
        let low = if hi > lo { lo } else { hi };
        let span = high - low;
        let values: Vec<Value> = reach.iter().map(|r| Value::Exact(low + &span * r)).collect();
        let (iterated, rounds, _) = iterate_floats(graph, &v0, tol);
        let cross = values
            .iter()
            .zip(&iterated)
            .map(|(a, b)| (a.to_f64() - b).abs())
            .fold(0.0, f64::max);
        return Ok(flags(
            values,
            LimitStatus::ExactReachability,
            rounds,
            Some(cross),
            choice,
        ));
    }
    if let Some(order) = graph.topological_order() {
        let mut values = v0.clone();
        let mut choice = vec![None; graph.len()];
        for &u in order.iter().rev() {
            for (i, e) in graph.edges[u].iter().enumerate() {
                let q = edge_value(e, &values);
                if q.compare(&values[u]) == std::cmp::Ordering::Greater {
                    values[u] = q;
                    choice[u] = Some(i);
                }
            }
        }
        return Ok(flags(values, LimitStatus::AcyclicExact, 0, None, choice));
    }
    let (iterated, mut rounds, stabilized) = iterate_floats(graph, &v0, tol);
    let mut values: Vec<Value> = iterated.into_iter().map(Value::Approx).collect();
    let mut status = if stabilized {
        LimitStatus::HeuristicFixedPoint
    } else {
        LimitStatus::NotConverged
    };
    if let Some(delta) = graph_entropy_gap(graph, inst, tol.delta_floor) {
        let (lo, hi) = inst.bounds();
        let scale = hi - lo.min(0.0);
        let needed = ((inst.dim() as f64).ln() * scale / (tol.value_eps * delta)).ceil() as usize;
        if needed <= tol.max_rounds {
            if needed > rounds {
                let mut table = values.iter().map(Value::to_f64).collect::<Vec<_>>();
                for _ in rounds..needed {
                    table = float_round(graph, &table);
                }
                values = table.into_iter().map(Value::Approx).collect();
                rounds = needed;
            }
            status = LimitStatus::Certified {
                eps: tol.value_eps,
                delta,
                rounds: needed,
            };
        }
    }
    let (_, choice) = bellman(graph, &values);
    Ok(flags(values, status, rounds, None, choice))
}

/// Entropy gap of the graph's experiments, if it clears the floor.
fn graph_entropy_gap(graph: &BeliefGraph, inst: &Instance, floor: f64) -> Option<f64> {
    if let Some(d) = inst.delta {
        return Some(d);
    }
    let gap = graph
        .edges
        .iter()
        .flatten()
        .map(|e| e.experiment.entropy_gap())
        .fold(f64::INFINITY, f64::min);
    (gap.is_finite() && gap > floor).then_some(gap)
}

fn float_round(graph: &BeliefGraph, prev: &[f64]) -> Vec<f64> {
    (0..graph.len())
        .into_par_iter()
        .map(|u| {
            let mut best = prev[u];
            for e in &graph.edges[u] {
                let mut q = 0.0;
                for (w, t) in e.branches() {
                    q += rational_to_f64(w) * prev[t];
                }
                if q > best {
                    best = q;
                }
            }
            best
        })
        .collect()
}

/// Float value iteration until the increment stays below `fix_eps` for
/// `window` rounds. Returns the values, rounds run and whether it stabilized.
fn iterate_floats(graph: &BeliefGraph, v0: &[Value], tol: &Tolerances) -> (Vec<f64>, usize, bool) {
    let mut cur: Vec<f64> = v0.iter().map(Value::to_f64).collect();
    let mut calm = 0;
    for round in 1..=tol.max_rounds {
        let next = float_round(graph, &cur);
        let inc = next.iter().zip(&cur).map(|(a, b)| a - b).fold(0.0, f64::max);
        cur = next;
        calm = if inc < tol.fix_eps { calm + 1 } else { 0 };
        if calm >= tol.window {
            return (cur, round, true);
        }
    }
    (cur, tol.max_rounds, false)
}

/// Exact maximal probability of eventually reaching `target` (and stopping
/// there), with a maximizing memoryless choice per node.
///
/// Float value iteration proposes near-optimal edges, a distance layering
/// picks among them a choice that keeps moving toward the target, the induced
/// chain is solved exactly, and the result is accepted once no edge improves
/// on it; otherwise the exact values seed another round.
pub fn max_reach_exact(graph: &BeliefGraph, target: &[bool]) -> Result<(Vec<Rational>, Vec<Option<usize>>)> {
    let n = graph.len();
    let reach = graph.can_reach(target);
    let unknown: Vec<bool> = (0..n).map(|u| reach[u] && !target[u]).collect();
    let init: Vec<Value> = target
        .iter()
        .map(|&t| Value::Approx(if t { 1.0 } else { 0.0 }))
        .collect();
    let quick = Tolerances {
        fix_eps: 1e-14,
        window: 5,
        max_rounds: 20_000,
        ..Tolerances::default()
    };
    let (approx, _, _) = iterate_floats_with_targets(graph, &init, target, &quick);
    let mut estimate: Vec<Value> = approx.into_iter().map(Value::Approx).collect();
    for _ in 0..64 {
        let choice = layered_choice(graph, target, &unknown, &estimate);
        let exact = solve_chain(graph, target, &unknown, &choice)?;
        let exact_values: Vec<Value> = exact.iter().cloned().map(Value::Exact).collect();
        let improvable = (0..n).any(|u| {
            unknown[u]
                && graph.edges[u]
                    .iter()
                    .any(|e| edge_value(e, &exact_values).compare(&exact_values[u]) == std::cmp::Ordering::Greater)
        });
        if !improvable {
            let choice = (0..n).map(|u| if unknown[u] { choice[u] } else { None }).collect();
            return Ok((exact, choice));
        }
        estimate = exact_values;
    }
    Err(Error::Lp("reachability policy iteration did not converge".into()))
}

fn iterate_floats_with_targets(
    graph: &BeliefGraph,
    v0: &[Value],
    target: &[bool],
    tol: &Tolerances,
) -> (Vec<f64>, usize, bool) {
    let mut cur: Vec<f64> = v0.iter().map(Value::to_f64).collect();
    let mut calm = 0;
    for round in 1..=tol.max_rounds {
        let mut next = float_round(graph, &cur);
        for (u, &t) in target.iter().enumerate() {
            if t {
                next[u] = 1.0;
            }
        }
        let inc = next.iter().zip(&cur).map(|(a, b)| a - b).fold(0.0, f64::max);
        cur = next;
        calm = if inc < tol.fix_eps { calm + 1 } else { 0 };
        if calm >= tol.window {
            return (cur, round, true);
        }
    }
    (cur, tol.max_rounds, false)
}

/// Among the edges within tolerance of the best (exact ties when `estimate`
/// is exact), picks per node the first one with a successor closer to the
/// target; nodes left over fall back to any edge making progress.
fn layered_choice(graph: &BeliefGraph, target: &[bool], unknown: &[bool], estimate: &[Value]) -> Vec<Option<usize>> {
    let n = graph.len();
    let near_optimal: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            if !unknown[u] {
                return Vec::new();
            }
            let q: Vec<Value> = graph.edges[u].iter().map(|e| edge_value(e, estimate)).collect();
            let Some(best) = q.iter().cloned().reduce(Value::max) else {
                return Vec::new();
            };
            (0..q.len()).filter(|&i| best.approx_eq(&q[i], 1e-9)).collect()
        })
        .collect();
    let mut settled: Vec<bool> = (0..n).map(|u| !unknown[u]).collect();
    let mut choice = vec![None; n];
    for allowed in [true, false] {
        loop {
            let mut newly = Vec::new();
            for u in 0..n {
                if settled[u] {
                    continue;
                }
                let candidates: Box<dyn Iterator<Item = usize>> = if allowed {
                    Box::new(near_optimal[u].iter().copied())
                } else {
                    Box::new(0..graph.edges[u].len())
                };
                for i in candidates {
                    let e = &graph.edges[u][i];
                    let progresses = e.targets.iter().any(|&t| settled[t] && (target[t] || unknown[t]));
                    if progresses {
                        newly.push((u, i));
                        break;
                    }
                }
            }
            if newly.is_empty() {
                break;
            }
            for (u, i) in newly {
                settled[u] = true;
                choice[u] = Some(i);
            }
        }
    }
    choice
}

/// Reach probabilities of the chain induced by `choice`, solved exactly one
/// strongly connected component at a time.
fn solve_chain(
    graph: &BeliefGraph,
    target: &[bool],
    unknown: &[bool],
    choice: &[Option<usize>],
) -> Result<Vec<Rational>> {
    let n = graph.len();
    let mut x: Vec<Rational> = (0..n)
        .map(|u| if target[u] { Rational::one() } else { Rational::zero() })
        .collect();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|u| match (unknown[u], choice[u]) {
            (true, Some(i)) => graph.edges[u][i]
                .targets
                .iter()
                .copied()
                .filter(|&t| unknown[t])
                .collect(),
            _ => Vec::new(),
        })
        .collect();
    for comp in linalg::tarjan_scc(&succ) {
        let comp: Vec<usize> = comp.into_iter().filter(|&u| unknown[u]).collect();
        if comp.is_empty() {
            continue;
        }
        let pos = |u: usize| comp.iter().position(|&c| c == u);
        let m = comp.len();
        let mut a = vec![vec![Rational::zero(); m]; m];
        let mut b = vec![Rational::zero(); m];
        for (r, &u) in comp.iter().enumerate() {
            a[r][r] = Rational::one();
            let Some(i) = choice[u] else {
                return Err(Error::Lp(format!("node {u} has no progressing choice")));
            };
            for (w, t) in graph.edges[u][i].branches() {
                match pos(t) {
                    Some(c) => a[r][c] -= w,
                    None => b[r] += w * &x[t],
                }
            }
        }
        let sol = linalg::solve(a, b).ok_or_else(|| Error::Lp("singular reachability system".into()))?;
        for (r, &u) in comp.iter().enumerate() {
            x[u] = sol[r].clone();
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateViolation {
    BelowUtility {
        node: usize,
        belief: Belief,
        g: Value,
        v: Value,
    },
    NotSuperharmonic {
        node: usize,
        belief: Belief,
        edge: usize,
        g: Value,
        spread: Value,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateVerdict {
    pub passed: bool,
    pub violations: Vec<CertificateViolation>,
}

/// Checks `g >= v` and `g(p) >= sum_j w_j g(p_j)` on every edge. Exact when
/// `g` and `v` are exact, within `value_eps` otherwise. A passing `g` bounds
/// `v_inf` from above on the graph.
pub fn check_certificate(
    g: &[Value],
    graph: &BeliefGraph,
    inst: &Instance,
    value_eps: f64,
) -> Result<CertificateVerdict> {
    if g.len() < graph.len() {
        return Err(Error::MissingValue(g.len()));
    }
    let mut violations = Vec::new();
    for u in 0..graph.len() {
        let v = inst.eval_v(&graph.nodes[u])?;
        if v.exceeds(&g[u], value_eps) {
            violations.push(CertificateViolation::BelowUtility {
                node: u,
                belief: graph.nodes[u].clone(),
                g: g[u].clone(),
                v,
            });
        }
        for (i, e) in graph.edges[u].iter().enumerate() {
            let spread = edge_value(e, g);
            if spread.exceeds(&g[u], value_eps) {
                violations.push(CertificateViolation::NotSuperharmonic {
                    node: u,
                    belief: graph.nodes[u].clone(),
                    edge: i,
                    g: g[u].clone(),
                    spread,
                });
            }
        }
    }
    Ok(CertificateVerdict {
        passed: violations.is_empty(),
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteSufficiency {
    pub steps: usize,
    pub sufficient: bool,
    pub v_n: Value,
    pub v_inf: Value,
    /// `g = v_inf` when sufficient: it dominates `v`, is superharmonic and
    /// equals `v_n` at the prior.
    pub certificate: Option<Vec<Value>>,
}

/// Whether `n` steps already achieve `v_inf` at the prior.
pub fn finite_steps_sufficient(
    table: &ValueTable,
    limit: &LimitValues,
    n: usize,
    value_eps: f64,
) -> Result<FiniteSufficiency> {
    if n > table.steps() {
        return Err(Error::Precondition(format!(
            "v_{n} not computed (table has {} steps)",
            table.steps()
        )));
    }
    let v_n = table.at(n, 0).clone();
    let v_inf = limit.at(0).clone();
    let sufficient = v_n.approx_eq(&v_inf, value_eps);
    Ok(FiniteSufficiency {
        steps: n,
        sufficient,
        certificate: sufficient.then(|| limit.values.clone()),
        v_n,
        v_inf,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceCheck {
    pub steps: usize,
    pub v_n: Value,
    pub lower_bound: Value,
    pub slack: Value,
    pub holds: bool,
}

/// Checks `v_n(mu) >= v_inf(mu) - eps (V_hi - V_lo)` for a witness pair
/// `(eps, n)`; exact when every input is.
pub fn convergence_bound(
    eps: &Rational,
    n: usize,
    table: &ValueTable,
    limit: &LimitValues,
    inst: &Instance,
    value_eps: f64,
) -> Result<ConvergenceCheck> {
    if n > table.steps() {
        return Err(Error::Precondition(format!(
            "v_{n} not computed (table has {} steps)",
            table.steps()
        )));
    }
    let (lo, hi) = inst.bounds();
    let span =
        Rational::from_float(hi - lo).ok_or_else(|| Error::Precondition("utility bounds are not finite".into()))?;
    let v_n = table.at(n, 0).clone();
    let lower_bound = limit.at(0).sub(&Value::Exact(eps * span));
    let slack = v_n.sub(&lower_bound);
    let holds = match &slack {
        Value::Exact(s) => !s.is_negative_rational(),
        Value::Approx(s) => *s >= -value_eps,
    };
    Ok(ConvergenceCheck {
        steps: n,
        v_n,
        lower_bound,
        slack,
        holds,
    })
}

trait SignExt {
    fn is_negative_rational(&self) -> bool;
}

impl SignExt for Rational {
    fn is_negative_rational(&self) -> bool {
        self < &Rational::zero()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BilinearCertificate {
    /// `g(x, y) = c1 x y + c2 x + c3 y + c4` in the two marginals.
    pub coefficients: [f64; 4],
    /// `g(mu)`: an upper bound on `v_inf(mu)` relative to the grid.
    pub bound: f64,
    pub grid_points: usize,
}

/// Marginals `(P(theta0 = 1), P(theta1 = 1))` of a belief on the states
/// ordered 00, 01, 10, 11.
pub fn product_marginals(p: &Belief) -> (Rational, Rational) {
    let c = p.coords();
    (&c[2] + &c[3], &c[1] + &c[3])
}

/// The product belief with the given marginals.
pub fn product_belief(x: &Rational, y: &Rational) -> Belief {
    let one = Rational::one();
    Belief::new(vec![(&one - x) * (&one - y), (&one - x) * y, x * (&one - y), x * y])
        .expect("marginals in [0, 1] give a belief")
}

/// Smallest bilinear form in the marginals dominating `v` on a product grid
/// of resolution `grid` and on the graph nodes. Bilinear forms are
/// superharmonic for spreads that move one marginal, so dominance is the only
/// constraint; the optimum bounds `v_inf(mu)` from above.
pub fn bilinear_certificate(inst: &Instance, graph: &BeliefGraph, grid: usize) -> Result<BilinearCertificate> {
    if !inst.product_pair {
        return Err(Error::Precondition(
            "instance does not declare the two-bit product structure".into(),
        ));
    }
    for (u, edges) in graph.edges.iter().enumerate() {
        for e in edges {
            let (mx, my) = product_marginals(&graph.nodes[u]);
            let moves: Vec<(Rational, Rational)> = e.experiment.support().into_iter().map(product_marginals).collect();
            let horizontal = moves.iter().all(|(_, y)| *y == my);
            let vertical = moves.iter().all(|(x, _)| *x == mx);
            if !horizontal && !vertical {
                return Err(Error::AssumptionViolated(format!(
                    "experiment {} at {} moves both marginals",
                    e.experiment, graph.nodes[u]
                )));
            }
        }
    }
    let grid = grid.max(1);
    let mut points: Vec<Belief> = Vec::new();
    for i in 0..=grid {
        for j in 0..=grid {
            let x = Rational::new((i as i64).into(), (grid as i64).into());
            let y = Rational::new((j as i64).into(), (grid as i64).into());
            points.push(product_belief(&x, &y));
        }
    }
    for p in &graph.nodes {
        if !points.contains(p) {
            points.push(p.clone());
        }
    }
    let (mx, my) = product_marginals(&inst.prior);
    let (mx, my) = (rational_to_f64(&mx), rational_to_f64(&my));
    let mut problem = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
    let vars = [
        problem.add_var(mx * my, (f64::NEG_INFINITY, f64::INFINITY)),
        problem.add_var(mx, (f64::NEG_INFINITY, f64::INFINITY)),
        problem.add_var(my, (f64::NEG_INFINITY, f64::INFINITY)),
        problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY)),
    ];
    for p in &points {
        let (x, y) = product_marginals(p);
        let (x, y) = (rational_to_f64(&x), rational_to_f64(&y));
        let v = inst.eval_v(p)?.to_f64();
        problem.add_constraint(
            [(vars[0], x * y), (vars[1], x), (vars[2], y), (vars[3], 1.0)],
            minilp::ComparisonOp::Ge,
            v,
        );
    }
    let sol = problem.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(BilinearCertificate {
        coefficients: [sol[vars[0]], sol[vars[1]], sol[vars[2]], sol[vars[3]]],
        bound: sol.objective(),
        grid_points: points.len(),
    })
}
