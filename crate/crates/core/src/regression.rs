//! The release regression table run by `corpus run-all`.
//!
//! Each criterion checks pinned values on the shipped corpus (or on a corpus
//! directory, so edited instances surface validation failures).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{rat, Belief, Experiment, Rational};
use crate::corpus;
use crate::engine::{
    absorption_witness, belief_distribution, evaluate_policy, history_probability, simulate, termination_probability,
    to_branching, Strategy, StrategyTree,
};
use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::graph::{build_graph, GraphLimits};
use crate::instance::Instance;
use crate::solver::{
    check_certificate, convergence_bound, value_limit, value_recursion, CertificateViolation, LimitStatus, Tolerances,
};
use crate::structure::{
    concave_closure, contact_set, default_eps_grid, find_decomposition, is_implementable, optimal_exists,
    support_equivalence_report, AnalysisOptions, Existence, DEFAULT_GRID,
};
use crate::utility::UtilitySpec;
use crate::value::Value;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub detail: String,
}

impl std::fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} criterion {}: {} ({:.3}s of {}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.budget_seconds,
            self.detail
        )
    }
}

/// Collects failed checks for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

type Body = fn(&Context, &mut Checks) -> Result<()>;

struct Context<'a> {
    dir: Option<&'a Path>,
    property_cases: usize,
}

impl Context<'_> {
    fn load(&self, name: &str) -> Result<Instance> {
        corpus::load(name, self.dir)
    }
}

const CRITERIA: [(u8, &str, f64, Body); 9] = [
    (
        1,
        "finite-horizon values of the four-experiment instance",
        1.0,
        four_experiment_values,
    ),
    (2, "optimal Markov policy pipeline", 5.0, optimal_policy_pipeline),
    (3, "entropy-halving convergence", 10.0, entropy_halving_rate),
    (4, "unreachable triangle center", 2.0, triangle_unreachable_center),
    (5, "triangle center spreads", 5.0, triangle_center_spreads),
    (6, "superharmonic certificates", 5.0, certificate_suite),
    (7, "concave closure consistency", 2.0, closure_consistency),
    (8, "engine exactness on random instances", 60.0, engine_properties),
    (9, "convergence bound from absorption witnesses", 1.0, absorption_bound),
];

/// Runs every criterion. `dir` replaces the shipped corpus files.
pub fn run_criteria(dir: Option<&Path>, property_cases: usize) -> Vec<CriterionOutcome> {
    let ctx = Context { dir, property_cases };
    CRITERIA
        .iter()
        .map(|&(id, title, budget, body)| {
            let mut checks = Checks::default();
            let start = Instant::now();
            let result = body(&ctx, &mut checks);
            let seconds = start.elapsed().as_secs_f64();
            if let Err(e) = result {
                checks.failures.push(format!("error: {e}"));
            }
            checks.check(seconds < budget, format!("took {seconds:.3}s"));
            let detail = if checks.failures.is_empty() {
                checks.notes.join("; ")
            } else {
                checks.failures.join("; ")
            };
            CriterionOutcome {
                id,
                title,
                passed: checks.failures.is_empty(),
                seconds,
                budget_seconds: budget,
                detail,
            }
        })
        .collect()
}

fn binary(n: i64, d: i64) -> Belief {
    Belief::binary(rat(n, d)).expect("valid binary belief")
}

fn exact(v: &Value, r: Rational) -> bool {
    *v == Value::Exact(r)
}

fn four_experiment_values(ctx: &Context, c: &mut Checks) -> Result<()> {
    let inst = ctx.load(corpus::FOUR_EXPERIMENTS)?;
    let graph = build_graph(&inst, GraphLimits::default());
    let table = value_recursion(&graph, &inst, 3)?;
    for (n, expect) in [(1, rat(2, 3)), (2, rat(5, 6)), (3, rat(11, 12))] {
        c.check(
            exact(table.at(n, 0), expect.clone()),
            format!("v_{n}(1/3) = {} != {expect}", table.at(n, 0)),
        );
    }
    let e = &inst.experiments;
    let chosen = |level: usize, p: &Belief| {
        graph
            .index_of(p)
            .and_then(|u| table.argmax[level][u].map(|i| graph.edges[u][i].experiment.clone()))
    };
    c.check(
        chosen(1, &binary(1, 3)).as_ref() == e.get(1),
        "last step at 1/3 is not e2",
    );
    c.check(
        chosen(1, &binary(2, 3)).as_ref() == e.get(3),
        "last step at 2/3 is not e4",
    );
    for level in 2..=3 {
        c.check(
            chosen(level, &binary(1, 3)).as_ref() == e.first(),
            format!("level {level} at 1/3 is not e1"),
        );
        c.check(
            chosen(level, &binary(2, 3)).as_ref() == e.get(2),
            format!("level {level} at 2/3 is not e3"),
        );
    }
    let limit = value_limit(&graph, &inst, &Tolerances::default())?;
    c.check(
        limit.status == LimitStatus::ExactReachability,
        "limit not solved exactly",
    );
    c.check(exact(limit.at(0), rat(1, 1)), format!("v_inf(1/3) = {}", limit.at(0)));
    c.note("v_1..v_3 = 2/3, 5/6, 11/12; v_inf = 1");
    Ok(())
}

fn optimal_policy_pipeline(ctx: &Context, c: &mut Checks) -> Result<()> {
    let inst = ctx.load(corpus::FOUR_EXPERIMENTS)?;
    let tol = Tolerances::default();
    let report = optimal_exists(&inst, GraphLimits::default(), &tol)?;
    c.check(
        report.status == Existence::Exists,
        format!("verdict {}", report.status.label()),
    );
    let Some(policy) = report.policy else {
        return Ok(());
    };
    let expect = BTreeMap::from([
        (binary(1, 3), inst.experiments[0].clone()),
        (binary(2, 3), inst.experiments[2].clone()),
    ]);
    c.check(policy.rho == expect, "policy is not {1/3 -> e1, 2/3 -> e3}");
    c.check(
        report.verdict.is_some_and(|v| v.passed),
        "policy fails the optimality conditions",
    );
    let capped = Tolerances { depth_cap: 40, ..tol };
    let value = evaluate_policy(&policy.mu, &policy, &inst, &capped)?;
    let one = Value::Exact(rat(1, 1));
    c.check(
        value.contains(&one, 0.0),
        format!("bracket [{}, {}] misses 1", value.lower, value.upper),
    );
    c.check(
        value.width() < 1e-9,
        format!("bracket width {} at depth {}", value.width(), value.depth),
    );
    let sim = simulate(Strategy::policy(&policy), &inst, 100_000, 20_240_601, tol.depth_cap)?;
    c.check(
        (sim.mean - 1.0).abs() <= 3.0 * sim.std_error,
        format!("simulated mean {} (se {})", sim.mean, sim.std_error),
    );
    c.note(format!(
        "bracket width {:.1e} at depth {}, simulated mean {}",
        value.width(),
        value.depth,
        sim.mean
    ));
    Ok(())
}

fn entropy_halving_rate(ctx: &Context, c: &mut Checks) -> Result<()> {
    let inst = ctx.load(corpus::ENTROPY_HALVING)?;
    let resolution = inst.generators.first().map_or(0, |g| g.resolution);
    c.check(resolution >= 8, format!("generator resolution {resolution} < 8"));
    let graph = build_graph(&inst, GraphLimits::default());
    let table = value_recursion(&graph, &inst, 10)?;
    let gap = |n: usize| 1.0 - table.at(n, 0).to_f64();
    let mut ratios = Vec::new();
    for n in 1..=10 {
        c.check(
            table.at(n, 0).exceeds(table.at(n - 1, 0), 0.0),
            format!("v_{n}(1/2) does not increase"),
        );
        c.check(table.at(n, 0).to_f64() < 1.0, format!("v_{n}(1/2) reaches 1"));
        if n >= 2 {
            let r = gap(n) / gap(n - 1);
            c.check((0.4..=0.6).contains(&r), format!("ratio at n = {n} is {r:.4}"));
            ratios.push(format!("{r:.4}"));
        }
    }
    let report = optimal_exists(&inst, GraphLimits::default(), &Tolerances::default())?;
    c.check(!report.status.exists(), format!("verdict {}", report.status.label()));
    c.note(format!("ratios n = 2..10: {}", ratios.join(", ")));
    Ok(())
}

fn ladder_level_beliefs(inst: &Instance) -> BTreeSet<Belief> {
    let mut out = BTreeSet::new();
    if let Some(Generator::TriangleLadder(ladder)) = inst.compiled_generator(0) {
        let mut i = 1;
        while let Some(level) = ladder.level(i) {
            out.extend(level.iter().cloned());
            i += 1;
        }
    }
    out
}

fn vertices(dim: usize) -> BTreeSet<Belief> {
    (0..dim).map(|s| Belief::point_mass(dim, s)).collect()
}

fn triangle_unreachable_center(ctx: &Context, c: &mut Checks) -> Result<()> {
    let inst = ctx.load(corpus::TRIANGLE_F1)?;
    let limits = GraphLimits {
        depth_limit: 12,
        ..GraphLimits::default()
    };
    let tol = Tolerances::default();
    let o = vertices(3);
    let g = build_graph(&inst, limits);
    let lim = value_limit(&g, &inst, &tol)?;
    c.check(exact(lim.at(0), rat(0, 1)), format!("v_inf(center) = {}", lim.at(0)));
    let a1 = Belief::from_fractions(&[(0, 1), (1, 2), (1, 2)])?;
    let from_a1 = inst.with_prior(a1.clone())?;
    let g1 = build_graph(&from_a1, limits);
    let lim1 = value_limit(&g1, &from_a1, &tol)?;
    c.check(exact(lim1.at(0), rat(1, 1)), format!("v_inf(A1) = {}", lim1.at(0)));
    let eps = default_eps_grid();
    let center = is_implementable(&inst, &o, &eps, limits, 0)?;
    c.check(!center.implementable, "vertices implementable from the center");
    let ladder = is_implementable(&from_a1, &o, &eps, limits, 0)?;
    c.check(ladder.implementable, "vertices not implementable from A1");
    match find_decomposition(&from_a1, &o, limits) {
        Some(dec) => {
            c.check(
                dec.d == ladder_level_beliefs(&from_a1),
                "decomposition is not the ladder",
            );
            c.check(dec.d.contains(&a1), "decomposition misses A1");
            c.note(format!("ladder decomposition with {} beliefs", dec.d.len()));
        }
        None => c.check(false, "no decomposition from A1"),
    }
    Ok(())
}

fn triangle_center_spreads(ctx: &Context, c: &mut Checks) -> Result<()> {
    // Only the shipped file is validated here; prefixes are rebuilt from it.
    ctx.load(corpus::TRIANGLE_F2)?;
    let tol = Tolerances::default();
    let limits = GraphLimits::default();
    let mut previous = Value::Exact(rat(0, 1));
    for prefix in 2..=4u32 {
        let inst = corpus::triangle_f2_prefix(prefix);
        let g = build_graph(&inst, limits);
        let lim = value_limit(&g, &inst, &tol)?;
        let four = rat(4, 1).pow(prefix as i32 - 1);
        let expect = &four / (rat(1, 1) + &four);
        c.check(
            exact(lim.at(0), expect.clone()),
            format!("prefix {prefix}: v_inf = {} != {expect}", lim.at(0)),
        );
        c.check(
            lim.at(0).exceeds(&previous, 0.0),
            format!("prefix {prefix}: value does not increase"),
        );
        previous = lim.at(0).clone();
    }
    let opts = AnalysisOptions::default();
    for prefix in 1..=4u32 {
        let inst = corpus::triangle_f2_prefix(prefix);
        let r = support_equivalence_report(&inst, Some(vertices(3)), &opts)?;
        c.check(r.implementable, format!("prefix {prefix}: vertices not implementable"));
        c.check(
            !r.existence.status.exists(),
            format!("prefix {prefix}: optimal policy found"),
        );
        c.check(
            r.stamp.is_some() == r.entropy_gap.delta.is_none(),
            format!("prefix {prefix}: stamp disagrees with the entropy gap"),
        );
    }
    let deep = corpus::triangle_f2_prefix(16);
    let g = build_graph(&deep, limits);
    let gap = deep.check_entropy_gap(&g.nodes, tol.delta_floor);
    let r = support_equivalence_report(&deep, Some(vertices(3)), &opts)?;
    c.check(
        gap.infimum < tol.delta_floor,
        format!("prefix 16 gap {:e} above the floor", gap.infimum),
    );
    c.check(r.stamp.is_some(), "prefix 16 not stamped");
    c.note(format!("prefix 16 entropy gap {:e}", gap.infimum));
    Ok(())
}

/// `v_inf + min_k f_k` for nonnegative linear `f_k`: concave additions keep
/// superharmonicity.
fn perturbed(values: &[Value], nodes: &[Belief], rng: &mut ChaCha8Rng) -> Vec<Value> {
    let dim = nodes[0].dim();
    let pieces: Vec<Vec<Rational>> = (0..rng.gen_range(1..=3))
        .map(|_| (0..dim).map(|_| rat(rng.gen_range(0..=16), 16)).collect())
        .collect();
    values
        .iter()
        .zip(nodes)
        .map(|(v, p)| {
            let bump = pieces
                .iter()
                .map(|c| c.iter().zip(p.coords()).fold(Rational::zero(), |a, (x, y)| a + x * y))
                .min()
                .expect("at least one piece");
            Value::weighted_sum([(&Rational::one(), v), (&bump, &Value::Exact(Rational::one()))])
        })
        .collect()
}

fn certificate_suite(ctx: &Context, c: &mut Checks) -> Result<()> {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for name in corpus::names() {
        let inst = ctx.load(name)?;
        let g = build_graph(&inst, GraphLimits::default());
        let lim = value_limit(&g, &inst, &tol)?;
        let verdict = check_certificate(&lim.values, &g, &inst, tol.value_eps)?;
        c.check(verdict.passed, format!("{name}: v_inf rejected"));
        for k in 0..100 {
            let cert = perturbed(&lim.values, &g.nodes, &mut rng);
            let ok = check_certificate(&cert, &g, &inst, tol.value_eps)?.passed;
            c.check(ok, format!("{name}: perturbed certificate {k} rejected"));
            c.check(
                !lim.at(0).exceeds(&cert[0], tol.value_eps),
                format!("{name}: certificate {k} below v_inf at the prior"),
            );
        }
    }
    let inst = ctx.load(corpus::FOUR_EXPERIMENTS)?;
    let g = build_graph(&inst, GraphLimits::default());
    let v1 = value_recursion(&g, &inst, 1)?;
    let verdict = check_certificate(v1.level(1), &g, &inst, tol.value_eps)?;
    let witness = verdict.violations.iter().any(|v| {
        matches!(v, CertificateViolation::NotSuperharmonic { node: 0, edge, .. }
            if g.edges[0][*edge].experiment == inst.experiments[0])
    });
    c.check(!verdict.passed && witness, "v_1 not rejected at e1 from 1/3");
    c.note("v_inf and 100 perturbations accepted per instance; v_1 rejected");
    Ok(())
}

fn closure_consistency(ctx: &Context, c: &mut Checks) -> Result<()> {
    let tol = Tolerances::default();
    for name in corpus::names() {
        let inst = ctx.load(name)?;
        let g = build_graph(&inst, GraphLimits::default());
        let lim = value_limit(&g, &inst, &tol)?;
        let contact = contact_set(&inst, &inst.prior, DEFAULT_GRID, tol.value_eps)?;
        let closure = &contact.closure;
        c.check(
            !lim.at(0).exceeds(&closure.value, tol.value_eps),
            format!("{name}: v_hat {} below v_inf {}", closure.value, lim.at(0)),
        );
        c.check(
            contact.hull_ok,
            format!("{name}: spread support outside the contact set"),
        );
    }
    let inst = ctx.load(corpus::TRIANGLE_F1)?;
    let closure = concave_closure(&inst, &inst.prior, DEFAULT_GRID)?;
    c.check(
        exact(&closure.value, rat(1, 1)),
        format!("triangle v_hat = {}", closure.value),
    );
    let thirds = vertices(3).iter().all(|v| closure.spread.weight_of(v) == rat(1, 3));
    c.check(
        thirds && closure.spread.len() == 3,
        format!("triangle spread {}", closure.spread),
    );
    c.note("v_hat >= v_inf on the corpus; triangle v_hat = 1 on the vertices");
    Ok(())
}

/// A random Bayes-plausible spread of `p` on beliefs with denominators up to
/// `den`, with two or three atoms.
pub fn random_spread(p: &Belief, den: i64, rng: &mut impl Rng) -> Option<Experiment> {
    let dim = p.dim();
    let random_belief = |rng: &mut dyn rand::RngCore| {
        let mut cuts: Vec<i64> = (0..dim - 1).map(|_| rng.gen_range(0..=den)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        let mut coords = Vec::with_capacity(dim);
        for c in cuts.into_iter().chain([den]) {
            coords.push(rat(c - prev, den));
            prev = c;
        }
        Belief::new(coords).expect("cuts give a belief")
    };
    for _ in 0..32 {
        let others = rng.gen_range(1..=2);
        let mut atoms: Vec<(Rational, Belief)> = Vec::new();
        let mut rest = p.coords().to_vec();
        let mut left = Rational::one();
        for _ in 0..others {
            let q = random_belief(rng);
            let w = rat(rng.gen_range(1..=3), 8);
            for (r, x) in rest.iter_mut().zip(q.coords()) {
                *r -= &w * x;
            }
            left -= &w;
            atoms.push((w, q));
        }
        if left <= Rational::zero() {
            continue;
        }
        let last: Vec<Rational> = rest.iter().map(|r| r / &left).collect();
        if last.iter().any(|x| *x < Rational::zero()) {
            continue;
        }
        let Ok(last) = Belief::new(last) else { continue };
        atoms.push((left, last));
        if let Ok(e) = Experiment::new(atoms) {
            if !e.is_trivial() && e.expectation() == *p {
                return Some(e);
            }
        }
    }
    None
}

/// A random instance with `|states| <= 3`, at most four experiments chained
/// from the prior, and a point-indicator utility on some reachable beliefs.
pub fn random_small_instance(rng: &mut impl Rng) -> Instance {
    loop {
        let dim = rng.gen_range(2..=3);
        let den = [2, 3, 4, 6][rng.gen_range(0..4)];
        let Some(prior) = random_spread(&Belief::uniform(dim), den, rng).map(|e| e.atoms()[0].belief.clone()) else {
            continue;
        };
        let mut experiments: Vec<Experiment> = Vec::new();
        let mut frontier = vec![prior.clone()];
        for _ in 0..rng.gen_range(1..=4) {
            let at = frontier[rng.gen_range(0..frontier.len())].clone();
            if let Some(e) = random_spread(&at, den, rng) {
                if experiments.contains(&e) {
                    continue;
                }
                frontier.extend(e.support().into_iter().cloned());
                experiments.push(e);
            }
        }
        let points: Vec<Belief> = frontier.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();
        if let Ok(inst) = Instance::new(prior, UtilitySpec::point_indicator(points), experiments, vec![]) {
            return inst;
        }
    }
}

/// A strategy tree choosing uniformly among feasible experiments, trivial
/// included.
pub fn random_tree(inst: &Instance, depth: usize, rng: &mut impl Rng) -> StrategyTree {
    StrategyTree::build(inst.prior.clone(), depth, |h| {
        let mut options = inst.feasible_at(h.last());
        if options.is_empty() {
            options.push(Experiment::trivial(h.last().clone()));
        }
        Ok(options.swap_remove(rng.gen_range(0..options.len())))
    })
    .expect("feasible experiments are Bayes plausible")
}

/// Exactness checks on one random instance; returns the first failure.
pub fn engine_exactness_case(inst: &Instance, depth: usize, rng: &mut impl Rng) -> Result<Option<String>> {
    let tree = random_tree(inst, depth, rng);
    let one = Rational::one();
    let mut last_term = Rational::zero();
    for n in 0..=depth {
        let dist = belief_distribution(Strategy::Tree(&tree), n)?;
        if dist.total() != one {
            return Ok(Some(format!("level {n} mass {}", dist.total())));
        }
        let term = termination_probability(Strategy::Tree(&tree), n)?;
        if term < last_term {
            return Ok(Some(format!("termination drops at {n}")));
        }
        last_term = term;
    }
    let histories = tree.histories();
    let total = histories.iter().fold(Rational::zero(), |a, (_, m)| a + m);
    if total != one {
        return Ok(Some(format!("history mass {total}")));
    }
    for (h, m) in &histories {
        if history_probability(&tree, h)? != *m {
            return Ok(Some(format!("history probability of {h}")));
        }
    }
    let graph = build_graph(inst, GraphLimits::default());
    let table = value_recursion(&graph, inst, depth)?;
    for n in 1..=depth {
        for u in 0..graph.len() {
            if table.at(n - 1, u).exceeds(table.at(n, u), 0.0) {
                return Ok(Some(format!("v_{n} decreases at {}", graph.nodes[u])));
            }
        }
    }
    for e in &inst.experiments {
        let mut follow = BTreeMap::new();
        for q in e.support() {
            let options = inst.feasible_at(q);
            follow.insert(q.clone(), options[rng.gen_range(0..options.len())].clone());
        }
        if e.merge_spread(&follow)?.expectation() != e.expectation() {
            return Ok(Some(format!("merging moves the mean of {e}")));
        }
    }
    let h = inst.check_support_bound()?.max(1);
    let branching = to_branching(&tree, h)?;
    branching.check()?;
    let level_mass = branching.levels[depth]
        .iter()
        .fold(Rational::zero(), |a, n| a + &n.mass);
    if level_mass != one {
        return Ok(Some(format!("branching leaf mass {level_mass}")));
    }
    for (hist, m) in branching.collapse() {
        if history_probability(&tree, &hist)? != m {
            return Ok(Some(format!("branching history {hist}")));
        }
    }
    Ok(None)
}

fn engine_properties(ctx: &Context, c: &mut Checks) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..ctx.property_cases {
        let inst = random_small_instance(&mut rng);
        let depth = rng.gen_range(1..=4);
        if let Some(failure) = engine_exactness_case(&inst, depth, &mut rng)? {
            c.check(false, format!("case {case}: {failure}"));
            break;
        }
    }
    c.note(format!("{} random instances", ctx.property_cases));
    Ok(())
}

fn absorption_bound(ctx: &Context, c: &mut Checks) -> Result<()> {
    let inst = ctx.load(corpus::FOUR_EXPERIMENTS)?;
    let tol = Tolerances::default();
    let report = optimal_exists(&inst, GraphLimits::default(), &tol)?;
    let policy = report
        .policy
        .ok_or_else(|| Error::Precondition("no optimal policy for the witness table".into()))?;
    let eps: Vec<Rational> = (1..=20).map(|k| rat(1, 1 << k)).collect();
    let table = absorption_witness(&policy, &eps, tol.depth_cap)
        .ok_or_else(|| Error::Precondition("policy does not absorb".into()))?;
    let g = build_graph(&inst, GraphLimits::default());
    let values = value_recursion(&g, &inst, 20)?;
    let lim = value_limit(&g, &inst, &tol)?;
    for (k, (e, n)) in (1..=20).zip(&table) {
        c.check(*n == k, format!("n_eps for 2^-{k} is {n}"));
        let check = convergence_bound(e, *n, &values, &lim, &inst, tol.value_eps)?;
        c.check(
            check.holds && check.slack.is_exact(),
            format!("bound fails at k = {k}: slack {}", check.slack),
        );
    }
    c.note("n_eps = k and the bound holds exactly for k <= 20");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_valid_and_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let inst = random_small_instance(&mut rng);
            assert!(inst.dim() <= 3);
            assert!(inst.experiments.len() <= 4);
            assert!(engine_exactness_case(&inst, 3, &mut rng).unwrap().is_none());
        }
    }

    #[test]
    fn broken_corpus_file_fails_loudly() {
        let dir = std::env::temp_dir().join(format!("regression-broken-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let text = corpus::source(corpus::FOUR_EXPERIMENTS)
            .unwrap()
            .replace("\"1/2\"", "\"1/5\"");
        std::fs::write(dir.join("four_experiments.json"), text).unwrap();
        let ctx = Context {
            dir: Some(&dir),
            property_cases: 0,
        };
        let mut c = Checks::default();
        assert!(four_experiment_values(&ctx, &mut c).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
