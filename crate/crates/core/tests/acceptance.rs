//! Release acceptance table. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; any failure makes the target exit nonzero.
//!
//! Library calls are timed against each criterion's budget. Oracle work
//! (tree enumeration, closed forms, vertex enumeration) is not.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use persuasion_core::belief::{dyadic_from_f64, rational_to_f64};
use persuasion_core::engine::{
    absorption_witness, belief_distribution, evaluate_policy, history_probability, simulate, termination_probability,
    to_branching, Strategy,
};
use persuasion_core::generators::Generator;
use persuasion_core::graph::build_graph;
use persuasion_core::regression::{random_small_instance, random_tree};
use persuasion_core::solver::{
    check_certificate, value_limit, value_recursion, CertificateViolation, LimitStatus, Tolerances,
};
use persuasion_core::structure::{
    concave_closure, contact_set, default_eps_grid, find_decomposition, is_implementable, optimal_exists,
    support_equivalence_report, AnalysisOptions, ENTROPY_GAP_STAMP,
};
use persuasion_core::{corpus, rat, Belief, Experiment, GraphLimits, Instance, Rational, Result, Value};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pinned tolerances.
const VALUE_EPS: f64 = 1e-9;
const CLOSURE_EPS: f64 = 1e-9;
const BRACKET_WIDTH: f64 = 1e-9;
const BRACKET_DEPTH: usize = 40;
const SIM_RUNS: u64 = 100_000;
const SIM_SIGMAS: f64 = 3.0;
const RATIO_RANGE: (f64, f64) = (0.4, 0.6);
const PROPERTY_CASES: u32 = 1000;

#[derive(Default)]
struct Criterion {
    failures: Vec<String>,
    notes: Vec<String>,
    timed: Duration,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn timed<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timed += start.elapsed();
        out
    }
}

fn exact(v: &Value) -> Option<&Rational> {
    v.as_exact()
}

fn binary(n: i64, d: i64) -> Belief {
    Belief::binary(rat(n, d)).unwrap()
}

fn vertices(dim: usize) -> BTreeSet<Belief> {
    (0..dim).map(|s| Belief::point_mass(dim, s)).collect()
}

fn main() {
    type Body = fn(&mut Criterion) -> Result<()>;
    let table: [(u8, &str, f64, Body); 9] = [
        (1, "four-experiment finite-horizon values", 1.0, criterion_1),
        (2, "optimal Markov policy pipeline", 5.0, criterion_2),
        (3, "entropy-halving convergence rate", 10.0, criterion_3),
        (4, "triangle with an unreachable center", 2.0, criterion_4),
        (5, "triangle center-spread prefixes", 5.0, criterion_5),
        (6, "superharmonic certificate suite", 5.0, criterion_6),
        (7, "concave closure consistency", 2.0, criterion_7),
        (8, "engine exactness properties", 60.0, criterion_8),
        (9, "convergence bound from the witness table", 1.0, criterion_9),
    ];
    let mut failed = 0;
    for (id, title, budget, body) in table {
        let mut c = Criterion::default();
        if let Err(e) = body(&mut c) {
            c.failures.push(format!("error: {e}"));
        }
        let secs = c.timed.as_secs_f64();
        c.check(secs < budget, format!("library time {secs:.3}s exceeds {budget}s"));
        let pass = c.failures.is_empty();
        let detail = if pass {
            c.notes.join("; ")
        } else {
            c.failures.join("; ")
        };
        println!(
            "{} criterion {id}: {title} [{secs:.3}s / {budget}s] {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!pass);
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// `1 - (1/3) 2^-(n-1)` for `n >= 1`.
fn four_experiment_closed_form(n: usize) -> Rational {
    Rational::one() - rat(1, 3) / rat(1 << (n - 1), 1)
}

fn criterion_1(c: &mut Criterion) -> Result<()> {
    let inst = corpus::four_experiments();
    let oracle: Vec<Rational> = (0..=3)
        .map(|n| common::brute_force_value(&inst, &inst.prior, n))
        .collect();
    let (graph, table, limit) = c.timed(|| -> Result<_> {
        let graph = build_graph(&inst, GraphLimits::default());
        let table = value_recursion(&graph, &inst, 3)?;
        let limit = value_limit(&graph, &inst, &Tolerances::default())?;
        Ok((graph, table, limit))
    })?;
    let mu = graph.index_of(&binary(1, 3)).expect("prior is a node");
    for (n, pinned) in [(1, rat(2, 3)), (2, rat(5, 6)), (3, rat(11, 12))] {
        let got = exact(table.at(n, mu));
        c.check(
            got == Some(&pinned),
            format!("v_{n}(1/3) = {} != {pinned}", table.at(n, mu)),
        );
        c.check(
            oracle[n] == pinned,
            format!("tree enumeration gives v_{n} = {}", oracle[n]),
        );
        c.check(
            four_experiment_closed_form(n) == pinned,
            format!("closed form disagrees at n = {n}"),
        );
    }
    let e = &inst.experiments;
    let chosen = |level: usize, p: &Belief| {
        let u = graph.index_of(p)?;
        table.argmax[level][u].map(|i| graph.edges[u][i].experiment.clone())
    };
    c.check(
        chosen(1, &binary(1, 3)).as_ref() == Some(&e[1]),
        "with one step left 1/3 does not take e2",
    );
    c.check(
        chosen(1, &binary(2, 3)).as_ref() == Some(&e[3]),
        "with one step left 2/3 does not take e4",
    );
    for level in 2..=3 {
        c.check(
            chosen(level, &binary(1, 3)).as_ref() == Some(&e[0]),
            format!("{level} steps left: 1/3 does not take e1"),
        );
        c.check(
            chosen(level, &binary(2, 3)).as_ref() == Some(&e[2]),
            format!("{level} steps left: 2/3 does not take e3"),
        );
    }
    c.check(
        limit.status == LimitStatus::ExactReachability,
        format!("limit status {}", limit.status.label()),
    );
    c.check(
        exact(limit.at(mu)) == Some(&Rational::one()),
        format!("v_inf(1/3) = {}", limit.at(mu)),
    );
    c.notes
        .push("v_1..3 = 2/3, 5/6, 11/12 match tree enumeration; v_inf = 1 exact".into());
    Ok(())
}

fn criterion_2(c: &mut Criterion) -> Result<()> {
    let inst = corpus::four_experiments();
    let tol = Tolerances::default();
    let report = c.timed(|| optimal_exists(&inst, GraphLimits::default(), &tol))?;
    let Some(policy) = report.policy.clone() else {
        c.check(false, format!("no policy: {}", report.status.label()));
        return Ok(());
    };
    let expect = BTreeMap::from([
        (binary(1, 3), inst.experiments[0].clone()),
        (binary(2, 3), inst.experiments[2].clone()),
    ]);
    c.check(policy.rho == expect, "policy is not {1/3 -> e1, 2/3 -> e3}");
    match &report.verdict {
        Some(v) => c.check(
            v.passed && v.stops_where_value_is_realized && v.experiments_exact && v.absorbs,
            "optimality conditions fail",
        ),
        None => c.check(false, "no optimality verdict"),
    }
    let capped = Tolerances {
        depth_cap: BRACKET_DEPTH,
        ..tol
    };
    let value = c.timed(|| evaluate_policy(&policy.mu, &policy, &inst, &capped))?;
    let one = Value::Exact(Rational::one());
    c.check(
        value.contains(&one, 0.0),
        format!("bracket [{}, {}] misses 1", value.lower, value.upper),
    );
    c.check(
        value.width() < BRACKET_WIDTH,
        format!("bracket width {:e}", value.width()),
    );
    c.check(
        value.depth <= BRACKET_DEPTH,
        format!("bracket needed depth {}", value.depth),
    );
    // Oracle: the policy stops only on {0, 1}, where v = 1, so the stopped
    // mass after n steps is a lower bound on its value.
    let stopped = common::policy_stopped_mass(&policy, BRACKET_DEPTH);
    let z_ok = policy.z.iter().all(|p| common::exact_v(&inst, p) == Rational::one());
    c.check(z_ok, "policy stops where v < 1");
    c.check(
        rational_to_f64(&stopped[BRACKET_DEPTH]) > 1.0 - BRACKET_WIDTH,
        format!("oracle stopped mass {} at depth 40", stopped[BRACKET_DEPTH]),
    );
    let sim = c.timed(|| simulate(Strategy::policy(&policy), &inst, SIM_RUNS, 20_240_601, tol.depth_cap))?;
    c.check(
        (sim.mean - 1.0).abs() <= SIM_SIGMAS * sim.std_error,
        format!("simulated mean {} with se {}", sim.mean, sim.std_error),
    );
    c.notes.push(format!(
        "bracket width {:.1e} by depth {}; {} runs, mean {}",
        value.width(),
        value.depth,
        sim.runs,
        sim.mean
    ));
    Ok(())
}

fn criterion_3(c: &mut Criterion) -> Result<()> {
    let inst = corpus::entropy_halving();
    let resolution = inst.generators.first().map_or(0, |g| g.resolution) as usize;
    c.check(resolution >= 8, format!("generator resolution {resolution}"));
    let (table, report) = c.timed(|| -> Result<_> {
        let graph = build_graph(&inst, GraphLimits::default());
        let table = value_recursion(&graph, &inst, 10)?;
        let report = optimal_exists(&inst, GraphLimits::default(), &Tolerances::default())?;
        Ok((table, report))
    })?;
    let v: Vec<f64> = (0..=10).map(|n| table.at(n, 0).to_f64()).collect();
    // Closed form: n halvings of ln 2 spread 1/2 to {u_n, 1 - u_n}.
    for (n, &vn) in v.iter().enumerate().skip(1).take(resolution) {
        let oracle = 1.0 - 2.0 * common::inverse_binary_entropy(std::f64::consts::LN_2 / f64::from(1u32 << n));
        c.check(
            (vn - oracle).abs() < VALUE_EPS,
            format!("v_{n}(1/2) = {vn} but the closed form gives {oracle}"),
        );
    }
    let mut ratios = Vec::new();
    for n in 1..=10 {
        c.check(v[n] > v[n - 1], format!("v_{n}(1/2) does not increase"));
        c.check(v[n] < 1.0, format!("v_{n}(1/2) = 1"));
        if n >= 2 {
            let r = (1.0 - v[n]) / (1.0 - v[n - 1]);
            c.check(
                (RATIO_RANGE.0..=RATIO_RANGE.1).contains(&r),
                format!("ratio (1 - v_{n}) / (1 - v_{}) = {r:.4} outside [0.4, 0.6]", n - 1),
            );
            ratios.push(format!("{r:.3}"));
        }
    }
    c.check(!report.status.exists(), format!("verdict {}", report.status.label()));
    c.check(
        report.status.label().starts_with("does not exist"),
        format!("verdict {}", report.status.label()),
    );
    c.notes.push(format!("ratios {}", ratios.join(" ")));
    Ok(())
}

/// Every `d` in `D` has a feasible nontrivial witness with support in
/// `D + O`, and the witness graph reaches `O` from every `d`.
fn decomposition_holds(
    inst: &Instance,
    o: &BTreeSet<Belief>,
    d: &BTreeSet<Belief>,
    w: &BTreeMap<Belief, Experiment>,
) -> bool {
    let closed = d.iter().all(|p| {
        w.get(p).is_some_and(|e| {
            !e.is_trivial()
                && inst.feasible_at(p).contains(e)
                && e.support().into_iter().all(|q| d.contains(q) || o.contains(q))
        })
    });
    if !closed {
        return false;
    }
    let mut good: BTreeSet<Belief> = o.clone();
    loop {
        let before = good.len();
        for p in d {
            if w[p].support().into_iter().any(|q| good.contains(q)) {
                good.insert(p.clone());
            }
        }
        if good.len() == before {
            return d.iter().all(|p| good.contains(p));
        }
    }
}

fn criterion_4(c: &mut Criterion) -> Result<()> {
    let inst = corpus::triangle_f1();
    let limits = GraphLimits {
        depth_limit: 12,
        ..GraphLimits::default()
    };
    let tol = Tolerances::default();
    let o = vertices(3);
    let a1 = Belief::from_fractions(&[(0, 1), (1, 2), (1, 2)])?;
    let from_a1 = inst.with_prior(a1.clone())?;
    let eps = default_eps_grid();
    let (center_limit, a1_limit, center_impl, a1_impl, dec) = c.timed(|| -> Result<_> {
        let g = build_graph(&inst, limits);
        let center_limit = value_limit(&g, &inst, &tol)?;
        let g1 = build_graph(&from_a1, limits);
        let a1_limit = value_limit(&g1, &from_a1, &tol)?;
        let center_impl = is_implementable(&inst, &o, &eps, limits, 0)?;
        let a1_impl = is_implementable(&from_a1, &o, &eps, limits, 0)?;
        let dec = find_decomposition(&from_a1, &o, limits);
        Ok((
            center_limit.values[0].clone(),
            a1_limit.values[0].clone(),
            center_impl,
            a1_impl,
            dec,
        ))
    })?;
    // Oracle: nothing with positive utility is reachable from the center.
    let seen = common::reachable(&inst, &inst.prior, 12);
    let positive = seen.iter().any(|p| common::exact_v(&inst, p) > Rational::zero());
    c.check(!positive, "the center reaches positive utility");
    c.check(
        exact(&center_limit) == Some(&Rational::zero()),
        format!("v_inf(center) = {center_limit}"),
    );
    c.check(
        exact(&a1_limit) == Some(&Rational::one()),
        format!("v_inf(A1) = {a1_limit}"),
    );
    c.check(!center_impl.implementable, "vertices implementable from the center");
    c.check(a1_impl.implementable, "vertices not implementable from A1");
    let mut ladder = BTreeSet::new();
    if let Some(Generator::TriangleLadder(l)) = from_a1.compiled_generator(0) {
        let mut i = 1;
        while let Some(level) = l.level(i) {
            ladder.extend(level.iter().cloned());
            i += 1;
        }
    }
    match dec {
        Some(dec) => {
            c.check(
                dec.d == ladder,
                format!("D has {} beliefs, the ladder {}", dec.d.len(), ladder.len()),
            );
            c.check(dec.d.contains(&a1), "D misses A1");
            c.check(
                decomposition_holds(&from_a1, &o, &dec.d, &dec.witnesses),
                "D fails the decomposition conditions",
            );
            c.notes.push(format!("D is the {}-belief ladder", dec.d.len()));
        }
        None => c.check(false, "no decomposition from A1"),
    }
    Ok(())
}

/// `4^(I-1) / (1 + 4^(I-1))`.
fn center_spread_closed_form(prefix: u32) -> Rational {
    let four = rat(4, 1).pow(prefix as i32 - 1);
    &four / (Rational::one() + &four)
}

fn min_entropy_gap(inst: &Instance) -> f64 {
    common::reachable(inst, &inst.prior, GraphLimits::default().depth_limit)
        .iter()
        .flat_map(|p| inst.feasible_at(p))
        .filter(|e| !e.is_trivial())
        .map(|e| common::entropy_gap(&e))
        .fold(f64::INFINITY, f64::min)
}

fn criterion_5(c: &mut Criterion) -> Result<()> {
    let tol = Tolerances::default();
    let opts = AnalysisOptions::default();
    let mut last = Rational::zero();
    for prefix in 2..=4u32 {
        let inst = corpus::triangle_f2_prefix(prefix);
        let v = c.timed(|| -> Result<_> {
            let g = build_graph(&inst, GraphLimits::default());
            Ok(value_limit(&g, &inst, &tol)?.values[0].clone())
        })?;
        let expect = center_spread_closed_form(prefix);
        c.check(
            exact(&v) == Some(&expect),
            format!("I = {prefix}: v_inf(mu) = {v}, closed form {expect}"),
        );
        c.check(expect > last, format!("I = {prefix}: closed form does not increase"));
        last = expect;
    }
    let mut stamped = Vec::new();
    for prefix in [1u32, 2, 3, 4, 16] {
        let inst = corpus::triangle_f2_prefix(prefix);
        let gap = min_entropy_gap(&inst);
        let r = c.timed(|| support_equivalence_report(&inst, Some(vertices(3)), &opts))?;
        if prefix <= 4 {
            c.check(r.implementable, format!("I = {prefix}: vertices not implementable"));
            c.check(
                !r.existence.status.exists(),
                format!("I = {prefix}: an optimal policy was reported"),
            );
        }
        let expect_stamp = gap < tol.delta_floor;
        c.check(
            r.stamp.is_some() == expect_stamp,
            format!("I = {prefix}: oracle gap {gap:e}, stamp {:?}", r.stamp),
        );
        if let Some(s) = &r.stamp {
            c.check(s == ENTROPY_GAP_STAMP, format!("stamp text {s:?}"));
            stamped.push(prefix);
        }
    }
    c.check(!stamped.is_empty(), "no prefix was stamped");
    c.notes.push(format!(
        "v_inf matches 4^(I-1)/(1+4^(I-1)) for I = 2..4; stamped prefixes {stamped:?}"
    ));
    Ok(())
}

/// A concave function above `floor` on `nodes`: the lower envelope of random
/// linear functions, each lifted until it clears `floor`.
fn random_concave_majorant(nodes: &[Belief], floor: impl Fn(&Belief) -> f64, rng: &mut ChaCha8Rng) -> Vec<Rational> {
    let dim = nodes[0].dim();
    let pieces: Vec<Vec<Rational>> = (0..rng.gen_range(1..=4))
        .map(|_| {
            let c: Vec<Rational> = (0..dim).map(|_| rat(rng.gen_range(-16..=16), 8)).collect();
            let lift = nodes
                .iter()
                .map(|p| {
                    let v = dyadic_from_f64(floor(p), 60) + rat(1, 1 << 40);
                    v - linear(&c, p)
                })
                .max()
                .unwrap();
            c.into_iter().map(|x| x + &lift).collect()
        })
        .collect();
    nodes
        .iter()
        .map(|p| pieces.iter().map(|c| linear(c, p)).min().unwrap())
        .collect()
}

fn linear(c: &[Rational], p: &Belief) -> Rational {
    c.iter().zip(p.coords()).fold(Rational::zero(), |a, (x, y)| a + x * y)
}

fn criterion_6(c: &mut Criterion) -> Result<()> {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut checked = 0;
    for (name, inst) in corpus::all() {
        let (graph, limit) = c.timed(|| -> Result<_> {
            let graph = build_graph(&inst, GraphLimits::default());
            let limit = value_limit(&graph, &inst, &tol)?;
            Ok((graph, limit))
        })?;
        let verdict = c.timed(|| check_certificate(&limit.values, &graph, &inst, VALUE_EPS))?;
        c.check(verdict.passed, format!("{name}: v_inf rejected"));
        for k in 0..100 {
            let g: Vec<Rational> = if k % 2 == 0 {
                random_concave_majorant(&graph.nodes, |p| inst.eval_v(p).unwrap().to_f64(), &mut rng)
            } else {
                // v_inf plus a concave nonnegative bump.
                let bump = random_concave_majorant(&graph.nodes, |_| 0.0, &mut rng);
                match limit
                    .values
                    .iter()
                    .map(|v| v.as_exact().cloned())
                    .collect::<Option<Vec<_>>>()
                {
                    Some(vi) => vi.iter().zip(&bump).map(|(a, b)| a + b).collect(),
                    None => continue,
                }
            };
            let oracle_ok = !inst.is_exact() || {
                let map: BTreeMap<Belief, Rational> = graph.nodes.iter().cloned().zip(g.iter().cloned()).collect();
                common::is_superharmonic(&inst, &graph.nodes, &map)
            };
            c.check(
                oracle_ok,
                format!("{name}: certificate {k} is not superharmonic by the oracle"),
            );
            let values: Vec<Value> = g.iter().cloned().map(Value::Exact).collect();
            let v = c.timed(|| check_certificate(&values, &graph, &inst, VALUE_EPS))?;
            c.check(
                v.passed,
                format!("{name}: certificate {k} rejected: {:?}", v.violations.first()),
            );
            c.check(
                rational_to_f64(&g[0]) >= limit.at(0).to_f64() - VALUE_EPS,
                format!(
                    "{name}: certificate {k} has g(mu) = {} below v_inf(mu) = {}",
                    g[0],
                    limit.at(0)
                ),
            );
            checked += 1;
        }
    }
    let inst = corpus::four_experiments();
    let (graph, v1) = c.timed(|| -> Result<_> {
        let graph = build_graph(&inst, GraphLimits::default());
        let v1 = value_recursion(&graph, &inst, 1)?;
        Ok((graph, v1))
    })?;
    let verdict = c.timed(|| check_certificate(v1.level(1), &graph, &inst, VALUE_EPS))?;
    let mu = graph.index_of(&inst.prior).unwrap();
    let witness = verdict.violations.iter().any(|v| {
        matches!(v, CertificateViolation::NotSuperharmonic { node, edge, .. }
            if *node == mu && graph.edges[mu][*edge].experiment == inst.experiments[0])
    });
    c.check(!verdict.passed, "v_1 accepted");
    c.check(witness, "v_1 rejection lacks the e1 witness at the prior");
    c.notes.push(format!(
        "{checked} random certificates bound v_inf(mu) from above; v_1 rejected at e1"
    ));
    Ok(())
}

fn criterion_7(c: &mut Criterion) -> Result<()> {
    let tol = Tolerances::default();
    let grid = persuasion_core::structure::DEFAULT_GRID;
    for (name, inst) in corpus::all() {
        let (limit, contact) = c.timed(|| -> Result<_> {
            let graph = build_graph(&inst, GraphLimits::default());
            let limit = value_limit(&graph, &inst, &tol)?;
            let contact = contact_set(&inst, &inst.prior, grid, tol.value_eps)?;
            Ok((limit, contact))
        })?;
        let closure = &contact.closure;
        let oracle = common::closure_by_enumeration(&inst, &common::closure_candidates(&inst, grid));
        c.check(
            (closure.value.to_f64() - oracle).abs() < CLOSURE_EPS,
            format!(
                "{name}: v_hat = {} but vertex enumeration gives {oracle}",
                closure.value
            ),
        );
        c.check(
            closure.value.to_f64() >= limit.at(0).to_f64() - tol.value_eps,
            format!("{name}: v_hat {} below v_inf {}", closure.value, limit.at(0)),
        );
        for p in closure.spread.support() {
            c.check(
                contact.contains(p),
                format!("{name}: spread atom {p} outside the contact set"),
            );
            let touch = (closure.affine_at(p) - inst.eval_v(p)?.to_f64()).abs() < CLOSURE_EPS;
            c.check(touch, format!("{name}: supporting function misses v at {p}"));
        }
        c.check(
            closure.spread.expectation() == inst.prior,
            format!("{name}: spread is not Bayes plausible"),
        );
    }
    let inst = corpus::triangle_f1();
    let closure = c.timed(|| concave_closure(&inst, &inst.prior, grid))?;
    c.check(
        exact(&closure.value) == Some(&Rational::one()),
        format!("triangle v_hat = {}", closure.value),
    );
    let thirds = closure.spread.len() == 3 && vertices(3).iter().all(|v| closure.spread.weight_of(v) == rat(1, 3));
    c.check(thirds, format!("triangle spread {}", closure.spread));
    c.notes
        .push("closure matches vertex enumeration on the corpus; triangle spread is 1/3 on each vertex".into());
    Ok(())
}

fn property_case(seed: u64, depth: usize) -> std::result::Result<(), String> {
    let fail = |s: String| Err(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_small_instance(&mut rng);
    let tree = random_tree(&inst, depth, &mut rng);
    let one = Rational::one();
    let mut last = Rational::zero();
    for n in 0..=depth {
        let lib = belief_distribution(Strategy::Tree(&tree), n).map_err(|e| e.to_string())?;
        let (oracle, stopped) = common::walk_tree(&tree.root, n);
        if lib.total() != one {
            return fail(format!("level {n} mass {}", lib.total()));
        }
        if lib.mass != oracle {
            return fail(format!("level {n} distribution differs from the tree walk"));
        }
        let term = termination_probability(Strategy::Tree(&tree), n).map_err(|e| e.to_string())?;
        if term != stopped || term < last {
            return fail(format!("termination {term} at {n} (walk {stopped}, previous {last})"));
        }
        last = term;
    }
    let graph = build_graph(&inst, GraphLimits::default());
    let table = value_recursion(&graph, &inst, depth).map_err(|e| e.to_string())?;
    for n in 1..=depth {
        if (0..graph.len()).any(|u| table.at(n - 1, u).exceeds(table.at(n, u), 0.0)) {
            return fail(format!("v_{n} below v_{}", n - 1));
        }
    }
    for n in 0..=depth.min(2) {
        let brute = common::brute_force_value(&inst, &inst.prior, n);
        if exact(table.at(n, 0)) != Some(&brute) {
            return fail(format!(
                "v_{n}(mu) = {} but tree enumeration gives {brute}",
                table.at(n, 0)
            ));
        }
    }
    for e in &inst.experiments {
        let mut follow = BTreeMap::new();
        let mut expected: BTreeMap<Belief, Rational> = BTreeMap::new();
        for a in e.atoms() {
            let mut options = inst.feasible_at(&a.belief);
            options.push(Experiment::trivial(a.belief.clone()));
            let f = options.swap_remove(rng.gen_range(0..options.len()));
            for b in f.atoms() {
                *expected.entry(b.belief.clone()).or_insert_with(Rational::zero) += &a.weight * &b.weight;
            }
            follow.insert(a.belief.clone(), f);
        }
        let merged = e.merge_spread(&follow).map_err(|e| e.to_string())?;
        if merged.expectation() != e.expectation() {
            return fail(format!("merging moves the mean of {e}"));
        }
        let got: BTreeMap<Belief, Rational> = merged
            .atoms()
            .iter()
            .map(|a| (a.belief.clone(), a.weight.clone()))
            .collect();
        if got != expected {
            return fail(format!("merged weights of {e} differ from the product of weights"));
        }
    }
    let h = inst.check_support_bound().map_err(|e| e.to_string())?.max(1);
    let branching = to_branching(&tree, h).map_err(|e| e.to_string())?;
    let mut total = Rational::zero();
    for (hist, m) in branching.collapse() {
        total += &m;
        if history_probability(&tree, &hist).map_err(|e| e.to_string())? != m {
            return fail(format!("branching mass of {hist} differs"));
        }
    }
    if total != one {
        return fail(format!("branching histories carry {total}"));
    }
    Ok(())
}

fn criterion_8(c: &mut Criterion) -> Result<()> {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let outcome = c.timed(|| {
        runner.run(&(proptest::prelude::any::<u64>(), 1usize..=4), |(seed, depth)| {
            property_case(seed, depth).map_err(TestCaseError::fail)
        })
    });
    match outcome {
        Ok(()) => c.notes.push(format!("{PROPERTY_CASES} random instances")),
        Err(e) => c.check(false, format!("{e}")),
    }
    Ok(())
}

fn criterion_9(c: &mut Criterion) -> Result<()> {
    let inst = corpus::four_experiments();
    let tol = Tolerances::default();
    let eps: Vec<Rational> = (1..=20).map(|k| rat(1, 1 << k)).collect();
    let (report, values, limit) = c.timed(|| -> Result<_> {
        let report = optimal_exists(&inst, GraphLimits::default(), &tol)?;
        let graph = build_graph(&inst, GraphLimits::default());
        let values = value_recursion(&graph, &inst, 20)?;
        let limit = value_limit(&graph, &inst, &tol)?;
        Ok((report, values, limit))
    })?;
    let Some(policy) = report.policy else {
        c.check(false, "no optimal policy");
        return Ok(());
    };
    let table = c.timed(|| absorption_witness(&policy, &eps, tol.depth_cap));
    let Some(table) = table else {
        c.check(false, "no witness table");
        return Ok(());
    };
    let stopped = common::policy_stopped_mass(&policy, 25);
    let (lo, hi) = inst.bounds();
    let range = dyadic_from_f64(hi, 60) - dyadic_from_f64(lo, 60);
    let v_inf = exact(limit.at(0)).cloned().unwrap_or_else(Rational::zero);
    for (k, (e, n)) in (1..=20usize).zip(&table) {
        let oracle = stopped.iter().position(|s| *s >= Rational::one() - e);
        c.check(
            *n == k && oracle == Some(k),
            format!("eps = 2^-{k}: n_eps = {n}, oracle {oracle:?}"),
        );
        let bound = &v_inf - e * &range;
        let vn = exact(values.at(*n, 0));
        c.check(
            vn.is_some_and(|v| *v >= bound),
            format!("k = {k}: v_n = {} below {bound}", values.at(*n, 0)),
        );
    }
    c.notes
        .push("n_eps = k for k = 1..20 and the bound holds in exact arithmetic".into());
    Ok(())
}
