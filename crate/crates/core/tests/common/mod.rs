//! Independent oracles shared by the integration tests. Nothing here calls
//! the value solver or the structure analyzer.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use persuasion_core::belief::rational_to_f64;
use persuasion_core::engine::TreeNode;
use persuasion_core::structure::simplex_grid;
use persuasion_core::{Belief, Experiment, Instance, MarkovPolicy, Rational, Value};

pub fn exact_v(inst: &Instance, p: &Belief) -> Rational {
    match inst.eval_v(p).expect("utility evaluates") {
        Value::Exact(r) => r,
        Value::Approx(x) => panic!("oracle needs an exact utility, got {x}"),
    }
}

/// Every expected utility reachable by some strategy tree of depth at most
/// `n` from `p`. A tree is a choice of feasible experiment (or stopping) at
/// each history, so the set is built by enumerating choices and combining
/// the children's sets in every way.
pub fn tree_values(inst: &Instance, p: &Belief, n: usize) -> BTreeSet<Rational> {
    let mut out = BTreeSet::from([exact_v(inst, p)]);
    if n == 0 {
        return out;
    }
    for e in inst.feasible_at(p) {
        let mut acc = BTreeSet::from([Rational::zero()]);
        for a in e.atoms() {
            let child = tree_values(inst, &a.belief, n - 1);
            acc = acc
                .iter()
                .flat_map(|s| child.iter().map(move |c| s + &a.weight * c))
                .collect();
        }
        out.extend(acc);
    }
    out
}

pub fn brute_force_value(inst: &Instance, p: &Belief, n: usize) -> Rational {
    tree_values(inst, p, n)
        .into_iter()
        .next_back()
        .expect("stopping is always possible")
}

/// Beliefs reachable from `p` within `depth` feasible steps.
pub fn reachable(inst: &Instance, p: &Belief, depth: usize) -> BTreeSet<Belief> {
    let mut seen = BTreeSet::from([p.clone()]);
    let mut frontier = vec![p.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for q in &frontier {
            for e in inst.feasible_at(q) {
                for r in e.support() {
                    if seen.insert(r.clone()) {
                        next.push(r.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Distribution of the belief after `n` steps of the tree, and the part of
/// it sitting at nodes after which only trivial experiments follow, by
/// walking the nodes directly.
pub fn walk_tree(root: &TreeNode, n: usize) -> (BTreeMap<Belief, Rational>, Rational) {
    fn go(node: &TreeNode, mass: Rational, left: usize, out: &mut BTreeMap<Belief, Rational>, stopped: &mut Rational) {
        match &node.choice {
            Some(e) if left > 0 => {
                for (a, child) in e.atoms().iter().zip(&node.children) {
                    go(child, &mass * &a.weight, left - 1, out, stopped);
                }
            }
            _ => {
                if node.terminates() {
                    *stopped += &mass;
                }
                *out.entry(node.belief.clone()).or_insert_with(Rational::zero) += mass;
            }
        }
    }
    let mut out = BTreeMap::new();
    let mut stopped = Rational::zero();
    go(root, Rational::one(), n, &mut out, &mut stopped);
    (out, stopped)
}

/// Mass stopped after each of `steps` steps of a Markov policy, by iterating
/// its belief distribution.
pub fn policy_stopped_mass(policy: &MarkovPolicy, steps: usize) -> Vec<Rational> {
    let mut active = BTreeMap::from([(policy.mu.clone(), Rational::one())]);
    let mut stopped = Rational::zero();
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let mut next: BTreeMap<Belief, Rational> = BTreeMap::new();
        for (p, m) in active {
            match policy.rho.get(&p).filter(|e| !e.is_trivial()) {
                None => stopped += m,
                Some(e) => {
                    for a in e.atoms() {
                        *next.entry(a.belief.clone()).or_insert_with(Rational::zero) += &m * &a.weight;
                    }
                }
            }
        }
        out.push(stopped.clone());
        active = next;
    }
    out
}

/// Natural-log Shannon entropy.
pub fn entropy(p: &Belief) -> f64 {
    p.to_f64().iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum()
}

pub fn entropy_gap(e: &Experiment) -> f64 {
    let mean = e.expectation();
    entropy(&mean)
        - e.atoms()
            .iter()
            .map(|a| rational_to_f64(&a.weight) * entropy(&a.belief))
            .sum::<f64>()
}

pub fn binary_entropy(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        -u * u.ln() - (1.0 - u) * (1.0 - u).ln()
    }
}

/// The root of `binary_entropy(u) = h` in `[0, 1/2]`.
pub fn inverse_binary_entropy(h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The beliefs the closure solver inspects, for the enumeration oracle.
pub fn closure_candidates(inst: &Instance, grid: usize) -> Vec<Belief> {
    let dim = inst.dim();
    let mut out: Vec<Belief> = (0..dim).map(|s| Belief::point_mass(dim, s)).collect();
    if dim >= 3 {
        out.extend(simplex_grid(dim, grid));
    }
    out.extend(inst.utility.special_beliefs(dim));
    out.push(inst.prior.clone());
    let mut seen = BTreeSet::new();
    out.retain(|p| seen.insert(p.clone()));
    out
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// `max sum w_i v(p_i)` over Bayes-plausible spreads of the prior with
/// support in `candidates`, by enumerating every affinely independent
/// support of size at most `|states|` (the vertices of the spread polytope).
pub fn closure_by_enumeration(inst: &Instance, candidates: &[Belief]) -> f64 {
    let dim = inst.dim();
    let mu = inst.prior.to_f64();
    let pts: Vec<(Vec<f64>, f64)> = candidates
        .iter()
        .map(|p| (p.to_f64(), inst.eval_v(p).expect("utility evaluates").to_f64()))
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut idx = Vec::new();
    fn rec(
        start: usize,
        k: usize,
        idx: &mut Vec<usize>,
        pts: &[(Vec<f64>, f64)],
        mu: &[f64],
        dim: usize,
        best: &mut f64,
    ) {
        if idx.len() == k {
            // Normal equations for `P w = mu`, then a residual check. Rows
            // sum to 1, so a fit forces the weights to sum to 1.
            let p: Vec<&Vec<f64>> = idx.iter().map(|&i| &pts[i].0).collect();
            let ata: Vec<Vec<f64>> = (0..k)
                .map(|r| (0..k).map(|c| (0..dim).map(|s| p[r][s] * p[c][s]).sum()).collect())
                .collect();
            let atb: Vec<f64> = (0..k).map(|r| (0..dim).map(|s| p[r][s] * mu[s]).sum()).collect();
            if let Some(w) = solve(ata, atb) {
                let fits = (0..dim).all(|s| ((0..k).map(|r| w[r] * p[r][s]).sum::<f64>() - mu[s]).abs() < 1e-9);
                if fits && w.iter().all(|&x| x >= -1e-12) {
                    let val: f64 = (0..k).map(|r| w[r] * pts[idx[r]].1).sum();
                    *best = best.max(val);
                }
            }
            return;
        }
        for i in start..pts.len() {
            idx.push(i);
            rec(i + 1, k, idx, pts, mu, dim, best);
            idx.pop();
        }
    }
    for k in 1..=dim {
        rec(0, k, &mut idx, &pts, &mu, dim, &mut best);
    }
    best
}

/// Checks `g >= v` and `g(p) >= E_e[g]` on every listed edge, exactly.
pub fn is_superharmonic(inst: &Instance, nodes: &[Belief], g: &BTreeMap<Belief, Rational>) -> bool {
    nodes.iter().all(|p| {
        g[p] >= exact_v(inst, p)
            && inst.feasible_at(p).iter().all(|e| {
                let spread = e
                    .atoms()
                    .iter()
                    .fold(Rational::zero(), |acc, a| acc + &a.weight * &g[&a.belief]);
                g[p] >= spread
            })
    })
}
