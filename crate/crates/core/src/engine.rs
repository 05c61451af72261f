//! Strategies and their exact and simulated outcomes.
//!
//! Finite strategies are explicit trees over histories. Infinite strategies
//! are Markov: the experiment depends on the current belief only, given
//! either as a finite [`MarkovPolicy`] or as any [`PolicyRule`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::belief::{format_rational, rational_to_f64, Belief, Experiment, Rational};
use crate::error::{Error, Result};
use crate::graph::BeliefGraph;
use crate::instance::Instance;
use crate::linalg;
use crate::solver::{LimitValues, Tolerances};
use crate::value::Value;

pub const THREADS_ENV: &str = "PERSUASION_LAB_THREADS";

/// `(p_0, e_1, p_1, ..., e_n, p_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct History {
    pub beliefs: Vec<Belief>,
    pub experiments: Vec<Experiment>,
}

impl History {
    pub fn start(p: Belief) -> Self {
        History {
            beliefs: vec![p],
            experiments: Vec::new(),
        }
    }

    /// Checks `sigma(e_i) = p_{i-1}` and `p_i` in the support of `e_i`.
    pub fn new(beliefs: Vec<Belief>, experiments: Vec<Experiment>) -> Result<Self> {
        if beliefs.len() != experiments.len() + 1 {
            return Err(Error::InconsistentHistory(format!(
                "{} beliefs for {} experiments",
                beliefs.len(),
                experiments.len()
            )));
        }
        let mut h = History::start(beliefs[0].clone());
        for (e, p) in experiments.into_iter().zip(beliefs.into_iter().skip(1)) {
            h = h.extended(e, p)?;
        }
        Ok(h)
    }

    pub fn extended(&self, e: Experiment, p: Belief) -> Result<Self> {
        if e.expectation() != *self.last() {
            return Err(Error::InconsistentHistory(format!(
                "step {}: experiment mean {} differs from current belief {}",
                self.steps() + 1,
                e.expectation(),
                self.last()
            )));
        }
        if e.weight_of(&p).is_zero() {
            return Err(Error::InconsistentHistory(format!(
                "step {}: {p} is not an outcome of {e}",
                self.steps() + 1
            )));
        }
        let mut h = self.clone();
        h.experiments.push(e);
        h.beliefs.push(p);
        Ok(h)
    }

    pub fn steps(&self) -> usize {
        self.experiments.len()
    }

    pub fn last(&self) -> &Belief {
        self.beliefs.last().expect("a history has a first belief")
    }
}

impl std::fmt::Display for History {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.beliefs[0])?;
        for (e, p) in self.experiments.iter().zip(&self.beliefs[1..]) {
            write!(f, " -{e}-> {p}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub belief: Belief,
    /// `None` at the leaves (depth reached).
    pub choice: Option<Experiment>,
    /// One child per atom of `choice`, in atom order.
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    /// Only trivial experiments follow this node.
    pub fn terminates(&self) -> bool {
        match &self.choice {
            None => true,
            Some(e) if e.is_trivial() => self.children.iter().all(TreeNode::terminates),
            Some(_) => false,
        }
    }

    fn to_json(&self) -> Json {
        json!({
            "belief": self.belief.to_json(),
            "experiment": self.choice.as_ref().map(Experiment::to_json),
            "children": self.children.iter().map(TreeNode::to_json).collect::<Vec<_>>(),
        })
    }
}

/// An `n`-step sequential persuasion: an experiment for every reachable
/// history of length below `depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyTree {
    pub depth: usize,
    pub root: TreeNode,
}

impl StrategyTree {
    /// Builds the tree by asking `choose` for the experiment after each
    /// reachable history.
    pub fn build<F>(prior: Belief, depth: usize, mut choose: F) -> Result<Self>
    where
        F: FnMut(&History) -> Result<Experiment>,
    {
        fn grow<F: FnMut(&History) -> Result<Experiment>>(
            h: &History,
            left: usize,
            choose: &mut F,
        ) -> Result<TreeNode> {
            let belief = h.last().clone();
            if left == 0 {
                return Ok(TreeNode {
                    belief,
                    choice: None,
                    children: Vec::new(),
                });
            }
            let e = choose(h)?;
            if e.expectation() != belief {
                return Err(Error::InconsistentHistory(format!(
                    "experiment {e} chosen at {belief} has mean {}",
                    e.expectation()
                )));
            }
            let children = e
                .atoms()
                .iter()
                .map(|a| grow(&h.extended(e.clone(), a.belief.clone())?, left - 1, choose))
                .collect::<Result<Vec<_>>>()?;
            Ok(TreeNode {
                belief,
                choice: Some(e),
                children,
            })
        }
        let root = grow(&History::start(prior), depth, &mut choose)?;
        Ok(StrategyTree { depth, root })
    }

    /// Always the trivial experiment.
    pub fn trivial(prior: Belief, depth: usize) -> Self {
        Self::build(prior, depth, |h| Ok(Experiment::trivial(h.last().clone()))).expect("trivial tree is valid")
    }

    /// The first `depth` steps of a Markov rule.
    pub fn from_rule(prior: Belief, depth: usize, rule: &dyn PolicyRule) -> Self {
        Self::build(prior, depth, |h| {
            Ok(rule
                .choose(h.last())
                .unwrap_or_else(|| Experiment::trivial(h.last().clone())))
        })
        .expect("rule experiments are Bayes plausible")
    }

    pub fn prior(&self) -> &Belief {
        &self.root.belief
    }

    /// The same strategy followed by `extra` trivial steps.
    pub fn extend_trivial(&self, extra: usize) -> Self {
        fn extend(node: &TreeNode, extra: usize) -> TreeNode {
            match &node.choice {
                Some(e) => TreeNode {
                    belief: node.belief.clone(),
                    choice: Some(e.clone()),
                    children: node.children.iter().map(|c| extend(c, extra)).collect(),
                },
                None => StrategyTree::trivial(node.belief.clone(), extra).root,
            }
        }
        StrategyTree {
            depth: self.depth + extra,
            root: extend(&self.root, extra),
        }
    }

    /// Every full-depth history with its probability.
    pub fn histories(&self) -> Vec<(History, Rational)> {
        let mut out = Vec::new();
        let mut stack = vec![(&self.root, History::start(self.root.belief.clone()), Rational::one())];
        while let Some((node, h, mass)) = stack.pop() {
            match &node.choice {
                None => out.push((h, mass)),
                Some(e) => {
                    for (a, child) in e.atoms().iter().zip(&node.children).rev() {
                        let mut next = h.clone();
                        next.experiments.push(e.clone());
                        next.beliefs.push(a.belief.clone());
                        stack.push((child, next, &mass * &a.weight));
                    }
                }
            }
        }
        out
    }

    /// Nodes at depth `n` with their probability.
    fn level(&self, n: usize) -> Vec<(&TreeNode, Rational)> {
        let mut frontier = vec![(&self.root, Rational::one())];
        for _ in 0..n {
            let mut next = Vec::new();
            for (node, mass) in frontier {
                if let Some(e) = &node.choice {
                    for (a, child) in e.atoms().iter().zip(&node.children) {
                        next.push((child, &mass * &a.weight));
                    }
                }
            }
            frontier = next;
        }
        frontier
    }

    /// Every chosen experiment is feasible for the instance.
    pub fn check_feasible(&self, inst: &Instance) -> Result<()> {
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let Some(e) = &node.choice {
                if !e.is_trivial() && !inst.feasible_at(&node.belief).contains(e) {
                    return Err(Error::InvalidPolicy(format!("{e} is not feasible at {}", node.belief)));
                }
                stack.extend(&node.children);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Json {
        json!({"depth": self.depth, "root": self.root.to_json()})
    }
}

/// A stationary strategy: the experiment depends only on the current belief.
pub trait PolicyRule: Sync {
    /// The experiment to run at `p`, or `None` to stop for good. A trivial
    /// experiment also means stopping.
    fn choose(&self, p: &Belief) -> Option<Experiment>;
}

/// A [`PolicyRule`] given by a closure.
pub struct RuleFn<F>(pub F);

impl<F> PolicyRule for RuleFn<F>
where
    F: Fn(&Belief) -> Option<Experiment> + Sync,
{
    fn choose(&self, p: &Belief) -> Option<Experiment> {
        (self.0)(p).filter(|e| !e.is_trivial())
    }
}

/// `(mu, D, Z, rho)`: run `rho(p)` on intermediate beliefs `D`, stop on `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPolicy {
    pub mu: Belief,
    pub d: BTreeSet<Belief>,
    pub z: BTreeSet<Belief>,
    pub rho: BTreeMap<Belief, Experiment>,
}

impl Serialize for MarkovPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl MarkovPolicy {
    /// Checks that `mu` is in `D` or `Z`, the sets are disjoint, every
    /// `rho(p)` is a nontrivial spread of `p`, and supports stay in `D` and
    /// `Z`.
    pub fn new(mu: Belief, rho: BTreeMap<Belief, Experiment>, z: BTreeSet<Belief>) -> Result<Self> {
        let policy = Self::from_parts(mu, rho, z)?;
        for (p, e) in &policy.rho {
            for q in e.support() {
                if !policy.d.contains(q) && !policy.z.contains(q) {
                    return Err(Error::InvalidPolicy(format!(
                        "outcome {q} of the experiment at {p} is in neither D nor Z"
                    )));
                }
            }
        }
        Ok(policy)
    }

    /// Like [`MarkovPolicy::new`] without the closure check; [`unroll`]
    /// reports any escape with a witness path.
    pub fn from_parts(mu: Belief, rho: BTreeMap<Belief, Experiment>, z: BTreeSet<Belief>) -> Result<Self> {
        let d: BTreeSet<Belief> = rho.keys().cloned().collect();
        if !d.contains(&mu) && !z.contains(&mu) {
            return Err(Error::InvalidPolicy(format!("prior {mu} is in neither D nor Z")));
        }
        if let Some(p) = d.intersection(&z).next() {
            return Err(Error::InvalidPolicy(format!("{p} is in both D and Z")));
        }
        for (p, e) in &rho {
            if e.is_trivial() {
                return Err(Error::InvalidPolicy(format!("experiment at {p} is trivial")));
            }
            if e.expectation() != *p {
                return Err(Error::InvalidPolicy(format!(
                    "experiment at {p} has mean {}",
                    e.expectation()
                )));
            }
        }
        Ok(MarkovPolicy { mu, d, z, rho })
    }

    /// Stop immediately.
    pub fn stop(mu: Belief) -> Self {
        Self::new(mu.clone(), BTreeMap::new(), BTreeSet::from([mu])).expect("stopping policy is valid")
    }

    /// Every `rho(p)` is feasible for the instance.
    pub fn check_feasible(&self, inst: &Instance) -> Result<()> {
        for (p, e) in &self.rho {
            if !inst.feasible_at(p).contains(e) {
                return Err(Error::InvalidPolicy(format!("{e} is not feasible at {p}")));
            }
        }
        Ok(())
    }

    /// Beliefs reachable from `mu`, in breadth-first order.
    pub fn reachable(&self) -> Vec<Belief> {
        let mut seen = BTreeSet::from([self.mu.clone()]);
        let mut order = vec![self.mu.clone()];
        let mut queue = VecDeque::from([self.mu.clone()]);
        while let Some(p) = queue.pop_front() {
            if let Some(e) = self.rho.get(&p) {
                for q in e.support() {
                    if seen.insert(q.clone()) {
                        order.push(q.clone());
                        queue.push_back(q.clone());
                    }
                }
            }
        }
        order
    }

    /// Whether play from `mu` stops in `Z` with probability one: on a finite
    /// chain, every reachable belief must be able to reach `Z`.
    pub fn absorbs_almost_surely(&self) -> bool {
        let reach = self.reachable();
        if reach.iter().any(|p| !self.d.contains(p) && !self.z.contains(p)) {
            return false;
        }
        let mut good: BTreeSet<&Belief> = reach.iter().filter(|p| self.z.contains(*p)).collect();
        loop {
            let before = good.len();
            for p in &reach {
                if good.contains(p) {
                    continue;
                }
                if let Some(e) = self.rho.get(p) {
                    if e.support().iter().any(|q| good.contains(q)) {
                        good.insert(p);
                    }
                }
            }
            if good.len() == before {
                break;
            }
        }
        reach.iter().all(|p| good.contains(p))
    }

    /// Exact probability of eventually stopping in `Z`.
    pub fn absorption_probability(&self) -> Rational {
        let reach = self.reachable();
        let idx: HashMap<&Belief, usize> = reach.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let n = reach.len();
        let target: Vec<bool> = reach.iter().map(|p| self.z.contains(p)).collect();
        let succ: Vec<Vec<usize>> = reach
            .iter()
            .map(|p| match self.rho.get(p) {
                Some(e) => e.support().into_iter().map(|q| idx[q]).collect(),
                None => Vec::new(),
            })
            .collect();
        // Beliefs that cannot reach Z have probability 0.
        let mut can = target.clone();
        loop {
            let mut changed = false;
            for u in 0..n {
                if !can[u] && succ[u].iter().any(|&t| can[t]) {
                    can[u] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut x: Vec<Rational> = target
            .iter()
            .map(|&t| if t { Rational::one() } else { Rational::zero() })
            .collect();
        let unknown: Vec<bool> = (0..n).map(|u| can[u] && !target[u]).collect();
        let inner: Vec<Vec<usize>> = (0..n)
            .map(|u| {
                if unknown[u] {
                    succ[u].iter().copied().filter(|&t| unknown[t]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        for comp in linalg::tarjan_scc(&inner) {
            let comp: Vec<usize> = comp.into_iter().filter(|&u| unknown[u]).collect();
            if comp.is_empty() {
                continue;
            }
            let m = comp.len();
            let mut a = vec![vec![Rational::zero(); m]; m];
            let mut b = vec![Rational::zero(); m];
            for (r, &u) in comp.iter().enumerate() {
                a[r][r] = Rational::one();
                let e = &self.rho[&reach[u]];
                for atom in e.atoms() {
                    let t = idx[&atom.belief];
                    match comp.iter().position(|&c| c == t) {
                        Some(c) => a[r][c] -= &atom.weight,
                        None => b[r] += &atom.weight * &x[t],
                    }
                }
            }
            let sol = linalg::solve(a, b).expect("every belief in the component can leave it");
            for (r, &u) in comp.iter().enumerate() {
                x[u] = sol[r].clone();
            }
        }
        x[0].clone()
    }

    pub fn to_json(&self) -> Json {
        json!({
            "mu": self.mu.to_json(),
            "D": self.d.iter().map(Belief::to_json).collect::<Vec<_>>(),
            "Z": self.z.iter().map(Belief::to_json).collect::<Vec<_>>(),
            "rho": self.rho.iter().map(|(p, e)| json!({"at": p.to_json(), "do": e.to_json()})).collect::<Vec<_>>(),
        })
    }

    /// Reads `{"mu"?, "D", "Z", "rho": [{"at", "do"}]}`; `mu` defaults to
    /// `prior`. A listed `D` must match the beliefs `rho` is defined at.
    pub fn from_json(doc: &Json, prior: &Belief) -> Result<Self> {
        let invalid = |path: &str, message: &str| Error::InvalidDocument {
            path: path.to_string(),
            message: message.to_string(),
        };
        let mu = match doc.get("mu") {
            Some(m) => Belief::from_json(m, "mu")?,
            None => prior.clone(),
        };
        let beliefs = |key: &str| -> Result<BTreeSet<Belief>> {
            match doc.get(key) {
                None => Ok(BTreeSet::new()),
                Some(Json::Array(items)) => items
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Belief::from_json(p, &format!("{key}[{i}]")))
                    .collect(),
                Some(_) => Err(invalid(key, "must be a list of beliefs")),
            }
        };
        let d = beliefs("D")?;
        let z = beliefs("Z")?;
        let mut rho = BTreeMap::new();
        let items = doc
            .get("rho")
            .and_then(Json::as_array)
            .ok_or_else(|| invalid("rho", "must be a list of {\"at\", \"do\"} records"))?;
        for (i, item) in items.iter().enumerate() {
            let at = Belief::from_json(
                item.get("at")
                    .ok_or_else(|| invalid(&format!("rho[{i}].at"), "missing"))?,
                &format!("rho[{i}].at"),
            )?;
            let e = Experiment::from_json(
                item.get("do")
                    .ok_or_else(|| invalid(&format!("rho[{i}].do"), "missing"))?,
                &format!("rho[{i}].do"),
            )?;
            rho.insert(at, e);
        }
        let keys: BTreeSet<Belief> = rho.keys().cloned().collect();
        if doc.get("D").is_some() && keys != d {
            return Err(invalid("D", "must list exactly the beliefs where rho is defined"));
        }
        Self::new(mu, rho, z)
    }
}

impl PolicyRule for MarkovPolicy {
    fn choose(&self, p: &Belief) -> Option<Experiment> {
        self.rho.get(p).cloned()
    }
}

/// Distribution of `b_n`, with the part that has stopped for good.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutcomeDistribution {
    pub mass: BTreeMap<Belief, Rational>,
    pub terminated: BTreeMap<Belief, Rational>,
}

impl OutcomeDistribution {
    pub fn total(&self) -> Rational {
        self.mass.values().fold(Rational::zero(), |a, b| a + b)
    }

    pub fn terminated_total(&self) -> Rational {
        self.terminated.values().fold(Rational::zero(), |a, b| a + b)
    }

    fn add(&mut self, p: &Belief, m: &Rational, stopped: bool) {
        *self.mass.entry(p.clone()).or_insert_with(Rational::zero) += m;
        if stopped {
            *self.terminated.entry(p.clone()).or_insert_with(Rational::zero) += m;
        }
    }

    pub fn to_json(&self) -> Json {
        Json::Array(
            self.mass
                .iter()
                .map(|(p, m)| {
                    let t = self.terminated.get(p).cloned().unwrap_or_else(Rational::zero);
                    json!({"p": p.to_json(), "mass": format_rational(m), "terminated": format_rational(&t)})
                })
                .collect(),
        )
    }
}

/// A finite tree or a Markov rule started at a prior.
#[derive(Clone, Copy)]
pub enum Strategy<'a> {
    Tree(&'a StrategyTree),
    Markov {
        prior: &'a Belief,
        rule: &'a dyn PolicyRule,
    },
}

impl<'a> Strategy<'a> {
    pub fn policy(policy: &'a MarkovPolicy) -> Self {
        Strategy::Markov {
            prior: &policy.mu,
            rule: policy,
        }
    }

    pub fn prior(&self) -> &Belief {
        match self {
            Strategy::Tree(t) => t.prior(),
            Strategy::Markov { prior, .. } => prior,
        }
    }
}

/// `Pr[xi]`: the product of the outcome weights along `xi`, or 0 when some
/// belief is not an outcome of its experiment.
pub fn history_probability(tree: &StrategyTree, xi: &History) -> Result<Rational> {
    if xi.beliefs.len() != xi.experiments.len() + 1 {
        return Err(Error::InconsistentHistory("malformed history".into()));
    }
    if xi.steps() > tree.depth {
        return Err(Error::InconsistentHistory(format!(
            "history has {} steps, strategy only {}",
            xi.steps(),
            tree.depth
        )));
    }
    if xi.beliefs[0] != tree.root.belief {
        return Ok(Rational::zero());
    }
    let mut node = &tree.root;
    let mut prob = Rational::one();
    for (i, e) in xi.experiments.iter().enumerate() {
        let chosen = node.choice.as_ref().expect("depth checked above");
        if chosen != e {
            return Err(Error::InconsistentHistory(format!(
                "step {}: history uses {e}, strategy chooses {chosen}",
                i + 1
            )));
        }
        let next = &xi.beliefs[i + 1];
        match e.atoms().iter().position(|a| &a.belief == next) {
            Some(k) => {
                prob *= &e.atoms()[k].weight;
                node = &node.children[k];
            }
            None => return Ok(Rational::zero()),
        }
    }
    Ok(prob)
}

/// Memoized rule lookups; a trivial answer counts as stopping.
struct RuleCache<'a> {
    rule: &'a dyn PolicyRule,
    memo: HashMap<Belief, Option<Experiment>>,
}

impl<'a> RuleCache<'a> {
    fn new(rule: &'a dyn PolicyRule) -> Self {
        RuleCache {
            rule,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, p: &Belief) -> Option<Experiment> {
        if let Some(hit) = self.memo.get(p) {
            return hit.clone();
        }
        let e = self.rule.choose(p).filter(|e| !e.is_trivial());
        self.memo.insert(p.clone(), e.clone());
        e
    }
}

/// Step-by-step law of a Markov rule: unstopped mass per belief plus the
/// stopped part.
struct MarkovFlow<'a> {
    cache: RuleCache<'a>,
    active: BTreeMap<Belief, Rational>,
    stopped: BTreeMap<Belief, Rational>,
    steps: usize,
}

impl<'a> MarkovFlow<'a> {
    fn new(prior: &Belief, rule: &'a dyn PolicyRule) -> Self {
        let mut flow = MarkovFlow {
            cache: RuleCache::new(rule),
            active: BTreeMap::new(),
            stopped: BTreeMap::new(),
            steps: 0,
        };
        flow.place(prior.clone(), Rational::one());
        flow
    }

    fn place(&mut self, p: Belief, m: Rational) {
        let map = if self.cache.get(&p).is_some() {
            &mut self.active
        } else {
            &mut self.stopped
        };
        *map.entry(p).or_insert_with(Rational::zero) += m;
    }

    fn step(&mut self) {
        let active = std::mem::take(&mut self.active);
        for (p, m) in active {
            let e = self.cache.get(&p).expect("active beliefs have a move");
            for a in e.atoms() {
                self.place(a.belief.clone(), &m * &a.weight);
            }
        }
        self.steps += 1;
    }

    fn stopped_mass(&self) -> Rational {
        self.stopped.values().fold(Rational::zero(), |a, b| a + b)
    }

    fn distribution(&self) -> OutcomeDistribution {
        let mut d = OutcomeDistribution::default();
        for (p, m) in &self.stopped {
            d.add(p, m, true);
        }
        for (p, m) in &self.active {
            d.add(p, m, false);
        }
        d
    }
}

/// Law of `b_n`. Trees are read at depth `n <= depth`.
pub fn belief_distribution(strategy: Strategy<'_>, n: usize) -> Result<OutcomeDistribution> {
    match strategy {
        Strategy::Tree(tree) => {
            if n > tree.depth {
                return Err(Error::Precondition(format!(
                    "tree has depth {}, asked for {n}",
                    tree.depth
                )));
            }
            let mut d = OutcomeDistribution::default();
            for (node, mass) in tree.level(n) {
                d.add(&node.belief, &mass, node.terminates());
            }
            Ok(d)
        }
        Strategy::Markov { prior, rule } => {
            let mut flow = MarkovFlow::new(prior, rule);
            for _ in 0..n {
                flow.step();
            }
            Ok(flow.distribution())
        }
    }
}

/// `Pr[the strategy has stopped for good after n steps]`.
pub fn termination_probability(strategy: Strategy<'_>, n: usize) -> Result<Rational> {
    Ok(belief_distribution(strategy, n)?.terminated_total())
}

/// `E[v(b_n)]` for an `n`-step tree.
pub fn expected_utility_tree(tree: &StrategyTree, inst: &Instance) -> Result<Value> {
    let level = tree.level(tree.depth);
    let values = level
        .iter()
        .map(|(node, _)| inst.eval_v(&node.belief))
        .collect::<Result<Vec<_>>>()?;
    Ok(Value::weighted_sum(level.iter().map(|(_, m)| m).zip(&values)))
}

/// Expected utility of an infinite Markov strategy, which only counts mass
/// that has stopped.
#[derive(Clone, Debug, Serialize)]
pub struct PolicyValue {
    /// Utility collected from stopped mass.
    pub lower: Value,
    /// `lower + V_hi * (unstopped mass)`.
    pub upper: Value,
    pub terminated_mass: Value,
    pub depth: usize,
    /// Stopped mass reached `1 - term_eps` before the depth cap.
    pub converged: bool,
    /// Largest `E[v(b_n)]` seen, counting unstopped mass too. Diagnostic
    /// only: it can exceed every achievable value.
    pub without_termination: Value,
}

impl PolicyValue {
    pub fn width(&self) -> f64 {
        self.upper.to_f64() - self.lower.to_f64()
    }

    pub fn contains(&self, x: &Value, eps: f64) -> bool {
        !self.lower.exceeds(x, eps) && !x.exceeds(&self.upper, eps)
    }
}

/// Largest number of distinct unstopped beliefs tracked before giving up.
const ACTIVE_CAP: usize = 1 << 16;

/// Evaluates a Markov strategy until the stopped mass reaches
/// `1 - term_eps`, the depth cap, or the support cap.
pub fn evaluate_policy(
    prior: &Belief,
    rule: &dyn PolicyRule,
    inst: &Instance,
    tol: &Tolerances,
) -> Result<PolicyValue> {
    let (_, v_hi) = inst.bounds();
    let mut flow = MarkovFlow::new(prior, rule);
    let mut v_cache: HashMap<Belief, Value> = HashMap::new();
    let mut eval = |p: &Belief| -> Result<Value> {
        if let Some(v) = v_cache.get(p) {
            return Ok(v.clone());
        }
        let v = inst.eval_v(p)?;
        v_cache.insert(p.clone(), v.clone());
        Ok(v)
    };
    let mut best_plain: Option<Value> = None;
    loop {
        let stopped = flow.stopped_mass();
        let rest = Rational::one() - &stopped;
        let mut terms: Vec<(Rational, Value)> = Vec::new();
        for (p, m) in &flow.stopped {
            terms.push((m.clone(), eval(p)?));
        }
        let lower = Value::weighted_sum(terms.iter().map(|(m, v)| (m, v)));
        for (p, m) in &flow.active {
            terms.push((m.clone(), eval(p)?));
        }
        let plain = Value::weighted_sum(terms.iter().map(|(m, v)| (m, v)));
        best_plain = Some(match best_plain {
            Some(b) => b.max(plain),
            None => plain,
        });
        let converged = rational_to_f64(&rest) <= tol.term_eps;
        if converged || flow.steps >= tol.depth_cap || flow.active.len() > ACTIVE_CAP {
            let hi = Rational::from_float(v_hi)
                .map(Value::Exact)
                .unwrap_or(Value::Approx(v_hi));
            let slack = match &hi {
                Value::Exact(h) => Value::Exact(h * &rest),
                Value::Approx(h) => Value::Approx(h * rational_to_f64(&rest)),
            };
            let upper = Value::weighted_sum([(&Rational::one(), &lower), (&Rational::one(), &slack)]);
            return Ok(PolicyValue {
                lower,
                upper,
                terminated_mass: Value::Exact(stopped),
                depth: flow.steps,
                converged,
                without_termination: best_plain.expect("set above"),
            });
        }
        flow.step();
    }
}

/// Result of cutting a strategy that may run forever.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub steps: usize,
    pub tree: StrategyTree,
    /// Expected utility of the cut tree.
    pub value: Value,
    /// Upper bound on the original strategy's value.
    pub original_upper: Value,
    pub eps: Rational,
    pub limit_termination: Rational,
}

/// Cuts a strategy whose limiting stopping probability `L` is below one into
/// a finite tree worth strictly more: pick `eps` with
/// `eps V_hi < (1 - L + eps) V_lo`, cut at the first depth whose stopped mass
/// is within `eps` of `L`, and stop everywhere there. Needs `V_lo > 0`.
///
/// `L` is exact for a [`MarkovPolicy`] (pass its absorption probability);
/// for other rules pass the stopped mass once it has stopped growing.
pub fn truncate_improve(
    prior: &Belief,
    rule: &dyn PolicyRule,
    limit_termination: &Rational,
    inst: &Instance,
) -> Result<Option<Truncation>> {
    if !inst.declares_positive_utility() {
        return Err(Error::Precondition(
            "truncation needs a declared utility lower bound V_lo > 0".into(),
        ));
    }
    if *limit_termination >= Rational::one() {
        return Ok(None);
    }
    let (v_lo, v_hi) = inst.bounds();
    let exact = |x: f64| Rational::from_float(x).expect("finite bound");
    let (lo, hi) = (exact(v_lo), exact(v_hi));
    let gap = Rational::one() - limit_termination;
    let eps = if hi > lo {
        &gap * &lo / ((&hi - &lo) * Rational::from_integer(2.into()))
    } else {
        gap.clone()
    };
    let mut flow = MarkovFlow::new(prior, rule);
    let floor = limit_termination - &eps;
    while flow.stopped_mass() < floor {
        flow.step();
    }
    let n = flow.steps;
    let stopped_utility = Value::weighted_sum(
        flow.stopped
            .iter()
            .map(|(p, m)| inst.eval_v(p).map(|v| (m.clone(), v)))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .map(|(m, v)| (m, v))
            .collect::<Vec<_>>(),
    );
    let pending = limit_termination - flow.stopped_mass();
    let original_upper = Value::weighted_sum([(&Rational::one(), &stopped_utility), (&pending, &Value::Exact(hi))]);
    let tree = StrategyTree::from_rule(prior.clone(), n, rule);
    let value = expected_utility_tree(&tree, inst)?;
    Ok(Some(Truncation {
        steps: n,
        tree,
        value,
        original_upper,
        eps,
        limit_termination: limit_termination.clone(),
    }))
}

/// The first `n` steps of a Markov policy as a tree. Reaching a belief
/// outside `D` and `Z` is reported with the path that got there.
pub fn unroll(policy: &MarkovPolicy, n: usize) -> Result<StrategyTree> {
    StrategyTree::build(policy.mu.clone(), n, |h| {
        let p = h.last();
        if let Some(e) = policy.rho.get(p) {
            Ok(e.clone())
        } else if policy.z.contains(p) {
            Ok(Experiment::trivial(p.clone()))
        } else {
            Err(Error::PolicyClosure {
                belief: p.to_string(),
                path: h.to_string(),
            })
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchNode {
    pub mass: Rational,
    pub belief: Belief,
    /// `None` on the last level.
    pub experiment: Option<Experiment>,
}

/// An `h`-ary tree of depth `n`: level `k` has `h^k` nodes and node `c` has
/// children `c h, ..., c h + h - 1`. Children past an experiment's support
/// carry zero mass and repeat the first outcome's belief.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingTree {
    pub h: usize,
    pub levels: Vec<Vec<BranchNode>>,
}

/// Re-indexes a tree as an `h`-branching tree.
pub fn to_branching(tree: &StrategyTree, h: usize) -> Result<BranchingTree> {
    if h == 0 {
        return Err(Error::BranchingBound { size: 1, bound: 0 });
    }
    let mut levels: Vec<Vec<BranchNode>> = Vec::with_capacity(tree.depth + 1);
    let mut frontier: Vec<Option<&TreeNode>> = vec![Some(&tree.root)];
    let mut current = vec![BranchNode {
        mass: Rational::one(),
        belief: tree.root.belief.clone(),
        experiment: None,
    }];
    for _ in 0..tree.depth {
        let mut next_frontier = Vec::with_capacity(frontier.len() * h);
        let mut next = Vec::with_capacity(current.len() * h);
        for (node, slot) in frontier.iter().zip(current.iter_mut()) {
            let e = match node {
                Some(n) => n.choice.clone().expect("internal node has a choice"),
                None => Experiment::trivial(slot.belief.clone()),
            };
            if e.len() > h {
                return Err(Error::BranchingBound {
                    size: e.len(),
                    bound: h,
                });
            }
            for k in 0..h {
                match (node, e.atoms().get(k)) {
                    (Some(n), Some(a)) if !slot.mass.is_zero() => {
                        next.push(BranchNode {
                            mass: &slot.mass * &a.weight,
                            belief: a.belief.clone(),
                            experiment: None,
                        });
                        next_frontier.push(Some(&n.children[k]));
                    }
                    (_, atom) => {
                        let belief = atom.unwrap_or(&e.atoms()[0]).belief.clone();
                        let mass = match (node, atom) {
                            (Some(_), Some(a)) => &slot.mass * &a.weight,
                            _ => Rational::zero(),
                        };
                        let child = match (node, atom) {
                            (Some(n), Some(_)) => Some(&n.children[k]),
                            _ => None,
                        };
                        next.push(BranchNode {
                            mass,
                            belief,
                            experiment: None,
                        });
                        next_frontier.push(child);
                    }
                }
            }
            slot.experiment = Some(e);
        }
        levels.push(current);
        current = next;
        frontier = next_frontier;
    }
    levels.push(current);
    Ok(BranchingTree { h, levels })
}

impl BranchingTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Checks that each experiment is a spread of its node's belief whose
    /// outcomes label the children, and that children split the parent mass
    /// by the experiment's weights.
    pub fn check(&self) -> Result<()> {
        for (k, level) in self.levels.iter().enumerate().take(self.depth()) {
            for (c, node) in level.iter().enumerate() {
                let e = node
                    .experiment
                    .as_ref()
                    .ok_or_else(|| Error::InvalidPolicy(format!("level {k} node {c} has no experiment")))?;
                if e.expectation() != node.belief {
                    return Err(Error::InvalidPolicy(format!(
                        "level {k} node {c}: experiment mean differs from belief"
                    )));
                }
                let children = &self.levels[k + 1][c * self.h..(c + 1) * self.h];
                let mut total = Rational::zero();
                for child in children {
                    if e.weight_of(&child.belief).is_zero() {
                        return Err(Error::InvalidPolicy(format!(
                            "level {k} node {c}: child belief outside support"
                        )));
                    }
                    total += &child.mass;
                }
                if total != node.mass {
                    return Err(Error::InvalidPolicy(format!(
                        "level {k} node {c}: children mass {total} != {}",
                        node.mass
                    )));
                }
                for a in e.atoms() {
                    let got = children
                        .iter()
                        .filter(|ch| ch.belief == a.belief)
                        .fold(Rational::zero(), |s, ch| s + &ch.mass);
                    if got != &node.mass * &a.weight {
                        return Err(Error::InvalidPolicy(format!(
                            "level {k} node {c}: outcome {} has mass {got}",
                            a.belief
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Histories of the positive-mass leaves with their mass.
    pub fn collapse(&self) -> Vec<(History, Rational)> {
        let n = self.depth();
        let mut out = Vec::new();
        for (c, leaf) in self.levels[n].iter().enumerate() {
            if leaf.mass.is_zero() {
                continue;
            }
            let mut path = vec![c];
            for _ in 0..n {
                let last = *path.last().expect("nonempty");
                path.push(last / self.h);
            }
            path.reverse();
            let mut h = History::start(self.levels[0][0].belief.clone());
            for k in 0..n {
                let e = self.levels[k][path[k]].experiment.clone().expect("inner node");
                h.experiments.push(e);
                h.beliefs.push(self.levels[k + 1][path[k + 1]].belief.clone());
            }
            out.push((h, leaf.mass.clone()));
        }
        out
    }
}

/// Monte Carlo summary. Runs that hit the step cap count as never stopping
/// and contribute utility 0.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport {
    pub runs: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    /// 95% normal half-width, `1.96 * std_error`.
    pub ci_half_width: f64,
    /// Number of runs stopping after each step count.
    pub histogram: BTreeMap<usize, u64>,
    pub unterminated: u64,
}

/// Caps the global rayon pool at `PERSUASION_LAB_THREADS` workers. Returns
/// the cap, or `None` when unset or when the pool was already built.
pub fn configure_threads() -> Option<usize> {
    let t = std::env::var(THREADS_ENV)
        .ok()?
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .ok()
        .map(|_| t)
}

fn run_parallel<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok());
    match threads.filter(|&t| t > 0) {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn sample(e: &Experiment, u: f64) -> (usize, &Belief) {
    let mut acc = 0.0;
    for (k, a) in e.atoms().iter().enumerate() {
        acc += rational_to_f64(&a.weight);
        if u < acc {
            return (k, &a.belief);
        }
    }
    let k = e.len() - 1;
    (k, &e.atoms()[k].belief)
}

/// Simulates `runs` plays. Run `i` draws from a ChaCha8 stream keyed by
/// `(seed, i)`, so results do not depend on scheduling.
pub fn simulate(
    strategy: Strategy<'_>,
    inst: &Instance,
    runs: u64,
    seed: u64,
    step_cap: usize,
) -> Result<SimulationReport> {
    if runs == 0 {
        return Err(Error::Precondition("runs must be at least 1".into()));
    }
    let one_run = |i: u64| -> Result<(Option<usize>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        match strategy {
            Strategy::Tree(tree) => {
                let mut node = &tree.root;
                let mut step = 0;
                while !node.terminates() {
                    let e = node.choice.as_ref().expect("non-terminating nodes choose");
                    let (k, _) = sample(e, rng.gen());
                    node = &node.children[k];
                    step += 1;
                }
                Ok((Some(step), inst.eval_v(&node.belief)?.to_f64()))
            }
            Strategy::Markov { prior, rule } => {
                let mut p = prior.clone();
                for step in 0..=step_cap {
                    match rule.choose(&p).filter(|e| !e.is_trivial()) {
                        None => return Ok((Some(step), inst.eval_v(&p)?.to_f64())),
                        Some(e) => p = sample(&e, rng.gen()).1.clone(),
                    }
                }
                Ok((None, 0.0))
            }
        }
    };
    let outcomes: Vec<(Option<usize>, f64)> =
        run_parallel(|| (0..runs).into_par_iter().map(one_run).collect::<Result<Vec<_>>>())?;
    let n = runs as f64;
    let mean = outcomes.iter().map(|o| o.1).sum::<f64>() / n;
    let var = if runs > 1 {
        outcomes.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_error = (var / n).sqrt();
    let mut histogram = BTreeMap::new();
    let mut unterminated = 0;
    for (steps, _) in &outcomes {
        match steps {
            Some(s) => *histogram.entry(*s).or_insert(0) += 1,
            None => unterminated += 1,
        }
    }
    Ok(SimulationReport {
        runs,
        seed,
        mean,
        std_error,
        ci_half_width: 1.96 * std_error,
        histogram,
        unterminated,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovVerdict {
    pub passed: bool,
    /// Every reachable stopping belief has `v_inf = v`.
    pub stops_where_value_is_realized: bool,
    /// Every reachable experiment preserves `v_inf` in expectation.
    pub experiments_exact: bool,
    /// Play stops in `Z` with probability one.
    pub absorbs: bool,
    pub violations: Vec<String>,
}

/// Checks the three sufficient conditions for a Markov policy to be optimal,
/// on the part of the policy reachable from its prior.
pub fn verify_markov_optimal(
    policy: &MarkovPolicy,
    inst: &Instance,
    graph: &BeliefGraph,
    limit: &LimitValues,
    value_eps: f64,
) -> Result<MarkovVerdict> {
    let mut violations = Vec::new();
    let v_inf = |p: &Belief| limit.of(graph, p).cloned();
    let reach = policy.reachable();
    let mut stops_ok = true;
    let mut exact_ok = true;
    for p in &reach {
        if policy.z.contains(p) {
            match v_inf(p) {
                Some(w) => {
                    let v = inst.eval_v(p)?;
                    if !w.approx_eq(&v, value_eps) {
                        stops_ok = false;
                        violations.push(format!("stops at {p} where v = {v} but v_inf = {w}"));
                    }
                }
                None => {
                    stops_ok = false;
                    violations.push(format!("no v_inf for stopping belief {p}"));
                }
            }
        } else if let Some(e) = policy.rho.get(p) {
            let here = v_inf(p);
            let outcomes: Option<Vec<Value>> = e.support().into_iter().map(&v_inf).collect();
            match (here, outcomes) {
                (Some(here), Some(outs)) => {
                    let spread = Value::weighted_sum(e.atoms().iter().map(|a| &a.weight).zip(&outs));
                    if !spread.approx_eq(&here, value_eps) {
                        exact_ok = false;
                        violations.push(format!(
                            "experiment {e} at {p} is not exact: v_inf = {here}, spread gives {spread}"
                        ));
                    }
                }
                _ => {
                    exact_ok = false;
                    violations.push(format!("missing v_inf around {p}"));
                }
            }
        }
    }
    let absorbs = policy.absorbs_almost_surely();
    if !absorbs {
        violations.push("some reachable belief cannot reach Z".into());
    }
    Ok(MarkovVerdict {
        passed: stops_ok && exact_ok && absorbs,
        stops_where_value_is_realized: stops_ok,
        experiments_exact: exact_ok,
        absorbs,
        violations,
    })
}

/// For each threshold, the first step at which the mass that has stopped
/// (inside `within`, when given) reaches it; `None` past `depth_cap`.
pub fn first_steps_reaching(
    prior: &Belief,
    rule: &dyn PolicyRule,
    within: Option<&BTreeSet<Belief>>,
    thresholds: &[Rational],
    depth_cap: usize,
) -> Vec<Option<usize>> {
    let mut flow = MarkovFlow::new(prior, rule);
    let mut out: Vec<Option<usize>> = vec![None; thresholds.len()];
    loop {
        let stopped = flow
            .stopped
            .iter()
            .filter(|(p, _)| within.is_none_or(|set| set.contains(*p)))
            .fold(Rational::zero(), |a, (_, m)| a + m);
        for (slot, th) in out.iter_mut().zip(thresholds) {
            if slot.is_none() && stopped >= *th {
                *slot = Some(flow.steps);
            }
        }
        if out.iter().all(Option::is_some) || flow.steps >= depth_cap || flow.active.is_empty() {
            return out;
        }
        flow.step();
    }
}

/// `n_eps = min { n : Pr[stopped by n] >= 1 - eps }` for each `eps`, or
/// `None` when the policy does not stop with probability one.
pub fn absorption_witness(policy: &MarkovPolicy, eps: &[Rational], depth_cap: usize) -> Option<Vec<(Rational, usize)>> {
    if !policy.absorbs_almost_surely() {
        return None;
    }
    let thresholds: Vec<Rational> = eps.iter().map(|e| Rational::one() - e).collect();
    let steps = first_steps_reaching(&policy.mu, policy, None, &thresholds, depth_cap);
    eps.iter().cloned().zip(steps).map(|(e, n)| n.map(|n| (e, n))).collect()
}
