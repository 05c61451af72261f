//! The finite graph of beliefs reachable from the prior under `F`.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::belief::{Belief, Experiment, Rational};
use crate::instance::Instance;

pub const DEFAULT_DEPTH_LIMIT: usize = 64;
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GraphLimits {
    pub depth_limit: usize,
    pub node_limit: usize,
}

impl Default for GraphLimits {
    fn default() -> Self {
        GraphLimits {
            depth_limit: DEFAULT_DEPTH_LIMIT,
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

/// A nontrivial feasible experiment, with atoms resolved to node ids.
#[derive(Clone, Debug)]
pub struct Edge {
    pub experiment: Experiment,
    pub targets: Vec<usize>,
}

impl Edge {
    pub fn weights(&self) -> impl Iterator<Item = &Rational> {
        self.experiment.atoms().iter().map(|a| &a.weight)
    }

    /// `(weight, target)` pairs in atom order.
    pub fn branches(&self) -> impl Iterator<Item = (&Rational, usize)> {
        self.weights().zip(self.targets.iter().copied())
    }
}

/// Node 0 is the first seed (normally the prior). The trivial experiment is
/// feasible at every node and is not stored.
#[derive(Clone, Debug)]
pub struct BeliefGraph {
    pub nodes: Vec<Belief>,
    pub depth: Vec<usize>,
    pub edges: Vec<Vec<Edge>>,
    /// False for nodes whose feasible set was never queried.
    pub expanded: Vec<bool>,
    /// A limit stopped the closure early; values are then one-sided.
    pub truncated: bool,
    /// Some experiments come from generators, so every value is relative to
    /// the generator resolution.
    pub resolution_relative: bool,
    index: HashMap<Belief, usize>,
}

impl BeliefGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, p: &Belief) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Whether every nontrivial edge leads strictly away in a topological
    /// order, i.e. repeated play must stop.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indegree = vec![0usize; n];
        for edges in &self.edges {
            for e in edges {
                for &t in &e.targets {
                    indegree[t] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for e in &self.edges[u] {
                for &t in &e.targets {
                    indegree[t] -= 1;
                    if indegree[t] == 0 {
                        queue.push_back(t);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Nodes that can reach some node of `targets` (targets included).
    pub fn can_reach(&self, targets: &[bool]) -> Vec<bool> {
        let n = self.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, edges) in self.edges.iter().enumerate() {
            for e in edges {
                for &t in &e.targets {
                    preds[t].push(u);
                }
            }
        }
        let mut seen = targets.to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| seen[i]).collect();
        while let Some(u) = queue.pop_front() {
            for &p in &preds[u] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }
}

/// Breadth-first closure of the prior under the supports of `feasible_at`.
pub fn build_graph(inst: &Instance, limits: GraphLimits) -> BeliefGraph {
    build_graph_from(inst, std::slice::from_ref(&inst.prior), limits)
}

/// Closure of several seeds; node ids follow seed order then discovery.
pub fn build_graph_from(inst: &Instance, seeds: &[Belief], limits: GraphLimits) -> BeliefGraph {
    let mut g = BeliefGraph {
        nodes: Vec::new(),
        depth: Vec::new(),
        edges: Vec::new(),
        expanded: Vec::new(),
        truncated: false,
        resolution_relative: inst.has_generators(),
        index: HashMap::new(),
    };
    let mut queue = VecDeque::new();
    for s in seeds {
        if g.index.contains_key(s) {
            continue;
        }
        if g.nodes.len() >= limits.node_limit.max(1) {
            g.truncated = true;
            break;
        }
        let id = add_node(&mut g, s.clone(), 0);
        queue.push_back(id);
    }
    while let Some(u) = queue.pop_front() {
        let feasible: Vec<Experiment> = inst
            .feasible_at(&g.nodes[u])
            .into_iter()
            .filter(|e| !e.is_trivial())
            .collect();
        if g.depth[u] >= limits.depth_limit {
            if !feasible.is_empty() {
                g.truncated = true;
            }
            continue;
        }
        let mut edges = Vec::with_capacity(feasible.len());
        let mut complete = true;
        for e in feasible {
            let mut targets = Vec::with_capacity(e.len());
            for atom in e.atoms() {
                match g.index.get(&atom.belief) {
                    Some(&t) => targets.push(t),
                    None if g.nodes.len() < limits.node_limit => {
                        let next_depth = g.depth[u] + 1;
                        let t = add_node(&mut g, atom.belief.clone(), next_depth);
                        queue.push_back(t);
                        targets.push(t);
                    }
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if targets.len() == e.len() {
                edges.push(Edge { experiment: e, targets });
            }
        }
        if !complete {
            g.truncated = true;
        }
        g.edges[u] = edges;
        g.expanded[u] = true;
    }
    g
}

fn add_node(g: &mut BeliefGraph, p: Belief, depth: usize) -> usize {
    let id = g.nodes.len();
    g.index.insert(p.clone(), id);
    g.nodes.push(p);
    g.depth.push(depth);
    g.edges.push(Vec::new());
    g.expanded.push(false);
    id
}

/// Seeds covering every experiment the instance can name up front: the prior,
/// the means of listed experiments, and the means of enumerable generators.
pub fn universe_seeds(inst: &Instance) -> Vec<Belief> {
    let mut seeds = vec![inst.prior.clone()];
    let mut push = |p: Belief| {
        if !seeds.contains(&p) {
            seeds.push(p);
        }
    };
    for e in &inst.experiments {
        push(e.expectation());
    }
    for g in inst
        .generators
        .iter()
        .enumerate()
        .filter_map(|(i, _)| inst.compiled_generator(i))
    {
        if let Some(all) = g.enumerable() {
            for e in all {
                push(e.expectation());
            }
        }
    }
    seeds
}
