//! Graph and value-table export as JSON, Graphviz DOT or CSV.

use std::fmt::Write;

use persuasion_core::graph::build_graph;
use persuasion_core::solver::{LimitValues, Tolerances};
use persuasion_core::{value_limit, value_recursion, Belief, BeliefGraph, GraphLimits, Instance, ValueTable};
use serde_json::json;

use crate::{output, Failure, Format};

/// Barycentric coordinates on the triangle with vertices (0, 0), (1, 0) and
/// (1/2, sqrt(3)/2).
pub fn planar(p: &Belief) -> Option<(f64, f64)> {
    let x = p.to_f64();
    (x.len() == 3).then(|| (x[1] + 0.5 * x[2], x[2] * 3f64.sqrt() / 2.0))
}

struct Tables {
    graph: BeliefGraph,
    values: ValueTable,
    limit: LimitValues,
}

pub fn render(
    inst: &Instance,
    limits: GraphLimits,
    tol: &Tolerances,
    steps: usize,
    format: Format,
) -> Result<String, Failure> {
    let graph = build_graph(inst, limits);
    let values = value_recursion(&graph, inst, steps)?;
    let limit = value_limit(&graph, inst, tol)?;
    let t = Tables { graph, values, limit };
    Ok(match format {
        Format::Json => json_doc(&t, limits, tol),
        Format::Dot => dot(&t),
        Format::Csv => csv(&t),
    })
}

fn json_doc(t: &Tables, limits: GraphLimits, tol: &Tolerances) -> String {
    let g = &t.graph;
    let nodes: Vec<_> = (0..g.len())
        .map(|u| {
            let mut node = json!({
                "id": u,
                "belief": g.nodes[u],
                "depth": g.depth[u],
                "values": (0..=t.values.steps()).map(|n| t.values.at(n, u)).collect::<Vec<_>>(),
                "argmax": (1..=t.values.steps()).map(|n| t.values.argmax[n][u]).collect::<Vec<_>>(),
                "v_inf": t.limit.at(u),
                "limit_choice": t.limit.choice[u],
            });
            if let Some((x, y)) = planar(&g.nodes[u]) {
                node["xy"] = json!([x, y]);
            }
            node
        })
        .collect();
    let edges: Vec<_> = (0..g.len())
        .flat_map(|u| {
            g.edges[u].iter().enumerate().map(move |(i, e)| {
                json!({
                    "from": u,
                    "index": i,
                    "experiment": e.experiment,
                    "targets": e.targets,
                })
            })
        })
        .collect();
    output::pretty(&json!({
        "settings": {"limits": limits, "tolerances": tol},
        "steps": t.values.steps(),
        "truncated": g.truncated,
        "resolution_relative": g.resolution_relative,
        "v_inf_status": t.limit.status.label(),
        "nodes": nodes,
        "edges": edges,
    }))
}

fn dot(t: &Tables) -> String {
    let g = &t.graph;
    let n = t.values.steps();
    let mut s = String::from("digraph beliefs {\n  node [shape=box];\n");
    for u in 0..g.len() {
        let _ = write!(
            s,
            "  n{u} [label=\"{}\\nv_{n} = {}\\nv_inf = {}\"",
            g.nodes[u],
            t.values.at(n, u),
            t.limit.at(u)
        );
        if let Some((x, y)) = planar(&g.nodes[u]) {
            let _ = write!(s, ", pos=\"{:.4},{:.4}!\"", 4.0 * x, 4.0 * y);
        }
        s.push_str("];\n");
    }
    for u in 0..g.len() {
        for (i, e) in g.edges[u].iter().enumerate() {
            let chosen = t.limit.choice[u] == Some(i);
            for (w, v) in e.branches() {
                let _ = writeln!(
                    s,
                    "  n{u} -> n{v} [label=\"e{i}: {w}\"{}];",
                    if chosen { ", style=bold" } else { "" }
                );
            }
        }
    }
    s.push_str("}\n");
    s
}

fn csv(t: &Tables) -> String {
    let g = &t.graph;
    let n = t.values.steps();
    let dim = g.nodes.first().map_or(0, Belief::dim);
    let mut s = String::from("id,depth");
    for k in 0..dim {
        let _ = write!(s, ",p{k}");
    }
    s.push_str(",x,y");
    for k in 0..=n {
        let _ = write!(s, ",v{k}");
    }
    s.push_str(",v_inf\n");
    for u in 0..g.len() {
        let _ = write!(s, "{u},{}", g.depth[u]);
        for c in g.nodes[u].coords() {
            let _ = write!(s, ",{c}");
        }
        match planar(&g.nodes[u]) {
            Some((x, y)) => {
                let _ = write!(s, ",{x},{y}");
            }
            None => s.push_str(",,"),
        }
        for k in 0..=n {
            let _ = write!(s, ",{}", t.values.at(k, u));
        }
        let _ = writeln!(s, ",{}", t.limit.at(u));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use persuasion_core::rat;

    #[test]
    fn planar_vertices() {
        let apex = Belief::point_mass(3, 2);
        let (x, y) = planar(&apex).unwrap();
        assert!((x - 0.5).abs() < 1e-12 && (y - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert_eq!(planar(&Belief::point_mass(3, 1)), Some((1.0, 0.0)));
        assert_eq!(planar(&Belief::binary(rat(1, 2)).unwrap()), None);
    }
}
