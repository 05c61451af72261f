//! Python bindings for `persuasion_core`. Every call takes an instance as a
//! shipped corpus name, a JSON document, or a file path, and returns JSON
//! text for the caller to decode.

use std::path::Path;

use persuasion_core::engine::{simulate as run_simulation, RuleFn, Strategy};
use persuasion_core::graph::build_graph;
use persuasion_core::solver::Tolerances;
use persuasion_core::structure::{concave_closure, optimal_exists, DEFAULT_GRID};
use persuasion_core::{corpus, load_instance, regression, Belief, GraphLimits, Instance, MarkovPolicy};
use persuasion_core::{value_limit, value_recursion};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::{json, Value as Json};

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn resolve(instance: &str) -> PyResult<Instance> {
    let text = instance.trim();
    if corpus::source(text.trim_end_matches(".json")).is_some() {
        corpus::load(text, None).map_err(py_err)
    } else if text.starts_with('{') {
        load_instance(text.as_bytes()).map_err(py_err)
    } else {
        let bytes = std::fs::read(text).map_err(py_err)?;
        load_instance(&bytes).map_err(py_err)
    }
}

fn dump(doc: &Json) -> PyResult<String> {
    serde_json::to_string(doc).map_err(py_err)
}

/// Names of the shipped corpus instances.
#[pyfunction]
fn corpus_names() -> Vec<String> {
    corpus::names().into_iter().map(String::from).collect()
}

/// The instance in canonical JSON form.
#[pyfunction]
fn load(instance: &str) -> PyResult<String> {
    dump(&resolve(instance)?.to_json())
}

/// `v_0..v_steps` and `v_inf` at the prior.
#[pyfunction]
#[pyo3(signature = (instance, steps = 10))]
fn solve(instance: &str, steps: usize) -> PyResult<String> {
    let inst = resolve(instance)?;
    let graph = build_graph(&inst, GraphLimits::default());
    let values = value_recursion(&graph, &inst, steps).map_err(py_err)?;
    let limit = value_limit(&graph, &inst, &Tolerances::default()).map_err(py_err)?;
    dump(&json!({
        "nodes": graph.len(),
        "truncated": graph.truncated,
        "v": (0..=steps).map(|n| values.at(n, 0)).collect::<Vec<_>>(),
        "v_inf": limit.at(0),
        "v_inf_status": limit.status.label(),
    }))
}

/// The concave closure of the utility at the prior, with a maximizing spread.
#[pyfunction]
#[pyo3(signature = (instance, grid = DEFAULT_GRID))]
fn closure(instance: &str, grid: usize) -> PyResult<String> {
    let inst = resolve(instance)?;
    let result = concave_closure(&inst, &inst.prior, grid).map_err(py_err)?;
    dump(&serde_json::to_value(&result).map_err(py_err)?)
}

/// Existence report; `policy` is present only when an optimal policy exists.
#[pyfunction]
fn policy(instance: &str) -> PyResult<String> {
    let inst = resolve(instance)?;
    let report = optimal_exists(&inst, GraphLimits::default(), &Tolerances::default()).map_err(py_err)?;
    let policy = report
        .policy
        .as_ref()
        .filter(|_| report.status.exists())
        .map(MarkovPolicy::to_json);
    dump(&json!({
        "status": report.status.label(),
        "v_inf": report.v_inf,
        "obstruction": report.obstruction,
        "policy": policy,
    }))
}

/// Monte Carlo estimate of the sender's payoff under a policy document, or
/// under the limit-greedy rule when none is given.
#[pyfunction]
#[pyo3(signature = (instance, seed = 0, runs = 10_000, steps = 64, policy = None))]
fn simulate(instance: &str, seed: u64, runs: u64, steps: usize, policy: Option<&str>) -> PyResult<String> {
    let inst = resolve(instance)?;
    let report = match policy {
        Some(text) => {
            let doc: Json = serde_json::from_str(text).map_err(py_err)?;
            let p = MarkovPolicy::from_json(&doc, &inst.prior).map_err(py_err)?;
            p.check_feasible(&inst).map_err(py_err)?;
            run_simulation(Strategy::policy(&p), &inst, runs, seed, steps).map_err(py_err)?
        }
        None => {
            let graph = build_graph(&inst, GraphLimits::default());
            let limit = value_limit(&graph, &inst, &Tolerances::default()).map_err(py_err)?;
            let rule = RuleFn(|p: &Belief| {
                let u = graph.index_of(p)?;
                limit.choice[u].map(|i| graph.edges[u][i].experiment.clone())
            });
            let strategy = Strategy::Markov {
                prior: &inst.prior,
                rule: &rule,
            };
            run_simulation(strategy, &inst, runs, seed, steps).map_err(py_err)?
        }
    };
    dump(&serde_json::to_value(&report).map_err(py_err)?)
}

/// Runs the regression criteria against the shipped corpus or a directory.
#[pyfunction]
#[pyo3(signature = (corpus_dir = None, cases = 1000))]
fn run_criteria(py: Python<'_>, corpus_dir: Option<&str>, cases: usize) -> PyResult<String> {
    let outcomes = py.detach(|| regression::run_criteria(corpus_dir.map(Path::new), cases));
    dump(&serde_json::to_value(&outcomes).map_err(py_err)?)
}

#[pymodule]
fn persuasion_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(corpus_names, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(closure, m)?)?;
    m.add_function(wrap_pyfunction!(policy, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_criteria, m)?)?;
    Ok(())
}
