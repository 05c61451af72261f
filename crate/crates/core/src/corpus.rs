//! The shipped example instances.

use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, TRIANGLE_CENTER_SPREAD, TRIANGLE_LADDER};
use crate::instance::{load_instance, Instance};

pub const FOUR_EXPERIMENTS: &str = "four_experiments";
pub const ENTROPY_HALVING: &str = "entropy_halving";
pub const TRIANGLE_F1: &str = "triangle_f1";
pub const TRIANGLE_F2: &str = "triangle_f2";

const FILES: [(&str, &str); 4] = [
    (FOUR_EXPERIMENTS, include_str!("../corpus/four_experiments.json")),
    (ENTROPY_HALVING, include_str!("../corpus/entropy_halving.json")),
    (TRIANGLE_F1, include_str!("../corpus/triangle_f1.json")),
    (TRIANGLE_F2, include_str!("../corpus/triangle_f2.json")),
];

pub fn names() -> Vec<&'static str> {
    FILES.iter().map(|(name, _)| *name).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Loads a shipped instance, or the same-named file from `dir` when given.
pub fn load(name: &str, dir: Option<&Path>) -> Result<Instance> {
    let name = name.trim_end_matches(".json");
    match dir {
        Some(dir) => {
            let bytes = std::fs::read(dir.join(format!("{name}.json")))?;
            load_instance(&bytes)
        }
        None => {
            let text = source(name).ok_or_else(|| Error::InvalidDocument {
                path: name.to_string(),
                message: format!("no corpus instance named {name:?}"),
            })?;
            load_instance(text.as_bytes())
        }
    }
}

fn shipped(name: &str) -> Instance {
    load(name, None).expect("shipped corpus instance is valid")
}

pub fn four_experiments() -> Instance {
    shipped(FOUR_EXPERIMENTS)
}

pub fn entropy_halving() -> Instance {
    shipped(ENTROPY_HALVING)
}

pub fn triangle_f1() -> Instance {
    shipped(TRIANGLE_F1)
}

pub fn triangle_f2() -> Instance {
    shipped(TRIANGLE_F2)
}

/// The second triangle instance restricted to center spreads `0..=prefix`,
/// with the ladder deep enough to reach every target.
pub fn triangle_f2_prefix(prefix: u32) -> Instance {
    let base = triangle_f2();
    let mut ladder = GeneratorSpec::new(TRIANGLE_LADDER, (2 * prefix).max(1));
    ladder.params.insert("refine_step".into(), json!(2));
    let mut spread = GeneratorSpec::new(TRIANGLE_CENTER_SPREAD, prefix);
    spread.params.insert("w".into(), json!(["5/12", "1/6", "5/12"]));
    spread.params.insert("first".into(), json!(0));
    let mut inst = Instance::new(base.prior.clone(), base.utility.clone(), vec![], vec![ladder, spread])
        .expect("prefix instance is valid");
    inst.states = base.states.clone();
    inst.h = base.h;
    inst.v_bounds = base.v_bounds;
    inst
}

pub fn all() -> Vec<(&'static str, Instance)> {
    names().into_iter().map(|n| (n, shipped(n))).collect()
}
