//! Fixtures shared by the benchmarks.

use recurtc::exec::random_inputs;
use recurtc::lower::lower;
use recurtc::models::bundled;
use recurtc::structure::{grid, perfect, random_tree, sequence, GenParams};
use recurtc::{DataStructure, Inputs, Lowered, RaGraph, RaSchedule};

pub struct Fixture {
    pub graph: RaGraph,
    pub schedule: RaSchedule,
    pub lowered: Lowered,
    pub ds: DataStructure,
    pub inputs: Inputs,
}

/// `perfect8`, `grid10`, `seq100` or `random63`.
pub fn structure(name: &str) -> DataStructure {
    let p = GenParams { vocab: 16, seed: 1 };
    match name {
        "perfect8" => perfect(8, p).1,
        "grid10" => grid(10, 10, p).1,
        "seq100" => sequence(100, p).1,
        "random63" => random_tree(63, 2, p).1,
        _ => panic!("unknown structure `{name}`"),
    }
}

pub fn fixture(model: &str, h: i64, structure_name: &str) -> Fixture {
    let (graph, schedule) = bundled(model, &[("H", h)]).expect("bundled model");
    let lowered = lower(&graph, &schedule).expect("lowers");
    let ds = structure(structure_name);
    let inputs = random_inputs(&graph, &ds, 7);
    Fixture {
        graph,
        schedule,
        lowered,
        ds,
        inputs,
    }
}
