//! One PASS/FAIL line per acceptance criterion.

mod common;

use rayon::prelude::*;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use recurtc::exec::{check_structure, random_inputs};
use recurtc::ilir::{bound_checks, dense_cache, print_program, IndexExpr, Stmt};
use recurtc::linearize::linearize_plan;
use recurtc::lower::{lower, lower_with, LowerOptions, Lowered};
use recurtc::models::{bundled, names};
use recurtc::passes::{apply_pass, Pass};
use recurtc::pipeline::{apply_applicable, check_lowered, pass_combinations, run_lowered, schedule_combinations};
use recurtc::ra::{schedule_set, Directive};
use recurtc::structure::{grid, perfect, random_full_binary, random_tree, sequence, skewed, GenParams};
use recurtc::tensor::{sigmoid_approx, tanh_approx};
use recurtc::{DataStructure, ExecMode, ExecOptions, NonlinMode, RaGraph, RaSchedule};

const ORACLE_TOL: f64 = 1e-12;
const SUITE_BUDGET: Duration = Duration::from_secs(300);
const FUZZ_STRUCTURES: u64 = 1000;
const RATIONAL_POINTWISE_TOL: f64 = 1e-3;
const RATIONAL_PIPELINE_TOL: f64 = 5e-3;
const NONLIN_GRID_STEP: f64 = 1e-4;

/// Criteria that cannot hold as stated, with the reason.
const UNATTAINABLE: &[(u32, &str)] = &[(
    4,
    "a 10x10 grid has 19 anti-diagonals including the single sink leaf, \
     so 1 leaf batch + 18 wavefronts = 19 batches, not 20",
)];

type Outcome = Result<String, String>;

fn p(seed: u64) -> GenParams {
    GenParams { vocab: 16, seed }
}

fn debug() -> ExecOptions {
    ExecOptions::default().with_mode(ExecMode::Debug)
}

fn set(g: &RaGraph, s: &RaSchedule, ds: &[Directive]) -> RaSchedule {
    ds.iter().fold(s.clone(), |s, d| schedule_set(g, &s, d.clone()).unwrap())
}

fn ensure(c: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if c {
        Ok(())
    } else {
        Err(msg())
    }
}

fn suite_structures(g: &RaGraph) -> Vec<DataStructure> {
    let mut v: Vec<DataStructure> = (4..=8).map(|k| perfect(k, p(k as u64)).1).collect();
    for seed in 0..50 {
        v.push(if g.full_arity {
            random_full_binary(63, p(100 + seed)).1
        } else {
            random_tree(63, g.decl.max_children, p(100 + seed)).1
        });
    }
    for (r, c) in [(1, 1), (2, 2), (3, 5), (4, 4), (6, 3), (7, 7), (8, 8), (10, 4), (10, 10)] {
        v.push(grid(r, c, p((r * 16 + c) as u64)).1);
    }
    for len in [1, 2, 5, 17, 32, 64, 100] {
        v.push(sequence(len, p(200 + len as u64)).1);
    }
    v.retain(|ds| check_structure(g, ds).is_ok());
    v
}

fn c1_oracle_suite() -> Outcome {
    let t0 = Instant::now();
    let mut runs = 0usize;
    let mut worst = 0.0f64;
    for n in names() {
        let (g, s) = bundled(n, &[]).unwrap();
        let structures = suite_structures(&g);
        for (label, s) in schedule_combinations(&g, &s) {
            let l = lower_with(&g, &s, &LowerOptions::default()).map_err(|e| format!("{n} {label}: {e}"))?;
            for passes in pass_combinations() {
                let (t, used) = apply_applicable(&l, &passes).map_err(|e| format!("{n} {label}: {e}"))?;
                if !passes.is_empty() && used.is_empty() {
                    continue;
                }
                let r: Result<Vec<f64>, String> = structures
                    .par_iter()
                    .enumerate()
                    .map(|(k, ds)| {
                        let inputs = random_inputs(&g, ds, k as u64);
                        let c = check_lowered(&t, &g, ds, &inputs, &debug(), ORACLE_TOL)
                            .map_err(|e| format!("{n} {label} {used:?} structure {k}: {e}"))?;
                        ensure(c.report.pass, || format!("{n} {label} {used:?} structure {k}: {:?}", c.report))?;
                        Ok(c.report.max_abs_diff)
                    })
                    .collect();
                let r = r?;
                runs += r.len();
                worst = r.into_iter().fold(worst, f64::max);
            }
        }
    }
    let took = t0.elapsed();
    ensure(took < SUITE_BUDGET, || format!("{runs} runs took {took:?}"))?;
    Ok(format!("{runs} runs, max |diff| {worst:.1e}, {:.1}s", took.as_secs_f64()))
}

fn c2_golden() -> Outcome {
    let (g, s) = bundled("treernn", &[("H", 256)]).unwrap();
    let text = print_program(&lower(&g, &s).unwrap().program);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/treernn_h256.ilir");
    let want = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    ensure(text == want, || "dump differs from the golden file".into())?;
    Ok("exact match".into())
}

fn c3_linearizer_fuzz() -> Outcome {
    for seed in 0..FUZZ_STRUCTURES {
        let (decl, ds) = common::fuzz_structure(seed);
        common::check_structure(&decl, &ds).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("{FUZZ_STRUCTURES} structures"))
}

fn c4_batch_counts() -> Outcome {
    let plan = common::plans()[0];
    let (d, ds) = perfect(8, p(0));
    let tree = linearize_plan(&d, &ds, plan).unwrap();
    let tree_batches = tree.all_batches().len();
    let (d, ds) = grid(10, 10, p(0));
    let dag = linearize_plan(&d, &ds, plan).unwrap();
    let dag_batches = dag.all_batches().len();
    let detail = format!(
        "255-node tree {tree_batches} (1 leaf + {}), 10x10 grid {dag_batches} (1 leaf + {})",
        tree.internal_batches.len(),
        dag.internal_batches.len()
    );
    ensure(tree_batches == 8 && dag_batches == 20, || format!("{detail}; expected 8 and 20"))?;
    Ok(detail)
}

fn c5_barriers() -> Outcome {
    let (g, s) = bundled("treernn", &[("H", 8)]).unwrap();
    let (_, ds) = perfect(8, p(1));
    let inputs = random_inputs(&g, &ds, 1);
    let l = lower(&g, &s).unwrap();
    let (cons, _) = apply_pass(&l, Pass::ConservativeBarriers).unwrap();
    let mut waits = Vec::new();
    for x in [&l, &cons] {
        for mode in [ExecMode::Debug, ExecMode::BatchParallel] {
            let c = check_lowered(x, &g, &ds, &inputs, &ExecOptions::default().with_mode(mode), ORACLE_TOL)
                .map_err(|e| e.to_string())?;
            ensure(c.report.pass, || format!("{:?}", c.report))?;
            waits.push(c.run.stats.barrier_waits);
        }
    }
    ensure(waits[0] == 8 && waits[1] == 8, || format!("minimal waits {waits:?}"))?;
    ensure(waits[2] > 8, || format!("conservative waits {}", waits[2]))?;
    let Some(Stmt::Loop(l3)) = l.program.body.iter().filter(|s| matches!(s, Stmt::Loop(_))).nth(1) else {
        return Err("no internal nest".into());
    };
    let Some(Stmt::Loop(l4)) = l3.body.iter().find(|s| matches!(s, Stmt::Loop(_))) else {
        return Err("no batch loop".into());
    };
    ensure(l3.body[0] == Stmt::Barrier, || "carrying loop lacks a head barrier".into())?;
    ensure(!l4.body.contains(&Stmt::Barrier), || "barrier inside the batch loop".into())?;
    Ok(format!("minimal {} waits, conservative {}", waits[0], waits[2]))
}

/// Cache the node tensor's left and right rows in the unspecialized
/// batched nest; (cache elements, node-indexed elements).
fn cache_footprint(model: &str, ds: &DataStructure) -> Result<(i64, i64), String> {
    let (g, s) = bundled(model, &[("H", 8)]).unwrap();
    let s = set(&g, &s, &[Directive::Unspecialize]);
    let l = lower(&g, &s).unwrap();
    let out = l.program.output.clone();
    let loop_label = l
        .program
        .loops()
        .into_iter()
        .find(|m| m.dim == "d_batch")
        .map(|m| m.label.clone())
        .ok_or("no batch loop")?;
    let node = || vec![IndexExpr::var("node")];
    let acc = [IndexExpr::load("left", node()), IndexExpr::load("right", node())];
    let (q, r) = dense_cache(&l.program, &out, &loop_label, &acc).map_err(|e| e.to_string())?;
    let cached = Lowered { program: q, ..l.clone() };
    let inputs = random_inputs(&g, ds, 5);
    let c = check_lowered(&cached, &g, ds, &inputs, &debug(), ORACLE_TOL).map_err(|e| e.to_string())?;
    ensure(c.report.pass, || format!("{:?}", c.report))?;
    let params = c.run.lin.params();
    let ext = |t: &str| -> i64 {
        let d = cached.program.tensor(t).unwrap();
        d.extents.iter().map(|e| e.eval(&|v| params.get(v).copied(), &|_, _| None).unwrap()).product()
    };
    let (cache, node_rows) = (ext(&r.cache), ext(&out));
    let bytes = c.run.stats.scratch_bytes_peak as i64;
    ensure(bytes == cache * 8, || format!("scratch bytes {bytes} for {cache} f64 elements"))?;
    Ok((cache, node_rows))
}

fn c6_dense_cache() -> Outcome {
    let (_, tree) = perfect(8, p(2));
    let (a, b) = cache_footprint("treernn", &tree)?;
    let (_, sk) = skewed(p(3));
    let (c, d) = cache_footprint("dagrnn", &sk)?;
    let detail = format!("perfect {a} vs {b}; skewed {c} vs {d}");
    ensure((a, b, c, d) == (2048, 2040, 64, 504), || detail.clone())?;
    Ok(detail)
}

/// Scalar ops of nests over the leaf batch.
fn leaf_ops(l: &Lowered, ops: &[u64]) -> u64 {
    let nests = l.program.body.iter().filter_map(|s| match s {
        Stmt::Loop(m) => Some(m),
        _ => None,
    });
    nests
        .zip(ops)
        .filter(|(m, _)| m.bound == IndexExpr::var("leaf_batch_size"))
        .map(|(_, &o)| o)
        .sum()
}

fn c7_hoisting() -> Outcome {
    let h = 4u64;
    let (g, s) = bundled("treernn_zero", &[("H", h as i64)]).unwrap();
    let (_, ds) = random_full_binary(63, p(4));
    let inputs = random_inputs(&g, &ds, 4);
    let internal = (0..ds.len()).filter(|&n| !ds.is_leaf(n)).count() as u64;
    let on = lower(&g, &set(&g, &s, &[Directive::Hoist(true)])).unwrap();
    let off = lower(&g, &set(&g, &s, &[Directive::Hoist(false)])).unwrap();
    let a = check_lowered(&on, &g, &ds, &inputs, &debug(), ORACLE_TOL).map_err(|e| e.to_string())?;
    let b = check_lowered(&off, &g, &ds, &inputs, &debug(), ORACLE_TOL).map_err(|e| e.to_string())?;
    ensure(a.report.pass && b.report.pass, || format!("{:?} {:?}", a.report, b.report))?;
    let same = recurtc::exec::check_equivalence(&a.run.output, &b.run.output, ORACLE_TOL).unwrap();
    ensure(same.pass, || format!("hoisted vs not: {same:?}"))?;
    let (la, lb) = (leaf_ops(&on, &a.run.stats.nest_ops), leaf_ops(&off, &b.run.stats.nest_ops));
    ensure(la == 0 && lb > 0, || format!("leaf ops {la} hoisted, {lb} not"))?;
    // the recursion nest comes last
    let rec = |x: &recurtc::pipeline::Checked| x.run.stats.nest_ops.last().copied().unwrap_or(0);
    let (ra, rb) = (rec(&a), rec(&b));
    // one add of the zero per hidden element per internal node
    ensure(rb - ra == h * internal, || format!("recursion ops {rb} -> {ra}, {internal} internal nodes"))?;
    Ok(format!("leaf ops {lb} -> 0, recursion ops {rb} -> {ra}"))
}

fn c8_specialization() -> Outcome {
    let (g, s) = bundled("treernn", &[]).unwrap();
    let (_, ds) = random_full_binary(63, p(6));
    let inputs = random_inputs(&g, &ds, 6);
    let spec = lower(&g, &s).unwrap();
    let plain = lower(&g, &set(&g, &s, &[Directive::Unspecialize])).unwrap();
    let a = check_lowered(&spec, &g, &ds, &inputs, &debug(), ORACLE_TOL).map_err(|e| e.to_string())?;
    let b = check_lowered(&plain, &g, &ds, &inputs, &debug(), ORACLE_TOL).map_err(|e| e.to_string())?;
    ensure(a.report.pass && b.report.pass, || "outputs differ from the reference".into())?;
    ensure(a.run.output == b.run.output, || "specialized and conditional outputs differ".into())?;
    let (x, y) = (a.run.stats.leaf_checks, b.run.stats.leaf_checks);
    ensure(x == 0 && y == ds.len() as u64, || format!("leaf checks {x} vs {y} for N={}", ds.len()))?;
    Ok(format!("leaf checks 0 vs {y} (N={})", ds.len()))
}

fn c9_rational() -> Outcome {
    let steps = (16.0 / NONLIN_GRID_STEP).round() as i64;
    let mut worst = 0.0f64;
    for k in 0..=steps {
        let x = -8.0 + k as f64 * NONLIN_GRID_STEP;
        let e1 = (tanh_approx(x, NonlinMode::Rational) - x.tanh()).abs();
        let e2 = (sigmoid_approx(x, NonlinMode::Rational) - 1.0 / (1.0 + (-x).exp())).abs();
        worst = worst.max(e1).max(e2);
    }
    ensure(worst <= RATIONAL_POINTWISE_TOL, || format!("pointwise error {worst:.2e}"))?;
    let opts = ExecOptions {
        mode: ExecMode::Sequential,
        elem: recurtc::ElemType::F32,
        nonlin: NonlinMode::Rational,
    };
    let mut pipe = 0.0f64;
    for n in names() {
        let (g, s) = bundled(n, &[]).unwrap();
        let l = lower(&g, &s).unwrap();
        let mut v = vec![perfect(6, p(7)).1];
        if !g.full_arity {
            v.push(random_tree(63, g.decl.max_children, p(8)).1);
        }
        if g.decl.kind == recurtc::StructureKind::Dag {
            v.push(grid(10, 10, p(9)).1);
        }
        for ds in &v {
            let c = check_lowered(&l, &g, ds, &random_inputs(&g, ds, 7), &opts, RATIONAL_PIPELINE_TOL)
                .map_err(|e| format!("{n}: {e}"))?;
            ensure(c.report.pass, || format!("{n}: {:?}", c.report))?;
            pipe = pipe.max(c.report.max_abs_diff);
        }
    }
    Ok(format!("pointwise {worst:.2e}, pipeline {pipe:.2e}"))
}

fn c10_peeling() -> Outcome {
    let (g, s) = bundled("treernn", &[]).unwrap();
    let l = lower(&g, &s).unwrap();
    let mut cases = 0;
    for seed in 0..40u64 {
        let (_, ds) = random_full_binary(63, p(300 + seed));
        let inputs = random_inputs(&g, &ds, seed);
        let base = run_lowered(&l, &g, &ds, &inputs, &debug()).map_err(|e| e.to_string())?;
        let f = 1 + (seed as usize % 7);
        let (q, note) = apply_pass(&l, Pass::Peel(f)).map_err(|e| e.to_string())?;
        let label = note.split_whitespace().nth(1).unwrap_or_default().to_string();
        let checks = bound_checks(&q.program, &label);
        ensure(checks == Some(0), || format!("main loop {label} has {checks:?} checks"))?;
        let run = run_lowered(&q, &g, &ds, &inputs, &debug()).map_err(|e| e.to_string())?;
        let r = recurtc::exec::check_equivalence(&run.output, &base.output, ORACLE_TOL).unwrap();
        ensure(r.pass, || format!("seed {seed} factor {f}: {r:?}"))?;
        cases += 1;
    }
    Ok(format!("{cases} structures, factors 1..7"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "oracle equivalence suite", c1_oracle_suite),
        (2, "golden ILIR dump", c2_golden),
        (3, "linearizer invariants", c3_linearizer_fuzz),
        (4, "batch counts", c4_batch_counts),
        (5, "barrier placement", c5_barriers),
        (6, "dense cache footprint", c6_dense_cache),
        (7, "hoisting and constant propagation", c7_hoisting),
        (8, "specialization leaf checks", c8_specialization),
        (9, "rational nonlinearities", c9_rational),
        (10, "peeling", c10_peeling),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let known = UNATTAINABLE.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        match (&r, known) {
            (Ok(d), _) => println!("PASS [{id:>2}] {name}: {d}"),
            (Err(d), Some(why)) => println!("FAIL [{id:>2}] {name}: {d} (unattainable: {why})"),
            (Err(d), None) => {
                unexpected += 1;
                println!("FAIL [{id:>2}] {name}: {d}")
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
