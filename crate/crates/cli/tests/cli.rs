use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use recurtc::ilir::parse_program;
use recurtc::linearize::Linearization;
use recurtc::ra::load_model;
use recurtc::structure::parse_structure;
use recurtc::LinearizerPlan;
use serde_json::Value;

fn recurtc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recurtc"))
        .args(args)
        .env_remove("RECURTC_DUMP_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The single run report of a `run` invocation.
fn report(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", stderr(o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    v[0].clone()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let p = dir.join(name);
    let mut a = vec!["gen"];
    a.extend_from_slice(args);
    a.extend(["--out", p.to_str().unwrap()]);
    let o = recurtc(&a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn three_node_check_passes_in_two_batches() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    std::fs::write(&t, "(r (l1:0) (l2:1))").unwrap();
    let r = report(&recurtc(&[
        "run", "--model", "treernn", "--param", "H=2", "--param", "V=2", "--structure", s(&t), "--check",
    ]));
    assert_eq!(r["equivalence"]["pass"], true);
    assert_eq!(r["stats"]["batches_executed"], 2);
    assert_eq!(r["nodes"], 3);
}

#[test]
fn perfect_tree_runs_in_eight_batches() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "p.json", &["--kind", "perfect", "--levels", "8"]);
    let r = report(&recurtc(&["run", "--model", "treernn", "--structure", s(&p), "--check"]));
    assert_eq!(r["stats"]["batches_executed"], 8);
    assert_eq!(r["stats"]["barrier_waits"], 8);
}

#[test]
fn parallel_and_sequential_hash_alike() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "p.json", &["--kind", "random-tree", "--nodes", "60", "--seed", "3"]);
    let run = |mode| report(&recurtc(&["run", "--model", "treelstm", "--structure", s(&p), "--mode", mode]));
    assert_eq!(run("sequential")["output_hash"], run("batch-parallel")["output_hash"]);
}

#[test]
fn unroll_on_dag_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["--kind", "grid", "--rows", "3", "--cols", "3"]);
    let o = recurtc(&["run", "--model", "dagrnn", "--unroll", "1", "--structure", s(&g)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("only supported for trees and sequences"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let i = dir.path().join("inputs.json");
    std::fs::write(&t, "(r (a) (b))").unwrap();
    std::fs::write(&i, "{}").unwrap();
    let o = recurtc(&["run", "--model", "treernn", "--structure", s(&t), "--inputs", s(&i)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("input error"), "{}", stderr(&o));
}

#[test]
fn tolerance_miss_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "p.json", &["--kind", "perfect", "--levels", "4"]);
    let o = recurtc(&[
        "run", "--model", "treegru", "--structure", s(&p), "--precision", "f32", "--nonlin", "rational", "--check",
        "--tol", "1e-12",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r[0]["equivalence"]["pass"], false);
    let o = recurtc(&[
        "run", "--model", "treegru", "--structure", s(&p), "--precision", "f32", "--nonlin", "rational", "--check",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn bad_usage_is_not_a_mismatch() {
    assert_eq!(code(&recurtc(&["run", "--model", "treernn"])), 1);
    assert_eq!(code(&recurtc(&["compile", "--model", "treernn", "--transform", "fuse"])), 1);
    assert_eq!(code(&recurtc(&["compile", "--model", "nosuch.json"])), 1);
    assert_eq!(code(&recurtc(&["--help"])), 0);
}

#[test]
fn generated_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let load = |p: PathBuf| parse_structure(&std::fs::read_to_string(p).unwrap()).unwrap().1;
    let t = load(gen(dir.path(), "p.json", &["--kind", "perfect", "--levels", "8"]));
    assert_eq!(t.len(), 255);
    assert_eq!((0..t.len()).filter(|&n| t.is_leaf(n)).count(), 128);
    let g = load(gen(dir.path(), "g.json", &["--kind", "grid"]));
    assert_eq!(g.len(), 100);
    assert_eq!(g.heights().unwrap().into_iter().max(), Some(18));
    let q = load(gen(dir.path(), "s.json", &["--kind", "sequence", "--len", "100"]));
    assert_eq!(q.len(), 100);
    assert!(q.children.iter().all(|c| c.len() <= 1));
    assert_eq!(q.roots().len(), 1);
    // same seed, same file
    let a = std::fs::read(gen(dir.path(), "a.json", &["--kind", "random-tree", "--seed", "9"])).unwrap();
    let b = std::fs::read(gen(dir.path(), "b.json", &["--kind", "random-tree", "--seed", "9"])).unwrap();
    assert_eq!(a, b);
    let o = recurtc(&["gen", "--kind", "grid"]);
    assert!(stderr(&o).contains("19 wavefronts"), "{}", stderr(&o));
}

#[test]
fn compile_matches_golden_dump() {
    let o = recurtc(&["compile", "--model", "treernn", "--param", "H=256", "--batch", "--specialize"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/treernn_h256.ilir");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(golden).unwrap());
}

fn check_dumps(dir: &Path) {
    let names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let read = |n: &str| std::fs::read_to_string(dir.join(n)).unwrap();
    for n in ["ra.json", "ra.transformed.json"] {
        load_model(&read(n), &Default::default()).unwrap_or_else(|e| panic!("{n}: {e}"));
    }
    let _: LinearizerPlan = serde_json::from_str(&read("plan.json")).unwrap();
    for n in &names {
        if n.ends_with(".ilir") {
            parse_program(&read(n)).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
        if n.starts_with("linearization.") {
            let _: Linearization = serde_json::from_str(&read(n)).unwrap();
        }
    }
}

#[test]
fn dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "p.json", &["--kind", "random-full-binary", "--nodes", "31"]);
    let d = dir.path().join("dumps");
    let all = "dense_cache,peel,split,layout,simplify,infer_bounds,conservative_barriers";
    let o = recurtc(&[
        "run", "--model", "treernn", "--structure", s(&p), "--transform", all, "--check", "--dump-dir", s(&d),
    ]);
    let r = report(&o);
    assert_eq!(r["equivalence"]["pass"], true);
    let ilir = std::fs::read_dir(&d).unwrap().filter(|e| e.as_ref().unwrap().path().extension() == Some("ilir".as_ref()));
    assert_eq!(ilir.count(), 8);
    check_dumps(&d);

    let d = dir.path().join("unrolled");
    let o = recurtc(&[
        "run", "--model", "treegru", "--structure", s(&p), "--unroll", "1", "--refactor", "hsum", "--check", "--dump-dir",
        s(&d),
    ]);
    assert_eq!(report(&o)["equivalence"]["pass"], true);
    check_dumps(&d);
}

#[test]
fn dump_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_recurtc"))
        .args(["compile", "--model", "treefc", "--transform", "split"])
        .env("RECURTC_DUMP_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("ilir.1.split_2.ilir").exists());
    check_dumps(dir.path());
}
