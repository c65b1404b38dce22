use recurtc::exec::{eval_reference, random_inputs};
use recurtc::lower::lower;
use recurtc::models::bundled;
use recurtc::pipeline::{check_lowered, run_lowered};
use recurtc::ra::{schedule_set, Directive};
use recurtc::structure::{parse_structure, perfect, GenParams};
use recurtc::{ElemType, ExecMode, ExecOptions, Inputs, Tensor};

fn three_node() -> (recurtc::RaGraph, recurtc::RaSchedule, recurtc::DataStructure, Inputs) {
    let (g, s) = bundled("treernn", &[("H", 2), ("V", 2)]).unwrap();
    let (_, ds) = parse_structure("(r (l1:0) (l2:1))").unwrap();
    let emb = Tensor::new(vec![2, 2], ElemType::F64, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let inputs = Inputs::from([("Emb".to_string(), emb)]);
    (g, s, ds, inputs)
}

#[test]
fn three_node_reference_rows() {
    let (g, _, ds, inputs) = three_node();
    let out = eval_reference(&g, &ds, &inputs, &ExecOptions::default()).unwrap();
    let r = ds.label_index("r").unwrap();
    // tanh(4), tanh(6)
    let want = [0.999_329_299_739_067_0, 0.999_987_711_650_795_6];
    for (k, w) in want.iter().enumerate() {
        assert!((out.row(r)[k] - w).abs() < 1e-6, "{:?}", out.row(r));
    }
    assert_eq!(out.row(ds.label_index("l1").unwrap()), &[1.0, 2.0]);
    assert_eq!(out.row(ds.label_index("l2").unwrap()), &[3.0, 4.0]);
}

#[test]
fn three_node_lowered_matches_and_counts() {
    let (g, s, ds, inputs) = three_node();
    let l = lower(&g, &s).unwrap();
    let c = check_lowered(&l, &g, &ds, &inputs, &ExecOptions::default(), 1e-12).unwrap();
    assert!(c.report.pass, "{:?}", c.report);
    assert!(c.report.max_abs_diff <= 1e-12);
    assert_eq!(c.run.stats.batches_executed, 2);
    assert_eq!(c.run.stats.loop_nest_launches, 2);
    assert_eq!(c.run.stats.nodes_processed, 3);
}

#[test]
fn single_leaf_is_the_embedding() {
    let (g, s, _, inputs) = three_node();
    let (_, ds) = parse_structure("(only:1)").unwrap();
    let out = eval_reference(&g, &ds, &inputs, &ExecOptions::default()).unwrap();
    assert_eq!(out.row(0), &[3.0, 4.0]);
    let l = lower(&g, &s).unwrap();
    let run = run_lowered(&l, &g, &ds, &inputs, &ExecOptions::default()).unwrap();
    assert_eq!(run.output.row(0), &[3.0, 4.0]);
}

#[test]
fn shared_dag_child_is_evaluated_once() {
    let (g, s) = bundled("dagrnn", &[]).unwrap();
    let text = r#"{ "kind": "dag", "max_children": 2,
        "nodes": [ {"id": "a"}, {"id": "b"}, {"id": "c", "payload": 3} ],
        "edges": [ ["a", 0, "b"], ["a", 1, "c"], ["b", 0, "c"] ] }"#;
    let (_, ds) = parse_structure(text).unwrap();
    let inputs = random_inputs(&g, &ds, 1);
    let l = lower(&g, &s).unwrap();
    let c = check_lowered(&l, &g, &ds, &inputs, &ExecOptions::default().with_mode(ExecMode::Debug), 1e-12).unwrap();
    assert!(c.report.pass);
    assert_eq!(c.run.stats.nodes_processed, 3);
}

#[test]
fn missing_input_is_reported() {
    let (g, s, ds, _) = three_node();
    let e = eval_reference(&g, &ds, &Inputs::new(), &ExecOptions::default()).unwrap_err();
    assert!(matches!(e, recurtc::Error::Input(_)), "{e}");
    let l = lower(&g, &s).unwrap();
    let e = run_lowered(&l, &g, &ds, &Inputs::new(), &ExecOptions::default()).unwrap_err();
    assert!(matches!(e, recurtc::Error::Input(_)), "{e}");
}

#[test]
fn parallel_and_sequential_agree_bitwise() {
    let (g, s) = bundled("treernn", &[("H", 8)]).unwrap();
    let (_, ds) = perfect(8, GenParams { vocab: 16, seed: 4 });
    let inputs = random_inputs(&g, &ds, 9);
    let l = lower(&g, &s).unwrap();
    let seq = run_lowered(&l, &g, &ds, &inputs, &ExecOptions::default()).unwrap();
    let par = run_lowered(&l, &g, &ds, &inputs, &ExecOptions::default().with_mode(ExecMode::BatchParallel)).unwrap();
    assert_eq!(seq.output.content_hash(), par.output.content_hash());
    assert_eq!(seq.stats.batches_executed, 8);
    assert_eq!(par.stats.barrier_waits, 8);
}

#[test]
fn unbatched_unspecialized_is_one_nest_with_leaf_checks() {
    let (g, s) = bundled("treernn", &[]).unwrap();
    let s = schedule_set(&g, &s, Directive::DynamicBatch(false)).unwrap();
    let s = schedule_set(&g, &s, Directive::Unspecialize).unwrap();
    let (_, ds) = perfect(5, GenParams { vocab: 16, seed: 0 });
    let inputs = random_inputs(&g, &ds, 2);
    let l = lower(&g, &s).unwrap();
    let c = check_lowered(&l, &g, &ds, &inputs, &ExecOptions::default(), 1e-12).unwrap();
    assert!(c.report.pass);
    assert_eq!(c.run.stats.loop_nest_launches, 1);
    assert_eq!(c.run.stats.leaf_checks, ds.len() as u64);
}
