use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use recurtc::exec::eval_reference;
use recurtc::linearize::linearize_plan;
use recurtc::lower::lower;
use recurtc::pipeline::run_lowered;
use recurtc::{ExecMode, ExecOptions};
use recurtc_bench::fixture;

const CASES: &[(&str, &str)] = &[
    ("treernn", "perfect8"),
    ("treelstm", "random63"),
    ("dagrnn", "grid10"),
    ("treegru", "seq100"),
];

fn lowering(c: &mut Criterion) {
    let mut g = c.benchmark_group("lower");
    for m in ["treernn", "treegru", "treelstm", "mvrnn"] {
        let f = fixture(m, 8, "perfect8");
        g.bench_function(m, |b| b.iter(|| lower(&f.graph, &f.schedule).unwrap()));
    }
    g.finish();
}

fn linearizer(c: &mut Criterion) {
    let mut g = c.benchmark_group("linearize");
    for &(m, s) in CASES {
        let f = fixture(m, 8, s);
        g.bench_function(BenchmarkId::new(m, s), |b| {
            b.iter(|| linearize_plan(&f.graph.decl, &f.ds, f.lowered.plan).unwrap())
        });
    }
    g.finish();
}

fn execution(c: &mut Criterion) {
    let mut g = c.benchmark_group("exec");
    g.sample_size(20);
    for &(m, s) in CASES {
        let f = fixture(m, 8, s);
        let id = format!("{m}/{s}");
        for mode in [ExecMode::Sequential, ExecMode::BatchParallel] {
            let opts = ExecOptions::default().with_mode(mode);
            g.bench_function(BenchmarkId::new(format!("{mode:?}"), &id), |b| {
                b.iter(|| run_lowered(&f.lowered, &f.graph, &f.ds, &f.inputs, &opts).unwrap())
            });
        }
        g.bench_function(BenchmarkId::new("reference", &id), |b| {
            b.iter(|| eval_reference(&f.graph, &f.ds, &f.inputs, &ExecOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lowering, linearizer, execution);
criterion_main!(benches);
