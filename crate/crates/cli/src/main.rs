mod args;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use args::{Cli, Cmd, CompileArgs, GenArgs, GenKind, RunArgs};
use recurtc::exec::{check_equivalence, eval_reference, random_inputs};
use recurtc::ilir::print_program;
use recurtc::lower::lower;
use recurtc::models;
use recurtc::passes::apply_pass;
use recurtc::pipeline::run_lowered;
use recurtc::ra::{load_model, model_to_json, named_cut, schedule_set, Directive, OpKind};
use recurtc::structure::{grid, perfect, random_full_binary, random_tree, sequence, serialize_structure, skewed, GenParams};
use recurtc::structure::parse_structure;
use recurtc::{
    ElemType, EquivalenceReport, ExecOptions, ExecStats, Inputs, Lowered, NonlinMode, RaGraph, RaSchedule,
};

/// Why a command stopped.
enum Failure {
    /// Exit 1.
    Diag(String),
    /// Exit 2.
    Mismatch,
}

type Outcome<T> = Result<T, Failure>;

fn diag(what: impl Display, e: impl Display) -> Failure {
    Failure::Diag(format!("{what}: {e}"))
}

struct Compiled {
    graph: RaGraph,
    lowered: Lowered,
}

fn load(a: &CompileArgs) -> Outcome<(RaGraph, RaSchedule)> {
    let params = a.params.iter().cloned().collect();
    let (origin, text) = match models::source(&a.model) {
        Some(src) => (format!("bundled model `{}`", a.model), src.to_string()),
        None => {
            let text = fs::read_to_string(&a.model).map_err(|e| diag(&a.model, e))?;
            (a.model.clone(), text)
        }
    };
    load_model(&text, &params).map_err(|e| diag(origin, e))
}

fn schedule(g: &RaGraph, base: &RaSchedule, a: &CompileArgs) -> Outcome<RaSchedule> {
    let mut ds = Vec::new();
    if let Some(b) = a.batch {
        ds.push(Directive::DynamicBatch(b));
    }
    match a.specialize {
        Some(true) => {
            let (_, _, body) = g.recursion().ok_or_else(|| diag(&g.name, "no recursion to specialize"))?;
            ds.push(Directive::Specialize(body));
        }
        Some(false) => ds.push(Directive::Unspecialize),
        None => {}
    }
    if let Some(k) = a.unroll {
        ds.push(Directive::Unroll(k));
    }
    match a.refactor.as_deref() {
        Some("none") => ds.push(Directive::NoRefactor),
        Some(c) => ds.push(Directive::Refactor(named_cut(g, c).map_err(|e| diag("--refactor", e))?)),
        None => {}
    }
    if let Some(h) = a.hoist {
        ds.push(Directive::Hoist(h));
    }
    let mut s = base.clone();
    for d in ds {
        s = schedule_set(g, &s, d).map_err(|e| diag(format!("schedule of `{}`", g.name), e))?;
    }
    Ok(s)
}

/// The schedule that remains for the transformed graph once unrolling and
/// refactoring are applied.
fn residual_schedule(h: &RaGraph, s: &RaSchedule) -> RaSchedule {
    let mut r = RaSchedule {
        dynamic_batch: s.dynamic_batch,
        hoist: s.hoist,
        ..RaSchedule::default()
    };
    if let (true, Some((_, _, body))) = (s.specialized(), h.recursion()) {
        if matches!(h.ops[body].kind, OpKind::IfThenElse { .. }) {
            r = schedule_set(h, &r, Directive::Specialize(body)).unwrap_or(r);
        }
    }
    r
}

fn write(dir: &Path, name: &str, text: &str) -> Outcome<()> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| diag(p.display(), e))
}

fn json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn compile(a: &CompileArgs) -> Outcome<Compiled> {
    let (g, base) = load(a)?;
    let s = schedule(&g, &base, a)?;
    let mut l = lower(&g, &s).map_err(|e| diag(format!("lowering `{}`", g.name), e))?;
    let mut stages = vec![("lowered".to_string(), print_program(&l.program))];
    for &p in &a.transform {
        let (next, note) = apply_pass(&l, p).map_err(|e| diag("--transform", e))?;
        eprintln!("{p}: {note}");
        l = next;
        stages.push((p.to_string().replace(':', "_"), print_program(&l.program)));
    }
    if let Some(dir) = &a.dump_dir {
        fs::create_dir_all(dir).map_err(|e| diag(dir.display(), e))?;
        write(dir, "ra.json", &model_to_json(&g, &s))?;
        write(dir, "ra.transformed.json", &model_to_json(&l.graph, &residual_schedule(&l.graph, &s)))?;
        for (k, (name, text)) in stages.iter().enumerate() {
            write(dir, &format!("ilir.{k}.{name}.ilir"), text)?;
        }
        write(dir, "plan.json", &json(&l.plan))?;
    }
    Ok(Compiled { graph: g, lowered: l })
}

fn cmd_compile(a: &CompileArgs) -> Outcome<()> {
    let c = compile(a)?;
    if a.dump_dir.is_none() {
        print!("{}", print_program(&c.lowered.program));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport {
    structure: PathBuf,
    nodes: usize,
    output_hash: String,
    stats: ExecStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalence: Option<EquivalenceReport>,
}

fn cmd_run(a: &RunArgs) -> Outcome<()> {
    let c = compile(&a.compile)?;
    let opts = ExecOptions {
        mode: a.mode,
        elem: a.precision,
        nonlin: a.nonlin,
    };
    let exact = a.precision == ElemType::F64 && a.nonlin == NonlinMode::Exact;
    let tol = a.tol.unwrap_or(if exact { 1e-12 } else { 5e-3 });
    let given: Option<Inputs> = match &a.inputs {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| diag(p.display(), e))?;
            Some(serde_json::from_str(&text).map_err(|e| diag(p.display(), e))?)
        }
        None => None,
    };
    let mut reports = Vec::new();
    let mut failed = false;
    for (k, path) in a.structure.iter().enumerate() {
        let at = |e| diag(path.display(), e);
        let text = fs::read_to_string(path).map_err(|e| diag(path.display(), e))?;
        let (_, ds) = parse_structure(&text).map_err(at)?;
        let inputs = given.clone().unwrap_or_else(|| random_inputs(&c.graph, &ds, a.seed));
        let run = run_lowered(&c.lowered, &c.graph, &ds, &inputs, &opts).map_err(at)?;
        if let Some(dir) = &a.compile.dump_dir {
            write(dir, &format!("linearization.{k}.json"), &json(&run.lin))?;
        }
        let equivalence = if a.check {
            let reference = eval_reference(&c.graph, &ds, &inputs, &ExecOptions::default()).map_err(at)?;
            let r = check_equivalence(&run.output, &reference, tol).map_err(at)?;
            if !r.pass {
                eprintln!("{}: mismatch, max |diff| {:e} > {:e}", path.display(), r.max_abs_diff, tol);
                failed = true;
            }
            Some(r)
        } else {
            None
        };
        reports.push(RunReport {
            structure: path.clone(),
            nodes: ds.len(),
            output_hash: format!("{:016x}", run.output.content_hash()),
            stats: run.stats,
            equivalence,
        });
    }
    println!("{}", json(&reports));
    if failed {
        Err(Failure::Mismatch)
    } else {
        Ok(())
    }
}

fn cmd_gen(a: &GenArgs) -> Outcome<()> {
    let p = GenParams {
        vocab: a.vocab,
        seed: a.seed,
    };
    let bad = |m: &str| Err(diag("gen", m));
    let (decl, ds) = match a.kind {
        GenKind::Perfect if a.levels == 0 || a.levels > 24 => return bad("--levels must be in 1..=24"),
        GenKind::Perfect => perfect(a.levels, p),
        _ if a.vocab < 1 => return bad("--vocab must be positive"),
        GenKind::RandomTree if a.nodes == 0 || a.arity == 0 => return bad("--nodes and --arity must be positive"),
        GenKind::RandomTree => random_tree(a.nodes, a.arity, p),
        GenKind::RandomFullBinary if a.nodes == 0 => return bad("--nodes must be positive"),
        GenKind::RandomFullBinary => random_full_binary(a.nodes, p),
        GenKind::Grid if a.rows == 0 || a.cols == 0 => return bad("--rows and --cols must be positive"),
        GenKind::Grid => grid(a.rows, a.cols, p),
        GenKind::Sequence if a.len == 0 => return bad("--len must be positive"),
        GenKind::Sequence => sequence(a.len, p),
        GenKind::Skewed => skewed(p),
    };
    let leaves = (0..ds.len()).filter(|&n| ds.is_leaf(n)).count();
    let wavefronts = ds.heights().map_or(0, |h| h.iter().max().map_or(0, |m| m + 1));
    eprintln!("{} nodes, {leaves} leaves, {wavefronts} wavefronts", ds.len());
    let text = serialize_structure(&decl, &ds);
    match &a.out {
        Some(path) => fs::write(path, text).map_err(|e| diag(path.display(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are diagnostics; 2 is reserved for mismatches
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let r = match &cli.cmd {
        Cmd::Compile(a) => cmd_compile(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Gen(a) => cmd_gen(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diag(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Mismatch) => ExitCode::from(2),
    }
}
