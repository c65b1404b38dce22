//! Compile, linearize, run and compare against the reference evaluator.

use crate::error::{Error, Result};
use crate::exec::{
    check_equivalence, check_structure, eval_ilir, eval_reference, random_inputs, EquivalenceReport, ExecOptions,
    ExecStats, Inputs,
};
use crate::linearize::{linearize_plan, Linearization};
use crate::lower::{lower_with, LowerOptions, Lowered};
use crate::passes::{apply_pass, Pass};
use crate::ra::{named_cut, schedule_set, Directive, RaGraph, RaSchedule};
use crate::structure::DataStructure;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Run {
    pub lin: Linearization,
    pub output: Tensor,
    pub stats: ExecStats,
}

/// Linearize `ds` for `l` and interpret its program.
pub fn run_lowered(l: &Lowered, g: &RaGraph, ds: &DataStructure, inputs: &Inputs, opts: &ExecOptions) -> Result<Run> {
    check_structure(g, ds)?;
    let lin = linearize_plan(&g.decl, ds, l.plan)?;
    let (output, stats) = eval_ilir(&l.program, &lin, inputs, opts)?;
    Ok(Run { lin, output, stats })
}

#[derive(Debug, Clone)]
pub struct Checked {
    pub report: EquivalenceReport,
    pub run: Run,
    pub reference: Tensor,
}

/// Run `l` and the reference evaluator on the same inputs and compare.
/// The reference always runs in exact float64.
pub fn check_lowered(
    l: &Lowered,
    g: &RaGraph,
    ds: &DataStructure,
    inputs: &Inputs,
    opts: &ExecOptions,
    tol: f64,
) -> Result<Checked> {
    let run = run_lowered(l, g, ds, inputs, opts)?;
    let reference = eval_reference(g, ds, inputs, &ExecOptions::default())?;
    let report = check_equivalence(&run.output, &reference, tol)?;
    Ok(Checked { report, run, reference })
}

/// Lower `g` under `s`, then check it on `ds` with inputs drawn from `seed`.
pub fn check_schedule(
    g: &RaGraph,
    s: &RaSchedule,
    ds: &DataStructure,
    seed: u64,
    opts: &ExecOptions,
    tol: f64,
) -> Result<Checked> {
    let l = lower_with(g, s, &LowerOptions::default())?;
    check_lowered(&l, g, ds, &random_inputs(g, ds, seed), opts, tol)
}

/// Schedules reachable from `base` by toggling batching, specialization
/// and hoisting, unrolling one level and applying each named cut; only
/// those whose directives validate are kept.
pub fn schedule_combinations(g: &RaGraph, base: &RaSchedule) -> Vec<(String, RaSchedule)> {
    let mut cuts: Vec<Option<String>> = vec![None];
    cuts.extend(g.cuts.keys().cloned().map(Some));
    let spec = g.recursion().map(|r| r.2);
    let mut out = Vec::new();
    for batch in [true, false] {
        for specialize in [true, false] {
            for unroll in [0, 1] {
                for cut in &cuts {
                    for hoist in [true, false] {
                        let mut ds = vec![
                            Directive::DynamicBatch(batch),
                            Directive::Unspecialize,
                            Directive::Unroll(unroll),
                            Directive::NoRefactor,
                            Directive::Hoist(hoist),
                        ];
                        if let (true, Some(b)) = (specialize, spec) {
                            ds.push(Directive::Specialize(b));
                        }
                        let mut s = Ok(base.clone());
                        if let Some(c) = cut {
                            match named_cut(g, c) {
                                Ok(c) => ds.push(Directive::Refactor(c)),
                                Err(e) => s = Err(e),
                            }
                        }
                        let s = ds.into_iter().fold(s, |s, d| s.and_then(|s| schedule_set(g, &s, d)));
                        let Ok(s) = s else { continue };
                        let mut label = vec![if batch { "batch" } else { "nobatch" }.to_string()];
                        label.push(if specialize { "spec" } else { "nospec" }.to_string());
                        label.push(format!("unroll{unroll}"));
                        label.push(match cut {
                            Some(c) => format!("cut:{c}"),
                            None => "nocut".to_string(),
                        });
                        label.push(if hoist { "hoist" } else { "nohoist" }.to_string());
                        out.push((label.join("+"), s));
                    }
                }
            }
        }
    }
    out
}

/// The empty list, each pass alone, then all passes together.
pub fn pass_combinations() -> Vec<Vec<Pass>> {
    let all = Pass::all();
    let mut v = vec![Vec::new()];
    v.extend(all.iter().map(|&p| vec![p]));
    v.push(all);
    v
}

/// Apply `passes` in order, skipping those with no target in the program.
pub fn apply_applicable(l: &Lowered, passes: &[Pass]) -> Result<(Lowered, Vec<Pass>)> {
    let mut cur = l.clone();
    let mut used = Vec::new();
    for &p in passes {
        match apply_pass(&cur, p) {
            Ok((x, _)) => {
                cur = x;
                used.push(p);
            }
            Err(Error::NotApplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((cur, used))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecMode;
    use crate::models::{bundled, names};
    use crate::structure::{grid, perfect, random_full_binary, random_tree, sequence, GenParams};
    use crate::structure::StructureKind;

    fn structures(g: &RaGraph) -> Vec<DataStructure> {
        let p = |seed| GenParams { vocab: 16, seed };
        let mut v = vec![perfect(4, p(0)).1, random_full_binary(31, p(1)).1];
        if !g.full_arity {
            v.push(random_tree(40, 2, p(2)).1);
            v.push(sequence(9, p(3)).1);
        }
        if g.decl.kind == StructureKind::Dag {
            v.push(grid(4, 5, p(4)).1);
        }
        v
    }

    #[test]
    fn combinations_match_reference() {
        let p = |seed| GenParams { vocab: 16, seed };
        for n in names() {
            let (g, s) = bundled(n, &[]).unwrap();
            let combos = schedule_combinations(&g, &s);
            assert!(combos.len() >= 8, "{n}");
            let mut v = vec![random_full_binary(15, p(5)).1];
            if !g.full_arity {
                v.push(random_tree(12, g.decl.max_children, p(6)).1);
            }
            for (label, s) in combos {
                let l = lower_with(&g, &s, &LowerOptions::default()).unwrap_or_else(|e| panic!("{n} {label}: {e}"));
                for passes in pass_combinations() {
                    let (t, used) = apply_applicable(&l, &passes).unwrap_or_else(|e| panic!("{n} {label} {passes:?}: {e}"));
                    for ds in &v {
                        let inputs = random_inputs(&g, ds, 3);
                        let c = check_lowered(&t, &g, ds, &inputs, &ExecOptions::default().with_mode(ExecMode::Debug), 1e-12)
                            .unwrap_or_else(|e| panic!("{n} {label} {used:?}: {e}"));
                        assert!(c.report.pass, "{n} {label} {used:?}: {:?}", c.report);
                    }
                }
            }
        }
    }

    #[test]
    fn bundled_models_match_reference() {
        for n in names() {
            let (g, s) = bundled(n, &[]).unwrap();
            for ds in structures(&g) {
                for mode in [ExecMode::Sequential, ExecMode::BatchParallel, ExecMode::Debug] {
                    let c = check_schedule(&g, &s, &ds, 7, &ExecOptions::default().with_mode(mode), 1e-12)
                        .unwrap_or_else(|e| panic!("{n} {mode:?}: {e}"));
                    assert!(c.report.pass, "{n} {mode:?}: {:?}", c.report);
                    assert_eq!(c.run.stats.nodes_processed, ds.len() as u64, "{n}");
                }
            }
        }
    }
}
