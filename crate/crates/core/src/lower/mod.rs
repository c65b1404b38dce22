//! Lowering of recursive RA programs to ILIR.

mod gen;
mod hoist;
mod refactor;
mod unroll;

use std::collections::BTreeSet;

pub use hoist::{hoist_constants, HoistReport};
pub use refactor::{analyze_cut, apply_refactoring, CutInfo};
pub use unroll::apply_unrolling;

pub use crate::linearize::LinearizerPlan;

use crate::error::{Error, Result};
use crate::ilir::{place_barriers, BarrierMode, BarrierPlacement, DependenceFacts, IlirProgram, Stmt};
use crate::ra::{OpKind, Pred, RaGraph, RaSchedule};
use gen::{Gen, NestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerOptions {
    /// Leaf inputs are known to be the same at every leaf, so a
    /// node-independent leaf branch may be hoisted.
    pub leaf_inputs_uniform: bool,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions {
            leaf_inputs_uniform: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub program: IlirProgram,
    pub plan: LinearizerPlan,
    pub facts: DependenceFacts,
    pub hoist: HoistReport,
    pub barriers: BarrierPlacement,
    /// The graph after the schedule's graph transforms.
    pub graph: RaGraph,
}

pub fn lower(g: &RaGraph, s: &RaSchedule) -> Result<Lowered> {
    lower_with(g, s, &LowerOptions::default())
}

pub fn lower_with(g: &RaGraph, s: &RaSchedule, opts: &LowerOptions) -> Result<Lowered> {
    g.validate()?;
    s.validate(g)?;
    let mut h = g.clone();
    if let Some(cut) = &s.refactor_cut {
        h = apply_refactoring(&h, &cut.edges)?;
    }
    if s.unroll_depth > 0 {
        h = apply_unrolling(&h, s.unroll_depth)?;
    }
    let mut hoist = HoistReport::default();
    if s.hoist {
        let decl = h.decl.clone();
        let (x, r) = hoist_constants(&h, &decl, opts.leaf_inputs_uniform);
        h = x;
        hoist = r;
    }
    let (rec, _, body) = h
        .recursion()
        .ok_or_else(|| Error::Graph(format!("`{}` has no recursion", h.name)))?;
    let ite = match h.ops[body].kind {
        OpKind::IfThenElse {
            pred: Pred::IsLeaf,
            then_op,
            else_op,
        } => Some((then_op, else_op)),
        _ => None,
    };
    let specialized = s.specialized() && ite.is_some();
    let mut gen = Gen::new(&h, s.dynamic_batch);
    if hoist.zero_leaf {
        gen.zero_leaf = ite.map(|t| t.0);
    }
    let carry_dim = if s.dynamic_batch { "d_all_batches" } else { "d_node_seq" };

    let mut body_stmts: Vec<Stmt> = Vec::new();
    let mut carried: Vec<BTreeSet<String>> = Vec::new();
    let mut dims: Vec<Option<String>> = Vec::new();
    let mut push = |st: Stmt, c: BTreeSet<String>, d: Option<&str>| {
        if matches!(st, Stmt::Loop(_)) {
            carried.push(c);
            dims.push(d.map(str::to_string));
        }
        body_stmts.push(st);
    };

    let live = h.live_ops();
    for u in h.topo_all() {
        if live[u] && matches!(h.ops[u].kind, OpKind::Compute { .. }) && !h.ops[u].is_node_indexed() {
            for st in gen.global(u) {
                push(st, BTreeSet::new(), None);
            }
        }
    }

    if let (true, Some((leaf, internal))) = (specialized, ite) {
        if gen.zero_leaf != Some(leaf) {
            let b = gen.branch(leaf, body, &[], &mut Vec::new())?;
            let st = gen.header(NestKind::Leaf, true, b);
            push(st, gen.take_carried(), None);
        }
        let b = gen.branch(internal, body, &[], &mut Vec::new())?;
        let st = gen.header(NestKind::Internal, true, b);
        push(st, gen.take_carried(), Some(carry_dim));
    } else {
        let mut b = Vec::new();
        gen.instance(body, &[], &mut Vec::new(), &mut b)?;
        let st = gen.header(NestKind::All, false, b);
        push(st, gen.take_carried(), Some(carry_dim));
    }

    let out = h.output_op().expect("recursion present");
    if !gen.same_storage(out, rec) {
        let mut b = Vec::new();
        gen.instance(out, &[], &mut Vec::new(), &mut b)?;
        let kind = if s.refactors() { NestKind::Epilogue } else { NestKind::Post };
        let st = gen.header(kind, false, b);
        push(st, gen.take_carried(), None);
    }

    let mut program = gen.finish(&g.name, out, body_stmts);
    if hoist.zero_leaf {
        // leaf rows keep the zero fill instead of being stored
        let t = gen.tensor_name(rec);
        if let Some(d) = program.tensor_mut(&t) {
            d.init = Some(0.0);
        }
    }
    let facts = gen::facts(&program.body, &carried, &dims);
    let (program, barriers) = place_barriers(&program, &facts, BarrierMode::Minimal);
    Ok(Lowered {
        program,
        plan: LinearizerPlan::from_schedule(s),
        facts,
        hoist,
        barriers,
        graph: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::{parse_program, print_program};
    use crate::models::bundled;

    #[test]
    fn dump_all() {
        for n in crate::models::names() {
            let (g, s) = bundled(n, &[]).unwrap();
            let l = lower(&g, &s).unwrap_or_else(|e| panic!("{n}: {e}"));
            let t = print_program(&l.program);
            println!("{t}\n{:?}\n", l.barriers);
            assert_eq!(parse_program(&t).unwrap(), l.program, "{n}");
        }
    }
}
