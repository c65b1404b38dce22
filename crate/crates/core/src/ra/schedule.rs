use super::{OpId, OpKind, RaGraph};
use crate::error::{Error, Result};
use crate::structure::StructureKind;

/// A set of body edges `(producer, consumer)` that becomes the new
/// recursion backedge.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cut {
    pub name: Option<String>,
    pub edges: Vec<(OpId, OpId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaSchedule {
    pub dynamic_batch: bool,
    pub specialize: Vec<OpId>,
    pub unroll_depth: usize,
    pub refactor_cut: Option<Cut>,
    /// Hoist node-independent leaf computation and fold zero constants.
    pub hoist: bool,
}

impl Default for RaSchedule {
    fn default() -> Self {
        RaSchedule {
            dynamic_batch: false,
            specialize: Vec::new(),
            unroll_depth: 0,
            refactor_cut: None,
            hoist: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Directive {
    DynamicBatch(bool),
    Specialize(OpId),
    Unspecialize,
    Unroll(usize),
    Refactor(Cut),
    NoRefactor,
    Hoist(bool),
}

/// Record `d` on a copy of `s` and validate the result against `g`.
pub fn schedule_set(g: &RaGraph, s: &RaSchedule, d: Directive) -> Result<RaSchedule> {
    let mut s = s.clone();
    match d {
        Directive::DynamicBatch(b) => s.dynamic_batch = b,
        Directive::Specialize(op) => {
            let (_, _, body) = g.recursion().ok_or_else(|| Error::Graph("program has no recursion_op".into()))?;
            let o = g.ops.get(op).ok_or(Error::Index(op))?;
            if !matches!(o.kind, OpKind::IfThenElse { .. }) {
                return Err(Error::Invalid(format!("`{}` is not an if_then_else", o.name)));
            }
            if op != body {
                return Err(Error::Invalid(format!(
                    "only the recursion body's top-level conditional can be specialized, not `{}`",
                    o.name
                )));
            }
            if !s.specialize.contains(&op) {
                s.specialize.push(op);
            }
        }
        Directive::Unspecialize => s.specialize.clear(),
        Directive::Unroll(k) => {
            if k > 0 && g.decl.kind == StructureKind::Dag {
                return Err(Error::UnrollOnDag);
            }
            s.unroll_depth = k;
        }
        Directive::Refactor(cut) => {
            if g.decl.kind == StructureKind::Dag {
                return Err(Error::RefactorOnDag);
            }
            if !cut.edges.is_empty() {
                crate::lower::analyze_cut(g, &cut.edges)?;
            }
            s.refactor_cut = Some(cut);
        }
        Directive::NoRefactor => s.refactor_cut = None,
        Directive::Hoist(h) => s.hoist = h,
    }
    Ok(s)
}

impl RaSchedule {
    pub fn specialized(&self) -> bool {
        !self.specialize.is_empty()
    }

    pub fn refactors(&self) -> bool {
        self.refactor_cut.as_ref().is_some_and(|c| !c.edges.is_empty())
    }

    /// Re-run every directive's validation against `g`.
    pub fn validate(&self, g: &RaGraph) -> Result<()> {
        let mut s = RaSchedule::default();
        s = schedule_set(g, &s, Directive::DynamicBatch(self.dynamic_batch))?;
        for &op in &self.specialize {
            s = schedule_set(g, &s, Directive::Specialize(op))?;
        }
        s = schedule_set(g, &s, Directive::Unroll(self.unroll_depth))?;
        if let Some(c) = &self.refactor_cut {
            s = schedule_set(g, &s, Directive::Refactor(c.clone()))?;
        }
        schedule_set(g, &s, Directive::Hoist(self.hoist))?;
        Ok(())
    }
}
