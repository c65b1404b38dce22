//! Named ILIR passes whose targets are picked from the lowered program.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ilir::{
    access_sets, dense_cache, infer_bounds, layout_transform, peel_loop, place_barriers, simplify_checks, split_loop, visit_stmts,
    ArrayKind, BarrierMode, Cond, IlirProgram, IndexExpr, LayoutOp, Loop, Operand, Stmt, NODE_DIM,
};
use crate::lower::Lowered;
use crate::syntax::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Cache the recursion tensor's child rows per batch iteration.
    DenseCache,
    /// Peel the first variable-bound loop by the factor.
    Peel(usize),
    /// Split the first hidden loop by the factor.
    Split(usize),
    /// Reverse the storage axes of the output tensor.
    Layout,
    Simplify,
    InferBounds,
    /// Replace the minimal barriers by conservative ones.
    ConservativeBarriers,
}

impl Pass {
    /// Every pass, at default factors.
    pub fn all() -> Vec<Pass> {
        vec![
            Pass::DenseCache,
            Pass::Peel(3),
            Pass::Split(2),
            Pass::Layout,
            Pass::Simplify,
            Pass::InferBounds,
            Pass::ConservativeBarriers,
        ]
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pass::DenseCache => write!(f, "dense_cache"),
            Pass::Peel(k) => write!(f, "peel:{k}"),
            Pass::Split(k) => write!(f, "split:{k}"),
            Pass::Layout => write!(f, "layout"),
            Pass::Simplify => write!(f, "simplify"),
            Pass::InferBounds => write!(f, "infer_bounds"),
            Pass::ConservativeBarriers => write!(f, "conservative_barriers"),
        }
    }
}

impl FromStr for Pass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pass> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let factor = |d: usize| -> Result<usize> {
            match arg {
                None => Ok(d),
                Some(a) => a
                    .parse::<usize>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| Error::Invalid(format!("bad factor `{a}` for pass `{name}`"))),
            }
        };
        let plain = |p: Pass| match arg {
            None => Ok(p),
            Some(_) => Err(Error::Invalid(format!("pass `{name}` takes no argument"))),
        };
        match name {
            "dense_cache" => plain(Pass::DenseCache),
            "peel" => Ok(Pass::Peel(factor(3)?)),
            "split" => Ok(Pass::Split(factor(2)?)),
            "layout" => plain(Pass::Layout),
            "simplify" => plain(Pass::Simplify),
            "infer_bounds" => plain(Pass::InferBounds),
            "conservative_barriers" => plain(Pass::ConservativeBarriers),
            _ => Err(Error::Unknown(s.to_string())),
        }
    }
}

fn find_loop<'a>(s: &'a [Stmt], pred: &impl Fn(&Loop) -> bool) -> Option<&'a Loop> {
    let mut hit = None;
    visit_stmts(s, &mut |st| {
        if let Stmt::Loop(l) = st {
            if hit.is_none() && pred(l) {
                hit = Some(l);
            }
        }
    });
    hit
}

/// The intra-batch loop of the recursion nest.
fn batch_loop(p: &IlirProgram) -> Option<&Loop> {
    p.body.iter().find_map(|st| match st {
        Stmt::Loop(l) if l.dim == "d_all_batches" => find_loop(&l.body, &|m| m.dim == "d_batch"),
        _ => None,
    })
}

fn is_child_load(p: &IlirProgram, e: &IndexExpr) -> bool {
    match e {
        IndexExpr::Load(a, args) => {
            args.len() == 1 && matches!(args[0], IndexExpr::Var(_)) && p.array(a).is_some_and(|d| d.kind == ArrayKind::Child)
        }
        _ => false,
    }
}

/// A tensor written in `l` and read there through one-level child loads,
/// with those loads. Reads under conditions other than child-presence
/// guards and the node's own leaf check rule a tensor out, since the fill would read them regardless,
/// and so do writes at child rows.
fn child_reads(p: &IlirProgram, l: &Loop) -> Option<(String, Vec<IndexExpr>)> {
    struct Seen {
        order: Vec<String>,
        loads: Vec<Vec<IndexExpr>>,
        conditional: Vec<String>,
    }
    fn go(s: &[Stmt], p: &IlirProgram, cond: bool, seen: &mut Seen) {
        for st in s {
            match st {
                Stmt::Loop(m) => go(&m.body, p, cond, seen),
                Stmt::If { cond: c, then, els } => {
                    let guard = match c {
                        Cond::Cmp(CmpOp::Ge, e, z) => is_child_load(p, e) && z.as_const() == Some(0),
                        // only internal nodes read children
                        Cond::IsLeaf(IndexExpr::Var(_)) => true,
                        _ => false,
                    };
                    go(then, p, cond || !guard, seen);
                    go(els, p, cond || !guard, seen);
                }
                Stmt::Store { tensor, idx, value } => {
                    // rows written at other nodes would be cached stale
                    if idx.iter().any(|e| {
                        let mut a = Vec::new();
                        e.arrays(&mut a);
                        a.iter().any(|n| p.array(n).is_some_and(|d| d.kind == ArrayKind::Child))
                    }) {
                        seen.conditional.push(tensor.clone());
                    }
                    value.visit_loads(&mut |o| {
                    let Operand::Read { tensor, idx } = o else { return };
                    let Some(pos) = p.tensor(tensor).and_then(|t| t.dims.iter().position(|d| d == NODE_DIM)) else {
                        return;
                    };
                    let e = &idx[pos];
                    if !is_child_load(p, e) {
                        return;
                    }
                    if cond {
                        seen.conditional.push(tensor.clone());
                    }
                    let k = match seen.order.iter().position(|t| t == tensor) {
                        Some(k) => k,
                        None => {
                            seen.order.push(tensor.clone());
                            seen.loads.push(Vec::new());
                            seen.order.len() - 1
                        }
                    };
                    if !seen.loads[k].contains(e) {
                        seen.loads[k].push(e.clone());
                    }
                    })
                }
                _ => {}
            }
        }
    }
    let mut seen = Seen {
        order: Vec::new(),
        loads: Vec::new(),
        conditional: Vec::new(),
    };
    go(&l.body, p, false, &mut seen);
    let (_, written) = access_sets(&l.body);
    seen.order
        .iter()
        .zip(seen.loads)
        .find(|(t, _)| written.contains(t) && !seen.conditional.contains(t))
        .map(|(t, v)| (t.clone(), v))
}

/// Apply `pass` to `l`, returning the new lowering and a one-line note.
pub fn apply_pass(l: &Lowered, pass: Pass) -> Result<(Lowered, String)> {
    let p = &l.program;
    let na = || Error::NotApplicable(pass.to_string());
    let (q, note) = match pass {
        Pass::DenseCache => {
            let bl = batch_loop(p).ok_or_else(na)?;
            let (t, acc) = child_reads(p, bl).ok_or_else(na)?;
            let (q, r) = dense_cache(p, &t, &bl.label, &acc)?;
            let note = format!("cached `{t}` in {} as `{}` ({} elements)", bl.label, r.cache, r.elements);
            (q, note)
        }
        Pass::Peel(f) => {
            let count = |e: &IndexExpr| match e {
                IndexExpr::Load(a, _) => p.array(a).is_some_and(|d| matches!(d.kind, ArrayKind::Count { .. })),
                _ => false,
            };
            let target = find_loop(&p.body, &|m| count(&m.bound))
                .or_else(|| find_loop(&p.body, &|m| m.bound.as_const().is_none()))
                .ok_or_else(na)?;
            (peel_loop(p, &target.label, f)?, format!("peeled {} by {f}", target.label))
        }
        Pass::Split(f) => {
            let target = find_loop(&p.body, &|m| m.dim == "d_hidden").ok_or_else(na)?;
            (split_loop(p, &target.label, f)?, format!("split {} by {f}", target.label))
        }
        Pass::Layout => {
            let t = p.tensor(&p.output).ok_or_else(na)?;
            if t.dims.len() < 2 {
                return Err(na());
            }
            let perm: Vec<usize> = (0..t.dims.len()).rev().collect();
            let q = layout_transform(p, &p.output, LayoutOp::Reorder { perm })?;
            (q, format!("reversed the axes of `{}`", p.output))
        }
        Pass::Simplify => {
            let (q, n) = simplify_checks(p);
            (q, format!("removed {n} checks"))
        }
        Pass::InferBounds => (infer_bounds(p)?, "attached inferred extents".to_string()),
        Pass::ConservativeBarriers => {
            let (q, r) = place_barriers(p, &l.facts, BarrierMode::Conservative);
            (q, format!("{} conservative barriers", r.statements))
        }
    };
    let mut out = l.clone();
    if pass == Pass::ConservativeBarriers {
        out.barriers.mode = BarrierMode::Conservative;
    }
    out.barriers.statements = q.static_barriers();
    out.program = q;
    Ok((out, note))
}

/// Apply `passes` in order.
pub fn apply_passes(l: &Lowered, passes: &[Pass]) -> Result<Lowered> {
    let mut cur = l.clone();
    for &p in passes {
        cur = apply_pass(&cur, p)?.0;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::{bound_checks, parse_program, print_program};
    use crate::lower::lower;
    use crate::models::bundled;

    #[test]
    fn names_round_trip() {
        for p in Pass::all() {
            assert_eq!(p.to_string().parse::<Pass>().unwrap(), p);
        }
        assert_eq!("peel".parse::<Pass>().unwrap(), Pass::Peel(3));
        assert!("peel:0".parse::<Pass>().is_err());
        assert!("layout:2".parse::<Pass>().is_err());
        assert!(matches!("fuse".parse::<Pass>(), Err(Error::Unknown(_))));
    }

    #[test]
    fn every_pass_applies_to_treernn() {
        let (g, s) = bundled("treernn", &[]).unwrap();
        let l = lower(&g, &s).unwrap();
        for p in Pass::all() {
            let (q, note) = apply_pass(&l, p).unwrap_or_else(|e| panic!("{p}: {e}"));
            assert!(!note.is_empty());
            let text = print_program(&q.program);
            assert_eq!(parse_program(&text).unwrap(), q.program, "{p}");
        }
    }

    #[test]
    fn dense_cache_targets_child_rows() {
        let (g, s) = bundled("treernn", &[]).unwrap();
        let l = lower(&g, &s).unwrap();
        let (q, _) = apply_pass(&l, Pass::DenseCache).unwrap();
        let c = q.program.tensor("rnn_cache").unwrap();
        assert_eq!(c.dims, ["d_batch", "d_hidden", "d_access"]);
    }

    #[test]
    fn peel_leaves_main_body_unchecked() {
        let (g, s) = bundled("treernn", &[]).unwrap();
        let l = lower(&g, &s).unwrap();
        let (q, note) = apply_pass(&l, Pass::Peel(4)).unwrap();
        let label = note.split_whitespace().nth(1).unwrap();
        assert_eq!(bound_checks(&q.program, label), Some(0));
    }

    #[test]
    fn unbatched_has_no_cache_target() {
        let (g, s) = bundled("treernn", &[]).unwrap();
        let s = crate::ra::schedule_set(&g, &s, crate::ra::Directive::DynamicBatch(false)).unwrap();
        let l = lower(&g, &s).unwrap();
        assert!(matches!(apply_pass(&l, Pass::DenseCache), Err(Error::NotApplicable(_))));
    }
}
