//! Recursive refactoring: move the recursion backedge to a cut of the body.
//!
//! For a body `isleaf(n) ? leaf(n) : Q(P(n))` where `P` is the only op on
//! the cut that reads the earlier backedge, the new recursion carries `P`:
//!
//! ```text
//! V(c)  = isleaf(c) ? leaf(c) : Q(ph2[c])        values of the old result
//! P'(n) = P with every read of ph[n.k] replaced by V(n.k)
//! rec2  = recursion(ph2, isleaf(n) ? 0 : P'(n))
//! out(n) = isleaf(n) ? leaf(n) : Q(rec2[n])       epilogue, run at roots
//! ```
//!
//! `V` and the epilogue share the output tensor, so every non-root node gets
//! its row from its parent's call and every root from the epilogue.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ra::{NodeRef, OpId, OpKind, Pred, RaExpr, RaGraph, RaIdx, RaLeaf};
use crate::tensor::ScalarFn;

#[derive(Debug, Clone, PartialEq)]
pub struct CutInfo {
    pub carrier: OpId,
    /// Ops after the cut, in topological order (ends with the recursive case).
    pub post: Vec<OpId>,
    /// Ops before the cut that read the placeholder, including the carrier.
    pub pre: Vec<OpId>,
    pub leaf_case: OpId,
    pub rec_case: OpId,
}

fn reads_at(e: &RaExpr, target: OpId) -> Vec<Option<NodeRef>> {
    let mut out = Vec::new();
    e.visit_loads(&mut |l| {
        if let RaLeaf::Read { op, idx } = l {
            if *op == target {
                out.push(idx.iter().find_map(|i| match i {
                    RaIdx::Node(r) => Some(r.clone()),
                    _ => None,
                }));
            }
        }
    });
    out
}

pub fn analyze_cut(g: &RaGraph, edges: &[(OpId, OpId)]) -> Result<CutInfo> {
    let bad = |m: String| Err(Error::InvalidCut(m));
    let (_, ph, body) = g.recursion().ok_or_else(|| Error::Graph("program has no recursion_op".into()))?;
    let (leaf_case, rec_case) = match g.ops[body].kind {
        OpKind::IfThenElse {
            pred: Pred::IsLeaf,
            then_op,
            else_op,
        } => (then_op, else_op),
        _ => return bad("the recursion body must be a leaf conditional".into()),
    };
    let Some(&(carrier, _)) = edges.first() else {
        return bad("empty cut".into());
    };
    for &(a, b) in edges {
        if a >= g.ops.len() || b >= g.ops.len() {
            return bad(format!("edge ({a}, {b}) refers to a missing op"));
        }
        if a != carrier {
            return bad(format!(
                "cut edges must leave a single op, found `{}` and `{}`",
                g.ops[carrier].name, g.ops[a].name
            ));
        }
        if !g.operands(b).contains(&a) {
            return bad(format!("`{}` -> `{}` is not an edge", g.ops[a].name, g.ops[b].name));
        }
    }
    let name = |o: OpId| g.ops[o].name.clone();
    let inside = g.closure(rec_case);
    if !inside.contains(&carrier) || carrier == rec_case {
        return bad(format!("`{}` is not strictly inside the recursive case", name(carrier)));
    }
    if !matches!(g.ops[carrier].kind, OpKind::Compute { .. }) || !g.ops[carrier].is_node_indexed() {
        return bad(format!("cut carrier `{}` must be a node-indexed compute", name(carrier)));
    }
    let dep_ph = g.dependents_within(rec_case, ph);
    if !dep_ph.contains(&carrier) {
        return bad(format!("cut carrier `{}` does not depend on the recursion", name(carrier)));
    }
    let up = g.closure(carrier);
    let post: Vec<OpId> = inside
        .iter()
        .copied()
        .filter(|u| !up.contains(u) && matches!(g.ops[*u].kind, OpKind::Compute { .. } | OpKind::IfThenElse { .. }))
        .collect();
    let pre: Vec<OpId> = up.iter().copied().filter(|u| dep_ph.contains(u)).collect();
    for &q in &post {
        for o in g.operands(q) {
            if o == ph {
                return bad(format!("`{}` reads the recursion after the cut", name(q)));
            }
            if o == carrier {
                if !edges.contains(&(carrier, q)) {
                    return bad(format!("edge `{}` -> `{}` crosses the cut but is not listed", name(carrier), name(q)));
                }
                if let OpKind::Compute { body, .. } = &g.ops[q].kind {
                    if reads_at(body, carrier).iter().any(|r| *r != Some(NodeRef::This)) {
                        return bad(format!("`{}` reads `{}` at another node", name(q), name(carrier)));
                    }
                }
            } else if pre.contains(&o) {
                return bad(format!("`{}` -> `{}` crosses the cut from a second op", name(o), name(q)));
            } else if post.contains(&o) {
                if let OpKind::Compute { body, .. } = &g.ops[q].kind {
                    if reads_at(body, o).iter().any(|r| *r != Some(NodeRef::This)) {
                        return bad(format!("`{}` reads `{}` at a child after the cut", name(q), name(o)));
                    }
                }
            }
        }
    }
    for &(_, b) in edges {
        if !post.contains(&b) {
            return bad(format!("`{}` is not after the cut", name(b)));
        }
    }
    Ok(CutInfo {
        carrier,
        post,
        pre,
        leaf_case,
        rec_case,
    })
}

pub(crate) fn clone_set(
    g: &mut RaGraph,
    ops: &[OpId],
    suffix: &str,
    base: &BTreeMap<OpId, OpId>,
) -> BTreeMap<OpId, OpId> {
    let mut map = base.clone();
    for &u in ops {
        let m = map.clone();
        let kind = g.ops[u].kind.remap(&|o| m.get(&o).copied().unwrap_or(o));
        let name = format!("{}_{suffix}", g.ops[u].name);
        let shape = g.ops[u].shape.clone();
        let id = g.add_raw(&name, kind, shape, None);
        map.insert(u, id);
    }
    map
}

pub fn apply_refactoring(g: &RaGraph, edges: &[(OpId, OpId)]) -> Result<RaGraph> {
    if g.decl.kind == crate::structure::StructureKind::Dag {
        return Err(Error::RefactorOnDag);
    }
    if edges.is_empty() {
        return Ok(g.clone());
    }
    let info = analyze_cut(g, edges)?;
    let (rec, ph, body) = g.recursion().expect("checked by analyze_cut");
    let mut h = g.clone();
    h.transformed = true;
    let out_name = h.ops[rec].name.clone();
    let old = h.fresh(&format!("{out_name}_old"));
    h.rename(rec, &old);
    let p = info.carrier;
    let shape = h.ops[p].shape.clone();
    let full = h.ops[rec].shape.clone();

    let ph2 = h.add_raw(&format!("{}_ph", h.ops[p].name), OpKind::Placeholder, shape.clone(), None);
    let q_r = clone_set(&mut h, &info.post, "r", &BTreeMap::from([(p, ph2)]));
    let v = h.add_raw(
        &format!("{out_name}_v"),
        OpKind::IfThenElse {
            pred: Pred::IsLeaf,
            then_op: info.leaf_case,
            else_op: q_r[&info.rec_case],
        },
        full.clone(),
        None,
    );
    let p_r = clone_set(&mut h, &info.pre, "r", &BTreeMap::from([(ph, v)]));
    let args = match &h.ops[p].kind {
        OpKind::Compute { args, .. } => args.clone(),
        _ => unreachable!("carrier is a compute"),
    };
    let stub = h.add_raw(
        &format!("{}_leaf", h.ops[p].name),
        OpKind::Compute {
            args,
            body: ScalarFn::Const(0.0),
        },
        shape.clone(),
        None,
    );
    let body2 = h.add_raw(
        &format!("{}_r", h.ops[body].name),
        OpKind::IfThenElse {
            pred: Pred::IsLeaf,
            then_op: stub,
            else_op: p_r[&p],
        },
        shape.clone(),
        None,
    );
    let rec2 = h.add_raw(
        &format!("{out_name}_r"),
        OpKind::Recursion {
            placeholder: ph2,
            body: body2,
        },
        shape,
        None,
    );
    let q_e = clone_set(&mut h, &info.post, "e", &BTreeMap::from([(p, rec2)]));
    for &u in &info.post {
        h.ops[q_e[&u]].alias = Some(q_r[&u]);
    }
    let out = h.add_raw(
        &out_name,
        OpKind::IfThenElse {
            pred: Pred::IsLeaf,
            then_op: info.leaf_case,
            else_op: q_e[&info.rec_case],
        },
        full,
        None,
    );
    h.ops[v].alias = Some(out);
    h.output = Some(out);
    // the old recursion must disappear before `recursion()` is consulted
    h.ops[rec].kind = OpKind::Input;
    h.retain_live();
    h.cuts.clear();
    h.validate()?;
    Ok(h)
}
