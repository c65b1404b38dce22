//! Recursion unrolling: one recursive step computes a node together with
//! its descendants down to `depth` levels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ra::{OpId, OpKind, RaGraph, RaIdx, RaLeaf};
use crate::structure::StructureKind;

/// Depth, relative to the body's node, of every op that depends on the
/// placeholder. Fails unless each such op has one depth and every
/// placeholder read lands exactly one level down.
fn recursive_depths(g: &RaGraph, body: OpId, ph: OpId) -> Result<BTreeMap<OpId, usize>> {
    let mut rec: Vec<OpId> = g.dependents_within(body, ph);
    if !rec.contains(&body) {
        rec.push(body);
    }
    let mut depth = BTreeMap::from([(body, 0usize)]);
    let bad = |m: String| Err(Error::Invalid(format!("cannot unroll: {m}")));
    let closure = g.closure(body);
    for &u in closure.iter().rev() {
        if !rec.contains(&u) {
            continue;
        }
        let Some(&d) = depth.get(&u) else { continue };
        let mut reach: Vec<(OpId, usize)> = Vec::new();
        match &g.ops[u].kind {
            OpKind::Compute { body: e, .. } => e.visit_loads(&mut |l| {
                if let RaLeaf::Read { op, idx } = l {
                    let k = idx
                        .iter()
                        .find_map(|i| match i {
                            RaIdx::Node(r) => Some(r.depth()),
                            _ => None,
                        })
                        .unwrap_or(0);
                    reach.push((*op, d + k));
                }
            }),
            OpKind::IfThenElse { then_op, else_op, .. } => {
                reach.push((*then_op, d));
                reach.push((*else_op, d));
            }
            _ => {}
        }
        for (o, k) in reach {
            if o == ph {
                if k != 1 {
                    return bad(format!("`{}` reads the recursion {k} levels down", g.ops[u].name));
                }
            } else if rec.contains(&o) {
                match depth.get(&o) {
                    Some(&x) if x != k => {
                        return bad(format!("`{}` is used at depths {x} and {k}", g.ops[o].name));
                    }
                    _ => {
                        depth.insert(o, k);
                    }
                }
            }
        }
    }
    Ok(depth)
}

pub fn apply_unrolling(g: &RaGraph, depth: usize) -> Result<RaGraph> {
    if g.decl.kind == StructureKind::Dag {
        return Err(Error::UnrollOnDag);
    }
    if depth == 0 {
        return Ok(g.clone());
    }
    let (_, ph, body) = g.recursion().ok_or_else(|| Error::Graph("program has no recursion_op".into()))?;
    let levels = recursive_depths(g, body, ph)?;
    // topological order of the cloned set
    let set: Vec<OpId> = g.closure(body).into_iter().filter(|u| levels.contains_key(u)).collect();
    let mut h = g.clone();
    // level l reads the placeholder through the body of level l + 1
    let mut next_body = ph;
    for level in (1..=depth).rev() {
        let mut map: BTreeMap<OpId, OpId> = BTreeMap::from([(ph, next_body)]);
        for &u in &set {
            let m = map.clone();
            let kind = h.ops[u].kind.remap(&|o| m.get(&o).copied().unwrap_or(o));
            let name = format!("{}_u{level}", h.ops[u].name);
            let shape = h.ops[u].shape.clone();
            let id = h.add_raw(&name, kind, shape, Some(u));
            map.insert(u, id);
        }
        next_body = map[&body];
    }
    for &u in &set {
        let k = h.ops[u].kind.remap(&|o| if o == ph { next_body } else { o });
        h.ops[u].kind = k;
    }
    h.validate()?;
    Ok(h)
}
