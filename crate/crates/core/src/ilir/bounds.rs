//! Bounds inference over named dimensions.

use std::collections::{BTreeMap, BTreeSet};

use super::simplify::normalize;
use super::{ArrayKind, IlirProgram, IndexExpr, Operand, Stmt, TensorRole};
use crate::error::{Error, Result};

#[derive(Clone, Default)]
struct Scope {
    /// Loop variable -> (dim, static extent).
    loops: BTreeMap<String, (String, IndexExpr)>,
    /// Let variable -> (loop dims it depends on, definition).
    lets: BTreeMap<String, (BTreeSet<String>, IndexExpr)>,
}

struct Access {
    tensor: String,
    idx: Vec<IndexExpr>,
    scope: Scope,
    is_read: bool,
    /// Loop whose store this is, for extent assignment.
    loops_here: Vec<String>,
}

fn dims_of(e: &IndexExpr, p: &IlirProgram, s: &Scope, out: &mut BTreeSet<String>) {
    match e {
        IndexExpr::Const(_) => {}
        IndexExpr::Var(v) => {
            if let Some((d, _)) = s.loops.get(v) {
                out.insert(d.clone());
            } else if let Some((ds, _)) = s.lets.get(v) {
                out.extend(ds.iter().cloned());
            }
        }
        IndexExpr::Add(a, b)
        | IndexExpr::Sub(a, b)
        | IndexExpr::Mul(a, b)
        | IndexExpr::Div(a, b)
        | IndexExpr::Mod(a, b) => {
            dims_of(a, p, s, out);
            dims_of(b, p, s, out);
        }
        IndexExpr::Load(n, args) => match p.array(n).map(|a| &a.kind) {
            Some(ArrayKind::Child) => {
                out.insert(super::NODE_DIM.to_string());
            }
            Some(ArrayKind::Payload { dim }) => {
                out.insert(dim.clone());
            }
            // a size, not a position
            Some(ArrayKind::Count { .. }) => {}
            _ => args.iter().for_each(|a| dims_of(a, p, s, out)),
        },
    }
}

fn resolve(e: &IndexExpr, s: &Scope) -> IndexExpr {
    e.subst(&|v| s.lets.get(v).map(|(_, d)| d.clone()))
}

/// Static upper bound on the trip count of a loop with bound `b`.
fn bound_extent(b: &IndexExpr, p: &IlirProgram, s: &Scope) -> Option<IndexExpr> {
    Some(match b {
        IndexExpr::Const(c) => IndexExpr::Const(*c),
        IndexExpr::Var(v) if p.params.contains(v) => b.clone(),
        IndexExpr::Var(v) => match s.lets.get(v) {
            Some((_, d)) => return bound_extent(d, p, s),
            None => return None,
        },
        IndexExpr::Load(n, _) => match p.array(n).map(|a| &a.kind) {
            Some(ArrayKind::Count { max }) => max.clone(),
            _ => return None,
        },
        IndexExpr::Add(a, c) => IndexExpr::add(bound_extent(a, p, s)?, bound_extent(c, p, s)?),
        IndexExpr::Mul(a, c) => IndexExpr::mul(bound_extent(a, p, s)?, bound_extent(c, p, s)?),
        IndexExpr::Div(a, f) if f.as_const().is_some_and(|f| f > 0) => IndexExpr::div(bound_extent(a, p, s)?, (**f).clone()),
        IndexExpr::Mod(_, f) if f.as_const().is_some_and(|f| f > 0) => (**f).clone(),
        _ => return None,
    })
}

/// Largest value of an index over the scope, for affine monotone forms.
fn upper(e: &IndexExpr, p: &IlirProgram, s: &Scope) -> Option<IndexExpr> {
    Some(match e {
        IndexExpr::Const(c) => IndexExpr::Const(*c),
        IndexExpr::Var(v) => {
            if let Some((_, ext)) = s.loops.get(v) {
                IndexExpr::sub(ext.clone(), IndexExpr::Const(1))
            } else if let Some((_, d)) = s.lets.get(v) {
                upper(d, p, s)?
            } else if p.params.contains(v) {
                e.clone()
            } else {
                return None;
            }
        }
        IndexExpr::Add(a, b) => IndexExpr::add(upper(a, p, s)?, upper(b, p, s)?),
        IndexExpr::Mul(a, b) => match (a.as_const(), b.as_const()) {
            (Some(k), _) if k >= 0 => IndexExpr::mul(IndexExpr::Const(k), upper(b, p, s)?),
            (_, Some(k)) if k >= 0 => IndexExpr::mul(upper(a, p, s)?, IndexExpr::Const(k)),
            _ => return None,
        },
        IndexExpr::Div(a, f) if f.as_const().is_some_and(|f| f > 0) => IndexExpr::div(upper(a, p, s)?, (**f).clone()),
        IndexExpr::Mod(_, f) if f.as_const().is_some_and(|f| f > 0) => IndexExpr::Const(f.as_const()? - 1),
        _ => return None,
    })
}

fn collect(stmts: &[Stmt], p: &IlirProgram, s: &mut Scope, enclosing: &mut Vec<String>, acc: &mut Vec<Access>) -> Result<()> {
    let saved = s.clone();
    for st in stmts {
        match st {
            Stmt::Let { var, value } => {
                let mut ds = BTreeSet::new();
                dims_of(value, p, s, &mut ds);
                let d = resolve(value, s);
                s.lets.insert(var.clone(), (ds, d));
            }
            Stmt::Loop(l) => {
                let ext = bound_extent(&l.bound, p, s).ok_or_else(|| Error::UnboundedLoop(l.label.clone()))?;
                let prev = s.loops.insert(l.var.clone(), (l.dim.clone(), normalize(&ext)));
                enclosing.push(l.var.clone());
                collect(&l.body, p, s, enclosing, acc)?;
                enclosing.pop();
                match prev {
                    Some(x) => s.loops.insert(l.var.clone(), x),
                    None => s.loops.remove(&l.var),
                };
            }
            Stmt::If { then, els, .. } => {
                collect(then, p, s, enclosing, acc)?;
                collect(els, p, s, enclosing, acc)?;
            }
            Stmt::Store { tensor, idx, value } => {
                value.visit_loads(&mut |o| {
                    if let Operand::Read { tensor, idx } = o {
                        acc.push(Access {
                            tensor: tensor.clone(),
                            idx: idx.clone(),
                            scope: s.clone(),
                            is_read: true,
                            loops_here: Vec::new(),
                        });
                    }
                });
                acc.push(Access {
                    tensor: tensor.clone(),
                    idx: idx.clone(),
                    scope: s.clone(),
                    is_read: false,
                    loops_here: enclosing.clone(),
                });
            }
            Stmt::Barrier => {}
        }
    }
    *s = saved;
    Ok(())
}

fn check_dims(a: &Access, p: &IlirProgram) -> Result<()> {
    let t = p.tensor(&a.tensor).ok_or_else(|| Error::Unknown(a.tensor.clone()))?;
    if t.dims.len() != a.idx.len() {
        return Err(Error::Invalid(format!(
            "`{}` has rank {} but is accessed with {} indices",
            t.name,
            t.dims.len(),
            a.idx.len()
        )));
    }
    for (k, e) in a.idx.iter().enumerate() {
        let mut ds = BTreeSet::new();
        dims_of(e, p, &a.scope, &mut ds);
        let td = &t.dims[k];
        let mapped = p.dim_map.get(td);
        for d in ds {
            if d != *td && !mapped.is_some_and(|m| m.contains(&d)) {
                return Err(Error::MissingDimMap {
                    tensor: t.name.clone(),
                    dim: d,
                });
            }
        }
    }
    Ok(())
}

/// Attach loop extents and per-tensor requirements. Node accesses through
/// child or schedule arrays require the full extent.
pub fn infer_bounds(p: &IlirProgram) -> Result<IlirProgram> {
    let mut acc = Vec::new();
    collect(&p.body, p, &mut Scope::default(), &mut Vec::new(), &mut acc)?;
    for a in &acc {
        check_dims(a, p)?;
    }
    // requirements from consumers, outputs needing everything
    let mut req: BTreeMap<String, Vec<IndexExpr>> = BTreeMap::new();
    for t in &p.tensors {
        if t.role == TensorRole::Output {
            req.insert(t.name.clone(), t.extents.clone());
        }
    }
    for a in acc.iter().filter(|a| a.is_read) {
        let t = p.tensor(&a.tensor).expect("checked");
        let need: Vec<IndexExpr> = a
            .idx
            .iter()
            .enumerate()
            .map(|(k, e)| match upper(e, p, &a.scope) {
                Some(u) => normalize(&IndexExpr::add(u, IndexExpr::Const(1))),
                None => t.extents[k].clone(),
            })
            .collect();
        match req.get_mut(&a.tensor) {
            None => {
                req.insert(a.tensor.clone(), need);
            }
            Some(cur) => {
                for (k, n) in need.into_iter().enumerate() {
                    if cur[k] == n {
                        continue;
                    }
                    cur[k] = match (cur[k].as_const(), n.as_const()) {
                        (Some(x), Some(y)) => IndexExpr::Const(x.max(y)),
                        _ => t.extents[k].clone(),
                    };
                }
            }
        }
    }
    let mut q = p.clone();
    for t in &mut q.tensors {
        t.required = Some(req.get(&t.name).cloned().unwrap_or_else(|| t.extents.clone()));
    }
    // a loop indexing a stored dimension directly runs over what consumers need
    let mut direct: BTreeMap<String, IndexExpr> = BTreeMap::new();
    for a in acc.iter().filter(|a| !a.is_read) {
        let r = &q.tensor(&a.tensor).expect("checked").required;
        for (k, e) in a.idx.iter().enumerate() {
            if let IndexExpr::Var(v) = e {
                if a.loops_here.contains(v) {
                    if let Some(r) = r {
                        direct.insert(v.clone(), r[k].clone());
                    }
                }
            }
        }
    }
    fn attach(s: &mut [Stmt], p: &IlirProgram, sc: &mut Scope, direct: &BTreeMap<String, IndexExpr>) {
        let saved = sc.clone();
        for st in s {
            match st {
                Stmt::Let { var, value } => {
                    let d = resolve(value, sc);
                    sc.lets.insert(var.clone(), (BTreeSet::new(), d));
                }
                Stmt::Loop(l) => {
                    let own = bound_extent(&l.bound, p, sc).map(|e| normalize(&e));
                    let ext = match (direct.get(&l.var), &own) {
                        (Some(d), Some(o)) => match (d.as_const(), o.as_const()) {
                            (Some(x), Some(y)) => Some(IndexExpr::Const(x.min(y))),
                            _ => Some(o.clone()),
                        },
                        (_, o) => o.clone(),
                    };
                    l.extent = ext;
                    attach(&mut l.body, p, sc, direct);
                }
                Stmt::If { then, els, .. } => {
                    attach(then, p, sc, direct);
                    attach(els, p, sc, direct);
                }
                _ => {}
            }
        }
        *sc = saved;
    }
    attach(&mut q.body, p, &mut Scope::default(), &direct);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::parse_program;

    const SRC: &str = "\
# program t
# output h
# param N, num_batches, max_batch_size
# array batch_sizes[d_all_batches: num_batches] count max_batch_size
# array batches[d_all_batches: num_batches, d_batch: max_batch_size] schedule
# array left[d_node: N] child
# input x[d_node: N, d_hidden: 8]
# tensor h[d_node: N, d_hidden: 8] global output
# dimmap d_node -> d_all_batches, d_batch
L1: for b = 0:num_batches:                 # d_all_batches
L2:   for n = 0:batch_sizes[b]:            # d_batch parallel
        node = batches[b,n]
L3:     for i = 0:8:                       # d_hidden
          h[node,i] = x[node,i] + h[left[node],i]
";

    #[test]
    fn extents_and_requirements() {
        let p = infer_bounds(&parse_program(SRC).unwrap()).unwrap();
        let ls = p.loops();
        assert_eq!(ls[0].extent, Some(IndexExpr::var("num_batches")));
        assert_eq!(ls[1].extent, Some(IndexExpr::var("max_batch_size")));
        assert_eq!(ls[2].extent, Some(IndexExpr::Const(8)));
        let h = p.tensor("h").unwrap();
        assert_eq!(h.required, Some(vec![IndexExpr::var("N"), IndexExpr::Const(8)]));
        assert_eq!(infer_bounds(&p).unwrap(), p);
    }

    #[test]
    fn missing_map_is_rejected() {
        let src = SRC.replace("# dimmap d_node -> d_all_batches, d_batch\n", "");
        let e = infer_bounds(&parse_program(&src).unwrap()).unwrap_err();
        assert!(matches!(e, Error::MissingDimMap { .. }), "{e:?}");
    }

    #[test]
    fn unbounded_loop_is_rejected() {
        let src = SRC.replace("0:batch_sizes[b]", "0:left[b]");
        let e = infer_bounds(&parse_program(&src).unwrap()).unwrap_err();
        assert!(matches!(e, Error::UnboundedLoop(_)), "{e:?}");
    }
}
