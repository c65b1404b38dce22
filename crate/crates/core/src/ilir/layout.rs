//! Tensor layout rewrites: split, reorder and fuse storage dimensions.

use super::{map_stmts, IlirProgram, IndexExpr, Operand, Stmt, TensorDecl};
use crate::error::{Error, Result};
use crate::tensor::ScalarFn;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutOp {
    /// `dim` becomes `(dim / factor, dim % factor)`.
    Split { dim: usize, factor: usize },
    /// New axis `j` is old axis `perm[j]`.
    Reorder { perm: Vec<usize> },
    /// Axes `dim` and `dim + 1` become one.
    Fuse { dim: usize },
}

/// Rewrite one access under `op`, given the extents before the rewrite.
pub(crate) fn map_access(op: &LayoutOp, idx: &[IndexExpr], ext: &[IndexExpr]) -> Vec<IndexExpr> {
    let mut v = idx.to_vec();
    match op {
        LayoutOp::Split { dim, factor } => {
            let f = IndexExpr::Const(*factor as i64);
            let e = v.remove(*dim);
            v.insert(*dim, fold_mod(&e, &f));
            v.insert(*dim, fold_div(&e, &f));
        }
        LayoutOp::Reorder { perm } => {
            v = perm.iter().map(|&k| idx[k].clone()).collect();
        }
        LayoutOp::Fuse { dim } => {
            let b = v.remove(dim + 1);
            let a = v.remove(*dim);
            v.insert(*dim, fuse_expr(a, b, &ext[dim + 1]));
        }
    }
    v
}

fn fold_div(e: &IndexExpr, f: &IndexExpr) -> IndexExpr {
    match (e.as_const(), f.as_const()) {
        (Some(a), Some(b)) if b > 0 => IndexExpr::Const(a.div_euclid(b)),
        _ => IndexExpr::div(e.clone(), f.clone()),
    }
}

fn fold_mod(e: &IndexExpr, f: &IndexExpr) -> IndexExpr {
    match (e.as_const(), f.as_const()) {
        (Some(a), Some(b)) if b > 0 => IndexExpr::Const(a.rem_euclid(b)),
        _ => IndexExpr::rem(e.clone(), f.clone()),
    }
}

/// `a * ext + b`, recognising `(x / f) * f + x % f = x`.
fn fuse_expr(a: IndexExpr, b: IndexExpr, ext: &IndexExpr) -> IndexExpr {
    if let (IndexExpr::Div(x, f), IndexExpr::Mod(y, g)) = (&a, &b) {
        if x == y && f == g && **f == *ext {
            return (**x).clone();
        }
    }
    match (a.as_const(), b.as_const(), ext.as_const()) {
        (Some(x), Some(y), Some(e)) => IndexExpr::Const(x * e + y),
        _ => IndexExpr::add(IndexExpr::mul(a, ext.clone()), b),
    }
}

fn mul_ext(a: &IndexExpr, b: &IndexExpr) -> IndexExpr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => IndexExpr::Const(x * y),
        _ => IndexExpr::mul(a.clone(), b.clone()),
    }
}

/// Apply `op` to a declaration, recording the previous layout.
pub(crate) fn apply_decl(t: &mut TensorDecl, op: &LayoutOp) -> Result<()> {
    let rank = t.dims.len();
    let (dims, ext) = (t.dims.clone(), t.extents.clone());
    match op {
        LayoutOp::Split { dim, factor } => {
            if *dim >= rank {
                return Err(Error::Invalid(format!("`{}` has no axis {dim}", t.name)));
            }
            let Some(e) = ext[*dim].as_const() else {
                return Err(Error::Invalid(format!(
                    "axis {dim} of `{}` has a runtime extent and cannot be split",
                    t.name
                )));
            };
            if *factor == 0 || e % *factor as i64 != 0 {
                return Err(Error::NonDivisibleSplit {
                    extent: e as usize,
                    factor: *factor,
                });
            }
            let d = t.dims.remove(*dim);
            t.extents.remove(*dim);
            t.dims.insert(*dim, format!("{d}_i"));
            t.dims.insert(*dim, format!("{d}_o"));
            t.extents.insert(*dim, IndexExpr::Const(*factor as i64));
            t.extents.insert(*dim, IndexExpr::Const(e / *factor as i64));
        }
        LayoutOp::Reorder { perm } => {
            let mut seen = vec![false; rank];
            if perm.len() != rank || perm.iter().any(|&k| k >= rank || std::mem::replace(&mut seen[k], true)) {
                return Err(Error::BadPermutation(format!("{perm:?} for rank {rank}")));
            }
            t.dims = perm.iter().map(|&k| dims[k].clone()).collect();
            t.extents = perm.iter().map(|&k| ext[k].clone()).collect();
        }
        LayoutOp::Fuse { dim } => {
            if dim + 1 >= rank {
                return Err(Error::Invalid(format!("`{}` has no axes {dim} and {}", t.name, dim + 1)));
            }
            let (a, b) = (&dims[*dim], &dims[dim + 1]);
            let name = match (a.strip_suffix("_o"), b.strip_suffix("_i")) {
                (Some(x), Some(y)) if x == y => x.to_string(),
                _ => format!("{a}_{b}"),
            };
            let e = mul_ext(&ext[*dim], &ext[dim + 1]);
            t.dims.splice(*dim..dim + 2, [name]);
            t.extents.splice(*dim..dim + 2, [e]);
        }
    }
    // undoing the most recent rewrite restores the earlier layout
    let undoes = match (t.layout.last(), op) {
        (Some((LayoutOp::Split { dim: a, .. }, ..)), LayoutOp::Fuse { dim: b }) if a == b => true,
        (Some((LayoutOp::Reorder { perm: p }, ..)), LayoutOp::Reorder { perm: q }) => {
            (0..p.len()).all(|j| p[q[j]] == j)
        }
        _ => false,
    };
    if undoes && t.layout.last().is_some_and(|(_, d, e)| *d == t.dims && *e == t.extents) {
        t.layout.pop();
    } else {
        t.layout.push((op.clone(), dims, ext));
    }
    Ok(())
}

/// Rewrite a logical access of `t` into its current storage layout.
pub fn storage_access(t: &TensorDecl, logical: &[IndexExpr]) -> Vec<IndexExpr> {
    let mut v = logical.to_vec();
    for (op, _, ext) in &t.layout {
        v = map_access(op, &v, ext);
    }
    v
}

pub fn layout_transform(p: &IlirProgram, tensor: &str, op: LayoutOp) -> Result<IlirProgram> {
    let mut q = p.clone();
    let t = q.tensor_mut(tensor).ok_or_else(|| Error::Unknown(tensor.to_string()))?;
    let old_dims = t.dims.clone();
    let old_ext = t.extents.clone();
    apply_decl(t, &op)?;
    let cur = t.dims.clone();
    // new storage dims are iterated by whatever iterated their sources
    let (sources, new): (Vec<&String>, Vec<String>) = match &op {
        LayoutOp::Split { dim, .. } => (vec![&old_dims[*dim]], cur[*dim..dim + 2].to_vec()),
        LayoutOp::Fuse { dim } => (vec![&old_dims[*dim], &old_dims[dim + 1]], vec![cur[*dim].clone()]),
        LayoutOp::Reorder { .. } => (vec![], vec![]),
    };
    let mut srcs: Vec<String> = Vec::new();
    for o in sources {
        srcs.push(o.clone());
        srcs.extend(q.dim_map.get(o).cloned().unwrap_or_default());
    }
    for d in new {
        if !old_dims.contains(&d) && !q.dim_map.contains_key(&d) {
            q.dim_map.insert(d, srcs.clone());
        }
    }
    let rw = |idx: &[IndexExpr]| map_access(&op, idx, &old_ext);
    let name = tensor.to_string();
    let fix = |e: &super::ValueExpr| {
        e.map_loads_infallible(&mut |o| match o {
            Operand::Read { tensor, idx } if *tensor == name => ScalarFn::Load(Operand::Read {
                tensor: tensor.clone(),
                idx: rw(idx),
            }),
            other => ScalarFn::Load(other.clone()),
        })
    };
    q.body = map_stmts(std::mem::take(&mut q.body), &mut |s| {
        vec![match s {
            Stmt::Store { tensor, idx, value } => {
                let idx = if tensor == name { rw(&idx) } else { idx };
                Stmt::Store {
                    tensor,
                    idx,
                    value: fix(&value),
                }
            }
            other => other,
        }]
    });
    Ok(q)
}
