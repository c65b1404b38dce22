//! Dense caching of irregularly indexed tensors.

use super::simplify::normalize;
use super::{ArrayKind, Cond, IlirProgram, IndexExpr, Loop, Operand, Stmt, Storage, TensorDecl, TensorRole, NODE_DIM};
use crate::error::{Error, Result};
use crate::syntax::CmpOp;
use crate::tensor::ScalarFn;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CacheReport {
    pub cache: String,
    /// Cache elements, over the program parameters.
    pub elements: String,
    pub accesses: usize,
    pub rewritten: usize,
}

fn has_child_load(e: &IndexExpr, p: &IlirProgram) -> bool {
    let mut a = Vec::new();
    e.arrays(&mut a);
    a.iter().any(|n| p.array(n).is_some_and(|d| d.kind == ArrayKind::Child))
}

/// Cache the rows of `tensor` read at node indices `accesses` inside loop
/// `at_loop`, indexed by that loop's iteration space instead of by node.
pub fn dense_cache(
    p: &IlirProgram,
    tensor: &str,
    at_loop: &str,
    accesses: &[IndexExpr],
) -> Result<(IlirProgram, CacheReport)> {
    let t = p.tensor(tensor).ok_or_else(|| Error::Unknown(tensor.to_string()))?.clone();
    let l = p.find_loop(at_loop).ok_or_else(|| Error::Unknown(at_loop.to_string()))?.clone();
    let pos = t
        .dims
        .iter()
        .position(|d| d == NODE_DIM)
        .ok_or_else(|| Error::Invalid(format!("`{tensor}` has no node dimension")))?;
    if accesses.is_empty() {
        return Err(Error::AccessNotFound("no accesses given".into()));
    }
    let count = accesses.len();
    let name = {
        let mut n = format!("{tensor}_cache");
        while p.tensor(&n).is_some() {
            n.push('_');
        }
        n
    };
    let dense: Vec<usize> = (0..t.dims.len()).filter(|&k| k != pos).collect();
    let mut dims = vec![l.dim.clone()];
    let outer = match &l.bound {
        IndexExpr::Load(a, _) => match p.array(a).map(|d| &d.kind) {
            Some(ArrayKind::Count { max }) => max.clone(),
            _ => return Err(Error::UnboundedLoop(l.label.clone())),
        },
        b => b.clone(),
    };
    let mut extents = vec![outer.clone()];
    for &k in &dense {
        dims.push(t.dims[k].clone());
        extents.push(t.extents[k].clone());
    }
    if count > 1 {
        dims.push("d_access".to_string());
        extents.push(IndexExpr::Const(count as i64));
    }
    let mut decl = TensorDecl::new(&name, TensorRole::Temp, dims, extents.clone());
    decl.storage = Storage::Scratch;

    // rewrite the reads inside the loop
    let mut found = vec![0usize; count];
    let mut bad: Option<String> = None;
    let rewrite = |v: &super::ValueExpr, found: &mut Vec<usize>, bad: &mut Option<String>| {
        v.map_loads_infallible(&mut |o| match o {
            Operand::Read { tensor: tn, idx } if tn == tensor => match accesses.iter().position(|a| *a == idx[pos]) {
                Some(k) => {
                    found[k] += 1;
                    let mut ci = vec![IndexExpr::var(&l.var)];
                    for &j in &dense {
                        if has_child_load(&idx[j], p) {
                            *bad = Some(format!("`{tensor}` read with an irregular dense index"));
                        }
                        ci.push(idx[j].clone());
                    }
                    if count > 1 {
                        ci.push(IndexExpr::Const(k as i64));
                    }
                    ScalarFn::Load(Operand::Read {
                        tensor: name.clone(),
                        idx: ci,
                    })
                }
                None => ScalarFn::Load(o.clone()),
            },
            other => ScalarFn::Load(other.clone()),
        })
    };
    let body = super::map_stmts(l.body.clone(), &mut |s| {
        vec![match s {
            Stmt::Store { tensor, idx, value } => Stmt::Store {
                tensor,
                idx,
                value: rewrite(&value, &mut found, &mut bad),
            },
            other => other,
        }]
    });
    if let Some(m) = bad {
        return Err(Error::Invalid(m));
    }
    if let Some(k) = found.iter().position(|&c| c == 0) {
        return Err(Error::AccessNotFound(format!(
            "`{tensor}` is not read at {} inside {at_loop}",
            super::print::index_to_string(&accesses[k])
        )));
    }

    // fill nest: same iteration space, node lets copied
    let lets: Vec<Stmt> = l.body.iter().take_while(|s| matches!(s, Stmt::Let { .. })).cloned().collect();
    let cvars: Vec<String> = dense.iter().map(|k| format!("c{k}")).collect();
    let mut stores = Vec::new();
    for (k, a) in accesses.iter().enumerate() {
        let mut src = Vec::new();
        let mut ci = vec![IndexExpr::var(&l.var)];
        let mut d = 0;
        for j in 0..t.dims.len() {
            if j == pos {
                src.push(a.clone());
            } else {
                src.push(IndexExpr::var(&cvars[d]));
                ci.push(IndexExpr::var(&cvars[d]));
                d += 1;
            }
        }
        if count > 1 {
            ci.push(IndexExpr::Const(k as i64));
        }
        let st = Stmt::Store {
            tensor: name.clone(),
            idx: ci,
            value: ScalarFn::Load(Operand::Read {
                tensor: tensor.to_string(),
                idx: src,
            }),
        };
        stores.push(if has_child_load(a, p) {
            Stmt::If {
                cond: Cond::Cmp(CmpOp::Ge, a.clone(), IndexExpr::Const(0)),
                then: vec![st],
                els: Vec::new(),
            }
        } else {
            st
        });
    }
    let mut inner = stores;
    for (d, &k) in dense.iter().enumerate().rev() {
        inner = vec![Stmt::Loop(Loop {
            label: String::new(),
            var: cvars[d].clone(),
            dim: t.dims[k].clone(),
            bound: t.extents[k].clone(),
            parallel: false,
            extent: None,
            body: inner,
        })];
    }
    let mut fill_body = lets;
    fill_body.extend(inner);
    let fill = Loop {
        label: String::new(),
        var: l.var.clone(),
        dim: l.dim.clone(),
        bound: l.bound.clone(),
        parallel: true,
        extent: None,
        body: fill_body,
    };

    let mut q = p.clone();
    q.with_loop_parent(at_loop, &mut |s, i| {
        if let Stmt::Loop(m) = &mut s[i] {
            m.body = body.clone();
        }
        // fill and compute iterations need not share a worker
        s.insert(i, Stmt::Barrier);
        s.insert(i, Stmt::Loop(fill.clone()));
    });
    q.tensors.push(decl);
    q.relabel();
    let elements = normalize(&extents.iter().cloned().reduce(IndexExpr::mul).expect("non-empty"));
    let rewritten = found.iter().sum();
    Ok((
        q,
        CacheReport {
            cache: name,
            elements: super::print::index_to_string(&elements),
            accesses: count,
            rewritten,
        },
    ))
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
# array right[d_node: N] child
# tensor h[d_node: N, d_hidden: 8] global output
# dimmap d_node -> d_all_batches, d_batch
L1: for b = 0:num_batches:                 # d_all_batches
L2:   for n = 0:batch_sizes[b]:            # d_batch parallel
        node = batches[b,n]
L3:     for i = 0:8:                       # d_hidden
          h[node,i] = h[left[node],i] + h[right[node],i]
";

    fn loads(e: &str) -> IndexExpr {
        IndexExpr::load(e, vec![IndexExpr::var("node")])
    }

    #[test]
    fn two_accesses_share_a_cache() {
        let p = parse_program(SRC).unwrap();
        let (q, r) = dense_cache(&p, "h", "L2", &[loads("left"), loads("right")]).unwrap();
        assert_eq!(r.accesses, 2);
        assert_eq!(r.rewritten, 2);
        assert_eq!(r.elements, "16 * max_batch_size");
        let c = q.tensor("h_cache").unwrap();
        assert_eq!(c.dims, ["d_batch", "d_hidden", "d_access"]);
        assert_eq!(c.storage, Storage::Scratch);
        let text = crate::ilir::print_program(&q);
        assert!(text.contains("h[node,i] = h_cache[n,i,0] + h_cache[n,i,1]"), "{text}");
        assert!(text.contains("if left[node] >= 0:"), "{text}");
        assert_eq!(parse_program(&text).unwrap(), q);
    }

    #[test]
    fn single_access_has_loop_rank() {
        let p = parse_program(SRC).unwrap();
        let (q, _) = dense_cache(&p, "h", "L2", &[loads("left")]).unwrap();
        assert_eq!(q.tensor("h_cache").unwrap().dims.len(), 2);
    }

    #[test]
    fn missing_access() {
        let p = parse_program(SRC).unwrap();
        let e = dense_cache(&p, "h", "L2", &[loads("up")]).unwrap_err();
        assert!(matches!(e, Error::AccessNotFound(_)));
    }
}
