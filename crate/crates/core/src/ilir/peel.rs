//! Loop splitting and peeling of variable-bound loops.

use super::{Cond, IlirProgram, IndexExpr, Loop, Stmt};
use crate::error::{Error, Result};
use crate::syntax::CmpOp;

fn check(v: &str, b: &IndexExpr, body: Vec<Stmt>) -> Stmt {
    Stmt::If {
        cond: Cond::Cmp(CmpOp::Lt, IndexExpr::var(v), b.clone()),
        then: body,
        els: Vec::new(),
    }
}

fn with_loop(p: &IlirProgram, label: &str, f: impl Fn(&Loop) -> Result<Vec<Stmt>>) -> Result<IlirProgram> {
    let mut q = p.clone();
    let r = q.with_loop_parent(label, &mut |s, i| -> Result<()> {
        let Stmt::Loop(l) = &s[i] else { unreachable!() };
        let new = f(l)?;
        s.splice(i..i + 1, new);
        Ok(())
    });
    r.ok_or_else(|| Error::Unknown(label.to_string()))??;
    // iteration variables of the split loops map wherever the original did
    if let Some(l) = p.find_loop(label) {
        let new: Vec<String> = ["_o", "_i", "_t"].iter().map(|s| format!("{}{s}", l.dim)).collect();
        q.dim_map.entry(l.dim.clone()).or_default();
        for (k, v) in q.dim_map.iter_mut() {
            if v.contains(&l.dim) || *k == l.dim {
                for n in &new {
                    if !v.contains(n) {
                        v.push(n.clone());
                    }
                }
            }
        }
    }
    q.relabel();
    Ok(q)
}

fn sub_loop(l: &Loop, suffix: &str, bound: IndexExpr, body: Vec<Stmt>) -> Loop {
    Loop {
        label: String::new(),
        var: format!("{}{suffix}", l.var),
        dim: format!("{}{suffix}", l.dim),
        bound,
        parallel: l.parallel,
        extent: None,
        body,
    }
}

fn let_v(l: &Loop, e: IndexExpr) -> Stmt {
    Stmt::Let {
        var: l.var.clone(),
        value: e,
    }
}

/// Split by `factor` into a check-free main part over `floor(B/f)*f`
/// iterations and a checked tail of `B mod f`.
pub fn peel_loop(p: &IlirProgram, label: &str, factor: usize) -> Result<IlirProgram> {
    if factor == 0 {
        return Err(Error::Invalid("peel factor must be positive".into()));
    }
    with_loop(p, label, |l| {
        if l.bound.as_const().is_some() {
            return Err(Error::PeelConstantBound(l.label.clone()));
        }
        let f = IndexExpr::Const(factor as i64);
        let b = &l.bound;
        let o = sub_loop(l, "_o", IndexExpr::div(b.clone(), f.clone()), Vec::new());
        let mut inner = sub_loop(l, "_i", f.clone(), Vec::new());
        inner.body = vec![let_v(
            l,
            IndexExpr::add(IndexExpr::mul(IndexExpr::var(&o.var), f.clone()), IndexExpr::var(&inner.var)),
        )];
        inner.body.extend(l.body.iter().cloned());
        let mut main = o;
        main.body = vec![Stmt::Loop(inner)];
        let mut tail = sub_loop(l, "_t", IndexExpr::rem(b.clone(), f.clone()), Vec::new());
        tail.body = vec![
            let_v(
                l,
                IndexExpr::add(
                    IndexExpr::mul(IndexExpr::div(b.clone(), f.clone()), f.clone()),
                    IndexExpr::var(&tail.var),
                ),
            ),
            check(&l.var, b, l.body.clone()),
        ];
        Ok(vec![Stmt::Loop(main), Stmt::Loop(tail)])
    })
}

/// Ceiling split with a bound check on every iteration; exact for a
/// constant bound divisible by `factor`.
pub fn split_loop(p: &IlirProgram, label: &str, factor: usize) -> Result<IlirProgram> {
    if factor == 0 {
        return Err(Error::Invalid("split factor must be positive".into()));
    }
    with_loop(p, label, |l| {
        let f = factor as i64;
        let fe = IndexExpr::Const(f);
        let exact = l.bound.as_const().is_some_and(|b| b % f == 0);
        let outer_bound = match l.bound.as_const() {
            Some(b) => IndexExpr::Const((b + f - 1) / f),
            None => IndexExpr::div(IndexExpr::add(l.bound.clone(), IndexExpr::Const(f - 1)), fe.clone()),
        };
        let mut outer = sub_loop(l, "_o", outer_bound, Vec::new());
        let mut inner = sub_loop(l, "_i", fe.clone(), Vec::new());
        inner.body = vec![let_v(
            l,
            IndexExpr::add(IndexExpr::mul(IndexExpr::var(&outer.var), fe), IndexExpr::var(&inner.var)),
        )];
        if exact {
            inner.body.extend(l.body.iter().cloned());
        } else {
            inner.body.push(check(&l.var, &l.bound, l.body.clone()));
        }
        outer.body = vec![Stmt::Loop(inner)];
        Ok(vec![Stmt::Loop(outer)])
    })
}

/// Number of `if v < B` checks on loop-derived variables inside loop
/// `label`, counted statically.
pub fn bound_checks(p: &IlirProgram, label: &str) -> Option<usize> {
    let l = p.find_loop(label)?;
    let mut n = 0;
    super::visit_stmts(&l.body, &mut |s| {
        if let Stmt::If {
            cond: Cond::Cmp(CmpOp::Lt, IndexExpr::Var(_), _),
            ..
        } = s
        {
            n += 1
        }
    });
    Some(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::parse_program;

    const SRC: &str = "\
# program t
# output y
# param B
# input x[d_i: 64]
# tensor y[d_i: 64] global output
L1: for v = 0:B:                           # d_i parallel
      y[v] = x[v] * 2.0
";

    #[test]
    fn peel_shape() {
        let p = parse_program(SRC).unwrap();
        let q = peel_loop(&p, "L1", 4).unwrap();
        let ls = q.loops();
        assert_eq!(ls.len(), 3);
        assert_eq!(bound_checks(&q, "L1"), Some(0));
        assert_eq!(bound_checks(&q, "L3"), Some(1));
        assert_eq!(ls[2].bound, IndexExpr::rem(IndexExpr::var("B"), IndexExpr::Const(4)));
    }

    #[test]
    fn constant_bound_refused() {
        let p = parse_program(&SRC.replace("0:B:", "0:64:")).unwrap();
        assert!(matches!(peel_loop(&p, "L1", 4), Err(Error::PeelConstantBound(_))));
        let q = split_loop(&p, "L1", 4).unwrap();
        assert_eq!(bound_checks(&q, "L1"), Some(0));
        assert_eq!(q.loops()[0].bound, IndexExpr::Const(16));
    }

    #[test]
    fn split_keeps_checks() {
        let p = parse_program(SRC).unwrap();
        let q = split_loop(&p, "L1", 4).unwrap();
        assert_eq!(bound_checks(&q, "L1"), Some(1));
    }
}
