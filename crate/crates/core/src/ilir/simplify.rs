//! Conservative prover for loop bound checks.
//!
//! Index expressions are normalised to affine forms over opaque atoms
//! (parameters, array loads, non-affine divisions and remainders). A check
//! is proven by bounding every loop variable by its range and then showing
//! the remaining form is a non-negative combination of non-negative atoms.

use std::collections::BTreeMap;

use super::{ArrayKind, Cond, IlirProgram, IndexExpr, Stmt};
use crate::syntax::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Affine {
    terms: BTreeMap<IndexExpr, i64>,
    c: i64,
}

impl Affine {
    fn constant(c: i64) -> Self {
        Affine {
            terms: BTreeMap::new(),
            c,
        }
    }

    fn atom(e: IndexExpr) -> Self {
        Affine {
            terms: BTreeMap::from([(e, 1)]),
            c: 0,
        }
    }

    fn as_const(&self) -> Option<i64> {
        self.terms.is_empty().then_some(self.c)
    }

    fn scale(mut self, k: i64) -> Self {
        if k == 0 {
            return Affine::constant(0);
        }
        self.c *= k;
        for v in self.terms.values_mut() {
            *v *= k;
        }
        self
    }

    fn plus(mut self, o: Affine) -> Self {
        self.c += o.c;
        for (a, k) in o.terms {
            *self.terms.entry(a).or_insert(0) += k;
        }
        self.terms.retain(|_, k| *k != 0);
        self
    }

    fn to_expr(&self) -> IndexExpr {
        let mut e: Option<IndexExpr> = None;
        for (a, &k) in &self.terms {
            let t = if k.abs() == 1 {
                a.clone()
            } else {
                IndexExpr::mul(IndexExpr::Const(k.abs()), a.clone())
            };
            e = Some(match e {
                None if k < 0 => IndexExpr::sub(IndexExpr::Const(0), t),
                None => t,
                Some(x) if k < 0 => IndexExpr::sub(x, t),
                Some(x) => IndexExpr::add(x, t),
            });
        }
        match e {
            None => IndexExpr::Const(self.c),
            Some(x) if self.c > 0 => IndexExpr::add(x, IndexExpr::Const(self.c)),
            Some(x) if self.c < 0 => IndexExpr::sub(x, IndexExpr::Const(-self.c)),
            Some(x) => x,
        }
    }

    /// `k * (x / f)` with `f | k` becomes `(k / f) * (x - x % f)`.
    fn expand_divs(self) -> Self {
        let mut out = Affine::constant(self.c);
        for (a, k) in self.terms {
            if let IndexExpr::Div(x, f) = &a {
                if let Some(f) = f.as_const() {
                    if f > 0 && k % f == 0 {
                        let m = k / f;
                        let x = affine(x);
                        let r = affine(&IndexExpr::rem(x.to_expr(), IndexExpr::Const(f)));
                        out = out.plus(x.scale(m)).plus(r.scale(-m));
                        continue;
                    }
                }
            }
            out = out.plus(Affine {
                terms: BTreeMap::from([(a, k)]),
                c: 0,
            });
        }
        out
    }
}

fn affine(e: &IndexExpr) -> Affine {
    match e {
        IndexExpr::Const(c) => Affine::constant(*c),
        IndexExpr::Var(_) => Affine::atom(e.clone()),
        IndexExpr::Add(a, b) => affine(a).plus(affine(b)),
        IndexExpr::Sub(a, b) => affine(a).plus(affine(b).scale(-1)),
        IndexExpr::Mul(a, b) => {
            let (x, y) = (affine(a), affine(b));
            match (x.as_const(), y.as_const()) {
                (Some(k), _) => y.scale(k),
                (_, Some(k)) => x.scale(k),
                _ => Affine::atom(IndexExpr::mul(x.to_expr(), y.to_expr())),
            }
        }
        IndexExpr::Div(a, b) | IndexExpr::Mod(a, b) => {
            let is_div = matches!(e, IndexExpr::Div(..));
            let (x, y) = (affine(a), affine(b));
            match (x.as_const(), y.as_const()) {
                (Some(p), Some(q)) if q > 0 => Affine::constant(if is_div { p.div_euclid(q) } else { p.rem_euclid(q) }),
                (_, Some(1)) if is_div => x,
                (_, Some(1)) => Affine::constant(0),
                _ if is_div => Affine::atom(IndexExpr::div(x.to_expr(), y.to_expr())),
                _ => Affine::atom(IndexExpr::rem(x.to_expr(), y.to_expr())),
            }
        }
        IndexExpr::Load(n, args) => Affine::atom(IndexExpr::Load(n.clone(), args.iter().map(normalize).collect())),
    }
    .expand_divs()
}

/// Canonical affine form of an index expression.
pub fn normalize(e: &IndexExpr) -> IndexExpr {
    affine(e).to_expr()
}

struct Prover<'a> {
    p: &'a IlirProgram,
    /// Loop variable -> exclusive upper bound.
    loops: &'a BTreeMap<String, IndexExpr>,
}

impl Prover<'_> {
    fn nonneg(&self, a: &IndexExpr) -> bool {
        match a {
            IndexExpr::Const(c) => *c >= 0,
            IndexExpr::Var(v) => self.loops.contains_key(v) || self.p.params.contains(v),
            IndexExpr::Mod(_, f) => f.as_const().is_some_and(|f| f > 0),
            IndexExpr::Div(x, f) => f.as_const().is_some_and(|f| f > 0) && self.nonneg_form(&affine(x)),
            IndexExpr::Mul(x, y) => self.nonneg_form(&affine(x)) && self.nonneg_form(&affine(y)),
            IndexExpr::Load(n, _) => self
                .p
                .array(n)
                .is_some_and(|d| !matches!(d.kind, ArrayKind::Child)),
            _ => false,
        }
    }

    fn nonneg_form(&self, f: &Affine) -> bool {
        f.c >= 0 && f.terms.iter().all(|(a, &k)| k > 0 && self.nonneg(a))
    }

    /// Whether `f >= 0` holds for every point of the loop ranges.
    fn prove_nonneg(&self, f: Affine) -> bool {
        let mut f = f;
        for _ in 0..32 {
            let Some((v, k)) = f
                .terms
                .iter()
                .find(|(a, _)| matches!(a, IndexExpr::Var(v) if self.loops.contains_key(v)))
                .map(|(a, k)| (a.clone(), *k))
            else {
                break;
            };
            let IndexExpr::Var(name) = &v else { unreachable!() };
            f.terms.remove(&v);
            if k < 0 {
                // v <= bound - 1
                let ub = affine(&self.loops[name]).plus(Affine::constant(-1));
                f = f.plus(ub.scale(k));
            }
            f = f.expand_divs();
        }
        // remaining remainders are at most f - 1
        let mut g = Affine::constant(f.c);
        for (a, k) in f.terms {
            match &a {
                IndexExpr::Mod(_, m) if k < 0 => match m.as_const() {
                    Some(m) if m > 0 => g.c += k * (m - 1),
                    _ => return false,
                },
                _ => {
                    g.terms.insert(a, k);
                }
            }
        }
        self.nonneg_form(&g)
    }

    fn holds(&self, op: CmpOp, a: &IndexExpr, b: &IndexExpr) -> bool {
        let (x, y) = (affine(a), affine(b));
        let diff = |p: &Affine, q: &Affine, off: i64| p.clone().plus(q.clone().scale(-1)).plus(Affine::constant(off));
        match op {
            CmpOp::Lt => self.prove_nonneg(diff(&y, &x, -1)),
            CmpOp::Le => self.prove_nonneg(diff(&y, &x, 0)),
            CmpOp::Gt => self.prove_nonneg(diff(&x, &y, -1)),
            CmpOp::Ge => self.prove_nonneg(diff(&x, &y, 0)),
            CmpOp::Eq => self.prove_nonneg(diff(&x, &y, 0)) && self.prove_nonneg(diff(&y, &x, 0)),
            CmpOp::Ne => self.prove_nonneg(diff(&x, &y, -1)) || self.prove_nonneg(diff(&y, &x, -1)),
        }
    }
}

/// Decide `c` over the given loop ranges (`var` in `0..bound`).
pub fn simplify_condition(c: &Cond, loops: &BTreeMap<String, IndexExpr>, p: &IlirProgram) -> Truth {
    let Cond::Cmp(op, a, b) = c else {
        return Truth::Unknown;
    };
    let pr = Prover { p, loops };
    if pr.holds(*op, a, b) {
        Truth::True
    } else if pr.holds(op.negate(), a, b) {
        Truth::False
    } else {
        Truth::Unknown
    }
}

/// Remove every check decided by [`simplify_condition`]; returns the number
/// of conditionals removed.
pub fn simplify_checks(p: &IlirProgram) -> (IlirProgram, usize) {
    fn go(
        s: Vec<Stmt>,
        p: &IlirProgram,
        loops: &mut BTreeMap<String, IndexExpr>,
        lets: &mut BTreeMap<String, IndexExpr>,
        n: &mut usize,
    ) -> Vec<Stmt> {
        let saved = lets.clone();
        let mut out = Vec::new();
        for st in s {
            match st {
                Stmt::Let { var, value } => {
                    lets.insert(var.clone(), value.subst(&|v| lets.get(v).cloned()));
                    out.push(Stmt::Let { var, value });
                }
                Stmt::Loop(mut l) => {
                    let bound = l.bound.subst(&|v| lets.get(v).cloned());
                    let prev = loops.insert(l.var.clone(), bound);
                    l.body = go(std::mem::take(&mut l.body), p, loops, lets, n);
                    match prev {
                        Some(b) => loops.insert(l.var.clone(), b),
                        None => loops.remove(&l.var),
                    };
                    out.push(Stmt::Loop(l));
                }
                Stmt::If { cond, then, els } => {
                    let c = cond.map_exprs(&mut |e| e.subst(&|v| lets.get(v).cloned()));
                    match simplify_condition(&c, loops, p) {
                        Truth::True => {
                            *n += 1;
                            out.extend(go(then, p, loops, lets, n));
                        }
                        Truth::False => {
                            *n += 1;
                            out.extend(go(els, p, loops, lets, n));
                        }
                        Truth::Unknown => {
                            let then = go(then, p, loops, lets, n);
                            let els = go(els, p, loops, lets, n);
                            out.push(Stmt::If { cond, then, els });
                        }
                    }
                }
                other => out.push(other),
            }
        }
        *lets = saved;
        out
    }
    let mut q = p.clone();
    let mut n = 0;
    q.body = go(
        std::mem::take(&mut q.body),
        p,
        &mut BTreeMap::new(),
        &mut BTreeMap::new(),
        &mut n,
    );
    (q, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::parse::index;
    use crate::syntax::Cursor;
    use crate::Loc;

    fn ix(s: &str) -> IndexExpr {
        let mut c = Cursor::new(s, Loc { line: 1, col: 1 }).unwrap();
        index(&mut c).unwrap()
    }

    fn prog() -> IlirProgram {
        crate::ilir::parse_program("# program t\n# output x\n# param B\n").unwrap()
    }

    #[test]
    fn division_identity_cancels() {
        assert_eq!(normalize(&ix("(x / 4) * 4 + x % 4")), ix("x"));
        assert_eq!(normalize(&ix("B - (B / 8) * 8")), ix("B % 8"));
        assert_eq!(normalize(&ix("2 * (a + 1) - a")), ix("a + 2"));
    }

    #[test]
    fn peeled_checks_are_decided() {
        let p = prog();
        let mut loops = BTreeMap::new();
        loops.insert("o".to_string(), ix("B / 8"));
        loops.insert("i".to_string(), ix("8"));
        let c = Cond::Cmp(CmpOp::Lt, ix("o * 8 + i"), ix("B"));
        assert_eq!(simplify_condition(&c, &loops, &p), Truth::True);
        let mut tail = BTreeMap::new();
        tail.insert("t".to_string(), ix("B % 8"));
        let c = Cond::Cmp(CmpOp::Lt, ix("(B / 8) * 8 + t"), ix("B"));
        assert_eq!(simplify_condition(&c, &tail, &p), Truth::True);
        let c = Cond::Cmp(CmpOp::Ge, ix("(B / 8) * 8 + t"), ix("B"));
        assert_eq!(simplify_condition(&c, &tail, &p), Truth::False);
    }

    #[test]
    fn ceil_split_check_is_unknown() {
        let p = prog();
        let mut loops = BTreeMap::new();
        loops.insert("o".to_string(), ix("(B + 7) / 8"));
        loops.insert("i".to_string(), ix("8"));
        let c = Cond::Cmp(CmpOp::Lt, ix("o * 8 + i"), ix("B"));
        assert_eq!(simplify_condition(&c, &loops, &p), Truth::Unknown);
    }

    #[test]
    fn child_loads_stay_unknown() {
        let p = crate::ilir::parse_program("# program t\n# output x\n# array left[d_node: N] child\n").unwrap();
        let c = Cond::Cmp(CmpOp::Ge, ix("left[node]"), ix("0"));
        assert_eq!(simplify_condition(&c, &BTreeMap::new(), &p), Truth::Unknown);
    }
}
