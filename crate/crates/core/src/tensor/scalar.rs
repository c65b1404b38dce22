//! Per-element scalar expressions.
//!
//! `ScalarFn` is generic over its load leaf so the same expression language
//! is shared by elementwise tensor kernels (`L = usize`, operand position),
//! recursive-API compute bodies and lowered loop programs.

use super::nonlin::{sigmoid_approx, tanh_approx, NonlinMode};
use super::ElemType;

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn<L> {
    Const(f64),
    Load(L),
    Add(Box<ScalarFn<L>>, Box<ScalarFn<L>>),
    Sub(Box<ScalarFn<L>>, Box<ScalarFn<L>>),
    Mul(Box<ScalarFn<L>>, Box<ScalarFn<L>>),
    Tanh(Box<ScalarFn<L>>),
    Sigmoid(Box<ScalarFn<L>>),
    /// Lazy: only the chosen branch is evaluated.
    Select(Box<ScalarFn<L>>, Box<ScalarFn<L>>, Box<ScalarFn<L>>),
    /// Left-fold sum over `var` in `0..extent`, starting from `0.0`.
    Sum {
        var: String,
        extent: usize,
        body: Box<ScalarFn<L>>,
    },
}

/// Evaluation settings and the running arithmetic-op counter.
#[derive(Debug, Clone, Copy)]
pub struct EvalCtx {
    pub nonlin: NonlinMode,
    pub elem: ElemType,
    pub ops: u64,
}

impl EvalCtx {
    pub fn new(nonlin: NonlinMode, elem: ElemType) -> Self {
        EvalCtx { nonlin, elem, ops: 0 }
    }

    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        self.elem.round(x)
    }
}

/// Loop/reduction variable bindings visible while evaluating.
pub type Env<'a> = Vec<(&'a str, i64)>;

pub fn env_lookup(env: &[(&str, i64)], name: &str) -> Option<i64> {
    env.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

impl<L> ScalarFn<L> {
    pub fn add(a: Self, b: Self) -> Self {
        ScalarFn::Add(Box::new(a), Box::new(b))
    }
    pub fn sub(a: Self, b: Self) -> Self {
        ScalarFn::Sub(Box::new(a), Box::new(b))
    }
    pub fn mul(a: Self, b: Self) -> Self {
        ScalarFn::Mul(Box::new(a), Box::new(b))
    }
    pub fn tanh(a: Self) -> Self {
        ScalarFn::Tanh(Box::new(a))
    }
    pub fn sigmoid(a: Self) -> Self {
        ScalarFn::Sigmoid(Box::new(a))
    }
    pub fn select(c: Self, a: Self, b: Self) -> Self {
        ScalarFn::Select(Box::new(c), Box::new(a), Box::new(b))
    }
    pub fn sum(var: impl Into<String>, extent: usize, body: Self) -> Self {
        ScalarFn::Sum {
            var: var.into(),
            extent,
            body: Box::new(body),
        }
    }

    /// Evaluate with `load` resolving leaves. Arithmetic nodes (including each
    /// accumulation step of a `Sum`) increment `ctx.ops`.
    pub fn eval<'a, E, F>(&'a self, ctx: &mut EvalCtx, env: &mut Env<'a>, load: &mut F) -> Result<f64, E>
    where
        F: FnMut(&'a L, &Env<'a>, &mut EvalCtx) -> Result<f64, E>,
    {
        Ok(match self {
            ScalarFn::Const(c) => *c,
            ScalarFn::Load(l) => load(l, env, ctx)?,
            ScalarFn::Add(a, b) => {
                let x = a.eval(ctx, env, load)?;
                let y = b.eval(ctx, env, load)?;
                ctx.ops += 1;
                ctx.round(x + y)
            }
            ScalarFn::Sub(a, b) => {
                let x = a.eval(ctx, env, load)?;
                let y = b.eval(ctx, env, load)?;
                ctx.ops += 1;
                ctx.round(x - y)
            }
            ScalarFn::Mul(a, b) => {
                let x = a.eval(ctx, env, load)?;
                let y = b.eval(ctx, env, load)?;
                ctx.ops += 1;
                ctx.round(x * y)
            }
            ScalarFn::Tanh(a) => {
                let x = a.eval(ctx, env, load)?;
                ctx.ops += 1;
                ctx.round(tanh_approx(x, ctx.nonlin))
            }
            ScalarFn::Sigmoid(a) => {
                let x = a.eval(ctx, env, load)?;
                ctx.ops += 1;
                ctx.round(sigmoid_approx(x, ctx.nonlin))
            }
            ScalarFn::Select(c, a, b) => {
                if c.eval(ctx, env, load)? != 0.0 {
                    a.eval(ctx, env, load)?
                } else {
                    b.eval(ctx, env, load)?
                }
            }
            ScalarFn::Sum { var, extent, body } => {
                let mut acc = 0.0;
                env.push((var.as_str(), 0));
                for v in 0..*extent {
                    env.last_mut().unwrap().1 = v as i64;
                    let x = match body.eval(ctx, env, load) {
                        Ok(x) => x,
                        Err(e) => {
                            env.pop();
                            return Err(e);
                        }
                    };
                    ctx.ops += 1;
                    acc = ctx.round(acc + x);
                }
                env.pop();
                acc
            }
        })
    }

    pub fn visit_loads<'a>(&'a self, f: &mut impl FnMut(&'a L)) {
        match self {
            ScalarFn::Const(_) => {}
            ScalarFn::Load(l) => f(l),
            ScalarFn::Add(a, b) | ScalarFn::Sub(a, b) | ScalarFn::Mul(a, b) => {
                a.visit_loads(f);
                b.visit_loads(f);
            }
            ScalarFn::Tanh(a) | ScalarFn::Sigmoid(a) => a.visit_loads(f),
            ScalarFn::Select(c, a, b) => {
                c.visit_loads(f);
                a.visit_loads(f);
                b.visit_loads(f);
            }
            ScalarFn::Sum { body, .. } => body.visit_loads(f),
        }
    }

    pub fn loads(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.visit_loads(&mut |l| out.push(l));
        out
    }

    /// Rebuild with every leaf mapped (possibly to a whole subexpression).
    pub fn map_loads<M, E>(
        &self,
        f: &mut impl FnMut(&L) -> Result<ScalarFn<M>, E>,
    ) -> Result<ScalarFn<M>, E> {
        Ok(match self {
            ScalarFn::Const(c) => ScalarFn::Const(*c),
            ScalarFn::Load(l) => f(l)?,
            ScalarFn::Add(a, b) => ScalarFn::add(a.map_loads(f)?, b.map_loads(f)?),
            ScalarFn::Sub(a, b) => ScalarFn::sub(a.map_loads(f)?, b.map_loads(f)?),
            ScalarFn::Mul(a, b) => ScalarFn::mul(a.map_loads(f)?, b.map_loads(f)?),
            ScalarFn::Tanh(a) => ScalarFn::tanh(a.map_loads(f)?),
            ScalarFn::Sigmoid(a) => ScalarFn::sigmoid(a.map_loads(f)?),
            ScalarFn::Select(c, a, b) => {
                ScalarFn::select(c.map_loads(f)?, a.map_loads(f)?, b.map_loads(f)?)
            }
            ScalarFn::Sum { var, extent, body } => ScalarFn::Sum {
                var: var.clone(),
                extent: *extent,
                body: Box::new(body.map_loads(f)?),
            },
        })
    }

    pub fn map_loads_infallible<M>(&self, f: &mut impl FnMut(&L) -> ScalarFn<M>) -> ScalarFn<M> {
        self.map_loads::<M, std::convert::Infallible>(&mut |l| Ok(f(l)))
            .unwrap_or_else(|e| match e {})
    }

    /// Count of arithmetic nodes, reductions expanded.
    pub fn static_ops(&self) -> u64 {
        match self {
            ScalarFn::Const(_) | ScalarFn::Load(_) => 0,
            ScalarFn::Add(a, b) | ScalarFn::Sub(a, b) | ScalarFn::Mul(a, b) => {
                1 + a.static_ops() + b.static_ops()
            }
            ScalarFn::Tanh(a) | ScalarFn::Sigmoid(a) => 1 + a.static_ops(),
            ScalarFn::Select(c, a, b) => c.static_ops() + a.static_ops().max(b.static_ops()),
            ScalarFn::Sum { extent, body, .. } => *extent as u64 * (1 + body.static_ops()),
        }
    }

    /// Constant folding. `known` supplies constant values for leaves when
    /// they are statically known. Returns the folded expression and the
    /// number of rewrites applied.
    ///
    /// Folding treats `0 * x` as `0`, which ignores NaN/inf in `x`.
    pub fn fold(&self, known: &impl Fn(&L) -> Option<f64>) -> (ScalarFn<L>, usize)
    where
        L: Clone,
    {
        let mut n = 0;
        let e = self.fold_inner(known, &mut n);
        (e, n)
    }

    fn fold_inner(&self, known: &impl Fn(&L) -> Option<f64>, n: &mut usize) -> ScalarFn<L>
    where
        L: Clone,
    {
        use ScalarFn::*;
        match self {
            Const(c) => Const(*c),
            Load(l) => match known(l) {
                Some(c) => {
                    *n += 1;
                    Const(c)
                }
                None => Load(l.clone()),
            },
            Add(a, b) => match (a.fold_inner(known, n), b.fold_inner(known, n)) {
                (Const(x), Const(y)) => {
                    *n += 1;
                    Const(x + y)
                }
                (Const(z), e) | (e, Const(z)) if z == 0.0 => {
                    *n += 1;
                    e
                }
                (x, y) => ScalarFn::add(x, y),
            },
            Sub(a, b) => match (a.fold_inner(known, n), b.fold_inner(known, n)) {
                (Const(x), Const(y)) => {
                    *n += 1;
                    Const(x - y)
                }
                (e, Const(z)) if z == 0.0 => {
                    *n += 1;
                    e
                }
                (x, y) => ScalarFn::sub(x, y),
            },
            Mul(a, b) => match (a.fold_inner(known, n), b.fold_inner(known, n)) {
                (Const(x), Const(y)) => {
                    *n += 1;
                    Const(x * y)
                }
                (Const(z), _) | (_, Const(z)) if z == 0.0 => {
                    *n += 1;
                    Const(0.0)
                }
                (Const(o), e) | (e, Const(o)) if o == 1.0 => {
                    *n += 1;
                    e
                }
                (x, y) => ScalarFn::mul(x, y),
            },
            // Only the zero fixed points are folded: they are exact in every
            // nonlinearity mode, other constants are not.
            Tanh(a) => match a.fold_inner(known, n) {
                Const(z) if z == 0.0 => {
                    *n += 1;
                    Const(0.0)
                }
                e => ScalarFn::tanh(e),
            },
            Sigmoid(a) => match a.fold_inner(known, n) {
                Const(z) if z == 0.0 => {
                    *n += 1;
                    Const(0.5)
                }
                e => ScalarFn::sigmoid(e),
            },
            Select(c, a, b) => match c.fold_inner(known, n) {
                Const(z) => {
                    *n += 1;
                    if z != 0.0 {
                        a.fold_inner(known, n)
                    } else {
                        b.fold_inner(known, n)
                    }
                }
                c => ScalarFn::select(c, a.fold_inner(known, n), b.fold_inner(known, n)),
            },
            Sum { var, extent, body } => match body.fold_inner(known, n) {
                Const(z) if z == 0.0 => {
                    *n += 1;
                    Const(0.0)
                }
                e if *extent == 0 => {
                    drop(e);
                    *n += 1;
                    Const(0.0)
                }
                e => Sum {
                    var: var.clone(),
                    extent: *extent,
                    body: Box::new(e),
                },
            },
        }
    }
}

/// Formatting hook for leaves, used by the shared expression printer.
pub trait LeafDisplay {
    fn fmt_leaf(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result;
}

impl LeafDisplay for usize {
    fn fmt_leaf(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "${self}")
    }
}

fn prec<L>(e: &ScalarFn<L>) -> u8 {
    match e {
        ScalarFn::Add(..) | ScalarFn::Sub(..) => 1,
        ScalarFn::Mul(..) => 2,
        _ => 3,
    }
}

pub fn fmt_float(f: &mut std::fmt::Formatter<'_>, c: f64) -> std::fmt::Result {
    // `{:?}` always keeps a decimal point or exponent and round-trips.
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "({c:?})")
    } else {
        write!(f, "{c:?}")
    }
}

impl<L: LeafDisplay> std::fmt::Display for ScalarFn<L> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let bin = |f: &mut std::fmt::Formatter<'_>, a: &ScalarFn<L>, op: &str, b: &ScalarFn<L>, p: u8| {
            if prec(a) < p {
                write!(f, "({a})")?;
            } else {
                write!(f, "{a}")?;
            }
            write!(f, " {op} ")?;
            if prec(b) <= p {
                write!(f, "({b})")
            } else {
                write!(f, "{b}")
            }
        };
        match self {
            ScalarFn::Const(c) => fmt_float(f, *c),
            ScalarFn::Load(l) => l.fmt_leaf(f),
            ScalarFn::Add(a, b) => bin(f, a, "+", b, 1),
            ScalarFn::Sub(a, b) => bin(f, a, "-", b, 1),
            ScalarFn::Mul(a, b) => bin(f, a, "*", b, 2),
            ScalarFn::Tanh(a) => write!(f, "tanh({a})"),
            ScalarFn::Sigmoid(a) => write!(f, "sigmoid({a})"),
            ScalarFn::Select(c, a, b) => write!(f, "select({c}, {a}, {b})"),
            ScalarFn::Sum { var, extent, body } => write!(f, "sum({var} < {extent}, {body})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type E = ScalarFn<usize>;

    fn ev(e: &E, vals: &[f64]) -> (f64, u64) {
        let mut ctx = EvalCtx::new(NonlinMode::Exact, ElemType::F64);
        let mut env = Env::new();
        let v = e
            .eval::<(), _>(&mut ctx, &mut env, &mut |l, _, _| Ok(vals[*l]))
            .unwrap();
        (v, ctx.ops)
    }

    #[test]
    fn arithmetic_and_op_count() {
        let e = E::tanh(E::add(E::Load(0), E::Load(1)));
        let (v, ops) = ev(&e, &[4.0, 6.0]);
        assert_eq!(v, 10f64.tanh());
        assert_eq!(ops, 2);
    }

    #[test]
    fn select_is_lazy() {
        let e = E::select(E::Const(1.0), E::Load(0), E::Load(7));
        assert_eq!(ev(&e, &[3.0]).0, 3.0);
    }

    #[test]
    fn sum_is_left_fold() {
        let e = E::sum("k", 3, E::Const(0.1));
        assert_eq!(ev(&e, &[]).0, ((0.0 + 0.1) + 0.1) + 0.1);
        assert_eq!(ev(&e, &[]).1, 3);
    }

    #[test]
    fn folding_zero_chain() {
        // tanh(z + z) with z known zero folds all the way down
        let e = E::tanh(E::add(E::Load(0), E::Load(0)));
        let (f, n) = e.fold(&|l| (*l == 0).then_some(0.0));
        assert_eq!(f, E::Const(0.0));
        assert!(n >= 3);
        let (g, _) = E::mul(E::Load(1), E::Const(1.0)).fold(&|_| None);
        assert_eq!(g, E::Load(1));
    }

    #[test]
    fn display_precedence() {
        let e = E::mul(E::add(E::Load(0), E::Load(1)), E::sub(E::Load(2), E::Const(-1.5)));
        assert_eq!(e.to_string(), "($0 + $1) * ($2 - (-1.5))");
    }
}
