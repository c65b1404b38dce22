//! Irregular Loops IR: loop nests with named dimensions, indirect index
//! expressions, variable loop bounds and conditional operators.

mod barriers;
mod bounds;
mod cache;
mod layout;
mod parse;
mod peel;
mod print;
mod simplify;

pub use barriers::{place_barriers, BarrierMode, BarrierPlacement, DependenceFact, DependenceFacts};
pub use bounds::infer_bounds;
pub use cache::{dense_cache, CacheReport};
pub use layout::{layout_transform, storage_access, LayoutOp};
pub use parse::parse_program;
pub use peel::{bound_checks, peel_loop, split_loop};
pub use print::{cond_to_string, index_to_string, print_program, value_to_string};
pub use simplify::{normalize, simplify_checks, simplify_condition, Truth};

use std::collections::BTreeMap;

use crate::syntax::CmpOp;
use crate::tensor::ScalarFn;

/// Integer index expression. `Load` is an uninterpreted access into a
/// linearizer array, e.g. `left[node]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexExpr {
    Const(i64),
    Var(String),
    Add(Box<IndexExpr>, Box<IndexExpr>),
    Sub(Box<IndexExpr>, Box<IndexExpr>),
    Mul(Box<IndexExpr>, Box<IndexExpr>),
    /// Floor division by a positive divisor.
    Div(Box<IndexExpr>, Box<IndexExpr>),
    /// Euclidean remainder by a positive divisor.
    Mod(Box<IndexExpr>, Box<IndexExpr>),
    Load(String, Vec<IndexExpr>),
}

impl IndexExpr {
    pub fn var(v: &str) -> Self {
        IndexExpr::Var(v.to_string())
    }

    pub fn load(a: &str, args: Vec<IndexExpr>) -> Self {
        IndexExpr::Load(a.to_string(), args)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Sub(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Mul(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Div(Box::new(a), Box::new(b))
    }

    pub fn rem(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Mod(Box::new(a), Box::new(b))
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            IndexExpr::Const(_) => {}
            IndexExpr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            IndexExpr::Add(a, b)
            | IndexExpr::Sub(a, b)
            | IndexExpr::Mul(a, b)
            | IndexExpr::Div(a, b)
            | IndexExpr::Mod(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            IndexExpr::Load(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    pub fn arrays(&self, out: &mut Vec<String>) {
        match self {
            IndexExpr::Const(_) | IndexExpr::Var(_) => {}
            IndexExpr::Add(a, b)
            | IndexExpr::Sub(a, b)
            | IndexExpr::Mul(a, b)
            | IndexExpr::Div(a, b)
            | IndexExpr::Mod(a, b) => {
                a.arrays(out);
                b.arrays(out);
            }
            IndexExpr::Load(n, args) => {
                out.push(n.clone());
                args.iter().for_each(|a| a.arrays(out));
            }
        }
    }

    /// Replace variables by expressions.
    pub fn subst(&self, f: &impl Fn(&str) -> Option<IndexExpr>) -> IndexExpr {
        match self {
            IndexExpr::Const(c) => IndexExpr::Const(*c),
            IndexExpr::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            IndexExpr::Add(a, b) => IndexExpr::add(a.subst(f), b.subst(f)),
            IndexExpr::Sub(a, b) => IndexExpr::sub(a.subst(f), b.subst(f)),
            IndexExpr::Mul(a, b) => IndexExpr::mul(a.subst(f), b.subst(f)),
            IndexExpr::Div(a, b) => IndexExpr::div(a.subst(f), b.subst(f)),
            IndexExpr::Mod(a, b) => IndexExpr::rem(a.subst(f), b.subst(f)),
            IndexExpr::Load(n, args) => IndexExpr::Load(n.clone(), args.iter().map(|a| a.subst(f)).collect()),
        }
    }

    /// Evaluate with `var` and `load` resolving the leaves.
    pub fn eval(&self, var: &impl Fn(&str) -> Option<i64>, load: &impl Fn(&str, &[i64]) -> Option<i64>) -> Option<i64> {
        Some(match self {
            IndexExpr::Const(c) => *c,
            IndexExpr::Var(v) => var(v)?,
            IndexExpr::Add(a, b) => a.eval(var, load)? + b.eval(var, load)?,
            IndexExpr::Sub(a, b) => a.eval(var, load)? - b.eval(var, load)?,
            IndexExpr::Mul(a, b) => a.eval(var, load)? * b.eval(var, load)?,
            IndexExpr::Div(a, b) => {
                let d = b.eval(var, load)?;
                if d <= 0 {
                    return None;
                }
                a.eval(var, load)?.div_euclid(d)
            }
            IndexExpr::Mod(a, b) => {
                let d = b.eval(var, load)?;
                if d <= 0 {
                    return None;
                }
                a.eval(var, load)?.rem_euclid(d)
            }
            IndexExpr::Load(n, args) => {
                let a: Option<Vec<i64>> = args.iter().map(|x| x.eval(var, load)).collect();
                load(n, &a?)?
            }
        })
    }

    pub fn as_const(&self) -> Option<i64> {
        self.eval(&|_| None, &|_, _| None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    /// `isleaf(e)`, a single comparison against `first_leaf_id`.
    IsLeaf(IndexExpr),
    Cmp(CmpOp, IndexExpr, IndexExpr),
}

impl Cond {
    pub fn index_exprs(&self) -> Vec<&IndexExpr> {
        match self {
            Cond::IsLeaf(e) => vec![e],
            Cond::Cmp(_, a, b) => vec![a, b],
        }
    }

    pub fn map_exprs(&self, f: &mut impl FnMut(&IndexExpr) -> IndexExpr) -> Cond {
        match self {
            Cond::IsLeaf(e) => Cond::IsLeaf(f(e)),
            Cond::Cmp(op, a, b) => Cond::Cmp(*op, f(a), f(b)),
        }
    }
}

/// Leaf of a stored value: a tensor read or a 0/1 condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Read { tensor: String, idx: Vec<IndexExpr> },
    Cond(Cond),
}

pub type ValueExpr = ScalarFn<Operand>;

#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    /// `L<k>`, assigned by [`IlirProgram::relabel`].
    pub label: String,
    pub var: String,
    pub dim: String,
    /// Iterates `var` over `0..bound`.
    pub bound: IndexExpr,
    /// Iterations are independent and may run concurrently.
    pub parallel: bool,
    /// Static upper bound on the trip count, set by bounds inference.
    pub extent: Option<IndexExpr>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Loop(Loop),
    Let { var: String, value: IndexExpr },
    Store { tensor: String, idx: Vec<IndexExpr>, value: ValueExpr },
    If { cond: Cond, then: Vec<Stmt>, els: Vec<Stmt> },
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    Global,
    Scratch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    Input,
    Output,
    Temp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorDecl {
    pub name: String,
    pub role: TensorRole,
    pub storage: Storage,
    /// Named dimension of each storage axis.
    pub dims: Vec<String>,
    /// Storage extents, over constants and runtime parameters.
    pub extents: Vec<IndexExpr>,
    /// Layout rewrites applied since lowering, oldest first, with the
    /// dims/extents they were applied to.
    pub layout: Vec<(LayoutOp, Vec<String>, Vec<IndexExpr>)>,
    /// Value every element holds before the first store; such elements
    /// count as written. Without it storage is zero-filled and unwritten.
    pub init: Option<f64>,
    /// Per-dimension requirement found by bounds inference.
    pub required: Option<Vec<IndexExpr>>,
}

impl TensorDecl {
    pub fn new(name: &str, role: TensorRole, dims: Vec<String>, extents: Vec<IndexExpr>) -> Self {
        TensorDecl {
            name: name.to_string(),
            role,
            storage: Storage::Global,
            dims,
            extents,
            layout: Vec::new(),
            init: None,
            required: None,
        }
    }

    /// Dims and extents before any layout rewrite.
    pub fn logical(&self) -> (&[String], &[IndexExpr]) {
        match self.layout.first() {
            Some((_, d, e)) => (d, e),
            None => (&self.dims, &self.extents),
        }
    }
}

/// What the values of an integer array mean, for bounds inference and the
/// dimension-map check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArrayKind {
    /// Linearizer schedule table mapping loop iterations to node ids
    /// (`leaf_batch`, `internal_batches`, `order`, ...).
    Schedule,
    /// Node-to-node map (`left`, `child0`, ...); `-1` marks a missing child.
    Child,
    /// Per-node value indexing dimension `dim` (`words`).
    Payload { dim: String },
    /// Sizes, at most `max` (`batch_sizes`).
    Count { max: IndexExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayDecl {
    pub name: String,
    pub kind: ArrayKind,
    /// Named dimension of each index position.
    pub dims: Vec<String>,
    pub extents: Vec<IndexExpr>,
}

impl ArrayDecl {
    /// Exclusive upper bound of the array's values, when known.
    pub fn value_bound(&self, p: &IlirProgram) -> Option<IndexExpr> {
        match &self.kind {
            ArrayKind::Schedule | ArrayKind::Child => Some(IndexExpr::var(NODE_PARAM)),
            ArrayKind::Payload { dim } => p.dim_extent(dim),
            ArrayKind::Count { max } => Some(IndexExpr::add(max.clone(), IndexExpr::Const(1))),
        }
    }

    /// Named dimension the values index, if any.
    pub fn value_dim(&self) -> Option<&str> {
        match &self.kind {
            ArrayKind::Schedule | ArrayKind::Child => Some(NODE_DIM),
            ArrayKind::Payload { dim } => Some(dim),
            ArrayKind::Count { .. } => None,
        }
    }
}

pub const NODE_DIM: &str = "d_node";
pub const NODE_PARAM: &str = "N";

#[derive(Debug, Clone, PartialEq)]
pub struct IlirProgram {
    pub name: String,
    /// Runtime integer parameters bound from the linearization.
    pub params: Vec<String>,
    pub arrays: Vec<ArrayDecl>,
    pub tensors: Vec<TensorDecl>,
    /// Tensor dimension -> loop dimensions that iterate it.
    pub dim_map: BTreeMap<String, Vec<String>>,
    pub body: Vec<Stmt>,
    pub output: String,
}

impl IlirProgram {
    pub fn tensor(&self, name: &str) -> Option<&TensorDecl> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut TensorDecl> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Extent of a named tensor dimension, from the first tensor using it.
    pub fn dim_extent(&self, dim: &str) -> Option<IndexExpr> {
        self.tensors.iter().find_map(|t| {
            let (d, e) = t.logical();
            d.iter().position(|x| x == dim).map(|k| e[k].clone())
        })
    }

    /// Number loops `L1, L2, ...` in program order.
    pub fn relabel(&mut self) {
        fn go(s: &mut [Stmt], k: &mut usize) {
            for st in s {
                match st {
                    Stmt::Loop(l) => {
                        *k += 1;
                        l.label = format!("L{k}");
                        go(&mut l.body, k);
                    }
                    Stmt::If { then, els, .. } => {
                        go(then, k);
                        go(els, k);
                    }
                    _ => {}
                }
            }
        }
        let mut k = 0;
        go(&mut self.body, &mut k);
    }

    pub fn find_loop(&self, label: &str) -> Option<&Loop> {
        fn go<'a>(s: &'a [Stmt], label: &str) -> Option<&'a Loop> {
            for st in s {
                match st {
                    Stmt::Loop(l) if l.label == label => return Some(l),
                    Stmt::Loop(l) => {
                        if let Some(x) = go(&l.body, label) {
                            return Some(x);
                        }
                    }
                    Stmt::If { then, els, .. } => {
                        if let Some(x) = go(then, label).or_else(|| go(els, label)) {
                            return Some(x);
                        }
                    }
                    _ => {}
                }
            }
            None
        }
        go(&self.body, label)
    }

    /// Apply `f` to the statement list containing the loop `label` and the
    /// loop's position within it.
    pub fn with_loop_parent<R>(
        &mut self,
        label: &str,
        f: &mut impl FnMut(&mut Vec<Stmt>, usize) -> R,
    ) -> Option<R> {
        fn go<R>(s: &mut Vec<Stmt>, label: &str, f: &mut impl FnMut(&mut Vec<Stmt>, usize) -> R) -> Option<R> {
            if let Some(i) = s.iter().position(|st| matches!(st, Stmt::Loop(l) if l.label == label)) {
                return Some(f(s, i));
            }
            for st in s.iter_mut() {
                let r = match st {
                    Stmt::Loop(l) => go(&mut l.body, label, f),
                    Stmt::If { then, els, .. } => go(then, label, f).or_else(|| go(els, label, f)),
                    _ => None,
                };
                if r.is_some() {
                    return r;
                }
            }
            None
        }
        go(&mut self.body, label, f)
    }

    pub fn loops(&self) -> Vec<&Loop> {
        let mut out = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if let Stmt::Loop(l) = s {
                out.push(l);
            }
        });
        out
    }

    /// Number of barrier statements in the program text.
    pub fn static_barriers(&self) -> usize {
        let mut n = 0;
        visit_stmts(&self.body, &mut |s| {
            if matches!(s, Stmt::Barrier) {
                n += 1
            }
        });
        n
    }

    /// Total scalar arithmetic in one execution of each store, summed.
    pub fn static_ops(&self) -> u64 {
        let mut n = 0;
        visit_stmts(&self.body, &mut |s| {
            if let Stmt::Store { value, .. } = s {
                n += value.static_ops()
            }
        });
        n
    }
}

/// Pre-order visit of every statement, including nested ones.
pub fn visit_stmts<'a>(s: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for st in s {
        f(st);
        match st {
            Stmt::Loop(l) => visit_stmts(&l.body, f),
            Stmt::If { then, els, .. } => {
                visit_stmts(then, f);
                visit_stmts(els, f);
            }
            _ => {}
        }
    }
}

/// Rewrite every statement bottom-up.
pub fn map_stmts(s: Vec<Stmt>, f: &mut impl FnMut(Stmt) -> Vec<Stmt>) -> Vec<Stmt> {
    let mut out = Vec::with_capacity(s.len());
    for st in s {
        let st = match st {
            Stmt::Loop(mut l) => {
                l.body = map_stmts(std::mem::take(&mut l.body), f);
                Stmt::Loop(l)
            }
            Stmt::If { cond, then, els } => Stmt::If {
                cond,
                then: map_stmts(then, f),
                els: map_stmts(els, f),
            },
            other => other,
        };
        out.extend(f(st));
    }
    out
}

/// Tensors read and written by a statement list.
pub fn access_sets(s: &[Stmt]) -> (Vec<String>, Vec<String>) {
    let mut reads: Vec<String> = Vec::new();
    let mut writes: Vec<String> = Vec::new();
    visit_stmts(s, &mut |st| {
        if let Stmt::Store { tensor, value, .. } = st {
            if !writes.contains(tensor) {
                writes.push(tensor.clone());
            }
            value.visit_loads(&mut |o| {
                if let Operand::Read { tensor, .. } = o {
                    if !reads.contains(tensor) {
                        reads.push(tensor.clone());
                    }
                }
            });
        }
    });
    (reads, writes)
}
