//! Recursive API: operator DAG with one recursion over the input structure.

mod expr;
mod model;
mod schedule;

pub use expr::{parse_expr, print_expr, ExprScope};
pub use model::{build as build_model, load_model, model_to_json, named_cut, Dim, ModelFile, OpSpec, ScheduleSpec};
pub use schedule::{schedule_set, Cut, Directive, RaSchedule};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::structure::{StructureDecl, StructureKind};
use crate::syntax::CmpOp;
use crate::tensor::ScalarFn;

pub type OpId = usize;

/// One dimension of an op's shape. `Node` is the structure's node count `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Extent {
    Node,
    Const(usize),
}

impl std::fmt::Display for Extent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extent::Node => f.write_str("N"),
            Extent::Const(c) => write!(f, "{c}"),
        }
    }
}

pub type Shape = Vec<Extent>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChildSel {
    Fixed(usize),
    /// Child position bound by an enclosing `childsum`.
    Var(String),
}

/// A node relative to the node an op is evaluated at.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeRef {
    This,
    Child(ChildSel),
}

impl NodeRef {
    pub fn depth(&self) -> usize {
        match self {
            NodeRef::This => 0,
            NodeRef::Child(_) => 1,
        }
    }
}

/// Affine-ish integer expression over dense axis variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AxisExpr {
    Const(i64),
    Var(String),
    Add(Box<AxisExpr>, Box<AxisExpr>),
    Sub(Box<AxisExpr>, Box<AxisExpr>),
    Mul(Box<AxisExpr>, Box<AxisExpr>),
}

impl AxisExpr {
    pub fn var(v: &str) -> Self {
        AxisExpr::Var(v.to_string())
    }

    pub fn eval(&self, env: &[(&str, i64)]) -> Option<i64> {
        Some(match self {
            AxisExpr::Const(c) => *c,
            AxisExpr::Var(v) => crate::tensor::env_lookup(env, v)?,
            AxisExpr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            AxisExpr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            AxisExpr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
        })
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            AxisExpr::Const(_) => {}
            AxisExpr::Var(v) => out.push(v.clone()),
            AxisExpr::Add(a, b) | AxisExpr::Sub(a, b) | AxisExpr::Mul(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

/// One index position of a tensor read.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RaIdx {
    Node(NodeRef),
    Axis(AxisExpr),
    /// `words[n]`: integer payload of a node-indexed input.
    Gather { array: OpId, node: NodeRef },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RaLeaf {
    Read { op: OpId, idx: Vec<RaIdx> },
    /// 1.0 if the child exists, else 0.0.
    HasChild(ChildSel),
    /// 1.0 if the comparison holds, else 0.0.
    Cmp(CmpOp, AxisExpr, AxisExpr),
}

pub type RaExpr = ScalarFn<RaLeaf>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pred {
    IsLeaf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Input,
    Placeholder,
    /// `args` are the lambda parameters; for node-indexed ops `args[0]` is
    /// the node variable.
    Compute { args: Vec<String>, body: RaExpr },
    IfThenElse { pred: Pred, then_op: OpId, else_op: OpId },
    Recursion { placeholder: OpId, body: OpId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaOp {
    pub name: String,
    pub kind: OpKind,
    pub shape: Shape,
    /// Op whose materialized tensor this op shares (value-equivalent at
    /// every node). Set by graph transforms.
    pub alias: Option<OpId>,
}

impl RaOp {
    pub fn is_node_indexed(&self) -> bool {
        self.shape.first() == Some(&Extent::Node)
    }

    /// Extents after the node dimension (all extents for global ops).
    pub fn dense_dims(&self) -> Vec<usize> {
        self.shape
            .iter()
            .filter_map(|e| match e {
                Extent::Const(c) => Some(*c),
                Extent::Node => None,
            })
            .collect()
    }
}

/// Model-level declarations that are not ops.
#[derive(Debug, Clone, PartialEq)]
pub struct RaGraph {
    pub name: String,
    pub decl: StructureDecl,
    /// Whether every internal node must have exactly `max_children`
    /// children (fixed-position models such as `n.left` / `n.right`).
    pub full_arity: bool,
    pub params: BTreeMap<String, i64>,
    pub ops: Vec<RaOp>,
    /// Result op; defaults to the recursion.
    pub output: Option<OpId>,
    pub cuts: BTreeMap<String, Vec<(OpId, OpId)>>,
    /// Produced by refactoring: the body may read the placeholder at its
    /// own node, where it holds the value carried from the previous step.
    pub transformed: bool,
}

impl RaGraph {
    pub fn new(name: &str, decl: StructureDecl) -> Self {
        RaGraph {
            name: name.to_string(),
            decl,
            full_arity: false,
            params: BTreeMap::new(),
            ops: Vec::new(),
            output: None,
            cuts: BTreeMap::new(),
            transformed: false,
        }
    }

    pub fn op(&self, id: OpId) -> &RaOp {
        &self.ops[id]
    }

    pub fn find(&self, name: &str) -> Option<OpId> {
        self.ops.iter().position(|o| o.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<OpId> {
        self.find(name).ok_or_else(|| Error::Unknown(name.to_string()))
    }

    fn fresh_name(&self, base: &str) -> String {
        if self.find(base).is_none() {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}_{k}")).find(|n| self.find(n).is_none()).unwrap()
    }

    fn push(&mut self, name: &str, kind: OpKind, shape: Shape) -> Result<OpId> {
        if self.find(name).is_some() {
            return Err(Error::Graph(format!("duplicate op name `{name}`")));
        }
        if shape.is_empty() {
            return Err(Error::Shape(format!("`{name}`: rank must be at least 1")));
        }
        if shape.iter().skip(1).any(|e| *e == Extent::Node) {
            return Err(Error::Shape(format!("`{name}`: only the leading dimension may be N")));
        }
        if shape.contains(&Extent::Const(0)) {
            return Err(Error::Shape(format!("`{name}`: extents must be at least 1")));
        }
        self.ops.push(RaOp {
            name: name.to_string(),
            kind,
            shape,
            alias: None,
        });
        Ok(self.ops.len() - 1)
    }

    pub fn input_tensor(&mut self, name: &str, shape: Shape) -> Result<OpId> {
        self.push(name, OpKind::Input, shape)
    }

    pub fn placeholder(&mut self, name: &str, shape: Shape) -> Result<OpId> {
        if shape.first() != Some(&Extent::Node) {
            return Err(Error::Shape(format!("placeholder `{name}` must be node-indexed")));
        }
        self.push(name, OpKind::Placeholder, shape)
    }

    pub fn compute(&mut self, name: &str, shape: Shape, args: &[&str], body: RaExpr) -> Result<OpId> {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        self.check_compute(name, &shape, &args, &body)?;
        self.push(name, OpKind::Compute { args, body }, shape)
    }

    /// `compute` with the body given in expression syntax.
    pub fn compute_str(&mut self, name: &str, shape: Shape, args: &[&str], body: &str) -> Result<OpId> {
        let args_s: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let node_indexed = shape.first() == Some(&Extent::Node);
        let e = parse_expr(self, &ExprScope::new(&args_s, node_indexed), body, crate::Loc { line: 1, col: 1 })?;
        self.compute(name, shape, args, e)
    }

    pub fn if_then_else(&mut self, name: &str, shape: Shape, pred: Pred, then_op: OpId, else_op: OpId) -> Result<OpId> {
        for (what, o) in [("then", then_op), ("else", else_op)] {
            let op = self.ops.get(o).ok_or(Error::Index(o))?;
            if op.shape != shape {
                return Err(Error::Shape(format!(
                    "`{name}`: {what} branch `{}` has shape {}, expected {}",
                    op.name,
                    fmt_shape(&op.shape),
                    fmt_shape(&shape)
                )));
            }
            if !matches!(op.kind, OpKind::Compute { .. } | OpKind::IfThenElse { .. }) {
                return Err(Error::Graph(format!("`{name}`: {what} branch `{}` must be a compute", op.name)));
            }
        }
        if shape.first() != Some(&Extent::Node) {
            return Err(Error::Shape(format!("`{name}`: conditional must be node-indexed")));
        }
        self.push(name, OpKind::IfThenElse { pred, then_op, else_op }, shape)
    }

    pub fn recursion_op(&mut self, name: &str, placeholder: OpId, body: OpId) -> Result<OpId> {
        if let Some((r, _, _)) = self.recursion() {
            return Err(Error::MultipleRecursion(self.ops[r].name.clone(), name.to_string()));
        }
        let ph = self.ops.get(placeholder).ok_or(Error::Index(placeholder))?;
        if ph.kind != OpKind::Placeholder {
            return Err(Error::Graph(format!("`{}` is not a placeholder", ph.name)));
        }
        let b = self.ops.get(body).ok_or(Error::Index(body))?;
        if b.shape != ph.shape {
            return Err(Error::Shape(format!(
                "`{name}`: body `{}` has shape {}, placeholder `{}` has {}",
                b.name,
                fmt_shape(&b.shape),
                ph.name,
                fmt_shape(&ph.shape)
            )));
        }
        let shape = ph.shape.clone();
        self.push(name, OpKind::Recursion { placeholder, body }, shape)
    }

    pub fn recursion(&self) -> Option<(OpId, OpId, OpId)> {
        self.ops.iter().enumerate().find_map(|(i, o)| match o.kind {
            OpKind::Recursion { placeholder, body } => Some((i, placeholder, body)),
            _ => None,
        })
    }

    pub fn output_op(&self) -> Option<OpId> {
        self.output.or_else(|| self.recursion().map(|r| r.0))
    }

    /// Direct operands, in order of first appearance.
    pub fn operands(&self, id: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        let mut add = |o: OpId| {
            if !out.contains(&o) {
                out.push(o);
            }
        };
        match &self.ops[id].kind {
            OpKind::Input | OpKind::Placeholder => {}
            OpKind::Compute { body, .. } => body.visit_loads(&mut |l| {
                if let RaLeaf::Read { op, idx } = l {
                    for i in idx {
                        if let RaIdx::Gather { array, .. } = i {
                            add(*array);
                        }
                    }
                    add(*op);
                }
            }),
            OpKind::IfThenElse { then_op, else_op, .. } => {
                add(*then_op);
                add(*else_op);
            }
            OpKind::Recursion { placeholder, body } => {
                add(*placeholder);
                add(*body);
            }
        }
        out
    }

    /// Ops reachable backwards from `root` without passing through a
    /// recursion's placeholder binding, in topological order.
    pub fn closure(&self, root: OpId) -> Vec<OpId> {
        let mut seen = vec![false; self.ops.len()];
        let mut out = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((u, done)) = stack.pop() {
            if done {
                out.push(u);
                continue;
            }
            if seen[u] {
                continue;
            }
            seen[u] = true;
            stack.push((u, true));
            let ops = match self.ops[u].kind {
                OpKind::Recursion { .. } => vec![],
                _ => self.operands(u),
            };
            for o in ops.into_iter().rev() {
                if !seen[o] {
                    stack.push((o, false));
                }
            }
        }
        out
    }

    pub fn consumers(&self, id: OpId) -> Vec<OpId> {
        (0..self.ops.len()).filter(|&u| self.operands(u).contains(&id)).collect()
    }

    fn check_compute(&self, name: &str, shape: &Shape, args: &[String], body: &RaExpr) -> Result<()> {
        let node_indexed = shape.first() == Some(&Extent::Node);
        if args.len() != shape.len() {
            return Err(Error::Shape(format!(
                "`{name}`: {} lambda parameters for rank-{} shape",
                args.len(),
                shape.len()
            )));
        }
        let mut err = None;
        let mc = self.decl.max_children;
        let check_ref = |r: &NodeRef, err: &mut Option<Error>| {
            if !node_indexed {
                err.get_or_insert(Error::Graph(format!("`{name}`: global compute cannot refer to nodes")));
            }
            if let NodeRef::Child(ChildSel::Fixed(k)) = r {
                if *k >= mc {
                    err.get_or_insert(Error::ChildIndex {
                        op: name.to_string(),
                        index: *k,
                        max_children: mc,
                    });
                }
            }
        };
        body.visit_loads(&mut |l| match l {
            RaLeaf::Read { op, idx } => {
                let Some(src) = self.ops.get(*op) else {
                    err.get_or_insert(Error::Index(*op));
                    return;
                };
                if idx.len() != src.shape.len() {
                    err.get_or_insert(Error::Shape(format!(
                        "`{name}`: read of `{}` has {} indices, rank is {}",
                        src.name,
                        idx.len(),
                        src.shape.len()
                    )));
                    return;
                }
                for (i, (ix, ext)) in idx.iter().zip(&src.shape).enumerate() {
                    match (ix, ext) {
                        (RaIdx::Node(r), Extent::Node) => {
                            check_ref(r, &mut err);
                            if src.kind == OpKind::Placeholder && *r == NodeRef::This && !self.transformed {
                                err.get_or_insert(Error::Graph(format!(
                                    "`{name}`: placeholder `{}` read at the node itself",
                                    src.name
                                )));
                            }
                        }
                        (RaIdx::Node(_), _) | (_, Extent::Node) => {
                            err.get_or_insert(Error::Shape(format!(
                                "`{name}`: index {i} of `{}` must {}be a node reference",
                                src.name,
                                if *ext == Extent::Node { "" } else { "not " }
                            )));
                        }
                        (RaIdx::Gather { array, node }, _) => {
                            check_ref(node, &mut err);
                            match self.ops.get(*array) {
                                Some(a) if a.kind == OpKind::Input && a.shape == vec![Extent::Node] => {}
                                _ => {
                                    err.get_or_insert(Error::Graph(format!(
                                        "`{name}`: gather array must be a node-indexed rank-1 input"
                                    )));
                                }
                            }
                        }
                        (RaIdx::Axis(_), _) => {}
                    }
                }
            }
            RaLeaf::HasChild(sel) => check_ref(&NodeRef::Child(sel.clone()), &mut err),
            RaLeaf::Cmp(..) => {}
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Completeness and recursion checks.
    pub fn validate(&self) -> Result<()> {
        let (rec, ph, body) = self.recursion().ok_or_else(|| {
            match self.ops.iter().find(|o| o.kind == OpKind::Placeholder) {
                Some(p) => Error::DanglingPlaceholder(p.name.clone()),
                None => Error::Graph("program has no recursion_op".into()),
            }
        })?;
        for (i, o) in self.ops.iter().enumerate() {
            if o.kind == OpKind::Placeholder && i != ph {
                return Err(Error::DanglingPlaceholder(o.name.clone()));
            }
            for p in self.operands(i) {
                if p >= self.ops.len() {
                    return Err(Error::Index(p));
                }
            }
        }
        let inside = self.closure(body);
        for (i, _) in self.ops.iter().enumerate() {
            if i != rec && !inside.contains(&i) && self.operands(i).contains(&ph) {
                return Err(Error::Graph(format!(
                    "placeholder `{}` read by `{}` outside the recursion body",
                    self.ops[ph].name, self.ops[i].name
                )));
            }
        }
        // Minimum evaluation depth of each op relative to the body's node;
        // the placeholder must only be reached at depth >= 1.
        let mut depth: Vec<Option<usize>> = vec![None; self.ops.len()];
        depth[body] = Some(0);
        for &u in inside.iter().rev() {
            let Some(d) = depth[u] else { continue };
            let relax = |o: OpId, k: usize, depth: &mut Vec<Option<usize>>| {
                let v = d + k;
                if depth[o].is_none_or(|x| v < x) {
                    depth[o] = Some(v);
                }
            };
            match &self.ops[u].kind {
                OpKind::Compute { body: e, .. } => e.visit_loads(&mut |l| {
                    if let RaLeaf::Read { op, idx } = l {
                        let k = idx
                            .iter()
                            .find_map(|i| match i {
                                RaIdx::Node(r) => Some(r.depth()),
                                _ => None,
                            })
                            .unwrap_or(0);
                        relax(*op, k, &mut depth);
                    }
                }),
                OpKind::IfThenElse { then_op, else_op, .. } => {
                    relax(*then_op, 0, &mut depth);
                    relax(*else_op, 0, &mut depth);
                }
                _ => {}
            }
        }
        if depth[ph] == Some(0) && !self.transformed {
            return Err(Error::Graph(format!(
                "placeholder `{}` is read at the recursion's own node",
                self.ops[ph].name
            )));
        }
        if let Some(o) = self.output {
            let op = self.ops.get(o).ok_or(Error::Index(o))?;
            if !op.is_node_indexed() {
                return Err(Error::Shape(format!("output `{}` must be node-indexed", op.name)));
            }
        }
        Ok(())
    }

    /// Dense extent of a named parameter.
    pub fn param(&self, name: &str) -> Option<i64> {
        self.params.get(name).copied()
    }

    /// Add a uniquely named copy of `id` (kind replaced by `kind`).
    pub fn add_raw(&mut self, base: &str, kind: OpKind, shape: Shape, alias: Option<OpId>) -> OpId {
        let name = self.fresh_name(base);
        self.ops.push(RaOp { name, kind, shape, alias });
        self.ops.len() - 1
    }

    /// Representative op whose tensor stores values of `id`.
    pub fn storage_of(&self, mut id: OpId) -> OpId {
        while let Some(a) = self.ops[id].alias {
            id = a;
        }
        id
    }

    pub fn kind_accepts(&self, k: StructureKind) -> bool {
        match self.decl.kind {
            StructureKind::Dag => true,
            StructureKind::Tree => k != StructureKind::Dag,
            StructureKind::Sequence => k == StructureKind::Sequence,
        }
    }
}

impl OpKind {
    /// Same kind with every referenced op id passed through `f`.
    pub fn remap(&self, f: &impl Fn(OpId) -> OpId) -> OpKind {
        match self {
            OpKind::Input => OpKind::Input,
            OpKind::Placeholder => OpKind::Placeholder,
            OpKind::Compute { args, body } => OpKind::Compute {
                args: args.clone(),
                body: body.map_loads_infallible(&mut |l| ScalarFn::Load(l.remap(f))),
            },
            OpKind::IfThenElse { pred, then_op, else_op } => OpKind::IfThenElse {
                pred: *pred,
                then_op: f(*then_op),
                else_op: f(*else_op),
            },
            OpKind::Recursion { placeholder, body } => OpKind::Recursion {
                placeholder: f(*placeholder),
                body: f(*body),
            },
        }
    }
}

impl RaLeaf {
    pub fn remap(&self, f: &impl Fn(OpId) -> OpId) -> RaLeaf {
        match self {
            RaLeaf::Read { op, idx } => RaLeaf::Read {
                op: f(*op),
                idx: idx
                    .iter()
                    .map(|i| match i {
                        RaIdx::Gather { array, node } => RaIdx::Gather {
                            array: f(*array),
                            node: node.clone(),
                        },
                        other => other.clone(),
                    })
                    .collect(),
            },
            other => other.clone(),
        }
    }
}

impl RaGraph {
    /// All ops in an order where operands precede consumers.
    pub fn topo_all(&self) -> Vec<OpId> {
        let mut seen = vec![false; self.ops.len()];
        let mut out = Vec::with_capacity(self.ops.len());
        for s in 0..self.ops.len() {
            if seen[s] {
                continue;
            }
            let mut stack = vec![(s, false)];
            while let Some((u, done)) = stack.pop() {
                if done {
                    out.push(u);
                    continue;
                }
                if seen[u] {
                    continue;
                }
                seen[u] = true;
                stack.push((u, true));
                for o in self.operands(u).into_iter().rev() {
                    if !seen[o] {
                        stack.push((o, false));
                    }
                }
            }
        }
        out
    }

    /// Ops needed to compute the output, including the recursion body.
    pub fn live_ops(&self) -> Vec<bool> {
        let mut live = vec![false; self.ops.len()];
        let mut stack: Vec<OpId> = self.output_op().into_iter().collect();
        while let Some(u) = stack.pop() {
            if live[u] {
                continue;
            }
            live[u] = true;
            stack.extend(self.operands(u));
        }
        live
    }

    /// Drop ops that do not contribute to the output, preserving order.
    pub fn retain_live(&mut self) {
        let live = self.live_ops();
        let mut map = vec![usize::MAX; self.ops.len()];
        let mut next = 0;
        for (i, l) in live.iter().enumerate() {
            if *l {
                map[i] = next;
                next += 1;
            }
        }
        let f = |o: OpId| map[o];
        let ops: Vec<RaOp> = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| live[*i])
            .map(|(_, o)| RaOp {
                name: o.name.clone(),
                kind: o.kind.remap(&f),
                shape: o.shape.clone(),
                alias: o.alias.filter(|a| live[*a]).map(f),
            })
            .collect();
        self.ops = ops;
        self.output = self.output.map(f);
        let cuts = std::mem::take(&mut self.cuts);
        for (k, v) in cuts {
            if v.iter().all(|(a, b)| live[*a] && live[*b]) {
                self.cuts.insert(k, v.iter().map(|(a, b)| (f(*a), f(*b))).collect());
            }
        }
    }

    /// Ops in the closure of `root` that transitively read `target`.
    pub fn dependents_within(&self, root: OpId, target: OpId) -> Vec<OpId> {
        let inside = self.closure(root);
        let mut dep = vec![false; self.ops.len()];
        for &u in &inside {
            if u != target && self.operands(u).iter().any(|&o| o == target || dep[o]) {
                dep[u] = true;
            }
        }
        inside.into_iter().filter(|&u| dep[u]).collect()
    }

    pub fn rename(&mut self, id: OpId, name: &str) {
        self.ops[id].name = name.to_string();
    }

    pub fn fresh(&self, base: &str) -> String {
        self.fresh_name(base)
    }
}

pub fn fmt_shape(s: &Shape) -> String {
    let parts: Vec<String> = s.iter().map(|e| e.to_string()).collect();
    format!("({})", parts.join(","))
}
