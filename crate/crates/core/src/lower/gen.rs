//! Instance generation: RA ops at node sites become ILIR loop nests.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::ilir::{
    access_sets, ArrayDecl, ArrayKind, Cond, DependenceFact, DependenceFacts, IlirProgram, IndexExpr, Loop, Operand,
    Stmt, TensorDecl, TensorRole, ValueExpr, NODE_DIM, NODE_PARAM,
};
use crate::linearize::child_array_name;
use crate::ra::{AxisExpr, ChildSel, Extent, NodeRef, OpId, OpKind, RaExpr, RaGraph, RaIdx, RaLeaf};
use crate::syntax::CmpOp;
use crate::tensor::ScalarFn;

/// Path of fixed child positions below the iteration's node.
type Site = Vec<usize>;

const RESERVED: &[&str] = &["node", "n_idx", "b_idx", "r_idx"];

fn rename(v: &str) -> String {
    if RESERVED.contains(&v) {
        format!("{v}_")
    } else {
        v.to_string()
    }
}

fn axis(e: &AxisExpr) -> IndexExpr {
    match e {
        AxisExpr::Const(c) => IndexExpr::Const(*c),
        AxisExpr::Var(v) => IndexExpr::Var(rename(v)),
        AxisExpr::Add(a, b) => IndexExpr::add(axis(a), axis(b)),
        AxisExpr::Sub(a, b) => IndexExpr::sub(axis(a), axis(b)),
        AxisExpr::Mul(a, b) => IndexExpr::mul(axis(a), axis(b)),
    }
}

fn uses_child_var(e: &RaExpr, var: &str) -> bool {
    let mut hit = false;
    let is = |r: &NodeRef| matches!(r, NodeRef::Child(ChildSel::Var(v)) if v == var);
    e.visit_loads(&mut |l| match l {
        RaLeaf::Read { idx, .. } => {
            for i in idx {
                match i {
                    RaIdx::Node(r) | RaIdx::Gather { node: r, .. } if is(r) => hit = true,
                    _ => {}
                }
            }
        }
        RaLeaf::HasChild(ChildSel::Var(v)) if v == var => hit = true,
        _ => {}
    });
    hit
}

/// Which loop nest a group of statements runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NestKind {
    Leaf,
    Internal,
    All,
    Epilogue,
    Post,
}

pub(crate) struct Gen<'a> {
    g: &'a RaGraph,
    live: Vec<bool>,
    batched: bool,
    store: Vec<Option<OpId>>,
    ph: Option<OpId>,
    arrays: BTreeSet<String>,
    payload_dim: BTreeMap<OpId, String>,
    tensors: BTreeSet<OpId>,
    extra_map: BTreeMap<String, BTreeSet<String>>,
    /// Tensors read through the placeholder in the nest being generated.
    carried: BTreeSet<String>,
    /// Extents of loops enclosing the store being translated.
    arg_dims: BTreeMap<String, String>,
    pub(crate) zero_leaf: Option<OpId>,
}

impl<'a> Gen<'a> {
    pub(crate) fn new(g: &'a RaGraph, batched: bool) -> Self {
        let mut s = Gen {
            g,
            live: g.live_ops(),
            batched,
            store: vec![None; g.ops.len()],
            ph: g.recursion().map(|r| r.1),
            arrays: BTreeSet::new(),
            payload_dim: BTreeMap::new(),
            tensors: BTreeSet::new(),
            extra_map: BTreeMap::new(),
            carried: BTreeSet::new(),
            arg_dims: BTreeMap::new(),
            zero_leaf: None,
        };
        for u in 0..g.ops.len() {
            let r = s.resolve(u, &mut Vec::new());
            s.store[u] = Some(r);
        }
        s
    }

    /// Op whose tensor holds the values of `u`.
    fn resolve(&self, u: OpId, stack: &mut Vec<OpId>) -> OpId {
        if let Some(r) = self.store.get(u).copied().flatten() {
            return r;
        }
        let g = self.g;
        let r = g.storage_of(u);
        if let Some((rec, ph, body)) = g.recursion() {
            if r == ph || r == body {
                return self.resolve(rec, stack);
            }
        }
        if stack.contains(&r) {
            return r;
        }
        let cons: Vec<OpId> = g.consumers(r).into_iter().filter(|&c| self.live[c]).collect();
        if cons.is_empty() || Some(r) == g.output {
            return r;
        }
        stack.push(r);
        let mut target = None;
        for c in cons {
            let is_branch = matches!(g.ops[c].kind, OpKind::IfThenElse { then_op, else_op, .. } if then_op == r || else_op == r);
            if !is_branch {
                stack.pop();
                return r;
            }
            let t = self.resolve(c, stack);
            if target.is_some_and(|x| x != t) {
                stack.pop();
                return r;
            }
            target = Some(t);
        }
        stack.pop();
        target.unwrap_or(r)
    }

    fn storage(&self, u: OpId) -> OpId {
        self.store[u].expect("resolved")
    }

    pub(crate) fn tensor_name(&self, u: OpId) -> String {
        self.g.ops[self.storage(u)].name.clone()
    }

    pub(crate) fn dim_name(&self, c: usize) -> String {
        let p = &self.g.params;
        let hit = |k: &str| p.get(k).is_some_and(|&v| v as usize == c);
        if hit("H") {
            return "d_hidden".into();
        }
        if hit("V") {
            return "d_vocab".into();
        }
        if let Some((k, _)) = p.iter().find(|(_, &v)| v as usize == c) {
            return format!("d_{}", k.to_lowercase());
        }
        format!("d_{c}")
    }

    fn shape_dims(&self, u: OpId) -> (Vec<String>, Vec<IndexExpr>) {
        self.g.ops[u]
            .shape
            .iter()
            .map(|e| match e {
                Extent::Node => (NODE_DIM.to_string(), IndexExpr::var(NODE_PARAM)),
                Extent::Const(c) => (self.dim_name(*c), IndexExpr::Const(*c as i64)),
            })
            .unzip()
    }

    fn child_array(&mut self, k: usize) -> String {
        let n = child_array_name(k, self.g.decl.max_children);
        self.arrays.insert(n.clone());
        n
    }

    fn node_at(&mut self, site: &[usize]) -> IndexExpr {
        let mut e = IndexExpr::var("node");
        for &k in site {
            let a = self.child_array(k);
            e = IndexExpr::load(&a, vec![e]);
        }
        e
    }

    fn child_of(&self, sel: &ChildSel, cenv: &BTreeMap<String, usize>) -> usize {
        match sel {
            ChildSel::Fixed(k) => *k,
            ChildSel::Var(v) => cenv[v],
        }
    }

    fn site_of(&self, site: &[usize], r: &NodeRef, cenv: &BTreeMap<String, usize>) -> Site {
        let mut s = site.to_vec();
        if let NodeRef::Child(c) = r {
            s.push(self.child_of(c, cenv));
        }
        s
    }

    fn is_instance(&self, v: OpId) -> bool {
        let o = &self.g.ops[v];
        o.is_node_indexed() && matches!(o.kind, OpKind::Compute { .. } | OpKind::IfThenElse { .. })
    }

    /// Translate an RA body at `site`, collecting the instances it reads.
    fn tr(&mut self, e: &RaExpr, site: &[usize], cenv: &mut BTreeMap<String, usize>, deps: &mut Vec<(OpId, Site)>) -> ValueExpr {
        match e {
            ScalarFn::Const(c) => ScalarFn::Const(*c),
            ScalarFn::Load(l) => self.tr_leaf(l, site, cenv, deps),
            ScalarFn::Add(a, b) => ScalarFn::add(self.tr(a, site, cenv, deps), self.tr(b, site, cenv, deps)),
            ScalarFn::Sub(a, b) => ScalarFn::sub(self.tr(a, site, cenv, deps), self.tr(b, site, cenv, deps)),
            ScalarFn::Mul(a, b) => ScalarFn::mul(self.tr(a, site, cenv, deps), self.tr(b, site, cenv, deps)),
            ScalarFn::Tanh(a) => ScalarFn::tanh(self.tr(a, site, cenv, deps)),
            ScalarFn::Sigmoid(a) => ScalarFn::sigmoid(self.tr(a, site, cenv, deps)),
            ScalarFn::Select(c, a, b) => ScalarFn::select(
                self.tr(c, site, cenv, deps),
                self.tr(a, site, cenv, deps),
                self.tr(b, site, cenv, deps),
            ),
            ScalarFn::Sum { var, extent, body } => {
                if uses_child_var(body, var) {
                    // same left fold from zero as the reference reduction
                    let mut acc = ScalarFn::Const(0.0);
                    for k in 0..*extent {
                        let prev = cenv.insert(var.clone(), k);
                        let t = self.tr(body, site, cenv, deps);
                        match prev {
                            Some(p) => cenv.insert(var.clone(), p),
                            None => cenv.remove(var),
                        };
                        acc = ScalarFn::add(acc, t);
                    }
                    acc
                } else {
                    ScalarFn::sum(rename(var), *extent, self.tr(body, site, cenv, deps))
                }
            }
        }
    }

    fn tr_leaf(&mut self, l: &RaLeaf, site: &[usize], cenv: &mut BTreeMap<String, usize>, deps: &mut Vec<(OpId, Site)>) -> ValueExpr {
        match l {
            RaLeaf::Read { op, idx } => {
                let v = *op;
                let mut out = Vec::with_capacity(idx.len());
                let mut read_site = site.to_vec();
                for (p, i) in idx.iter().enumerate() {
                    out.push(match i {
                        RaIdx::Node(r) => {
                            read_site = self.site_of(site, r, cenv);
                            self.node_at(&read_site)
                        }
                        RaIdx::Axis(a) => {
                            let e = axis(a);
                            let mut vs = Vec::new();
                            e.vars(&mut vs);
                            let (tdims, _) = self.shape_dims(self.storage_of_read(v));
                            for x in vs {
                                if let Some(d) = self.arg_dims.get(&x) {
                                    if tdims.get(p).is_some_and(|t| t != d) {
                                        self.extra_map.entry(tdims[p].clone()).or_default().insert(d.clone());
                                    }
                                }
                            }
                            e
                        }
                        RaIdx::Gather { array, node } => {
                            let s = self.site_of(site, node, cenv);
                            let n = self.node_at(&s);
                            let (tdims, _) = self.shape_dims(self.storage_of_read(v));
                            self.payload_dim.entry(*array).or_insert_with(|| tdims[p].clone());
                            self.arrays.insert(self.g.ops[*array].name.clone());
                            IndexExpr::load(&self.g.ops[*array].name, vec![n])
                        }
                    });
                }
                if Some(v) == self.ph {
                    self.carried.insert(self.tensor_name(v));
                }
                if self.is_instance(v) {
                    deps.push((v, read_site));
                }
                let t = self.storage_of_read(v);
                self.tensors.insert(t);
                ScalarFn::Load(Operand::Read {
                    tensor: self.g.ops[t].name.clone(),
                    idx: out,
                })
            }
            RaLeaf::HasChild(sel) => {
                let k = self.child_of(sel, cenv);
                let mut s = site.to_vec();
                s.push(k);
                ScalarFn::Load(Operand::Cond(Cond::Cmp(CmpOp::Ge, self.node_at(&s), IndexExpr::Const(0))))
            }
            RaLeaf::Cmp(op, a, b) => ScalarFn::Load(Operand::Cond(Cond::Cmp(*op, axis(a), axis(b)))),
        }
    }

    fn storage_of_read(&self, v: OpId) -> OpId {
        match self.g.ops[v].kind {
            OpKind::Input => v,
            _ => self.storage(v),
        }
    }

    /// Loops over the dense axes of `u` around one store.
    fn store_nest(&mut self, u: OpId, site: &[usize], deps: &mut Vec<(OpId, Site)>) -> Vec<Stmt> {
        let OpKind::Compute { args, body } = &self.g.ops[u].kind else { unreachable!() };
        let node_indexed = self.g.ops[u].is_node_indexed();
        let (dims, exts) = self.shape_dims(u);
        let skip = usize::from(node_indexed);
        let dense: Vec<(String, String, IndexExpr)> = args[skip..]
            .iter()
            .zip(dims[skip..].iter().zip(&exts[skip..]))
            .map(|(a, (d, e))| (rename(a), d.clone(), e.clone()))
            .collect();
        self.arg_dims = dense.iter().map(|(a, d, _)| (a.clone(), d.clone())).collect();
        let value = self.tr(body, site, &mut BTreeMap::new(), deps);
        self.arg_dims.clear();
        let mut idx = Vec::new();
        if node_indexed {
            idx.push(self.node_at(site));
        }
        idx.extend(dense.iter().map(|(a, _, _)| IndexExpr::var(a)));
        let t = self.storage(u);
        self.tensors.insert(t);
        let mut stmts = vec![Stmt::Store {
            tensor: self.g.ops[t].name.clone(),
            idx,
            value,
        }];
        for (a, d, e) in dense.into_iter().rev() {
            stmts = vec![Stmt::Loop(Loop {
                label: String::new(),
                var: a,
                dim: d,
                bound: e,
                parallel: false,
                extent: None,
                body: stmts,
            })];
        }
        stmts
    }

    /// Copy the value of `from` into the storage of `to` at `site`.
    fn copy_nest(&mut self, from: OpId, to: OpId, site: &[usize]) -> Vec<Stmt> {
        let (dims, exts) = self.shape_dims(to);
        let vars: Vec<String> = (1..dims.len()).map(|k| format!("c{k}")).collect();
        let mut idx = vec![self.node_at(site)];
        idx.extend(vars.iter().map(|v| IndexExpr::var(v)));
        let (src, dst) = (self.storage(from), self.storage(to));
        self.tensors.insert(src);
        self.tensors.insert(dst);
        let mut stmts = vec![Stmt::Store {
            tensor: self.g.ops[dst].name.clone(),
            idx: idx.clone(),
            value: ScalarFn::Load(Operand::Read {
                tensor: self.g.ops[src].name.clone(),
                idx,
            }),
        }];
        for k in (1..dims.len()).rev() {
            stmts = vec![Stmt::Loop(Loop {
                label: String::new(),
                var: vars[k - 1].clone(),
                dim: dims[k].clone(),
                bound: exts[k].clone(),
                parallel: false,
                extent: None,
                body: stmts,
            })];
        }
        stmts
    }

    /// Code for branch `b` of conditional `ite`, leaving the value in the
    /// conditional's storage.
    pub(crate) fn branch(&mut self, b: OpId, ite: OpId, site: &[usize], vis: &mut Vec<(OpId, Site)>) -> Result<Vec<Stmt>> {
        let mut s = Vec::new();
        if Some(b) != self.zero_leaf {
            self.instance(b, site, vis, &mut s)?;
            if self.storage(b) != self.storage(ite) {
                s.extend(self.copy_nest(b, ite, site));
            }
        }
        Ok(s)
    }

    pub(crate) fn same_storage(&self, a: OpId, b: OpId) -> bool {
        self.storage(a) == self.storage(b)
    }

    /// Emit code that leaves the value of `u` at `site` in its storage.
    pub(crate) fn instance(&mut self, u: OpId, site: &[usize], vis: &mut Vec<(OpId, Site)>, out: &mut Vec<Stmt>) -> Result<()> {
        if vis.iter().any(|(o, s)| *o == u && s == site) || !self.is_instance(u) {
            return Ok(());
        }
        match self.g.ops[u].kind.clone() {
            OpKind::IfThenElse { then_op, else_op, .. } => {
                let mut branches = Vec::new();
                for b in [then_op, else_op] {
                    let mut v = vis.clone();
                    branches.push(self.branch(b, u, site, &mut v)?);
                }
                let els = branches.pop().unwrap();
                let then = branches.pop().unwrap();
                let n = self.node_at(site);
                out.push(Stmt::If {
                    cond: Cond::IsLeaf(n),
                    then,
                    els,
                });
            }
            OpKind::Compute { .. } => {
                let mut deps = Vec::new();
                let nest = self.store_nest(u, site, &mut deps);
                for (v, s) in deps {
                    if s.len() > site.len() && !self.g.full_arity {
                        let n = self.node_at(&s);
                        let mut inner = Vec::new();
                        let mut v2 = vis.clone();
                        self.instance(v, &s, &mut v2, &mut inner)?;
                        if !inner.is_empty() {
                            out.push(Stmt::If {
                                cond: Cond::Cmp(CmpOp::Ge, n, IndexExpr::Const(0)),
                                then: inner,
                                els: Vec::new(),
                            });
                        }
                        for x in v2 {
                            if !vis.contains(&x) {
                                vis.push(x);
                            }
                        }
                    } else {
                        self.instance(v, &s, vis, out)?;
                    }
                }
                out.extend(nest);
            }
            _ => return Err(Error::Graph(format!("`{}` cannot be instantiated", self.g.ops[u].name))),
        }
        vis.push((u, site.to_vec()));
        Ok(())
    }

    /// Loops for a global compute.
    pub(crate) fn global(&mut self, u: OpId) -> Vec<Stmt> {
        let mut deps = Vec::new();
        self.store_nest(u, &[], &mut deps)
    }

    pub(crate) fn take_carried(&mut self) -> BTreeSet<String> {
        std::mem::take(&mut self.carried)
    }

    /// Wrap a nest body in the iteration header for `kind`.
    pub(crate) fn header(&mut self, kind: NestKind, specialized: bool, body: Vec<Stmt>) -> Stmt {
        let lp = |var: &str, dim: &str, bound: IndexExpr, parallel: bool, body: Vec<Stmt>| {
            Stmt::Loop(Loop {
                label: String::new(),
                var: var.into(),
                dim: dim.into(),
                bound,
                parallel,
                extent: None,
                body,
            })
        };
        let with_node = |e: IndexExpr, mut body: Vec<Stmt>| {
            body.insert(
                0,
                Stmt::Let {
                    var: "node".into(),
                    value: e,
                },
            );
            body
        };
        let v = IndexExpr::var;
        let b_n = vec![v("b_idx"), v("n_idx")];
        match kind {
            NestKind::Leaf => {
                self.arrays.insert("leaf_batch".into());
                let body = with_node(IndexExpr::load("leaf_batch", vec![v("n_idx")]), body);
                lp("n_idx", "d_batch", v("leaf_batch_size"), true, body)
            }
            NestKind::Internal | NestKind::All if self.batched => {
                let (sizes, table, count) = if kind == NestKind::Internal && specialized {
                    ("batch_sizes", "internal_batches", "num_internal_batches")
                } else {
                    ("all_batch_sizes", "all_batches", "num_batches")
                };
                self.arrays.insert(sizes.into());
                self.arrays.insert(table.into());
                let body = with_node(IndexExpr::load(table, b_n), body);
                let inner = lp("n_idx", "d_batch", IndexExpr::load(sizes, vec![v("b_idx")]), true, body);
                lp("b_idx", "d_all_batches", v(count), false, vec![inner])
            }
            NestKind::Internal | NestKind::All => {
                let (arr, count) = if kind == NestKind::Internal {
                    ("internal_order", "num_internal_nodes")
                } else {
                    ("order", "num_nodes")
                };
                self.arrays.insert(arr.into());
                let body = with_node(IndexExpr::load(arr, vec![v("n_idx")]), body);
                lp("n_idx", "d_node_seq", v(count), false, body)
            }
            NestKind::Epilogue => {
                self.arrays.insert("roots".into());
                let body = with_node(IndexExpr::load("roots", vec![v("r_idx")]), body);
                lp("r_idx", "d_root", v("num_roots"), true, body)
            }
            NestKind::Post => {
                let body = with_node(v("p_idx"), body);
                lp("p_idx", NODE_DIM, v(NODE_PARAM), true, body)
            }
        }
    }

    /// Declarations, parameters and the dimension map.
    pub(crate) fn finish(&self, name: &str, output: OpId, body: Vec<Stmt>) -> IlirProgram {
        let g = self.g;
        let mut arrays = Vec::new();
        let mut params: Vec<String> = vec![NODE_PARAM.to_string()];
        let mut param = |p: &str| {
            if !params.iter().any(|x| x == p) {
                params.push(p.to_string());
            }
        };
        let v = IndexExpr::var;
        let sched = |name: &str, dims: &[(&str, &str)], kind: ArrayKind| ArrayDecl {
            name: name.into(),
            kind,
            dims: dims.iter().map(|d| d.0.to_string()).collect(),
            extents: dims.iter().map(|d| v(d.1)).collect(),
        };
        let specs: Vec<(&str, Vec<(&str, &str)>, ArrayKind)> = vec![
            ("leaf_batch", vec![("d_batch", "leaf_batch_size")], ArrayKind::Schedule),
            (
                "batch_sizes",
                vec![("d_all_batches", "num_internal_batches")],
                ArrayKind::Count {
                    max: v("max_internal_batch_size"),
                },
            ),
            (
                "internal_batches",
                vec![("d_all_batches", "num_internal_batches"), ("d_batch", "max_internal_batch_size")],
                ArrayKind::Schedule,
            ),
            (
                "all_batch_sizes",
                vec![("d_all_batches", "num_batches")],
                ArrayKind::Count { max: v("max_batch_size") },
            ),
            (
                "all_batches",
                vec![("d_all_batches", "num_batches"), ("d_batch", "max_batch_size")],
                ArrayKind::Schedule,
            ),
            ("order", vec![("d_node_seq", "num_nodes")], ArrayKind::Schedule),
            ("internal_order", vec![("d_node_seq", "num_internal_nodes")], ArrayKind::Schedule),
            ("roots", vec![("d_root", "num_roots")], ArrayKind::Schedule),
        ];
        let mut loop_dims: BTreeSet<String> = BTreeSet::new();
        for (n, dims, kind) in specs {
            if self.arrays.contains(n) {
                for (d, p) in &dims {
                    param(p);
                    loop_dims.insert(d.to_string());
                }
                if let ArrayKind::Count { max: IndexExpr::Var(m) } = &kind {
                    param(m);
                }
                arrays.push(sched(n, &dims, kind));
            }
        }
        for (&a, d) in &self.payload_dim {
            arrays.push(ArrayDecl {
                name: g.ops[a].name.clone(),
                kind: ArrayKind::Payload { dim: d.clone() },
                dims: vec![NODE_DIM.into()],
                extents: vec![v(NODE_PARAM)],
            });
        }
        for k in 0..g.decl.max_children.max(1) {
            let n = child_array_name(k, g.decl.max_children);
            if self.arrays.contains(&n) {
                arrays.push(ArrayDecl {
                    name: n,
                    kind: ArrayKind::Child,
                    dims: vec![NODE_DIM.into()],
                    extents: vec![v(NODE_PARAM)],
                });
            }
        }
        let out_t = self.storage(output);
        let mut tensors = Vec::new();
        for &t in &self.tensors {
            let (dims, exts) = self.shape_dims(t);
            let role = if g.ops[t].kind == OpKind::Input {
                TensorRole::Input
            } else if t == out_t {
                TensorRole::Output
            } else {
                TensorRole::Temp
            };
            tensors.push(TensorDecl::new(&g.ops[t].name, role, dims, exts));
        }
        let mut dim_map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        if !loop_dims.is_empty() {
            let order = ["d_all_batches", "d_batch", "d_node_seq", "d_root"];
            dim_map.insert(
                NODE_DIM.into(),
                order.iter().filter(|d| loop_dims.contains(**d)).map(|d| d.to_string()).collect(),
            );
        }
        for (d, ls) in &self.extra_map {
            let e = dim_map.entry(d.clone()).or_default();
            for l in ls {
                if !e.contains(l) {
                    e.push(l.clone());
                }
            }
        }
        let mut p = IlirProgram {
            name: name.to_string(),
            params,
            arrays,
            tensors,
            dim_map,
            body,
            output: g.ops[out_t].name.clone(),
        };
        p.relabel();
        p
    }
}

/// Dependence facts for the top-level nests of `body`. `carried[j]` lists
/// tensors nest `j` reads from its own earlier iterations through `dims[j]`.
pub(crate) fn facts(body: &[Stmt], carried: &[BTreeSet<String>], dims: &[Option<String>]) -> DependenceFacts {
    let nests: Vec<&Stmt> = body.iter().filter(|s| matches!(s, Stmt::Loop(_))).collect();
    let sets: Vec<(Vec<String>, Vec<String>)> = nests.iter().map(|s| access_sets(std::slice::from_ref(*s))).collect();
    let mut f = Vec::new();
    for j in 0..nests.len() {
        for t in &sets[j].0 {
            for i in 0..j {
                if sets[i].1.contains(t) {
                    f.push(DependenceFact {
                        tensor: t.clone(),
                        producer: i,
                        consumer: j,
                        carrying: None,
                    });
                }
            }
            if sets[j].1.contains(t) {
                let c = if carried[j].contains(t) { dims[j].clone() } else { None };
                f.push(DependenceFact {
                    tensor: t.clone(),
                    producer: j,
                    consumer: j,
                    carrying: c,
                });
            }
        }
    }
    DependenceFacts { facts: f }
}
