//! Direct recursive evaluation of an RA graph over a data structure.

use crate::error::{Error, Result};
use crate::ra::{ChildSel, Extent, NodeRef, OpId, OpKind, RaGraph, RaIdx, RaLeaf};
use crate::structure::DataStructure;
use crate::tensor::{env_lookup, Env, EvalCtx, Tensor};

use super::{ExecOptions, Inputs};

struct Ref<'a> {
    g: &'a RaGraph,
    ds: &'a DataStructure,
    inputs: Vec<Option<Tensor>>,
    rec: Option<OpId>,
    /// Per op, per node: the dense row.
    rows: Vec<Vec<Option<Vec<f64>>>>,
    globals: Vec<Option<Vec<f64>>>,
    dense: Vec<(Vec<usize>, Vec<usize>)>,
    ctx: EvalCtx,
}

fn dense_shape(g: &RaGraph, u: OpId) -> Vec<usize> {
    g.ops[u]
        .shape
        .iter()
        .skip(usize::from(g.ops[u].is_node_indexed()))
        .map(|e| match e {
            Extent::Const(c) => *c,
            Extent::Node => 0,
        })
        .collect()
}

impl<'a> Ref<'a> {
    fn storage(&self, u: OpId) -> OpId {
        match (&self.g.ops[u].kind, self.rec) {
            (OpKind::Placeholder, Some(r)) => r,
            _ => u,
        }
    }

    fn child(&self, n: usize, k: usize, who: OpId) -> Result<usize> {
        self.ds.children[n].get(k).copied().ok_or_else(|| {
            Error::Input(format!(
                "`{}` reads child {k} of node `{}`, which has {} children",
                self.g.ops[who].name,
                self.ds.labels[n],
                self.ds.children[n].len()
            ))
        })
    }

    fn node_of(&self, n: usize, r: &NodeRef, env: &Env, who: OpId) -> Result<usize> {
        match r {
            NodeRef::This => Ok(n),
            NodeRef::Child(ChildSel::Fixed(k)) => self.child(n, *k, who),
            NodeRef::Child(ChildSel::Var(v)) => {
                let k = env_lookup(env, v).ok_or_else(|| Error::Unknown(v.clone()))?;
                self.child(n, k as usize, who)
            }
        }
    }

    /// Nodes at which `u` reads node-indexed ops, so they can be computed first.
    fn needs(&self, u: OpId, n: usize) -> Result<Vec<(OpId, usize)>> {
        let OpKind::Compute { body, .. } = &self.g.ops[u].kind else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let kids = &self.ds.children[n];
        body.visit_loads(&mut |l| {
            if let RaLeaf::Read { op, idx } = l {
                let v = *op;
                if !self.g.ops[v].is_node_indexed() {
                    if matches!(self.g.ops[v].kind, OpKind::Compute { .. }) {
                        out.push((v, usize::MAX));
                    }
                    return;
                }
                for i in idx {
                    if let RaIdx::Node(r) = i {
                        match r {
                            NodeRef::This => out.push((v, n)),
                            NodeRef::Child(ChildSel::Fixed(k)) => match kids.get(*k) {
                                Some(&c) => out.push((v, c)),
                                // absent children are only read under a guard
                                None => {}
                            },
                            NodeRef::Child(ChildSel::Var(_)) => out.extend(kids.iter().map(|&c| (v, c))),
                        }
                    }
                }
            }
        });
        Ok(out)
    }

    fn ensure(&mut self, u: OpId, n: usize) -> Result<()> {
        let g = self.g;
        if n == usize::MAX {
            if self.globals[u].is_none() {
                self.compute(u, None)?;
            }
            return Ok(());
        }
        let s = self.storage(u);
        if self.rows[s][n].is_some() {
            return Ok(());
        }
        match &g.ops[u].kind {
            OpKind::Input => Ok(()),
            OpKind::Placeholder | OpKind::Recursion { .. } => Err(Error::Invalid(format!(
                "`{}` read at node `{}` before the recursion computed it",
                g.ops[u].name, self.ds.labels[n]
            ))),
            OpKind::IfThenElse { then_op, else_op, .. } => {
                let b = if self.ds.is_leaf(n) { *then_op } else { *else_op };
                self.ensure(b, n)?;
                let row = self.rows[self.storage(b)][n].clone();
                self.rows[u][n] = row;
                Ok(())
            }
            OpKind::Compute { .. } => {
                for (v, m) in self.needs(u, n)? {
                    self.ensure(v, m)?;
                }
                self.compute(u, Some(n))
            }
        }
    }

    fn compute(&mut self, u: OpId, n: Option<usize>) -> Result<()> {
        let g = self.g;
        let OpKind::Compute { args, body } = &g.ops[u].kind else { unreachable!() };
        if n.is_none() {
            for (v, m) in self.needs(u, 0).unwrap_or_default() {
                if m == usize::MAX {
                    self.ensure(v, m)?;
                }
            }
        }
        let (shape, strides) = self.dense[u].clone();
        let len: usize = shape.iter().product();
        let names = &args[usize::from(n.is_some())..];
        let mut row = vec![0.0; len];
        let mut ctx = self.ctx;
        for (flat, slot) in row.iter_mut().enumerate() {
            let mut env: Env = names
                .iter()
                .zip(&strides)
                .zip(&shape)
                .map(|((a, &st), &ext)| (a.as_str(), ((flat / st) % ext) as i64))
                .collect();
            *slot = body.eval(&mut ctx, &mut env, &mut |l: &RaLeaf, env: &Env, _: &mut EvalCtx| self.load(l, env, n, u))?;
        }
        self.ctx = ctx;
        match n {
            Some(n) => self.rows[u][n] = Some(row),
            None => self.globals[u] = Some(row),
        }
        Ok(())
    }

    fn load(&self, l: &RaLeaf, env: &Env, n: Option<usize>, who: OpId) -> Result<f64> {
        let g = self.g;
        let ax = |a: &crate::ra::AxisExpr| a.eval(env).ok_or_else(|| Error::Invalid(format!("unbound axis in `{}`", g.ops[who].name)));
        match l {
            RaLeaf::Read { op, idx } => {
                let v = *op;
                let mut node = None;
                let mut dense = Vec::with_capacity(idx.len());
                for i in idx {
                    match i {
                        RaIdx::Node(r) => node = Some(self.node_of(n.expect("node-indexed"), r, env, who)?),
                        RaIdx::Axis(a) => dense.push(ax(a)?),
                        RaIdx::Gather { node: r, .. } => {
                            let m = self.node_of(n.expect("node-indexed"), r, env, who)?;
                            dense.push(self.ds.payload[m]);
                        }
                    }
                }
                let oob = || {
                    Error::OutOfBounds(format!(
                        "`{}` reads `{}` at {:?}{dense:?}",
                        g.ops[who].name,
                        g.ops[v].name,
                        node.map(|m| self.ds.labels[m].clone())
                    ))
                };
                if let OpKind::Input = g.ops[v].kind {
                    let t = self.inputs[v].as_ref().expect("checked inputs");
                    let mut full: Vec<usize> = node.into_iter().collect();
                    for d in &dense {
                        full.push(usize::try_from(*d).map_err(|_| oob())?);
                    }
                    return t.get(&full).ok_or_else(oob);
                }
                let (shape, strides) = &self.dense[self.storage(v)];
                let mut off = 0;
                for ((d, &ext), &st) in dense.iter().zip(shape).zip(strides) {
                    if *d < 0 || *d as usize >= ext {
                        return Err(oob());
                    }
                    off += *d as usize * st;
                }
                let row = match node {
                    Some(m) => self.rows[self.storage(v)][m].as_ref(),
                    None => self.globals[v].as_ref(),
                };
                row.map(|r| r[off]).ok_or_else(|| {
                    Error::Invalid(format!("`{}` read before it was computed", g.ops[v].name))
                })
            }
            RaLeaf::HasChild(sel) => {
                let n = n.expect("node-indexed");
                let k = match sel {
                    ChildSel::Fixed(k) => *k,
                    ChildSel::Var(v) => env_lookup(env, v).ok_or_else(|| Error::Unknown(v.clone()))? as usize,
                };
                Ok(f64::from(u8::from(k < self.ds.children[n].len())))
            }
            RaLeaf::Cmp(op, a, b) => Ok(f64::from(u8::from(op.eval(ax(a)?, ax(b)?)))),
        }
    }
}

/// Check that `inputs` covers every input tensor `g` reads, other than the
/// structure payload.
pub(crate) fn check_inputs(g: &RaGraph, n: usize, inputs: &Inputs) -> Result<Vec<Option<Tensor>>> {
    let live = g.live_ops();
    let payload = super::payload_arrays(g);
    let mut out = vec![None; g.ops.len()];
    for (u, o) in g.ops.iter().enumerate() {
        if o.kind != OpKind::Input || !live[u] || payload.contains(&u) && !super::read_as_value(g, u) {
            continue;
        }
        let t = inputs
            .get(&o.name)
            .ok_or_else(|| Error::Input(format!("missing input `{}`", o.name)))?;
        let want: Vec<usize> = o
            .shape
            .iter()
            .map(|e| match e {
                Extent::Node => n,
                Extent::Const(c) => *c,
            })
            .collect();
        if t.shape != want {
            return Err(Error::Input(format!(
                "input `{}` has shape {:?}, expected {want:?}",
                o.name, t.shape
            )));
        }
        out[u] = Some(t.clone());
    }
    Ok(out)
}

/// Evaluate `g` node by node, children first, each node once. Rows of the
/// result are in structure order.
pub fn eval_reference(g: &RaGraph, ds: &DataStructure, inputs: &Inputs, opts: &ExecOptions) -> Result<Tensor> {
    eval_reference_counted(g, ds, inputs, opts).map(|r| r.0)
}

/// As [`eval_reference`], also returning the scalar-op count.
pub fn eval_reference_counted(
    g: &RaGraph,
    ds: &DataStructure,
    inputs: &Inputs,
    opts: &ExecOptions,
) -> Result<(Tensor, u64)> {
    super::check_structure(g, ds)?;
    let inputs = check_inputs(g, ds.len(), inputs)?
        .into_iter()
        .map(|t| t.map(|t| t.cast(opts.elem)))
        .collect();
    let dense = (0..g.ops.len())
        .map(|u| {
            let s = dense_shape(g, u);
            let st = crate::tensor::strides(&s);
            (s, st)
        })
        .collect();
    let mut r = Ref {
        g,
        ds,
        inputs,
        rec: g.recursion().map(|x| x.0),
        rows: vec![vec![None; ds.len()]; g.ops.len()],
        globals: vec![None; g.ops.len()],
        dense,
        ctx: EvalCtx::new(opts.nonlin, opts.elem),
    };
    if let Some((rec, _, body)) = g.recursion() {
        let order = ds
            .topo_order_leaves_first()
            .ok_or_else(|| Error::Cycle("data structure".into()))?;
        for n in order {
            r.ensure(body, n)?;
            let row = r.rows[r.storage(body)][n].clone();
            r.rows[rec][n] = row;
        }
    }
    let out = g.output_op().ok_or_else(|| Error::Graph("no output".into()))?;
    let os = r.storage(out);
    let dshape = r.dense[os].0.clone();
    let mut data = Vec::new();
    let shape = if g.ops[out].is_node_indexed() {
        for n in 0..ds.len() {
            r.ensure(out, n)?;
            data.extend_from_slice(r.rows[os][n].as_ref().expect("computed"));
        }
        let mut s = vec![ds.len()];
        s.extend(dshape);
        s
    } else {
        r.ensure(out, usize::MAX)?;
        data = r.globals[out].clone().expect("computed");
        dshape
    };
    let ops = r.ctx.ops;
    Ok((Tensor::new(shape, opts.elem, data)?, ops))
}
