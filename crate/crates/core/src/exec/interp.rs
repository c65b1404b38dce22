//! ILIR interpreter.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::Relaxed};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ilir::{
    index_to_string, storage_access, ArrayKind, Cond, IlirProgram, IndexExpr, Loop, Operand, Stmt, Storage, TensorRole,
    NODE_DIM,
};
use crate::linearize::Linearization;
use crate::tensor::{env_lookup, Env, EvalCtx, Tensor};

use super::{ExecMode, ExecOptions, ExecStats, Inputs};

const NO_KEY: u64 = u64::MAX;

struct Mem {
    data: Vec<AtomicU64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    /// Debug: epoch of the last write plus one, 0 if never written.
    epoch: Vec<AtomicU64>,
    /// Debug: parallel iteration of the last write.
    key: Vec<AtomicU64>,
    checked: bool,
    /// Output only: element stored at least once.
    written: Vec<AtomicBool>,
}

struct Array {
    data: Vec<i64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

struct Machine<'a> {
    lin: &'a Linearization,
    mode: ExecMode,
    params: HashMap<String, i64>,
    arrays: HashMap<String, Array>,
    tensors: HashMap<String, Mem>,
    epoch: AtomicU64,
    instances: AtomicU64,
    ops: AtomicU64,
    barrier_waits: AtomicU64,
    batches: AtomicU64,
    leaf_checks: AtomicU64,
}

#[derive(Clone)]
struct Frame<'a> {
    env: Env<'a>,
    ctx: EvalCtx,
    par: u64,
    label: &'a str,
}

/// Borrowed view of a frame for index evaluation.
struct At<'e> {
    env: &'e Env<'e>,
    par: u64,
    label: &'e str,
}

impl<'a> Frame<'a> {
    fn at(&self) -> At<'_> {
        At {
            env: &self.env,
            par: self.par,
            label: self.label,
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    crate::tensor::strides(shape)
}

impl<'a> Machine<'a> {
    fn var(&self, env: &Env, v: &str) -> Option<i64> {
        env_lookup(env, v).or_else(|| self.params.get(v).copied())
    }

    fn load_array(&self, a: &str, idx: &[i64]) -> Option<i64> {
        let arr = self.arrays.get(a)?;
        if idx.len() != arr.shape.len() {
            return None;
        }
        let mut off = 0;
        for ((&x, &e), &st) in idx.iter().zip(&arr.shape).zip(&arr.strides) {
            if x < 0 || x as usize >= e {
                return None;
            }
            off += x as usize * st;
        }
        arr.data.get(off).copied()
    }

    fn index(&self, e: &IndexExpr, fr: &At) -> Result<i64> {
        e.eval(&|v| self.var(&fr.env, v), &|a, i| self.load_array(a, i)).ok_or_else(|| {
            Error::OutOfBounds(format!("cannot evaluate `{}` in {}", index_to_string(e), fr.label))
        })
    }

    fn offset(&self, t: &str, idx: &[IndexExpr], fr: &At) -> Result<(&Mem, usize)> {
        let m = self.tensors.get(t).ok_or_else(|| Error::Unknown(t.to_string()))?;
        if idx.len() != m.shape.len() {
            return Err(Error::OutOfBounds(format!(
                "`{t}` indexed with {} subscripts in {}",
                idx.len(),
                fr.label
            )));
        }
        let mut off = 0;
        for (k, e) in idx.iter().enumerate() {
            let v = self.index(e, fr)?;
            if v < 0 || v as usize >= m.shape[k] {
                let vals: Vec<i64> = idx.iter().map(|e| self.index(e, fr).unwrap_or(-1)).collect();
                return Err(Error::OutOfBounds(format!(
                    "`{t}{vals:?}` outside shape {:?} in {}",
                    m.shape, fr.label
                )));
            }
            off += v as usize * m.strides[k];
        }
        Ok((m, off))
    }

    fn cond(&self, c: &Cond, fr: &At) -> Result<bool> {
        match c {
            Cond::IsLeaf(e) => {
                let id = self.index(e, fr)?;
                self.leaf_checks.fetch_add(1, Relaxed);
                if id < 0 {
                    return Err(Error::OutOfBounds(format!("isleaf({id}) in {}", fr.label)));
                }
                self.lin.leaf_check(id as usize)
            }
            Cond::Cmp(op, a, b) => Ok(op.eval(self.index(a, fr)?, self.index(b, fr)?)),
        }
    }

    fn read(&self, t: &str, idx: &[IndexExpr], fr: &At) -> Result<f64> {
        let (m, off) = self.offset(t, idx, fr)?;
        if self.mode == ExecMode::Debug && m.checked {
            let e = m.epoch[off].load(Relaxed);
            if e == 0 {
                return Err(Error::DependenceViolation(format!(
                    "`{t}` element {:?} read before any write in {}",
                    unravel(&m.shape, off),
                    fr.label
                )));
            }
            let w = m.key[off].load(Relaxed);
            if e == self.epoch.load(Relaxed) + 1 && w != NO_KEY && w != fr.par {
                return Err(Error::DependenceViolation(format!(
                    "`{t}` element {:?} read in {} without a barrier after a concurrent write",
                    unravel(&m.shape, off),
                    fr.label
                )));
            }
        }
        Ok(f64::from_bits(m.data[off].load(Relaxed)))
    }

    fn write(&self, t: &str, idx: &[IndexExpr], v: f64, fr: &At) -> Result<()> {
        let (m, off) = self.offset(t, idx, fr)?;
        if self.mode == ExecMode::Debug && m.checked {
            let cur = self.epoch.load(Relaxed) + 1;
            let w = m.key[off].load(Relaxed);
            if m.epoch[off].load(Relaxed) == cur && w != NO_KEY && w != fr.par {
                return Err(Error::DependenceViolation(format!(
                    "`{t}` element {:?} written by two iterations of one batch in {}",
                    unravel(&m.shape, off),
                    fr.label
                )));
            }
            m.epoch[off].store(cur, Relaxed);
            m.key[off].store(fr.par, Relaxed);
        }
        if let Some(w) = m.written.get(off) {
            w.store(true, Relaxed);
        }
        m.data[off].store(v.to_bits(), Relaxed);
        Ok(())
    }

    fn block(&self, body: &'a [Stmt], fr: &mut Frame<'a>) -> Result<()> {
        let depth = fr.env.len();
        let r = body.iter().try_for_each(|s| self.stmt(s, fr));
        fr.env.truncate(depth);
        r
    }

    fn stmt(&self, s: &'a Stmt, fr: &mut Frame<'a>) -> Result<()> {
        match s {
            Stmt::Loop(l) => self.run_loop(l, fr),
            Stmt::Let { var, value } => {
                let v = self.index(value, &fr.at())?;
                fr.env.push((var.as_str(), v));
                Ok(())
            }
            Stmt::Store { tensor, idx, value } => {
                let (par, label) = (fr.par, fr.label);
                let mut env = std::mem::take(&mut fr.env);
                let v = value.eval(&mut fr.ctx, &mut env, &mut |o: &Operand, env: &Env, _: &mut EvalCtx| {
                    let at = At { env, par, label };
                    match o {
                        Operand::Read { tensor, idx } => self.read(tensor, idx, &at),
                        Operand::Cond(c) => Ok(f64::from(u8::from(self.cond(c, &at)?))),
                    }
                });
                fr.env = env;
                self.write(tensor, idx, v?, &fr.at())
            }
            Stmt::If { cond, then, els } => {
                if self.cond(cond, &fr.at())? {
                    self.block(then, fr)
                } else {
                    self.block(els, fr)
                }
            }
            Stmt::Barrier => {
                self.barrier_waits.fetch_add(1, Relaxed);
                self.epoch.fetch_add(1, Relaxed);
                Ok(())
            }
        }
    }

    fn run_loop(&self, l: &'a Loop, fr: &mut Frame<'a>) -> Result<()> {
        let n = self.index(&l.bound, &fr.at())?.max(0);
        if l.dim == "d_batch" && n > 0 {
            self.batches.fetch_add(1, Relaxed);
        } else if l.dim == "d_node_seq" {
            self.batches.fetch_add(n as u64, Relaxed);
        }
        let outer_label = fr.label;
        fr.label = &l.label;
        let fresh = l.parallel && fr.par == NO_KEY;
        let inst = if fresh { self.instances.fetch_add(1, Relaxed) } else { 0 };
        let r = if fresh && self.mode == ExecMode::BatchParallel && n > 1 {
            let base = fr.clone();
            (0..n).into_par_iter().try_for_each(|it| {
                let mut f = base.clone();
                f.ctx.ops = 0;
                f.par = inst << 32 | it as u64;
                f.env.push((l.var.as_str(), it));
                let r = self.block(&l.body, &mut f);
                self.ops.fetch_add(f.ctx.ops, Relaxed);
                r
            })
        } else {
            let mut r = Ok(());
            for it in 0..n {
                if fresh {
                    fr.par = inst << 32 | it as u64;
                }
                fr.env.push((l.var.as_str(), it));
                r = self.block(&l.body, fr);
                fr.env.pop();
                if r.is_err() {
                    break;
                }
            }
            if fresh {
                fr.par = NO_KEY;
            }
            r
        };
        fr.label = outer_label;
        r
    }
}

fn unravel(shape: &[usize], mut off: usize) -> Vec<usize> {
    let mut v = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        v[k] = off % shape[k];
        off /= shape[k];
    }
    v
}

fn eval_extents(p: &IlirProgram, params: &HashMap<String, i64>, ext: &[IndexExpr], what: &str) -> Result<Vec<usize>> {
    ext.iter()
        .map(|e| {
            e.eval(&|v| params.get(v).copied(), &|_, _| None)
                .filter(|&x| x >= 0)
                .map(|x| x as usize)
                .ok_or_else(|| Error::Input(format!("cannot size `{what}` in `{}`: `{}`", p.name, index_to_string(e))))
        })
        .collect()
}

/// Run `p` on the arrays of `lin`. Node-indexed inputs and the result have
/// their rows in structure order.
pub fn eval_ilir(p: &IlirProgram, lin: &Linearization, inputs: &Inputs, opts: &ExecOptions) -> Result<(Tensor, ExecStats)> {
    let params: HashMap<String, i64> = lin.params().into_iter().collect();
    for q in &p.params {
        if !params.contains_key(q) {
            return Err(Error::Input(format!("the linearization provides no parameter `{q}`")));
        }
    }
    let lin_arrays = lin.arrays();
    let mut arrays = HashMap::new();
    for a in &p.arrays {
        let shape = eval_extents(p, &params, &a.extents, &a.name)?;
        let data = match &a.kind {
            ArrayKind::Payload { .. } => lin.payload.clone(),
            _ => match lin_arrays.get(&a.name) {
                Some(d) => d.clone(),
                // a child position the structure never uses
                None if a.kind == ArrayKind::Child => vec![-1; lin.len()],
                None => return Err(Error::Input(format!("the linearization provides no array `{}`", a.name))),
            },
        };
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Input(format!(
                "array `{}` has {} entries for shape {shape:?}",
                a.name,
                data.len()
            )));
        }
        arrays.insert(a.name.clone(), Array { data, strides: strides(&shape), shape });
    }

    let debug = opts.mode == ExecMode::Debug;
    let mut tensors = HashMap::new();
    let mut scratch = 0u64;
    for t in &p.tensors {
        let shape = eval_extents(p, &params, &t.extents, &t.name)?;
        let len: usize = shape.iter().product();
        let init = t.init.unwrap_or(0.0);
        let data: Vec<AtomicU64> = (0..len).map(|_| AtomicU64::new(init.to_bits())).collect();
        let checked = t.role != TensorRole::Input && t.init.is_none();
        let meta = |v: u64| -> Vec<AtomicU64> {
            if debug {
                (0..len).map(|_| AtomicU64::new(v)).collect()
            } else {
                Vec::new()
            }
        };
        if t.storage == Storage::Scratch {
            scratch += (len * opts.elem.bytes()) as u64;
        }
        let m = Mem {
            strides: strides(&shape),
            shape,
            data,
            epoch: meta(0),
            key: meta(NO_KEY),
            checked,
            written: if t.name == p.output {
                (0..len).map(|_| AtomicBool::new(false)).collect()
            } else {
                Vec::new()
            },
        };
        if t.role == TensorRole::Input {
            bind_input(t, &m, inputs, lin, &params, opts)?;
        }
        tensors.insert(t.name.clone(), m);
    }
    let out_decl = p
        .tensor(&p.output)
        .ok_or_else(|| Error::Unknown(format!("output tensor `{}`", p.output)))?;

    let mach = Machine {
        lin,
        mode: opts.mode,
        params,
        arrays,
        tensors,
        epoch: AtomicU64::new(0),
        instances: AtomicU64::new(0),
        ops: AtomicU64::new(0),
        barrier_waits: AtomicU64::new(0),
        batches: AtomicU64::new(0),
        leaf_checks: AtomicU64::new(0),
    };
    let mut fr = Frame {
        env: Vec::new(),
        ctx: EvalCtx::new(opts.nonlin, opts.elem),
        par: NO_KEY,
        label: "program",
    };
    let mut stats = ExecStats {
        scratch_bytes_peak: scratch,
        ..Default::default()
    };
    for s in &p.body {
        let before = mach.ops.load(Relaxed) + fr.ctx.ops;
        mach.stmt(s, &mut fr)?;
        if matches!(s, Stmt::Loop(_)) {
            stats.loop_nest_launches += 1;
            let after = mach.ops.load(Relaxed) + fr.ctx.ops;
            stats.nest_ops.push(after - before);
        }
    }
    stats.scalar_ops = mach.ops.load(Relaxed) + fr.ctx.ops;
    stats.barrier_waits = mach.barrier_waits.load(Relaxed);
    stats.batches_executed = mach.batches.load(Relaxed);
    stats.leaf_checks = mach.leaf_checks.load(Relaxed);

    let (out, processed) = read_output(out_decl, &mach.tensors[&p.output], lin, &mach.params, opts)?;
    stats.nodes_processed = processed;
    Ok((out, stats))
}

fn logical_len(t: &crate::ilir::TensorDecl, params: &HashMap<String, i64>) -> Result<Vec<usize>> {
    let (_, ext) = t.logical();
    ext.iter()
        .map(|e| {
            e.eval(&|v| params.get(v).copied(), &|_, _| None)
                .map(|x| x as usize)
                .ok_or_else(|| Error::Input(format!("cannot size `{}`", t.name)))
        })
        .collect()
}

fn storage_offset(
    t: &crate::ilir::TensorDecl,
    m: &Mem,
    logical: &[usize],
    params: &HashMap<String, i64>,
) -> Result<usize> {
    let idx: Vec<IndexExpr> = logical.iter().map(|&i| IndexExpr::Const(i as i64)).collect();
    let st = storage_access(t, &idx);
    let mut off = 0;
    for (k, e) in st.iter().enumerate() {
        let v = e
            .eval(&|v| params.get(v).copied(), &|_, _| None)
            .filter(|&v| v >= 0 && (v as usize) < m.shape[k])
            .ok_or_else(|| Error::OutOfBounds(format!("`{}` storage access {}", t.name, index_to_string(e))))?;
        off += v as usize * m.strides[k];
    }
    Ok(off)
}

fn row_major(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let n: usize = shape.iter().product();
    (0..n).map(move |i| unravel(shape, i))
}

fn bind_input(
    t: &crate::ilir::TensorDecl,
    m: &Mem,
    inputs: &Inputs,
    lin: &Linearization,
    params: &HashMap<String, i64>,
    opts: &ExecOptions,
) -> Result<()> {
    let src = inputs
        .get(&t.name)
        .ok_or_else(|| Error::Input(format!("missing input `{}`", t.name)))?;
    let shape = logical_len(t, params)?;
    if src.shape != shape {
        return Err(Error::Input(format!(
            "input `{}` has shape {:?}, expected {shape:?}",
            t.name, src.shape
        )));
    }
    let node = t.logical().0.first().is_some_and(|d| d == NODE_DIM);
    for idx in row_major(&shape) {
        let mut s = idx.clone();
        if node {
            s[0] = lin.node_of[idx[0]];
        }
        let v = opts.elem.round(src.get(&s).expect("in shape"));
        m.data[storage_offset(t, m, &idx, params)?].store(v.to_bits(), Relaxed);
    }
    Ok(())
}

fn read_output(
    t: &crate::ilir::TensorDecl,
    m: &Mem,
    lin: &Linearization,
    params: &HashMap<String, i64>,
    opts: &ExecOptions,
) -> Result<(Tensor, u64)> {
    let shape = logical_len(t, params)?;
    let node = t.logical().0.first().is_some_and(|d| d == NODE_DIM);
    let mut data = vec![0.0; shape.iter().product()];
    let st = strides(&shape);
    let mut rows = vec![false; if node { shape[0] } else { 0 }];
    for idx in row_major(&shape) {
        let off = storage_offset(t, m, &idx, params)?;
        let mut dst = idx.clone();
        if node {
            dst[0] = lin.node_of[idx[0]];
            if m.written[off].load(Relaxed) {
                rows[idx[0]] = true;
            }
        }
        let flat: usize = dst.iter().zip(&st).map(|(a, b)| a * b).sum();
        data[flat] = f64::from_bits(m.data[off].load(Relaxed));
    }
    let mut processed = rows.iter().filter(|&&r| r).count() as u64;
    if t.init.is_some() {
        processed += (0..rows.len()).filter(|&id| !rows[id] && id >= lin.first_leaf_id).count() as u64;
    }
    Ok((Tensor::new(shape, opts.elem, data)?, processed))
}
