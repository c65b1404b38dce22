//! Reference evaluation, ILIR interpretation and equivalence checking.

mod interp;
mod reference;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ra::{Extent, OpId, OpKind, RaGraph, RaIdx, RaLeaf};
use crate::structure::{DataStructure, StructureKind};
use crate::tensor::{ElemType, NonlinMode, Tensor};

pub use interp::eval_ilir;
pub use reference::{eval_reference, eval_reference_counted};

/// Input tensors by input op name. Node-indexed inputs have their rows in
/// structure order.
pub type Inputs = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    #[default]
    Sequential,
    BatchParallel,
    /// Sequential, checking write-before-read and barrier separation.
    Debug,
}

impl std::str::FromStr for ExecMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(ExecMode::Sequential),
            "batch-parallel" => Ok(ExecMode::BatchParallel),
            "debug" => Ok(ExecMode::Debug),
            _ => Err(format!("unknown mode `{s}` (expected sequential|batch-parallel|debug)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExecOptions {
    pub mode: ExecMode,
    pub elem: ElemType,
    pub nonlin: NonlinMode,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mode: ExecMode::Sequential,
            elem: ElemType::F64,
            nonlin: NonlinMode::Exact,
        }
    }
}

impl ExecOptions {
    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    /// Top-level loop nests started.
    pub loop_nest_launches: u64,
    pub barrier_waits: u64,
    pub scalar_ops: u64,
    pub scratch_bytes_peak: u64,
    pub nodes_processed: u64,
    pub batches_executed: u64,
    /// Leaf predicates evaluated at run time.
    pub leaf_checks: u64,
    /// Scalar ops per top-level loop nest, in program order.
    pub nest_ops: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// Index of the first element differing by more than the tolerance.
    pub first_mismatch: Option<Vec<usize>>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn check_equivalence(a: &Tensor, b: &Tensor, tol: f64) -> Result<EquivalenceReport> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!("cannot compare shapes {:?} and {:?}", a.shape, b.shape)));
    }
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut first = None;
    for (i, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        let d = if x == y {
            0.0
        } else if x.is_nan() || y.is_nan() {
            f64::INFINITY
        } else {
            (x - y).abs()
        };
        let m = x.abs().max(y.abs());
        let r = if d == 0.0 { 0.0 } else { d / m };
        max_abs = max_abs.max(d);
        max_rel = max_rel.max(r);
        if d > tol && first.is_none() {
            first = Some(a.unravel(i));
        }
    }
    Ok(EquivalenceReport {
        max_abs_diff: max_abs,
        max_rel_diff: max_rel,
        first_mismatch: first,
        tolerance: tol,
        pass: max_abs <= tol,
    })
}

/// Node-indexed rank-1 inputs used as gather indices; bound from the
/// structure payload.
pub(crate) fn payload_arrays(g: &RaGraph) -> BTreeSet<OpId> {
    let mut out = BTreeSet::new();
    for o in &g.ops {
        if let OpKind::Compute { body, .. } = &o.kind {
            body.visit_loads(&mut |l| {
                if let RaLeaf::Read { idx, .. } = l {
                    for i in idx {
                        if let RaIdx::Gather { array, .. } = i {
                            out.insert(*array);
                        }
                    }
                }
            });
        }
    }
    out
}

/// `u` is read as a tensor, not only gathered through.
pub(crate) fn read_as_value(g: &RaGraph, u: OpId) -> bool {
    g.ops.iter().any(|o| match &o.kind {
        OpKind::Compute { body, .. } => body.loads().iter().any(|l| matches!(l, RaLeaf::Read { op, .. } if *op == u)),
        _ => false,
    })
}

/// The structure fits the model's declaration.
pub fn check_structure(g: &RaGraph, ds: &DataStructure) -> Result<()> {
    let decl = &g.decl;
    if ds.is_empty() {
        return Err(Error::Input("empty data structure".into()));
    }
    if ds.max_fanout() > decl.max_children {
        return Err(Error::KindViolation(format!(
            "a node has {} children; `{}` allows at most {}",
            ds.max_fanout(),
            g.name,
            decl.max_children
        )));
    }
    if decl.kind != StructureKind::Dag && ds.parent_counts().iter().any(|&p| p > 1) {
        return Err(Error::KindViolation(format!("`{}` expects a {} but a node is shared", g.name, decl.kind)));
    }
    if g.full_arity && !ds.is_full(decl.max_children) {
        return Err(Error::KindViolation(format!(
            "`{}` reads fixed children and needs every internal node to have {} children",
            g.name, decl.max_children
        )));
    }
    Ok(())
}

/// Uniform values in [-0.5, 0.5) for every input `g` reads, from `seed`.
pub fn random_inputs(g: &RaGraph, ds: &DataStructure, seed: u64) -> Inputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payload = payload_arrays(g);
    let live = g.live_ops();
    let mut out = Inputs::new();
    for (u, o) in g.ops.iter().enumerate() {
        if o.kind != OpKind::Input || !live[u] || payload.contains(&u) && !read_as_value(g, u) {
            continue;
        }
        let shape: Vec<usize> = o
            .shape
            .iter()
            .map(|e| match e {
                Extent::Node => ds.len(),
                Extent::Const(c) => *c,
            })
            .collect();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        out.insert(o.name.clone(), Tensor::new(shape, ElemType::F64, data).expect("non-empty shape"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(d: &[f64]) -> Tensor {
        Tensor::new(vec![2, 2], ElemType::F64, d.to_vec()).unwrap()
    }

    #[test]
    fn identical_pass() {
        let r = check_equivalence(&t(&[1.0, 2.0, 3.0, 4.0]), &t(&[1.0, 2.0, 3.0, 4.0]), 0.0).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.first_mismatch, None);
    }

    #[test]
    fn perturbed_element_located() {
        let r = check_equivalence(&t(&[1.0, 2.0, 3.0, 4.0]), &t(&[1.0, 2.0, 3.001, 4.0]), 1e-6).unwrap();
        assert!(!r.pass);
        assert_eq!(r.first_mismatch, Some(vec![1, 0]));
        assert!((r.max_abs_diff - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let b = Tensor::new(vec![4], ElemType::F64, vec![0.0; 4]).unwrap();
        assert!(matches!(check_equivalence(&t(&[0.0; 4]), &b, 0.0), Err(Error::Shape(_))));
    }
}
