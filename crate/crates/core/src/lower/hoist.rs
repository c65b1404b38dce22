//! Computation hoisting and constant propagation.

use std::collections::BTreeMap;

use crate::ra::{AxisExpr, Extent, OpId, OpKind, RaExpr, RaGraph, RaIdx, RaLeaf};
use crate::structure::StructureDecl;
use crate::tensor::ScalarFn;

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct HoistReport {
    /// Leaf computations moved out of the recursion.
    pub hoisted: Vec<String>,
    /// Ops whose value is a uniform constant.
    pub constants: Vec<(String, f64)>,
    /// Rewrites applied by constant folding.
    pub folds: usize,
    /// The leaf branch is the zero tensor, so no leaf loop nest is needed.
    pub zero_leaf: bool,
}

impl HoistReport {
    pub fn is_empty(&self) -> bool {
        self.hoisted.is_empty() && self.folds == 0 && !self.zero_leaf
    }
}

fn node_independent(g: &RaGraph, e: &RaExpr) -> bool {
    let mut ok = true;
    e.visit_loads(&mut |l| match l {
        RaLeaf::Read { op, idx } => {
            if g.ops[*op].is_node_indexed() || idx.iter().any(|i| !matches!(i, RaIdx::Axis(_))) {
                ok = false;
            }
        }
        RaLeaf::HasChild(_) => ok = false,
        RaLeaf::Cmp(..) => {}
    });
    ok
}

/// Fold uniform constants through the graph and hoist a node-independent
/// leaf branch of the body conditional into a global compute.
///
/// With `leaf_inputs_uniform = false` the leaf branch is left in place
/// (constant folding still runs).
pub fn hoist_constants(g: &RaGraph, _decl: &StructureDecl, leaf_inputs_uniform: bool) -> (RaGraph, HoistReport) {
    let mut h = g.clone();
    let mut report = HoistReport::default();
    let mut known: BTreeMap<OpId, f64> = BTreeMap::new();
    for u in h.topo_all() {
        let OpKind::Compute { args, body } = &h.ops[u].kind else { continue };
        let (folded, n) = body.fold(&|l: &RaLeaf| match l {
            RaLeaf::Read { op, .. } => known.get(op).copied(),
            _ => None,
        });
        report.folds += n;
        if let ScalarFn::Const(c) = folded {
            known.insert(u, c);
            report.constants.push((h.ops[u].name.clone(), c));
        }
        let args = args.clone();
        h.ops[u].kind = OpKind::Compute { args, body: folded };
    }
    let Some((_, _, body)) = h.recursion() else {
        return (h, report);
    };
    let OpKind::IfThenElse { then_op: leaf, .. } = h.ops[body].kind else {
        return (h, report);
    };
    if !leaf_inputs_uniform {
        return (h, report);
    }
    let OpKind::Compute { args, body: e } = h.ops[leaf].kind.clone() else {
        return (h, report);
    };
    if matches!(e, ScalarFn::Const(z) if z == 0.0) {
        report.zero_leaf = true;
        report.hoisted.push(h.ops[leaf].name.clone());
        return (h, report);
    }
    if h.ops[leaf].shape.len() < 2 || !node_independent(&h, &e) {
        return (h, report);
    }
    let dense: Vec<Extent> = h.ops[leaf].shape[1..].to_vec();
    let name = format!("{}_hoisted", h.ops[leaf].name);
    let hid = h.add_raw(
        &name,
        OpKind::Compute {
            args: args[1..].to_vec(),
            body: e,
        },
        dense,
        None,
    );
    let idx: Vec<RaIdx> = args[1..].iter().map(|a| RaIdx::Axis(AxisExpr::var(a))).collect();
    h.ops[leaf].kind = OpKind::Compute {
        args,
        body: ScalarFn::Load(RaLeaf::Read { op: hid, idx }),
    };
    report.hoisted.push(h.ops[hid].name.clone());
    (h, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ra::Pred;
    use crate::structure::StructureKind;

    fn decl() -> StructureDecl {
        StructureDecl {
            kind: StructureKind::Tree,
            max_children: 2,
        }
    }

    fn model(leaf: &str) -> RaGraph {
        let mut g = RaGraph::new("z", decl());
        let nh = vec![Extent::Node, Extent::Const(2)];
        g.compute_str("init", vec![Extent::Const(2)], &["i"], "0.0").unwrap();
        g.input_tensor("W", vec![Extent::Const(2)]).unwrap();
        let ph = g.placeholder("ph", nh.clone()).unwrap();
        let l = g.compute_str("leaf", nh.clone(), &["n", "i"], leaf).unwrap();
        let r = g
            .compute_str("rec", nh.clone(), &["n", "i"], "tanh(ph[n.left, i] + ph[n.right, i] + init[i])")
            .unwrap();
        let b = g.if_then_else("body", nh, Pred::IsLeaf, l, r).unwrap();
        g.recursion_op("out", ph, b).unwrap();
        g
    }

    #[test]
    fn zero_leaf_is_eliminated() {
        let g = model("tanh(init[i] + init[i])");
        let (h, rep) = hoist_constants(&g, &decl(), true);
        assert!(rep.zero_leaf);
        assert_eq!(rep.hoisted, ["leaf"]);
        assert!(rep.folds >= 3);
        let rec = h.find("rec").unwrap();
        let OpKind::Compute { body, .. } = &h.ops[rec].kind else { panic!() };
        assert_eq!(body.static_ops(), 2);
    }

    #[test]
    fn nonzero_constant_is_hoisted() {
        let g = model("tanh(W[i])");
        let (h, rep) = hoist_constants(&g, &decl(), true);
        assert!(!rep.zero_leaf);
        assert_eq!(rep.hoisted, ["leaf_hoisted"]);
        assert!(!h.ops[h.find("leaf_hoisted").unwrap()].is_node_indexed());
        let (_, none) = hoist_constants(&g, &decl(), false);
        assert!(none.hoisted.is_empty());
    }

    #[test]
    fn payload_leaf_is_not_hoisted() {
        let mut g = RaGraph::new("p", decl());
        let nh = vec![Extent::Node, Extent::Const(2)];
        g.input_tensor("Emb", vec![Extent::Const(4), Extent::Const(2)]).unwrap();
        g.input_tensor("words", vec![Extent::Node]).unwrap();
        let ph = g.placeholder("ph", nh.clone()).unwrap();
        let l = g.compute_str("leaf", nh.clone(), &["n", "i"], "Emb[words[n], i]").unwrap();
        let r = g.compute_str("rec", nh.clone(), &["n", "i"], "ph[n.left, i]").unwrap();
        let b = g.if_then_else("body", nh, Pred::IsLeaf, l, r).unwrap();
        g.recursion_op("out", ph, b).unwrap();
        let (_, rep) = hoist_constants(&g, &decl(), true);
        assert!(rep.is_empty());
    }
}
