//! JSON model files mirroring the builder calls.
//!
//! ```text
//! { "name": "treernn", "kind": "tree", "max_children": 2, "full_arity": true,
//!   "params": { "H": 4, "V": 16 },
//!   "ops": [
//!     { "op": "input", "name": "Emb", "shape": ["V", "H"] },
//!     { "op": "placeholder", "name": "rnn_ph", "shape": ["N", "H"] },
//!     { "op": "compute", "name": "lh", "shape": ["N", "H"], "args": ["n", "i"],
//!       "body": "rnn_ph[n.left, i]" },
//!     { "op": "if_then_else", "name": "body", "shape": ["N", "H"],
//!       "pred": "isleaf", "then": "leaf_case", "else": "recursive_case" },
//!     { "op": "recursion", "name": "rnn", "placeholder": "rnn_ph", "body": "body" } ],
//!   "schedule": { "dynamic_batch": true, "specialize": ["body"], "unroll": 0,
//!                 "refactor": null, "hoist": true },
//!   "cuts": { "hsum": [["hsum", "z"], ["hsum", "r"]] } }
//! ```
//!
//! Shape entries are `"N"`, integers, or integer expressions over `params`.
//! Ops may appear in any order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::expr::node_var_of;
use super::{parse_expr, print_expr, Cut, Directive, ExprScope, Extent, OpKind, Pred, RaGraph, RaSchedule, Shape};
use crate::error::{Error, Loc, Result};
use crate::structure::{StructureDecl, StructureKind};
use crate::syntax::{Cursor, Tok};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Dim {
    Int(usize),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpSpec {
    Input {
        name: String,
        shape: Vec<Dim>,
    },
    Placeholder {
        name: String,
        shape: Vec<Dim>,
    },
    Compute {
        name: String,
        shape: Vec<Dim>,
        args: Vec<String>,
        body: String,
    },
    IfThenElse {
        name: String,
        shape: Vec<Dim>,
        pred: String,
        then: String,
        #[serde(rename = "else")]
        else_: String,
    },
    Recursion {
        name: String,
        placeholder: String,
        body: String,
    },
}

impl OpSpec {
    fn name(&self) -> &str {
        match self {
            OpSpec::Input { name, .. }
            | OpSpec::Placeholder { name, .. }
            | OpSpec::Compute { name, .. }
            | OpSpec::IfThenElse { name, .. }
            | OpSpec::Recursion { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub dynamic_batch: bool,
    #[serde(default)]
    pub specialize: Vec<String>,
    #[serde(default)]
    pub unroll: usize,
    #[serde(default)]
    pub refactor: Option<String>,
    #[serde(default = "yes")]
    pub hoist: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub kind: StructureKind,
    pub max_children: usize,
    #[serde(default)]
    pub full_arity: bool,
    #[serde(default)]
    pub params: BTreeMap<String, i64>,
    pub ops: Vec<OpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub cuts: BTreeMap<String, Vec<(String, String)>>,
    /// Set on dumps of refactored graphs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub transformed: bool,
    /// Ops that share the storage of another op.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
}

fn dim_extent(params: &BTreeMap<String, i64>, d: &Dim, op: &str) -> Result<Extent> {
    let bad = |m: String| Error::Shape(format!("op `{op}`: {m}"));
    match d {
        Dim::Int(v) => Ok(Extent::Const(*v)),
        Dim::Expr(s) if s.trim() == "N" => Ok(Extent::Node),
        Dim::Expr(s) => {
            let mut cur = Cursor::new(s, Loc { line: 1, col: 1 })?;
            let v = int_expr(&mut cur, params)?;
            cur.expect_end()?;
            if v < 1 {
                return Err(bad(format!("extent `{s}` evaluates to {v}")));
            }
            Ok(Extent::Const(v as usize))
        }
    }
}

fn int_expr(cur: &mut Cursor, params: &BTreeMap<String, i64>) -> Result<i64> {
    let mut v = int_term(cur, params)?;
    loop {
        if cur.eat_sym("+") {
            v += int_term(cur, params)?;
        } else if cur.eat_sym("-") {
            v -= int_term(cur, params)?;
        } else {
            return Ok(v);
        }
    }
}

fn int_term(cur: &mut Cursor, params: &BTreeMap<String, i64>) -> Result<i64> {
    let mut v = int_atom(cur, params)?;
    while cur.eat_sym("*") {
        v *= int_atom(cur, params)?;
    }
    Ok(v)
}

fn int_atom(cur: &mut Cursor, params: &BTreeMap<String, i64>) -> Result<i64> {
    let loc = cur.loc();
    match cur.next() {
        Some(Tok::Int(v)) => Ok(v),
        Some(Tok::Ident(w)) => params.get(&w).copied().ok_or_else(|| Error::Parse {
            loc,
            msg: format!("unknown parameter `{w}`"),
        }),
        Some(Tok::Sym("(")) => {
            let v = int_expr(cur, params)?;
            cur.expect_sym(")")?;
            Ok(v)
        }
        _ => Err(Error::Parse {
            loc,
            msg: "expected integer expression".into(),
        }),
    }
}

/// Identifiers mentioned in an expression; used to order ops.
fn mentioned(src: &str) -> Vec<String> {
    crate::syntax::tokenize(src, Loc { line: 1, col: 1 })
        .map(|ts| {
            ts.into_iter()
                .filter_map(|t| match t.tok {
                    Tok::Ident(w) => Some(w),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Parse a model file; applies `param_overrides` on top of the file's params.
pub fn load_model(text: &str, param_overrides: &BTreeMap<String, i64>) -> Result<(RaGraph, RaSchedule)> {
    let mut f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        loc: Loc {
            line: e.line(),
            col: e.column(),
        },
        msg: e.to_string(),
    })?;
    for (k, v) in param_overrides {
        f.params.insert(k.clone(), *v);
    }
    build(&f)
}

pub fn build(f: &ModelFile) -> Result<(RaGraph, RaSchedule)> {
    let mut g = RaGraph::new(
        &f.name,
        StructureDecl {
            kind: f.kind,
            max_children: f.max_children,
        },
    );
    g.full_arity = f.full_arity;
    g.transformed = f.transformed;
    g.params = f.params.clone();

    // Topological order over name references, stable in file order.
    let names: Vec<&str> = f.ops.iter().map(OpSpec::name).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Graph(format!("duplicate op name `{n}`")));
        }
    }
    let deps: Vec<Vec<usize>> = f
        .ops
        .iter()
        .map(|o| {
            let refs: Vec<String> = match o {
                OpSpec::Input { .. } | OpSpec::Placeholder { .. } => vec![],
                OpSpec::Compute { body, .. } => mentioned(body),
                OpSpec::IfThenElse { then, else_, .. } => vec![then.clone(), else_.clone()],
                OpSpec::Recursion { placeholder, body, .. } => vec![placeholder.clone(), body.clone()],
            };
            let mut d: Vec<usize> = refs.iter().filter_map(|r| names.iter().position(|n| n == r)).collect();
            d.dedup();
            d
        })
        .collect();
    let mut state = vec![0u8; f.ops.len()];
    let mut order = Vec::new();
    for s in 0..f.ops.len() {
        visit(s, &deps, &mut state, &mut order, &names)?;
    }

    for i in order {
        let o = &f.ops[i];
        let shape_of = |dims: &[Dim], name: &str| -> Result<Shape> {
            dims.iter().map(|d| dim_extent(&g.params, d, name)).collect()
        };
        match o {
            OpSpec::Input { name, shape } => {
                let s = shape_of(shape, name)?;
                g.input_tensor(name, s)?;
            }
            OpSpec::Placeholder { name, shape } => {
                let s = shape_of(shape, name)?;
                g.placeholder(name, s)?;
            }
            OpSpec::Compute { name, shape, args, body } => {
                let s = shape_of(shape, name)?;
                let scope = ExprScope::new(args, s.first() == Some(&Extent::Node));
                let e = parse_expr(&g, &scope, body, Loc { line: 1, col: 1 }).map_err(|e| match e {
                    Error::Parse { loc, msg } => Error::Parse {
                        loc,
                        msg: format!("in body of `{name}`: {msg}"),
                    },
                    other => other,
                })?;
                let a: Vec<&str> = args.iter().map(String::as_str).collect();
                g.compute(name, s, &a, e)?;
            }
            OpSpec::IfThenElse {
                name,
                shape,
                pred,
                then,
                else_,
            } => {
                if pred != "isleaf" {
                    return Err(Error::Invalid(format!("`{name}`: unsupported predicate `{pred}`")));
                }
                let s = shape_of(shape, name)?;
                let t = g.lookup(then)?;
                let e = g.lookup(else_)?;
                g.if_then_else(name, s, Pred::IsLeaf, t, e)?;
            }
            OpSpec::Recursion { name, placeholder, body } => {
                let p = g.lookup(placeholder)?;
                let b = g.lookup(body)?;
                g.recursion_op(name, p, b)?;
            }
        }
    }
    if let Some(o) = &f.output {
        g.output = Some(g.lookup(o)?);
    }
    for (cname, edges) in &f.cuts {
        let e = edges
            .iter()
            .map(|(a, b)| Ok((g.lookup(a)?, g.lookup(b)?)))
            .collect::<Result<Vec<_>>>()?;
        g.cuts.insert(cname.clone(), e);
    }
    for (a, b) in &f.aliases {
        let (a, b) = (g.lookup(a)?, g.lookup(b)?);
        g.ops[a].alias = Some(b);
    }
    g.validate()?;

    let sp = &f.schedule;
    let mut s = RaSchedule::default();
    s = super::schedule_set(&g, &s, Directive::DynamicBatch(sp.dynamic_batch))?;
    for name in &sp.specialize {
        s = super::schedule_set(&g, &s, Directive::Specialize(g.lookup(name)?))?;
    }
    s = super::schedule_set(&g, &s, Directive::Unroll(sp.unroll))?;
    if let Some(c) = &sp.refactor {
        s = super::schedule_set(&g, &s, Directive::Refactor(named_cut(&g, c)?))?;
    }
    s = super::schedule_set(&g, &s, Directive::Hoist(sp.hoist))?;
    Ok((g, s))
}

pub fn named_cut(g: &RaGraph, name: &str) -> Result<Cut> {
    let edges = g
        .cuts
        .get(name)
        .ok_or_else(|| Error::InvalidCut(format!("model `{}` defines no cut named `{name}`", g.name)))?;
    Ok(Cut {
        name: Some(name.to_string()),
        edges: edges.clone(),
    })
}

fn visit(u: usize, deps: &[Vec<usize>], state: &mut [u8], order: &mut Vec<usize>, names: &[&str]) -> Result<()> {
    // Ops lists are short; recursion depth is bounded by the op count.
    match state[u] {
        2 => return Ok(()),
        1 => return Err(Error::Cycle(names[u].to_string())),
        _ => {}
    }
    state[u] = 1;
    for &d in &deps[u] {
        if d != u {
            visit(d, deps, state, order, names)?;
        } else {
            return Err(Error::Cycle(names[u].to_string()));
        }
    }
    state[u] = 2;
    order.push(u);
    Ok(())
}

fn dims(s: &Shape) -> Vec<Dim> {
    s.iter()
        .map(|e| match e {
            Extent::Node => Dim::Expr("N".into()),
            Extent::Const(c) => Dim::Int(*c),
        })
        .collect()
}

/// Model file for `g` with schedule `s`, ops in dependence order. Re-loads
/// to an equal graph when `g`'s ids are already in that order, and to one
/// with the same dump otherwise.
pub fn model_to_json(g: &RaGraph, s: &RaSchedule) -> String {
    let ops = g
        .topo_all()
        .into_iter()
        .map(|i| (i, &g.ops[i]))
        .map(|(i, o)| match &o.kind {
            OpKind::Input => OpSpec::Input {
                name: o.name.clone(),
                shape: dims(&o.shape),
            },
            OpKind::Placeholder => OpSpec::Placeholder {
                name: o.name.clone(),
                shape: dims(&o.shape),
            },
            OpKind::Compute { args, body } => OpSpec::Compute {
                name: o.name.clone(),
                shape: dims(&o.shape),
                args: args.clone(),
                body: print_expr(g, &node_var_of(g, i), body),
            },
            OpKind::IfThenElse { then_op, else_op, .. } => OpSpec::IfThenElse {
                name: o.name.clone(),
                shape: dims(&o.shape),
                pred: "isleaf".into(),
                then: g.ops[*then_op].name.clone(),
                else_: g.ops[*else_op].name.clone(),
            },
            OpKind::Recursion { placeholder, body } => OpSpec::Recursion {
                name: o.name.clone(),
                placeholder: g.ops[*placeholder].name.clone(),
                body: g.ops[*body].name.clone(),
            },
        })
        .collect();
    let f = ModelFile {
        name: g.name.clone(),
        kind: g.decl.kind,
        max_children: g.decl.max_children,
        full_arity: g.full_arity,
        params: g.params.clone(),
        ops,
        output: g.output.map(|o| g.ops[o].name.clone()),
        schedule: ScheduleSpec {
            dynamic_batch: s.dynamic_batch,
            specialize: s.specialize.iter().map(|&o| g.ops[o].name.clone()).collect(),
            unroll: s.unroll_depth,
            refactor: s.refactor_cut.as_ref().and_then(|c| c.name.clone()),
            hoist: s.hoist,
        },
        cuts: g
            .cuts
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    v.iter()
                        .map(|(a, b)| (g.ops[*a].name.clone(), g.ops[*b].name.clone()))
                        .collect(),
                )
            })
            .collect(),
        transformed: g.transformed,
        aliases: g
            .ops
            .iter()
            .filter_map(|o| o.alias.map(|a| (o.name.clone(), g.ops[a].name.clone())))
            .collect(),
    };
    serde_json::to_string_pretty(&f).expect("model serializes")
}
