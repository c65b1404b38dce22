//! Text form of ILIR programs.
//!
//! ```text
//! # program treernn
//! # output rnn
//! # param N, leaf_batch_size, num_internal_batches, max_internal_batch_size
//! # array leaf_batch[d_batch: leaf_batch_size] schedule
//! # array batch_sizes[d_all_batches: num_internal_batches] count max_internal_batch_size
//! # tensor rnn[d_node: N, d_hidden: 256] global output
//! # dimmap d_node -> d_all_batches, d_batch
//! L1: for n_idx = 0:leaf_batch_size:         # d_batch parallel
//!       node = leaf_batch[n_idx]
//! L2:   for i = 0:256:                       # d_hidden
//!         rnn[node,i] = Emb[words[node],i]
//! ```
//!
//! Loop comments start at a fixed column and carry the loop's named
//! dimension, `parallel`, and the inferred `extent` when present.

use super::{ArrayKind, Cond, IlirProgram, IndexExpr, LayoutOp, Loop, Operand, Stmt, Storage, TensorRole, ValueExpr};
use crate::tensor::scalar::fmt_float;
use crate::tensor::ScalarFn;

const COMMENT_COL: usize = 43;

fn iprec(e: &IndexExpr) -> u8 {
    match e {
        IndexExpr::Add(..) | IndexExpr::Sub(..) => 1,
        IndexExpr::Mul(..) | IndexExpr::Div(..) | IndexExpr::Mod(..) => 2,
        _ => 3,
    }
}

pub(crate) fn write_index(e: &IndexExpr, ctx: u8, s: &mut String) {
    let paren = iprec(e) < ctx;
    if paren {
        s.push('(');
    }
    match e {
        IndexExpr::Const(c) if *c < 0 => {
            s.push_str(&format!("({c})"));
        }
        IndexExpr::Const(c) => s.push_str(&c.to_string()),
        IndexExpr::Var(v) => s.push_str(v),
        IndexExpr::Add(a, b) | IndexExpr::Sub(a, b) => {
            write_index(a, 1, s);
            s.push_str(if matches!(e, IndexExpr::Add(..)) { " + " } else { " - " });
            write_index(b, 2, s);
        }
        IndexExpr::Mul(a, b) | IndexExpr::Div(a, b) | IndexExpr::Mod(a, b) => {
            write_index(a, 2, s);
            s.push_str(match e {
                IndexExpr::Mul(..) => " * ",
                IndexExpr::Div(..) => " / ",
                _ => " % ",
            });
            write_index(b, 3, s);
        }
        IndexExpr::Load(n, args) => {
            s.push_str(n);
            write_args(args, s);
        }
    }
    if paren {
        s.push(')');
    }
}

fn write_args(args: &[IndexExpr], s: &mut String) {
    s.push('[');
    for (k, a) in args.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        write_index(a, 0, s);
    }
    s.push(']');
}

pub fn index_to_string(e: &IndexExpr) -> String {
    let mut s = String::new();
    write_index(e, 0, &mut s);
    s
}

pub fn cond_to_string(c: &Cond) -> String {
    match c {
        Cond::IsLeaf(e) => format!("isleaf({})", index_to_string(e)),
        Cond::Cmp(op, a, b) => format!("{} {} {}", index_to_string(a), op.as_str(), index_to_string(b)),
    }
}

fn vprec(e: &ValueExpr) -> u8 {
    match e {
        ScalarFn::Add(..) | ScalarFn::Sub(..) => 1,
        ScalarFn::Mul(..) => 2,
        _ => 3,
    }
}

fn write_value(e: &ValueExpr, ctx: u8, s: &mut String) {
    let paren = vprec(e) < ctx;
    if paren {
        s.push('(');
    }
    match e {
        ScalarFn::Const(c) => {
            struct F(f64);
            impl std::fmt::Display for F {
                fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                    fmt_float(f, self.0)
                }
            }
            s.push_str(&F(*c).to_string());
        }
        ScalarFn::Load(Operand::Read { tensor, idx }) => {
            s.push_str(tensor);
            write_args(idx, s);
        }
        ScalarFn::Load(Operand::Cond(c)) => {
            s.push('{');
            s.push_str(&cond_to_string(c));
            s.push('}');
        }
        ScalarFn::Add(a, b) | ScalarFn::Sub(a, b) => {
            write_value(a, 1, s);
            s.push_str(if matches!(e, ScalarFn::Add(..)) { " + " } else { " - " });
            write_value(b, 2, s);
        }
        ScalarFn::Mul(a, b) => {
            write_value(a, 2, s);
            s.push_str(" * ");
            write_value(b, 3, s);
        }
        ScalarFn::Tanh(a) | ScalarFn::Sigmoid(a) => {
            s.push_str(if matches!(e, ScalarFn::Tanh(_)) { "tanh(" } else { "sigmoid(" });
            write_value(a, 0, s);
            s.push(')');
        }
        ScalarFn::Select(c, a, b) => {
            s.push_str("select(");
            write_value(c, 0, s);
            s.push_str(", ");
            write_value(a, 0, s);
            s.push_str(", ");
            write_value(b, 0, s);
            s.push(')');
        }
        ScalarFn::Sum { var, extent, body } => {
            s.push_str(&format!("sum({var} < {extent}, "));
            write_value(body, 0, s);
            s.push(')');
        }
    }
    if paren {
        s.push(')');
    }
}

pub fn value_to_string(e: &ValueExpr) -> String {
    let mut s = String::new();
    write_value(e, 0, &mut s);
    s
}

fn dims_list(dims: &[String], ext: &[IndexExpr]) -> String {
    let parts: Vec<String> = dims
        .iter()
        .zip(ext)
        .map(|(d, e)| format!("{d}: {}", index_to_string(e)))
        .collect();
    format!("[{}]", parts.join(", "))
}

pub(crate) fn layout_to_string(op: &LayoutOp) -> String {
    match op {
        LayoutOp::Split { dim, factor } => format!("split({dim}, {factor})"),
        LayoutOp::Reorder { perm } => {
            let p: Vec<String> = perm.iter().map(|x| x.to_string()).collect();
            format!("reorder({})", p.join(", "))
        }
        LayoutOp::Fuse { dim } => format!("fuse({dim})"),
    }
}

pub fn print_program(p: &IlirProgram) -> String {
    let mut out = String::new();
    out.push_str(&format!("# program {}\n", p.name));
    out.push_str(&format!("# output {}\n", p.output));
    if !p.params.is_empty() {
        out.push_str(&format!("# param {}\n", p.params.join(", ")));
    }
    for a in &p.arrays {
        let kind = match &a.kind {
            ArrayKind::Schedule => "schedule".to_string(),
            ArrayKind::Child => "child".to_string(),
            ArrayKind::Payload { dim } => format!("payload {dim}"),
            ArrayKind::Count { max } => format!("count {}", index_to_string(max)),
        };
        out.push_str(&format!("# array {}{} {kind}\n", a.name, dims_list(&a.dims, &a.extents)));
    }
    for t in &p.tensors {
        let (ld, le) = t.logical();
        let mut line = format!(
            "# {} {}{}",
            if t.role == TensorRole::Input { "input" } else { "tensor" },
            t.name,
            dims_list(ld, le)
        );
        if t.role != TensorRole::Input {
            line.push_str(match t.storage {
                Storage::Global => " global",
                Storage::Scratch => " scratch",
            });
        }
        if t.role == TensorRole::Output {
            line.push_str(" output");
        }
        if let Some(v) = t.init {
            line.push_str(&format!(" init {v:?}"));
        }
        if let Some(r) = &t.required {
            let parts: Vec<String> = r.iter().map(index_to_string).collect();
            line.push_str(&format!(" required({})", parts.join(", ")));
        }
        out.push_str(&line);
        out.push('\n');
        for (op, _, _) in &t.layout {
            out.push_str(&format!("# layout {} {}\n", t.name, layout_to_string(op)));
        }
    }
    for (d, ls) in &p.dim_map {
        out.push_str(&format!("# dimmap {d} -> {}\n", ls.join(", ")));
    }
    let width = p.loops().iter().map(|l| l.label.len() + 2).max().unwrap_or(4).max(4);
    let mut prev: Option<&Stmt> = None;
    for st in &p.body {
        // blank line between top-level nests, before any barrier separating them
        let gap = match (prev, st) {
            (None, _) => false,
            (Some(Stmt::Barrier), Stmt::Loop(_)) => false,
            (_, Stmt::Loop(_) | Stmt::Barrier) => true,
            _ => false,
        };
        if gap {
            out.push('\n');
        }
        prev = Some(st);
        write_stmt(st, 0, width, &mut out);
    }
    out
}

fn line(label: Option<&str>, depth: usize, width: usize, text: &str, comment: Option<&str>, out: &mut String) {
    let prefix = match label {
        Some(l) => format!("{:<width$}", format!("{l}:")),
        None => " ".repeat(width),
    };
    let mut s = format!("{prefix}{}{text}", "  ".repeat(depth));
    if let Some(c) = comment {
        let col = COMMENT_COL.max(s.len() + 1);
        while s.len() < col {
            s.push(' ');
        }
        s.push_str("# ");
        s.push_str(c);
    }
    out.push_str(&s);
    out.push('\n');
}

fn loop_comment(l: &Loop) -> String {
    let mut c = l.dim.clone();
    if l.parallel {
        c.push_str(" parallel");
    }
    if let Some(e) = &l.extent {
        c.push_str(&format!(" extent {}", index_to_string(e)));
    }
    c
}

fn write_stmt(st: &Stmt, depth: usize, width: usize, out: &mut String) {
    match st {
        Stmt::Loop(l) => {
            let text = format!("for {} = 0:{}:", l.var, index_to_string(&l.bound));
            let label = if l.label.is_empty() { None } else { Some(l.label.as_str()) };
            line(label, depth, width, &text, Some(&loop_comment(l)), out);
            for s in &l.body {
                write_stmt(s, depth + 1, width, out);
            }
        }
        Stmt::Let { var, value } => {
            line(None, depth, width, &format!("{var} = {}", index_to_string(value)), None, out);
        }
        Stmt::Store { tensor, idx, value } => {
            let mut lhs = tensor.clone();
            write_args(idx, &mut lhs);
            line(None, depth, width, &format!("{lhs} = {}", value_to_string(value)), None, out);
        }
        Stmt::If { cond, then, els } => {
            line(None, depth, width, &format!("if {}:", cond_to_string(cond)), None, out);
            if then.is_empty() {
                line(None, depth + 1, width, "pass", None, out);
            }
            for s in then {
                write_stmt(s, depth + 1, width, out);
            }
            if !els.is_empty() {
                line(None, depth, width, "else:", None, out);
                for s in els {
                    write_stmt(s, depth + 1, width, out);
                }
            }
        }
        Stmt::Barrier => line(None, depth, width, "barrier", None, out),
    }
}
