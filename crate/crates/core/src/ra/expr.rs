//! Compute-body expression syntax.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary ("*" unary)*
//! unary   := "-" unary | atom
//! atom    := number | "(" expr ")"
//!          | ("tanh" | "sigmoid") "(" expr ")"
//!          | "select" "(" expr "," expr "," expr ")"
//!          | "sum" "(" ident "<" axis "," expr ")"
//!          | "childsum" "(" ident "," expr ")"
//!          | "haschild" "(" noderef ")"
//!          | "{" axis cmp axis "}"
//!          | op "[" index ("," index)* "]"
//! index   := noderef | array "[" noderef "]" | axis
//! noderef := nodevar | nodevar "." ("left" | "right" | int | childvar)
//! axis    := affine expression over axis variables, parameters and ints
//! ```
//!
//! `childsum(c, e)` sums `e` over the existing children `n.c` of the node;
//! it is stored as `sum(c < max_children, select(haschild(n.c), e, 0.0))`.

use super::{AxisExpr, ChildSel, NodeRef, OpKind, RaExpr, RaGraph, RaIdx, RaLeaf};
use crate::error::{Loc, Result};
use crate::syntax::{Cursor, Tok};
use crate::tensor::scalar::fmt_float;
use crate::tensor::ScalarFn;

#[derive(Debug, Clone)]
pub struct ExprScope {
    node_var: Option<String>,
    axis_vars: Vec<String>,
    child_vars: Vec<String>,
}

impl ExprScope {
    pub fn new(args: &[String], node_indexed: bool) -> Self {
        let (node_var, axis) = if node_indexed && !args.is_empty() {
            (Some(args[0].clone()), args[1..].to_vec())
        } else {
            (None, args.to_vec())
        };
        ExprScope {
            node_var,
            axis_vars: axis,
            child_vars: Vec::new(),
        }
    }
}

pub fn parse_expr(g: &RaGraph, scope: &ExprScope, src: &str, base: Loc) -> Result<RaExpr> {
    let mut cur = Cursor::new(src, base)?;
    let mut p = Parser {
        g,
        scope: scope.clone(),
        cur: &mut cur,
    };
    let e = p.expr()?;
    cur.expect_end()?;
    Ok(e)
}

struct Parser<'a> {
    g: &'a RaGraph,
    scope: ExprScope,
    cur: &'a mut Cursor,
}

impl Parser<'_> {
    fn expr(&mut self) -> Result<RaExpr> {
        let mut e = self.term()?;
        loop {
            if self.cur.eat_sym("+") {
                e = ScalarFn::add(e, self.term()?);
            } else if self.cur.eat_sym("-") {
                e = ScalarFn::sub(e, self.term()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<RaExpr> {
        let mut e = self.unary()?;
        while self.cur.eat_sym("*") {
            e = ScalarFn::mul(e, self.unary()?);
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<RaExpr> {
        if self.cur.eat_sym("-") {
            return Ok(match self.unary()? {
                ScalarFn::Const(c) => ScalarFn::Const(-c),
                e => ScalarFn::sub(ScalarFn::Const(0.0), e),
            });
        }
        self.atom()
    }

    fn call1(&mut self) -> Result<RaExpr> {
        self.cur.expect_sym("(")?;
        let e = self.expr()?;
        self.cur.expect_sym(")")?;
        Ok(e)
    }

    fn atom(&mut self) -> Result<RaExpr> {
        let loc = self.cur.loc();
        match self.cur.next() {
            Some(Tok::Int(v)) => Ok(ScalarFn::Const(v as f64)),
            Some(Tok::Float(v)) => Ok(ScalarFn::Const(v)),
            Some(Tok::Sym("(")) => {
                let e = self.expr()?;
                self.cur.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Sym("{")) => {
                let a = self.axis()?;
                let op = self
                    .cur
                    .eat_cmp()
                    .ok_or_else(|| self.cur.error("expected comparison operator"))?;
                let b = self.axis()?;
                self.cur.expect_sym("}")?;
                Ok(ScalarFn::Load(RaLeaf::Cmp(op, a, b)))
            }
            Some(Tok::Ident(w)) => match w.as_str() {
                "tanh" => Ok(ScalarFn::tanh(self.call1()?)),
                "sigmoid" => Ok(ScalarFn::sigmoid(self.call1()?)),
                "select" => {
                    self.cur.expect_sym("(")?;
                    let c = self.expr()?;
                    self.cur.expect_sym(",")?;
                    let a = self.expr()?;
                    self.cur.expect_sym(",")?;
                    let b = self.expr()?;
                    self.cur.expect_sym(")")?;
                    Ok(ScalarFn::select(c, a, b))
                }
                "sum" => {
                    self.cur.expect_sym("(")?;
                    let v = self.cur.expect_ident()?;
                    self.cur.expect_sym("<")?;
                    let ext_loc = self.cur.loc();
                    let ext = self.axis()?.eval(&[]).filter(|&x| x >= 0).ok_or_else(|| crate::Error::Parse {
                        loc: ext_loc,
                        msg: "reduction extent must be a non-negative constant".into(),
                    })?;
                    self.cur.expect_sym(",")?;
                    self.scope.axis_vars.push(v.clone());
                    let body = self.expr();
                    self.scope.axis_vars.pop();
                    let body = body?;
                    self.cur.expect_sym(")")?;
                    Ok(ScalarFn::sum(v, ext as usize, body))
                }
                "childsum" => {
                    self.cur.expect_sym("(")?;
                    let v = self.cur.expect_ident()?;
                    self.cur.expect_sym(",")?;
                    self.scope.child_vars.push(v.clone());
                    let body = self.expr();
                    self.scope.child_vars.pop();
                    let body = body?;
                    self.cur.expect_sym(")")?;
                    let guard = ScalarFn::Load(RaLeaf::HasChild(ChildSel::Var(v.clone())));
                    Ok(ScalarFn::sum(
                        v,
                        self.g.decl.max_children,
                        ScalarFn::select(guard, body, ScalarFn::Const(0.0)),
                    ))
                }
                "haschild" => {
                    self.cur.expect_sym("(")?;
                    let r = self.noderef()?;
                    self.cur.expect_sym(")")?;
                    match r {
                        NodeRef::Child(sel) => Ok(ScalarFn::Load(RaLeaf::HasChild(sel))),
                        NodeRef::This => Err(crate::Error::Parse {
                            loc,
                            msg: "haschild needs a child reference".into(),
                        }),
                    }
                }
                _ => {
                    let op = self.g.find(&w).ok_or_else(|| crate::Error::Parse {
                        loc,
                        msg: format!("unknown tensor `{w}`"),
                    })?;
                    self.cur.expect_sym("[")?;
                    let mut idx = Vec::new();
                    loop {
                        idx.push(self.index()?);
                        if !self.cur.eat_sym(",") {
                            break;
                        }
                    }
                    self.cur.expect_sym("]")?;
                    Ok(ScalarFn::Load(RaLeaf::Read { op, idx }))
                }
            },
            _ => Err(crate::Error::Parse {
                loc,
                msg: "expected an expression".into(),
            }),
        }
    }

    fn is_node_var(&self) -> bool {
        matches!((self.cur.peek(), &self.scope.node_var), (Some(Tok::Ident(w)), Some(n)) if w == n)
    }

    fn noderef(&mut self) -> Result<NodeRef> {
        if !self.is_node_var() {
            return Err(self.cur.error(format!("expected node variable, found {}", self.cur.describe())));
        }
        self.cur.next();
        if !self.cur.eat_sym(".") {
            return Ok(NodeRef::This);
        }
        let loc = self.cur.loc();
        match self.cur.next() {
            Some(Tok::Ident(w)) if w == "left" => Ok(NodeRef::Child(ChildSel::Fixed(0))),
            Some(Tok::Ident(w)) if w == "right" => Ok(NodeRef::Child(ChildSel::Fixed(1))),
            Some(Tok::Ident(w)) if self.scope.child_vars.contains(&w) => Ok(NodeRef::Child(ChildSel::Var(w))),
            Some(Tok::Int(k)) if k >= 0 => Ok(NodeRef::Child(ChildSel::Fixed(k as usize))),
            _ => Err(crate::Error::Parse {
                loc,
                msg: "expected `left`, `right`, a child position or a childsum variable".into(),
            }),
        }
    }

    fn index(&mut self) -> Result<RaIdx> {
        if self.is_node_var() {
            return Ok(RaIdx::Node(self.noderef()?));
        }
        if let (Some(Tok::Ident(w)), Some(Tok::Sym("["))) = (self.cur.peek(), self.cur.peek_at(1)) {
            let w = w.clone();
            let loc = self.cur.loc();
            let array = self.g.find(&w).ok_or_else(|| crate::Error::Parse {
                loc,
                msg: format!("unknown array `{w}`"),
            })?;
            self.cur.next();
            self.cur.next();
            let node = self.noderef()?;
            self.cur.expect_sym("]")?;
            return Ok(RaIdx::Gather { array, node });
        }
        Ok(RaIdx::Axis(self.axis()?))
    }

    fn axis(&mut self) -> Result<AxisExpr> {
        let mut e = self.axis_term()?;
        loop {
            if self.cur.eat_sym("+") {
                e = AxisExpr::Add(Box::new(e), Box::new(self.axis_term()?));
            } else if self.cur.eat_sym("-") {
                e = AxisExpr::Sub(Box::new(e), Box::new(self.axis_term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn axis_term(&mut self) -> Result<AxisExpr> {
        let mut e = self.axis_atom()?;
        while self.cur.eat_sym("*") {
            e = AxisExpr::Mul(Box::new(e), Box::new(self.axis_atom()?));
        }
        Ok(e)
    }

    fn axis_atom(&mut self) -> Result<AxisExpr> {
        let loc = self.cur.loc();
        match self.cur.next() {
            Some(Tok::Int(v)) => Ok(AxisExpr::Const(v)),
            Some(Tok::Sym("-")) => match self.axis_atom()? {
                AxisExpr::Const(c) => Ok(AxisExpr::Const(-c)),
                e => Ok(AxisExpr::Sub(Box::new(AxisExpr::Const(0)), Box::new(e))),
            },
            Some(Tok::Sym("(")) => {
                let e = self.axis()?;
                self.cur.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) => {
                if self.scope.axis_vars.contains(&w) {
                    Ok(AxisExpr::Var(w))
                } else if let Some(v) = self.g.param(&w) {
                    Ok(AxisExpr::Const(v))
                } else {
                    Err(crate::Error::Parse {
                        loc,
                        msg: format!("unknown index variable or parameter `{w}`"),
                    })
                }
            }
            _ => Err(crate::Error::Parse {
                loc,
                msg: "expected an index expression".into(),
            }),
        }
    }
}

/// Print `e` in the syntax accepted by [`parse_expr`].
pub fn print_expr(g: &RaGraph, node_var: &str, e: &RaExpr) -> String {
    let mut s = String::new();
    write_expr(g, node_var, e, 0, &mut s);
    s
}

fn prec(e: &RaExpr) -> u8 {
    match e {
        ScalarFn::Add(..) | ScalarFn::Sub(..) => 1,
        ScalarFn::Mul(..) => 2,
        _ => 3,
    }
}

fn write_expr(g: &RaGraph, nv: &str, e: &RaExpr, ctx: u8, s: &mut String) {
    let paren = prec(e) < ctx;
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
        ScalarFn::Load(l) => write_leaf(g, nv, l, s),
        ScalarFn::Add(a, b) | ScalarFn::Sub(a, b) => {
            write_expr(g, nv, a, 1, s);
            s.push_str(if matches!(e, ScalarFn::Add(..)) { " + " } else { " - " });
            write_expr(g, nv, b, 2, s);
        }
        ScalarFn::Mul(a, b) => {
            write_expr(g, nv, a, 2, s);
            s.push_str(" * ");
            write_expr(g, nv, b, 3, s);
        }
        ScalarFn::Tanh(a) | ScalarFn::Sigmoid(a) => {
            s.push_str(if matches!(e, ScalarFn::Tanh(_)) { "tanh(" } else { "sigmoid(" });
            write_expr(g, nv, a, 0, s);
            s.push(')');
        }
        ScalarFn::Select(c, a, b) => {
            s.push_str("select(");
            write_expr(g, nv, c, 0, s);
            s.push_str(", ");
            write_expr(g, nv, a, 0, s);
            s.push_str(", ");
            write_expr(g, nv, b, 0, s);
            s.push(')');
        }
        ScalarFn::Sum { var, extent, body } => {
            if let ScalarFn::Select(c, a, z) = &**body {
                if let (ScalarFn::Load(RaLeaf::HasChild(ChildSel::Var(v))), ScalarFn::Const(zero)) = (&**c, &**z) {
                    if v == var && *zero == 0.0 && *extent == g.decl.max_children {
                        s.push_str(&format!("childsum({var}, "));
                        write_expr(g, nv, a, 0, s);
                        s.push(')');
                        if paren {
                            s.push(')');
                        }
                        return;
                    }
                }
            }
            s.push_str(&format!("sum({var} < {extent}, "));
            write_expr(g, nv, body, 0, s);
            s.push(')');
        }
    }
    if paren {
        s.push(')');
    }
}

fn write_noderef(nv: &str, r: &NodeRef, s: &mut String) {
    s.push_str(nv);
    match r {
        NodeRef::This => {}
        NodeRef::Child(ChildSel::Fixed(k)) => s.push_str(&format!(".{k}")),
        NodeRef::Child(ChildSel::Var(v)) => s.push_str(&format!(".{v}")),
    }
}

pub(crate) fn write_axis(a: &AxisExpr, ctx: u8, s: &mut String) {
    match a {
        AxisExpr::Const(c) if *c < 0 => s.push_str(&format!("({c})")),
        AxisExpr::Const(c) => s.push_str(&c.to_string()),
        AxisExpr::Var(v) => s.push_str(v),
        AxisExpr::Add(x, y) | AxisExpr::Sub(x, y) => {
            if ctx > 1 {
                s.push('(');
            }
            write_axis(x, 1, s);
            s.push_str(if matches!(a, AxisExpr::Add(..)) { " + " } else { " - " });
            write_axis(y, 2, s);
            if ctx > 1 {
                s.push(')');
            }
        }
        AxisExpr::Mul(x, y) => {
            write_axis(x, 2, s);
            s.push_str(" * ");
            write_axis(y, 3, s);
        }
    }
}

fn write_leaf(g: &RaGraph, nv: &str, l: &RaLeaf, s: &mut String) {
    match l {
        RaLeaf::Read { op, idx } => {
            s.push_str(&g.ops[*op].name);
            s.push('[');
            for (k, i) in idx.iter().enumerate() {
                if k > 0 {
                    s.push_str(", ");
                }
                match i {
                    RaIdx::Node(r) => write_noderef(nv, r, s),
                    RaIdx::Axis(a) => write_axis(a, 0, s),
                    RaIdx::Gather { array, node } => {
                        s.push_str(&g.ops[*array].name);
                        s.push('[');
                        write_noderef(nv, node, s);
                        s.push(']');
                    }
                }
            }
            s.push(']');
        }
        RaLeaf::HasChild(sel) => {
            s.push_str("haschild(");
            write_noderef(nv, &NodeRef::Child(sel.clone()), s);
            s.push(')');
        }
        RaLeaf::Cmp(op, a, b) => {
            s.push('{');
            write_axis(a, 0, s);
            s.push_str(&format!(" {} ", op.as_str()));
            write_axis(b, 0, s);
            s.push('}');
        }
    }
}

/// Node variable used when printing `op`'s body.
pub(crate) fn node_var_of(g: &RaGraph, op: usize) -> String {
    match &g.ops[op].kind {
        OpKind::Compute { args, .. } if g.ops[op].is_node_indexed() => args[0].clone(),
        _ => "n".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ra::Extent;
    use crate::structure::{StructureDecl, StructureKind};

    fn graph() -> RaGraph {
        let mut g = RaGraph::new(
            "t",
            StructureDecl {
                kind: StructureKind::Tree,
                max_children: 3,
            },
        );
        g.params.insert("H".into(), 4);
        g.input_tensor("W", vec![Extent::Const(4), Extent::Const(4)]).unwrap();
        g.input_tensor("words", vec![Extent::Node]).unwrap();
        g.input_tensor("Emb", vec![Extent::Const(16), Extent::Const(4)]).unwrap();
        g.placeholder("ph", vec![Extent::Node, Extent::Const(4)]).unwrap();
        g
    }

    #[test]
    fn round_trip_forms() {
        let g = graph();
        let scope = ExprScope::new(&["n".into(), "i".into()], true);
        for src in [
            "tanh(ph[n.0, i] + ph[n.2, i])",
            "sum(k < 4, W[i, k] * Emb[words[n], k])",
            "childsum(c, ph[n.c, i]) * (1.0 - sigmoid(Emb[words[n], i]))",
            "select({i == 0}, 1.0, (-2.5)) - (ph[n.1, i] - ph[n.0, i])",
            "haschild(n.1) * ph[n.1, i + 1 - 1]",
        ] {
            let e = parse_expr(&g, &scope, src, Loc { line: 1, col: 1 }).unwrap();
            let printed = print_expr(&g, "n", &e);
            let e2 = parse_expr(&g, &scope, &printed, Loc { line: 1, col: 1 }).unwrap();
            assert_eq!(e, e2, "{src} -> {printed}");
        }
    }

    #[test]
    fn left_right_and_params() {
        let g = graph();
        let scope = ExprScope::new(&["n".into(), "i".into()], true);
        let e = parse_expr(&g, &scope, "ph[n.left, H - 1 - i]", Loc { line: 1, col: 1 }).unwrap();
        assert_eq!(print_expr(&g, "n", &e), "ph[n.0, 4 - 1 - i]");
    }

    #[test]
    fn errors_have_locations() {
        let g = graph();
        let scope = ExprScope::new(&["n".into(), "i".into()], true);
        let e = parse_expr(&g, &scope, "tanh(nope[n, i])", Loc { line: 7, col: 1 }).unwrap_err();
        assert!(matches!(e, crate::Error::Parse { loc: Loc { line: 7, col: 6 }, .. }), "{e}");
    }
}
