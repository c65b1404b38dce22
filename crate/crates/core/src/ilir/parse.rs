//! Parser for the text form written by [`super::print_program`].

use std::collections::BTreeMap;

use super::layout::apply_decl;
use super::{
    ArrayDecl, ArrayKind, Cond, IlirProgram, IndexExpr, LayoutOp, Loop, Operand, Stmt, Storage, TensorDecl,
    TensorRole, ValueExpr,
};
use crate::error::{Loc, Result};
use crate::syntax::{perr, Cursor, Tok};
use crate::tensor::ScalarFn;

enum Item {
    For(Loop),
    If(Cond),
    Else,
    Pass,
    Let(String, IndexExpr),
    Store(String, Vec<IndexExpr>, ValueExpr),
    Barrier,
}

pub(crate) fn index(c: &mut Cursor) -> Result<IndexExpr> {
    let mut e = iterm(c)?;
    loop {
        if c.eat_sym("+") {
            e = IndexExpr::add(e, iterm(c)?);
        } else if c.eat_sym("-") {
            e = IndexExpr::sub(e, iterm(c)?);
        } else {
            return Ok(e);
        }
    }
}

fn iterm(c: &mut Cursor) -> Result<IndexExpr> {
    let mut e = iatom(c)?;
    loop {
        if c.eat_sym("*") {
            e = IndexExpr::mul(e, iatom(c)?);
        } else if c.eat_sym("/") {
            e = IndexExpr::div(e, iatom(c)?);
        } else if c.eat_sym("%") {
            e = IndexExpr::rem(e, iatom(c)?);
        } else {
            return Ok(e);
        }
    }
}

fn iatom(c: &mut Cursor) -> Result<IndexExpr> {
    let loc = c.loc();
    match c.next() {
        Some(Tok::Int(v)) => Ok(IndexExpr::Const(v)),
        Some(Tok::Sym("-")) => match c.next() {
            Some(Tok::Int(v)) => Ok(IndexExpr::Const(-v)),
            _ => Err(perr(loc, "expected integer after `-`")),
        },
        Some(Tok::Sym("(")) => {
            let e = index(c)?;
            c.expect_sym(")")?;
            Ok(e)
        }
        Some(Tok::Ident(n)) => {
            if c.eat_sym("[") {
                Ok(IndexExpr::Load(n, index_args(c)?))
            } else {
                Ok(IndexExpr::Var(n))
            }
        }
        _ => Err(perr(loc, "expected index expression")),
    }
}

/// Comma-separated indices after `[`, consuming the closing `]`.
fn index_args(c: &mut Cursor) -> Result<Vec<IndexExpr>> {
    let mut v = vec![index(c)?];
    while c.eat_sym(",") {
        v.push(index(c)?);
    }
    c.expect_sym("]")?;
    Ok(v)
}

fn cond(c: &mut Cursor) -> Result<Cond> {
    if c.is_ident("isleaf") && c.peek_at(1) == Some(&Tok::Sym("(")) {
        c.next();
        c.next();
        let e = index(c)?;
        c.expect_sym(")")?;
        return Ok(Cond::IsLeaf(e));
    }
    let a = index(c)?;
    let op = c.eat_cmp().ok_or_else(|| c.error(format!("expected comparison, found {}", c.describe())))?;
    let b = index(c)?;
    Ok(Cond::Cmp(op, a, b))
}

fn value(c: &mut Cursor) -> Result<ValueExpr> {
    let mut e = vterm(c)?;
    loop {
        if c.eat_sym("+") {
            e = ScalarFn::add(e, vterm(c)?);
        } else if c.eat_sym("-") {
            e = ScalarFn::sub(e, vterm(c)?);
        } else {
            return Ok(e);
        }
    }
}

fn vterm(c: &mut Cursor) -> Result<ValueExpr> {
    let mut e = vunary(c)?;
    while c.eat_sym("*") {
        e = ScalarFn::mul(e, vunary(c)?);
    }
    Ok(e)
}

fn vunary(c: &mut Cursor) -> Result<ValueExpr> {
    if c.eat_sym("-") {
        return Ok(match vunary(c)? {
            ScalarFn::Const(x) => ScalarFn::Const(-x),
            e => ScalarFn::sub(ScalarFn::Const(0.0), e),
        });
    }
    vatom(c)
}

fn vatom(c: &mut Cursor) -> Result<ValueExpr> {
    let loc = c.loc();
    match c.next() {
        Some(Tok::Int(v)) => Ok(ScalarFn::Const(v as f64)),
        Some(Tok::Float(v)) => Ok(ScalarFn::Const(v)),
        Some(Tok::Sym("(")) => {
            let e = value(c)?;
            c.expect_sym(")")?;
            Ok(e)
        }
        Some(Tok::Sym("{")) => {
            let k = cond(c)?;
            c.expect_sym("}")?;
            Ok(ScalarFn::Load(Operand::Cond(k)))
        }
        Some(Tok::Ident(n)) if (n == "tanh" || n == "sigmoid") && c.is_sym("(") => {
            c.next();
            let e = value(c)?;
            c.expect_sym(")")?;
            Ok(if n == "tanh" { ScalarFn::tanh(e) } else { ScalarFn::sigmoid(e) })
        }
        Some(Tok::Ident(n)) if n == "select" && c.is_sym("(") => {
            c.next();
            let k = value(c)?;
            c.expect_sym(",")?;
            let a = value(c)?;
            c.expect_sym(",")?;
            let b = value(c)?;
            c.expect_sym(")")?;
            Ok(ScalarFn::select(k, a, b))
        }
        Some(Tok::Ident(n)) if n == "sum" && c.is_sym("(") => {
            c.next();
            let v = c.expect_ident()?;
            c.expect_sym("<")?;
            let ext = c.expect_int()?;
            if ext < 0 {
                return Err(perr(loc, "negative reduction extent"));
            }
            c.expect_sym(",")?;
            let b = value(c)?;
            c.expect_sym(")")?;
            Ok(ScalarFn::sum(v, ext as usize, b))
        }
        Some(Tok::Ident(n)) => {
            c.expect_sym("[")?;
            Ok(ScalarFn::Load(Operand::Read {
                tensor: n,
                idx: index_args(c)?,
            }))
        }
        _ => Err(perr(loc, "expected value expression")),
    }
}

fn dims_list(c: &mut Cursor) -> Result<(Vec<String>, Vec<IndexExpr>)> {
    c.expect_sym("[")?;
    let mut d = Vec::new();
    let mut e = Vec::new();
    loop {
        d.push(c.expect_ident()?);
        c.expect_sym(":")?;
        e.push(index(c)?);
        if !c.eat_sym(",") {
            break;
        }
    }
    c.expect_sym("]")?;
    Ok((d, e))
}

fn layout_op(c: &mut Cursor) -> Result<LayoutOp> {
    let kind = c.expect_ident()?;
    c.expect_sym("(")?;
    let mut args = vec![c.expect_int()? as usize];
    while c.eat_sym(",") {
        args.push(c.expect_int()? as usize);
    }
    c.expect_sym(")")?;
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(c.error(format!("`{kind}` takes {n} arguments")))
        }
    };
    match kind.as_str() {
        "split" => {
            arity(2)?;
            Ok(LayoutOp::Split {
                dim: args[0],
                factor: args[1],
            })
        }
        "fuse" => {
            arity(1)?;
            Ok(LayoutOp::Fuse { dim: args[0] })
        }
        "reorder" => Ok(LayoutOp::Reorder { perm: args }),
        _ => Err(c.error(format!("unknown layout op `{kind}`"))),
    }
}

struct Header {
    p: IlirProgram,
}

impl Header {
    fn line(&mut self, text: &str, loc: Loc) -> Result<()> {
        let mut c = Cursor::new(text, loc)?;
        let kw = c.expect_ident()?;
        match kw.as_str() {
            "program" => self.p.name = c.expect_ident()?,
            "output" => self.p.output = c.expect_ident()?,
            "param" => loop {
                self.p.params.push(c.expect_ident()?);
                if !c.eat_sym(",") {
                    break;
                }
            },
            "array" => {
                let name = c.expect_ident()?;
                let (dims, extents) = dims_list(&mut c)?;
                let k = c.expect_ident()?;
                let kind = match k.as_str() {
                    "schedule" => ArrayKind::Schedule,
                    "child" => ArrayKind::Child,
                    "payload" => ArrayKind::Payload { dim: c.expect_ident()? },
                    "count" => ArrayKind::Count { max: index(&mut c)? },
                    _ => return Err(c.error(format!("unknown array kind `{k}`"))),
                };
                self.p.arrays.push(ArrayDecl {
                    name,
                    kind,
                    dims,
                    extents,
                });
            }
            "input" | "tensor" => {
                let name = c.expect_ident()?;
                let (dims, extents) = dims_list(&mut c)?;
                let role = if kw == "input" { TensorRole::Input } else { TensorRole::Temp };
                let mut t = TensorDecl::new(&name, role, dims, extents);
                while !c.at_end() {
                    let w = c.expect_ident()?;
                    match w.as_str() {
                        "global" => t.storage = Storage::Global,
                        "scratch" => t.storage = Storage::Scratch,
                        "output" => t.role = TensorRole::Output,
                        "init" => {
                            let neg = c.eat_sym("-");
                            let v = match c.next() {
                                Some(Tok::Float(v)) => v,
                                Some(Tok::Int(v)) => v as f64,
                                _ => return Err(c.error("expected number after `init`")),
                            };
                            t.init = Some(if neg { -v } else { v });
                        }
                        "required" => {
                            c.expect_sym("(")?;
                            let mut r = vec![index(&mut c)?];
                            while c.eat_sym(",") {
                                r.push(index(&mut c)?);
                            }
                            c.expect_sym(")")?;
                            t.required = Some(r);
                        }
                        _ => return Err(c.error(format!("unknown tensor attribute `{w}`"))),
                    }
                }
                self.p.tensors.push(t);
            }
            "layout" => {
                let name = c.expect_ident()?;
                let op = layout_op(&mut c)?;
                let t = self.p.tensor_mut(&name).ok_or_else(|| perr(loc, format!("unknown tensor `{name}`")))?;
                // `required` describes the final layout; keep it aside
                let req = t.required.take();
                apply_decl(t, &op)?;
                t.required = req;
            }
            "dimmap" => {
                let d = c.expect_ident()?;
                c.expect_sym("->")?;
                let mut v = vec![c.expect_ident()?];
                while c.eat_sym(",") {
                    v.push(c.expect_ident()?);
                }
                self.p.dim_map.insert(d, v);
            }
            _ => return Err(perr(loc, format!("unknown declaration `{kw}`"))),
        }
        c.expect_end()
    }
}

fn stmt_item(text: &str, comment: Option<(&str, Loc)>, loc: Loc) -> Result<Item> {
    let mut c = Cursor::new(text, loc)?;
    let item = if c.eat_ident("for") {
        let var = c.expect_ident()?;
        c.expect_sym("=")?;
        if c.expect_int()? != 0 {
            return Err(perr(loc, "loops start at 0"));
        }
        c.expect_sym(":")?;
        let bound = index(&mut c)?;
        c.expect_sym(":")?;
        let (ctext, cloc) = comment.ok_or_else(|| perr(loc, "loop is missing its `# dim` comment"))?;
        let mut k = Cursor::new(ctext, cloc)?;
        let dim = k.expect_ident()?;
        let parallel = k.eat_ident("parallel");
        let extent = if k.eat_ident("extent") { Some(index(&mut k)?) } else { None };
        k.expect_end()?;
        Item::For(Loop {
            label: String::new(),
            var,
            dim,
            bound,
            parallel,
            extent,
            body: Vec::new(),
        })
    } else if c.eat_ident("if") {
        let k = cond(&mut c)?;
        c.expect_sym(":")?;
        Item::If(k)
    } else if c.eat_ident("else") {
        c.expect_sym(":")?;
        Item::Else
    } else if c.eat_ident("pass") {
        Item::Pass
    } else if c.eat_ident("barrier") {
        Item::Barrier
    } else {
        let name = c.expect_ident()?;
        if c.eat_sym("[") {
            let idx = index_args(&mut c)?;
            c.expect_sym("=")?;
            Item::Store(name, idx, value(&mut c)?)
        } else {
            c.expect_sym("=")?;
            Item::Let(name, index(&mut c)?)
        }
    };
    c.expect_end()?;
    Ok(item)
}

fn block(items: &mut Vec<(usize, Loc, Option<Item>)>, i: &mut usize, depth: usize) -> Result<Vec<Stmt>> {
    let mut out = Vec::new();
    while *i < items.len() {
        let (d, loc, _) = items[*i];
        if d < depth {
            break;
        }
        if d > depth {
            return Err(perr(loc, "unexpected indentation"));
        }
        let item = items[*i].2.take().expect("each item is consumed once");
        *i += 1;
        match item {
            Item::For(mut l) => {
                l.body = block(items, i, depth + 1)?;
                out.push(Stmt::Loop(l));
            }
            Item::If(cond) => {
                let then = block(items, i, depth + 1)?;
                let mut els = Vec::new();
                if *i < items.len() && items[*i].0 == depth && matches!(items[*i].2, Some(Item::Else)) {
                    *i += 1;
                    els = block(items, i, depth + 1)?;
                }
                out.push(Stmt::If { cond, then, els });
            }
            Item::Else => return Err(perr(loc, "`else` without `if`")),
            Item::Pass => {}
            Item::Let(var, value) => out.push(Stmt::Let { var, value }),
            Item::Store(tensor, idx, value) => out.push(Stmt::Store { tensor, idx, value }),
            Item::Barrier => out.push(Stmt::Barrier),
        }
    }
    Ok(out)
}

pub fn parse_program(text: &str) -> Result<IlirProgram> {
    let mut h = Header {
        p: IlirProgram {
            name: String::new(),
            params: Vec::new(),
            arrays: Vec::new(),
            tensors: Vec::new(),
            dim_map: BTreeMap::new(),
            body: Vec::new(),
            output: String::new(),
        },
    };
    let mut items = Vec::new();
    let mut width: Option<usize> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix('#') {
            h.line(rest, Loc { line, col: 2 })?;
            continue;
        }
        // blank out a leading `L<k>:` label
        let mut chars: Vec<char> = raw.chars().collect();
        if chars.first() == Some(&'L') {
            let digits = chars[1..].iter().take_while(|c| c.is_ascii_digit()).count();
            if digits > 0 && chars.get(1 + digits) == Some(&':') {
                for ch in chars.iter_mut().take(digits + 2) {
                    *ch = ' ';
                }
            }
        }
        let s: String = chars.into_iter().collect();
        let col = s.len() - s.trim_start().len();
        let (code, comment) = match s.find('#') {
            Some(k) => (&s[..k], Some((&s[k + 1..], Loc { line, col: k + 2 }))),
            None => (&s[..], None),
        };
        let w = *width.get_or_insert(col);
        if col < w || (col - w) % 2 != 0 {
            return Err(perr(Loc { line, col: col + 1 }, "inconsistent indentation"));
        }
        let loc = Loc { line, col: col + 1 };
        let item = stmt_item(code.trim_start(), comment, loc)?;
        items.push(((col - w) / 2, loc, Some(item)));
    }
    let mut i = 0;
    let mut items = items;
    h.p.body = block(&mut items, &mut i, 0)?;
    if i < items.len() {
        return Err(perr(items[i].1, "unexpected indentation"));
    }
    if h.p.name.is_empty() {
        return Err(perr(Loc { line: 1, col: 1 }, "missing `# program` header"));
    }
    h.p.relabel();
    Ok(h.p)
}
