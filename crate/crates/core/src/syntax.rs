//! Tokenizer shared by the model-expression, structure and ILIR parsers.

use crate::error::{Error, Loc, Result};

/// Integer comparison used in index conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn from_sym(s: &str) -> Option<CmpOp> {
        Some(match s {
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            ">=" => CmpOp::Ge,
            ">" => CmpOp::Gt,
            _ => return None,
        })
    }

    /// `!(a op b)` as `a op' b`.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

const SYMS: &[&str] = &[
    "<=", ">=", "==", "!=", "->", "[", "]", "(", ")", "{", "}", ",", ".", "+", "-", "*", "/", "%", "<", ">", ":",
    "=", "#",
];

pub fn tokenize(src: &str, base: Loc) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut line, mut col) = (base.line, base.col);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let loc = Loc { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let w: String = chars[s..i].iter().collect();
            col += i - s;
            out.push(Token { tok: Tok::Ident(w), loc });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            let mut float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let w: String = chars[s..i].iter().collect();
            col += i - s;
            let tok = if float {
                Tok::Float(w.parse().map_err(|_| perr(loc, format!("bad number `{w}`")))?)
            } else {
                Tok::Int(w.parse().map_err(|_| perr(loc, format!("bad integer `{w}`")))?)
            };
            out.push(Token { tok, loc });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token { tok: Tok::Sym(s), loc });
            }
            None => return Err(perr(loc, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

pub fn perr(loc: Loc, msg: impl Into<String>) -> Error {
    Error::Parse { loc, msg: msg.into() }
}

/// Cursor over a token list with an end location for error messages.
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    end: Loc,
}

impl Cursor {
    pub fn new(src: &str, base: Loc) -> Result<Self> {
        let toks = tokenize(src, base)?;
        let end = Loc {
            line: base.line + src.matches('\n').count(),
            col: src.rsplit('\n').next().map_or(0, |l| l.chars().count()) + if src.contains('\n') { 1 } else { base.col },
        };
        Ok(Cursor { toks, pos: 0, end })
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    pub fn loc(&self) -> Loc {
        self.toks.get(self.pos).map_or(self.end, |t| t.loc)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    pub fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_ident(&mut self, s: &str) -> bool {
        if self.is_ident(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`, found {}", self.describe())))
        }
    }

    pub fn expect_ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_ident(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`, found {}", self.describe())))
        }
    }

    pub fn expect_int(&mut self) -> Result<i64> {
        let neg = self.eat_sym("-");
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error(format!("expected integer, found {}", self.describe()))),
        }
    }

    pub fn eat_cmp(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Some(Tok::Sym(s)) => CmpOp::from_sym(s)?,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected trailing {}", self.describe())))
        }
    }

    pub fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Int(v)) => format!("`{v}`"),
            Some(Tok::Float(v)) => format!("`{v}`"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
        }
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        perr(self.loc(), msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_locations() {
        let t = tokenize("rnn[left[node],i] <= 2.5e-1\n  x", Loc { line: 1, col: 1 }).unwrap();
        assert_eq!(t[0].tok, Tok::Ident("rnn".into()));
        assert!(t.iter().any(|x| x.tok == Tok::Sym("<=")));
        assert!(t.iter().any(|x| x.tok == Tok::Float(0.25)));
        let last = t.last().unwrap();
        assert_eq!(last.loc, Loc { line: 2, col: 3 });
    }

    #[test]
    fn bad_char() {
        let e = tokenize("a ? b", Loc { line: 3, col: 1 }).unwrap_err();
        assert!(matches!(e, Error::Parse { loc: Loc { line: 3, col: 3 }, .. }));
    }
}
