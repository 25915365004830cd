//! Recursive-descent parser for the program text format.
//!
//! ```text
//! stmt   := simple (";" simple)*
//! simple := "skip" | ident ":=" expr | "{" stmt "}"
//!         | "if" expr "then" block ["else" block]
//!         | ["@i" nat] "while" expr "do" block
//!         | "_" ident "<" [sexpr ("," sexpr)*] ">" ":" simple
//! block  := "{" stmt "}"
//! sexpr  := nat | "i" nat | nat "*i" nat ["+" nat] | "i" nat "+" nat
//! ```
//!
//! A label binds to the single statement after it; braces group a sequence.
//! Sequences nest to the right. `//` starts a line comment.

use super::{BinOp, CostAtom, Expr, Ident, IndexId, IndexedLabel, Indexing, SimpleExpr, Stmt};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Accept `__cost` and `__idx<k>` as variables (instrumented programs).
    pub allow_reserved: bool,
}

pub fn parse_program(src: &str) -> Result<Stmt> {
    parse_program_with(src, ParseOptions::default())
}

pub fn parse_program_with(src: &str, opts: ParseOptions) -> Result<Stmt> {
    let mut p = Parser::new(src, opts)?;
    let s = p.stmt()?;
    p.expect_eof()?;
    Ok(s)
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser::new(
        src,
        ParseOptions {
            allow_reserved: true,
        },
    )?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses an indexed label on its own, as in `_g<2*i0+1, 0>`.
pub fn parse_label(src: &str) -> Result<IndexedLabel> {
    let mut p = Parser::new(src, ParseOptions::default())?;
    let name = match p.peek() {
        Tok::Ident(name) => name.clone(),
        _ => return p.error(format!("expected a label, found {}", p.describe())),
    };
    let label = p.label_head(name)?;
    p.expect_eof()?;
    Ok(label)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(u64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

// Longest symbols first so that `<=` wins over `<`.
const SYMBOLS: &[&str] = &[
    ":=", "<=", "==", "!=", "&&", "||", ";", "{", "}", "(", ")", "<", ">", "+", "-", "*", "%", "?",
    ":", ",", "@",
];

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| Error::Parse { line, col, msg };
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            col += i - start;
            out.push(Spanned {
                tok: Tok::Ident(src[start..i].to_string()),
                line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let n = src[start..i].parse::<u64>().map_err(|_| {
                err(
                    line,
                    start_col,
                    format!("number `{}` is too large", &src[start..i]),
                )
            })?;
            out.push(Spanned {
                tok: Tok::Nat(n),
                line,
                col: start_col,
            });
            continue;
        }
        match SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Spanned {
                    tok: Tok::Sym(s),
                    line,
                    col: start_col,
                });
            }
            None => {
                let ch = src[i..].chars().next().unwrap();
                return Err(err(line, col, format!("unexpected character `{ch}`")));
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    opts: ParseOptions,
}

impl Parser {
    fn new(src: &str, opts: ParseOptions) -> Result<Parser> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            opts,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let s = &self.toks[self.pos];
        Err(Error::Parse {
            line: s.line,
            col: s.col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Nat(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(t) if *t == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.error(format!("unexpected {}", self.describe()))
        }
    }

    fn ident(&self, name: String) -> Result<Ident> {
        let r = if self.opts.allow_reserved {
            Ident::any(name)
        } else {
            Ident::new(name)
        };
        match r {
            Ok(id) => Ok(id),
            Err(e) => self.error(e.to_string()),
        }
    }

    fn stmt(&mut self) -> Result<Stmt> {
        let first = self.simple()?;
        if self.eat_sym(";") {
            if matches!(self.peek(), Tok::Sym("}") | Tok::Eof) {
                return Ok(first);
            }
            let rest = self.stmt()?;
            return Ok(Stmt::Seq(Box::new(first), Box::new(rest)));
        }
        Ok(first)
    }

    fn block(&mut self) -> Result<Stmt> {
        self.expect_sym("{")?;
        let s = self.stmt()?;
        self.expect_sym("}")?;
        Ok(s)
    }

    fn simple(&mut self) -> Result<Stmt> {
        if self.is_keyword("skip") {
            self.bump();
            return Ok(Stmt::Skip);
        }
        if matches!(self.peek(), Tok::Sym("{")) {
            return self.block();
        }
        if self.is_keyword("if") {
            self.bump();
            let c = self.expr()?;
            self.expect_keyword("then")?;
            let then = self.block()?;
            let otherwise = if self.is_keyword("else") {
                self.bump();
                self.block()?
            } else {
                Stmt::Skip
            };
            return Ok(Stmt::if_(c, then, otherwise));
        }
        if self.eat_sym("@") {
            let index = match self.bump() {
                Tok::Ident(name) => match index_name(&name) {
                    Some(k) => k,
                    None => {
                        return self.error(format!("expected a loop index `i<k>`, found `{name}`"))
                    }
                },
                _ => return self.error("expected a loop index after `@`"),
            };
            if !self.is_keyword("while") {
                return self.error(format!("expected `while`, found {}", self.describe()));
            }
            return self.while_loop(Some(index));
        }
        if self.is_keyword("while") {
            return self.while_loop(None);
        }
        match self.peek().clone() {
            Tok::Ident(name) if name.starts_with('_') && *self.peek_at(1) == Tok::Sym("<") => {
                self.labelled(name)
            }
            Tok::Ident(name) => {
                let x = self.ident(name)?;
                self.bump();
                self.expect_sym(":=")?;
                let e = self.expr()?;
                Ok(Stmt::Assign(x, e))
            }
            _ => self.error(format!("expected a statement, found {}", self.describe())),
        }
    }

    fn while_loop(&mut self, index: Option<IndexId>) -> Result<Stmt> {
        self.expect_keyword("while")?;
        let guard = self.expr()?;
        self.expect_keyword("do")?;
        let body = self.block()?;
        Ok(Stmt::while_(guard, body, index))
    }

    fn labelled(&mut self, name: String) -> Result<Stmt> {
        let label = self.label_head(name)?;
        self.expect_sym(":")?;
        let body = self.simple()?;
        Ok(Stmt::labelled(label, body))
    }

    /// `atom<e0, e1, ...>` with the atom name already peeked.
    fn label_head(&mut self, name: String) -> Result<IndexedLabel> {
        let atom = match CostAtom::new(name) {
            Ok(a) => a,
            Err(e) => return self.error(e.to_string()),
        };
        self.bump();
        self.expect_sym("<")?;
        let mut exprs = Vec::new();
        if !self.eat_sym(">") {
            loop {
                let k = IndexId(exprs.len() as u32);
                exprs.push(self.sexpr(k)?);
                if self.eat_sym(">") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        let indexing = Indexing::new(exprs).expect("entries are built over their own index");
        Ok(IndexedLabel::new(atom, indexing))
    }

    /// A simple expression in position `k` of an indexing.
    fn sexpr(&mut self, k: IndexId) -> Result<SimpleExpr> {
        let coeff = match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                if !self.eat_sym("*") {
                    return Ok(SimpleExpr::constant(k, n));
                }
                self.expect_index(k)?;
                n
            }
            Tok::Ident(_) => {
                self.expect_index(k)?;
                1
            }
            _ => {
                return self.error(format!(
                    "expected a simple expression, found {}",
                    self.describe()
                ))
            }
        };
        let offset = if self.eat_sym("+") {
            match self.bump() {
                Tok::Nat(b) => b,
                _ => return self.error("expected a natural offset after `+`"),
            }
        } else {
            0
        };
        Ok(SimpleExpr::new(coeff, offset, k))
    }

    fn expect_index(&mut self, k: IndexId) -> Result<()> {
        match self.peek().clone() {
            Tok::Ident(name) => match index_name(&name) {
                Some(found) if found == k => {
                    self.bump();
                    Ok(())
                }
                Some(found) => self.error(format!(
                    "entry for {k} must be an expression over {k}, found {found}"
                )),
                None => self.error(format!("expected index {k}, found `{name}`")),
            },
            _ => self.error(format!("expected index {k}, found {}", self.describe())),
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Expr> {
        let c = self.binary(2)?;
        if self.eat_sym("?") {
            let t = self.expr()?;
            self.expect_sym(":")?;
            let e = self.expr()?;
            return Ok(Expr::cond(c, t, e));
        }
        Ok(c)
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Sym(s) => Some(match *s {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "%" => BinOp::Mod,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "&&" => BinOp::And,
                "||" => BinOp::Or,
                _ => return None,
            }),
            _ => None,
        }
    }

    /// Precedence climbing over left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.atom()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                match i64::try_from(n) {
                    Ok(v) => Ok(Expr::Int(v)),
                    Err(_) => self.error(format!("literal {n} does not fit in 64 bits")),
                }
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Nat(n) if n <= i64::MAX as u64 => Ok(Expr::Int(-(n as i64))),
                    Tok::Nat(n) if n == i64::MAX as u64 + 1 => Ok(Expr::Int(i64::MIN)),
                    _ => self.error("expected a literal after unary `-`"),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let x = self.ident(name)?;
                self.bump();
                Ok(Expr::Var(x))
            }
            _ => self.error(format!("expected an expression, found {}", self.describe())),
        }
    }
}

fn index_name(name: &str) -> Option<IndexId> {
    let digits = name.strip_prefix('i')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(IndexId)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(name: &str) -> Ident {
        Ident::new(name).unwrap()
    }

    #[test]
    fn parses_labelled_loop() {
        let s = parse_program("@i0 while i < n do { _g<2*i0+1>: p := j*p; j := j + 1 }").unwrap();
        let Stmt::While { index, body, .. } = &s else {
            panic!("not a loop: {s:?}")
        };
        assert_eq!(*index, Some(IndexId(0)));
        let Stmt::Seq(first, _) = body.as_ref() else {
            panic!()
        };
        let Stmt::Labelled(l, _) = first.as_ref() else {
            panic!()
        };
        assert_eq!(l.to_string(), "_g<2*i0+1>");
    }

    #[test]
    fn sexpr_spellings() {
        let s = parse_program("_a<0*i0+3, 1*i1, i2+4, 5>: skip").unwrap();
        let Stmt::Labelled(l, _) = s else { panic!() };
        assert_eq!(l.to_string(), "_a<3, i1, i2+4, 5>");
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("a - b - c").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinOp::Sub,
                Expr::binary(BinOp::Sub, Expr::var(&x("a")), Expr::var(&x("b"))),
                Expr::var(&x("c"))
            )
        );
        let e = parse_expr("a + b * c < 3 && d || e").unwrap();
        let Expr::Binary(BinOp::Or, l, _) = e else {
            panic!()
        };
        let Expr::Binary(BinOp::And, l, _) = *l else {
            panic!()
        };
        let Expr::Binary(BinOp::Lt, l, _) = *l else {
            panic!()
        };
        assert!(matches!(*l, Expr::Binary(BinOp::Add, _, _)));
        assert_eq!(
            parse_expr("-9223372036854775808").unwrap(),
            Expr::Int(i64::MIN)
        );
        assert!(parse_expr("9223372036854775808").is_err());
    }

    #[test]
    fn label_binds_to_one_statement() {
        let s = parse_program("_a<>: x := 1; y := 2").unwrap();
        assert!(matches!(s, Stmt::Seq(ref l, _) if matches!(**l, Stmt::Labelled(..))));
        let s = parse_program("_a<>: { x := 1; y := 2 }").unwrap();
        assert!(matches!(s, Stmt::Labelled(..)));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_program("x := 1;\n  y := ").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 2,
                    col: 8,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = parse_program("_a<i1>: skip").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 1,
                    col: 4,
                    ..
                }
            ),
            "{err:?}"
        );
        assert!(parse_program("__cost := 1").is_err());
        assert!(parse_program_with(
            "__cost := 1",
            ParseOptions {
                allow_reserved: true
            }
        )
        .is_ok());
        assert!(parse_program("x := 1 $").is_err());
        assert!(parse_program("@j0 while x do { skip }").is_err());
    }

    #[test]
    fn trailing_semicolon_and_comments() {
        let s = parse_program("// header\nx := 1; // one\ny := 2;\n").unwrap();
        assert_eq!(s, parse_program("x := 1; y := 2").unwrap());
    }
}
