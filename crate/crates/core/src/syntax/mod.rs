//! Abstract syntax shared by plain, plainly labelled and index-labelled
//! programs.
//!
//! One [`Stmt`] type covers all three levels: a plain program has no
//! [`Stmt::Labelled`] nodes and no loop indexes, a plainly labelled program
//! uses labels with empty indexings, and an index-labelled program carries
//! full indexings and indexed loops.

mod index;
mod parse;
mod print;

use std::fmt;

pub(crate) use index::gcd;
pub use index::{ConstantIndexing, CostAtom, IndexId, IndexedLabel, Indexing, SimpleExpr};
pub use parse::{parse_expr, parse_label, parse_program, parse_program_with, ParseOptions};
pub use print::pretty_print;

use crate::error::{Error, Result};

const KEYWORDS: &[&str] = &["skip", "if", "then", "else", "while", "do"];

/// Name of the cost accumulator added by instrumentation.
pub const COST_VAR: &str = "__cost";

/// A program variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ident(String);

impl Ident {
    /// A user variable: well formed, not a keyword and not reserved.
    pub fn new(name: impl Into<String>) -> Result<Ident> {
        let name = name.into();
        if is_reserved(&name) {
            return Err(Error::ReservedIdent(name));
        }
        Ident::any(name)
    }

    /// Like [`Ident::new`] but admits the reserved instrumentation names.
    pub fn any(name: impl Into<String>) -> Result<Ident> {
        let name = name.into();
        let mut chars = name.chars();
        let well_formed = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !well_formed || KEYWORDS.contains(&name.as_str()) {
            return Err(Error::InvalidIdent(name));
        }
        Ok(Ident(name))
    }

    pub fn cost_var() -> Ident {
        Ident(COST_VAR.to_string())
    }

    /// `__idx<k>`, the variable holding loop index `i_k` after instrumentation.
    pub fn index_var(k: IndexId) -> Ident {
        Ident(format!("__idx{}", k.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_reserved(&self) -> bool {
        is_reserved(&self.0)
    }
}

fn is_reserved(name: &str) -> bool {
    name == COST_VAR
        || name
            .strip_prefix("__idx")
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Mod,
    Lt,
    Le,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Mod => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Var(Ident),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `cond ? then : else`
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &Ident) -> Expr {
        Expr::Var(name.clone())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn cond(c: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::Cond(Box::new(c), Box::new(then), Box::new(otherwise))
    }

    /// Evaluates under `lookup`. Comparisons and connectives yield 0 or 1,
    /// `&&`/`||` short-circuit, and `%` is the Euclidean remainder.
    pub fn eval(&self, lookup: &impl Fn(&Ident) -> i64) -> Result<i64> {
        match self {
            Expr::Int(n) => Ok(*n),
            Expr::Var(x) => Ok(lookup(x)),
            Expr::Cond(c, t, e) => {
                if c.eval(lookup)? != 0 {
                    t.eval(lookup)
                } else {
                    e.eval(lookup)
                }
            }
            Expr::Binary(BinOp::And, l, r) => {
                Ok(i64::from(l.eval(lookup)? != 0 && r.eval(lookup)? != 0))
            }
            Expr::Binary(BinOp::Or, l, r) => {
                Ok(i64::from(l.eval(lookup)? != 0 || r.eval(lookup)? != 0))
            }
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval(lookup)?, r.eval(lookup)?);
                match op {
                    BinOp::Add => l.checked_add(r).ok_or(Error::Overflow),
                    BinOp::Sub => l.checked_sub(r).ok_or(Error::Overflow),
                    BinOp::Mul => l.checked_mul(r).ok_or(Error::Overflow),
                    BinOp::Mod => {
                        if r == 0 {
                            Err(Error::DivisionByZero)
                        } else {
                            l.checked_rem_euclid(r).ok_or(Error::Overflow)
                        }
                    }
                    BinOp::Lt => Ok(i64::from(l < r)),
                    BinOp::Le => Ok(i64::from(l <= r)),
                    BinOp::Eq => Ok(i64::from(l == r)),
                    BinOp::Ne => Ok(i64::from(l != r)),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Skip,
    Seq(Box<Stmt>, Box<Stmt>),
    Assign(Ident, Expr),
    If(Expr, Box<Stmt>, Box<Stmt>),
    While {
        guard: Expr,
        body: Box<Stmt>,
        index: Option<IndexId>,
    },
    Labelled(IndexedLabel, Box<Stmt>),
}

impl Stmt {
    /// Sequential composition, kept right-nested: `(a; b); c` is built as
    /// `a; (b; c)`. Parsed programs have this shape, and the rewriting
    /// passes preserve it so that printed programs read back identically.
    pub fn seq(first: Stmt, second: Stmt) -> Stmt {
        match first {
            Stmt::Seq(a, b) => Stmt::Seq(a, Box::new(Stmt::seq(*b, second))),
            first => Stmt::Seq(Box::new(first), Box::new(second)),
        }
    }

    /// Right-nested sequence of `stmts`; `skip` when empty.
    pub fn block(stmts: impl IntoIterator<Item = Stmt>) -> Stmt {
        let stmts: Vec<Stmt> = stmts.into_iter().collect();
        stmts
            .into_iter()
            .rev()
            .reduce(|acc, s| Stmt::seq(s, acc))
            .unwrap_or(Stmt::Skip)
    }

    pub fn assign(x: &Ident, e: Expr) -> Stmt {
        Stmt::Assign(x.clone(), e)
    }

    pub fn if_(c: Expr, then: Stmt, otherwise: Stmt) -> Stmt {
        Stmt::If(c, Box::new(then), Box::new(otherwise))
    }

    pub fn while_(guard: Expr, body: Stmt, index: Option<IndexId>) -> Stmt {
        Stmt::While {
            guard,
            body: Box::new(body),
            index,
        }
    }

    pub fn labelled(label: IndexedLabel, body: Stmt) -> Stmt {
        Stmt::Labelled(label, Box::new(body))
    }

    /// Labels in preorder.
    pub fn labels(&self) -> Vec<&IndexedLabel> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels<'a>(&'a self, out: &mut Vec<&'a IndexedLabel>) {
        match self {
            Stmt::Skip | Stmt::Assign(..) => {}
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                a.collect_labels(out);
                b.collect_labels(out);
            }
            Stmt::While { body, .. } => body.collect_labels(out),
            Stmt::Labelled(l, body) => {
                out.push(l);
                body.collect_labels(out);
            }
        }
    }

    pub fn has_labels_or_indexes(&self) -> bool {
        match self {
            Stmt::Skip | Stmt::Assign(..) => false,
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                a.has_labels_or_indexes() || b.has_labels_or_indexes()
            }
            Stmt::While { body, index, .. } => index.is_some() || body.has_labels_or_indexes(),
            Stmt::Labelled(..) => true,
        }
    }

    /// Every program variable mentioned, in first-occurrence order.
    pub fn variables(&self) -> Vec<Ident> {
        fn expr_vars(e: &Expr, out: &mut Vec<Ident>) {
            match e {
                Expr::Int(_) => {}
                Expr::Var(x) => {
                    if !out.contains(x) {
                        out.push(x.clone())
                    }
                }
                Expr::Binary(_, l, r) => {
                    expr_vars(l, out);
                    expr_vars(r, out);
                }
                Expr::Cond(c, t, e) => {
                    expr_vars(c, out);
                    expr_vars(t, out);
                    expr_vars(e, out);
                }
            }
        }
        fn go(s: &Stmt, out: &mut Vec<Ident>) {
            match s {
                Stmt::Skip => {}
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Stmt::Assign(x, e) => {
                    if !out.contains(x) {
                        out.push(x.clone())
                    }
                    expr_vars(e, out);
                }
                Stmt::If(c, a, b) => {
                    expr_vars(c, out);
                    go(a, out);
                    go(b, out);
                }
                Stmt::While { guard, body, .. } => {
                    expr_vars(guard, out);
                    go(body, out);
                }
                Stmt::Labelled(_, body) => go(body, out),
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

/// Reindexes every label in `stmt` at `k` by post-composing with `f`.
///
/// A label whose domain does not include `k` is an error rather than being
/// skipped: labels produced by indexed labelling always carry every
/// enclosing index.
pub fn reindex_stmt(stmt: &Stmt, k: IndexId, f: &SimpleExpr) -> Result<Stmt> {
    Ok(match stmt {
        Stmt::Skip | Stmt::Assign(..) => stmt.clone(),
        Stmt::Seq(a, b) => Stmt::Seq(
            Box::new(reindex_stmt(a, k, f)?),
            Box::new(reindex_stmt(b, k, f)?),
        ),
        Stmt::If(c, a, b) => Stmt::if_(c.clone(), reindex_stmt(a, k, f)?, reindex_stmt(b, k, f)?),
        Stmt::While { guard, body, index } => {
            Stmt::while_(guard.clone(), reindex_stmt(body, k, f)?, *index)
        }
        Stmt::Labelled(l, body) => Stmt::labelled(l.reindex(k, f)?, reindex_stmt(body, k, f)?),
    })
}
