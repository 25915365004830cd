//! Pretty printing in the format read by the parser.
//!
//! Statements print one per line with two-space indentation. Multiplication
//! is written tight (`j*p`); other binary operators are spaced. Ternary
//! conditions and nested ternaries are always parenthesized.

use std::fmt::{self, Write};

use super::{BinOp, Expr, Stmt};

const ATOM_PREC: u8 = 7;
const COND_PREC: u8 = 1;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Int(_) | Expr::Var(_) => ATOM_PREC,
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Cond(..) => COND_PREC,
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Var(x) => write!(f, "{x}"),
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                write_operand(f, l, precedence(l) < p)?;
                if *op == BinOp::Mul {
                    f.write_str("*")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                write_operand(f, r, precedence(r) <= p)
            }
            Expr::Cond(c, t, e) => {
                write_operand(f, c, precedence(c) != ATOM_PREC)?;
                f.write_str(" ? ")?;
                write_operand(f, t, matches!(**t, Expr::Cond(..)))?;
                f.write_str(" : ")?;
                write_operand(f, e, matches!(**e, Expr::Cond(..)))
            }
        }
    }
}

struct Printer {
    out: String,
}

impl Printer {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    /// A statement in sequence position: items separated by `;` and newlines.
    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match s {
            Stmt::Seq(a, b) => {
                if matches!(**a, Stmt::Seq(..)) {
                    // left-nested sequence: group it so it reads back the same
                    self.block(a, depth);
                } else {
                    self.simple(a, depth);
                }
                self.out.push_str(";\n");
                self.indent(depth);
                self.stmt(b, depth);
            }
            _ => self.simple(s, depth),
        }
    }

    fn block(&mut self, s: &Stmt, depth: usize) {
        self.out.push_str("{\n");
        self.indent(depth + 1);
        self.stmt(s, depth + 1);
        self.out.push('\n');
        self.indent(depth);
        self.out.push('}');
    }

    fn simple(&mut self, s: &Stmt, depth: usize) {
        match s {
            Stmt::Skip => self.out.push_str("skip"),
            Stmt::Assign(x, e) => {
                let _ = write!(self.out, "{x} := {e}");
            }
            Stmt::Seq(..) => self.block(s, depth),
            Stmt::If(c, t, e) => {
                let _ = write!(self.out, "if {c} then ");
                self.block(t, depth);
                if **e != Stmt::Skip {
                    self.out.push_str(" else ");
                    self.block(e, depth);
                }
            }
            Stmt::While { guard, body, index } => {
                if let Some(k) = index {
                    let _ = write!(self.out, "@{k} ");
                }
                let _ = write!(self.out, "while {guard} do ");
                self.block(body, depth);
            }
            Stmt::Labelled(l, body) => {
                let _ = write!(self.out, "{l}: ");
                self.simple(body, depth);
            }
        }
    }
}

/// Renders `s` in the concrete program syntax.
pub fn pretty_print(s: &Stmt) -> String {
    let mut p = Printer { out: String::new() };
    p.stmt(s, 0);
    p.out
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{
        parse_expr, parse_program, CostAtom, IndexId, IndexedLabel, Indexing, SimpleExpr,
    };
    use super::*;

    #[test]
    fn simple_forms() {
        assert_eq!(pretty_print(&Stmt::Skip), "skip");
        let l = IndexedLabel::new(
            CostAtom::new("_g").unwrap(),
            Indexing::new(vec![
                SimpleExpr::new(2, 1, IndexId(0)),
                SimpleExpr::constant(IndexId(1), 0),
            ])
            .unwrap(),
        );
        let body = parse_program("p := j*p").unwrap();
        assert_eq!(
            pretty_print(&Stmt::labelled(l, body)),
            "_g<2*i0+1, 0>: p := j*p"
        );
        let w = parse_program("@i0 while i < n do { i := i + 1 }").unwrap();
        assert_eq!(pretty_print(&w), "@i0 while i < n do {\n  i := i + 1\n}");
    }

    #[test]
    fn expression_parens() {
        for src in [
            "a - (b - c)",
            "(a + b)*c",
            "a*b + c",
            "(x == 0) ? 3 : ((x % 2 == 1) ? 4 : 5)",
            "a + ((c) ? 1 : 2)",
            "(a < b) < c",
            "x % 2 == 1 && 5 <= x",
            "a - -3",
        ] {
            let e = parse_expr(src).unwrap();
            assert_eq!(
                parse_expr(&e.to_string()).unwrap(),
                e,
                "{src} printed as {e}"
            );
        }
        assert_eq!(
            parse_expr("(x == 0) ? 3 : ((x % 2 == 1) ? 4 : 5)")
                .unwrap()
                .to_string(),
            "(x == 0) ? 3 : ((x % 2 == 1) ? 4 : 5)"
        );
        assert_eq!(parse_expr("a + (b*c)").unwrap().to_string(), "a + b*c");
    }

    #[test]
    fn left_nested_sequences_round_trip() {
        let a = parse_program("a := 1").unwrap();
        let b = parse_program("b := 2").unwrap();
        let c = parse_program("c := 3").unwrap();
        let left = Stmt::Seq(Box::new(Stmt::Seq(Box::new(a), Box::new(b))), Box::new(c));
        let text = pretty_print(&left);
        assert_eq!(parse_program(&text).unwrap(), left);
        let lab = parse_program("_a<>: { x := 1; y := 2 }; z := 3").unwrap();
        assert_eq!(parse_program(&pretty_print(&lab)).unwrap(), lab);
    }
}
