//! Plain and indexed labelling, and the erasures that undo them.
//!
//! Atoms are generated in preorder: `_L0` heads the program, and the n-th
//! branching statement met (counting from 1) gets the pair `_a<n>`/`_b<n>`.
//! For a conditional `_a` heads the then branch and `_b` the else branch; for
//! a loop `_a` heads the body and `_b` labels the `skip` placed after the
//! loop exit.

use crate::error::{Error, Result};
use crate::syntax::{CostAtom, IndexId, IndexedLabel, Indexing, Stmt};

struct Labeller {
    next: u32,
    indexed: bool,
}

impl Labeller {
    fn fresh_pair(&mut self) -> (CostAtom, CostAtom) {
        self.next += 1;
        let n = self.next;
        (atom(&format!("_a{n}")), atom(&format!("_b{n}")))
    }

    fn label(&self, atom: CostAtom, depth: u32) -> IndexedLabel {
        let indexing = if self.indexed {
            Indexing::identity(depth)
        } else {
            Indexing::empty()
        };
        IndexedLabel::new(atom, indexing)
    }

    fn stmt(&mut self, s: &Stmt, depth: u32) -> Stmt {
        match s {
            Stmt::Skip | Stmt::Assign(..) => s.clone(),
            Stmt::Seq(a, b) => {
                let a = self.stmt(a, depth);
                Stmt::seq(a, self.stmt(b, depth))
            }
            Stmt::If(c, t, e) => {
                let (alpha, beta) = self.fresh_pair();
                let t = Stmt::labelled(self.label(alpha, depth), self.stmt(t, depth));
                let e = Stmt::labelled(self.label(beta, depth), self.stmt(e, depth));
                Stmt::if_(c.clone(), t, e)
            }
            Stmt::While { guard, body, .. } => {
                let (alpha, beta) = self.fresh_pair();
                let (inner, index) = if self.indexed {
                    (depth + 1, Some(IndexId(depth)))
                } else {
                    (depth, None)
                };
                let body = Stmt::labelled(self.label(alpha, inner), self.stmt(body, inner));
                Stmt::seq(
                    Stmt::while_(guard.clone(), body, index),
                    Stmt::labelled(self.label(beta, depth), Stmt::Skip),
                )
            }
            Stmt::Labelled(..) => unreachable!("checked by the caller"),
        }
    }
}

fn atom(name: &str) -> CostAtom {
    CostAtom::new(name).expect("generated atom names are well formed")
}

fn run(p: &Stmt, indexed: bool) -> Result<Stmt> {
    if p.has_labels_or_indexes() {
        return Err(Error::AlreadyLabelled);
    }
    let mut l = Labeller { next: 0, indexed };
    let body = l.stmt(p, 0);
    Ok(Stmt::labelled(
        IndexedLabel::new(atom("_L0"), Indexing::empty()),
        body,
    ))
}

/// `α: L(P)` with every indexing empty.
pub fn label_plain(p: &Stmt) -> Result<Stmt> {
    run(p, false)
}

/// `α⟨⟩: L^ι(P, 0)`: loops get the index of their nesting depth and every
/// label carries the identity indexing of its depth.
pub fn label_indexed(p: &Stmt) -> Result<Stmt> {
    run(p, true)
}

/// Erases labels and loop indexes. The `skip` statements that labelling
/// adds after loops are dropped along with their labels, so erasure inverts
/// both labellings exactly.
pub fn strip_labels(s: &Stmt) -> Stmt {
    match s {
        Stmt::Skip | Stmt::Assign(..) => s.clone(),
        Stmt::Seq(a, b) => match (&**a, &**b) {
            (_, Stmt::Labelled(_, skip)) if **skip == Stmt::Skip => strip_labels(a),
            (Stmt::Labelled(_, skip), _) if **skip == Stmt::Skip => strip_labels(b),
            _ => Stmt::seq(strip_labels(a), strip_labels(b)),
        },
        Stmt::If(c, t, e) => Stmt::if_(c.clone(), strip_labels(t), strip_labels(e)),
        Stmt::While { guard, body, .. } => Stmt::while_(guard.clone(), strip_labels(body), None),
        Stmt::Labelled(_, body) => strip_labels(body),
    }
}

/// Removes `skip` statements that are components of a sequence, so that
/// programs differing only in sequenced skips compare equal.
pub fn normalize_skips(s: &Stmt) -> Stmt {
    match s {
        Stmt::Skip | Stmt::Assign(..) => s.clone(),
        Stmt::Seq(a, b) => match (normalize_skips(a), normalize_skips(b)) {
            (Stmt::Skip, b) => b,
            (a, Stmt::Skip) => a,
            (a, b) => Stmt::seq(a, b),
        },
        Stmt::If(c, t, e) => Stmt::if_(c.clone(), normalize_skips(t), normalize_skips(e)),
        Stmt::While { guard, body, index } => {
            Stmt::while_(guard.clone(), normalize_skips(body), *index)
        }
        Stmt::Labelled(l, body) => Stmt::labelled(l.clone(), normalize_skips(body)),
    }
}

/// Keeps labels but empties their indexings and drops loop indexes, turning
/// an indexed-labelled program into a plainly labelled one.
pub fn forget_indexings(s: &Stmt) -> Stmt {
    match s {
        Stmt::Skip | Stmt::Assign(..) => s.clone(),
        Stmt::Seq(a, b) => Stmt::Seq(Box::new(forget_indexings(a)), Box::new(forget_indexings(b))),
        Stmt::If(c, t, e) => Stmt::if_(c.clone(), forget_indexings(t), forget_indexings(e)),
        Stmt::While { guard, body, .. } => {
            Stmt::while_(guard.clone(), forget_indexings(body), None)
        }
        Stmt::Labelled(l, body) => Stmt::labelled(
            IndexedLabel::new(l.atom.clone(), Indexing::empty()),
            forget_indexings(body),
        ),
    }
}
