//! Loop peeling and unrolling with reindexing, addressed by explicit paths.
//!
//! A [`LoopPath`] walks from the root of a statement to one loop through
//! child selectors. Paths always address the current tree, so each step of a
//! [`TransformScript`] is resolved against the output of the previous one.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::syntax::{reindex_stmt, Expr, IndexId, IndexedLabel, SimpleExpr, Stmt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selector {
    SeqL,
    SeqR,
    IfThen,
    IfElse,
    WhileBody,
    LabelBody,
}

impl Selector {
    const ALL: [Selector; 6] = [
        Selector::SeqL,
        Selector::SeqR,
        Selector::IfThen,
        Selector::IfElse,
        Selector::WhileBody,
        Selector::LabelBody,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::SeqL => "seqL",
            Selector::SeqR => "seqR",
            Selector::IfThen => "ifThen",
            Selector::IfElse => "ifElse",
            Selector::WhileBody => "whileBody",
            Selector::LabelBody => "labelBody",
        }
    }

    fn child(self, s: &Stmt) -> Option<&Stmt> {
        match (self, s) {
            (Selector::SeqL, Stmt::Seq(a, _)) => Some(a),
            (Selector::SeqR, Stmt::Seq(_, b)) => Some(b),
            (Selector::IfThen, Stmt::If(_, t, _)) => Some(t),
            (Selector::IfElse, Stmt::If(_, _, e)) => Some(e),
            (Selector::WhileBody, Stmt::While { body, .. }) => Some(body),
            (Selector::LabelBody, Stmt::Labelled(_, body)) => Some(body),
            _ => None,
        }
    }

    fn child_mut(self, s: &mut Stmt) -> Option<&mut Stmt> {
        match (self, s) {
            (Selector::SeqL, Stmt::Seq(a, _)) => Some(a),
            (Selector::SeqR, Stmt::Seq(_, b)) => Some(b),
            (Selector::IfThen, Stmt::If(_, t, _)) => Some(t),
            (Selector::IfElse, Stmt::If(_, _, e)) => Some(e),
            (Selector::WhileBody, Stmt::While { body, .. }) => Some(body),
            (Selector::LabelBody, Stmt::Labelled(_, body)) => Some(body),
            _ => None,
        }
    }
}

fn node_kind(s: &Stmt) -> &'static str {
    match s {
        Stmt::Skip => "skip",
        Stmt::Seq(..) => "a sequence",
        Stmt::Assign(..) => "an assignment",
        Stmt::If(..) => "a conditional",
        Stmt::While { .. } => "a loop",
        Stmt::Labelled(..) => "a labelled statement",
    }
}

/// Child selectors from the root; the empty path is written `.`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LoopPath(pub Vec<Selector>);

impl LoopPath {
    pub fn root() -> LoopPath {
        LoopPath(Vec::new())
    }

    pub fn child(&self, sel: Selector) -> LoopPath {
        let mut steps = self.0.clone();
        steps.push(sel);
        LoopPath(steps)
    }

    pub fn resolve<'a>(&self, s: &'a Stmt) -> Result<&'a Stmt> {
        let mut node = s;
        for (n, sel) in self.0.iter().enumerate() {
            node = sel
                .child(node)
                .ok_or_else(|| self.mismatch(n, *sel, node))?;
        }
        Ok(node)
    }

    fn resolve_mut<'a>(&self, s: &'a mut Stmt) -> Result<&'a mut Stmt> {
        // resolve immutably first so the error can describe the node
        self.resolve(s)?;
        let mut node = s;
        for sel in &self.0 {
            node = sel.child_mut(node).expect("path already resolved");
        }
        Ok(node)
    }

    fn mismatch(&self, n: usize, sel: Selector, node: &Stmt) -> Error {
        self.bad(format!(
            "step {} `{}` applied to {}",
            n + 1,
            sel.name(),
            node_kind(node)
        ))
    }

    fn bad(&self, reason: String) -> Error {
        Error::BadPath {
            path: self.to_string(),
            reason,
        }
    }
}

impl fmt::Display for LoopPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str(".");
        }
        let names: Vec<&str> = self.0.iter().map(|s| s.name()).collect();
        f.write_str(&names.join("/"))
    }
}

impl FromStr for LoopPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<LoopPath> {
        let s = s.trim();
        if s.is_empty() || s == "." {
            return Ok(LoopPath::root());
        }
        s.split('/')
            .map(|part| {
                Selector::ALL
                    .into_iter()
                    .find(|sel| sel.name() == part)
                    .ok_or_else(|| Error::BadPath {
                        path: s.to_string(),
                        reason: format!("unknown selector `{part}`"),
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map(LoopPath)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformOp {
    Peel,
    Unroll(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformStep {
    pub op: TransformOp,
    pub path: LoopPath,
}

impl fmt::Display for TransformStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            TransformOp::Peel => write!(f, "peel {}", self.path),
            TransformOp::Unroll(n) => write!(f, "unroll {n} {}", self.path),
        }
    }
}

/// One step per line: `peel <path>` or `unroll <n> <path>`. Blank lines and
/// text after `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformScript(pub Vec<TransformStep>);

impl TransformScript {
    pub fn parse(text: &str) -> Result<TransformScript> {
        let mut steps = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let words: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::Parse {
                line: n + 1,
                col: raw.len() - raw.trim_start().len() + 1,
                msg,
            };
            let step = match words.as_slice() {
                [] => continue,
                ["peel", path] => TransformStep {
                    op: TransformOp::Peel,
                    path: path.parse()?,
                },
                ["unroll", factor, path] => {
                    let factor = factor
                        .parse()
                        .map_err(|_| err(format!("invalid unroll factor `{factor}`")))?;
                    if factor < 2 {
                        return Err(Error::InvalidFactor(factor));
                    }
                    TransformStep {
                        op: TransformOp::Unroll(factor),
                        path: path.parse()?,
                    }
                }
                _ => {
                    return Err(err(format!(
                        "expected `peel <path>` or `unroll <n> <path>`, found `{}`",
                        line.trim()
                    )))
                }
            };
            steps.push(step);
        }
        Ok(TransformScript(steps))
    }
}

impl fmt::Display for TransformScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.0 {
            writeln!(f, "{step}")?;
        }
        Ok(())
    }
}

fn indexed_loop<'a>(node: &'a Stmt, path: &LoopPath) -> Result<(&'a Expr, &'a Stmt, IndexId)> {
    match node {
        Stmt::While {
            guard,
            body,
            index: Some(k),
        } => Ok((guard, body, *k)),
        Stmt::While { index: None, .. } => Err(path.bad("the loop is not indexed".into())),
        other => Err(path.bad(format!("found {} instead of a loop", node_kind(other)))),
    }
}

fn plain_loop<'a>(node: &'a Stmt, path: &LoopPath) -> Result<(&'a Expr, &'a Stmt)> {
    match node {
        Stmt::While { guard, body, .. } => Ok((guard, body)),
        other => Err(path.bad(format!("found {} instead of a loop", node_kind(other)))),
    }
}

/// `if b then S∘(i_k↦0); i_k: while b do S∘(i_k↦i_k+1)`.
pub fn peel(s: &Stmt, path: &LoopPath) -> Result<Stmt> {
    let mut out = s.clone();
    let node = path.resolve_mut(&mut out)?;
    let (guard, body, k) = indexed_loop(node, path)?;
    let first = reindex_stmt(body, k, &SimpleExpr::constant(k, 0))?;
    let rest = reindex_stmt(body, k, &SimpleExpr::new(1, 1, k))?;
    let peeled = guarded(
        guard,
        Stmt::seq(first, Stmt::while_(guard.clone(), rest, Some(k))),
    );
    *node = peeled;
    Ok(out)
}

/// Replaces the body with `n` guarded copies, copy `j` reindexed by
/// `i_k ↦ n*i_k+j`.
pub fn unroll(s: &Stmt, path: &LoopPath, n: u64) -> Result<Stmt> {
    if n < 2 {
        return Err(Error::InvalidFactor(n));
    }
    let mut out = s.clone();
    let node = path.resolve_mut(&mut out)?;
    let (guard, body, k) = indexed_loop(node, path)?;
    let copies = (0..n)
        .map(|j| reindex_stmt(body, k, &SimpleExpr::new(n, j, k)))
        .collect::<Result<Vec<_>>>()?;
    let unrolled = Stmt::while_(guard.clone(), chain_copies(guard, copies), Some(k));
    *node = unrolled;
    Ok(out)
}

/// Peeling of an unlabelled loop, without reindexing.
pub fn peel_plain(s: &Stmt, path: &LoopPath) -> Result<Stmt> {
    let mut out = s.clone();
    let node = path.resolve_mut(&mut out)?;
    let (guard, body) = plain_loop(node, path)?;
    let peeled = guarded(
        guard,
        Stmt::seq(
            body.clone(),
            Stmt::while_(guard.clone(), body.clone(), None),
        ),
    );
    *node = peeled;
    Ok(out)
}

/// Unrolling of an unlabelled loop, without reindexing.
pub fn unroll_plain(s: &Stmt, path: &LoopPath, n: u64) -> Result<Stmt> {
    if n < 2 {
        return Err(Error::InvalidFactor(n));
    }
    let mut out = s.clone();
    let node = path.resolve_mut(&mut out)?;
    let (guard, body) = plain_loop(node, path)?;
    let copies = (0..n).map(|_| body.clone()).collect();
    let unrolled = Stmt::while_(guard.clone(), chain_copies(guard, copies), None);
    *node = unrolled;
    Ok(out)
}

fn guarded(guard: &Expr, s: Stmt) -> Stmt {
    Stmt::if_(guard.clone(), s, Stmt::Skip)
}

/// `C0; if b then { C1; if b then { ... C(n-1) } }`.
fn chain_copies(guard: &Expr, mut copies: Vec<Stmt>) -> Stmt {
    let mut acc = copies.pop().expect("at least two copies");
    while let Some(c) = copies.pop() {
        acc = Stmt::seq(c, guarded(guard, acc));
    }
    acc
}

pub fn apply_step(s: &Stmt, step: &TransformStep) -> Result<Stmt> {
    match step.op {
        TransformOp::Peel => peel(s, &step.path),
        TransformOp::Unroll(n) => unroll(s, &step.path, n),
    }
}

/// Applies the steps in order; a failure reports its 1-based step number.
pub fn apply_script(s: &Stmt, script: &TransformScript) -> Result<Stmt> {
    script
        .0
        .iter()
        .enumerate()
        .try_fold(s.clone(), |acc, (n, step)| {
            apply_step(&acc, step).map_err(|e| Error::ScriptStep {
                step: n + 1,
                source: Box::new(e),
            })
        })
}

/// Every loop in preorder, with its index if it has one.
pub fn list_loops(s: &Stmt) -> Vec<(LoopPath, Option<IndexId>)> {
    fn go(s: &Stmt, path: LoopPath, out: &mut Vec<(LoopPath, Option<IndexId>)>) {
        if let Stmt::While { index, .. } = s {
            out.push((path.clone(), *index));
        }
        for sel in Selector::ALL {
            if let Some(child) = sel.child(s) {
                go(child, path.child(sel), out);
            }
        }
    }
    let mut out = Vec::new();
    go(s, LoopPath::root(), &mut out);
    out
}

pub fn list_indexed_loops(s: &Stmt) -> Vec<(LoopPath, IndexId)> {
    list_loops(s)
        .into_iter()
        .filter_map(|(p, k)| k.map(|k| (p, k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The same indexed label occurs twice.
    Duplicate(IndexedLabel),
    /// Two indexings of one atom whose first differing entries can coincide.
    Overlap {
        first: IndexedLabel,
        second: IndexedLabel,
        position: usize,
    },
    /// A label inside loop `index` and one outside it agree before the loop's
    /// entry and can coincide on it.
    LoopPrefix {
        index: IndexId,
        inside: IndexedLabel,
        outside: IndexedLabel,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Duplicate(l) => write!(f, "label {l} occurs more than once"),
            Violation::Overlap {
                first,
                second,
                position,
            } => write!(f, "{first} and {second} overlap at position {position}"),
            Violation::LoopPrefix {
                index,
                inside,
                outside,
            } => write!(
                f,
                "{inside} inside the {index} loop shares its prefix with {outside} outside it"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NonOverlapReport {
    pub violations: Vec<Violation>,
}

impl NonOverlapReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for NonOverlapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "non-overlap: ok");
        }
        writeln!(f, "non-overlap: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Position of the first differing entry, or `None` if one indexing is a
/// prefix of the other.
fn first_difference(a: &IndexedLabel, b: &IndexedLabel) -> Option<usize> {
    a.indexing
        .exprs()
        .iter()
        .zip(b.indexing.exprs())
        .position(|(x, y)| x != y)
}

/// Checks both clauses of the non-overlap invariant: distinct indexings of
/// one atom first differ in disjoint expressions, and no label outside a
/// loop can share the prefix up to the loop's index with a label inside it.
pub fn check_non_overlap(s: &Stmt) -> NonOverlapReport {
    let mut labels = Vec::new();
    let mut loops = Vec::new();
    collect(s, &mut labels, &mut loops);
    let mut violations = Vec::new();

    for (n, a) in labels.iter().enumerate() {
        for b in &labels[n + 1..] {
            if a.atom != b.atom {
                continue;
            }
            if a == b {
                violations.push(Violation::Duplicate((*a).clone()));
                continue;
            }
            let position = first_difference(a, b);
            let clash = match position {
                Some(j) => !a.indexing.exprs()[j].disjoint_from(&b.indexing.exprs()[j]),
                None => true,
            };
            if clash {
                violations.push(Violation::Overlap {
                    first: (*a).clone(),
                    second: (*b).clone(),
                    position: position.unwrap_or(a.indexing.len().min(b.indexing.len())),
                });
            }
        }
    }

    for &(k, start, end) in &loops {
        let pos = k.0 as usize;
        for inside in &labels[start..end] {
            let outside = labels[..start].iter().chain(&labels[end..]);
            for out in outside {
                if out.atom != inside.atom {
                    continue;
                }
                let (ie, oe) = (inside.indexing.exprs(), out.indexing.exprs());
                if ie.len() <= pos || oe.len() <= pos {
                    continue;
                }
                if ie[..pos] == oe[..pos] && !ie[pos].disjoint_from(&oe[pos]) {
                    violations.push(Violation::LoopPrefix {
                        index: k,
                        inside: (*inside).clone(),
                        outside: (*out).clone(),
                    });
                }
            }
        }
    }
    NonOverlapReport { violations }
}

/// Labels in preorder, and for each indexed loop the half-open range of
/// label positions inside its body.
fn collect<'a>(
    s: &'a Stmt,
    labels: &mut Vec<&'a IndexedLabel>,
    loops: &mut Vec<(IndexId, usize, usize)>,
) {
    match s {
        Stmt::Skip | Stmt::Assign(..) => {}
        Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
            collect(a, labels, loops);
            collect(b, labels, loops);
        }
        Stmt::While { body, index, .. } => {
            let start = labels.len();
            collect(body, labels, loops);
            if let Some(k) = index {
                loops.push((*k, start, labels.len()));
            }
        }
        Stmt::Labelled(l, body) => {
            labels.push(l);
            collect(body, labels, loops);
        }
    }
}
