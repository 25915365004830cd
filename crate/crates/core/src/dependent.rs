//! Dependent costs: nested conditionals over loop indexes that give an
//! atom's cost as a function of the iteration it belongs to.
//!
//! [`build_dependent`] groups the indexed occurrences of one atom by their
//! leading simple expression, always splitting on the least expression in
//! lexicographic order, and turns each split into a test on the index.
//! [`simplify`] then rewrites the tests using what the enclosing branches
//! already establish about each index.

use std::collections::BTreeSet;
use std::fmt;

use crate::cost::CostMap;
use crate::error::{Error, Result};
use crate::syntax::{
    gcd, BinOp, ConstantIndexing, CostAtom, Expr, Ident, IndexId, IndexedLabel, Indexing,
    SimpleExpr,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Test {
    /// `i = n`
    Eq(u64),
    /// `i ≥ n`
    Ge(u64),
    /// `i mod modulus = residue`, with `i ≥ min` when a bound is present.
    ModEq {
        modulus: u64,
        residue: u64,
        min: Option<u64>,
    },
}

impl Test {
    pub fn holds(&self, v: u64) -> bool {
        match *self {
            Test::Eq(n) => v == n,
            Test::Ge(n) => v >= n,
            Test::ModEq {
                modulus,
                residue,
                min,
            } => v % modulus == residue && min.is_none_or(|m| v >= m),
        }
    }

    fn largest_constant(&self) -> u64 {
        match *self {
            Test::Eq(n) | Test::Ge(n) => n,
            Test::ModEq { residue, min, .. } => residue.max(min.unwrap_or(0)),
        }
    }

    fn period(&self) -> u64 {
        match *self {
            Test::ModEq { modulus, .. } => modulus,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimpleCondition {
    pub index: IndexId,
    pub test: Test,
}

impl SimpleCondition {
    pub fn new(index: IndexId, test: Test) -> SimpleCondition {
        SimpleCondition { index, test }
    }

    /// Renders the condition over the variables chosen by `var`.
    pub fn to_expr(&self, var: &impl Fn(IndexId) -> Expr) -> Expr {
        let i = var(self.index);
        let int = |n: u64| Expr::Int(n as i64);
        match self.test {
            Test::Eq(n) => Expr::binary(BinOp::Eq, i, int(n)),
            Test::Ge(n) => Expr::binary(BinOp::Le, int(n), i),
            Test::ModEq {
                modulus,
                residue,
                min,
            } => {
                let congruence = Expr::binary(
                    BinOp::Eq,
                    Expr::binary(BinOp::Mod, i.clone(), int(modulus)),
                    int(residue),
                );
                match min {
                    Some(m) => {
                        Expr::binary(BinOp::And, congruence, Expr::binary(BinOp::Le, int(m), i))
                    }
                    None => congruence,
                }
            }
        }
    }
}

impl fmt::Display for SimpleCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr(&index_var))
    }
}

fn index_var(k: IndexId) -> Expr {
    Expr::Var(Ident::any(k.to_string()).expect("`i<k>` is a valid identifier"))
}

/// `p(e)`: the set of values `e` takes, as a condition on its index.
pub fn cond_of_expr(e: &SimpleExpr) -> SimpleCondition {
    let (a, b) = (e.coeff(), e.offset());
    let test = match a {
        0 => Test::Eq(b),
        1 => Test::Ge(b),
        _ => Test::ModEq {
            modulus: a,
            residue: b % a,
            min: Some(b),
        },
    };
    SimpleCondition::new(e.index(), test)
}

pub fn cond_holds(p: &SimpleCondition, c: &ConstantIndexing) -> Result<bool> {
    let v = c.get(p.index).ok_or(Error::UndefinedCondition(p.index))?;
    Ok(p.test.holds(v))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DependentCost {
    Const(u64),
    Cond(SimpleCondition, Box<DependentCost>, Box<DependentCost>),
}

impl DependentCost {
    pub fn cond(
        p: SimpleCondition,
        then: DependentCost,
        otherwise: DependentCost,
    ) -> DependentCost {
        DependentCost::Cond(p, Box::new(then), Box::new(otherwise))
    }

    pub fn eval(&self, c: &ConstantIndexing) -> Result<u64> {
        let mut k = self;
        loop {
            match k {
                DependentCost::Const(n) => return Ok(*n),
                DependentCost::Cond(p, t, e) => k = if cond_holds(p, c)? { t } else { e },
            }
        }
    }

    /// Renders as a conditional expression, with `var` giving each index's
    /// variable and `leaf` each constant.
    pub fn to_expr_with(
        &self,
        var: &impl Fn(IndexId) -> Expr,
        leaf: &impl Fn(u64) -> Expr,
    ) -> Expr {
        match self {
            DependentCost::Const(n) => leaf(*n),
            DependentCost::Cond(p, t, e) => Expr::cond(
                p.to_expr(var),
                t.to_expr_with(var, leaf),
                e.to_expr_with(var, leaf),
            ),
        }
    }

    pub fn to_expr(&self, var: &impl Fn(IndexId) -> Expr) -> Expr {
        self.to_expr_with(var, &|n| Expr::Int(n as i64))
    }

    /// Number of conditional nodes.
    pub fn conditions(&self) -> usize {
        match self {
            DependentCost::Const(_) => 0,
            DependentCost::Cond(_, t, e) => 1 + t.conditions() + e.conditions(),
        }
    }
}

impl fmt::Display for DependentCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr(&index_var))
    }
}

pub fn eval_dependent(k: &DependentCost, c: &ConstantIndexing) -> Result<u64> {
    k.eval(c)
}

/// A set of indexings over one common domain `i_h..i_k`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexingSet(BTreeSet<Indexing>);

impl IndexingSet {
    pub fn new(members: impl IntoIterator<Item = Indexing>) -> Option<IndexingSet> {
        let set: BTreeSet<Indexing> = members.into_iter().collect();
        let mut domains = set.iter().map(|i| (i.start(), i.len()));
        let first = domains.next();
        if domains.any(|d| Some(d) != first) {
            return None;
        }
        Some(IndexingSet(set))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Indexing> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Empty,
    SingletonEmpty,
    /// `S = (i_h↦head)S' + S''`: `with_head` holds the tails of the members
    /// starting with `head`, `rest` the members that do not.
    Split {
        head: SimpleExpr,
        with_head: IndexingSet,
        rest: IndexingSet,
    },
}

pub fn classify(s: &IndexingSet) -> Classification {
    let Some(first) = s.0.iter().next() else {
        return Classification::Empty;
    };
    if first.is_empty() {
        return Classification::SingletonEmpty;
    }
    let head =
        *s.0.iter()
            .filter_map(Indexing::first)
            .min()
            .expect("members are nonempty");
    let (with, rest): (BTreeSet<Indexing>, BTreeSet<Indexing>) =
        s.0.iter().cloned().partition(|i| i.first() == Some(&head));
    Classification::Split {
        head,
        with_head: IndexingSet(with.iter().map(Indexing::tail).collect()),
        rest: IndexingSet(rest),
    }
}

fn kappa(
    atom: &CostAtom,
    prefix: &Indexing,
    s: &IndexingSet,
    kmap: &CostMap,
) -> Result<DependentCost> {
    match classify(s) {
        Classification::Empty => Ok(DependentCost::Const(0)),
        Classification::SingletonEmpty => {
            let label = IndexedLabel::new(atom.clone(), prefix.clone());
            kmap.get(&label)
                .map(DependentCost::Const)
                .ok_or_else(|| Error::MissingCost(label.to_string()))
        }
        Classification::Split {
            head,
            with_head,
            rest,
        } => {
            let mut extended = prefix.clone();
            extended.push(head)?;
            Ok(DependentCost::cond(
                cond_of_expr(&head),
                kappa(atom, &extended, &with_head, kmap)?,
                kappa(atom, prefix, &rest, kmap)?,
            ))
        }
    }
}

/// `κ(α)`: the dependent cost of `atom` from the costs of its occurrences.
pub fn build_dependent(atom: &CostAtom, kmap: &CostMap) -> Result<DependentCost> {
    let members = kmap.occurrences(atom).map(|(l, _)| l.indexing.clone());
    let set = IndexingSet::new(members).ok_or_else(|| Error::MixedDomain {
        atom: atom.to_string(),
    })?;
    kappa(atom, &Indexing::empty(), &set, kmap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplifyOptions {
    /// Collapse a conditional whose branches simplify to the same cost.
    pub merge_equal: bool,
}

impl Default for SimplifyOptions {
    fn default() -> SimplifyOptions {
        SimplifyOptions { merge_equal: true }
    }
}

const ENUMERATION_CAP: u64 = 1_000_000;

/// Facts established by the enclosing branches: conditions known to hold
/// or known to fail.
#[derive(Debug, Clone, Default)]
struct Facts(Vec<(SimpleCondition, bool)>);

impl Facts {
    fn with(&self, p: SimpleCondition, holds: bool) -> Facts {
        let mut f = self.clone();
        f.0.push((p, holds));
        f
    }

    /// Whether `a` and `b` agree on every value of `index` allowed by the
    /// facts. Every test is eventually periodic: past the largest constant
    /// mentioned it repeats with the lcm of the moduli, so one threshold
    /// plus one period covers all naturals. `None` when that range exceeds
    /// the enumeration cap.
    fn agree(
        &self,
        index: IndexId,
        a: &dyn Fn(u64) -> bool,
        b: &dyn Fn(u64) -> bool,
        tests: &[Test],
    ) -> Option<bool> {
        let relevant: Vec<(Test, bool)> = self
            .0
            .iter()
            .filter(|(p, _)| p.index == index)
            .map(|(p, h)| (p.test, *h))
            .collect();
        let all = relevant
            .iter()
            .map(|(t, _)| *t)
            .chain(tests.iter().copied());
        let mut threshold: u64 = 0;
        let mut period: u64 = 1;
        for t in all {
            threshold = threshold.max(t.largest_constant().checked_add(1)?);
            let m = t.period();
            period = (period / gcd(period, m)).checked_mul(m)?;
        }
        let end = threshold.checked_add(period)?;
        if end > ENUMERATION_CAP {
            return None;
        }
        Some((0..end).all(|v| !relevant.iter().all(|(t, h)| t.holds(v) == *h) || a(v) == b(v)))
    }

    fn implies(&self, p: &SimpleCondition, expected: bool) -> bool {
        let t = p.test;
        self.agree(p.index, &|v| t.holds(v), &|_| expected, &[t]) == Some(true)
    }

    fn equivalent(&self, p: &SimpleCondition, q: &SimpleCondition) -> bool {
        let (tp, tq) = (p.test, q.test);
        self.agree(p.index, &|v| tp.holds(v), &|v| tq.holds(v), &[tp, tq]) == Some(true)
    }

    /// The simplest condition equivalent to `p` under the facts.
    fn reduce(&self, p: SimpleCondition) -> SimpleCondition {
        let mut candidates = Vec::new();
        if let Test::ModEq {
            modulus,
            residue,
            min: Some(m),
        } = p.test
        {
            candidates.push(Test::ModEq {
                modulus,
                residue,
                min: None,
            });
            candidates.push(Test::Ge(m));
        }
        candidates
            .into_iter()
            .map(|t| SimpleCondition::new(p.index, t))
            .find(|q| self.equivalent(&p, q))
            .unwrap_or(p)
    }
}

fn simplify_in(k: &DependentCost, facts: &Facts, opts: SimplifyOptions) -> DependentCost {
    match k {
        DependentCost::Const(_) => k.clone(),
        DependentCost::Cond(p, t, e) => {
            if facts.implies(p, true) {
                return simplify_in(t, facts, opts);
            }
            if facts.implies(p, false) {
                return simplify_in(e, facts, opts);
            }
            let p = facts.reduce(*p);
            let t = simplify_in(t, &facts.with(p, true), opts);
            let e = simplify_in(e, &facts.with(p, false), opts);
            if opts.merge_equal && t == e {
                t
            } else {
                DependentCost::cond(p, t, e)
            }
        }
    }
}

/// Rewrites `k` into an equivalent expression over all naturals: tests
/// decided by the enclosing branches are removed, and bounds or congruences
/// that the enclosing branches already imply are dropped from the
/// remaining tests.
pub fn simplify(k: &DependentCost, opts: SimplifyOptions) -> DependentCost {
    simplify_in(k, &Facts::default(), opts)
}

/// Replaces the costs of `atom`'s occurrences by `1, 2, ...` in label
/// order, for rendering with [`symbolic_leaf`].
pub fn symbolic_costs(atom: &CostAtom, kmap: &CostMap) -> CostMap {
    CostMap(
        kmap.occurrences(atom)
            .enumerate()
            .map(|(n, (l, _))| (l.clone(), n as u64 + 1))
            .collect(),
    )
}

/// Leaf `n ≥ 1` becomes the `n`-th letter; 0 stays a literal.
pub fn symbolic_leaf(n: u64) -> Expr {
    match n {
        0 => Expr::Int(0),
        1..=26 => {
            let c = char::from(b'a' + (n - 1) as u8);
            Expr::Var(Ident::any(c.to_string()).expect("letters are identifiers"))
        }
        _ => Expr::Var(Ident::any(format!("k{n}")).expect("valid identifier")),
    }
}

pub fn render_symbolic(k: &DependentCost) -> String {
    k.to_expr_with(&index_var, &symbolic_leaf).to_string()
}
