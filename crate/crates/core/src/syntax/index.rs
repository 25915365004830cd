//! Formal loop indexes and the indexed-label algebra.
//!
//! A [`SimpleExpr`] is an affine map `a*i_k+b` over a single formal index.
//! Simple expressions over the same index compose, and an [`Indexing`]
//! assigns one of them to each of a run of consecutive indexes. Indexed
//! labels pair a cost atom with an indexing; reindexing post-composes one
//! entry, and evaluation against a [`ConstantIndexing`] instantiates the
//! label with concrete iteration numbers.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// The subscript `k` of the formal loop index `i_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexId(pub u32);

impl IndexId {
    pub fn next(self) -> IndexId {
        IndexId(self.0 + 1)
    }
}

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// `coeff * i_index + offset` with natural coefficients.
///
/// Constants are encoded with a zero coefficient; the identity on `i_k`
/// is `1*i_k+0`. The derived ordering compares `(coeff, offset)` first,
/// which is the lexicographic order used to pick minimal heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimpleExpr {
    coeff: u64,
    offset: u64,
    index: IndexId,
}

impl SimpleExpr {
    pub fn new(coeff: u64, offset: u64, index: IndexId) -> SimpleExpr {
        SimpleExpr {
            coeff,
            offset,
            index,
        }
    }

    pub fn identity(index: IndexId) -> SimpleExpr {
        SimpleExpr::new(1, 0, index)
    }

    pub fn constant(index: IndexId, value: u64) -> SimpleExpr {
        SimpleExpr::new(0, value, index)
    }

    pub fn coeff(&self) -> u64 {
        self.coeff
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn index(&self) -> IndexId {
        self.index
    }

    pub fn is_constant(&self) -> bool {
        self.coeff == 0
    }

    pub fn is_identity(&self) -> bool {
        self.coeff == 1 && self.offset == 0
    }

    /// Substitutes `inner` for the index of `self`:
    /// `(a1*i+b1) ∘ (a2*i+b2) = (a1*a2)*i + (a1*b2+b1)`.
    pub fn compose(&self, inner: &SimpleExpr) -> Result<SimpleExpr> {
        if self.index != inner.index {
            return Err(Error::InvalidComposition(self.index, inner.index));
        }
        let coeff = self.coeff.checked_mul(inner.coeff).ok_or(Error::Overflow)?;
        let offset = self
            .coeff
            .checked_mul(inner.offset)
            .and_then(|v| v.checked_add(self.offset))
            .ok_or(Error::Overflow)?;
        Ok(SimpleExpr::new(coeff, offset, self.index))
    }

    /// Value of the expression when its index equals `value`.
    pub fn eval(&self, value: u64) -> Result<u64> {
        self.coeff
            .checked_mul(value)
            .and_then(|v| v.checked_add(self.offset))
            .ok_or(Error::Overflow)
    }

    pub fn lex_cmp(&self, other: &SimpleExpr) -> Result<Ordering> {
        if self.index != other.index {
            return Err(Error::InvalidComparison(self.index, other.index));
        }
        Ok((self.coeff, self.offset).cmp(&(other.coeff, other.offset)))
    }

    /// `a*i+b <= a'*i+b'` iff `a < a'`, or `a = a'` and `b <= b'`.
    pub fn lex_le(&self, other: &SimpleExpr) -> Result<bool> {
        Ok(self.lex_cmp(other)? != Ordering::Greater)
    }

    /// Whether the images of the two expressions over the naturals are
    /// disjoint. Images of `a*x+b` with `a > 0` are the residue class of `b`
    /// modulo `a` above `b`, which is unbounded, so two such images meet
    /// exactly when their offsets agree modulo `gcd(a1, a2)`.
    pub fn disjoint_from(&self, other: &SimpleExpr) -> bool {
        match (self.coeff, other.coeff) {
            (0, 0) => self.offset != other.offset,
            (0, _) => !other.hits(self.offset),
            (_, 0) => !self.hits(other.offset),
            (a1, a2) => {
                let g = gcd(a1, a2);
                self.offset % g != other.offset % g
            }
        }
    }

    /// Whether `value` lies in the image of the expression.
    pub fn hits(&self, value: u64) -> bool {
        if self.coeff == 0 {
            value == self.offset
        } else {
            value >= self.offset && (value - self.offset).is_multiple_of(self.coeff)
        }
    }
}

impl fmt::Display for SimpleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.index.0;
        match (self.coeff, self.offset) {
            (0, b) => write!(f, "{b}"),
            (1, 0) => write!(f, "i{k}"),
            (1, b) => write!(f, "i{k}+{b}"),
            (a, 0) => write!(f, "{a}*i{k}"),
            (a, b) => write!(f, "{a}*i{k}+{b}"),
        }
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// A list of simple expressions for the consecutive indexes
/// `i_start, i_start+1, ...`. Each entry is an expression over the index it
/// maps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Indexing {
    start: u32,
    exprs: Vec<SimpleExpr>,
}

impl Indexing {
    pub fn empty() -> Indexing {
        Indexing {
            start: 0,
            exprs: Vec::new(),
        }
    }

    /// `Id_depth`: `i_0 ↦ i_0, ..., i_{depth-1} ↦ i_{depth-1}`.
    pub fn identity(depth: u32) -> Indexing {
        Indexing {
            start: 0,
            exprs: (0..depth)
                .map(|k| SimpleExpr::identity(IndexId(k)))
                .collect(),
        }
    }

    pub fn new(exprs: Vec<SimpleExpr>) -> Result<Indexing> {
        Indexing::starting_at(IndexId(0), exprs)
    }

    pub fn starting_at(start: IndexId, exprs: Vec<SimpleExpr>) -> Result<Indexing> {
        for (j, e) in exprs.iter().enumerate() {
            let expected = IndexId(start.0 + j as u32);
            if e.index() != expected {
                return Err(Error::InvalidIndexing(format!(
                    "entry {j} is over {} but maps {expected}",
                    e.index()
                )));
            }
        }
        Ok(Indexing {
            start: start.0,
            exprs,
        })
    }

    pub fn start(&self) -> IndexId {
        IndexId(self.start)
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn exprs(&self) -> &[SimpleExpr] {
        &self.exprs
    }

    pub fn covers(&self, k: IndexId) -> bool {
        k.0 >= self.start && ((k.0 - self.start) as usize) < self.exprs.len()
    }

    pub fn get(&self, k: IndexId) -> Option<&SimpleExpr> {
        if self.covers(k) {
            Some(&self.exprs[(k.0 - self.start) as usize])
        } else {
            None
        }
    }

    pub fn is_identity(&self) -> bool {
        self.start == 0 && self.exprs.iter().all(SimpleExpr::is_identity)
    }

    pub fn is_constant(&self) -> bool {
        self.exprs.iter().all(SimpleExpr::is_constant)
    }

    pub fn first(&self) -> Option<&SimpleExpr> {
        self.exprs.first()
    }

    /// Drops the first entry, so the remainder starts one index later.
    pub fn tail(&self) -> Indexing {
        Indexing {
            start: self.start + 1,
            exprs: self.exprs.iter().skip(1).copied().collect(),
        }
    }

    /// Appends an entry for the next index after the current domain.
    pub fn push(&mut self, e: SimpleExpr) -> Result<()> {
        let expected = IndexId(self.start + self.exprs.len() as u32);
        if e.index() != expected {
            return Err(Error::InvalidIndexing(format!(
                "cannot append an expression over {} after {} entries",
                e.index(),
                self.exprs.len()
            )));
        }
        self.exprs.push(e);
        Ok(())
    }

    /// Replaces the entry for `k` with `e_k ∘ f`. Returns `None` when `k` is
    /// outside the domain.
    fn reindexed(&self, k: IndexId, f: &SimpleExpr) -> Option<Result<Indexing>> {
        let slot = self.get(k)?;
        Some(slot.compose(f).map(|e| {
            let mut out = self.clone();
            out.exprs[(k.0 - self.start) as usize] = e;
            out
        }))
    }

    /// Constant values of all entries, if the indexing is constant.
    pub fn constants(&self) -> Option<Vec<u64>> {
        self.exprs
            .iter()
            .map(|e| e.is_constant().then_some(e.offset()))
            .collect()
    }
}

impl fmt::Display for Indexing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, e) in self.exprs.iter().enumerate() {
            if j > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Identity of a cost label, independent of its indexing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CostAtom(String);

impl CostAtom {
    /// Atoms are written `_name` in source text.
    pub fn new(name: impl Into<String>) -> Result<CostAtom> {
        let name = name.into();
        let mut chars = name.chars();
        let ok = chars.next() == Some('_')
            && chars.clone().next().is_some()
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if ok {
            Ok(CostAtom(name))
        } else {
            Err(Error::InvalidIdent(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CostAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A cost atom paired with an indexing, written `atom<e0, e1, ...>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexedLabel {
    pub atom: CostAtom,
    pub indexing: Indexing,
}

impl IndexedLabel {
    pub fn new(atom: CostAtom, indexing: Indexing) -> IndexedLabel {
        IndexedLabel { atom, indexing }
    }

    pub fn reindex(&self, k: IndexId, f: &SimpleExpr) -> Result<IndexedLabel> {
        match self.indexing.reindexed(k, f) {
            Some(indexing) => Ok(IndexedLabel::new(self.atom.clone(), indexing?)),
            None => Err(Error::IndexOutOfScope {
                index: k,
                label: self.to_string(),
            }),
        }
    }

    /// `A|_C`: composes every non-constant entry with its value in `c`.
    /// Defined only when the result is constant; entries that are already
    /// constant need no value in `c`.
    pub fn eval(&self, c: &ConstantIndexing) -> Result<IndexedLabel> {
        let mut exprs = Vec::with_capacity(self.indexing.len());
        for e in self.indexing.exprs() {
            if e.is_constant() {
                exprs.push(*e);
                continue;
            }
            let value = c
                .get(e.index())
                .ok_or_else(|| Error::UndefinedEvaluation(self.to_string()))?;
            exprs.push(e.compose(&SimpleExpr::constant(e.index(), value))?);
        }
        let indexing = Indexing::starting_at(self.indexing.start(), exprs)?;
        Ok(IndexedLabel::new(self.atom.clone(), indexing))
    }

    /// Trace form: `atom<c0,c1,...>` without spaces.
    pub fn compact(&self) -> String {
        let inner: Vec<String> = self
            .indexing
            .exprs()
            .iter()
            .map(ToString::to_string)
            .collect();
        format!("{}<{}>", self.atom, inner.join(","))
    }
}

impl fmt::Display for IndexedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<{}>", self.atom, self.indexing)
    }
}

/// Runtime values of formal indexes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstantIndexing(BTreeMap<IndexId, u64>);

impl ConstantIndexing {
    pub fn new() -> ConstantIndexing {
        ConstantIndexing::default()
    }

    pub fn from_values(values: &[u64]) -> ConstantIndexing {
        ConstantIndexing(
            values
                .iter()
                .enumerate()
                .map(|(k, v)| (IndexId(k as u32), *v))
                .collect(),
        )
    }

    pub fn get(&self, k: IndexId) -> Option<u64> {
        self.0.get(&k).copied()
    }

    pub fn set(&mut self, k: IndexId, value: u64) {
        self.0.insert(k, value);
    }

    /// `C[i_k↓0]`, extending the domain if needed.
    pub fn reset(&mut self, k: IndexId) {
        self.0.insert(k, 0);
    }

    /// `C[i_k↑]`. An index never reset counts from zero.
    pub fn increment(&mut self, k: IndexId) -> Result<()> {
        let slot = self.0.entry(k).or_insert(0);
        *slot = slot.checked_add(1).ok_or(Error::Overflow)?;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (IndexId, u64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

impl fmt::Display for ConstantIndexing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se(a: u64, b: u64, k: u32) -> SimpleExpr {
        SimpleExpr::new(a, b, IndexId(k))
    }

    fn label(atom: &str, exprs: Vec<SimpleExpr>) -> IndexedLabel {
        IndexedLabel::new(CostAtom::new(atom).unwrap(), Indexing::new(exprs).unwrap())
    }

    // Pointwise oracle: (e1 ∘ e2)(c) = e1(e2(c)), computed by hand-rolled
    // arithmetic rather than `eval`.
    fn pointwise(e1: (u64, u64), e2: (u64, u64), c: u64) -> u64 {
        e1.0 * (e2.0 * c + e2.1) + e1.1
    }

    #[test]
    fn compose_examples() {
        let got = se(2, 1, 0).compose(&se(2, 2, 0)).unwrap();
        assert_eq!(got, se(4, 5, 0));
        for c in 0..=20 {
            assert_eq!(got.eval(c).unwrap(), pointwise((2, 1), (2, 2), c));
        }

        let e = se(3, 7, 1);
        assert_eq!(e.compose(&SimpleExpr::identity(IndexId(1))).unwrap(), e);

        let got = se(0, 3, 0).compose(&se(5, 7, 0)).unwrap();
        assert_eq!(got, se(0, 3, 0));
        for c in 0..=20 {
            assert_eq!(got.eval(c).unwrap(), pointwise((0, 3), (5, 7), c));
        }
    }

    #[test]
    fn compose_rejects_mismatched_indexes() {
        assert_eq!(
            se(1, 0, 0).compose(&se(1, 0, 1)),
            Err(Error::InvalidComposition(IndexId(0), IndexId(1)))
        );
    }

    #[test]
    fn eval_examples_and_overflow() {
        assert_eq!(se(2, 1, 0).eval(3).unwrap(), 7);
        assert_eq!(se(0, 5, 0).eval(99).unwrap(), 5);
        assert_eq!(se(1, 0, 1).eval(4).unwrap(), 4);
        assert_eq!(se(2, 0, 0).eval(u64::MAX), Err(Error::Overflow));
        assert_eq!(se(1, 1, 0).eval(u64::MAX), Err(Error::Overflow));
    }

    #[test]
    fn lex_order() {
        assert!(se(0, 3, 0).lex_le(&se(1, 0, 0)).unwrap());
        assert!(se(2, 1, 0).lex_le(&se(2, 1, 0)).unwrap());
        assert!(!se(2, 5, 0).lex_le(&se(2, 1, 0)).unwrap());
        assert_eq!(
            se(0, 0, 0).lex_le(&se(0, 0, 2)),
            Err(Error::InvalidComparison(IndexId(0), IndexId(2)))
        );
    }

    #[test]
    fn reindex_label_examples() {
        let g = label("_g", vec![se(1, 0, 0), se(1, 0, 1)]);
        let got = g.reindex(IndexId(1), &se(0, 0, 1)).unwrap();
        assert_eq!(got, label("_g", vec![se(1, 0, 0), se(0, 0, 1)]));

        let g = label("_g", vec![se(1, 0, 0), se(1, 1, 1)]);
        let got = g.reindex(IndexId(1), &se(2, 0, 1)).unwrap();
        assert_eq!(got, label("_g", vec![se(1, 0, 0), se(2, 1, 1)]));
        for c in 0..=20 {
            assert_eq!(
                got.indexing.exprs()[1].eval(c).unwrap(),
                pointwise((1, 1), (2, 0), c)
            );
        }

        let a = label("_a", vec![]);
        assert!(matches!(
            a.reindex(IndexId(0), &se(1, 1, 0)),
            Err(Error::IndexOutOfScope { .. })
        ));
    }

    #[test]
    fn eval_label_examples() {
        let c = ConstantIndexing::from_values(&[2]);
        let undefined = label("_x", vec![se(2, 0, 0), se(1, 1, 1)]);
        assert!(matches!(
            undefined.eval(&c),
            Err(Error::UndefinedEvaluation(_))
        ));

        let defined = label("_x", vec![se(2, 0, 0), se(0, 0, 1)]);
        assert_eq!(
            defined.eval(&c).unwrap(),
            label("_x", vec![se(0, 4, 0), se(0, 0, 1)])
        );

        let top = label("_a", vec![]);
        assert_eq!(
            top.eval(&ConstantIndexing::from_values(&[7, 8])).unwrap(),
            top
        );
        assert_eq!(top.eval(&ConstantIndexing::new()).unwrap(), top);
    }

    #[test]
    fn disjointness_matches_brute_force() {
        for a1 in 0..5 {
            for b1 in 0..6 {
                for a2 in 0..5 {
                    for b2 in 0..6 {
                        let e1 = se(a1, b1, 0);
                        let e2 = se(a2, b2, 0);
                        let img1: std::collections::BTreeSet<u64> =
                            (0..200).map(|x| a1 * x + b1).collect();
                        let meet = (0..200).any(|y| img1.contains(&(a2 * y + b2)));
                        assert_eq!(e1.disjoint_from(&e2), !meet, "{e1} vs {e2}");
                    }
                }
            }
        }
    }

    #[test]
    fn display_forms() {
        assert_eq!(se(0, 4, 1).to_string(), "4");
        assert_eq!(se(1, 0, 1).to_string(), "i1");
        assert_eq!(se(1, 2, 0).to_string(), "i0+2");
        assert_eq!(se(2, 0, 0).to_string(), "2*i0");
        assert_eq!(se(2, 1, 0).to_string(), "2*i0+1");
        let l = label("_g", vec![se(2, 1, 0), se(0, 0, 1)]);
        assert_eq!(l.to_string(), "_g<2*i0+1, 0>");
        assert_eq!(l.compact(), "_g<2*i0+1,0>");
    }

    #[test]
    fn indexing_rejects_misaligned_entries() {
        assert!(Indexing::new(vec![se(1, 0, 1)]).is_err());
        let mut i = Indexing::identity(1);
        assert!(i.push(se(1, 0, 0)).is_err());
        i.push(se(1, 0, 1)).unwrap();
        assert_eq!(i.tail().start(), IndexId(1));
    }
}
