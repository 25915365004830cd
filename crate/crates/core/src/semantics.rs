//! Small-step interpreter shared by plain, plainly labelled and
//! index-labelled programs.
//!
//! The machine state is `(S, K, s, C)`: the statement in focus, a
//! continuation stack, the store and the constant indexing of loop
//! counters. Indexed loops that are running sit on the stack as active-loop
//! frames; unindexed loops are pushed back as ordinary statements and never
//! touch `C`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::syntax::{ConstantIndexing, Expr, Ident, IndexId, IndexedLabel, Stmt};

pub const DEFAULT_FUEL: u64 = 1_000_000;

/// Variable store; unset variables read as 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store(BTreeMap<Ident, i64>);

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn get(&self, x: &Ident) -> i64 {
        self.0.get(x).copied().unwrap_or(0)
    }

    pub fn set(&mut self, x: Ident, v: i64) {
        self.0.insert(x, v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ident, i64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    /// Parses `x=1,y=-2`. Whitespace around items is ignored.
    pub fn parse(text: &str) -> Result<Store> {
        let mut store = Store::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, value) = item.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                col: 1,
                msg: format!("expected `name=value`, found `{item}`"),
            })?;
            let value = value.trim().parse().map_err(|_| Error::Parse {
                line: 1,
                col: 1,
                msg: format!("invalid integer `{}`", value.trim()),
            })?;
            store.set(Ident::new(name.trim())?, value);
        }
        Ok(store)
    }

    /// The store without instrumentation variables.
    pub fn user_view(&self) -> Store {
        Store(
            self.0
                .iter()
                .filter(|(k, _)| !k.is_reserved())
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }

    pub(crate) fn lookup(&self) -> impl Fn(&Ident) -> i64 + '_ {
        move |x| self.get(x)
    }
}

impl FromIterator<(Ident, i64)> for Store {
    fn from_iter<T: IntoIterator<Item = (Ident, i64)>>(iter: T) -> Store {
        Store(iter.into_iter().collect())
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Stmt(Stmt),
    /// `i_k: while b do S then K`, the loop currently iterating.
    ActiveLoop {
        guard: Expr,
        body: Stmt,
        index: IndexId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Silent,
    Emitted(IndexedLabel),
    Halted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub current: Stmt,
    pub kont: Vec<Frame>,
    pub store: Store,
    pub cidx: ConstantIndexing,
}

fn truthy(e: &Expr, store: &Store) -> Result<bool> {
    Ok(e.eval(&store.lookup())? != 0)
}

impl MachineState {
    /// `(P, ε, s, ∅)`: the constant indexing starts empty and grows on reset.
    pub fn new(program: Stmt, store: Store) -> MachineState {
        MachineState {
            current: program,
            kont: Vec::new(),
            store,
            cidx: ConstantIndexing::new(),
        }
    }

    pub fn is_halted(&self) -> bool {
        self.current == Stmt::Skip && self.kont.is_empty()
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        if self.is_halted() {
            return Ok(StepOutcome::Halted);
        }
        let current = std::mem::replace(&mut self.current, Stmt::Skip);
        match current {
            Stmt::Skip => match self.kont.pop().expect("not halted") {
                Frame::Stmt(s) => self.current = s,
                Frame::ActiveLoop { guard, body, index } => {
                    if truthy(&guard, &self.store)? {
                        self.cidx.increment(index)?;
                        self.current = body.clone();
                        self.kont.push(Frame::ActiveLoop { guard, body, index });
                    }
                }
            },
            Stmt::Seq(a, b) => {
                self.kont.push(Frame::Stmt(*b));
                self.current = *a;
            }
            Stmt::Assign(x, e) => {
                let v = e.eval(&self.store.lookup())?;
                self.store.set(x, v);
            }
            Stmt::If(c, t, e) => {
                self.current = if truthy(&c, &self.store)? { *t } else { *e };
            }
            Stmt::While {
                guard,
                body,
                index: None,
            } => {
                if truthy(&guard, &self.store)? {
                    self.current = (*body).clone();
                    self.kont.push(Frame::Stmt(Stmt::While {
                        guard,
                        body,
                        index: None,
                    }));
                }
            }
            Stmt::While {
                guard,
                body,
                index: Some(k),
            } => {
                if truthy(&guard, &self.store)? {
                    self.cidx.reset(k);
                    self.current = (*body).clone();
                    self.kont.push(Frame::ActiveLoop {
                        guard,
                        body: *body,
                        index: k,
                    });
                }
            }
            Stmt::Labelled(l, body) => {
                let emitted = l
                    .eval(&self.cidx)
                    .map_err(|e| Error::Stuck(e.to_string()))?;
                self.current = *body;
                return Ok(StepOutcome::Emitted(emitted));
            }
        }
        Ok(StepOutcome::Silent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub store: Store,
    pub trace: Vec<IndexedLabel>,
    pub steps: u64,
}

/// Runs to the halting state `(skip, ε, s, C)`, failing after `fuel` steps.
pub fn run(program: &Stmt, store: Store, fuel: u64) -> Result<RunResult> {
    let mut state = MachineState::new(program.clone(), store);
    let mut trace = Vec::new();
    let mut steps = 0;
    while !state.is_halted() {
        if steps == fuel {
            return Err(Error::FuelExhausted(fuel));
        }
        steps += 1;
        if let StepOutcome::Emitted(l) = state.step()? {
            trace.push(l);
        }
    }
    Ok(RunResult {
        store: state.store,
        trace,
        steps,
    })
}

/// One label per line in the compact `atom<c0,c1>` form.
pub fn format_trace(trace: &[IndexedLabel]) -> String {
    trace.iter().map(|l| l.compact() + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{label_indexed, label_plain, strip_labels};
    use crate::syntax::parse_program;

    const FACTORIAL: &str = include_str!("../testdata/corpus/factorial_sum.imp");

    fn n_is(v: i64) -> Store {
        Store::parse(&format!("n={v}")).unwrap()
    }

    fn compact(trace: &[IndexedLabel]) -> Vec<String> {
        trace.iter().map(IndexedLabel::compact).collect()
    }

    #[test]
    fn factorial_trace_for_three() {
        let p = label_indexed(&parse_program(FACTORIAL).unwrap()).unwrap();
        let r = run(&p, n_is(3), DEFAULT_FUEL).unwrap();
        assert_eq!(
            compact(&r.trace).join(" "),
            "_L0<> _a1<0> _b2<0> _a1<1> _a2<1,0> _b2<1> _a1<2> _a2<2,0> _a2<2,1> _b2<2> _b1<>"
        );
        let s = Ident::new("s").unwrap();
        // 0! + 1! + 2!
        assert_eq!(r.store.get(&s), 4);
    }

    #[test]
    fn factorial_with_zero_iterations() {
        let p = label_indexed(&parse_program(FACTORIAL).unwrap()).unwrap();
        let r = run(&p, n_is(0), DEFAULT_FUEL).unwrap();
        assert_eq!(compact(&r.trace), ["_L0<>", "_b1<>"]);
        assert_eq!(r.store.get(&Ident::new("s").unwrap()), 0);
    }

    #[test]
    fn constant_label_emits_itself() {
        let p = parse_program("_g<2, 1>: skip").unwrap();
        let r = run(&p, Store::new(), 10).unwrap();
        assert_eq!(compact(&r.trace), ["_g<2,1>"]);
    }

    #[test]
    fn loop_index_resets_and_increments() {
        let p = parse_program("@i1 while x < 2 do { x := x + 1 }").unwrap();
        let mut m = MachineState::new(p, Store::new());
        m.step().unwrap();
        assert_eq!(m.cidx.get(IndexId(1)), Some(0));
        // assignment, then skip against the active frame
        m.step().unwrap();
        m.step().unwrap();
        assert_eq!(m.cidx.get(IndexId(1)), Some(1));

        let never = parse_program("@i0 while 0 do { skip }").unwrap();
        let mut m = MachineState::new(never, Store::new());
        m.step().unwrap();
        assert!(m.is_halted());
        assert_eq!(m.cidx, ConstantIndexing::new());
    }

    #[test]
    fn stuck_and_fuel() {
        let p = parse_program("_a<i0>: skip").unwrap();
        assert!(matches!(run(&p, Store::new(), 10), Err(Error::Stuck(_))));
        let spin = parse_program("while 1 do { skip }").unwrap();
        assert_eq!(
            run(&spin, Store::new(), 100),
            Err(Error::FuelExhausted(100))
        );
    }

    #[test]
    fn erasure_and_plain_labelling_agree() {
        let plain = parse_program(FACTORIAL).unwrap();
        let indexed = label_indexed(&plain).unwrap();
        for n in 0..6 {
            let a = run(&indexed, n_is(n), DEFAULT_FUEL).unwrap();
            let b = run(&strip_labels(&indexed), n_is(n), DEFAULT_FUEL).unwrap();
            assert_eq!(a.store, b.store);
            assert!(b.trace.is_empty());
            let c = run(&label_plain(&plain).unwrap(), n_is(n), DEFAULT_FUEL).unwrap();
            let atoms = |t: &[IndexedLabel]| t.iter().map(|l| l.atom.clone()).collect::<Vec<_>>();
            assert_eq!(atoms(&a.trace), atoms(&c.trace));
        }
    }

    #[test]
    fn store_text() {
        let s = Store::parse(" n = 3, x=-2 ,").unwrap();
        assert_eq!(s.to_string(), "n=3,x=-2");
        assert!(Store::parse("n").is_err());
        assert!(Store::parse("__cost=1").is_err());
    }
}
