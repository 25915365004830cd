//! Static block costs for the emit instructions of a VM program.
//!
//! The block of an `emit` is everything that can execute from it up to the
//! next `emit` or through `halt`. A program is sound when every cycle of its
//! control-flow graph contains an `emit`, which makes each block a DAG, and
//! a label is precise when all paths through its block cost the same.

use std::collections::BTreeMap;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::syntax::{CostAtom, IndexedLabel};
use crate::vm::{Addr, CostModel, Instr, VmProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every block must have a single cost.
    Strict,
    /// Imprecise blocks take their maximum.
    Sound,
}

/// Cycles of the control-flow graph that pass through no `emit`, each given
/// as the sorted addresses of a strongly connected component.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SoundnessReport {
    pub cycles: Vec<Vec<Addr>>,
}

impl SoundnessReport {
    pub fn is_ok(&self) -> bool {
        self.cycles.is_empty()
    }
}

impl fmt::Display for SoundnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "soundness: ok");
        }
        writeln!(f, "soundness: {} label-free cycle(s)", self.cycles.len())?;
        for c in &self.cycles {
            let addrs: Vec<String> = c.iter().map(ToString::to_string).collect();
            writeln!(f, "  through {}", addrs.join(", "))?;
        }
        Ok(())
    }
}

pub fn check_soundness(p: &VmProgram) -> SoundnessReport {
    let code = p.instrs();
    let mut g = DiGraph::<Addr, ()>::with_capacity(code.len(), code.len() * 2);
    let nodes: Vec<_> = (0..code.len()).map(|pc| g.add_node(pc)).collect();
    for (pc, i) in code.iter().enumerate() {
        if matches!(i, Instr::Emit(_)) {
            continue;
        }
        for s in i.successors(pc) {
            if !matches!(code[s], Instr::Emit(_)) {
                g.add_edge(nodes[pc], nodes[s], ());
            }
        }
    }
    let mut cycles: Vec<Vec<Addr>> = tarjan_scc(&g)
        .into_iter()
        .filter(|scc| scc.len() > 1 || g.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut addrs: Vec<Addr> = scc.into_iter().map(|n| g[n]).collect();
            addrs.sort_unstable();
            addrs
        })
        .collect();
    cycles.sort();
    SoundnessReport { cycles }
}

/// Cost range of the block headed by one `emit`, with a witness path for
/// each end of the range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCost {
    pub addr: Addr,
    pub label: IndexedLabel,
    pub min: u64,
    pub max: u64,
    pub min_path: Vec<Addr>,
    pub max_path: Vec<Addr>,
}

impl BlockCost {
    pub fn is_precise(&self) -> bool {
        self.min == self.max
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    min: u64,
    max: u64,
    min_next: Option<Addr>,
    max_next: Option<Addr>,
}

struct Blocks<'a> {
    code: &'a [Instr],
    costs: &'a CostModel,
    memo: Vec<Option<Span>>,
}

impl Blocks<'_> {
    /// Cost from `pc` to the next emit, with `pc` itself included unless it
    /// is an emit.
    fn span(&mut self, pc: Addr) -> Result<Span> {
        if let Some(s) = self.memo[pc] {
            return Ok(s);
        }
        let instr = &self.code[pc];
        let span = match instr {
            Instr::Emit(_) => Span {
                min: 0,
                max: 0,
                min_next: None,
                max_next: None,
            },
            _ => self.through(pc)?,
        };
        self.memo[pc] = Some(span);
        Ok(span)
    }

    /// Cost of executing `pc` and continuing to the next emit.
    fn through(&mut self, pc: Addr) -> Result<Span> {
        let own = self.costs.cost(&self.code[pc]);
        let succs = self.code[pc].successors(pc);
        if succs.is_empty() {
            return Ok(Span {
                min: own,
                max: own,
                min_next: None,
                max_next: None,
            });
        }
        let mut best: Option<Span> = None;
        for s in succs {
            let sub = self.span(s)?;
            let min = own.checked_add(sub.min).ok_or(Error::Overflow)?;
            let max = own.checked_add(sub.max).ok_or(Error::Overflow)?;
            best = Some(match best {
                None => Span {
                    min,
                    max,
                    min_next: Some(s),
                    max_next: Some(s),
                },
                Some(b) => Span {
                    min: b.min.min(min),
                    max: b.max.max(max),
                    min_next: if min < b.min { Some(s) } else { b.min_next },
                    max_next: if max > b.max { Some(s) } else { b.max_next },
                },
            });
        }
        Ok(best.expect("at least one successor"))
    }

    fn path(&self, start: Addr, pick: impl Fn(&Span) -> Option<Addr>) -> Vec<Addr> {
        let mut path = vec![start];
        let mut at = start;
        while let Some(next) = self.memo[at].as_ref().and_then(&pick) {
            if matches!(self.code[next], Instr::Emit(_)) {
                break;
            }
            path.push(next);
            at = next;
        }
        path
    }
}

/// Per-label static costs and the cost range of every block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaReport {
    pub costs: CostMap,
    pub blocks: Vec<BlockCost>,
    /// Cost range from the entry to the first emit.
    pub entry: (u64, u64),
}

impl KappaReport {
    pub fn imprecise(&self) -> impl Iterator<Item = &BlockCost> {
        self.blocks.iter().filter(|b| !b.is_precise())
    }

    pub fn to_json(&self) -> Value {
        let labels: Vec<Value> = self
            .costs
            .iter()
            .map(|(l, c)| {
                let blocks: Vec<&BlockCost> =
                    self.blocks.iter().filter(|b| &b.label == l).collect();
                let min = blocks.iter().map(|b| b.min).min().unwrap_or(c);
                let max = blocks.iter().map(|b| b.max).max().unwrap_or(c);
                json!({
                    "label": l.to_string(),
                    "cost": c,
                    "precise": min == max,
                    "min": min,
                    "max": max,
                    "addrs": blocks.iter().map(|b| b.addr).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "labels": labels,
            "entry": { "min": self.entry.0, "max": self.entry.1 },
        })
    }
}

impl fmt::Display for KappaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.costs)?;
        for b in self.imprecise() {
            writeln!(
                f,
                "# imprecise {} at {}: {}..={} (min via {:?}, max via {:?})",
                b.label, b.addr, b.min, b.max, b.min_path, b.max_path
            )?;
        }
        Ok(())
    }
}

/// Static cost of each label as it is written in the compiled code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostMap(pub BTreeMap<IndexedLabel, u64>);

impl CostMap {
    pub fn get(&self, l: &IndexedLabel) -> Option<u64> {
        self.0.get(l).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IndexedLabel, u64)> {
        self.0.iter().map(|(l, c)| (l, *c))
    }

    /// Occurrences of `atom`, in label order.
    pub fn occurrences<'a>(
        &'a self,
        atom: &'a CostAtom,
    ) -> impl Iterator<Item = (&'a IndexedLabel, u64)> {
        self.iter().filter(move |(l, _)| &l.atom == atom)
    }

    pub fn atoms(&self) -> Vec<CostAtom> {
        let mut atoms: Vec<CostAtom> = self.0.keys().map(|l| l.atom.clone()).collect();
        atoms.dedup();
        atoms
    }
}

impl fmt::Display for CostMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, c) in self.iter() {
            writeln!(f, "{l} = {c}")?;
        }
        Ok(())
    }
}

/// Cost ranges of every emit block. Fails if the program is unsound.
pub fn analyze_blocks(p: &VmProgram, costs: &CostModel) -> Result<(Vec<BlockCost>, (u64, u64))> {
    let soundness = check_soundness(p);
    if !soundness.is_ok() {
        return Err(Error::Unsound(soundness.cycles.len()));
    }
    let code = p.instrs();
    let mut b = Blocks {
        code,
        costs,
        memo: vec![None; code.len()],
    };
    let mut blocks = Vec::new();
    for (pc, i) in code.iter().enumerate() {
        if let Instr::Emit(l) = i {
            let s = b.through(pc)?;
            b.memo[pc] = Some(s);
            blocks.push(BlockCost {
                addr: pc,
                label: l.clone(),
                min: s.min,
                max: s.max,
                min_path: b.path(pc, |s| s.min_next),
                max_path: b.path(pc, |s| s.max_next),
            });
            b.memo[pc] = Some(Span {
                min: 0,
                max: 0,
                min_next: None,
                max_next: None,
            });
        }
    }
    let entry = if code.is_empty() {
        (0, 0)
    } else {
        let s = b.span(0)?;
        (s.min, s.max)
    };
    Ok((blocks, entry))
}

/// The cost mapping κ. In strict mode an imprecise block, or a label
/// occurring with different costs, is an error; in sound mode both take
/// the maximum.
pub fn compute_kappa(p: &VmProgram, costs: &CostModel, mode: Mode) -> Result<KappaReport> {
    let (blocks, entry) = analyze_blocks(p, costs)?;
    let mut map: BTreeMap<IndexedLabel, u64> = BTreeMap::new();
    for b in &blocks {
        if mode == Mode::Strict && !b.is_precise() {
            return Err(Error::Imprecise {
                label: b.label.to_string(),
                min: b.min,
                max: b.max,
            });
        }
        match map.get(&b.label) {
            Some(&prev) if prev != b.max && mode == Mode::Strict => {
                return Err(Error::Imprecise {
                    label: b.label.to_string(),
                    min: prev.min(b.max),
                    max: prev.max(b.max),
                })
            }
            Some(&prev) => {
                map.insert(b.label.clone(), prev.max(b.max));
            }
            None => {
                map.insert(b.label.clone(), b.max);
            }
        }
    }
    Ok(KappaReport {
        costs: CostMap(map),
        blocks,
        entry,
    })
}

/// The plain cost mapping: each atom costs the maximum over its indexed
/// occurrences.
pub fn collapse_to_atoms(k: &CostMap) -> BTreeMap<CostAtom, u64> {
    let mut out: BTreeMap<CostAtom, u64> = BTreeMap::new();
    for (l, c) in k.iter() {
        let slot = out.entry(l.atom.clone()).or_insert(c);
        *slot = (*slot).max(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::label_indexed;
    use crate::semantics::Store;
    use crate::syntax::{parse_label, parse_program};
    use crate::transform::{peel, LoopPath};
    use crate::vm::{lower, vm_run};

    fn listing(text: &str) -> VmProgram {
        VmProgram::parse(text).unwrap()
    }

    #[test]
    fn straight_line_block() {
        let p = listing("0: emit _a<>\n1: assign x := 1\n2: assign x := 2\n3: assign x := 3\n4: emit _b<>\n5: halt");
        let k = compute_kappa(&p, &CostModel::default(), Mode::Strict).unwrap();
        assert_eq!(k.costs.get(&parse_label("_a<>").unwrap()), Some(3));
        assert_eq!(k.costs.get(&parse_label("_b<>").unwrap()), Some(0));
    }

    #[test]
    fn unlabelled_branch_is_imprecise() {
        // arms cost 2 and 5 (branch included on both)
        let p = listing(
            "0: emit _a<>\n1: branch 2 3 c\n2: jump 7\n3: assign x := 1\n4: assign x := 2\n5: assign x := 3\n6: jump 7\n7: emit _b<>\n8: halt",
        );
        let err = compute_kappa(&p, &CostModel::default(), Mode::Strict).unwrap_err();
        assert_eq!(
            err,
            Error::Imprecise {
                label: "_a<>".into(),
                min: 2,
                max: 5
            }
        );
        let k = compute_kappa(&p, &CostModel::default(), Mode::Sound).unwrap();
        assert_eq!(k.costs.get(&parse_label("_a<>").unwrap()), Some(5));
        let flagged: Vec<&BlockCost> = k.imprecise().collect();
        assert_eq!(flagged.len(), 1);
        assert_eq!(flagged[0].min_path, [0, 1, 2]);
        assert_eq!(flagged[0].max_path, [0, 1, 3, 4, 5, 6]);
    }

    #[test]
    fn soundness() {
        let bad = listing("0: emit _a<>\n1: assign x := 1\n2: jump 1\n3: halt");
        assert_eq!(check_soundness(&bad).cycles, [vec![1, 2]]);
        assert_eq!(
            compute_kappa(&bad, &CostModel::default(), Mode::Sound),
            Err(Error::Unsound(1))
        );
        let self_loop = listing("0: jump 0\n1: halt");
        assert_eq!(check_soundness(&self_loop).cycles, [vec![0]]);
        let src = parse_program(include_str!("../testdata/corpus/factorial_sum.imp")).unwrap();
        assert!(check_soundness(&lower(&label_indexed(&src).unwrap())).is_ok());
    }

    #[test]
    fn labelled_programs_are_precise_and_match_runs() {
        let src = parse_program(include_str!("../testdata/corpus/factorial_sum.imp")).unwrap();
        let prog = lower(&label_indexed(&src).unwrap());
        let model = CostModel::default();
        let k = compute_kappa(&prog, &model, Mode::Strict).unwrap();
        assert_eq!(k.entry, (0, 0));
        for n in 0..6 {
            let r = vm_run(
                &prog,
                Store::parse(&format!("n={n}")).unwrap(),
                100_000,
                &model,
            )
            .unwrap();
            let predicted: u64 = r
                .emitted_at
                .iter()
                .map(|&a| match &prog.instrs()[a] {
                    Instr::Emit(l) => k.costs.get(l).unwrap(),
                    _ => unreachable!(),
                })
                .sum();
            assert_eq!(predicted, r.cost);
        }
    }

    #[test]
    fn peeling_splits_costs_by_occurrence() {
        let src = parse_program("while i < n do { i := i + 1 }").unwrap();
        let labelled = label_indexed(&src).unwrap();
        let peeled = peel(&labelled, &"labelBody/seqL".parse::<LoopPath>().unwrap()).unwrap();
        let k = compute_kappa(&lower(&peeled), &CostModel::default(), Mode::Strict).unwrap();
        assert_eq!(k.costs.get(&parse_label("_a1<0>").unwrap()), Some(3));
        assert_eq!(k.costs.get(&parse_label("_a1<i0+1>").unwrap()), Some(4));
        let atoms = collapse_to_atoms(&k.costs);
        assert_eq!(atoms[&CostAtom::new("_a1").unwrap()], 4);
    }

    #[test]
    fn collapse_examples() {
        let mut m = BTreeMap::new();
        m.insert(parse_label("_a<0>").unwrap(), 4);
        m.insert(parse_label("_a<i0+1>").unwrap(), 7);
        m.insert(parse_label("_b<>").unwrap(), 2);
        let atoms = collapse_to_atoms(&CostMap(m));
        assert_eq!(atoms[&CostAtom::new("_a").unwrap()], 7);
        assert_eq!(atoms[&CostAtom::new("_b").unwrap()], 2);
    }

    #[test]
    fn text_and_json() {
        let p = listing("0: emit _a<>\n1: assign x := 1\n2: emit _b<>\n3: halt");
        let k = compute_kappa(&p, &CostModel::default(), Mode::Strict).unwrap();
        assert_eq!(k.costs.to_string(), "_a<> = 1\n_b<> = 0\n");
        let j = k.to_json();
        assert_eq!(j["labels"][0]["label"], "_a<>");
        assert_eq!(j["labels"][0]["precise"], true);
    }
}
