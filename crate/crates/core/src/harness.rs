//! End-to-end verification over random programs and transformation scripts.
//!
//! One trial generates a program, labels it both ways, applies a random
//! script to the indexed labelling and then checks, in order: non-overlap
//! of the result, trace agreement between source, transformed program and
//! compiled code, strict static costs, the dependent-cost sweep, exactness
//! of indexed instrumentation and soundness of plain instrumentation.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{collapse_to_atoms, compute_kappa, CostMap, Mode};
use crate::dependent::{build_dependent, simplify, DependentCost, SimplifyOptions};
use crate::error::{Error, Result};
use crate::gen::{gen_program, gen_script, gen_store, rng_for, GenParams};
use crate::instrument::{instrument_indexed, instrument_plain};
use crate::label::{label_indexed, label_plain};
use crate::semantics::{run, Store, DEFAULT_FUEL};
use crate::syntax::{pretty_print, ConstantIndexing, CostAtom, IndexedLabel};
use crate::transform::{apply_script, check_non_overlap};
use crate::vm::{lower, vm_run, CostModel};

/// Side of each sweep cube: index values `0..SWEEP`.
pub const SWEEP: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Generate,
    Transform,
    NonOverlap,
    TracePreservation,
    Kappa,
    DependentCost,
    Instrumentation,
    PlainSoundness,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Generate => "generate",
            Check::Transform => "transform",
            Check::NonOverlap => "non-overlap",
            Check::TracePreservation => "trace preservation",
            Check::Kappa => "strict cost analysis",
            Check::DependentCost => "dependent cost sweep",
            Check::Instrumentation => "instrumented cost",
            Check::PlainSoundness => "plain soundness",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub trial: u64,
    pub seed: u64,
    pub check: Check,
    pub detail: String,
    pub program: String,
    pub script: String,
    pub store: Option<String>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trial {} (seed {}) failed {}: {}",
            self.trial, self.seed, self.check, self.detail
        )?;
        if let Some(s) = &self.store {
            writeln!(f, "store: {s}")?;
        }
        writeln!(f, "program:\n{}", self.program)?;
        write!(f, "script:\n{}", self.script)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialStats {
    pub steps: usize,
    pub runs: usize,
    pub occurrences: usize,
    /// Runs where plain instrumentation strictly exceeded the actual cost.
    pub plain_over: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyConfig {
    pub params: GenParams,
    pub trials: u64,
    pub stores_per_trial: usize,
    pub fuel: u64,
    pub costs: CostModel,
}

impl Default for VerifyConfig {
    fn default() -> VerifyConfig {
        VerifyConfig {
            params: GenParams::default(),
            trials: 100,
            stores_per_trial: 3,
            fuel: DEFAULT_FUEL,
            costs: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub trials: u64,
    pub passed: u64,
    pub failed: u64,
    pub script_steps: usize,
    pub runs: usize,
    pub occurrences: usize,
    pub plain_over: usize,
    pub first_failure: Option<Counterexample>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.failed == 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials: {}", self.trials)?;
        writeln!(f, "passed: {}", self.passed)?;
        writeln!(f, "failed: {}", self.failed)?;
        writeln!(f, "script steps: {}", self.script_steps)?;
        writeln!(f, "runs: {}", self.runs)?;
        writeln!(f, "occurrences swept: {}", self.occurrences)?;
        writeln!(f, "plain over-approximations: {}", self.plain_over)?;
        if let Some(c) = &self.first_failure {
            writeln!(f, "first counterexample:\n{c}")?;
        }
        Ok(())
    }
}

/// Dependent costs of `atoms` from the static costs of their occurrences.
pub fn dependent_costs<'a>(
    kmap: &CostMap,
    atoms: impl IntoIterator<Item = &'a CostAtom>,
    simplified: bool,
) -> Result<BTreeMap<CostAtom, DependentCost>> {
    atoms
        .into_iter()
        .map(|a| {
            let k = build_dependent(a, kmap)?;
            let k = if simplified {
                simplify(&k, SimplifyOptions::default())
            } else {
                k
            };
            Ok((a.clone(), k))
        })
        .collect()
}

fn cube(depth: usize) -> impl Iterator<Item = Vec<u64>> {
    let total = SWEEP.pow(depth as u32);
    (0..total).map(move |mut n| {
        (0..depth)
            .map(|_| {
                let v = n % SWEEP;
                n /= SWEEP;
                v
            })
            .collect()
    })
}

/// For each occurrence `α⟨I⟩` and each `C` in the sweep cube, checks that
/// `κ(α)` at `I|_C` equals `κ(α⟨I⟩)`. Returns the number of occurrences.
pub fn check_dependent_sweep(
    kmap: &CostMap,
    dependent: &BTreeMap<CostAtom, DependentCost>,
) -> std::result::Result<usize, String> {
    let mut count = 0;
    for (label, cost) in kmap.iter() {
        let k = dependent
            .get(&label.atom)
            .ok_or_else(|| format!("no dependent cost for {}", label.atom))?;
        for values in cube(label.indexing.len()) {
            let c = ConstantIndexing::from_values(&values);
            let at = sweep_point(label, &c).map_err(|e| format!("{label} at {values:?}: {e}"))?;
            let got = k
                .eval(&at)
                .map_err(|e| format!("{label} at {values:?}: {e}"))?;
            if got != cost {
                return Err(format!(
                    "{} at {values:?} gives {got}, expected {cost} from {label}",
                    label.atom
                ));
            }
        }
        count += 1;
    }
    Ok(count)
}

fn sweep_point(label: &IndexedLabel, c: &ConstantIndexing) -> Result<ConstantIndexing> {
    let evaluated = label.eval(c)?;
    let constants = evaluated
        .indexing
        .constants()
        .ok_or_else(|| Error::UndefinedEvaluation(evaluated.to_string()))?;
    Ok(ConstantIndexing::from_values(&constants))
}

struct Trial<'a> {
    cfg: &'a VerifyConfig,
    trial: u64,
    seed: u64,
    program: String,
    script: String,
}

impl Trial<'_> {
    fn fail(
        &self,
        check: Check,
        detail: impl fmt::Display,
        store: Option<&Store>,
    ) -> Counterexample {
        Counterexample {
            trial: self.trial,
            seed: self.seed,
            check,
            detail: detail.to_string(),
            program: self.program.clone(),
            script: self.script.clone(),
            store: store.map(Store::to_string),
        }
    }
}

/// Runs one trial; trial `t` of a run seeded with `s` uses seed `s + t`.
pub fn run_trial(
    cfg: &VerifyConfig,
    trial: u64,
) -> std::result::Result<TrialStats, Counterexample> {
    let seed = cfg.params.seed.wrapping_add(trial);
    let mut rng = rng_for(seed);
    let source = gen_program(&mut rng, &cfg.params);
    let mut t = Trial {
        cfg,
        trial,
        seed,
        program: pretty_print(&source),
        script: String::new(),
    };
    let plain = label_plain(&source).map_err(|e| t.fail(Check::Generate, e, None))?;
    let indexed = label_indexed(&source).map_err(|e| t.fail(Check::Generate, e, None))?;
    let script = gen_script(&mut rng, &indexed).map_err(|e| t.fail(Check::Transform, e, None))?;
    t.script = script.to_string();
    let transformed =
        apply_script(&indexed, &script).map_err(|e| t.fail(Check::Transform, e, None))?;

    let overlap = check_non_overlap(&transformed);
    if !overlap.is_ok() {
        return Err(t.fail(Check::NonOverlap, overlap, None));
    }

    let compiled = lower(&transformed);
    let kappa = compute_kappa(&compiled, &t.cfg.costs, Mode::Strict)
        .map_err(|e| t.fail(Check::Kappa, e, None))?;
    let atoms: Vec<CostAtom> = indexed
        .labels()
        .into_iter()
        .map(|l| l.atom.clone())
        .collect();
    let raw = dependent_costs(&kappa.costs, &atoms, false)
        .map_err(|e| t.fail(Check::DependentCost, e, None))?;
    let simplified = dependent_costs(&kappa.costs, &atoms, true)
        .map_err(|e| t.fail(Check::DependentCost, e, None))?;
    let occurrences = check_dependent_sweep(&kappa.costs, &raw)
        .map_err(|e| t.fail(Check::DependentCost, e, None))?;
    check_dependent_sweep(&kappa.costs, &simplified)
        .map_err(|e| t.fail(Check::DependentCost, format!("simplified: {e}"), None))?;

    let instrumented = instrument_indexed(&indexed, &simplified)
        .map_err(|e| t.fail(Check::Instrumentation, e, None))?;
    let mut plain_costs = collapse_to_atoms(&kappa.costs);
    for a in &atoms {
        plain_costs.entry(a.clone()).or_insert(0);
    }
    let plain_instrumented = instrument_plain(&plain, &plain_costs)
        .map_err(|e| t.fail(Check::PlainSoundness, e, None))?;
    let compiled_plain = lower(&plain);

    let mut stats = TrialStats {
        steps: script.0.len(),
        runs: 0,
        occurrences,
        plain_over: 0,
    };
    let fuel = t.cfg.fuel;
    for _ in 0..t.cfg.stores_per_trial {
        let store = gen_store(&mut rng, &t.cfg.params);
        let s = Some(&store);
        let trace_fail = |e: Error| t.fail(Check::TracePreservation, e, s);
        let reference = run(&source, store.clone(), fuel).map_err(trace_fail)?;
        let a = run(&indexed, store.clone(), fuel).map_err(trace_fail)?;
        let b = run(&transformed, store.clone(), fuel).map_err(trace_fail)?;
        let c = vm_run(&compiled, store.clone(), fuel, &t.cfg.costs).map_err(trace_fail)?;
        let p = run(&plain, store.clone(), fuel).map_err(trace_fail)?;
        let q = vm_run(&compiled_plain, store.clone(), fuel, &t.cfg.costs).map_err(trace_fail)?;
        if a.trace != b.trace {
            return Err(t.fail(
                Check::TracePreservation,
                "source and transformed traces differ",
                s,
            ));
        }
        if b.trace != c.trace {
            return Err(t.fail(
                Check::TracePreservation,
                "transformed and compiled traces differ",
                s,
            ));
        }
        if p.trace != q.trace {
            return Err(t.fail(
                Check::TracePreservation,
                "plain source and compiled traces differ",
                s,
            ));
        }
        let atoms_of = |tr: &[IndexedLabel]| tr.iter().map(|l| l.atom.clone()).collect::<Vec<_>>();
        if atoms_of(&p.trace) != atoms_of(&a.trace) {
            return Err(t.fail(
                Check::TracePreservation,
                "plain and indexed labellings emit different atoms",
                s,
            ));
        }
        for (what, got) in [
            ("indexed", &a.store),
            ("transformed", &b.store),
            ("compiled", &c.store),
        ] {
            if *got != reference.store {
                return Err(t.fail(
                    Check::TracePreservation,
                    format!("{what} final store differs"),
                    s,
                ));
            }
        }

        let (istore, icost) = instrumented
            .run(store.clone(), fuel)
            .map_err(|e| t.fail(Check::Instrumentation, e, s))?;
        if icost != c.cost {
            return Err(t.fail(
                Check::Instrumentation,
                format!("instrumented cost {icost}, compiled cost {}", c.cost),
                s,
            ));
        }
        if istore.user_view() != reference.store {
            return Err(t.fail(
                Check::Instrumentation,
                "instrumentation changed user variables",
                s,
            ));
        }
        let (_, pcost) = plain_instrumented
            .run(store.clone(), fuel)
            .map_err(|e| t.fail(Check::PlainSoundness, e, s))?;
        if pcost < c.cost {
            return Err(t.fail(
                Check::PlainSoundness,
                format!("plain estimate {pcost} below actual {}", c.cost),
                s,
            ));
        }
        if pcost > c.cost {
            stats.plain_over += 1;
        }
        stats.runs += 1;
    }
    Ok(stats)
}

/// Runs all trials in parallel; the report is independent of scheduling.
pub fn verify(cfg: &VerifyConfig) -> VerifyReport {
    let results: Vec<_> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect();
    let mut report = VerifyReport {
        trials: cfg.trials,
        passed: 0,
        failed: 0,
        script_steps: 0,
        runs: 0,
        occurrences: 0,
        plain_over: 0,
        first_failure: None,
    };
    for r in results {
        match r {
            Ok(s) => {
                report.passed += 1;
                report.script_steps += s.steps;
                report.runs += s.runs;
                report.occurrences += s.occurrences;
                report.plain_over += s.plain_over;
            }
            Err(c) => {
                report.failed += 1;
                report.first_failure.get_or_insert(c);
            }
        }
    }
    report
}
