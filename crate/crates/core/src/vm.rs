//! A flat instruction language with cost-label and loop-index
//! pseudo-instructions, the lowering into it, and its interpreter.
//!
//! Emit instructions keep the static label written in the source. The VM
//! evaluates it against its index registers when the instruction executes,
//! which is where `ind_reset` and `ind_inc` matter.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantics::Store;
use crate::syntax::{
    parse_expr, parse_label, ConstantIndexing, Expr, Ident, IndexId, IndexedLabel, Stmt,
};

pub type Addr = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Emit(IndexedLabel),
    IndReset(IndexId),
    IndInc(IndexId),
    Assign(Ident, Expr),
    Branch {
        cond: Expr,
        then: Addr,
        otherwise: Addr,
    },
    Jump(Addr),
    Halt,
}

impl Instr {
    pub fn opcode(&self) -> &'static str {
        match self {
            Instr::Emit(_) => "emit",
            Instr::IndReset(_) => "ind_reset",
            Instr::IndInc(_) => "ind_inc",
            Instr::Assign(..) => "assign",
            Instr::Branch { .. } => "branch",
            Instr::Jump(_) => "jump",
            Instr::Halt => "halt",
        }
    }

    /// Control-flow successors of the instruction at `pc`.
    pub fn successors(&self, pc: Addr) -> Vec<Addr> {
        match self {
            Instr::Branch {
                then, otherwise, ..
            } => vec![*then, *otherwise],
            Instr::Jump(t) => vec![*t],
            Instr::Halt => vec![],
            _ => vec![pc + 1],
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Emit(l) => write!(f, "emit {l}"),
            Instr::IndReset(k) => write!(f, "ind_reset {}", k.0),
            Instr::IndInc(k) => write!(f, "ind_inc {}", k.0),
            Instr::Assign(x, e) => write!(f, "assign {x} := {e}"),
            Instr::Branch {
                cond,
                then,
                otherwise,
            } => write!(f, "branch {then} {otherwise} {cond}"),
            Instr::Jump(t) => write!(f, "jump {t}"),
            Instr::Halt => f.write_str("halt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmProgram {
    instrs: Vec<Instr>,
}

impl VmProgram {
    /// Checks that targets are in range and that there is exactly one
    /// `halt`.
    pub fn new(instrs: Vec<Instr>) -> Result<VmProgram> {
        let n = instrs.len();
        let halts = instrs.iter().filter(|i| **i == Instr::Halt).count();
        if halts != 1 {
            return Err(Error::MalformedProgram(format!(
                "expected exactly one halt, found {halts}"
            )));
        }
        for (pc, i) in instrs.iter().enumerate() {
            if let Some(bad) = i.successors(pc).into_iter().find(|&t| t >= n) {
                return Err(Error::MalformedProgram(format!(
                    "instruction {pc} targets {bad}, outside 0..{n}"
                )));
            }
        }
        Ok(VmProgram { instrs })
    }

    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Addresses reachable from the entry.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.instrs.len()];
        let mut stack = vec![0];
        while let Some(pc) = stack.pop() {
            if pc >= seen.len() || seen[pc] {
                continue;
            }
            seen[pc] = true;
            stack.extend(self.instrs[pc].successors(pc));
        }
        seen
    }

    /// Parses the listing format, `addr: opcode args` per line. Blank lines
    /// are skipped and addresses must count up from 0.
    pub fn parse(text: &str) -> Result<VmProgram> {
        let mut instrs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: n + 1,
                col: 1,
                msg,
            };
            let (addr, rest) = line
                .split_once(':')
                .ok_or_else(|| err("expected `addr: instruction`".into()))?;
            if addr.trim().parse::<Addr>().ok() != Some(instrs.len()) {
                return Err(err(format!("expected address {}", instrs.len())));
            }
            let rest = rest.trim();
            let (op, args) = rest.split_once(' ').unwrap_or((rest, ""));
            let args = args.trim();
            let num = |s: &str| {
                s.parse::<Addr>()
                    .map_err(|_| err(format!("invalid number `{s}`")))
            };
            let at_line = |e: Error| match e {
                Error::Parse { col, msg, .. } => Error::Parse {
                    line: n + 1,
                    col,
                    msg,
                },
                other => other,
            };
            let instr = match op {
                "emit" => Instr::Emit(parse_label(args).map_err(at_line)?),
                "ind_reset" => Instr::IndReset(IndexId(num(args)? as u32)),
                "ind_inc" => Instr::IndInc(IndexId(num(args)? as u32)),
                "assign" => {
                    let (x, e) = args
                        .split_once(":=")
                        .ok_or_else(|| err("expected `x := expr`".into()))?;
                    Instr::Assign(Ident::any(x.trim())?, parse_expr(e).map_err(at_line)?)
                }
                "branch" => {
                    let mut parts = args.splitn(3, ' ');
                    let then = num(parts.next().unwrap_or(""))?;
                    let otherwise = num(parts.next().unwrap_or(""))?;
                    let cond = parse_expr(parts.next().unwrap_or("")).map_err(at_line)?;
                    Instr::Branch {
                        cond,
                        then,
                        otherwise,
                    }
                }
                "jump" => Instr::Jump(num(args)?),
                "halt" => Instr::Halt,
                other => return Err(err(format!("unknown opcode `{other}`"))),
            };
            instrs.push(instr);
        }
        VmProgram::new(instrs)
    }
}

impl fmt::Display for VmProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pc, i) in self.instrs.iter().enumerate() {
            writeln!(f, "{pc}: {i}")?;
        }
        Ok(())
    }
}

struct Lowerer {
    code: Vec<Instr>,
}

impl Lowerer {
    fn push(&mut self, i: Instr) -> Addr {
        self.code.push(i);
        self.code.len() - 1
    }

    fn here(&self) -> Addr {
        self.code.len()
    }

    fn patch_branch(&mut self, at: Addr, t: Addr, e: Addr) {
        if let Instr::Branch {
            then, otherwise, ..
        } = &mut self.code[at]
        {
            *then = t;
            *otherwise = e;
        }
    }

    fn branch(&mut self, cond: &Expr) -> Addr {
        self.push(Instr::Branch {
            cond: cond.clone(),
            then: 0,
            otherwise: 0,
        })
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Skip => {}
            Stmt::Seq(a, b) => {
                self.stmt(a);
                self.stmt(b);
            }
            Stmt::Assign(x, e) => {
                self.push(Instr::Assign(x.clone(), e.clone()));
            }
            Stmt::If(c, t, e) => {
                let br = self.branch(c);
                let then_start = self.here();
                self.stmt(t);
                if **e == Stmt::Skip {
                    let join = self.here();
                    self.patch_branch(br, then_start, join);
                } else {
                    let jump = self.push(Instr::Jump(0));
                    let else_start = self.here();
                    self.stmt(e);
                    let join = self.here();
                    self.code[jump] = Instr::Jump(join);
                    self.patch_branch(br, then_start, else_start);
                }
            }
            Stmt::While { guard, body, index } => {
                if let Some(k) = index {
                    self.push(Instr::IndReset(*k));
                }
                let head = self.branch(guard);
                let body_start = self.here();
                self.stmt(body);
                if let Some(k) = index {
                    self.push(Instr::IndInc(*k));
                }
                self.push(Instr::Jump(head));
                let exit = self.here();
                self.patch_branch(head, body_start, exit);
            }
            Stmt::Labelled(l, body) => {
                self.push(Instr::Emit(l.clone()));
                self.stmt(body);
            }
        }
    }
}

/// Redirects the false edge of a branch past later branches on the same
/// guard. Along the skipped path only jumps and index updates execute, so
/// the store is unchanged and the guard is known to be false again. This is
/// what keeps the guarded copies made by unrolling from merging the exit and
/// the back edge into one block.
fn thread_false_edges(code: &mut [Instr]) {
    for pc in 0..code.len() {
        let (cond, start) = match &code[pc] {
            Instr::Branch {
                cond, otherwise, ..
            } => (cond.clone(), *otherwise),
            _ => continue,
        };
        let mut visited = HashSet::new();
        let mut at = start;
        let mut target = None;
        while visited.insert(at) {
            match &code[at] {
                Instr::Jump(t) => at = *t,
                Instr::IndInc(_) | Instr::IndReset(_) => at += 1,
                Instr::Branch {
                    cond: c, otherwise, ..
                } if *c == cond => {
                    target = Some(*otherwise);
                    at = *otherwise;
                }
                _ => break,
            }
        }
        if let (Some(t), Instr::Branch { otherwise, .. }) = (target, &mut code[pc]) {
            *otherwise = t;
        }
    }
}

/// Drops instructions that cannot be reached from the entry and renumbers
/// the targets.
fn remove_unreachable(code: Vec<Instr>) -> Vec<Instr> {
    let prog = VmProgram { instrs: code };
    let live = prog.reachable();
    if live.iter().all(|&b| b) {
        return prog.instrs;
    }
    let mut remap = vec![0; live.len()];
    let mut next = 0;
    for (pc, &l) in live.iter().enumerate() {
        remap[pc] = next;
        if l {
            next += 1;
        }
    }
    prog.instrs
        .into_iter()
        .zip(live)
        .filter(|(_, l)| *l)
        .map(|(i, _)| match i {
            Instr::Branch {
                cond,
                then,
                otherwise,
            } => Instr::Branch {
                cond,
                then: remap[then],
                otherwise: remap[otherwise],
            },
            Instr::Jump(t) => Instr::Jump(remap[t]),
            other => other,
        })
        .collect()
}

/// Structural lowering. An indexed loop becomes
/// `ind_reset k; head: branch body exit; body; ind_inc k; jump head`, a
/// conditional becomes a branch whose arms meet at a join point, and a
/// labelled statement emits its label before its body. A single `halt`
/// ends the program.
pub fn lower(s: &Stmt) -> VmProgram {
    let mut l = Lowerer { code: Vec::new() };
    l.stmt(s);
    l.push(Instr::Halt);
    let mut code = l.code;
    thread_false_edges(&mut code);
    VmProgram::new(remove_unreachable(code)).expect("lowering produces well-formed code")
}

/// Cost per executed instruction, keyed by opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub emit: u64,
    pub ind_reset: u64,
    pub ind_inc: u64,
    pub assign: u64,
    pub branch: u64,
    pub jump: u64,
    pub halt: u64,
}

impl Default for CostModel {
    fn default() -> CostModel {
        CostModel {
            emit: 0,
            ind_reset: 1,
            ind_inc: 1,
            assign: 1,
            branch: 1,
            jump: 1,
            halt: 0,
        }
    }
}

impl CostModel {
    pub fn cost(&self, i: &Instr) -> u64 {
        match i {
            Instr::Emit(_) => self.emit,
            Instr::IndReset(_) => self.ind_reset,
            Instr::IndInc(_) => self.ind_inc,
            Instr::Assign(..) => self.assign,
            Instr::Branch { .. } => self.branch,
            Instr::Jump(_) => self.jump,
            Instr::Halt => self.halt,
        }
    }

    pub fn from_json(text: &str) -> Result<CostModel, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// What one VM step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VmEvent {
    Executed,
    Emitted(IndexedLabel),
    Halted,
}

/// A running VM: program counter, store and index registers.
#[derive(Debug, Clone)]
pub struct Vm<'a> {
    program: &'a VmProgram,
    pc: Addr,
    store: Store,
    registers: ConstantIndexing,
    halted: bool,
}

impl<'a> Vm<'a> {
    pub fn new(program: &'a VmProgram, store: Store) -> Vm<'a> {
        Vm {
            program,
            pc: 0,
            store,
            registers: ConstantIndexing::new(),
            halted: false,
        }
    }

    pub fn pc(&self) -> Addr {
        self.pc
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Snapshot of the loop-index registers.
    pub fn registers(&self) -> &ConstantIndexing {
        &self.registers
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Executes the instruction at the program counter.
    pub fn step(&mut self) -> Result<VmEvent> {
        if self.halted {
            return Ok(VmEvent::Halted);
        }
        let instr = &self.program.instrs[self.pc];
        let mut next = self.pc + 1;
        let mut event = VmEvent::Executed;
        match instr {
            Instr::Emit(l) => {
                let v = l
                    .eval(&self.registers)
                    .map_err(|e| Error::Stuck(e.to_string()))?;
                event = VmEvent::Emitted(v);
            }
            Instr::IndReset(k) => self.registers.reset(*k),
            Instr::IndInc(k) => self.registers.increment(*k)?,
            Instr::Assign(x, e) => {
                let v = e.eval(&self.store.lookup())?;
                self.store.set(x.clone(), v);
            }
            Instr::Branch {
                cond,
                then,
                otherwise,
            } => {
                next = if cond.eval(&self.store.lookup())? != 0 {
                    *then
                } else {
                    *otherwise
                };
            }
            Instr::Jump(t) => next = *t,
            Instr::Halt => {
                self.halted = true;
                event = VmEvent::Halted;
            }
        }
        if !self.halted {
            self.pc = next;
        }
        Ok(event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmRunResult {
    pub store: Store,
    pub trace: Vec<IndexedLabel>,
    /// Address of the emit instruction behind each trace entry.
    pub emitted_at: Vec<Addr>,
    pub cost: u64,
    pub steps: u64,
}

pub fn vm_run(p: &VmProgram, store: Store, fuel: u64, costs: &CostModel) -> Result<VmRunResult> {
    let mut vm = Vm::new(p, store);
    let mut trace = Vec::new();
    let mut emitted_at = Vec::new();
    let mut cost: u64 = 0;
    let mut steps = 0;
    while !vm.is_halted() {
        if steps == fuel {
            return Err(Error::FuelExhausted(fuel));
        }
        steps += 1;
        let pc = vm.pc();
        cost = cost
            .checked_add(costs.cost(&p.instrs[pc]))
            .ok_or(Error::Overflow)?;
        if let VmEvent::Emitted(l) = vm.step()? {
            trace.push(l);
            emitted_at.push(pc);
        }
    }
    Ok(VmRunResult {
        store: vm.store,
        trace,
        emitted_at,
        cost,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::label_indexed;
    use crate::semantics::{run, DEFAULT_FUEL};
    use crate::syntax::parse_program;

    const FACTORIAL: &str = include_str!("../testdata/corpus/factorial_sum.imp");

    fn p(src: &str) -> Stmt {
        parse_program(src).unwrap()
    }

    #[test]
    fn trivial_lowering() {
        let prog = lower(&p("_a<>: skip"));
        assert_eq!(prog.to_string(), "0: emit _a<>\n1: halt\n");
        let halt = VmProgram::new(vec![Instr::Halt]).unwrap();
        let r = vm_run(&halt, Store::new(), 10, &CostModel::default()).unwrap();
        assert_eq!((r.cost, r.trace.len()), (0, 0));
    }

    #[test]
    fn all_ones_cost() {
        let ones = CostModel {
            emit: 1,
            ind_reset: 1,
            ind_inc: 1,
            assign: 1,
            branch: 1,
            jump: 1,
            halt: 1,
        };
        let prog = VmProgram::parse("0: assign x := 1\n1: assign y := 2\n2: halt\n").unwrap();
        assert_eq!(vm_run(&prog, Store::new(), 10, &ones).unwrap().cost, 3);
    }

    #[test]
    fn indexed_loop_shape() {
        let prog = lower(&p("@i0 while x < 2 do { _a<i0>: x := x + 1 }"));
        assert_eq!(
            prog.to_string(),
            "0: ind_reset 0\n1: branch 2 6 x < 2\n2: emit _a<i0>\n3: assign x := x + 1\n4: ind_inc 0\n5: jump 1\n6: halt\n"
        );
    }

    #[test]
    fn conditional_shapes() {
        let prog = lower(&p("if c then { x := 1 } else { x := 2 }"));
        assert_eq!(
            prog.to_string(),
            "0: branch 1 3 c\n1: assign x := 1\n2: jump 4\n3: assign x := 2\n4: halt\n"
        );
        let prog = lower(&p("if c then { x := 1 }"));
        assert_eq!(
            prog.to_string(),
            "0: branch 1 2 c\n1: assign x := 1\n2: halt\n"
        );
    }

    #[test]
    fn unrolled_guards_are_threaded() {
        let s = p(
            "@i0 while x < 5 do { _a<2*i0>: x := x + 1; if x < 5 then { _a<2*i0+1>: x := x + 1 } }",
        );
        let prog = lower(&s);
        // the copy's guard exits straight to the loop exit
        let text = prog.to_string();
        assert!(
            text.contains("3: assign x := x + 1\n4: branch 5 9 x < 5"),
            "{text}"
        );
        assert!(prog.reachable().iter().all(|&b| b));
        for x in 0..7 {
            let store = Store::parse(&format!("x={x}")).unwrap();
            let a = run(&s, store.clone(), DEFAULT_FUEL).unwrap();
            let b = vm_run(&prog, store, DEFAULT_FUEL, &CostModel::default()).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.store, b.store);
        }
    }

    #[test]
    fn factorial_trace_through_vm() {
        let s = label_indexed(&p(FACTORIAL)).unwrap();
        let prog = lower(&s);
        let store = Store::parse("n=3").unwrap();
        let r = vm_run(&prog, store.clone(), DEFAULT_FUEL, &CostModel::default()).unwrap();
        let got: Vec<String> = r.trace.iter().map(IndexedLabel::compact).collect();
        assert_eq!(
            got.join(" "),
            "_L0<> _a1<0> _b2<0> _a1<1> _a2<1,0> _b2<1> _a1<2> _a2<2,0> _a2<2,1> _b2<2> _b1<>"
        );
        assert_eq!(r.store, run(&s, store, DEFAULT_FUEL).unwrap().store);
        assert_eq!(VmProgram::parse(&prog.to_string()).unwrap(), prog);
    }

    #[test]
    fn registers_follow_index_instructions() {
        let prog =
            VmProgram::parse("0: ind_reset 1\n1: ind_reset 0\n2: ind_inc 0\n3: ind_inc 0\n4: halt")
                .unwrap();
        let mut vm = Vm::new(&prog, Store::new());
        vm.step().unwrap();
        assert_eq!(vm.registers().get(IndexId(1)), Some(0));
        for _ in 0..3 {
            vm.step().unwrap();
        }
        assert_eq!(vm.registers().get(IndexId(0)), Some(2));
    }

    #[test]
    fn malformed_listings() {
        assert!(VmProgram::parse("0: jump 3\n1: halt").is_err());
        assert!(VmProgram::parse("0: assign x := 1").is_err());
        assert!(VmProgram::parse("1: halt").is_err());
        assert!(matches!(
            VmProgram::parse("0: frob\n1: halt"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn cost_model_json() {
        let m = CostModel::from_json(r#"{"emit": 2, "jump": 0}"#).unwrap();
        assert_eq!((m.emit, m.jump, m.assign), (2, 0, 1));
        assert!(CostModel::from_json(r#"{"nop": 1}"#).is_err());
    }

    #[test]
    fn fuel_and_stuck() {
        let spin = VmProgram::parse("0: jump 0\n1: halt").unwrap();
        assert_eq!(
            vm_run(&spin, Store::new(), 50, &CostModel::default()),
            Err(Error::FuelExhausted(50))
        );
        let stuck = VmProgram::parse("0: emit _a<i0>\n1: halt").unwrap();
        assert!(matches!(
            vm_run(&stuck, Store::new(), 50, &CostModel::default()),
            Err(Error::Stuck(_))
        ));
    }
}
