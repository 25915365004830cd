//! Source instrumentation: replaces every label by an increment of the cost
//! variable, so that running the program computes its own cost.

use std::collections::BTreeMap;

use crate::dependent::DependentCost;
use crate::error::{Error, Result};
use crate::semantics::{run, Store};
use crate::syntax::{BinOp, CostAtom, Expr, Ident, IndexId, Indexing, Stmt};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentedProgram {
    pub program: Stmt,
    pub cost_var: Ident,
    pub index_vars: Vec<Ident>,
}

impl InstrumentedProgram {
    /// Runs the program and returns the final store with the accumulated cost.
    pub fn run(&self, store: Store, fuel: u64) -> Result<(Store, u64)> {
        let r = run(&self.program, store, fuel)?;
        let cost = u64::try_from(r.store.get(&self.cost_var)).map_err(|_| Error::Overflow)?;
        Ok((r.store, cost))
    }
}

fn add_cost(amount: Expr) -> Stmt {
    let c = Ident::cost_var();
    Stmt::assign(&c, Expr::binary(BinOp::Add, Expr::var(&c), amount))
}

/// `I(α: S) = c := c + κ(α); I(S)` over a plainly labelled program. Loop
/// indexes, if any, are dropped.
pub fn instrument_plain(s: &Stmt, costs: &BTreeMap<CostAtom, u64>) -> Result<InstrumentedProgram> {
    fn go(s: &Stmt, costs: &BTreeMap<CostAtom, u64>) -> Result<Stmt> {
        Ok(match s {
            Stmt::Skip | Stmt::Assign(..) => s.clone(),
            Stmt::Seq(a, b) => Stmt::seq(go(a, costs)?, go(b, costs)?),
            Stmt::If(c, t, e) => Stmt::if_(c.clone(), go(t, costs)?, go(e, costs)?),
            Stmt::While { guard, body, .. } => Stmt::while_(guard.clone(), go(body, costs)?, None),
            Stmt::Labelled(l, body) => {
                if !l.indexing.is_empty() {
                    return Err(Error::NotPlainlyLabelled(l.to_string()));
                }
                let k = costs
                    .get(&l.atom)
                    .ok_or_else(|| Error::MissingCost(l.atom.to_string()))?;
                Stmt::seq(add_cost(Expr::Int(*k as i64)), go(body, costs)?)
            }
        })
    }
    Ok(InstrumentedProgram {
        program: go(s, costs)?,
        cost_var: Ident::cost_var(),
        index_vars: Vec::new(),
    })
}

/// `I^ι` over a source-labelled program: indexed loops keep their counters
/// in `__idx<k>` variables and each label adds its dependent cost evaluated
/// on them.
pub fn instrument_indexed(
    s: &Stmt,
    costs: &BTreeMap<CostAtom, DependentCost>,
) -> Result<InstrumentedProgram> {
    struct Cx<'a> {
        costs: &'a BTreeMap<CostAtom, DependentCost>,
        used: Vec<IndexId>,
    }

    fn go(s: &Stmt, depth: u32, cx: &mut Cx<'_>) -> Result<Stmt> {
        Ok(match s {
            Stmt::Skip | Stmt::Assign(..) => s.clone(),
            Stmt::Seq(a, b) => Stmt::seq(go(a, depth, cx)?, go(b, depth, cx)?),
            Stmt::If(c, t, e) => Stmt::if_(c.clone(), go(t, depth, cx)?, go(e, depth, cx)?),
            Stmt::While {
                guard,
                body,
                index: None,
            } => Stmt::while_(guard.clone(), go(body, depth, cx)?, None),
            Stmt::While {
                guard,
                body,
                index: Some(k),
            } => {
                if k.0 != depth {
                    return Err(Error::NotSourceLabelled(format!(
                        "loop {k} at depth {depth}"
                    )));
                }
                if !cx.used.contains(k) {
                    cx.used.push(*k);
                }
                let var = Ident::index_var(*k);
                let inc = Stmt::assign(
                    &var,
                    Expr::binary(BinOp::Add, Expr::var(&var), Expr::Int(1)),
                );
                Stmt::seq(
                    Stmt::assign(&var, Expr::Int(0)),
                    Stmt::while_(
                        guard.clone(),
                        Stmt::seq(go(body, depth + 1, cx)?, inc),
                        None,
                    ),
                )
            }
            Stmt::Labelled(l, body) => {
                if l.indexing != Indexing::identity(depth) {
                    return Err(Error::NotSourceLabelled(l.to_string()));
                }
                let k = cx
                    .costs
                    .get(&l.atom)
                    .ok_or_else(|| Error::MissingCost(l.atom.to_string()))?;
                let amount = k.to_expr(&|k| Expr::var(&Ident::index_var(k)));
                Stmt::seq(add_cost(amount), go(body, depth, cx)?)
            }
        })
    }

    let mut cx = Cx {
        costs,
        used: Vec::new(),
    };
    let program = go(s, 0, &mut cx)?;
    cx.used.sort();
    Ok(InstrumentedProgram {
        program,
        cost_var: Ident::cost_var(),
        index_vars: cx.used.into_iter().map(Ident::index_var).collect(),
    })
}
