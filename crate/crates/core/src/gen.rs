//! Random terminating programs and transformation scripts.
//!
//! Every generated loop counts a fresh counter up to a small constant or to
//! the input `n`, and nothing else assigns the counter, so every run halts.
//! Values flowing through products or sums of two variables are reduced
//! modulo a constant to keep arithmetic far from overflow.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::semantics::Store;
use crate::syntax::{BinOp, Expr, Ident, Stmt};
use crate::transform::{
    apply_step, list_indexed_loops, TransformOp, TransformScript, TransformStep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    /// Maximum statement nesting.
    pub max_depth: u32,
    pub max_loop_nesting: u32,
    /// Number of ordinary variables `x0..`.
    pub var_pool: u32,
    /// Largest constant loop bound.
    pub max_bound: i64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> GenParams {
        GenParams {
            max_depth: 4,
            max_loop_nesting: 3,
            var_pool: 3,
            max_bound: 4,
            seed: 0,
        }
    }
}

/// Largest value of `n` used by generated stores.
pub const MAX_INPUT: i64 = 4;

const MODULUS: i64 = 97;

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Gen<'a, R> {
    rng: &'a mut R,
    params: GenParams,
    counters: u32,
}

fn var(name: String) -> Expr {
    Expr::Var(Ident::new(name).expect("generated names are valid"))
}

impl<R: Rng> Gen<'_, R> {
    fn pool_var(&mut self) -> Ident {
        let k = self.rng.gen_range(0..self.params.var_pool.max(1));
        Ident::new(format!("x{k}")).expect("generated names are valid")
    }

    fn atom(&mut self) -> Expr {
        match self.rng.gen_range(0..3) {
            0 => Expr::Int(self.rng.gen_range(-3..=9)),
            1 => var("n".into()),
            _ => Expr::var(&self.pool_var()),
        }
    }

    fn expr(&mut self, target: &Ident) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => self.atom(),
            1 => Expr::binary(
                BinOp::Add,
                Expr::var(target),
                Expr::Int(self.rng.gen_range(1..=5)),
            ),
            2 => {
                let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul]
                    .choose(self.rng)
                    .expect("nonempty");
                let inner = Expr::binary(op, self.atom(), self.atom());
                Expr::binary(BinOp::Mod, inner, Expr::Int(MODULUS))
            }
            _ => {
                let c = self.cond();
                Expr::cond(c, self.atom(), self.atom())
            }
        }
    }

    fn cond(&mut self) -> Expr {
        let x = Expr::var(&self.pool_var());
        let c = Expr::Int(self.rng.gen_range(-2..=8));
        match self.rng.gen_range(0..4) {
            0 => Expr::binary(BinOp::Lt, x, c),
            1 => Expr::binary(BinOp::Eq, x, c),
            2 => Expr::binary(
                BinOp::Eq,
                Expr::binary(BinOp::Mod, x, Expr::Int(2)),
                Expr::Int(self.rng.gen_range(0..2)),
            ),
            _ => Expr::binary(
                BinOp::And,
                Expr::binary(BinOp::Le, c, x),
                Expr::binary(BinOp::Lt, var("n".into()), Expr::Int(3)),
            ),
        }
    }

    fn block(&mut self, depth: u32, loops: u32) -> Stmt {
        let len = self.rng.gen_range(1..=3);
        Stmt::block(
            (0..len)
                .map(|_| self.stmt(depth, loops))
                .collect::<Vec<_>>(),
        )
    }

    fn stmt(&mut self, depth: u32, loops: u32) -> Stmt {
        let nested = depth < self.params.max_depth;
        let roll = self.rng.gen_range(0..10);
        if nested && loops < self.params.max_loop_nesting && roll < 3 {
            self.counting_loop(depth, loops)
        } else if nested && roll < 5 {
            let c = self.cond();
            let t = self.block(depth + 1, loops);
            let e = if self.rng.gen_bool(0.5) {
                self.block(depth + 1, loops)
            } else {
                Stmt::Skip
            };
            Stmt::if_(c, t, e)
        } else if roll == 9 {
            Stmt::Skip
        } else {
            let x = self.pool_var();
            let e = self.expr(&x);
            Stmt::assign(&x, e)
        }
    }

    fn counting_loop(&mut self, depth: u32, loops: u32) -> Stmt {
        let c = Ident::new(format!("c{}", self.counters)).expect("generated names are valid");
        self.counters += 1;
        let bound = if self.rng.gen_bool(0.5) {
            var("n".into())
        } else {
            Expr::Int(self.rng.gen_range(0..=self.params.max_bound))
        };
        let body = self.block(depth + 1, loops + 1);
        let step = Stmt::assign(&c, Expr::binary(BinOp::Add, Expr::var(&c), Expr::Int(1)));
        Stmt::seq(
            Stmt::assign(&c, Expr::Int(0)),
            Stmt::while_(
                Expr::binary(BinOp::Lt, Expr::var(&c), bound),
                Stmt::seq(body, step),
                None,
            ),
        )
    }
}

/// A random plain program over `x0..`, the input `n` and loop counters `c0..`.
pub fn gen_program(rng: &mut impl Rng, params: &GenParams) -> Stmt {
    let mut g = Gen {
        rng,
        params: *params,
        counters: 0,
    };
    g.block(0, 0)
}

/// Zero to four steps, each on a loop drawn from the indexed loops of the
/// program as transformed so far.
pub fn gen_script(rng: &mut impl Rng, labelled: &Stmt) -> Result<TransformScript> {
    let mut steps = Vec::new();
    let mut current = labelled.clone();
    for _ in 0..rng.gen_range(0..=4) {
        let loops = list_indexed_loops(&current);
        let Some((path, _)) = loops.choose(rng) else {
            break;
        };
        let op = if rng.gen_bool(0.5) {
            TransformOp::Peel
        } else {
            TransformOp::Unroll(rng.gen_range(2..=3))
        };
        let step = TransformStep {
            op,
            path: path.clone(),
        };
        current = apply_step(&current, &step)?;
        steps.push(step);
    }
    Ok(TransformScript(steps))
}

/// A store assigning `n` and a random value to each pool variable.
pub fn gen_store(rng: &mut impl Rng, params: &GenParams) -> Store {
    let mut pairs = vec![(
        Ident::new("n").expect("valid"),
        rng.gen_range(0..=MAX_INPUT),
    )];
    for k in 0..params.var_pool {
        pairs.push((
            Ident::new(format!("x{k}")).expect("valid"),
            rng.gen_range(-5..=5),
        ));
    }
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::label_indexed;
    use crate::semantics::{run, DEFAULT_FUEL};
    use crate::syntax::pretty_print;

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams::default();
        let a = gen_program(&mut rng_for(7), &p);
        let b = gen_program(&mut rng_for(7), &p);
        assert_eq!(a, b);
        assert_eq!(pretty_print(&a), pretty_print(&b));
    }

    #[test]
    fn generated_programs_terminate() {
        let params = GenParams::default();
        for seed in 0..200 {
            let mut rng = rng_for(seed);
            let prog = gen_program(&mut rng, &params);
            let store = gen_store(&mut rng, &params);
            run(&prog, store, DEFAULT_FUEL)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", pretty_print(&prog)));
        }
    }

    #[test]
    fn scripts_apply() {
        let params = GenParams::default();
        for seed in 0..100 {
            let mut rng = rng_for(seed);
            let prog = label_indexed(&gen_program(&mut rng, &params)).unwrap();
            let script = gen_script(&mut rng, &prog).unwrap();
            assert!(script.0.len() <= 4);
            crate::transform::apply_script(&prog, &script).unwrap();
        }
    }
}
