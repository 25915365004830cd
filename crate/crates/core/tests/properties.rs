//! Property tests over the whole pipeline.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use idxcost::cost::{compute_kappa, Mode};
use idxcost::dependent::{
    classify, Classification, DependentCost, IndexingSet, SimpleCondition, SimplifyOptions, Test,
};
use idxcost::gen::{gen_program, gen_script, gen_store, rng_for, GenParams};
use idxcost::label::{label_indexed, label_plain, strip_labels};
use idxcost::semantics::{run, DEFAULT_FUEL};
use idxcost::syntax::{
    parse_program, pretty_print, ConstantIndexing, IndexId, Indexing, SimpleExpr,
};
use idxcost::transform::{apply_script, check_non_overlap};
use idxcost::vm::{lower, vm_run, CostModel, VmProgram};

fn simple(k: u32) -> impl Strategy<Value = SimpleExpr> {
    (0u64..6, 0u64..8).prop_map(move |(a, b)| SimpleExpr::new(a, b, IndexId(k)))
}

fn test() -> impl Strategy<Value = Test> {
    prop_oneof![
        (0u64..8).prop_map(Test::Eq),
        (0u64..8).prop_map(Test::Ge),
        (2u64..5, 0u64..5, proptest::option::of(0u64..9)).prop_map(|(m, r, min)| Test::ModEq {
            modulus: m,
            residue: r % m,
            min,
        }),
    ]
}

fn dependent_cost() -> impl Strategy<Value = DependentCost> {
    let leaf = (0u64..4).prop_map(DependentCost::Const);
    leaf.prop_recursive(5, 40, 2, |inner| {
        ((0u32..2), test(), inner.clone(), inner)
            .prop_map(|(k, t, a, b)| DependentCost::cond(SimpleCondition::new(IndexId(k), t), a, b))
    })
}

proptest! {
    #[test]
    fn composition_evaluates_pointwise(f in simple(0), g in simple(0), x in 0u64..50) {
        let fg = f.compose(&g).unwrap();
        prop_assert_eq!(fg.eval(x).unwrap(), f.eval(g.eval(x).unwrap()).unwrap());
    }

    #[test]
    fn disjointness_matches_images(f in simple(0), g in simple(0)) {
        // Two progressions that meet do so below the larger offset plus the
        // product of the steps.
        let bound = 8 + 6 * 6 + 8;
        let image = |e: &SimpleExpr| (0..=bound).filter(|v| e.hits(*v)).collect::<BTreeSet<u64>>();
        let meet = !image(&f).is_disjoint(&image(&g));
        prop_assert_eq!(f.disjoint_from(&g), !meet);
    }

    #[test]
    fn hits_is_the_image(f in simple(0), c in 0u64..100) {
        let reached = (0..=100u64).any(|d| f.eval(d).unwrap() == c);
        prop_assert_eq!(f.hits(c), reached);
    }

    #[test]
    fn classify_partitions(members in proptest::collection::btree_set((simple(0), simple(1)), 0..8)) {
        let set: BTreeSet<Indexing> = members
            .iter()
            .map(|(a, b)| Indexing::new(vec![*a, *b]).unwrap())
            .collect();
        let s = IndexingSet::new(set.iter().cloned()).unwrap();
        match classify(&s) {
            Classification::Empty => prop_assert!(set.is_empty()),
            Classification::SingletonEmpty => prop_assert!(false, "nonempty indexings"),
            Classification::Split { head, with_head, rest } => {
                let mut rebuilt: BTreeSet<Indexing> = rest.iter().cloned().collect();
                for t in with_head.iter() {
                    let mut exprs = vec![head];
                    exprs.extend_from_slice(t.exprs());
                    rebuilt.insert(Indexing::new(exprs).unwrap());
                }
                prop_assert_eq!(rebuilt, set.clone());
                prop_assert!(set.iter().all(|i| head <= i.exprs()[0]));
                prop_assert!(rest.iter().all(|i| i.exprs()[0] != head));
            }
        }
    }

    #[test]
    fn simplify_preserves_values(k in dependent_cost(), merge in any::<bool>()) {
        let s = idxcost::dependent::simplify(&k, SimplifyOptions { merge_equal: merge });
        prop_assert!(s.conditions() <= k.conditions());
        for i0 in 0..12 {
            for i1 in 0..12 {
                let c = ConstantIndexing::from_values(&[i0, i1]);
                prop_assert_eq!(k.eval(&c).unwrap(), s.eval(&c).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_programs_round_trip(seed in any::<u64>()) {
        let p = gen_program(&mut rng_for(seed), &GenParams::default());
        prop_assert_eq!(parse_program(&pretty_print(&p)).unwrap(), p.clone());
        let l = label_indexed(&p).unwrap();
        prop_assert_eq!(parse_program(&pretty_print(&l)).unwrap(), l.clone());
        prop_assert_eq!(strip_labels(&l), p.clone());
        prop_assert_eq!(strip_labels(&label_plain(&p).unwrap()), p);
    }

    #[test]
    fn transformed_programs_agree_everywhere(seed in any::<u64>()) {
        let params = GenParams::default();
        let mut rng = rng_for(seed);
        let p = label_indexed(&gen_program(&mut rng, &params)).unwrap();
        let script = gen_script(&mut rng, &p).unwrap();
        let q = apply_script(&p, &script).unwrap();
        prop_assert!(check_non_overlap(&q).is_ok());
        let compiled = lower(&q);
        prop_assert_eq!(VmProgram::parse(&compiled.to_string()).unwrap(), compiled.clone());
        let kappa = compute_kappa(&compiled, &CostModel::default(), Mode::Strict).unwrap();
        for _ in 0..3 {
            let store = gen_store(&mut rng, &params);
            let a = run(&p, store.clone(), DEFAULT_FUEL).unwrap();
            let b = run(&q, store.clone(), DEFAULT_FUEL).unwrap();
            let c = vm_run(&compiled, store, DEFAULT_FUEL, &CostModel::default()).unwrap();
            prop_assert_eq!(&a.trace, &b.trace);
            prop_assert_eq!(&b.trace, &c.trace);
            prop_assert_eq!(&a.store, &c.store);
            // Blocks are precise, so the emitted labels' costs add up to the run's cost.
            let total: u64 = c
                .emitted_at
                .iter()
                .map(|addr| kappa.blocks.iter().find(|b| b.addr == *addr).unwrap().max)
                .sum();
            prop_assert_eq!(total + kappa.entry.0, c.cost);
        }
    }

    #[test]
    fn cost_model_json_round_trips(emit in 0u64..5, assign in 0u64..5, branch in 0u64..5) {
        let text = format!(r#"{{"emit": {emit}, "assign": {assign}, "branch": {branch}}}"#);
        let m = CostModel::from_json(&text).unwrap();
        let back = CostModel::from_json(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(m, back);
        let defaults: BTreeMap<String, u64> =
            serde_json::from_value(serde_json::to_value(CostModel::default()).unwrap()).unwrap();
        let ours: BTreeMap<String, u64> = serde_json::from_value(serde_json::to_value(m).unwrap()).unwrap();
        for (k, v) in defaults {
            if !["emit", "assign", "branch"].contains(&k.as_str()) {
                prop_assert_eq!(ours[&k], v);
            }
        }
    }
}
