use std::collections::HashSet;

use proptest::prelude::*;

use eefx_core::combinat::{partition_count, partitions_into, subsets};
use eefx_core::efxpart::{efx_partition_bruteforce, efx_partition_traced, efx_partition_units, is_efx_partition};
use eefx_core::fairness::{check_allocation, feasibility_table, is_eefx_feasible, is_eefx_feasible_fast, FastVerdict};
use eefx_core::instance::ScaledValuation;
use eefx_core::oracle::{mms_bruteforce, residual_self_feasible_bruteforce, theta_bruteforce};
use eefx_core::shares::ShareContext;
use eefx_core::{Allocation, ExactValue, Instance, ItemSet};

fn rows(n: std::ops::RangeInclusive<usize>, m: std::ops::RangeInclusive<usize>, vmax: i64) -> impl Strategy<Value = Vec<Vec<i64>>> {
    (n, m).prop_flat_map(move |(n, m)| prop::collection::vec(prop::collection::vec(0..=vmax, m), n))
}

fn perturbed(rows: &[Vec<i64>]) -> Instance {
    Instance::from_integers(rows).unwrap().perturb().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_stream_is_complete_and_distinct(n in 0usize..=7, k in 1usize..=4) {
        let ground = ItemSet::full(n);
        let mut seen = HashSet::new();
        for p in partitions_into(ground, k).unwrap() {
            prop_assert_eq!(p.k(), k);
            prop_assert_eq!(p.canonical(), p.clone());
            let mut key: Vec<u32> = p.parts().iter().map(|s| s.bits()).collect();
            key.sort_unstable();
            prop_assert!(seen.insert(key));
        }
        prop_assert_eq!(seen.len() as u128, partition_count(n, k));
    }

    #[test]
    fn subsets_enumerate_power_set(bits in 0u32..1 << 12) {
        let ground = ItemSet::from_bits(bits);
        let all: Vec<ItemSet> = subsets(ground).collect();
        prop_assert_eq!(all.len(), 1usize << ground.len());
        prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn local_search_is_efx(weights in prop::collection::vec(0u128..=30, 0..=10), k in 1usize..=4) {
        let val = ScaledValuation::from_units(weights.clone());
        let ground = ItemSet::full(weights.len());
        let trace = efx_partition_traced(&val, ground, k).unwrap();
        prop_assert!(is_efx_partition(&val, trace.partition.parts()));
        prop_assert_eq!(trace.partition.ground(), ground);
        prop_assert!(trace.potentials.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(efx_partition_units(&val, ground, k), trace.partition);
    }

    #[test]
    fn leximin_oracle_is_efx(weights in prop::collection::vec(0i64..=12, 0..=7), k in 1usize..=3) {
        let ws: Vec<ExactValue> = weights.iter().map(|&w| w.into()).collect();
        let p = efx_partition_bruteforce(&ws, ItemSet::full(ws.len()), k).unwrap();
        let val = ScaledValuation::from_values(&ws).unwrap();
        prop_assert!(is_efx_partition(&val, p.parts()));
    }

    #[test]
    fn mms_matches_enumeration(r in rows(1..=3, 0..=7, 15)) {
        let inst = Instance::from_integers(&r).unwrap();
        for i in 0..inst.n() {
            let ctx = ShareContext::new(&inst, i).unwrap();
            let (v, witness) = ctx.mms();
            prop_assert_eq!(&v, &mms_bruteforce(&inst, i).unwrap());
            prop_assert_eq!(witness.k(), inst.n());
            let min = witness.parts().iter().map(|p| inst.value(i, *p).unwrap()).min().unwrap();
            prop_assert_eq!(min, v);
        }
    }

    #[test]
    fn theta_routes_agree(r in rows(2..=3, 1..=6, 10)) {
        let inst = perturbed(&r);
        for i in 0..inst.n() {
            let ctx = ShareContext::new(&inst, i).unwrap();
            let strict = ctx.theta().unwrap();
            prop_assert_eq!(&strict, &ctx.theta_by_threshold_scan().unwrap());
            prop_assert_eq!(&strict, &theta_bruteforce(&inst, i).unwrap());
        }
    }

    #[test]
    fn threshold_scan_matches_definition_when_degenerate(r in rows(2..=3, 1..=6, 3)) {
        let inst = Instance::from_integers(&r).unwrap();
        for i in 0..inst.n() {
            let ctx = ShareContext::new(&inst, i).unwrap();
            prop_assert_eq!(ctx.theta_by_threshold_scan().unwrap(), theta_bruteforce(&inst, i).unwrap());
        }
    }

    #[test]
    fn residual_check_matches_definition(r in rows(2..=3, 1..=6, 8), t in 0i64..=30) {
        let inst = Instance::from_integers(&r).unwrap();
        let t = ExactValue::from_integer(t);
        for i in 0..inst.n() {
            let ctx = ShareContext::new(&inst, i).unwrap();
            prop_assert_eq!(
                ctx.residual_self_feasible(&t).unwrap(),
                residual_self_feasible_bruteforce(&inst, i, &t).unwrap()
            );
            if let Some(family) = ctx.residual_violation(&t).unwrap() {
                prop_assert!(family.len() < inst.n());
                prop_assert!(family.iter().all(|b| inst.value(i, *b).unwrap() < t));
            }
        }
    }

    #[test]
    fn rmms_search_matches_scan(r in rows(2..=3, 1..=7, 12)) {
        let inst = Instance::from_integers(&r).unwrap();
        for i in 0..inst.n() {
            let ctx = ShareContext::new(&inst, i).unwrap();
            let rmms = ctx.rmms().unwrap();
            prop_assert_eq!(&rmms, &ctx.rmms_linear().unwrap());
            prop_assert!(ctx.residual_self_feasible(&rmms).unwrap());
        }
    }

    #[test]
    fn feasibility_is_upward_closed(r in rows(2..=3, 1..=7, 10)) {
        let inst = Instance::from_integers(&r).unwrap();
        let table = feasibility_table(&inst, 0).unwrap();
        for b in 0..table.len() {
            if table[b] {
                for g in 0..inst.m() {
                    prop_assert!(table[b | 1 << g]);
                }
            }
        }
        prop_assert!(table[table.len() - 1]);
    }

    #[test]
    fn fast_path_is_sound(r in rows(2..=3, 1..=7, 10), bits in 0u32..128) {
        let inst = Instance::from_integers(&r).unwrap();
        let b = ItemSet::from_bits(bits & ItemSet::full(inst.m()).bits());
        let exact = is_eefx_feasible(&inst, 0, b).unwrap();
        if let Some(c) = &exact {
            prop_assert!(c.is_valid(&inst));
        }
        match is_eefx_feasible_fast(&inst, 0, b).unwrap() {
            FastVerdict::Feasible(c) => {
                prop_assert!(c.is_valid(&inst));
                prop_assert!(exact.is_some());
            }
            FastVerdict::InfeasibleHint => prop_assert!(exact.is_none()),
            FastVerdict::Unknown => {}
        }
    }

    #[test]
    fn envy_notions_nest(r in rows(2..=3, 1..=8, 10), code in any::<u64>()) {
        let inst = Instance::from_integers(&r).unwrap();
        let n = inst.n() as u64;
        let mut bundles = vec![ItemSet::EMPTY; inst.n()];
        let mut c = code;
        for g in 0..inst.m() {
            bundles[(c % n) as usize] = bundles[(c % n) as usize].with(g);
            c /= n;
        }
        let report = check_allocation(&inst, &Allocation::new(&inst, bundles).unwrap()).unwrap();
        for p in &report.pairs {
            prop_assert!(!p.ef || p.efx);
            prop_assert!(!p.efx || p.efl);
            prop_assert!(!p.efl || p.ef1);
        }
    }

    #[test]
    fn perturbation_separates_subsets(r in rows(1..=3, 0..=8, 5)) {
        let inst = perturbed(&r);
        prop_assert!(inst.is_non_degenerate_all().unwrap());
        let base = Instance::from_integers(&r).unwrap();
        // strict preferences survive
        for i in 0..inst.n() {
            for a in 0..1u32 << inst.m() {
                let b = (a * 7 + 3) % (1 << inst.m());
                let (sa, sb) = (ItemSet::from_bits(a), ItemSet::from_bits(b));
                if base.value(i, sa).unwrap() > base.value(i, sb).unwrap() {
                    prop_assert!(inst.value(i, sa).unwrap() > inst.value(i, sb).unwrap());
                }
            }
        }
    }

    #[test]
    fn exact_values_round_trip(num in -10_000i64..10_000, den in 1i64..1000) {
        let v = ExactValue::from_ratio(num, den);
        prop_assert_eq!(v.to_string().parse::<ExactValue>().unwrap(), v);
    }
}
