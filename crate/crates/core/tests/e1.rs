//! The three-agent, ten-item fixture (values scaled by 100).

use eefx_core::combinat::Partition;
use eefx_core::fairness::{is_eefx_feasible, Certificate};
use eefx_core::oracle::{verify_share_chain, verify_theorem2};
use eefx_core::shares::ShareContext;
use eefx_core::{ExactValue, Instance, ItemSet};

const ROW: [i64; 10] = [1, 299, 101, 101, 101, 98, 98, 99, 99, 100];

fn set(items: &[usize]) -> ItemSet {
    items.iter().map(|g| g - 1).collect()
}

fn e1() -> Instance {
    Instance::from_integers(&[ROW; 3]).unwrap().with_label("E1")
}

#[test]
fn low_pair_is_feasible_with_known_certificate() {
    let inst = e1();
    let b = set(&[1, 2]);
    assert_eq!(inst.value(0, b).unwrap(), 300.into());
    assert!(is_eefx_feasible(&inst, 0, b).unwrap().unwrap().is_valid(&inst));
    let parts = Partition::new(vec![set(&[3, 8, 9, 10]), set(&[4, 5, 6, 7])], inst.items() - b).unwrap();
    assert!(Certificate { owner: 0, bundle: b, parts }.is_valid(&inst));
}

#[test]
fn heavier_triple_is_infeasible() {
    let inst = e1();
    let b = set(&[3, 4, 5]);
    assert_eq!(inst.value(0, b).unwrap(), 303.into());
    assert!(is_eefx_feasible(&inst, 0, b).unwrap().is_none());
    // the certificate shape that works for {g1,g2} fails here
    let parts = Partition::new(vec![set(&[2, 10]), set(&[1, 6, 7, 8, 9])], inst.items() - b).unwrap();
    assert!(!Certificate { owner: 0, bundle: b, parts }.is_valid(&inst));
}

#[test]
fn frozen_shares() {
    let raw = e1();
    assert_eq!(ShareContext::new(&raw, 0).unwrap().mxs().unwrap(), 300.into());

    let inst = raw.perturb().unwrap();
    let ctx = ShareContext::new(&inst, 0).unwrap();
    assert_eq!(ctx.theta().unwrap(), ExactValue::from_ratio(310_881, 1024));
    assert_eq!(ctx.max_infeasible_bundle().unwrap(), Some(set(&[3, 4, 5])));
    assert_eq!(ctx.mxs().unwrap(), ExactValue::from_ratio(153_875, 512));
    assert_eq!(ctx.mms().0, ExactValue::from_ratio(9751, 32));
    assert_eq!(ctx.rmms().unwrap(), ExactValue::from_ratio(9751, 32));
    assert!(ctx.theta().unwrap() > 303.into());
    assert!(ctx.mxs().unwrap() < inst.value(0, set(&[1, 2])).unwrap());
}

#[test]
fn chain_and_residual_feasibility() {
    let inst = e1().perturb().unwrap();
    assert!(verify_share_chain(&inst).unwrap().ok());
    let r = verify_theorem2(&inst, 0).unwrap();
    assert!(r.ok(), "{r:?}");
    assert!(r.families_checked > 1);
}
