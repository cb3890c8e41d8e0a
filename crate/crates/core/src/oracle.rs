//! Exhaustive reference solvers and verification suites.
//!
//! Everything here favours the literal definition over speed and shares no search code
//! with the modules it checks, beyond the allocation checkers themselves.

use rayon::prelude::*;
use serde::Serialize;

use crate::combinat::{partitions_into, subsets, Partition};
use crate::divider::ConstructiveDivider;
use crate::error::{resource, usage, Result};
use crate::fairness::{check_allocation, feasibility_table};
use crate::instance::{Allocation, Instance};
use crate::itemset::ItemSet;
use crate::shares::ShareContext;
use crate::value::ExactValue;

/// Default number of labeled assignments [`brute_force_solve`] may scan.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Ef,
    Ef1,
    Efl,
    Efx,
    Eefx,
    EflEefx,
}

impl Predicate {
    fn needs_eefx(self) -> bool {
        matches!(self, Predicate::Eefx | Predicate::EflEefx)
    }
}

/// Decodes assignment number `code`: item `g` goes to agent `(code / n^g) % n`.
fn decode(code: u64, n: usize, m: usize) -> Vec<ItemSet> {
    let mut bundles = vec![ItemSet::EMPTY; n];
    let mut c = code;
    for g in 0..m {
        let j = (c % n as u64) as usize;
        c /= n as u64;
        bundles[j] = bundles[j].with(g);
    }
    bundles
}

/// Scans all `n^m` complete assignments in order of their assignment number and returns
/// the first one satisfying `pred`.
pub fn brute_force_solve(inst: &Instance, pred: Predicate, budget: u64) -> Result<Option<Allocation>> {
    let (n, m) = (inst.n(), inst.m());
    let total = (0..m).try_fold(1u64, |acc, _| acc.checked_mul(n as u64).filter(|&t| t <= budget));
    let Some(total) = total else {
        return Err(resource(format!("{n}^{m} assignments exceed the budget of {budget}")));
    };
    let tables = if pred.needs_eefx() {
        (0..n).map(|i| feasibility_table(inst, i)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let hit = (0..total).into_par_iter().find_map_first(|code| {
        let bundles = decode(code, n, m);
        if pred.needs_eefx() && !(0..n).all(|i| tables[i][bundles[i].bits() as usize]) {
            return None;
        }
        let alloc = Allocation::new(inst, bundles).expect("decoded assignment is valid");
        let ok = match pred {
            Predicate::Eefx => true,
            _ => {
                let report = check_allocation(inst, &alloc).expect("valid allocation");
                match pred {
                    Predicate::Ef => report.is_ef(),
                    Predicate::Ef1 => report.is_ef1(),
                    Predicate::Efl | Predicate::EflEefx => report.is_efl(),
                    Predicate::Efx => report.is_efx(),
                    Predicate::Eefx => unreachable!(),
                }
            }
        };
        ok.then_some(alloc)
    });
    Ok(hit)
}

/// MMS straight from the definition: best minimum part over every partition into `n` parts.
pub fn mms_bruteforce(inst: &Instance, agent: usize) -> Result<ExactValue> {
    inst.check_agent(agent)?;
    let v = inst.valuation(agent);
    let best = partitions_into(inst.items(), inst.n())?
        .map(|p| p.parts().iter().map(|s| v.units(*s)).min().expect("n >= 1"))
        .max()
        .expect("at least one partition");
    Ok(v.exact(best))
}

/// θ straight from the definition: the smallest subset value `x` such that every bundle
/// worth at least `x` is EEFX feasible. Quadratic in `2^m`.
pub fn theta_bruteforce(inst: &Instance, agent: usize) -> Result<ExactValue> {
    let feasible = feasibility_table(inst, agent)?;
    let v = inst.valuation(agent);
    let table = v.subset_table()?;
    let best = table
        .iter()
        .copied()
        .filter(|&x| (0..table.len()).all(|b| table[b] < x || feasible[b]))
        .min()
        .expect("v(M) always qualifies");
    Ok(v.exact(best))
}

/// Residual self-feasibility from the definition. Every labeling of the items as kept
/// or removed into one of `k` removed bundles (empty removed bundles included) is tried
/// for each `k < n`.
pub fn residual_self_feasible_bruteforce(inst: &Instance, agent: usize, t: &ExactValue) -> Result<bool> {
    inst.check_agent(agent)?;
    let (n, m) = (inst.n(), inst.m());
    let v = inst.valuation(agent);
    let need = v.threshold_units(t);
    for k in 0..n {
        let labels = (k + 1) as u64;
        let total = (0..m)
            .try_fold(1u64, |acc, _| acc.checked_mul(labels).filter(|&x| x <= DEFAULT_BUDGET))
            .ok_or_else(|| resource("literal residual check exceeds its budget"))?;
        for code in 0..total {
            // label 0 = kept, labels 1..=k = removed bundles
            let groups = decode(code, k + 1, m);
            if groups[1..].iter().any(|s| v.units(*s) >= need) {
                continue;
            }
            let splits = partitions_into(groups[0], n - k)?.any(|p| p.parts().iter().all(|s| v.units(*s) >= need));
            if !splits {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AgentChain {
    pub agent: usize,
    pub mxs: ExactValue,
    pub theta: ExactValue,
    pub rmms: ExactValue,
    pub mms: ExactValue,
    pub theta_minus_mxs: ExactValue,
    pub mms_minus_theta: ExactValue,
    /// First broken link of `MXS <= θ <= RMMS <= MMS`, if any.
    pub violation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShareChainReport {
    pub agents: Vec<AgentChain>,
}

impl ShareChainReport {
    pub fn ok(&self) -> bool {
        self.agents.iter().all(|a| a.violation.is_none())
    }
}

/// Computes MXS, θ, RMMS and MMS for every agent and checks `MXS <= θ <= RMMS <= MMS`.
/// Needs a non-degenerate instance.
pub fn verify_share_chain(inst: &Instance) -> Result<ShareChainReport> {
    let agents = (0..inst.n())
        .map(|i| {
            let ctx = ShareContext::new(inst, i)?;
            let mxs = ctx.mxs()?;
            let theta = ctx.theta()?;
            let rmms = ctx.rmms()?;
            let (mms, _) = ctx.mms();
            let violation = if mxs > theta {
                Some(format!("MXS {mxs} > θ {theta}"))
            } else if theta > rmms {
                Some(format!("θ {theta} > RMMS {rmms}"))
            } else if rmms > mms {
                Some(format!("RMMS {rmms} > MMS {mms}"))
            } else {
                None
            };
            Ok(AgentChain {
                agent: i,
                theta_minus_mxs: &theta - &mxs,
                mms_minus_theta: &mms - &theta,
                mxs,
                theta,
                rmms,
                mms,
                violation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShareChainReport { agents })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Theorem2Report {
    pub agent: usize,
    pub theta: ExactValue,
    /// Removal family breaking residual self-feasibility of θ, if any.
    pub residual_violation: Option<Vec<ItemSet>>,
    /// Removal families (including the empty one) handed to the constructive divider.
    pub families_checked: u64,
    /// First family where the constructive divider failed, with the error.
    pub constructive_failure: Option<(Vec<ItemSet>, String)>,
}

impl Theorem2Report {
    pub fn ok(&self) -> bool {
        self.residual_violation.is_none() && self.constructive_failure.is_none()
    }
}

/// Checks that θ is residual self-feasible for `agent`, and runs the constructive
/// division on every family of fewer than `n` disjoint nonempty bundles each worth less
/// than θ, confirming every produced part reaches θ.
pub fn verify_theorem2(inst: &Instance, agent: usize) -> Result<Theorem2Report> {
    let ctx = ShareContext::new(inst, agent)?;
    let theta = ctx.theta()?;
    let residual_violation = ctx.residual_violation(&theta)?;
    let divider = ConstructiveDivider::new(inst, agent)?;
    let v = inst.valuation(agent);
    let need = v.threshold_units(&theta);
    let low: Vec<ItemSet> = subsets(inst.items()).filter(|s| !s.is_empty() && v.units(*s) < need).collect();

    let mut report = Theorem2Report {
        agent,
        theta,
        residual_violation,
        families_checked: 0,
        constructive_failure: None,
    };
    let mut family = Vec::new();
    walk_families(&low, 0, ItemSet::EMPTY, inst.n() - 1, &mut family, &mut |fam| {
        report.families_checked += 1;
        let outcome = divider.divide(fam).and_then(|p| check_division(inst, agent, fam, &p, need));
        match outcome {
            Ok(()) => true,
            Err(e) => {
                report.constructive_failure = Some((fam.to_vec(), e.to_string()));
                false
            }
        }
    });
    Ok(report)
}

/// Visits every family drawn from `low` (increasing index, pairwise disjoint, at most
/// `max` members), starting with the empty family. Stops when `visit` returns false.
fn walk_families(
    low: &[ItemSet],
    from: usize,
    used: ItemSet,
    max: usize,
    family: &mut Vec<ItemSet>,
    visit: &mut impl FnMut(&[ItemSet]) -> bool,
) -> bool {
    if !visit(family) {
        return false;
    }
    if family.len() == max {
        return true;
    }
    for idx in from..low.len() {
        if !used.is_disjoint(low[idx]) {
            continue;
        }
        family.push(low[idx]);
        let go_on = walk_families(low, idx + 1, used | low[idx], max, family, visit);
        family.pop();
        if !go_on {
            return false;
        }
    }
    true
}

fn check_division(inst: &Instance, agent: usize, removed: &[ItemSet], p: &Partition, need: u128) -> Result<()> {
    let s = removed.iter().fold(ItemSet::EMPTY, |a, b| a | *b);
    let v = inst.valuation(agent);
    if p.ground() != inst.items() - s || p.k() != inst.n() - removed.len() {
        return Err(usage(format!("division {:?} has the wrong shape", p.parts())));
    }
    if let Some(bad) = p.parts().iter().find(|x| v.units(**x) < need) {
        return Err(usage(format!("part {bad} is below θ")));
    }
    Ok(())
}
