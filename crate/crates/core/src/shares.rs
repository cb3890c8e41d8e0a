//! Exact share values: MMS, MXS, the strong EEFX share θ, and RMMS.
//!
//! All computations work on one agent's subset-value table (`2^m` entries in scaled
//! integer units) and, where EEFX feasibility matters, on the agent's feasibility table.

use std::cell::OnceCell;

use serde::Serialize;

use crate::combinat::Partition;
use crate::error::{resource, usage, Result};
use crate::fairness::feasibility_table;
use crate::instance::{Instance, ScaledValuation};
use crate::itemset::ItemSet;
use crate::value::ExactValue;

/// Item cap for MMS, MXS and θ.
pub const MAX_SHARE_ITEMS: usize = 12;
/// Item cap for residual self-feasibility and RMMS.
pub const MAX_RMMS_ITEMS: usize = 10;

/// All four shares of one agent, with witnesses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShareProfile {
    pub agent: usize,
    pub mms: ExactValue,
    pub mxs: ExactValue,
    pub theta: ExactValue,
    pub rmms: ExactValue,
    /// Largest-valued EEFX-infeasible bundle; `None` when every bundle is feasible.
    pub t_witness: Option<ItemSet>,
    pub mms_witness: Partition,
}

/// How [`ShareContext::theta_with`] treats degenerate valuations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaMode {
    /// Locate the unique largest infeasible bundle `T`; errors on degenerate valuations.
    Strict,
    /// Scan value thresholds directly; valid for any valuation.
    AllowDegenerate,
}

/// Cached per-agent tables backing the share computations.
pub struct ShareContext<'a> {
    inst: &'a Instance,
    agent: usize,
    val: &'a ScaledValuation,
    table: Vec<u128>,
    feasible: OnceCell<Vec<bool>>,
}

impl<'a> ShareContext<'a> {
    pub fn new(inst: &'a Instance, agent: usize) -> Result<Self> {
        inst.check_agent(agent)?;
        if inst.m() > MAX_SHARE_ITEMS {
            return Err(resource(format!(
                "share computations need m <= {MAX_SHARE_ITEMS}, got {}",
                inst.m()
            )));
        }
        let val = inst.valuation(agent);
        let table = val.subset_table()?;
        Ok(ShareContext { inst, agent, val, table, feasible: OnceCell::new() })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn valuation(&self) -> &ScaledValuation {
        self.val
    }

    /// Subset values in scaled units, indexed by bitmask.
    pub fn subset_values(&self) -> &[u128] {
        &self.table
    }

    pub fn feasibility(&self) -> Result<&[bool]> {
        if let Some(f) = self.feasible.get() {
            return Ok(f);
        }
        let f = feasibility_table(self.inst, self.agent)?;
        Ok(self.feasible.get_or_init(|| f))
    }

    fn full(&self) -> usize {
        self.table.len() - 1
    }

    pub fn is_non_degenerate(&self) -> bool {
        let mut sorted = self.table.clone();
        sorted.sort_unstable();
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    /// Distinct subset values, ascending.
    pub fn distinct_values(&self) -> Vec<u128> {
        let mut v = self.table.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// MMS by dynamic programming over submasks: `best[p][S]` is the best minimum part
    /// value when `S` is split into `p` parts (empties allowed).
    pub fn mms(&self) -> (ExactValue, Partition) {
        let n = self.inst.n();
        let size = self.table.len();
        let mut best: Vec<Vec<u128>> = vec![self.table.clone()];
        let mut choice: Vec<Vec<u32>> = vec![Vec::new()];
        for _p in 2..=n {
            let prev = best.last().expect("p - 1 row");
            let mut row = vec![0u128; size];
            let mut pick = vec![0u32; size];
            for mask in 1..size {
                let low = mask & mask.wrapping_neg();
                let rest = mask ^ low;
                let mut sub = rest;
                let mut top: Option<(u128, usize)> = None;
                loop {
                    let part = sub | low;
                    let score = self.table[part].min(prev[mask ^ part]);
                    if top.is_none_or(|(s, _)| score > s) {
                        top = Some((score, part));
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
                let (score, part) = top.expect("at least one submask");
                row[mask] = score;
                pick[mask] = part as u32;
            }
            best.push(row);
            choice.push(pick);
        }
        let mut parts = Vec::with_capacity(n);
        let mut mask = self.full();
        for p in (2..=n).rev() {
            let part = if mask == 0 { 0 } else { choice[p - 1][mask] as usize };
            parts.push(ItemSet::from_bits(part as u32));
            mask ^= part;
        }
        parts.push(ItemSet::from_bits(mask as u32));
        let value = best[n - 1][self.full()];
        let witness = Partition::new(parts, self.inst.items())
            .expect("dp reconstruction covers the ground set")
            .canonical();
        (self.val.exact(value), witness)
    }

    /// Minimum value of an EEFX-feasible bundle.
    pub fn mxs(&self) -> Result<ExactValue> {
        let feasible = self.feasibility()?;
        let min = (0..self.table.len())
            .filter(|&b| feasible[b])
            .map(|b| self.table[b])
            .min()
            .expect("M itself is always feasible");
        Ok(self.val.exact(min))
    }

    /// The unique largest-valued EEFX-infeasible bundle, or `None` if all are feasible.
    pub fn max_infeasible_bundle(&self) -> Result<Option<ItemSet>> {
        if !self.is_non_degenerate() {
            return Err(usage(format!(
                "agent {} has a degenerate valuation; perturb the instance first",
                self.agent + 1
            )));
        }
        let feasible = self.feasibility()?;
        Ok((0..self.table.len())
            .filter(|&b| !feasible[b])
            .max_by_key(|&b| self.table[b])
            .map(|b| ItemSet::from_bits(b as u32)))
    }

    /// θ in scaled units: the smallest subset value strictly above `v(T)`.
    pub(crate) fn theta_units(&self) -> Result<u128> {
        let Some(t) = self.max_infeasible_bundle()? else {
            return Ok(0);
        };
        let vt = self.table[t.bits() as usize];
        Ok(self
            .table
            .iter()
            .copied()
            .filter(|&v| v > vt)
            .min()
            .expect("M is feasible, so some value exceeds v(T)"))
    }

    pub fn theta(&self) -> Result<ExactValue> {
        Ok(self.val.exact(self.theta_units()?))
    }

    pub fn theta_with(&self, mode: ThetaMode) -> Result<ExactValue> {
        match mode {
            ThetaMode::Strict => self.theta(),
            ThetaMode::AllowDegenerate => self.theta_by_threshold_scan(),
        }
    }

    /// θ straight from its definition: walk the distinct subset values from the top and
    /// stop at the first value class containing an infeasible bundle.
    pub fn theta_by_threshold_scan(&self) -> Result<ExactValue> {
        let feasible = self.feasibility()?;
        let mut order: Vec<usize> = (0..self.table.len()).collect();
        order.sort_by(|&a, &b| self.table[b].cmp(&self.table[a]));
        let mut theta = self.table[self.full()];
        let mut idx = 0;
        while idx < order.len() {
            let value = self.table[order[idx]];
            let mut end = idx;
            let mut all_ok = true;
            while end < order.len() && self.table[order[end]] == value {
                all_ok &= feasible[order[end]];
                end += 1;
            }
            if !all_ok {
                break;
            }
            theta = value;
            idx = end;
        }
        Ok(self.val.exact(theta))
    }

    fn require_rmms_size(&self) -> Result<()> {
        if self.inst.m() > MAX_RMMS_ITEMS {
            return Err(resource(format!(
                "residual self-feasibility needs m <= {MAX_RMMS_ITEMS}, got {}",
                self.inst.m()
            )));
        }
        Ok(())
    }

    /// `good[p][S]`: can `S` be split into `p` parts each worth at least `t` units?
    fn split_table(&self, t: u128, max_parts: usize) -> Vec<Vec<bool>> {
        let size = self.table.len();
        let mut good = vec![vec![false; size]; max_parts + 1];
        good[1] = self.table.iter().map(|&v| v >= t).collect();
        for p in 2..=max_parts {
            good[p][0] = t == 0;
            for mask in 1..size {
                let low = mask & mask.wrapping_neg();
                let rest = mask ^ low;
                let mut sub = rest;
                loop {
                    let part = sub | low;
                    if self.table[part] >= t && good[p - 1][mask ^ part] {
                        good[p][mask] = true;
                        break;
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
            }
        }
        good
    }

    /// A removal family breaking residual self-feasibility at `t`, or `None` if `t` passes.
    ///
    /// An empty family means the `k = 0` case already fails. Families are enumerated as
    /// sets of nonempty pairwise-disjoint bundles each worth less than `t`; adding empty
    /// removed bundles only lowers the number of parts the rest must be split into, and
    /// merging two parts worth at least `t` keeps that property, so such families can
    /// never be the first to fail.
    pub fn residual_violation(&self, t: &ExactValue) -> Result<Option<Vec<ItemSet>>> {
        self.require_rmms_size()?;
        Ok(self.residual_violation_units(self.val.threshold_units(t)))
    }

    fn residual_violation_units(&self, t: u128) -> Option<Vec<ItemSet>> {
        if t == 0 {
            return None;
        }
        let n = self.inst.n();
        let good = self.split_table(t, n);
        let full = self.full();
        if !good[n][full] {
            return Some(Vec::new());
        }
        let mut family = Vec::new();
        self.find_bad_family(t, &good, 0, 0, &mut family).then_some(family)
    }

    fn find_bad_family(
        &self,
        t: u128,
        good: &[Vec<bool>],
        used: usize,
        after: usize,
        family: &mut Vec<ItemSet>,
    ) -> bool {
        let n = self.inst.n();
        if family.len() == n - 1 {
            return false;
        }
        let free = self.full() & !used;
        // next bundle: nonempty submask of `free`, bitmask greater than the previous one
        let mut sub = free;
        let mut candidates = Vec::new();
        while sub != 0 {
            if sub > after && self.table[sub] < t {
                candidates.push(sub);
            }
            sub = (sub - 1) & free;
        }
        candidates.reverse();
        for b in candidates {
            family.push(ItemSet::from_bits(b as u32));
            let now_used = used | b;
            let k = family.len();
            if !good[n - k][self.full() & !now_used] {
                return true;
            }
            if self.find_bad_family(t, good, now_used, b, family) {
                return true;
            }
            family.pop();
        }
        false
    }

    pub fn residual_self_feasible(&self, t: &ExactValue) -> Result<bool> {
        Ok(self.residual_violation(t)?.is_none())
    }

    /// RMMS by binary search over the distinct subset values; residual self-feasibility
    /// is downward closed in `t` and constant between consecutive subset values.
    pub fn rmms(&self) -> Result<ExactValue> {
        self.require_rmms_size()?;
        let candidates = self.distinct_values();
        // candidates[0] == 0 always passes
        let (mut lo, mut hi) = (0usize, candidates.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.residual_violation_units(candidates[mid]).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.val.exact(candidates[lo]))
    }

    /// RMMS by testing every candidate value; used to cross-check [`ShareContext::rmms`].
    pub fn rmms_linear(&self) -> Result<ExactValue> {
        self.require_rmms_size()?;
        let best = self
            .distinct_values()
            .into_iter()
            .filter(|&t| self.residual_violation_units(t).is_none())
            .max()
            .unwrap_or(0);
        Ok(self.val.exact(best))
    }

    pub fn profile(&self) -> Result<ShareProfile> {
        let (mms, mms_witness) = self.mms();
        Ok(ShareProfile {
            agent: self.agent,
            mms,
            mxs: self.mxs()?,
            theta: self.theta()?,
            rmms: self.rmms()?,
            t_witness: self.max_infeasible_bundle()?,
            mms_witness,
        })
    }
}

pub fn mms(inst: &Instance, agent: usize) -> Result<(ExactValue, Partition)> {
    Ok(ShareContext::new(inst, agent)?.mms())
}

pub fn mxs(inst: &Instance, agent: usize) -> Result<ExactValue> {
    ShareContext::new(inst, agent)?.mxs()
}

pub fn max_infeasible_bundle(inst: &Instance, agent: usize) -> Result<Option<ItemSet>> {
    ShareContext::new(inst, agent)?.max_infeasible_bundle()
}

pub fn theta(inst: &Instance, agent: usize) -> Result<ExactValue> {
    ShareContext::new(inst, agent)?.theta()
}

pub fn residual_self_feasible(inst: &Instance, agent: usize, t: &ExactValue) -> Result<bool> {
    ShareContext::new(inst, agent)?.residual_self_feasible(t)
}

pub fn rmms(inst: &Instance, agent: usize) -> Result<ExactValue> {
    ShareContext::new(inst, agent)?.rmms()
}

pub fn share_profile(inst: &Instance, agent: usize) -> Result<ShareProfile> {
    ShareContext::new(inst, agent)?.profile()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mms_small_cases() {
        let unit = Instance::from_integers(&[[1, 1, 1], [1, 1, 1], [1, 1, 1]]).unwrap();
        assert_eq!(mms(&unit, 0).unwrap().0, 1.into());

        let inst = Instance::from_integers(&[[3, 2, 2], [3, 2, 2]]).unwrap();
        let (v, w) = mms(&inst, 0).unwrap();
        assert_eq!(v, 3.into());
        assert_eq!(w.parts(), &[ItemSet::singleton(0), ItemSet::from_items([1, 2])]);

        let single = Instance::from_integers(&[[3, 2, 2]]).unwrap();
        assert_eq!(mms(&single, 0).unwrap().0, 7.into());

        let few = Instance::from_integers(&[[4, 5], [4, 5], [4, 5]]).unwrap();
        let (v, w) = mms(&few, 0).unwrap();
        assert_eq!(v, 0.into());
        assert_eq!(w.k(), 3);
    }

    #[test]
    fn single_item_two_agents_has_zero_theta() {
        let inst = Instance::from_integers(&[[1], [1]]).unwrap().perturb().unwrap();
        let ctx = ShareContext::new(&inst, 0).unwrap();
        assert_eq!(ctx.max_infeasible_bundle().unwrap(), None);
        assert_eq!(ctx.theta().unwrap(), 0.into());
        assert_eq!(ctx.mxs().unwrap(), 0.into());
    }

    #[test]
    fn empty_bundle_infeasible_with_enough_items() {
        let inst = Instance::from_integers(&[[3, 1, 4, 1], [1, 1, 1, 1], [2, 2, 2, 2]])
            .unwrap()
            .perturb()
            .unwrap();
        let ctx = ShareContext::new(&inst, 0).unwrap();
        assert!(!ctx.feasibility().unwrap()[0]);
        assert!(ctx.max_infeasible_bundle().unwrap().is_some());
        assert!(ctx.theta().unwrap() > 0.into());
    }

    #[test]
    fn degenerate_theta_needs_flag() {
        let inst = Instance::from_integers(&[[1, 1, 1], [1, 1, 1]]).unwrap();
        let ctx = ShareContext::new(&inst, 0).unwrap();
        assert!(matches!(ctx.theta(), Err(crate::Error::Usage(_))));
        assert!(ctx.theta_with(ThetaMode::AllowDegenerate).is_ok());
    }

    #[test]
    fn residual_trivial_thresholds() {
        let inst = Instance::from_integers(&[[3, 2, 2], [1, 1, 1]]).unwrap();
        let ctx = ShareContext::new(&inst, 0).unwrap();
        assert!(ctx.residual_self_feasible(&0.into()).unwrap());
        assert_eq!(ctx.residual_violation(&8.into()).unwrap(), Some(vec![]));
        // t = 3 = MMS: removing {g2} (2 < 3) leaves {g1,g3} = 5 >= 3; every bundle
        // worth < 3 leaves at least 4.
        assert!(ctx.residual_self_feasible(&3.into()).unwrap());
        // t = 4 fails already at k = 0
        assert_eq!(ctx.residual_violation(&4.into()).unwrap(), Some(vec![]));
        assert_eq!(ctx.rmms().unwrap(), 3.into());
        assert_eq!(ctx.rmms_linear().unwrap(), 3.into());
    }

    #[test]
    fn single_agent_shares_equal_total() {
        let inst = Instance::from_integers(&[[3, 5, 9]]).unwrap().perturb().unwrap();
        let p = share_profile(&inst, 0).unwrap();
        let total = inst.value(0, inst.items()).unwrap();
        assert_eq!(p.mms, total);
        assert_eq!(p.mxs, total);
        assert_eq!(p.theta, total);
        assert_eq!(p.rmms, total);
    }

    #[test]
    fn size_caps() {
        let big = Instance::from_integers(&[vec![1; 13], vec![1; 13]]).unwrap();
        assert!(matches!(ShareContext::new(&big, 0), Err(crate::Error::Resource(_))));
        let mid = Instance::from_integers(&[vec![1; 11], vec![1; 11]]).unwrap();
        assert!(matches!(rmms(&mid, 0), Err(crate::Error::Resource(_))));
    }
}
