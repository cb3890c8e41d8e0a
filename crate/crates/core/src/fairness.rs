//! Envy-based checkers and EEFX feasibility.
//!
//! A bundle `B` is EEFX feasible for agent `i` when `M \ B` splits into `n - 1` parts
//! none of which `i` strongly envies while holding `B`. The exhaustive search here is
//! the definitive answer; [`is_eefx_feasible_fast`] only ever short-cuts it.

use rayon::prelude::*;
use serde::Serialize;

use crate::combinat::{Partition, MAX_PARTITION_GROUND};
use crate::efxpart::{efx_partition_units, max_removal};
use crate::error::{resource, usage, Result};
use crate::instance::{Allocation, Instance, ScaledValuation};
use crate::itemset::ItemSet;

/// Returns a witness item `g` in `other` with `v_i(other \ {g}) > v_i(own)`, if any.
pub fn strongly_envies(inst: &Instance, i: usize, own: ItemSet, other: ItemSet) -> Result<Option<usize>> {
    inst.check_agent(i)?;
    inst.check_set(own)?;
    inst.check_set(other)?;
    if !own.is_disjoint(other) {
        return Err(usage(format!("bundles {own} and {other} overlap")));
    }
    let v = inst.valuation(i);
    let own_units = v.units(own);
    let other_units = v.units(other);
    Ok(other.iter().find(|&g| other_units - v.weight(g) > own_units))
}

/// Which EFL clause held for a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "item")]
pub enum EflWitness {
    /// The envied bundle holds at most one item the envier values positively.
    AtMostOnePositive,
    /// Removing this item clears the envy and the item alone is worth no more than the envier's bundle.
    Item(usize),
}

/// Verdicts for the ordered pair (`envier`, `envied`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub envier: usize,
    pub envied: usize,
    pub ef: bool,
    pub ef1: bool,
    pub efl: bool,
    pub efx: bool,
    /// First item whose removal clears the envy (EF1 clause); `None` without envy.
    pub ef1_witness: Option<usize>,
    pub efl_witness: Option<EflWitness>,
    /// First item whose removal still leaves envy (EFX counterexample).
    pub efx_violation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnvyReport {
    pub pairs: Vec<PairVerdict>,
}

impl EnvyReport {
    pub fn is_ef(&self) -> bool {
        self.pairs.iter().all(|p| p.ef)
    }
    pub fn is_ef1(&self) -> bool {
        self.pairs.iter().all(|p| p.ef1)
    }
    pub fn is_efl(&self) -> bool {
        self.pairs.iter().all(|p| p.efl)
    }
    pub fn is_efx(&self) -> bool {
        self.pairs.iter().all(|p| p.efx)
    }
    pub fn pair(&self, envier: usize, envied: usize) -> Option<&PairVerdict> {
        self.pairs.iter().find(|p| p.envier == envier && p.envied == envied)
    }
}

/// Evaluates EF, EF1, EFL and EFX for every ordered pair of distinct agents.
pub fn check_allocation(inst: &Instance, alloc: &Allocation) -> Result<EnvyReport> {
    alloc.require_valid(inst)?;
    let n = inst.n();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        let v = inst.valuation(i);
        let own = v.units(alloc.bundle(i));
        for j in (0..n).filter(|&j| j != i) {
            pairs.push(pair_verdict(v, i, j, own, alloc.bundle(j)));
        }
    }
    Ok(EnvyReport { pairs })
}

fn pair_verdict(v: &ScaledValuation, i: usize, j: usize, own: u128, other: ItemSet) -> PairVerdict {
    let total = v.units(other);
    let ef = own >= total;
    let ef1_witness = if ef { None } else { other.iter().find(|&g| own >= total - v.weight(g)) };
    let ef1 = ef || ef1_witness.is_some();
    let positives = other.iter().filter(|&g| v.weight(g) > 0).count();
    let efl_witness = if ef {
        None
    } else if positives <= 1 {
        Some(EflWitness::AtMostOnePositive)
    } else {
        other
            .iter()
            .find(|&g| own >= total - v.weight(g) && own >= v.weight(g))
            .map(EflWitness::Item)
    };
    let efx_violation = other.iter().find(|&g| own < total - v.weight(g));
    PairVerdict {
        envier: i,
        envied: j,
        ef,
        ef1,
        efl: ef || efl_witness.is_some(),
        efx: efx_violation.is_none(),
        ef1_witness,
        efl_witness,
        efx_violation,
    }
}

/// An EEFX certificate: a split of `M \ bundle` into `n - 1` parts, none strongly envied by `owner`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub owner: usize,
    pub bundle: ItemSet,
    pub parts: Partition,
}

impl Certificate {
    /// Re-checks the certificate against its defining inequality.
    pub fn is_valid(&self, inst: &Instance) -> bool {
        if self.owner >= inst.n()
            || self.parts.k() != inst.n() - 1
            || !self.bundle.fits(inst.m())
            || self.parts.ground() != inst.items() - self.bundle
            || Partition::new(self.parts.parts().to_vec(), self.parts.ground()).is_err()
        {
            return false;
        }
        let v = inst.valuation(self.owner);
        let own = v.units(self.bundle);
        max_removal(v, self.parts.parts()).is_none_or(|r| r.units <= own)
    }
}

/// Exhaustive certificate search for one agent, reusable across many bundles.
pub struct FeasibilitySearch<'a> {
    val: &'a ScaledValuation,
    agent: usize,
    n: usize,
    m: usize,
}

impl<'a> FeasibilitySearch<'a> {
    pub fn new(inst: &'a Instance, agent: usize) -> Result<Self> {
        inst.check_agent(agent)?;
        Ok(FeasibilitySearch { val: inst.valuation(agent), agent, n: inst.n(), m: inst.m() })
    }

    /// Parts of the first certificate in canonical order, or `None` if there is none.
    pub fn parts(&self, bundle: ItemSet) -> Result<Option<Vec<ItemSet>>> {
        let rest = ItemSet::full(self.m) - bundle;
        if self.n == 1 {
            return Ok(rest.is_empty().then(Vec::new));
        }
        if rest.len() > MAX_PARTITION_GROUND {
            return Err(resource(format!(
                "EEFX search over {} remaining items exceeds the {MAX_PARTITION_GROUND}-item cap",
                rest.len()
            )));
        }
        let items: Vec<usize> = rest.iter().collect();
        let mut dfs = Dfs {
            val: self.val,
            items: &items,
            cap: self.val.units(bundle),
            parts: vec![ItemSet::EMPTY; self.n - 1],
            sums: vec![0; self.n - 1],
            mins: vec![u128::MAX; self.n - 1],
        };
        Ok(dfs.run(0, 0).then_some(dfs.parts))
    }

    pub fn certificate(&self, bundle: ItemSet) -> Result<Option<Certificate>> {
        let rest = ItemSet::full(self.m) - bundle;
        Ok(self.parts(bundle)?.map(|parts| Certificate {
            owner: self.agent,
            bundle,
            parts: Partition::from_parts_unchecked(parts, rest),
        }))
    }

    pub fn is_feasible(&self, bundle: ItemSet) -> Result<bool> {
        Ok(self.parts(bundle)?.is_some())
    }
}

struct Dfs<'a> {
    val: &'a ScaledValuation,
    items: &'a [usize],
    cap: u128,
    parts: Vec<ItemSet>,
    sums: Vec<u128>,
    mins: Vec<u128>,
}

impl Dfs<'_> {
    // Restricted-growth assignment in lexicographic order, so the first success is the
    // first certificate of the canonical partition stream. `sum - min` of a part never
    // decreases as items are added, so a part over the cap can be pruned at once.
    fn run(&mut self, t: usize, used: usize) -> bool {
        if t == self.items.len() {
            return true;
        }
        let g = self.items[t];
        let w = self.val.weight(g);
        let k = self.parts.len();
        for l in 0..=used.min(k - 1) {
            let (sum, min) = (self.sums[l], self.mins[l]);
            let new_sum = sum + w;
            let new_min = min.min(w);
            if new_sum - new_min > self.cap {
                continue;
            }
            self.sums[l] = new_sum;
            self.mins[l] = new_min;
            self.parts[l] = self.parts[l].with(g);
            if self.run(t + 1, used.max(l + 1)) {
                return true;
            }
            self.parts[l] = self.parts[l].without(g);
            self.sums[l] = sum;
            self.mins[l] = min;
        }
        false
    }
}

/// First EEFX certificate for `bundle` in canonical order, or `None` (definitive).
///
/// With a single agent the only feasible bundle is `M`, certified by zero parts.
pub fn is_eefx_feasible(inst: &Instance, agent: usize, bundle: ItemSet) -> Result<Option<Certificate>> {
    inst.check_set(bundle)?;
    FeasibilitySearch::new(inst, agent)?.certificate(bundle)
}

/// Verdict of the fast feasibility check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FastVerdict {
    Feasible(Certificate),
    /// A counting bound rules out every certificate.
    InfeasibleHint,
    Unknown,
}

/// Sufficient check: an EFX split of `M \ bundle` into `n - 1` parts that `agent`
/// does not strongly envy is a certificate. When it fails, a counting bound may still
/// prove infeasibility: in any certificate each part minus its largest item is worth at
/// most `v(bundle)`, and the part maxima are distinct items.
pub fn is_eefx_feasible_fast(inst: &Instance, agent: usize, bundle: ItemSet) -> Result<FastVerdict> {
    inst.check_agent(agent)?;
    inst.check_set(bundle)?;
    let v = inst.valuation(agent);
    let rest = inst.items() - bundle;
    let own = v.units(bundle);
    let parts = inst.n() - 1;
    if parts == 0 {
        return Ok(if rest.is_empty() {
            FastVerdict::Feasible(Certificate {
                owner: agent,
                bundle,
                parts: Partition::from_parts_unchecked(Vec::new(), rest),
            })
        } else {
            FastVerdict::InfeasibleHint
        });
    }
    let split = efx_partition_units(v, rest, parts);
    if max_removal(v, split.parts()).is_none_or(|r| r.units <= own) {
        return Ok(FastVerdict::Feasible(Certificate { owner: agent, bundle, parts: split }));
    }
    let mut weights: Vec<u128> = rest.iter().map(|g| v.weight(g)).collect();
    weights.sort_unstable_by(|a, b| b.cmp(a));
    let top: u128 = weights.iter().take(parts).sum();
    let floor = v.units(rest) - top;
    if floor > own * parts as u128 {
        return Ok(FastVerdict::InfeasibleHint);
    }
    Ok(FastVerdict::Unknown)
}

/// Per-agent certificates for an allocation; EEFX iff every entry is `Some`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EefxVerdict {
    pub certificates: Vec<Option<Certificate>>,
}

impl EefxVerdict {
    pub fn is_eefx(&self) -> bool {
        self.certificates.iter().all(Option::is_some)
    }

    pub fn failing_agents(&self) -> Vec<usize> {
        self.certificates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_none().then_some(i))
            .collect()
    }
}

pub fn is_allocation_eefx(inst: &Instance, alloc: &Allocation) -> Result<EefxVerdict> {
    alloc.require_valid(inst)?;
    let certificates = (0..inst.n())
        .map(|i| is_eefx_feasible(inst, i, alloc.bundle(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EefxVerdict { certificates })
}

/// EEFX feasibility of every bundle `0..2^m` for one agent, indexed by bitmask.
/// The sweep runs in parallel; each entry depends only on its own bundle.
pub fn feasibility_table(inst: &Instance, agent: usize) -> Result<Vec<bool>> {
    let search = FeasibilitySearch::new(inst, agent)?;
    if inst.m() > MAX_PARTITION_GROUND {
        return Err(resource(format!(
            "feasibility table needs m <= {MAX_PARTITION_GROUND}, got {}",
            inst.m()
        )));
    }
    (0u32..1 << inst.m())
        .into_par_iter()
        .map(|bits| search.is_feasible(ItemSet::from_bits(bits)))
        .collect()
}
