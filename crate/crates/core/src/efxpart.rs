//! EFX partitions of an item set for a single additive valuation.
//!
//! A partition `(P_1..P_k)` is EFX for `v` when `v(P_j) >= v(P_l \ {g})` for all parts
//! `j`, `l` and items `g` in `P_l`. The local search below repeatedly moves an item
//! out of a part that the poorest part envies after removal. Zero-valued items are
//! kept out of the search (moving one would not change any value) and are parked in
//! a poorest part at the end, the only place where they cannot create a violation.

use crate::combinat::{partitions_into, Partition};
use crate::error::{invariant, resource, Result};
use crate::instance::ScaledValuation;
use crate::itemset::ItemSet;
use crate::value::ExactValue;

/// Largest ground set accepted by [`efx_partition_bruteforce`].
pub const MAX_BRUTEFORCE_GROUND: usize = 12;

/// The single-removal maximum over a list of parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxRemoval {
    pub part: usize,
    pub item: usize,
    /// `v(parts[part] \ {item})` in scaled units.
    pub units: u128,
}

/// `argmax v(P \ {g})` over the given parts, ties broken by smallest part index then
/// smallest item index. `None` when every part is empty.
pub fn max_removal(val: &ScaledValuation, parts: &[ItemSet]) -> Option<MaxRemoval> {
    let mut best: Option<MaxRemoval> = None;
    for (j, p) in parts.iter().enumerate() {
        let total = val.units(*p);
        for g in p.iter() {
            let units = total - val.weight(g);
            if best.is_none_or(|b| units > b.units) {
                best = Some(MaxRemoval { part: j, item: g, units });
            }
        }
    }
    best
}

/// Whether `parts` form an EFX partition for `val`.
pub fn is_efx_partition(val: &ScaledValuation, parts: &[ItemSet]) -> bool {
    let Some(min) = parts.iter().map(|p| val.units(*p)).min() else {
        return true;
    };
    max_removal(val, parts).is_none_or(|r| r.units <= min)
}

/// Result of a traced local search.
#[derive(Clone, Debug)]
pub struct EfxTrace {
    pub partition: Partition,
    /// Sorted part values (scaled units) before each move and after the last one.
    pub potentials: Vec<Vec<u128>>,
}

impl EfxTrace {
    pub fn moves(&self) -> usize {
        self.potentials.len().saturating_sub(1)
    }
}

/// EFX partition of `ground` into `k` parts for the given item weights.
pub fn efx_partition(weights: &[ExactValue], ground: ItemSet, k: usize) -> Result<Partition> {
    let val = ScaledValuation::from_values(weights)?;
    if !ground.fits(val.m()) {
        return Err(crate::error::usage("ground mentions items without a weight"));
    }
    if k == 0 {
        return Err(crate::error::usage("k must be at least 1"));
    }
    Ok(efx_partition_units(&val, ground, k))
}

/// [`efx_partition`] on an already scaled valuation. Panics if `k == 0`.
pub fn efx_partition_units(val: &ScaledValuation, ground: ItemSet, k: usize) -> Partition {
    local_search(val, ground, k, |_| Ok(())).expect("untraced search cannot fail")
}

/// Like [`efx_partition_units`] but records the potential (sorted part values) at
/// every step and checks that it strictly increases lexicographically.
pub fn efx_partition_traced(val: &ScaledValuation, ground: ItemSet, k: usize) -> Result<EfxTrace> {
    let mut potentials: Vec<Vec<u128>> = Vec::new();
    let partition = local_search(val, ground, k, |parts| {
        let mut pot: Vec<u128> = parts.iter().map(|p| val.units(*p)).collect();
        pot.sort_unstable();
        if let Some(prev) = potentials.last() {
            if pot <= *prev {
                return Err(invariant(format!(
                    "local-search potential did not increase: {prev:?} -> {pot:?}"
                )));
            }
        }
        potentials.push(pot);
        Ok(())
    })?;
    Ok(EfxTrace { partition, potentials })
}

fn local_search(
    val: &ScaledValuation,
    ground: ItemSet,
    k: usize,
    mut observe: impl FnMut(&[ItemSet]) -> Result<()>,
) -> Result<Partition> {
    assert!(k >= 1, "k must be at least 1");
    let (zeros, positive): (Vec<usize>, Vec<usize>) = ground.iter().partition(|&g| val.weight(g) == 0);

    // round-robin by descending weight, ties by item index
    let mut order = positive;
    order.sort_by(|&a, &b| val.weight(b).cmp(&val.weight(a)).then(a.cmp(&b)));
    let mut parts = vec![ItemSet::EMPTY; k];
    for (r, g) in order.into_iter().enumerate() {
        parts[r % k] = parts[r % k].with(g);
    }

    loop {
        observe(&parts)?;
        let values: Vec<u128> = parts.iter().map(|p| val.units(*p)).collect();
        let poorest = argmin(&values);
        let others: Vec<ItemSet> = parts
            .iter()
            .enumerate()
            .map(|(j, p)| if j == poorest { ItemSet::EMPTY } else { *p })
            .collect();
        match max_removal(val, &others) {
            Some(r) if r.units > values[poorest] => {
                parts[r.part] = parts[r.part].without(r.item);
                parts[poorest] = parts[poorest].with(r.item);
            }
            _ => break,
        }
    }

    if !zeros.is_empty() {
        let values: Vec<u128> = parts.iter().map(|p| val.units(*p)).collect();
        let poorest = argmin(&values);
        for g in zeros {
            parts[poorest] = parts[poorest].with(g);
        }
    }
    Ok(Partition::from_parts_unchecked(parts, ground).canonical())
}

fn argmin(values: &[u128]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = j;
        }
    }
    best
}

/// Exhaustive oracle: the first partition in canonical order maximizing the leximin++
/// key (part values ascending, ties by part size ascending, compared lexicographically).
/// Plain leximin is not enough once zero-valued items exist.
pub fn efx_partition_bruteforce(weights: &[ExactValue], ground: ItemSet, k: usize) -> Result<Partition> {
    let val = ScaledValuation::from_values(weights)?;
    if ground.len() > MAX_BRUTEFORCE_GROUND {
        return Err(resource(format!(
            "|ground| = {} exceeds the {MAX_BRUTEFORCE_GROUND}-item brute-force cap",
            ground.len()
        )));
    }
    let key = |p: &Partition| {
        let mut key: Vec<(u128, usize)> = p.parts().iter().map(|s| (val.units(*s), s.len())).collect();
        key.sort_unstable();
        key
    };
    let mut best: Option<(Vec<(u128, usize)>, Partition)> = None;
    for p in partitions_into(ground, k)? {
        let kp = key(&p);
        if best.as_ref().is_none_or(|(bk, _)| kp > *bk) {
            best = Some((kp, p));
        }
    }
    Ok(best.expect("at least one partition exists").1)
}
