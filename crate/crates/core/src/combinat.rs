//! Deterministic enumeration of subsets and of unlabeled partitions into `k` parts.
//!
//! Partitions are produced as restricted growth strings over the ground items in
//! ascending order: the first item goes to part 0, and each later item joins an
//! existing part or opens the next one (never beyond `k` parts). Parts are therefore
//! ordered by their smallest item, and empty parts trail at the end. The strings are
//! visited in lexicographic order, which is the "canonical order" used by every
//! first-hit search in the crate.

use serde::Serialize;

use crate::error::{resource, usage, Result};
use crate::itemset::ItemSet;

/// Largest ground set `partitions_into` will enumerate.
pub const MAX_PARTITION_GROUND: usize = 14;

/// `k` pairwise-disjoint parts whose union is `ground`. Empty parts are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Partition {
    parts: Vec<ItemSet>,
    ground: ItemSet,
}

impl Partition {
    /// Validating constructor.
    pub fn new(parts: Vec<ItemSet>, ground: ItemSet) -> Result<Self> {
        let mut seen = ItemSet::EMPTY;
        for p in &parts {
            if !seen.is_disjoint(*p) {
                return Err(usage(format!("part {p} overlaps another part")));
            }
            seen = seen | *p;
        }
        if seen != ground {
            return Err(usage(format!("parts cover {seen}, expected {ground}")));
        }
        Ok(Partition { parts, ground })
    }

    pub(crate) fn from_parts_unchecked(parts: Vec<ItemSet>, ground: ItemSet) -> Self {
        debug_assert!(Partition::new(parts.clone(), ground).is_ok());
        Partition { parts, ground }
    }

    pub fn parts(&self) -> &[ItemSet] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<ItemSet> {
        self.parts
    }

    pub fn ground(&self) -> ItemSet {
        self.ground
    }

    pub fn k(&self) -> usize {
        self.parts.len()
    }

    /// Same parts rearranged into canonical order (by smallest item, empties last).
    pub fn canonical(&self) -> Partition {
        let mut parts = self.parts.clone();
        parts.sort_by_key(|p| p.first().unwrap_or(usize::MAX));
        Partition { parts, ground: self.ground }
    }
}

/// All subsets of `ground` in ascending bitmask order.
pub fn subsets(ground: ItemSet) -> Subsets {
    Subsets { ground: ground.bits(), next: Some(0) }
}

pub struct Subsets {
    ground: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = ItemSet;

    fn next(&mut self) -> Option<ItemSet> {
        let cur = self.next?;
        // next submask above `cur`: fill the holes outside ground, add one, mask back
        let filled = cur as u64 | (!(self.ground as u64) & 0xffff_ffff);
        let succ = (filled + 1) as u32 & self.ground;
        self.next = (succ != 0).then_some(succ);
        Some(ItemSet::from_bits(cur))
    }
}

/// Lazily enumerates every partition of `ground` into `k` unlabeled parts (empties
/// allowed), each exactly once, in canonical order.
pub fn partitions_into(ground: ItemSet, k: usize) -> Result<Partitions> {
    if k == 0 {
        return Err(usage("partitions need at least one part"));
    }
    if ground.len() > MAX_PARTITION_GROUND {
        return Err(resource(format!(
            "|ground| = {} exceeds the {MAX_PARTITION_GROUND}-item partition cap",
            ground.len()
        )));
    }
    let items: Vec<usize> = ground.iter().collect();
    Ok(Partitions { labels: vec![0; items.len()], items, k, ground, started: false, done: false })
}

pub struct Partitions {
    items: Vec<usize>,
    labels: Vec<usize>,
    k: usize,
    ground: ItemSet,
    started: bool,
    done: bool,
}

impl Partitions {
    fn advance(&mut self) -> bool {
        let len = self.labels.len();
        // rightmost position whose label can still grow
        for i in (1..len).rev() {
            let prefix_max = self.labels[..i].iter().copied().max().unwrap_or(0);
            let cap = (prefix_max + 1).min(self.k - 1);
            if self.labels[i] < cap {
                self.labels[i] += 1;
                for l in &mut self.labels[i + 1..] {
                    *l = 0;
                }
                return true;
            }
        }
        false
    }

    fn current(&self) -> Partition {
        let mut parts = vec![ItemSet::EMPTY; self.k];
        for (&g, &l) in self.items.iter().zip(&self.labels) {
            parts[l] = parts[l].with(g);
        }
        Partition { parts, ground: self.ground }
    }
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.current())
    }
}

/// Stirling number of the second kind `S(n, k)`.
pub fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as u128 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k]
}

/// Number of partitions of an `n`-set into `k` unlabeled parts with empties allowed.
pub fn partition_count(n: usize, k: usize) -> u128 {
    (0..=k).map(|j| stirling2(n, j)).sum()
}
