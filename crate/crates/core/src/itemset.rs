//! Bitmask subsets of the item universe.

use std::fmt;
use std::ops::{BitAnd, BitOr, Sub};

use crate::error::{usage, Result};

/// Hard cap on the number of items any instance may carry.
pub const MAX_ITEMS: usize = 24;

/// A subset of items `0..m`, stored as a bitmask (bit `g` set iff item `g` is present).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ItemSet(u32);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    pub fn empty() -> Self {
        ItemSet(0)
    }

    /// All items `0..m`. Panics if `m > MAX_ITEMS`.
    pub fn full(m: usize) -> Self {
        assert!(m <= MAX_ITEMS, "at most {MAX_ITEMS} items supported");
        ItemSet(((1u64 << m) - 1) as u32)
    }

    pub fn singleton(g: usize) -> Self {
        assert!(g < MAX_ITEMS);
        ItemSet(1 << g)
    }

    pub fn from_bits(bits: u32) -> Self {
        ItemSet(bits)
    }

    /// Checked constructor: rejects bits at or above `m`.
    pub fn from_bits_checked(bits: u32, m: usize) -> Result<Self> {
        if m > MAX_ITEMS || (bits as u64) >> m != 0 {
            return Err(usage(format!("bitmask {bits:#x} has items outside 0..{m}")));
        }
        Ok(ItemSet(bits))
    }

    pub fn from_items<I: IntoIterator<Item = usize>>(items: I) -> Self {
        items.into_iter().fold(ItemSet(0), |s, g| s.with(g))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, g: usize) -> bool {
        g < 32 && self.0 >> g & 1 == 1
    }

    pub fn with(self, g: usize) -> Self {
        assert!(g < MAX_ITEMS);
        ItemSet(self.0 | 1 << g)
    }

    pub fn without(self, g: usize) -> Self {
        ItemSet(self.0 & !(1u32 << g))
    }

    pub fn union(self, other: ItemSet) -> Self {
        ItemSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ItemSet) -> Self {
        ItemSet(self.0 & other.0)
    }

    pub fn difference(self, other: ItemSet) -> Self {
        ItemSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: ItemSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Smallest item index, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// Whether every member is `< m`.
    pub fn fits(self, m: usize) -> bool {
        m >= 32 || self.0 >> m == 0
    }

    /// Items in ascending index order.
    pub fn iter(self) -> Items {
        Items(self.0)
    }

    /// Items in descending index order.
    pub fn iter_desc(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let g = 31 - bits.leading_zeros() as usize;
                bits &= !(1 << g);
                Some(g)
            }
        })
    }

    /// 1-based item numbers, matching the `g1..gm` naming used in reports.
    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|g| g + 1).collect()
    }
}

pub struct Items(u32);

impl Iterator for Items {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let g = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(g)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Items {}

impl IntoIterator for ItemSet {
    type Item = usize;
    type IntoIter = Items;
    fn into_iter(self) -> Items {
        self.iter()
    }
}

impl FromIterator<usize> for ItemSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        ItemSet::from_items(iter)
    }
}

impl BitOr for ItemSet {
    type Output = ItemSet;
    fn bitor(self, rhs: ItemSet) -> ItemSet {
        self.union(rhs)
    }
}

impl BitAnd for ItemSet {
    type Output = ItemSet;
    fn bitand(self, rhs: ItemSet) -> ItemSet {
        self.intersection(rhs)
    }
}

impl Sub for ItemSet {
    type Output = ItemSet;
    fn sub(self, rhs: ItemSet) -> ItemSet {
        self.difference(rhs)
    }
}

/// Serialized as the sorted list of 1-based item numbers.
impl serde::Serialize for ItemSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|g| g + 1))
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, g) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "g{}", g + 1)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_algebra() {
        let a = ItemSet::from_items([0, 2, 4]);
        let b = ItemSet::from_items([2, 3]);
        assert_eq!(a | b, ItemSet::from_items([0, 2, 3, 4]));
        assert_eq!(a & b, ItemSet::singleton(2));
        assert_eq!(a - b, ItemSet::from_items([0, 4]));
        assert!(ItemSet::singleton(2).is_subset(a));
        assert!(!a.is_disjoint(b));
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 2, 4]);
        assert_eq!(a.iter_desc().collect::<Vec<_>>(), vec![4, 2, 0]);
        assert_eq!(a.to_string(), "{g1,g3,g5}");
        assert_eq!(a.first(), Some(0));
        assert_eq!(ItemSet::EMPTY.first(), None);
    }

    #[test]
    fn checked_bits() {
        assert!(ItemSet::from_bits_checked(0b111, 3).is_ok());
        assert!(ItemSet::from_bits_checked(0b1000, 3).is_err());
        assert_eq!(ItemSet::full(24).len(), 24);
        assert_eq!(ItemSet::full(0), ItemSet::EMPTY);
    }
}
