//! Seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Result};
use crate::instance::Instance;
use crate::itemset::MAX_ITEMS;

/// `n x m` instance with values drawn uniformly from `0..=vmax`. Same seed, same instance.
pub fn random_instance(seed: u64, n: usize, m: usize, vmax: u64) -> Result<Instance> {
    if n == 0 || m > MAX_ITEMS {
        return Err(usage(format!("need n >= 1 and m <= {MAX_ITEMS}, got n = {n}, m = {m}")));
    }
    if vmax > i64::MAX as u64 {
        return Err(usage("vmax does not fit in i64"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(0..=vmax) as i64).collect())
        .collect();
    Ok(Instance::from_integers(&rows)?.with_label(format!("random seed={seed} n={n} m={m} vmax={vmax}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = random_instance(42, 3, 8, 20).unwrap();
        let b = random_instance(42, 3, 8, 20).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().flatten().all(|v| *v >= 0.into() && *v <= 20.into()));
        assert_ne!(random_instance(43, 3, 8, 20).unwrap().values(), a.values());
    }
}
