//! Instances with additive valuations, allocations, and the non-degeneracy perturbation.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive};

use crate::error::{invariant, resource, usage, Result};
use crate::itemset::{ItemSet, MAX_ITEMS};
use crate::value::ExactValue;

/// Largest per-item weight, in scaled units, accepted by [`ScaledValuation`].
/// Keeps every subset sum of up to [`MAX_ITEMS`] items far below `u128::MAX`.
const MAX_SCALED_WEIGHT: u128 = 1 << 100;

/// One agent's valuation rescaled to integers: `v(S) = sum(weights[g]) / denom`.
///
/// All exhaustive routines compare values through this view, so every comparison is
/// an exact integer comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledValuation {
    weights: Vec<u128>,
    denom: BigUint,
}

impl ScaledValuation {
    pub fn from_values(values: &[ExactValue]) -> Result<Self> {
        let mut denom = BigInt::one();
        for v in values {
            if v.is_negative() {
                return Err(usage(format!("negative value {v}")));
            }
            denom = denom.lcm(v.denom());
        }
        let mut weights = Vec::with_capacity(values.len());
        for v in values {
            let scaled = v.numer() * (&denom / v.denom());
            let w = scaled
                .to_u128()
                .filter(|w| *w <= MAX_SCALED_WEIGHT)
                .ok_or_else(|| resource(format!("value {v} too large after scaling to integers")))?;
            weights.push(w);
        }
        let denom = denom.to_biguint().expect("lcm of positive denominators");
        Ok(ScaledValuation { weights, denom })
    }

    /// Integer weights taken as-is (denominator 1).
    pub fn from_units(weights: Vec<u128>) -> Self {
        ScaledValuation { weights, denom: BigUint::one() }
    }

    pub fn weights(&self) -> &[u128] {
        &self.weights
    }

    pub fn weight(&self, g: usize) -> u128 {
        self.weights[g]
    }

    pub fn denom(&self) -> &BigUint {
        &self.denom
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// Value of `s` in scaled units.
    pub fn units(&self, s: ItemSet) -> u128 {
        s.iter().map(|g| self.weights[g]).sum()
    }

    pub fn exact(&self, units: u128) -> ExactValue {
        ExactValue::from_big(
            BigInt::from(units),
            BigInt::from_biguint(Sign::Plus, self.denom.clone()),
        )
    }

    /// Smallest unit count `u` with `u / denom >= t`; `v(S) >= t` iff `units(S) >= threshold_units(t)`
    /// and `v(S) < t` iff `units(S) < threshold_units(t)`.
    pub fn threshold_units(&self, t: &ExactValue) -> u128 {
        if t.is_negative() || t.is_zero() {
            return 0;
        }
        let scaled = t.scaled_by(&self.denom);
        let ceil = scaled.numer().div_ceil(scaled.denom());
        ceil.to_u128().unwrap_or(u128::MAX)
    }

    /// Values of all `2^m` subsets of `0..m`, indexed by bitmask.
    pub fn subset_table(&self) -> Result<Vec<u128>> {
        let m = self.weights.len();
        if m > MAX_ITEMS {
            return Err(resource(format!("m = {m} exceeds the {MAX_ITEMS}-item cap")));
        }
        let mut table = vec![0u128; 1 << m];
        for mask in 1usize..table.len() {
            let low = mask.trailing_zeros() as usize;
            table[mask] = table[mask & (mask - 1)] + self.weights[low];
        }
        Ok(table)
    }
}

/// A fair-division instance: `n` agents, `m` items, additive nonnegative values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    values: Vec<Vec<ExactValue>>,
    scaled: Vec<ScaledValuation>,
    m: usize,
    label: Option<String>,
}

impl Instance {
    pub fn new(values: Vec<Vec<ExactValue>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(usage("an instance needs at least one agent"));
        }
        let m = values[0].len();
        if m > MAX_ITEMS {
            return Err(resource(format!("m = {m} exceeds the {MAX_ITEMS}-item cap")));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(usage(format!(
                    "agent {} has {} values, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
        }
        let scaled = values
            .iter()
            .map(|row| ScaledValuation::from_values(row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance { values, scaled, m, label: None })
    }

    pub fn from_integers<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        Instance::new(
            rows.iter()
                .map(|r| r.as_ref().iter().map(|&v| ExactValue::from_integer(v)).collect())
                .collect(),
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn items(&self) -> ItemSet {
        ItemSet::full(self.m)
    }

    pub fn values(&self) -> &[Vec<ExactValue>] {
        &self.values
    }

    pub fn item_value(&self, agent: usize, g: usize) -> &ExactValue {
        &self.values[agent][g]
    }

    pub fn valuation(&self, agent: usize) -> &ScaledValuation {
        &self.scaled[agent]
    }

    pub(crate) fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n() {
            return Err(usage(format!("agent index {agent} out of range (n = {})", self.n())));
        }
        Ok(())
    }

    pub(crate) fn check_set(&self, s: ItemSet) -> Result<()> {
        if !s.fits(self.m) {
            return Err(usage(format!("bundle {s} mentions items beyond m = {}", self.m)));
        }
        Ok(())
    }

    /// `v_agent(s)`, the additive sum of item values.
    pub fn value(&self, agent: usize, s: ItemSet) -> Result<ExactValue> {
        self.check_agent(agent)?;
        self.check_set(s)?;
        let v = &self.scaled[agent];
        Ok(v.exact(v.units(s)))
    }

    pub fn is_integral(&self) -> bool {
        self.values.iter().flatten().all(ExactValue::is_integer)
    }

    /// Multiplies each agent's row by the LCM of its denominators. Every envy and share
    /// notion compares values of a single agent, so per-agent positive scaling changes none
    /// of them.
    pub fn scaled_to_integers(&self) -> Instance {
        let values = self
            .scaled
            .iter()
            .map(|v| {
                v.weights()
                    .iter()
                    .map(|&w| ExactValue::from_big(BigInt::from(w), BigInt::one()))
                    .collect()
            })
            .collect();
        let mut out = Instance::new(values).expect("scaled weights are valid values");
        out.label = self.label.clone();
        out
    }

    /// Adds `(1/2)^(j+1)` to the value of item `j` (0-based) for every agent.
    ///
    /// Requires integer values. The offsets of any subset sum to less than 1 and encode
    /// the subset in binary, so distinct subsets get distinct values and every strict
    /// order between original subset values is kept.
    pub fn perturb(&self) -> Result<Instance> {
        if !self.is_integral() {
            return Err(usage(
                "perturbation needs integer values; rescale first (Instance::scaled_to_integers)",
            ));
        }
        let values = self
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| v + &ExactValue::half_pow(j as u32 + 1))
                    .collect()
            })
            .collect();
        let mut out = Instance::new(values)?;
        out.label = self.label.as_ref().map(|l| format!("{l} (perturbed)"));
        Ok(out)
    }

    /// Whether all `2^m` subsets get pairwise distinct values from `agent`.
    pub fn is_non_degenerate(&self, agent: usize) -> Result<bool> {
        self.check_agent(agent)?;
        let mut table = self.scaled[agent].subset_table()?;
        table.sort_unstable();
        Ok(table.windows(2).all(|w| w[0] != w[1]))
    }

    pub fn is_non_degenerate_all(&self) -> Result<bool> {
        for i in 0..self.n() {
            if !self.is_non_degenerate(i)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Per-agent bundles; `complete` iff they cover every item.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Allocation {
    bundles: Vec<ItemSet>,
    complete: bool,
}

impl Allocation {
    pub fn new(inst: &Instance, bundles: Vec<ItemSet>) -> Result<Self> {
        if bundles.len() != inst.n() {
            return Err(usage(format!(
                "allocation has {} bundles for {} agents",
                bundles.len(),
                inst.n()
            )));
        }
        let mut seen = ItemSet::EMPTY;
        for (i, b) in bundles.iter().enumerate() {
            inst.check_set(*b)?;
            if !seen.is_disjoint(*b) {
                return Err(usage(format!(
                    "bundle of agent {} overlaps an earlier bundle on {}",
                    i + 1,
                    seen & *b
                )));
            }
            seen = seen | *b;
        }
        let complete = seen == inst.items();
        Ok(Allocation { bundles, complete })
    }

    pub fn bundles(&self) -> &[ItemSet] {
        &self.bundles
    }

    pub fn bundle(&self, agent: usize) -> ItemSet {
        self.bundles[agent]
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn allocated(&self) -> ItemSet {
        self.bundles.iter().fold(ItemSet::EMPTY, |a, b| a | *b)
    }

    pub(crate) fn require_valid(&self, inst: &Instance) -> Result<()> {
        let rebuilt = Allocation::new(inst, self.bundles.clone())?;
        if rebuilt.complete != self.complete {
            return Err(invariant("allocation completeness flag is stale"));
        }
        Ok(())
    }
}
