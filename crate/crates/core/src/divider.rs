//! Lone-divider allocation with envy-free matchings, the constructive divisions behind
//! residual self-feasibility of θ, allocation completion, and the end-to-end solver.

use std::collections::VecDeque;

use serde::Serialize;

use crate::combinat::{partitions_into, Partition};
use crate::efxpart::{efx_partition_units, max_removal, MAX_BRUTEFORCE_GROUND};
use crate::error::{invariant, resource, usage, Error, Result};
use crate::fairness::{check_allocation, is_allocation_eefx, EefxVerdict, EnvyReport};
use crate::instance::{Allocation, Instance, ScaledValuation};
use crate::itemset::ItemSet;
use crate::shares::{ShareContext, MAX_SHARE_ITEMS};
use crate::value::ExactValue;

/// Largest `n^(leftover items)` the completion fallback will scan.
pub const COMPLETION_BUDGET: u64 = 10_000_000;
/// Guard against runaway reassignment loops in [`algorithm2`].
const MAX_EVENTS: usize = 100_000;

/// Bipartite graph between agents and candidate bundles; agent `agents[a]` is adjacent
/// to bundle `b` iff it values the bundle at least its threshold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeasibilityGraph {
    pub agents: Vec<usize>,
    pub bundles: Vec<ItemSet>,
    /// `adj[a]`: ascending bundle indices adjacent to `agents[a]`.
    pub adj: Vec<Vec<usize>>,
}

impl FeasibilityGraph {
    pub fn build(inst: &Instance, agents: &[usize], bundles: &[ItemSet], thresholds: &[ExactValue]) -> Result<Self> {
        if thresholds.len() != inst.n() {
            return Err(usage("need one threshold per agent"));
        }
        let mut adj = Vec::with_capacity(agents.len());
        for &j in agents {
            inst.check_agent(j)?;
            let v = inst.valuation(j);
            let need = v.threshold_units(&thresholds[j]);
            adj.push((0..bundles.len()).filter(|&k| v.units(bundles[k]) >= need).collect());
        }
        Ok(FeasibilityGraph { agents: agents.to_vec(), bundles: bundles.to_vec(), adj })
    }

    /// Graph from explicit adjacency lists (positions, not agent ids).
    pub fn from_adjacency(n_bundles: usize, adj: Vec<Vec<usize>>) -> Self {
        FeasibilityGraph {
            agents: (0..adj.len()).collect(),
            bundles: vec![ItemSet::EMPTY; n_bundles],
            adj,
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }
}

/// `(agent position, bundle index)` pairs.
pub type Matching = Vec<(usize, usize)>;

/// Whether `matching` is a matching of `g` with no edge from an unmatched agent to a
/// matched bundle.
pub fn is_envy_free_matching(g: &FeasibilityGraph, matching: &[(usize, usize)]) -> bool {
    let mut agent_used = vec![false; g.agents.len()];
    let mut bundle_used = vec![false; g.bundles.len()];
    for &(a, b) in matching {
        if a >= agent_used.len() || b >= bundle_used.len() || agent_used[a] || bundle_used[b] || !g.has_edge(a, b) {
            return false;
        }
        agent_used[a] = true;
        bundle_used[b] = true;
    }
    (0..g.agents.len())
        .filter(|&a| !agent_used[a])
        .all(|a| g.adj[a].iter().all(|&b| !bundle_used[b]))
}

/// Maximum matching (augmenting paths), then drop every agent and bundle reachable
/// from an unmatched agent along alternating paths. The surviving pairs form an
/// envy-free matching, sorted by agent position.
///
/// The result is nonempty whenever there are as many agents as bundles and every
/// bundle has an edge: if everything were dropped, an unmatched bundle's neighbour
/// would close an augmenting path.
pub fn envy_free_matching(g: &FeasibilityGraph) -> Matching {
    let na = g.agents.len();
    let nb = g.bundles.len();
    let mut bundle_of: Vec<Option<usize>> = vec![None; na];
    let mut agent_of: Vec<Option<usize>> = vec![None; nb];

    fn augment(
        g: &FeasibilityGraph,
        a: usize,
        seen: &mut [bool],
        bundle_of: &mut [Option<usize>],
        agent_of: &mut [Option<usize>],
    ) -> bool {
        for &b in &g.adj[a] {
            if seen[b] {
                continue;
            }
            seen[b] = true;
            if agent_of[b].is_none_or(|other| augment(g, other, seen, bundle_of, agent_of)) {
                agent_of[b] = Some(a);
                bundle_of[a] = Some(b);
                return true;
            }
        }
        false
    }

    for a in 0..na {
        let mut seen = vec![false; nb];
        augment(g, a, &mut seen, &mut bundle_of, &mut agent_of);
    }

    let mut agent_hit = vec![false; na];
    let mut bundle_hit = vec![false; nb];
    let mut queue: VecDeque<usize> = (0..na).filter(|&a| bundle_of[a].is_none()).collect();
    for &a in &queue {
        agent_hit[a] = true;
    }
    while let Some(a) = queue.pop_front() {
        for &b in &g.adj[a] {
            if bundle_hit[b] {
                continue;
            }
            bundle_hit[b] = true;
            if let Some(next) = agent_of[b] {
                if !agent_hit[next] {
                    agent_hit[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    (0..na)
        .filter(|&a| !agent_hit[a])
        .filter_map(|a| bundle_of[a].map(|b| (a, b)))
        .collect()
}

/// First partition of `pool` into `parts` parts, in canonical order, with every part
/// worth at least `threshold` to `agent`.
pub fn divide_bruteforce(
    inst: &Instance,
    agent: usize,
    pool: ItemSet,
    parts: usize,
    threshold: &ExactValue,
) -> Result<Option<Partition>> {
    inst.check_agent(agent)?;
    inst.check_set(pool)?;
    if pool.len() > MAX_BRUTEFORCE_GROUND {
        return Err(resource(format!(
            "brute-force division needs at most {MAX_BRUTEFORCE_GROUND} items, got {}",
            pool.len()
        )));
    }
    let v = inst.valuation(agent);
    let need = v.threshold_units(threshold);
    Ok(partitions_into(pool, parts)?.find(|p| p.parts().iter().all(|s| v.units(*s) >= need)))
}

/// Constructive division for one agent, with its θ and `T` computed once.
#[derive(Clone, Debug)]
pub struct ConstructiveDivider<'a> {
    agent: usize,
    val: &'a ScaledValuation,
    n: usize,
    items: ItemSet,
    theta: u128,
    t: Option<ItemSet>,
}

impl<'a> ConstructiveDivider<'a> {
    pub fn new(inst: &'a Instance, agent: usize) -> Result<Self> {
        let ctx = ShareContext::new(inst, agent)?;
        let t = ctx.max_infeasible_bundle()?;
        let theta = ctx.theta_units()?;
        Ok(ConstructiveDivider { agent, val: inst.valuation(agent), n: inst.n(), items: inst.items(), theta, t })
    }

    pub fn theta(&self) -> ExactValue {
        self.val.exact(self.theta)
    }

    /// The largest-valued infeasible bundle, `None` when θ = 0.
    pub fn t(&self) -> Option<ItemSet> {
        self.t
    }

    fn fail(&self, what: &str) -> Error {
        invariant(format!("agent {}: {what}", self.agent + 1))
    }

    fn removed_union(&self, removed: &[ItemSet]) -> Result<ItemSet> {
        if removed.len() >= self.n {
            return Err(usage(format!("at most {} removed bundles allowed", self.n - 1)));
        }
        let mut union = ItemSet::EMPTY;
        for s in removed {
            if !s.fits(self.items.len()) || !union.is_disjoint(*s) {
                return Err(usage(format!("removed bundle {s} overlaps another or is out of range")));
            }
            if self.val.units(*s) >= self.theta {
                return Err(usage(format!("removed bundle {s} is not worth less than θ")));
            }
            union = union | *s;
        }
        Ok(union)
    }

    /// See [`divide_constructive`].
    pub fn divide(&self, removed: &[ItemSet]) -> Result<Partition> {
        let s = self.removed_union(removed)?;
        let pool = self.items - s;
        let parts = self.n - removed.len();
        let out = if self.theta == 0 {
            let mut v = vec![ItemSet::EMPTY; parts];
            v[0] = pool;
            Partition::from_parts_unchecked(v, pool)
        } else if parts == 1 {
            Partition::from_parts_unchecked(vec![pool], pool)
        } else if removed.is_empty() {
            self.divide_whole()?
        } else {
            let t = self.t.expect("θ > 0 implies T exists");
            let y = self.lemma4(removed, t)?;
            self.check_lemma4(&y, t & s)?;
            self.lemma5(s, t - s, removed.len())?
        };
        if let Some(bad) = out.parts().iter().find(|p| self.val.units(**p) < self.theta) {
            return Err(self.fail(&format!("constructive part {bad} is worth less than θ")));
        }
        Ok(out)
    }

    /// No removed bundles: EFX split of `M \ T` into `n - 1` parts, then move the
    /// max-removal item onto `T`.
    fn divide_whole(&self) -> Result<Partition> {
        let t = self.t.expect("θ > 0 implies T exists");
        let y = efx_partition_units(self.val, self.items - t, self.n - 1);
        let r = max_removal(self.val, y.parts()).ok_or_else(|| self.fail("M \\ T is empty"))?;
        let mut parts = vec![t.with(r.item)];
        for (j, p) in y.parts().iter().enumerate() {
            parts.push(if j == r.part { p.without(r.item) } else { *p });
        }
        Ok(Partition::from_parts_unchecked(parts, self.items).canonical())
    }

    /// Partition `(Y_1..Y_k)` of the removed items: `Y_1 ⊇ T ∩ S` worth less than θ,
    /// and every single-item removal from `Y_2..Y_k` worth less than θ.
    fn lemma4(&self, removed: &[ItemSet], t: ItemSet) -> Result<Partition> {
        let s = removed.iter().fold(ItemSet::EMPTY, |a, b| a | *b);
        let k = removed.len();
        if k == 1 {
            return Ok(Partition::from_parts_unchecked(vec![s], s));
        }
        let mut y1 = t & s;
        for _ in 0..=s.len() {
            if self.val.units(y1) >= self.theta {
                return Err(self.fail(&format!("Y1 = {y1} reached θ")));
            }
            let rest = efx_partition_units(self.val, s - y1, k - 1);
            match max_removal(self.val, rest.parts()) {
                Some(r) if r.units >= self.theta => {
                    y1 = y1.with(r.item);
                }
                _ => {
                    let mut parts = vec![y1];
                    parts.extend_from_slice(rest.parts());
                    return Ok(Partition::from_parts_unchecked(parts, s));
                }
            }
        }
        Err(self.fail("lemma-4 loop exceeded |S| iterations"))
    }

    fn check_lemma4(&self, y: &Partition, r: ItemSet) -> Result<()> {
        let parts = y.parts();
        let ok = r.is_subset(parts[0])
            && self.val.units(parts[0]) < self.theta
            && max_removal(self.val, &parts[1..]).is_none_or(|m| m.units < self.theta);
        if ok {
            Ok(())
        } else {
            Err(self.fail(&format!("lemma-4 postcondition failed for {parts:?}")))
        }
    }

    /// Partition `(X_1..X_{n-k})` of `M \ S` with `X_1 ⊇ T \ S` and every part worth at least θ.
    fn lemma5(&self, s: ItemSet, u: ItemSet, k: usize) -> Result<Partition> {
        let ground = self.items - s;
        let others = self.n - k - 1;
        if others == 0 {
            return Ok(Partition::from_parts_unchecked(vec![ground], ground));
        }
        let mut parts = vec![u];
        parts.extend(efx_partition_units(self.val, ground - u, others).into_parts());
        if let Some(bad) = parts[1..].iter().find(|p| self.val.units(**p) < self.theta) {
            return Err(self.fail(&format!("EFX part {bad} of (M \\ S) \\ U is worth less than θ")));
        }
        while self.val.units(parts[0]) < self.theta {
            let r = max_removal(self.val, &parts[1..]).ok_or_else(|| self.fail("no item left to move into X1"))?;
            if r.units < self.theta {
                return Err(self.fail("moving the max-removal item would drop a part below θ"));
            }
            parts[r.part + 1] = parts[r.part + 1].without(r.item);
            parts[0] = parts[0].with(r.item);
        }
        Ok(Partition::from_parts_unchecked(parts, ground))
    }
}

/// Partition of `M \ ∪removed` into `n - |removed|` parts each worth at least θ to
/// `agent`. Requires a non-degenerate valuation for `agent` and removed bundles that
/// are pairwise disjoint and each worth less than θ.
pub fn divide_constructive(inst: &Instance, agent: usize, removed: &[ItemSet]) -> Result<Partition> {
    ConstructiveDivider::new(inst, agent)?.divide(removed)
}

/// Constructive partition `(Y_1..Y_k)` of `S = ∪removed` with `T ∩ S ⊆ Y_1`, `v(Y_1) < θ`,
/// and `v(Y_j \ {g}) < θ` for `j >= 2`. `Y_1` comes first in the output.
pub fn lemma4_partition(inst: &Instance, agent: usize, removed: &[ItemSet]) -> Result<Partition> {
    let lens = ConstructiveDivider::new(inst, agent)?;
    let s = lens.removed_union(removed)?;
    if removed.is_empty() {
        return Err(usage("need at least one removed bundle"));
    }
    let t = lens.t.ok_or_else(|| usage("θ = 0: no infeasible bundle"))?;
    let y = lens.lemma4(removed, t)?;
    lens.check_lemma4(&y, t & s)?;
    Ok(y)
}

/// Constructive partition `(X_1..X_{n-k})` of `M \ ∪removed` with `T \ S ⊆ X_1` and
/// every part worth at least θ. `X_1` comes first in the output.
pub fn lemma5_divide(inst: &Instance, agent: usize, removed: &[ItemSet]) -> Result<Partition> {
    let lens = ConstructiveDivider::new(inst, agent)?;
    let s = lens.removed_union(removed)?;
    if removed.is_empty() {
        return Err(usage("need at least one removed bundle"));
    }
    let t = lens.t.ok_or_else(|| usage("θ = 0: no infeasible bundle"))?;
    lens.lemma5(s, t - s, removed.len())
}

/// How the lone divider splits the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivideStrategy {
    /// [`divide_constructive`]; thresholds must equal θ.
    Constructive,
    /// [`divide_bruteforce`] at the agent's threshold.
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum DividerEvent {
    Matched { divider: usize, assigned: Vec<(usize, ItemSet)> },
    Reassigned { agent: usize, bundle: ItemSet, released: ItemSet },
}

/// State of the lone-divider process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DividerState {
    pub active: Vec<usize>,
    pub settled: Vec<Option<ItemSet>>,
    pub pool: ItemSet,
    pub thresholds: Vec<ExactValue>,
    /// Matching rounds run so far.
    pub round: usize,
    pub events: Vec<DividerEvent>,
}

impl DividerState {
    fn new(inst: &Instance, thresholds: &[ExactValue]) -> Result<Self> {
        if thresholds.len() != inst.n() {
            return Err(usage(format!("{} thresholds for {} agents", thresholds.len(), inst.n())));
        }
        Ok(DividerState {
            active: (0..inst.n()).collect(),
            settled: vec![None; inst.n()],
            pool: inst.items(),
            thresholds: thresholds.to_vec(),
            round: 0,
            events: Vec::new(),
        })
    }

    fn removed(&self) -> Vec<ItemSet> {
        self.settled.iter().flatten().copied().collect()
    }

    fn settled_agents(&self) -> impl Iterator<Item = (usize, ItemSet)> + '_ {
        self.settled.iter().enumerate().filter_map(|(j, b)| b.map(|b| (j, b)))
    }

    fn check(&self, inst: &Instance) -> Result<()> {
        let mut seen = self.pool;
        for (j, b) in self.settled_agents() {
            if !seen.is_disjoint(b) {
                return Err(invariant(format!("bundle of agent {} overlaps pool or another bundle", j + 1)));
            }
            seen = seen | b;
            let v = inst.valuation(j);
            if v.units(b) < v.threshold_units(&self.thresholds[j]) {
                return Err(invariant(format!("agent {} settled below threshold", j + 1)));
            }
        }
        if seen != inst.items() {
            return Err(invariant("pool and settled bundles do not cover M"));
        }
        Ok(())
    }

    /// Partial allocation of the settled bundles (empty for active agents).
    pub fn partial_allocation(&self, inst: &Instance) -> Result<Allocation> {
        Allocation::new(inst, self.settled.iter().map(|b| b.unwrap_or(ItemSet::EMPTY)).collect())
    }
}

struct Divider<'a> {
    inst: &'a Instance,
    strategy: DivideStrategy,
    dividers: Vec<Option<ConstructiveDivider<'a>>>,
}

impl<'a> Divider<'a> {
    fn new(inst: &'a Instance, strategy: DivideStrategy) -> Self {
        Divider { inst, strategy, dividers: vec![None; inst.n()] }
    }

    fn divide(&mut self, state: &DividerState, i: usize) -> Result<Vec<ItemSet>> {
        let removed = state.removed();
        match self.strategy {
            DivideStrategy::Constructive => {
                if self.dividers[i].is_none() {
                    let lens = ConstructiveDivider::new(self.inst, i)?;
                    if lens.theta() != state.thresholds[i] {
                        return Err(usage(format!(
                            "constructive division needs threshold θ = {} for agent {}",
                            lens.theta(),
                            i + 1
                        )));
                    }
                    self.dividers[i] = Some(lens);
                }
                Ok(self.dividers[i].as_ref().expect("just set").divide(&removed)?.into_parts())
            }
            DivideStrategy::BruteForce => {
                let parts = state.active.len();
                divide_bruteforce(self.inst, i, state.pool, parts, &state.thresholds[i])?
                    .map(Partition::into_parts)
                    .ok_or_else(|| {
                        invariant(format!("agent {} cannot split the pool into {parts} acceptable parts", i + 1))
                    })
            }
        }
    }
}

fn run_matching(inst: &Instance, state: &mut DividerState, divider: usize, bundles: &[ItemSet]) -> Result<()> {
    let g = FeasibilityGraph::build(inst, &state.active, bundles, &state.thresholds)?;
    let matching = envy_free_matching(&g);
    if !is_envy_free_matching(&g, &matching) {
        return Err(invariant("matching is not envy-free"));
    }
    if matching.is_empty() {
        return Err(invariant(format!("empty envy-free matching in round {}", state.round + 1)));
    }
    let mut assigned = Vec::with_capacity(matching.len());
    for &(a, b) in &matching {
        let agent = g.agents[a];
        state.settled[agent] = Some(bundles[b]);
        state.pool = state.pool - bundles[b];
        assigned.push((agent, bundles[b]));
    }
    state.active.retain(|j| state.settled[*j].is_none());
    state.round += 1;
    state.events.push(DividerEvent::Matched { divider, assigned });
    state.check(inst)?;
    if state.round > inst.n() {
        return Err(invariant("more matching rounds than agents"));
    }
    Ok(())
}

/// Plain lone divider: the lowest active agent splits the pool, an envy-free matching
/// settles some agents, repeat until everyone is settled.
pub fn algorithm1(inst: &Instance, thresholds: &[ExactValue], strategy: DivideStrategy) -> Result<DividerState> {
    let mut state = DividerState::new(inst, thresholds)?;
    let mut divider = Divider::new(inst, strategy);
    while let Some(&i) = state.active.first() {
        let bundles = divider.divide(&state, i)?;
        run_matching(inst, &mut state, i, &bundles)?;
    }
    Ok(state)
}

/// Greedy inclusion-minimal subset of `bundle` satisfying `keep`, removing items in
/// descending index order. `keep` must be monotone (supersets of a kept set are kept).
fn shrink(bundle: ItemSet, keep: impl Fn(ItemSet) -> bool) -> ItemSet {
    let mut cur = bundle;
    for g in bundle.iter_desc() {
        let smaller = cur.without(g);
        if keep(smaller) {
            cur = smaller;
        }
    }
    cur
}

fn potential(inst: &Instance, state: &DividerState) -> (usize, ExactValue) {
    let settled: Vec<(usize, ItemSet)> = state.settled_agents().collect();
    let sum = settled
        .iter()
        .map(|&(j, b)| inst.value(j, b).expect("validated state"))
        .sum();
    (settled.len(), sum)
}

/// Lone divider with bundle shrinking and reassignment to settled agents, keeping the
/// settled bundles free of strong envy among settled agents.
pub fn algorithm2(inst: &Instance, thresholds: &[ExactValue], strategy: DivideStrategy) -> Result<DividerState> {
    let mut state = DividerState::new(inst, thresholds)?;
    let mut divider = Divider::new(inst, strategy);
    let need: Vec<u128> = (0..inst.n())
        .map(|j| inst.valuation(j).threshold_units(&thresholds[j]))
        .collect();
    let mut last = potential(inst, &state);
    while let Some(&i) = state.active.first() {
        if state.events.len() >= MAX_EVENTS {
            return Err(invariant("reassignment loop did not settle"));
        }
        let bundles = divider.divide(&state, i)?;
        let active = state.active.clone();
        let acceptable = |b: ItemSet| active.iter().any(|&j| inst.valuation(j).units(b) >= need[j]);
        let shrunk: Vec<ItemSet> = bundles.iter().map(|&b| shrink(b, acceptable)).collect();

        let settled: Vec<(usize, ItemSet)> = state.settled_agents().collect();
        let envied = shrunk.iter().copied().find(|&b| {
            settled.iter().any(|&(j, own)| {
                let v = inst.valuation(j);
                let own = v.units(own);
                let total = v.units(b);
                b.iter().any(|g| total - v.weight(g) > own)
            })
        });

        if let Some(b) = envied {
            let envies = |s: ItemSet, j: usize, own: ItemSet| {
                let v = inst.valuation(j);
                v.units(s) > v.units(own)
            };
            let smaller = shrink(b, |s| settled.iter().any(|&(j, own)| envies(s, j, own)));
            let &(j, old) = settled
                .iter()
                .find(|&&(j, own)| envies(smaller, j, own))
                .expect("shrunk bundle is still envied");
            state.settled[j] = Some(smaller);
            state.pool = (state.pool - smaller) | old;
            state.events.push(DividerEvent::Reassigned { agent: j, bundle: smaller, released: old });
            state.check(inst)?;
        } else {
            run_matching(inst, &mut state, i, &shrunk)?;
        }

        let now = potential(inst, &state);
        if now <= last {
            return Err(invariant(format!("divider potential did not increase: {last:?} -> {now:?}")));
        }
        last = now;
    }

    let partial = state.partial_allocation(inst)?;
    for (j, own) in state.settled_agents() {
        for (l, other) in state.settled_agents().filter(|&(l, _)| l != j) {
            if crate::fairness::strongly_envies(inst, j, own, other)?.is_some() {
                return Err(invariant(format!(
                    "agent {} strongly envies agent {} in the partial allocation {:?}",
                    j + 1,
                    l + 1,
                    partial.bundles()
                )));
            }
        }
    }
    Ok(state)
}

/// Hands out the pool on top of a fully settled state and returns a complete allocation
/// that passes the EFL check.
///
/// While some agent envies the pool, the smallest such agent swaps its bundle for an
/// inclusion-minimal envied subset of the pool. Otherwise envy cycles are rotated away and
/// the lowest source agent receives the lowest pool item, which no agent values above its
/// own bundle. Agents only ever trade up, so every value stays at or above its threshold.
/// An exhaustive search over item additions backs up the EFL check.
pub fn complete_allocation(inst: &Instance, state: &DividerState) -> Result<Allocation> {
    let base: Vec<ItemSet> = state
        .settled
        .iter()
        .enumerate()
        .map(|(j, b)| b.ok_or_else(|| usage(format!("agent {} is not settled", j + 1))))
        .collect::<Result<_>>()?;
    let greedy = envy_cycle_completion(inst, base.clone(), state.pool)?;
    if check_allocation(inst, &greedy)?.is_efl() {
        return Ok(greedy);
    }
    exhaustive_completion(inst, &base, state.pool)
}

fn envies(inst: &Instance, i: usize, bundles: &[ItemSet], j: usize) -> bool {
    let v = inst.valuation(i);
    v.units(bundles[j]) > v.units(bundles[i])
}

fn find_envy_cycle(inst: &Instance, bundles: &[ItemSet]) -> Option<Vec<usize>> {
    let n = bundles.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(
        inst: &Instance,
        bundles: &[ItemSet],
        i: usize,
        color: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        color[i] = 1;
        stack.push(i);
        for j in 0..bundles.len() {
            if j == i || !envies(inst, i, bundles, j) {
                continue;
            }
            if color[j] == 1 {
                let start = stack.iter().position(|&x| x == j).expect("on stack");
                return Some(stack[start..].to_vec());
            }
            if color[j] == 0 {
                if let Some(c) = dfs(inst, bundles, j, color, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        color[i] = 2;
        None
    }
    for i in 0..n {
        if color[i] == 0 {
            if let Some(c) = dfs(inst, bundles, i, &mut color, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

fn envy_cycle_completion(inst: &Instance, mut bundles: Vec<ItemSet>, mut pool: ItemSet) -> Result<Allocation> {
    let n = bundles.len();
    let values = |bundles: &[ItemSet]| -> (ExactValue, usize) {
        let sum = (0..n).map(|j| inst.value(j, bundles[j]).expect("validated bundles")).sum();
        (sum, bundles.iter().map(|b| b.len()).sum())
    };
    let mut last = values(&bundles);
    while !pool.is_empty() {
        let envies_pool = |s: ItemSet, bundles: &[ItemSet]| {
            (0..n).find(|&j| {
                let v = inst.valuation(j);
                v.units(s) > v.units(bundles[j])
            })
        };
        if envies_pool(pool, &bundles).is_some() {
            // an agent trades its bundle for a minimal envied subset of the pool
            let part = shrink(pool, |s| envies_pool(s, &bundles).is_some());
            let j = envies_pool(part, &bundles).expect("shrunk subset is still envied");
            pool = (pool - part) | bundles[j];
            bundles[j] = part;
        } else {
            while let Some(cycle) = find_envy_cycle(inst, &bundles) {
                // each agent on the cycle takes the bundle it envies
                let taken: Vec<ItemSet> = (0..cycle.len()).map(|p| bundles[cycle[(p + 1) % cycle.len()]]).collect();
                for (p, &a) in cycle.iter().enumerate() {
                    bundles[a] = taken[p];
                }
            }
            let source = (0..n)
                .find(|&j| (0..n).all(|i| i == j || !envies(inst, i, &bundles, j)))
                .ok_or_else(|| invariant("acyclic envy graph without a source"))?;
            let g = pool.first().expect("pool is nonempty");
            bundles[source] = bundles[source].with(g);
            pool = pool.without(g);
        }
        let now = values(&bundles);
        if now <= last {
            return Err(invariant("completion potential did not increase"));
        }
        last = now;
    }
    Allocation::new(inst, bundles)
}

fn exhaustive_completion(inst: &Instance, base: &[ItemSet], pool: ItemSet) -> Result<Allocation> {
    let n = inst.n() as u64;
    let left: Vec<usize> = pool.iter().collect();
    let total = (0..left.len()).try_fold(1u64, |acc, _| acc.checked_mul(n).filter(|&x| x <= COMPLETION_BUDGET));
    let Some(total) = total else {
        return Err(resource(format!("completion search over {n}^{} assignments exceeds budget", left.len())));
    };
    for code in 0..total {
        let mut bundles = base.to_vec();
        let mut c = code;
        for &g in &left {
            let j = (c % n) as usize;
            c /= n;
            bundles[j] = bundles[j].with(g);
        }
        let alloc = Allocation::new(inst, bundles)?;
        if check_allocation(inst, &alloc)?.is_efl() {
            return Ok(alloc);
        }
    }
    Err(invariant("no EFL completion of the partial allocation exists"))
}

/// Output of [`solve_efl_eefx`].
#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub allocation: Vec<ItemSet>,
    /// Whether the solver worked on a perturbed copy of the instance.
    pub perturbed: bool,
    /// θ of each agent in the working instance (integer-scaled, perhaps perturbed).
    pub thetas: Vec<ExactValue>,
    pub state: DividerState,
    pub envy: EnvyReport,
    pub eefx: EefxVerdict,
}

impl Solution {
    pub fn to_allocation(&self, inst: &Instance) -> Result<Allocation> {
        Allocation::new(inst, self.allocation.clone())
    }
}

/// Complete allocation that is EFL and EEFX, audited against `inst`.
///
/// The instance is rescaled to integers per agent and perturbed when degenerate; every
/// strict or weak comparison the audits make carries over from the perturbed values to
/// the original ones.
pub fn solve_efl_eefx(inst: &Instance) -> Result<Solution> {
    if inst.m() > MAX_SHARE_ITEMS {
        return Err(resource(format!("solver needs m <= {MAX_SHARE_ITEMS}, got {}", inst.m())));
    }
    let scaled = inst.scaled_to_integers();
    let perturbed = !scaled.is_non_degenerate_all()?;
    let working = if perturbed { scaled.perturb()? } else { scaled };
    let thetas = (0..working.n())
        .map(|i| ShareContext::new(&working, i)?.theta())
        .collect::<Result<Vec<_>>>()?;
    let state = algorithm2(&working, &thetas, DivideStrategy::Constructive)?;
    let alloc = complete_allocation(&working, &state)?;

    let envy = check_allocation(inst, &alloc)?;
    let eefx = is_allocation_eefx(inst, &alloc)?;
    let below: Vec<usize> = (0..working.n())
        .filter(|&i| working.value(i, alloc.bundle(i)).map(|v| v < thetas[i]).unwrap_or(true))
        .collect();
    let solution = Solution { allocation: alloc.bundles().to_vec(), perturbed, thetas, state, envy, eefx };
    let mut reasons = Vec::new();
    if !alloc.is_complete() {
        reasons.push("allocation is incomplete".to_string());
    }
    if !solution.envy.is_efl() {
        reasons.push("EFL check failed".to_string());
    }
    if !solution.eefx.is_eefx() {
        reasons.push(format!("EEFX check failed for agents {:?}", solution.eefx.failing_agents()));
    }
    if !below.is_empty() {
        reasons.push(format!("agents {below:?} end below θ"));
    }
    if !reasons.is_empty() {
        return Err(Error::Audit { reason: reasons.join("; "), dump: format!("{solution:#?}") });
    }
    Ok(solution)
}
