//! Choosing `k` members whose simultaneous departure maximises or
//! minimises the one-step probability gain induced on the network.
//!
//! A candidate set `A` is treated as the cohort leaving in the next step.
//! Every alive member `w` then receives the multi-leaver gain with its left
//! neighbourhood set to `Γ_w ∩ A`. The default [`Objective::Cohort`] sums
//! that gain over all alive members; each summand is a monotone submodular
//! function of `A`, so greedy selection keeps its `1 - 1/e` guarantee.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cohort_gain, single_term};
use crate::error::{DecayError, Result};
use crate::graph::{DecayingNetwork, NodeId};

/// Default number of subsets the exact oracle may evaluate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

/// Greedy approximation factor for monotone submodular maximisation.
pub const GREEDY_FACTOR: f64 = 1.0 - 1.0 / std::f64::consts::E;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Cohort gain summed over every alive member.
    #[default]
    Cohort,
    /// Cohort gain summed over the members outside `A` only. Neither
    /// monotone nor submodular in general.
    Survivors,
    /// Additive single-leaver gains `Σ_{v∈A} Σ_{w∈Γ_v} 1-(1-π_v)(1-δ_vw)`,
    /// without the forced-leave term. Modular.
    Additive,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub optimal_value: f64,
    pub optimal_set: Vec<NodeId>,
    /// `objective / optimal_value`, 1 when both are zero.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    /// Chosen members in ascending id order.
    pub chosen: Vec<NodeId>,
    /// Chosen members in the order they were picked.
    pub picks: Vec<NodeId>,
    /// Marginal gain of each pick.
    pub round_gains: Vec<f64>,
    pub objective: f64,
    pub budget: usize,
    pub mode: Mode,
    pub kind: Objective,
    /// Number of marginal or set evaluations performed.
    pub evaluations: usize,
    /// Whether the set is a proven optimum (exhaustive enumeration).
    pub exact: bool,
    pub certificate: Option<Certificate>,
}

/// Precomputed alive neighbourhoods for fast set evaluations.
struct Evaluator {
    kind: Objective,
    /// Alive members, ascending.
    alive: Vec<NodeId>,
    /// For every node index: alive neighbours `u` with `(1-π_u)(1-δ_uw)`.
    nbrs: Vec<Vec<(usize, f64)>>,
    /// Additive single-leaver gain each member spreads over its neighbours.
    spread: Vec<f64>,
}

impl Evaluator {
    fn new(net: &DecayingNetwork, kind: Objective) -> Self {
        let step = net.time() + 1;
        let alive: Vec<NodeId> = net.alive_nodes().collect();
        let mut nbrs = vec![Vec::new(); net.node_count()];
        let mut spread = vec![0.0; net.node_count()];
        for &w in &alive {
            let pi_w = net.leave_prob(w);
            for (u, _) in net.alive_neighbors(w) {
                let d = net.tie_strength(u, w, step).expect("edge exists");
                nbrs[w.index()].push((u.index(), (1.0 - net.leave_prob(u)) * (1.0 - d)));
                spread[w.index()] += single_term(pi_w, d);
            }
        }
        Evaluator {
            kind,
            alive,
            nbrs,
            spread,
        }
    }

    /// Cohort gain of `w` when its left neighbourhood is `Γ_w ∩ A`, optionally with `extra` added.
    fn member_gain(&self, w: usize, in_set: &[bool], extra: Option<usize>) -> f64 {
        let list = &self.nbrs[w];
        let mut count = 0usize;
        let mut keep = 1.0;
        for &(u, a) in list {
            if in_set[u] || extra == Some(u) {
                count += 1;
                keep *= a;
            }
        }
        if count == 0 {
            return 0.0;
        }
        let xi = count as f64 / list.len() as f64;
        1.0 - (1.0 - xi) * keep
    }

    fn value(&self, in_set: &[bool]) -> f64 {
        match self.kind {
            Objective::Cohort => self
                .alive
                .iter()
                .map(|w| self.member_gain(w.index(), in_set, None))
                .sum(),
            Objective::Survivors => self
                .alive
                .iter()
                .filter(|w| !in_set[w.index()])
                .map(|w| self.member_gain(w.index(), in_set, None))
                .sum(),
            Objective::Additive => self
                .alive
                .iter()
                .filter(|v| in_set[v.index()])
                .map(|v| self.spread[v.index()])
                .sum(),
        }
    }

    /// `f(A ∪ {v}) - f(A)` for `v ∉ A`.
    fn marginal(&self, in_set: &[bool], v: usize) -> f64 {
        match self.kind {
            Objective::Additive => self.spread[v],
            Objective::Cohort | Objective::Survivors => {
                let mut delta = 0.0;
                for &(w, _) in &self.nbrs[v] {
                    if self.kind == Objective::Survivors && in_set[w] {
                        continue;
                    }
                    delta +=
                        self.member_gain(w, in_set, Some(v)) - self.member_gain(w, in_set, None);
                }
                if self.kind == Objective::Survivors {
                    delta -= self.member_gain(v, in_set, None);
                }
                delta
            }
        }
    }

    fn mask(&self, size: usize, set: impl IntoIterator<Item = NodeId>) -> Vec<bool> {
        let mut m = vec![false; size];
        for v in set {
            m[v.index()] = true;
        }
        m
    }
}

fn check_set(net: &DecayingNetwork, set: &BTreeSet<NodeId>) -> Result<()> {
    for &v in set {
        net.require_alive(v)?;
    }
    Ok(())
}

/// Default (cohort) objective of `set`.
pub fn leave_objective(net: &DecayingNetwork, set: &BTreeSet<NodeId>) -> Result<f64> {
    objective_value(net, set, Objective::Cohort)
}

pub fn objective_value(
    net: &DecayingNetwork,
    set: &BTreeSet<NodeId>,
    kind: Objective,
) -> Result<f64> {
    check_set(net, set)?;
    let eval = Evaluator::new(net, kind);
    Ok(eval.value(&eval.mask(net.node_count(), set.iter().copied())))
}

/// Per-member cohort gain of `w` for an arbitrary left set, as used by the objective.
pub fn member_cohort_gain(
    net: &DecayingNetwork,
    w: NodeId,
    left: &BTreeSet<NodeId>,
) -> Result<f64> {
    net.require_alive(w)?;
    check_set(net, left)?;
    let step = net.time() + 1;
    let degree = net.alive_degree(w);
    let cohort = net
        .alive_neighbors(w)
        .filter(|(u, _)| left.contains(u))
        .map(|(u, _)| {
            (
                net.leave_prob(u),
                net.tie_strength(u, w, step).expect("edge exists"),
            )
        });
    Ok(cohort_gain(degree, cohort).0)
}

fn check_budget(net: &DecayingNetwork, k: usize) -> Result<()> {
    let alive = net.alive_count();
    if k == 0 || k > alive {
        return Err(DecayError::domain(format!(
            "budget {k} must lie in 1..={alive}"
        )));
    }
    Ok(())
}

fn better(mode: Mode, candidate: f64, incumbent: f64) -> bool {
    match mode {
        Mode::Maximize => candidate > incumbent,
        Mode::Minimize => candidate < incumbent,
    }
}

fn finish(
    net: &DecayingNetwork,
    eval: &Evaluator,
    picks: Vec<NodeId>,
    round_gains: Vec<f64>,
    k: usize,
    mode: Mode,
    evaluations: usize,
    exact: bool,
) -> SeedSelection {
    let mut chosen = picks.clone();
    chosen.sort();
    let objective = eval.value(&eval.mask(net.node_count(), chosen.iter().copied()));
    SeedSelection {
        chosen,
        picks,
        round_gains,
        objective,
        budget: k,
        mode,
        kind: eval.kind,
        evaluations,
        exact,
        certificate: None,
    }
}

fn greedy(net: &DecayingNetwork, k: usize, mode: Mode, kind: Objective) -> Result<SeedSelection> {
    check_budget(net, k)?;
    let eval = Evaluator::new(net, kind);
    let mut in_set = vec![false; net.node_count()];
    let mut picks = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    let mut evaluations = 0;
    for _ in 0..k {
        let mut best: Option<(NodeId, f64)> = None;
        for &v in &eval.alive {
            if in_set[v.index()] {
                continue;
            }
            let m = eval.marginal(&in_set, v.index());
            evaluations += 1;
            if best.is_none_or(|(_, b)| better(mode, m, b)) {
                best = Some((v, m));
            }
        }
        let (v, m) = best.expect("budget checked");
        in_set[v.index()] = true;
        picks.push(v);
        gains.push(m);
    }
    Ok(finish(
        net,
        &eval,
        picks,
        gains,
        k,
        mode,
        evaluations,
        false,
    ))
}

/// Standard greedy: `k` rounds, each adding the member with the largest
/// marginal gain (ties to the smallest id).
pub fn greedy_maximize(net: &DecayingNetwork, k: usize) -> Result<SeedSelection> {
    greedy(net, k, Mode::Maximize, Objective::Cohort)
}

pub fn greedy_maximize_with(
    net: &DecayingNetwork,
    k: usize,
    kind: Objective,
) -> Result<SeedSelection> {
    greedy(net, k, Mode::Maximize, kind)
}

/// Size-`k` set with minimal objective: exact while the number of size-`k`
/// subsets stays under `cap`, greedy (smallest marginal first) above it.
pub fn greedy_minimize(net: &DecayingNetwork, k: usize, cap: u128) -> Result<SeedSelection> {
    greedy_minimize_with(net, k, Objective::Cohort, cap)
}

pub fn greedy_minimize_with(
    net: &DecayingNetwork,
    k: usize,
    kind: Objective,
    cap: u128,
) -> Result<SeedSelection> {
    check_budget(net, k)?;
    if binomial(net.alive_count() as u128, k as u128) <= cap {
        brute_force_with(net, k, Mode::Minimize, kind, cap)
    } else {
        greedy(net, k, Mode::Minimize, kind)
    }
}

#[derive(PartialEq)]
struct Bound {
    value: f64,
    node: NodeId,
    round: usize,
}

impl Eq for Bound {}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy: marginals from earlier rounds are upper bounds on the
/// current ones, so only the heap top needs refreshing. Same output as
/// [`greedy_maximize`].
pub fn lazy_marginals(net: &DecayingNetwork, k: usize) -> Result<SeedSelection> {
    lazy_marginals_with(net, k, Objective::Cohort)
}

pub fn lazy_marginals_with(
    net: &DecayingNetwork,
    k: usize,
    kind: Objective,
) -> Result<SeedSelection> {
    // stale bounds within this slack of the leader are refreshed before a pick
    const SLACK: f64 = 1e-12;
    check_budget(net, k)?;
    let eval = Evaluator::new(net, kind);
    let mut in_set = vec![false; net.node_count()];
    let mut evaluations = 0;
    let mut heap: BinaryHeap<Bound> = eval
        .alive
        .iter()
        .map(|&v| {
            evaluations += 1;
            Bound {
                value: eval.marginal(&in_set, v.index()),
                node: v,
                round: 0,
            }
        })
        .collect();
    let mut picks = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    for round in 0..k {
        loop {
            let top = heap.peek().expect("budget checked");
            if top.round == round {
                break;
            }
            let top = heap.pop().unwrap();
            evaluations += 1;
            heap.push(Bound {
                value: eval.marginal(&in_set, top.node.index()),
                node: top.node,
                round,
            });
        }
        // refresh every bound close enough to tie with the fresh leader
        let leader = heap.peek().unwrap().value;
        let mut near = Vec::new();
        while let Some(b) = heap.peek() {
            if b.value < leader - SLACK {
                break;
            }
            let mut b = heap.pop().unwrap();
            if b.round != round {
                evaluations += 1;
                b.value = eval.marginal(&in_set, b.node.index());
                b.round = round;
            }
            near.push(b);
        }
        near.sort_by(|a, b| b.cmp(a));
        let mut rest = near.into_iter();
        let pick = rest.next().unwrap();
        heap.extend(rest);
        in_set[pick.node.index()] = true;
        picks.push(pick.node);
        gains.push(pick.value);
    }
    Ok(finish(
        net,
        &eval,
        picks,
        gains,
        k,
        Mode::Maximize,
        evaluations,
        false,
    ))
}

pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of subsets the exact oracle visits.
pub fn enumeration_size(alive: usize, k: usize, mode: Mode) -> u128 {
    match mode {
        Mode::Maximize => (0..=k).map(|j| binomial(alive as u128, j as u128)).sum(),
        Mode::Minimize => binomial(alive as u128, k as u128),
    }
}

/// Exact optimum by enumeration: subsets of size `<= k` when maximising,
/// exactly `k` when minimising. Ties go to the smaller, then
/// lexicographically first, set.
pub fn brute_force_optimum(
    net: &DecayingNetwork,
    k: usize,
    mode: Mode,
    cap: u128,
) -> Result<SeedSelection> {
    brute_force_with(net, k, mode, Objective::Cohort, cap)
}

pub fn brute_force_with(
    net: &DecayingNetwork,
    k: usize,
    mode: Mode,
    kind: Objective,
    cap: u128,
) -> Result<SeedSelection> {
    check_budget(net, k)?;
    let required = enumeration_size(net.alive_count(), k, mode);
    if required > cap {
        return Err(DecayError::EnumerationCap { required, cap });
    }
    let eval = Evaluator::new(net, kind);
    let sizes = match mode {
        Mode::Maximize => 0..=k,
        Mode::Minimize => k..=k,
    };
    let mut in_set = vec![false; net.node_count()];
    let mut best: Option<(Vec<NodeId>, f64)> = None;
    let mut evaluations = 0;
    for size in sizes {
        for combo in eval.alive.iter().copied().combinations(size) {
            for v in &combo {
                in_set[v.index()] = true;
            }
            let value = eval.value(&in_set);
            evaluations += 1;
            for v in &combo {
                in_set[v.index()] = false;
            }
            if best.as_ref().is_none_or(|(_, b)| better(mode, value, *b)) {
                best = Some((combo, value));
            }
        }
    }
    let (set, _) = best.expect("at least one subset");
    // marginals along ascending order, for reporting
    let mut gains = Vec::with_capacity(set.len());
    for &v in &set {
        gains.push(eval.marginal(&in_set, v.index()));
        in_set[v.index()] = true;
    }
    Ok(finish(net, &eval, set, gains, k, mode, evaluations, true))
}

impl SeedSelection {
    /// Attaches the exact optimum as a certificate.
    pub fn certify(mut self, net: &DecayingNetwork, cap: u128) -> Result<SeedSelection> {
        let opt = brute_force_with(net, self.budget, self.mode, self.kind, cap)?;
        let ratio = if opt.objective == 0.0 {
            if self.objective == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.objective / opt.objective
        };
        self.certificate = Some(Certificate {
            optimal_value: opt.objective,
            optimal_set: opt.chosen,
            ratio,
        });
        Ok(self)
    }
}
