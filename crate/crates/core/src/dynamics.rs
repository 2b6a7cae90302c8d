//! Probability gain and synchronous stochastic stepping.
//!
//! Every round runs in three phases: all leavers are drawn from the current
//! leave probabilities, their edges are dropped, and only then do the
//! survivors absorb the gain caused by that round's cohort. Leavers act on
//! their neighbours with the probability they held when they left.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, DecayError, Result};
use crate::graph::{DecayingNetwork, Edge, NodeId, StepRecord};

/// Gain a single departing neighbour `v` transmits over a tie of strength `delta_vw`.
pub fn gain_single(pi_v: f64, delta_vw: f64) -> Result<f64> {
    check_unit("pi_v", pi_v)?;
    if !(delta_vw > 0.0 && delta_vw <= 1.0) {
        return Err(DecayError::domain(format!(
            "tie strength {delta_vw} is outside (0, 1]"
        )));
    }
    Ok(single_term(pi_v, delta_vw))
}

#[inline]
pub(crate) fn single_term(pi_v: f64, delta_vw: f64) -> f64 {
    1.0 - (1.0 - pi_v) * (1.0 - delta_vw)
}

/// Gain received by a member whose alive neighbourhood had `degree` members
/// when the cohort `leavers` (pairs of leaver probability and tie strength)
/// departed. Returns `(delta, xi)`.
///
/// No leavers means no gain. A cohort covering the whole neighbourhood
/// forces the gain to 1.
pub fn cohort_gain<I>(degree: usize, leavers: I) -> (f64, f64)
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut count = 0usize;
    let mut keep = 1.0;
    for (pi_u, delta_uw) in leavers {
        count += 1;
        keep *= (1.0 - pi_u) * (1.0 - delta_uw);
    }
    if count == 0 || degree == 0 {
        return (0.0, 0.0);
    }
    let xi = count as f64 / degree as f64;
    (1.0 - (1.0 - xi) * keep, xi)
}

/// `min(1, pi_prev + delta)`.
pub fn update_probability(pi_prev: f64, delta: f64) -> Result<f64> {
    check_unit("pi_prev", pi_prev)?;
    check_unit("delta", delta)?;
    Ok((pi_prev + delta).min(1.0))
}

/// Per-member outcome of the multi-leaver gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainResult {
    pub node: NodeId,
    pub delta: f64,
    pub xi: f64,
    pub contributing_leavers: BTreeSet<NodeId>,
}

/// Total gain the departure of `v` at step `step` spread over the
/// neighbours that survived that step, ignoring the forced-leave term.
pub fn gain_broadcast(net: &DecayingNetwork, v: NodeId, step: usize) -> Result<f64> {
    let state = net.node(v)?;
    if state.leave_time != Some(step) || step == 0 {
        return Err(DecayError::domain(format!(
            "node {v} did not leave at step {step}"
        )));
    }
    let pi_v = state.leave_prob;
    Ok(net
        .neighbors_at(v, step)
        .map(|(w, _)| {
            let d = net.tie_strength(v, w, step).expect("edge exists");
            single_term(pi_v, d)
        })
        .sum())
}

/// Gain `w` received from the neighbours that left at step `step`.
pub fn gain_multi(net: &DecayingNetwork, w: NodeId, step: usize) -> Result<GainResult> {
    let state = net.node(w)?;
    if step == 0 || step > net.time() {
        return Err(DecayError::domain(format!(
            "step {step} is outside the recorded range 1..={}",
            net.time()
        )));
    }
    if !state.alive_at(step) {
        return Err(DecayError::NotAlive { node: w, step });
    }
    let (left, stayed) = net.neighbor_partition(w, step)?;
    let degree = left.len() + stayed.len();
    let (delta, xi) = cohort_gain(
        degree,
        left.iter().map(|&u| {
            (
                net.leave_prob(u),
                net.tie_strength(u, w, step).expect("edge exists"),
            )
        }),
    );
    Ok(GainResult {
        node: w,
        delta,
        xi,
        contributing_leavers: left,
    })
}

/// Counter-based source of uniform draws: one independent value per
/// `(seed, step, node)` regardless of the order nodes are visited in.
#[derive(Clone, Debug)]
pub struct LeaveSampler {
    seed: u64,
    base: ChaCha8Rng,
}

impl LeaveSampler {
    pub fn new(seed: u64) -> Self {
        LeaveSampler {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draws in `[0, 1)` for nodes `0..n` at `step`.
    pub fn draws(&self, step: usize, n: usize) -> impl Iterator<Item = f64> {
        let mut rng = self.base.clone();
        rng.set_stream(step as u64);
        rng.set_word_pos(0);
        (0..n).map(move |_| rng.gen::<f64>())
    }

    pub fn draw(&self, step: usize, node: NodeId) -> f64 {
        let mut rng = self.base.clone();
        rng.set_stream(step as u64);
        // each f64 consumes two 32-bit words
        rng.set_word_pos(2 * node.index() as u128);
        rng.gen()
    }
}

/// Draws the cohort for the next step without mutating the network.
pub fn sample_leavers(
    net: &DecayingNetwork,
    sampler: &LeaveSampler,
    forced: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>> {
    let step = net.time() + 1;
    for &f in forced {
        if !net.is_alive(f) {
            return Err(DecayError::domain(format!(
                "forced leaver {f} is not alive before step {step}"
            )));
        }
    }
    let mut leavers = BTreeSet::new();
    for ((id, state), u) in net.nodes().zip(sampler.draws(step, net.node_count())) {
        if !state.is_alive() {
            continue;
        }
        if forced.contains(&id) || state.leave_prob >= 1.0 || u < state.leave_prob {
            leavers.insert(id);
        }
    }
    Ok(leavers)
}

/// Runs one synchronous round and returns its record.
pub fn step(
    net: &mut DecayingNetwork,
    sampler: &LeaveSampler,
    forced: &BTreeSet<NodeId>,
) -> Result<StepRecord> {
    if net.alive_count() == 0 {
        return Err(DecayError::domain(
            "cannot step a network with no alive members",
        ));
    }
    let leavers = sample_leavers(net, sampler, forced)?;
    Ok(apply_leavers(net, leavers))
}

/// Removes `leavers` as the next round and updates the survivors.
pub(crate) fn apply_leavers(net: &mut DecayingNetwork, leavers: BTreeSet<NodeId>) -> StepRecord {
    let step = net.time() + 1;
    let removed_edges: Vec<Edge> = net
        .alive_edges()
        .filter(|e| leavers.contains(&e.u) || leavers.contains(&e.v))
        .collect();

    let mut updates = Vec::new();
    let mut snapshot = BTreeMap::new();
    for w in net.alive_nodes() {
        if leavers.contains(&w) {
            continue;
        }
        let mut degree = 0;
        let mut cohort = Vec::new();
        for (u, _) in net.alive_neighbors(w) {
            degree += 1;
            if leavers.contains(&u) {
                let d = net.tie_strength(u, w, step).expect("edge exists");
                cohort.push((net.leave_prob(u), d));
            }
        }
        let (delta, _) = cohort_gain(degree, cohort);
        let pi = (net.leave_prob(w) + delta).min(1.0);
        updates.push((w, pi));
        snapshot.insert(w, pi);
    }

    let record = StepRecord {
        step,
        leavers,
        removed_edges,
        prob_snapshot: snapshot,
    };
    net.commit_step(record.clone(), &updates);
    record
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub max_steps: usize,
    /// Stop at extinction. When false the trace is padded with empty
    /// rounds up to `max_steps`.
    pub stop_when_empty: bool,
    /// Members forced out at a given step, on top of the random draw.
    #[serde(default)]
    pub forced_leavers: BTreeMap<usize, BTreeSet<NodeId>>,
}

impl SimulationConfig {
    pub fn new(seed: u64, max_steps: usize) -> Self {
        SimulationConfig {
            seed,
            max_steps,
            stop_when_empty: true,
            forced_leavers: BTreeMap::new(),
        }
    }

    pub fn force(mut self, step: usize, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        self.forced_leavers.entry(step).or_default().extend(nodes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(DecayError::domain("max_steps must be at least 1"));
        }
        if self.forced_leavers.contains_key(&0) {
            return Err(DecayError::domain("forced leavers start at step 1"));
        }
        Ok(())
    }
}

/// One stochastic run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub final_network: DecayingNetwork,
}

impl SimulationTrace {
    /// Alive member and edge counts at `t = 0` and after every step.
    pub fn alive_series(&self) -> Vec<(usize, usize)> {
        let start = self.final_network.reset();
        let mut nodes = start.alive_count();
        let mut edges = start.alive_edge_count();
        let mut out = vec![(nodes, edges)];
        for rec in &self.steps {
            nodes -= rec.leavers.len();
            edges -= rec.removed_edges.len();
            out.push((nodes, edges));
        }
        out
    }
}

/// Steps a copy of `net` until `cfg.max_steps` rounds ran or nobody is left.
pub fn simulate(net: &DecayingNetwork, cfg: &SimulationConfig) -> Result<SimulationTrace> {
    cfg.validate()?;
    let sampler = LeaveSampler::new(cfg.seed);
    let mut net = net.clone();
    let start = net.history().len();
    let none = BTreeSet::new();
    for _ in 0..cfg.max_steps {
        if net.alive_count() == 0 {
            if cfg.stop_when_empty {
                break;
            }
            apply_leavers(&mut net, BTreeSet::new());
            continue;
        }
        let forced = cfg.forced_leavers.get(&(net.time() + 1)).unwrap_or(&none);
        step(&mut net, &sampler, forced)?;
    }
    Ok(SimulationTrace {
        seed: cfg.seed,
        steps: net.history()[start..].to_vec(),
        final_network: net,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::graph::{build_network, is_decaying, InitialProbability};

    fn net(edges: &[(u32, u32, f64)], init: InitialProbability) -> DecayingNetwork {
        build_network(
            edges.iter().map(|&(u, v, d)| (NodeId(u), NodeId(v), d)),
            &init,
        )
        .unwrap()
    }

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn single_gain_examples() {
        assert_eq!(gain_single(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(gain_single(0.4, 1.0).unwrap(), 1.0);
        assert_eq!(gain_single(0.5, 0.5).unwrap(), 0.75);
        assert!(gain_single(1.2, 0.5).is_err());
        assert!(gain_single(0.5, 0.0).is_err());
    }

    #[test]
    fn update_examples() {
        assert_eq!(update_probability(0.2, 0.0).unwrap(), 0.2);
        assert_eq!(update_probability(0.7, 0.875).unwrap(), 1.0);
        assert_eq!(update_probability(0.2, 0.875).unwrap(), 1.0);
        assert_relative_eq!(update_probability(0.1, 0.3).unwrap(), 0.4, epsilon = 1e-15);
        assert!(update_probability(-0.1, 0.3).is_err());
        assert!(update_probability(0.1, 1.3).is_err());
    }

    #[test]
    fn cohort_gain_examples() {
        // both neighbours gone
        assert_eq!(cohort_gain(2, [(0.1, 0.2), (0.3, 0.4)]).0, 1.0);
        // one of two neighbours, pi = delta = 0.5
        let (d, xi) = cohort_gain(2, [(0.5, 0.5)]);
        assert_eq!(xi, 0.5);
        assert_relative_eq!(d, 0.875, epsilon = 1e-15);
        assert_eq!(cohort_gain(3, std::iter::empty()), (0.0, 0.0));
    }

    #[test]
    fn certainty_case_removes_everything() {
        let mut n = net(
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            InitialProbability::Constant(1.0),
        );
        let rec = step(&mut n, &LeaveSampler::new(5), &BTreeSet::new()).unwrap();
        assert_eq!(rec.leavers, ids(&[0, 1, 2]));
        assert_eq!(rec.removed_edges.len(), 3);
        assert!(rec.prob_snapshot.is_empty());
        assert_eq!(n.alive_count(), 0);
        assert!(step(&mut n, &LeaveSampler::new(5), &BTreeSet::new()).is_err());
    }

    #[test]
    fn forced_leaver_spreads_cohort_gain() {
        // path 0-1-2-3 with node 1 forced out; everything else almost never leaves
        let mut n = net(
            &[(0, 1, 0.5), (1, 2, 0.25), (2, 3, 0.5)],
            InitialProbability::Explicit(vec![1e-12, 0.5, 1e-12, 1e-12]),
        );
        let rec = step(&mut n, &LeaveSampler::new(1), &ids(&[1])).unwrap();
        assert_eq!(rec.leavers, ids(&[1]));
        // node 0: its only neighbour left, forced to 1
        assert_eq!(rec.prob_snapshot[&NodeId(0)], 1.0);
        // node 2: xi = 1/2, keep = (1-0.5)(1-0.25)
        let expected = 1e-12 + (1.0 - 0.5 * (0.5 * 0.75));
        assert_relative_eq!(rec.prob_snapshot[&NodeId(2)], expected, epsilon = 1e-15);
        assert_eq!(rec.prob_snapshot[&NodeId(3)], 1e-12);

        let g = gain_multi(&n, NodeId(2), 1).unwrap();
        assert_eq!(g.contributing_leavers, ids(&[1]));
        assert_eq!(g.xi, 0.5);
        assert_relative_eq!(g.delta, 0.8125, epsilon = 1e-15);
        assert_eq!(gain_multi(&n, NodeId(3), 1).unwrap().delta, 0.0);
        assert!(gain_multi(&n, NodeId(1), 1).is_err());

        // broadcast: 1 - (1-0.5)(1-0.5) + 1 - (1-0.5)(1-0.25)
        assert_relative_eq!(
            gain_broadcast(&n, NodeId(1), 1).unwrap(),
            0.75 + 0.625,
            epsilon = 1e-15
        );
        assert!(gain_broadcast(&n, NodeId(2), 1).is_err());
    }

    #[test]
    fn broadcast_examples() {
        // pi_v = 1 and three survivors
        let mut star = net(
            &[(0, 1, 0.2), (0, 2, 0.3), (0, 3, 0.9)],
            InitialProbability::Explicit(vec![1.0, 1e-12, 1e-12, 1e-12]),
        );
        step(&mut star, &LeaveSampler::new(3), &BTreeSet::new()).unwrap();
        assert_eq!(gain_broadcast(&star, NodeId(0), 1).unwrap(), 3.0);

        // pi_v = 0.5, two survivors at delta = 0.5
        let mut p = net(
            &[(0, 1, 0.5), (0, 2, 0.5)],
            InitialProbability::Explicit(vec![0.5, 1e-12, 1e-12]),
        );
        step(&mut p, &LeaveSampler::new(3), &ids(&[0])).unwrap();
        assert_eq!(gain_broadcast(&p, NodeId(0), 1).unwrap(), 1.5);

        // no survivors
        let mut all = net(&[(0, 1, 0.5)], InitialProbability::Constant(1.0));
        step(&mut all, &LeaveSampler::new(3), &BTreeSet::new()).unwrap();
        assert_eq!(gain_broadcast(&all, NodeId(0), 1).unwrap(), 0.0);
    }

    #[test]
    fn neighbor_partition_bookkeeping() {
        // a seed under which the center survives steps 2 and 3
        const SEED: u64 = 5;
        let mut star = net(
            &[(0, 1, 0.5), (0, 2, 0.5), (0, 3, 0.5)],
            InitialProbability::Constant(1e-12),
        );
        let s = LeaveSampler::new(SEED);
        step(&mut star, &s, &ids(&[2])).unwrap();
        step(&mut star, &s, &BTreeSet::new()).unwrap();
        assert!(star.is_alive(NodeId(0)));
        let (left, stayed) = star.neighbor_partition(NodeId(0), 1).unwrap();
        assert_eq!(left, ids(&[2]));
        assert_eq!(stayed, ids(&[1, 3]));
        let (left, stayed) = star.neighbor_partition(NodeId(0), 2).unwrap();
        assert!(left.is_empty());
        assert_eq!(stayed, ids(&[1, 3]));
        step(&mut star, &s, &ids(&[1, 3])).unwrap();
        assert!(star.is_alive(NodeId(0)));
        let (left, stayed) = star.neighbor_partition(NodeId(0), 3).unwrap();
        assert_eq!(left.len(), 2);
        assert!(stayed.is_empty());
        assert!(star.neighbor_partition(NodeId(2), 2).is_err());
        assert!(star.neighbor_partition(NodeId(9), 1).is_err());
        assert!(star.neighbor_partition(NodeId(0), 4).is_err());
    }

    #[test]
    fn dead_forced_leaver_is_rejected() {
        let mut n = net(
            &[(0, 1, 0.5), (1, 2, 0.5)],
            InitialProbability::Constant(1e-12),
        );
        let s = LeaveSampler::new(0);
        step(&mut n, &s, &ids(&[0])).unwrap();
        assert!(step(&mut n, &s, &ids(&[0])).is_err());
    }

    #[test]
    fn two_certain_nodes_take_one_step() {
        let n = net(&[(0, 1, 0.5)], InitialProbability::Constant(1.0));
        let trace = simulate(&n, &SimulationConfig::new(1, 10)).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.final_network.alive_count(), 0);
        assert_eq!(trace.alive_series(), vec![(2, 1), (0, 0)]);

        let mut padded = SimulationConfig::new(1, 4);
        padded.stop_when_empty = false;
        let trace = simulate(&n, &padded).unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert!(is_decaying(&trace.steps));
    }

    #[test]
    fn zero_steps_rejected() {
        let n = net(&[(0, 1, 0.5)], InitialProbability::Constant(0.5));
        assert!(simulate(&n, &SimulationConfig::new(1, 0)).is_err());
    }

    #[test]
    fn same_seed_same_trace() {
        let n = net(
            &[(0, 1, 0.5), (1, 2, 0.5), (0, 2, 0.5)],
            InitialProbability::Constant(0.5),
        );
        let cfg = SimulationConfig::new(42, 20);
        let a = simulate(&n, &cfg).unwrap();
        let b = simulate(&n, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(is_decaying(&a.steps));
    }

    #[test]
    fn sampler_is_counter_based() {
        let s = LeaveSampler::new(11);
        let all: Vec<f64> = s.draws(3, 6).collect();
        for (i, &u) in all.iter().enumerate() {
            assert_eq!(s.draw(3, NodeId::from(i)), u);
        }
        let other: Vec<f64> = s.draws(4, 6).collect();
        assert_ne!(all, other);
    }
}
