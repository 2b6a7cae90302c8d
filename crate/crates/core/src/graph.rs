//! The decaying network data model.
//!
//! A [`DecayingNetwork`] keeps the full adjacency observed at `t = 0` and
//! marks members as departed instead of deleting them, so that metrics over
//! a finished run can still look at the original neighbourhoods. All
//! "current" views (alive neighbours, alive edges) are filtered through the
//! per-node leave time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DecayError, Result};

/// Dense node identifier, `0..n` at build time. Never reused.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(u32::try_from(v).expect("node id exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected edge with endpoints stored in ascending order.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub tie_strength: f64,
}

impl Edge {
    pub fn new(a: NodeId, b: NodeId, tie_strength: f64) -> Self {
        let (u, v) = if a <= b { (a, b) } else { (b, a) };
        Edge { u, v, tie_strength }
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }
}

/// Per-member state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    /// Current leave probability. For departed members this is the value
    /// they held when they left.
    pub leave_prob: f64,
    pub initial_prob: f64,
    /// Step at which the member left, if it has.
    pub leave_time: Option<usize>,
}

impl NodeState {
    pub fn is_alive(&self) -> bool {
        self.leave_time.is_none()
    }

    /// Whether the member belongs to `V^t`, i.e. had not left by the end of step `t`.
    pub fn alive_at(&self, t: usize) -> bool {
        self.leave_time.is_none_or(|l| l > t)
    }
}

/// What happened in one synchronous round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Members that left in this round.
    pub leavers: BTreeSet<NodeId>,
    /// Edges removed because at least one endpoint left, sorted by endpoints.
    pub removed_edges: Vec<Edge>,
    /// Leave probabilities of the survivors after the round's update.
    pub prob_snapshot: BTreeMap<NodeId, f64>,
}

/// How the initial leave probabilities are assigned.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialProbability {
    Constant(f64),
    /// Uniform on `(lo, hi]`, drawn from a generator keyed by `seed`.
    Uniform {
        lo: f64,
        hi: f64,
        seed: u64,
    },
    /// `min(1, a / deg(w))`.
    InverseDegree(f64),
    /// One value per node, indexed by node id.
    Explicit(Vec<f64>),
}

impl InitialProbability {
    fn resolve(&self, degrees: &[usize]) -> Result<Vec<f64>> {
        let n = degrees.len();
        let probs = match self {
            InitialProbability::Constant(c) => vec![*c; n],
            InitialProbability::Uniform { lo, hi, seed } => {
                if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                    return Err(DecayError::InitialProbability(format!(
                        "uniform bounds ({lo}, {hi}] must satisfy 0 <= lo < hi <= 1"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n).map(|_| hi - rng.gen::<f64>() * (hi - lo)).collect()
            }
            InitialProbability::InverseDegree(a) => {
                if !(*a > 0.0) {
                    return Err(DecayError::InitialProbability(format!(
                        "inverse-degree scale {a} must be positive"
                    )));
                }
                degrees.iter().map(|&d| (a / d as f64).min(1.0)).collect()
            }
            InitialProbability::Explicit(values) => {
                if values.len() != n {
                    return Err(DecayError::InitialProbability(format!(
                        "{} explicit values for {n} nodes",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        for (i, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(DecayError::InitialProbability(format!(
                    "node {i} gets {p}, outside (0, 1]"
                )));
            }
        }
        Ok(probs)
    }
}

/// Temporal undirected graph whose node and edge sets only shrink.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayingNetwork {
    time: usize,
    nodes: Vec<NodeState>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    tie_overrides: BTreeMap<(usize, NodeId, NodeId), f64>,
    history: Vec<StepRecord>,
}

/// Builds a network at `t = 0` from an edge list.
///
/// Node ids must be dense: every id below the largest one needs at least
/// one incident edge.
pub fn build_network<I>(edges: I, init: &InitialProbability) -> Result<DecayingNetwork>
where
    I: IntoIterator<Item = (NodeId, NodeId, f64)>,
{
    let mut seen = HashSet::new();
    let mut adjacency: Vec<Vec<(NodeId, f64)>> = Vec::new();
    for (a, b, delta) in edges {
        if a == b {
            return Err(DecayError::SelfLoop(a));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(DecayError::TieStrength {
                u: a,
                v: b,
                strength: delta,
            });
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            return Err(DecayError::DuplicateEdge(key.0, key.1));
        }
        let hi = a.index().max(b.index());
        if adjacency.len() <= hi {
            adjacency.resize_with(hi + 1, Vec::new);
        }
        adjacency[a.index()].push((b, delta));
        adjacency[b.index()].push((a, delta));
    }
    if adjacency.is_empty() {
        return Err(DecayError::EmptyEdgeList);
    }
    if let Some(i) = adjacency.iter().position(Vec::is_empty) {
        return Err(DecayError::IsolatedNode(NodeId::from(i)));
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(n, _)| n);
    }
    let degrees: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let nodes = init
        .resolve(&degrees)?
        .into_iter()
        .map(|p| NodeState {
            leave_prob: p,
            initial_prob: p,
            leave_time: None,
        })
        .collect();
    Ok(DecayingNetwork {
        time: 0,
        nodes,
        adjacency,
        tie_overrides: BTreeMap::new(),
        history: Vec::new(),
    })
}

impl DecayingNetwork {
    pub fn time(&self) -> usize {
        self.time
    }

    /// Number of members at `t = 0`.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_alive()).count()
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeState)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, s)| (NodeId::from(i), s))
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|(_, s)| s.is_alive()).map(|(id, _)| id)
    }

    pub fn node(&self, w: NodeId) -> Result<&NodeState> {
        self.nodes.get(w.index()).ok_or(DecayError::UnknownNode(w))
    }

    pub fn is_alive(&self, w: NodeId) -> bool {
        self.nodes.get(w.index()).is_some_and(NodeState::is_alive)
    }

    pub(crate) fn require_alive(&self, w: NodeId) -> Result<&NodeState> {
        let state = self.node(w)?;
        if state.is_alive() {
            Ok(state)
        } else {
            Err(DecayError::NotAlive {
                node: w,
                step: self.time,
            })
        }
    }

    /// Leave probability of `w` (the final one for departed members).
    pub fn leave_prob(&self, w: NodeId) -> f64 {
        self.nodes[w.index()].leave_prob
    }

    /// Neighbourhood at `t = 0`, sorted by id, with tie strengths.
    pub fn initial_neighbors(&self, w: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[w.index()]
    }

    pub fn initial_degree(&self, w: NodeId) -> usize {
        self.adjacency[w.index()].len()
    }

    /// Neighbours of `w` that belong to `V^t`.
    pub fn neighbors_at(&self, w: NodeId, t: usize) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adjacency[w.index()]
            .iter()
            .copied()
            .filter(move |(u, _)| self.nodes[u.index()].alive_at(t))
    }

    /// Neighbours of `w` that are currently alive.
    pub fn alive_neighbors(&self, w: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adjacency[w.index()]
            .iter()
            .copied()
            .filter(move |(u, _)| self.nodes[u.index()].is_alive())
    }

    pub fn alive_degree(&self, w: NodeId) -> usize {
        self.alive_neighbors(w).count()
    }

    /// All edges at `t = 0`.
    pub fn initial_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, list)| {
            let u = NodeId::from(i);
            list.iter()
                .filter(move |(v, _)| u < *v)
                .map(move |&(v, d)| Edge::new(u, v, d))
        })
    }

    /// Edges whose endpoints are both alive.
    pub fn alive_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.initial_edges()
            .filter(|e| self.nodes[e.u.index()].is_alive() && self.nodes[e.v.index()].is_alive())
    }

    pub fn alive_edge_count(&self) -> usize {
        self.alive_edges().count()
    }

    /// Tie strength of `(u, v)` as seen during step `step`, honouring overrides.
    pub fn tie_strength(&self, u: NodeId, v: NodeId, step: usize) -> Option<f64> {
        let key = if u < v { (step, u, v) } else { (step, v, u) };
        if let Some(&d) = self.tie_overrides.get(&key) {
            return Some(d);
        }
        let list = self.adjacency.get(u.index())?;
        list.binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| list[i].1)
    }

    /// Replaces the tie strength of an existing edge for a single step.
    pub fn set_tie_override(
        &mut self,
        step: usize,
        u: NodeId,
        v: NodeId,
        delta: f64,
    ) -> Result<()> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(DecayError::TieStrength {
                u,
                v,
                strength: delta,
            });
        }
        if self.tie_strength(u, v, 0).is_none() {
            return Err(DecayError::MissingEdge(u, v));
        }
        let key = if u < v { (step, u, v) } else { (step, v, u) };
        self.tie_overrides.insert(key, delta);
        Ok(())
    }

    pub fn tie_overrides(&self) -> &BTreeMap<(usize, NodeId, NodeId), f64> {
        &self.tie_overrides
    }

    /// Splits `Γ_w^{t-1}` into the neighbours that left at step `t` and those that stayed.
    pub fn neighbor_partition(
        &self,
        w: NodeId,
        t: usize,
    ) -> Result<(BTreeSet<NodeId>, BTreeSet<NodeId>)> {
        let state = self.node(w)?;
        if t == 0 || t > self.time {
            return Err(DecayError::domain(format!(
                "step {t} is outside the recorded range 1..={}",
                self.time
            )));
        }
        if !state.alive_at(t - 1) {
            return Err(DecayError::NotAlive { node: w, step: t });
        }
        let mut left = BTreeSet::new();
        let mut stayed = BTreeSet::new();
        for (u, _) in self.neighbors_at(w, t - 1) {
            if self.nodes[u.index()].leave_time == Some(t) {
                left.insert(u);
            } else {
                stayed.insert(u);
            }
        }
        Ok((left, stayed))
    }

    /// Same network at `t = 0`: every member alive with its initial probability.
    pub fn reset(&self) -> DecayingNetwork {
        let mut net = self.clone();
        net.time = 0;
        net.history.clear();
        for n in &mut net.nodes {
            n.leave_prob = n.initial_prob;
            n.leave_time = None;
        }
        net
    }

    pub(crate) fn commit_step(&mut self, record: StepRecord, updates: &[(NodeId, f64)]) {
        for &w in &record.leavers {
            self.nodes[w.index()].leave_time = Some(record.step);
        }
        for &(w, p) in updates {
            self.nodes[w.index()].leave_prob = p;
        }
        self.time = record.step;
        self.history.push(record);
    }
}

/// Whether a recorded history satisfies the decaying-network conditions:
/// node sets nested and non-increasing, no edge removed twice, no departed
/// member showing up again.
pub fn is_decaying(history: &[StepRecord]) -> bool {
    let Some(first) = history.first() else {
        return true;
    };
    let mut alive: BTreeSet<NodeId> = first.prob_snapshot.keys().copied().collect();
    alive.extend(first.leavers.iter().copied());
    let mut gone_edges = HashSet::new();
    let mut prev_step = None;

    for rec in history {
        if prev_step.is_some_and(|p| rec.step <= p) {
            return false;
        }
        prev_step = Some(rec.step);
        if !rec.leavers.is_subset(&alive) {
            return false;
        }
        for e in &rec.removed_edges {
            if !alive.contains(&e.u) || !alive.contains(&e.v) {
                return false;
            }
            if !rec.leavers.contains(&e.u) && !rec.leavers.contains(&e.v) {
                return false;
            }
            if !gone_edges.insert((e.u, e.v)) {
                return false;
            }
        }
        for w in &rec.leavers {
            alive.remove(w);
        }
        if rec.prob_snapshot.keys().any(|w| !alive.contains(w)) {
            return false;
        }
        // Survivors that silently vanish from the snapshot shrink V^t as well.
        alive.retain(|w| rec.prob_snapshot.contains_key(w));
    }
    true
}
