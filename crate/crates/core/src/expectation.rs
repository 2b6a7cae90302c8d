//! Sampling-free predictors of node and edge loss.
//!
//! One-step quantities are exact. Multi-step projections are exact when
//! every leaver-set history can be enumerated within
//! [`EXACT_BRANCH_LIMIT`]; otherwise they use a mean-field projection where
//! each member carries a survival weight `s` and a leave probability `p`,
//! and the cohort gain is averaged over neighbours that are independently
//! absent, leaving (`s·p`) or staying. The Monte Carlo estimators in
//! [`crate::montecarlo`] are the ground truth to compare with.

use serde::{Deserialize, Serialize};

use crate::dynamics::apply_leavers;
use crate::error::{DecayError, Result};
use crate::graph::{DecayingNetwork, NodeId, StepRecord};

/// Expected number of members leaving in the next step, `Σ π_w`.
pub fn expected_leavers(net: &DecayingNetwork) -> f64 {
    net.alive_nodes().map(|w| net.leave_prob(w)).sum()
}

/// Probability that every current neighbour of `w` leaves in the next step.
pub fn disconnect_probability(net: &DecayingNetwork, w: NodeId) -> Result<f64> {
    net.require_alive(w)?;
    Ok(net
        .alive_neighbors(w)
        .map(|(u, _)| net.leave_prob(u))
        .product())
}

/// Probability that the alive edge `(u, v)` is removed in the next step.
pub fn edge_removal_probability(net: &DecayingNetwork, u: NodeId, v: NodeId) -> Result<f64> {
    net.node(u)?;
    net.node(v)?;
    if !net.is_alive(u) || !net.is_alive(v) || net.tie_strength(u, v, 0).is_none() {
        return Err(DecayError::MissingEdge(u, v));
    }
    let (pu, pv) = (net.leave_prob(u), net.leave_prob(v));
    Ok(pu + pv - pu * pv)
}

/// Expected number of edges removed in the next step.
pub fn expected_edge_loss_one_step(net: &DecayingNetwork) -> f64 {
    net.alive_edges()
        .map(|e| {
            let (pu, pv) = (net.leave_prob(e.u), net.leave_prob(e.v));
            pu + pv - pu * pv
        })
        .sum()
}

/// Edge loss of a recorded step from the leavers' degrees, minus the edges
/// both of whose endpoints left together. `net_before` is the network just
/// before that step.
pub fn realized_edge_loss(record: &StepRecord, net_before: &DecayingNetwork) -> Result<usize> {
    if record.step != net_before.time() + 1 {
        return Err(DecayError::domain(format!(
            "record for step {} does not follow a network at time {}",
            record.step,
            net_before.time()
        )));
    }
    let mut degree_sum = 0;
    let mut shared = 0;
    for &w in &record.leavers {
        if !net_before.is_alive(w) {
            return Err(DecayError::domain(format!(
                "leaver {w} was not alive before step {}",
                record.step
            )));
        }
        for (u, _) in net_before.alive_neighbors(w) {
            degree_sum += 1;
            if w < u && record.leavers.contains(&u) {
                shared += 1;
            }
        }
    }
    let loss = degree_sum - shared;
    if loss != record.removed_edges.len() {
        return Err(DecayError::domain(format!(
            "step {} records {} removed edges but its leavers account for {loss}",
            record.step,
            record.removed_edges.len()
        )));
    }
    Ok(loss)
}

/// Largest `log2` of the number of leaver-set histories the exact
/// projection will enumerate.
pub const EXACT_BRANCH_LIMIT: u32 = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Exact,
    MeanField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub horizon: usize,
    pub method: Projection,
    pub expected_node_loss: Vec<f64>,
    pub expected_edge_loss: Vec<f64>,
    /// Projected number of alive members at the start of each step.
    pub expected_alive_nodes: Vec<f64>,
    pub cumulative_edge_loss: f64,
}

/// Start-of-step state of one neighbour in the projection: absent, present
/// and leaving, present and staying; `keep` is `(1 - pi)(1 - delta)`.
struct NeighbourWeights {
    absent: f64,
    leave: f64,
    stay: f64,
    keep: f64,
}

/// Expected cohort gain when every neighbour independently takes one of its
/// three states. With `L` leavers out of `D` present,
/// `E[gain] = 1 - E[prod] + E[(L / D) prod]`, and the second expectation is
/// `sum_u leave_u keep_u * integral_0^1 prod_{v != u} (absent_v + x (leave_v keep_v + stay_v)) dx`
/// because `1 / (1 + m)` is the integral of `x^m`.
fn expected_cohort_gain(ns: &[NeighbourWeights]) -> f64 {
    if ns.is_empty() {
        return 0.0;
    }
    let all: f64 = ns
        .iter()
        .map(|n| n.absent + n.leave * n.keep + n.stay)
        .product();
    let (xs, ws) = gauss_legendre_unit(ns.len().div_ceil(2) + 1);
    let mut ratio = 0.0;
    for (&x, &wt) in xs.iter().zip(&ws) {
        let f: Vec<f64> = ns
            .iter()
            .map(|n| n.absent + x * (n.leave * n.keep + n.stay))
            .collect();
        let mut suffix = vec![1.0; f.len() + 1];
        for i in (0..f.len()).rev() {
            suffix[i] = suffix[i + 1] * f[i];
        }
        let mut prefix = 1.0;
        for (i, n) in ns.iter().enumerate() {
            ratio += wt * n.leave * n.keep * prefix * suffix[i + 1];
            prefix *= f[i];
        }
    }
    (1.0 - all + ratio).clamp(0.0, 1.0)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`; exact for polynomials of
/// degree below `2m`.
fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        xs.push(0.5 * (1.0 - z));
        ws.push(1.0 / ((1.0 - z * z) * dp * dp));
    }
    (xs, ws)
}

/// Projects node and edge loss `n` steps ahead, exactly when the history
/// count allows and by mean field otherwise. Step 1 always equals
/// [`expected_leavers`] and [`expected_edge_loss_one_step`].
pub fn expected_edge_loss_horizon(net: &DecayingNetwork, n: usize) -> Result<ExpectationReport> {
    let branching = net
        .alive_nodes()
        .filter(|&w| net.leave_prob(w) < 1.0)
        .count();
    if branching.saturating_mul(n.saturating_sub(1)) <= EXACT_BRANCH_LIMIT as usize {
        exact_horizon(net, n)
    } else {
        mean_field_horizon(net, n)
    }
}

/// Expected loss per step by summing over every possible sequence of
/// leaver sets, weighted by its probability.
pub fn exact_horizon(net: &DecayingNetwork, n: usize) -> Result<ExpectationReport> {
    if n == 0 {
        return Err(DecayError::domain("horizon must be at least 1"));
    }
    let mut nodes = vec![0.0; n];
    let mut edges = vec![0.0; n];
    let mut alive = vec![0.0; n];
    // step 1 in closed form; the walk fills the later steps
    nodes[0] = expected_leavers(net);
    edges[0] = expected_edge_loss_one_step(net);
    alive[0] = net.alive_count() as f64;
    if n > 1 {
        walk(net, 1.0, 0, n, &mut nodes, &mut edges, &mut alive);
    }
    let cumulative = edges.iter().sum();
    Ok(ExpectationReport {
        horizon: n,
        method: Projection::Exact,
        expected_node_loss: nodes,
        expected_edge_loss: edges,
        expected_alive_nodes: alive,
        cumulative_edge_loss: cumulative,
    })
}

fn walk(
    net: &DecayingNetwork,
    weight: f64,
    j: usize,
    n: usize,
    nodes: &mut [f64],
    edges: &mut [f64],
    alive: &mut [f64],
) {
    let members: Vec<NodeId> = net.alive_nodes().collect();
    if members.is_empty() {
        return;
    }
    if j > 0 {
        alive[j] += weight * members.len() as f64;
    }
    let (sure, open): (Vec<NodeId>, Vec<NodeId>) =
        members.iter().partition(|&&w| net.leave_prob(w) >= 1.0);
    for mask in 0u64..(1u64 << open.len()) {
        let mut p = weight;
        let mut leavers: std::collections::BTreeSet<NodeId> = sure.iter().copied().collect();
        for (i, &w) in open.iter().enumerate() {
            let pi = net.leave_prob(w);
            if mask >> i & 1 == 1 {
                p *= pi;
                leavers.insert(w);
            } else {
                p *= 1.0 - pi;
            }
        }
        if p == 0.0 {
            continue;
        }
        let mut next = net.clone();
        let record = apply_leavers(&mut next, leavers);
        if j > 0 {
            nodes[j] += p * record.leavers.len() as f64;
            edges[j] += p * record.removed_edges.len() as f64;
        }
        if j + 1 < n {
            walk(&next, p, j + 1, n, nodes, edges, alive);
        }
    }
}

/// Mean-field projection of node and edge loss `n` steps ahead.
pub fn mean_field_horizon(net: &DecayingNetwork, n: usize) -> Result<ExpectationReport> {
    if n == 0 {
        return Err(DecayError::domain("horizon must be at least 1"));
    }
    let size = net.node_count();
    let mut survive: Vec<f64> = (0..size)
        .map(|i| {
            if net.is_alive(NodeId::from(i)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut prob: Vec<f64> = (0..size).map(|i| net.leave_prob(NodeId::from(i))).collect();
    let edges: Vec<_> = net.alive_edges().collect();

    let mut node_loss = Vec::with_capacity(n);
    let mut edge_loss = Vec::with_capacity(n);
    let mut alive = Vec::with_capacity(n);
    for j in 0..n {
        let step = net.time() + j + 1;
        let leave: Vec<f64> = survive.iter().zip(&prob).map(|(s, p)| s * p).collect();
        alive.push(survive.iter().sum());
        node_loss.push(leave.iter().sum());
        edge_loss.push(
            edges
                .iter()
                .map(|e| {
                    let (u, v) = (e.u.index(), e.v.index());
                    let (pu, pv) = (prob[u], prob[v]);
                    survive[u] * survive[v] * (pu + pv - pu * pv)
                })
                .sum(),
        );

        let mut next = prob.clone();
        let mut factors = Vec::new();
        for w in 0..size {
            if survive[w] == 0.0 {
                continue;
            }
            factors.clear();
            for &(u, _) in net.initial_neighbors(NodeId::from(w)) {
                let ui = u.index();
                if survive[ui] == 0.0 {
                    continue;
                }
                let d = net
                    .tie_strength(u, NodeId::from(w), step)
                    .expect("edge exists");
                let b = (1.0 - prob[ui]) * (1.0 - d);
                factors.push(NeighbourWeights {
                    absent: 1.0 - survive[ui],
                    leave: leave[ui],
                    stay: survive[ui] - leave[ui],
                    keep: b,
                });
            }
            next[w] = (prob[w] + expected_cohort_gain(&factors)).min(1.0);
        }
        for w in 0..size {
            survive[w] *= 1.0 - prob[w];
        }
        prob = next;
    }
    let cumulative = edge_loss.iter().sum();
    Ok(ExpectationReport {
        horizon: n,
        method: Projection::MeanField,
        expected_node_loss: node_loss,
        expected_edge_loss: edge_loss,
        expected_alive_nodes: alive,
        cumulative_edge_loss: cumulative,
    })
}
