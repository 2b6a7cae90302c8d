//! Per-member metrics over a finished run.

use serde::{Deserialize, Serialize};

use crate::dynamics::SimulationTrace;
use crate::error::{DecayError, Result};
use crate::graph::NodeId;

/// Neighbours of a member that left within a window after it did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub node: NodeId,
    pub horizon: usize,
    pub score: usize,
}

/// Fraction of a member's original neighbours that left strictly before it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResilienceScore {
    pub node: NodeId,
    pub score: f64,
}

fn leave_time(trace: &SimulationTrace, w: NodeId) -> Result<usize> {
    trace
        .final_network
        .node(w)?
        .leave_time
        .ok_or_else(|| DecayError::domain(format!("node {w} never left")))
}

/// Counts neighbours of `w` (as they stood when `w` left) whose leave time
/// falls in `(l(w), n]`.
pub fn leave_influence(trace: &SimulationTrace, w: NodeId, n: usize) -> Result<InfluenceScore> {
    let left_at = leave_time(trace, w)?;
    if n <= left_at {
        return Err(DecayError::domain(format!(
            "horizon {n} must exceed the leave time {left_at} of node {w}"
        )));
    }
    let net = &trace.final_network;
    let score = net
        .neighbors_at(w, left_at - 1)
        .filter(|(u, _)| {
            net.node(*u)
                .expect("neighbour exists")
                .leave_time
                .is_some_and(|l| l > left_at && l <= n)
        })
        .count();
    Ok(InfluenceScore {
        node: w,
        horizon: n,
        score,
    })
}

pub fn neighbors_leave_resilience(trace: &SimulationTrace, w: NodeId) -> Result<ResilienceScore> {
    let left_at = leave_time(trace, w)?;
    let net = &trace.final_network;
    let neighbors = net.initial_neighbors(w);
    let before = neighbors
        .iter()
        .filter(|(u, _)| {
            net.node(*u)
                .expect("neighbour exists")
                .leave_time
                .is_some_and(|l| l < left_at)
        })
        .count();
    Ok(ResilienceScore {
        node: w,
        score: before as f64 / neighbors.len() as f64,
    })
}

/// Expected counterpart of [`neighbors_leave_resilience`]: the summed leave
/// probabilities of `w`'s alive neighbours over the steps before `w` left,
/// divided by the original degree. Not capped at 1.
pub fn expected_neighbors_leave_resilience(trace: &SimulationTrace, w: NodeId) -> Result<f64> {
    let left_at = leave_time(trace, w)?;
    let net = &trace.final_network;
    let mut total = 0.0;
    for t in 1..left_at {
        for (u, _) in net.neighbors_at(w, t - 1) {
            total += if t == 1 {
                net.node(u).expect("node exists").initial_prob
            } else {
                net.history()[t - 2].prob_snapshot[&u]
            };
        }
    }
    Ok(total / net.initial_degree(w) as f64)
}

/// Scores every member that left with horizon `l(w) + offset`, best first,
/// ties by ascending id.
pub fn influence_ranking(trace: &SimulationTrace, offset: usize) -> Result<Vec<InfluenceScore>> {
    if offset == 0 {
        return Err(DecayError::domain("ranking offset must be at least 1"));
    }
    let mut scores = trace
        .final_network
        .nodes()
        .filter_map(|(id, s)| s.leave_time.map(|l| (id, l)))
        .map(|(id, l)| leave_influence(trace, id, l + offset))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.score.cmp(&a.score).then(a.node.cmp(&b.node)));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimulationConfig};
    use crate::graph::{build_network, DecayingNetwork, InitialProbability};

    const TINY: f64 = 1e-12;

    fn net(edges: &[(u32, u32, f64)], init: InitialProbability) -> DecayingNetwork {
        build_network(
            edges.iter().map(|&(u, v, d)| (NodeId(u), NodeId(v), d)),
            &init,
        )
        .unwrap()
    }

    fn run(n: &DecayingNetwork, cfg: SimulationConfig) -> SimulationTrace {
        simulate(n, &cfg).unwrap()
    }

    #[test]
    fn star_center_drags_leaves_out() {
        // center forced out at step 1; every leaf loses its only neighbour
        let star = net(
            &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
            InitialProbability::Constant(TINY),
        );
        let trace = run(&star, SimulationConfig::new(4, 5).force(1, [NodeId(0)]));
        assert_eq!(trace.steps[1].leavers.len(), 3);
        assert_eq!(leave_influence(&trace, NodeId(0), 2).unwrap().score, 3);
        // the leaves left last in their neighbourhood
        assert_eq!(leave_influence(&trace, NodeId(1), 5).unwrap().score, 0);
        assert_eq!(
            neighbors_leave_resilience(&trace, NodeId(1)).unwrap().score,
            1.0
        );
        assert_eq!(
            neighbors_leave_resilience(&trace, NodeId(0)).unwrap().score,
            0.0
        );
        assert!(leave_influence(&trace, NodeId(0), 1).is_err());
    }

    #[test]
    fn resilience_three_of_four() {
        // node 0 with neighbours 1..=4; 1,2,3 forced at step 1, 0 forced at step 2
        let edges = [
            (0, 1, 0.1),
            (0, 2, 0.1),
            (0, 3, 0.1),
            (0, 4, 0.1),
            (4, 5, 0.1),
        ];
        let n = net(&edges, InitialProbability::Constant(TINY));
        let cfg = SimulationConfig::new(1, 3)
            .force(1, [NodeId(1), NodeId(2), NodeId(3)])
            .force(2, [NodeId(0)]);
        let trace = run(&n, cfg);
        assert_eq!(
            neighbors_leave_resilience(&trace, NodeId(0)).unwrap().score,
            0.75
        );
        // one-term window: leavers of step l+1 among the neighbours
        let li = leave_influence(&trace, NodeId(0), 3).unwrap();
        let expected = trace.steps[2]
            .leavers
            .iter()
            .filter(|u| [NodeId(4)].contains(u))
            .count();
        assert_eq!(li.score, expected);
    }

    #[test]
    fn never_left_is_an_error() {
        let n = net(
            &[(0, 1, 0.1), (1, 2, 0.1)],
            InitialProbability::Constant(TINY),
        );
        let trace = run(&n, SimulationConfig::new(1, 2));
        assert!(leave_influence(&trace, NodeId(0), 3).is_err());
        assert!(neighbors_leave_resilience(&trace, NodeId(0)).is_err());
        assert!(influence_ranking(&trace, 1).unwrap().is_empty());
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        // two disjoint edges, both far ends forced together
        let n = net(
            &[(0, 1, 0.1), (2, 3, 0.1)],
            InitialProbability::Constant(TINY),
        );
        let trace = run(
            &n,
            SimulationConfig::new(1, 1).force(1, [NodeId(3), NodeId(1)]),
        );
        let r = influence_ranking(&trace, 1).unwrap();
        assert_eq!(
            r.iter().map(|s| s.node).collect::<Vec<_>>(),
            vec![NodeId(1), NodeId(3)]
        );

        let single = run(&n, SimulationConfig::new(1, 1).force(1, [NodeId(2)]));
        assert_eq!(influence_ranking(&single, 1).unwrap().len(), 1);
        assert!(influence_ranking(&single, 0).is_err());
    }

    #[test]
    fn expected_resilience_sums_neighbour_probabilities() {
        let n = net(
            &[(0, 1, 0.5), (0, 2, 0.5)],
            InitialProbability::Explicit(vec![TINY, 0.25, 0.5]),
        );
        let trace = run(&n, SimulationConfig::new(1, 2).force(2, [NodeId(0)]));
        let value = expected_neighbors_leave_resilience(&trace, NodeId(0)).unwrap();
        assert_eq!(value, 0.75 / 2.0);
    }
}
