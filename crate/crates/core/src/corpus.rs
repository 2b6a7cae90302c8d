//! Seeded graph generators and the small-graph corpus used by the checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{build_network, DecayingNetwork, InitialProbability, NodeId};

pub type EdgeTriple = (NodeId, NodeId, f64);

/// Erdős–Rényi `G(n, p)` with isolated vertices dropped and the rest relabelled densely.
pub fn gnp(n: usize, p: f64, seed: u64) -> Vec<(NodeId, NodeId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for &(u, v) in &edges {
        for x in [u, v] {
            if label[x] == usize::MAX {
                label[x] = next;
                next += 1;
            }
        }
    }
    edges
        .into_iter()
        .map(|(u, v)| (NodeId::from(label[u]), NodeId::from(label[v])))
        .collect()
}

pub fn star(leaves: usize) -> Vec<(NodeId, NodeId)> {
    (1..=leaves).map(|i| (NodeId(0), NodeId::from(i))).collect()
}

pub fn path(nodes: usize) -> Vec<(NodeId, NodeId)> {
    (1..nodes)
        .map(|i| (NodeId::from(i - 1), NodeId::from(i)))
        .collect()
}

pub fn clique(nodes: usize) -> Vec<(NodeId, NodeId)> {
    (0..nodes)
        .flat_map(|u| ((u + 1)..nodes).map(move |v| (NodeId::from(u), NodeId::from(v))))
        .collect()
}

/// Attaches the same tie strength to every edge.
pub fn with_tie(edges: &[(NodeId, NodeId)], delta: f64) -> Vec<EdgeTriple> {
    edges.iter().map(|&(u, v)| (u, v, delta)).collect()
}

/// Attaches tie strengths drawn uniformly from `(0, 1]`.
pub fn with_random_ties(edges: &[(NodeId, NodeId)], seed: u64) -> Vec<EdgeTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges
        .iter()
        .map(|&(u, v)| (u, v, 1.0 - rng.gen::<f64>()))
        .collect()
}

/// Random graph with uniform `(0, 1]` initial probabilities and tie strengths.
/// Retries with derived seeds until the graph has at least one edge.
pub fn random_network(n: usize, p: f64, seed: u64) -> Result<DecayingNetwork> {
    let mut attempt = seed;
    loop {
        let edges = gnp(n, p, attempt);
        if !edges.is_empty() {
            let init = InitialProbability::Uniform {
                lo: 0.0,
                hi: 1.0,
                seed: seed ^ 0x5eed,
            };
            return build_network(with_random_ties(&edges, seed.rotate_left(17)), &init);
        }
        attempt = attempt.wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
}

/// Thirty graphs of at most eight members: random, stars, paths and cliques,
/// each with uniform random initial probabilities and tie strengths.
pub fn check_corpus(seed: u64) -> Result<Vec<DecayingNetwork>> {
    let mut shapes: Vec<Vec<(NodeId, NodeId)>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while shapes.len() < 15 {
        let n = rng.gen_range(4..=8);
        let edges = gnp(n, 0.5, rng.gen());
        if edges.len() >= 2 {
            shapes.push(edges);
        }
    }
    shapes.extend((3..=7).map(star));
    shapes.extend((4..=8).map(path));
    shapes.extend((4..=8).map(clique));
    shapes
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let init = InitialProbability::Uniform {
                lo: 0.0,
                hi: 1.0,
                seed: s,
            };
            build_network(with_random_ties(edges, s ^ 0xdead_beef), &init)
        })
        .collect()
}
