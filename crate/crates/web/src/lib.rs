//! Browser bindings: every export takes plain values and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use decay_core::corpus::{gnp, with_random_ties};
use decay_core::expectation::{expected_edge_loss_horizon, Projection};
use decay_core::io::{format_edge_list, parse_edge_list, parse_pi0_spec};
use decay_core::montecarlo::ensemble;
use decay_core::optimize::{greedy_maximize, greedy_minimize, DEFAULT_ENUMERATION_CAP};
use decay_core::{build_network, DecayingNetwork, NodeId, SeedSelection, SimulationConfig};

/// Largest graph the page will build.
pub const MAX_NODES: usize = 400;

fn network(edges: &str, pi0: &str, seed: u64) -> Result<DecayingNetwork, String> {
    let triples =
        parse_edge_list(edges, std::path::Path::new("input")).map_err(|e| e.to_string())?;
    let init = parse_pi0_spec(pi0, seed, &triples).map_err(|e| e.to_string())?;
    let net = build_network(triples, &init).map_err(|e| e.to_string())?;
    if net.node_count() > MAX_NODES {
        return Err(format!("at most {MAX_NODES} members"));
    }
    Ok(net)
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Layout {
    nodes: usize,
    edges: Vec<(u32, u32, f64)>,
    text: String,
}

/// Seeded random graph as an edge list plus its parts.
pub fn random_graph_json(n: usize, p: f64, seed: u64) -> Result<String, String> {
    if !(2..=MAX_NODES).contains(&n) {
        return Err(format!("n must be between 2 and {MAX_NODES}"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err("p must be in (0, 1]".into());
    }
    let triples = with_random_ties(&gnp(n, p, seed), seed ^ 0x7e57);
    if triples.is_empty() {
        return Err("no edges drawn; raise p".into());
    }
    let nodes = triples
        .iter()
        .map(|(u, v, _)| u.index().max(v.index()) + 1)
        .max()
        .unwrap_or(0);
    json(&Layout {
        nodes,
        text: format_edge_list(&triples),
        edges: triples.iter().map(|&(u, v, d)| (u.0, v.0, d)).collect(),
    })
}

#[derive(Serialize)]
struct Curve {
    steps: usize,
    runs: usize,
    method: Projection,
    /// Sample mean and standard deviation of alive members and edges, from `t = 0`.
    alive_nodes: Vec<(f64, f64)>,
    alive_edges: Vec<(f64, f64)>,
    /// Projected alive members and edges from `t = 0`.
    projected_nodes: Vec<f64>,
    projected_edges: Vec<f64>,
}

/// Ensemble decay curve next to the sampling-free projection.
pub fn decay_curve_json(
    edges: &str,
    pi0: &str,
    seed: u64,
    steps: usize,
    runs: usize,
) -> Result<String, String> {
    if steps == 0 || steps > 200 {
        return Err("steps must be between 1 and 200".into());
    }
    if runs == 0 || runs > 5_000 {
        return Err("runs must be between 1 and 5000".into());
    }
    let net = network(edges, pi0, seed)?;
    let report =
        ensemble(&net, &SimulationConfig::new(seed, steps), runs).map_err(|e| e.to_string())?;
    let projection = expected_edge_loss_horizon(&net, steps).map_err(|e| e.to_string())?;
    let mut projected_nodes = vec![net.alive_count() as f64];
    let mut projected_edges = vec![net.alive_edge_count() as f64];
    for j in 0..steps {
        projected_nodes.push(projected_nodes[j] - projection.expected_node_loss[j]);
        projected_edges.push(projected_edges[j] - projection.expected_edge_loss[j]);
    }
    json(&Curve {
        steps,
        runs,
        method: projection.method,
        alive_nodes: report
            .alive_nodes
            .iter()
            .map(|m| (m.mean, m.std_dev))
            .collect(),
        alive_edges: report
            .alive_edges
            .iter()
            .map(|m| (m.mean, m.std_dev))
            .collect(),
        projected_nodes,
        projected_edges,
    })
}

/// Greedy choice of `k` members whose departure most (or least) raises
/// their neighbours' leave probabilities.
pub fn select_members_json(
    edges: &str,
    pi0: &str,
    seed: u64,
    k: usize,
    maximize: bool,
    certify: bool,
) -> Result<String, String> {
    let net = network(edges, pi0, seed)?;
    let run = || -> decay_core::Result<SeedSelection> {
        let s = if maximize {
            greedy_maximize(&net, k)?
        } else {
            greedy_minimize(&net, k, DEFAULT_ENUMERATION_CAP)?
        };
        if certify {
            s.certify(&net, DEFAULT_ENUMERATION_CAP)
        } else {
            Ok(s)
        }
    };
    let selection = run().map_err(|e| e.to_string())?;
    #[derive(Serialize)]
    struct Out {
        selection: SeedSelection,
        probabilities: Vec<f64>,
    }
    json(&Out {
        probabilities: (0..net.node_count())
            .map(|i| net.leave_prob(NodeId::from(i)))
            .collect(),
        selection,
    })
}

#[wasm_bindgen(js_name = randomGraph)]
pub fn random_graph(n: usize, p: f64, seed: u32) -> Result<String, JsValue> {
    random_graph_json(n, p, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = decayCurve)]
pub fn decay_curve(
    edges: &str,
    pi0: &str,
    seed: u32,
    steps: usize,
    runs: usize,
) -> Result<String, JsValue> {
    decay_curve_json(edges, pi0, seed.into(), steps, runs).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = selectMembers)]
pub fn select_members(
    edges: &str,
    pi0: &str,
    seed: u32,
    k: usize,
    maximize: bool,
    certify: bool,
) -> Result<String, JsValue> {
    select_members_json(edges, pi0, seed.into(), k, maximize, certify)
        .map_err(|e| JsValue::from_str(&e))
}
