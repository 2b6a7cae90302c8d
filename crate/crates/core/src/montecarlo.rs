//! Seeded Monte Carlo estimators and ensembles.
//!
//! Run `r` always uses seed `base + r` (wrapping), and per-run results are
//! reduced in run order, so estimates do not depend on how the runs were
//! scheduled across threads.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_leavers, simulate, LeaveSampler, SimulationConfig, SimulationTrace};
use crate::error::{DecayError, Result};
use crate::graph::DecayingNetwork;

fn run_indexed<T, F>(runs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..runs).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..runs).map(f).collect()
    }
}

/// Seed of run `run` in an ensemble with base seed `base`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

/// Sample mean with the unbiased (n - 1) standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub samples: usize,
}

impl Moments {
    pub fn from_samples<I: IntoIterator<Item = f64>>(values: I) -> Moments {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return Moments {
                mean: 0.0,
                std_dev: 0.0,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Moments {
            mean,
            std_dev: var.sqrt(),
            samples: n,
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.std_dev / (self.samples as f64).sqrt()
        }
    }
}

/// Empirical leaver count and edge loss of the next step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepEstimate {
    pub leavers: Moments,
    pub removed_edges: Moments,
}

/// Draws `runs` independent next steps from the current state of `net`.
pub fn one_step_estimate(net: &DecayingNetwork, runs: usize, seed: u64) -> Result<OneStepEstimate> {
    if runs == 0 {
        return Err(DecayError::domain("runs must be at least 1"));
    }
    let edges: Vec<_> = net.alive_edges().map(|e| (e.u, e.v)).collect();
    let none = BTreeSet::new();
    let samples = run_indexed(runs, |r| {
        let sampler = LeaveSampler::new(run_seed(seed, r));
        let leavers = sample_leavers(net, &sampler, &none).expect("no forced leavers");
        let removed = edges
            .iter()
            .filter(|(u, v)| leavers.contains(u) || leavers.contains(v))
            .count();
        (leavers.len() as f64, removed as f64)
    });
    Ok(OneStepEstimate {
        leavers: Moments::from_samples(samples.iter().map(|s| s.0)),
        removed_edges: Moments::from_samples(samples.iter().map(|s| s.1)),
    })
}

/// Per-step sample statistics of an ensemble of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub runs: usize,
    pub base_seed: u64,
    /// Index 0 is the starting state; index `j` is after step `j`.
    pub alive_nodes: Vec<Moments>,
    pub alive_edges: Vec<Moments>,
    /// Index `j - 1` is step `j`.
    pub node_loss: Vec<Moments>,
    pub edge_loss: Vec<Moments>,
}

/// Runs `runs` simulations with seeds `cfg.seed + r` and keeps every trace.
pub fn run_traces(
    net: &DecayingNetwork,
    cfg: &SimulationConfig,
    runs: usize,
) -> Result<Vec<SimulationTrace>> {
    cfg.validate()?;
    if runs == 0 {
        return Err(DecayError::domain("runs must be at least 1"));
    }
    run_indexed(runs, |r| {
        let mut c = cfg.clone();
        c.seed = run_seed(cfg.seed, r);
        simulate(net, &c)
    })
    .into_iter()
    .collect()
}

/// Aggregates an ensemble into per-step moments. Runs are padded to
/// `cfg.max_steps` so every step has `runs` samples.
pub fn ensemble(
    net: &DecayingNetwork,
    cfg: &SimulationConfig,
    runs: usize,
) -> Result<EnsembleReport> {
    let mut padded = cfg.clone();
    padded.stop_when_empty = false;
    let traces = run_traces(net, &padded, runs)?;
    let series: Vec<Vec<(usize, usize)>> =
        traces.iter().map(SimulationTrace::alive_series).collect();
    let len = cfg.max_steps + 1;
    let column = |j: usize, pick: fn(&(usize, usize)) -> usize| {
        Moments::from_samples(series.iter().map(|s| pick(&s[j]) as f64))
    };
    let loss = |j: usize, pick: fn(&(usize, usize)) -> usize| {
        Moments::from_samples(
            series
                .iter()
                .map(|s| (pick(&s[j - 1]) - pick(&s[j])) as f64),
        )
    };
    Ok(EnsembleReport {
        runs,
        base_seed: cfg.seed,
        alive_nodes: (0..len).map(|j| column(j, |p| p.0)).collect(),
        alive_edges: (0..len).map(|j| column(j, |p| p.1)).collect(),
        node_loss: (1..len).map(|j| loss(j, |p| p.0)).collect(),
        edge_loss: (1..len).map(|j| loss(j, |p| p.1)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_network, InitialProbability, NodeId};

    #[test]
    fn moments_of_small_samples() {
        let m = Moments::from_samples([1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std_dev, 1.0);
        assert_eq!(m.samples, 3);
        assert_eq!(Moments::from_samples([4.0]).std_dev, 0.0);
    }

    #[test]
    fn single_node_frequency_matches_probability() {
        // 2-node graph: node 0 at 0.3; count how often it leaves.
        let net = build_network(
            [(NodeId(0), NodeId(1), 0.5)],
            &InitialProbability::Explicit(vec![0.3, 0.6]),
        )
        .unwrap();
        let runs = 100_000;
        let hits = (0..runs)
            .filter(|&r| {
                let s = LeaveSampler::new(run_seed(17, r));
                sample_leavers(&net, &s, &BTreeSet::new())
                    .unwrap()
                    .contains(&NodeId(0))
            })
            .count();
        let freq = hits as f64 / runs as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn ensemble_is_deterministic_and_shaped() {
        let net = build_network(
            [
                (NodeId(0), NodeId(1), 0.5),
                (NodeId(1), NodeId(2), 0.5),
                (NodeId(2), NodeId(0), 0.5),
            ],
            &InitialProbability::Constant(0.3),
        )
        .unwrap();
        let cfg = SimulationConfig::new(9, 6);
        let a = ensemble(&net, &cfg, 64).unwrap();
        let b = ensemble(&net, &cfg, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.alive_nodes.len(), 7);
        assert_eq!(a.node_loss.len(), 6);
        assert_eq!(a.alive_nodes[0].mean, 3.0);
        assert!(ensemble(&net, &cfg, 0).is_err());
    }
}
