//! Text formats, run persistence and distribution summaries.
//!
//! Edge lists are whitespace separated `u v delta` lines; `#` starts a
//! comment and a non-numeric first line is taken as a header. Per-node
//! probability files hold `u pi0` lines. Floats are written with Rust's
//! shortest round-trip formatting, so reloaded values are bit-identical.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::EdgeTriple;
use crate::dynamics::{apply_leavers, SimulationTrace};
use crate::error::{DecayError, Result};
use crate::expectation::ExpectationReport;
use crate::graph::{build_network, DecayingNetwork, InitialProbability, NodeId};
use crate::influence::{
    expected_neighbors_leave_resilience, influence_ranking, neighbors_leave_resilience,
};
use crate::montecarlo::EnsembleReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DecayError {
    DecayError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

/// Parses an edge list. `path` is only used in error locations.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Vec<EdgeTriple>> {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (idx, (line, fields)) in content_lines(text).enumerate() {
        let numeric = fields.first().is_some_and(|f| f.parse::<u32>().is_ok());
        if idx == 0 && !numeric {
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 'u v delta', got {} fields", fields.len()),
            ));
        }
        let u: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad node id '{}'", fields[0])))?;
        let v: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad node id '{}'", fields[1])))?;
        let delta: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad tie strength '{}'", fields[2])))?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(parse_err(
                path,
                line,
                format!("tie strength {delta} is outside (0, 1]"),
            ));
        }
        if u == v {
            return Err(parse_err(path, line, format!("self-loop on node {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(parse_err(path, line, format!("duplicate edge ({u}, {v})")));
        }
        edges.push((NodeId(u), NodeId(v), delta));
    }
    Ok(edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Vec<EdgeTriple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DecayError::io(path, e))?;
    parse_edge_list(&text, path)
}

pub fn format_edge_list(edges: &[EdgeTriple]) -> String {
    let mut out = String::from("# u v delta\n");
    for (u, v, d) in edges {
        writeln!(out, "{u} {v} {d}").unwrap();
    }
    out
}

pub fn write_edge_list(edges: &[EdgeTriple], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &format_edge_list(edges))
}

/// Reads `u pi0` lines into a dense vector of length `n`.
pub fn load_probabilities(path: impl AsRef<Path>, n: usize) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DecayError::io(path, e))?;
    let mut values = vec![None; n];
    for (idx, (line, fields)) in content_lines(&text).enumerate() {
        let numeric = fields.first().is_some_and(|f| f.parse::<u32>().is_ok());
        if idx == 0 && !numeric {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(path, line, "expected 'u pi0'"));
        }
        let u: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad node id '{}'", fields[0])))?;
        let p: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad probability '{}'", fields[1])))?;
        if u >= n {
            return Err(parse_err(
                path,
                line,
                format!("node {u} is not in the graph"),
            ));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(parse_err(
                path,
                line,
                format!("probability {p} is outside (0, 1]"),
            ));
        }
        if values[u].replace(p).is_some() {
            return Err(parse_err(path, line, format!("node {u} listed twice")));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| parse_err(path, 0, format!("no probability for node {i}"))))
        .collect()
}

fn node_count(edges: &[EdgeTriple]) -> usize {
    edges
        .iter()
        .map(|(u, v, _)| u.index().max(v.index()) + 1)
        .max()
        .unwrap_or(0)
}

/// Parses `const:c`, `uniform:lo:hi`, `invdeg:a` or `file:path`.
/// `seed` keys the uniform draw; `edges` sizes the file variant.
pub fn parse_pi0_spec(spec: &str, seed: u64, edges: &[EdgeTriple]) -> Result<InitialProbability> {
    let bad = || DecayError::InitialProbability(format!("cannot parse '{spec}'"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.splitn(2, ':').collect();
    match parts.as_slice() {
        ["const", c] => Ok(InitialProbability::Constant(num(c)?)),
        ["invdeg", a] => Ok(InitialProbability::InverseDegree(num(a)?)),
        ["uniform", rest] => {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            Ok(InitialProbability::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
                seed,
            })
        }
        ["file", path] => Ok(InitialProbability::Explicit(load_probabilities(
            path,
            node_count(edges),
        )?)),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// `(lower bin edge, count)` over equal-width bins on `[min, max]`.
    pub histogram: Vec<(f64, usize)>,
}

pub fn summarize_distribution(
    metric: &str,
    values: &[f64],
    bins: usize,
) -> Result<DistributionSummary> {
    if values.is_empty() {
        return Err(DecayError::domain("cannot summarise an empty sample"));
    }
    if bins == 0 {
        return Err(DecayError::domain("bins must be at least 1"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in values {
        let b = if width > 0.0 {
            (((x - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(DistributionSummary {
        metric: metric.to_string(),
        count: values.len(),
        mean,
        std_dev: var.sqrt(),
        min,
        max,
        histogram: counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (min + i as f64 * width, c))
            .collect(),
    })
}

/// One row per step: counts after the step.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("step,alive_nodes,alive_edges,leavers,removed_edges\n");
    let series = trace.alive_series();
    for (rec, (nodes, edges)) in trace.steps.iter().zip(series.iter().skip(1)) {
        writeln!(
            out,
            "{},{},{},{},{}",
            rec.step,
            nodes,
            edges,
            rec.leavers.len(),
            rec.removed_edges.len()
        )
        .unwrap();
    }
    out
}

/// Leave probability of every alive member at `t = 0` and after every step.
pub fn probabilities_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("step,node,leave_prob\n");
    let start = trace.final_network.reset();
    for (id, s) in start.nodes() {
        writeln!(out, "0,{id},{}", s.leave_prob).unwrap();
    }
    for rec in &trace.steps {
        for (id, p) in &rec.prob_snapshot {
            writeln!(out, "{},{id},{p}", rec.step).unwrap();
        }
    }
    out
}

pub fn leavers_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("step,node\n");
    for rec in &trace.steps {
        for id in &rec.leavers {
            writeln!(out, "{},{id}", rec.step).unwrap();
        }
    }
    out
}

pub fn expectation_csv(report: &ExpectationReport) -> String {
    let mut out = String::from("step,expected_nodes_lost,expected_edges_lost\n");
    for (j, (n, e)) in report
        .expected_node_loss
        .iter()
        .zip(&report.expected_edge_loss)
        .enumerate()
    {
        writeln!(out, "{},{n},{e}", j + 1).unwrap();
    }
    let nodes: f64 = report.expected_node_loss.iter().sum();
    writeln!(out, "total,{nodes},{}", report.cumulative_edge_loss).unwrap();
    out
}

pub fn ensemble_csv(report: &EnsembleReport) -> String {
    let mut out =
        String::from("step,mean_alive_nodes,sd_alive_nodes,mean_alive_edges,sd_alive_edges\n");
    for (j, (n, e)) in report
        .alive_nodes
        .iter()
        .zip(&report.alive_edges)
        .enumerate()
    {
        writeln!(out, "{j},{},{},{},{}", n.mean, n.std_dev, e.mean, e.std_dev).unwrap();
    }
    out
}

/// Per-member metrics of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub node: NodeId,
    pub leave_time: usize,
    pub li: usize,
    pub nlr: f64,
    pub expected_nlr: f64,
}

/// Metrics of every member that left, by id, with LI over `offset` steps.
pub fn member_metrics(trace: &SimulationTrace, offset: usize) -> Result<Vec<MemberMetrics>> {
    let mut ranking = influence_ranking(trace, offset)?;
    ranking.sort_by_key(|s| s.node);
    ranking
        .into_iter()
        .map(|s| {
            Ok(MemberMetrics {
                node: s.node,
                leave_time: trace.final_network.node(s.node)?.leave_time.expect("left"),
                li: s.score,
                nlr: neighbors_leave_resilience(trace, s.node)?.score,
                expected_nlr: expected_neighbors_leave_resilience(trace, s.node)?,
            })
        })
        .collect()
}

pub fn metrics_csv(metrics: &[MemberMetrics]) -> String {
    let mut out = String::from("node,leave_time,li,nlr,expected_nlr\n");
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.node, m.leave_time, m.li, m.nlr, m.expected_nlr
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub input_path: Option<String>,
    pub seed: u64,
    pub config_digest: String,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

/// Digest of the canonical JSON encoding of a resolved configuration.
pub fn config_digest<C: Serialize>(config: &C) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| DecayError::io(path, e))
}

/// Writes named files into `dir` and a manifest covering them.
pub fn write_outputs<C: Serialize>(
    dir: impl AsRef<Path>,
    files: &[(&str, String)],
    input_path: Option<&str>,
    seed: u64,
    config: &C,
) -> Result<RunManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DecayError::io(dir, e))?;
    let mut outputs = Vec::new();
    for (name, contents) in files {
        write_file(&dir.join(name), contents)?;
        outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
    }
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        input_path: input_path.map(str::to_string),
        seed,
        config_digest: config_digest(config)?,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DecayError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn overrides_csv(net: &DecayingNetwork) -> String {
    let mut out = String::from("step,u,v,delta\n");
    for ((step, u, v), d) in net.tie_overrides() {
        writeln!(out, "{step},{u},{v},{d}").unwrap();
    }
    out
}

/// Everything needed to reload `trace`, plus the per-step summaries.
pub fn trace_files(trace: &SimulationTrace) -> Result<Vec<(&'static str, String)>> {
    if trace.steps.first().is_some_and(|r| r.step != 1) {
        return Err(DecayError::domain(
            "only traces that start at t = 0 can be persisted",
        ));
    }
    let start = trace.final_network.reset();
    let edges: Vec<EdgeTriple> = start
        .initial_edges()
        .map(|e| (e.u, e.v, e.tie_strength))
        .collect();
    let mut pi0 = String::from("# u pi0\n");
    for (id, s) in start.nodes() {
        writeln!(pi0, "{id} {}", s.initial_prob).unwrap();
    }
    Ok(vec![
        ("edges.txt", format_edge_list(&edges)),
        ("pi0.txt", pi0),
        ("tie_overrides.csv", overrides_csv(&start)),
        ("trace.csv", trace_csv(trace)),
        ("leavers.csv", leavers_csv(trace)),
        ("probabilities.csv", probabilities_csv(trace)),
    ])
}

/// Persists a trace into `dir` with its manifest.
pub fn persist_trace<C: Serialize>(
    trace: &SimulationTrace,
    dir: impl AsRef<Path>,
    input_path: Option<&str>,
    config: &C,
) -> Result<RunManifest> {
    write_outputs(dir, &trace_files(trace)?, input_path, trace.seed, config)
}

fn csv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| DecayError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::to_string).collect()))
        .collect())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, row: &[String], i: usize) -> Result<T> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, line, format!("bad or missing column {i}")))
}

/// Reloads a trace written by [`persist_trace`] by replaying its leavers.
pub fn load_trace(dir: impl AsRef<Path>) -> Result<SimulationTrace> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;
    let edges = load_edge_list(dir.join("edges.txt"))?;
    let pi0 = load_probabilities(dir.join("pi0.txt"), node_count(&edges))?;
    let mut net = build_network(edges, &InitialProbability::Explicit(pi0))?;

    let path = dir.join("tie_overrides.csv");
    for (line, row) in csv_rows(&path)? {
        let step: usize = field(&path, line, &row, 0)?;
        let u: u32 = field(&path, line, &row, 1)?;
        let v: u32 = field(&path, line, &row, 2)?;
        let d: f64 = field(&path, line, &row, 3)?;
        net.set_tie_override(step, NodeId(u), NodeId(v), d)?;
    }

    let path = dir.join("trace.csv");
    let steps: Vec<usize> = csv_rows(&path)?
        .into_iter()
        .map(|(line, row)| field(&path, line, &row, 0))
        .collect::<Result<_>>()?;
    let path = dir.join("leavers.csv");
    let mut leavers: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for (line, row) in csv_rows(&path)? {
        let step: usize = field(&path, line, &row, 0)?;
        let node: u32 = field(&path, line, &row, 1)?;
        leavers.entry(step).or_default().insert(NodeId(node));
    }

    let mut records = Vec::with_capacity(steps.len());
    for (i, &step) in steps.iter().enumerate() {
        if step != i + 1 {
            return Err(parse_err(
                &dir.join("trace.csv"),
                i + 2,
                "steps must run 1, 2, ...",
            ));
        }
        let cohort = leavers.remove(&step).unwrap_or_default();
        if cohort.iter().any(|&w| !net.is_alive(w)) {
            return Err(parse_err(
                &dir.join("leavers.csv"),
                0,
                format!("step {step} lists a departed member"),
            ));
        }
        records.push(apply_leavers(&mut net, cohort));
    }

    // the stored probabilities must agree with the replay
    let path = dir.join("probabilities.csv");
    for (line, row) in csv_rows(&path)? {
        let step: usize = field(&path, line, &row, 0)?;
        let node: u32 = field(&path, line, &row, 1)?;
        let p: f64 = field(&path, line, &row, 2)?;
        let expected = if step == 0 {
            net.node(NodeId(node))?.initial_prob
        } else {
            records
                .get(step - 1)
                .and_then(|r| r.prob_snapshot.get(&NodeId(node)).copied())
                .ok_or_else(|| parse_err(&path, line, "unexpected row"))?
        };
        if expected.to_bits() != p.to_bits() {
            return Err(parse_err(
                &path,
                line,
                format!("stored {p} but replay gives {expected}"),
            ));
        }
    }

    Ok(SimulationTrace {
        seed: manifest.seed,
        steps: records,
        final_network: net,
    })
}

/// Paths listed in a manifest, resolved against its directory.
pub fn manifest_paths(dir: impl AsRef<Path>, manifest: &RunManifest) -> Vec<PathBuf> {
    manifest
        .outputs
        .iter()
        .map(|o| dir.as_ref().join(&o.path))
        .collect()
}
