use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use decay_core::checks::{run_claim, Claim, GainModel, SuiteConfig};
use decay_core::corpus::EdgeTriple;
use decay_core::expectation::{expected_edge_loss_horizon, ExpectationReport};
use decay_core::io::{self, sha256_hex};
use decay_core::montecarlo::{ensemble, run_seed, run_traces, EnsembleReport};
use decay_core::optimize::{
    greedy_maximize_with, greedy_minimize_with, lazy_marginals_with, DEFAULT_ENUMERATION_CAP,
};
use decay_core::{build_network, simulate, DecayingNetwork, NodeId, Objective, SimulationConfig};

const ENUM_CAP_VAR: &str = "DECAY_ENUM_CAP";

/// Simulate, predict and optimise member departures on decaying networks.
#[derive(Parser)]
#[command(name = "decay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded simulations and write trace CSVs with a manifest.
    Simulate(SimulateArgs),
    /// Expected node and edge loss over a horizon, without sampling.
    Predict(PredictArgs),
    /// Leave influence and resilience of every member of a persisted trace.
    Metrics(MetricsArgs),
    /// Pick k members whose departure maximises or minimises the induced gain.
    Optimize(OptimizeArgs),
    /// Check the order and diminishing-returns properties of the model.
    Check(CheckArgs),
    /// Mean, standard deviation and histogram of one CSV column.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct NetworkArgs {
    /// Edge list: `u v delta` per line.
    #[arg(long)]
    edges: PathBuf,
    /// Initial leave probabilities: const:c, uniform:lo:hi, invdeg:a or file:path.
    #[arg(long, default_value = "const:0.1")]
    pi0: String,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    /// Report format [default: csv; structured for optimize].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Directory for the report and its manifest; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Structured,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Maximum number of steps.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Number of runs; run r uses seed + r, and more than one writes an ensemble report.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Force members out at a step, as `step:id,id,...`; repeatable.
    #[arg(long = "force", value_name = "STEP:IDS")]
    forced: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Number of steps to project.
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    /// Monte Carlo runs reported alongside the projection; 0 disables them.
    #[arg(long, default_value_t = 0)]
    mc_runs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory written by `simulate` with a single run.
    #[arg(long)]
    trace_dir: PathBuf,
    /// Leave influence window: neighbours leaving within this many steps after a member.
    #[arg(long, default_value_t = 1)]
    offset: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Max,
    Min,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ObjectiveArg {
    Cohort,
    Survivors,
    Additive,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Number of members to pick.
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Max)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Cohort)]
    objective: ObjectiveArg,
    /// Lazy evaluation of marginal gains (maximisation only).
    #[arg(long)]
    lazy: bool,
    /// Compare against the exhaustive optimum (capped by DECAY_ENUM_CAP).
    #[arg(long)]
    certify: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Run every claim.
    #[arg(long, conflicts_with = "claim", required_unless_present = "claim")]
    all: bool,
    /// One claim: sum-order, product-order, additive-modular, monotone or submodular.
    #[arg(long)]
    claim: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Swap in a gain without diminishing returns, to exercise the failure path.
    #[arg(long, hide = true)]
    inject_fault: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column to summarise.
    #[arg(long)]
    column: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[command(flatten)]
    output: OutputArgs,
}

/// Outcome of a subcommand: success or a failed property check.
enum Status {
    Ok,
    Violations,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violations) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Optimize(a) => optimize_cmd(a),
        Command::Check(a) => check_cmd(a),
        Command::Summarize(a) => summarize_cmd(a),
    }
}

/// Resolved network inputs, hashed into every config digest.
#[derive(Serialize)]
struct ResolvedNetwork {
    edges_sha256: String,
    pi0: String,
    seed: u64,
    initial_probabilities: Vec<f64>,
}

fn load_network(args: &NetworkArgs) -> Result<(DecayingNetwork, ResolvedNetwork)> {
    let bytes =
        fs::read(&args.edges).with_context(|| format!("reading {}", args.edges.display()))?;
    let text = String::from_utf8(bytes)
        .with_context(|| format!("{} is not UTF-8", args.edges.display()))?;
    let edges: Vec<EdgeTriple> = io::parse_edge_list(&text, &args.edges)?;
    let init = io::parse_pi0_spec(&args.pi0, args.seed, &edges)?;
    let net = build_network(edges, &init)?;
    let resolved = ResolvedNetwork {
        edges_sha256: sha256_hex(text.as_bytes()),
        pi0: args.pi0.clone(),
        seed: args.seed,
        initial_probabilities: net.nodes().map(|(_, s)| s.initial_prob).collect(),
    };
    Ok((net, resolved))
}

fn parse_forced(specs: &[String]) -> Result<BTreeMap<usize, BTreeSet<NodeId>>> {
    let mut forced: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for spec in specs {
        let (step, ids) = spec
            .split_once(':')
            .ok_or_else(|| anyhow!("--force expects STEP:IDS, got '{spec}'"))?;
        let step: usize = step
            .parse()
            .with_context(|| format!("bad step in '{spec}'"))?;
        let set = forced.entry(step).or_default();
        for id in ids.split(',').filter(|s| !s.is_empty()) {
            set.insert(NodeId(
                id.parse()
                    .with_context(|| format!("bad node id in '{spec}'"))?,
            ));
        }
    }
    Ok(forced)
}

fn input_path(p: &Path) -> Option<String> {
    Some(p.display().to_string())
}

/// Writes one report to `--out` with a manifest, or to stdout.
fn emit<C: Serialize>(
    output: &OutputArgs,
    format: Format,
    stem: &str,
    body: String,
    input: Option<String>,
    seed: u64,
    config: &C,
) -> Result<()> {
    match &output.out {
        Some(dir) => {
            let name = match format {
                Format::Csv => format!("{stem}.csv"),
                Format::Structured => format!("{stem}.json"),
            };
            io::write_outputs(
                dir,
                &[(name.as_str(), body)],
                input.as_deref(),
                seed,
                config,
            )?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
            {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

impl OutputArgs {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct SimulateConfigRecord<'a> {
    command: &'static str,
    network: &'a ResolvedNetwork,
    steps: usize,
    runs: usize,
    forced_leavers: &'a BTreeMap<usize, BTreeSet<NodeId>>,
}

fn simulate_cmd(a: SimulateArgs) -> Result<Status> {
    let (net, resolved) = load_network(&a.network)?;
    let mut cfg = SimulationConfig::new(a.network.seed, a.steps);
    cfg.forced_leavers = parse_forced(&a.forced)?;
    let record = SimulateConfigRecord {
        command: "simulate",
        network: &resolved,
        steps: a.steps,
        runs: a.runs,
        forced_leavers: &cfg.forced_leavers,
    };
    let input = input_path(&a.network.edges);
    if a.runs == 1 {
        let trace = simulate(&net, &cfg)?;
        let files = io::trace_files(&trace)?;
        io::write_outputs(&a.out, &files, input.as_deref(), cfg.seed, &record)?;
        return Ok(Status::Ok);
    }
    let traces = run_traces(&net, &cfg, a.runs)?;
    let mut runs = String::from("run,seed,steps,final_alive_nodes,final_alive_edges\n");
    for (r, t) in traces.iter().enumerate() {
        let (nodes, edges) = *t.alive_series().last().expect("series starts at t = 0");
        writeln!(
            runs,
            "{r},{},{},{nodes},{edges}",
            run_seed(cfg.seed, r),
            t.steps.len()
        )?;
    }
    let report = ensemble(&net, &cfg, a.runs)?;
    let files = [
        ("runs.csv", runs),
        ("ensemble.csv", io::ensemble_csv(&report)),
    ];
    io::write_outputs(&a.out, &files, input.as_deref(), cfg.seed, &record)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct Prediction {
    projection: ExpectationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<EnsembleReport>,
}

fn prediction_csv(p: &Prediction) -> String {
    let Some(mc) = &p.monte_carlo else {
        return io::expectation_csv(&p.projection);
    };
    let r = &p.projection;
    let mut out = String::from(
        "step,expected_nodes_lost,expected_edges_lost,mc_nodes_lost,mc_nodes_lost_sd,mc_edges_lost,mc_edges_lost_sd\n",
    );
    for j in 0..r.horizon {
        let (n, e) = (&mc.node_loss[j], &mc.edge_loss[j]);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            j + 1,
            r.expected_node_loss[j],
            r.expected_edge_loss[j],
            n.mean,
            n.std_dev,
            e.mean,
            e.std_dev
        )
        .unwrap();
    }
    out
}

fn predict_cmd(a: PredictArgs) -> Result<Status> {
    let format = a.output.format_or(Format::Csv);
    let (net, resolved) = load_network(&a.network)?;
    let projection = expected_edge_loss_horizon(&net, a.horizon)?;
    let monte_carlo = match a.mc_runs {
        0 => None,
        runs => Some(ensemble(
            &net,
            &SimulationConfig::new(a.network.seed, a.horizon),
            runs,
        )?),
    };
    let prediction = Prediction {
        projection,
        monte_carlo,
    };
    let body = match format {
        Format::Csv => prediction_csv(&prediction),
        Format::Structured => to_json(&prediction)?,
    };
    #[derive(Serialize)]
    struct Record<'a> {
        command: &'static str,
        network: &'a ResolvedNetwork,
        horizon: usize,
        mc_runs: usize,
        format: Format,
    }
    let record = Record {
        command: "predict",
        network: &resolved,
        horizon: a.horizon,
        mc_runs: a.mc_runs,
        format,
    };
    emit(
        &a.output,
        format,
        "prediction",
        body,
        input_path(&a.network.edges),
        a.network.seed,
        &record,
    )?;
    Ok(Status::Ok)
}

fn metrics_cmd(a: MetricsArgs) -> Result<Status> {
    let format = a.output.format_or(Format::Csv);
    let trace = io::load_trace(&a.trace_dir)
        .with_context(|| format!("loading trace from {}", a.trace_dir.display()))?;
    let metrics = io::member_metrics(&trace, a.offset)?;
    let body = match format {
        Format::Csv => io::metrics_csv(&metrics),
        Format::Structured => to_json(&metrics)?,
    };
    let manifest = io::load_manifest(&a.trace_dir)?;
    #[derive(Serialize)]
    struct Record {
        command: &'static str,
        trace_config_digest: String,
        offset: usize,
        format: Format,
    }
    let record = Record {
        command: "metrics",
        trace_config_digest: manifest.config_digest,
        offset: a.offset,
        format,
    };
    emit(
        &a.output,
        format,
        "metrics",
        body,
        input_path(&a.trace_dir),
        trace.seed,
        &record,
    )?;
    Ok(Status::Ok)
}

fn enumeration_cap() -> Result<u128> {
    match std::env::var(ENUM_CAP_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{ENUM_CAP_VAR} must be a non-negative integer, got '{v}'")),
        Err(_) => Ok(DEFAULT_ENUMERATION_CAP),
    }
}

fn optimize_cmd(a: OptimizeArgs) -> Result<Status> {
    let format = a.output.format_or(Format::Structured);
    let (net, resolved) = load_network(&a.network)?;
    let cap = enumeration_cap()?;
    let kind = match a.objective {
        ObjectiveArg::Cohort => Objective::Cohort,
        ObjectiveArg::Survivors => Objective::Survivors,
        ObjectiveArg::Additive => Objective::Additive,
    };
    let mut selection = match (a.mode, a.lazy) {
        (ModeArg::Max, false) => greedy_maximize_with(&net, a.k, kind)?,
        (ModeArg::Max, true) => lazy_marginals_with(&net, a.k, kind)?,
        (ModeArg::Min, false) => greedy_minimize_with(&net, a.k, kind, cap)?,
        (ModeArg::Min, true) => bail!("--lazy applies to --mode max only"),
    };
    if a.certify {
        selection = selection.certify(&net, cap)?;
    }
    let body = match format {
        Format::Structured => to_json(&selection)?,
        Format::Csv => {
            let mut out = String::from("round,node,marginal_gain,objective\n");
            let mut total = 0.0;
            for (i, (node, gain)) in selection
                .picks
                .iter()
                .zip(&selection.round_gains)
                .enumerate()
            {
                total += gain;
                writeln!(out, "{},{node},{gain},{total}", i + 1)?;
            }
            out
        }
    };
    #[derive(Serialize)]
    struct Record<'a> {
        command: &'static str,
        network: &'a ResolvedNetwork,
        k: usize,
        mode: ModeArg,
        objective: ObjectiveArg,
        lazy: bool,
        certify: bool,
        cap: String,
        format: Format,
    }
    let record = Record {
        command: "optimize",
        network: &resolved,
        k: a.k,
        mode: a.mode,
        objective: a.objective,
        lazy: a.lazy,
        certify: a.certify,
        cap: cap.to_string(),
        format,
    };
    emit(
        &a.output,
        format,
        "selection",
        body,
        input_path(&a.network.edges),
        a.network.seed,
        &record,
    )?;
    Ok(Status::Ok)
}

fn check_cmd(a: CheckArgs) -> Result<Status> {
    let format = a.output.format_or(Format::Csv);
    let claims: Vec<Claim> = match &a.claim {
        Some(name) => vec![name.parse()?],
        None => Claim::ALL.to_vec(),
    };
    let model = if a.inject_fault {
        GainModel::Faulty
    } else {
        GainModel::Cohort
    };
    let cfg = SuiteConfig::new(a.seed);
    let reports = claims
        .iter()
        .map(|&c| run_claim(c, &cfg, model))
        .collect::<decay_core::Result<Vec<_>>>()?;
    let body = match format {
        Format::Structured => to_json(&reports)?,
        Format::Csv => {
            let mut out = String::from("claim,passed,instances,violations,ties\n");
            for r in &reports {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.claim, r.passed, r.instances_checked, r.violation_count, r.ties
                )?;
            }
            out
        }
    };
    #[derive(Serialize)]
    struct Record<'a> {
        command: &'static str,
        claims: &'a [Claim],
        suite: &'a SuiteConfig,
        inject_fault: bool,
        format: Format,
    }
    let record = Record {
        command: "check",
        claims: &claims,
        suite: &cfg,
        inject_fault: a.inject_fault,
        format,
    };
    emit(&a.output, format, "check", body, None, a.seed, &record)?;
    for r in reports.iter().filter(|r| !r.passed) {
        eprintln!("{}: {} violation(s)", r.claim, r.violation_count);
        if let Some(v) = r.violations.first() {
            eprintln!("  first: {}", v.detail);
        }
    }
    Ok(if reports.iter().all(|r| r.passed) {
        Status::Ok
    } else {
        Status::Violations
    })
}

fn summarize_cmd(a: SummarizeArgs) -> Result<Status> {
    let format = a.output.format_or(Format::Csv);
    let text =
        fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow!("{} is empty", a.input.display()))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == a.column)
        .ok_or_else(|| anyhow!("no column '{}' in {}", a.column, a.input.display()))?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let cell = line.split(',').nth(col).unwrap_or("").trim();
        // footer rows such as `total,...` carry a non-numeric key
        if line.trim().is_empty() || line.starts_with("total,") {
            continue;
        }
        values.push(cell.parse::<f64>().with_context(|| {
            format!("{}:{}: '{cell}' is not a number", a.input.display(), i + 2)
        })?);
    }
    let summary = io::summarize_distribution(&a.column, &values, a.bins)?;
    let body = match format {
        Format::Structured => to_json(&summary)?,
        Format::Csv => {
            let mut out = String::from("metric,count,mean,std_dev,bin_lower,bin_count\n");
            for (lower, count) in &summary.histogram {
                writeln!(
                    out,
                    "{},{},{},{},{lower},{count}",
                    summary.metric, summary.count, summary.mean, summary.std_dev
                )?;
            }
            out
        }
    };
    #[derive(Serialize)]
    struct Record<'a> {
        command: &'static str,
        input_sha256: String,
        column: &'a str,
        bins: usize,
        format: Format,
    }
    let record = Record {
        command: "summarize",
        input_sha256: sha256_hex(text.as_bytes()),
        column: &a.column,
        bins: a.bins,
        format,
    };
    emit(
        &a.output,
        format,
        "summary",
        body,
        input_path(&a.input),
        0,
        &record,
    )?;
    Ok(Status::Ok)
}
