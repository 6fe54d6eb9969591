//! Command-line interface. Exit codes: 0 success, 1 runtime or I/O error,
//! 2 usage or configuration error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use crate::analysis::{
    compare_policies, comparison_csv, coverage_csv, coverage_table, emit_report, filter_min_duration, prediction_csv,
    prediction_report, CoverageError, ReportFormat, RunReport,
};
use crate::config::{load_config, ConfigError, NamedWorkload, RunConfig, WorkloadSource, OUTPUT_DIR_ENV};
use crate::engine::{replay_trace, run_simulation, validate_workload, ReplayError, SimError};
use crate::model::{MachineModel, PhaseKind, Seconds, TraceRecord, Workload};
use crate::policies::{PolicySpec, DEFAULT_CALLSITE_HASH_COST, DEFAULT_THETA, FERMATA_THETA};
use crate::units::{format_duration, parse_duration};
use crate::workloads::{
    export_trace_from_sim, generate, read_trace, read_workload, write_trace, write_workload, GeneratorSpec, Pattern,
    DEFAULT_RANKS_PER_NODE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        if e.is_runtime() {
            CliError::Runtime(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidPolicy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Unsupported(_) | ReplayError::InvalidPolicy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CoverageError> for CliError {
    fn from(e: CoverageError) -> Self {
        match e {
            CoverageError::Replay { source, application } => match CliError::from(source) {
                CliError::Usage(m) => CliError::Usage(format!("{application}: {m}")),
                CliError::Runtime(m) => CliError::Runtime(format!("{application}: {m}")),
            },
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Deterministic simulator of MPI applications under DVFS runtimes.
#[derive(Debug, Parser)]
#[command(name = "slacksim", version, about)]
pub struct Cli {
    /// Output directory (overrides the config's [output] dir).
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic workload file.
    Generate(GenerateArgs),
    /// Simulate one workload under one policy and write reports.
    Simulate(SimulateArgs),
    /// Replay traces open-loop and print per-policy coverage.
    Replay(ReplayArgs),
    /// Compare policies against Baseline; writes comparison.csv.
    Compare(CompareArgs),
    /// Coverage table over traces; writes coverage.csv.
    Coverage(CoverageArgs),
    /// Last-value predictability of traces; writes prediction.csv.
    Predict(PredictArgs),
    /// Print the default configuration.
    Defaults,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generate every generator workload of this config instead.
    #[arg(long, conflicts_with_all = ["pattern", "ranks", "iters", "comp_mean"])]
    pub config: Option<PathBuf>,
    /// balanced-barrier, imbalanced-barrier, irregular-alternating,
    /// short-phase, p2p-ring or bsp-stencil.
    #[arg(long, value_parser = str::parse::<Pattern>, required_unless_present = "config")]
    pub pattern: Option<Pattern>,
    #[arg(long, required_unless_present = "config")]
    pub ranks: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    pub iters: Option<usize>,
    /// Mean compute time per region at f_max, e.g. 7ms.
    #[arg(long, value_parser = parse_duration, required_unless_present = "config")]
    pub comp_mean: Option<Seconds>,
    #[arg(long, default_value_t = 0.0)]
    pub imbalance: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Message size per call in bytes.
    #[arg(long, default_value_t = 0)]
    pub bytes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: <out-dir>/<generated name>.json).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Workload file; overrides the config's workloads.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Policy as kind[:theta], e.g. countdown-slack:500us.
    #[arg(long)]
    pub policy: Option<PolicySpec>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<ReportFormat>,
    /// Also export the run as a trace CSV.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub ranks_per_node: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Repeatable; defaults to the config's policies or the coverage set.
    #[arg(long)]
    pub policy: Vec<PolicySpec>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Repeatable; added to the config's workloads.
    #[arg(long)]
    pub workload: Vec<PathBuf>,
    /// Repeatable; defaults to the config's policies or the comparison set.
    #[arg(long)]
    pub policy: Vec<PolicySpec>,
    /// Output file (default: <out-dir>/comparison.csv).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Vec<PolicySpec>,
    /// Output file (default: <out-dir>/coverage.csv).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Keep only ranks whose summed record durations exceed this.
    #[arg(long, value_parser = parse_duration, default_value = "500ms")]
    pub min_duration: Seconds,
    /// Output file (default: <out-dir>/prediction.csv).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments from the process and runs; returns the exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, out_dir),
        Command::Simulate(a) => cmd_simulate(a, out_dir),
        Command::Replay(a) => cmd_replay(a),
        Command::Compare(a) => cmd_compare(a, out_dir),
        Command::Coverage(a) => cmd_coverage(a, out_dir),
        Command::Predict(a) => cmd_predict(a, out_dir),
        Command::Defaults => {
            print!("{}", defaults_toml());
            Ok(())
        }
    }
}

fn load(config: Option<&Path>) -> Result<Option<RunConfig>, CliError> {
    config.map(load_config).transpose().map_err(CliError::from)
}

/// Flag, then env (both via `out_dir`), then config, then the working directory.
fn output_dir(flag: Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    flag.or_else(|| cfg.map(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn machine_of(cfg: Option<&RunConfig>) -> MachineModel {
    cfg.map_or_else(MachineModel::default, |c| c.machine.clone())
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

fn app_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_workload(path: &Path) -> Result<NamedWorkload, CliError> {
    let w = read_workload(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(NamedWorkload {
        name: app_name(path),
        source: WorkloadSource::Workload(w),
    })
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<(String, Vec<TraceRecord>)>, CliError> {
    paths
        .iter()
        .map(|p| {
            let recs = read_trace(p).map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok((app_name(p), recs))
        })
        .collect()
}

fn closed_loop(named: &NamedWorkload) -> Result<&Workload, CliError> {
    match &named.source {
        WorkloadSource::Workload(w) => Ok(w),
        WorkloadSource::Trace(_) => Err(CliError::Usage(format!(
            "workload '{}' is a trace; simulate and compare need a workload",
            named.name
        ))),
    }
}

fn comm_share(w: &Workload, m: &MachineModel) -> Result<f64, CliError> {
    let r = run_simulation(w, m, &PolicySpec::baseline())?;
    let total = r.totals.sum();
    let comm = r.totals.get(PhaseKind::Slack) + r.totals.get(PhaseKind::Copy);
    Ok(if total > 0.0 { 100.0 * comm / total } else { 0.0 })
}

fn cmd_generate(a: GenerateArgs, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load(a.config.as_deref())?;
    let m = machine_of(cfg.as_ref());
    let dir = output_dir(out_dir, cfg.as_ref());
    let mut jobs: Vec<(PathBuf, NamedWorkload)> = Vec::new();
    if let Some(cfg) = &cfg {
        for nw in &cfg.workloads {
            if matches!(nw.source, WorkloadSource::Workload(_)) {
                jobs.push((dir.join(format!("{}.json", nw.name)), nw.clone()));
            }
        }
        if jobs.is_empty() {
            return Err(CliError::Usage("config has no workloads to write".into()));
        }
    } else {
        let spec = GeneratorSpec {
            pattern: a.pattern.expect("required by clap"),
            n_ranks: a.ranks.expect("required by clap"),
            n_iterations: a.iters.expect("required by clap"),
            comp_mean: a.comp_mean.expect("required by clap"),
            imbalance: a.imbalance,
            jitter: a.jitter,
            message_bytes: a.bytes,
            seed: a.seed,
        };
        let w = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
        validate_workload(&w).map_err(|e| CliError::Usage(e.to_string()))?;
        let name = spec.default_name();
        let path = a.output.unwrap_or_else(|| dir.join(format!("{name}.json")));
        jobs.push((
            path,
            NamedWorkload {
                name,
                source: WorkloadSource::Workload(w),
            },
        ));
    }
    let mut stdout = std::io::stdout().lock();
    for (path, nw) in &jobs {
        let w = closed_loop(nw)?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        write_workload(w, path).map_err(|e| CliError::Runtime(e.to_string()))?;
        let share = comm_share(w, &m)?;
        let _ = writeln!(
            stdout,
            "{}: {} ranks, {} tasks, {} MPI calls, expected Tcomm share {:.2}%",
            path.display(),
            w.n_ranks,
            w.task_count(),
            w.mpi_call_count(),
            share
        );
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load(a.config.as_deref())?;
    let m = machine_of(cfg.as_ref());
    let named = match (&a.workload, &cfg) {
        (Some(p), _) => load_workload(p)?,
        (None, Some(c)) if c.workloads.len() == 1 => c.workloads[0].clone(),
        (None, Some(c)) => {
            return Err(CliError::Usage(format!(
                "simulate needs exactly one workload, config has {}",
                c.workloads.len()
            )))
        }
        (None, None) => return Err(CliError::Usage("pass --workload or --config".into())),
    };
    let policy = match (a.policy, &cfg) {
        (Some(p), _) => p,
        (None, Some(c)) if c.policies.len() == 1 => c.policies[0],
        (None, Some(c)) => {
            return Err(CliError::Usage(format!(
                "simulate needs exactly one policy, config has {}",
                c.policies.len()
            )))
        }
        (None, None) => return Err(CliError::Usage("pass --policy or a config with one [[policy]]".into())),
    };
    let w = closed_loop(&named)?;
    let result = run_simulation(w, &m, &policy)?;
    let report = RunReport::new(&result, w);
    let formats = if !a.format.is_empty() {
        a.format
    } else {
        cfg.as_ref().map_or_else(
            || vec![ReportFormat::Text, ReportFormat::Csv],
            |c| c.output.formats.clone(),
        )
    };
    let dir = output_dir(out_dir, cfg.as_ref());
    let prefix = format!("{}.{}", named.name, policy.label());
    let written = emit_report(&report, &dir, &prefix, &formats).map_err(|e| io_err(&dir, e))?;
    for p in &written {
        info!("wrote {}", p.display());
    }
    if let Some(path) = &a.trace_out {
        let rpn = a
            .ranks_per_node
            .or(cfg.as_ref().map(|c| c.output.ranks_per_node))
            .unwrap_or(DEFAULT_RANKS_PER_NODE);
        if rpn == 0 {
            return Err(CliError::Usage("--ranks-per-node must be >= 1".into()));
        }
        let records = export_trace_from_sim(&result, w, rpn);
        write_trace(&records, path).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    print!("{}", report.summary_text());
    Ok(())
}

fn trace_inputs(paths: &[PathBuf], cfg: Option<&RunConfig>) -> Result<Vec<(String, Vec<TraceRecord>)>, CliError> {
    let mut traces: Vec<(String, Vec<TraceRecord>)> = cfg
        .map(|c| {
            c.workloads
                .iter()
                .filter_map(|nw| match &nw.source {
                    WorkloadSource::Trace(t) => Some((nw.name.clone(), t.clone())),
                    WorkloadSource::Workload(_) => None,
                })
                .collect()
        })
        .unwrap_or_default();
    traces.extend(load_traces(paths)?);
    if traces.is_empty() {
        return Err(CliError::Usage("no traces given".into()));
    }
    Ok(traces)
}

fn policies_or(flags: Vec<PolicySpec>, cfg: Option<&RunConfig>, default: fn() -> Vec<PolicySpec>) -> Vec<PolicySpec> {
    if !flags.is_empty() {
        return flags;
    }
    match cfg {
        Some(c) if !c.policies.is_empty() => c.policies.clone(),
        _ => default(),
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let cfg = load(a.config.as_deref())?;
    let m = machine_of(cfg.as_ref());
    let traces = trace_inputs(&a.traces, cfg.as_ref())?;
    let policies = policies_or(a.policy, cfg.as_ref(), PolicySpec::coverage_set);
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<24} {:<16} {:>8} {:>10} {:>10} {:>10} {:>12}",
        "trace", "policy", "records", "tcomm_%", "tslack_%", "coverage_%", "avg_mpi_ms"
    );
    for (name, records) in &traces {
        for p in &policies {
            let c = replay_trace(records, p, &m).map_err(|e| match CliError::from(e) {
                CliError::Usage(msg) => CliError::Usage(format!("{name}: {msg}")),
                CliError::Runtime(msg) => CliError::Runtime(format!("{name}: {msg}")),
            })?;
            let _ = writeln!(
                stdout,
                "{:<24} {:<16} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>12.4}",
                name, c.policy, c.records, c.tcomm_pct, c.tslack_pct, c.coverage_pct, c.avg_mpi_ms
            );
        }
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load(a.config.as_deref())?;
    let m = machine_of(cfg.as_ref());
    let mut workloads: Vec<NamedWorkload> = cfg.as_ref().map(|c| c.workloads.clone()).unwrap_or_default();
    for p in &a.workload {
        workloads.push(load_workload(p)?);
    }
    if workloads.is_empty() {
        return Err(CliError::Usage("no workloads given".into()));
    }
    let policies = policies_or(a.policy, cfg.as_ref(), PolicySpec::comparison_set);
    let mut rows = Vec::with_capacity(workloads.len());
    for nw in &workloads {
        let row = compare_policies(&nw.name, closed_loop(nw)?, &m, &policies)?;
        let above = row.above_countdown();
        if !above.is_empty() {
            warn!("{}: overhead above Countdown for {}", nw.name, above.join(", "));
        }
        rows.push(row);
    }
    let csv = comparison_csv(&rows).map_err(CliError::Runtime)?;
    let path = a
        .output
        .unwrap_or_else(|| output_dir(out_dir, cfg.as_ref()).join("comparison.csv"));
    write_file(&path, &csv)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cmd_coverage(a: CoverageArgs, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load(a.config.as_deref())?;
    let m = machine_of(cfg.as_ref());
    let traces = trace_inputs(&a.traces, cfg.as_ref())?;
    let policies = policies_or(a.policy, cfg.as_ref(), PolicySpec::coverage_set);
    let rows = coverage_table(&traces, &policies, &m)?;
    let csv = coverage_csv(&rows).map_err(CliError::Runtime)?;
    let path = a
        .output
        .unwrap_or_else(|| output_dir(out_dir, cfg.as_ref()).join("coverage.csv"));
    write_file(&path, &csv)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cmd_predict(a: PredictArgs, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let traces = load_traces(&a.traces)?;
    let reports: Vec<_> = traces
        .iter()
        .map(|(name, recs)| {
            let kept = filter_min_duration(recs, a.min_duration);
            if kept.is_empty() {
                warn!("{name}: no rank longer than {}", format_duration(a.min_duration));
            }
            prediction_report(name, &kept)
        })
        .collect();
    let csv = prediction_csv(&reports);
    let path = a
        .output
        .unwrap_or_else(|| output_dir(out_dir, None).join("prediction.csv"));
    write_file(&path, &csv)?;
    println!("wrote {} ({} rows)", path.display(), reports.len());
    Ok(())
}

/// The built-in defaults as a loadable config document.
pub fn defaults_toml() -> String {
    let m = MachineModel::default();
    let mut s = String::new();
    s.push_str("schema_version = 1\n\n[machine]\n");
    s.push_str(&format!("pcu_quantum = \"{}\"\n", format_duration(m.pcu_quantum)));
    s.push_str(&format!("net_latency = \"{}\"\n", format_duration(m.net_latency)));
    s.push_str(&format!("net_bandwidth = {:e}\n", m.net_bandwidth));
    s.push_str(&format!("beta_comp = {}\n", m.beta_comp));
    s.push_str(&format!("gamma_copy = {}\n", m.gamma_copy));
    s.push_str(&format!("collective_scale = {}\n", m.collective_scale));
    s.push_str("pstates = [\n");
    for p in m.pstates.states() {
        s.push_str(&format!(
            "  {{ frequency = {:e}, power = {} }},\n",
            p.frequency, p.power
        ));
    }
    s.push_str("]\n");
    s.push_str(&format!(
        "\n# theta = {}, Fermata theta = {}, callsite_hash_cost = {}, barrier_cost = 0s\n",
        format_duration(DEFAULT_THETA),
        format_duration(FERMATA_THETA),
        format_duration(DEFAULT_CALLSITE_HASH_COST)
    ));
    for p in PolicySpec::comparison_set() {
        s.push_str(&format!(
            "\n[[policy]]\nkind = \"{}\"\ntheta = \"{}\"\n",
            p.kind,
            format_duration(p.theta)
        ));
    }
    s.push_str(&format!(
        "\n[output]\ndir = \".\"\nformats = [\"text\", \"csv\"]\nranks_per_node = {DEFAULT_RANKS_PER_NODE}\n"
    ));
    s
}
