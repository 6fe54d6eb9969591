//! TOML run configuration, resolved up front into validated inputs.
//!
//! ```toml
//! schema_version = 1
//! seed = 7                      # default seed for generators without one
//!
//! [machine]                     # every key optional
//! pcu_quantum = "500us"
//! net_latency = "1us"
//! net_bandwidth = 5e9
//! beta_comp = 0.4
//! gamma_copy = 0.5
//! collective_scale = 1.0
//! pstates = [{ frequency = 2.3e9, power = 100.0 }, { frequency = 1.2e9, power = 50.0 }]
//!
//! [[workload]]                  # exactly one of generator, path, trace
//! name = "imbalanced"
//! generator = { pattern = "imbalanced_barrier", n_ranks = 8, n_iterations = 50,
//!               comp_mean = "5ms", imbalance = 0.5 }
//!
//! [[policy]]                    # kind, then optional theta and costs
//! kind = "countdown-slack"
//! theta = "500us"
//!
//! [output]
//! dir = "results"
//! formats = ["text", "csv", "json"]
//! ```
//!
//! Relative paths are taken from the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::analysis::ReportFormat;
use crate::engine::validate_workload;
use crate::model::{MachineModel, PStateTable, Seconds, TraceRecord, Workload};
use crate::policies::{PolicyKind, PolicySpec};
use crate::units::deserialize_opt_seconds;
use crate::workloads::{
    generate, read_trace, read_workload, GeneratorSpec, Pattern, TraceError, WorkloadFileError, DEFAULT_RANKS_PER_NODE,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Overrides the output directory of every command.
pub const OUTPUT_DIR_ENV: &str = "SLACKSIM_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("unsupported schema_version {0} (expected {CONFIG_SCHEMA_VERSION})")]
    Schema(u32),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Workload(#[from] WorkloadFileError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl ConfigError {
    /// Failures reading the config or the files it references are runtime
    /// errors; a malformed or invalid config is a usage error.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            ConfigError::Io { .. } | ConfigError::Workload(_) | ConfigError::Trace(_)
        )
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    pub pstates: Option<PStateTable>,
    #[serde(default, deserialize_with = "deserialize_opt_seconds")]
    pub pcu_quantum: Option<Seconds>,
    #[serde(default, deserialize_with = "deserialize_opt_seconds")]
    pub net_latency: Option<Seconds>,
    pub net_bandwidth: Option<f64>,
    pub beta_comp: Option<f64>,
    pub gamma_copy: Option<f64>,
    pub collective_scale: Option<f64>,
}

impl MachineSection {
    pub fn resolve(&self) -> Result<MachineModel, ConfigError> {
        let d = MachineModel::default();
        let m = MachineModel {
            pstates: self.pstates.clone().unwrap_or(d.pstates),
            pcu_quantum: self.pcu_quantum.unwrap_or(d.pcu_quantum),
            net_latency: self.net_latency.unwrap_or(d.net_latency),
            net_bandwidth: self.net_bandwidth.unwrap_or(d.net_bandwidth),
            beta_comp: self.beta_comp.unwrap_or(d.beta_comp),
            gamma_copy: self.gamma_copy.unwrap_or(d.gamma_copy),
            collective_scale: self.collective_scale.unwrap_or(d.collective_scale),
        };
        m.validate()
            .map_err(|e| ConfigError::Invalid(format!("[machine]: {e}")))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub pattern: Pattern,
    pub n_ranks: usize,
    pub n_iterations: usize,
    #[serde(deserialize_with = "crate::units::deserialize_seconds")]
    pub comp_mean: Seconds,
    #[serde(default)]
    pub imbalance: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub message_bytes: u64,
    pub seed: Option<u64>,
}

impl GeneratorSection {
    pub fn to_spec(&self, default_seed: Option<u64>) -> GeneratorSpec {
        GeneratorSpec {
            pattern: self.pattern,
            n_ranks: self.n_ranks,
            n_iterations: self.n_iterations,
            comp_mean: self.comp_mean,
            imbalance: self.imbalance,
            jitter: self.jitter,
            message_bytes: self.message_bytes,
            seed: self.seed.or(default_seed).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub name: Option<String>,
    pub generator: Option<GeneratorSection>,
    pub path: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: String,
    #[serde(default, deserialize_with = "deserialize_opt_seconds")]
    pub theta: Option<Seconds>,
    #[serde(default, deserialize_with = "deserialize_opt_seconds")]
    pub callsite_hash_cost: Option<Seconds>,
    #[serde(default, deserialize_with = "deserialize_opt_seconds")]
    pub barrier_cost: Option<Seconds>,
}

impl PolicySection {
    pub fn resolve(&self) -> Result<PolicySpec, ConfigError> {
        let kind: PolicyKind = self
            .kind
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("[[policy]]: {e}")))?;
        let mut spec = PolicySpec::new(kind);
        if let Some(t) = self.theta {
            spec.theta = t;
        }
        if let Some(c) = self.callsite_hash_cost {
            spec.callsite_hash_cost = c;
        }
        if let Some(c) = self.barrier_cost {
            spec.barrier_cost = c;
        }
        spec.validate()
            .map_err(|e| ConfigError::Invalid(format!("[[policy]]: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub formats: Option<Vec<ReportFormat>>,
    pub ranks_per_node: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub seed: Option<u64>,
    #[serde(default)]
    pub machine: MachineSection,
    #[serde(default, rename = "workload")]
    pub workloads: Vec<WorkloadSection>,
    #[serde(default, rename = "policy")]
    pub policies: Vec<PolicySection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone)]
pub enum WorkloadSource {
    Workload(Workload),
    Trace(Vec<TraceRecord>),
}

#[derive(Debug, Clone)]
pub struct NamedWorkload {
    pub name: String,
    pub source: WorkloadSource,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    pub ranks_per_node: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            formats: vec![ReportFormat::Text, ReportFormat::Csv],
            ranks_per_node: DEFAULT_RANKS_PER_NODE,
        }
    }
}

/// Everything a command needs, already validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub machine: MachineModel,
    pub workloads: Vec<NamedWorkload>,
    pub policies: Vec<PolicySpec>,
    pub output: OutputConfig,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Schema(file.schema_version));
        }
        Ok(file)
    }

    /// Validates every section and loads every referenced file.
    pub fn resolve(&self, base_dir: &Path) -> Result<RunConfig, ConfigError> {
        let machine = self.machine.resolve()?;
        let policies = self
            .policies
            .iter()
            .map(PolicySection::resolve)
            .collect::<Result<Vec<_>, _>>()?;
        let mut workloads = Vec::with_capacity(self.workloads.len());
        for (i, ws) in self.workloads.iter().enumerate() {
            workloads.push(resolve_workload(i, ws, base_dir, self.seed)?);
        }
        let d = OutputConfig::default();
        let output = OutputConfig {
            dir: self.output.dir.as_ref().map_or(d.dir, |p| base_dir.join(p)),
            formats: self.output.formats.clone().unwrap_or(d.formats),
            ranks_per_node: self.output.ranks_per_node.unwrap_or(d.ranks_per_node),
        };
        if output.ranks_per_node == 0 {
            return Err(ConfigError::Invalid("[output]: ranks_per_node must be >= 1".into()));
        }
        Ok(RunConfig {
            machine,
            workloads,
            policies,
            output,
            seed: self.seed,
        })
    }
}

fn resolve_workload(
    index: usize,
    ws: &WorkloadSection,
    base_dir: &Path,
    seed: Option<u64>,
) -> Result<NamedWorkload, ConfigError> {
    let ctx = |msg: String| ConfigError::Invalid(format!("[[workload]] #{}: {msg}", index + 1));
    let given = [ws.generator.is_some(), ws.path.is_some(), ws.trace.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(ctx("set exactly one of generator, path, trace".into()));
    }
    let stem = |p: &Path| {
        p.file_stem()
            .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
    };
    let (default_name, source) = if let Some(g) = &ws.generator {
        let spec = g.to_spec(seed);
        let w = generate(&spec).map_err(|e| ctx(e.to_string()))?;
        validate_workload(&w).map_err(|e| ctx(e.to_string()))?;
        (spec.default_name(), WorkloadSource::Workload(w))
    } else if let Some(p) = &ws.path {
        let path = base_dir.join(p);
        (stem(&path), WorkloadSource::Workload(read_workload(&path)?))
    } else {
        let path = base_dir.join(ws.trace.as_ref().expect("checked above"));
        (stem(&path), WorkloadSource::Trace(read_trace(&path)?))
    };
    Ok(NamedWorkload {
        name: ws.name.clone().unwrap_or(default_name),
        source,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = ConfigFile::parse(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.resolve(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
schema_version = 1
seed = 5

[machine]
pcu_quantum = "1ms"
beta_comp = 0.2
pstates = [{ frequency = 2.0e9, power = 80.0 }, { frequency = 1.0e9, power = 30.0 }]

[[workload]]
name = "imb"
generator = { pattern = "imbalanced_barrier", n_ranks = 2, n_iterations = 1, comp_mean = "7ms", imbalance = 0.42857142857142855 }

[[policy]]
kind = "cntd_slack"
theta = "250us"

[[policy]]
kind = "fermata"

[output]
dir = "out"
formats = ["json"]
"#;

    #[test]
    fn resolves_full_config() {
        let cfg = ConfigFile::parse(FULL, "mem")
            .unwrap()
            .resolve(Path::new("/base"))
            .unwrap();
        assert_eq!(cfg.machine.pcu_quantum, 1e-3);
        assert_eq!(cfg.machine.pstates.f_max(), 2.0e9);
        assert_eq!(cfg.machine.net_bandwidth, MachineModel::default().net_bandwidth);
        assert_eq!(cfg.policies[0], PolicySpec::countdown_slack(250e-6));
        assert_eq!(cfg.policies[1], PolicySpec::fermata(0.1));
        assert_eq!(cfg.output.dir, Path::new("/base/out"));
        assert_eq!(cfg.output.formats, [ReportFormat::Json]);
        let WorkloadSource::Workload(w) = &cfg.workloads[0].source else {
            panic!()
        };
        assert_eq!(w.metadata.seed, Some(5));
        assert!((w.tasks[0][0].comp_time_fmax - 4e-3).abs() < 1e-12);
        assert_eq!(cfg.workloads[0].name, "imb");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |t: &str| ConfigFile::parse(t, "mem").and_then(|f| f.resolve(Path::new(".")));
        assert!(matches!(bad("schema_version = 2"), Err(ConfigError::Schema(2))));
        assert!(matches!(
            bad("schema_version = 1\nbogus = 1"),
            Err(ConfigError::Parse { .. })
        ));
        let unknown = "schema_version = 1\n[[policy]]\nkind = \"turbo\"\n";
        assert!(matches!(bad(unknown), Err(ConfigError::Invalid(m)) if m.contains("turbo")));
        let two_sources = "schema_version = 1\n[[workload]]\npath = \"a.json\"\ntrace = \"b.csv\"\n";
        assert!(matches!(bad(two_sources), Err(ConfigError::Invalid(_))));
        let machine = "schema_version = 1\n[machine]\nbeta_comp = 2.0\n";
        assert!(matches!(bad(machine), Err(ConfigError::Invalid(_))));
        let missing = "schema_version = 1\n[[workload]]\npath = \"/nonexistent/w.json\"\n";
        let err = bad(missing).unwrap_err();
        assert!(err.is_runtime() && err.to_string().contains("/nonexistent/w.json"));
    }
}
