use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{replay_trace, run_simulation, CoverageResult, ReplayError, SimError};
use crate::model::{MachineModel, Seconds, SimResult, TraceRecord, Workload};
use crate::policies::{PolicyKind, PolicySpec};

use super::metrics::SavingMetrics;

/// Tolerance for the overhead/energy/power identity check.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;
/// Slack on the coverage ceilings, in percentage points.
pub const CEILING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyOutcome {
    pub policy: String,
    pub kind: PolicyKind,
    pub makespan: Seconds,
    pub energy: f64,
    pub average_power: f64,
    pub transitions: usize,
    pub metrics: SavingMetrics,
}

impl PolicyOutcome {
    fn from_result(spec: &PolicySpec, r: &SimResult, base: &SimResult) -> Self {
        Self {
            policy: r.policy.clone(),
            kind: spec.kind,
            makespan: r.makespan,
            energy: r.energy,
            average_power: r.average_power(),
            transitions: r.transition_count,
            metrics: SavingMetrics::against(base.makespan, base.energy, r.makespan, r.energy),
        }
    }
}

/// One application against Baseline under several policies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub application: String,
    pub baseline_makespan: Seconds,
    pub baseline_energy: f64,
    pub outcomes: Vec<PolicyOutcome>,
}

impl ComparisonRow {
    pub fn get(&self, policy: &str) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.policy == policy)
    }

    pub fn by_kind(&self, kind: PolicyKind) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.kind == kind)
    }

    /// Policies whose overhead is strictly above the first Countdown
    /// outcome's; empty when Countdown was not run.
    pub fn above_countdown(&self) -> Vec<&str> {
        let Some(reference) = self.by_kind(PolicyKind::Countdown) else {
            return Vec::new();
        };
        self.outcomes
            .iter()
            .filter(|o| o.metrics.overhead_pct > reference.metrics.overhead_pct)
            .map(|o| o.policy.as_str())
            .collect()
    }

    pub fn check_identity(&self) -> Result<(), String> {
        for o in &self.outcomes {
            if !o.metrics.satisfies_identity(IDENTITY_TOLERANCE) {
                return Err(format!(
                    "{}/{}: energy, time and power savings disagree (residual {:e})",
                    self.application,
                    o.policy,
                    o.metrics.identity_residual()
                ));
            }
        }
        Ok(())
    }
}

/// Runs Baseline and every policy in `policies` (in parallel) and reports
/// each against Baseline. Baseline is always run as the reference; it shows
/// up as an outcome only when listed.
pub fn compare_policies(
    application: &str,
    w: &Workload,
    m: &MachineModel,
    policies: &[PolicySpec],
) -> Result<ComparisonRow, SimError> {
    let base = run_simulation(w, m, &PolicySpec::baseline())?;
    let results: Vec<SimResult> = policies
        .par_iter()
        .map(|p| run_simulation(w, m, p))
        .collect::<Result<_, _>>()?;
    let outcomes = policies
        .iter()
        .zip(&results)
        .map(|(p, r)| PolicyOutcome::from_result(p, r, &base))
        .collect();
    Ok(ComparisonRow {
        application: application.to_string(),
        baseline_makespan: base.makespan,
        baseline_energy: base.energy,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageColumn {
    pub policy: String,
    pub kind: PolicyKind,
    pub coverage_pct: f64,
}

/// Slack-isolation potential of one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub application: String,
    pub records: usize,
    pub tcomm_pct: f64,
    pub tslack_pct: f64,
    pub policies: Vec<CoverageColumn>,
    pub avg_mpi_ms: f64,
}

impl CoverageRow {
    pub fn get(&self, policy: &str) -> Option<f64> {
        self.policies
            .iter()
            .find(|c| c.policy == policy)
            .map(|c| c.coverage_pct)
    }

    /// Each policy stays under its ceiling: Tslack for slack-isolating
    /// policies, Tcomm for the rest.
    pub fn check_ceilings(&self) -> Result<(), String> {
        if !(0.0 <= self.tslack_pct && self.tslack_pct <= self.tcomm_pct + CEILING_TOLERANCE) {
            return Err(format!(
                "{}: Tslack {} outside [0, Tcomm {}]",
                self.application, self.tslack_pct, self.tcomm_pct
            ));
        }
        for c in &self.policies {
            let (name, ceiling) = if c.kind.isolates_slack() {
                ("Tslack", self.tslack_pct)
            } else if c.kind == PolicyKind::MinFreq {
                ("total", 100.0)
            } else {
                ("Tcomm", self.tcomm_pct)
            };
            if c.coverage_pct > ceiling + CEILING_TOLERANCE {
                return Err(format!(
                    "{}: {} coverage {} exceeds {name} {}",
                    self.application, c.policy, c.coverage_pct, ceiling
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CoverageError {
    #[error("{0}: trace has no records")]
    Empty(String),
    #[error("{application}: {source}")]
    Replay { application: String, source: ReplayError },
}

pub fn coverage_row(
    application: &str,
    records: &[TraceRecord],
    policies: &[PolicySpec],
    m: &MachineModel,
) -> Result<CoverageRow, CoverageError> {
    if records.is_empty() {
        return Err(CoverageError::Empty(application.to_string()));
    }
    let wrap = |source| CoverageError::Replay {
        application: application.to_string(),
        source,
    };
    let mut first: Option<CoverageResult> = None;
    let mut columns = Vec::with_capacity(policies.len());
    for p in policies {
        let c = replay_trace(records, p, m).map_err(wrap)?;
        columns.push(CoverageColumn {
            policy: c.policy.clone(),
            kind: p.kind,
            coverage_pct: c.coverage_pct,
        });
        first.get_or_insert(c);
    }
    // the trace-level columns do not depend on the policy
    let stats = match first {
        Some(c) => c,
        None => replay_trace(records, &PolicySpec::baseline(), m).map_err(wrap)?,
    };
    Ok(CoverageRow {
        application: application.to_string(),
        records: records.len(),
        tcomm_pct: stats.tcomm_pct,
        tslack_pct: stats.tslack_pct,
        policies: columns,
        avg_mpi_ms: stats.avg_mpi_ms,
    })
}

pub fn coverage_table(
    traces: &[(String, Vec<TraceRecord>)],
    policies: &[PolicySpec],
    m: &MachineModel,
) -> Result<Vec<CoverageRow>, CoverageError> {
    traces
        .iter()
        .map(|(app, recs)| coverage_row(app, recs, policies, m))
        .collect()
}
