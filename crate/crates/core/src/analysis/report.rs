//! Run reports: a summary, per-MPI-type aggregates and per-rank rows, each
//! written as text, CSV and/or JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{PhaseKind, PhaseTotals, Seconds, SimResult, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub workload: String,
    pub policy: String,
    pub n_ranks: usize,
    pub mpi_calls: usize,
    pub makespan: Seconds,
    pub energy: f64,
    pub average_power: f64,
    pub totals: PhaseTotals,
    pub reduced_time: PhaseTotals,
    pub transition_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpiRow {
    pub mpi_type: String,
    pub calls: usize,
    pub slack: Seconds,
    pub copy: Seconds,
    pub mean_comm_ms: f64,
    pub reduced_slack: Seconds,
    pub reduced_copy: Seconds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub finish: Seconds,
    pub comp: Seconds,
    pub slack: Seconds,
    pub copy: Seconds,
    pub overhead: Seconds,
    pub reduced: Seconds,
    pub energy: f64,
    pub transitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub summary: Summary,
    pub mpi: Vec<MpiRow>,
    pub ranks: Vec<RankRow>,
}

impl RunReport {
    pub fn new(result: &SimResult, workload: &Workload) -> Self {
        let f_max = result
            .ranks
            .iter()
            .filter_map(|r| r.frequency_log.first())
            .map(|&(_, f)| f)
            .fold(0.0, f64::max);
        let mut by_type: BTreeMap<&str, MpiRow> = BTreeMap::new();
        for stream in &workload.tasks {
            for prim in stream.iter().filter_map(|t| t.mpi.as_ref()) {
                let name = prim.mpi_name();
                by_type.entry(name).or_insert_with(|| MpiRow::empty(name)).calls += 1;
            }
        }
        for iv in result.timeline() {
            let Some(prim) = workload
                .tasks
                .get(iv.rank)
                .and_then(|s| s.get(iv.task))
                .and_then(|t| t.mpi.as_ref())
            else {
                continue;
            };
            let row = by_type
                .entry(prim.mpi_name())
                .or_insert_with(|| MpiRow::empty(prim.mpi_name()));
            match iv.kind {
                PhaseKind::Slack => {
                    row.slack += iv.duration();
                    row.reduced_slack += iv.reduced_time(f_max);
                }
                PhaseKind::Copy => {
                    row.copy += iv.duration();
                    row.reduced_copy += iv.reduced_time(f_max);
                }
                _ => {}
            }
        }
        let mpi = by_type
            .into_values()
            .map(|mut r| {
                r.mean_comm_ms = if r.calls > 0 {
                    1e3 * (r.slack + r.copy) / r.calls as f64
                } else {
                    0.0
                };
                r
            })
            .collect();
        let ranks = result
            .ranks
            .iter()
            .map(|r| RankRow {
                rank: r.rank,
                finish: r.finish,
                comp: r.totals.comp,
                slack: r.totals.slack,
                copy: r.totals.copy,
                overhead: r.totals.overhead,
                reduced: r.reduced_time.sum(),
                energy: r.energy,
                transitions: r.transitions,
            })
            .collect();
        Self {
            summary: Summary {
                workload: workload.metadata.name.clone(),
                policy: result.policy.clone(),
                n_ranks: workload.n_ranks,
                mpi_calls: workload.mpi_call_count(),
                makespan: result.makespan,
                energy: result.energy,
                average_power: result.average_power(),
                totals: result.totals,
                reduced_time: result.reduced_time,
                transition_count: result.transition_count,
            },
            mpi,
            ranks,
        }
    }

    fn summary_pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.summary;
        vec![
            ("workload", s.workload.clone()),
            ("policy", s.policy.clone()),
            ("n_ranks", s.n_ranks.to_string()),
            ("mpi_calls", s.mpi_calls.to_string()),
            ("makespan_s", s.makespan.to_string()),
            ("energy_j", s.energy.to_string()),
            ("average_power_w", s.average_power.to_string()),
            ("t_comp_s", s.totals.comp.to_string()),
            ("t_slack_s", s.totals.slack.to_string()),
            ("t_copy_s", s.totals.copy.to_string()),
            ("t_overhead_s", s.totals.overhead.to_string()),
            ("reduced_comp_s", s.reduced_time.comp.to_string()),
            ("reduced_slack_s", s.reduced_time.slack.to_string()),
            ("reduced_copy_s", s.reduced_time.copy.to_string()),
            ("reduced_overhead_s", s.reduced_time.overhead.to_string()),
            ("transition_count", s.transition_count.to_string()),
        ]
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.summary_pairs() {
            let _ = writeln!(out, "{k:<20} {v}");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let pairs = self.summary_pairs();
        let header: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
        let values: Vec<&str> = pairs.iter().map(|(_, v)| v.as_str()).collect();
        csv_lines(&[header, values])
    }

    pub fn mpi_text(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>14} {:>14} {:>12} {:>14} {:>14}\n",
            "mpi_type", "calls", "slack_s", "copy_s", "mean_ms", "reduced_slack", "reduced_copy"
        );
        for r in &self.mpi {
            let _ = writeln!(
                out,
                "{:<16} {:>8} {:>14.9} {:>14.9} {:>12.6} {:>14.9} {:>14.9}",
                r.mpi_type, r.calls, r.slack, r.copy, r.mean_comm_ms, r.reduced_slack, r.reduced_copy
            );
        }
        out
    }

    pub fn mpi_csv(&self) -> String {
        let mut rows = vec![vec![
            "mpi_type".to_string(),
            "calls".into(),
            "slack_s".into(),
            "copy_s".into(),
            "mean_comm_ms".into(),
            "reduced_slack_s".into(),
            "reduced_copy_s".into(),
        ]];
        rows.extend(self.mpi.iter().map(|r| {
            vec![
                r.mpi_type.clone(),
                r.calls.to_string(),
                r.slack.to_string(),
                r.copy.to_string(),
                r.mean_comm_ms.to_string(),
                r.reduced_slack.to_string(),
                r.reduced_copy.to_string(),
            ]
        }));
        csv_lines(&rows)
    }

    pub fn ranks_text(&self) -> String {
        let mut out = format!(
            "{:>6} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>6}\n",
            "rank", "finish_s", "comp_s", "slack_s", "copy_s", "overhead_s", "reduced_s", "energy_j", "trans"
        );
        for r in &self.ranks {
            let _ = writeln!(
                out,
                "{:>6} {:>14.9} {:>14.9} {:>14.9} {:>14.9} {:>14.9} {:>14.9} {:>14.6} {:>6}",
                r.rank, r.finish, r.comp, r.slack, r.copy, r.overhead, r.reduced, r.energy, r.transitions
            );
        }
        out
    }

    pub fn ranks_csv(&self) -> String {
        let mut rows = vec![[
            "rank",
            "finish_s",
            "comp_s",
            "slack_s",
            "copy_s",
            "overhead_s",
            "reduced_s",
            "energy_j",
            "transitions",
        ]
        .map(String::from)
        .to_vec()];
        rows.extend(self.ranks.iter().map(|r| {
            vec![
                r.rank.to_string(),
                r.finish.to_string(),
                r.comp.to_string(),
                r.slack.to_string(),
                r.copy.to_string(),
                r.overhead.to_string(),
                r.reduced.to_string(),
                r.energy.to_string(),
                r.transitions.to_string(),
            ]
        }));
        csv_lines(&rows)
    }

    /// Renders the three report parts in `format`, keyed by file stem.
    pub fn render(&self, format: ReportFormat) -> [(&'static str, String); 3] {
        match format {
            ReportFormat::Text => [
                ("summary", self.summary_text()),
                ("mpi", self.mpi_text()),
                ("ranks", self.ranks_text()),
            ],
            ReportFormat::Csv => [
                ("summary", self.summary_csv()),
                ("mpi", self.mpi_csv()),
                ("ranks", self.ranks_csv()),
            ],
            ReportFormat::Json => [
                ("summary", to_json(&self.summary)),
                ("mpi", to_json(&self.mpi)),
                ("ranks", to_json(&self.ranks)),
            ],
        }
    }
}

impl MpiRow {
    fn empty(name: &str) -> Self {
        Self {
            mpi_type: name.to_string(),
            calls: 0,
            slack: 0.0,
            copy: 0.0,
            mean_comm_ms: 0.0,
            reduced_slack: 0.0,
            reduced_copy: 0.0,
        }
    }
}

pub(crate) fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report values serialize") + "\n"
}

pub(crate) fn csv_lines<S: AsRef<[u8]>>(rows: &[Vec<S>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// Writes `summary.*`, `mpi.*` and `ranks.*` for each format under `dir`,
/// prefixing file names with `prefix` when non-empty.
pub fn emit_report(
    report: &RunReport,
    dir: &Path,
    prefix: &str,
    formats: &[ReportFormat],
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &format in formats {
        for (stem, body) in report.render(format) {
            let name = if prefix.is_empty() {
                format!("{stem}.{}", format.extension())
            } else {
                format!("{prefix}.{stem}.{}", format.extension())
            };
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
