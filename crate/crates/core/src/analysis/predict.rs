//! Predictability of region durations with a last-value predictor.
//!
//! Two variants are scored per target:
//! * without previous info: the mean of the target over all records sharing
//!   the static call features (rank, mpi_type, bytes, n_procs, locality,
//!   callsite), evaluated in-sample on every record;
//! * with previous info: the target of the latest earlier record with the
//!   same (rank, callsite_id, mpi_type), scored only where one exists.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::model::{Seconds, TraceRecord};

use super::metrics::mean_smape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    TComp,
    TSlack,
    TCopy,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::TComp, Target::TSlack, Target::TCopy];

    pub fn name(self) -> &'static str {
        match self {
            Target::TComp => "t_comp",
            Target::TSlack => "t_slack",
            Target::TCopy => "t_copy",
        }
    }

    pub fn of(self, r: &TraceRecord) -> Seconds {
        match self {
            Target::TComp => r.t_comp,
            Target::TSlack => r.t_slack,
            Target::TCopy => r.t_copy,
        }
    }
}

/// Predicted `[t_comp, t_slack, t_copy]`.
pub type Prediction = [Seconds; 3];

/// For each record, the targets of the latest earlier record with the same
/// (rank, callsite_id, mpi_type), or `None`.
pub fn last_value_predict(records: &[TraceRecord]) -> Vec<Option<Prediction>> {
    let mut last: HashMap<(usize, u64, &str), Prediction> = HashMap::new();
    records
        .iter()
        .map(|r| {
            let key = (r.rank, r.callsite_id, r.mpi_type.as_str());
            last.insert(key, [r.t_comp, r.t_slack, r.t_copy])
        })
        .collect()
}

fn feature_mean_predict(records: &[TraceRecord]) -> Vec<Prediction> {
    type Key<'a> = (usize, &'a str, u64, u64, usize, u64, u64);
    fn key(r: &TraceRecord) -> Key<'_> {
        (
            r.rank,
            r.mpi_type.as_str(),
            r.bytes_recv,
            r.bytes_sent,
            r.n_procs,
            r.locality.to_bits(),
            r.callsite_id,
        )
    }
    let mut sums: BTreeMap<Key, ([f64; 3], usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(key(r)).or_insert(([0.0; 3], 0));
        e.0[0] += r.t_comp;
        e.0[1] += r.t_slack;
        e.0[2] += r.t_copy;
        e.1 += 1;
    }
    records
        .iter()
        .map(|r| {
            let (s, n) = sums[&key(r)];
            s.map(|x| x / n as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetError {
    pub target: Target,
    /// Mean SMAPE in percent; `None` without any scored record.
    pub smape_without_previous: Option<f64>,
    pub smape_with_previous: Option<f64>,
    pub samples_without_previous: usize,
    pub samples_with_previous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub application: String,
    pub records: usize,
    pub targets: Vec<TargetError>,
}

pub fn prediction_report(application: &str, records: &[TraceRecord]) -> PredictionReport {
    let with = last_value_predict(records);
    let without = feature_mean_predict(records);
    let targets = Target::ALL
        .iter()
        .enumerate()
        .map(|(i, &target)| {
            let scored: Vec<(f64, f64)> = records
                .iter()
                .zip(&with)
                .filter_map(|(r, p)| p.map(|p| (p[i], target.of(r))))
                .collect();
            TargetError {
                target,
                smape_without_previous: mean_smape(records.iter().zip(&without).map(|(r, p)| (p[i], target.of(r)))),
                smape_with_previous: mean_smape(scored.iter().copied()),
                samples_without_previous: records.len(),
                samples_with_previous: scored.len(),
            }
        })
        .collect();
    PredictionReport {
        application: application.to_string(),
        records: records.len(),
        targets,
    }
}

/// Keeps the records of ranks whose summed record time exceeds `min_duration`.
pub fn filter_min_duration(records: &[TraceRecord], min_duration: Seconds) -> Vec<TraceRecord> {
    let mut per_rank: HashMap<usize, Seconds> = HashMap::new();
    for r in records {
        *per_rank.entry(r.rank).or_default() += r.total();
    }
    records
        .iter()
        .filter(|r| per_rank[&r.rank] > min_duration)
        .cloned()
        .collect()
}
