//! Open-loop replay: recorded durations are fixed and a policy's timer logic
//! is played against them to measure how long it would keep the core below
//! f_max.
//!
//! Frequency drops are subject to the PCU quantum. Restores to f_max are
//! counted as immediate, so the measured coverage never spills past the end
//! of the region that triggered it.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{MachineModel, ModelError, Seconds, TraceRecord};
use crate::policies::{HookResponse, PolicyHooks, PolicyKind, PolicySpec, TaskObservation, TimerCommand};

use super::pcu_effective_time;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("record {index}: {source}")]
    InvalidRecord { index: usize, source: ModelError },
    #[error("{0} changes compute frequency and has no open-loop replay")]
    Unsupported(PolicyKind),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy requested {0} Hz, which is not in the P-state table")]
    FrequencyNotInTable(f64),
}

/// Time at reduced frequency for one policy over one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub policy: String,
    pub records: usize,
    pub total_time: Seconds,
    pub comm_time: Seconds,
    pub slack_time: Seconds,
    pub reduced_time: Seconds,
    pub tcomm_pct: f64,
    pub tslack_pct: f64,
    pub coverage_pct: f64,
    /// Mean `t_slack + t_copy` per record, in milliseconds.
    pub avg_mpi_ms: f64,
}

struct RankReplay<'a> {
    hooks: &'a mut dyn PolicyHooks,
    m: &'a MachineModel,
    rank: usize,
    freq: usize,
    changed_at: Seconds,
    pending: Option<(Seconds, usize)>,
    timer: Option<Seconds>,
    reduced: Seconds,
}

impl RankReplay<'_> {
    fn set(&mut self, now: Seconds, target: usize) {
        if target == self.freq {
            return;
        }
        if self.freq != self.m.pstates.max_index() {
            self.reduced += now - self.changed_at;
        }
        self.freq = target;
        self.changed_at = now;
    }

    fn request(&mut self, now: Seconds, target: usize) {
        self.settle_pending(now);
        self.pending = None;
        if target == self.m.pstates.max_index() {
            self.set(now, target);
            return;
        }
        let t_eff = pcu_effective_time(now, self.m.pcu_quantum);
        if t_eff <= now {
            self.set(now, target);
        } else {
            self.pending = Some((t_eff, target));
        }
    }

    /// Applies a pending request due strictly before `now`; one due exactly at
    /// `now` is left for the caller to supersede.
    fn settle_pending(&mut self, now: Seconds) {
        if let Some((at, target)) = self.pending {
            if at < now {
                self.pending = None;
                self.set(at, target);
            }
        }
    }

    fn apply(&mut self, now: Seconds, resp: HookResponse) -> Result<(), ReplayError> {
        match resp.timer {
            TimerCommand::Keep => {}
            TimerCommand::Arm(delay) => self.timer = Some(now + delay),
            TimerCommand::Cancel => self.timer = None,
        }
        if let Some(f) = resp.request {
            let idx = self.m.pstates.index_of(f).ok_or(ReplayError::FrequencyNotInTable(f))?;
            self.request(now, idx);
        }
        Ok(())
    }

    /// Fires a timer due strictly before `until`, then settles pending changes.
    fn advance(&mut self, until: Seconds) -> Result<(), ReplayError> {
        while let Some(at) = self.timer.filter(|&at| at < until) {
            self.settle_pending(at);
            self.timer = None;
            let resp = self.hooks.on_timer_fire(self.rank, at);
            self.apply(at, resp)?;
        }
        self.settle_pending(until);
        Ok(())
    }

    fn finish(&mut self, end: Seconds) -> Seconds {
        self.settle_pending(end);
        if self.freq != self.m.pstates.max_index() {
            self.reduced += end - self.changed_at;
            self.changed_at = end;
        }
        self.reduced
    }
}

/// Replays `records` (any rank interleaving; per-rank order is preserved)
/// under `p`.
pub fn replay_trace(records: &[TraceRecord], p: &PolicySpec, m: &MachineModel) -> Result<CoverageResult, ReplayError> {
    p.validate().map_err(ReplayError::InvalidPolicy)?;
    if matches!(p.kind, PolicyKind::Andante | PolicyKind::Adagio) {
        return Err(ReplayError::Unsupported(p.kind));
    }
    for (index, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|source| ReplayError::InvalidRecord { index, source })?;
    }

    let mut by_rank: BTreeMap<usize, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        by_rank.entry(r.rank).or_default().push(r);
    }

    let mut hooks = p.build(&m.pstates);
    let isolate = hooks.isolates_slack();
    let mut reduced_total = 0.0;
    for (&rank, recs) in &by_rank {
        let mut st = RankReplay {
            hooks: hooks.as_mut(),
            m,
            rank,
            freq: m.pstates.max_index(),
            changed_at: 0.0,
            pending: None,
            timer: None,
            reduced: 0.0,
        };
        let resp = st.hooks.on_start(rank, 0.0);
        st.apply(0.0, resp)?;
        let mut now = 0.0;
        let mut opening = None;
        for rec in recs {
            let cs = rec.callsite_id;
            let resp = st.hooks.on_comp_enter(rank, opening, now);
            st.apply(now, resp)?;
            let comm_start = now + rec.t_comp;
            st.advance(comm_start)?;
            let resp = st.hooks.on_comm_enter(rank, cs, comm_start);
            st.apply(comm_start, resp)?;
            if isolate {
                let resp = st.hooks.on_slack_enter(rank, cs, comm_start);
                st.apply(comm_start, resp)?;
            }
            let slack_end = comm_start + rec.t_slack;
            st.advance(slack_end)?;
            if isolate {
                let resp = st.hooks.on_slack_exit(rank, cs, slack_end);
                st.apply(slack_end, resp)?;
            }
            let resp = st.hooks.on_copy_enter(rank, cs, slack_end);
            st.apply(slack_end, resp)?;
            let comm_end = slack_end + rec.t_copy;
            st.advance(comm_end)?;
            let resp = st.hooks.on_copy_exit(rank, cs, comm_end);
            st.apply(comm_end, resp)?;
            let obs = TaskObservation {
                callsite_id: cs,
                t_comp: rec.t_comp,
                t_slack: rec.t_slack,
                t_copy: rec.t_copy,
                instructions: 0,
                comp_frequency: None,
            };
            let resp = st.hooks.on_comm_exit(rank, &obs, comm_end);
            st.apply(comm_end, resp)?;
            opening = Some(cs);
            now = comm_end;
        }
        reduced_total += st.finish(now);
    }

    let total: Seconds = records.iter().map(TraceRecord::total).sum();
    let comm: Seconds = records.iter().map(TraceRecord::t_comm).sum();
    let slack: Seconds = records.iter().map(|r| r.t_slack).sum();
    let pct = |x: Seconds| if total > 0.0 { 100.0 * x / total } else { 0.0 };
    Ok(CoverageResult {
        policy: p.label(),
        records: records.len(),
        total_time: total,
        comm_time: comm,
        slack_time: slack,
        reduced_time: reduced_total,
        tcomm_pct: pct(comm),
        tslack_pct: pct(slack),
        coverage_pct: pct(reduced_total),
        avg_mpi_ms: if records.is_empty() {
            0.0
        } else {
            1e3 * comm / records.len() as f64
        },
    })
}
