//! Last-value compute slowdown (Andante) and its combination with a
//! slack-only Fermata timer (Adagio).

use crate::model::{Hz, PStateTable, Seconds};

use super::{CallsiteHistory, CallsiteRecord, HookResponse, PerRank, PolicyHooks, TaskObservation, PROGRAM_START};

const BUDGET_RTOL: f64 = 1e-9;

/// Lowest frequency whose predicted compute time fits in the predicted
/// compute + slack budget.
///
/// IPS at P-states never visited is seeded by linear scaling from f_max
/// (itself derived from the fastest measured state when f_max was never
/// measured). No history, or no measured IPS, means f_max.
pub fn andante_select_frequency(entry: Option<&CallsiteRecord>, pstates: &PStateTable) -> Hz {
    let f_max = pstates.f_max();
    let Some(entry) = entry else {
        return f_max;
    };
    let Some((ref_idx, ref_ips)) = entry.ips.iter().enumerate().find_map(|(i, ips)| ips.map(|v| (i, v))) else {
        return f_max;
    };
    let ips_at_fmax = ref_ips * f_max / pstates.get(ref_idx).frequency;
    let budget = entry.t_comp + entry.t_slack;
    let instructions = entry.instructions as f64;

    for idx in (0..pstates.len()).rev() {
        let f = pstates.get(idx).frequency;
        let ips = entry.ips.get(idx).copied().flatten().unwrap_or(ips_at_fmax * f / f_max);
        if instructions / ips <= budget * (1.0 + BUDGET_RTOL) {
            return f;
        }
    }
    f_max
}

/// Andante, optionally with Adagio's slack timer.
#[derive(Debug, Clone)]
pub struct AndantePolicy {
    pstates: PStateTable,
    overhead: Seconds,
    /// Task history keyed by the callsite that opened the task.
    tasks: CallsiteHistory,
    opening: PerRank<Option<u64>>,
    lowered: PerRank<bool>,
    /// Adagio only: slack timeout and per-callsite slack history.
    slack_timer: Option<SlackTimer>,
}

#[derive(Debug, Clone)]
struct SlackTimer {
    theta: Seconds,
    history: CallsiteHistory,
    fired: PerRank<bool>,
}

impl AndantePolicy {
    pub fn andante(hash_cost: Seconds, barrier_cost: Seconds, pstates: &PStateTable) -> Self {
        Self {
            pstates: pstates.clone(),
            overhead: hash_cost + barrier_cost,
            tasks: CallsiteHistory::new(pstates),
            opening: PerRank::default(),
            lowered: PerRank::default(),
            slack_timer: None,
        }
    }

    pub fn adagio(theta: Seconds, hash_cost: Seconds, barrier_cost: Seconds, pstates: &PStateTable) -> Self {
        Self {
            slack_timer: Some(SlackTimer {
                theta,
                history: CallsiteHistory::new(pstates),
                fired: PerRank::default(),
            }),
            ..Self::andante(hash_cost, barrier_cost, pstates)
        }
    }

    pub fn task_history(&self) -> &CallsiteHistory {
        &self.tasks
    }
}

impl PolicyHooks for AndantePolicy {
    fn isolates_slack(&self) -> bool {
        true
    }

    fn call_overhead(&self) -> Seconds {
        self.overhead
    }

    fn on_comp_enter(&mut self, rank: usize, opening_callsite: Option<u64>, _now: Seconds) -> HookResponse {
        let key = opening_callsite.unwrap_or(PROGRAM_START);
        *self.opening.get_mut(rank) = Some(key);
        let f = andante_select_frequency(self.tasks.get(rank, key), &self.pstates);
        if f < self.pstates.f_max() {
            *self.lowered.get_mut(rank) = true;
            HookResponse::request(f)
        } else {
            HookResponse::none()
        }
    }

    fn on_comm_enter(&mut self, rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        if std::mem::take(self.lowered.get_mut(rank)) {
            HookResponse::request(self.pstates.f_max())
        } else {
            HookResponse::none()
        }
    }

    fn on_slack_enter(&mut self, rank: usize, callsite: u64, _now: Seconds) -> HookResponse {
        let Some(st) = self.slack_timer.as_mut() else {
            return HookResponse::none();
        };
        *st.fired.get_mut(rank) = false;
        // Fermata's prediction, applied to the isolated slack of this call.
        let predicted_long = st
            .history
            .get(rank, callsite)
            .is_some_and(|prev| prev.t_slack >= 2.0 * st.theta);
        if predicted_long {
            HookResponse::arm(st.theta)
        } else {
            HookResponse::none()
        }
    }

    fn on_slack_exit(&mut self, rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        let Some(st) = self.slack_timer.as_mut() else {
            return HookResponse::none();
        };
        let fired = std::mem::take(st.fired.get_mut(rank));
        HookResponse::cancel().with_request(fired.then_some(self.pstates.f_max()))
    }

    fn on_timer_fire(&mut self, rank: usize, _now: Seconds) -> HookResponse {
        match self.slack_timer.as_mut() {
            Some(st) => {
                *st.fired.get_mut(rank) = true;
                HookResponse::request(self.pstates.f_min())
            }
            None => HookResponse::none(),
        }
    }

    fn on_comm_exit(&mut self, rank: usize, obs: &TaskObservation, _now: Seconds) -> HookResponse {
        let key = self.opening.get_mut(rank).take().unwrap_or(PROGRAM_START);
        self.tasks.record(rank, key, obs, &self.pstates);
        if let Some(st) = self.slack_timer.as_mut() {
            st.history.record(rank, obs.callsite_id, obs, &self.pstates);
        }
        HookResponse::none()
    }
}
