//! Timeout-gated policies: a timer armed on region entry drops the core to
//! f_min only if the region outlives it.

use crate::model::{Hz, PStateTable, Seconds};

use super::{CallsiteHistory, HookResponse, PerRank, PolicyHooks, TaskObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermataDecision {
    ArmTimer,
    NoOp,
}

/// Arms only when the previous call at this callsite spent at least twice the
/// threshold in MPI. Unseen callsites run at the highest P-state.
pub fn fermata_decide(history: &CallsiteHistory, rank: usize, callsite: u64, theta: Seconds) -> FermataDecision {
    match history.get(rank, callsite) {
        Some(prev) if prev.t_comm >= 2.0 * theta => FermataDecision::ArmTimer,
        _ => FermataDecision::NoOp,
    }
}

/// Shared fire/restore bookkeeping.
#[derive(Debug, Clone)]
struct Reducer {
    f_max: Hz,
    f_min: Hz,
    fired: PerRank<bool>,
}

impl Reducer {
    fn new(pstates: &PStateTable) -> Self {
        Self {
            f_max: pstates.f_max(),
            f_min: pstates.f_min(),
            fired: PerRank::default(),
        }
    }

    fn arm(&mut self, rank: usize, theta: Seconds) -> HookResponse {
        *self.fired.get_mut(rank) = false;
        HookResponse::arm(theta)
    }

    fn fire(&mut self, rank: usize) -> HookResponse {
        *self.fired.get_mut(rank) = true;
        HookResponse::request(self.f_min)
    }

    /// Cancels the timer and restores f_max if the timer already fired.
    fn exit(&mut self, rank: usize) -> HookResponse {
        let fired = std::mem::take(self.fired.get_mut(rank));
        HookResponse::cancel().with_request(fired.then_some(self.f_max))
    }
}

/// Timer on every MPI call; reduction covers slack and copy.
#[derive(Debug, Clone)]
pub struct CountdownPolicy {
    theta: Seconds,
    reducer: Reducer,
}

impl CountdownPolicy {
    pub fn new(theta: Seconds, pstates: &PStateTable) -> Self {
        Self {
            theta,
            reducer: Reducer::new(pstates),
        }
    }
}

impl PolicyHooks for CountdownPolicy {
    fn on_comm_enter(&mut self, rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        self.reducer.arm(rank, self.theta)
    }

    fn on_comm_exit(&mut self, rank: usize, _obs: &TaskObservation, _now: Seconds) -> HookResponse {
        self.reducer.exit(rank)
    }

    fn on_timer_fire(&mut self, rank: usize, _now: Seconds) -> HookResponse {
        self.reducer.fire(rank)
    }
}

/// Timer on isolated slack only; f_max is restored before the copy starts.
#[derive(Debug, Clone)]
pub struct CountdownSlackPolicy {
    theta: Seconds,
    barrier_cost: Seconds,
    reducer: Reducer,
}

impl CountdownSlackPolicy {
    pub fn new(theta: Seconds, barrier_cost: Seconds, pstates: &PStateTable) -> Self {
        Self {
            theta,
            barrier_cost,
            reducer: Reducer::new(pstates),
        }
    }
}

impl PolicyHooks for CountdownSlackPolicy {
    fn isolates_slack(&self) -> bool {
        true
    }

    fn call_overhead(&self) -> Seconds {
        self.barrier_cost
    }

    fn on_slack_enter(&mut self, rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        self.reducer.arm(rank, self.theta)
    }

    fn on_slack_exit(&mut self, rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        self.reducer.exit(rank)
    }

    fn on_timer_fire(&mut self, rank: usize, _now: Seconds) -> HookResponse {
        self.reducer.fire(rank)
    }
}

/// Timer only on calls predicted (last value) to last at least `2 * theta`.
#[derive(Debug, Clone)]
pub struct FermataPolicy {
    theta: Seconds,
    hash_cost: Seconds,
    pstates: PStateTable,
    history: CallsiteHistory,
    reducer: Reducer,
}

impl FermataPolicy {
    pub fn new(theta: Seconds, hash_cost: Seconds, pstates: &PStateTable) -> Self {
        Self {
            theta,
            hash_cost,
            pstates: pstates.clone(),
            history: CallsiteHistory::new(pstates),
            reducer: Reducer::new(pstates),
        }
    }

    pub fn history(&self) -> &CallsiteHistory {
        &self.history
    }
}

impl PolicyHooks for FermataPolicy {
    fn call_overhead(&self) -> Seconds {
        self.hash_cost
    }

    fn on_comm_enter(&mut self, rank: usize, callsite: u64, _now: Seconds) -> HookResponse {
        match fermata_decide(&self.history, rank, callsite, self.theta) {
            FermataDecision::ArmTimer => self.reducer.arm(rank, self.theta),
            FermataDecision::NoOp => HookResponse::none(),
        }
    }

    fn on_comm_exit(&mut self, rank: usize, obs: &TaskObservation, _now: Seconds) -> HookResponse {
        self.history.record(rank, obs.callsite_id, obs, &self.pstates);
        self.reducer.exit(rank)
    }

    fn on_timer_fire(&mut self, rank: usize, _now: Seconds) -> HookResponse {
        self.reducer.fire(rank)
    }
}
