//! Deterministic discrete-event execution of a [`Workload`] under a DVFS
//! policy, plus open-loop replay of recorded traces.
//!
//! Ranks advance through their tasks; every blocking MPI call is a sync point
//! whose release time is the latest arrival. Time between a rank's arrival
//! and the release is slack, the network cost after release is copy.
//! Frequency requests only take effect on PCU-quantum boundaries.
//!
//! [`Workload`]: crate::model::Workload

mod queue;
mod replay;
mod sim;
mod validate;

use thiserror::Error;

use crate::model::{Hz, ModelError, PStateTable, Seconds};

pub use queue::EventQueue;
pub use replay::{replay_trace, CoverageResult, ReplayError};
pub use sim::{run_simulation, run_with_hooks};
pub use validate::{validate_workload, BlockedCall, DeadlockReport, ValidationError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Deadlock(#[from] DeadlockReport),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("rank {rank} requested {frequency} Hz, which is not in the P-state table")]
    FrequencyNotInTable { rank: usize, frequency: Hz },
    #[error("simulation stalled: {0}")]
    Stalled(String),
}

impl From<ValidationError> for SimError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Structure(m) => SimError::Model(m),
            ValidationError::Deadlock(d) => SimError::Deadlock(d),
        }
    }
}

/// Requests closer than this to a boundary count as on the boundary.
const PCU_SNAP: Seconds = 1e-12;

/// First PCU boundary at or after `request`. A request on a boundary takes
/// effect immediately and the returned value is `request` itself.
pub fn pcu_effective_time(request: Seconds, quantum: Seconds) -> Seconds {
    debug_assert!(quantum > 0.0);
    let k = (request / quantum).round();
    if (request - k * quantum).abs() <= PCU_SNAP {
        return request;
    }
    (request / quantum).ceil() * quantum
}

/// Energy of one rank: power of each constant-frequency segment of `log`
/// times its length, up to `finish`. `log` starts with the initial frequency.
pub fn integrate_energy(log: &[(Seconds, Hz)], finish: Seconds, pstates: &PStateTable) -> f64 {
    let power = |f: Hz| {
        let idx = pstates.index_of(f).unwrap_or_else(|| pstates.index_for_frequency(f));
        pstates.get(idx).power
    };
    log.iter()
        .enumerate()
        .map(|(i, &(t, f))| {
            let end = log.get(i + 1).map_or(finish, |&(next, _)| next).min(finish);
            (end - t).max(0.0) * power(f)
        })
        .sum()
}
