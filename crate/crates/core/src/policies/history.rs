use std::collections::BTreeMap;

use crate::model::{PStateTable, Seconds};

use super::TaskObservation;

/// Last observation for one `(rank, callsite)` key.
#[derive(Debug, Clone, PartialEq)]
pub struct CallsiteRecord {
    pub t_comm: Seconds,
    pub t_comp: Seconds,
    pub t_slack: Seconds,
    pub instructions: u64,
    /// Measured instructions per second, indexed like the P-state table.
    pub ips: Vec<Option<f64>>,
}

/// Last-value look-up table keyed by `(rank, callsite)`.
#[derive(Debug, Clone)]
pub struct CallsiteHistory {
    n_states: usize,
    entries: BTreeMap<(usize, u64), CallsiteRecord>,
}

impl CallsiteHistory {
    pub fn new(pstates: &PStateTable) -> Self {
        Self {
            n_states: pstates.len(),
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, rank: usize, callsite: u64) -> Option<&CallsiteRecord> {
        self.entries.get(&(rank, callsite))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overwrites the durations and, when the compute region ran at a single
    /// table frequency, the IPS measured at that P-state.
    pub fn record(&mut self, rank: usize, callsite: u64, obs: &TaskObservation, pstates: &PStateTable) {
        let n_states = self.n_states;
        let entry = self.entries.entry((rank, callsite)).or_insert_with(|| CallsiteRecord {
            t_comm: 0.0,
            t_comp: 0.0,
            t_slack: 0.0,
            instructions: 0,
            ips: vec![None; n_states],
        });
        entry.t_comm = obs.t_comm();
        entry.t_comp = obs.t_comp;
        entry.t_slack = obs.t_slack;
        entry.instructions = obs.instructions;
        if let Some(idx) = obs.comp_frequency.and_then(|f| pstates.index_of(f)) {
            if obs.t_comp > 0.0 && obs.instructions > 0 {
                entry.ips[idx] = Some(obs.instructions as f64 / obs.t_comp);
            }
        }
    }
}
