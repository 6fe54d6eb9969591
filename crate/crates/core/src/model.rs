//! Domain types shared by the engine, the policies, the workload generators
//! and the analysis layer.
//!
//! Units are SI throughout: seconds for durations and timestamps, hertz for
//! frequencies, watts for power, joules for energy, bytes for message sizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds.
pub type Seconds = f64;
/// Hertz.
pub type Hz = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid P-state table: {0}")]
    PStates(String),
    #[error("invalid machine model: {0}")]
    Machine(String),
    #[error("invalid workload: rank {rank} task {task}: {msg}")]
    Task { rank: usize, task: usize, msg: String },
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("invalid trace record: {0}")]
    Trace(String),
}

/// One discrete frequency/power operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PState {
    pub frequency: Hz,
    /// Average package+DRAM power attributed to one rank at this frequency.
    pub power: f64,
}

/// P-states sorted by strictly decreasing frequency and power.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PStateTable {
    states: Vec<PState>,
}

impl PStateTable {
    pub fn new(mut states: Vec<PState>) -> Result<Self, ModelError> {
        if states.len() < 2 {
            return Err(ModelError::PStates(format!(
                "need at least 2 entries, got {}",
                states.len()
            )));
        }
        for s in &states {
            if !(s.frequency > 0.0 && s.frequency.is_finite()) || !(s.power > 0.0 && s.power.is_finite()) {
                return Err(ModelError::PStates(format!(
                    "frequency and power must be positive and finite: {s:?}"
                )));
            }
        }
        states.sort_by(|a, b| b.frequency.total_cmp(&a.frequency));
        for pair in states.windows(2) {
            if pair[1].frequency >= pair[0].frequency {
                return Err(ModelError::PStates(format!(
                    "duplicate frequency {}",
                    pair[0].frequency
                )));
            }
            if pair[1].power >= pair[0].power {
                return Err(ModelError::PStates(format!(
                    "power must decrease with frequency ({} Hz: {} W, {} Hz: {} W)",
                    pair[0].frequency, pair[0].power, pair[1].frequency, pair[1].power
                )));
            }
        }
        Ok(Self { states })
    }

    /// Illustrative Broadwell-like table: 2.3 GHz down to 1.2 GHz in 100 MHz
    /// steps. Per-rank power at f_max is 145 W / 18 cores; lower states follow
    /// `P(f) = P_max * (0.4 + 0.6 * (f / f_max)^3)`. These are not measured
    /// values.
    pub fn broadwell_default() -> Self {
        let f_max = 2.3e9;
        let p_max = 145.0 / 18.0;
        let states = (0..12)
            .map(|i| {
                let f = f_max - i as f64 * 0.1e9;
                let r = f / f_max;
                PState {
                    frequency: f,
                    power: p_max * (0.4 + 0.6 * r * r * r),
                }
            })
            .collect();
        Self::new(states).expect("default table is valid")
    }

    pub fn states(&self) -> &[PState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn f_max(&self) -> Hz {
        self.states[0].frequency
    }

    pub fn f_min(&self) -> Hz {
        self.states[self.states.len() - 1].frequency
    }

    pub fn max_index(&self) -> usize {
        0
    }

    pub fn min_index(&self) -> usize {
        self.states.len() - 1
    }

    pub fn get(&self, index: usize) -> PState {
        self.states[index]
    }

    /// Index of the entry whose frequency equals `f` exactly.
    pub fn index_of(&self, f: Hz) -> Option<usize> {
        self.states.iter().position(|s| s.frequency == f)
    }

    /// Index of the entry with the smallest frequency >= `f`, clamped to the
    /// table range.
    pub fn index_for_frequency(&self, f: Hz) -> usize {
        self.states.iter().rposition(|s| s.frequency >= f).unwrap_or(0)
    }
}

impl<'de> Deserialize<'de> for PStateTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let states = Vec::<PState>::deserialize(d)?;
        PStateTable::new(states).map_err(serde::de::Error::custom)
    }
}

/// Entry with the smallest frequency >= `f`; `f` above f_max yields f_max and
/// `f` below f_min yields f_min.
pub fn pstate_for_frequency(table: &PStateTable, f: Hz) -> PState {
    table.get(table.index_for_frequency(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    pub pstates: PStateTable,
    /// Granularity at which the power controller applies frequency requests.
    pub pcu_quantum: Seconds,
    /// Per-message latency.
    pub net_latency: Seconds,
    /// Bytes per second.
    pub net_bandwidth: f64,
    /// Frequency-insensitive fraction of compute time.
    pub beta_comp: f64,
    /// Frequency-insensitive fraction of copy time.
    pub gamma_copy: f64,
    /// Multiplier applied to `log2(p)` for collective copy cost.
    pub collective_scale: f64,
}

impl Default for MachineModel {
    fn default() -> Self {
        Self {
            pstates: PStateTable::broadwell_default(),
            pcu_quantum: 500e-6,
            net_latency: 1e-6,
            net_bandwidth: 5e9,
            beta_comp: 0.4,
            gamma_copy: 0.5,
            collective_scale: 1.0,
        }
    }
}

impl MachineModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Machine(m));
        if !(self.pcu_quantum > 0.0 && self.pcu_quantum.is_finite()) {
            return bad(format!("pcu_quantum must be > 0, got {}", self.pcu_quantum));
        }
        if !(self.net_bandwidth > 0.0 && self.net_bandwidth.is_finite()) {
            return bad(format!("net_bandwidth must be > 0, got {}", self.net_bandwidth));
        }
        if !(self.net_latency >= 0.0 && self.net_latency.is_finite()) {
            return bad(format!("net_latency must be >= 0, got {}", self.net_latency));
        }
        if !(0.0..=1.0).contains(&self.beta_comp) {
            return bad(format!("beta_comp must lie in [0,1], got {}", self.beta_comp));
        }
        if !(0.0..=1.0).contains(&self.gamma_copy) {
            return bad(format!("gamma_copy must lie in [0,1], got {}", self.gamma_copy));
        }
        if !(self.collective_scale >= 0.0 && self.collective_scale.is_finite()) {
            return bad(format!("collective_scale must be >= 0, got {}", self.collective_scale));
        }
        Ok(())
    }

    /// Slowdown of a compute region at `f` relative to f_max.
    pub fn comp_factor(&self, f: Hz) -> f64 {
        sensitivity_factor(self.beta_comp, self.pstates.f_max(), f)
    }

    /// Slowdown of a copy region at `f` relative to f_max.
    pub fn copy_factor(&self, f: Hz) -> f64 {
        sensitivity_factor(self.gamma_copy, self.pstates.f_max(), f)
    }

    /// Copy duration of `prim` at f_max.
    pub fn copy_base(&self, prim: &MpiPrimitive) -> Seconds {
        let bytes = prim.bytes_sent.max(prim.bytes_recv) as f64;
        let base = self.net_latency + bytes / self.net_bandwidth;
        match &prim.kind {
            PrimitiveKind::Collective { communicator, .. } => {
                base * self.collective_scale * (communicator.len() as f64).log2()
            }
            PrimitiveKind::Send { .. } | PrimitiveKind::Recv { .. } => base,
        }
    }
}

fn sensitivity_factor(insensitive: f64, f_max: Hz, f: Hz) -> f64 {
    if f == f_max {
        return 1.0;
    }
    insensitive + (1.0 - insensitive) * f_max / f
}

/// `t * (beta + (1 - beta) * f_max / f)`.
pub fn comp_duration(machine: &MachineModel, comp_time_fmax: Seconds, f: Hz) -> Seconds {
    comp_time_fmax * machine.comp_factor(f)
}

/// Network cost of `prim` scaled by the copy sensitivity at `f`.
pub fn copy_duration(machine: &MachineModel, prim: &MpiPrimitive, f: Hz) -> Seconds {
    machine.copy_base(prim) * machine.copy_factor(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollectiveOp {
    Barrier,
    Bcast,
    Reduce,
    Allreduce,
    Gather,
    Scatter,
    Allgather,
    Alltoall,
}

impl CollectiveOp {
    pub const ALL: [CollectiveOp; 8] = [
        CollectiveOp::Barrier,
        CollectiveOp::Bcast,
        CollectiveOp::Reduce,
        CollectiveOp::Allreduce,
        CollectiveOp::Gather,
        CollectiveOp::Scatter,
        CollectiveOp::Allgather,
        CollectiveOp::Alltoall,
    ];

    pub fn mpi_name(self) -> &'static str {
        match self {
            CollectiveOp::Barrier => "MPI_Barrier",
            CollectiveOp::Bcast => "MPI_Bcast",
            CollectiveOp::Reduce => "MPI_Reduce",
            CollectiveOp::Allreduce => "MPI_Allreduce",
            CollectiveOp::Gather => "MPI_Gather",
            CollectiveOp::Scatter => "MPI_Scatter",
            CollectiveOp::Allgather => "MPI_Allgather",
            CollectiveOp::Alltoall => "MPI_Alltoall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PrimitiveKind {
    Collective {
        op: CollectiveOp,
        /// Sorted, duplicate-free member ranks.
        communicator: Vec<usize>,
    },
    Send {
        peer: usize,
        tag: i32,
    },
    Recv {
        peer: usize,
        tag: i32,
    },
}

/// A blocking MPI call closing a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpiPrimitive {
    pub kind: PrimitiveKind,
    pub bytes_sent: u64,
    pub bytes_recv: u64,
    /// Stable identifier of the call location.
    pub callsite_id: u64,
}

impl MpiPrimitive {
    pub fn collective(op: CollectiveOp, communicator: Vec<usize>, bytes: u64, callsite_id: u64) -> Self {
        let mut communicator = communicator;
        communicator.sort_unstable();
        communicator.dedup();
        Self {
            kind: PrimitiveKind::Collective { op, communicator },
            bytes_sent: bytes,
            bytes_recv: bytes,
            callsite_id,
        }
    }

    pub fn send(peer: usize, tag: i32, bytes: u64, callsite_id: u64) -> Self {
        Self {
            kind: PrimitiveKind::Send { peer, tag },
            bytes_sent: bytes,
            bytes_recv: 0,
            callsite_id,
        }
    }

    pub fn recv(peer: usize, tag: i32, bytes: u64, callsite_id: u64) -> Self {
        Self {
            kind: PrimitiveKind::Recv { peer, tag },
            bytes_sent: 0,
            bytes_recv: bytes,
            callsite_id,
        }
    }

    pub fn mpi_name(&self) -> &'static str {
        match &self.kind {
            PrimitiveKind::Collective { op, .. } => op.mpi_name(),
            PrimitiveKind::Send { .. } => "MPI_Send",
            PrimitiveKind::Recv { .. } => "MPI_Recv",
        }
    }

    /// Number of processes taking part in the call.
    pub fn n_procs(&self) -> usize {
        match &self.kind {
            PrimitiveKind::Collective { communicator, .. } => communicator.len(),
            _ => 2,
        }
    }

    /// Ranks other than `me` taking part in the call.
    pub fn peers(&self, me: usize) -> Vec<usize> {
        match &self.kind {
            PrimitiveKind::Collective { communicator, .. } => {
                communicator.iter().copied().filter(|&r| r != me).collect()
            }
            PrimitiveKind::Send { peer, .. } | PrimitiveKind::Recv { peer, .. } => vec![*peer],
        }
    }

    fn validate(&self, me: usize, n_ranks: usize) -> Result<(), String> {
        match &self.kind {
            PrimitiveKind::Collective { communicator, .. } => {
                if communicator.len() < 2 {
                    return Err("collective communicator needs at least 2 ranks".into());
                }
                if communicator.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("communicator must be sorted without duplicates".into());
                }
                if !communicator.contains(&me) {
                    return Err("communicator does not contain the calling rank".into());
                }
                if let Some(r) = communicator.iter().find(|&&r| r >= n_ranks) {
                    return Err(format!("communicator member {r} out of range"));
                }
            }
            PrimitiveKind::Send { peer, .. } | PrimitiveKind::Recv { peer, .. } => {
                if *peer == me {
                    return Err("point-to-point peer equals the calling rank".into());
                }
                if *peer >= n_ranks {
                    return Err(format!("peer {peer} out of range"));
                }
            }
        }
        Ok(())
    }
}

/// Compute region followed by the MPI call that ends it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Compute duration at f_max.
    pub comp_time_fmax: Seconds,
    /// Retired instructions of the compute region.
    pub instructions: u64,
    /// `None` only for the last task of a rank.
    pub mpi: Option<MpiPrimitive>,
}

impl Task {
    pub fn new(comp_time_fmax: Seconds, instructions: u64, mpi: Option<MpiPrimitive>) -> Self {
        Self {
            comp_time_fmax,
            instructions,
            mpi,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub name: String,
    pub seed: Option<u64>,
}

/// Per-rank ordered task streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub n_ranks: usize,
    pub tasks: Vec<Vec<Task>>,
    #[serde(default)]
    pub metadata: WorkloadMeta,
}

impl Workload {
    /// Structural checks only; matching and deadlock freedom are checked by
    /// [`crate::engine::validate_workload`].
    pub fn check_structure(&self) -> Result<(), ModelError> {
        if self.n_ranks == 0 {
            return Err(ModelError::Workload("n_ranks must be > 0".into()));
        }
        if self.tasks.len() != self.n_ranks {
            return Err(ModelError::Workload(format!(
                "{} task streams for {} ranks",
                self.tasks.len(),
                self.n_ranks
            )));
        }
        for (rank, stream) in self.tasks.iter().enumerate() {
            for (i, task) in stream.iter().enumerate() {
                let err = |msg: String| ModelError::Task { rank, task: i, msg };
                if !(task.comp_time_fmax >= 0.0 && task.comp_time_fmax.is_finite()) {
                    return Err(err(format!("comp_time_fmax {} must be >= 0", task.comp_time_fmax)));
                }
                if task.comp_time_fmax > 0.0 && task.instructions == 0 {
                    return Err(err("instructions must be > 0 when comp_time_fmax > 0".into()));
                }
                match &task.mpi {
                    None if i + 1 != stream.len() => {
                        return Err(err("only the terminal task may omit its MPI call".into()))
                    }
                    Some(prim) => prim.validate(rank, self.n_ranks).map_err(err)?,
                    None => {}
                }
            }
        }
        Ok(())
    }

    pub fn task_count(&self) -> usize {
        self.tasks.iter().map(Vec::len).sum()
    }

    pub fn mpi_call_count(&self) -> usize {
        self.tasks.iter().flatten().filter(|t| t.mpi.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseKind {
    Comp,
    Slack,
    Copy,
    Overhead,
}

impl PhaseKind {
    pub const ALL: [PhaseKind; 4] = [PhaseKind::Comp, PhaseKind::Slack, PhaseKind::Copy, PhaseKind::Overhead];
}

/// A contiguous stretch of one rank's execution spent in a single phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub rank: usize,
    /// Index of the task the interval belongs to.
    pub task: usize,
    pub kind: PhaseKind,
    pub start: Seconds,
    pub end: Seconds,
    /// Frequency in effect at `start` followed by every change inside the
    /// interval.
    pub frequency_profile: Vec<(Seconds, Hz)>,
}

impl PhaseInterval {
    pub fn duration(&self) -> Seconds {
        self.end - self.start
    }

    /// Constant-frequency pieces as `(start, end, frequency)`.
    pub fn segments(&self) -> impl Iterator<Item = (Seconds, Seconds, Hz)> + '_ {
        self.frequency_profile.iter().enumerate().map(move |(i, &(t, f))| {
            let end = self
                .frequency_profile
                .get(i + 1)
                .map_or(self.end, |&(t_next, _)| t_next);
            (t, end, f)
        })
    }

    /// Time spent below `f_max`.
    pub fn reduced_time(&self, f_max: Hz) -> Seconds {
        self.segments()
            .filter(|&(_, _, f)| f < f_max)
            .map(|(s, e, _)| e - s)
            .sum()
    }
}

/// Seconds per phase kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTotals {
    pub comp: Seconds,
    pub slack: Seconds,
    pub copy: Seconds,
    pub overhead: Seconds,
}

impl PhaseTotals {
    pub fn add(&mut self, kind: PhaseKind, dt: Seconds) {
        match kind {
            PhaseKind::Comp => self.comp += dt,
            PhaseKind::Slack => self.slack += dt,
            PhaseKind::Copy => self.copy += dt,
            PhaseKind::Overhead => self.overhead += dt,
        }
    }

    pub fn get(&self, kind: PhaseKind) -> Seconds {
        match kind {
            PhaseKind::Comp => self.comp,
            PhaseKind::Slack => self.slack,
            PhaseKind::Copy => self.copy,
            PhaseKind::Overhead => self.overhead,
        }
    }

    pub fn sum(&self) -> Seconds {
        self.comp + self.slack + self.copy + self.overhead
    }

    pub fn merge(&mut self, other: &PhaseTotals) {
        for kind in PhaseKind::ALL {
            self.add(kind, other.get(kind));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank: usize,
    pub finish: Seconds,
    pub timeline: Vec<PhaseInterval>,
    pub totals: PhaseTotals,
    pub energy: f64,
    pub reduced_time: PhaseTotals,
    pub transitions: usize,
    /// Effective frequency changes `(time, Hz)`, starting with the initial
    /// frequency at t = 0.
    pub frequency_log: Vec<(Seconds, Hz)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub policy: String,
    pub makespan: Seconds,
    pub ranks: Vec<RankResult>,
    pub totals: PhaseTotals,
    pub energy: f64,
    pub reduced_time: PhaseTotals,
    pub transition_count: usize,
}

impl SimResult {
    /// Average power over the run, `energy / makespan`.
    pub fn average_power(&self) -> f64 {
        if self.makespan > 0.0 {
            self.energy / self.makespan
        } else {
            0.0
        }
    }

    pub fn timeline(&self) -> impl Iterator<Item = &PhaseInterval> {
        self.ranks.iter().flat_map(|r| r.timeline.iter())
    }
}

/// One row of the event-profiler trace schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub rank: usize,
    pub mpi_type: String,
    pub bytes_recv: u64,
    pub bytes_sent: u64,
    pub n_procs: usize,
    /// Fraction of the other participants on the caller's node.
    pub locality: f64,
    pub callsite_id: u64,
    pub t_comp: Seconds,
    pub t_slack: Seconds,
    pub t_copy: Seconds,
}

impl TraceRecord {
    pub fn t_comm(&self) -> Seconds {
        self.t_slack + self.t_copy
    }

    pub fn total(&self) -> Seconds {
        self.t_comp + self.t_slack + self.t_copy
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("t_comp", self.t_comp),
            ("t_slack", self.t_slack),
            ("t_copy", self.t_copy),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Trace(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.locality) {
            return Err(ModelError::Trace(format!(
                "locality must lie in [0,1], got {}",
                self.locality
            )));
        }
        Ok(())
    }
}
