//! Synthetic workload patterns.
//!
//! Every pattern draws per-task compute times from
//!
//! ```text
//! comp(r, i) = comp_mean * shape(r, i) * (1 + jitter * (2u - 1))
//! ```
//!
//! where `u` is uniform in `[0, 1)` from a `ChaCha8Rng` seeded with `seed`.
//! One draw is taken per compute region, iteration-major then rank-minor,
//! whether or not `jitter` is zero, so the stream is stable across jitter
//! values. `shape` depends on the pattern:
//!
//! | pattern                | shape(r, i)                                    |
//! |------------------------|------------------------------------------------|
//! | `balanced_barrier`     | `1`                                            |
//! | `imbalanced_barrier`   | `1 + imbalance * (r/(n-1) - 0.5) * 2`          |
//! | `irregular_alternating`| `1 + imbalance * s`, `s = +1` if `r+i` even, else `-1` |
//! | `short_phase`          | as `imbalanced_barrier`, for each of 4 sub-phases |
//! | `p2p_ring`             | as `imbalanced_barrier`                        |
//! | `bsp_stencil`          | as `imbalanced_barrier`                        |
//!
//! Instructions are `round(comp * 2.3e9)` (at least 1 for a non-empty region).
//! Every rank stream ends with an empty terminal task.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CollectiveOp, ModelError, MpiPrimitive, Seconds, Task, Workload, WorkloadMeta};
use crate::units::deserialize_seconds;

/// Instructions retired per second of compute at f_max.
pub const INSTRUCTIONS_PER_SECOND: f64 = 2.3e9;

const CS_ITERATION: u64 = 0x100;
const CS_SHORT_BASE: u64 = 0x200;
const CS_RING_SEND: u64 = 0x300;
const CS_RING_RECV: u64 = 0x301;
const CS_HALO_RIGHT_SEND: u64 = 0x400;
const CS_HALO_RIGHT_RECV: u64 = 0x401;
const CS_HALO_LEFT_SEND: u64 = 0x402;
const CS_HALO_LEFT_RECV: u64 = 0x403;
const CS_HALO_REDUCE: u64 = 0x404;

const SHORT_PHASE_OPS: [CollectiveOp; 4] = [
    CollectiveOp::Barrier,
    CollectiveOp::Allreduce,
    CollectiveOp::Bcast,
    CollectiveOp::Reduce,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Pattern {
    BalancedBarrier,
    ImbalancedBarrier,
    IrregularAlternating,
    ShortPhase,
    P2pRing,
    BspStencil,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::BalancedBarrier,
        Pattern::ImbalancedBarrier,
        Pattern::IrregularAlternating,
        Pattern::ShortPhase,
        Pattern::P2pRing,
        Pattern::BspStencil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::BalancedBarrier => "balanced_barrier",
            Pattern::ImbalancedBarrier => "imbalanced_barrier",
            Pattern::IrregularAlternating => "irregular_alternating",
            Pattern::ShortPhase => "short_phase",
            Pattern::P2pRing => "p2p_ring",
            Pattern::BspStencil => "bsp_stencil",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Pattern::ALL
            .into_iter()
            .find(|p| p.name().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown pattern '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub pattern: Pattern,
    pub n_ranks: usize,
    pub n_iterations: usize,
    #[serde(deserialize_with = "deserialize_seconds")]
    pub comp_mean: Seconds,
    #[serde(default)]
    pub imbalance: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub message_bytes: u64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(pattern: Pattern, n_ranks: usize, n_iterations: usize, comp_mean: Seconds) -> Self {
        Self {
            pattern,
            n_ranks,
            n_iterations,
            comp_mean,
            imbalance: 0.0,
            jitter: 0.0,
            message_bytes: 0,
            seed: 0,
        }
    }

    pub fn with_imbalance(mut self, imbalance: f64) -> Self {
        self.imbalance = imbalance;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_message_bytes(mut self, bytes: u64) -> Self {
        self.message_bytes = bytes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Workload(m));
        if self.n_ranks < 2 {
            return err(format!("n_ranks must be >= 2, got {}", self.n_ranks));
        }
        if self.n_iterations == 0 {
            return err("n_iterations must be >= 1".into());
        }
        if !(self.comp_mean >= 0.0 && self.comp_mean.is_finite()) {
            return err(format!("comp_mean must be >= 0, got {}", self.comp_mean));
        }
        if !(0.0..=1.0).contains(&self.imbalance) {
            return err(format!("imbalance must lie in [0,1], got {}", self.imbalance));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return err(format!("jitter must lie in [0,1), got {}", self.jitter));
        }
        Ok(())
    }

    /// Default workload name, e.g. `imbalanced_barrier-n4-i10-s7`.
    pub fn default_name(&self) -> String {
        format!(
            "{}-n{}-i{}-s{}",
            self.pattern, self.n_ranks, self.n_iterations, self.seed
        )
    }
}

struct Builder<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
    tasks: Vec<Vec<Task>>,
}

impl Builder<'_> {
    fn spread(&self, r: usize) -> f64 {
        let n = self.spec.n_ranks as f64;
        1.0 + self.spec.imbalance * (r as f64 / (n - 1.0) - 0.5) * 2.0
    }

    fn draw(&mut self, shape: f64) -> Seconds {
        let u: f64 = self.rng.gen();
        self.spec.comp_mean * shape * (1.0 + self.spec.jitter * (2.0 * u - 1.0))
    }

    fn push(&mut self, rank: usize, comp: Seconds, mpi: MpiPrimitive) {
        self.tasks[rank].push(task(comp, Some(mpi)));
    }

    fn collective_op(&self) -> CollectiveOp {
        if self.spec.message_bytes == 0 {
            CollectiveOp::Barrier
        } else {
            CollectiveOp::Allreduce
        }
    }
}

fn task(comp: Seconds, mpi: Option<MpiPrimitive>) -> Task {
    let instructions = if comp > 0.0 {
        ((comp * INSTRUCTIONS_PER_SECOND).round() as u64).max(1)
    } else {
        0
    };
    Task::new(comp, instructions, mpi)
}

/// Builds the workload described by `spec`. Deterministic in `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Workload, ModelError> {
    spec.validate()?;
    let n = spec.n_ranks;
    let all: Vec<usize> = (0..n).collect();
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        tasks: vec![Vec::new(); n],
    };
    let bytes = spec.message_bytes;

    for i in 0..spec.n_iterations {
        match spec.pattern {
            Pattern::BalancedBarrier | Pattern::ImbalancedBarrier | Pattern::IrregularAlternating => {
                let op = b.collective_op();
                for r in 0..n {
                    let shape = match spec.pattern {
                        Pattern::BalancedBarrier => 1.0,
                        Pattern::ImbalancedBarrier => b.spread(r),
                        _ => 1.0 + spec.imbalance * if (r + i) % 2 == 0 { 1.0 } else { -1.0 },
                    };
                    let comp = b.draw(shape);
                    b.push(r, comp, MpiPrimitive::collective(op, all.clone(), bytes, CS_ITERATION));
                }
            }
            Pattern::ShortPhase => {
                for (k, op) in SHORT_PHASE_OPS.into_iter().enumerate() {
                    let op_bytes = if op == CollectiveOp::Barrier { 0 } else { bytes };
                    for r in 0..n {
                        let comp = b.draw(b.spread(r));
                        let prim = MpiPrimitive::collective(op, all.clone(), op_bytes, CS_SHORT_BASE + k as u64);
                        b.push(r, comp, prim);
                    }
                }
            }
            Pattern::P2pRing => {
                for r in 0..n {
                    let comp = b.draw(b.spread(r));
                    let send = MpiPrimitive::send((r + 1) % n, 0, bytes, CS_RING_SEND);
                    let recv = MpiPrimitive::recv((r + n - 1) % n, 0, bytes, CS_RING_RECV);
                    let (first, second) = if r % 2 == 0 { (send, recv) } else { (recv, send) };
                    b.push(r, comp, first);
                    b.push(r, 0.0, second);
                }
            }
            Pattern::BspStencil => {
                for r in 0..n {
                    let comp = b.draw(b.spread(r));
                    let right = (r + 1) % n;
                    let left = (r + n - 1) % n;
                    let even = r % 2 == 0;
                    let pair = |send: MpiPrimitive, recv: MpiPrimitive| if even { [send, recv] } else { [recv, send] };
                    let mut calls = Vec::with_capacity(5);
                    calls.extend(pair(
                        MpiPrimitive::send(right, 0, bytes, CS_HALO_RIGHT_SEND),
                        MpiPrimitive::recv(left, 0, bytes, CS_HALO_RIGHT_RECV),
                    ));
                    calls.extend(pair(
                        MpiPrimitive::send(left, 1, bytes, CS_HALO_LEFT_SEND),
                        MpiPrimitive::recv(right, 1, bytes, CS_HALO_LEFT_RECV),
                    ));
                    calls.push(MpiPrimitive::collective(
                        CollectiveOp::Allreduce,
                        all.clone(),
                        8,
                        CS_HALO_REDUCE,
                    ));
                    for (k, prim) in calls.into_iter().enumerate() {
                        b.push(r, if k == 0 { comp } else { 0.0 }, prim);
                    }
                }
            }
        }
    }

    let mut tasks = b.tasks;
    for stream in &mut tasks {
        stream.push(task(0.0, None));
    }
    Ok(Workload {
        n_ranks: n,
        tasks,
        metadata: WorkloadMeta {
            name: spec.default_name(),
            seed: Some(spec.seed),
        },
    })
}
