#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slacksim::model::{CollectiveOp, MachineModel, MpiPrimitive, PState, PStateTable, Task, Workload, WorkloadMeta};

pub const MS: f64 = 1e-3;

/// 2.3 GHz at 100 W and 1.2 GHz at 50 W.
pub fn two_state_table() -> PStateTable {
    PStateTable::new(vec![
        PState {
            frequency: 2.3e9,
            power: 100.0,
        },
        PState {
            frequency: 1.2e9,
            power: 50.0,
        },
    ])
    .unwrap()
}

/// Two-state machine with a 0.5 ms quantum and a 1 ms barrier copy for two
/// ranks (latency 1 ms, collective_scale 1, log2(2) = 1).
pub fn example_machine() -> MachineModel {
    MachineModel {
        pstates: two_state_table(),
        pcu_quantum: 0.5 * MS,
        net_latency: 1.0 * MS,
        net_bandwidth: 1e9,
        beta_comp: 0.4,
        gamma_copy: 0.5,
        collective_scale: 1.0,
    }
}

pub fn task(comp: f64, mpi: Option<MpiPrimitive>) -> Task {
    let instr = if comp > 0.0 {
        ((comp * 2.3e9).round() as u64).max(1)
    } else {
        0
    };
    Task::new(comp, instr, mpi)
}

pub fn barrier(n: usize, callsite: u64) -> MpiPrimitive {
    MpiPrimitive::collective(CollectiveOp::Barrier, (0..n).collect(), 0, callsite)
}

/// Each rank computes `comps[r]` then joins one barrier.
pub fn one_barrier(comps: &[f64]) -> Workload {
    let n = comps.len();
    Workload {
        n_ranks: n,
        tasks: comps
            .iter()
            .map(|&c| vec![task(c, Some(barrier(n, 7))), task(0.0, None)])
            .collect(),
        metadata: WorkloadMeta {
            name: "one-barrier".into(),
            seed: None,
        },
    }
}

/// Random small workload: 2–3 ranks, at most `max_calls` calls per rank,
/// built from a global call order so it cannot deadlock.
pub fn random_small_workload(seed: u64, max_calls: usize) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=3usize);
    let mut streams: Vec<Vec<MpiPrimitive>> = vec![Vec::new(); n];
    let mut tag_seq = 0;
    for _ in 0..rng.gen_range(1..=3 * max_calls) {
        let callsite = rng.gen_range(1..=3u64);
        let bytes = [0u64, 4096, 1 << 20][rng.gen_range(0..3)];
        if rng.gen_bool(0.5) {
            let mut members: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.8)).collect();
            if members.len() < 2 {
                members = (0..n).collect();
            }
            if members.iter().any(|&r| streams[r].len() >= max_calls) {
                continue;
            }
            let op = if bytes == 0 {
                CollectiveOp::Barrier
            } else {
                CollectiveOp::Allreduce
            };
            for &r in &members {
                streams[r].push(MpiPrimitive::collective(op, members.clone(), bytes, callsite));
            }
        } else {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            if streams[a].len() >= max_calls || streams[b].len() >= max_calls {
                continue;
            }
            tag_seq += 1;
            streams[a].push(MpiPrimitive::send(b, tag_seq % 2, bytes, 10 + callsite));
            streams[b].push(MpiPrimitive::recv(a, tag_seq % 2, bytes, 20 + callsite));
        }
    }
    let tasks = streams
        .into_iter()
        .map(|calls| {
            let mut ts: Vec<Task> = calls
                .into_iter()
                .map(|c| {
                    let comp = if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(0.0..4.0) * MS
                    };
                    task(comp, Some(c))
                })
                .collect();
            ts.push(task(rng.gen_range(0.0..1.0) * MS, None));
            ts
        })
        .collect();
    Workload {
        n_ranks: n,
        tasks,
        metadata: WorkloadMeta {
            name: format!("random-{seed}"),
            seed: Some(seed),
        },
    }
}
