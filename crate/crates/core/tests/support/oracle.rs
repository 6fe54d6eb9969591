//! Brute-force analytic scheduler used as a reference for the engine.
//!
//! It shares no code with the engine: ranks are swept round-robin, each runs
//! until it blocks on a call, and a call completes once every participant is
//! blocked on it. Frequency changes are integrated segment by segment.
//! Covers Baseline, MinFreq, Fermata, Countdown and CountdownSlack.

#![allow(dead_code)]

use std::collections::HashMap;

use slacksim::model::{MachineModel, PrimitiveKind, Workload};
use slacksim::policies::{PolicyKind, PolicySpec};

#[derive(Debug, Clone, Default)]
pub struct OracleRank {
    pub finish: f64,
    pub comp: f64,
    pub slack: f64,
    pub copy: f64,
    pub overhead: f64,
    pub energy: f64,
    /// Effective frequency changes, (time, P-state index).
    pub log: Vec<(f64, usize)>,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub makespan: f64,
    pub energy: f64,
    pub ranks: Vec<OracleRank>,
}

fn boundary(t: f64, q: f64) -> f64 {
    let k = (t / q).round();
    if (t - k * q).abs() <= 1e-12 {
        t
    } else {
        (t / q).ceil() * q
    }
}

#[derive(Debug, Clone)]
struct Dvfs {
    cur: usize,
    pending: Option<(f64, usize)>,
    log: Vec<(f64, usize)>,
    quantum: f64,
}

impl Dvfs {
    fn set(&mut self, t: f64, target: usize) {
        if target != self.cur {
            self.cur = target;
            self.log.push((t, target));
        }
    }

    /// Applies a pending change due strictly before `t`.
    fn settle_before(&mut self, t: f64) {
        if let Some((at, target)) = self.pending {
            if at < t {
                self.pending = None;
                self.set(at, target);
            }
        }
    }

    fn request(&mut self, t: f64, target: usize) {
        self.settle_before(t);
        self.pending = None;
        let eff = boundary(t, self.quantum);
        if eff <= t {
            self.set(t, target);
        } else if target != self.cur {
            self.pending = Some((eff, target));
        }
    }

    /// Executes `work` (seconds at f_max) from `t0` with the per-state
    /// slowdown `factor`, stopping early at `stop`. Returns the end time and
    /// the work left.
    fn run(&mut self, t0: f64, work: f64, factor: &dyn Fn(usize) -> f64, stop: f64) -> (f64, f64) {
        let mut t = t0;
        let mut rem = work;
        loop {
            if let Some((at, target)) = self.pending {
                if at <= t {
                    self.pending = None;
                    self.set(at, target);
                }
            }
            if rem <= 0.0 {
                return (t, 0.0);
            }
            let end = t + rem * factor(self.cur);
            let limit = end.min(stop);
            match self.pending {
                Some((at, _)) if at < limit => {
                    rem -= (at - t) / factor(self.cur);
                    t = at;
                }
                _ => {
                    if end <= stop {
                        return (end, 0.0);
                    }
                    rem -= (stop - t) / factor(self.cur);
                    return (stop, rem.max(0.0));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Coll(Vec<usize>, usize),
    P2p(usize, usize, i32, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Ready,
    Blocked { arrival: f64 },
    Done,
}

pub fn oracle(w: &Workload, m: &MachineModel, p: &PolicySpec) -> OracleResult {
    let table = &m.pstates;
    let (max_i, min_i) = (0usize, table.len() - 1);
    let f_max = table.get(max_i).frequency;
    let freq = |i: usize| table.get(i).frequency;
    let comp_factor = |i: usize| m.beta_comp + (1.0 - m.beta_comp) * f_max / freq(i);
    let copy_factor = |i: usize| m.gamma_copy + (1.0 - m.gamma_copy) * f_max / freq(i);
    let wall = |_: usize| 1.0;
    let theta = p.theta;
    let overhead = match p.kind {
        PolicyKind::Fermata => p.callsite_hash_cost,
        PolicyKind::CountdownSlack => p.barrier_cost,
        _ => 0.0,
    };

    let n = w.n_ranks;
    let mut dvfs: Vec<Dvfs> = (0..n)
        .map(|_| Dvfs {
            cur: max_i,
            pending: None,
            log: vec![(0.0, max_i)],
            quantum: m.pcu_quantum,
        })
        .collect();
    if p.kind == PolicyKind::MinFreq {
        for d in &mut dvfs {
            d.request(0.0, min_i);
        }
    }
    let mut out: Vec<OracleRank> = vec![OracleRank::default(); n];
    let mut pos = vec![0usize; n];
    let mut now = vec![0.0f64; n];
    let mut state = vec![State::Ready; n];
    let mut keys: Vec<Option<Key>> = vec![None; n];
    let mut seq: Vec<HashMap<Key, usize>> = vec![HashMap::new(); n];
    let mut history: HashMap<(usize, u64), f64> = HashMap::new();

    loop {
        for r in 0..n {
            while state[r] == State::Ready {
                let task = &w.tasks[r][pos[r]];
                let t0 = now[r];
                let (t1, _) = dvfs[r].run(t0, task.comp_time_fmax, &comp_factor, f64::INFINITY);
                out[r].comp += t1 - t0;
                now[r] = t1;
                let Some(prim) = &task.mpi else {
                    pos[r] += 1;
                    if pos[r] == w.tasks[r].len() {
                        state[r] = State::Done;
                        out[r].finish = now[r];
                    }
                    continue;
                };
                if overhead > 0.0 {
                    let (t2, _) = dvfs[r].run(now[r], overhead, &wall, f64::INFINITY);
                    out[r].overhead += t2 - now[r];
                    now[r] = t2;
                }
                let base = match &prim.kind {
                    PrimitiveKind::Collective { communicator, .. } => Key::Coll(communicator.clone(), 0),
                    PrimitiveKind::Send { peer, tag } => Key::P2p(r, *peer, *tag, 0),
                    PrimitiveKind::Recv { peer, tag } => Key::P2p(*peer, r, *tag, 0),
                };
                let count = seq[r].entry(base.clone()).or_insert(0);
                let key = match base {
                    Key::Coll(c, _) => Key::Coll(c, *count),
                    Key::P2p(a, b, t, _) => Key::P2p(a, b, t, *count),
                };
                *count += 1;
                keys[r] = Some(key);
                state[r] = State::Blocked { arrival: now[r] };
            }
        }
        if state.iter().all(|s| *s == State::Done) {
            break;
        }
        // complete every call whose participants are all blocked on it
        let mut progressed = false;
        for r in 0..n {
            let Some(key) = keys[r].clone() else { continue };
            let members: Vec<usize> = match &key {
                Key::Coll(c, _) => c.clone(),
                Key::P2p(a, b, _, _) => vec![*a, *b],
            };
            let ready = members
                .iter()
                .all(|&x| matches!(state[x], State::Blocked { .. }) && keys[x].as_ref() == Some(&key));
            if !ready {
                continue;
            }
            let release = members
                .iter()
                .map(|&x| match state[x] {
                    State::Blocked { arrival } => arrival,
                    _ => unreachable!(),
                })
                .fold(f64::NEG_INFINITY, f64::max);
            for &x in &members {
                let State::Blocked { arrival } = state[x] else {
                    unreachable!()
                };
                let prim = w.tasks[x][pos[x]].mpi.as_ref().unwrap();
                let cs = prim.callsite_id;
                let bytes = prim.bytes_sent.max(prim.bytes_recv) as f64;
                let mut copy_base = m.net_latency + bytes / m.net_bandwidth;
                if let PrimitiveKind::Collective { communicator, .. } = &prim.kind {
                    copy_base *= m.collective_scale * (communicator.len() as f64).log2();
                }
                let d = &mut dvfs[x];
                let fire_at = arrival + theta;
                let arms = match p.kind {
                    PolicyKind::Countdown | PolicyKind::CountdownSlack => true,
                    PolicyKind::Fermata => history.get(&(x, cs)).is_some_and(|&tc| tc >= 2.0 * theta),
                    _ => false,
                };
                let mut fired = false;
                let end = match p.kind {
                    PolicyKind::CountdownSlack => {
                        if fire_at < release {
                            fired = true;
                            d.request(fire_at, min_i);
                        }
                        if fired {
                            d.request(release, max_i);
                        }
                        d.run(release, copy_base, &copy_factor, f64::INFINITY).0
                    }
                    PolicyKind::Countdown | PolicyKind::Fermata if arms => {
                        if fire_at < release {
                            fired = true;
                            d.request(fire_at, min_i);
                            d.run(release, copy_base, &copy_factor, f64::INFINITY).0
                        } else {
                            let (t, rem) = d.run(release, copy_base, &copy_factor, fire_at);
                            if rem > 0.0 {
                                fired = true;
                                d.request(fire_at, min_i);
                                d.run(fire_at, rem, &copy_factor, f64::INFINITY).0
                            } else {
                                t
                            }
                        }
                    }
                    _ => d.run(release, copy_base, &copy_factor, f64::INFINITY).0,
                };
                if fired && p.kind != PolicyKind::CountdownSlack {
                    d.request(end, max_i);
                }
                if p.kind == PolicyKind::Fermata {
                    history.insert((x, cs), end - arrival);
                }
                out[x].slack += release - arrival;
                out[x].copy += end - release;
                now[x] = end;
                pos[x] += 1;
                keys[x] = None;
                state[x] = State::Ready;
            }
            progressed = true;
        }
        assert!(progressed, "oracle: workload deadlocks");
    }

    let mut energy = 0.0;
    let mut makespan: f64 = 0.0;
    for (r, o) in out.iter_mut().enumerate() {
        let log = &dvfs[r].log;
        o.energy = log
            .iter()
            .enumerate()
            .map(|(i, &(t, s))| {
                let end = log.get(i + 1).map_or(o.finish, |&(t2, _)| t2).min(o.finish);
                (end - t).max(0.0) * table.get(s).power
            })
            .sum();
        o.log = log.clone();
        energy += o.energy;
        makespan = makespan.max(o.finish);
    }
    OracleResult {
        makespan,
        energy,
        ranks: out,
    }
}
