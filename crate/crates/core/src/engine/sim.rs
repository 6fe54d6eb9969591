use std::collections::BTreeMap;

use crate::model::{
    MachineModel, MpiPrimitive, PhaseInterval, PhaseKind, PhaseTotals, PrimitiveKind, RankResult, Seconds, SimResult,
    Workload,
};
use crate::policies::{HookResponse, PolicyHooks, PolicySpec, TaskObservation, TimerCommand};

use super::queue::EventQueue;
use super::{integrate_energy, pcu_effective_time, validate_workload, SimError};

// Same-timestamp ordering: rank progress first, then timers, then PCU
// boundaries. A slack exit therefore beats a coincident timer, and a request
// issued on a boundary supersedes a pending request due at that boundary.
const PRIO_PHASE: u8 = 0;
const PRIO_TIMER: u8 = 1;
const PRIO_PCU: u8 = 2;

#[derive(Debug, Clone, Copy)]
enum Event {
    PhaseEnd { rank: usize, gen: u64 },
    Timer { rank: usize, gen: u64 },
    Pcu { rank: usize, gen: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Idle,
    /// Comp, Copy or Overhead: `remaining` is work left, in seconds at f_max
    /// for Comp/Copy and wall seconds for Overhead.
    Work {
        kind: PhaseKind,
        start: Seconds,
        remaining: f64,
        last: Seconds,
    },
    Slack {
        start: Seconds,
    },
    Done,
}

#[derive(Debug, Clone, Copy, Default)]
struct TaskMeasure {
    t_comp: Seconds,
    comp_constant_freq: Option<usize>,
    t_slack: Seconds,
    t_copy: Seconds,
}

#[derive(Debug)]
struct RankState {
    task: usize,
    phase: Phase,
    phase_gen: u64,
    freq: usize,
    /// Requested P-state waiting for the next PCU boundary.
    pending: Option<usize>,
    pcu_gen: u64,
    timer_gen: u64,
    timer_armed: bool,
    /// Effective changes as (time, P-state index), starting at t = 0.
    log: Vec<(Seconds, usize)>,
    intervals: Vec<PhaseInterval>,
    coll_seq: BTreeMap<Vec<usize>, usize>,
    p2p_seq: BTreeMap<(usize, usize, i32), usize>,
    opening_callsite: Option<u64>,
    measure: TaskMeasure,
    finish: Option<Seconds>,
}

impl RankState {
    fn new(initial_freq: usize) -> Self {
        Self {
            task: 0,
            phase: Phase::Idle,
            phase_gen: 0,
            freq: initial_freq,
            pending: None,
            pcu_gen: 0,
            timer_gen: 0,
            timer_armed: false,
            log: vec![(0.0, initial_freq)],
            intervals: Vec::new(),
            coll_seq: BTreeMap::new(),
            p2p_seq: BTreeMap::new(),
            opening_callsite: None,
            measure: TaskMeasure::default(),
            finish: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SyncKey {
    Collective {
        members: Vec<usize>,
        seq: usize,
    },
    P2p {
        src: usize,
        dst: usize,
        tag: i32,
        seq: usize,
    },
}

#[derive(Debug, Default)]
struct SyncGroup {
    expected: usize,
    arrivals: Vec<(usize, Seconds)>,
}

struct Engine<'a> {
    w: &'a Workload,
    m: &'a MachineModel,
    policy: Box<dyn PolicyHooks>,
    label: String,
    isolate: bool,
    overhead: Seconds,
    queue: EventQueue<Event>,
    ranks: Vec<RankState>,
    groups: BTreeMap<SyncKey, SyncGroup>,
}

/// Runs the closed-loop simulation of `w` on `m` under `p`.
pub fn run_simulation(w: &Workload, m: &MachineModel, p: &PolicySpec) -> Result<SimResult, SimError> {
    p.validate().map_err(SimError::InvalidPolicy)?;
    run_with_hooks(w, m, p.build(&m.pstates), p.label())
}

/// Runs the simulation with caller-supplied hooks.
pub fn run_with_hooks(
    w: &Workload,
    m: &MachineModel,
    hooks: Box<dyn PolicyHooks>,
    label: impl Into<String>,
) -> Result<SimResult, SimError> {
    m.validate()?;
    validate_workload(w)?;
    let overhead = hooks.call_overhead();
    if !(overhead >= 0.0 && overhead.is_finite()) {
        return Err(SimError::InvalidPolicy(format!(
            "call overhead must be >= 0, got {overhead}"
        )));
    }
    let mut engine = Engine {
        w,
        m,
        isolate: hooks.isolates_slack(),
        overhead,
        policy: hooks,
        label: label.into(),
        queue: EventQueue::new(),
        ranks: (0..w.n_ranks).map(|_| RankState::new(m.pstates.max_index())).collect(),
        groups: BTreeMap::new(),
    };
    engine.run()?;
    Ok(engine.finish())
}

impl Engine<'_> {
    fn run(&mut self) -> Result<(), SimError> {
        for r in 0..self.w.n_ranks {
            let resp = self.policy.on_start(r, 0.0);
            self.apply(r, 0.0, resp)?;
        }
        for r in 0..self.w.n_ranks {
            self.start_task(r, 0.0)?;
        }
        while let Some((now, ev)) = self.queue.pop() {
            match ev {
                Event::PhaseEnd { rank, gen } => {
                    if self.ranks[rank].phase_gen == gen {
                        self.phase_end(rank, now)?;
                    }
                }
                Event::Timer { rank, gen } => {
                    let rs = &mut self.ranks[rank];
                    if rs.timer_armed && rs.timer_gen == gen && rs.finish.is_none() {
                        rs.timer_armed = false;
                        let resp = self.policy.on_timer_fire(rank, now);
                        self.apply(rank, now, resp)?;
                    }
                }
                Event::Pcu { rank, gen } => {
                    let rs = &self.ranks[rank];
                    if rs.pcu_gen == gen && rs.finish.is_none() {
                        if let Some(target) = self.ranks[rank].pending.take() {
                            self.set_frequency(rank, now, target);
                        }
                    }
                }
            }
        }
        let stuck: Vec<_> = self
            .ranks
            .iter()
            .enumerate()
            .filter(|(_, r)| r.finish.is_none())
            .map(|(i, r)| (i, r.task))
            .collect();
        if stuck.is_empty() {
            Ok(())
        } else {
            Err(SimError::Stalled(format!("ranks never finished: {stuck:?}")))
        }
    }

    fn prim(&self, rank: usize) -> &MpiPrimitive {
        self.w.tasks[rank][self.ranks[rank].task]
            .mpi
            .as_ref()
            .expect("phase past compute implies an MPI call")
    }

    fn apply(&mut self, rank: usize, now: Seconds, resp: HookResponse) -> Result<(), SimError> {
        match resp.timer {
            TimerCommand::Keep => {}
            TimerCommand::Arm(delay) => {
                if !(delay >= 0.0 && delay.is_finite()) {
                    return Err(SimError::InvalidPolicy(format!("timer delay {delay}")));
                }
                let rs = &mut self.ranks[rank];
                rs.timer_gen += 1;
                rs.timer_armed = true;
                let gen = rs.timer_gen;
                self.queue
                    .push_with_priority(now + delay, PRIO_TIMER, Event::Timer { rank, gen });
            }
            TimerCommand::Cancel => {
                let rs = &mut self.ranks[rank];
                rs.timer_gen += 1;
                rs.timer_armed = false;
            }
        }
        if let Some(f) = resp.request {
            let target = self
                .m
                .pstates
                .index_of(f)
                .ok_or(SimError::FrequencyNotInTable { rank, frequency: f })?;
            self.request(rank, now, target);
        }
        Ok(())
    }

    fn request(&mut self, rank: usize, now: Seconds, target: usize) {
        let t_eff = pcu_effective_time(now, self.m.pcu_quantum);
        let rs = &mut self.ranks[rank];
        rs.pcu_gen += 1;
        rs.pending = None;
        if t_eff <= now {
            self.set_frequency(rank, now, target);
        } else if target != rs.freq {
            rs.pending = Some(target);
            let gen = rs.pcu_gen;
            self.queue.push_with_priority(t_eff, PRIO_PCU, Event::Pcu { rank, gen });
        }
    }

    fn work_factor(&self, kind: PhaseKind, freq: usize) -> f64 {
        let f = self.m.pstates.get(freq).frequency;
        match kind {
            PhaseKind::Comp => self.m.comp_factor(f),
            PhaseKind::Copy => self.m.copy_factor(f),
            _ => 1.0,
        }
    }

    fn set_frequency(&mut self, rank: usize, now: Seconds, target: usize) {
        let old = self.ranks[rank].freq;
        if old == target {
            return;
        }
        if let Phase::Work {
            kind,
            start,
            remaining,
            last,
        } = self.ranks[rank].phase
        {
            let done = (now - last) / self.work_factor(kind, old);
            let remaining = (remaining - done).max(0.0);
            let end = now + remaining * self.work_factor(kind, target);
            let rs = &mut self.ranks[rank];
            rs.phase = Phase::Work {
                kind,
                start,
                remaining,
                last: now,
            };
            rs.phase_gen += 1;
            let gen = rs.phase_gen;
            self.queue
                .push_with_priority(end, PRIO_PHASE, Event::PhaseEnd { rank, gen });
        }
        let rs = &mut self.ranks[rank];
        rs.freq = target;
        rs.log.push((now, target));
    }

    fn begin_work(&mut self, rank: usize, now: Seconds, kind: PhaseKind, work: f64) {
        let end = now + work * self.work_factor(kind, self.ranks[rank].freq);
        let rs = &mut self.ranks[rank];
        rs.phase = Phase::Work {
            kind,
            start: now,
            remaining: work,
            last: now,
        };
        rs.phase_gen += 1;
        let gen = rs.phase_gen;
        self.queue
            .push_with_priority(end, PRIO_PHASE, Event::PhaseEnd { rank, gen });
    }

    fn close_interval(&mut self, rank: usize, kind: PhaseKind, start: Seconds, end: Seconds) {
        if end <= start {
            return;
        }
        let rs = &self.ranks[rank];
        let first = rs.log.partition_point(|&(t, _)| t <= start).saturating_sub(1);
        let table = &self.m.pstates;
        let mut profile = vec![(start, table.get(rs.log[first].1).frequency)];
        profile.extend(
            rs.log[first + 1..]
                .iter()
                .take_while(|&&(t, _)| t < end)
                .map(|&(t, idx)| (t, table.get(idx).frequency)),
        );
        let interval = PhaseInterval {
            rank,
            task: rs.task,
            kind,
            start,
            end,
            frequency_profile: profile,
        };
        self.ranks[rank].intervals.push(interval);
    }

    fn start_task(&mut self, rank: usize, now: Seconds) -> Result<(), SimError> {
        let rs = &mut self.ranks[rank];
        if rs.task >= self.w.tasks[rank].len() {
            rs.phase = Phase::Done;
            rs.finish = Some(now);
            rs.pending = None;
            rs.timer_armed = false;
            return Ok(());
        }
        rs.measure = TaskMeasure::default();
        let opening = rs.opening_callsite;
        let resp = self.policy.on_comp_enter(rank, opening, now);
        self.apply(rank, now, resp)?;
        let work = self.w.tasks[rank][self.ranks[rank].task].comp_time_fmax;
        self.begin_work(rank, now, PhaseKind::Comp, work);
        Ok(())
    }

    fn phase_end(&mut self, rank: usize, now: Seconds) -> Result<(), SimError> {
        let Phase::Work { kind, start, .. } = self.ranks[rank].phase else {
            return Ok(());
        };
        self.close_interval(rank, kind, start, now);
        self.ranks[rank].phase = Phase::Idle;
        match kind {
            PhaseKind::Comp => {
                let constant = self.ranks[rank]
                    .intervals
                    .last()
                    .filter(|iv| iv.kind == PhaseKind::Comp && iv.start == start)
                    .and_then(|iv| (iv.frequency_profile.len() == 1).then_some(iv.frequency_profile[0].1))
                    .and_then(|f| self.m.pstates.index_of(f));
                let rs = &mut self.ranks[rank];
                rs.measure.t_comp = now - start;
                rs.measure.comp_constant_freq = constant;
                if self.w.tasks[rank][rs.task].mpi.is_none() {
                    rs.task += 1;
                    return self.start_task(rank, now);
                }
                if self.overhead > 0.0 {
                    self.begin_work(rank, now, PhaseKind::Overhead, self.overhead);
                    Ok(())
                } else {
                    self.arrive(rank, now)
                }
            }
            PhaseKind::Overhead => self.arrive(rank, now),
            PhaseKind::Copy => self.comm_exit(rank, now, now - start),
            PhaseKind::Slack => unreachable!("slack is not a work phase"),
        }
    }

    fn sync_key(&mut self, rank: usize) -> (SyncKey, usize) {
        let prim = self.prim(rank).clone();
        let rs = &mut self.ranks[rank];
        match prim.kind {
            PrimitiveKind::Collective { communicator, .. } => {
                let seq = rs.coll_seq.entry(communicator.clone()).or_default();
                let key = SyncKey::Collective {
                    members: communicator.clone(),
                    seq: *seq,
                };
                *seq += 1;
                (key, communicator.len())
            }
            PrimitiveKind::Send { peer, tag } => {
                let seq = rs.p2p_seq.entry((rank, peer, tag)).or_default();
                let key = SyncKey::P2p {
                    src: rank,
                    dst: peer,
                    tag,
                    seq: *seq,
                };
                *seq += 1;
                (key, 2)
            }
            PrimitiveKind::Recv { peer, tag } => {
                let seq = rs.p2p_seq.entry((peer, rank, tag)).or_default();
                let key = SyncKey::P2p {
                    src: peer,
                    dst: rank,
                    tag,
                    seq: *seq,
                };
                *seq += 1;
                (key, 2)
            }
        }
    }

    fn arrive(&mut self, rank: usize, now: Seconds) -> Result<(), SimError> {
        let callsite = self.prim(rank).callsite_id;
        let resp = self.policy.on_comm_enter(rank, callsite, now);
        self.apply(rank, now, resp)?;
        if self.isolate {
            let resp = self.policy.on_slack_enter(rank, callsite, now);
            self.apply(rank, now, resp)?;
        }
        self.ranks[rank].phase = Phase::Slack { start: now };

        let (key, expected) = self.sync_key(rank);
        let group = self.groups.entry(key.clone()).or_default();
        group.expected = expected;
        group.arrivals.push((rank, now));
        if group.arrivals.len() < expected {
            return Ok(());
        }
        let mut group = self.groups.remove(&key).expect("group present");
        group.arrivals.sort_by_key(|&(r, _)| r);
        let release = group.arrivals.iter().map(|&(_, t)| t).fold(f64::NEG_INFINITY, f64::max);
        for (member, _) in group.arrivals {
            self.release(member, release)?;
        }
        Ok(())
    }

    fn release(&mut self, rank: usize, now: Seconds) -> Result<(), SimError> {
        let Phase::Slack { start } = self.ranks[rank].phase else {
            return Err(SimError::Stalled(format!("rank {rank} released outside slack")));
        };
        self.close_interval(rank, PhaseKind::Slack, start, now);
        self.ranks[rank].measure.t_slack = now - start;
        let callsite = self.prim(rank).callsite_id;
        if self.isolate {
            let resp = self.policy.on_slack_exit(rank, callsite, now);
            self.apply(rank, now, resp)?;
        }
        let resp = self.policy.on_copy_enter(rank, callsite, now);
        self.apply(rank, now, resp)?;
        let base = self.m.copy_base(self.prim(rank));
        self.begin_work(rank, now, PhaseKind::Copy, base);
        Ok(())
    }

    fn comm_exit(&mut self, rank: usize, now: Seconds, t_copy: Seconds) -> Result<(), SimError> {
        self.ranks[rank].measure.t_copy = t_copy;
        let prim = self.prim(rank);
        let callsite = prim.callsite_id;
        let resp = self.policy.on_copy_exit(rank, callsite, now);
        self.apply(rank, now, resp)?;
        let rs = &self.ranks[rank];
        let task = &self.w.tasks[rank][rs.task];
        let obs = TaskObservation {
            callsite_id: callsite,
            t_comp: rs.measure.t_comp,
            t_slack: rs.measure.t_slack,
            t_copy,
            instructions: task.instructions,
            comp_frequency: rs.measure.comp_constant_freq.map(|i| self.m.pstates.get(i).frequency),
        };
        let resp = self.policy.on_comm_exit(rank, &obs, now);
        self.apply(rank, now, resp)?;
        let rs = &mut self.ranks[rank];
        rs.opening_callsite = Some(callsite);
        rs.task += 1;
        self.start_task(rank, now)
    }

    fn finish(self) -> SimResult {
        let table = &self.m.pstates;
        let f_max = table.f_max();
        let mut totals = PhaseTotals::default();
        let mut reduced = PhaseTotals::default();
        let mut energy = 0.0;
        let mut transitions = 0;
        let mut makespan: f64 = 0.0;
        let ranks: Vec<RankResult> = self
            .ranks
            .into_iter()
            .enumerate()
            .map(|(rank, rs)| {
                let finish = rs.finish.unwrap_or(0.0);
                let mut rank_totals = PhaseTotals::default();
                let mut rank_reduced = PhaseTotals::default();
                for iv in &rs.intervals {
                    rank_totals.add(iv.kind, iv.duration());
                    rank_reduced.add(iv.kind, iv.reduced_time(f_max));
                }
                let frequency_log: Vec<(Seconds, f64)> =
                    rs.log.iter().map(|&(t, i)| (t, table.get(i).frequency)).collect();
                let rank_energy = integrate_energy(&frequency_log, finish, table);
                totals.merge(&rank_totals);
                reduced.merge(&rank_reduced);
                energy += rank_energy;
                transitions += frequency_log.len() - 1;
                makespan = makespan.max(finish);
                RankResult {
                    rank,
                    finish,
                    timeline: rs.intervals,
                    totals: rank_totals,
                    energy: rank_energy,
                    reduced_time: rank_reduced,
                    transitions: frequency_log.len() - 1,
                    frequency_log,
                }
            })
            .collect();
        SimResult {
            policy: self.label,
            makespan,
            ranks,
            totals,
            energy,
            reduced_time: reduced,
            transition_count: transitions,
        }
    }
}
