mod support;

use slacksim::engine::{run_simulation, SimError};
use slacksim::model::{MachineModel, PhaseKind, SimResult, Workload};
use slacksim::policies::{PolicyKind, PolicySpec, DEFAULT_THETA, FERMATA_THETA};
use slacksim::workloads::{generate, GeneratorSpec, Pattern};

use support::oracle::oracle;
use support::*;

const TOL: f64 = 1e-9;

fn oracle_policies() -> Vec<PolicySpec> {
    vec![
        PolicySpec::baseline(),
        PolicySpec::min_freq(),
        PolicySpec::fermata(FERMATA_THETA),
        PolicySpec::fermata(DEFAULT_THETA),
        PolicySpec::fermata(DEFAULT_THETA).with_hash_cost(0.0),
        PolicySpec::countdown(DEFAULT_THETA),
        PolicySpec::countdown(0.3 * MS),
        PolicySpec::countdown_slack(DEFAULT_THETA),
        PolicySpec::countdown_slack(0.7 * MS).with_barrier_cost(5e-6),
    ]
}

fn assert_matches_oracle(w: &Workload, m: &MachineModel, p: &PolicySpec) {
    let r = run_simulation(w, m, p).unwrap();
    let o = oracle(w, m, p);
    let ctx = format!("{} on {}", p.label(), w.metadata.name);
    assert!(
        (r.makespan - o.makespan).abs() < TOL,
        "{ctx}: makespan {} vs {}",
        r.makespan,
        o.makespan
    );
    for (rr, or) in r.ranks.iter().zip(&o.ranks) {
        for (kind, want) in [
            (PhaseKind::Comp, or.comp),
            (PhaseKind::Slack, or.slack),
            (PhaseKind::Copy, or.copy),
            (PhaseKind::Overhead, or.overhead),
        ] {
            let got = rr.totals.get(kind);
            assert!(
                (got - want).abs() < TOL,
                "{ctx}: rank {} {kind:?} {got} vs {want}",
                rr.rank
            );
        }
        assert!((rr.finish - or.finish).abs() < TOL, "{ctx}: rank {} finish", rr.rank);
        assert!(
            (rr.energy - or.energy).abs() < TOL,
            "{ctx}: rank {} energy {} vs {}",
            rr.rank,
            rr.energy,
            or.energy
        );
    }
    assert!((r.energy - o.energy).abs() < TOL, "{ctx}: energy");
}

#[test]
fn balanced_barrier_example() {
    let m = example_machine();
    let r = run_simulation(&one_barrier(&[10.0 * MS, 10.0 * MS]), &m, &PolicySpec::baseline()).unwrap();
    assert!((r.makespan - 11.0 * MS).abs() < 1e-15);
    assert!(r.ranks.iter().all(|rr| rr.totals.slack == 0.0));
}

#[test]
fn imbalanced_barrier_example() {
    let m = example_machine();
    let w = one_barrier(&[10.0 * MS, 4.0 * MS]);
    let r = run_simulation(&w, &m, &PolicySpec::baseline()).unwrap();
    assert!((r.ranks[1].totals.slack - 6.0 * MS).abs() < 1e-15);
    assert_eq!(r.ranks[0].totals.slack, 0.0);
    assert!((r.makespan - 11.0 * MS).abs() < 1e-15);
}

#[test]
fn imbalanced_countdown_slack_example() {
    let m = example_machine();
    let w = one_barrier(&[10.0 * MS, 4.0 * MS]);
    let p = PolicySpec::countdown_slack(0.5 * MS);
    let r = run_simulation(&w, &m, &p).unwrap();
    let r1 = &r.ranks[1];
    // timer at 4.5 ms lands on a boundary; restore at the 10 ms release
    assert_eq!(r1.frequency_log, [(0.0, 2.3e9), (4.5 * MS, 1.2e9), (10.0 * MS, 2.3e9)]);
    assert!((r1.reduced_time.sum() - 5.5 * MS).abs() < 1e-15);
    assert!((r1.reduced_time.slack - 5.5 * MS).abs() < 1e-15);
    assert_eq!(r.ranks[0].reduced_time.sum(), 0.0);
    for iv in r.timeline().filter(|iv| iv.kind != PhaseKind::Slack) {
        assert!(iv.frequency_profile.iter().all(|&(_, f)| f == 2.3e9), "{iv:?}");
    }
    assert!((r.makespan - 11.0 * MS).abs() < 1e-15);
    // rank 0: 11 ms at 100 W; rank 1: 4.5 ms at 100 W, 5.5 ms at 50 W, 1 ms at 100 W
    let by_hand = 0.011 * 100.0 + (0.0045 * 100.0 + 0.0055 * 50.0 + 0.001 * 100.0);
    assert!((r.energy - by_hand).abs() < 1e-12, "{} vs {by_hand}", r.energy);
    let o = oracle(&w, &m, &p);
    assert!((o.energy - by_hand).abs() < 1e-12);
    assert_matches_oracle(&w, &m, &p);
}

#[test]
fn oracle_equivalence_on_examples() {
    let m = example_machine();
    for comps in [
        [10.0 * MS, 4.0 * MS],
        [4.2 * MS, 9.9 * MS],
        [1.0 * MS, 1.3 * MS],
        [0.0, 7.7 * MS],
    ] {
        let w = one_barrier(&comps);
        for p in oracle_policies() {
            assert_matches_oracle(&w, &m, &p);
        }
    }
}

#[test]
fn oracle_equivalence_on_random_corpus() {
    for seed in 0..150 {
        let w = random_small_workload(seed, 4);
        assert!(w.tasks.iter().all(|s| s.len() <= 5));
        for m in [example_machine(), MachineModel::default()] {
            for p in oracle_policies() {
                assert_matches_oracle(&w, &m, &p);
            }
        }
    }
}

#[test]
fn oracle_equivalence_on_generated_patterns() {
    let m = MachineModel::default();
    for pattern in [
        Pattern::BalancedBarrier,
        Pattern::ImbalancedBarrier,
        Pattern::IrregularAlternating,
        Pattern::P2pRing,
    ] {
        for n in 2..=3 {
            let iters = if pattern == Pattern::P2pRing { 2 } else { 4 };
            let spec = GeneratorSpec::new(pattern, n, iters, 2.0 * MS)
                .with_imbalance(0.6)
                .with_jitter(0.3)
                .with_message_bytes(1 << 16)
                .with_seed(n as u64);
            let w = generate(&spec).unwrap();
            for p in oracle_policies() {
                assert_matches_oracle(&w, &m, &p);
            }
        }
    }
}

fn check_invariants(r: &SimResult, m: &MachineModel, kind: PolicyKind) {
    let f_max = m.pstates.f_max();
    let q = m.pcu_quantum;
    let mut makespan: f64 = 0.0;
    for rr in &r.ranks {
        let sum: f64 = rr.timeline.iter().map(|iv| iv.duration()).sum();
        assert!((sum - rr.finish).abs() < 1e-9, "time conservation on rank {}", rr.rank);
        makespan = makespan.max(rr.finish);
        let mut t = 0.0;
        for iv in &rr.timeline {
            assert!((iv.start - t).abs() < 1e-12, "gap before {iv:?}");
            assert!(iv.end > iv.start);
            t = iv.end;
            assert_eq!(iv.frequency_profile[0].0, iv.start);
            for w in iv.frequency_profile.windows(2) {
                assert!(w[0].0 < w[1].0 && w[1].0 < iv.end);
            }
        }
        for &(at, _) in &rr.frequency_log[1..] {
            let k = (at / q).round();
            assert!((at - k * q).abs() < 1e-9, "change at {at} off the PCU grid");
        }
        let energy: f64 = rr
            .timeline
            .iter()
            .flat_map(|iv| iv.segments())
            .map(|(a, b, f)| (b - a) * m.pstates.get(m.pstates.index_of(f).unwrap()).power)
            .sum();
        assert!((energy - rr.energy).abs() < 1e-9 * rr.energy.max(1.0));
    }
    assert_eq!(makespan, r.makespan);
    match kind {
        PolicyKind::Baseline => {
            assert_eq!(r.transition_count, 0);
            assert!(r.timeline().all(|iv| iv.frequency_profile == [(iv.start, f_max)]));
        }
        PolicyKind::CountdownSlack => {
            // a restore may trail into the next phase by at most one quantum
            for iv in r
                .timeline()
                .filter(|iv| matches!(iv.kind, PhaseKind::Comp | PhaseKind::Copy))
            {
                for (a, _, f) in iv.segments() {
                    assert!(f == f_max || a - iv.start < q + 1e-12, "{iv:?}");
                }
            }
        }
        PolicyKind::Countdown | PolicyKind::Fermata => {
            for iv in r.timeline().filter(|iv| iv.kind == PhaseKind::Comp) {
                for (a, _, f) in iv.segments() {
                    assert!(f == f_max || a - iv.start < q + 1e-12, "{iv:?}");
                }
            }
        }
        _ => {}
    }
}

#[test]
fn engine_invariants_hold() {
    let m = MachineModel::default();
    for pattern in Pattern::ALL {
        let spec = GeneratorSpec::new(pattern, 5, 6, 3.0 * MS)
            .with_imbalance(0.5)
            .with_jitter(0.4)
            .with_message_bytes(1 << 14)
            .with_seed(3);
        let w = generate(&spec).unwrap();
        for p in PolicySpec::comparison_set().into_iter().chain([PolicySpec::baseline()]) {
            let r = run_simulation(&w, &m, &p).unwrap();
            check_invariants(&r, &m, p.kind);
        }
    }
}

#[test]
fn emergent_slack_only_for_early_arrivers() {
    let m = MachineModel::default();
    let w = one_barrier(&[3.0 * MS, 5.0 * MS, 3.0 * MS]);
    let r = run_simulation(&w, &m, &PolicySpec::baseline()).unwrap();
    let slack: Vec<f64> = r.ranks.iter().map(|rr| rr.totals.slack).collect();
    assert!(slack[0] > 0.0 && slack[2] > 0.0);
    assert_eq!(slack[1], 0.0);
    let tie = run_simulation(
        &one_barrier(&[2.0 * MS, 2.0 * MS, 2.0 * MS]),
        &m,
        &PolicySpec::baseline(),
    )
    .unwrap();
    assert!(tie.ranks.iter().all(|rr| rr.totals.slack == 0.0));
}

#[test]
fn deterministic_serialization() {
    let m = MachineModel::default();
    let w = generate(
        &GeneratorSpec::new(Pattern::BspStencil, 4, 5, 1.0 * MS)
            .with_jitter(0.5)
            .with_seed(9),
    )
    .unwrap();
    for p in PolicySpec::comparison_set() {
        let a = serde_json::to_string(&run_simulation(&w, &m, &p).unwrap()).unwrap();
        let b = serde_json::to_string(&run_simulation(&w, &m, &p).unwrap()).unwrap();
        assert_eq!(a, b, "{}", p.label());
    }
}

#[test]
fn deadlock_is_reported() {
    use slacksim::model::MpiPrimitive;
    let w = Workload {
        n_ranks: 2,
        tasks: vec![
            vec![task(1.0 * MS, Some(MpiPrimitive::send(1, 0, 8, 1))), task(0.0, None)],
            vec![task(1.0 * MS, Some(MpiPrimitive::send(0, 0, 8, 1))), task(0.0, None)],
        ],
        metadata: Default::default(),
    };
    match run_simulation(&w, &MachineModel::default(), &PolicySpec::baseline()) {
        Err(SimError::Deadlock(rep)) => assert_eq!(rep.blocked.len(), 2),
        other => panic!("expected deadlock, got {other:?}"),
    }
}

#[test]
fn andante_lowers_comp_on_slack_rank() {
    // rank 1 repeatedly waits 6 ms: Andante learns to stretch its compute
    let m = example_machine();
    let n_iter = 6;
    let tasks = |c: f64| {
        let mut v: Vec<_> = (0..n_iter).map(|_| task(c, Some(barrier(2, 7)))).collect();
        v.push(task(0.0, None));
        v
    };
    let w = Workload {
        n_ranks: 2,
        tasks: vec![tasks(10.0 * MS), tasks(4.0 * MS)],
        metadata: Default::default(),
    };
    let r = run_simulation(&w, &m, &PolicySpec::andante().with_hash_cost(0.0)).unwrap();
    assert!(r.ranks[1].reduced_time.comp > 0.0);
    assert_eq!(r.ranks[0].reduced_time.sum(), 0.0);
    let base = run_simulation(&w, &m, &PolicySpec::baseline()).unwrap();
    assert!(r.energy < base.energy);
}

#[test]
fn timer_coinciding_with_phase_end_never_fires() {
    let m = example_machine();
    // slack ends at 4.5 ms, exactly when the 0.5 ms timer would fire
    let w = one_barrier(&[4.5 * MS, 4.0 * MS]);
    let r = run_simulation(&w, &m, &PolicySpec::countdown_slack(0.5 * MS)).unwrap();
    assert_eq!(r.transition_count, 0);
    // the 1 ms copy ends at 5 ms, exactly when a 1 ms timer would fire
    let w = one_barrier(&[4.0 * MS, 4.0 * MS]);
    let r = run_simulation(&w, &m, &PolicySpec::countdown(1.0 * MS)).unwrap();
    assert_eq!(r.transition_count, 0);
    for p in [PolicySpec::countdown_slack(0.5 * MS), PolicySpec::countdown(1.0 * MS)] {
        assert_matches_oracle(&one_barrier(&[4.5 * MS, 4.0 * MS]), &m, &p);
        assert_matches_oracle(&one_barrier(&[4.0 * MS, 4.0 * MS]), &m, &p);
    }
}

#[test]
fn restore_on_boundary_supersedes_pending_drop() {
    let m = example_machine();
    // timer fires at 4.3 ms, the drop would land at 4.5 ms, release is at 4.5 ms
    let w = one_barrier(&[4.5 * MS, 3.8 * MS]);
    let r = run_simulation(&w, &m, &PolicySpec::countdown_slack(0.5 * MS)).unwrap();
    assert_eq!(r.transition_count, 0);
    assert_matches_oracle(&w, &m, &PolicySpec::countdown_slack(0.5 * MS));
}
