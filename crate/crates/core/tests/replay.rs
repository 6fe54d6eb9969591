mod support;

use std::collections::HashMap;

use proptest::prelude::*;

use slacksim::analysis::{coverage_row, coverage_table};
use slacksim::engine::{replay_trace, run_simulation, ReplayError};
use slacksim::model::{MachineModel, TraceRecord};
use slacksim::policies::{PolicyKind, PolicySpec, DEFAULT_THETA, FERMATA_THETA};
use slacksim::workloads::{export_trace_from_sim, generate, GeneratorSpec, Pattern};

const THETA: f64 = DEFAULT_THETA;

fn rec(rank: usize, callsite: u64, t_comp: f64, t_slack: f64, t_copy: f64) -> TraceRecord {
    TraceRecord {
        rank,
        mpi_type: "MPI_Barrier".into(),
        bytes_recv: 0,
        bytes_sent: 0,
        n_procs: 4,
        locality: 1.0,
        callsite_id: callsite,
        t_comp,
        t_slack,
        t_copy,
    }
}

fn boundary(t: f64, q: f64) -> f64 {
    let k = (t / q).round();
    if (t - k * q).abs() <= 1e-12 {
        t
    } else {
        (t / q).ceil() * q
    }
}

/// Reduced time computed region by region: a drop requested at entry + θ
/// lands on the next PCU boundary and lasts until the region ends.
fn reference_reduced(records: &[TraceRecord], p: &PolicySpec, q: f64) -> f64 {
    let mut clock: HashMap<usize, f64> = HashMap::new();
    let mut last_comm: HashMap<(usize, u64), f64> = HashMap::new();
    let mut reduced = 0.0;
    for r in records {
        let now = clock.entry(r.rank).or_insert(0.0);
        let start = *now + r.t_comp;
        let (armed, end) = match p.kind {
            PolicyKind::Countdown => (true, start + r.t_comm()),
            PolicyKind::CountdownSlack => (true, start + r.t_slack),
            PolicyKind::Fermata => (
                last_comm
                    .get(&(r.rank, r.callsite_id))
                    .is_some_and(|&c| c >= 2.0 * p.theta),
                start + r.t_comm(),
            ),
            PolicyKind::MinFreq => (false, 0.0),
            _ => (false, start),
        };
        if armed && start + p.theta < end {
            let eff = boundary(start + p.theta, q);
            reduced += (end - eff).max(0.0);
        }
        last_comm.insert((r.rank, r.callsite_id), r.t_comm());
        *now = start + r.t_comm();
    }
    if p.kind == PolicyKind::MinFreq {
        // drop requested at t = 0, which is a boundary
        reduced = records.iter().map(TraceRecord::total).sum();
    }
    reduced
}

#[test]
fn short_regions_give_zero_coverage() {
    let recs: Vec<_> = (0..20)
        .map(|i| rec(i % 3, 1 + i as u64 % 2, 1e-3, 2e-4, 1e-4))
        .collect();
    for p in PolicySpec::coverage_set() {
        let c = replay_trace(&recs, &p, &MachineModel::default()).unwrap();
        assert_eq!(c.coverage_pct, 0.0, "{}", p.label());
    }
}

#[test]
fn single_long_slack_loses_one_theta() {
    let r = rec(0, 1, 0.0, 10.0 * THETA, 0.0);
    let c = replay_trace(
        std::slice::from_ref(&r),
        &PolicySpec::countdown_slack(THETA),
        &MachineModel::default(),
    )
    .unwrap();
    assert!((c.reduced_time - 9.0 * THETA).abs() < 1e-15);
    assert!((c.coverage_pct - 90.0).abs() < 1e-9);
}

#[test]
fn andante_and_adagio_have_no_open_loop_replay() {
    let recs = [rec(0, 1, 1e-3, 1e-3, 0.0)];
    for p in [PolicySpec::andante(), PolicySpec::adagio(THETA)] {
        assert!(matches!(
            replay_trace(&recs, &p, &MachineModel::default()),
            Err(ReplayError::Unsupported(_))
        ));
    }
}

#[test]
fn copy_rich_trace_separates_countdown_variants() {
    // all time in copy: Countdown reduces, the slack variant cannot
    let recs: Vec<_> = (0..10).map(|_| rec(0, 1, 1e-3, 0.0, 10e-3)).collect();
    let row = coverage_row("copy", &recs, &PolicySpec::coverage_set(), &MachineModel::default()).unwrap();
    assert!(row.get("CNTD").unwrap() > 80.0);
    assert_eq!(row.get("CNTD_Slack").unwrap(), 0.0);
    assert_eq!(row.tslack_pct, 0.0);
    row.check_ceilings().unwrap();
}

#[test]
fn replay_matches_reference_on_exported_traces() {
    let m = MachineModel::default();
    for pattern in Pattern::ALL {
        let spec = GeneratorSpec::new(pattern, 4, 6, 3e-3)
            .with_imbalance(0.6)
            .with_jitter(0.2)
            .with_message_bytes(1 << 20)
            .with_seed(3);
        let w = generate(&spec).unwrap();
        let sim = run_simulation(&w, &m, &PolicySpec::baseline()).unwrap();
        let recs = export_trace_from_sim(&sim, &w, 36);
        let mut policies = PolicySpec::coverage_set();
        policies.push(PolicySpec::min_freq());
        policies.push(PolicySpec::baseline());
        for p in &policies {
            let got = replay_trace(&recs, p, &m).unwrap().reduced_time;
            let want = reference_reduced(&recs, p, m.pcu_quantum);
            assert!((got - want).abs() < 1e-12, "{pattern:?} {}: {got} vs {want}", p.label());
        }
        let row = coverage_row(pattern.name(), &recs, &PolicySpec::coverage_set(), &m).unwrap();
        row.check_ceilings().unwrap();
    }
}

#[test]
fn coverage_table_keeps_application_order() {
    let m = MachineModel::default();
    let traces = vec![
        ("b".to_string(), vec![rec(0, 1, 0.0, 5e-3, 0.0)]),
        ("a".to_string(), vec![rec(0, 1, 1e-3, 0.0, 5e-3)]),
    ];
    let rows = coverage_table(&traces, &PolicySpec::coverage_set(), &m).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.application.as_str()).collect::<Vec<_>>(),
        ["b", "a"]
    );
    assert!(coverage_table(&[("e".into(), vec![])], &PolicySpec::coverage_set(), &m).is_err());
}

fn duration() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        0.0..THETA,
        THETA..4.0 * THETA,
        (0u32..40).prop_map(|k| k as f64 * 0.25e-3),
        1e-3..0.3,
    ]
}

fn trace() -> impl Strategy<Value = Vec<TraceRecord>> {
    prop::collection::vec((0usize..3, 1u64..4, duration(), duration(), duration()), 1..40)
        .prop_map(|v| v.into_iter().map(|(r, cs, a, b, c)| rec(r, cs, a, b, c)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn replay_agrees_with_reference(recs in trace()) {
        let m = MachineModel::default();
        for p in [
            PolicySpec::fermata(FERMATA_THETA),
            PolicySpec::fermata(THETA),
            PolicySpec::countdown(THETA),
            PolicySpec::countdown_slack(THETA),
            PolicySpec::min_freq(),
        ] {
            let got = replay_trace(&recs, &p, &m).unwrap().reduced_time;
            let want = reference_reduced(&recs, &p, m.pcu_quantum);
            prop_assert!((got - want).abs() < 1e-12, "{}: {} vs {}", p.label(), got, want);
        }
    }

    #[test]
    fn coverage_ordering_and_ceilings(recs in trace()) {
        let m = MachineModel::default();
        let row = coverage_row("p", &recs, &PolicySpec::coverage_set(), &m).unwrap();
        let tol = 1e-9;
        let f100 = row.get("Fermata_100ms").unwrap();
        let f500 = row.get("Fermata_500us").unwrap();
        let cntd = row.get("CNTD").unwrap();
        let slack = row.get("CNTD_Slack").unwrap();
        prop_assert!(f100 <= f500 + tol);
        prop_assert!(f500 <= cntd + tol);
        prop_assert!(cntd <= row.tcomm_pct + tol);
        prop_assert!(slack <= row.tslack_pct + tol);
        prop_assert!(row.check_ceilings().is_ok());
    }
}
