//! DVFS runtime policies expressed as engine hooks.
//!
//! Every policy reacts to the same small set of events (compute entry, MPI
//! entry and exit, isolated slack entry and exit, timer expiry) and answers
//! with a [`HookResponse`]: an optional frequency request plus an optional
//! timer command. The engine owns timing; policies own their own state.

mod andante;
mod history;
mod timeout;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{Hz, PStateTable, Seconds};

pub use andante::{andante_select_frequency, AndantePolicy};
pub use history::{CallsiteHistory, CallsiteRecord};
pub use timeout::{fermata_decide, CountdownPolicy, CountdownSlackPolicy, FermataDecision, FermataPolicy};

/// Callsite key used for the first task of every rank, which no MPI call opens.
pub const PROGRAM_START: u64 = u64::MAX;

/// Default timeout for every policy except Fermata.
pub const DEFAULT_THETA: Seconds = 500e-6;
/// Fermata's original empirical switching threshold.
pub const FERMATA_THETA: Seconds = 100e-3;
/// Default per-call cost of hashing the call stack.
pub const DEFAULT_CALLSITE_HASH_COST: Seconds = 2e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TimerCommand {
    #[default]
    Keep,
    /// Arm the rank's one-shot timer to fire after the given delay,
    /// replacing any armed timer.
    Arm(Seconds),
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HookResponse {
    pub request: Option<Hz>,
    pub timer: TimerCommand,
}

impl HookResponse {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn request(f: Hz) -> Self {
        Self {
            request: Some(f),
            timer: TimerCommand::Keep,
        }
    }

    pub fn arm(delay: Seconds) -> Self {
        Self {
            request: None,
            timer: TimerCommand::Arm(delay),
        }
    }

    pub fn cancel() -> Self {
        Self {
            request: None,
            timer: TimerCommand::Cancel,
        }
    }

    pub fn with_request(mut self, f: Option<Hz>) -> Self {
        if f.is_some() {
            self.request = f;
        }
        self
    }
}

/// What a rank observed over one task, delivered at MPI exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskObservation {
    pub callsite_id: u64,
    pub t_comp: Seconds,
    pub t_slack: Seconds,
    pub t_copy: Seconds,
    pub instructions: u64,
    /// Frequency of the compute region if it ran at a single frequency.
    pub comp_frequency: Option<Hz>,
}

impl TaskObservation {
    pub fn t_comm(&self) -> Seconds {
        self.t_slack + self.t_copy
    }
}

/// Callbacks the engine (or the trace replayer) invokes on a policy.
///
/// Defaults are no-ops so each policy only overrides what it reacts to.
pub trait PolicyHooks: Send {
    /// Whether the engine should isolate slack with an artificial barrier and
    /// deliver the slack hooks.
    fn isolates_slack(&self) -> bool {
        false
    }

    /// Fixed time charged as an overhead interval before every MPI call.
    fn call_overhead(&self) -> Seconds {
        0.0
    }

    fn on_start(&mut self, _rank: usize, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    /// `opening_callsite` is the callsite of the MPI call that ended the
    /// previous task, `None` for a rank's first task.
    fn on_comp_enter(&mut self, _rank: usize, _opening_callsite: Option<u64>, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_comm_enter(&mut self, _rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_slack_enter(&mut self, _rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_slack_exit(&mut self, _rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_copy_enter(&mut self, _rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_copy_exit(&mut self, _rank: usize, _callsite: u64, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_comm_exit(&mut self, _rank: usize, _obs: &TaskObservation, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }

    fn on_timer_fire(&mut self, _rank: usize, _now: Seconds) -> HookResponse {
        HookResponse::none()
    }
}

/// Stays at f_max.
#[derive(Debug, Default)]
pub struct BaselinePolicy;

impl PolicyHooks for BaselinePolicy {}

/// Drops every rank to f_min at t = 0.
#[derive(Debug)]
pub struct MinFreqPolicy {
    f_min: Hz,
}

impl PolicyHooks for MinFreqPolicy {
    fn on_start(&mut self, _rank: usize, _now: Seconds) -> HookResponse {
        HookResponse::request(self.f_min)
    }
}

pub fn baseline_hooks() -> Box<dyn PolicyHooks> {
    Box::new(BaselinePolicy)
}

pub fn minfreq_hooks(pstates: &PStateTable) -> Box<dyn PolicyHooks> {
    Box::new(MinFreqPolicy { f_min: pstates.f_min() })
}

pub fn countdown_hooks(theta: Seconds, pstates: &PStateTable) -> Box<dyn PolicyHooks> {
    Box::new(CountdownPolicy::new(theta, pstates))
}

pub fn countdown_slack_hooks(theta: Seconds, barrier_cost: Seconds, pstates: &PStateTable) -> Box<dyn PolicyHooks> {
    Box::new(CountdownSlackPolicy::new(theta, barrier_cost, pstates))
}

pub fn fermata_hooks(theta: Seconds, hash_cost: Seconds, pstates: &PStateTable) -> Box<dyn PolicyHooks> {
    Box::new(FermataPolicy::new(theta, hash_cost, pstates))
}

pub fn andante_hooks(hash_cost: Seconds, barrier_cost: Seconds, pstates: &PStateTable) -> Box<dyn PolicyHooks> {
    Box::new(AndantePolicy::andante(hash_cost, barrier_cost, pstates))
}

/// Andante on compute regions plus a Fermata timer restricted to isolated
/// slack.
pub fn adagio_hooks(
    theta: Seconds,
    hash_cost: Seconds,
    barrier_cost: Seconds,
    pstates: &PStateTable,
) -> Box<dyn PolicyHooks> {
    Box::new(AndantePolicy::adagio(theta, hash_cost, barrier_cost, pstates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Baseline,
    MinFreq,
    Fermata,
    Andante,
    Adagio,
    Countdown,
    CountdownSlack,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Baseline,
        PolicyKind::MinFreq,
        PolicyKind::Fermata,
        PolicyKind::Andante,
        PolicyKind::Adagio,
        PolicyKind::Countdown,
        PolicyKind::CountdownSlack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::MinFreq => "min-freq",
            PolicyKind::Fermata => "fermata",
            PolicyKind::Andante => "andante",
            PolicyKind::Adagio => "adagio",
            PolicyKind::Countdown => "countdown",
            PolicyKind::CountdownSlack => "countdown-slack",
        }
    }

    pub fn default_theta(self) -> Seconds {
        match self {
            PolicyKind::Fermata => FERMATA_THETA,
            _ => DEFAULT_THETA,
        }
    }

    /// Policies that hash the call stack to recognise callsites.
    pub fn identifies_callsites(self) -> bool {
        matches!(self, PolicyKind::Fermata | PolicyKind::Andante | PolicyKind::Adagio)
    }

    pub fn isolates_slack(self) -> bool {
        matches!(
            self,
            PolicyKind::CountdownSlack | PolicyKind::Andante | PolicyKind::Adagio
        )
    }

    /// Reactive policies whose only action is a timeout-gated drop to f_min.
    pub fn is_timeout_policy(self) -> bool {
        matches!(
            self,
            PolicyKind::Fermata | PolicyKind::Countdown | PolicyKind::CountdownSlack
        )
    }

    fn short_label(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "Baseline",
            PolicyKind::MinFreq => "MinFreq",
            PolicyKind::Fermata => "Fermata",
            PolicyKind::Andante => "Andante",
            PolicyKind::Adagio => "Adagio",
            PolicyKind::Countdown => "CNTD",
            PolicyKind::CountdownSlack => "CNTD_Slack",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPolicy(pub String);

impl fmt::Display for UnknownPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown policy '{}' (expected one of: baseline, min-freq, fermata, andante, adagio, countdown, countdown-slack)",
            self.0
        )
    }
}

impl std::error::Error for UnknownPolicy {}

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        Ok(match norm.as_str() {
            "baseline" => PolicyKind::Baseline,
            "minfreq" => PolicyKind::MinFreq,
            "fermata" => PolicyKind::Fermata,
            "andante" => PolicyKind::Andante,
            "adagio" => PolicyKind::Adagio,
            "countdown" | "cntd" => PolicyKind::Countdown,
            "countdownslack" | "cntdslack" => PolicyKind::CountdownSlack,
            _ => return Err(UnknownPolicy(s.to_string())),
        })
    }
}

/// A policy together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Timeout threshold.
    pub theta: Seconds,
    /// Charged per MPI call as overhead when the policy identifies callsites.
    pub callsite_hash_cost: Seconds,
    /// Charged per MPI call as overhead when the policy isolates slack.
    pub barrier_cost: Seconds,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            theta: kind.default_theta(),
            callsite_hash_cost: if kind.identifies_callsites() {
                DEFAULT_CALLSITE_HASH_COST
            } else {
                0.0
            },
            barrier_cost: 0.0,
        }
    }

    pub fn baseline() -> Self {
        Self::new(PolicyKind::Baseline)
    }

    pub fn min_freq() -> Self {
        Self::new(PolicyKind::MinFreq)
    }

    pub fn fermata(theta: Seconds) -> Self {
        Self {
            theta,
            ..Self::new(PolicyKind::Fermata)
        }
    }

    pub fn andante() -> Self {
        Self::new(PolicyKind::Andante)
    }

    pub fn adagio(theta: Seconds) -> Self {
        Self {
            theta,
            ..Self::new(PolicyKind::Adagio)
        }
    }

    pub fn countdown(theta: Seconds) -> Self {
        Self {
            theta,
            ..Self::new(PolicyKind::Countdown)
        }
    }

    pub fn countdown_slack(theta: Seconds) -> Self {
        Self {
            theta,
            ..Self::new(PolicyKind::CountdownSlack)
        }
    }

    pub fn with_hash_cost(mut self, cost: Seconds) -> Self {
        self.callsite_hash_cost = cost;
        self
    }

    pub fn with_barrier_cost(mut self, cost: Seconds) -> Self {
        self.barrier_cost = cost;
        self
    }

    /// The comparison set: every policy except Baseline, with Fermata at
    /// both thresholds.
    pub fn comparison_set() -> Vec<PolicySpec> {
        vec![
            PolicySpec::min_freq(),
            PolicySpec::fermata(FERMATA_THETA),
            PolicySpec::fermata(DEFAULT_THETA),
            PolicySpec::andante(),
            PolicySpec::adagio(DEFAULT_THETA),
            PolicySpec::countdown(DEFAULT_THETA),
            PolicySpec::countdown_slack(DEFAULT_THETA),
        ]
    }

    /// Policies with a meaningful open-loop replay, as compared on traces.
    pub fn coverage_set() -> Vec<PolicySpec> {
        vec![
            PolicySpec::fermata(FERMATA_THETA),
            PolicySpec::fermata(DEFAULT_THETA),
            PolicySpec::countdown(DEFAULT_THETA),
            PolicySpec::countdown_slack(DEFAULT_THETA),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(format!("{}: theta must be > 0, got {}", self.kind, self.theta));
        }
        let cost_ok = |c: Seconds| c >= 0.0 && c.is_finite();
        if !cost_ok(self.callsite_hash_cost) || !cost_ok(self.barrier_cost) {
            return Err(format!("{}: costs must be >= 0", self.kind));
        }
        Ok(())
    }

    /// Overhead charged before each MPI call.
    pub fn call_overhead(&self) -> Seconds {
        let mut cost = 0.0;
        if self.kind.identifies_callsites() {
            cost += self.callsite_hash_cost;
        }
        if self.kind.isolates_slack() {
            cost += self.barrier_cost;
        }
        cost
    }

    /// Column label, e.g. `Fermata_100ms` or `CNTD_Slack`. The threshold is
    /// spelled out for Fermata and whenever it differs from the default.
    pub fn label(&self) -> String {
        let base = self.kind.short_label();
        let timed = !matches!(
            self.kind,
            PolicyKind::Baseline | PolicyKind::MinFreq | PolicyKind::Andante
        );
        if timed && (self.kind == PolicyKind::Fermata || self.theta != self.kind.default_theta()) {
            format!("{base}_{}", crate::units::format_duration(self.theta))
        } else {
            base.to_string()
        }
    }

    pub fn build(&self, pstates: &PStateTable) -> Box<dyn PolicyHooks> {
        match self.kind {
            PolicyKind::Baseline => baseline_hooks(),
            PolicyKind::MinFreq => minfreq_hooks(pstates),
            PolicyKind::Fermata => fermata_hooks(self.theta, self.call_overhead(), pstates),
            PolicyKind::Andante => andante_hooks(self.callsite_hash_cost, self.barrier_cost, pstates),
            PolicyKind::Adagio => adagio_hooks(self.theta, self.callsite_hash_cost, self.barrier_cost, pstates),
            PolicyKind::Countdown => countdown_hooks(self.theta, pstates),
            PolicyKind::CountdownSlack => countdown_slack_hooks(self.theta, self.barrier_cost, pstates),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    /// `kind` or `kind:theta`, e.g. `fermata:500us`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, theta) = match s.split_once(':') {
            Some((k, t)) => (k, Some(t)),
            None => (s, None),
        };
        let kind: PolicyKind = kind.parse().map_err(|e: UnknownPolicy| e.to_string())?;
        let mut spec = PolicySpec::new(kind);
        if let Some(t) = theta {
            spec.theta = crate::units::parse_duration(t).map_err(|e| e.to_string())?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Grows on demand so policies need not know the rank count up front.
#[derive(Debug, Clone, Default)]
pub(crate) struct PerRank<T: Default + Clone>(Vec<T>);

impl<T: Default + Clone> PerRank<T> {
    pub(crate) fn get_mut(&mut self, rank: usize) -> &mut T {
        if rank >= self.0.len() {
            self.0.resize(rank + 1, T::default());
        }
        &mut self.0[rank]
    }
}
