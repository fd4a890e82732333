//! Constrained reachability problems induced by proposition sets, lasso
//! sequences of such problems, and trace recording/checking.
//!
//! A reachability problem pairs a goal set (barriers to drive nonnegative in
//! finite time) with a safety set (barriers to keep nonnegative throughout).
//! Problems are induced from four proposition sets: what holds before, what
//! must not hold before, what must hold after, and what must not hold after.
//! Propositions required to stay false enter through margin complements, so
//! every barrier in the assembled problem is in plain `>= 0` form.
//!
//! Traces are compressed valuation sequences: a new entry is recorded only
//! when the valuation changes, so each trajectory has a unique trace. The
//! lasso checker walks that compressed trace through expected waypoints,
//! letting transit valuations pass between them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::barrier::{BarrierError, BarrierFunction, PropId, StackedState, Workspace};
use crate::constraints::{
    self, BoundedGoal, CompositeGoalSpec, ConstraintError, ConstraintRow, ControlAffineDynamics,
    FtcbfParams, NamedBarrier,
};

/// A set of atomic proposition ids.
pub type PropositionSet = BTreeSet<PropId>;

#[derive(Debug, Clone, PartialEq)]
pub enum TaskError {
    UnknownProposition { id: PropId },
    /// The induced goal set came out empty: nothing new to reach.
    EmptyGoal { label: String },
    OverlappingSets { which: &'static str },
    EmptySuffix,
    Constraint(ConstraintError),
    Barrier(BarrierError),
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownProposition { id } => write!(f, "unknown proposition id `{id}`"),
            Self::EmptyGoal { label } => {
                write!(f, "problem `{label}` induces an empty goal set: nothing new to reach")
            }
            Self::OverlappingSets { which } => {
                write!(f, "proposition sets {which} must be disjoint")
            }
            Self::EmptySuffix => write!(f, "lasso suffix must contain at least one problem"),
            Self::Constraint(e) => write!(f, "{e}"),
            Self::Barrier(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TaskError {}

impl From<ConstraintError> for TaskError {
    fn from(e: ConstraintError) -> Self {
        Self::Constraint(e)
    }
}

impl From<BarrierError> for TaskError {
    fn from(e: BarrierError) -> Self {
        Self::Barrier(e)
    }
}

/// The four proposition sets that induce a constrained reachability problem:
/// `a1` describes the valuation before execution, `a2` the valuation that
/// must hold at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedProblemSpec {
    pub a1_true: PropositionSet,
    pub a1_false: PropositionSet,
    pub a2_true: PropositionSet,
    pub a2_false: PropositionSet,
}

impl InducedProblemSpec {
    pub fn new(
        a1_true: PropositionSet,
        a1_false: PropositionSet,
        a2_true: PropositionSet,
        a2_false: PropositionSet,
    ) -> Result<Self, TaskError> {
        if a1_true.intersection(&a1_false).next().is_some() {
            return Err(TaskError::OverlappingSets {
                which: "a1_true and a1_false",
            });
        }
        if a2_true.intersection(&a2_false).next().is_some() {
            return Err(TaskError::OverlappingSets {
                which: "a2_true and a2_false",
            });
        }
        Ok(Self {
            a1_true,
            a1_false,
            a2_true,
            a2_false,
        })
    }
}

/// Knobs for problem induction: the complement margin (globally and per
/// proposition) and per-barrier composite weights.
#[derive(Debug, Clone)]
pub struct InduceOptions {
    pub epsilon: f64,
    pub epsilon_overrides: BTreeMap<PropId, f64>,
    pub weights: BTreeMap<PropId, f64>,
}

impl Default for InduceOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            epsilon_overrides: BTreeMap::new(),
            weights: BTreeMap::new(),
        }
    }
}

impl InduceOptions {
    fn epsilon_for(&self, id: &PropId) -> f64 {
        self.epsilon_overrides.get(id).copied().unwrap_or(self.epsilon)
    }

    fn weight_for(&self, id: &PropId) -> f64 {
        self.weights.get(id).copied().unwrap_or(1.0)
    }
}

/// An expected waypoint of the trace: a valuation matches when it contains
/// every required proposition and none of the forbidden ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Waypoint {
    pub required: PropositionSet,
    pub forbidden: PropositionSet,
}

impl Waypoint {
    pub fn new(required: PropositionSet, forbidden: PropositionSet) -> Self {
        Self { required, forbidden }
    }

    pub fn matches(&self, valuation: &PropositionSet) -> bool {
        self.required.is_subset(valuation) && self.forbidden.is_disjoint(valuation)
    }
}

impl From<PropositionSet> for Waypoint {
    fn from(required: PropositionSet) -> Self {
        Self {
            required,
            forbidden: PropositionSet::new(),
        }
    }
}

/// Goal/safety membership of a state relative to a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMembership {
    Both,
    GoalOnly,
    SafetyOnly,
    Neither,
}

impl RegionMembership {
    pub fn in_goal(self) -> bool {
        matches!(self, Self::Both | Self::GoalOnly)
    }

    pub fn in_safety(self) -> bool {
        matches!(self, Self::Both | Self::SafetyOnly)
    }
}

/// A constrained reachability problem: drive every goal barrier nonnegative
/// while keeping every safety barrier nonnegative. Safety barriers are
/// already in `>= 0` form (complements pre-applied).
#[derive(Debug, Clone)]
pub struct ReachabilityProblem {
    label: String,
    goal: CompositeGoalSpec,
    safety: Vec<NamedBarrier>,
    waypoint: Waypoint,
}

impl ReachabilityProblem {
    pub fn new(
        label: impl Into<String>,
        goal: CompositeGoalSpec,
        safety: Vec<NamedBarrier>,
        waypoint: Waypoint,
    ) -> Self {
        Self {
            label: label.into(),
            goal,
            safety,
            waypoint,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn goal(&self) -> &CompositeGoalSpec {
        &self.goal
    }

    pub fn safety(&self) -> &[NamedBarrier] {
        &self.safety
    }

    pub fn waypoint(&self) -> &Waypoint {
        &self.waypoint
    }

    /// Values of all goal barriers at `x`, bounded ones first.
    pub fn goal_values(&self, x: &StackedState) -> Result<Vec<(String, f64)>, BarrierError> {
        let mut out = Vec::new();
        for (label, barrier) in self.goal.all() {
            out.push((String::from(label), barrier.eval(x)?));
        }
        Ok(out)
    }

    pub fn safety_values(&self, x: &StackedState) -> Result<Vec<(String, f64)>, BarrierError> {
        let mut out = Vec::with_capacity(self.safety.len());
        for s in &self.safety {
            out.push((s.label.clone(), s.barrier.eval(x)?));
        }
        Ok(out)
    }

    pub fn min_goal_value(&self, x: &StackedState) -> Result<f64, BarrierError> {
        let mut min = f64::INFINITY;
        for (_, barrier) in self.goal.all() {
            let v = barrier.eval(x)?;
            if v < min {
                min = v;
            }
        }
        Ok(min)
    }

    pub fn min_safety_value(&self, x: &StackedState) -> Result<f64, BarrierError> {
        let mut min = f64::INFINITY;
        for s in &self.safety {
            let v = s.barrier.eval(x)?;
            if v < min {
                min = v;
            }
        }
        Ok(min)
    }

    /// Goal membership uses the non-strict inequality: a state on the goal
    /// boundary (all goal barriers exactly zero) is in the goal.
    pub fn membership(&self, x: &StackedState) -> Result<RegionMembership, BarrierError> {
        let in_goal = self.min_goal_value(x)? >= 0.0;
        let in_safety = self.min_safety_value(x)? >= 0.0;
        Ok(match (in_goal, in_safety) {
            (true, true) => RegionMembership::Both,
            (true, false) => RegionMembership::GoalOnly,
            (false, true) => RegionMembership::SafetyOnly,
            (false, false) => RegionMembership::Neither,
        })
    }

    /// The QP row set for this problem at `x`.
    pub fn constraint_rows(
        &self,
        dynamics: &ControlAffineDynamics,
        params: &FtcbfParams,
        x: &StackedState,
    ) -> Result<Vec<ConstraintRow>, ConstraintError> {
        constraints::assemble_rows(&self.goal, &self.safety, dynamics, params, x)
    }

    /// The `q' = 0` row set: every goal barrier as an individual row.
    pub fn constraint_rows_individual(
        &self,
        dynamics: &ControlAffineDynamics,
        params: &FtcbfParams,
        x: &StackedState,
    ) -> Result<Vec<ConstraintRow>, ConstraintError> {
        constraints::assemble_rows_individual(&self.goal, &self.safety, dynamics, params, x)
    }
}

fn complement_label(id: &PropId) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let _ = write!(s, "!{id}");
    s
}

/// Builds the reachability problem induced by the four proposition sets.
///
/// Goal barriers come from `a2_true \ a1_true` directly and from
/// `a2_false \ a1_false` as margin complements; safety barriers come from
/// `a1_true \u{2229} a2_true` directly and from `a1_false \u{2229} a2_false` as
/// complements. Goal barriers with an upper bound join the composite
/// constraint (with configured weights); the rest get individual rows.
pub fn induce_problem(
    label: impl Into<String>,
    spec: &InducedProblemSpec,
    workspace: &Workspace,
    opts: &InduceOptions,
) -> Result<ReachabilityProblem, TaskError> {
    let label = label.into();
    let resolve = |id: &PropId| -> Result<Arc<BarrierFunction>, TaskError> {
        workspace
            .prop(id)
            .map(|p| p.barrier().clone())
            .ok_or_else(|| TaskError::UnknownProposition { id: id.clone() })
    };

    let mut bounded = Vec::new();
    let mut unbounded = Vec::new();
    let mut push_goal = |id_label: String, barrier: Arc<BarrierFunction>, weight: f64| {
        if barrier.bounded_above().is_some() {
            bounded.push(BoundedGoal {
                label: id_label,
                barrier,
                weight,
            });
        } else {
            unbounded.push(NamedBarrier {
                label: id_label,
                barrier,
            });
        }
    };

    for id in spec.a2_true.difference(&spec.a1_true) {
        let mut s = String::new();
        {
            use core::fmt::Write;
            let _ = write!(s, "{id}");
        }
        push_goal(s, resolve(id)?, opts.weight_for(id));
    }
    for id in spec.a2_false.difference(&spec.a1_false) {
        let inner = resolve(id)?;
        let comp = BarrierFunction::complement(inner, opts.epsilon_for(id))?;
        push_goal(complement_label(id), Arc::new(comp), opts.weight_for(id));
    }

    if bounded.is_empty() && unbounded.is_empty() {
        return Err(TaskError::EmptyGoal { label });
    }
    let goal = CompositeGoalSpec::new(bounded, unbounded)?;

    let mut safety = Vec::new();
    for id in spec.a1_true.intersection(&spec.a2_true) {
        let mut s = String::new();
        {
            use core::fmt::Write;
            let _ = write!(s, "{id}");
        }
        safety.push(NamedBarrier::new(s, resolve(id)?));
    }
    for id in spec.a1_false.intersection(&spec.a2_false) {
        let inner = resolve(id)?;
        let comp = BarrierFunction::complement(inner, opts.epsilon_for(id))?;
        safety.push(NamedBarrier::new(complement_label(id), Arc::new(comp)));
    }

    let waypoint = Waypoint::new(spec.a2_true.clone(), spec.a2_false.clone());
    Ok(ReachabilityProblem::new(label, goal, safety, waypoint))
}

/// A prefix of reachability problems followed by a suffix repeated forever.
#[derive(Debug, Clone)]
pub struct LassoSequence {
    prefix: Vec<ReachabilityProblem>,
    suffix: Vec<ReachabilityProblem>,
}

impl LassoSequence {
    pub fn new(
        prefix: Vec<ReachabilityProblem>,
        suffix: Vec<ReachabilityProblem>,
    ) -> Result<Self, TaskError> {
        if suffix.is_empty() {
            return Err(TaskError::EmptySuffix);
        }
        Ok(Self { prefix, suffix })
    }

    pub fn prefix(&self) -> &[ReachabilityProblem] {
        &self.prefix
    }

    pub fn suffix(&self) -> &[ReachabilityProblem] {
        &self.suffix
    }

    /// The problem active at global position `k` (prefix first, then the
    /// suffix cycling forever).
    pub fn problem_at(&self, k: usize) -> &ReachabilityProblem {
        if k < self.prefix.len() {
            &self.prefix[k]
        } else {
            &self.suffix[(k - self.prefix.len()) % self.suffix.len()]
        }
    }

    pub fn expected_prefix_waypoints(&self) -> Vec<Waypoint> {
        self.prefix.iter().map(|p| p.waypoint().clone()).collect()
    }

    pub fn expected_suffix_waypoints(&self) -> Vec<Waypoint> {
        self.suffix.iter().map(|p| p.waypoint().clone()).collect()
    }
}

/// One compressed trace entry: the valuation and the time it was entered.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub valuation: PropositionSet,
    pub enter_time: f64,
}

/// Compressed sequence of proposition valuations along a trajectory.
/// Consecutive entries always differ; enter times are strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceRecord {
    entries: Vec<TraceEntry>,
    raw_samples: usize,
    last_time: Option<f64>,
}

impl TraceRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; a new entry is stored only when the valuation
    /// differs from the last entry. Panics if `t` does not increase.
    pub fn record_valuation(&mut self, valuation: PropositionSet, t: f64) {
        if let Some(last) = self.last_time {
            assert!(t > last, "samples must arrive in strictly increasing time");
        }
        self.last_time = Some(t);
        self.raw_samples += 1;
        match self.entries.last() {
            Some(e) if e.valuation == valuation => {}
            _ => self.entries.push(TraceEntry {
                valuation,
                enter_time: t,
            }),
        }
    }

    /// Evaluates all workspace propositions at `x` and records the valuation.
    pub fn record_state(&mut self, workspace: &Workspace, x: &StackedState, t: f64) {
        self.record_valuation(workspace.valuation(x), t);
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn raw_samples(&self) -> usize {
        self.raw_samples
    }
}

/// Which part of the lasso the checker was matching when it got stuck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchPhase {
    Prefix,
    Suffix,
}

/// Outcome of a lasso check. Acceptance is omega-approximate: the checker
/// verifies a finite number of suffix repetitions, not the infinite word.
#[derive(Debug, Clone, PartialEq)]
pub enum LassoVerdict {
    Accept {
        /// Full suffix cycles observed (at least the requested minimum).
        cycles: usize,
    },
    Reject {
        phase: MatchPhase,
        /// Index of the first unmatched waypoint within its phase.
        waypoint: usize,
        /// Full suffix cycles completed before the mismatch.
        cycles_completed: usize,
    },
}

impl LassoVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Self::Accept { .. })
    }
}

/// Matches the compressed trace against expected waypoints: the prefix
/// waypoints in order, then at least `min_cycles` full repetitions of the
/// suffix waypoints.
///
/// Trace entries may refine the expectation: unlisted transit valuations
/// between waypoints are skipped. Successive waypoints must match strictly
/// later entries, except that the final entry may absorb any remaining
/// waypoints (a trace ends in its last valuation, which by convention holds
/// forever).
pub fn check_lasso(
    trace: &TraceRecord,
    prefix: &[Waypoint],
    suffix: &[Waypoint],
    min_cycles: usize,
) -> LassoVerdict {
    assert!(min_cycles >= 1, "min_cycles must be at least 1");
    let entries = trace.entries();
    let last_idx = entries.len().checked_sub(1);

    // returns the match position for one waypoint, searching strictly after
    // `from`, or at the final entry when already parked there
    let advance = |from: Option<usize>, w: &Waypoint| -> Option<usize> {
        let start = from.map_or(0, |i| i + 1);
        for (k, e) in entries.iter().enumerate().skip(start) {
            if w.matches(&e.valuation) {
                return Some(k);
            }
        }
        match (from, last_idx) {
            (Some(i), Some(last)) if i == last && w.matches(&entries[last].valuation) => {
                Some(last)
            }
            _ => None,
        }
    };

    let mut pos: Option<usize> = None;
    for (k, w) in prefix.iter().enumerate() {
        match advance(pos, w) {
            Some(p) => pos = Some(p),
            None => {
                return LassoVerdict::Reject {
                    phase: MatchPhase::Prefix,
                    waypoint: k,
                    cycles_completed: 0,
                }
            }
        }
    }

    let mut cycles = 0usize;
    loop {
        let start = pos;
        let mut cycle_pos = pos;
        let mut failed_at = None;
        for (k, w) in suffix.iter().enumerate() {
            match advance(cycle_pos, w) {
                Some(p) => cycle_pos = Some(p),
                None => {
                    failed_at = Some(k);
                    break;
                }
            }
        }
        match failed_at {
            Some(k) => {
                if cycles >= min_cycles {
                    return LassoVerdict::Accept { cycles };
                }
                return LassoVerdict::Reject {
                    phase: MatchPhase::Suffix,
                    waypoint: k,
                    cycles_completed: cycles,
                };
            }
            None => {
                cycles += 1;
                if cycle_pos == start {
                    // parked at the stabilized final entry: every further
                    // cycle repeats for free
                    if cycles < min_cycles {
                        cycles = min_cycles;
                    }
                    return LassoVerdict::Accept { cycles };
                }
                pos = cycle_pos;
                if cycles >= min_cycles + 64 {
                    // cap the report; acceptance is already established
                    return LassoVerdict::Accept { cycles };
                }
            }
        }
    }
}
