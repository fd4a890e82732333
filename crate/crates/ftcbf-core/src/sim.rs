//! Closed-loop executive: integrates the agent dynamics under the QP
//! controller, switches through the lasso sequence of reachability problems,
//! records the trace, and emits diagnostics.
//!
//! Integration is explicit Euler under zero-order hold: the QP is re-solved
//! at every step, the control is held constant over the step, and the next
//! problem activates as soon as every goal barrier of the current one clears
//! the switch margin. One run is strictly sequential; independent runs may
//! execute in parallel since all shared inputs are immutable.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::barrier::{BarrierError, StackedState, Workspace};
use crate::constraints::{
    self, CompositeGoalSpec, ConstraintError, ControlAffineDynamics, FtcbfParams,
};
use crate::qp::{self, InfeasibilityDiagnostic, QpError, QpProblem, QpStatus};
use crate::task::{check_lasso, LassoSequence, LassoVerdict, ReachabilityProblem, TraceRecord};

/// Shared safety tolerance for discretized runs: barrier values above this
/// negative floor count as maintained. Matches the forward-invariance
/// acceptance threshold.
pub const SAFETY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config { message: String },
    /// The initial state violates the first problem's safety set.
    Precondition { violations: Vec<(String, f64)> },
    /// The state at a problem switch violates the next problem's safety
    /// set: the lasso compatibility condition failed empirically.
    SwitchSafety {
        from: String,
        to: String,
        violations: Vec<(String, f64)>,
    },
    /// The QP became infeasible mid-run; the partial result is preserved.
    Infeasible {
        time: f64,
        step: usize,
        diagnostic: InfeasibilityDiagnostic,
        partial: Box<SimResult>,
    },
    /// The QP hit its iteration cap without meeting tolerances.
    SolverStalled { time: f64, step: usize },
    Constraint(ConstraintError),
    Barrier(BarrierError),
    Qp(QpError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config { message } => write!(f, "invalid simulation config: {message}"),
            Self::Precondition { violations } => {
                write!(f, "initial state violates the safety set:")?;
                for (label, v) in violations {
                    write!(f, " {label}={v:.6}")?;
                }
                Ok(())
            }
            Self::SwitchSafety { from, to, violations } => {
                write!(f, "switching {from} -> {to}: next safety set violated:")?;
                for (label, v) in violations {
                    write!(f, " {label}={v:.6}")?;
                }
                Ok(())
            }
            Self::Infeasible { time, step, diagnostic, .. } => {
                write!(f, "QP infeasible at t={time} (step {step}): {diagnostic}")
            }
            Self::SolverStalled { time, step } => {
                write!(f, "QP hit its iteration cap at t={time} (step {step})")
            }
            Self::Constraint(e) => write!(f, "{e}"),
            Self::Barrier(e) => write!(f, "{e}"),
            Self::Qp(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ConstraintError> for SimError {
    fn from(e: ConstraintError) -> Self {
        Self::Constraint(e)
    }
}

impl From<BarrierError> for SimError {
    fn from(e: BarrierError) -> Self {
        Self::Barrier(e)
    }
}

impl From<QpError> for SimError {
    fn from(e: QpError) -> Self {
        Self::Qp(e)
    }
}

/// Errors from a single control step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Infeasible(InfeasibilityDiagnostic),
    MaxIterations,
    Constraint(ConstraintError),
    Barrier(BarrierError),
    Qp(QpError),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Infeasible(d) => write!(f, "QP infeasible: {d}"),
            Self::MaxIterations => write!(f, "QP hit its iteration cap"),
            Self::Constraint(e) => write!(f, "{e}"),
            Self::Barrier(e) => write!(f, "{e}"),
            Self::Qp(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for StepError {}

/// Fixed configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    dt: f64,
    max_time: f64,
    params: FtcbfParams,
    goal_switch_margin: f64,
    suffix_cycles_target: usize,
}

impl SimConfig {
    pub fn new(
        dt: f64,
        max_time: f64,
        params: FtcbfParams,
        goal_switch_margin: f64,
        suffix_cycles_target: usize,
    ) -> Result<Self, SimError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::Config {
                message: String::from("dt must be positive and finite"),
            });
        }
        if !(max_time >= dt) || !max_time.is_finite() {
            return Err(SimError::Config {
                message: String::from("max_time must be at least dt"),
            });
        }
        if !(goal_switch_margin >= 0.0) || !goal_switch_margin.is_finite() {
            return Err(SimError::Config {
                message: String::from("goal_switch_margin must be nonnegative"),
            });
        }
        if suffix_cycles_target == 0 {
            return Err(SimError::Config {
                message: String::from("suffix_cycles_target must be at least 1"),
            });
        }
        Ok(Self {
            dt,
            max_time,
            params,
            goal_switch_margin,
            suffix_cycles_target,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    pub fn params(&self) -> &FtcbfParams {
        &self.params
    }

    pub fn goal_switch_margin(&self) -> f64 {
        self.goal_switch_margin
    }

    pub fn suffix_cycles_target(&self) -> usize {
        self.suffix_cycles_target
    }

    /// Same configuration with the step size halved; used for verdict
    /// stability checks.
    pub fn halved_dt(&self) -> Self {
        let mut c = self.clone();
        c.dt /= 2.0;
        c
    }
}

/// Activation of a reachability problem, with reach-time diagnostics for the
/// entered problem evaluated at the switch state.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub entered: String,
    pub time: f64,
    /// Index into the sampled trajectory from which the problem drives.
    pub step: usize,
    /// Per-barrier finite-time bounds for the entered problem's individual
    /// goal rows.
    pub individual_bounds: Vec<(String, f64)>,
    /// Estimated total horizon for the entered problem (diagnostic only).
    pub total_bound_estimate: f64,
}

/// A safety barrier observed negative at a sampled state.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationEvent {
    pub time: f64,
    pub barrier: String,
    pub value: f64,
}

/// Outcome of a run. Partial results carried inside [`SimError::Infeasible`]
/// report `Timeout` with the cycles completed so far; the error itself
/// conveys the cause of the halt.
#[derive(Debug, Clone, PartialEq)]
pub enum RunVerdict {
    Accept { cycles: usize },
    Reject(LassoVerdict),
    Timeout { cycles_completed: usize },
}

impl RunVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Self::Accept { .. })
    }

    pub fn cycles_completed(&self) -> usize {
        match self {
            Self::Accept { cycles } => *cycles,
            Self::Reject(LassoVerdict::Accept { cycles }) => *cycles,
            Self::Reject(LassoVerdict::Reject { cycles_completed, .. }) => *cycles_completed,
            Self::Timeout { cycles_completed } => *cycles_completed,
        }
    }
}

/// Everything a run produced: the sampled trajectory and controls on one
/// time grid, the compressed trace, problem activations, safety violations,
/// and the final verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub states: Vec<StackedState>,
    /// `controls[k]` is held on `[times[k], times[k+1])`; the terminal entry
    /// is all zeros since no step is taken from the final state.
    pub controls: Vec<Vec<f64>>,
    pub trace: TraceRecord,
    pub switch_log: Vec<SwitchEvent>,
    pub violation_log: Vec<ViolationEvent>,
    pub verdict: RunVerdict,
}

impl SimResult {
    /// `(label, start, end)` per activation: the problem named `label`
    /// computed the controls for steps `start..end`.
    pub fn segments(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::with_capacity(self.switch_log.len());
        for (k, ev) in self.switch_log.iter().enumerate() {
            let end = self
                .switch_log
                .get(k + 1)
                .map(|n| n.step)
                .unwrap_or(self.states.len().saturating_sub(1));
            out.push((ev.entered.clone(), ev.step, end));
        }
        out
    }
}

/// A fully-specified mission: the workspace alphabet, the dynamics, the
/// initial state, and the lasso sequence to execute.
#[derive(Debug)]
pub struct Scenario {
    workspace: Workspace,
    dynamics: ControlAffineDynamics,
    initial: StackedState,
    lasso: LassoSequence,
}

impl Scenario {
    pub fn new(
        workspace: Workspace,
        dynamics: ControlAffineDynamics,
        initial: StackedState,
        lasso: LassoSequence,
    ) -> Result<Self, SimError> {
        if initial.agent_count() != workspace.agent_count()
            || initial.agent_dim() != workspace.agent_dim()
        {
            return Err(SimError::Config {
                message: String::from("initial state shape does not match the workspace"),
            });
        }
        if dynamics.state_dim() != initial.total_dim() {
            return Err(SimError::Config {
                message: String::from("dynamics state dimension does not match the stacked state"),
            });
        }
        Ok(Self {
            workspace,
            dynamics,
            initial,
            lasso,
        })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn dynamics(&self) -> &ControlAffineDynamics {
        &self.dynamics
    }

    pub fn initial(&self) -> &StackedState {
        &self.initial
    }

    pub fn lasso(&self) -> &LassoSequence {
        &self.lasso
    }
}

/// One control step: assemble the problem's rows at `x`, solve the
/// minimum-energy QP, and integrate one explicit-Euler step under zero-order
/// hold. Returns the applied control and the next state.
pub fn step(
    x: &StackedState,
    problem: &ReachabilityProblem,
    dynamics: &ControlAffineDynamics,
    params: &FtcbfParams,
    dt: f64,
) -> Result<(Vec<f64>, StackedState), StepError> {
    let rows = problem
        .constraint_rows(dynamics, params, x)
        .map_err(StepError::Constraint)?;
    let qp_problem = QpProblem::new(rows, dynamics.control_dim()).map_err(StepError::Qp)?;
    let solution = qp::solve(&qp_problem);
    let u = match solution.status {
        QpStatus::Optimal => solution.u,
        QpStatus::Infeasible(diag) => return Err(StepError::Infeasible(diag)),
        QpStatus::MaxIterations => return Err(StepError::MaxIterations),
    };

    let flat = x.flat();
    let f = dynamics.drift(&flat);
    let g = dynamics.actuation(&flat);
    let gu = g.matvec(&u);
    let mut next = flat;
    for (xi, (fi, gi)) in next.iter_mut().zip(f.iter().zip(&gu)) {
        *xi += dt * (fi + gi);
    }
    let x_next = StackedState::from_flat(x.agent_count(), x.agent_dim(), &next)
        .map_err(StepError::Barrier)?;
    Ok((u, x_next))
}

fn switch_event(
    problem: &ReachabilityProblem,
    params: &FtcbfParams,
    x: &StackedState,
    time: f64,
    step: usize,
) -> Result<SwitchEvent, SimError> {
    let mut individual_bounds = Vec::new();
    for g in problem.goal().unbounded() {
        let h = g.barrier.eval(x)?;
        individual_bounds.push((g.label.clone(), constraints::reach_time_bound(h, params)));
    }
    let estimate = constraints::composite_reach_estimate(problem.goal(), params, x)?;
    Ok(SwitchEvent {
        entered: String::from(problem.label()),
        time,
        step,
        individual_bounds,
        total_bound_estimate: estimate.total,
    })
}

fn collect_violations(
    problem: &ReachabilityProblem,
    x: &StackedState,
    time: f64,
    log: &mut Vec<ViolationEvent>,
) -> Result<(), SimError> {
    for (label, value) in problem.safety_values(x)? {
        if value < 0.0 {
            log.push(ViolationEvent {
                time,
                barrier: label,
                value,
            });
        }
    }
    Ok(())
}

/// Runs the closed loop: advances through the prefix problems, then cycles
/// the suffix until the target number of complete cycles or `max_time`.
/// The final verdict comes from [`check_lasso`] over the recorded trace.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<SimResult, SimError> {
    let ws = scenario.workspace();
    let dynamics = scenario.dynamics();
    let params = config.params();
    let lasso = scenario.lasso();
    let dt = config.dt();
    let prefix_len = lasso.prefix().len();
    let suffix_len = lasso.suffix().len();
    let target = config.suffix_cycles_target();

    let mut x = scenario.initial().clone();

    // precondition: the first problem's safety set holds at the start
    let first = lasso.problem_at(0);
    let violations: Vec<(String, f64)> = first
        .safety_values(&x)?
        .into_iter()
        .filter(|(_, v)| *v < 0.0)
        .collect();
    if !violations.is_empty() {
        return Err(SimError::Precondition { violations });
    }

    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut controls: Vec<Vec<f64>> = Vec::new();
    let mut trace = TraceRecord::new();
    trace.record_state(ws, &x, 0.0);
    let mut switch_log = Vec::new();
    let mut violation_log = Vec::new();
    collect_violations(first, &x, 0.0, &mut violation_log)?;

    let mut position = 0usize; // global problem index
    let mut cycles = 0usize;
    let mut k = 0usize; // step counter; t_k = k * dt
    switch_log.push(switch_event(first, params, &x, 0.0, 0)?);

    let finish = |trace: &TraceRecord, cycles: usize, timeout: bool| -> RunVerdict {
        if timeout {
            return RunVerdict::Timeout {
                cycles_completed: cycles,
            };
        }
        let verdict = check_lasso(
            trace,
            &lasso.expected_prefix_waypoints(),
            &lasso.expected_suffix_waypoints(),
            target,
        );
        match verdict {
            LassoVerdict::Accept { cycles } => RunVerdict::Accept { cycles },
            reject => RunVerdict::Reject(reject),
        }
    };

    let verdict = 'outer: loop {
        let t = k as f64 * dt;

        // switch through every problem whose goal already holds, at most one
        // lap over the remaining sequence per instant
        let mut laps = 0usize;
        loop {
            let current = lasso.problem_at(position);
            let min_goal = current.min_goal_value(&x)?;
            if !(min_goal >= config.goal_switch_margin()) {
                break;
            }
            if position >= prefix_len && (position - prefix_len) % suffix_len == suffix_len - 1 {
                cycles += 1;
            }
            if cycles >= target {
                break 'outer finish(&trace, cycles, false);
            }
            let next = lasso.problem_at(position + 1);
            let bad: Vec<(String, f64)> = next
                .safety_values(&x)?
                .into_iter()
                .filter(|(_, v)| *v < -SAFETY_TOLERANCE)
                .collect();
            if !bad.is_empty() {
                return Err(SimError::SwitchSafety {
                    from: String::from(current.label()),
                    to: String::from(next.label()),
                    violations: bad,
                });
            }
            position += 1;
            switch_log.push(switch_event(next, params, &x, t, k)?);
            laps += 1;
            if laps > prefix_len + suffix_len {
                break;
            }
        }

        let t_next = (k + 1) as f64 * dt;
        if t_next > config.max_time() + 1e-9 {
            break RunVerdict::Timeout {
                cycles_completed: cycles,
            };
        }

        let current = lasso.problem_at(position);
        match step(&x, current, dynamics, params, dt) {
            Ok((u, x_next)) => {
                controls.push(u);
                x = x_next;
                k += 1;
                times.push(t_next);
                states.push(x.clone());
                trace.record_state(ws, &x, t_next);
                collect_violations(current, &x, t_next, &mut violation_log)?;
            }
            Err(StepError::Infeasible(diagnostic)) => {
                controls.push(vec![0.0; dynamics.control_dim()]);
                let partial = SimResult {
                    times,
                    states,
                    controls,
                    trace,
                    switch_log,
                    violation_log,
                    verdict: RunVerdict::Timeout {
                        cycles_completed: cycles,
                    },
                };
                return Err(SimError::Infeasible {
                    time: t,
                    step: k,
                    diagnostic,
                    partial: Box::new(partial),
                });
            }
            Err(StepError::MaxIterations) => {
                return Err(SimError::SolverStalled { time: t, step: k })
            }
            Err(StepError::Constraint(e)) => return Err(e.into()),
            Err(StepError::Barrier(e)) => return Err(e.into()),
            Err(StepError::Qp(e)) => return Err(e.into()),
        }
    };

    // terminal control slot keeps the grids aligned
    controls.push(vec![0.0; dynamics.control_dim()]);

    Ok(SimResult {
        times,
        states,
        controls,
        trace,
        switch_log,
        violation_log,
        verdict,
    })
}

/// Weighted-sum series of the bounded goal barriers along a trajectory,
/// with per-step increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressSeries {
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
}

pub fn progress_series(
    result: &SimResult,
    spec: &CompositeGoalSpec,
) -> Result<ProgressSeries, ConstraintError> {
    let mut values = Vec::with_capacity(result.states.len());
    for x in &result.states {
        values.push(spec.weighted_sum(x)?);
    }
    let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(ProgressSeries { values, increments })
}
