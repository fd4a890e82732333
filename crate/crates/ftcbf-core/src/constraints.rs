//! Linear inequality rows on the control input that encode finite-time CBF
//! conditions for control-affine dynamics.
//!
//! Two row shapes exist. An *individual* row enforces
//! `L_f h + L_g h u + gamma sign(h) |h|^rho >= 0` for one barrier, which
//! drives `h` to its super-zero set in bounded time and keeps it there. A
//! *composite* row sums several bounded goal barriers with positive weights
//! and enforces `sum_i alpha_i (L_f h_i + L_g h_i u) + gamma sign(min_i h_i)
//! >= 0`; the sign term intentionally carries no magnitude factor. Safety
//! barriers enter the program as individual rows, preserving forward
//! invariance of their regions.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::barrier::{BarrierError, BarrierFunction, StackedState};
use crate::linalg::{self, Mat};

/// Errors raised while validating parameters or assembling rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintError {
    InvalidGamma { gamma: f64 },
    InvalidRho { rho: f64 },
    NonPositiveWeight { label: String, weight: f64 },
    UnboundedCompositeBarrier { label: String },
    EmptyGoal,
    EmptyCompositeList,
    NonFiniteBarrier { label: String },
    Barrier(BarrierError),
}

impl fmt::Display for ConstraintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidGamma { gamma } => write!(f, "gamma must be > 0, got {gamma}"),
            Self::InvalidRho { rho } => write!(f, "rho must lie in [0, 1), got {rho}"),
            Self::NonPositiveWeight { label, weight } => {
                write!(f, "weight for goal barrier `{label}` must be > 0, got {weight}")
            }
            Self::UnboundedCompositeBarrier { label } => {
                write!(f, "goal barrier `{label}` lacks an upper bound and cannot join the composite constraint")
            }
            Self::EmptyGoal => write!(f, "a reachability goal needs at least one barrier"),
            Self::EmptyCompositeList => {
                write!(f, "composite row needs at least one bounded goal barrier")
            }
            Self::NonFiniteBarrier { label } => {
                write!(f, "barrier `{label}` produced a non-finite value or gradient")
            }
            Self::Barrier(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ConstraintError {}

impl From<BarrierError> for ConstraintError {
    fn from(e: BarrierError) -> Self {
        Self::Barrier(e)
    }
}

/// Finite-time convergence parameters: `gamma > 0` and `rho` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtcbfParams {
    gamma: f64,
    rho: f64,
}

impl FtcbfParams {
    pub fn new(gamma: f64, rho: f64) -> Result<Self, ConstraintError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(ConstraintError::InvalidGamma { gamma });
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(ConstraintError::InvalidRho { rho });
        }
        Ok(Self { gamma, rho })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `gamma * sign(h) * |h|^rho` with validated parameters.
    pub fn sign_pow(&self, h: f64) -> f64 {
        sign_pow_raw(h, self.gamma, self.rho)
    }
}

fn sign_pow_raw(h: f64, gamma: f64, rho: f64) -> f64 {
    if h > 0.0 {
        gamma * libm::pow(h, rho)
    } else if h < 0.0 {
        -gamma * libm::pow(-h, rho)
    } else {
        // sign(0) := 0, including rho = 0 where |0|^0 would conventionally
        // be 1; this keeps the constraint continuous at the boundary and
        // non-restrictive once the set is reached.
        0.0
    }
}

/// `gamma * sign(h) * |h|^rho`, odd and non-decreasing in `h`, exactly zero
/// at `h = 0`.
pub fn sign_pow(h: f64, gamma: f64, rho: f64) -> Result<f64, ConstraintError> {
    let params = FtcbfParams::new(gamma, rho)?;
    Ok(params.sign_pow(h))
}

/// Control-affine dynamics `xdot = f(x) + g(x) u` given by drift and
/// actuation callbacks over the flat state vector.
pub struct ControlAffineDynamics {
    state_dim: usize,
    control_dim: usize,
    drift: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    actuation: Box<dyn Fn(&[f64]) -> Mat + Send + Sync>,
}

impl fmt::Debug for ControlAffineDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineDynamics")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .finish()
    }
}

impl ControlAffineDynamics {
    pub fn new<F, G>(state_dim: usize, control_dim: usize, drift: F, actuation: G) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64]) -> Mat + Send + Sync + 'static,
    {
        Self {
            state_dim,
            control_dim,
            drift: Box::new(drift),
            actuation: Box::new(actuation),
        }
    }

    /// `f == 0`, `g == I`: each state coordinate is directly actuated.
    pub fn single_integrator(dim: usize) -> Self {
        Self::new(dim, dim, |x| vec![0.0; x.len()], |x| Mat::identity(x.len()))
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let f = (self.drift)(x);
        assert_eq!(f.len(), self.state_dim, "drift output dimension changed");
        f
    }

    pub fn actuation(&self, x: &[f64]) -> Mat {
        let g = (self.actuation)(x);
        assert_eq!(
            (g.rows(), g.cols()),
            (self.state_dim, self.control_dim),
            "actuation output dimensions changed"
        );
        g
    }
}

/// Provenance of a constraint row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowTag {
    /// Theorem-1 composite row over the bounded goal barriers.
    Composite,
    /// Individual finite-time row for an unbounded goal barrier.
    IndividualGoal(String),
    /// Forward-invariance row for a safety barrier.
    Invariance(String),
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Composite => write!(f, "composite"),
            Self::IndividualGoal(id) => write!(f, "goal:{id}"),
            Self::Invariance(id) => write!(f, "invariance:{id}"),
        }
    }
}

/// One linear inequality `normal . u >= offset` on the stacked control input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub tag: RowTag,
}

impl ConstraintRow {
    /// Signed slack `normal . u - offset`; nonnegative iff `u` satisfies the
    /// row.
    pub fn residual(&self, u: &[f64]) -> f64 {
        linalg::dot(&self.normal, u) - self.offset
    }

    /// A row with an exactly-zero normal and positive offset cannot be
    /// satisfied by any control; it is kept in the assembly and flagged so
    /// the QP can name the offending barrier.
    pub fn is_pointwise_infeasible(&self) -> bool {
        self.offset > 0.0 && self.normal.iter().all(|v| *v == 0.0)
    }
}

/// A goal barrier entering the composite constraint with weight
/// `alpha > 0`; its barrier must declare an upper bound.
#[derive(Debug, Clone)]
pub struct BoundedGoal {
    pub label: String,
    pub barrier: Arc<BarrierFunction>,
    pub weight: f64,
}

/// A labelled barrier, used for unbounded goals and safety constraints.
#[derive(Debug, Clone)]
pub struct NamedBarrier {
    pub label: String,
    pub barrier: Arc<BarrierFunction>,
}

impl NamedBarrier {
    pub fn new(label: impl Into<String>, barrier: Arc<BarrierFunction>) -> Self {
        Self {
            label: label.into(),
            barrier,
        }
    }
}

/// The goal side of a reachability problem, split into the bounded barriers
/// that share one composite row and the unbounded barriers that each get an
/// individual finite-time row. The split is driven by the `bounded_above`
/// metadata on each barrier, not by list position.
#[derive(Debug, Clone)]
pub struct CompositeGoalSpec {
    bounded: Vec<BoundedGoal>,
    unbounded: Vec<NamedBarrier>,
}

impl CompositeGoalSpec {
    pub fn new(
        bounded: Vec<BoundedGoal>,
        unbounded: Vec<NamedBarrier>,
    ) -> Result<Self, ConstraintError> {
        if bounded.is_empty() && unbounded.is_empty() {
            return Err(ConstraintError::EmptyGoal);
        }
        for g in &bounded {
            if !(g.weight > 0.0) || !g.weight.is_finite() {
                return Err(ConstraintError::NonPositiveWeight {
                    label: g.label.clone(),
                    weight: g.weight,
                });
            }
            if g.barrier.bounded_above().is_none() {
                return Err(ConstraintError::UnboundedCompositeBarrier {
                    label: g.label.clone(),
                });
            }
        }
        Ok(Self { bounded, unbounded })
    }

    pub fn bounded(&self) -> &[BoundedGoal] {
        &self.bounded
    }

    pub fn unbounded(&self) -> &[NamedBarrier] {
        &self.unbounded
    }

    /// All goal barriers with their labels, bounded first.
    pub fn all(&self) -> impl Iterator<Item = (&str, &Arc<BarrierFunction>)> {
        self.bounded
            .iter()
            .map(|g| (g.label.as_str(), &g.barrier))
            .chain(self.unbounded.iter().map(|g| (g.label.as_str(), &g.barrier)))
    }

    /// Weighted sum of the bounded goal barrier values at `x`.
    pub fn weighted_sum(&self, x: &StackedState) -> Result<f64, ConstraintError> {
        let mut s = 0.0;
        for g in &self.bounded {
            s += g.weight * g.barrier.eval(x)?;
        }
        Ok(s)
    }
}

fn finite_checked(
    label: &str,
    value: f64,
    grad: &[f64],
) -> Result<(), ConstraintError> {
    if !value.is_finite() || !grad.iter().all(|v| v.is_finite()) {
        return Err(ConstraintError::NonFiniteBarrier {
            label: String::from(label),
        });
    }
    Ok(())
}

/// Builds the individual finite-time row for one barrier:
/// `normal = grad(h)^T g(x)`, `offset = -grad(h)^T f(x) - sign_pow(h)`.
/// A control satisfies the row exactly when it satisfies the finite-time
/// CBF inequality at `x`.
pub fn individual_row(
    barrier: &BarrierFunction,
    dynamics: &ControlAffineDynamics,
    params: &FtcbfParams,
    x: &StackedState,
    tag: RowTag,
) -> Result<ConstraintRow, ConstraintError> {
    let label = match &tag {
        RowTag::Composite => "composite",
        RowTag::IndividualGoal(id) | RowTag::Invariance(id) => id.as_str(),
    };
    let value = barrier.eval(x)?;
    let grad = barrier.gradient(x)?;
    finite_checked(label, value, &grad)?;

    let flat = x.flat();
    let f = dynamics.drift(&flat);
    let g = dynamics.actuation(&flat);
    let normal = g.left_mul(&grad);
    let offset = -linalg::dot(&grad, &f) - params.sign_pow(value);
    Ok(ConstraintRow { normal, offset, tag })
}

/// Builds the composite row over the bounded goal barriers:
/// `normal = sum_i alpha_i grad(h_i)^T g(x)`,
/// `offset = -sum_i alpha_i grad(h_i)^T f(x) - gamma sign(min_i h_i)`.
/// The sign term carries no `|.|^rho` magnitude factor.
pub fn composite_row(
    spec: &CompositeGoalSpec,
    dynamics: &ControlAffineDynamics,
    gamma: f64,
    x: &StackedState,
) -> Result<ConstraintRow, ConstraintError> {
    if spec.bounded().is_empty() {
        return Err(ConstraintError::EmptyCompositeList);
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(ConstraintError::InvalidGamma { gamma });
    }

    let flat = x.flat();
    let f = dynamics.drift(&flat);
    let g = dynamics.actuation(&flat);

    let mut normal = vec![0.0; dynamics.control_dim()];
    let mut drift_term = 0.0;
    let mut min_value = f64::INFINITY;
    for goal in spec.bounded() {
        let value = goal.barrier.eval(x)?;
        let grad = goal.barrier.gradient(x)?;
        finite_checked(&goal.label, value, &grad)?;
        if value < min_value {
            min_value = value;
        }
        let row = g.left_mul(&grad);
        for (n, r) in normal.iter_mut().zip(&row) {
            *n += goal.weight * r;
        }
        drift_term += goal.weight * linalg::dot(&grad, &f);
    }

    let sign = if min_value > 0.0 {
        1.0
    } else if min_value < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(ConstraintRow {
        normal,
        offset: -drift_term - gamma * sign,
        tag: RowTag::Composite,
    })
}

/// Assembles the full row set for a reachability problem at `x`: one
/// composite row when bounded goals exist, one individual row per unbounded
/// goal, and one invariance row per safety barrier. Degenerate rows are kept
/// and flagged rather than aborting assembly.
pub fn assemble_rows(
    goal: &CompositeGoalSpec,
    safety: &[NamedBarrier],
    dynamics: &ControlAffineDynamics,
    params: &FtcbfParams,
    x: &StackedState,
) -> Result<Vec<ConstraintRow>, ConstraintError> {
    let mut rows = Vec::with_capacity(1 + goal.unbounded().len() + safety.len());
    if !goal.bounded().is_empty() {
        rows.push(composite_row(goal, dynamics, params.gamma(), x)?);
    }
    for g in goal.unbounded() {
        rows.push(individual_row(
            &g.barrier,
            dynamics,
            params,
            x,
            RowTag::IndividualGoal(g.label.clone()),
        )?);
    }
    for s in safety {
        rows.push(individual_row(
            &s.barrier,
            dynamics,
            params,
            x,
            RowTag::Invariance(s.label.clone()),
        )?);
    }
    Ok(rows)
}

/// The `q' = 0` variant: every goal barrier, bounded or not, gets its own
/// individual finite-time row. Used to compare the composite feasible set
/// against the all-individual one.
pub fn assemble_rows_individual(
    goal: &CompositeGoalSpec,
    safety: &[NamedBarrier],
    dynamics: &ControlAffineDynamics,
    params: &FtcbfParams,
    x: &StackedState,
) -> Result<Vec<ConstraintRow>, ConstraintError> {
    let mut rows = Vec::new();
    for (label, barrier) in goal.all() {
        rows.push(individual_row(
            barrier,
            dynamics,
            params,
            x,
            RowTag::IndividualGoal(String::from(label)),
        )?);
    }
    for s in safety {
        rows.push(individual_row(
            &s.barrier,
            dynamics,
            params,
            x,
            RowTag::Invariance(s.label.clone()),
        )?);
    }
    Ok(rows)
}

/// Upper bound on the time to reach `{h >= 0}` from barrier value `h0`
/// under an individual finite-time row: `|h0|^(1-rho) / (gamma (1-rho))`,
/// zero when already inside.
pub fn reach_time_bound(h0: f64, params: &FtcbfParams) -> f64 {
    if h0 >= 0.0 {
        return 0.0;
    }
    libm::pow(libm::fabs(h0), 1.0 - params.rho()) / (params.gamma() * (1.0 - params.rho()))
}

/// Diagnostic estimate of the composite reach horizon: the worst individual
/// bound over the unbounded goals, plus the bounded-sum headroom
/// `sum_i alpha_i (M_i - h_i(x)) / gamma` consumed at rate `gamma`. The
/// bounded part uses the current state in place of the unknown intermediate
/// state, so this is an estimate, not a certified bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeReachEstimate {
    /// Worst Prop.-1 bound over the individual (unbounded) goal rows.
    pub individual_horizon: f64,
    /// Estimated total horizon including the composite phase.
    pub total: f64,
}

pub fn composite_reach_estimate(
    spec: &CompositeGoalSpec,
    params: &FtcbfParams,
    x: &StackedState,
) -> Result<CompositeReachEstimate, ConstraintError> {
    let mut individual_horizon = 0.0_f64;
    for g in spec.unbounded() {
        let t = reach_time_bound(g.barrier.eval(x)?, params);
        if t > individual_horizon {
            individual_horizon = t;
        }
    }
    let mut headroom = 0.0;
    for g in spec.bounded() {
        let m = g.barrier.bounded_above().unwrap_or(f64::INFINITY);
        let h = g.barrier.eval(x)?;
        headroom += g.weight * (m - h);
    }
    if headroom < 0.0 {
        headroom = 0.0;
    }
    let total = if spec.bounded().is_empty() {
        individual_horizon
    } else {
        individual_horizon + headroom / params.gamma()
    };
    Ok(CompositeReachEstimate {
        individual_horizon,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AgentState, QuadraticRegion};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_region_at(cx: f64, cy: f64) -> QuadraticRegion {
        QuadraticRegion::new(vec![cx, cy], Mat::identity(2)).unwrap()
    }

    fn stacked(coords: &[[f64; 2]]) -> StackedState {
        StackedState::new(
            coords
                .iter()
                .map(|c| AgentState::new(c.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sign_pow_known_values_and_domain() {
        assert_eq!(sign_pow(0.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(sign_pow(-4.0, 1.0, 0.5).unwrap(), -2.0);
        assert_eq!(sign_pow(9.0, 2.0, 0.5).unwrap(), 6.0);
        assert!(sign_pow(1.0, 0.0, 0.5).is_err());
        assert!(sign_pow(1.0, -1.0, 0.5).is_err());
        assert!(sign_pow(1.0, 1.0, 1.0).is_err());
        assert!(sign_pow(1.0, 1.0, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn sign_pow_is_odd_and_monotone(
            h1 in -50.0f64..50.0,
            h2 in -50.0f64..50.0,
            gamma in 0.1f64..5.0,
            rho in 0.0f64..0.99,
        ) {
            let params = FtcbfParams::new(gamma, rho).unwrap();
            let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            prop_assert!(params.sign_pow(lo) <= params.sign_pow(hi));
            prop_assert!((params.sign_pow(-h1) + params.sign_pow(h1)).abs() < 1e-12);
        }
    }

    #[test]
    fn params_validate_domains() {
        assert!(FtcbfParams::new(1.0, 0.0).is_ok());
        assert!(FtcbfParams::new(1.0, 0.999).is_ok());
        assert!(FtcbfParams::new(0.0, 0.5).is_err());
        assert!(FtcbfParams::new(1.0, 1.0).is_err());
    }

    #[test]
    fn individual_row_matches_hand_assembly() {
        // single integrator, h quadratic P=I, C=0, x=(2,0), gamma=1, rho=0:
        // grad = (-4, 0), sign_pow(-3) = -1, so normal = (-4, 0), offset = 1
        let dynamics = ControlAffineDynamics::single_integrator(2);
        let params = FtcbfParams::new(1.0, 0.0).unwrap();
        let h = BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0));
        let x = stacked(&[[2.0, 0.0]]);
        let row = individual_row(&h, &dynamics, &params, &x, RowTag::IndividualGoal("g".into()))
            .unwrap();
        assert_eq!(row.normal, vec![-4.0, 0.0]);
        assert_eq!(row.offset, 1.0);
        assert!(!row.is_pointwise_infeasible());
    }

    #[test]
    fn individual_row_is_slack_inside_the_region() {
        let dynamics = ControlAffineDynamics::single_integrator(2);
        let params = FtcbfParams::new(2.0, 0.5).unwrap();
        let h = BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0));
        let x = stacked(&[[0.0, 0.0]]);
        let row = individual_row(&h, &dynamics, &params, &x, RowTag::IndividualGoal("g".into()))
            .unwrap();
        assert_eq!(row.normal, vec![0.0, 0.0]);
        assert!(row.offset < 0.0);
        assert!(row.residual(&[0.0, 0.0]) >= 0.0);
        assert!(!row.is_pointwise_infeasible());
    }

    #[test]
    fn degenerate_critical_point_is_flagged() {
        // a barrier with zero gradient but negative value: row is 0.u >= gamma
        let h = BarrierFunction::custom(|_| -1.0, |x| vec![0.0; x.total_dim()]);
        let dynamics = ControlAffineDynamics::single_integrator(2);
        let params = FtcbfParams::new(1.0, 0.0).unwrap();
        let x = stacked(&[[0.0, 0.0]]);
        let row = individual_row(&h, &dynamics, &params, &x, RowTag::Invariance("bad".into()))
            .unwrap();
        assert_eq!(row.normal, vec![0.0, 0.0]);
        assert_eq!(row.offset, 1.0);
        assert!(row.is_pointwise_infeasible());
    }

    #[test]
    fn non_finite_barrier_value_is_an_error() {
        let h = BarrierFunction::custom(|_| f64::NAN, |x| vec![0.0; x.total_dim()]);
        let dynamics = ControlAffineDynamics::single_integrator(2);
        let params = FtcbfParams::new(1.0, 0.0).unwrap();
        let x = stacked(&[[0.0, 0.0]]);
        assert!(matches!(
            individual_row(&h, &dynamics, &params, &x, RowTag::Invariance("nan".into())),
            Err(ConstraintError::NonFiniteBarrier { .. })
        ));
    }

    fn two_agent_goal_spec(alpha: f64) -> CompositeGoalSpec {
        let h_a = Arc::new(BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0)));
        let h_b = Arc::new(BarrierFunction::quadratic(1, unit_region_at(4.0, 0.0)));
        CompositeGoalSpec::new(
            vec![
                BoundedGoal {
                    label: "A".into(),
                    barrier: h_a,
                    weight: alpha,
                },
                BoundedGoal {
                    label: "B".into(),
                    barrier: h_b,
                    weight: alpha,
                },
            ],
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn composite_row_matches_hand_assembly() {
        // h_A on agent 1 at origin, h_B on agent 2 at (4,0), both agents at
        // (2,0): grads are (-4,0) and (4,0); min(h) = -3 < 0 so offset = +1.
        let dynamics = ControlAffineDynamics::single_integrator(4);
        let spec = two_agent_goal_spec(1.0);
        let x = stacked(&[[2.0, 0.0], [2.0, 0.0]]);
        let row = composite_row(&spec, &dynamics, 1.0, &x).unwrap();
        assert_eq!(row.normal, vec![-4.0, 0.0, 4.0, 0.0]);
        assert_eq!(row.offset, 1.0);
        assert_eq!(row.tag, RowTag::Composite);
    }

    #[test]
    fn composite_offset_relaxes_inside_the_goal() {
        let dynamics = ControlAffineDynamics::single_integrator(4);
        let spec = two_agent_goal_spec(1.0);
        // both agents at their goal centers: min h = 1 > 0, offset = -gamma
        let inside = stacked(&[[0.0, 0.0], [4.0, 0.0]]);
        let row = composite_row(&spec, &dynamics, 1.0, &inside).unwrap();
        assert_eq!(row.offset, -1.0);
    }

    #[test]
    fn composite_sign_is_zero_on_the_boundary() {
        let dynamics = ControlAffineDynamics::single_integrator(4);
        let spec = two_agent_goal_spec(1.0);
        // agent 1 on the region boundary (h_A = 0), agent 2 inside (h_B = 1)
        let boundary = stacked(&[[1.0, 0.0], [4.0, 0.0]]);
        let row = composite_row(&spec, &dynamics, 1.0, &boundary).unwrap();
        // drift-free single integrator: offset = -gamma * sign(0) = 0
        assert_eq!(row.offset, 0.0);
    }

    #[test]
    fn composite_normal_is_exactly_the_weighted_sum_of_goal_rows() {
        let dynamics = ControlAffineDynamics::single_integrator(4);
        let params = FtcbfParams::new(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let alpha = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
            let h_a = Arc::new(BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0)));
            let h_b = Arc::new(BarrierFunction::quadratic(1, unit_region_at(4.0, 0.0)));
            let spec = CompositeGoalSpec::new(
                vec![
                    BoundedGoal {
                        label: "A".into(),
                        barrier: h_a.clone(),
                        weight: alpha[0],
                    },
                    BoundedGoal {
                        label: "B".into(),
                        barrier: h_b.clone(),
                        weight: alpha[1],
                    },
                ],
                Vec::new(),
            )
            .unwrap();
            let x = stacked(&[
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            ]);
            let composite = composite_row(&spec, &dynamics, 1.0, &x).unwrap();
            let row_a =
                individual_row(&h_a, &dynamics, &params, &x, RowTag::IndividualGoal("A".into()))
                    .unwrap();
            let row_b =
                individual_row(&h_b, &dynamics, &params, &x, RowTag::IndividualGoal("B".into()))
                    .unwrap();
            for k in 0..4 {
                let weighted = alpha[0] * row_a.normal[k] + alpha[1] * row_b.normal[k];
                assert_eq!(composite.normal[k], weighted);
            }
        }
    }

    #[test]
    fn row_soundness_against_direct_recomputation() {
        // u satisfies the row iff L_f h + L_g h u + sign_pow(h) >= 0,
        // recomputed here without going through row assembly.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let params = FtcbfParams::new(1.3, 0.4).unwrap();
        let region = QuadraticRegion::new(
            vec![0.5, -0.25],
            Mat::from_row_major(2, 2, &[2.0, 0.3, 0.3, 1.5]),
        )
        .unwrap();
        let h = BarrierFunction::quadratic(0, region);
        // drift-ful dynamics to exercise the L_f term
        let dynamics = ControlAffineDynamics::new(
            2,
            2,
            |x| vec![0.1 * x[1], -0.2 * x[0]],
            |_| Mat::from_row_major(2, 2, &[1.0, 0.5, 0.0, 1.0]),
        );
        for _ in 0..1000 {
            let x = stacked(&[[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]]);
            let u = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let row =
                individual_row(&h, &dynamics, &params, &x, RowTag::Invariance("h".into()))
                    .unwrap();

            let flat = x.flat();
            let grad = h.gradient(&x).unwrap();
            let f = dynamics.drift(&flat);
            let g = dynamics.actuation(&flat);
            let gu = g.matvec(&u);
            let direct = linalg::dot(&grad, &f)
                + linalg::dot(&grad, &gu)
                + params.sign_pow(h.eval(&x).unwrap());

            let via_row = row.residual(&u);
            assert!(
                (direct - via_row).abs() <= 1e-12,
                "direct {direct} vs row {via_row}"
            );
        }
    }

    #[test]
    fn assemble_counts_rows_like_the_two_robot_example() {
        // goals A, B bounded -> one composite row; two obstacle complements
        // and one connectivity barrier -> three invariance rows.
        let dynamics = ControlAffineDynamics::single_integrator(4);
        let params = FtcbfParams::new(1.0, 0.5).unwrap();
        let spec = two_agent_goal_spec(1.0);
        let obstacle = Arc::new(BarrierFunction::quadratic(0, unit_region_at(2.0, 2.0)));
        let obstacle2 = Arc::new(BarrierFunction::quadratic(1, unit_region_at(2.0, 2.0)));
        let safety = vec![
            NamedBarrier::new(
                "!o1",
                Arc::new(BarrierFunction::complement(obstacle, 0.05).unwrap()),
            ),
            NamedBarrier::new(
                "!o2",
                Arc::new(BarrierFunction::complement(obstacle2, 0.05).unwrap()),
            ),
            NamedBarrier::new(
                "globe",
                Arc::new(BarrierFunction::connectivity((0, 1), 1.5, 0.25).unwrap()),
            ),
        ];
        let x = stacked(&[[-1.0, -1.0], [1.0, -1.0]]);
        let rows = assemble_rows(&spec, &safety, &dynamics, &params, &x).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].tag, RowTag::Composite);
        assert!(matches!(rows[1].tag, RowTag::Invariance(_)));

        // empty safety set and one unbounded goal -> exactly one row
        let lone = CompositeGoalSpec::new(
            Vec::new(),
            vec![NamedBarrier::new(
                "far",
                Arc::new(
                    BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0))
                        .with_bound(None)
                        .unwrap(),
                ),
            )],
        )
        .unwrap();
        let rows = assemble_rows(&lone, &[], &dynamics, &params, &x).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(matches!(rows[0].tag, RowTag::IndividualGoal(_)));

        // q' = 0 variant expands the composite into per-goal rows
        let rows = assemble_rows_individual(&spec, &safety, &dynamics, &params, &x).unwrap();
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn composite_spec_validates_weights_and_bounds() {
        let h = Arc::new(BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0)));
        assert!(matches!(
            CompositeGoalSpec::new(
                vec![BoundedGoal {
                    label: "A".into(),
                    barrier: h.clone(),
                    weight: 0.0,
                }],
                Vec::new(),
            ),
            Err(ConstraintError::NonPositiveWeight { .. })
        ));
        let unbounded = Arc::new(
            BarrierFunction::quadratic(0, unit_region_at(0.0, 0.0))
                .with_bound(None)
                .unwrap(),
        );
        assert!(matches!(
            CompositeGoalSpec::new(
                vec![BoundedGoal {
                    label: "A".into(),
                    barrier: unbounded,
                    weight: 1.0,
                }],
                Vec::new(),
            ),
            Err(ConstraintError::UnboundedCompositeBarrier { .. })
        ));
        assert!(matches!(
            CompositeGoalSpec::new(Vec::new(), Vec::new()),
            Err(ConstraintError::EmptyGoal)
        ));
    }

    #[test]
    fn reach_time_bound_formula() {
        let p = FtcbfParams::new(2.0, 0.0).unwrap();
        assert_eq!(reach_time_bound(-1.0, &p), 0.5);
        let p = FtcbfParams::new(1.0, 0.5).unwrap();
        assert_eq!(reach_time_bound(-4.0, &p), 4.0);
        assert_eq!(reach_time_bound(0.7, &p), 0.0);
        assert_eq!(reach_time_bound(0.0, &p), 0.0);
    }
}
