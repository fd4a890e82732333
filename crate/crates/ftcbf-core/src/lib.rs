//! Controller synthesis for continuous-time multi-agent systems using
//! finite-time convergence control barrier functions.
//!
//! The crate drives control-affine systems through sequences of constrained
//! reachability objectives. Each objective is a pair of barrier collections:
//! goal barriers that must be reached in finite time and safety barriers that
//! must stay nonnegative throughout. At every control step the barrier
//! conditions are linearized into inequality rows on the control input and a
//! minimum-energy quadratic program picks the feasible control of least norm.
//!
//! Modules, bottom up:
//!
//! - [`linalg`]: small dense vector/matrix helpers (Jacobi eigensolver,
//!   Gaussian elimination) shared by the rest of the crate.
//! - [`barrier`]: level-set functions over stacked multi-agent states,
//!   their gradients, and region-membership propositions.
//! - [`constraints`]: finite-time CBF inequality rows, individual and
//!   composite, plus reach-time bounds.
//! - [`qp`]: deterministic dense solver for `min ||u||^2` subject to the
//!   assembled rows, with KKT verification and infeasibility certificates.
//! - [`task`]: constrained reachability problems induced by proposition
//!   sets, lasso sequences, and trace recording/checking.
//! - [`sim`]: the closed-loop executive that integrates the dynamics under
//!   the QP controller and verifies the resulting trace.
//!
//! The crate is `no_std` (with `alloc`); all numerics are `f64` and every
//! computation is deterministic for fixed inputs.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod barrier;
pub mod constraints;
pub mod linalg;
pub mod qp;
pub mod sim;
pub mod task;

pub use barrier::{
    AgentState, AtomicProposition, BarrierFunction, PropId, QuadraticRegion, StackedState,
    Workspace,
};
pub use constraints::{
    CompositeGoalSpec, ConstraintRow, ControlAffineDynamics, FtcbfParams, NamedBarrier, RowTag,
};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use sim::{RunVerdict, Scenario, SimConfig, SimResult};
pub use task::{
    InducedProblemSpec, LassoSequence, LassoVerdict, PropositionSet, ReachabilityProblem,
    TraceRecord, Waypoint,
};
