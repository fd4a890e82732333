//! Level-set functions, their gradients, and the region/proposition geometry
//! of the multi-agent workspace.
//!
//! A barrier is a differentiable scalar field `h` over the stacked state of
//! all agents. Its super-zero level set `{x | h(x) >= 0}` is the region the
//! controller either reaches (goal barriers) or keeps invariant (safety
//! barriers). Atomic propositions label those regions: a proposition holds
//! exactly when its barrier evaluates nonnegative, with no hidden tolerance.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Mat};

/// Errors raised by barrier construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum BarrierError {
    DimensionMismatch { expected: usize, got: usize },
    InvalidAgentIndex { index: usize, agents: usize },
    NonFiniteInput,
    NotSymmetric { max_asymmetry: f64 },
    NotPositiveDefinite { min_eigenvalue: f64 },
    NonPositiveEpsilon { epsilon: f64 },
    NonPositiveBound { bound: f64 },
    EmptyState,
    DuplicatePropositionId { id: String },
    SelfPair { index: usize },
}

impl fmt::Display for BarrierError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::InvalidAgentIndex { index, agents } => {
                write!(f, "agent index {index} out of range for {agents} agents")
            }
            Self::NonFiniteInput => write!(f, "non-finite input"),
            Self::NotSymmetric { max_asymmetry } => {
                write!(f, "shape matrix not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")
            }
            Self::NotPositiveDefinite { min_eigenvalue } => {
                write!(f, "shape matrix not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            Self::NonPositiveEpsilon { epsilon } => {
                write!(f, "complement margin must be positive, got {epsilon}")
            }
            Self::NonPositiveBound { bound } => {
                write!(f, "upper bound must be positive, got {bound}")
            }
            Self::EmptyState => write!(f, "state must contain at least one agent with n >= 1"),
            Self::DuplicatePropositionId { id } => {
                write!(f, "duplicate proposition id `{id}` in workspace")
            }
            Self::SelfPair { index } => {
                write!(f, "connectivity pair must name two distinct agents, got ({index}, {index})")
            }
        }
    }
}

impl core::error::Error for BarrierError {}

/// Position of a single agent in the workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    position: Vec<f64>,
}

impl AgentState {
    pub fn new(position: Vec<f64>) -> Result<Self, BarrierError> {
        if position.is_empty() {
            return Err(BarrierError::EmptyState);
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(BarrierError::NonFiniteInput);
        }
        Ok(Self { position })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }
}

/// Ordered positions of all agents; every agent shares the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    agents: Vec<AgentState>,
}

impl StackedState {
    pub fn new(agents: Vec<AgentState>) -> Result<Self, BarrierError> {
        let first = agents.first().ok_or(BarrierError::EmptyState)?;
        let n = first.dim();
        for a in &agents {
            if a.dim() != n {
                return Err(BarrierError::DimensionMismatch {
                    expected: n,
                    got: a.dim(),
                });
            }
        }
        Ok(Self { agents })
    }

    /// Rebuilds a stacked state from the flat vector layout used by the
    /// dynamics and the QP (agent-major, coordinates contiguous per agent).
    pub fn from_flat(agent_count: usize, dim: usize, flat: &[f64]) -> Result<Self, BarrierError> {
        if agent_count == 0 || dim == 0 {
            return Err(BarrierError::EmptyState);
        }
        if flat.len() != agent_count * dim {
            return Err(BarrierError::DimensionMismatch {
                expected: agent_count * dim,
                got: flat.len(),
            });
        }
        let mut agents = Vec::with_capacity(agent_count);
        for i in 0..agent_count {
            agents.push(AgentState::new(flat[i * dim..(i + 1) * dim].to_vec())?);
        }
        Self::new(agents)
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_dim(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn total_dim(&self) -> usize {
        self.agents.len() * self.agent_dim()
    }

    pub fn agent(&self, i: usize) -> Result<&AgentState, BarrierError> {
        self.agents.get(i).ok_or(BarrierError::InvalidAgentIndex {
            index: i,
            agents: self.agents.len(),
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for a in &self.agents {
            out.extend_from_slice(a.position());
        }
        out
    }
}

/// Ellipsoidal region `{x | 1 - (x - c)^T P (x - c) >= 0}` with positive
/// definite shape matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRegion {
    center: Vec<f64>,
    shape: Mat,
}

impl QuadraticRegion {
    /// Validates shape eagerly: symmetry within `1e-12` and all eigenvalues
    /// strictly positive (checked via a symmetric eigendecomposition).
    pub fn new(center: Vec<f64>, shape: Mat) -> Result<Self, BarrierError> {
        if center.is_empty() {
            return Err(BarrierError::EmptyState);
        }
        if !center.iter().all(|v| v.is_finite()) || !shape.is_finite() {
            return Err(BarrierError::NonFiniteInput);
        }
        if !shape.is_square() || shape.rows() != center.len() {
            return Err(BarrierError::DimensionMismatch {
                expected: center.len(),
                got: shape.rows(),
            });
        }
        let asym = shape.max_asymmetry();
        if asym > 1e-12 {
            return Err(BarrierError::NotSymmetric { max_asymmetry: asym });
        }
        let (eigs, _) = linalg::sym_eigen(&shape);
        let min_eig = eigs[0];
        if !(min_eig > 0.0) {
            return Err(BarrierError::NotPositiveDefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { center, shape })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &Mat {
        &self.shape
    }
}

/// `h_r(x_i) = 1 - (x_i - c)^T P (x_i - c)`; at most 1 everywhere since
/// `P` is positive definite.
pub fn eval_quadratic(region: &QuadraticRegion, x: &AgentState) -> Result<f64, BarrierError> {
    if x.dim() != region.dim() {
        return Err(BarrierError::DimensionMismatch {
            expected: region.dim(),
            got: x.dim(),
        });
    }
    let mut d = x.position().to_vec();
    for (di, ci) in d.iter_mut().zip(region.center()) {
        *di -= ci;
    }
    let pd = region.shape.matvec(&d);
    Ok(1.0 - linalg::dot(&d, &pd))
}

/// Analytic gradient of [`eval_quadratic`] with respect to the agent
/// position: `-2 P (x_i - c)`. Vanishes exactly at the center.
pub fn grad_quadratic(region: &QuadraticRegion, x: &AgentState) -> Result<Vec<f64>, BarrierError> {
    if x.dim() != region.dim() {
        return Err(BarrierError::DimensionMismatch {
            expected: region.dim(),
            got: x.dim(),
        });
    }
    let mut d = x.position().to_vec();
    for (di, ci) in d.iter_mut().zip(region.center()) {
        *di -= ci;
    }
    let mut g = region.shape.matvec(&d);
    for gi in g.iter_mut() {
        *gi *= -2.0;
    }
    Ok(g)
}

/// State-dependent connectivity margin between agents `i` and `j`:
/// `(x_{j,1} + delta1)^2 + delta2 - ||x_j - x_i||^2`. Positive exactly when
/// the agents are within the connectivity radius, which shrinks and grows
/// with the first coordinate of agent `j`.
pub fn eval_connectivity(
    x: &StackedState,
    delta1: f64,
    delta2: f64,
    pair: (usize, usize),
) -> Result<f64, BarrierError> {
    let (i, j) = pair;
    let xi = x.agent(i)?.position();
    let xj = x.agent(j)?.position();
    let radius_sq = (xj[0] + delta1) * (xj[0] + delta1) + delta2;
    let mut sep_sq = 0.0;
    for (a, b) in xj.iter().zip(xi) {
        sep_sq += (a - b) * (a - b);
    }
    Ok(radius_sq - sep_sq)
}

/// `-inner - epsilon`: nonnegative return certifies the state lies strictly
/// outside the inner barrier's region.
pub fn eval_complement(inner_value: f64, epsilon: f64) -> Result<f64, BarrierError> {
    if !(epsilon > 0.0) {
        return Err(BarrierError::NonPositiveEpsilon { epsilon });
    }
    Ok(-inner_value - epsilon)
}

type EvalFn = dyn Fn(&StackedState) -> f64 + Send + Sync;
type GradFn = dyn Fn(&StackedState) -> Vec<f64> + Send + Sync;

enum BarrierKind {
    QuadraticRegion {
        agent: usize,
        region: QuadraticRegion,
    },
    Complement {
        inner: Arc<BarrierFunction>,
        epsilon: f64,
    },
    Connectivity {
        pair: (usize, usize),
        delta1: f64,
        delta2: f64,
    },
    Custom {
        eval: Box<EvalFn>,
        gradient: Box<GradFn>,
    },
}

impl fmt::Debug for BarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::QuadraticRegion { agent, region } => f
                .debug_struct("QuadraticRegion")
                .field("agent", agent)
                .field("region", region)
                .finish(),
            Self::Complement { inner, epsilon } => f
                .debug_struct("Complement")
                .field("inner", inner)
                .field("epsilon", epsilon)
                .finish(),
            Self::Connectivity { pair, delta1, delta2 } => f
                .debug_struct("Connectivity")
                .field("pair", pair)
                .field("delta1", delta1)
                .field("delta2", delta2)
                .finish(),
            Self::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

/// A differentiable scalar field over the stacked state, together with
/// optional boundedness metadata used by the composite reachability
/// constraint. Immutable after construction and safe to share across
/// threads; evaluation is pure.
#[derive(Debug)]
pub struct BarrierFunction {
    kind: BarrierKind,
    bounded_above: Option<f64>,
}

impl BarrierFunction {
    /// Region-membership barrier for one agent. Quadratic regions are
    /// bounded above by 1 by construction, so the bound metadata defaults
    /// to `Some(1.0)`.
    pub fn quadratic(agent: usize, region: QuadraticRegion) -> Self {
        Self {
            kind: BarrierKind::QuadraticRegion { agent, region },
            bounded_above: Some(1.0),
        }
    }

    /// Margin-complement barrier `-h - epsilon` around an existing barrier.
    pub fn complement(inner: Arc<BarrierFunction>, epsilon: f64) -> Result<Self, BarrierError> {
        if !(epsilon > 0.0) {
            return Err(BarrierError::NonPositiveEpsilon { epsilon });
        }
        Ok(Self {
            kind: BarrierKind::Complement { inner, epsilon },
            bounded_above: None,
        })
    }

    /// Pairwise connectivity barrier; agent `pair.1` supplies the coordinate
    /// that modulates the connectivity radius.
    pub fn connectivity(pair: (usize, usize), delta1: f64, delta2: f64) -> Result<Self, BarrierError> {
        if pair.0 == pair.1 {
            return Err(BarrierError::SelfPair { index: pair.0 });
        }
        Ok(Self {
            kind: BarrierKind::Connectivity { pair, delta1, delta2 },
            bounded_above: None,
        })
    }

    /// User-supplied evaluation and gradient callbacks. Boundedness metadata
    /// cannot be inferred for a callback, so it defaults to `None`; declare
    /// it through [`BarrierFunction::with_bound`] if known.
    pub fn custom<E, G>(eval: E, gradient: G) -> Self
    where
        E: Fn(&StackedState) -> f64 + Send + Sync + 'static,
        G: Fn(&StackedState) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            kind: BarrierKind::Custom {
                eval: Box::new(eval),
                gradient: Box::new(gradient),
            },
            bounded_above: None,
        }
    }

    /// Overrides the declared upper bound `M` (with `h(x) < M` on the
    /// domain). `Some(M)` requires `M > 0`.
    pub fn with_bound(mut self, bound: Option<f64>) -> Result<Self, BarrierError> {
        if let Some(m) = bound {
            if !(m > 0.0) {
                return Err(BarrierError::NonPositiveBound { bound: m });
            }
        }
        self.bounded_above = bound;
        Ok(self)
    }

    pub fn bounded_above(&self) -> Option<f64> {
        self.bounded_above
    }

    pub fn eval(&self, x: &StackedState) -> Result<f64, BarrierError> {
        match &self.kind {
            BarrierKind::QuadraticRegion { agent, region } => {
                eval_quadratic(region, x.agent(*agent)?)
            }
            BarrierKind::Complement { inner, epsilon } => {
                eval_complement(inner.eval(x)?, *epsilon)
            }
            BarrierKind::Connectivity { pair, delta1, delta2 } => {
                eval_connectivity(x, *delta1, *delta2, *pair)
            }
            BarrierKind::Custom { eval, .. } => Ok(eval(x)),
        }
    }

    /// Gradient with respect to the full stacked state, length
    /// `x.total_dim()`.
    pub fn gradient(&self, x: &StackedState) -> Result<Vec<f64>, BarrierError> {
        let n = x.agent_dim();
        match &self.kind {
            BarrierKind::QuadraticRegion { agent, region } => {
                let block = grad_quadratic(region, x.agent(*agent)?)?;
                let mut g = vec![0.0; x.total_dim()];
                g[agent * n..(agent + 1) * n].copy_from_slice(&block);
                Ok(g)
            }
            BarrierKind::Complement { inner, .. } => {
                let mut g = inner.gradient(x)?;
                for gi in g.iter_mut() {
                    *gi = -*gi;
                }
                Ok(g)
            }
            BarrierKind::Connectivity { pair, delta1, .. } => {
                let (i, j) = *pair;
                let xi = x.agent(i)?.position().to_vec();
                let xj = x.agent(j)?.position().to_vec();
                let mut g = vec![0.0; x.total_dim()];
                for k in 0..n {
                    let diff = xj[k] - xi[k];
                    g[i * n + k] = 2.0 * diff;
                    g[j * n + k] = -2.0 * diff;
                }
                g[j * n] += 2.0 * (xj[0] + delta1);
                Ok(g)
            }
            BarrierKind::Custom { gradient, .. } => {
                let g = gradient(x);
                if g.len() != x.total_dim() {
                    return Err(BarrierError::DimensionMismatch {
                        expected: x.total_dim(),
                        got: g.len(),
                    });
                }
                Ok(g)
            }
        }
    }
}

/// Identifier of an atomic proposition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropId(String);

impl PropId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PropId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PropId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl From<String> for PropId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Boolean label on states: holds exactly when the barrier is nonnegative.
#[derive(Debug, Clone)]
pub struct AtomicProposition {
    id: PropId,
    barrier: Arc<BarrierFunction>,
}

impl AtomicProposition {
    pub fn new(id: impl Into<PropId>, barrier: Arc<BarrierFunction>) -> Self {
        Self {
            id: id.into(),
            barrier,
        }
    }

    pub fn id(&self) -> &PropId {
        &self.id
    }

    pub fn barrier(&self) -> &Arc<BarrierFunction> {
        &self.barrier
    }

    /// True iff the barrier evaluates `>= 0` (the boundary counts as inside).
    ///
    /// Panics if the state shape does not match the barrier; workspaces
    /// validate their propositions at construction, so this cannot happen
    /// for states of the workspace's shape.
    pub fn holds(&self, x: &StackedState) -> bool {
        let v = self
            .barrier
            .eval(x)
            .expect("proposition barrier must be evaluable on workspace states");
        v >= 0.0
    }
}

/// The proposition alphabet of a multi-agent workspace.
#[derive(Debug, Clone)]
pub struct Workspace {
    agent_count: usize,
    agent_dim: usize,
    props: Vec<AtomicProposition>,
}

impl Workspace {
    /// Validates that proposition ids are distinct and every barrier is
    /// structurally evaluable on states of the given shape.
    pub fn new(
        agent_count: usize,
        agent_dim: usize,
        props: Vec<AtomicProposition>,
    ) -> Result<Self, BarrierError> {
        if agent_count == 0 || agent_dim == 0 {
            return Err(BarrierError::EmptyState);
        }
        let mut seen = BTreeSet::new();
        for p in &props {
            if !seen.insert(p.id().clone()) {
                return Err(BarrierError::DuplicatePropositionId {
                    id: format!("{}", p.id()),
                });
            }
        }
        let probe = StackedState::from_flat(agent_count, agent_dim, &vec![0.0; agent_count * agent_dim])?;
        for p in &props {
            p.barrier().eval(&probe)?;
            p.barrier().gradient(&probe)?;
        }
        Ok(Self {
            agent_count,
            agent_dim,
            props,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn agent_dim(&self) -> usize {
        self.agent_dim
    }

    pub fn props(&self) -> &[AtomicProposition] {
        &self.props
    }

    pub fn prop(&self, id: &PropId) -> Option<&AtomicProposition> {
        self.props.iter().find(|p| p.id() == id)
    }

    /// The unique maximal valuation at `x`: the set of all propositions that
    /// hold there.
    pub fn valuation(&self, x: &StackedState) -> BTreeSet<PropId> {
        self.props
            .iter()
            .filter(|p| p.holds(x))
            .map(|p| p.id().clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_region() -> QuadraticRegion {
        QuadraticRegion::new(vec![0.0, 0.0], Mat::identity(2)).unwrap()
    }

    fn state2(a: [f64; 2], b: [f64; 2]) -> StackedState {
        StackedState::new(vec![
            AgentState::new(a.to_vec()).unwrap(),
            AgentState::new(b.to_vec()).unwrap(),
        ])
        .unwrap()
    }

    /// Central finite differences over the stacked state; the independent
    /// oracle against which analytic gradients are checked.
    fn fd_gradient(b: &BarrierFunction, x: &StackedState, step: f64) -> Vec<f64> {
        let n_agents = x.agent_count();
        let dim = x.agent_dim();
        let flat = x.flat();
        let mut g = vec![0.0; flat.len()];
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[k] += step;
            minus[k] -= step;
            let xp = StackedState::from_flat(n_agents, dim, &plus).unwrap();
            let xm = StackedState::from_flat(n_agents, dim, &minus).unwrap();
            g[k] = (b.eval(&xp).unwrap() - b.eval(&xm).unwrap()) / (2.0 * step);
        }
        g
    }

    fn assert_grad_close(analytic: &[f64], fd: &[f64]) {
        let scale = crate::linalg::norm2(fd).max(1.0);
        for (a, f) in analytic.iter().zip(fd) {
            assert!(
                (a - f).abs() / scale < 1e-5,
                "gradient mismatch: analytic {a}, fd {f}"
            );
        }
    }

    #[test]
    fn quadratic_values_at_center_boundary_outside() {
        let r = unit_region();
        let center = AgentState::new(vec![0.0, 0.0]).unwrap();
        let boundary = AgentState::new(vec![1.0, 0.0]).unwrap();
        let outside = AgentState::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(eval_quadratic(&r, &center).unwrap(), 1.0);
        assert_eq!(eval_quadratic(&r, &boundary).unwrap(), 0.0);
        assert_eq!(eval_quadratic(&r, &outside).unwrap(), -3.0);
    }

    #[test]
    fn quadratic_gradient_matches_hand_values() {
        let r = unit_region();
        assert_eq!(
            grad_quadratic(&r, &AgentState::new(vec![0.0, 0.0]).unwrap()).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            grad_quadratic(&r, &AgentState::new(vec![2.0, 0.0]).unwrap()).unwrap(),
            vec![-4.0, 0.0]
        );
        // P = diag(1,4), C = (1,1), x = (2,2): -2 P (x - C) = (-2, -8),
        // cross-checked with the finite-difference oracle below.
        let r2 = QuadraticRegion::new(
            vec![1.0, 1.0],
            Mat::from_row_major(2, 2, &[1.0, 0.0, 0.0, 4.0]),
        )
        .unwrap();
        let x = AgentState::new(vec![2.0, 2.0]).unwrap();
        let g = grad_quadratic(&r2, &x).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-12 && (g[1] + 8.0).abs() < 1e-12);

        let b = BarrierFunction::quadratic(0, r2);
        let xs = StackedState::new(vec![x]).unwrap();
        assert_grad_close(&b.gradient(&xs).unwrap(), &fd_gradient(&b, &xs, 1e-6));
    }

    #[test]
    fn quadratic_dimension_mismatch_is_an_error() {
        let r = unit_region();
        let x = AgentState::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            eval_quadratic(&r, &x),
            Err(BarrierError::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(grad_quadratic(&r, &x).is_err());
    }

    #[test]
    fn region_validation_rejects_bad_shapes() {
        let asym = Mat::from_row_major(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            QuadraticRegion::new(vec![0.0, 0.0], asym),
            Err(BarrierError::NotSymmetric { .. })
        ));
        let indef = Mat::from_row_major(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QuadraticRegion::new(vec![0.0, 0.0], indef),
            Err(BarrierError::NotPositiveDefinite { .. })
        ));
        let singular = Mat::from_row_major(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            QuadraticRegion::new(vec![0.0, 0.0], singular),
            Err(BarrierError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn connectivity_values_match_direct_substitution() {
        let coincident = state2([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(
            eval_connectivity(&coincident, 0.0, 1.0, (0, 1)).unwrap(),
            1.0
        );
        let at_radius = state2([0.0, 0.0], [0.0, 1.0]);
        assert_eq!(eval_connectivity(&at_radius, 0.0, 1.0, (0, 1)).unwrap(), 0.0);
        // (2 + 1)^2 + 0 - 4 = 5, by direct substitution
        let apart = state2([0.0, 0.0], [2.0, 0.0]);
        assert_eq!(eval_connectivity(&apart, 1.0, 0.0, (0, 1)).unwrap(), 5.0);
    }

    #[test]
    fn connectivity_rejects_invalid_indices() {
        let x = state2([0.0, 0.0], [1.0, 0.0]);
        assert!(matches!(
            eval_connectivity(&x, 0.0, 1.0, (0, 2)),
            Err(BarrierError::InvalidAgentIndex { index: 2, agents: 2 })
        ));
        assert!(BarrierFunction::connectivity((1, 1), 0.0, 1.0).is_err());
    }

    #[test]
    fn complement_values_and_epsilon_domain() {
        assert_eq!(eval_complement(-1.0, 0.05).unwrap(), 0.95);
        assert_eq!(eval_complement(0.0, 0.05).unwrap(), -0.05);
        assert_eq!(eval_complement(-0.05, 0.05).unwrap(), 0.0);
        assert!(eval_complement(1.0, 0.0).is_err());
        assert!(eval_complement(1.0, -0.1).is_err());
    }

    #[test]
    fn holds_is_exactly_nonnegative_eval() {
        let goal = Arc::new(BarrierFunction::quadratic(0, unit_region()));
        let prop = AtomicProposition::new("goal", goal);
        let at_center = StackedState::new(vec![AgentState::new(vec![0.0, 0.0]).unwrap()]).unwrap();
        let far = StackedState::new(vec![AgentState::new(vec![2.0, 0.0]).unwrap()]).unwrap();
        let boundary = StackedState::new(vec![AgentState::new(vec![1.0, 0.0]).unwrap()]).unwrap();
        assert!(prop.holds(&at_center));
        assert!(!prop.holds(&far));
        // h exactly 0 counts as inside: the inequality is non-strict
        assert!(prop.holds(&boundary));
    }

    #[test]
    fn gradients_match_finite_differences_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let region = QuadraticRegion::new(
            vec![0.3, -0.7],
            Mat::from_row_major(2, 2, &[3.0, 0.5, 0.5, 2.0]),
        )
        .unwrap();
        let quad = BarrierFunction::quadratic(1, region.clone());
        let comp = BarrierFunction::complement(
            Arc::new(BarrierFunction::quadratic(0, region)),
            0.05,
        )
        .unwrap();
        let conn = BarrierFunction::connectivity((0, 1), 1.5, 0.25).unwrap();
        // custom barrier: a quartic well on agent 0 plus a coupling term
        let custom = BarrierFunction::custom(
            |x: &StackedState| {
                let a = x.agents()[0].position();
                let b = x.agents()[1].position();
                1.0 - a[0] * a[0] * a[0] * a[0] - a[1] * a[1] + 0.3 * a[0] * b[1]
            },
            |x: &StackedState| {
                let a = x.agents()[0].position();
                let b = x.agents()[1].position();
                vec![
                    -4.0 * a[0] * a[0] * a[0] + 0.3 * b[1],
                    -2.0 * a[1],
                    0.0,
                    0.3 * a[0],
                ]
            },
        );

        for b in [&quad, &comp, &conn, &custom] {
            for _ in 0..100 {
                let x = state2(
                    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                );
                assert_grad_close(&b.gradient(&x).unwrap(), &fd_gradient(b, &x, 1e-6));
            }
        }
    }

    #[test]
    fn quadratic_stays_at_or_below_declared_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let region = QuadraticRegion::new(
            vec![0.1, 0.2],
            Mat::from_row_major(2, 2, &[4.0, 1.0, 1.0, 9.0]),
        )
        .unwrap();
        let b = BarrierFunction::quadratic(0, region);
        let m = b.bounded_above().unwrap();
        assert_eq!(m, 1.0);
        for _ in 0..500 {
            let x = state2(
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                [0.0, 0.0],
            );
            assert!(b.eval(&x).unwrap() < m);
        }
    }

    #[test]
    fn complement_nonneg_implies_strictly_outside() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inner = Arc::new(BarrierFunction::quadratic(0, unit_region()));
        let comp = BarrierFunction::complement(inner.clone(), 0.05).unwrap();
        for _ in 0..500 {
            let x = state2(
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                [0.0, 0.0],
            );
            if comp.eval(&x).unwrap() >= 0.0 {
                assert!(inner.eval(&x).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn workspace_rejects_duplicate_ids_and_bad_barriers() {
        let b = Arc::new(BarrierFunction::quadratic(0, unit_region()));
        let err = Workspace::new(
            1,
            2,
            vec![
                AtomicProposition::new("p", b.clone()),
                AtomicProposition::new("p", b.clone()),
            ],
        );
        assert!(matches!(err, Err(BarrierError::DuplicatePropositionId { .. })));

        // barrier indexing a missing agent is caught at construction
        let bad = Arc::new(BarrierFunction::quadratic(3, unit_region()));
        assert!(Workspace::new(1, 2, vec![AtomicProposition::new("q", bad)]).is_err());
    }

    #[test]
    fn barrier_types_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<BarrierFunction>();
        assert_send_sync::<Workspace>();
        assert_send_sync::<StackedState>();
    }
}
