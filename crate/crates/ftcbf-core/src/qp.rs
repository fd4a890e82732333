//! Deterministic dense solver for the minimum-energy program
//! `min ||u||^2  s.t.  normal_i . u >= offset_i`.
//!
//! The objective is strictly convex, so the minimizer is the unique
//! Euclidean projection of the origin onto the feasible polyhedron.
//! Multipliers are normalized so that `u = sum_i lambda_i normal_i` at
//! optimality.
//!
//! The solve runs Hildreth-style dual coordinate ascent followed by an
//! active-set refinement pass that snaps the iterate onto the exact face.
//! Infeasibility is declared for a zero-normal positive-offset row, for
//! dual iterates past `1e12` in norm, or when a Farkas certificate is found
//! among small row subsets (certified dual unboundedness).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::constraints::{ConstraintRow, RowTag};
use crate::linalg::{self, Mat};

const MAX_SWEEPS: usize = 10_000;
const DUAL_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e12;

/// Why a problem was declared infeasible, plus the rows involved.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityDiagnostic {
    pub reason: InfeasibilityReason,
    /// Tags of the rows that participate in the conflict.
    pub culprits: Vec<RowTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibilityReason {
    /// A row demands `0 . u >= offset` with positive offset.
    ZeroNormalPositiveOffset,
    /// A nonnegative combination of rows sums to a zero normal with
    /// positive offset (Farkas certificate).
    Certificate,
    /// Dual iterates exceeded the divergence threshold.
    DualDivergence,
}

impl fmt::Display for InfeasibilityDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reason = match self.reason {
            InfeasibilityReason::ZeroNormalPositiveOffset => "zero-normal row with positive offset",
            InfeasibilityReason::Certificate => "certified dual unboundedness",
            InfeasibilityReason::DualDivergence => "dual iterates diverged",
        };
        write!(f, "{reason}; conflicting rows: ")?;
        for (k, tag) in self.culprits.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{tag}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpStatus {
    Optimal,
    Infeasible(InfeasibilityDiagnostic),
    /// Iteration cap hit without meeting tolerances; callers treat this as
    /// failure.
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub status: QpStatus,
}

/// Errors raised by problem construction.
#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    RowDimensionMismatch { expected: usize, got: usize },
    NonFiniteRow { index: usize },
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowDimensionMismatch { expected, got } => {
                write!(f, "row normal has length {got}, expected {expected}")
            }
            Self::NonFiniteRow { index } => write!(f, "row {index} contains non-finite entries"),
        }
    }
}

impl core::error::Error for QpError {}

/// A minimum-energy QP over control dimension `dim`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    rows: Vec<ConstraintRow>,
    dim: usize,
}

impl QpProblem {
    pub fn new(rows: Vec<ConstraintRow>, dim: usize) -> Result<Self, QpError> {
        for (i, row) in rows.iter().enumerate() {
            if row.normal.len() != dim {
                return Err(QpError::RowDimensionMismatch {
                    expected: dim,
                    got: row.normal.len(),
                });
            }
            if !row.normal.iter().all(|v| v.is_finite()) || !row.offset.is_finite() {
                return Err(QpError::NonFiniteRow { index: i });
            }
        }
        Ok(Self { rows, dim })
    }

    /// Folds per-coordinate box limits into ordinary rows: `u_j >= lo` and
    /// `-u_j >= -hi` for each bounded coordinate.
    pub fn with_bounds(
        mut rows: Vec<ConstraintRow>,
        dim: usize,
        bounds: &[(Option<f64>, Option<f64>)],
    ) -> Result<Self, QpError> {
        assert_eq!(bounds.len(), dim, "one bound pair per coordinate");
        for (j, (lo, hi)) in bounds.iter().enumerate() {
            if let Some(lo) = lo {
                let mut normal = vec![0.0; dim];
                normal[j] = 1.0;
                rows.push(ConstraintRow {
                    normal,
                    offset: *lo,
                    tag: RowTag::Invariance(bound_label(j, "lo")),
                });
            }
            if let Some(hi) = hi {
                let mut normal = vec![0.0; dim];
                normal[j] = -1.0;
                rows.push(ConstraintRow {
                    normal,
                    offset: -*hi,
                    tag: RowTag::Invariance(bound_label(j, "hi")),
                });
            }
        }
        Self::new(rows, dim)
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn bound_label(j: usize, side: &str) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let _ = write!(s, "bound:u{j}:{side}");
    s
}

/// Max KKT residual per class, recomputed from scratch, independent of the
/// solver internals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Worst primal violation `max_i max(0, offset_i - normal_i . u)`.
    pub feasibility: f64,
    /// Stationarity gap `|| u - sum_i lambda_i normal_i ||`.
    pub stationarity: f64,
    /// Worst complementary slackness `max_i |lambda_i (normal_i . u - offset_i)|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn within(&self, feas: f64, stat: f64, comp: f64) -> bool {
        self.feasibility <= feas && self.stationarity <= stat && self.complementarity <= comp
    }
}

/// Recomputes all three KKT residual classes for a candidate solution.
pub fn verify_kkt(p: &QpProblem, s: &QpSolution) -> KktReport {
    let mut feasibility = 0.0_f64;
    let mut complementarity = 0.0_f64;
    let mut combo = vec![0.0; p.dim()];
    for (row, &lambda) in p.rows().iter().zip(&s.multipliers) {
        let res = row.residual(&s.u);
        if -res > feasibility {
            feasibility = -res;
        }
        let cs = libm::fabs(lambda * res);
        if cs > complementarity {
            complementarity = cs;
        }
        linalg::axpy(lambda, &row.normal, &mut combo);
    }
    let mut stat_sq = 0.0;
    for (ui, ci) in s.u.iter().zip(&combo) {
        stat_sq += (ui - ci) * (ui - ci);
    }
    KktReport {
        feasibility,
        stationarity: libm::sqrt(stat_sq),
        complementarity,
    }
}

/// Solves the minimum-energy QP. Deterministic: identical inputs produce
/// bit-identical outputs.
pub fn solve(p: &QpProblem) -> QpSolution {
    let dim = p.dim();
    let rows = p.rows();
    let nrows = rows.len();

    // zero-normal rows are either trivially satisfied or pointwise
    // infeasible; detect the latter up front
    let degenerate: Vec<usize> = (0..nrows)
        .filter(|&i| rows[i].is_pointwise_infeasible())
        .collect();
    if !degenerate.is_empty() {
        return QpSolution {
            u: vec![0.0; dim],
            multipliers: vec![0.0; nrows],
            status: QpStatus::Infeasible(InfeasibilityDiagnostic {
                reason: InfeasibilityReason::ZeroNormalPositiveOffset,
                culprits: degenerate.iter().map(|&i| rows[i].tag.clone()).collect(),
            }),
        };
    }

    if nrows == 0 {
        return QpSolution {
            u: vec![0.0; dim],
            multipliers: Vec::new(),
            status: QpStatus::Optimal,
        };
    }

    let norms_sq: Vec<f64> = rows.iter().map(|r| linalg::dot(&r.normal, &r.normal)).collect();

    // Hildreth dual coordinate ascent: u tracks sum(lambda_i a_i)
    let mut lambda = vec![0.0; nrows];
    let mut u = vec![0.0; dim];
    let mut converged = false;
    let mut diverged = false;
    #[cfg(debug_assertions)]
    let mut dual_prev = f64::NEG_INFINITY;

    for _sweep in 0..MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for i in 0..nrows {
            if norms_sq[i] == 0.0 {
                continue;
            }
            let step = (rows[i].offset - linalg::dot(&rows[i].normal, &u)) / norms_sq[i];
            let mut next = lambda[i] + step;
            if next < 0.0 {
                next = 0.0;
            }
            let delta = next - lambda[i];
            if delta != 0.0 {
                linalg::axpy(delta, &rows[i].normal, &mut u);
                lambda[i] = next;
            }
            let mag = libm::fabs(delta);
            if mag > max_change {
                max_change = mag;
            }
        }

        #[cfg(debug_assertions)]
        {
            // exact coordinate maximization never decreases the dual
            let mut dual = -0.5 * linalg::dot(&u, &u);
            for i in 0..nrows {
                dual += lambda[i] * rows[i].offset;
            }
            debug_assert!(
                dual >= dual_prev - 1e-9 * (1.0 + libm::fabs(dual_prev)),
                "dual objective decreased: {dual_prev} -> {dual}"
            );
            dual_prev = dual;
        }

        if max_change <= DUAL_TOL {
            converged = true;
            break;
        }
        let lam_norm = lambda.iter().fold(0.0_f64, |m, v| if *v > m { *v } else { m });
        if lam_norm > DIVERGENCE_NORM {
            diverged = true;
            break;
        }
    }

    if diverged || !converged {
        if let Some(diag) = farkas_certificate(p) {
            return QpSolution {
                u: vec![0.0; dim],
                multipliers: vec![0.0; nrows],
                status: QpStatus::Infeasible(diag),
            };
        }
        if diverged {
            // no small certificate, but the dual is past any plausible
            // multiplier scale for a feasible instance
            let lam_max = lambda.iter().cloned().fold(0.0_f64, f64::max);
            let culprits = (0..nrows)
                .filter(|&i| lambda[i] > 1e-6 * lam_max)
                .map(|i| rows[i].tag.clone())
                .collect();
            return QpSolution {
                u: vec![0.0; dim],
                multipliers: lambda,
                status: QpStatus::Infeasible(InfeasibilityDiagnostic {
                    reason: InfeasibilityReason::DualDivergence,
                    culprits,
                }),
            };
        }
    }

    // Active-set refinement: snap onto the exact optimal face
    if let Some((ru, rl)) = refine(p, &lambda) {
        return QpSolution {
            u: ru,
            multipliers: rl,
            status: QpStatus::Optimal,
        };
    }

    // fall back to the raw Hildreth iterate if it already meets tolerances
    let candidate = QpSolution {
        u: u.clone(),
        multipliers: lambda.clone(),
        status: QpStatus::Optimal,
    };
    if converged && verify_kkt(p, &candidate).within(1e-8, 1e-8, 1e-6) {
        return candidate;
    }
    QpSolution {
        u,
        multipliers: lambda,
        status: QpStatus::MaxIterations,
    }
}

/// Greedily keeps rows whose normals are linearly independent of the ones
/// already kept (modified Gram-Schmidt, fixed order).
fn independent_rows(p: &QpProblem, idx: &[usize]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for &i in idx {
        let mut v = p.rows()[i].normal.clone();
        let scale = linalg::norm2(&v);
        if scale == 0.0 {
            continue;
        }
        for b in &basis {
            let c = linalg::dot(&v, b);
            linalg::axpy(-c, b, &mut v);
        }
        let residual = linalg::norm2(&v);
        if residual > 1e-10 * scale {
            for x in v.iter_mut() {
                *x /= residual;
            }
            basis.push(v);
            kept.push(i);
        }
    }
    kept
}

fn refine(p: &QpProblem, lambda_seed: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let rows = p.rows();
    let nrows = rows.len();
    let dim = p.dim();

    let lam_max = lambda_seed.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = 1e-9 * if lam_max > 1.0 { lam_max } else { 1.0 };
    let mut active: Vec<usize> = (0..nrows).filter(|&i| lambda_seed[i] > threshold).collect();

    for _ in 0..(2 * nrows + 4) {
        active = independent_rows(p, &active);

        let (u, lambda) = if active.is_empty() {
            (vec![0.0; dim], vec![0.0; nrows])
        } else {
            let k = active.len();
            let mut m = Mat::zeros(k, k);
            let mut rhs = vec![0.0; k];
            for (r, &i) in active.iter().enumerate() {
                for (c, &j) in active.iter().enumerate() {
                    m.set(r, c, linalg::dot(&rows[i].normal, &rows[j].normal));
                }
                rhs[r] = rows[i].offset;
            }
            let nu = linalg::solve_linear(&m, &rhs)?;
            let mut u = vec![0.0; dim];
            let mut lambda = vec![0.0; nrows];
            for (r, &i) in active.iter().enumerate() {
                linalg::axpy(nu[r], &rows[i].normal, &mut u);
                lambda[i] = nu[r];
            }
            (u, lambda)
        };

        // drop the most negative multiplier, if any
        let mut worst_neg: Option<(usize, f64)> = None;
        for (pos, &i) in active.iter().enumerate() {
            let l = lambda[i];
            if l < -1e-10 && worst_neg.map_or(true, |(_, w)| l < w) {
                worst_neg = Some((pos, l));
            }
        }
        if let Some((pos, _)) = worst_neg {
            active.remove(pos);
            continue;
        }

        // add the most violated row, if any
        let mut worst_violation: Option<(usize, f64)> = None;
        for i in 0..nrows {
            if active.contains(&i) {
                continue;
            }
            let res = rows[i].residual(&u);
            let tol = 1e-10 * (1.0 + libm::fabs(rows[i].offset));
            if res < -tol && worst_violation.map_or(true, |(_, w)| res < w) {
                worst_violation = Some((i, res));
            }
        }
        match worst_violation {
            Some((i, _)) => {
                active.push(i);
                active.sort_unstable();
            }
            None => return Some((u, lambda)),
        }
    }
    None
}

/// Searches small row subsets for a Farkas certificate: `y >= 0` with
/// `sum y_i normal_i = 0` and `sum y_i offset_i = 1`. By Helly's theorem an
/// infeasible system in dimension `m` contains an infeasible subsystem of at
/// most `m + 1` rows, so the search is complete for exact arithmetic.
fn farkas_certificate(p: &QpProblem) -> Option<InfeasibilityDiagnostic> {
    let rows = p.rows();
    let nrows = rows.len();
    let dim = p.dim();
    let max_size = core::cmp::min(dim + 1, nrows);

    let mut subset: Vec<usize> = Vec::new();
    for size in 1..=max_size {
        subset.clear();
        subset.extend(0..size);
        loop {
            if let Some(diag) = try_certificate(p, &subset) {
                return Some(diag);
            }
            // next lexicographic combination
            let mut pos = size;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if subset[pos] != pos + nrows - size {
                    subset[pos] += 1;
                    for q in (pos + 1)..size {
                        subset[q] = subset[q - 1] + 1;
                    }
                    break;
                }
            }
            if pos == 0 && subset[0] == nrows - size {
                break;
            }
        }
    }
    None
}

fn try_certificate(p: &QpProblem, subset: &[usize]) -> Option<InfeasibilityDiagnostic> {
    let rows = p.rows();
    let dim = p.dim();
    let k = subset.len();

    // solve [A_S^T; b_S^T] y = e_{m+1} in the least-squares sense
    let mut n = Mat::zeros(dim + 1, k);
    for (c, &i) in subset.iter().enumerate() {
        for r in 0..dim {
            n.set(r, c, rows[i].normal[r]);
        }
        n.set(dim, c, rows[i].offset);
    }
    let mut gram = Mat::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for r in 0..=dim {
                s += n.get(r, a) * n.get(r, b);
            }
            gram.set(a, b, s);
        }
        rhs[a] = n.get(dim, a); // N^T e_{m+1}
    }
    let y = linalg::solve_linear(&gram, &rhs)?;

    let y_scale = y.iter().fold(0.0_f64, |m, v| {
        let a = libm::fabs(*v);
        if a > m {
            a
        } else {
            m
        }
    });
    if y_scale == 0.0 || !y.iter().all(|v| *v >= -1e-9 * y_scale) {
        return None;
    }

    // combined normal and offset of the candidate certificate
    let mut combo = vec![0.0; dim];
    let mut s = 0.0;
    let mut weight = 0.0;
    for (c, &i) in subset.iter().enumerate() {
        let yi = if y[c] > 0.0 { y[c] } else { 0.0 };
        linalg::axpy(yi, &rows[i].normal, &mut combo);
        s += yi * rows[i].offset;
        weight += yi * (1.0 + linalg::norm2(&rows[i].normal));
    }
    if s <= 1e-9 * weight {
        return None;
    }
    let r = linalg::norm2(&combo);
    // any feasible point would need norm at least s / r
    if r != 0.0 && s / r <= 1e9 {
        return None;
    }
    Some(InfeasibilityDiagnostic {
        reason: InfeasibilityReason::Certificate,
        culprits: subset.iter().map(|&i| rows[i].tag.clone()).collect(),
    })
}
