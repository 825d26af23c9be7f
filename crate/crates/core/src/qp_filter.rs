//! Pointwise min-norm safety filter.
//!
//! Solves `min |v|^2` subject to one or two affine rows `b_i^T v >= a_i + r_i`
//! in closed form: the single-row problem by its KKT solution, the two-row
//! problem by enumerating the KKT active sets. The compatibility predicate
//! decides feasibility of the two-row problem without solving it.

use crate::barriers::ConstraintRow;
use crate::scalar::{dot, norm, Scalar};

/// Rows with `|b| <= EPS_B` are treated as `b = 0`.
pub const EPS_B: f64 = 1e-9;
/// Relative width of the near-anti-parallel band,
/// `|b_e||b_u| + b_e^T b_u <= ANTIPARALLEL_EPS |b_e||b_u|`.
pub const ANTIPARALLEL_EPS: f64 = 1e-8;
/// Slack accepted when testing a candidate against a row.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveSet {
    None,
    First,
    Second,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult<T> {
    /// Safety correction; zero when infeasible.
    pub v: Vec<T>,
    pub active_set: ActiveSet,
    pub feasible: bool,
    /// `b_i^T v - (a_i + r_i)` per row.
    pub slack: Vec<T>,
}

impl<T: Scalar> FilterResult<T> {
    fn from_candidate(v: Vec<T>, active_set: ActiveSet, rows: &[&ConstraintRow<T>]) -> Self {
        let slack = rows.iter().map(|r| r.slack(&v)).collect();
        Self {
            v,
            active_set,
            feasible: true,
            slack,
        }
    }

    fn infeasible(m: usize, rows: &[&ConstraintRow<T>]) -> Self {
        let v = vec![T::zero(); m];
        let slack = rows.iter().map(|r| r.slack(&v)).collect();
        Self {
            v,
            active_set: ActiveSet::None,
            feasible: false,
            slack,
        }
    }

    pub fn v_norm(&self) -> T {
        norm(&self.v)
    }
}

fn row_tol<T: Scalar>(row: &ConstraintRow<T>) -> T {
    T::lit(FEAS_TOL) * (T::one() + row.rhs().abs())
}

fn satisfies<T: Scalar>(row: &ConstraintRow<T>, v: &[T]) -> bool {
    row.slack(v) >= -row_tol(row)
}

/// Minimizer of `|v|^2` onto the half-space of `row` alone, or `None` when
/// `b = 0` and the row demands `0 >= a + r > 0`.
fn project<T: Scalar>(row: &ConstraintRow<T>) -> Option<(Vec<T>, bool)> {
    let rhs = row.rhs();
    if rhs <= T::zero() {
        return Some((vec![T::zero(); row.b.len()], false));
    }
    let bb = dot(&row.b, &row.b);
    if bb.sqrt() > T::lit(EPS_B) {
        let scale = rhs / bb;
        Some((row.b.iter().map(|&bi| scale * bi).collect(), true))
    } else {
        None
    }
}

/// Closed-form single-constraint filter.
pub fn solve_single<T: Scalar>(row: &ConstraintRow<T>) -> FilterResult<T> {
    match project(row) {
        Some((v, active)) => {
            let set = if active { ActiveSet::First } else { ActiveSet::None };
            FilterResult::from_candidate(v, set, &[row])
        }
        None => FilterResult::infeasible(row.b.len(), &[row]),
    }
}

/// `|b_e||b_u| + b_e^T b_u`, zero exactly when the normals are anti-parallel.
fn antiparallel_gap<T: Scalar>(b_e: &[T], b_u: &[T]) -> (T, T) {
    let scale = norm(b_e) * norm(b_u);
    (scale + dot(b_e, b_u), scale)
}

fn in_antiparallel_band<T: Scalar>(b_e: &[T], b_u: &[T]) -> bool {
    let (gap, scale) = antiparallel_gap(b_e, b_u);
    scale > T::zero() && gap <= T::lit(ANTIPARALLEL_EPS) * scale
}

/// Point with both rows tight and its multipliers: the min-norm solution of
/// `b_e^T v = a_e + r_e`, `b_u^T v = a_u + r_u`, i.e. the Gram system
/// `G lambda = rhs` with `v = lambda_e b_e + lambda_u b_u`.
///
/// Solved in the orthonormal basis `q1 = b_e / |b_e|`, `q2 ~ b_u - (q1^T b_u) q1`
/// rather than through the Gram determinant, whose cancellation for nearly
/// anti-parallel normals would swamp the feasibility tolerance.
fn both_active<T: Scalar>(row_e: &ConstraintRow<T>, row_u: &ConstraintRow<T>) -> Option<(Vec<T>, T, T)> {
    let ne = norm(&row_e.b);
    let q1: Vec<T> = row_e.b.iter().map(|&x| x / ne).collect();
    let p = dot(&q1, &row_u.b);
    let w: Vec<T> = row_u.b.iter().zip(&q1).map(|(&bu, &q)| bu - p * q).collect();
    // Second Gram-Schmidt pass restores orthogonality lost to cancellation.
    let p2 = dot(&q1, &w);
    let w: Vec<T> = w.iter().zip(&q1).map(|(&wi, &q)| wi - p2 * q).collect();
    let p = p + p2;
    let nw = norm(&w);
    if !(nw > T::lit(16.0) * T::epsilon() * norm(&row_u.b)) {
        return None;
    }
    let alpha = row_e.rhs() / ne;
    let beta = (row_u.rhs() - p * alpha) / nw;
    let v = q1
        .iter()
        .zip(&w)
        .map(|(&q, &wi)| alpha * q + beta * (wi / nw))
        .collect();
    let lam_u = beta / nw;
    let lam_e = (alpha - p * lam_u) / ne;
    Some((v, lam_e, lam_u))
}

/// Exact two-constraint filter by KKT active-set enumeration.
///
/// Candidates: `v = 0`, the projection onto each row, and the point with
/// both rows active (Gram system, multipliers non-negative). The feasible
/// candidate of least norm is returned; none feasible means infeasible. The
/// both-active candidate is skipped inside the anti-parallel band.
pub fn solve_two<T: Scalar>(row_e: &ConstraintRow<T>, row_u: &ConstraintRow<T>) -> FilterResult<T> {
    assert_eq!(row_e.b.len(), row_u.b.len(), "rows act on the same correction");
    let m = row_e.b.len();
    let rows = [row_e, row_u];
    let mut candidates: Vec<(Vec<T>, ActiveSet)> = Vec::with_capacity(4);

    candidates.push((vec![T::zero(); m], ActiveSet::None));
    if let Some((v, true)) = project(row_e) {
        candidates.push((v, ActiveSet::First));
    }
    if let Some((v, true)) = project(row_u) {
        candidates.push((v, ActiveSet::Second));
    }

    let degenerate = norm(&row_e.b) <= T::lit(EPS_B) || norm(&row_u.b) <= T::lit(EPS_B);
    if !degenerate && !in_antiparallel_band(&row_e.b, &row_u.b) {
        if let Some((v, lam_e, lam_u)) = both_active(row_e, row_u) {
            if lam_e >= T::zero() && lam_u >= T::zero() && lam_e.is_finite() && lam_u.is_finite() {
                candidates.push((v, ActiveSet::Both));
            }
        }
    }

    candidates
        .into_iter()
        .filter(|(v, _)| rows.iter().all(|r| satisfies(r, v)))
        .min_by(|(a, _), (b, _)| dot(a, a).partial_cmp(&dot(b, b)).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(v, set)| FilterResult::from_candidate(v, set, &rows))
        .unwrap_or_else(|| FilterResult::infeasible(m, &rows))
}

/// Pointwise ICBF condition `b = 0 => a <= 0`. The margin is ignored since it
/// vanishes with `b`.
pub fn check_icbf_condition<T: Scalar>(row: &ConstraintRow<T>, eps_b: T) -> bool {
    row.b_norm() > eps_b || row.a <= T::zero()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedCondition {
    None,
    /// `b_e = 0` but `a_e + r_e > 0`.
    Cond1,
    /// `b_u = 0` but `a_u + r_u > 0`.
    Cond2,
    /// Anti-parallel normals with `(a_e + r_e)|b_u| + (a_u + r_u)|b_e| > 0`.
    Cond3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityWitness<T> {
    pub b_e: Vec<T>,
    pub b_u: Vec<T>,
    pub a_e: T,
    pub a_u: T,
    pub r_e: T,
    pub r_u: T,
    /// Normalized `(|b_e||b_u| + b_e^T b_u) / (|b_e||b_u|)`; `None` if either `b` vanishes.
    pub antiparallel_gap: Option<T>,
    /// The third condition was applied to normals that are within the
    /// tolerance band but not exactly anti-parallel.
    pub tolerance_band_used: bool,
    /// `(a_e + r_e)|b_u| + (a_u + r_u)|b_e|` when the third condition applies.
    pub cond3_value: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityVerdict<T> {
    pub ok: bool,
    pub failed_condition: FailedCondition,
    pub witness: CompatibilityWitness<T>,
}

/// Closed-form feasibility test for the two-row filter.
///
/// `eps` is the relative width of the anti-parallel band.
pub fn check_compatibility<T: Scalar>(
    row_e: &ConstraintRow<T>,
    row_u: &ConstraintRow<T>,
    eps: T,
) -> CompatibilityVerdict<T> {
    let (ne, nu) = (row_e.b_norm(), row_u.b_norm());
    let eps_b = T::lit(EPS_B);
    let (ae, au) = (row_e.rhs(), row_u.rhs());
    let mut witness = CompatibilityWitness {
        b_e: row_e.b.clone(),
        b_u: row_u.b.clone(),
        a_e: row_e.a,
        a_u: row_u.a,
        r_e: row_e.r,
        r_u: row_u.r,
        antiparallel_gap: None,
        tolerance_band_used: false,
        cond3_value: None,
    };

    let failed = if ne <= eps_b && ae > row_tol(row_e) {
        FailedCondition::Cond1
    } else if nu <= eps_b && au > row_tol(row_u) {
        FailedCondition::Cond2
    } else if ne > eps_b && nu > eps_b {
        let (gap, scale) = antiparallel_gap(&row_e.b, &row_u.b);
        let rel = gap / scale;
        witness.antiparallel_gap = Some(rel);
        if rel <= eps {
            witness.tolerance_band_used = gap != T::zero();
            let value = ae * nu + au * ne;
            witness.cond3_value = Some(value);
            if value > T::lit(FEAS_TOL) * (ne + nu) {
                FailedCondition::Cond3
            } else {
                FailedCondition::None
            }
        } else {
            FailedCondition::None
        }
    } else {
        FailedCondition::None
    };

    CompatibilityVerdict {
        ok: failed == FailedCondition::None,
        failed_condition: failed,
        witness,
    }
}
