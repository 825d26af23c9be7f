//! Built-in oracle suites, runnable from the command line.
//!
//! The QP suites compare the closed-form filter with Hildreth's dual
//! coordinate ascent, which shares no code with the active-set enumeration.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::acc::{AccParams, AccSystem};
use crate::barriers::{central_diff_u, central_diff_x, Barrier, ConstraintRow, IntegralController};
use crate::numerics::{InputHistory, IntegratorConfig};
use crate::predictor::{predict, SystemModel};
use crate::qp_filter::{check_compatibility, solve_single, solve_two, ANTIPARALLEL_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the suite's own measure.
    pub worst: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Outcome of Hildreth's method on `min |v|^2 / 2` s.t. `b_i^T v >= c_i`.
pub struct DualSolution {
    pub v: Vec<f64>,
    pub feasible: bool,
}

/// Dual coordinate ascent. Rows with `b = 0` are decided directly. Declares
/// infeasibility when the primal iterate still violates a row by more than
/// `tol (1 + |v|_inf)` after `max_sweeps`, which happens when the dual is
/// unbounded.
pub fn hildreth(rows: &[(Vec<f64>, f64)], max_sweeps: usize, tol: f64) -> DualSolution {
    let m = rows.first().map_or(0, |r| r.0.len());
    let active: Vec<&(Vec<f64>, f64)> = rows.iter().filter(|(b, _)| b.iter().any(|&x| x != 0.0)).collect();
    let zero_rows_ok = rows
        .iter()
        .filter(|(b, _)| b.iter().all(|&x| x == 0.0))
        .all(|(_, c)| *c <= tol);

    let mut lambda = vec![0.0; active.len()];
    let mut v = vec![0.0; m];
    let violation = |v: &[f64]| {
        active
            .iter()
            .map(|(b, c)| c - b.iter().zip(v).map(|(x, y)| x * y).sum::<f64>())
            .fold(0.0, f64::max)
    };
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for (i, (b, c)) in active.iter().enumerate() {
            let bb: f64 = b.iter().map(|x| x * x).sum();
            let bv: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
            let next = (lambda[i] + (c - bv) / bb).max(0.0);
            let step = next - lambda[i];
            if step != 0.0 {
                for (vj, bj) in v.iter_mut().zip(b.iter()) {
                    *vj += step * bj;
                }
                lambda[i] = next;
                change = change.max(step.abs() * bb.sqrt());
            }
        }
        let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if change <= 1e-16 * scale {
            break;
        }
    }
    let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let feasible = zero_rows_ok && violation(&v) <= tol * scale;
    DualSolution { v, feasible }
}

fn random_row(rng: &mut StdRng, m: usize) -> ConstraintRow<f64> {
    let b = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
    ConstraintRow::new(rng.random_range(-5.0..5.0), b).with_margin(rng.random_range(0.0..1.0))
}

fn half_norm_sq(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|x| x * x).sum::<f64>()
}

fn oracle_rows(rows: &[&ConstraintRow<f64>]) -> Vec<(Vec<f64>, f64)> {
    rows.iter().map(|r| (r.b.clone(), r.rhs())).collect()
}

/// Single-row filter against the dual oracle.
pub fn qp_single_suite(rng: &mut StdRng, cases: usize) -> SuiteResult {
    let mut res = SuiteResult {
        name: "qp-single",
        cases,
        failures: 0,
        worst: 0.0,
    };
    for i in 0..cases {
        let m = rng.random_range(1..=3);
        let mut row = random_row(rng, m);
        if i % 50 == 0 {
            row.b = vec![0.0; m];
        }
        let got = solve_single(&row);
        let oracle = hildreth(&oracle_rows(&[&row]), 10_000, 1e-9);
        let err = if got.feasible == oracle.feasible {
            if got.feasible {
                (half_norm_sq(&got.v) - half_norm_sq(&oracle.v)).abs()
            } else {
                0.0
            }
        } else {
            f64::INFINITY
        };
        res.worst = res.worst.max(err);
        if err > 1e-6 {
            res.failures += 1;
        }
    }
    res
}

/// Two-row filter against the dual oracle, plus anti-parallel families with
/// a known verdict.
pub fn qp_two_suite(rng: &mut StdRng, cases: usize) -> SuiteResult {
    let mut res = SuiteResult {
        name: "qp-two",
        cases,
        failures: 0,
        worst: 0.0,
    };
    for i in 0..cases {
        let m = rng.random_range(1..=3);
        let (e, u, known) = if i % 10 == 0 {
            let (e, u, feasible) = antiparallel_pair(rng, m);
            (e, u, Some(feasible))
        } else {
            let (e, u) = well_conditioned_pair(rng, m);
            (e, u, None)
        };
        let got = solve_two(&e, &u);
        let oracle = hildreth(&oracle_rows(&[&e, &u]), 1_000_000, 1e-9);
        let expected_feasible = known.unwrap_or(oracle.feasible);
        let err = if got.feasible != expected_feasible {
            f64::INFINITY
        } else if got.feasible {
            let f = half_norm_sq(&got.v);
            (f - half_norm_sq(&oracle.v)).abs() / (1.0 + f)
        } else {
            0.0
        };
        res.worst = res.worst.max(err);
        if err > 1e-6 {
            res.failures += 1;
        }
    }
    res
}

/// Random pair whose normals are at least slightly apart from (anti-)parallel,
/// `|cos| <= 1 - 1e-4`. Dual coordinate ascent converges like `1 - sin^2`
/// per sweep, so closer pairs would test the oracle rather than the filter.
fn well_conditioned_pair(rng: &mut StdRng, m: usize) -> (ConstraintRow<f64>, ConstraintRow<f64>) {
    loop {
        let (e, u) = (random_row(rng, m), random_row(rng, m));
        let scale = e.b_norm() * u.b_norm();
        let cos = e.b.iter().zip(&u.b).map(|(x, y)| x * y).sum::<f64>() / scale;
        if m == 1 || cos.abs() <= 1.0 - 1e-4 {
            return (e, u);
        }
    }
}

/// `b_u = -c b_e`; feasible iff `c (a_e + r_e) + (a_u + r_u) <= 0`. The
/// right-hand sides are drawn away from the boundary by at least 1e-3.
pub fn antiparallel_pair(rng: &mut StdRng, m: usize) -> (ConstraintRow<f64>, ConstraintRow<f64>, bool) {
    let e = random_row(rng, m);
    let c: f64 = rng.random_range(0.1..4.0);
    let feasible = rng.random_bool(0.5);
    let gap = rng.random_range(1e-3..3.0);
    let target = if feasible { -gap } else { gap };
    let rhs_u = target - c * e.rhs();
    let r_u = rng.random_range(0.0..1.0);
    let b_u = e.b.iter().map(|&x| -c * x).collect();
    (e, ConstraintRow::new(rhs_u - r_u, b_u).with_margin(r_u), feasible)
}

/// Compatibility predicate against the filter's feasibility.
pub fn compatibility_suite(rng: &mut StdRng, cases: usize) -> SuiteResult {
    let mut res = SuiteResult {
        name: "compatibility",
        cases,
        failures: 0,
        worst: 0.0,
    };
    for i in 0..cases {
        let m = rng.random_range(1..=3);
        let (e, u) = if i % 10 == 0 {
            let (e, u, _) = antiparallel_pair(rng, m);
            (e, u)
        } else {
            (random_row(rng, m), random_row(rng, m))
        };
        let verdict = check_compatibility(&e, &u, ANTIPARALLEL_EPS);
        if verdict.ok != solve_two(&e, &u).feasible {
            res.failures += 1;
        }
    }
    res
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1.0 + analytic.abs())
}

/// Analytic ACC gradients against central differences.
pub fn gradient_suite(rng: &mut StdRng, cases: usize) -> SuiteResult {
    let sys = AccSystem::new(AccParams::default()).expect("default parameters are valid");
    let mut res = SuiteResult {
        name: "gradients",
        cases,
        failures: 0,
        worst: 0.0,
    };
    for _ in 0..cases {
        let x = [rng.random_range(0.0..150.0), rng.random_range(0.0..40.0)];
        let u = [rng.random_range(-3.0..3.0)];
        let mut errs = Vec::with_capacity(12);
        let barriers: [&dyn Barrier<f64, 2, 1>; 3] = [&sys.h_x, &sys.h_e, &sys.h_u];
        for h in barriers {
            let gx = h.grad_x(&x, &u);
            let gu = h.grad_u(&x, &u);
            let nx = central_diff_x(|x, u| h.value(x, u), &x, &u);
            let nu = central_diff_u(|x, u| h.value(x, u), &x, &u);
            errs.extend([rel_err(gx[0], nx[0]), rel_err(gx[1], nx[1]), rel_err(gu[0], nu[0])]);
        }
        let c = &sys.controller;
        let phi = |x: &[f64; 2], u: &[f64; 1]| c.phi(x, u)[0];
        let (px, pu) = (c.phi_grad_x(&x, &u), c.phi_grad_u(&x, &u));
        let (nx, nu) = (central_diff_x(phi, &x, &u), central_diff_u(phi, &x, &u));
        errs.extend([rel_err(px[0], nx[0]), rel_err(px[1], nx[1]), rel_err(pu[0], nu[0])]);
        let kd = |x: &[f64; 2], _: &[f64; 1]| c.kd(x);
        let (gk, nk) = (c.kd_gradient(&x), central_diff_x(kd, &x, &u));
        errs.extend([rel_err(gk[0], nk[0]), rel_err(gk[1], nk[1])]);

        let worst = errs.into_iter().fold(0.0, f64::max);
        res.worst = res.worst.max(worst);
        if worst > 1e-5 {
            res.failures += 1;
        }
    }
    res
}

struct Integrator;

impl SystemModel<f64, 1, 1> for Integrator {
    fn dynamics(&self, _x: &[f64; 1], u: &[f64; 1]) -> [f64; 1] {
        [u[0]]
    }
}

/// Prediction error ratio when halving `dt` on `x' = sin(t)` history.
pub fn predictor_convergence() -> SuiteResult {
    let tau: f64 = 1.2;
    let error = |dt: f64| {
        let n = (tau / dt).round() as i64;
        let samples = (-n..=0).map(|k| [(k as f64 * dt).sin()]).collect();
        let hist = InputHistory::from_samples(dt, 0, samples).expect("non-empty history");
        let integ = IntegratorConfig::new(dt).expect("positive dt");
        let x = predict(&Integrator, &[0.0], &hist, tau, &integ).expect("history covers the delay");
        (x[0] - (tau.cos() - 1.0)).abs()
    };
    let ratio = error(0.1) / error(0.05);
    SuiteResult {
        name: "predictor-convergence",
        cases: 1,
        failures: usize::from(!(ratio >= 4.0)),
        worst: ratio,
    }
}

/// Runs every suite with `cases` random instances each.
pub fn run_all(seed: u64, cases: usize) -> Vec<SuiteResult> {
    let mut rng = StdRng::seed_from_u64(seed);
    vec![
        qp_single_suite(&mut rng, cases),
        qp_two_suite(&mut rng, cases),
        compatibility_suite(&mut rng, cases),
        gradient_suite(&mut rng, cases),
        predictor_convergence(),
    ]
}
