#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};
use delay_icbf::barriers::{Barrier, ConstraintRow, IntegralController};
use rand::rngs::StdRng;
use rand::RngExt;

/// Outcome of the interior-point reference solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Feasible { v: Vec<f64>, value: f64 },
    Infeasible,
    Unknown(String),
}

/// `min 0.5 |v|^2` subject to `b_i^T v >= a_i + r_i`, solved by clarabel.
/// Rows with `b = 0` are decided by their sign and dropped.
pub fn reference_qp(rows: &[&ConstraintRow<f64>]) -> Oracle {
    let m = rows[0].b.len();
    let mut kept = Vec::new();
    for r in rows {
        if r.b.iter().all(|&x| x == 0.0) {
            if r.rhs() > 0.0 {
                return Oracle::Infeasible;
            }
        } else {
            kept.push(*r);
        }
    }
    if kept.is_empty() {
        return Oracle::Feasible {
            v: vec![0.0; m],
            value: 0.0,
        };
    }

    let p = CscMatrix::identity(m);
    let q = vec![0.0; m];
    let dense: Vec<Vec<f64>> = kept.iter().map(|r| r.b.iter().map(|x| -x).collect()).collect();
    let a = CscMatrix::from(&dense);
    let rhs: Vec<f64> = kept.iter().map(|r| -r.rhs()).collect();
    let cones = [NonnegativeConeT(kept.len())];
    let settings = DefaultSettings {
        verbose: false,
        max_iter: 400,
        tol_gap_abs: 1e-10,
        tol_gap_rel: 1e-10,
        tol_feas: 1e-10,
        ..DefaultSettings::default()
    };
    let mut solver = match DefaultSolver::new(&p, &q, &a, &rhs, &cones, settings) {
        Ok(s) => s,
        Err(e) => return Oracle::Unknown(format!("{e:?}")),
    };
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Oracle::Feasible {
            value: sol.x.iter().map(|x| x * x).sum(),
            v: sol.x.clone(),
        },
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Oracle::Infeasible,
        s => Oracle::Unknown(format!("{s:?}")),
    }
}

pub fn uniform_vec(rng: &mut StdRng, m: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(lo..hi)).collect()
}

/// Entries of `b` and `a` uniform on `[-5, 5]`, margin uniform on `[0, 1]`.
pub fn random_row(rng: &mut StdRng, m: usize) -> ConstraintRow<f64> {
    let b = uniform_vec(rng, m, -5.0, 5.0);
    let a = rng.random_range(-5.0..5.0);
    ConstraintRow::new(a, b).with_margin(rng.random_range(0.0..1.0))
}

pub const ANTIPARALLEL_SCALES: [f64; 3] = [0.1, 1.0, 10.0];

/// `b_u = -c b_e` with the feasibility gap `c (a_e + r_e) + (a_u + r_u)`
/// kept at least `1e-3` away from zero. Returns the exact verdict.
pub fn antiparallel_pair(rng: &mut StdRng, m: usize, c: f64) -> (ConstraintRow<f64>, ConstraintRow<f64>, bool) {
    loop {
        let be = uniform_vec(rng, m, -5.0, 5.0);
        if be.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-2 {
            continue;
        }
        let bu: Vec<f64> = be.iter().map(|x| -c * x).collect();
        let e = ConstraintRow::new(rng.random_range(-5.0..5.0), be).with_margin(rng.random_range(0.0..1.0));
        let u = ConstraintRow::new(rng.random_range(-5.0..5.0), bu).with_margin(rng.random_range(0.0..1.0));
        let gap = c * e.rhs() + u.rhs();
        if gap.abs() >= 1e-3 {
            return (e, u, gap < 0.0);
        }
    }
}

/// Value tolerance `1e-6` scaled by `max(1, |value|)`.
pub fn value_matches(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-6 * want.abs().max(1.0)
}

/// Central difference with step `1e-6 (1 + |x_i|)`.
pub fn numeric_gradient<const N: usize>(f: impl Fn(&[f64; N]) -> f64, x: &[f64; N]) -> [f64; N] {
    let mut g = [0.0; N];
    for i in 0..N {
        let h = 1e-6 * (1.0 + x[i].abs());
        let (mut xp, mut xm) = (*x, *x);
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Relative error with an absolute floor of one.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Classic RK4 on `x' = f(x, t)` with a fixed step.
pub fn rk4_fixed<const N: usize>(
    f: impl Fn(&[f64; N], f64) -> [f64; N],
    x0: [f64; N],
    t0: f64,
    t1: f64,
    steps: usize,
) -> [f64; N] {
    let h = (t1 - t0) / steps as f64;
    let mut x = x0;
    let add = |x: &[f64; N], k: &[f64; N], s: f64| {
        let mut y = *x;
        for i in 0..N {
            y[i] += s * k[i];
        }
        y
    };
    for j in 0..steps {
        let t = t0 + j as f64 * h;
        let k1 = f(&x, t);
        let k2 = f(&add(&x, &k1, h / 2.0), t + h / 2.0);
        let k3 = f(&add(&x, &k2, h / 2.0), t + h / 2.0);
        let k4 = f(&add(&x, &k3, h), t + h);
        for i in 0..N {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Tally of one randomized comparison.
#[derive(Debug, Clone, Default)]
pub struct Campaign {
    pub cases: usize,
    pub failures: usize,
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl Campaign {
    fn fail(&mut self, what: String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(what);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn compare(
    c: &mut Campaign,
    label: &str,
    rows: &[&ConstraintRow<f64>],
    got: &delay_icbf::qp_filter::FilterResult<f64>,
) {
    c.cases += 1;
    match reference_qp(rows) {
        Oracle::Feasible { value, .. } => {
            if !got.feasible {
                c.fail(format!("{label}: reference feasible, filter not: {rows:?}"));
                return;
            }
            let mine: f64 = got.v.iter().map(|x| x * x).sum();
            c.worst = c.worst.max((mine - value).abs() / value.abs().max(1.0));
            if !value_matches(mine, value) {
                c.fail(format!("{label}: value {mine} vs {value}: {rows:?}"));
            }
            if rows
                .iter()
                .zip(&got.slack)
                .any(|(r, &s)| s < -1e-9 * (1.0 + r.rhs().abs()))
            {
                c.fail(format!("{label}: negative slack {:?}", got.slack));
            }
        }
        Oracle::Infeasible => {
            if got.feasible {
                c.fail(format!("{label}: reference infeasible, filter feasible: {rows:?}"));
            }
        }
        Oracle::Unknown(s) => c.fail(format!("{label}: reference solver gave {s}: {rows:?}")),
    }
}

/// Single rows with `m` cycling through 1..=3; every 50th has `b = 0`.
pub fn single_campaign(rng: &mut StdRng, cases: usize) -> Campaign {
    use delay_icbf::qp_filter::solve_single;
    let mut c = Campaign::default();
    for i in 0..cases {
        let m = 1 + i % 3;
        let mut row = random_row(rng, m);
        if i % 50 == 0 {
            row.b = vec![0.0; m];
        }
        compare(&mut c, "single", &[&row], &solve_single(&row));
    }
    c
}

/// Random pairs with `m` cycling through 1..=3.
pub fn pair_campaign(rng: &mut StdRng, cases: usize) -> Campaign {
    use delay_icbf::qp_filter::solve_two;
    let mut c = Campaign::default();
    for i in 0..cases {
        let m = 1 + i % 3;
        let (e, u) = (random_row(rng, m), random_row(rng, m));
        compare(&mut c, "pair", &[&e, &u], &solve_two(&e, &u));
    }
    c
}

/// Exactly anti-parallel pairs over every scale in [`ANTIPARALLEL_SCALES`];
/// the filter, the reference solver and the closed-form verdict must agree.
pub fn antiparallel_campaign(rng: &mut StdRng, cases: usize) -> Campaign {
    use delay_icbf::qp_filter::solve_two;
    let mut c = Campaign::default();
    for i in 0..cases {
        let scale = ANTIPARALLEL_SCALES[i % 3];
        let m = 1 + (i / 3) % 3;
        let (e, u, feasible) = antiparallel_pair(rng, m, scale);
        let got = solve_two(&e, &u);
        if got.feasible != feasible {
            c.cases += 1;
            c.fail(format!(
                "antiparallel c={scale}: filter says {}, exact {feasible}",
                got.feasible
            ));
            continue;
        }
        compare(&mut c, "antiparallel", &[&e, &u], &got);
    }
    c
}

/// Closed-form compatibility against the filter's feasibility. Of every
/// ten instances one is exactly anti-parallel and one has a zero row.
pub fn compatibility_campaign(rng: &mut StdRng, cases: usize) -> (Campaign, usize) {
    use delay_icbf::qp_filter::{check_compatibility, solve_two, ANTIPARALLEL_EPS};
    let mut c = Campaign::default();
    let mut antiparallel = 0;
    for i in 0..cases {
        let m = 1 + i % 3;
        let (e, u) = match i % 10 {
            0 => {
                antiparallel += 1;
                let (e, u, _) = antiparallel_pair(rng, m, ANTIPARALLEL_SCALES[(i / 10) % 3]);
                (e, u)
            }
            5 => {
                let (mut e, mut u) = (random_row(rng, m), random_row(rng, m));
                if (i / 10) % 2 == 0 {
                    e.b = vec![0.0; m];
                } else {
                    u.b = vec![0.0; m];
                }
                (e, u)
            }
            _ => (random_row(rng, m), random_row(rng, m)),
        };
        c.cases += 1;
        let verdict = check_compatibility(&e, &u, ANTIPARALLEL_EPS);
        let feasible = solve_two(&e, &u).feasible;
        if verdict.ok != feasible {
            c.fail(format!(
                "ok={} feasible={feasible} failed={:?}: {e:?} {u:?}",
                verdict.ok, verdict.failed_condition
            ));
        }
    }
    (c, antiparallel)
}

/// Worst relative error over every analytic gradient at one `(D, v, u)`.
pub fn gradient_error(sys: &delay_icbf::acc::AccSystem<f64>, z: [f64; 3]) -> f64 {
    let split = |z: &[f64; 3]| ([z[0], z[1]], [z[2]]);
    let (x, u) = split(&z);
    let mut worst: f64 = 0.0;
    let barriers: [&dyn Barrier<f64, 2, 1>; 3] = [&sys.h_x, &sys.h_e, &sys.h_u];
    for h in barriers {
        let num = numeric_gradient(
            |z| {
                let (x, u) = split(z);
                h.value(&x, &u)
            },
            &z,
        );
        let (gx, gu) = (h.grad_x(&x, &u), h.grad_u(&x, &u));
        for (a, n) in [gx[0], gx[1], gu[0]].into_iter().zip(num) {
            worst = worst.max(rel_err(a, n));
        }
    }
    let c = &sys.controller;
    let num = numeric_gradient(
        |z| {
            let (x, u) = split(z);
            c.phi(&x, &u)[0]
        },
        &z,
    );
    let (px, pu) = (c.phi_grad_x(&x, &u), c.phi_grad_u(&x, &u));
    for (a, n) in [px[0], px[1], pu[0]].into_iter().zip(num) {
        worst = worst.max(rel_err(a, n));
    }
    let num = numeric_gradient(|x: &[f64; 2]| c.kd(x), &x);
    let gk = c.kd_gradient(&x);
    worst.max(rel_err(gk[0], num[0])).max(rel_err(gk[1], num[1]))
}
