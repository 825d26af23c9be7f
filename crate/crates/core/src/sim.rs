//! Closed-loop scenario engine for the ACC problem.
//!
//! Each step of length `dt`:
//! 1. predict `x_p` (true delay) and `x_p_hat` (controller's delay) from the
//!    current state and the committed input history;
//! 2. build the filter rows at the controller's point `z` and solve for `v`
//!    (this is what gets logged);
//! 3. advance `u' = phi(z, u) + v(z, u)` by one RK4 step on the local pair
//!    `(z, u)`, running the filter again at every stage;
//! 4. push the new input sample and integrate the plant `x' = f(x, u(t - tau))`,
//!    reading the now-extended history.
//!
//! Because the plant reads the same history samples at the same grid times
//! as the predictor, `x_p(t)` reproduces `x(t + tau)` up to rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acc::{acc_he, acc_hu, acc_hx, AccParams, AccState, AccSystem};
use crate::barriers::{inflate, ConstraintRow};
use crate::error::{Error, Result};
use crate::numerics::{rk4_step, InputHistory, IntegratorConfig};
use crate::predictor::{predict_pair, SystemModel};
use crate::qp_filter::{check_compatibility, solve_single, solve_two, ActiveSet, FailedCondition, ANTIPARALLEL_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    DelayFree,
    Naive,
    Predictor,
    PredictorMismatch,
    PredictorMismatchRobust,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::DelayFree,
        ScenarioKind::Naive,
        ScenarioKind::Predictor,
        ScenarioKind::PredictorMismatch,
        ScenarioKind::PredictorMismatchRobust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::DelayFree => "delay-free",
            ScenarioKind::Naive => "naive",
            ScenarioKind::Predictor => "predictor",
            ScenarioKind::PredictorMismatch => "predictor-mismatch",
            ScenarioKind::PredictorMismatchRobust => "predictor-mismatch-robust",
        }
    }

    /// Whether the controller closes the loop on a prediction.
    pub fn uses_predictor(self) -> bool {
        matches!(
            self,
            ScenarioKind::Predictor | ScenarioKind::PredictorMismatch | ScenarioKind::PredictorMismatchRobust
        )
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "scenario",
                reason: format!("unknown scenario `{s}`"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Abort the run at the first infeasible step.
    Error,
    /// Drop the input row and enforce the state row alone.
    #[default]
    PrioritizeState,
}

impl FromStr for FallbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(FallbackPolicy::Error),
            "prioritize-state" => Ok(FallbackPolicy::PrioritizeState),
            _ => Err(Error::InvalidParameter {
                name: "fallback",
                reason: format!("expected `error` or `prioritize-state`, got `{s}`"),
            }),
        }
    }
}

/// Input applied before `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HistorySpec {
    Constant(f64),
    /// Samples on the `dt` grid ending at `t = -dt`, oldest first. Times
    /// before the first sample take the first sample's value.
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub d0: f64,
    pub v0: f64,
    pub u0: f64,
    pub history: HistorySpec,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            d0: 105.0,
            v0: 20.0,
            u0: 0.0,
            history: HistorySpec::Constant(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Label used for output files; defaults to the scenario kind.
    pub name: String,
    pub scenario: ScenarioKind,
    pub tau: f64,
    pub tau_hat: f64,
    pub horizon: f64,
    pub dt: f64,
    pub params: AccParams<f64>,
    pub initial: InitialCondition,
    pub robust_enabled: bool,
    pub fallback_policy: FallbackPolicy,
    /// A-priori disturbance bound for the inflated-set columns; the
    /// empirical bound is used when absent.
    pub delta: Option<f64>,
}

impl ScenarioConfig {
    pub const DEFAULT_TAU: f64 = 1.2;
    pub const DEFAULT_TAU_HAT_MISMATCH: f64 = 0.6;

    /// The standard setup for `kind`: default parameters, `tau = 1.2 s`,
    /// `tau_hat = 0.6 s` for the mismatch variants, 60 s at `dt = 1 ms`.
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let (tau, tau_hat) = match kind {
            ScenarioKind::DelayFree => (0.0, 0.0),
            ScenarioKind::Naive => (Self::DEFAULT_TAU, 0.0),
            ScenarioKind::Predictor => (Self::DEFAULT_TAU, Self::DEFAULT_TAU),
            ScenarioKind::PredictorMismatch | ScenarioKind::PredictorMismatchRobust => {
                (Self::DEFAULT_TAU, Self::DEFAULT_TAU_HAT_MISMATCH)
            }
        };
        Self {
            name: kind.as_str().to_string(),
            scenario: kind,
            tau,
            tau_hat,
            horizon: 60.0,
            dt: 1e-3,
            params: AccParams::default(),
            initial: InitialCondition::default(),
            robust_enabled: kind == ScenarioKind::PredictorMismatchRobust,
            fallback_policy: FallbackPolicy::PrioritizeState,
            delta: None,
        }
    }

    /// Delay the plant sees.
    pub fn plant_delay(&self) -> f64 {
        match self.scenario {
            ScenarioKind::DelayFree => 0.0,
            _ => self.tau,
        }
    }

    /// Prediction horizon the controller uses; zero closes the loop on `x`.
    pub fn controller_delay(&self) -> f64 {
        match self.scenario {
            ScenarioKind::DelayFree | ScenarioKind::Naive => 0.0,
            _ => self.tau_hat,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        if self.horizon < self.dt {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("shorter than one step ({} < {})", self.horizon, self.dt),
            });
        }
        for (name, d) in [("tau", self.plant_delay()), ("tau_hat", self.controller_delay())] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be non-negative and finite, got {d}"),
                });
            }
            if d > 0.0 && d < self.dt {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!(
                        "a non-zero delay must span at least one step, got {d} < dt = {}",
                        self.dt
                    ),
                });
            }
        }
        let init = &self.initial;
        for (name, v) in [("D0", init.d0), ("v0", init.v0), ("u0", init.u0)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        match &init.history {
            HistorySpec::Constant(u) if !u.is_finite() => {
                return Err(Error::InvalidParameter {
                    name: "history_u",
                    reason: format!("must be finite, got {u}"),
                })
            }
            HistorySpec::Samples(s) if s.iter().any(|u| !u.is_finite()) => {
                return Err(Error::InvalidParameter {
                    name: "history_u",
                    reason: "samples must be finite".into(),
                })
            }
            _ => {}
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "delta",
                    reason: format!("must be non-negative and finite, got {d}"),
                });
            }
        }
        self.params.validate()
    }

    /// History over `[-span, 0]` on the `dt` grid, with `u0` at `t = 0`.
    fn initial_history(&self, span: f64) -> Result<InputHistory<f64, 1>> {
        let past = (span / self.dt - 1e-9).ceil().max(0.0) as usize + 1;
        let mut samples = Vec::with_capacity(past + 1);
        match &self.initial.history {
            HistorySpec::Constant(u) => samples.extend(std::iter::repeat_n([*u], past)),
            HistorySpec::Samples(s) => {
                let first = s.first().copied().unwrap_or(self.initial.u0);
                let pad = past.saturating_sub(s.len());
                samples.extend(std::iter::repeat_n([first], pad));
                samples.extend(s[s.len().saturating_sub(past)..].iter().map(|&u| [u]));
            }
        }
        samples.push([self.initial.u0]);
        InputHistory::from_samples(self.dt, 0, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Inactive,
    Active,
    InfeasibleFallback,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Inactive => "inactive",
            QpStatus::Active => "active",
            QpStatus::InfeasibleFallback => "infeasible-fallback",
        }
    }
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QpStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inactive" => Ok(QpStatus::Inactive),
            "active" => Ok(QpStatus::Active),
            "infeasible-fallback" => Ok(QpStatus::InfeasibleFallback),
            _ => Err(Error::InvalidParameter {
                name: "qp_status",
                reason: format!("unknown status `{s}`"),
            }),
        }
    }
}

/// One logged grid point. Barrier values are taken on the physical pair
/// `(x(t), u(t - tau))`; margins on the rows the filter actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: [f64; 2],
    pub u: f64,
    pub u_delayed: f64,
    pub x_p: [f64; 2],
    pub x_p_hat: [f64; 2],
    pub v_corr: f64,
    pub h_x: f64,
    pub h_e: f64,
    pub h_u: f64,
    pub h_e_delta: f64,
    pub h_u_delta: f64,
    pub r_e: f64,
    pub r_u: f64,
    pub qp_status: QpStatus,
    pub compat: FailedCondition,
    /// `phi(x_p_hat, u) + q(x_p_hat, u) - phi(x_p, u) - q(x_p, u)`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub config: ScenarioConfig,
    pub records: Vec<StepRecord>,
    /// The `delta` used for the inflated-set columns.
    pub delta: f64,
}

impl TrajectoryLog {
    pub fn min_hx(&self) -> f64 {
        self.records.iter().map(|r| r.h_x).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_u(&self) -> f64 {
        self.records.iter().map(|r| r.u.abs()).fold(0.0, f64::max)
    }

    /// First logged time with `h_x < -tol`.
    pub fn violation_time(&self, tol: f64) -> Option<f64> {
        self.records.iter().find(|r| r.h_x < -tol).map(|r| r.t)
    }

    pub fn infeasible_steps(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.qp_status == QpStatus::InfeasibleFallback)
            .count()
    }

    pub fn compat_failures(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.compat != FailedCondition::None)
            .count()
    }

    pub fn delta_empirical(&self) -> f64 {
        self.records.iter().map(|r| r.d.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSummary {
    pub delta_empirical: f64,
    pub delta_bound: Option<f64>,
}

/// Outcome of the safety filter at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub v: f64,
    pub status: QpStatus,
    pub compat: FailedCondition,
    pub row_e: ConstraintRow<f64>,
    pub row_u: ConstraintRow<f64>,
}

/// Applies the two-row filter at `(z, u)`, falling back to the state row
/// alone when the pair is infeasible. Returns `None` on infeasibility only
/// when `policy` is [`FallbackPolicy::Error`].
pub fn filter_at(
    sys: &AccSystem<f64>,
    z: &[f64; 2],
    u: f64,
    robust: bool,
    policy: FallbackPolicy,
) -> (Option<FilterStep>, crate::qp_filter::CompatibilityVerdict<f64>) {
    let (row_e, row_u) = sys.rows(z, &[u], robust);
    let verdict = check_compatibility(&row_e, &row_u, ANTIPARALLEL_EPS);
    let res = solve_two(&row_e, &row_u);
    let step = if res.feasible {
        let status = if res.active_set == ActiveSet::None {
            QpStatus::Inactive
        } else {
            QpStatus::Active
        };
        Some(FilterStep {
            v: res.v[0],
            status,
            compat: verdict.failed_condition,
            row_e,
            row_u,
        })
    } else {
        match policy {
            FallbackPolicy::Error => None,
            FallbackPolicy::PrioritizeState => {
                let single = solve_single(&row_e);
                Some(FilterStep {
                    v: single.v[0],
                    status: QpStatus::InfeasibleFallback,
                    compat: verdict.failed_condition,
                    row_e,
                    row_u,
                })
            }
        }
    };
    (step, verdict)
}

/// Correction `phi(z, u) + q(z, u)` the controller applies at `z`.
fn corrected_rate(sys: &AccSystem<f64>, z: &[f64; 2], u: f64, robust: bool) -> f64 {
    use crate::barriers::IntegralController;
    let (step, _) = filter_at(sys, z, u, robust, FallbackPolicy::PrioritizeState);
    let v = step.map_or(0.0, |s| s.v);
    sys.controller.phi(z, &[u])[0] + v
}

/// Matched disturbance at one step.
pub fn disturbance_at(sys: &AccSystem<f64>, x_p: &[f64; 2], x_p_hat: &[f64; 2], u: f64, robust: bool) -> f64 {
    if x_p == x_p_hat {
        return 0.0;
    }
    corrected_rate(sys, x_p_hat, u, robust) - corrected_rate(sys, x_p, u, robust)
}

/// Runs one scenario over `[0, horizon]`, logging `steps() + 1` records.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    use crate::barriers::IntegralController;

    cfg.validate()?;
    if let Some((t, barrier)) = initial_history_violation(cfg)? {
        return Err(Error::UnsafeInitialHistory { t, barrier });
    }
    let sys = AccSystem::new(cfg.params)?;
    let integ = IntegratorConfig::new(cfg.dt)?;
    let (tau, tau_c) = (cfg.plant_delay(), cfg.controller_delay());
    let robust = cfg.robust_enabled;
    let mut hist = cfg.initial_history(tau.max(tau_c))?;

    let n = cfg.steps();
    let mut x = [cfg.initial.d0, cfg.initial.v0];
    let mut u = cfg.initial.u0;
    let mut prev: Option<([f64; 2], f64)> = None;
    let mut records = Vec::with_capacity(n + 1);

    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        let pred = predict_pair(&sys.model, &x, &hist, tau, tau_c, &integ)?;
        let z = pred.x_p_hat;
        let (step, verdict) = filter_at(&sys, &z, u, robust, cfg.fallback_policy);
        let step = step.ok_or_else(|| Error::Infeasible {
            step: k,
            t,
            failed: verdict.failed_condition,
            witness: Box::new(verdict.witness.clone()),
        })?;

        let u_delayed = hist.query(t - tau)?[0];
        let state = AccState::from(x);
        let d = disturbance_at(&sys, &pred.x_p, &pred.x_p_hat, u, robust);
        records.push(StepRecord {
            t,
            x,
            u,
            u_delayed,
            x_p: pred.x_p,
            x_p_hat: pred.x_p_hat,
            v_corr: step.v,
            h_x: acc_hx(&cfg.params, state),
            h_e: acc_he(&cfg.params, state, u_delayed),
            h_u: acc_hu(&cfg.params, u_delayed),
            h_e_delta: f64::NAN,
            h_u_delta: f64::NAN,
            r_e: step.row_e.r,
            r_u: step.row_u.r,
            qp_status: step.status,
            compat: step.compat,
            d,
        });
        if k == n {
            break;
        }

        // The predicted pair follows the delay-free closed loop, so the
        // controller is advanced jointly with it and filtered at every stage.
        // Under a wrong delay estimate the prediction also drifts; that part
        // is carried over from the last step's increment.
        let drift = match prev {
            Some((zp, up)) if tau_c != tau => {
                let (f0, f1) = (sys.model.dynamics(&zp, &[up]), sys.model.dynamics(&z, &[u]));
                [0, 1].map(|i| (z[i] - zp[i]) / cfg.dt - 0.5 * (f0[i] + f1[i]))
            }
            _ => [0.0; 2],
        };
        prev = Some((z, u));
        let pair = rk4_step(
            |s, y: &[f64; 3]| {
                let (zs, us) = ([y[0], y[1]], y[2]);
                let (fs, verdict) = filter_at(&sys, &zs, us, robust, cfg.fallback_policy);
                let fs = fs.ok_or_else(|| Error::Infeasible {
                    step: k,
                    t: s,
                    failed: verdict.failed_condition,
                    witness: Box::new(verdict.witness.clone()),
                })?;
                let f = sys.model.dynamics(&zs, &[us]);
                Ok([
                    f[0] + drift[0],
                    f[1] + drift[1],
                    sys.controller.phi(&zs, &[us])[0] + fs.v,
                ])
            },
            &[z[0], z[1], u],
            t,
            cfg.dt,
        )?;
        let u_next = pair[2];
        if !u_next.is_finite() {
            return Err(Error::NumericFailure { t: t + cfg.dt });
        }
        hist.push([u_next]);
        x = rk4_step(
            |s, xs: &[f64; 2]| Ok(sys.model.dynamics(xs, &hist.query(s - tau)?)),
            &x,
            t,
            cfg.dt,
        )?;
        u = u_next;
    }

    let mut log = TrajectoryLog {
        config: cfg.clone(),
        records,
        delta: 0.0,
    };
    log.delta = cfg.delta.unwrap_or_else(|| log.delta_empirical());
    fill_inflated(&mut log)?;
    Ok(log)
}

fn fill_inflated(log: &mut TrajectoryLog) -> Result<()> {
    let p = log.config.params;
    let (ae, au) = (p.alpha_e(), p.alpha_u());
    let (me, mu) = (p.margin_e(), p.margin_u());
    for r in &mut log.records {
        r.h_e_delta = inflate(r.h_e, &ae, &me, log.delta)?;
        r.h_u_delta = inflate(r.h_u, &au, &mu, log.delta)?;
    }
    Ok(())
}

/// Recomputes `d(t)` at every logged step from `x_p`, `x_p_hat` and `u`.
pub fn disturbance_trace(log: &TrajectoryLog) -> Result<(Vec<f64>, DisturbanceSummary)> {
    let sys = AccSystem::new(log.config.params)?;
    let robust = log.config.robust_enabled;
    let trace: Vec<f64> = log
        .records
        .iter()
        .map(|r| disturbance_at(&sys, &r.x_p, &r.x_p_hat, r.u, robust))
        .collect();
    let delta_empirical = trace.iter().map(|d| d.abs()).fold(0.0, f64::max);
    Ok((
        trace,
        DisturbanceSummary {
            delta_empirical,
            delta_bound: log.config.delta,
        },
    ))
}

/// `delta = (L_phi + L_q) delta_x` for non-negative arguments.
pub fn disturbance_bound(l_phi: f64, l_q: f64, delta_x: f64) -> f64 {
    (l_phi + l_q) * delta_x
}

/// Open-loop check that the committed history keeps `(x, u(t - tau))` in
/// every safe set on `[0, tau]`. Returns the first violation.
pub fn initial_history_violation(cfg: &ScenarioConfig) -> Result<Option<(f64, &'static str)>> {
    let tau = cfg.plant_delay();
    if tau == 0.0 {
        return Ok(None);
    }
    let sys = AccSystem::new(cfg.params)?;
    let hist = cfg.initial_history(tau)?;
    let steps = (tau / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let h = tau / steps as f64;
    let p = &cfg.params;
    let mut x = [cfg.initial.d0, cfg.initial.v0];
    for j in 0..=steps {
        let t = j as f64 * h;
        let u = hist.query(t - tau)?[0];
        let state = AccState::from(x);
        for (name, value) in [
            ("h_x", acc_hx(p, state)),
            ("h_e", acc_he(p, state, u)),
            ("h_u", acc_hu(p, u)),
        ] {
            if value < 0.0 {
                return Ok(Some((t, name)));
            }
        }
        if j < steps {
            x = rk4_step(
                |s, xs: &[f64; 2]| Ok(sys.model.dynamics(xs, &hist.query(s - tau)?)),
                &x,
                t,
                h,
            )?;
        }
    }
    Ok(None)
}

pub fn check_initial_history(cfg: &ScenarioConfig) -> Result<bool> {
    Ok(initial_history_violation(cfg)?.is_none())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvarianceTarget {
    /// `h_x, h_e, h_u >= 0`.
    Safe,
    /// `h_x >= 0` and the inflated `h_e`, `h_u >= 0`.
    Inflated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceOptions {
    pub tol: f64,
    /// Width of the boundary layer watched by the derivative monitor.
    pub band: f64,
    pub tol_deriv: f64,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            band: 1e-3,
            tol_deriv: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub barrier: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub target: InvarianceTarget,
    pub delta: f64,
    /// Every barrier stayed above `-tol` on the physical pair.
    pub holds: bool,
    pub first_violation: Option<Violation>,
    /// Minimum of each checked barrier on the physical pair, `(name, min)`.
    pub minima: Vec<(&'static str, f64)>,
    /// Minimum of `h_e`, `h_u` (or their inflated values) on the predicted
    /// pair `(x_p(t), u(t))`.
    pub predicted_minima: Vec<(&'static str, f64)>,
    pub boundary_ok: bool,
    /// Most negative discrete derivative seen inside the boundary layer.
    pub boundary_worst: Option<Violation>,
    /// `delta <= min(mu_e(0), mu_u(0))`, the condition under which the
    /// unflated set is guaranteed invariant.
    pub small_delta: bool,
}

/// Checks membership of the logged trajectory in `S` or `S_delta`.
pub fn verify_invariance(
    log: &TrajectoryLog,
    target: InvarianceTarget,
    delta: f64,
    opts: InvarianceOptions,
) -> Result<InvarianceReport> {
    let p = log.config.params;
    let (ae, au) = (p.alpha_e(), p.alpha_u());
    let (me, mu) = (p.margin_e(), p.margin_u());
    let lift = |h: f64, inflated: bool, e: bool| -> Result<f64> {
        match (inflated, e) {
            (false, _) => Ok(h),
            (true, true) => inflate(h, &ae, &me, delta),
            (true, false) => inflate(h, &au, &mu, delta),
        }
    };
    let inflated = target == InvarianceTarget::Inflated;

    let names: [&'static str; 3] = if inflated {
        ["h_x", "h_e_delta", "h_u_delta"]
    } else {
        ["h_x", "h_e", "h_u"]
    };
    let mut series: [Vec<f64>; 3] = Default::default();
    let mut predicted: [f64; 2] = [f64::INFINITY; 2];
    for r in &log.records {
        series[0].push(r.h_x);
        series[1].push(lift(r.h_e, inflated, true)?);
        series[2].push(lift(r.h_u, inflated, false)?);
        let xp = AccState::from(r.x_p);
        predicted[0] = predicted[0].min(lift(acc_he(&p, xp, r.u), inflated, true)?);
        predicted[1] = predicted[1].min(lift(acc_hu(&p, r.u), inflated, false)?);
    }

    let mut first_violation: Option<Violation> = None;
    for (step, r) in log.records.iter().enumerate() {
        if let Some(i) = (0..3).find(|&i| series[i][step] < -opts.tol) {
            first_violation = Some(Violation {
                step,
                t: r.t,
                barrier: names[i],
                value: series[i][step],
            });
            break;
        }
    }

    let dt = log.config.dt;
    let mut boundary_worst: Option<Violation> = None;
    for (i, s) in series.iter().enumerate() {
        for k in 0..s.len().saturating_sub(1) {
            if s[k].abs() > opts.band {
                continue;
            }
            let rate = (s[k + 1] - s[k]) / dt;
            if boundary_worst.is_none_or(|w| rate < w.value) {
                boundary_worst = Some(Violation {
                    step: k,
                    t: log.records[k].t,
                    barrier: names[i],
                    value: rate,
                });
            }
        }
    }

    Ok(InvarianceReport {
        target,
        delta,
        holds: first_violation.is_none(),
        first_violation,
        minima: (0..3)
            .map(|i| (names[i], series[i].iter().copied().fold(f64::INFINITY, f64::min)))
            .collect(),
        predicted_minima: vec![(names[1], predicted[0]), (names[2], predicted[1])],
        boundary_ok: boundary_worst.is_none_or(|w| w.value >= -opts.tol_deriv),
        boundary_worst,
        small_delta: delta <= me.mu.eval(0.0).min(mu.mu.eval(0.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseResidual {
    pub step: usize,
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustDecreaseReport {
    pub delta: f64,
    pub worst_e: DecreaseResidual,
    pub worst_u: DecreaseResidual,
}

impl RobustDecreaseReport {
    pub fn min_residual(&self) -> f64 {
        self.worst_e.residual.min(self.worst_u.residual)
    }
}

/// Checks `h' >= -alpha(h) + (mu(h) - delta)|b| + sigma(h)|b|^2` for `h_e`
/// and `h_u` along the predicted pair `(x_p(t_k), u_k)`.
///
/// `h'` is the forward difference over each step and the right-hand side is
/// averaged over the step's end points, both second-order at mid-step.
pub fn verify_robust_decrease(log: &TrajectoryLog, delta: f64) -> Result<RobustDecreaseReport> {
    use crate::barriers::Barrier;

    let sys = AccSystem::new(log.config.params)?;
    let p = &log.config.params;
    let dt = log.config.dt;
    let (ae, au) = (p.alpha_e(), p.alpha_u());
    let (me, mu) = (p.margin_e(), p.margin_u());

    let bound = |h: f64, b: f64, alpha: &crate::numerics::ClassKFn<f64>, m: &crate::barriers::RobustMarginSpec<f64>| {
        -alpha.eval(h) + (m.mu.eval(h) - delta) * b + m.sigma.eval(h) * b * b
    };
    let eval = |r: &StepRecord| {
        let (x, u) = (r.x_p, [r.u]);
        let he = sys.h_e.value(&x, &u);
        let hu = sys.h_u.value(&x, &u);
        let be = sys.h_e.grad_u(&x, &u)[0].abs();
        let bu = sys.h_u.grad_u(&x, &u)[0].abs();
        (he, hu, bound(he, be, &ae, &me), bound(hu, bu, &au, &mu))
    };

    let mut worst_e = DecreaseResidual {
        step: 0,
        t: 0.0,
        residual: f64::INFINITY,
    };
    let mut worst_u = worst_e;
    let points: Vec<_> = log.records.iter().map(eval).collect();
    for k in 0..points.len().saturating_sub(1) {
        let (a, b) = (points[k], points[k + 1]);
        let res_e = (b.0 - a.0) / dt - 0.5 * (a.2 + b.2);
        let res_u = (b.1 - a.1) / dt - 0.5 * (a.3 + b.3);
        let t = log.records[k].t;
        if res_e < worst_e.residual {
            worst_e = DecreaseResidual {
                step: k,
                t,
                residual: res_e,
            };
        }
        if res_u < worst_u.residual {
            worst_u = DecreaseResidual {
                step: k,
                t,
                residual: res_u,
            };
        }
    }
    Ok(RobustDecreaseReport {
        delta,
        worst_e,
        worst_u,
    })
}
