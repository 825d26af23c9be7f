//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every 60 s scenario is simulated once and shared.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use delay_icbf::acc::{acc_dynamics, AccModel, AccParams, AccState, AccSystem};
use delay_icbf::numerics::{InputHistory, IntegratorConfig};
use delay_icbf::output::{run, write_csv, RunManifest};
use delay_icbf::predictor::{predict, SystemModel};
use delay_icbf::sim::{run_scenario, verify_robust_decrease, ScenarioConfig, ScenarioKind, TrajectoryLog};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

const U_MAX: f64 = 1.96;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Runs {
    free: TrajectoryLog,
    free_time: Duration,
    naive: TrajectoryLog,
    predictor: TrajectoryLog,
    mismatch: TrajectoryLog,
    robust: TrajectoryLog,
}

fn simulate(kind: ScenarioKind) -> TrajectoryLog {
    run_scenario(&ScenarioConfig::for_kind(kind)).expect("scenario runs")
}

fn criterion_1(r: &Runs) -> Outcome {
    let (h, u, t) = (r.free.min_hx(), r.free.max_abs_u(), r.free_time.as_secs_f64());
    outcome(
        h >= -1e-6 && u <= U_MAX + 1e-6 && t < 5.0,
        format!("delay-free: min h_x = {h:.3e}, max |u| = {u:.4}, runtime = {t:.3} s"),
    )
}

fn criterion_2(r: &Runs) -> Outcome {
    let h = r.naive.min_hx();
    let when = r.naive.violation_time(0.0);
    outcome(
        h < 0.0 && when.is_some(),
        match when {
            Some(t) => format!("naive: min h_x = {h:.4}, first h_x < 0 at t = {t:.3} s"),
            None => format!("naive: min h_x = {h:.4}, never below zero"),
        },
    )
}

fn criterion_3(r: &Runs) -> Outcome {
    let (h, u) = (r.predictor.min_hx(), r.predictor.max_abs_u());
    let first = &r.predictor.records[0];
    let mut cfg = ScenarioConfig::for_kind(ScenarioKind::DelayFree);
    cfg.initial.d0 = first.x_p[0];
    cfg.initial.v0 = first.x_p[1];
    cfg.initial.u0 = first.u;
    let shifted = run_scenario(&cfg).expect("shifted run");
    let sup = r
        .predictor
        .records
        .iter()
        .zip(&shifted.records)
        .map(|(a, b)| (a.u - b.u).abs())
        .fold(0.0, f64::max);
    outcome(
        h >= -1e-4 && u <= U_MAX + 1e-4 && sup <= 1e-5,
        format!("predictor: min h_x = {h:.3e}, max |u| = {u:.4}, shift-equivalence sup |du| = {sup:.3e}"),
    )
}

fn criterion_4(r: &Runs) -> Outcome {
    let hm = r.mismatch.min_hx();
    let (hr, ur) = (r.robust.min_hx(), r.robust.max_abs_u());
    outcome(
        hm < 0.0 && hr >= -1e-4 && ur <= U_MAX + 1e-4,
        format!(
            "mismatch: min h_x = {hm:.4}; robust: min h_x = {hr:.4}, max |u| = {ur:.4}, {} fallback steps",
            r.robust.infeasible_steps()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);
    let single = single_campaign(&mut rng, 10_000);
    let pair = pair_campaign(&mut rng, 10_000);
    let anti = antiparallel_campaign(&mut rng, 3_000);
    let first = [&single, &pair, &anti].iter().find_map(|c| c.first_failure.clone());
    outcome(
        single.passed() && pair.passed() && anti.passed(),
        format!(
            "single {}/{} (worst rel {:.1e}), pairs {}/{} (worst rel {:.1e}), anti-parallel {}/{}{}",
            single.cases - single.failures,
            single.cases,
            single.worst,
            pair.cases - pair.failures,
            pair.cases,
            pair.worst,
            anti.cases - anti.failures,
            anti.cases,
            first.map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_6() -> Outcome {
    let (c, anti) = compatibility_campaign(&mut StdRng::seed_from_u64(2025), 10_000);
    outcome(
        c.passed() && anti == 1_000,
        format!(
            "{}/{} agree, {anti} exactly anti-parallel{}",
            c.cases - c.failures,
            c.cases,
            c.first_failure
                .map(|f| format!("; first failure: {f}"))
                .unwrap_or_default()
        ),
    )
}

struct Integrator;

impl SystemModel<f64, 1, 1> for Integrator {
    fn dynamics(&self, _x: &[f64; 1], u: &[f64; 1]) -> [f64; 1] {
        [u[0]]
    }
}

fn criterion_7(r: &Runs) -> Outcome {
    let log = &r.predictor;
    let k = (log.config.tau / log.config.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for i in 0..log.records.len() - k {
        let (p, f) = (log.records[i].x_p, log.records[i + k].x);
        worst = worst.max((p[0] - f[0]).abs()).max((p[1] - f[1]).abs());
    }

    let tau: f64 = 1.2;
    let error = |dt: f64| {
        let n = (tau / dt).round() as i64;
        let hist = InputHistory::from_samples(dt, 0, (-n..=0).map(|j| [(j as f64 * dt).sin()]).collect()).unwrap();
        let x = predict(&Integrator, &[0.0], &hist, tau, &IntegratorConfig::new(dt).unwrap()).unwrap()[0];
        (x - (tau.cos() - 1.0)).abs()
    };
    let ratio = error(0.1) / error(0.05);

    let p = AccParams::default();
    let hist = InputHistory::constant(1e-3, tau, 0, [0.0]).unwrap();
    let got = predict(
        &AccModel::new(p),
        &[105.0, 20.0],
        &hist,
        tau,
        &IntegratorConfig::new(1e-3).unwrap(),
    )
    .unwrap();
    let want = rk4_fixed(
        |x, _| acc_dynamics(&p, AccState::from(*x), 0.0),
        [105.0, 20.0],
        0.0,
        tau,
        120_000,
    );
    let oracle = (got[0] - want[0]).abs().max((got[1] - want[1]).abs());

    outcome(
        worst <= 1e-6 && ratio >= 4.0 && oracle <= 1e-6,
        format!("sup |x_p(t) - x(t+tau)| = {worst:.3e}, halving ratio = {ratio:.4}, ACC vs fine oracle = {oracle:.1e}"),
    )
}

fn criterion_8(r: &Runs) -> Outcome {
    let rep = verify_robust_decrease(&r.robust, r.robust.delta).expect("monitor runs");
    let m = rep.min_residual();
    outcome(
        m >= -1e-3,
        format!(
            "delta = {:.4}, min residual = {m:.3e} (h_e {:.3e} at t = {:.3}, h_u {:.3e} at t = {:.3})",
            rep.delta, rep.worst_e.residual, rep.worst_e.t, rep.worst_u.residual, rep.worst_u.t
        ),
    )
}

fn criterion_9() -> Outcome {
    let sys = AccSystem::new(AccParams::default()).unwrap();
    let mut rng = StdRng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let z = [
            rng.random_range(0.0..150.0),
            rng.random_range(0.0..40.0),
            rng.random_range(-3.0..3.0),
        ];
        let e = gradient_error(&sys, z);
        worst = worst.max(e);
        failures += usize::from(e > 1e-5);
    }
    outcome(
        failures == 0,
        format!("1000 points, {failures} failures, worst relative error {worst:.2e}"),
    )
}

fn criterion_10(r: &Runs) -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/acc.toml");
    let report = match run(&RunManifest::new(config, dir.path(), vec![])) {
        Ok(rep) => rep,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let logs = [&r.free, &r.naive, &r.predictor, &r.mismatch, &r.robust];
    let mut same = 0;
    for (path, log) in report.csv_paths.iter().zip(logs) {
        let mut mine = Vec::new();
        write_csv(log, &mut mine).expect("csv to memory");
        if std::fs::read(path).map(|b| b == mine).unwrap_or(false) {
            same += 1;
        }
    }
    outcome(
        same == logs.len() && report.csv_paths.len() == logs.len(),
        format!("{same}/{} CSVs byte-identical across two runs", logs.len()),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let clock = Instant::now();
    let free = simulate(ScenarioKind::DelayFree);
    let free_time = clock.elapsed();
    let runs = Runs {
        free,
        free_time,
        naive: simulate(ScenarioKind::Naive),
        predictor: simulate(ScenarioKind::Predictor),
        mismatch: simulate(ScenarioKind::PredictorMismatch),
        robust: simulate(ScenarioKind::PredictorMismatchRobust),
    };

    let results = [
        ("delay-free reference keeps both constraints", criterion_1(&runs)),
        (
            "naive delayed loop violates the distance constraint",
            criterion_2(&runs),
        ),
        ("predictor compensates the delay", criterion_3(&runs)),
        ("robust margins absorb delay underestimation", criterion_4(&runs)),
        ("filter matches a generic QP solver", criterion_5()),
        ("compatibility test equals filter feasibility", criterion_6()),
        ("prediction is exact and converges", criterion_7(&runs)),
        ("robust decrease inequality along the run", criterion_8(&runs)),
        ("analytic gradients match central differences", criterion_9()),
        ("repeated runs give byte-identical CSVs", criterion_10(&runs)),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
