use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use delay_icbf::config::parse_config;
use delay_icbf::feasibility::{sweep, SweepBox};
use delay_icbf::output::{self, RunManifest};
use delay_icbf::selftest;

#[derive(Parser)]
#[command(name = "delay-icbf", version, about = "Safety filtering for input-delayed systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios from a config and write CSV logs plus summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Table name or scenario kind; repeat to select several. Default: all.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Sweep the state-input box and compare the compatibility predicate
    /// with filter feasibility, once per configured scenario.
    CheckFeasibility {
        #[arg(long)]
        config: PathBuf,
        /// Print the full reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the built-in oracle suites.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
    },
}

fn run(config: PathBuf, out: PathBuf, scenarios: Vec<String>) -> Result<bool> {
    let manifest = RunManifest::new(config, out, scenarios);
    let report = output::run(&manifest).with_context(|| format!("running {}", manifest.config_path.display()))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for s in &report.summary.scenarios {
        let violation = s
            .violation_time
            .map_or_else(|| "none".to_string(), |t| format!("t = {t:.3} s"));
        println!(
            "{:<28} min h_x {:>12.6e}  violation {:<12}  max |u| {:.4}  infeasible {:>5}  delta {:.4}  -> {}",
            s.name, s.min_h_x, violation, s.max_abs_u, s.infeasible_steps, s.delta_empirical, s.csv
        );
    }
    for f in &report.summary.failures {
        eprintln!("error: {}: {}", f.name, f.error);
    }
    if let Some(p) = &report.summary_path {
        println!("summary: {}", p.display());
    }
    Ok(report.success())
}

fn check_feasibility(config: PathBuf, json: bool) -> Result<bool> {
    let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let configs = parse_config(&text).with_context(|| format!("parsing {}", config.display()))?;
    if configs.is_empty() {
        eprintln!("warning: no scenarios in {}", config.display());
    }
    let mut ok = true;
    let mut reports = Vec::new();
    for cfg in &configs {
        let report = sweep(&cfg.params, cfg.robust_enabled, &SweepBox::for_params(&cfg.params))?;
        ok &= report.agrees();
        if !json {
            println!(
                "{:<28} robust {:<5}  points {}  compatible {}  cond1 {}  cond2 {}  cond3 {}  disagreements {}",
                cfg.name,
                report.robust,
                report.points,
                report.compatible,
                report.cond1,
                report.cond2,
                report.cond3,
                report.disagreements.len()
            );
        }
        reports.push((cfg.name.clone(), report));
    }
    if json {
        let map: serde_json::Map<String, serde_json::Value> = reports
            .into_iter()
            .map(|(name, r)| Ok((name, serde_json::to_value(r)?)))
            .collect::<Result<_, serde_json::Error>>()?;
        println!("{}", serde_json::to_string_pretty(&map)?);
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, scenarios } => run(config, out, scenarios),
        Command::CheckFeasibility { config, json } => check_feasibility(config, json),
        Command::Selftest { seed, cases } => {
            let suites = selftest::run_all(seed, cases);
            for s in &suites {
                println!(
                    "{} {:<24} cases {:>6}  failures {:>4}  worst {:.3e}",
                    if s.passed() { "PASS" } else { "FAIL" },
                    s.name,
                    s.cases,
                    s.failures,
                    s.worst
                );
            }
            Ok(suites.iter().all(|s| s.passed()))
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
