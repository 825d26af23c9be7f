//! Run artifacts: per-scenario CSV logs, the JSON summary, and the runner
//! that turns a config file into both.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_config, ConfigError};
use crate::sim::{run_scenario, QpStatus, ScenarioConfig, StepRecord, TrajectoryLog};

/// Column order of every scenario CSV.
pub const CSV_COLUMNS: [&str; 19] = [
    "t",
    "D",
    "v",
    "u",
    "u_delayed",
    "xp_D",
    "xp_v",
    "xphat_D",
    "xphat_v",
    "v_corr",
    "h_x",
    "h_e",
    "h_u",
    "r_e",
    "r_u",
    "h_e_delta",
    "h_u_delta",
    "qp_status",
    "d_norm",
];

/// `h_x` below `-VIOLATION_TOL` counts as a safety violation in summaries.
pub const VIOLATION_TOL: f64 = 1e-6;

/// One CSV line. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub v: f64,
    pub u: f64,
    pub u_delayed: f64,
    #[serde(rename = "xp_D")]
    pub xp_d: f64,
    pub xp_v: f64,
    #[serde(rename = "xphat_D")]
    pub xphat_d: f64,
    pub xphat_v: f64,
    pub v_corr: f64,
    pub h_x: f64,
    pub h_e: f64,
    pub h_u: f64,
    pub r_e: f64,
    pub r_u: f64,
    pub h_e_delta: f64,
    pub h_u_delta: f64,
    pub qp_status: QpStatus,
    pub d_norm: f64,
}

impl From<&StepRecord> for CsvRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            t: r.t,
            d: r.x[0],
            v: r.x[1],
            u: r.u,
            u_delayed: r.u_delayed,
            xp_d: r.x_p[0],
            xp_v: r.x_p[1],
            xphat_d: r.x_p_hat[0],
            xphat_v: r.x_p_hat[1],
            v_corr: r.v_corr,
            h_x: r.h_x,
            h_e: r.h_e,
            h_u: r.h_u,
            r_e: r.r_e,
            r_u: r.r_u,
            h_e_delta: r.h_e_delta,
            h_u_delta: r.h_u_delta,
            qp_status: r.qp_status,
            d_norm: r.d.abs(),
        }
    }
}

pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &log.records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected CSV header {header:?}"),
        )));
    }
    r.deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub scenario: String,
    pub tau: f64,
    pub tau_hat: f64,
    pub robust_enabled: bool,
    pub dt: f64,
    pub horizon: f64,
    pub csv: String,
    pub min_h_x: f64,
    /// First time with `h_x < -VIOLATION_TOL`.
    pub violation_time: Option<f64>,
    pub max_abs_u: f64,
    pub infeasible_steps: usize,
    pub compat_failures: usize,
    pub delta_empirical: f64,
    /// `delta` behind the inflated-set columns.
    pub delta_used: f64,
}

/// Figures a summary reports that can be recomputed from a CSV alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvFigures {
    pub min_h_x: f64,
    pub violation_time: Option<f64>,
    pub max_abs_u: f64,
    pub infeasible_steps: usize,
    pub delta_empirical: f64,
}

impl CsvFigures {
    pub fn from_rows(rows: &[CsvRow]) -> Self {
        Self {
            min_h_x: rows.iter().map(|r| r.h_x).fold(f64::INFINITY, f64::min),
            violation_time: rows.iter().find(|r| r.h_x < -VIOLATION_TOL).map(|r| r.t),
            max_abs_u: rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max),
            infeasible_steps: rows
                .iter()
                .filter(|r| r.qp_status == QpStatus::InfeasibleFallback)
                .count(),
            delta_empirical: rows.iter().map(|r| r.d_norm).fold(0.0, f64::max),
        }
    }
}

impl ScenarioSummary {
    pub fn from_log(log: &TrajectoryLog, csv: &str) -> Self {
        let rows: Vec<CsvRow> = log.records.iter().map(CsvRow::from).collect();
        let fig = CsvFigures::from_rows(&rows);
        let c = &log.config;
        Self {
            name: c.name.clone(),
            scenario: c.scenario.to_string(),
            tau: c.plant_delay(),
            tau_hat: c.controller_delay(),
            robust_enabled: c.robust_enabled,
            dt: c.dt,
            horizon: c.horizon,
            csv: csv.to_string(),
            min_h_x: fig.min_h_x,
            violation_time: fig.violation_time,
            max_abs_u: fig.max_abs_u,
            infeasible_steps: fig.infeasible_steps,
            compat_failures: log.compat_failures(),
            delta_empirical: fig.delta_empirical,
            delta_used: log.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_path: String,
    /// Runs carry no random state; identical configs give identical output.
    pub deterministic: bool,
    pub scenarios: Vec<ScenarioSummary>,
    pub failures: Vec<ScenarioFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    /// Table names or scenario kinds to run; empty selects all.
    pub scenarios: Vec<String>,
    pub deterministic: bool,
}

impl RunManifest {
    pub fn new(config_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, scenarios: Vec<String>) -> Self {
        Self {
            config_path: config_path.into(),
            output_dir: output_dir.into(),
            scenarios,
            deterministic: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no scenario named `{0}` in the config")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    /// `None` when nothing ran.
    pub summary_path: Option<PathBuf>,
    pub csv_paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.summary.failures.is_empty()
    }
}

/// Opens `dir/stem.ext`, or `dir/stem-1.ext`, `dir/stem-2.ext`, ... when
/// taken. Never truncates an existing file.
pub fn create_unique(dir: &Path, stem: &str, ext: &str) -> io::Result<(PathBuf, File)> {
    for n in 0usize.. {
        let name = if n == 0 {
            format!("{stem}.{ext}")
        } else {
            format!("{stem}-{n}.{ext}")
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("suffix space exhausted")
}

/// Keeps configs whose table name or scenario kind is listed.
pub fn select(configs: Vec<ScenarioConfig>, names: &[String]) -> Result<Vec<ScenarioConfig>, RunError> {
    if names.is_empty() {
        return Ok(configs);
    }
    if let Some(missing) = names.iter().find(|n| {
        !configs
            .iter()
            .any(|c| &c.name == *n || c.scenario.as_str() == n.as_str())
    }) {
        return Err(RunError::UnknownScenario(missing.clone()));
    }
    Ok(configs
        .into_iter()
        .filter(|c| names.iter().any(|n| &c.name == n || c.scenario.as_str() == n))
        .collect())
}

/// Runs the selected scenarios in parallel and writes their artifacts.
///
/// A scenario that aborts is listed in the summary's failures; the other
/// scenarios still run and are written.
pub fn run(manifest: &RunManifest) -> Result<RunReport, RunError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    let text = fs::read_to_string(&manifest.config_path).map_err(io_err(&manifest.config_path))?;
    let configs = select(parse_config(&text)?, &manifest.scenarios)?;

    let mut summary = RunSummary {
        config_path: manifest.config_path.display().to_string(),
        deterministic: manifest.deterministic,
        scenarios: Vec::new(),
        failures: Vec::new(),
    };
    if configs.is_empty() {
        return Ok(RunReport {
            summary,
            summary_path: None,
            csv_paths: Vec::new(),
            warnings: vec!["no scenarios to run".into()],
        });
    }

    fs::create_dir_all(&manifest.output_dir).map_err(io_err(&manifest.output_dir))?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|cfg| s.spawn(move || run_scenario(cfg))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });

    let mut csv_paths = Vec::new();
    let mut warnings = Vec::new();
    for (cfg, result) in configs.iter().zip(results) {
        match result {
            Ok(log) => {
                let (path, file) =
                    create_unique(&manifest.output_dir, &cfg.name, "csv").map_err(io_err(&manifest.output_dir))?;
                write_csv(&log, io::BufWriter::new(file)).map_err(|source| RunError::Csv {
                    path: path.clone(),
                    source,
                })?;
                let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
                let s = ScenarioSummary::from_log(&log, &file_name);
                if s.infeasible_steps > 0 {
                    warnings.push(format!(
                        "{}: filter infeasible at {} steps, state constraint prioritized",
                        s.name, s.infeasible_steps
                    ));
                }
                summary.scenarios.push(s);
                csv_paths.push(path);
            }
            Err(e) => summary.failures.push(ScenarioFailure {
                name: cfg.name.clone(),
                error: e.to_string(),
            }),
        }
    }

    let (path, mut file) =
        create_unique(&manifest.output_dir, "summary", "json").map_err(io_err(&manifest.output_dir))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    file.write_all(json.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(io_err(&path))?;

    Ok(RunReport {
        summary,
        summary_path: Some(path),
        csv_paths,
        warnings,
    })
}
