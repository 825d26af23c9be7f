//! Scenario configuration files.
//!
//! A TOML document with one table per scenario; the table name labels the
//! run's output files. Top-level keys apply to every scenario unless the
//! table sets them again.
//!
//! ```toml
//! dt = 1e-3
//!
//! [predictor]
//! scenario = "predictor"
//! tau = 1.2
//!
//! [robust]
//! scenario = "predictor"
//! tau_hat = 0.6
//! robust_enabled = true
//! ```

use thiserror::Error;
use toml::{Table, Value};

use crate::sim::{FallbackPolicy, HistorySpec, ScenarioConfig, ScenarioKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("[{section}]: unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("[{section}]: missing required key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("[{section}]: key `{key}` must be {expected}")]
    WrongType {
        section: String,
        key: String,
        expected: &'static str,
    },
    #[error("[{section}]: invalid `{key}`: {reason}")]
    Invalid {
        section: String,
        key: String,
        reason: String,
    },
}

/// Keys accepted at the top level and in scenario tables.
pub const KEYS: &[&str] = &[
    "scenario",
    "c0",
    "c1",
    "c2",
    "K_v",
    "alpha_phi",
    "mu0_e",
    "mu0_u",
    "sigma0_e",
    "sigma0_u",
    "lambda",
    "u_max",
    "tau",
    "tau_hat",
    "D0",
    "v0",
    "u0",
    "history_u",
    "v_L",
    "v_d",
    "gamma_x",
    "gamma_e",
    "gamma_u",
    "T_h",
    "D_sf",
    "dt",
    "horizon",
    "robust_enabled",
    "fallback",
    "delta",
];

struct Section<'a> {
    name: &'a str,
    own: &'a Table,
    shared: &'a Table,
}

impl Section<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.own.get(key).or_else(|| self.shared.get(key))
    }

    fn wrong(&self, key: &str, expected: &'static str) -> ConfigError {
        ConfigError::WrongType {
            section: self.name.to_string(),
            key: key.to_string(),
            expected,
        }
    }

    fn num(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.wrong(key, "a number")),
        }
    }

    fn set(&self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.num(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn string(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.wrong(key, "a string")),
        }
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            section: self.name.to_string(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

fn check_keys(section: &str, table: &Table, skip_tables: bool) -> Result<(), ConfigError> {
    for (key, value) in table {
        if skip_tables && value.is_table() {
            continue;
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                section: section.to_string(),
                key: key.clone(),
            });
        }
    }
    Ok(())
}

/// Parses and validates every scenario table, in document order.
pub fn parse_config(text: &str) -> Result<Vec<ScenarioConfig>, ConfigError> {
    let doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    check_keys("<top level>", &doc, true)?;
    let shared: Table = doc
        .iter()
        .filter(|(_, v)| !v.is_table())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    doc.iter()
        .filter_map(|(name, v)| v.as_table().map(|t| (name, t)))
        .map(|(name, own)| {
            check_keys(name, own, false)?;
            scenario_from(&Section {
                name,
                own,
                shared: &shared,
            })
        })
        .collect()
}

fn scenario_from(sec: &Section<'_>) -> Result<ScenarioConfig, ConfigError> {
    let kind_name = sec.string("scenario")?.ok_or_else(|| ConfigError::MissingKey {
        section: sec.name.to_string(),
        key: "scenario".into(),
    })?;
    let kind: ScenarioKind = kind_name
        .parse()
        .map_err(|_| sec.invalid("scenario", format!("unknown scenario `{kind_name}`")))?;

    let mut cfg = ScenarioConfig::for_kind(kind);
    cfg.name = sec.name.to_string();

    let p = &mut cfg.params;
    for (key, slot) in [
        ("c0", &mut p.c0),
        ("c1", &mut p.c1),
        ("c2", &mut p.c2),
        ("K_v", &mut p.k_v),
        ("alpha_phi", &mut p.alpha_phi),
        ("mu0_e", &mut p.mu0_e),
        ("mu0_u", &mut p.mu0_u),
        ("sigma0_e", &mut p.sigma0_e),
        ("sigma0_u", &mut p.sigma0_u),
        ("lambda", &mut p.lambda),
        ("u_max", &mut p.u_max),
        ("v_L", &mut p.v_l),
        ("v_d", &mut p.v_d),
        ("gamma_x", &mut p.gamma_x),
        ("gamma_e", &mut p.gamma_e),
        ("gamma_u", &mut p.gamma_u),
        ("T_h", &mut p.t_h),
        ("D_sf", &mut p.d_sf),
    ] {
        sec.set(key, slot)?;
    }
    sec.set("D0", &mut cfg.initial.d0)?;
    sec.set("v0", &mut cfg.initial.v0)?;
    sec.set("u0", &mut cfg.initial.u0)?;
    sec.set("dt", &mut cfg.dt)?;
    sec.set("horizon", &mut cfg.horizon)?;
    cfg.delta = sec.num("delta")?;

    match sec.get("history_u") {
        None => {}
        Some(Value::Float(f)) => cfg.initial.history = HistorySpec::Constant(*f),
        Some(Value::Integer(i)) => cfg.initial.history = HistorySpec::Constant(*i as f64),
        Some(Value::Array(items)) => {
            let samples = items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| sec.wrong("history_u", "a number or an array of numbers"))?;
            cfg.initial.history = HistorySpec::Samples(samples);
        }
        Some(_) => return Err(sec.wrong("history_u", "a number or an array of numbers")),
    }

    match sec.get("robust_enabled") {
        None => {}
        Some(Value::Boolean(b)) => cfg.robust_enabled = *b,
        Some(_) => return Err(sec.wrong("robust_enabled", "a boolean")),
    }
    if let Some(f) = sec.string("fallback")? {
        cfg.fallback_policy = f
            .parse::<FallbackPolicy>()
            .map_err(|_| sec.invalid("fallback", format!("expected `error` or `prioritize-state`, got `{f}`")))?;
    }

    let tau = sec.num("tau")?;
    let tau_hat = sec.num("tau_hat")?;
    match kind {
        ScenarioKind::DelayFree => {
            cfg.tau = 0.0;
            cfg.tau_hat = 0.0;
        }
        ScenarioKind::Naive => {
            cfg.tau = tau.unwrap_or(cfg.tau);
            cfg.tau_hat = 0.0;
        }
        _ => {
            cfg.tau = tau.unwrap_or(cfg.tau);
            cfg.tau_hat = match (tau_hat, kind) {
                (Some(th), _) => th,
                (None, ScenarioKind::Predictor) => cfg.tau,
                (None, _) => cfg.tau_hat,
            };
            cfg.scenario = if cfg.tau_hat == cfg.tau {
                ScenarioKind::Predictor
            } else if cfg.robust_enabled {
                ScenarioKind::PredictorMismatchRobust
            } else {
                ScenarioKind::PredictorMismatch
            };
        }
    }

    cfg.validate().map_err(|e| match e {
        crate::Error::InvalidParameter { name, reason } => sec.invalid(name, reason),
        other => sec.invalid("scenario", other.to_string()),
    })?;
    Ok(cfg)
}
