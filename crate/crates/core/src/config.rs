//! Run configuration: a flat `key = value` file merged with command-line
//! overrides, resolved into typed settings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::integrator::{IntegratorSettings, STEPS_PER_PERIOD};
use crate::model::{CascadeState, FlowDirection, ModelParams};
use crate::periodic::SettleOptions;
use crate::steady::ContinuationSettings;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Inconsistent(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "gamma",
    "beta",
    "order",
    "mode",
    "io",
    "tau_rf",
    "tau_rel",
    "da",
    "da_min",
    "da_max",
    "dp",
    "cycles",
    "seed_alpha1",
    "seed_alpha2",
    "grid_step",
    "steps_per_period",
    "record_every",
    "max_cycles",
    "settle_tol",
    "svg",
    "out",
];

/// Accepts `da-min` as well as `da_min`.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Raw settings in insertion-independent order. Later insertions win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut raw = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            raw.set(key, value.trim())?;
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> std::io::Result<String> {
        std::fs::read_to_string(path)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Entries of `other` replace those of `self`.
    pub fn merged(mut self, other: RawConfig) -> Self {
        self.entries.extend(other.entries);
        self
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxationTime {
    Fixed(f64),
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingMode {
    ConstantFlow(FlowDirection),
    ReverseFlow {
        tau_rf: f64,
    },
    Relaxation {
        tau_rf: f64,
        tau_rel: RelaxationTime,
    },
}

impl OperatingMode {
    pub fn tau_rf(&self) -> Option<f64> {
        match *self {
            Self::ConstantFlow(_) => None,
            Self::ReverseFlow { tau_rf } | Self::Relaxation { tau_rf, .. } => Some(tau_rf),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DaSelection {
    Single(f64),
    Range { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub mode: OperatingMode,
    pub da: DaSelection,
    pub continuation: ContinuationSettings,
    pub steps_per_period: usize,
    pub record_every: usize,
    pub settle: SettleOptions,
    pub cycles: usize,
    pub seed: CascadeState,
    pub grid_step: f64,
    pub svg: bool,
    pub out: PathBuf,
}

fn invalid(key: &str, value: impl fmt::Display, reason: &str) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, v, "must be positive"))
    }
}

fn conversion(key: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(key, v, "must lie in [0, 1]"))
    }
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let defaults = ModelParams::default();
        let gamma = raw.get_or("gamma", defaults.gamma)?;
        let beta = raw.get_or("beta", defaults.beta)?;
        let order = raw.get_or("order", defaults.n)?;
        let params = ModelParams::new(gamma, beta, order)
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))?;

        let tau_rf = positive("tau_rf", raw.get_or("tau_rf", 1.0)?)?;
        let tau_rel = match raw.entries.get("tau_rel").map(String::as_str) {
            None => None,
            Some("scan") => Some(RelaxationTime::Scan),
            Some(_) => {
                let t: f64 = raw.get("tau_rel")?.unwrap_or_default();
                if !(t.is_finite() && (0.0..=tau_rf).contains(&t)) {
                    return Err(invalid("tau_rel", t, "must lie in [0, tau_rf]"));
                }
                Some(RelaxationTime::Fixed(t))
            }
        };
        let mode_name: String = raw.get_or(
            "mode",
            if tau_rel.is_some() {
                "relaxation"
            } else {
                "reverse"
            }
            .to_string(),
        )?;
        let mode = match mode_name.as_str() {
            "constant" => {
                let io: u8 = raw.get_or("io", 0)?;
                OperatingMode::ConstantFlow(
                    FlowDirection::from_io(io).map_err(|_| invalid("io", io, "must be 0 or 1"))?,
                )
            }
            "reverse" => OperatingMode::ReverseFlow { tau_rf },
            "relaxation" => OperatingMode::Relaxation {
                tau_rf,
                tau_rel: tau_rel.unwrap_or(RelaxationTime::Scan),
            },
            other => {
                return Err(invalid(
                    "mode",
                    other,
                    "expected constant, reverse or relaxation",
                ))
            }
        };

        let single: Option<f64> = raw.get("da")?;
        let da_min: Option<f64> = raw.get("da_min")?;
        let da_max: Option<f64> = raw.get("da_max")?;
        let da = match (single, da_min, da_max) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError::Inconsistent(
                    "give either `da` or a `da_min`/`da_max` range, not both".into(),
                ))
            }
            (Some(d), None, None) => {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(invalid("da", d, "must be nonnegative"));
                }
                DaSelection::Single(d)
            }
            (None, lo, hi) => {
                let defaults = ContinuationSettings::default();
                let (min, max) = (lo.unwrap_or(defaults.p_min), hi.unwrap_or(defaults.p_max));
                if !(min.is_finite() && max.is_finite() && min >= 0.0 && min < max) {
                    return Err(ConfigError::Inconsistent(format!(
                        "empty Da range [{min}, {max}]"
                    )));
                }
                DaSelection::Range { min, max }
            }
        };

        let mut continuation = ContinuationSettings::default();
        continuation.dp = positive("dp", raw.get_or("dp", continuation.dp)?)?;
        if let DaSelection::Range { min, max } = da {
            continuation.p_min = min;
            continuation.p_max = max;
        }

        let steps_per_period: usize = raw.get_or("steps_per_period", STEPS_PER_PERIOD)?;
        if steps_per_period < 2 {
            return Err(invalid(
                "steps_per_period",
                steps_per_period,
                "must be at least 2",
            ));
        }
        let defaults_settle = SettleOptions::default();
        let settle = SettleOptions {
            max_cycles: raw.get_or("max_cycles", defaults_settle.max_cycles)?,
            tol: positive("settle_tol", raw.get_or("settle_tol", defaults_settle.tol)?)?,
        };

        Ok(Self {
            params,
            mode,
            da,
            continuation,
            steps_per_period,
            record_every: raw.get_or("record_every", 10)?,
            settle,
            cycles: raw.get_or("cycles", 20)?,
            seed: CascadeState::new(
                conversion("seed_alpha1", raw.get_or("seed_alpha1", 0.0)?)?,
                conversion("seed_alpha2", raw.get_or("seed_alpha2", 0.0)?)?,
            ),
            grid_step: positive("grid_step", raw.get_or("grid_step", 0.1)?)?,
            svg: raw.get_or("svg", false)?,
            out: raw.get_or("out", PathBuf::from("."))?,
        })
    }

    /// Integrator settings for a cycle of length `tau_rf`.
    pub fn integrator(&self, tau_rf: f64) -> IntegratorSettings {
        IntegratorSettings {
            step: tau_rf / self.steps_per_period as f64,
            record_every: self.record_every,
        }
    }

    /// Effective settings as `key=value` pairs, enough to reproduce a run.
    /// The output location is not part of the echo.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let mut e: Vec<(&'static str, String)> = vec![
            ("gamma", self.params.gamma.to_string()),
            ("beta", self.params.beta.to_string()),
            ("order", self.params.n.to_string()),
        ];
        match self.mode {
            OperatingMode::ConstantFlow(io) => {
                e.push(("mode", "constant".into()));
                e.push(("io", io.as_u8().to_string()));
            }
            OperatingMode::ReverseFlow { tau_rf } => {
                e.push(("mode", "reverse".into()));
                e.push(("tau_rf", tau_rf.to_string()));
            }
            OperatingMode::Relaxation { tau_rf, tau_rel } => {
                e.push(("mode", "relaxation".into()));
                e.push(("tau_rf", tau_rf.to_string()));
                e.push((
                    "tau_rel",
                    match tau_rel {
                        RelaxationTime::Fixed(t) => t.to_string(),
                        RelaxationTime::Scan => "scan".into(),
                    },
                ));
            }
        }
        match self.da {
            DaSelection::Single(d) => e.push(("da", d.to_string())),
            DaSelection::Range { min, max } => {
                e.push(("da_min", min.to_string()));
                e.push(("da_max", max.to_string()));
            }
        }
        e.extend([
            ("dp", self.continuation.dp.to_string()),
            ("cycles", self.cycles.to_string()),
            ("seed_alpha1", self.seed.alpha1.to_string()),
            ("seed_alpha2", self.seed.alpha2.to_string()),
            ("grid_step", self.grid_step.to_string()),
            ("steps_per_period", self.steps_per_period.to_string()),
            ("record_every", self.record_every.to_string()),
            ("max_cycles", self.settle.max_cycles.to_string()),
            ("settle_tol", self.settle.tol.to_string()),
            ("svg", self.svg.to_string()),
        ]);
        e
    }
}
