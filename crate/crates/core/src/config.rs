//! JSON run configuration.
//!
//! Complex numbers are `[re, im]` pairs, states are arrays of them, and
//! observables are row-major nested arrays (or one of `"sigma_x"`,
//! `"sigma_y"`, `"sigma_z"`). Unknown keys are rejected.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::montecarlo::Protocol;
use crate::pointer::{Basis, SamplerConfig};
use crate::protocols::MeasurementOrder;
use crate::quantum::{Complex, Observable, PureState, WeakValuePart};

pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_N_VALUES: [usize; 5] = [25, 50, 100, 200, 400];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    WeakValue,
    Density,
    PostselectProb,
    Kick,
    Sequential,
    Collective,
    Lindblad,
    Disturbance,
    Simulate,
    Anomalous,
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Named(String),
    Matrix(Vec<Vec<[f64; 2]>>),
}

/// Evaluation grid for pointwise outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        let h = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + i as f64 * h).collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }
}

/// Configuration as read from JSON, then completed with defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable_b: Option<ObservableSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_systems: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub term_cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Basis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<MeasurementOrder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Not part of the config hash: output must not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_multiple: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub part: Option<WeakValuePart>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Not part of the config hash.
    #[serde(skip_serializing)]
    pub out: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    File { path: String, message: String },

    #[error("config field `{field}`: {message}")]
    Schema { field: String, message: String },
}

impl ConfigError {
    pub fn schema(field: &str, message: impl std::fmt::Display) -> Self {
        ConfigError::Schema {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

/// Parses a config from inline JSON (when `source` starts with `{`) or a file path.
pub fn parse_config(source: &str) -> Result<RunConfig, ConfigError> {
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        std::fs::read_to_string(Path::new(source)).map_err(|e| ConfigError::File {
            path: source.to_string(),
            message: e.to_string(),
        })?
    };
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::schema(if path.is_empty() { "." } else { &path }, e.into_inner())
    })?;
    cfg.validate_fields()?;
    Ok(cfg)
}

impl RunConfig {
    /// Checks every present field that can be checked on its own.
    pub fn validate_fields(&self) -> Result<(), ConfigError> {
        if let Some(o) = &self.observable {
            build_observable("observable", o)?;
        }
        if let Some(o) = &self.observable_b {
            build_observable("observable_b", o)?;
        }
        if let Some(s) = &self.psi {
            build_state("psi", s)?;
        }
        if let Some(s) = &self.phi {
            build_state("phi", s)?;
        }
        if let Some(v) = self.lambda {
            if !v.is_finite() {
                return Err(ConfigError::schema("lambda", "must be finite"));
            }
        }
        if let Some(g) = &self.lambda_grid {
            if g.is_empty() || g.iter().any(|v| !v.is_finite() || *v == 0.0) {
                return Err(ConfigError::schema("lambda_grid", "needs finite nonzero values"));
            }
        }
        if let Some(ns) = &self.n_values {
            if ns.is_empty() || ns.contains(&0) {
                return Err(ConfigError::schema("n_values", "needs positive values"));
            }
        }
        if self.n == Some(0) {
            return Err(ConfigError::schema("n", "must be >= 1"));
        }
        if self.trials == Some(0) {
            return Err(ConfigError::schema("trials", "must be >= 1"));
        }
        if let Some(g) = &self.grid {
            if g.points < 2 || !(g.max > g.min) || !g.min.is_finite() || !g.max.is_finite() {
                return Err(ConfigError::schema("grid", "needs min < max and at least 2 points"));
            }
        }
        if let Some(s) = &self.sampler {
            s.validate().map_err(|e| ConfigError::schema("sampler", e))?;
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e != 0.0 && e.abs() <= 1.0) {
                return Err(ConfigError::schema("epsilon", "must lie in [-1, 1] \\ {0}"));
            }
        }
        if let Some(t) = self.threshold_multiple {
            if !t.is_finite() {
                return Err(ConfigError::schema("threshold_multiple", "must be finite"));
            }
        }
        Ok(())
    }

    /// Fills every unset field that has a default.
    pub fn with_defaults(mut self) -> Self {
        self.lambda_grid.get_or_insert_with(|| DEFAULT_LAMBDA_GRID.to_vec());
        self.lambda.get_or_insert(0.1);
        self.n_values.get_or_insert_with(|| DEFAULT_N_VALUES.to_vec());
        self.basis.get_or_insert(Basis::X);
        self.order.get_or_insert(MeasurementOrder::AThenB);
        self.protocol.get_or_insert(Protocol::Single);
        self.trials.get_or_insert(100_000);
        self.seed.get_or_insert(0);
        self.threshold_multiple.get_or_insert(100.0);
        self.epsilon.get_or_insert(0.01);
        self.part.get_or_insert(WeakValuePart::Re);
        self.sampler.get_or_insert_with(SamplerConfig::default);
        self.format.get_or_insert(Format::Csv);
        self
    }

    /// SHA-256 of the canonical JSON of the effective config (without
    /// `threads` and `out`).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn observable(&self) -> Result<Observable, ConfigError> {
        let spec = self
            .observable
            .as_ref()
            .ok_or_else(|| ConfigError::schema("observable", "required"))?;
        build_observable("observable", spec)
    }

    pub fn observable_b(&self) -> Result<Observable, ConfigError> {
        let spec = self
            .observable_b
            .as_ref()
            .ok_or_else(|| ConfigError::schema("observable_b", "required"))?;
        build_observable("observable_b", spec)
    }

    pub fn psi(&self) -> Result<PureState, ConfigError> {
        build_state("psi", self.psi.as_ref().ok_or_else(|| ConfigError::schema("psi", "required"))?)
    }

    pub fn phi(&self) -> Result<PureState, ConfigError> {
        build_state("phi", self.phi.as_ref().ok_or_else(|| ConfigError::schema("phi", "required"))?)
    }
}

fn build_observable(field: &str, spec: &ObservableSpec) -> Result<Observable, ConfigError> {
    match spec {
        ObservableSpec::Named(name) => match name.as_str() {
            "sigma_x" => Ok(Observable::sigma_x()),
            "sigma_y" => Ok(Observable::sigma_y()),
            "sigma_z" => Ok(Observable::sigma_z()),
            other => Err(ConfigError::schema(
                field,
                format!("unknown observable `{other}` (expected sigma_x, sigma_y, sigma_z or a matrix)"),
            )),
        },
        ObservableSpec::Matrix(rows) => {
            let rows: Vec<Vec<Complex>> = rows
                .iter()
                .map(|r| r.iter().map(|p| Complex::new(p[0], p[1])).collect())
                .collect();
            Observable::from_rows(&rows).map_err(|e| ConfigError::schema(field, e))
        }
    }
}

/// States are normalized on input; only the zero vector is rejected.
fn build_state(field: &str, pairs: &[[f64; 2]]) -> Result<PureState, ConfigError> {
    PureState::normalized(pairs.iter().map(|p| Complex::new(p[0], p[1])).collect())
        .map_err(|e: Error| ConfigError::schema(field, e))
}
