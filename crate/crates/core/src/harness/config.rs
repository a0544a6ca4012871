//! Run-configuration schema (TOML) and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::{OracleSettings, ProtocolSpec};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WMLAB_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Sweep axis over one real-valued protocol parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Name of the swept `ProtocolSpec` field.
    pub parameter: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

pub const SWEEPABLE: &[&str] = &["kappa", "weak_value", "detector_inefficiency", "r0_prime"];

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.min + f * (self.max - self.min),
                    Spacing::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !SWEEPABLE.contains(&self.parameter.as_str()) {
            return Err(Error::Validation(format!(
                "unknown sweep parameter '{}'; supported: {}",
                self.parameter,
                SWEEPABLE.join(", ")
            )));
        }
        if self.points < 2 {
            return Err(Error::Validation("sweep needs at least 2 points".into()));
        }
        if !(self.min < self.max) {
            return Err(Error::Validation(format!(
                "sweep needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if matches!(self.spacing, Spacing::Log) && self.min <= 0.0 {
            return Err(Error::Validation(
                "log spacing needs a positive minimum".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; falls back to `WMLAB_OUT_DIR`, then `./wmlab-out`.
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec: ProtocolSpec,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
    #[serde(default)]
    pub oracle: Option<OracleSettings>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("wmlab-out"))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        if let Some(oracle) = &self.oracle {
            if oracle.n_atoms < 2 || oracle.photon_cutoff < 2 {
                return Err(Error::Validation(
                    "oracle settings need n_atoms >= 2 and photon_cutoff >= 2".into(),
                ));
            }
            if !(oracle.leak_tol > 0.0) {
                return Err(Error::Validation("leak_tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
