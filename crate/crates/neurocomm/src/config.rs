//! Experiment configuration: one JSON document with a section per module.
//!
//! Every section has defaults and rejects unknown keys, so a typo fails
//! loudly instead of silently falling back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurocomm_core::baseline::BaselineConfig;
use neurocomm_core::data::{SensorSplit, SynthConfig};
use neurocomm_core::modem::Scheme;
use neurocomm_core::pipeline::{LossHorizon, Regime, SystemConfig};
use neurocomm_core::trainer::TrainConfig;

use crate::error::{Error, Result};

/// What a run trains or evaluates: one of the spiking regimes or the
/// digital baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RunKind {
    Hyper,
    Joint,
    PerChannel,
    Digital,
}

impl RunKind {
    pub fn regime(self) -> Option<Regime> {
        match self {
            RunKind::Hyper => Some(Regime::Hyper),
            RunKind::Joint => Some(Regime::Joint),
            RunKind::PerChannel => Some(Regime::PerChannel),
            RunKind::Digital => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Hyper => "hyper",
            RunKind::Joint => "joint",
            RunKind::PerChannel => "per_channel",
            RunKind::Digital => "digital",
        }
    }
}

impl From<Regime> for RunKind {
    fn from(r: Regime) -> Self {
        match r {
            Regime::Hyper => RunKind::Hyper,
            Regime::Joint => RunKind::Joint,
            Regime::PerChannel => RunKind::PerChannel,
        }
    }
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Event-file manifest; when absent the synthetic generator is used.
    pub manifest: Option<PathBuf>,
    pub synthetic: SynthConfig,
    /// Fraction of the image rows each device observes.
    pub sensor_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            synthetic: SynthConfig::default(),
            sensor_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Channel realizations averaged per trace.
    pub realizations: usize,
    pub seed: u64,
    /// Accuracy level for the time-to-accuracy metric.
    pub target_accuracy: f64,
    /// Also emit the digital baseline's trace from `eval`.
    pub baseline: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            realizations: 20,
            seed: 0,
            target_accuracy: 0.9,
            baseline: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Bandwidth expansion `L_b`.
    Expansion,
    /// Observed image fraction per device.
    Mu,
    Snr,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Expansion => "expansion",
            SweepAxis::Mu => "mu",
            SweepAxis::Snr => "snr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub runs: Vec<RunKind>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::Expansion,
            values: vec![4.0],
            runs: vec![RunKind::Hyper],
            schemes: vec![Scheme::Lth],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub schemes: Vec<Scheme>,
    pub runs: Vec<RunKind>,
    pub horizons: Vec<LossHorizon>,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            schemes: vec![Scheme::Lth, Scheme::Th],
            runs: vec![RunKind::Hyper, RunKind::Joint],
            horizons: vec![LossHorizon::FinalStep, LossHorizon::AllSteps],
            step: 1e-5,
            tolerance: 1e-4,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
    pub sweep: SweepConfig,
    pub gradcheck: GradCheckConfig,
    /// Add wall-clock time to training log records. Off by default so that
    /// reruns produce identical logs.
    pub log_wall_time: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::json("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.train.validate()?;
        SensorSplit::new(self.system.devices(), self.data.sensor_fraction, 1)?;
        if self.eval.realizations == 0 {
            return Err(Error::invalid("eval.realizations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eval.target_accuracy) {
            return Err(Error::invalid("eval.target_accuracy must lie in [0, 1]"));
        }
        if self.sweep.values.is_empty()
            || self.sweep.runs.is_empty()
            || self.sweep.schemes.is_empty()
            || self.sweep.seeds.is_empty()
        {
            return Err(Error::invalid("sweep values, runs, schemes and seeds must be non-empty"));
        }
        for &v in &self.sweep.values {
            let ok = match self.sweep.axis {
                SweepAxis::Expansion => v >= 1.0 && v.fract() == 0.0,
                SweepAxis::Mu => v > 0.0 && v <= 1.0,
                SweepAxis::Snr => v.is_finite(),
            };
            if !ok {
                return Err(Error::invalid(format!("sweep value {v} is invalid for axis {}", self.sweep.axis)));
            }
        }
        if !(self.gradcheck.step > 0.0 && self.gradcheck.tolerance > 0.0) {
            return Err(Error::invalid("gradcheck step and tolerance must be positive"));
        }
        if self.data.manifest.is_none() {
            let s = &self.data.synthetic;
            self.check_shape(s.rows * s.cols, s.steps, s.classes)?;
        }
        Ok(())
    }

    /// Checks that a dataset of the given shape fits the system description.
    pub fn check_shape(&self, channels: usize, steps: usize, classes: usize) -> Result<()> {
        let split = SensorSplit::new(self.system.devices(), self.data.sensor_fraction, channels)?;
        let sys = &self.system;
        if split.per_device() != sys.sensor_channels {
            return Err(Error::invalid(format!(
                "system.sensor_channels is {} but the data gives {} channels per device",
                sys.sensor_channels,
                split.per_device()
            )));
        }
        if steps != sys.steps || classes != sys.classes {
            return Err(Error::invalid(format!(
                "data has {steps} steps and {classes} classes, system expects {} and {}",
                sys.steps, sys.classes
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sytem": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"system": {"snr": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"baseline": {"ann": {"width": 3}}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.system.snr_db = 5.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn shape_mismatch_is_a_validation_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.system.sensor_channels = 10;
        assert!(matches!(cfg.validate(), Err(Error::Invalid(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.axis = SweepAxis::Expansion;
        cfg.sweep.values = vec![2.5];
        assert!(cfg.validate().is_err());
    }
}
