//! Experiment configuration: one JSON document describing source, trigger
//! detector, signal path, homodyne detector, run settings and reconstruction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::homodyne::{BhdModel, PhasePolicy};
use crate::source::{ClickDetector, HeraldSpec, TmsvSource};
use crate::tomography::ReconstructionOptions;

/// Pulse repetition rate of the pump laser, in Hz.
pub const DEFAULT_REP_RATE: f64 = 80e6;

/// Signal-arm transmission between the source and the homodyne detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalLosses {
    /// Mode matching with the local oscillator.
    pub eta_mm: f64,
    /// Spectral-purity factor.
    pub eta_p: f64,
}

impl SignalLosses {
    pub fn transmission(&self) -> f64 {
        self.eta_mm * self.eta_p
    }
}

impl Default for SignalLosses {
    fn default() -> Self {
        Self {
            eta_mm: 0.66,
            eta_p: 0.97,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_rep_rate")]
    pub rep_rate: f64,
    #[serde(default)]
    pub phase: PhasePolicy,
}

fn default_rep_rate() -> f64 {
    DEFAULT_REP_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: TmsvSource,
    #[serde(default)]
    pub detector: ClickDetector,
    pub herald: HeraldSpec,
    #[serde(default)]
    pub signal_losses: SignalLosses,
    #[serde(default)]
    pub bhd: BhdModel,
    pub run: RunSettings,
    #[serde(default)]
    pub reconstruction: ReconstructionOptions,
}

fn in_section<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{section}: {e}")))
}

impl ExperimentConfig {
    /// Configuration for the `photons`-click experiment (1, 2 or 3).
    pub fn preset(photons: usize) -> Result<Self> {
        let (lambda, n_samples) = match photons {
            1 => (0.071, 100_000),
            2 => (0.071, 60_000),
            3 => (0.087, 40_000),
            _ => return Err(Error::Config(format!("no preset for {photons} photons"))),
        };
        Ok(Self {
            source: TmsvSource {
                lambda,
                n_max: crate::source::DEFAULT_N_MAX,
            },
            detector: ClickDetector::three_channel(),
            herald: HeraldSpec { clicks: photons },
            signal_losses: SignalLosses::default(),
            bhd: BhdModel::default(),
            run: RunSettings {
                n_samples,
                seed: 100 + photons as u64,
                rep_rate: DEFAULT_REP_RATE,
                phase: PhasePolicy::Uniform,
            },
            reconstruction: ReconstructionOptions::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        in_section("source", self.source.validate())?;
        in_section("detector", self.detector.validate())?;
        in_section("herald", self.herald.validate_for(&self.detector))?;
        in_section(
            "signal_losses",
            check_unit_interval("eta_mm", self.signal_losses.eta_mm),
        )?;
        in_section("signal_losses", check_unit_interval("eta_p", self.signal_losses.eta_p))?;
        in_section("bhd", self.bhd.validate())?;
        if self.run.n_samples == 0 {
            return Err(Error::Config("run: n_samples must be positive".into()));
        }
        if !(self.run.rep_rate > 0.0) || !self.run.rep_rate.is_finite() {
            return Err(Error::Config(format!(
                "run: rep_rate = {} must be positive",
                self.run.rep_rate
            )));
        }
        in_section("reconstruction", self.reconstruction.validate())
    }

    /// Overall signal efficiency from source to digitized quadrature.
    pub fn total_efficiency(&self) -> f64 {
        self.signal_losses.transmission() * self.bhd.eta_bhd
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for k in 1..=3 {
            let cfg = ExperimentConfig::preset(k).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_json().unwrap();
            let back = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json().unwrap(), text);
        }
        assert!(ExperimentConfig::preset(4).is_err());
        let eta = ExperimentConfig::preset(1).unwrap().total_efficiency();
        assert!((eta - 0.85 * 0.66 * 0.97).abs() < 1e-15);
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let text = r#"{
            "source": {"lambda": 0.071},
            "herald": {"clicks": 1},
            "run": {"n_samples": 1000, "seed": 7}
        }"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.detector, ClickDetector::three_channel());
        assert_eq!(cfg.run.rep_rate, DEFAULT_REP_RATE);
        assert_eq!(cfg.run.phase, PhasePolicy::Uniform);
        assert_eq!(cfg.reconstruction, ReconstructionOptions::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{
            "source": {"lambda": 0.071, "lamda": 0.1},
            "herald": {"clicks": 1},
            "run": {"n_samples": 1000, "seed": 7}
        }"#;
        let err = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_section() {
        let mut cfg = ExperimentConfig::preset(2).unwrap();
        cfg.signal_losses.eta_mm = 1.3;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("signal_losses") && err.contains("eta_mm"), "{err}");
        let mut cfg = ExperimentConfig::preset(2).unwrap();
        cfg.herald.clicks = 4;
        assert!(cfg.validate().unwrap_err().to_string().contains("herald"));
        let mut cfg = ExperimentConfig::preset(2).unwrap();
        cfg.run.n_samples = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
