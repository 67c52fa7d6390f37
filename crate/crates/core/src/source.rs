//! Two-mode squeezed vacuum source, spatially multiplexed click detector and
//! heralded signal-state preparation.
//!
//! Photon routing through the detector's beam-splitter tree is treated as
//! multinomial: for detectors that only resolve "click / no click" the
//! quantum beam-splitter statistics reduce exactly to independent routing of
//! each photon to output `i` with probability `q_i`.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::fock::DensityMatrix;

/// Largest detector count accepted; patterns are enumerated as bitmasks.
pub const MAX_DETECTORS: usize = 16;

/// Default photon-pair truncation, giving a 12-dimensional signal space.
pub const DEFAULT_N_MAX: usize = 11;

/// Truncated two-mode squeezed vacuum `Σ_n λⁿ |n, n⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmsvSource {
    pub lambda: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

impl TmsvSource {
    pub fn new(lambda: f64, n_max: usize) -> Result<Self> {
        let s = Self { lambda, n_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!("lambda = {} must be in [0, 1)", self.lambda)));
        }
        Ok(())
    }

    /// Signal-mode Fock dimension implied by the pair truncation.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Pair-number probabilities `P(n) ∝ λ^(2n)` for `n ≤ n_max`.
pub fn joint_pair_distribution(src: &TmsvSource) -> Vec<f64> {
    let l2 = src.lambda * src.lambda;
    let mut w = Vec::with_capacity(src.n_max + 1);
    let mut acc = 1.0;
    for _ in 0..=src.n_max {
        w.push(acc);
        acc *= l2;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Multiplexed click detector: a beam-splitter tree routing the trigger mode
/// onto several click detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickDetector {
    /// Routing probability onto each detector.
    pub bin_probs: Vec<f64>,
    /// Per-detector quantum efficiency.
    pub eta_det: f64,
    /// Per-detector, per-pulse dark-click probability.
    pub dark_prob: f64,
    /// Trigger-arm transmission upstream of the splitter tree.
    pub coupling: f64,
}

impl ClickDetector {
    pub fn new(bin_probs: Vec<f64>, eta_det: f64, dark_prob: f64, coupling: f64) -> Result<Self> {
        let d = Self {
            bin_probs,
            eta_det,
            dark_prob,
            coupling,
        };
        d.validate()?;
        Ok(d)
    }

    /// Three detectors behind two 50:50 splitters, one splitter feeding the
    /// other: routing (1/2, 1/4, 1/4). APD efficiency 0.45, trigger coupling
    /// 0.65, no dark counts.
    pub fn three_channel() -> Self {
        Self {
            bin_probs: vec![0.5, 0.25, 0.25],
            eta_det: 0.45,
            dark_prob: 0.0,
            coupling: 0.65,
        }
    }

    /// A single click detector (no multiplexing).
    pub fn single(eta_det: f64, dark_prob: f64, coupling: f64) -> Result<Self> {
        Self::new(vec![1.0], eta_det, dark_prob, coupling)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bin_probs.len();
        if n == 0 || n > MAX_DETECTORS {
            return Err(Error::Parameter(format!(
                "detector count {n} must be between 1 and {MAX_DETECTORS}"
            )));
        }
        for (i, q) in self.bin_probs.iter().enumerate() {
            check_unit_interval(&format!("bin_probs[{i}]"), *q)?;
        }
        let total: f64 = self.bin_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("bin_probs sum to {total}, expected 1")));
        }
        check_unit_interval("eta_det", self.eta_det)?;
        check_unit_interval("dark_prob", self.dark_prob)?;
        check_unit_interval("coupling", self.coupling)?;
        Ok(())
    }

    pub fn n_detectors(&self) -> usize {
        self.bin_probs.len()
    }

    /// Probability that none of the detectors in `mask` clicks given `n`
    /// photons enter the tree.
    fn no_click_probability(&self, n: usize, mask: u32) -> f64 {
        let mut routed = 0.0;
        let mut silent_dark = 1.0;
        for (i, q) in self.bin_probs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                routed += q;
                silent_dark *= 1.0 - self.dark_prob;
            }
        }
        let per_photon = (1.0 - self.coupling * self.eta_det * routed).max(0.0);
        per_photon.powi(n as i32) * silent_dark
    }

    /// Probability that exactly the detectors in `clicks` fire.
    fn mask_probability(&self, n: usize, clicks: u32) -> f64 {
        let full = (1u32 << self.n_detectors()) - 1;
        let silent = full & !clicks;
        // Inclusion-exclusion over subsets T of the clicking set.
        let mut total = 0.0;
        let mut t = clicks;
        loop {
            let sign = if t.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            total += sign * self.no_click_probability(n, silent | t);
            if t == 0 {
                break;
            }
            t = (t - 1) & clicks;
        }
        // Cancellation leaves round-off of either sign on exact zeros.
        total.max(0.0)
    }
}

impl Default for ClickDetector {
    fn default() -> Self {
        Self::three_channel()
    }
}

/// Required herald outcome: exactly `clicks` detectors fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldSpec {
    pub clicks: usize,
}

impl HeraldSpec {
    pub fn validate_for(&self, det: &ClickDetector) -> Result<()> {
        if self.clicks > det.n_detectors() {
            return Err(Error::Parameter(format!(
                "herald of {} clicks with only {} detectors",
                self.clicks,
                det.n_detectors()
            )));
        }
        Ok(())
    }
}

/// Probability that exactly the detectors listed in `pattern` click when `n`
/// photons enter the detector.
pub fn click_pattern_probability(det: &ClickDetector, n: usize, pattern: &[usize]) -> Result<f64> {
    let mut mask = 0u32;
    for &i in pattern {
        if i >= det.n_detectors() {
            return Err(Error::Parameter(format!(
                "detector index {i} out of range for {} detectors",
                det.n_detectors()
            )));
        }
        if mask & (1 << i) != 0 {
            return Err(Error::Parameter(format!("detector index {i} repeated in pattern")));
        }
        mask |= 1 << i;
    }
    Ok(det.mask_probability(n, mask))
}

/// Distribution of the number of clicks, `k = 0 … N_det`, given `n` photons.
pub fn click_count_probability(det: &ClickDetector, n: usize) -> Vec<f64> {
    let nd = det.n_detectors();
    let mut out = vec![0.0; nd + 1];
    for mask in 0u32..(1 << nd) {
        out[mask.count_ones() as usize] += det.mask_probability(n, mask);
    }
    out
}

/// Diagonal POVM weights `p(k | n)` for `n = 0 … n_max`.
pub fn smd_povm(det: &ClickDetector, k: usize, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| click_count_probability(det, n).get(k).copied().unwrap_or(0.0))
        .collect()
}

/// A trigger-arm measurement diagonal in photon number.
pub trait TriggerPovm {
    /// Outcome weights `p(k | n)` for `n = 0 … n_max`.
    fn outcome_weights(&self, k: usize, n_max: usize) -> Vec<f64>;
}

impl TriggerPovm for ClickDetector {
    fn outcome_weights(&self, k: usize, n_max: usize) -> Vec<f64> {
        smd_povm(self, k, n_max)
    }
}

/// Ideal photon-number-resolving detector, `p(k | n) = δ_{kn}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NumberResolving;

impl TriggerPovm for NumberResolving {
    fn outcome_weights(&self, k: usize, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| if n == k { 1.0 } else { 0.0 }).collect()
    }
}

/// Signal state prepared by a herald, before any signal-arm loss.
#[derive(Debug, Clone)]
pub struct HeraldedState {
    pub state: DensityMatrix,
    /// Unconditional probability per pulse of the herald outcome.
    pub probability: f64,
}

/// Herald on outcome `k` of an arbitrary photon-number-diagonal trigger POVM.
pub fn herald_with<P: TriggerPovm>(src: &TmsvSource, povm: &P, k: usize) -> Result<HeraldedState> {
    src.validate()?;
    let pairs = joint_pair_distribution(src);
    let weights = povm.outcome_weights(k, src.n_max);
    let joint: Vec<f64> = pairs.iter().zip(weights.iter()).map(|(p, w)| p * w).collect();
    let probability: f64 = joint.iter().sum();
    if !(probability >= 1e-300) {
        return Err(Error::DegenerateHerald(probability));
    }
    Ok(HeraldedState {
        state: DensityMatrix::diagonal(&joint)?,
        probability,
    })
}

/// Signal state conditioned on exactly `herald.clicks` detector clicks.
pub fn heralded_state(src: &TmsvSource, det: &ClickDetector, herald: &HeraldSpec) -> Result<HeraldedState> {
    det.validate()?;
    herald.validate_for(det)?;
    herald_with(src, det, herald.clicks)
}

/// Expected herald events per second.
pub fn herald_rate(src: &TmsvSource, det: &ClickDetector, herald: &HeraldSpec, rep_rate: f64) -> Result<f64> {
    if !(rep_rate > 0.0) || !rep_rate.is_finite() {
        return Err(Error::Parameter(format!("rep_rate = {rep_rate} must be positive")));
    }
    src.validate()?;
    det.validate()?;
    herald.validate_for(det)?;
    let pairs = joint_pair_distribution(src);
    let weights = smd_povm(det, herald.clicks, src.n_max);
    let p: f64 = pairs.iter().zip(weights.iter()).map(|(a, b)| a * b).sum();
    Ok(p * rep_rate)
}
