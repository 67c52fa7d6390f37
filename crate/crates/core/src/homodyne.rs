//! Balanced homodyne detection: quadrature densities, seeded sampling of
//! homodyne records, detector noise and digitizer model, marginal histograms.
//!
//! Quadratures use the vacuum-variance-1/2 convention,
//! `ψ_0(x) = π^(−1/4) exp(−x²/2)`, and `x_θ = x cos θ + p sin θ`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{apply_loss, fock_state, DensityMatrix, C64};
use crate::numerics::{gauss_legendre_nodes, is_strictly_increasing};

/// Pulses generated per independent random stream.
pub const SAMPLES_PER_STREAM: usize = 4096;

/// Spacing of the inverse-CDF tabulation grid.
const CDF_STEP: f64 = 1e-3;

/// Largest tail mass allowed outside the tabulation range.
const MAX_TAIL_MASS: f64 = 1e-6;

/// Normalised oscillator eigenfunctions `ψ_0(x) … ψ_{n_max}(x)` by the stable
/// upward recurrence
/// `ψ_{n+1} = √(2/(n+1)) x ψ_n − √(n/(n+1)) ψ_{n−1}`.
pub fn eigenfunctions(n_max: usize, x: f64) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n_max + 1);
    psi.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if n_max >= 1 {
        psi.push(2f64.sqrt() * x * psi[0]);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
        psi.push(next);
    }
    psi
}

/// `ψ_n(x) = H_n(x) e^(−x²/2) / √(2ⁿ n! √π)`.
pub fn eigenfunction(n: usize, x: f64) -> f64 {
    eigenfunctions(n, x)[n]
}

/// Quadrature density `pr(x | θ) = Σ_{mn} ρ_mn e^{i(n−m)θ} ψ_m(x) ψ_n(x)`.
pub fn quadrature_pdf(rho: &DensityMatrix, theta: f64, x: f64) -> f64 {
    let d = rho.dim();
    let psi = eigenfunctions(d - 1, x);
    let mut acc = 0.0;
    for m in 0..d {
        acc += rho.get(m, m).re * psi[m] * psi[m];
        for n in (m + 1)..d {
            let phase = C64::from_polar(1.0, (n - m) as f64 * theta);
            acc += 2.0 * (rho.get(m, n) * phase).re * psi[m] * psi[n];
        }
    }
    acc
}

/// Phase-averaged density `Σ_n ρ_nn ψ_n(x)²`.
pub fn phase_averaged_pdf(rho: &DensityMatrix, x: f64) -> f64 {
    let psi = eigenfunctions(rho.dim() - 1, x);
    (0..rho.dim()).map(|n| rho.get(n, n).re * psi[n] * psi[n]).sum()
}

/// Half-width of the quadrature range used for tabulation and binning.
pub fn tabulation_range(dim: usize) -> f64 {
    6.0 + 2.0 * (dim as f64).sqrt()
}

/// Marginal of `|n⟩` after loss `eta` on the given grid.
pub fn predicted_marginal(n: usize, eta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_unit_interval("eta", eta)?;
    let rho = apply_loss(&fock_state(n, n + 1)?, eta)?;
    Ok(grid.iter().map(|x| phase_averaged_pdf(&rho, *x)).collect())
}

/// Uniform digitizer over `[−full_scale, +full_scale]` with `2^bits` levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Digitizer {
    pub bits: u32,
    pub full_scale: f64,
}

impl Digitizer {
    pub fn new(bits: u32, full_scale: f64) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::Parameter(format!("digitizer bits = {bits} must be in 1..=24")));
        }
        if !(full_scale > 0.0) || !full_scale.is_finite() {
            return Err(Error::Parameter(format!("full_scale = {full_scale} must be positive")));
        }
        Ok(Self { bits, full_scale })
    }

    pub fn levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / self.levels() as f64
    }

    /// Level index; values beyond full scale clip to the end levels.
    pub fn level_index(&self, x: f64) -> usize {
        let i = ((x + self.full_scale) / self.step()).floor();
        i.clamp(0.0, (self.levels() - 1) as f64) as usize
    }

    /// Reported value (cell centre) of a level.
    pub fn level_value(&self, i: usize) -> f64 {
        -self.full_scale + (i as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level_value(self.level_index(x))
    }

    /// Lower boundary of level `i` (`i = levels()` gives the top boundary).
    pub fn boundary(&self, i: usize) -> f64 {
        -self.full_scale + i as f64 * self.step()
    }
}

/// Homodyne detector model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhdModel {
    pub eta_bhd: f64,
    #[serde(default)]
    pub elec_noise_sigma: f64,
    /// Digitizer resolution; 0 disables quantization.
    #[serde(default)]
    pub adc_bits: u32,
    #[serde(default = "default_full_scale")]
    pub full_scale: f64,
}

fn default_full_scale() -> f64 {
    5.0
}

impl Default for BhdModel {
    /// 85 % efficient detector, no electronic noise, 8-bit digitizer over ±5.
    fn default() -> Self {
        Self {
            eta_bhd: 0.85,
            elec_noise_sigma: 0.0,
            adc_bits: 8,
            full_scale: 5.0,
        }
    }
}

impl BhdModel {
    /// Unit efficiency, noiseless, unquantized.
    pub fn ideal() -> Self {
        Self {
            eta_bhd: 1.0,
            elec_noise_sigma: 0.0,
            adc_bits: 0,
            full_scale: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("eta_bhd", self.eta_bhd)?;
        if !(self.elec_noise_sigma >= 0.0) || !self.elec_noise_sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "elec_noise_sigma = {} must be finite and >= 0",
                self.elec_noise_sigma
            )));
        }
        self.digitizer().map(|_| ())
    }

    pub fn digitizer(&self) -> Result<Option<Digitizer>> {
        if self.adc_bits == 0 {
            return Ok(None);
        }
        Digitizer::new(self.adc_bits, self.full_scale).map(Some)
    }
}

/// How the local-oscillator phase is chosen for each pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    Fixed(f64),
    #[default]
    Uniform,
}

/// One homodyne sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    #[serde(rename = "pulse")]
    pub pulse_index: u64,
    pub x: f64,
    pub theta: f64,
    #[serde(rename = "clicks")]
    pub herald_clicks: u32,
}

/// Tabulated inverse-CDF sampler for the quadrature distribution of a state.
///
/// The CDF is stored as Fourier harmonics in θ,
/// `F(x|θ) = G_0(x) + 2 Re Σ_{Δ>0} e^{iΔθ} G_Δ(x)`, so one table serves every
/// LO phase. Phase-diagonal states only carry `G_0`.
pub struct QuadratureSampler {
    grid_lo: f64,
    step: f64,
    base: Vec<f64>,
    harmonics: Vec<(usize, Vec<C64>)>,
}

impl QuadratureSampler {
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let d = rho.dim();
        let range = tabulation_range(d);
        let cells = (2.0 * range / CDF_STEP).ceil() as usize;
        let step = 2.0 * range / cells as f64;
        let active: Vec<usize> = (1..d)
            .filter(|&delta| (0..d - delta).any(|m| rho.get(m, m + delta).norm() > 1e-15))
            .collect();

        let mut base = vec![0.0; cells + 1];
        let mut harmonics: Vec<(usize, Vec<C64>)> = active
            .iter()
            .map(|&delta| (delta, vec![C64::new(0.0, 0.0); cells + 1]))
            .collect();
        let mut acc0 = 0.0;
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); active.len()];
        for c in 0..cells {
            let lo = -range + c as f64 * step;
            for (x, w) in gauss_legendre_nodes(lo, lo + step, step) {
                let psi = eigenfunctions(d - 1, x);
                for n in 0..d {
                    acc0 += w * rho.get(n, n).re * psi[n] * psi[n];
                }
                for (slot, &delta) in active.iter().enumerate() {
                    let mut h = C64::new(0.0, 0.0);
                    for m in 0..d - delta {
                        h += rho.get(m, m + delta) * (psi[m] * psi[m + delta]);
                    }
                    acc[slot] += h * w;
                }
            }
            base[c + 1] = acc0;
            for (slot, (_, table)) in harmonics.iter_mut().enumerate() {
                table[c + 1] = acc[slot];
            }
        }
        let tail = (rho.trace() - acc0).abs();
        if tail > MAX_TAIL_MASS {
            return Err(Error::Range(format!(
                "probability {tail:e} lies outside ±{range:.3}; state support exceeds the tabulation range"
            )));
        }
        Ok(Self {
            grid_lo: -range,
            step,
            base,
            harmonics,
        })
    }

    pub fn range(&self) -> f64 {
        -self.grid_lo
    }

    fn node(&self, i: usize) -> f64 {
        self.grid_lo + i as f64 * self.step
    }

    fn cdf_at_node(&self, i: usize, theta: f64) -> f64 {
        let mut v = self.base[i];
        for (delta, table) in &self.harmonics {
            v += 2.0 * (table[i] * C64::from_polar(1.0, *delta as f64 * theta)).re;
        }
        v
    }

    /// Tabulated CDF at `x`, linear between nodes.
    pub fn cdf(&self, x: f64, theta: f64) -> f64 {
        let last = self.base.len() - 1;
        let t = ((x - self.grid_lo) / self.step).clamp(0.0, last as f64);
        let i = (t.floor() as usize).min(last - 1);
        let f0 = self.cdf_at_node(i, theta);
        let f1 = self.cdf_at_node(i + 1, theta);
        f0 + (t - i as f64) * (f1 - f0)
    }

    /// Quadrature value whose CDF equals `u · F(max)` at phase `theta`.
    pub fn invert(&self, u: f64, theta: f64) -> f64 {
        let last = self.base.len() - 1;
        let target = u * self.cdf_at_node(last, theta);
        // First node with F > target.
        let hi = if self.harmonics.is_empty() {
            self.base.partition_point(|f| *f <= target)
        } else {
            let (mut lo, mut hi) = (0usize, last + 1);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if self.cdf_at_node(mid, theta) <= target {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let hi = hi.clamp(1, last);
        let f0 = self.cdf_at_node(hi - 1, theta);
        let f1 = self.cdf_at_node(hi, theta);
        let frac = if f1 > f0 {
            ((target - f0) / (f1 - f0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.node(hi - 1) + frac * self.step
    }
}

/// Draw `n_samples` homodyne records of `rho` seen through `bhd`.
///
/// The state first passes the detector loss `eta_bhd`; samples are then
/// drawn by inverse CDF, electronic noise is added and the result is
/// digitized. Pulses are split into blocks of [`SAMPLES_PER_STREAM`]; block
/// `b` draws from ChaCha8 seeded with `seed` on stream `b`, so the output
/// does not depend on the number of worker threads.
pub fn sample_quadratures(
    rho: &DensityMatrix,
    n_samples: usize,
    phase_policy: PhasePolicy,
    bhd: &BhdModel,
    seed: u64,
) -> Result<Vec<QuadratureRecord>> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    bhd.validate()?;
    let digitizer = bhd.digitizer()?;
    let detected = apply_loss(rho, bhd.eta_bhd)?;
    let sampler = QuadratureSampler::new(&detected)?;
    let noise = if bhd.elec_noise_sigma > 0.0 {
        Some(Normal::new(0.0, bhd.elec_noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };

    let blocks = n_samples.div_ceil(SAMPLES_PER_STREAM);
    let records: Vec<Vec<QuadratureRecord>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let start = b * SAMPLES_PER_STREAM;
            let end = (start + SAMPLES_PER_STREAM).min(n_samples);
            (start..end)
                .map(|pulse| {
                    let theta = match phase_policy {
                        PhasePolicy::Fixed(t) => t.rem_euclid(2.0 * PI),
                        PhasePolicy::Uniform => rng.random::<f64>() * 2.0 * PI,
                    };
                    let u: f64 = rng.random();
                    let mut x = sampler.invert(u, theta);
                    if let Some(n) = &noise {
                        x += n.sample(&mut rng);
                    }
                    if let Some(dg) = &digitizer {
                        x = dg.quantize(x);
                    }
                    QuadratureRecord {
                        pulse_index: pulse as u64,
                        x,
                        theta,
                        herald_clicks: 0,
                    }
                })
                .collect()
        })
        .collect();
    Ok(records.into_iter().flatten().collect())
}

/// Counts of quadrature values per bin with `√N` error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub errors: Vec<f64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Normalised density per bin (counts / (N · width)), N including overflow.
    pub fn density(&self) -> Vec<f64> {
        let n = (self.total() + self.underflow + self.overflow) as f64;
        self.counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(c, e)| *c as f64 / (n * (e[1] - e[0])))
            .collect()
    }

    /// CSV `bin_lo,bin_hi,count,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,error\n");
        for (i, e) in self.bin_edges.windows(2).enumerate() {
            out.push_str(&format!("{},{},{},{}\n", e[0], e[1], self.counts[i], self.errors[i]));
        }
        out
    }
}

/// Histogram of record quadratures. Bins are `[lo, hi)` except the last,
/// which includes its upper edge.
pub fn marginal_histogram(records: &[QuadratureRecord], bin_edges: &[f64]) -> Result<Histogram> {
    if records.is_empty() {
        return Err(Error::Parameter("no records to histogram".into()));
    }
    if bin_edges.len() < 2 || !is_strictly_increasing(bin_edges) {
        return Err(Error::Parameter(
            "bin edges must be strictly increasing with at least two edges".into(),
        ));
    }
    let nb = bin_edges.len() - 1;
    let (lo, hi) = (bin_edges[0], bin_edges[nb]);
    let mut counts = vec![0u64; nb];
    let (mut underflow, mut overflow) = (0u64, 0u64);
    for r in records {
        if r.x < lo {
            underflow += 1;
        } else if r.x > hi {
            overflow += 1;
        } else {
            let i = bin_edges.partition_point(|e| *e <= r.x).saturating_sub(1).min(nb - 1);
            counts[i] += 1;
        }
    }
    let errors = counts.iter().map(|c| (*c as f64).sqrt()).collect();
    Ok(Histogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        errors,
        underflow,
        overflow,
    })
}

/// Phase-averaged probability of each bin.
pub fn bin_probabilities(rho: &DensityMatrix, bin_edges: &[f64]) -> Vec<f64> {
    bin_edges
        .windows(2)
        .map(|e| {
            gauss_legendre_nodes(e[0], e[1], 0.05)
                .into_iter()
                .map(|(x, w)| w * phase_averaged_pdf(rho, x))
                .sum()
        })
        .collect()
}

/// Pearson χ² goodness-of-fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² test of a histogram against model bin probabilities.
///
/// Bins with expected count below `min_expected` are pooled together with
/// the under/overflow into a single remainder category.
pub fn chi_square_gof(hist: &Histogram, probs: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    if probs.len() != hist.counts.len() {
        return Err(Error::Dimension(format!(
            "{} model probabilities for {} bins",
            probs.len(),
            hist.counts.len()
        )));
    }
    let n = (hist.total() + hist.underflow + hist.overflow) as f64;
    let mut stat = 0.0;
    let mut categories = 0usize;
    let (mut rest_obs, mut rest_exp) = ((hist.underflow + hist.overflow) as f64, n);
    for (c, p) in hist.counts.iter().zip(probs) {
        let e = n * p;
        if e >= min_expected {
            stat += (*c as f64 - e).powi(2) / e;
            categories += 1;
            rest_exp -= e;
        } else {
            rest_obs += *c as f64;
        }
    }
    if rest_exp >= min_expected {
        stat += (rest_obs - rest_exp).powi(2) / rest_exp;
        categories += 1;
    }
    if categories < 2 {
        return Err(Error::Parameter("fewer than two usable χ² categories".into()));
    }
    let dof = categories - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}
