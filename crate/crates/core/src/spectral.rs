//! Spectral mode analysis and the homodyne efficiency budget.
//!
//! All spectral phases are taken to be flat: amplitudes are the square roots
//! of measured intensities.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::numerics::{is_strictly_increasing, trapezoid, trapezoid_weights};

/// A sampled spectral amplitude `A(λ)`; the intensity is `A²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitude {
    wavelengths: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl SpectralAmplitude {
    pub fn new(wavelengths: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != amplitudes.len() || wavelengths.len() < 2 {
            return Err(Error::Parameter(format!(
                "spectrum needs matching grids of length >= 2 (got {} and {})",
                wavelengths.len(),
                amplitudes.len()
            )));
        }
        if !is_strictly_increasing(&wavelengths) {
            return Err(Error::Parameter("wavelength grid must be strictly increasing".into()));
        }
        if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Parameter("amplitudes must be finite and non-negative".into()));
        }
        Ok(Self {
            wavelengths,
            amplitudes,
        })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Linear interpolation; zero outside the sampled support.
    pub fn amplitude_at(&self, w: f64) -> f64 {
        let xs = &self.wavelengths;
        if w < xs[0] || w > xs[xs.len() - 1] {
            return 0.0;
        }
        let i = xs.partition_point(|x| *x <= w).clamp(1, xs.len() - 1);
        let t = (w - xs[i - 1]) / (xs[i] - xs[i - 1]);
        self.amplitudes[i - 1] * (1.0 - t) + self.amplitudes[i] * t
    }

    fn energy(&self) -> f64 {
        let i: Vec<f64> = self.amplitudes.iter().map(|a| a * a).collect();
        trapezoid(&self.wavelengths, &i)
    }

    /// Read a two-column CSV with header `wavelength_nm,amplitude`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty spectrum file".into()))?;
        if header.trim().replace(' ', "") != "wavelength_nm,amplitude" {
            return Err(Error::Parse(format!("unexpected spectrum header '{header}'")));
        }
        let (mut w, mut a) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let row = parse_row(line, i + 2)?;
            if row.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected 2 columns", i + 2)));
            }
            w.push(row[0]);
            a.push(row[1]);
        }
        Self::new(w, a)
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {lineno}: '{}': {e}", c.trim())))
        })
        .collect()
}

/// Joint spectral intensity on a (signal × trigger) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectrum {
    signal_axis: Vec<f64>,
    trigger_axis: Vec<f64>,
    intensity: DMatrix<f64>,
}

impl JointSpectrum {
    /// `intensity[(i, j)]` is the count at `(signal_axis[i], trigger_axis[j])`.
    pub fn new(signal_axis: Vec<f64>, trigger_axis: Vec<f64>, intensity: DMatrix<f64>) -> Result<Self> {
        if signal_axis.len() < 2 || trigger_axis.len() < 2 {
            return Err(Error::Parameter("joint spectrum must be at least 2x2".into()));
        }
        if intensity.nrows() != signal_axis.len() || intensity.ncols() != trigger_axis.len() {
            return Err(Error::Dimension(format!(
                "intensity is {}x{} but axes are {} and {}",
                intensity.nrows(),
                intensity.ncols(),
                signal_axis.len(),
                trigger_axis.len()
            )));
        }
        if !is_strictly_increasing(&signal_axis) || !is_strictly_increasing(&trigger_axis) {
            return Err(Error::Parameter("spectral axes must be strictly increasing".into()));
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter("intensities must be finite and non-negative".into()));
        }
        Ok(Self {
            signal_axis,
            trigger_axis,
            intensity,
        })
    }

    pub fn signal_axis(&self) -> &[f64] {
        &self.signal_axis
    }

    pub fn trigger_axis(&self) -> &[f64] {
        &self.trigger_axis
    }

    pub fn intensity(&self) -> &DMatrix<f64> {
        &self.intensity
    }

    pub fn transposed(&self) -> Self {
        Self {
            signal_axis: self.trigger_axis.clone(),
            trigger_axis: self.signal_axis.clone(),
            intensity: self.intensity.transpose(),
        }
    }

    /// CSV layout: the first row is a label cell followed by the trigger
    /// axis; every following row is a signal wavelength followed by the
    /// intensities along the trigger axis.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty JSI file".into()))?;
        let trigger_axis = header
            .split(',')
            .skip(1)
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("JSI header: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut signal_axis = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = parse_row(line, i + 2)?;
            if row.len() != trigger_axis.len() + 1 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, got {}",
                    i + 2,
                    trigger_axis.len() + 1,
                    row.len()
                )));
            }
            signal_axis.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        let m = DMatrix::from_row_slice(signal_axis.len(), trigger_axis.len(), &values);
        Self::new(signal_axis, trigger_axis, m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("signal\\trigger");
        for t in &self.trigger_axis {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (i, s) in self.signal_axis.iter().enumerate() {
            out.push_str(&s.to_string());
            for j in 0..self.trigger_axis.len() {
                out.push_str(&format!(",{}", self.intensity[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Result of a Schmidt decomposition of a joint spectral amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtAnalysis {
    /// Heralded-state purity `P = Σ μ_i²`.
    pub purity: f64,
    /// Schmidt number `K = 1 / P`.
    pub schmidt_number: f64,
    /// Schmidt coefficients `μ_i`, descending, summing to one.
    pub coefficients: Vec<f64>,
}

/// Schmidt analysis of a joint spectral intensity under a flat-phase assumption.
///
/// The amplitude `√I` is weighted by the trapezoid weights of each axis so
/// that the singular values approximate those of the continuous kernel on
/// arbitrary (non-uniform, non-square) instrument grids.
pub fn schmidt_purity(jsi: &JointSpectrum) -> Result<SchmidtAnalysis> {
    let ws = trapezoid_weights(&jsi.signal_axis);
    let wt = trapezoid_weights(&jsi.trigger_axis);
    let a = DMatrix::from_fn(jsi.intensity.nrows(), jsi.intensity.ncols(), |i, j| {
        jsi.intensity[(i, j)].sqrt() * (ws[i] * wt[j]).sqrt()
    });
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::Parameter("joint spectrum is identically zero".into()));
    }
    let svd = a.svd(false, false);
    let mut s2: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    s2.sort_by(|x, y| y.total_cmp(x));
    let total: f64 = s2.iter().sum();
    let coefficients: Vec<f64> = s2.iter().map(|v| v / total).collect();
    let purity: f64 = coefficients.iter().map(|m| m * m).sum();
    Ok(SchmidtAnalysis {
        purity,
        schmidt_number: 1.0 / purity,
        coefficients,
    })
}

/// Mode overlap `[∫ A_a A_b]² / (∫ A_a² ∫ A_b²)` of two flat-phase spectra.
///
/// The cross term is integrated on the union of both grids restricted to
/// their common support, with each spectrum linearly interpolated.
pub fn spectral_overlap(a: &SpectralAmplitude, b: &SpectralAmplitude) -> f64 {
    let lo = a.wavelengths[0].max(b.wavelengths[0]);
    let hi = a.wavelengths[a.wavelengths.len() - 1].min(b.wavelengths[b.wavelengths.len() - 1]);
    if !(hi > lo) {
        return 0.0;
    }
    let mut grid: Vec<f64> = a
        .wavelengths
        .iter()
        .chain(b.wavelengths.iter())
        .copied()
        .filter(|w| *w >= lo && *w <= hi)
        .collect();
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let cross: Vec<f64> = grid.iter().map(|w| a.amplitude_at(*w) * b.amplitude_at(*w)).collect();
    let c = trapezoid(&grid, &cross);
    let (ea, eb) = (a.energy(), b.energy());
    if ea <= 0.0 || eb <= 0.0 {
        return 0.0;
    }
    (c * c / (ea * eb)).clamp(0.0, 1.0)
}

/// Heralding efficiency `η_he = R_c / (η_apd R_trigger)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldingEfficiency {
    pub value: f64,
    /// Set when the rates imply `η_he > 1`, i.e. inconsistent inputs.
    pub inconsistent: bool,
}

pub fn heralding_efficiency(r_coinc: f64, r_trigger: f64, eta_apd: f64) -> Result<HeraldingEfficiency> {
    if !(r_coinc >= 0.0) || !(r_trigger > 0.0) {
        return Err(Error::Parameter(format!(
            "rates must satisfy r_coinc >= 0 and r_trigger > 0 (got {r_coinc}, {r_trigger})"
        )));
    }
    if !(eta_apd > 0.0 && eta_apd <= 1.0) {
        return Err(Error::Parameter(format!("eta_apd = {eta_apd} must be in (0, 1]")));
    }
    let value = r_coinc / (eta_apd * r_trigger);
    let inconsistent = value > 1.0;
    if inconsistent {
        log::warn!("heralding efficiency {value:.4} exceeds one; check rates and APD efficiency");
    }
    Ok(HeraldingEfficiency { value, inconsistent })
}

/// Purity contribution to the homodyne efficiency, `η_p = √P`.
pub fn purity_efficiency(purity: f64) -> Result<f64> {
    check_unit_interval("purity", purity)?;
    Ok(purity.sqrt())
}

/// Mode-matching efficiency from classical visibility, `η_mm = V²`.
pub fn mode_match_from_visibility(visibility: f64) -> Result<f64> {
    check_unit_interval("visibility", visibility)?;
    Ok(visibility * visibility)
}

/// Mode-matching efficiency as the product of spatial (heralding) and
/// spectral overlap.
pub fn mode_match_from_overlaps(heralding: f64, spectral: f64) -> Result<f64> {
    check_unit_interval("heralding efficiency", heralding)?;
    check_unit_interval("spectral overlap", spectral)?;
    Ok(heralding * spectral)
}

/// The four factors limiting the overall homodyne efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyBudget {
    /// Balanced homodyne detector efficiency.
    pub eta_bhd: f64,
    /// Mode matching between local oscillator and signal.
    pub eta_mm: f64,
    /// Spectral purity of the heralded state.
    pub eta_p: f64,
    /// False heralds from dark counts.
    pub eta_dc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<f64>,
}

impl EfficiencyBudget {
    pub fn new(eta_bhd: f64, eta_mm: f64, eta_p: f64, eta_dc: f64) -> Result<Self> {
        let b = Self {
            eta_bhd,
            eta_mm,
            eta_p,
            eta_dc,
            visibility: None,
        };
        b.validate()?;
        Ok(b)
    }

    /// Budget whose mode-matching factor is set from a visibility.
    pub fn with_visibility(eta_bhd: f64, visibility: f64, eta_p: f64, eta_dc: f64) -> Result<Self> {
        let b = Self {
            eta_bhd,
            eta_mm: mode_match_from_visibility(visibility)?,
            eta_p,
            eta_dc,
            visibility: Some(visibility),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("eta_bhd", self.eta_bhd)?;
        check_unit_interval("eta_mm", self.eta_mm)?;
        check_unit_interval("eta_p", self.eta_p)?;
        check_unit_interval("eta_dc", self.eta_dc)?;
        if let Some(v) = self.visibility {
            check_unit_interval("visibility", v)?;
            if (self.eta_mm - v * v).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "eta_mm = {} inconsistent with visibility {v} (V² = {})",
                    self.eta_mm,
                    v * v
                )));
            }
        }
        Ok(())
    }

    /// Signal transmission before the homodyne detector, `η_mm η_p η_dc`.
    pub fn pre_detector(&self) -> f64 {
        self.eta_mm * self.eta_p * self.eta_dc
    }
}

/// Overall estimated efficiency `η_est = η_bhd η_mm η_p η_dc`.
pub fn efficiency_budget_total(b: &EfficiencyBudget) -> f64 {
    b.eta_bhd * b.eta_mm * b.eta_p * b.eta_dc
}

/// Synthetic joint spectral intensity from a Gaussian pump envelope and a
/// Gaussian phase-matching function, in detunings from `centers`.
///
/// Amplitude: `exp(−(δs+δt)²/(2σ_p²)) · exp(−(cos φ δs + sin φ δt)²/(2σ_pm²))`.
pub fn synthetic_jsi(
    signal_axis: Vec<f64>,
    trigger_axis: Vec<f64>,
    centers: (f64, f64),
    pump_sigma: f64,
    pm_sigma: f64,
    pm_angle: f64,
) -> Result<JointSpectrum> {
    if !(pump_sigma > 0.0 && pm_sigma > 0.0) {
        return Err(Error::Parameter("bandwidths must be positive".into()));
    }
    let (c, s) = (pm_angle.cos(), pm_angle.sin());
    let m = DMatrix::from_fn(signal_axis.len(), trigger_axis.len(), |i, j| {
        let ds = signal_axis[i] - centers.0;
        let dt = trigger_axis[j] - centers.1;
        let pump = -(ds + dt).powi(2) / (2.0 * pump_sigma * pump_sigma);
        let pm = -(c * ds + s * dt).powi(2) / (2.0 * pm_sigma * pm_sigma);
        (2.0 * (pump + pm)).exp()
    });
    JointSpectrum::new(signal_axis, trigger_axis, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linspace;

    fn gaussian_spectrum(grid: &[f64], center: f64, intensity_fwhm: f64) -> SpectralAmplitude {
        let sigma_i = intensity_fwhm / (8.0 * 2f64.ln()).sqrt();
        let amp = grid
            .iter()
            .map(|w| (-(w - center).powi(2) / (4.0 * sigma_i * sigma_i)).exp())
            .collect();
        SpectralAmplitude::new(grid.to_vec(), amp).unwrap()
    }

    #[test]
    fn separable_grid_is_pure() {
        let s = linspace(800.0, 860.0, 40);
        let t = linspace(820.0, 840.0, 25);
        let f = |x: f64| (-(x - 830.0).powi(2) / 50.0).exp();
        let g = |y: f64| 1.0 + (y - 830.0).abs();
        let m = DMatrix::from_fn(40, 25, |i, j| (f(s[i]) * g(t[j])).powi(2));
        let a = schmidt_purity(&JointSpectrum::new(s, t, m).unwrap()).unwrap();
        assert!((a.purity - 1.0).abs() < 1e-10);
        assert!((a.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_orthogonal_modes_give_half() {
        let axis = linspace(0.0, 3.0, 4);
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        m[(3, 3)] = 1.0;
        let a = schmidt_purity(&JointSpectrum::new(axis.clone(), axis, m).unwrap()).unwrap();
        assert!((a.purity - 0.5).abs() < 1e-12);
        assert!((a.schmidt_number - 2.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_gaussian_matches_closed_form() {
        // Amplitude exp(−u²/(2a²) − v²/(2b²)) along the diagonals has purity 2ab/(a²+b²).
        let (a, b) = (1.0f64, 3.0f64);
        let axis = linspace(-15.0, 15.0, 64);
        let m = DMatrix::from_fn(64, 64, |i, j| {
            let u = (axis[i] + axis[j]) / 2f64.sqrt();
            let v = (axis[i] - axis[j]) / 2f64.sqrt();
            (-u * u / (a * a) - v * v / (b * b)).exp()
        });
        let jsi = JointSpectrum::new(axis.clone(), axis, m).unwrap();
        let got = schmidt_purity(&jsi).unwrap();
        let oracle = 2.0 * a * b / (a * a + b * b);
        assert!((got.purity - oracle).abs() / oracle < 0.01);
        let t = schmidt_purity(&jsi.transposed()).unwrap();
        assert!((t.purity - got.purity).abs() < 1e-12);
        assert!(got.coefficients.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_grid_is_an_error() {
        let axis = linspace(0.0, 1.0, 3);
        let jsi = JointSpectrum::new(axis.clone(), axis, DMatrix::zeros(3, 3)).unwrap();
        assert!(schmidt_purity(&jsi).is_err());
    }

    #[test]
    fn overlap_examples() {
        let grid = linspace(800.0, 860.0, 3001);
        let a = gaussian_spectrum(&grid, 830.0, 3.0);
        assert!((spectral_overlap(&a, &a) - 1.0).abs() < 1e-12);
        let b = gaussian_spectrum(&grid, 830.0, 6.0);
        // Closed form for equal-centre Gaussians with width ratio r: 2r / (1 + r²).
        let r = 2.0f64;
        assert!((spectral_overlap(&a, &b) - 2.0 * r / (1.0 + r * r)).abs() < 1e-6);
        assert!((spectral_overlap(&a, &b) - spectral_overlap(&b, &a)).abs() < 1e-15);
        let far = SpectralAmplitude::new(vec![900.0, 901.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(spectral_overlap(&a, &far), 0.0);
    }

    #[test]
    fn overlap_on_different_grids() {
        let a = gaussian_spectrum(&linspace(815.0, 845.0, 4001), 830.0, 3.0);
        let b = gaussian_spectrum(&linspace(812.0, 848.0, 3333), 830.5, 3.0);
        // Equal widths, offset δ: exp(−δ²/(4σ_a²)) with σ_a² = 2σ_I².
        let sigma_i2 = (3.0 / (8.0 * 2f64.ln()).sqrt()).powi(2);
        let oracle = (-0.25 / (4.0 * sigma_i2)).exp();
        assert!((spectral_overlap(&a, &b) - oracle).abs() < 1e-5);
    }

    #[test]
    fn heralding_efficiency_examples() {
        let h = heralding_efficiency(52650.0, 180000.0, 0.45).unwrap();
        assert!((h.value - 0.65).abs() < 1e-12 && !h.inconsistent);
        assert_eq!(heralding_efficiency(0.0, 10.0, 0.3).unwrap().value, 0.0);
        assert_eq!(heralding_efficiency(7.0, 7.0, 1.0).unwrap().value, 1.0);
        assert!(heralding_efficiency(9.0, 7.0, 1.0).unwrap().inconsistent);
        assert!(heralding_efficiency(1.0, 0.0, 0.5).is_err());
        assert!(heralding_efficiency(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn budget_examples() {
        let b = EfficiencyBudget::new(0.85, 0.66, 0.97, 1.0).unwrap();
        let total = efficiency_budget_total(&b);
        assert!((total - 0.544170).abs() < 1e-6);
        assert_eq!(format!("{total:.2}"), "0.54");
        assert_eq!(
            efficiency_budget_total(&EfficiencyBudget::new(1.0, 1.0, 1.0, 1.0).unwrap()),
            1.0
        );
        assert_eq!(
            efficiency_budget_total(&EfficiencyBudget::new(0.9, 0.0, 0.9, 1.0).unwrap()),
            0.0
        );
        assert!(EfficiencyBudget::new(1.1, 0.5, 0.5, 0.5).is_err());
        let v = EfficiencyBudget::with_visibility(0.85, 0.8, 1.0, 1.0).unwrap();
        assert!((v.eta_mm - 0.64).abs() < 1e-15);
        let bad = EfficiencyBudget {
            visibility: Some(0.5),
            ..b
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn purity_efficiency_examples() {
        assert!((purity_efficiency(0.95).unwrap() - 0.9747).abs() < 5e-5);
        assert_eq!(purity_efficiency(1.0).unwrap(), 1.0);
        assert_eq!(purity_efficiency(0.25).unwrap(), 0.5);
        assert!(purity_efficiency(1.5).is_err());
    }

    #[test]
    fn csv_parsing() {
        let s = SpectralAmplitude::parse_csv("wavelength_nm,amplitude\n828,0.1\n830,1.0\n832,0.2\n").unwrap();
        assert_eq!(s.wavelengths(), &[828.0, 830.0, 832.0]);
        assert!(SpectralAmplitude::parse_csv("nm,amp\n1,2\n3,4\n").is_err());
        let jsi = JointSpectrum::parse_csv("s\\t,1,2,3\n10,1,2,3\n11,4,5,6\n").unwrap();
        assert_eq!(jsi.intensity()[(1, 2)], 6.0);
        let back = JointSpectrum::parse_csv(&jsi.to_csv()).unwrap();
        assert_eq!(back, jsi);
        assert!(JointSpectrum::parse_csv("x,1,2\n10,1\n").is_err());
    }

    #[test]
    fn synthetic_jsi_purity_tracks_correlation() {
        let axis = linspace(-6.0, 6.0, 80);
        // Phase matching along the anti-diagonal with widths balanced against the pump is separable.
        let phi = -std::f64::consts::FRAC_PI_4;
        let sep = synthetic_jsi(axis.clone(), axis.clone(), (0.0, 0.0), 1.0, 0.5f64.sqrt(), phi).unwrap();
        assert!(schmidt_purity(&sep).unwrap().purity > 0.999);
        let corr = synthetic_jsi(axis.clone(), axis, (0.0, 0.0), 0.5, 2.0, phi).unwrap();
        assert!(schmidt_purity(&corr).unwrap().purity < 0.9);
    }
}
