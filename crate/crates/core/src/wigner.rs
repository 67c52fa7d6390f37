//! Wigner functions of truncated Fock-basis states.
//!
//! Kernels of `|m⟩⟨n|` (m ≥ n), normalised so that `∫∫ W = 1` and
//! `W_vac(0,0) = 1/π`:
//!
//! `W_mn(x,p) = (−1)ⁿ/π · √(n!/m!) · [√2 (x − ip)]^(m−n) · e^(−r²) · L_n^(m−n)(2r²)`,
//! with `r² = x² + p²` and `W_nm = conj(W_mn)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, C64};
use crate::numerics::{is_strictly_increasing, linspace, trapezoid_weights};

/// Default half-width of the phase-space grid.
pub const DEFAULT_EXTENT: f64 = 6.0;
/// Default number of points per axis.
pub const DEFAULT_POINTS: usize = 121;

/// Generalised Laguerre polynomials `L_k^(α)(t)` for `k = 0 … k_max`.
fn laguerre(k_max: usize, alpha: f64, t: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(k_max + 1);
    l.push(1.0);
    if k_max >= 1 {
        l.push(1.0 + alpha - t);
    }
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - t) * l[k] - (kf + alpha) * l[k - 1]) / (kf + 1.0);
        l.push(next);
    }
    l
}

/// W(x, p) of `rho`.
pub fn wigner_point(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let d = rho.dim();
    let r2 = x * x + p * p;
    let t = 2.0 * r2;
    let gauss = (-r2).exp() / PI;
    let z = C64::new(x, -p) * 2f64.sqrt();
    let mut acc = 0.0;
    for delta in 0..d {
        let lag = laguerre(d - 1 - delta, delta as f64, t);
        let zpow = z.powu(delta as u32);
        // ratio = √(n!/(n+δ)!)
        let mut ratio = 1.0;
        for j in 1..=delta {
            ratio /= (j as f64).sqrt();
        }
        for n in 0..d - delta {
            if n > 0 {
                ratio *= (n as f64 / (n + delta) as f64).sqrt();
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let m = n + delta;
            let kernel = zpow * (sign * ratio * gauss * lag[n]);
            let term = rho.get(m, n) * kernel;
            acc += if delta == 0 { term.re } else { 2.0 * term.re };
        }
    }
    acc
}

/// Which axis a cross-section is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossSection {
    /// W(x, 0) as a function of x.
    #[serde(rename = "p0")]
    P0,
    /// W(0, p) as a function of p.
    #[serde(rename = "x0")]
    X0,
}

/// Wigner function sampled on a rectangular grid, `values[i][j] = W(x_i, p_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl PhaseSpaceGrid {
    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        let wx = trapezoid_weights(&self.x_axis);
        let wp = trapezoid_weights(&self.p_axis);
        self.values
            .iter()
            .zip(&wx)
            .map(|(row, a)| a * row.iter().zip(&wp).map(|(v, b)| v * b).sum::<f64>())
            .sum()
    }

    /// ∫ W dp for every x on the grid.
    pub fn x_marginal(&self) -> Vec<f64> {
        let wp = trapezoid_weights(&self.p_axis);
        self.values
            .iter()
            .map(|row| row.iter().zip(&wp).map(|(v, b)| v * b).sum())
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with the p axis in the header line and x in the first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x\\p");
        for p in &self.p_axis {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for (x, row) in self.x_axis.iter().zip(&self.values) {
            out.push_str(&x.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Default ±6, 121 × 121 grid axis.
pub fn default_axis() -> Vec<f64> {
    linspace(-DEFAULT_EXTENT, DEFAULT_EXTENT, DEFAULT_POINTS)
}

pub fn wigner_grid(rho: &DensityMatrix, x_axis: &[f64], p_axis: &[f64]) -> Result<PhaseSpaceGrid> {
    if !is_strictly_increasing(x_axis) || !is_strictly_increasing(p_axis) {
        return Err(Error::Parameter("phase-space axes must be strictly increasing".into()));
    }
    let values = x_axis
        .par_iter()
        .map(|x| p_axis.iter().map(|p| wigner_point(rho, *x, *p)).collect())
        .collect();
    Ok(PhaseSpaceGrid {
        x_axis: x_axis.to_vec(),
        p_axis: p_axis.to_vec(),
        values,
    })
}

pub fn wigner_cross_section(rho: &DensityMatrix, axis: CrossSection, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|v| match axis {
            CrossSection::P0 => wigner_point(rho, *v, 0.0),
            CrossSection::X0 => wigner_point(rho, 0.0, *v),
        })
        .collect()
}

/// Two-column CSV for a cross-section.
pub fn cross_section_csv(axis: CrossSection, grid: &[f64], values: &[f64]) -> String {
    let label = match axis {
        CrossSection::P0 => "x",
        CrossSection::X0 => "p",
    };
    let mut out = format!("{label},w\n");
    for (g, v) in grid.iter().zip(values) {
        out.push_str(&format!("{g},{v}\n"));
    }
    out
}
