//! Truncated Fock-space state algebra.
//!
//! A [`DensityMatrix`] lives in the span of `|0⟩ … |dim−1⟩`. Constructors
//! validate Hermiticity, unit trace and positivity; eigenvalues in
//! `[−1e-10, 0)` are treated as rounding and clamped, anything more negative
//! is rejected.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::numerics::{binomial, binomial_pmf};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// Eigenvalues below this are dropped when taking matrix square roots.
const SQRT_CUTOFF: f64 = 1e-14;

/// Density operator on a truncated Fock space.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMatrix")
            .field("dim", &self.dim())
            .field("diagonal", &self.photon_statistics().probs)
            .finish()
    }
}

impl DensityMatrix {
    /// Validate and wrap a matrix. Hermiticity is checked to [`HERMITIAN_TOL`]
    /// (relative to the largest entry) and the result is symmetrised; the
    /// trace must already be one to [`TRACE_TOL`].
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        let dim = m.nrows();
        if dim == 0 || m.ncols() != dim {
            return Err(Error::Dimension(format!(
                "density matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let asym = hermitian_defect(&m);
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::InvalidState(format!("not Hermitian (defect {asym:e})")));
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        Self::repaired(hermitize(&m))
    }

    /// Hermitise, check positivity, clamp rounding-level negative eigenvalues
    /// and renormalise. Used after numerical operations.
    pub fn repaired(m: CMatrix) -> Result<Self> {
        let m = hermitize(&m);
        let eig = m.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        let entries = if min < 0.0 {
            let vals = eig.eigenvalues.map(|v| C64::new(v.max(0.0), 0.0));
            let v = &eig.eigenvectors;
            hermitize(&(v * CMatrix::from_diagonal(&vals) * v.adjoint()))
        } else {
            m
        };
        let tr = entries.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr} is not positive")));
        }
        Ok(Self {
            entries: entries / C64::new(tr, 0.0),
        })
    }

    /// Diagonal state with the given photon-number probabilities. The
    /// probabilities are normalised; negative entries are rejected.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Dimension("empty diagonal".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidState(
                "diagonal entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidState("diagonal sums to zero".into()));
        }
        let d = nalgebra::DVector::from_iterator(probs.len(), probs.iter().map(|p| C64::new(p / total, 0.0)));
        Ok(Self {
            entries: CMatrix::from_diagonal(&d),
        })
    }

    /// Pure state `|ψ⟩⟨ψ|` from (unnormalised) amplitudes.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if amplitudes.is_empty() || !(norm2 > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a / norm2.sqrt()));
        Ok(Self {
            entries: &v * v.adjoint(),
        })
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        fock_state(0, dim)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dim must be positive".into()));
        }
        Ok(Self {
            entries: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.entries[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// True when every off-diagonal entry is below `tol` in magnitude.
    pub fn is_phase_diagonal(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|m| (0..d).all(|n| m == n || self.entries[(m, n)].norm() <= tol))
    }

    pub fn photon_statistics(&self) -> PhotonDistribution {
        PhotonDistribution {
            probs: (0..self.dim()).map(|n| self.entries[(n, n)].re).collect(),
        }
    }

    /// Change the truncation. Growing pads with zeros; shrinking is only
    /// allowed when the discarded population is below `1e-12`, after which
    /// the state is renormalised.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dim must be positive".into()));
        }
        let old = self.dim();
        if dim >= old {
            let mut m = CMatrix::zeros(dim, dim);
            m.view_mut((0, 0), (old, old)).copy_from(&self.entries);
            return Ok(Self { entries: m });
        }
        let dropped: f64 = (dim..old).map(|n| self.entries[(n, n)].re).sum();
        if dropped > 1e-12 {
            return Err(Error::Dimension(format!(
                "truncating to dim {dim} would discard population {dropped:e}"
            )));
        }
        Self::repaired(self.entries.view((0, 0), (dim, dim)).into_owned())
    }

    /// Positive square root via the Hermitian eigendecomposition.
    pub fn sqrt(&self) -> Result<CMatrix> {
        hermitian_sqrt(&self.entries)
    }
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut vals = Vec::with_capacity(eig.eigenvalues.len());
    for &v in eig.eigenvalues.iter() {
        if v < -PSD_TOL * scale {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        vals.push(C64::new(if v > SQRT_CUTOFF * scale { v.sqrt() } else { 0.0 }, 0.0));
    }
    let v = &eig.eigenvectors;
    Ok(v * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * v.adjoint())
}

/// Photon-number probabilities `P(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    pub probs: Vec<f64>,
}

impl PhotonDistribution {
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Σ_{n ≥ from} P(n).
    pub fn tail(&self, from: usize) -> f64 {
        self.probs.iter().skip(from).sum()
    }
}

/// `|n⟩⟨n|` in a space of dimension `dim`.
pub fn fock_state(n: usize, dim: usize) -> Result<DensityMatrix> {
    if n >= dim {
        return Err(Error::Dimension(format!(
            "photon number {n} needs dim > {n}, got {dim}"
        )));
    }
    let mut m = CMatrix::zeros(dim, dim);
    m[(n, n)] = C64::new(1.0, 0.0);
    Ok(DensityMatrix { entries: m })
}

/// Kraus amplitudes `a_k(n) = √(C(n,k) η^(n−k) (1−η)^k)` of the pure-loss
/// channel, indexed `[n][k]` for `k ≤ n < dim`.
pub(crate) fn loss_amplitudes(dim: usize, eta: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|n| (0..=n).map(|k| binomial_pmf(n, n - k, eta).sqrt()).collect())
        .collect()
}

/// Pure-loss (beam-splitter) channel with transmission `eta`.
///
/// `ρ' = Σ_k A_k ρ A_k†`, `A_k = Σ_n a_k(n) |n−k⟩⟨n|`. Loss only lowers the
/// photon number, so the truncated space is mapped into itself exactly.
pub fn apply_loss(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    check_unit_interval("eta", eta)?;
    let d = rho.dim();
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    let a = loss_amplitudes(d, eta);
    let mut out = CMatrix::zeros(d, d);
    for m in 0..d {
        for n in 0..d {
            let r = rho.entries[(m, n)];
            if r == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..=m.min(n) {
                out[(m - k, n - k)] += r * (a[m][k] * a[n][k]);
            }
        }
    }
    Ok(DensityMatrix { entries: out })
}

/// Adjoint of the loss channel applied to an operator: `Λ*_η(Π) = Σ_k A_k† Π A_k`.
pub fn apply_loss_adjoint(op: &CMatrix, eta: f64) -> Result<CMatrix> {
    check_unit_interval("eta", eta)?;
    let d = op.nrows();
    if eta == 1.0 {
        return Ok(op.clone());
    }
    let a = loss_amplitudes(d, eta);
    let mut out = CMatrix::zeros(d, d);
    for m in 0..d {
        for n in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..=m.min(n) {
                acc += op[(m - k, n - k)] * (a[m][k] * a[n][k]);
            }
            out[(m, n)] = acc;
        }
    }
    Ok(out)
}

/// Same as [`apply_loss_adjoint`] for a diagonal operator given by its diagonal.
pub fn apply_loss_adjoint_diagonal(diag: &[f64], eta: f64) -> Vec<f64> {
    (0..diag.len())
        .map(|n| {
            (0..=n)
                .map(|k| binomial(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32) * diag[n - k])
                .sum()
        })
        .collect()
}

/// Uhlmann fidelity `F = Tr[(√ρ_m ρ_p √ρ_m)^(1/2)]`.
///
/// The square roots come from Hermitian eigendecompositions; the outer trace
/// norm is evaluated as the sum of singular values of `√ρ_p √ρ_m`, which is
/// the same quantity without square-rooting rounding noise in the spectrum.
pub fn fidelity(rho_m: &DensityMatrix, rho_p: &DensityMatrix) -> Result<f64> {
    if rho_m.dim() != rho_p.dim() {
        return Err(Error::Dimension(format!(
            "fidelity between dim {} and dim {}",
            rho_m.dim(),
            rho_p.dim()
        )));
    }
    let a = rho_m.sqrt()?;
    let b = rho_p.sqrt()?;
    let svd = (b * a).svd(false, false);
    let f: f64 = svd.singular_values.iter().sum();
    Ok(f.clamp(0.0, 1.0))
}

pub fn photon_statistics(rho: &DensityMatrix) -> PhotonDistribution {
    rho.photon_statistics()
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixFile {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        DensityMatrixFile {
            dim: d,
            entries: (0..d)
                .map(|m| {
                    (0..d)
                        .map(|n| [self.entries[(m, n)].re, self.entries[(m, n)].im])
                        .collect()
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = DensityMatrixFile::deserialize(d)?;
        if file.entries.len() != file.dim || file.entries.iter().any(|r| r.len() != file.dim) {
            return Err(D::Error::custom(format!("entries are not {0}x{0}", file.dim)));
        }
        let m = CMatrix::from_fn(file.dim, file.dim, |i, j| {
            let [re, im] = file.entries[i][j];
            C64::new(re, im)
        });
        DensityMatrix::from_matrix(m).map_err(D::Error::custom)
    }
}
