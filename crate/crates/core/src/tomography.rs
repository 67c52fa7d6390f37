//! Maximum-likelihood state reconstruction from homodyne records.
//!
//! The estimator iterates `ρ ← N[R(ρ) ρ R(ρ)]` with
//! `R(ρ) = Σ_j f_j Π_j / Tr[ρ Π_j]`, starting from the maximally mixed state.
//! Records are either binned in quadrature with the LO phase pooled (the
//! POVM elements are then the phase-averaged, diagonal bin projectors) or
//! kept as one rank-one projector per record.
//!
//! With an efficiency correction `η < 1` every POVM element is replaced by
//! `Λ*_η(Π)`, so the reconstructed state is the one *before* a loss `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_loss_adjoint, apply_loss_adjoint_diagonal, hermitize, CMatrix, DensityMatrix, C64};
use crate::homodyne::{eigenfunctions, tabulation_range, Digitizer, QuadratureRecord};
use crate::numerics::gauss_legendre_nodes;

/// Probabilities are floored here to keep `1 / Tr[ρΠ]` finite.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionOptions {
    pub dim: usize,
    /// Detection efficiency to correct for; 1 means no correction.
    pub eta_correction: f64,
    pub max_iters: usize,
    /// Stop when the largest entrywise change falls below this.
    pub tol: f64,
    /// Number of quadrature bins; 0 keeps one projector per record.
    pub n_bins: usize,
    /// Smallest correction efficiency accepted.
    pub min_eta_correction: f64,
    /// When the records are digitized, bins are aligned to whole levels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digitizer: Option<Digitizer>,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            dim: 12,
            eta_correction: 1.0,
            max_iters: 5000,
            tol: 1e-8,
            n_bins: 200,
            min_eta_correction: 0.5,
            digitizer: None,
        }
    }
}

impl ReconstructionOptions {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Parameter("dim must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol = {} must be positive", self.tol)));
        }
        if !(self.eta_correction > 0.0 && self.eta_correction <= 1.0) {
            return Err(Error::Parameter(format!(
                "eta_correction = {} must be in (0, 1]",
                self.eta_correction
            )));
        }
        if self.eta_correction < self.min_eta_correction {
            return Err(Error::Parameter(format!(
                "eta_correction = {} is below the allowed minimum {} (lower min_eta_correction to override)",
                self.eta_correction, self.min_eta_correction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub state: DensityMatrix,
    pub iterations: usize,
    pub final_loglik: f64,
    pub converged: bool,
    /// Log-likelihood of the iterate at the start of every iteration.
    pub loglik_trace: Vec<f64>,
}

/// POVM element for observing quadrature `x` at phase `theta`, optionally
/// pushed through the adjoint loss channel.
pub fn quadrature_projector(x: f64, theta: f64, dim: usize, eta: f64) -> Result<CMatrix> {
    if dim == 0 {
        return Err(Error::Dimension("dim must be at least 1".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!("eta = {eta} must be in (0, 1]")));
    }
    let psi = eigenfunctions(dim - 1, x);
    // ⟨n|x_θ⟩ = ψ_n(x) e^{inθ}; Π = |x_θ⟩⟨x_θ| so that Tr[ρΠ] = pr(x|θ).
    let v: Vec<C64> = psi
        .iter()
        .enumerate()
        .map(|(n, p)| C64::from_polar(*p, n as f64 * theta))
        .collect();
    let pi = CMatrix::from_fn(dim, dim, |m, n| v[m] * v[n].conj());
    apply_loss_adjoint(&pi, eta)
}

enum Operator {
    Diagonal(Vec<f64>),
    Full(CMatrix),
}

impl Operator {
    fn expectation(&self, rho: &CMatrix) -> f64 {
        match self {
            Operator::Diagonal(d) => d.iter().enumerate().map(|(n, v)| rho[(n, n)].re * v).sum(),
            Operator::Full(p) => {
                let d = p.nrows();
                let mut acc = 0.0;
                for m in 0..d {
                    for n in 0..d {
                        acc += (rho[(m, n)] * p[(n, m)]).re;
                    }
                }
                acc
            }
        }
    }

    fn accumulate(&self, target: &mut CMatrix, weight: f64) {
        match self {
            Operator::Diagonal(d) => {
                for (n, v) in d.iter().enumerate() {
                    target[(n, n)] += C64::new(weight * v, 0.0);
                }
            }
            Operator::Full(p) => {
                *target += p * C64::new(weight, 0.0);
            }
        }
    }
}

struct Observations {
    operators: Vec<Operator>,
    counts: Vec<f64>,
}

fn check_records(records: &[QuadratureRecord], dim: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Parameter("no records to reconstruct from".into()));
    }
    let range = tabulation_range(dim);
    if let Some(r) = records.iter().find(|r| !r.x.is_finite() || r.x.abs() > range) {
        return Err(Error::Range(format!("record x = {} outside ±{range:.3}", r.x)));
    }
    Ok(range)
}

/// Bin edges used for a record set: uniform over the sample range, or
/// aligned to whole digitizer levels. The outermost edges are then pushed to
/// the tabulation range so that the bin projectors sum to the identity.
fn bin_edges(records: &[QuadratureRecord], opts: &ReconstructionOptions, range: f64) -> Vec<f64> {
    let lo = records.iter().map(|r| r.x).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.x).fold(f64::NEG_INFINITY, f64::max);
    let mut edges = match opts.digitizer {
        Some(dg) => {
            let first = dg.level_index(lo);
            let last = dg.level_index(hi);
            let levels = last - first + 1;
            let per_bin = levels.div_ceil(opts.n_bins).max(1);
            let mut e: Vec<f64> = (first..=last + 1).step_by(per_bin).map(|i| dg.boundary(i)).collect();
            if *e.last().unwrap() < dg.boundary(last + 1) {
                e.push(dg.boundary(last + 1));
            }
            e
        }
        None => {
            let width = (hi - lo).max(1e-9);
            (0..=opts.n_bins)
                .map(|i| lo + width * i as f64 / opts.n_bins as f64)
                .collect()
        }
    };
    let n = edges.len();
    edges[0] = -range;
    edges[n - 1] = range;
    edges
}

fn build_observations(records: &[QuadratureRecord], opts: &ReconstructionOptions) -> Result<Observations> {
    opts.validate()?;
    let range = check_records(records, opts.dim)?;
    let d = opts.dim;
    if opts.n_bins == 0 {
        // Canonical order makes the floating-point sums independent of record order.
        let mut sorted: Vec<(f64, f64)> = records.iter().map(|r| (r.x, r.theta)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let operators = sorted
            .iter()
            .map(|(x, t)| quadrature_projector(*x, *t, d, opts.eta_correction).map(Operator::Full))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Observations {
            counts: vec![1.0; operators.len()],
            operators,
        });
    }
    let edges = bin_edges(records, opts, range);
    let nb = edges.len() - 1;
    let mut counts = vec![0.0; nb];
    for r in records {
        let i = edges.partition_point(|e| *e <= r.x).saturating_sub(1).min(nb - 1);
        counts[i] += 1.0;
    }
    let mut operators = Vec::with_capacity(nb);
    let mut kept = Vec::with_capacity(nb);
    for (j, e) in edges.windows(2).enumerate() {
        if counts[j] == 0.0 {
            continue;
        }
        let mut diag = vec![0.0; d];
        for (x, w) in gauss_legendre_nodes(e[0], e[1], 0.05) {
            let psi = eigenfunctions(d - 1, x);
            for n in 0..d {
                diag[n] += w * psi[n] * psi[n];
            }
        }
        if opts.eta_correction < 1.0 {
            diag = apply_loss_adjoint_diagonal(&diag, opts.eta_correction);
        }
        operators.push(Operator::Diagonal(diag));
        kept.push(counts[j]);
    }
    Ok(Observations {
        operators,
        counts: kept,
    })
}

fn loglik_of(rho: &CMatrix, obs: &Observations) -> f64 {
    let mut ll = 0.0;
    for (op, f) in obs.operators.iter().zip(&obs.counts) {
        let p = op.expectation(rho);
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += f * p.ln();
    }
    ll
}

/// `Σ_j f_j ln Tr[ρ Π_j]` for the observations implied by `opts`.
/// Returns `-∞` if an occupied bin has zero probability.
pub fn log_likelihood(rho: &DensityMatrix, records: &[QuadratureRecord], opts: &ReconstructionOptions) -> Result<f64> {
    if rho.dim() != opts.dim {
        return Err(Error::Dimension(format!(
            "state dim {} but options dim {}",
            rho.dim(),
            opts.dim
        )));
    }
    let obs = build_observations(records, opts)?;
    Ok(loglik_of(rho.entries(), &obs))
}

/// Iterative maximum-likelihood reconstruction.
pub fn mle_reconstruct(records: &[QuadratureRecord], opts: &ReconstructionOptions) -> Result<ReconstructionReport> {
    let obs = build_observations(records, opts)?;
    let d = opts.dim;
    let total: f64 = obs.counts.iter().sum();
    let mut rho = DensityMatrix::maximally_mixed(d)?.entries().clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut warned = false;

    while iterations < opts.max_iters {
        let mut r = CMatrix::zeros(d, d);
        let mut ll = 0.0;
        for (op, f) in obs.operators.iter().zip(&obs.counts) {
            let mut p = op.expectation(&rho);
            if p < PROBABILITY_FLOOR {
                if !warned {
                    log::warn!(
                        "datum with probability {p:e} under the current estimate; flooring at {PROBABILITY_FLOOR:e}"
                    );
                    warned = true;
                }
                p = PROBABILITY_FLOOR;
            }
            ll += f * p.ln();
            op.accumulate(&mut r, f / (p * total));
        }
        trace.push(ll);
        let mut next = hermitize(&(&r * &rho * &r));
        let tr = next.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::Numerical(format!("iterate trace became {tr}")));
        }
        next /= C64::new(tr, 0.0);
        let delta = (&next - &rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        rho = next;
        iterations += 1;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "maximum-likelihood iteration stopped after {iterations} iterations without reaching tol {:e}",
            opts.tol
        );
    }
    let state = DensityMatrix::repaired(rho)?;
    let final_loglik = loglik_of(state.entries(), &obs);
    Ok(ReconstructionReport {
        state,
        iterations,
        final_loglik,
        converged,
        loglik_trace: trace,
    })
}
