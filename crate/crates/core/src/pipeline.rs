//! End-to-end steps: simulate records from a configuration, reconstruct a
//! state from records, analyze a state and compute analytic predictions.
//!
//! Randomness: every stochastic step draws from a seed derived from the run
//! seed with [`derive_seed`] and a fixed label (`"sampling"` for homodyne
//! records).

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fock::{apply_loss, fidelity, fock_state, DensityMatrix};
use crate::homodyne::{phase_averaged_pdf, predicted_marginal, QuadratureRecord};
use crate::io::RecordsHeader;
use crate::numerics::{derive_seed, linspace};
use crate::source::{herald_rate, heralded_state, joint_pair_distribution, HeraldSpec, HeraldedState};
use crate::tomography::{mle_reconstruct, ReconstructionOptions, ReconstructionReport};
use crate::wigner::{wigner_cross_section, wigner_grid, wigner_point, CrossSection, PhaseSpaceGrid};

/// Label for the homodyne sampling seed.
pub const SAMPLING_SEED_LABEL: &str = "sampling";

/// Quadrature grid used for reported marginals.
pub fn marginal_axis() -> Vec<f64> {
    linspace(-5.0, 5.0, 201)
}

/// Heralded signal state and the state arriving at the homodyne detector.
pub fn prepared_state(cfg: &ExperimentConfig) -> Result<(HeraldedState, DensityMatrix)> {
    let herald = heralded_state(&cfg.source, &cfg.detector, &cfg.herald)?;
    let arriving = apply_loss(&herald.state, cfg.signal_losses.transmission())?;
    Ok((herald, arriving))
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub header: RecordsHeader,
    pub records: Vec<QuadratureRecord>,
    /// Herald events per second.
    pub rate: f64,
    /// Wall-clock time the experiment would need to collect the records.
    pub acquisition_time_s: f64,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (herald, arriving) = prepared_state(cfg)?;
    let rate = herald_rate(&cfg.source, &cfg.detector, &cfg.herald, cfg.run.rep_rate)?;
    let seed = derive_seed(cfg.run.seed, SAMPLING_SEED_LABEL);
    let clicks = cfg.herald.clicks as u32;
    let mut records = crate::homodyne::sample_quadratures(&arriving, cfg.run.n_samples, cfg.run.phase, &cfg.bhd, seed)?;
    for r in &mut records {
        r.herald_clicks = clicks;
    }
    log::info!(
        "simulated {} records, herald probability {:.3e}, rate {:.3e} /s",
        records.len(),
        herald.probability,
        rate
    );
    Ok(Simulation {
        header: RecordsHeader {
            seed: cfg.run.seed,
            state: format!(
                "TMSV lambda={} heralded on {} clicks, signal transmission {}",
                cfg.source.lambda,
                clicks,
                cfg.signal_losses.transmission()
            ),
            detector: Some(cfg.detector.clone()),
            bhd: Some(cfg.bhd),
            herald_clicks: clicks,
            herald_probability: Some(herald.probability),
            herald_rate: Some(rate),
        },
        records,
        rate,
        acquisition_time_s: cfg.run.n_samples as f64 / rate,
    })
}

/// Reconstruction, picking up the digitizer from the records header when the
/// options leave it unset.
pub fn reconstruct(
    records: &[QuadratureRecord],
    header: Option<&RecordsHeader>,
    opts: &ReconstructionOptions,
) -> Result<ReconstructionReport> {
    let mut opts = *opts;
    if opts.digitizer.is_none() {
        if let Some(bhd) = header.and_then(|h| h.bhd) {
            opts.digitizer = bhd.digitizer()?;
        }
    }
    mle_reconstruct(records, &opts)
}

/// `|n⟩` through a loss `eta`, in dimension `dim`.
pub fn lossy_fock(n: usize, eta: f64, dim: usize) -> Result<DensityMatrix> {
    apply_loss(&fock_state(n, dim)?, eta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dim: usize,
    pub photon_numbers: Vec<f64>,
    pub mean_photon_number: f64,
    pub purity: f64,
    pub w00: f64,
    pub wigner_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    /// Phase-averaged quadrature density.
    pub marginal: Curve,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub grid: PhaseSpaceGrid,
    pub cross_p0: Curve,
    pub cross_x0: Curve,
}

pub fn analyze(rho: &DensityMatrix, reference: Option<&DensityMatrix>, axis: &[f64]) -> Result<Analysis> {
    let fid = reference.map(|r| fidelity(rho, r)).transpose()?;
    let grid = wigner_grid(rho, axis, axis)?;
    let mx = marginal_axis();
    let report = AnalysisReport {
        dim: rho.dim(),
        photon_numbers: rho.photon_statistics().probs,
        mean_photon_number: rho.photon_statistics().mean(),
        purity: rho.purity(),
        w00: wigner_point(rho, 0.0, 0.0),
        wigner_min: grid.min(),
        fidelity: fid,
        marginal: Curve {
            y: mx.iter().map(|x| phase_averaged_pdf(rho, *x)).collect(),
            x: mx,
        },
    };
    Ok(Analysis {
        report,
        cross_p0: Curve {
            x: axis.to_vec(),
            y: wigner_cross_section(rho, CrossSection::P0, axis),
        },
        cross_x0: Curve {
            x: axis.to_vec(),
            y: wigner_cross_section(rho, CrossSection::X0, axis),
        },
        grid,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEntry {
    pub clicks: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub herald_clicks: usize,
    pub herald_probability: f64,
    /// The herald outcome has zero probability; the state fields then
    /// describe the unconditioned signal mode.
    pub degenerate_herald: bool,
    pub rate: f64,
    pub rates: Vec<RateEntry>,
    pub signal_transmission: f64,
    pub total_efficiency: f64,
    /// Photon numbers of the heralded state at the source.
    pub heralded_photon_numbers: Vec<f64>,
    /// Photon numbers at the homodyne detector output, all losses included.
    pub detected_photon_numbers: Vec<f64>,
    pub detected_w00: f64,
    /// Phase-averaged marginal of the detected state.
    pub marginal: Curve,
    /// Marginal of an ideal Fock state with the herald's photon number
    /// through the total efficiency.
    pub fock_marginal: Curve,
}

pub fn predict(cfg: &ExperimentConfig) -> Result<Prediction> {
    cfg.validate()?;
    let (heralded, probability, degenerate) = match heralded_state(&cfg.source, &cfg.detector, &cfg.herald) {
        Ok(h) => (h.state, h.probability, false),
        Err(Error::DegenerateHerald(p)) => (DensityMatrix::diagonal(&joint_pair_distribution(&cfg.source))?, p, true),
        Err(e) => return Err(e),
    };
    let eta = cfg.total_efficiency();
    let detected = apply_loss(&heralded, eta)?;
    let rates = (1..=cfg.detector.n_detectors())
        .map(|k| {
            herald_rate(&cfg.source, &cfg.detector, &HeraldSpec { clicks: k }, cfg.run.rep_rate)
                .map(|rate| RateEntry { clicks: k, rate })
        })
        .collect::<Result<Vec<_>>>()?;
    let mx = marginal_axis();
    Ok(Prediction {
        herald_clicks: cfg.herald.clicks,
        herald_probability: probability,
        degenerate_herald: degenerate,
        rate: probability * cfg.run.rep_rate,
        rates,
        signal_transmission: cfg.signal_losses.transmission(),
        total_efficiency: eta,
        heralded_photon_numbers: heralded.photon_statistics().probs,
        detected_photon_numbers: detected.photon_statistics().probs,
        detected_w00: wigner_point(&detected, 0.0, 0.0),
        marginal: Curve {
            y: mx.iter().map(|x| phase_averaged_pdf(&detected, *x)).collect(),
            x: mx.clone(),
        },
        fock_marginal: Curve {
            y: predicted_marginal(cfg.herald.clicks, eta, &mx)?,
            x: mx,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(photons: usize, n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(photons).unwrap();
        cfg.run.n_samples = n;
        cfg
    }

    #[test]
    fn simulation_is_deterministic_and_labelled() {
        let cfg = small(2, 5000);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 5000);
        assert!(a.records.iter().all(|r| r.herald_clicks == 2));
        assert!(a.acquisition_time_s > 0.0);
        let mut other = cfg.clone();
        other.run.seed += 1;
        assert_ne!(simulate(&other).unwrap().records, a.records);
    }

    #[test]
    fn zero_squeezing_heralds_nothing() {
        let mut cfg = small(1, 100);
        cfg.source.lambda = 0.0;
        assert!(matches!(simulate(&cfg), Err(Error::DegenerateHerald(_))));
        let p = predict(&cfg).unwrap();
        assert!(p.degenerate_herald);
        assert_eq!(p.rate, 0.0);
        assert!((p.detected_photon_numbers[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prediction_rates_and_marginals() {
        let cfg = ExperimentConfig::preset(3).unwrap();
        let p = predict(&cfg).unwrap();
        assert_eq!(p.rates.len(), 3);
        assert!(p.rates[0].rate > p.rates[1].rate && p.rates[1].rate > p.rates[2].rate);
        assert!((p.rates[2].rate - p.rate).abs() < 1e-9 * p.rate);
        let dx = p.marginal.x[1] - p.marginal.x[0];
        let norm: f64 = p.marginal.y.iter().sum::<f64>() * dx;
        assert!((norm - 1.0).abs() < 1e-3);
        assert_eq!(p.fock_marginal.y.len(), p.marginal.y.len());
    }

    #[test]
    fn analysis_of_state_against_itself() {
        let rho = lossy_fock(3, 0.649, 6).unwrap();
        let axis = linspace(-4.0, 4.0, 41);
        let a = analyze(&rho, Some(&rho), &axis).unwrap();
        assert!((a.report.fidelity.unwrap() - 1.0).abs() < 1e-10);
        assert!(a.report.w00 < 0.0);
        assert_eq!(a.grid.values.len(), 41);
        for (p, x) in a.cross_p0.y.iter().zip(&a.cross_x0.y) {
            assert!((p - x).abs() < 1e-12);
        }
        let bad = fock_state(0, 3).unwrap();
        assert!(analyze(&rho, Some(&bad), &axis).is_err());
    }

    #[test]
    fn reconstruct_uses_header_digitizer() {
        let cfg = small(1, 4000);
        let sim = simulate(&cfg).unwrap();
        let opts = ReconstructionOptions {
            dim: 4,
            ..Default::default()
        };
        let rep = reconstruct(&sim.records, Some(&sim.header), &opts).unwrap();
        assert!((rep.state.trace() - 1.0).abs() < 1e-10);
    }
}
