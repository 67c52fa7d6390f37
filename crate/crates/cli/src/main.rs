//! Command-line front end: simulate heralded-state homodyne data, reconstruct
//! states, analyze them and print analytic predictions.
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fockstate::config::ExperimentConfig;
use fockstate::error::Error;
use fockstate::fock::DensityMatrix;
use fockstate::io;
use fockstate::numerics::linspace;
use fockstate::pipeline;
use fockstate::source::{smd_povm, ClickDetector};
use fockstate::spectral::{
    mode_match_from_overlaps, mode_match_from_visibility, purity_efficiency, schmidt_purity, spectral_overlap,
    EfficiencyBudget, JointSpectrum, SpectralAmplitude,
};
use fockstate::wigner::{self, CrossSection};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "fockstate", version, about)]
struct Cli {
    /// Output format for data printed on stdout
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate heralded homodyne records from a configuration
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Records file (JSON lines)
        #[arg(long)]
        out: PathBuf,
        /// Override the run seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of samples
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Maximum-likelihood reconstruction from a records file
    Reconstruct {
        #[arg(long = "in")]
        input: PathBuf,
        /// Density-matrix output file
        #[arg(long)]
        out: PathBuf,
        /// Take reconstruction options from this configuration
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        /// Efficiency to correct for
        #[arg(long)]
        eta: Option<f64>,
        /// Quadrature bins; 0 keeps one projector per record
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Report file; defaults to `<out>.report.json`
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Photon numbers, Wigner function, marginal and fidelity of a state
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for report.json and CSV grids
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reference state file for the fidelity
        #[arg(long, conflicts_with = "reference_fock")]
        reference: Option<PathBuf>,
        /// Reference Fock state |n⟩, passed through a loss `--eta`
        #[arg(long)]
        reference_fock: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Half-width of the phase-space grid
        #[arg(long, default_value_t = wigner::DEFAULT_EXTENT)]
        extent: f64,
        #[arg(long, default_value_t = wigner::DEFAULT_POINTS)]
        points: usize,
    },
    /// Analytic predictions for a configuration (no sampling)
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table of click-count POVM weights p(k|n)
    Povm {
        /// Take the detector from this configuration instead of the default
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Schmidt purity, spectral overlap and efficiency budget from spectra
    AnalyzeSpectra {
        /// Joint spectral intensity CSV
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Heralded signal spectrum CSV
        #[arg(long)]
        signal: Option<PathBuf>,
        /// Local-oscillator spectrum CSV
        #[arg(long)]
        lo: Option<PathBuf>,
        #[arg(long, default_value_t = 0.85)]
        eta_bhd: f64,
        /// Mode matching, used as given
        #[arg(long)]
        eta_mm: Option<f64>,
        /// Classical visibility; mode matching = V²
        #[arg(long)]
        visibility: Option<f64>,
        /// Spatial overlap multiplying the spectral overlap
        #[arg(long, default_value_t = 1.0)]
        spatial: f64,
        /// Purity factor, used when no JSI is given
        #[arg(long)]
        eta_p: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        eta_dc: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::Io(_) | Error::Json(_) | Error::Parse(_) => 4,
        Error::Dimension(_)
        | Error::InvalidState(_)
        | Error::DegenerateHerald(_)
        | Error::Range(_)
        | Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> fockstate::Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            samples,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(n) = samples {
                cfg.run.n_samples = n;
            }
            let sim = pipeline::simulate(&cfg)?;
            io::save_records(&out, &sim.header, &sim.records)?;
            emit(
                format,
                json!({
                    "records": sim.records.len(),
                    "seed": cfg.run.seed,
                    "herald_probability": sim.header.herald_probability,
                    "herald_rate": sim.rate,
                    "acquisition_time_s": sim.acquisition_time_s,
                    "out": out.display().to_string(),
                }),
            );
        }
        Command::Reconstruct {
            input,
            out,
            config,
            dim,
            eta,
            bins,
            max_iters,
            report,
        } => {
            let mut opts = match config {
                Some(p) => ExperimentConfig::load(&p)?.reconstruction,
                None => Default::default(),
            };
            if let Some(d) = dim {
                opts.dim = d;
            }
            if let Some(e) = eta {
                opts.eta_correction = e;
            }
            if let Some(b) = bins {
                opts.n_bins = b;
            }
            if let Some(m) = max_iters {
                opts.max_iters = m;
            }
            opts.validate().map_err(|e| Error::Config(e.to_string()))?;
            let (header, records) = io::load_records(&input)?;
            let rep = pipeline::reconstruct(&records, header.as_ref(), &opts)?;
            io::save_state(&out, &rep.state)?;
            let report_path = report.unwrap_or_else(|| sibling(&out, "report.json"));
            let summary = json!({
                "records": records.len(),
                "dim": opts.dim,
                "eta_correction": opts.eta_correction,
                "n_bins": opts.n_bins,
                "iterations": rep.iterations,
                "converged": rep.converged,
                "final_loglik": rep.final_loglik,
            });
            let mut full = summary.clone();
            full["loglik_trace"] = json!(rep.loglik_trace);
            io::save_json(&report_path, &full)?;
            emit(format, summary);
        }
        Command::Analyze {
            input,
            out,
            reference,
            reference_fock,
            eta,
            extent,
            points,
        } => {
            let rho = io::load_state(&input)?;
            let reference: Option<DensityMatrix> = match (reference, reference_fock) {
                (Some(p), _) => Some(io::load_state(&p)?),
                (None, Some(n)) => Some(pipeline::lossy_fock(n, eta, rho.dim())?),
                (None, None) => None,
            };
            if extent.is_nan() || extent <= 0.0 || points < 2 {
                return Err(Error::Config(
                    "grid needs a positive extent and at least 2 points".into(),
                ));
            }
            let axis = linspace(-extent, extent, points);
            let a = pipeline::analyze(&rho, reference.as_ref(), &axis)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                io::save_json(&dir.join("report.json"), &a.report)?;
                io::save_text(&dir.join("wigner.csv"), &a.grid.to_csv())?;
                io::save_text(
                    &dir.join("cross_p0.csv"),
                    &wigner::cross_section_csv(CrossSection::P0, &a.cross_p0.x, &a.cross_p0.y),
                )?;
                io::save_text(
                    &dir.join("cross_x0.csv"),
                    &wigner::cross_section_csv(CrossSection::X0, &a.cross_x0.x, &a.cross_x0.y),
                )?;
                io::save_text(
                    &dir.join("marginal.csv"),
                    &io::xy_csv("x", "pdf", &a.report.marginal.x, &a.report.marginal.y),
                )?;
            }
            emit(format, serde_json::to_value(&a.report)?);
        }
        Command::Predict { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let p = pipeline::predict(&cfg)?;
            if let Some(path) = out {
                io::save_json(&path, &p)?;
            }
            match format {
                Format::Json => emit(format, serde_json::to_value(&p)?),
                Format::Csv => {
                    let mut text = String::from("x,marginal,fock_marginal\n");
                    for ((x, m), f) in p.marginal.x.iter().zip(&p.marginal.y).zip(&p.fock_marginal.y) {
                        let _ = writeln!(text, "{x},{m},{f}");
                    }
                    write_stdout(&text);
                }
            }
        }
        Command::Povm { config, n_max } => {
            let det = match config {
                Some(p) => ExperimentConfig::load(&p)?.detector,
                None => ClickDetector::three_channel(),
            };
            det.validate().map_err(|e| Error::Config(e.to_string()))?;
            let table: Vec<Vec<f64>> = (0..=det.n_detectors()).map(|k| smd_povm(&det, k, n_max)).collect();
            match format {
                Format::Json => emit(format, json!({ "detector": det, "n_max": n_max, "p_k_given_n": table })),
                Format::Csv => {
                    let cols: Vec<String> = (0..table.len()).map(|k| format!("k{k}")).collect();
                    let mut text = format!("n,{}\n", cols.join(","));
                    for n in 0..=n_max {
                        let row: Vec<String> = table.iter().map(|t| t[n].to_string()).collect();
                        let _ = writeln!(text, "{n},{}", row.join(","));
                    }
                    write_stdout(&text);
                }
            }
        }
        Command::AnalyzeSpectra {
            input,
            signal,
            lo,
            eta_bhd,
            eta_mm,
            visibility,
            spatial,
            eta_p,
            eta_dc,
        } => {
            let mut out = serde_json::Map::new();
            let purity_factor = match &input {
                Some(path) => {
                    let s = schmidt_purity(&JointSpectrum::from_csv(path)?)?;
                    out.insert("schmidt_purity".into(), json!(s.purity));
                    out.insert("schmidt_number".into(), json!(s.schmidt_number));
                    purity_efficiency(s.purity)?
                }
                None => eta_p.unwrap_or(1.0),
            };
            let overlap = match (&signal, &lo) {
                (Some(a), Some(b)) => {
                    let o = spectral_overlap(&SpectralAmplitude::from_csv(a)?, &SpectralAmplitude::from_csv(b)?);
                    out.insert("spectral_overlap".into(), json!(o));
                    Some(o)
                }
                (None, None) => None,
                _ => return Err(Error::Config("--signal and --lo must be given together".into())),
            };
            let budget = match (eta_mm, visibility, overlap) {
                (Some(m), _, _) => EfficiencyBudget::new(eta_bhd, m, purity_factor, eta_dc)?,
                (None, Some(v), _) => EfficiencyBudget::with_visibility(eta_bhd, v, purity_factor, eta_dc)?,
                (None, None, Some(o)) => {
                    EfficiencyBudget::new(eta_bhd, mode_match_from_overlaps(spatial, o)?, purity_factor, eta_dc)?
                }
                (None, None, None) => {
                    EfficiencyBudget::new(eta_bhd, mode_match_from_visibility(1.0)?, purity_factor, eta_dc)?
                }
            };
            out.insert("budget".into(), serde_json::to_value(budget)?);
            out.insert(
                "total".into(),
                json!(fockstate::spectral::efficiency_budget_total(&budget)),
            );
            emit(format, Value::Object(out));
        }
    }
    Ok(())
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes to stdout; a closed pipe is not an error.
fn write_stdout(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
}

/// Prints a JSON value, or its scalar top-level fields as `key,value` lines.
fn emit(format: Format, value: Value) {
    match format {
        Format::Json => write_stdout(&format!(
            "{}\n",
            serde_json::to_string_pretty(&value).expect("serializable")
        )),
        Format::Csv => {
            let mut text = String::from("key,value\n");
            if let Value::Object(map) = value {
                for (k, v) in map {
                    match v {
                        Value::Number(_) | Value::Bool(_) => {
                            let _ = writeln!(text, "{k},{v}");
                        }
                        Value::String(s) => {
                            let _ = writeln!(text, "{k},{s}");
                        }
                        _ => {}
                    }
                }
            }
            write_stdout(&text);
        }
    }
}
