//! Heralded multi-photon Fock-state source simulation and homodyne tomography.
//!
//! The crate is organised around the data flow of a heralded-state experiment:
//!
//! - [`fock`]: truncated Fock-space density matrices, loss channel, fidelity.
//! - [`source`]: two-mode squeezed vacuum source, multiplexed click detector,
//!   heralded signal states and production rates.
//! - [`spectral`]: joint-spectrum Schmidt analysis, spectral overlap and the
//!   homodyne efficiency budget.
//! - [`homodyne`]: quadrature densities, seeded Monte Carlo sampling of
//!   homodyne records, digitizer model and marginal histograms.
//! - [`tomography`]: iterative maximum-likelihood (RρR) reconstruction.
//! - [`wigner`]: Wigner functions in the Fock basis.
//! - [`config`] and [`pipeline`]: experiment configuration and the end-to-end
//!   simulate / reconstruct / analyze / predict steps used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod source;
pub mod spectral;
pub mod tomography;
pub mod wigner;

pub use error::{Error, Result};
pub use fock::{apply_loss, fidelity, fock_state, photon_statistics, DensityMatrix, PhotonDistribution};
