//! Simulation and tomography of holographic Hermite-Gaussian mode detectors.
//!
//! A detector is a hologram displayed on a phase-only SLM followed by a lens
//! and a single-mode fiber. This crate synthesizes the hologram masks,
//! propagates the filtered beam to the focal plane, scans the fiber across
//! it, and reconstructs the detector's POVM in the Hermite-Gaussian basis
//! from those scans by constrained least squares.
//!
//! Modules, bottom-up:
//!
//! - [`modes`]: Hermite-Gaussian fields, calibration probes, overlaps and the
//!   analytic response of an ideal projector.
//! - [`hologram`]: blazed-grating phase masks, phase-only or with amplitude
//!   modulation through the local modulation depth.
//! - [`diffraction`]: FFT far field, first-order extraction, fiber coupling,
//!   probe scans and diffraction efficiency.
//! - [`tomography`]: design matrix, projected-gradient POVM reconstruction and
//!   quality metrics.
//! - [`pipeline`], [`noise`], [`io`]: configuration-driven runs and their
//!   artifacts.

pub mod diffraction;
pub mod error;
pub mod hologram;
pub mod io;
pub mod modes;
pub mod noise;
pub mod par;
pub mod pipeline;
pub mod tomography;

pub use error::{Error, Result};
pub use par::Execution;

/// Version string recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
