//! Two-photon ladder spectroscopy in Doppler-broadened three-level media.
//!
//! This crate models a ladder of states |g⟩ → |e⟩ → |r⟩ driven by two
//! counter-propagating lasers: a lower leg near 420 nm and an upper leg near
//! 1020 nm reaching a Rydberg level. Because the lower-leg wavevector is the
//! larger of the two, the two-photon Doppler shift (k_l − k_u)·v never
//! cancels, and thermal vapor spectra are shaped by which velocity classes
//! can reach resonance.
//!
//! The layers build on each other:
//!
//! - [`atom`]: atomic constants, principal-number scaling of the Rydberg
//!   decay rate and upper-leg Rabi frequency, thermal velocity spread.
//! - [`lindblad`]: the driven three-level master equation, its steady state,
//!   and the analytic weak-probe susceptibility.
//! - [`doppler`]: velocity grids with resonance-resolving refinement and
//!   Maxwell–Boltzmann averaging of the optical coherences.
//! - [`spectra`]: transmission spectra for both probing directions
//!   (lower-leg transparency and upper-leg two-photon absorption), feature
//!   extraction, and principal-number scans.
//! - [`lockin`]: modulation-transfer error signals and lock metrics.
//! - [`noisefit`]: detection-noise models, least-squares fits, and
//!   signal-to-noise figures.
//!
//! # Conventions
//!
//! All frequencies, detunings, decay rates, and Rabi frequencies are angular
//! (rad/s) everywhere inside the crate; interfaces that speak Hz convert at
//! the boundary (see [`units`]). Detunings are laser frequency minus atomic
//! resonance. Velocities are measured along the lower-leg beam axis, and the
//! upper beam counter-propagates.

pub mod atom;
pub mod doppler;
pub mod error;
pub mod lindblad;
pub mod lockin;
pub mod noisefit;
pub mod spectra;
pub mod units;

pub use atom::{AtomSpec, DopplerEnvironment, WavelengthScheme};
pub use doppler::{AbsorptionMap, GridSpec, Leg, ScanSpec, ScannedDetuning, VelocityGrid};
pub use error::LadderError;
pub use lindblad::{DensityMatrix, LadderSystem};
pub use lockin::{ErrorSignal, LockMetrics, LockResult, ModulationSpec};
pub use noisefit::{
    DataSeries, FitModel, FitResult, NoiseModelOd, NoiseModelWaist, Snr, SnrMode,
};
pub use spectra::{
    FeatureMetrics, NScanRow, OpticalDepthCalibration, SpectrumMode, TransmissionSpectrum,
};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, error::LadderError>;
