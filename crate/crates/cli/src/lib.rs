//! Command-line front end for the ladder-spectroscopy library: spectra,
//! velocity maps, error signals, noise-model fits, and principal-number
//! scans, driven by flat `key = value` config files and serialized as CSV
//! tables, key/value reports, and optional SVG plots.
//!
//! The binary guarantees determinism: identical configuration produces
//! byte-identical output files, independent of the worker-thread count.

pub mod commands;
pub mod config;
pub mod fault;
pub mod output;
