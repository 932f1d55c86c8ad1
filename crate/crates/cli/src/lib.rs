//! Command-line front end wiring the simulation toolkit into reproducible
//! bench scenarios: spectrum synthesis, homodyne phase scans, seed-power
//! sweeps, noise-dither lock runs and detection-chain inversion.

pub mod commands;
pub mod error;
pub mod presets;
pub mod scenario;
