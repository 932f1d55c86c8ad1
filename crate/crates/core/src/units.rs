//! Physical constants and unit conversions.
//!
//! Internally the cavity model works in angular frequency (rad/s); the
//! analyzer, lock loop and all file formats use Hz.

use crate::{real, Real};

/// Reduced Planck constant, J·s (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Convert a frequency in Hz to angular frequency in rad/s.
pub fn hz_to_rad_s<T: Real>(f: T) -> T {
    f * T::TAU()
}

/// Convert an angular frequency in rad/s to Hz.
pub fn rad_s_to_hz<T: Real>(omega: T) -> T {
    omega / T::TAU()
}

/// Optical carrier angular frequency (rad/s) for a vacuum wavelength in
/// meters.
pub fn carrier_omega<T: Real>(wavelength_m: T) -> T {
    T::TAU() * real::<T>(SPEED_OF_LIGHT) / wavelength_m
}

/// Photon flux (photons/s) carried by `power` watts at carrier `omega0`.
pub fn photon_flux<T: Real>(power_w: T, omega0: T) -> T {
    power_w / (real::<T>(HBAR) * omega0)
}
