//! Simulation toolkit for squeezed-light generation with a below-threshold
//! optical parametric oscillator/amplifier (OPO/OPA).
//!
//! The crate models the chain from the linearized intracavity noise model to
//! what a spectrum analyzer displays on the bench:
//!
//! * [`model`] — quadrature variance spectra `V±(ω)` of the OPO/OPA cavity,
//!   driven by seed, pump, loss, vacuum and detuning noise inputs.
//! * [`detection`] — homodyne detection chain (phase, efficiencies,
//!   electronic noise) and its inversion back to source-level squeezing.
//! * [`analyzer`] — synthetic noise-power traces with RMS-averaging
//!   statistics, multi-window stitching, electronic-noise subtraction,
//!   mains masking and band-power extraction.
//! * [`lockloop`] — discrete-time simulation of the noise-dither technique
//!   that locks the homodyne phase to a quadrature without a carrier.
//!
//! All variances are dimensionless and normalized to the shot-noise limit
//! (vacuum = 1). Rates and sideband frequencies are in rad/s inside
//! [`model`]; the analyzer and lock loop work in Hz, matching instrument
//! conventions. [`units`] holds the conversions.
//!
//! The numerics are generic over the scalar type through the [`Real`] trait
//! (`f32` or `f64`); the `*64` aliases at the crate root fix `f64` for
//! ordinary use.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

pub mod analyzer;
pub mod detection;
pub mod lockloop;
pub mod model;
pub mod noise;
pub mod units;

/// Scalar type the toolkit computes with: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssign
        + Sum
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for lowering an `f64` literal into the working scalar type.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert to the scalar type")
}

pub type CavityRates64 = model::CavityRates<f64>;
pub type CavityParams64 = model::CavityParams<f64>;
pub type QuadratureSpectrum64 = model::QuadratureSpectrum<f64>;
pub type NoiseSpectrum64 = noise::NoiseSpectrum<f64>;
pub type NoiseInputs64 = noise::NoiseInputs<f64>;
pub type DetectionChain64 = detection::DetectionChain<f64>;
pub type MeasuredVariancePair64 = detection::MeasuredVariancePair<f64>;
pub type WindowPlan64 = analyzer::WindowPlan<f64>;
pub type MeasuredTrace64 = analyzer::MeasuredTrace<f64>;
pub type LockConfig64 = lockloop::LockConfig<f64>;
pub type LockTrace64 = lockloop::LockTrace<f64>;

#[cfg(test)]
mod tests {
    // every value type is immutable after construction and shareable
    // across threads
    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn value_types_are_send_sync() {
        assert_send_sync::<crate::CavityParams64>();
        assert_send_sync::<crate::NoiseInputs64>();
        assert_send_sync::<crate::QuadratureSpectrum64>();
        assert_send_sync::<crate::DetectionChain64>();
        assert_send_sync::<crate::MeasuredTrace64>();
        assert_send_sync::<crate::LockConfig64>();
        assert_send_sync::<crate::LockTrace64>();
    }
}
