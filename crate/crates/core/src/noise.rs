//! Noise input spectra driving the cavity model.
//!
//! Every spectrum is dimensionless and normalized so that a vacuum
//! (shot-noise-limited) input is 1 at all frequencies. Detuning noise is the
//! exception: it has no vacuum contribution and defaults to 0.
//!
//! Spectra are closed-form shapes rather than arbitrary closures so that a
//! scenario can be serialized, hashed and re-evaluated bit-identically.

use thiserror::Error;

use crate::{real, Real};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise spectrum level must be finite and >= 0, got {0}")]
    NegativeLevel(f64),
    #[error("noise spectrum corner/width must be finite and > 0, got {0}")]
    NonPositiveScale(f64),
    #[error("band edges must satisfy 0 <= lo <= hi, got [{0}, {1}]")]
    BadBand(f64, f64),
}

/// A nonnegative spectral density as a function of sideband angular
/// frequency ω (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpectrum<T> {
    /// Frequency-independent level.
    Flat { level: T },
    /// Acoustic-type low-frequency noise: `magnitude / (1 + (ω/corner)²)`,
    /// flat below the corner and falling as 1/ω² above it.
    Acoustic { magnitude: T, corner: T },
    /// `magnitude` inside `[lo, hi]`, zero outside.
    Band { magnitude: T, lo: T, hi: T },
    /// Lorentzian line: `magnitude · (w/2)² / ((ω−center)² + (w/2)²)`.
    Line { magnitude: T, center: T, width: T },
    /// Pointwise sum of component spectra.
    Sum(Vec<NoiseSpectrum<T>>),
}

impl<T: Real> NoiseSpectrum<T> {
    pub fn vacuum() -> Self {
        NoiseSpectrum::Flat { level: T::one() }
    }

    pub fn zero() -> Self {
        NoiseSpectrum::Flat { level: T::zero() }
    }

    /// Evaluate the spectrum at sideband angular frequency ω (rad/s).
    pub fn eval(&self, omega: T) -> T {
        match self {
            NoiseSpectrum::Flat { level } => *level,
            NoiseSpectrum::Acoustic { magnitude, corner } => {
                let x = omega / *corner;
                *magnitude / (T::one() + x * x)
            }
            NoiseSpectrum::Band { magnitude, lo, hi } => {
                if omega >= *lo && omega <= *hi {
                    *magnitude
                } else {
                    T::zero()
                }
            }
            NoiseSpectrum::Line {
                magnitude,
                center,
                width,
            } => {
                let hw = *width * real::<T>(0.5);
                let d = omega - *center;
                *magnitude * hw * hw / (d * d + hw * hw)
            }
            NoiseSpectrum::Sum(parts) => parts.iter().map(|p| p.eval(omega)).sum(),
        }
    }

    /// Return a copy with every magnitude scaled by `factor` (≥ 0).
    pub fn scaled(&self, factor: T) -> Self {
        match self {
            NoiseSpectrum::Flat { level } => NoiseSpectrum::Flat {
                level: *level * factor,
            },
            NoiseSpectrum::Acoustic { magnitude, corner } => NoiseSpectrum::Acoustic {
                magnitude: *magnitude * factor,
                corner: *corner,
            },
            NoiseSpectrum::Band { magnitude, lo, hi } => NoiseSpectrum::Band {
                magnitude: *magnitude * factor,
                lo: *lo,
                hi: *hi,
            },
            NoiseSpectrum::Line {
                magnitude,
                center,
                width,
            } => NoiseSpectrum::Line {
                magnitude: *magnitude * factor,
                center: *center,
                width: *width,
            },
            NoiseSpectrum::Sum(parts) => {
                NoiseSpectrum::Sum(parts.iter().map(|p| p.scaled(factor)).collect())
            }
        }
    }

    /// Pointwise sum of `self` and `other`.
    pub fn plus(self, other: NoiseSpectrum<T>) -> Self {
        match self {
            NoiseSpectrum::Sum(mut parts) => {
                parts.push(other);
                NoiseSpectrum::Sum(parts)
            }
            s => NoiseSpectrum::Sum(vec![s, other]),
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let lvl = |x: T| -> Result<(), NoiseError> {
            if x.is_finite() && x >= T::zero() {
                Ok(())
            } else {
                Err(NoiseError::NegativeLevel(x.to_f64().unwrap_or(f64::NAN)))
            }
        };
        let scale = |x: T| -> Result<(), NoiseError> {
            if x.is_finite() && x > T::zero() {
                Ok(())
            } else {
                Err(NoiseError::NonPositiveScale(x.to_f64().unwrap_or(f64::NAN)))
            }
        };
        match self {
            NoiseSpectrum::Flat { level } => lvl(*level),
            NoiseSpectrum::Acoustic { magnitude, corner } => {
                lvl(*magnitude)?;
                scale(*corner)
            }
            NoiseSpectrum::Band { magnitude, lo, hi } => {
                lvl(*magnitude)?;
                if lo.is_finite() && hi.is_finite() && *lo >= T::zero() && lo <= hi {
                    Ok(())
                } else {
                    Err(NoiseError::BadBand(
                        lo.to_f64().unwrap_or(f64::NAN),
                        hi.to_f64().unwrap_or(f64::NAN),
                    ))
                }
            }
            NoiseSpectrum::Line {
                magnitude,
                center,
                width,
            } => {
                lvl(*magnitude)?;
                lvl(*center)?;
                scale(*width)
            }
            NoiseSpectrum::Sum(parts) => parts.iter().try_for_each(|p| p.validate()),
        }
    }
}

/// The five noise inputs of the cavity model, per quadrature where the
/// physics distinguishes them.
///
/// `v_loss` and `v_vac` are the vacuum fields entering through intracavity
/// loss and the output coupler; they stay at 1 in any physical
/// configuration. `v_detuning` is the cavity detuning fluctuation spectrum,
/// which couples only through the intracavity carrier and only into the
/// phase quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseInputs<T> {
    pub v_seed_plus: NoiseSpectrum<T>,
    pub v_seed_minus: NoiseSpectrum<T>,
    pub v_pump_plus: NoiseSpectrum<T>,
    pub v_pump_minus: NoiseSpectrum<T>,
    pub v_loss: NoiseSpectrum<T>,
    pub v_vac: NoiseSpectrum<T>,
    pub v_detuning: NoiseSpectrum<T>,
}

impl<T: Real> Default for NoiseInputs<T> {
    fn default() -> Self {
        Self::vacuum()
    }
}

impl<T: Real> NoiseInputs<T> {
    /// All inputs at the vacuum level, no detuning noise.
    pub fn vacuum() -> Self {
        NoiseInputs {
            v_seed_plus: NoiseSpectrum::vacuum(),
            v_seed_minus: NoiseSpectrum::vacuum(),
            v_pump_plus: NoiseSpectrum::vacuum(),
            v_pump_minus: NoiseSpectrum::vacuum(),
            v_loss: NoiseSpectrum::vacuum(),
            v_vac: NoiseSpectrum::vacuum(),
            v_detuning: NoiseSpectrum::zero(),
        }
    }

    /// Technical pump noise added on top of the pump vacuum, both
    /// quadratures.
    pub fn with_pump_excess(mut self, excess: NoiseSpectrum<T>) -> Self {
        self.v_pump_plus = NoiseSpectrum::vacuum().plus(excess.clone());
        self.v_pump_minus = NoiseSpectrum::vacuum().plus(excess);
        self
    }

    /// Technical seed noise added on top of the seed vacuum, both
    /// quadratures.
    pub fn with_seed_excess(mut self, excess: NoiseSpectrum<T>) -> Self {
        self.v_seed_plus = NoiseSpectrum::vacuum().plus(excess.clone());
        self.v_seed_minus = NoiseSpectrum::vacuum().plus(excess);
        self
    }

    /// Replace the detuning fluctuation spectrum.
    pub fn with_detuning(mut self, spectrum: NoiseSpectrum<T>) -> Self {
        self.v_detuning = spectrum;
        self
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        self.v_seed_plus.validate()?;
        self.v_seed_minus.validate()?;
        self.v_pump_plus.validate()?;
        self.v_pump_minus.validate()?;
        self.v_loss.validate()?;
        self.v_vac.validate()?;
        self.v_detuning.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_vacuum_with_zero_detuning() {
        let n = NoiseInputs::<f64>::default();
        for w in [0.0, 1.0, 1e6] {
            assert_eq!(n.v_seed_plus.eval(w), 1.0);
            assert_eq!(n.v_pump_minus.eval(w), 1.0);
            assert_eq!(n.v_loss.eval(w), 1.0);
            assert_eq!(n.v_vac.eval(w), 1.0);
            assert_eq!(n.v_detuning.eval(w), 0.0);
        }
    }

    #[test]
    fn acoustic_shape_rolls_off() {
        let s = NoiseSpectrum::<f64>::Acoustic {
            magnitude: 100.0,
            corner: 10.0,
        };
        assert!((s.eval(0.0) - 100.0).abs() < 1e-12);
        assert!((s.eval(10.0) - 50.0).abs() < 1e-12);
        // one decade above the corner: down by ~100x
        assert!((s.eval(100.0) - 100.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn band_is_zero_outside() {
        let s = NoiseSpectrum::Band {
            magnitude: 3.0,
            lo: 1.0,
            hi: 2.0,
        };
        assert_eq!(s.eval(0.5), 0.0);
        assert_eq!(s.eval(1.5), 3.0);
        assert_eq!(s.eval(2.5), 0.0);
    }

    #[test]
    fn line_peaks_at_center() {
        let s = NoiseSpectrum::<f64>::Line {
            magnitude: 8.0,
            center: 100.0,
            width: 4.0,
        };
        assert!((s.eval(100.0) - 8.0).abs() < 1e-12);
        // half power at +- half width
        assert!((s.eval(102.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sum_adds_and_scales() {
        let s = NoiseSpectrum::vacuum().plus(NoiseSpectrum::Flat { level: 2.0 });
        assert_eq!(s.eval(7.0), 3.0);
        assert_eq!(s.scaled(10.0).eval(7.0), 30.0);
    }

    #[test]
    fn negative_level_rejected() {
        let s = NoiseSpectrum::Flat { level: -1.0_f64 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn bad_band_rejected() {
        let s = NoiseSpectrum::Band {
            magnitude: 1.0_f64,
            lo: 5.0,
            hi: 2.0,
        };
        assert!(s.validate().is_err());
    }
}
