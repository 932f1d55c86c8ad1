//! Homodyne detection chain and its inversion.
//!
//! The chain lumps photodiode quantum efficiency, homodyne fringe
//! visibility (entering as visibility squared) and any number of
//! propagation losses into one total efficiency η. A variance normalized
//! to shot noise passes through as the usual beam-splitter mix with vacuum,
//!
//! ```text
//! V_meas = η·V_source + (1 − η) + V_elec
//! ```
//!
//! with an additive, phase-independent electronic noise floor. The inverse
//! map recovers source-level squeezing from a measured value and errors out
//! when the measurement sits at or below the vacuum-plus-electronics floor,
//! which signals an overestimated efficiency or unsubtracted noise.

use thiserror::Error;

use crate::{real, Real};

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("quantum efficiency must be in (0, 1], got {0}")]
    InvalidQuantumEfficiency(f64),
    #[error("fringe visibility must be in (0, 1], got {0}")]
    InvalidVisibility(f64),
    #[error("propagation loss {index} must be in [0, 1), got {value}")]
    InvalidLoss { index: usize, value: f64 },
    #[error("electronic noise must be finite and >= 0, got {0}")]
    InvalidElectronicNoise(f64),
    #[error("homodyne phase must be finite")]
    InvalidPhase,
    #[error("variance must be finite and > 0, got {0}")]
    NonPositiveVariance(f64),
    #[error(
        "measured variance {measured} is not above the vacuum-plus-electronics floor {floor}; \
         the inferred source variance would be unphysical"
    )]
    UnphysicalMeasurement { measured: f64, floor: f64 },
}

/// Losses and noise between the squeezer output and the recorded variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionChain<T> {
    quantum_efficiency: T,
    fringe_visibility: T,
    propagation_losses: Vec<T>,
    electronic_noise_rel: T,
    homodyne_phase: T,
}

impl<T: Real> DetectionChain<T> {
    pub fn new(
        quantum_efficiency: T,
        fringe_visibility: T,
        propagation_losses: Vec<T>,
        electronic_noise_rel: T,
        homodyne_phase: T,
    ) -> Result<Self, DetectionError> {
        let in_unit = |x: T| x.is_finite() && x > T::zero() && x <= T::one();
        if !in_unit(quantum_efficiency) {
            return Err(DetectionError::InvalidQuantumEfficiency(
                quantum_efficiency.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !in_unit(fringe_visibility) {
            return Err(DetectionError::InvalidVisibility(
                fringe_visibility.to_f64().unwrap_or(f64::NAN),
            ));
        }
        for (index, &loss) in propagation_losses.iter().enumerate() {
            if !(loss.is_finite() && loss >= T::zero() && loss < T::one()) {
                return Err(DetectionError::InvalidLoss {
                    index,
                    value: loss.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if !(electronic_noise_rel.is_finite() && electronic_noise_rel >= T::zero()) {
            return Err(DetectionError::InvalidElectronicNoise(
                electronic_noise_rel.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !homodyne_phase.is_finite() {
            return Err(DetectionError::InvalidPhase);
        }
        Ok(DetectionChain {
            quantum_efficiency,
            fringe_visibility,
            propagation_losses,
            electronic_noise_rel,
            homodyne_phase,
        })
    }

    /// Lossless, noise-free chain measuring at phase θ = 0.
    pub fn ideal() -> Self {
        DetectionChain {
            quantum_efficiency: T::one(),
            fringe_visibility: T::one(),
            propagation_losses: Vec::new(),
            electronic_noise_rel: T::zero(),
            homodyne_phase: T::zero(),
        }
    }

    pub fn quantum_efficiency(&self) -> T {
        self.quantum_efficiency
    }

    pub fn fringe_visibility(&self) -> T {
        self.fringe_visibility
    }

    pub fn propagation_losses(&self) -> &[T] {
        &self.propagation_losses
    }

    pub fn electronic_noise_rel(&self) -> T {
        self.electronic_noise_rel
    }

    pub fn homodyne_phase(&self) -> T {
        self.homodyne_phase
    }

    /// Copy of the chain with the electronic noise floor removed, for data
    /// that has already been noise-subtracted.
    pub fn without_electronic_noise(&self) -> Self {
        let mut chain = self.clone();
        chain.electronic_noise_rel = T::zero();
        chain
    }
}

/// A pair of measured quadrature variances with an optional one-sigma
/// uncertainty on each value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredVariancePair<T> {
    pub v_plus_meas: T,
    pub v_minus_meas: T,
    pub uncertainty: Option<T>,
}

impl<T: Real> MeasuredVariancePair<T> {
    pub fn new(
        v_plus_meas: T,
        v_minus_meas: T,
        uncertainty: Option<T>,
    ) -> Result<Self, DetectionError> {
        for v in [v_plus_meas, v_minus_meas] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(DetectionError::NonPositiveVariance(
                    v.to_f64().unwrap_or(f64::NAN),
                ));
            }
        }
        Ok(MeasuredVariancePair {
            v_plus_meas,
            v_minus_meas,
            uncertainty,
        })
    }
}

/// Variance seen by a homodyne detector at local-oscillator phase θ, for a
/// quadrature-aligned state with no cross-quadrature correlations:
/// `V(θ) = V⁺·cos²θ + V⁻·sin²θ`.
pub fn homodyne_variance<T: Real>(v_plus: T, v_minus: T, theta: T) -> T {
    let c = theta.cos();
    let s = theta.sin();
    v_plus * c * c + v_minus * s * s
}

/// Total detection efficiency η = QE · visibility² · Π(1 − loss_i).
pub fn total_efficiency<T: Real>(chain: &DetectionChain<T>) -> T {
    let vis_sq = chain.fringe_visibility * chain.fringe_visibility;
    chain
        .propagation_losses
        .iter()
        .fold(chain.quantum_efficiency * vis_sq, |eta, &loss| {
            eta * (T::one() - loss)
        })
}

/// Forward model of the chain: `η·V + (1 − η) + V_elec`.
pub fn apply_chain<T: Real>(v_source: T, chain: &DetectionChain<T>) -> T {
    let eta = total_efficiency(chain);
    eta * v_source + (T::one() - eta) + chain.electronic_noise_rel
}

/// Exact inverse of [`apply_chain`].
///
/// Fails when the measurement is not above the `(1 − η) + V_elec` floor; a
/// source variance of zero or below is unphysical.
pub fn infer_source<T: Real>(v_meas: T, chain: &DetectionChain<T>) -> Result<T, DetectionError> {
    if !(v_meas.is_finite() && v_meas > T::zero()) {
        return Err(DetectionError::NonPositiveVariance(
            v_meas.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let eta = total_efficiency(chain);
    let floor = (T::one() - eta) + chain.electronic_noise_rel;
    if v_meas <= floor {
        return Err(DetectionError::UnphysicalMeasurement {
            measured: v_meas.to_f64().unwrap_or(f64::NAN),
            floor: floor.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((v_meas - floor) / eta)
}

/// One-sigma uncertainty of [`infer_source`] for a measurement uncertainty
/// `sigma_meas`, propagated to first order.
pub fn infer_source_sigma<T: Real>(sigma_meas: T, chain: &DetectionChain<T>) -> T {
    sigma_meas / total_efficiency(chain)
}

/// Purity V⁺·V⁻ of a state; 1 for a minimum-uncertainty state. Values below
/// 1 are unphysical (see [`purity_is_physical`]) but are returned as-is.
pub fn purity<T: Real>(v_plus: T, v_minus: T) -> T {
    v_plus * v_minus
}

/// Whether a purity value is physically allowed (≥ 1, with a small
/// numerical tolerance).
pub fn purity_is_physical<T: Real>(p: T) -> bool {
    p >= T::one() - real::<T>(1e-9)
}

/// First-order uncertainty of the purity product.
pub fn purity_sigma<T: Real>(v_plus: T, sigma_plus: T, v_minus: T, sigma_minus: T) -> T {
    let a = v_minus * sigma_plus;
    let b = v_plus * sigma_minus;
    (a * a + b * b).sqrt()
}

/// Noise power ratio to dB: `10·log₁₀(v)`.
pub fn to_db<T: Real>(v: T) -> T {
    real::<T>(10.0) * v.log10()
}

/// Inverse of [`to_db`].
pub fn from_db<T: Real>(db: T) -> T {
    real::<T>(10.0).powf(db / real::<T>(10.0))
}

/// Measured variance versus homodyne phase over `theta_grid`, i.e. the
/// fringe scanned in the experiment: each point is
/// `apply_chain(homodyne_variance(V⁺, V⁻, θ))`.
pub fn phase_scan<T: Real>(
    spectrum_point: (T, T),
    chain: &DetectionChain<T>,
    theta_grid: &[T],
) -> Vec<(T, T)> {
    let (v_plus, v_minus) = spectrum_point;
    theta_grid
        .iter()
        .map(|&theta| {
            (
                theta,
                apply_chain(homodyne_variance(v_plus, v_minus, theta), chain),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn bench_chain(elec: f64) -> DetectionChain<f64> {
        // QE, visibility and isolator loss of the reference bench.
        DetectionChain::new(0.93, 0.965, vec![0.09], elec, 0.0).unwrap()
    }

    #[test]
    fn homodyne_selects_quadratures() {
        assert_eq!(homodyne_variance(4.0, 0.25, 0.0), 4.0);
        let v = homodyne_variance(4.0, 0.25, FRAC_PI_2);
        assert!((v - 0.25).abs() < 1e-12);
        let v = homodyne_variance(4.0, 0.25, FRAC_PI_4);
        assert!((v - 2.125).abs() < 1e-12);
    }

    #[test]
    fn total_efficiency_components() {
        let ideal = DetectionChain::<f64>::ideal();
        assert_eq!(total_efficiency(&ideal), 1.0);
        // 0.93 * 0.965^2 * 0.91 = 0.788096
        let eta = total_efficiency(&bench_chain(0.0));
        assert!((eta - 0.788_095_717_5).abs() < 1e-9);
        let chain = DetectionChain::<f64>::new(0.93, 0.965, vec![], 0.0, 0.0).unwrap();
        assert!((total_efficiency(&chain) - 0.866_039_25).abs() < 1e-9);
    }

    #[test]
    fn apply_chain_identity_and_vacuum() {
        let ideal = DetectionChain::<f64>::ideal();
        assert_eq!(apply_chain(0.3, &ideal), 0.3);
        // loss preserves vacuum; electronics sit on top of it
        let chain = bench_chain(0.0);
        assert!((apply_chain(1.0, &chain) - 1.0).abs() < 1e-15);
        let noisy = bench_chain(0.063);
        assert!((apply_chain(1.0, &noisy) - 1.063).abs() < 1e-15);
    }

    #[test]
    fn forward_model_of_bench_source() {
        // -5.5 dB source through eta = 0.788 lands near -3.6 dB
        let chain = bench_chain(0.0);
        let v = apply_chain(from_db(-5.5), &chain);
        assert!((v - 0.434_02).abs() < 1e-4);
        assert!(to_db(v) > -4.1 && to_db(v) < -3.1);
    }

    #[test]
    fn infer_is_exact_inverse() {
        let chain = bench_chain(0.063_095_734_448);
        for v in [0.282, 1.0, 4.6, 37.0] {
            let round = infer_source(apply_chain(v, &chain), &chain).unwrap();
            assert!((round - v).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_is_fixed_point_without_electronics() {
        for eta_loss in [0.0_f64, 0.3, 0.9] {
            let chain = DetectionChain::new(1.0, 1.0, vec![eta_loss], 0.0, 0.0).unwrap();
            assert!((infer_source(1.0, &chain).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn measured_purity_infers_to_source_value() {
        // Measured pair of product 1.6 (electronic noise already
        // subtracted) infers to product ~1.24 with eta = 0.788.
        let chain = bench_chain(0.0);
        let v_minus_meas = 0.434_019_834_340_461_2;
        let v_plus_meas = 1.6 / v_minus_meas;
        let p = purity(
            infer_source(v_plus_meas, &chain).unwrap(),
            infer_source(v_minus_meas, &chain).unwrap(),
        );
        assert!((p - 1.242_571_093_8).abs() < 1e-6);
        assert!(p > 1.2 && p < 1.4);
    }

    #[test]
    fn unphysical_measurement_rejected() {
        let chain = bench_chain(0.1);
        // floor = 1 - 0.788 + 0.1 = 0.312
        let err = infer_source(0.25, &chain).unwrap_err();
        assert!(matches!(err, DetectionError::UnphysicalMeasurement { .. }));
    }

    #[test]
    fn purity_basics() {
        assert_eq!(purity(1.0, 1.0), 1.0);
        assert!(purity_is_physical(1.0));
        assert!(purity_is_physical(1.6));
        assert!(!purity_is_physical(0.9));
    }

    #[test]
    fn db_round_trip() {
        assert_eq!(to_db(1.0_f64), 0.0);
        assert!((from_db(-5.5_f64) - 0.281_838_293_1).abs() < 1e-9);
        for v in [0.01_f64, 0.3, 1.0, 42.0] {
            assert!((from_db(to_db(v)) - v).abs() < 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn phase_scan_extrema_at_quadratures() {
        let chain = bench_chain(0.0);
        let grid: Vec<f64> = (0..=720).map(|i| i as f64 * PI / 360.0).collect();
        let scan = phase_scan((4.0, 0.25), &chain, &grid);
        let (argmin, min) = scan
            .iter()
            .cloned()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let (_, max) = scan
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        // min at pi/2 mod pi, below shot noise; max above
        let dist = (argmin % PI - FRAC_PI_2).abs();
        assert!(dist < PI / 360.0 + 1e-12);
        assert!(min < 1.0 && max > 1.0);
    }

    #[test]
    fn flat_scan_for_symmetric_state() {
        let scan = phase_scan((1.0_f64, 1.0), &DetectionChain::ideal(), &[0.0, 0.4, 1.1]);
        for (_, v) in scan {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chain_validation() {
        assert!(DetectionChain::new(0.0, 1.0, vec![], 0.0, 0.0).is_err());
        assert!(DetectionChain::new(1.1, 1.0, vec![], 0.0, 0.0).is_err());
        assert!(DetectionChain::new(1.0, 0.0, vec![], 0.0, 0.0).is_err());
        assert!(DetectionChain::new(1.0, 1.0, vec![1.0], 0.0, 0.0).is_err());
        assert!(DetectionChain::new(1.0, 1.0, vec![], -0.1, 0.0).is_err());
        assert!(DetectionChain::new(1.0, 1.0, vec![], 0.0, f64::NAN).is_err());
    }
}
