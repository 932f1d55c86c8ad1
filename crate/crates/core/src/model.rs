//! Linearized quadrature-variance model of a singly resonant, on-resonance
//! OPO/OPA below threshold.
//!
//! The output quadrature variances, normalized to shot noise, are
//!
//! ```text
//! V±(ω) = [ C_s·V_s±(ω) + C_l·V_l±(ω) + C_v±(ω)·V_v±(ω)
//!           + α²·( C_p·V_p±(ω) + C_Δ±·V_Δ(ω) ) ] / |D±(ω)|²
//! ```
//!
//! with
//!
//! ```text
//! D±(ω)  = iω + κ_a + [3 (+) | 1 (−)]·ε²α²/(2κ_b) ∓ εβ
//! C_s    = 4 κ_in^a κ_out^a
//! C_l    = 4 κ_l^a  κ_out^a
//! C_v±   = |2κ_out^a − D±(ω)|²
//! C_p    = 4 κ_out^a κ_in^b (ε/κ_b)²
//! C_Δ±   = 8 κ_out^a · [0 (+) | 1 (−)]
//! ```
//!
//! α (= √ of the mean intracavity fundamental photon number) and β (the
//! intracavity second-harmonic amplitude) are real and nonnegative; field
//! phases are absorbed into the quadrature convention. The pump and detuning
//! terms carry the α² prefactor: an unseeded cavity (α = 0) is immune to
//! both noise sources to first order, which is the operational difference
//! between OPO and OPA behavior at low sideband frequencies.
//!
//! Threshold (εβ = κ_a) is rejected at construction; every `CavityParams`
//! value describes a below-threshold device and all operations on it are
//! total. Everything here is a pure function of immutable inputs and safe
//! to call concurrently.

use num_complex::Complex;
use thiserror::Error;

use crate::noise::{NoiseError, NoiseInputs};
use crate::units::photon_flux;
use crate::{real, Real};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("decay rate `{name}` must be finite and >= 0, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("total fundamental decay rate kappa_a must be > 0")]
    ZeroKappaA,
    #[error("kappa_in_b ({kappa_in_b}) must not exceed kappa_b ({kappa_b})")]
    PumpCouplerExceedsTotal { kappa_in_b: f64, kappa_b: f64 },
    #[error("at or above threshold: eps*beta = {eps_beta} >= kappa_a = {kappa_a}")]
    AboveThreshold { eps_beta: f64, kappa_a: f64 },
    #[error("field amplitude `{name}` must be finite and >= 0, got {value}")]
    InvalidAmplitude { name: &'static str, value: f64 },
    #[error("classical gain must be finite and >= 1, got {0}")]
    InvalidGain(f64),
    #[error("classical gain > 1 requires a nonzero nonlinear coupling")]
    GainWithoutCoupling,
    #[error("seed power must be finite and >= 0, got {0} W")]
    InvalidSeedPower(f64),
    #[error("carrier frequency must be finite and > 0, got {0} rad/s")]
    InvalidCarrier(f64),
    #[error("frequency grid must not be empty")]
    EmptyGrid,
    #[error("frequency grid must be finite and strictly ascending (index {0})")]
    NonAscendingGrid(usize),
    #[error("variance must be finite and > 0, got {value} at index {index}")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Amplitude (+) or phase (−) quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    Amplitude,
    Phase,
}

impl Quadrature {
    pub const BOTH: [Quadrature; 2] = [Quadrature::Amplitude, Quadrature::Phase];

    /// The `[3 | 1]` bracket in the denominator.
    fn pump_depletion_factor<T: Real>(self) -> T {
        match self {
            Quadrature::Amplitude => real(3.0),
            Quadrature::Phase => T::one(),
        }
    }

    /// The `∓` sign on εβ in the denominator: the amplified (+) quadrature
    /// gets the narrower denominator.
    fn gain_sign<T: Real>(self) -> T {
        match self {
            Quadrature::Amplitude => -T::one(),
            Quadrature::Phase => T::one(),
        }
    }

    /// The `[0 | 1]` bracket of the detuning coupling.
    fn detuning_factor<T: Real>(self) -> T {
        match self {
            Quadrature::Amplitude => T::zero(),
            Quadrature::Phase => T::one(),
        }
    }
}

/// Decay rates and nonlinear coupling of the cavity, without the
/// intracavity field amplitudes.
///
/// All rates are angular (rad/s). `epsilon` is the nonlinear coupling per
/// unit second-harmonic amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityRates<T> {
    pub kappa_in_a: T,
    pub kappa_out_a: T,
    pub kappa_l_a: T,
    pub kappa_b: T,
    pub kappa_in_b: T,
    pub epsilon: T,
}

impl<T: Real> CavityRates<T> {
    /// Total fundamental decay rate κ_a = κ_in + κ_out + κ_l.
    pub fn kappa_a(&self) -> T {
        self.kappa_in_a + self.kappa_out_a + self.kappa_l_a
    }

    fn validate(&self) -> Result<(), ModelError> {
        let check = |name: &'static str, value: T| -> Result<(), ModelError> {
            if value.is_finite() && value >= T::zero() {
                Ok(())
            } else {
                Err(ModelError::InvalidRate {
                    name,
                    value: value.to_f64().unwrap_or(f64::NAN),
                })
            }
        };
        check("kappa_in_a", self.kappa_in_a)?;
        check("kappa_out_a", self.kappa_out_a)?;
        check("kappa_l_a", self.kappa_l_a)?;
        check("kappa_b", self.kappa_b)?;
        check("kappa_in_b", self.kappa_in_b)?;
        check("epsilon", self.epsilon)?;
        if self.kappa_a() <= T::zero() {
            return Err(ModelError::ZeroKappaA);
        }
        if self.kappa_b <= T::zero() {
            return Err(ModelError::InvalidRate {
                name: "kappa_b",
                value: self.kappa_b.to_f64().unwrap_or(f64::NAN),
            });
        }
        if self.kappa_in_b > self.kappa_b {
            return Err(ModelError::PumpCouplerExceedsTotal {
                kappa_in_b: self.kappa_in_b.to_f64().unwrap_or(f64::NAN),
                kappa_b: self.kappa_b.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

/// One validated below-threshold OPO/OPA configuration.
///
/// Construction enforces the invariants (nonnegative rates, κ_a > 0,
/// κ_in^b ≤ κ_b, εβ < κ_a, α ≥ 0, β ≥ 0); fields are immutable afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams<T> {
    rates: CavityRates<T>,
    alpha: T,
    beta: T,
}

impl<T: Real> CavityParams<T> {
    pub fn new(rates: CavityRates<T>, alpha: T, beta: T) -> Result<Self, ModelError> {
        rates.validate()?;
        for (name, value) in [("alpha", alpha), ("beta", beta)] {
            if !(value.is_finite() && value >= T::zero()) {
                return Err(ModelError::InvalidAmplitude {
                    name,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let eps_beta = rates.epsilon * beta;
        if eps_beta >= rates.kappa_a() || eps_beta.is_nan() {
            return Err(ModelError::AboveThreshold {
                eps_beta: eps_beta.to_f64().unwrap_or(f64::NAN),
                kappa_a: rates.kappa_a().to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(CavityParams { rates, alpha, beta })
    }

    /// Unseeded (OPO) configuration: α = 0.
    pub fn opo(rates: CavityRates<T>, beta: T) -> Result<Self, ModelError> {
        CavityParams::new(rates, T::zero(), beta)
    }

    pub fn rates(&self) -> &CavityRates<T> {
        &self.rates
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn kappa_a(&self) -> T {
        self.rates.kappa_a()
    }

    /// Parametric rate εβ (rad/s).
    pub fn eps_beta(&self) -> T {
        self.rates.epsilon * self.beta
    }
}

/// Coupling coefficients of the noise inputs into the output field at one
/// sideband frequency and quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCoefficients<T> {
    pub c_s: T,
    pub c_l: T,
    pub c_v: T,
    pub c_p: T,
    pub c_delta: T,
}

/// Cavity response denominator D±(ω).
pub fn denominator<T: Real>(params: &CavityParams<T>, quad: Quadrature, omega: T) -> Complex<T> {
    let r = params.rates();
    let two = real::<T>(2.0);
    let pump_term =
        quad.pump_depletion_factor::<T>() * r.epsilon * r.epsilon * params.alpha * params.alpha
            / (two * r.kappa_b);
    let re = params.kappa_a() + pump_term + quad.gain_sign::<T>() * params.eps_beta();
    Complex::new(re, omega)
}

/// Coupling coefficients at one sideband frequency and quadrature.
pub fn coupling_coefficients<T: Real>(
    params: &CavityParams<T>,
    quad: Quadrature,
    omega: T,
) -> CouplingCoefficients<T> {
    let r = params.rates();
    let four = real::<T>(4.0);
    let eight = real::<T>(8.0);
    let d = denominator(params, quad, omega);
    let two_kout = real::<T>(2.0) * r.kappa_out_a;
    let eps_over_kb = r.epsilon / r.kappa_b;
    CouplingCoefficients {
        c_s: four * r.kappa_in_a * r.kappa_out_a,
        c_l: four * r.kappa_l_a * r.kappa_out_a,
        c_v: (Complex::new(two_kout, T::zero()) - d).norm_sqr(),
        c_p: four * r.kappa_out_a * r.kappa_in_b * eps_over_kb * eps_over_kb,
        c_delta: eight * r.kappa_out_a * quad.detuning_factor::<T>(),
    }
}

/// Output variance of one quadrature at one sideband frequency.
pub fn quadrature_variance<T: Real>(
    params: &CavityParams<T>,
    noise: &NoiseInputs<T>,
    quad: Quadrature,
    omega: T,
) -> T {
    let c = coupling_coefficients(params, quad, omega);
    let d = denominator(params, quad, omega);
    let (v_s, v_p) = match quad {
        Quadrature::Amplitude => (noise.v_seed_plus.eval(omega), noise.v_pump_plus.eval(omega)),
        Quadrature::Phase => (
            noise.v_seed_minus.eval(omega),
            noise.v_pump_minus.eval(omega),
        ),
    };
    let alpha_sq = params.alpha * params.alpha;
    let numerator = c.c_s * v_s
        + c.c_l * noise.v_loss.eval(omega)
        + c.c_v * noise.v_vac.eval(omega)
        + alpha_sq * (c.c_p * v_p + c.c_delta * noise.v_detuning.eval(omega));
    numerator / d.norm_sqr()
}

/// Quadrature variance spectra V⁺(ω), V⁻(ω) on an ascending frequency grid,
/// normalized to shot noise = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpectrum<T> {
    frequencies: Vec<T>,
    v_plus: Vec<T>,
    v_minus: Vec<T>,
}

impl<T: Real> QuadratureSpectrum<T> {
    pub fn new(frequencies: Vec<T>, v_plus: Vec<T>, v_minus: Vec<T>) -> Result<Self, ModelError> {
        validate_grid(&frequencies)?;
        assert_eq!(frequencies.len(), v_plus.len());
        assert_eq!(frequencies.len(), v_minus.len());
        for (i, v) in v_plus.iter().chain(v_minus.iter()).enumerate() {
            if !(v.is_finite() && *v > T::zero()) {
                return Err(ModelError::NonPositiveVariance {
                    index: i % frequencies.len(),
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(QuadratureSpectrum {
            frequencies,
            v_plus,
            v_minus,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Sideband angular frequencies (rad/s).
    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn v_plus(&self) -> &[T] {
        &self.v_plus
    }

    pub fn v_minus(&self) -> &[T] {
        &self.v_minus
    }

    /// Iterate `(ω, V⁺, V⁻)`.
    pub fn iter(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.frequencies
            .iter()
            .zip(self.v_plus.iter().zip(self.v_minus.iter()))
            .map(|(&w, (&p, &m))| (w, p, m))
    }
}

fn validate_grid<T: Real>(grid: &[T]) -> Result<(), ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if !grid[0].is_finite() {
        return Err(ModelError::NonAscendingGrid(0));
    }
    for i in 1..grid.len() {
        if !grid[i].is_finite() || grid[i] <= grid[i - 1] {
            return Err(ModelError::NonAscendingGrid(i));
        }
    }
    Ok(())
}

/// Evaluate both quadrature spectra on an ascending grid of sideband
/// angular frequencies (rad/s).
///
/// Threshold is enforced when `params` is constructed, so the denominator
/// cannot vanish on the grid.
pub fn squeezing_spectrum<T: Real>(
    params: &CavityParams<T>,
    noise: &NoiseInputs<T>,
    grid: &[T],
) -> Result<QuadratureSpectrum<T>, ModelError> {
    validate_grid(grid)?;
    noise.validate()?;
    let mut v_plus = Vec::with_capacity(grid.len());
    let mut v_minus = Vec::with_capacity(grid.len());
    for &omega in grid {
        v_plus.push(quadrature_variance(
            params,
            noise,
            Quadrature::Amplitude,
            omega,
        ));
        v_minus.push(quadrature_variance(params, noise, Quadrature::Phase, omega));
    }
    QuadratureSpectrum::new(grid.to_vec(), v_plus, v_minus)
}

/// Solve the intracavity field amplitudes for a device pumped to a given
/// classical intensity gain and seeded with `seed_power` watts at carrier
/// `carrier_omega` (rad/s).
///
/// The gain convention (single-ended standing-wave cavity, amplified
/// quadrature at ω = 0) is `G = ((κ_a + εβ)/(κ_a − εβ))²`, inverted here as
/// `εβ = κ_a (√G − 1)/(√G + 1)`; [`classical_gain`] is its exact inverse.
/// The amplified steady-state seed field is
/// `α = √(2κ_in^a) · √(P/ħω₀) / (κ_a − εβ)`.
pub fn intracavity_fields<T: Real>(
    rates: &CavityRates<T>,
    classical_gain: T,
    seed_power_w: T,
    carrier_omega: T,
) -> Result<CavityParams<T>, ModelError> {
    rates.validate()?;
    if !(classical_gain.is_finite() && classical_gain >= T::one()) {
        return Err(ModelError::InvalidGain(
            classical_gain.to_f64().unwrap_or(f64::NAN),
        ));
    }
    if !(seed_power_w.is_finite() && seed_power_w >= T::zero()) {
        return Err(ModelError::InvalidSeedPower(
            seed_power_w.to_f64().unwrap_or(f64::NAN),
        ));
    }
    if !(carrier_omega.is_finite() && carrier_omega > T::zero()) {
        return Err(ModelError::InvalidCarrier(
            carrier_omega.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let kappa_a = rates.kappa_a();
    let root_g = classical_gain.sqrt();
    let eps_beta = kappa_a * (root_g - T::one()) / (root_g + T::one());
    let beta = if eps_beta == T::zero() {
        T::zero()
    } else if rates.epsilon > T::zero() {
        eps_beta / rates.epsilon
    } else {
        return Err(ModelError::GainWithoutCoupling);
    };
    let alpha = if seed_power_w == T::zero() {
        T::zero()
    } else {
        let flux = photon_flux(seed_power_w, carrier_omega);
        (real::<T>(2.0) * rates.kappa_in_a).sqrt() * flux.sqrt() / (kappa_a - eps_beta)
    };
    CavityParams::new(*rates, alpha, beta)
}

/// Classical intensity gain of the amplified quadrature at ω = 0:
/// `G = ((κ_a + εβ)/(κ_a − εβ))²`, the inverse of the mapping used by
/// [`intracavity_fields`].
pub fn classical_gain<T: Real>(params: &CavityParams<T>) -> T {
    let kappa_a = params.kappa_a();
    let eps_beta = params.eps_beta();
    let ratio = (kappa_a + eps_beta) / (kappa_a - eps_beta);
    ratio * ratio
}

/// Distance to threshold as the ratio εβ/κ_a ∈ [0, 1).
pub fn threshold_margin<T: Real>(params: &CavityParams<T>) -> T {
    params.eps_beta() / params.kappa_a()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::carrier_omega;

    fn unit_rates(kappa_in: f64, kappa_out: f64, kappa_l: f64, epsilon: f64) -> CavityRates<f64> {
        CavityRates {
            kappa_in_a: kappa_in,
            kappa_out_a: kappa_out,
            kappa_l_a: kappa_l,
            kappa_b: 10.0,
            kappa_in_b: 5.0,
            epsilon,
        }
    }

    #[test]
    fn denominator_without_nonlinearity() {
        // eps = 0, kappa_a = 1, omega = 0 -> D = kappa_a
        let p = CavityParams::new(unit_rates(0.2, 0.5, 0.3, 0.0), 0.0, 0.0).unwrap();
        let d = denominator(&p, Quadrature::Amplitude, 0.0);
        assert_eq!(d, Complex::new(1.0, 0.0));
    }

    #[test]
    fn denominator_gain_signs() {
        // alpha = 0, kappa_a = 1, eps*beta = 0.5 -> D+(0) = 0.5, D-(0) = 1.5
        let p = CavityParams::opo(unit_rates(0.2, 0.5, 0.3, 1.0), 0.5).unwrap();
        assert_eq!(
            denominator(&p, Quadrature::Amplitude, 0.0),
            Complex::new(0.5, 0.0)
        );
        assert_eq!(
            denominator(&p, Quadrature::Phase, 0.0),
            Complex::new(1.5, 0.0)
        );
    }

    #[test]
    fn denominator_full_formula() {
        // kappa_a = 1, eps*beta = 0.5, eps^2 alpha^2/(2 kappa_b) = 0.1, omega = 2,
        // amplitude quadrature: D = (1 + 0.3 - 0.5) + 2i = 0.8 + 2i.
        // Frozen from an independent symbolic evaluation.
        let rates = CavityRates {
            kappa_in_a: 0.2,
            kappa_out_a: 0.5,
            kappa_l_a: 0.3,
            kappa_b: 10.0,
            kappa_in_b: 5.0,
            epsilon: 1.0,
        };
        // eps^2 alpha^2 / (2 kappa_b) = alpha^2/20 = 0.1 -> alpha^2 = 2
        let p = CavityParams::new(rates, 2.0_f64.sqrt(), 0.5).unwrap();
        let d = denominator(&p, Quadrature::Amplitude, 2.0);
        assert!((d.re - 0.8).abs() < 1e-12);
        assert!((d.im - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_no_input_coupler() {
        let p = CavityParams::opo(unit_rates(0.0, 0.7, 0.3, 1.0), 0.2).unwrap();
        let c = coupling_coefficients(&p, Quadrature::Amplitude, 0.3);
        assert_eq!(c.c_s, 0.0);
    }

    #[test]
    fn coupling_detuning_vanishes_for_amplitude() {
        let p = CavityParams::opo(unit_rates(0.1, 0.7, 0.2, 1.0), 0.2).unwrap();
        let c_plus = coupling_coefficients(&p, Quadrature::Amplitude, 0.0);
        let c_minus = coupling_coefficients(&p, Quadrature::Phase, 0.0);
        assert_eq!(c_plus.c_delta, 0.0);
        assert_eq!(c_minus.c_delta, 8.0 * 0.7);
    }

    #[test]
    fn coupling_vacuum_coefficient() {
        // kappa_out = 0.4, D+(0) = 0.5 -> c_v = |0.8 - 0.5|^2 = 0.09
        let rates = unit_rates(0.3, 0.4, 0.3, 1.0);
        let p = CavityParams::opo(rates, 0.5).unwrap(); // D+(0) = 1 - 0.5 = 0.5
        let c = coupling_coefficients(&p, Quadrature::Amplitude, 0.0);
        assert!((c.c_v - 0.09).abs() < 1e-12);
    }

    #[test]
    fn passive_cavity_preserves_vacuum() {
        let p = CavityParams::new(unit_rates(0.15, 0.6, 0.25, 0.0), 0.0, 0.0).unwrap();
        let grid: Vec<f64> = (0..200).map(|i| 1e-3 * 1.1f64.powi(i)).collect();
        let spectrum = squeezing_spectrum(&p, &NoiseInputs::vacuum(), &grid).unwrap();
        for (_, vp, vm) in spectrum.iter() {
            assert!((vp - 1.0).abs() < 1e-12);
            assert!((vm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lossless_opo_minimum_uncertainty_at_dc() {
        // kappa_out = kappa_a, eps*beta = 0.5 kappa_a:
        // V± = 1 ± 4 κ εβ / (κ ∓ εβ)², product exactly 1 (closed form
        // verified symbolically).
        let rates = unit_rates(0.0, 1.0, 0.0, 1.0);
        let p = CavityParams::opo(rates, 0.5).unwrap();
        let spectrum = squeezing_spectrum(&p, &NoiseInputs::vacuum(), &[1e-9]).unwrap();
        let v_plus = spectrum.v_plus()[0];
        let v_minus = spectrum.v_minus()[0];
        assert!((v_plus - (1.0 + 4.0 * 0.5 / (0.5 * 0.5))).abs() < 1e-9);
        assert!((v_minus - (1.0 - 4.0 * 0.5 / (1.5 * 1.5))).abs() < 1e-9);
        assert!((v_plus * v_minus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opo_ignores_pump_and_detuning_noise() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        let p = CavityParams::opo(rates, 0.4).unwrap();
        let grid: Vec<f64> = (1..100).map(|i| i as f64 * 0.05).collect();
        let quiet = NoiseInputs::vacuum();
        let loud = NoiseInputs::vacuum()
            .with_pump_excess(NoiseSpectrumF::Flat { level: 1e6 })
            .with_detuning(NoiseSpectrumF::Flat { level: 1e6 });
        let a = squeezing_spectrum(&p, &quiet, &grid).unwrap();
        let b = squeezing_spectrum(&p, &loud, &grid).unwrap();
        for i in 0..grid.len() {
            assert_eq!(a.v_plus()[i].to_bits(), b.v_plus()[i].to_bits());
            assert_eq!(a.v_minus()[i].to_bits(), b.v_minus()[i].to_bits());
        }
    }

    type NoiseSpectrumF = crate::noise::NoiseSpectrum<f64>;

    #[test]
    fn threshold_rejected_at_construction() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        assert!(matches!(
            CavityParams::opo(rates, 1.0),
            Err(ModelError::AboveThreshold { .. })
        ));
        assert!(matches!(
            CavityParams::opo(rates, 1.5),
            Err(ModelError::AboveThreshold { .. })
        ));
        assert!(CavityParams::opo(rates, 0.999).is_ok());
    }

    #[test]
    fn unseeded_cavity_has_zero_alpha() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        let p = intracavity_fields(&rates, 5.0, 0.0, carrier_omega(1064e-9)).unwrap();
        assert_eq!(p.alpha(), 0.0);
        assert!(p.beta() > 0.0);
    }

    #[test]
    fn unity_gain_means_no_parametric_rate() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        let p = intracavity_fields(&rates, 1.0, 1e-9, carrier_omega(1064e-9)).unwrap();
        assert_eq!(p.eps_beta(), 0.0);
        assert!(p.alpha() > 0.0);
    }

    #[test]
    fn gain_five_sets_margin() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        let p = intracavity_fields(&rates, 5.0, 0.0, carrier_omega(1064e-9)).unwrap();
        let margin = threshold_margin(&p);
        assert!((margin - 0.381_966_011_25).abs() < 1e-9);
    }

    #[test]
    fn gain_round_trips_through_fields() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        for g in [1.0, 1.5, 5.0, 40.0, 900.0] {
            let p = intracavity_fields(&rates, g, 0.0, carrier_omega(1064e-9)).unwrap();
            assert!(
                (classical_gain(&p) - g).abs() / g < 1e-12,
                "gain {g} round-tripped to {}",
                classical_gain(&p)
            );
        }
    }

    #[test]
    fn gain_diverges_toward_threshold() {
        let rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        let p = CavityParams::opo(rates, 0.9999).unwrap();
        assert!(classical_gain(&p) > 1e6);
        assert!(matches!(
            intracavity_fields(&rates, f64::INFINITY, 0.0, 1.0),
            Err(ModelError::InvalidGain(_))
        ));
        // a gain so large that eps*beta rounds onto kappa_a is a threshold
        // violation, not a panic
        assert!(matches!(
            intracavity_fields(&rates, 1e40, 0.0, 1.0),
            Err(ModelError::AboveThreshold { .. })
        ));
    }

    #[test]
    fn threshold_margin_cases() {
        let rates = unit_rates(0.2, 0.5, 0.3, 0.0);
        let p = CavityParams::new(rates, 0.0, 5.0).unwrap();
        assert_eq!(threshold_margin(&p), 0.0);
        let rates = unit_rates(0.2, 0.5, 0.3, 1.0);
        let p = CavityParams::opo(rates, 0.5).unwrap();
        assert!((threshold_margin(&p) - 0.5).abs() < 1e-15);
        let p = CavityParams::opo(rates, 0.999).unwrap();
        assert!((threshold_margin(&p) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn gain_without_coupling_rejected() {
        let rates = unit_rates(0.1, 0.8, 0.1, 0.0);
        assert!(matches!(
            intracavity_fields(&rates, 5.0, 0.0, 1.0),
            Err(ModelError::GainWithoutCoupling)
        ));
    }

    #[test]
    fn spectrum_rejects_bad_grids() {
        let p = CavityParams::opo(unit_rates(0.1, 0.8, 0.1, 1.0), 0.4).unwrap();
        let noise = NoiseInputs::vacuum();
        assert!(matches!(
            squeezing_spectrum(&p, &noise, &[]),
            Err(ModelError::EmptyGrid)
        ));
        assert!(matches!(
            squeezing_spectrum(&p, &noise, &[1.0, 1.0]),
            Err(ModelError::NonAscendingGrid(1))
        ));
        assert!(matches!(
            squeezing_spectrum(&p, &noise, &[2.0, 1.0]),
            Err(ModelError::NonAscendingGrid(1))
        ));
    }

    #[test]
    fn negative_rate_rejected() {
        let mut rates = unit_rates(0.1, 0.8, 0.1, 1.0);
        rates.kappa_l_a = -0.1;
        assert!(matches!(
            CavityParams::opo(rates, 0.1),
            Err(ModelError::InvalidRate {
                name: "kappa_l_a",
                ..
            })
        ));
    }

    #[test]
    fn works_in_f32_too() {
        let rates = CavityRates::<f32> {
            kappa_in_a: 0.0,
            kappa_out_a: 1.0,
            kappa_l_a: 0.0,
            kappa_b: 10.0,
            kappa_in_b: 5.0,
            epsilon: 1.0,
        };
        let p = CavityParams::opo(rates, 0.5).unwrap();
        let spectrum = squeezing_spectrum(&p, &NoiseInputs::vacuum(), &[0.5f32]).unwrap();
        let product = spectrum.v_plus()[0] * spectrum.v_minus()[0];
        assert!((product - 1.0).abs() < 1e-5);
    }
}
