//! Discrete-time simulation of noise locking: controlling the homodyne
//! phase of a carrier-free squeezed field by dithering the local-oscillator
//! phase and demodulating the detected noise power.
//!
//! Loop structure per step of `dt`:
//!
//! 1. `θ_total = θ_ctrl + dither_amp·sin(2π f_d t) + disturbance(t)`
//! 2. noise-power meter: `V(θ_total)` with multiplicative estimation noise
//!    of relative std `1/sqrt(meter_bandwidth·dt)` (Gamma-distributed, mean
//!    preserving, as for an RMS power estimate over bandwidth·time)
//! 3. demodulation against `2·sin(2π f_d t + demod_phase)`
//! 4. single-pole lowpass at `lowpass_corner`
//! 5. integrator: `θ_ctrl -= loop_gain · error · dt`
//!
//! To first order in the dither amplitude the filtered error signal is
//! `dither_amp·dV/dθ·cos(demod_phase)`, so the loop's fixed points are the
//! extrema of `V(θ)`. A positive `loop_gain` descends to the noise minimum
//! (the squeezed quadrature); flipping its sign locks to the maximum.
//! Linearized about the minimum the loop decays at
//! `λ = 2·loop_gain·dither_amp·(V⁺−V⁻)·cos(demod_phase)`; the decay is
//! monotone while `λ ≤ 2π·lowpass_corner/4` (see [`max_monotone_gain`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::analyzer::MeasuredTrace;
use crate::detection::homodyne_variance;
use crate::{real, Real};

/// Largest number of simulation steps accepted.
pub const MAX_STEPS: usize = 10_000_000;

/// |mean settled phase − target| below which a run counts as converged.
pub const CONVERGED_MEAN_TOL_RAD: f64 = 0.02;

/// Residual RMS phase below which a run counts as converged.
pub const CONVERGED_RMS_TOL_RAD: f64 = 0.05;

/// Band around the target used for the settle-time estimate.
pub const SETTLE_BAND_RAD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum LockError {
    #[error("lock config: {0}")]
    InvalidConfig(&'static str),
    #[error("time step {dt} s violates dt < 1/(10·dither_freq) = {limit} s")]
    StepSizeViolation { dt: f64, limit: f64 },
    #[error("duration/dt = {steps} exceeds the {MAX_STEPS} step limit")]
    TooManySteps { steps: f64 },
    #[error("lock artifact frequency {freq_hz} Hz is outside the trace span")]
    ArtifactOutsideSpan { freq_hz: f64 },
    #[error("artifact power must be finite and >= 0, got {0}")]
    InvalidArtifactPower(f64),
}

/// Parameters of one noise-locking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockConfig<T> {
    /// Dither frequency (Hz).
    pub dither_freq: T,
    /// Dither amplitude (rad), small against the fringe.
    pub dither_amp: T,
    /// Demodulation phase offset (rad); 0 is in phase with the dither.
    pub demod_phase: T,
    /// Loop filter corner (Hz).
    pub lowpass_corner: T,
    /// Integrator gain (1/s per unit error). Positive locks to the noise
    /// minimum, negative to the maximum.
    pub loop_gain: T,
    /// Simulation step (s).
    pub dt: T,
    /// Simulated duration (s).
    pub duration: T,
    /// Noise-power estimation bandwidth (Hz). `infinity` gives a noiseless
    /// meter.
    pub meter_bandwidth: T,
    /// (V⁺, V⁻) of the state at the zero-span analysis frequency.
    pub variance_pair: (T, T),
    /// Homodyne phase at t = 0 (rad).
    pub initial_phase: T,
}

impl<T: Real> LockConfig<T> {
    pub fn validate(&self) -> Result<(), LockError> {
        let pos = |x: T| x.is_finite() && x > T::zero();
        if !pos(self.dither_freq) {
            return Err(LockError::InvalidConfig("dither_freq must be positive"));
        }
        if !(pos(self.dither_amp) && self.dither_amp < T::FRAC_PI_4()) {
            return Err(LockError::InvalidConfig(
                "dither_amp must be in (0, pi/4) rad",
            ));
        }
        if !self.demod_phase.is_finite() {
            return Err(LockError::InvalidConfig("demod_phase must be finite"));
        }
        if !pos(self.lowpass_corner) {
            return Err(LockError::InvalidConfig("lowpass_corner must be positive"));
        }
        if !self.loop_gain.is_finite() {
            return Err(LockError::InvalidConfig("loop_gain must be finite"));
        }
        if !pos(self.dt) || !pos(self.duration) {
            return Err(LockError::InvalidConfig("dt and duration must be positive"));
        }
        let limit = T::one() / (real::<T>(10.0) * self.dither_freq);
        if self.dt >= limit {
            return Err(LockError::StepSizeViolation {
                dt: self.dt.to_f64().unwrap_or(f64::NAN),
                limit: limit.to_f64().unwrap_or(f64::NAN),
            });
        }
        let steps = self.duration / self.dt;
        if steps > T::from_usize(MAX_STEPS).unwrap() {
            return Err(LockError::TooManySteps {
                steps: steps.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(pos(self.meter_bandwidth) || self.meter_bandwidth == T::infinity()) {
            return Err(LockError::InvalidConfig(
                "meter_bandwidth must be positive or infinite",
            ));
        }
        let (vp, vm) = self.variance_pair;
        if !(pos(vp) && pos(vm)) {
            return Err(LockError::InvalidConfig("variance pair must be positive"));
        }
        if !self.initial_phase.is_finite() {
            return Err(LockError::InvalidConfig("initial_phase must be finite"));
        }
        Ok(())
    }

    fn variance_at(&self, theta: T) -> T {
        let (vp, vm) = self.variance_pair;
        homodyne_variance(vp, vm, theta)
    }
}

/// Which extremum of `V(θ)` the loop settled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    NoiseMinimum,
    NoiseMaximum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockSample<T> {
    pub t: T,
    pub theta_total: T,
    pub theta_disturbance: T,
    pub error_signal: T,
    pub control_output: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockSummary<T> {
    pub converged: bool,
    /// The state went non-finite and the run stopped early.
    pub diverged: bool,
    pub locked_to: Option<Extremum>,
    /// Extremum phase nearest the settled mean (rad).
    pub target_phase: T,
    /// |settled mean − target| (rad).
    pub mean_offset: T,
    /// RMS of the undithered phase about the target over the settled
    /// window (rad).
    pub residual_rms: T,
    pub settle_time: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockTrace<T> {
    pub samples: Vec<LockSample<T>>,
    pub summary: LockSummary<T>,
}

/// One noise-power reading at homodyne phase θ: `V(θ)` with multiplicative
/// Gamma estimation noise of relative std `1/sqrt(meter_bandwidth·dt)`.
pub fn noise_power_meter<T: Real>(theta: T, config: &LockConfig<T>, rng: &mut impl rand::Rng) -> T {
    let v = config.variance_at(theta);
    let shape = (config.meter_bandwidth * config.dt)
        .to_f64()
        .unwrap_or(f64::INFINITY);
    if !shape.is_finite() {
        return v;
    }
    let gamma = Gamma::new(shape, 1.0 / shape).expect("validated meter bandwidth");
    v * real::<T>(gamma.sample(rng))
}

/// Expected demodulated error signal at phase θ, to first order in the
/// dither amplitude: `dither_amp·dV/dθ·cos(demod_phase)`. Zero exactly at
/// the extrema θ = 0, π/2 (mod π).
pub fn error_signal_model<T: Real>(theta: T, config: &LockConfig<T>) -> T {
    let (vp, vm) = config.variance_pair;
    let dv_dtheta = (vm - vp) * (real::<T>(2.0) * theta).sin();
    config.dither_amp * dv_dtheta * config.demod_phase.cos()
}

/// Linearized closed-loop decay rate about the noise minimum (1/s).
/// Positive means the minimum is locally stable.
pub fn linearized_decay_rate<T: Real>(config: &LockConfig<T>) -> T {
    let (vp, vm) = config.variance_pair;
    real::<T>(2.0) * config.loop_gain * config.dither_amp * (vp - vm) * config.demod_phase.cos()
}

/// Largest loop gain for which the noiseless decay toward the minimum is
/// monotone (filter-integrator loop critically damped):
/// `λ ≤ ω_lp/4` with `ω_lp = 2π·lowpass_corner`.
pub fn max_monotone_gain<T: Real>(config: &LockConfig<T>) -> T {
    let (vp, vm) = config.variance_pair;
    let omega_lp = T::TAU() * config.lowpass_corner;
    omega_lp
        / (real::<T>(8.0) * config.dither_amp * (vp - vm).abs() * config.demod_phase.cos().abs())
}

/// Run the loop against a phase disturbance `t → rad`.
///
/// Deterministic for a given config, seed and disturbance. A non-finite
/// state stops the run early and reports `diverged` instead of panicking.
pub fn simulate_lock<T: Real>(
    config: &LockConfig<T>,
    disturbance: impl Fn(T) -> T,
    rng_seed: u64,
) -> Result<LockTrace<T>, LockError> {
    config.validate()?;
    let n_steps = (config.duration / config.dt)
        .round()
        .to_usize()
        .unwrap_or(usize::MAX)
        .clamp(1, MAX_STEPS);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let two_pi_fd = T::TAU() * config.dither_freq;
    // exact one-pole discretization
    let alpha_lp = T::one() - (-T::TAU() * config.lowpass_corner * config.dt).exp();

    let mut theta_ctrl = config.initial_phase;
    let mut filt = T::zero();
    let mut samples = Vec::with_capacity(n_steps);
    let mut diverged = false;

    for step in 0..n_steps {
        let t = T::from_usize(step).unwrap() * config.dt;
        let dither = config.dither_amp * (two_pi_fd * t).sin();
        let dist = disturbance(t);
        let theta_total = theta_ctrl + dither + dist;
        if !theta_total.is_finite() {
            diverged = true;
            break;
        }
        let power = noise_power_meter(theta_total, config, &mut rng);
        let demod = power * real::<T>(2.0) * (two_pi_fd * t + config.demod_phase).sin();
        filt += alpha_lp * (demod - filt);
        theta_ctrl -= config.loop_gain * filt * config.dt;
        if !(filt.is_finite() && theta_ctrl.is_finite()) {
            diverged = true;
            break;
        }
        samples.push(LockSample {
            t,
            theta_total,
            theta_disturbance: dist,
            error_signal: filt,
            control_output: theta_ctrl,
        });
    }

    let summary = summarize(config, &samples, diverged);
    Ok(LockTrace { samples, summary })
}

fn summarize<T: Real>(
    config: &LockConfig<T>,
    samples: &[LockSample<T>],
    diverged: bool,
) -> LockSummary<T> {
    if samples.is_empty() {
        return LockSummary {
            converged: false,
            diverged,
            locked_to: None,
            target_phase: T::nan(),
            mean_offset: T::nan(),
            residual_rms: T::nan(),
            settle_time: None,
        };
    }
    // undithered phase the loop actually holds
    let slow: Vec<T> = samples
        .iter()
        .map(|s| s.control_output + s.theta_disturbance)
        .collect();
    let half = slow.len() / 2;
    let tail = &slow[half..];
    let n = T::from_usize(tail.len()).unwrap();
    let mean = tail.iter().copied().sum::<T>() / n;

    let half_pi = T::FRAC_PI_2();
    let target = (mean / half_pi).round() * half_pi;
    let mean_offset = (mean - target).abs();
    let residual_rms = (tail.iter().map(|&x| (x - target) * (x - target)).sum::<T>() / n).sqrt();

    let (vp, vm) = config.variance_pair;
    let locked_to = if vp == vm {
        None
    } else {
        // target on the 0 mod pi lattice reads V+, on pi/2 mod pi reads V-
        let k = (target / half_pi).round().to_i64().unwrap_or(0);
        let on_amplitude = k.rem_euclid(2) == 0;
        let v_here = if on_amplitude { vp } else { vm };
        let v_there = if on_amplitude { vm } else { vp };
        Some(if v_here > v_there {
            Extremum::NoiseMaximum
        } else {
            Extremum::NoiseMinimum
        })
    };

    let band = real::<T>(SETTLE_BAND_RAD);
    let mut settle_idx = Some(0usize);
    for (i, &x) in slow.iter().enumerate() {
        if (x - target).abs() > band {
            settle_idx = if i + 1 < slow.len() {
                Some(i + 1)
            } else {
                None
            };
        }
    }
    let settle_time = settle_idx.map(|i| samples[i].t);

    let converged = !diverged
        && settle_time.is_some()
        && mean_offset <= real::<T>(CONVERGED_MEAN_TOL_RAD)
        && residual_rms <= real::<T>(CONVERGED_RMS_TOL_RAD);

    LockSummary {
        converged,
        diverged,
        locked_to,
        target_phase: target,
        mean_offset,
        residual_rms,
        settle_time,
    }
}

/// Add the homodyne locking signal to a spectrum trace as a single-bin
/// peak of the given linear power at the dither frequency.
pub fn inject_lock_artifact<T: Real>(
    trace: &MeasuredTrace<T>,
    dither_freq: T,
    amplitude: T,
) -> Result<MeasuredTrace<T>, LockError> {
    if !(amplitude.is_finite() && amplitude >= T::zero()) {
        return Err(LockError::InvalidArtifactPower(
            amplitude.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let index = trace
        .bin_containing(dither_freq)
        .ok_or(LockError::ArtifactOutsideSpan {
            freq_hz: dither_freq.to_f64().unwrap_or(f64::NAN),
        })?;
    if amplitude == T::zero() {
        return Ok(trace.clone());
    }
    let power = trace.bins()[index].power + amplitude;
    Ok(trace.with_bin_power(index, power))
}

/// Write a lock trace as CSV with the summary in `#` header lines.
pub fn write_lock_trace_csv<T: Real>(
    trace: &LockTrace<T>,
    writer: &mut impl std::io::Write,
) -> std::io::Result<()> {
    let s = &trace.summary;
    writeln!(writer, "# converged={}", s.converged)?;
    writeln!(writer, "# diverged={}", s.diverged)?;
    writeln!(
        writer,
        "# locked_to={}",
        match s.locked_to {
            Some(Extremum::NoiseMinimum) => "noise_minimum",
            Some(Extremum::NoiseMaximum) => "noise_maximum",
            None => "none",
        }
    )?;
    writeln!(
        writer,
        "# target_phase_rad={}",
        s.target_phase.to_f64().unwrap()
    )?;
    writeln!(
        writer,
        "# mean_offset_rad={}",
        s.mean_offset.to_f64().unwrap()
    )?;
    writeln!(
        writer,
        "# residual_rms_rad={}",
        s.residual_rms.to_f64().unwrap()
    )?;
    match s.settle_time {
        Some(t) => writeln!(writer, "# settle_time_s={}", t.to_f64().unwrap())?,
        None => writeln!(writer, "# settle_time_s=")?,
    }
    writeln!(
        writer,
        "t_s,theta_total_rad,theta_disturbance_rad,error_signal,control_output"
    )?;
    for sample in &trace.samples {
        writeln!(
            writer,
            "{},{},{},{},{}",
            sample.t.to_f64().unwrap(),
            sample.theta_total.to_f64().unwrap(),
            sample.theta_disturbance.to_f64().unwrap(),
            sample.error_signal.to_f64().unwrap(),
            sample.control_output.to_f64().unwrap()
        )?;
    }
    Ok(())
}
