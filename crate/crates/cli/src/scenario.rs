//! Scenario files: a TOML schema with named sections mirroring the
//! simulation types, plus the conversion into core types.
//!
//! Units in scenario files are bench units — frequencies in Hz, powers in
//! W, efficiencies and losses as fractions, noise levels in dB relative to
//! vacuum — and are converted to the model's internal rad/s on compile.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sqzsim_core::analyzer::WindowPlan;
use sqzsim_core::detection::{from_db, DetectionChain};
use sqzsim_core::lockloop::LockConfig;
use sqzsim_core::model::{intracavity_fields, CavityParams, CavityRates};
use sqzsim_core::noise::{NoiseInputs, NoiseSpectrum};
use sqzsim_core::units::{carrier_omega, hz_to_rad_s};

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: MetaSection,
    pub cavity: CavitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolator: Option<IsolatorSection>,
    pub detection: DetectionSection,
    #[serde(default, skip_serializing_if = "NoiseSection::is_empty")]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_artifact: Option<LockArtifactSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lockloop: Option<LockloopSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_scan: Option<PhaseScanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infer: Option<InferSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    pub name: String,
    /// Master RNG seed; per-stream seeds are derived from it.
    pub seed: u64,
    #[serde(default = "default_wavelength_nm")]
    pub wavelength_nm: f64,
}

fn default_wavelength_nm() -> f64 {
    1064.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub kappa_in_a_hz: f64,
    pub kappa_out_a_hz: f64,
    pub kappa_l_a_hz: f64,
    pub kappa_b_hz: f64,
    pub kappa_in_b_hz: f64,
    pub epsilon_hz: f64,
    pub classical_gain: f64,
    #[serde(default)]
    pub seed_power_w: f64,
}

/// Faraday isolator between the cavity and the detectors. When in the
/// path it adds its transmission loss to the detection chain and, if
/// `blocks_seed` is set, removes the (backscatter) seed from the cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatorSection {
    pub in_path: bool,
    pub transmission_loss: f64,
    #[serde(default)]
    pub blocks_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub quantum_efficiency: f64,
    pub fringe_visibility: f64,
    #[serde(default)]
    pub propagation_losses: Vec<f64>,
    /// Electronic noise floor in dB relative to shot noise (e.g. -12).
    pub electronic_noise_db: f64,
    pub homodyne_phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Technical seed noise, added on top of the seed vacuum.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<NoiseComponent>,
    /// Technical pump noise, added on top of the pump vacuum.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pump: Vec<NoiseComponent>,
    /// Detuning fluctuation spectrum (no vacuum contribution).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detuning: Vec<NoiseComponent>,
}

impl NoiseSection {
    fn is_empty(&self) -> bool {
        self.seed.is_empty() && self.pump.is_empty() && self.detuning.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Flat,
    Acoustic,
    Band,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseComponent {
    pub kind: NoiseKind,
    /// Level in dB relative to vacuum, at the shape's reference point
    /// (plateau for flat/acoustic/band, line center for line).
    pub level_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_lo_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_hi_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_hz: Option<f64>,
    /// Seed components only: the level scales as seed_power/ref_power_w.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub scale_with_seed_power: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_power_w: Option<f64>,
}

impl NoiseComponent {
    fn spectrum(&self, context: &str) -> Result<NoiseSpectrum<f64>, AppError> {
        let missing = |field: &str| {
            AppError::Config(format!(
                "{context}: `{field}` is required for kind={:?}",
                self.kind
            ))
        };
        let magnitude = from_db(self.level_db);
        let spectrum = match self.kind {
            NoiseKind::Flat => NoiseSpectrum::Flat { level: magnitude },
            NoiseKind::Acoustic => NoiseSpectrum::Acoustic {
                magnitude,
                corner: hz_to_rad_s(self.corner_hz.ok_or_else(|| missing("corner_hz"))?),
            },
            NoiseKind::Band => NoiseSpectrum::Band {
                magnitude,
                lo: hz_to_rad_s(self.f_lo_hz.ok_or_else(|| missing("f_lo_hz"))?),
                hi: hz_to_rad_s(self.f_hi_hz.ok_or_else(|| missing("f_hi_hz"))?),
            },
            NoiseKind::Line => NoiseSpectrum::Line {
                magnitude,
                center: hz_to_rad_s(self.center_hz.ok_or_else(|| missing("center_hz"))?),
                width: hz_to_rad_s(self.width_hz.ok_or_else(|| missing("width_hz"))?),
            },
        };
        spectrum
            .validate()
            .map_err(|e| AppError::Config(format!("{context}: {e}")))?;
        Ok(spectrum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub rbw_hz: f64,
    pub n_avg: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vbw_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    #[serde(default = "default_mains_hz")]
    pub mains_hz: f64,
    pub harmonics: u32,
    pub half_width_hz: f64,
}

fn default_mains_hz() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockArtifactSection {
    pub freq_hz: f64,
    pub power_rel_snl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub powers_w: Vec<f64>,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub rbw_hz: f64,
    pub n_avg: u32,
    #[serde(default = "default_true")]
    pub subtract_electronic: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockloopSection {
    pub dither_freq_hz: f64,
    pub dither_amp_rad: f64,
    #[serde(default)]
    pub demod_phase_rad: f64,
    pub lowpass_corner_hz: f64,
    pub loop_gain: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub meter_bandwidth_hz: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub initial_phase_rad: f64,
    /// Write every Nth sample to the trace CSV (the simulation itself
    /// always runs at full rate).
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSection>,
}

fn default_output_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    None,
    Sine,
    Ramp,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: DisturbanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanSection {
    pub frequency_hz: f64,
    #[serde(default = "default_scan_points")]
    pub n_points: usize,
    #[serde(default = "default_scan_span")]
    pub theta_max_rad: f64,
}

fn default_scan_points() -> usize {
    721
}

fn default_scan_span() -> f64 {
    std::f64::consts::TAU
}

/// Measured variance pair for the inference command. Values are linear
/// relative to shot noise; by default they are taken as already
/// electronic-noise subtracted, so the inversion uses only the optical
/// efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSection {
    pub v_plus_meas: f64,
    pub v_minus_meas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_true")]
    pub electronic_subtracted: bool,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, AppError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String, AppError> {
        toml::to_string_pretty(self).map_err(|e| AppError::Config(e.to_string()))
    }

    /// Hex digest of the canonical serialized form, recorded in outputs so
    /// a trace can be matched to the exact configuration that produced it.
    pub fn digest(&self) -> String {
        let text = self.to_toml_string().unwrap_or_default();
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let err = |msg: String| Err(AppError::Config(msg));
        if self.scenario.name.is_empty() {
            return err("scenario.name must not be empty".into());
        }
        if !(self.scenario.wavelength_nm.is_finite() && self.scenario.wavelength_nm > 0.0) {
            return err("scenario.wavelength_nm must be positive".into());
        }
        for component in &self.noise.pump {
            if component.scale_with_seed_power {
                return err("noise.pump: scale_with_seed_power applies only to seed noise".into());
            }
        }
        for component in &self.noise.detuning {
            if component.scale_with_seed_power {
                return err(
                    "noise.detuning: scale_with_seed_power applies only to seed noise".into(),
                );
            }
        }
        for component in &self.noise.seed {
            if component.scale_with_seed_power {
                match component.ref_power_w {
                    Some(p) if p.is_finite() && p > 0.0 => {}
                    _ => {
                        return err(
                            "noise.seed: scale_with_seed_power requires a positive ref_power_w"
                                .into(),
                        )
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rates(&self) -> CavityRates<f64> {
        let c = &self.cavity;
        CavityRates {
            kappa_in_a: hz_to_rad_s(c.kappa_in_a_hz),
            kappa_out_a: hz_to_rad_s(c.kappa_out_a_hz),
            kappa_l_a: hz_to_rad_s(c.kappa_l_a_hz),
            kappa_b: hz_to_rad_s(c.kappa_b_hz),
            kappa_in_b: hz_to_rad_s(c.kappa_in_b_hz),
            epsilon: hz_to_rad_s(c.epsilon_hz),
        }
    }

    pub fn carrier_omega(&self) -> f64 {
        carrier_omega(self.scenario.wavelength_nm * 1e-9)
    }

    /// Seed power reaching the cavity after the isolator logic.
    pub fn effective_seed_power(&self) -> f64 {
        match &self.isolator {
            Some(iso) if iso.in_path && iso.blocks_seed => 0.0,
            _ => self.cavity.seed_power_w,
        }
    }

    pub fn cavity_params(&self) -> Result<CavityParams<f64>, AppError> {
        Ok(intracavity_fields(
            &self.rates(),
            self.cavity.classical_gain,
            self.effective_seed_power(),
            self.carrier_omega(),
        )?)
    }

    pub fn detection_chain(&self) -> Result<DetectionChain<f64>, AppError> {
        let d = &self.detection;
        let mut losses = d.propagation_losses.clone();
        if let Some(iso) = &self.isolator {
            if iso.in_path {
                losses.push(iso.transmission_loss);
            }
        }
        Ok(DetectionChain::new(
            d.quantum_efficiency,
            d.fringe_visibility,
            losses,
            from_db(d.electronic_noise_db),
            d.homodyne_phase_rad,
        )?)
    }

    fn sum_components(
        components: &[NoiseComponent],
        context: &str,
        seed_power_w: Option<f64>,
    ) -> Result<Option<NoiseSpectrum<f64>>, AppError> {
        let mut parts = Vec::new();
        for (i, component) in components.iter().enumerate() {
            let ctx = format!("{context}[{i}]");
            let mut spectrum = component.spectrum(&ctx)?;
            if component.scale_with_seed_power {
                let power = seed_power_w.expect("validated: scaling only on seed noise");
                spectrum = spectrum.scaled(power / component.ref_power_w.unwrap());
            }
            parts.push(spectrum);
        }
        Ok(match parts.len() {
            0 => None,
            1 => Some(parts.pop().unwrap()),
            _ => Some(NoiseSpectrum::Sum(parts)),
        })
    }

    /// Noise inputs for a given seed power (technical seed noise scales
    /// with it per its `ref_power_w`).
    pub fn noise_inputs(&self, seed_power_w: f64) -> Result<NoiseInputs<f64>, AppError> {
        let mut inputs = NoiseInputs::vacuum();
        if let Some(excess) =
            Self::sum_components(&self.noise.seed, "noise.seed", Some(seed_power_w))?
        {
            inputs = inputs.with_seed_excess(excess);
        }
        if let Some(excess) = Self::sum_components(&self.noise.pump, "noise.pump", None)? {
            inputs = inputs.with_pump_excess(excess);
        }
        if let Some(detuning) = Self::sum_components(&self.noise.detuning, "noise.detuning", None)?
        {
            inputs = inputs.with_detuning(detuning);
        }
        Ok(inputs)
    }

    /// Noise inputs with the power-scaling seed components left out, for
    /// sweeps that re-scale per power.
    pub fn base_noise_inputs(&self) -> Result<NoiseInputs<f64>, AppError> {
        let fixed: Vec<NoiseComponent> = self
            .noise
            .seed
            .iter()
            .filter(|c| !c.scale_with_seed_power)
            .cloned()
            .collect();
        let mut inputs = NoiseInputs::vacuum();
        if let Some(excess) = Self::sum_components(&fixed, "noise.seed", None)? {
            inputs = inputs.with_seed_excess(excess);
        }
        if let Some(excess) = Self::sum_components(&self.noise.pump, "noise.pump", None)? {
            inputs = inputs.with_pump_excess(excess);
        }
        if let Some(detuning) = Self::sum_components(&self.noise.detuning, "noise.detuning", None)?
        {
            inputs = inputs.with_detuning(detuning);
        }
        Ok(inputs)
    }

    /// Technical seed noise per watt of seed power, if configured.
    pub fn seed_excess_per_watt(&self) -> Result<Option<NoiseSpectrum<f64>>, AppError> {
        let scaling: Vec<NoiseComponent> = self
            .noise
            .seed
            .iter()
            .filter(|c| c.scale_with_seed_power)
            .cloned()
            .collect();
        let mut parts = Vec::new();
        for (i, component) in scaling.iter().enumerate() {
            let ctx = format!("noise.seed[{i}]");
            let spectrum = component.spectrum(&ctx)?;
            parts.push(spectrum.scaled(1.0 / component.ref_power_w.unwrap()));
        }
        Ok(match parts.len() {
            0 => None,
            1 => Some(parts.pop().unwrap()),
            _ => Some(NoiseSpectrum::Sum(parts)),
        })
    }

    pub fn window_plans(&self) -> Result<Vec<WindowPlan<f64>>, AppError> {
        self.windows
            .iter()
            .map(|w| {
                let mut plan = WindowPlan::new(w.f_start_hz, w.f_stop_hz, w.rbw_hz, w.n_avg)?;
                plan.vbw = w.vbw_hz;
                Ok(plan)
            })
            .collect()
    }

    pub fn lock_config(&self) -> Result<LockConfig<f64>, AppError> {
        let section = self
            .lockloop
            .as_ref()
            .ok_or_else(|| AppError::Config("scenario has no [lockloop] section".into()))?;
        let config = LockConfig {
            dither_freq: section.dither_freq_hz,
            dither_amp: section.dither_amp_rad,
            demod_phase: section.demod_phase_rad,
            lowpass_corner: section.lowpass_corner_hz,
            loop_gain: section.loop_gain,
            dt: section.dt_s,
            duration: section.duration_s,
            meter_bandwidth: section.meter_bandwidth_hz,
            variance_pair: (section.v_plus, section.v_minus),
            initial_phase: section.initial_phase_rad,
        };
        config.validate()?;
        Ok(config)
    }

    /// Phase disturbance for the lock simulation.
    pub fn disturbance_fn(&self) -> Result<Box<dyn Fn(f64) -> f64>, AppError> {
        let section = self.lockloop.as_ref().and_then(|l| l.disturbance.as_ref());
        let Some(d) = section else {
            return Ok(Box::new(|_| 0.0));
        };
        let need = |field: &str, value: Option<f64>| {
            value.ok_or_else(|| {
                AppError::Config(format!(
                    "lockloop.disturbance: `{field}` is required for kind={:?}",
                    d.kind
                ))
            })
        };
        Ok(match d.kind {
            DisturbanceKind::None => Box::new(|_| 0.0),
            DisturbanceKind::Sine => {
                let freq = need("freq_hz", d.freq_hz)?;
                let amp = need("amp_rad", d.amp_rad)?;
                Box::new(move |t| amp * (std::f64::consts::TAU * freq * t).sin())
            }
            DisturbanceKind::Ramp => {
                let rate = need("rate_rad_per_s", d.rate_rad_per_s)?;
                Box::new(move |t| rate * t)
            }
            DisturbanceKind::Step => {
                let amp = need("amp_rad", d.amp_rad)?;
                let t0 = need("t_start_s", d.t_start_s)?;
                Box::new(move |t| if t >= t0 { amp } else { 0.0 })
            }
        })
    }
}
