//! Command implementations behind the CLI verbs. Each returns a report
//! struct so tests can assert on results without re-parsing the emitted
//! files.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sqzsim_core::analyzer::{
    derive_stream_seed, evaluate_exact, mask_mains, seed_sweep, stitch, synthesize_measurement,
    write_trace_csv, MeasuredTrace, OpaSweepModel, SeedSweep, SweepMode, WindowPlan,
};
use sqzsim_core::detection::{
    apply_chain, homodyne_variance, infer_source, infer_source_sigma, purity, purity_is_physical,
    purity_sigma, to_db, total_efficiency, MeasuredVariancePair,
};
use sqzsim_core::lockloop::{
    inject_lock_artifact, simulate_lock, write_lock_trace_csv, LockSummary,
};
use sqzsim_core::model::{quadrature_variance, Quadrature};
use sqzsim_core::units::hz_to_rad_s;

use crate::error::AppError;
use crate::presets::{self, PRESET_NAMES};
use crate::scenario::Scenario;

/// Stream-tag layout for deriving per-trace, per-window seeds from the
/// master seed: `kind * STREAM_STRIDE + window_index`.
const STREAM_STRIDE: u64 = 16;
const STREAM_SHOT: u64 = 0;
const STREAM_SQUEEZED: u64 = 1;
const STREAM_ELECTRONIC: u64 = 2;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub analytic: bool,
}

impl RunOptions {
    fn seed(&self, scenario: &Scenario) -> u64 {
        self.seed_override.unwrap_or(scenario.scenario.seed)
    }
}

fn open_out(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), AppError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn common_comments(scenario: &Scenario, seed: u64, analytic: bool) -> Vec<String> {
    vec![
        format!("scenario={}", scenario.scenario.name),
        format!("scenario_sha256={}", scenario.digest()),
        format!("master_seed={seed}"),
        format!("mode={}", if analytic { "analytic" } else { "synthesized" }),
    ]
}

#[derive(Debug)]
pub struct SpectrumReport {
    pub shot_path: PathBuf,
    pub squeezed_path: PathBuf,
    pub electronic_path: PathBuf,
    pub composite_path: PathBuf,
    pub shot: MeasuredTrace<f64>,
    pub squeezed: MeasuredTrace<f64>,
    pub electronic: MeasuredTrace<f64>,
    pub masked_bins: usize,
}

/// Emit the three spectrum traces (shot-noise calibration, squeezed light,
/// electronic noise) plus a dB-relative composite of squeezed over shot.
pub fn cmd_spectrum(scenario: &Scenario, opts: &RunOptions) -> Result<SpectrumReport, AppError> {
    let params = scenario.cavity_params()?;
    let chain = scenario.detection_chain()?;
    let noise = scenario.noise_inputs(scenario.effective_seed_power())?;
    let plans = scenario.window_plans()?;
    if plans.is_empty() {
        return Err(AppError::Config(
            "spectrum needs at least one [[windows]] section".into(),
        ));
    }
    let seed = opts.seed(scenario);
    let theta = chain.homodyne_phase();
    let elec = chain.electronic_noise_rel();

    let squeezed_psd = |f: f64| {
        let omega = hz_to_rad_s(f);
        let v_plus = quadrature_variance(&params, &noise, Quadrature::Amplitude, omega);
        let v_minus = quadrature_variance(&params, &noise, Quadrature::Phase, omega);
        apply_chain(homodyne_variance(v_plus, v_minus, theta), &chain)
    };
    let shot_psd = |_: f64| apply_chain(1.0, &chain);
    let electronic_psd = |_: f64| elec;

    let mut kinds: [Vec<MeasuredTrace<f64>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (w, plan) in plans.iter().enumerate() {
        let streams = [
            (STREAM_SHOT, &shot_psd as &dyn Fn(f64) -> f64),
            (STREAM_SQUEEZED, &squeezed_psd),
            (STREAM_ELECTRONIC, &electronic_psd),
        ];
        for (slot, (kind, psd)) in streams.into_iter().enumerate() {
            let trace = if opts.analytic {
                evaluate_exact(psd, plan)?
            } else {
                let stream = kind * STREAM_STRIDE + w as u64;
                synthesize_measurement(psd, plan, derive_stream_seed(seed, stream))?
            };
            kinds[slot].push(trace);
        }
    }
    let shot = stitch(&kinds[0])?;
    let mut squeezed = stitch(&kinds[1])?;
    let electronic = stitch(&kinds[2])?;

    if let Some(artifact) = &scenario.lock_artifact {
        squeezed = inject_lock_artifact(&squeezed, artifact.freq_hz, artifact.power_rel_snl)?;
    }

    let mut masked_bins = 0;
    let (shot, squeezed, electronic) = if let Some(mask) = &scenario.mask {
        let (shot, n0) = mask_mains(&shot, mask.mains_hz, mask.harmonics, mask.half_width_hz)?;
        let (squeezed, n1) =
            mask_mains(&squeezed, mask.mains_hz, mask.harmonics, mask.half_width_hz)?;
        let (electronic, n2) = mask_mains(
            &electronic,
            mask.mains_hz,
            mask.harmonics,
            mask.half_width_hz,
        )?;
        masked_bins = n0.max(n1).max(n2);
        (shot, squeezed, electronic)
    } else {
        (shot, squeezed, electronic)
    };

    let comments = common_comments(scenario, seed, opts.analytic);
    let write_one = |name: &str, label: &str, trace: &MeasuredTrace<f64>| {
        let (path, mut writer) = open_out(&opts.out_dir, name)?;
        let mut c = comments.clone();
        c.push(format!("trace={label}"));
        write_trace_csv(trace, &mut writer, &c)?;
        Ok::<PathBuf, AppError>(path)
    };
    let shot_path = write_one("shot_noise.csv", "shot_noise_calibration", &shot)?;
    let squeezed_path = write_one("squeezed.csv", "squeezed_light", &squeezed)?;
    let electronic_path = write_one("electronic_noise.csv", "electronic_noise", &electronic)?;

    let (composite_path, mut writer) = open_out(&opts.out_dir, "composite.csv")?;
    for line in &comments {
        writeln!(writer, "# {line}")?;
    }
    writeln!(writer, "# trace=squeezed_relative_to_shot")?;
    writeln!(
        writer,
        "frequency_hz,shot_power,squeezed_power,squeezed_rel_shot_db,masked,window_id"
    )?;
    for (a, b) in shot.bins().iter().zip(squeezed.bins()) {
        let rel_db = if b.power > 0.0 && a.power > 0.0 {
            format!("{}", to_db(b.power / a.power))
        } else {
            String::new()
        };
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            a.freq_hz,
            a.power,
            b.power,
            rel_db,
            (a.masked || b.masked) as u8,
            a.window_id
        )?;
    }
    drop(writer);

    Ok(SpectrumReport {
        shot_path,
        squeezed_path,
        electronic_path,
        composite_path,
        shot,
        squeezed,
        electronic,
        masked_bins,
    })
}

#[derive(Debug)]
pub struct PhaseScanReport {
    pub path: PathBuf,
    pub frequency_hz: f64,
    pub v_plus_source: f64,
    pub v_minus_source: f64,
    pub min_db: f64,
    pub max_db: f64,
    pub measured_purity: f64,
    pub inferred_purity: f64,
    pub inferred_squeezing_db: f64,
}

/// Scan the homodyne phase at one sideband frequency and emit θ versus
/// noise power in dB (electronic noise subtracted, as for the published
/// fringe).
pub fn cmd_phase_scan(
    scenario: &Scenario,
    opts: &RunOptions,
    frequency_hz: Option<f64>,
    n_points: Option<usize>,
) -> Result<PhaseScanReport, AppError> {
    let section = scenario.phase_scan.as_ref();
    let frequency_hz = frequency_hz
        .or(section.map(|s| s.frequency_hz))
        .ok_or_else(|| {
            AppError::Config("phase-scan needs --frequency-hz or a [phase_scan] section".into())
        })?;
    let n_points = n_points
        .or(section.map(|s| s.n_points))
        .unwrap_or(721)
        .max(1);
    let theta_max = section
        .map(|s| s.theta_max_rad)
        .unwrap_or(std::f64::consts::TAU);

    let params = scenario.cavity_params()?;
    let chain = scenario.detection_chain()?;
    let noise = scenario.noise_inputs(scenario.effective_seed_power())?;
    let omega = hz_to_rad_s(frequency_hz);
    let v_plus = quadrature_variance(&params, &noise, Quadrature::Amplitude, omega);
    let v_minus = quadrature_variance(&params, &noise, Quadrature::Phase, omega);

    let elec = chain.electronic_noise_rel();
    let grid: Vec<f64> = if n_points == 1 {
        vec![0.0]
    } else {
        (0..n_points)
            .map(|i| theta_max * i as f64 / (n_points - 1) as f64)
            .collect()
    };
    // detected fringe with the electronic floor subtracted
    let scan: Vec<(f64, f64)> = grid
        .iter()
        .map(|&theta| {
            let v = apply_chain(homodyne_variance(v_plus, v_minus, theta), &chain) - elec;
            (theta, v)
        })
        .collect();

    let (min_v, max_v) = scan
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, v)| {
            (lo.min(v), hi.max(v))
        });
    let measured_purity = purity(max_v, min_v);
    let inference_chain = chain.without_electronic_noise();
    let inferred_min = infer_source(min_v, &inference_chain)?;
    let inferred_max = infer_source(max_v, &inference_chain)?;
    let inferred_purity = purity(inferred_max, inferred_min);

    let (path, mut writer) = open_out(&opts.out_dir, "phase_scan.csv")?;
    for line in common_comments(scenario, opts.seed(scenario), true) {
        writeln!(writer, "# {line}")?;
    }
    writeln!(writer, "# frequency_hz={frequency_hz}")?;
    writeln!(writer, "# v_plus_source={v_plus}")?;
    writeln!(writer, "# v_minus_source={v_minus}")?;
    writeln!(writer, "# min_db={}", to_db(min_v))?;
    writeln!(writer, "# max_db={}", to_db(max_v))?;
    writeln!(writer, "# measured_purity={measured_purity}")?;
    writeln!(writer, "# inferred_purity={inferred_purity}")?;
    writeln!(writer, "# inferred_squeezing_db={}", to_db(inferred_min))?;
    writeln!(writer, "theta_rad,power_rel_snl,power_db")?;
    for (theta, v) in &scan {
        writeln!(writer, "{},{},{}", theta, v, to_db(*v))?;
    }
    drop(writer);

    Ok(PhaseScanReport {
        path,
        frequency_hz,
        v_plus_source: v_plus,
        v_minus_source: v_minus,
        min_db: to_db(min_v),
        max_db: to_db(max_v),
        measured_purity,
        inferred_purity,
        inferred_squeezing_db: to_db(inferred_min),
    })
}

#[derive(Debug)]
pub struct SweepReport {
    pub path: PathBuf,
    pub sweep: SeedSweep<f64>,
}

/// Run the seed-power sweep configured in `[sweep]` and emit the points
/// with the affine fit.
pub fn cmd_seed_sweep(scenario: &Scenario, opts: &RunOptions) -> Result<SweepReport, AppError> {
    let section = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| AppError::Config("scenario has no [sweep] section".into()))?;
    let model = OpaSweepModel {
        rates: scenario.rates(),
        classical_gain: scenario.cavity.classical_gain,
        carrier_omega: scenario.carrier_omega(),
        base_noise: scenario.base_noise_inputs()?,
        seed_excess_per_watt: scenario.seed_excess_per_watt()?,
        chain: scenario.detection_chain()?,
        subtract_electronic: section.subtract_electronic,
    };
    let plan = WindowPlan::new(
        section.band_lo_hz,
        section.band_hi_hz,
        section.rbw_hz,
        section.n_avg,
    )?;
    let seed = opts.seed(scenario);
    let mode = if opts.analytic {
        SweepMode::Analytic
    } else {
        SweepMode::Synthesized { master_seed: seed }
    };
    let sweep = seed_sweep(&model, &section.powers_w, &plan, mode)?;

    let (path, mut writer) = open_out(&opts.out_dir, "seed_sweep.csv")?;
    for line in common_comments(scenario, seed, opts.analytic) {
        writeln!(writer, "# {line}")?;
    }
    writeln!(
        writer,
        "# band_hz=[{},{}] rbw_hz={} n_avg={}",
        section.band_lo_hz, section.band_hi_hz, section.rbw_hz, section.n_avg
    )?;
    writeln!(writer, "# fit_intercept={}", sweep.fit.intercept)?;
    writeln!(writer, "# fit_slope_per_w={}", sweep.fit.slope)?;
    writeln!(writer, "# fit_residual_norm={}", sweep.fit.residual_norm)?;
    writeln!(
        writer,
        "# fit_relative_residual={}",
        sweep.fit.relative_residual
    )?;
    writeln!(writer, "seed_power_w,band_mean_rel_snl,band_mean_db")?;
    for point in &sweep.points {
        writeln!(
            writer,
            "{},{},{}",
            point.power_w,
            point.band_mean,
            to_db(point.band_mean)
        )?;
    }
    drop(writer);

    Ok(SweepReport { path, sweep })
}

#[derive(Debug)]
pub struct LockReport {
    pub path: PathBuf,
    pub summary: LockSummary<f64>,
}

/// Run the noise-dither lock simulation configured in `[lockloop]`.
pub fn cmd_lock(scenario: &Scenario, opts: &RunOptions) -> Result<LockReport, AppError> {
    let config = scenario.lock_config()?;
    let disturbance = scenario.disturbance_fn()?;
    let trace = simulate_lock(&config, &disturbance, opts.seed(scenario))?;

    let stride = scenario
        .lockloop
        .as_ref()
        .map(|l| l.output_every.max(1))
        .unwrap_or(1);
    let thinned = sqzsim_core::lockloop::LockTrace {
        samples: trace.samples.iter().copied().step_by(stride).collect(),
        summary: trace.summary,
    };

    let (path, mut writer) = open_out(&opts.out_dir, "lock_trace.csv")?;
    for line in common_comments(scenario, opts.seed(scenario), false) {
        writeln!(writer, "# {line}")?;
    }
    if stride > 1 {
        writeln!(writer, "# output_every={stride}")?;
    }
    write_lock_trace_csv(&thinned, &mut writer)?;
    drop(writer);

    Ok(LockReport {
        path,
        summary: trace.summary,
    })
}

#[derive(Debug)]
pub struct InferReport {
    pub eta: f64,
    pub measured_purity: f64,
    pub v_plus_source: f64,
    pub v_minus_source: f64,
    pub sigma_source: Option<f64>,
    pub squeezing_db: f64,
    pub squeezing_db_sigma: Option<f64>,
    pub antisqueezing_db: f64,
    pub inferred_purity: f64,
    pub inferred_purity_sigma: Option<f64>,
    pub purity_physical: bool,
}

impl fmt::Display for InferReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total detection efficiency: {:.4}", self.eta)?;
        writeln!(f, "measured purity V+V-: {:.3}", self.measured_purity)?;
        match self.sigma_source {
            Some(sigma) => writeln!(
                f,
                "inferred source variances: V+ = {:.4} +- {:.4}, V- = {:.4} +- {:.4}",
                self.v_plus_source, sigma, self.v_minus_source, sigma
            )?,
            None => writeln!(
                f,
                "inferred source variances: V+ = {:.4}, V- = {:.4}",
                self.v_plus_source, self.v_minus_source
            )?,
        }
        match self.squeezing_db_sigma {
            Some(s) => writeln!(
                f,
                "inferred squeezing: {:.2} dB +- {:.2} dB (antisqueezing {:.2} dB)",
                self.squeezing_db, s, self.antisqueezing_db
            )?,
            None => writeln!(
                f,
                "inferred squeezing: {:.2} dB (antisqueezing {:.2} dB)",
                self.squeezing_db, self.antisqueezing_db
            )?,
        }
        match self.inferred_purity_sigma {
            Some(s) => write!(
                f,
                "inferred purity: {:.3} +- {:.3}",
                self.inferred_purity, s
            )?,
            None => write!(f, "inferred purity: {:.3}", self.inferred_purity)?,
        }
        if !self.purity_physical {
            write!(
                f,
                "\nwarning: inferred purity is below 1 (unphysical); check the \
                 efficiency budget and noise subtraction"
            )?;
        }
        Ok(())
    }
}

/// Invert the detection chain for the measured pair in `[infer]`.
pub fn cmd_infer(scenario: &Scenario) -> Result<InferReport, AppError> {
    let section = scenario
        .infer
        .as_ref()
        .ok_or_else(|| AppError::Config("scenario has no [infer] section".into()))?;
    let measured =
        MeasuredVariancePair::new(section.v_plus_meas, section.v_minus_meas, section.sigma)?;
    let chain = scenario.detection_chain()?;
    let chain = if section.electronic_subtracted {
        chain.without_electronic_noise()
    } else {
        chain
    };
    let v_plus = infer_source(measured.v_plus_meas, &chain)?;
    let v_minus = infer_source(measured.v_minus_meas, &chain)?;
    let inferred_purity = purity(v_plus, v_minus);
    let sigma_source = measured.uncertainty.map(|s| infer_source_sigma(s, &chain));
    let ten_over_ln10 = 10.0 / std::f64::consts::LN_10;
    Ok(InferReport {
        eta: total_efficiency(&chain),
        measured_purity: purity(measured.v_plus_meas, measured.v_minus_meas),
        v_plus_source: v_plus,
        v_minus_source: v_minus,
        sigma_source,
        squeezing_db: to_db(v_minus),
        squeezing_db_sigma: sigma_source.map(|s| ten_over_ln10 * s / v_minus),
        antisqueezing_db: to_db(v_plus),
        inferred_purity,
        inferred_purity_sigma: sigma_source.map(|s| purity_sigma(v_plus, s, v_minus, s)),
        purity_physical: purity_is_physical(inferred_purity),
    })
}

/// List the built-in presets; write their scenario files when `out_dir`
/// is given.
pub fn cmd_presets(out_dir: Option<&Path>) -> Result<Vec<(String, Option<PathBuf>)>, AppError> {
    let mut rows = Vec::new();
    for name in PRESET_NAMES {
        let scenario = presets::by_name(name).expect("listed preset exists");
        let written = match out_dir {
            Some(dir) => {
                let (path, mut writer) = open_out(dir, &format!("{name}.toml"))?;
                writer.write_all(scenario.to_toml_string()?.as_bytes())?;
                Some(path)
            }
            None => None,
        };
        rows.push((name.to_string(), written));
    }
    Ok(rows)
}

/// Resolve `--scenario`: an existing file path, else a preset name.
pub fn load_scenario(source: &str) -> Result<Scenario, AppError> {
    let path = Path::new(source);
    if path.exists() {
        let text = fs::read_to_string(path)?;
        return Scenario::from_toml_str(&text);
    }
    presets::by_name(source).ok_or_else(|| {
        AppError::Config(format!(
            "`{source}` is neither a scenario file nor a preset (presets: {})",
            PRESET_NAMES.join(", ")
        ))
    })
}
