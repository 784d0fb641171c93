//! Scenario runners: the BPSK phase-recovery run, the weak-reference sweep,
//! quadrature remapping of weak signals, the self-interference laser-noise
//! sweep, and key-rate sweeps over distance and block length.
//!
//! Monte Carlo runners split their work into independent sub-batches, each
//! with its own derived seed. Batches run in parallel; results are gathered
//! in batch order, so output does not depend on the thread count. Standard
//! errors are batch-means errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::link_sim::{simulate_run, ChannelDetector, Modulation, PulseTrainConfig, QuadratureSample};
use crate::noise_models::{phase_noise_variance, self_interference_samples, LaserModel};
use crate::output::{ExperimentResult, Series};
use crate::phase_recovery::{
    predicted_sigma_phi, recover_run, remap_quadratures, residual_variance, residuals, sigma_phi_from_quadratures,
    wrap_phase, Recovery,
};
use crate::security::{
    asymptotic_breakdown, finite_size_breakdown, DeltaAssignment, GaussianConfidenceBound, SecurityParams,
};
use crate::seed::{self, stream};
use crate::stats::{self, Estimate};

pub const HISTOGRAM_BINS: usize = 100;
pub const UNIFORMITY_SIGNIFICANCE: f64 = 0.01;
pub const MIN_BATCHES: usize = 10;
/// Each batch needs two recovered signals per BPSK symbol.
pub const MIN_PAIRS_PER_BATCH: usize = 4;
pub const DISTANCE_RESOLUTION_KM: f64 = 0.1;
pub const PULSE_COUNT_RESOLUTION: f64 = 1.05;

/// Lasers, pulse spacing and detector shared by the phase experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bench {
    pub signal_laser: LaserModel,
    pub lo_laser: LaserModel,
    /// Pulse spacing `T_d`, s.
    pub repetition_period: f64,
    pub detector: ChannelDetector,
    pub batches: usize,
}

impl Default for Bench {
    /// Per-delay variances 0.035 (signal) and 0.044 (LO) at 20 ns, a 4 MHz
    /// beat note, 25 km of fiber and a detector with η = 0.5 and 0.83 SNU
    /// excess noise.
    fn default() -> Self {
        let td = 20e-9;
        Self {
            signal_laser: LaserModel::from_phase_variance(0.035, td).expect("positive"),
            lo_laser: LaserModel::from_phase_variance(0.044, td).expect("positive").with_detuning(4e6),
            repetition_period: td,
            detector: ChannelDetector::new(0.2, 25.0, 0.5, 0.83),
            batches: MIN_BATCHES,
        }
    }
}

impl Bench {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_period > 0.0) {
            return Err(Error::config("repetition_period must be positive"));
        }
        if self.batches < MIN_BATCHES {
            return Err(Error::config(format!("batches must be at least {MIN_BATCHES}, got {}", self.batches)));
        }
        self.detector.validate()
    }

    /// `(v_S + v_L)/2` at the bench's pulse spacing.
    pub fn predicted_sigma_phi(&self) -> Result<f64> {
        predicted_sigma_phi(
            phase_noise_variance(self.repetition_period, &self.signal_laser)?,
            phase_noise_variance(self.repetition_period, &self.lo_laser)?,
        )
    }

    /// Shot-noise phase variance of one pulse with `photons` at the receiver:
    /// `(1 + ν_el)/(2ηn)`.
    pub fn shot_noise_phase_variance(&self, photons: f64) -> f64 {
        (1.0 + self.detector.electronic_noise) / (2.0 * self.detector.detector_efficiency * photons)
    }

    /// The raw pulse train of sub-batch `batch` when `n_pairs` are split
    /// across all batches. Every batch gets one extra pair so its final
    /// signal still has a following reference once the boundary signal is
    /// dropped.
    pub fn batch_samples(
        &self,
        batch: usize,
        n_pairs: usize,
        signal_photons: f64,
        reference_photons: f64,
        modulation: Modulation,
        seed: u64,
    ) -> Result<Vec<QuadratureSample>> {
        self.validate()?;
        if n_pairs < MIN_PAIRS_PER_BATCH * self.batches {
            return Err(Error::config(format!(
                "n_pairs ({n_pairs}) must be at least {MIN_PAIRS_PER_BATCH} per batch ({} batches)",
                self.batches
            )));
        }
        if batch >= self.batches {
            return Err(Error::config(format!("batch {batch} out of range for {} batches", self.batches)));
        }
        let (base, extra) = (n_pairs / self.batches, n_pairs % self.batches);
        let train = PulseTrainConfig {
            repetition_period: self.repetition_period,
            n_pairs: base + usize::from(batch < extra) + 1,
            signal_photons,
            reference_photons,
            modulation,
        };
        simulate_run(
            &train,
            (&self.signal_laser, &self.lo_laser),
            &self.detector,
            seed::derive(seed, stream::BATCH, batch as u64),
        )
    }

    fn recovered_batches(
        &self,
        n_pairs: usize,
        signal_photons: f64,
        reference_photons: f64,
        modulation: Modulation,
        seed: u64,
    ) -> Result<Vec<(Vec<QuadratureSample>, Recovery)>> {
        (0..self.batches)
            .into_par_iter()
            .map(|b| {
                let samples = self.batch_samples(b, n_pairs, signal_photons, reference_photons, modulation, seed)?;
                let rec = recover_run(&samples)?;
                Ok((samples, rec))
            })
            .collect()
    }
}

fn metadata<C: Serialize>(config: &C, seed: Option<u64>) -> serde_json::Value {
    json!({ "config": config, "seed": seed })
}

fn histogram_series(name: &str, angles: &[f64]) -> Series {
    let mut s = Series::new(name, "phase_rad", "count");
    let width = TAU / HISTOGRAM_BINS as f64;
    for (i, c) in stats::angle_histogram(angles, HISTOGRAM_BINS).into_iter().enumerate() {
        s.push((i as f64 + 0.5) * width, c as f64, None);
    }
    s
}

/// Adds the chi-square uniformity metrics; skipped when there are too few
/// angles for the expected count per bin.
fn insert_uniformity(result: &mut ExperimentResult, prefix: &str, angles: &[f64]) -> Result<()> {
    if angles.len() < 5 * HISTOGRAM_BINS {
        return Ok(());
    }
    let test = stats::angle_uniformity(angles, HISTOGRAM_BINS, UNIFORMITY_SIGNIFICANCE)?;
    result.insert(&format!("{prefix}_chi_square"), Estimate::exact(test.statistic));
    result.insert(&format!("{prefix}_chi_square_critical"), Estimate::exact(test.critical_value));
    result.insert(&format!("{prefix}_uniformity_pass"), Estimate::exact(f64::from(u8::from(test.passes()))));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpskConfig {
    pub bench: Bench,
    pub n_pairs: usize,
    pub signal_photons: f64,
    pub reference_photons: f64,
    pub phase0: f64,
    pub phase1: f64,
}

impl Default for BpskConfig {
    fn default() -> Self {
        Self {
            bench: Bench::default(),
            n_pairs: 25_000,
            signal_photons: 1e5,
            reference_photons: 1e5,
            phase0: 0.0,
            phase1: 1.65,
        }
    }
}

struct BpskData {
    raw: Vec<f64>,
    corrected: Vec<f64>,
    encoded: Vec<f64>,
    per_batch_symbol_var: Vec<Vec<f64>>,
    per_batch_all_var: Vec<f64>,
    dropped: usize,
    ties: usize,
}

fn bpsk_data(cfg: &BpskConfig, reference_photons: f64, seed: u64) -> Result<BpskData> {
    let modulation = Modulation::Bpsk { phase0: cfg.phase0, phase1: cfg.phase1 };
    let batches = cfg.bench.recovered_batches(cfg.n_pairs, cfg.signal_photons, reference_photons, modulation, seed)?;
    let mut d = BpskData {
        raw: Vec::new(),
        corrected: Vec::new(),
        encoded: Vec::new(),
        per_batch_symbol_var: Vec::new(),
        per_batch_all_var: Vec::new(),
        dropped: 0,
        ties: 0,
    };
    for (_, rec) in &batches {
        // Signal i of a batch sits at slot 2i + 1 and carries bit i mod 2.
        let encoded: Vec<f64> =
            (0..rec.corrected.len()).map(|i| modulation.encoded_phase(i as u64).unwrap_or(0.0)).collect();
        let groups = residual_variance(&rec.corrected, &encoded)?;
        d.per_batch_symbol_var.push(groups.iter().map(|g| g.variance).collect());
        d.per_batch_all_var.push(stats::variance(&residuals(&rec.corrected, &encoded)?));
        d.raw.extend_from_slice(&rec.raw_phases);
        d.corrected.extend_from_slice(&rec.corrected);
        d.encoded.extend(encoded);
        d.dropped += rec.dropped;
        d.ties += rec.antipodal_ties;
    }
    Ok(d)
}

/// BPSK phase-encoding run with strong pulses: raw and corrected phase
/// histograms per bit and the residual phase variance per bit.
pub fn run_bpsk_phase_experiment(cfg: &BpskConfig, seed: u64) -> Result<ExperimentResult> {
    let d = bpsk_data(cfg, cfg.reference_photons, seed)?;
    let mut result = ExperimentResult::new("phase-exp", metadata(cfg, Some(seed)));

    let groups = residual_variance(&d.corrected, &d.encoded)?;
    for (k, g) in groups.iter().enumerate() {
        let batch: Vec<f64> = d.per_batch_symbol_var.iter().map(|v| v[k]).collect();
        let se = stats::batch_means(&batch)?.standard_error.unwrap_or(0.0);
        let label = if g.symbol == cfg.phase0 { "bit0" } else { "bit1" };
        result.insert(&format!("residual_variance_{label}"), Estimate::with_error(g.variance, se));
        if g.exceeds_linear_regime {
            result.insert(&format!("linear_regime_warning_{label}"), Estimate::exact(g.variance));
        }
    }
    let all = stats::variance(&residuals(&d.corrected, &d.encoded)?);
    let se = stats::batch_means(&d.per_batch_all_var)?.standard_error.unwrap_or(0.0);
    result.insert("residual_variance", Estimate::with_error(all, se));

    let predicted = cfg.bench.predicted_sigma_phi()?;
    let shot = cfg.bench.shot_noise_phase_variance(cfg.signal_photons)
        + 0.5 * cfg.bench.shot_noise_phase_variance(cfg.reference_photons);
    result.insert("predicted_sigma_phi", Estimate::exact(predicted));
    result.insert("predicted_shot_noise", Estimate::exact(shot));
    result.insert("predicted_total", Estimate::exact(predicted + shot));
    result.insert("boundary_dropped", Estimate::exact(d.dropped as f64));
    result.insert("antipodal_ties", Estimate::exact(d.ties as f64));
    insert_uniformity(&mut result, "raw", &d.raw)?;

    for (bit, phase) in [("bit0", cfg.phase0), ("bit1", cfg.phase1)] {
        let pick = |xs: &[f64]| -> Vec<f64> {
            xs.iter().zip(&d.encoded).filter(|(_, e)| **e == phase).map(|(v, _)| *v).collect()
        };
        result.series.push(histogram_series(&format!("raw_{bit}"), &pick(&d.raw)));
        result.series.push(histogram_series(&format!("corrected_{bit}"), &pick(&d.corrected)));
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakReferenceConfig {
    pub base: BpskConfig,
    pub reference_photons: Vec<f64>,
}

impl Default for WeakReferenceConfig {
    fn default() -> Self {
        Self { base: BpskConfig::default(), reference_photons: vec![10_000.0, 1_000.0, 100.0] }
    }
}

/// Residual phase variance as a function of reference photon number. All
/// points share one seed, so laser and detector draws are common across the
/// sweep and only the reference amplitude changes.
pub fn run_weak_reference_sweep(cfg: &WeakReferenceConfig, seed: u64) -> Result<ExperimentResult> {
    if cfg.reference_photons.is_empty() || cfg.reference_photons.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::config("reference_photons must be a non-empty list of positive numbers"));
    }
    let mut result = ExperimentResult::new("weak-ref", metadata(cfg, Some(seed)));
    let mut series = Series::new("residual_variance", "reference_photons", "residual_variance_rad2");
    let mut predicted = Series::new("predicted", "reference_photons", "residual_variance_rad2");
    let laser_part = cfg.base.bench.predicted_sigma_phi()?;
    for &n in &cfg.reference_photons {
        let d = bpsk_data(&cfg.base, n, seed)?;
        let v = stats::variance(&residuals(&d.corrected, &d.encoded)?);
        let se = stats::batch_means(&d.per_batch_all_var)?.standard_error.unwrap_or(0.0);
        series.push(n, v, Some(se));
        let p = laser_part
            + cfg.base.bench.shot_noise_phase_variance(cfg.base.signal_photons)
            + 0.5 * cfg.base.bench.shot_noise_phase_variance(n);
        predicted.push(n, p, None);
        result.insert(&format!("residual_variance_nref_{n}"), Estimate::with_error(v, se));
    }
    result.insert("predicted_sigma_phi", Estimate::exact(laser_part));
    result.series.push(series);
    result.series.push(predicted);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapConfig {
    pub bench: Bench,
    pub n_pairs: usize,
    pub signal_photons: f64,
    pub reference_photons: f64,
}

impl Default for RemapConfig {
    fn default() -> Self {
        Self { bench: Bench::default(), n_pairs: 24_000, signal_photons: 66.0, reference_photons: 1_000.0 }
    }
}

/// Weak unmodulated signals remapped with the recovered phase: raw and
/// remapped scatter, the X-quadrature noise variance, and `σ_φ` from the
/// P/X variance asymmetry.
pub fn run_quantum_remap_experiment(cfg: &RemapConfig, seed: u64) -> Result<ExperimentResult> {
    let batches =
        cfg.bench.recovered_batches(cfg.n_pairs, cfg.signal_photons, cfg.reference_photons, Modulation::None, seed)?;
    let mut raw = Vec::new();
    let mut remapped = Vec::new();
    let mut raw_angles = Vec::new();
    let mut batch_sigma = Vec::new();
    let mut batch_var_x = Vec::new();
    let mut batch_var_p = Vec::new();
    let mut batch_mean_x = Vec::new();
    for (samples, rec) in &batches {
        let mut local = Vec::with_capacity(rec.signal_positions.len());
        for (&pos, &phi) in rec.signal_positions.iter().zip(&rec.interpolated) {
            let s = &samples[pos];
            raw.push((s.x, s.p));
            local.push(remap_quadratures(s.x, s.p, phi));
        }
        batch_sigma.push(sigma_phi_from_quadratures(&local)?);
        let (xs, ps): (Vec<f64>, Vec<f64>) = local.iter().copied().unzip();
        batch_var_x.push(stats::variance(&xs));
        batch_var_p.push(stats::variance(&ps));
        batch_mean_x.push(stats::mean(&xs));
        raw_angles.extend_from_slice(&rec.raw_phases);
        remapped.extend(local);
    }

    let mut result = ExperimentResult::new("remap-exp", metadata(cfg, Some(seed)));
    let (xs, ps): (Vec<f64>, Vec<f64>) = remapped.iter().copied().unzip();
    let se = |v: &[f64]| stats::batch_means(v).map(|e| e.standard_error.unwrap_or(0.0));
    result.insert("x_noise_variance", Estimate::with_error(stats::variance(&xs), se(&batch_var_x)?));
    result.insert("p_noise_variance", Estimate::with_error(stats::variance(&ps), se(&batch_var_p)?));
    result.insert("x_mean", Estimate::with_error(stats::mean(&xs), se(&batch_mean_x)?));
    result
        .insert("sigma_phi_estimate", Estimate::with_error(sigma_phi_from_quadratures(&remapped)?, se(&batch_sigma)?));
    result.insert("detector_noise_snu", Estimate::exact(1.0 + cfg.bench.detector.electronic_noise));
    result.insert(
        "predicted_sigma_phi",
        Estimate::exact(
            cfg.bench.predicted_sigma_phi()? + 0.5 * cfg.bench.shot_noise_phase_variance(cfg.reference_photons),
        ),
    );
    insert_uniformity(&mut result, "raw", &raw_angles)?;

    let mut raw_series = Series::new("raw_scatter", "x_snu", "p_snu");
    raw.iter().for_each(|&(x, p)| raw_series.push(x, p, None));
    let mut remap_series = Series::new("remapped_scatter", "x_snu", "p_snu");
    remapped.iter().for_each(|&(x, p)| remap_series.push(x, p, None));
    result.series.push(raw_series);
    result.series.push(remap_series);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFloorConfig {
    pub bench: Bench,
    pub n_pairs: usize,
    pub reference_photons: f64,
}

impl Default for ReferenceFloorConfig {
    fn default() -> Self {
        let bench = Bench {
            signal_laser: LaserModel::noiseless(),
            lo_laser: LaserModel::noiseless(),
            detector: ChannelDetector::new(0.2, 25.0, 0.5, 0.0),
            ..Bench::default()
        };
        Self { bench, n_pairs: 100_000, reference_photons: 1_000.0 }
    }
}

/// Variance of single reference-pulse phase estimates about the true phase;
/// with noiseless lasers this is the shot-noise floor `(1 + ν_el)/(2ηn)`.
pub fn run_reference_noise_floor(cfg: &ReferenceFloorConfig, seed: u64) -> Result<ExperimentResult> {
    let batches = cfg.bench.recovered_batches(
        cfg.n_pairs,
        cfg.reference_photons,
        cfg.reference_photons,
        Modulation::None,
        seed,
    )?;
    let mut all = Vec::new();
    let mut per_batch = Vec::new();
    for (samples, rec) in &batches {
        let errs: Vec<f64> = rec
            .references
            .iter()
            .map(|r| wrap_phase(r.value - samples[r.source_index].true_phase.unwrap_or(0.0)))
            .collect();
        per_batch.push(stats::variance(&errs));
        all.extend(errs);
    }
    let mut result = ExperimentResult::new("reference-floor", metadata(cfg, Some(seed)));
    let se = stats::batch_means(&per_batch)?.standard_error.unwrap_or(0.0);
    result.insert("reference_phase_variance", Estimate::with_error(stats::variance(&all), se));
    result.insert("predicted", Estimate::exact(cfg.bench.shot_noise_phase_variance(cfg.reference_photons)));
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserNoiseConfig {
    pub signal_laser: LaserModel,
    pub lo_laser: LaserModel,
    /// Self-interference delays, s.
    pub delays: Vec<f64>,
    pub samples_per_delay: usize,
    pub batches: usize,
}

impl Default for LaserNoiseConfig {
    fn default() -> Self {
        let bench = Bench::default();
        Self {
            signal_laser: bench.signal_laser,
            lo_laser: bench.lo_laser,
            delays: vec![5e-9, 20e-9, 25e-9],
            samples_per_delay: 100_000,
            batches: MIN_BATCHES,
        }
    }
}

/// Delayed self-interference of each laser over a set of delays, with a
/// least-squares line through the origin per laser.
pub fn run_laser_noise_sweep(cfg: &LaserNoiseConfig, seed: u64) -> Result<ExperimentResult> {
    if cfg.delays.is_empty() || cfg.delays.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::config("delays must be a non-empty list of positive times"));
    }
    if cfg.batches < MIN_BATCHES || cfg.samples_per_delay < 2 * cfg.batches {
        return Err(Error::config("need at least 10 batches of 2 samples each"));
    }
    let mut result = ExperimentResult::new("laser-noise", metadata(cfg, Some(seed)));
    for (li, (label, laser)) in [("signal", &cfg.signal_laser), ("lo", &cfg.lo_laser)].into_iter().enumerate() {
        let mut series = Series::new(&format!("{label}_laser"), "delay_s", "phase_variance_rad2");
        let mut variances = Vec::with_capacity(cfg.delays.len());
        let mut batch_variances = vec![Vec::with_capacity(cfg.delays.len()); cfg.batches];
        for (di, &delay) in cfg.delays.iter().enumerate() {
            let s = seed::derive(seed, stream::LASER_SWEEP, (li * 1_000 + di) as u64);
            let samples = self_interference_samples(laser, delay, cfg.samples_per_delay, s)?;
            let n = samples.len();
            let per_batch: Vec<f64> = (0..cfg.batches)
                .map(|b| stats::variance(&samples[b * n / cfg.batches..(b + 1) * n / cfg.batches]))
                .collect();
            for (b, v) in per_batch.iter().enumerate() {
                batch_variances[b].push(*v);
            }
            let v = stats::variance(&samples);
            let se = stats::batch_means(&per_batch)?.standard_error.unwrap_or(0.0);
            series.push(delay, v, Some(se));
            variances.push(v);
            result.insert(&format!("{label}_variance_{:.0}ns", delay * 1e9), Estimate::with_error(v, se));
        }
        let fit = stats::fit_through_origin(&cfg.delays, &variances)?;
        let batch_fits =
            batch_variances.iter().map(|vs| stats::fit_through_origin(&cfg.delays, vs)).collect::<Result<Vec<_>>>()?;
        let slopes: Vec<f64> = batch_fits.iter().map(|f| f.slope).collect();
        let r2: Vec<f64> = batch_fits.iter().map(|f| f.r_squared).collect();
        let se = |v: &[f64]| stats::batch_means(v).map(|e| e.standard_error.unwrap_or(0.0));
        result.insert(&format!("{label}_slope"), Estimate::with_error(fit.slope, se(&slopes)?));
        result.insert(&format!("{label}_r_squared"), Estimate::with_error(fit.r_squared, se(&r2)?));
        result.insert(&format!("{label}_expected_slope"), Estimate::exact(2.0 / laser.coherence_time()));
        result.series.push(series);
    }
    Ok(result)
}

/// Single-point asymptotic key rate and its ingredients.
pub fn keyrate_asymptotic(params: &SecurityParams) -> Result<ExperimentResult> {
    let r = asymptotic_breakdown(params)?;
    let mut result = ExperimentResult::new("keyrate-asymptotic", metadata(params, None));
    result.insert("rate", Estimate::exact(r.rate));
    result.insert("mutual_information", Estimate::exact(r.mutual_information));
    result.insert("holevo_bound", Estimate::exact(r.holevo));
    result.insert("transmittance", Estimate::exact(r.budget.transmittance));
    result.insert("excess_noise", Estimate::exact(r.budget.excess_noise));
    for (i, l) in r.spectrum.lambda.iter().enumerate() {
        result.insert(&format!("lambda{}", i + 1), Estimate::exact(*l));
    }
    Ok(result)
}

/// Single-point finite-size key rate and its ingredients.
pub fn keyrate_finite(params: &SecurityParams, assignment: DeltaAssignment) -> Result<ExperimentResult> {
    let r = finite_size_breakdown(params, &GaussianConfidenceBound, assignment)?;
    let mut result = ExperimentResult::new("keyrate-finite", metadata(&(params, assignment), None));
    result.insert("rate", Estimate::exact(r.rate));
    result.insert("mutual_information", Estimate::exact(r.mutual_information));
    result.insert("worst_case_holevo", Estimate::exact(r.worst_case.holevo));
    result.insert("worst_case_transmittance", Estimate::exact(r.worst_case.transmittance));
    result.insert("worst_case_excess_noise", Estimate::exact(r.worst_case.excess_noise));
    result.insert("correction", Estimate::exact(r.correction));
    Ok(result)
}

/// Default distance grid: 0 to 150 km in 5 km steps.
pub fn default_distance_grid() -> Vec<f64> {
    (0..=30).map(|i| 5.0 * i as f64).collect()
}

/// Default pulse-count grid: 10³ to 10¹³ in quarter decades.
pub fn default_pulse_grid() -> Vec<u64> {
    (0..=40).map(|i| 10f64.powf(3.0 + 0.25 * i as f64).round() as u64).collect()
}

/// Bisect `f` on `[lo, hi]` assuming `f(lo) > 0 >= f(hi)`, until `done`.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> Result<f64>,
    mid: impl Fn(f64, f64) -> f64,
    done: impl Fn(f64, f64) -> bool,
) -> Result<f64> {
    while !done(lo, hi) {
        let m = mid(lo, hi);
        if f(m)? > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(mid(lo, hi))
}

/// Asymptotic rate over fiber length, with the zero crossing located by
/// bisection to 0.1 km.
pub fn run_keyrate_distance_sweep(params: &SecurityParams, grid: &[f64]) -> Result<ExperimentResult> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("distance grid must be strictly increasing with at least 2 points"));
    }
    let rate_at = |l: f64| -> Result<f64> { Ok(asymptotic_breakdown(&params.with_fiber_length(l))?.rate) };
    let points: Vec<_> = grid
        .par_iter()
        .map(|&l| asymptotic_breakdown(&params.with_fiber_length(l)).map(|r| (l, r)))
        .collect::<Result<_>>()?;

    let mut result = ExperimentResult::new("sweep-distance", metadata(&(params, grid), None));
    let mut rate = Series::new("rate", "fiber_length_km", "rate_bits_per_pulse");
    let mut info = Series::new("mutual_information", "fiber_length_km", "bits_per_pulse");
    let mut holevo = Series::new("holevo_bound", "fiber_length_km", "bits_per_pulse");
    for (l, r) in &points {
        rate.push(*l, r.rate, None);
        info.push(*l, r.mutual_information, None);
        holevo.push(*l, r.holevo, None);
    }
    let crossing = points.windows(2).find(|w| w[0].1.rate > 0.0 && w[1].1.rate <= 0.0);
    match crossing {
        Some(w) => {
            let z = bisect(w[0].0, w[1].0, rate_at, |a, b| 0.5 * (a + b), |a, b| b - a <= DISTANCE_RESOLUTION_KM)?;
            result.insert("zero_crossing_km", Estimate::exact(z));
        }
        None => result.insert("zero_crossing_found", Estimate::exact(0.0)),
    }
    result.insert("rate_at_start", Estimate::exact(points[0].1.rate));
    result.series.extend([rate, info, holevo]);
    Ok(result)
}

/// Finite-size rate over pulse count; reports the smallest `n` with a
/// positive rate, refined by geometric bisection to a factor of 1.05.
pub fn run_finite_size_sweep(params: &SecurityParams, grid: &[u64]) -> Result<ExperimentResult> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("pulse grid must be strictly increasing with at least 2 points"));
    }
    let rate_at = |n: f64| -> Result<f64> {
        let p = SecurityParams { n_pulses: n.round() as u64, ..*params };
        Ok(finite_size_breakdown(&p, &GaussianConfidenceBound, DeltaAssignment::Standard)?.rate)
    };
    let rates: Vec<f64> = grid.par_iter().map(|&n| rate_at(n as f64)).collect::<Result<_>>()?;

    let mut result = ExperimentResult::new("sweep-n", metadata(&(params, grid), None));
    let mut series = Series::new("rate", "pulses", "rate_bits_per_pulse");
    for (&n, &r) in grid.iter().zip(&rates) {
        series.push(n as f64, r, None);
    }
    match rates.iter().position(|&r| r > 0.0) {
        Some(0) => result.insert("threshold_pulses", Estimate::exact(grid[0] as f64)),
        Some(i) => {
            // Geometric bisection keeping R > 0 at the upper end.
            let (mut a, mut b) = (grid[i - 1] as f64, grid[i] as f64);
            while b / a > PULSE_COUNT_RESOLUTION {
                let m = (a * b).sqrt();
                if rate_at(m)? > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            result.insert("threshold_pulses", Estimate::exact(b.round()));
        }
        None => result.insert("threshold_found", Estimate::exact(0.0)),
    }
    result.series.push(series);
    Ok(result)
}
