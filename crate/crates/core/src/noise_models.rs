//! Laser phase noise as a Wiener process.
//!
//! A free-running laser with a Lorentzian line of FWHM `Δf` has coherence
//! time `τ_c = 1/(πΔf)`. Its phase deviation after an interval `t` is a
//! zero-mean Gaussian of variance `2t/τ_c`, with independent increments over
//! disjoint intervals.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// One free-running laser.
///
/// `center_detuning` is this laser's offset from the nominal carrier; the
/// signal/LO beat frequency is the difference of the two lasers' detunings.
/// `drift_rate` adds a slow linear chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserModel {
    linewidth: f64,
    coherence_time: f64,
    center_detuning: f64,
    drift_rate: f64,
}

impl LaserModel {
    pub fn from_linewidth(linewidth: f64) -> Result<Self> {
        let coherence_time = coherence_time_from_linewidth(linewidth)?;
        Ok(Self { linewidth, coherence_time, center_detuning: 0.0, drift_rate: 0.0 })
    }

    /// `f64::INFINITY` is accepted and yields a noiseless laser.
    pub fn from_coherence_time(coherence_time: f64) -> Result<Self> {
        let linewidth = linewidth_from_coherence_time(coherence_time)?;
        Ok(Self { linewidth, coherence_time, center_detuning: 0.0, drift_rate: 0.0 })
    }

    /// The laser whose phase-noise variance after `delay` equals `variance`.
    pub fn from_phase_variance(variance: f64, delay: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::domain(format!("phase variance must be positive, got {variance}")));
        }
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::domain(format!("delay must be positive, got {delay}")));
        }
        Self::from_coherence_time(2.0 * delay / variance)
    }

    /// A laser with zero linewidth (infinite coherence time).
    pub fn noiseless() -> Self {
        Self { linewidth: 0.0, coherence_time: f64::INFINITY, center_detuning: 0.0, drift_rate: 0.0 }
    }

    pub fn with_detuning(mut self, hz: f64) -> Self {
        self.center_detuning = hz;
        self
    }

    pub fn with_drift_rate(mut self, hz_per_s: f64) -> Self {
        self.drift_rate = hz_per_s;
        self
    }

    pub fn linewidth(&self) -> f64 {
        self.linewidth
    }

    pub fn coherence_time(&self) -> f64 {
        self.coherence_time
    }

    pub fn center_detuning(&self) -> f64 {
        self.center_detuning
    }

    pub fn drift_rate(&self) -> f64 {
        self.drift_rate
    }

    pub fn is_noiseless(&self) -> bool {
        self.coherence_time.is_infinite()
    }

    /// Deterministic phase advance `2π(f_d + ḟ t) t` at time `t`.
    pub fn deterministic_phase(&self, t: f64) -> f64 {
        2.0 * PI * (self.center_detuning + self.drift_rate * t) * t
    }
}

/// `τ_c = 1/(πΔf)` for a Lorentzian line.
pub fn coherence_time_from_linewidth(linewidth: f64) -> Result<f64> {
    if !(linewidth > 0.0) || !linewidth.is_finite() {
        return Err(Error::domain(format!("linewidth must be positive and finite, got {linewidth}")));
    }
    Ok(1.0 / (PI * linewidth))
}

/// Inverse of [`coherence_time_from_linewidth`]; an infinite coherence time
/// maps to zero linewidth.
pub fn linewidth_from_coherence_time(coherence_time: f64) -> Result<f64> {
    if !(coherence_time > 0.0) {
        return Err(Error::domain(format!("coherence time must be positive, got {coherence_time}")));
    }
    Ok(1.0 / (PI * coherence_time))
}

/// Variance `2t/τ_c` of the phase deviation accumulated over `t`.
pub fn phase_noise_variance(t: f64, laser: &LaserModel) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("elapsed time must be non-negative, got {t}")));
    }
    Ok(2.0 * t / laser.coherence_time)
}

/// A sampled phase path `Δθ(t)` at caller-chosen timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectory {
    times: Vec<f64>,
    phases: Vec<f64>,
}

impl PhaseTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Sample the laser phase at `times` (strictly increasing, starting at 0).
///
/// The increment ending at `times[k]` is drawn from sub-stream `k` of `seed`,
/// so a trajectory is a pure function of `(laser, times, seed)`.
pub fn sample_phase_trajectory(laser: &LaserModel, times: &[f64], seed: u64) -> Result<PhaseTrajectory> {
    match times.first() {
        None => return Err(Error::domain("trajectory needs at least one timestamp")),
        Some(&t0) if t0 != 0.0 => return Err(Error::domain(format!("trajectory must start at t = 0, got {t0}"))),
        _ => {}
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::domain(format!("timestamps not strictly increasing: {} then {}", w[0], w[1])));
    }

    let mut phases = Vec::with_capacity(times.len());
    let mut walk = 0.0;
    phases.push(0.0);
    for (k, w) in times.windows(2).enumerate() {
        if !laser.is_noiseless() {
            let dt = w[1] - w[0];
            let z: f64 = StandardNormal.sample(&mut seed::substream(seed, seed::stream::TRIAL, k as u64 + 1));
            walk += (2.0 * dt / laser.coherence_time).sqrt() * z;
        }
        phases.push(walk + laser.deterministic_phase(w[1]));
    }
    Ok(PhaseTrajectory { times: times.to_vec(), phases })
}

/// Delayed self-interference: the laser beats against a copy of itself
/// delayed by `delay`, and the measured phase difference is
/// `θ(t) − θ(t − delay)`. Returns the sample variance of `n_samples`
/// independent measurements, whose expectation is `2·delay/τ_c`.
pub fn simulate_self_interference(laser: &LaserModel, delay: f64, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(stats::variance(&self_interference_samples(laser, delay, n_samples, seed)?))
}

/// The individual phase differences behind [`simulate_self_interference`].
pub fn self_interference_samples(laser: &LaserModel, delay: f64, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if !(delay >= 0.0) || !delay.is_finite() {
        return Err(Error::domain(format!("delay must be non-negative, got {delay}")));
    }
    if n_samples < 2 {
        return Err(Error::domain(format!("need at least 2 samples, got {n_samples}")));
    }
    if delay == 0.0 {
        return Ok(vec![0.0; n_samples]);
    }
    let times = [0.0, delay];
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let traj = sample_phase_trajectory(laser, &times, seed::derive(seed, seed::stream::TRIAL, i as u64))?;
            Ok(traj.phases[1] - traj.phases[0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_linewidth_gives_unit_coherence_time() {
        assert_relative_eq!(coherence_time_from_linewidth(1.0 / PI).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn linewidth_matching_measured_signal_laser() {
        // 2 * 20 ns / τ_c = 0.035  =>  τ_c = 1.142857e-6 s, Δf = 1/(π τ_c)
        let laser = LaserModel::from_phase_variance(0.035, 20e-9).unwrap();
        assert_relative_eq!(laser.coherence_time(), 1.142_857_142_857e-6, max_relative = 1e-9);
        assert_relative_eq!(laser.linewidth(), 2.785e5, max_relative = 1e-3);
        assert_relative_eq!(phase_noise_variance(20e-9, &laser).unwrap(), 0.035, max_relative = 1e-12);
    }

    #[test]
    fn doubling_linewidth_halves_coherence_time() {
        let a = coherence_time_from_linewidth(1e5).unwrap();
        let b = coherence_time_from_linewidth(2e5).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_linewidth_and_time() {
        assert!(matches!(coherence_time_from_linewidth(0.0), Err(Error::Domain(_))));
        assert!(matches!(coherence_time_from_linewidth(-3.0), Err(Error::Domain(_))));
        assert!(matches!(LaserModel::from_linewidth(f64::NAN), Err(Error::Domain(_))));
        let laser = LaserModel::from_linewidth(1e5).unwrap();
        assert!(matches!(phase_noise_variance(-1e-9, &laser), Err(Error::Domain(_))));
    }

    #[test]
    fn variance_is_linear_in_time() {
        let laser = LaserModel::from_linewidth(3e5).unwrap();
        assert_eq!(phase_noise_variance(0.0, &laser).unwrap(), 0.0);
        let v = phase_noise_variance(7e-9, &laser).unwrap();
        assert_relative_eq!(phase_noise_variance(14e-9, &laser).unwrap(), 2.0 * v, max_relative = 1e-15);
    }

    #[test]
    fn single_timestamp_trajectory() {
        let laser = LaserModel::from_linewidth(1e5).unwrap();
        let t = sample_phase_trajectory(&laser, &[0.0], 1).unwrap();
        assert_eq!(t.phases(), &[0.0]);
    }

    #[test]
    fn unordered_times_rejected() {
        let laser = LaserModel::from_linewidth(1e5).unwrap();
        assert!(sample_phase_trajectory(&laser, &[0.0, 2e-9, 1e-9], 1).is_err());
        assert!(sample_phase_trajectory(&laser, &[0.0, 0.0], 1).is_err());
        assert!(sample_phase_trajectory(&laser, &[1e-9, 2e-9], 1).is_err());
        assert!(sample_phase_trajectory(&laser, &[], 1).is_err());
    }

    #[test]
    fn noiseless_detuned_laser_is_a_pure_ramp() {
        let laser = LaserModel::noiseless().with_detuning(3e6);
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 20e-9).collect();
        let t = sample_phase_trajectory(&laser, &times, 9).unwrap();
        for (tk, ph) in t.times().iter().zip(t.phases()) {
            assert_relative_eq!(*ph, 2.0 * PI * 3e6 * tk, max_relative = 1e-14);
        }
    }

    #[test]
    fn reseeding_reproduces_bits() {
        let laser = LaserModel::from_linewidth(1e5).unwrap().with_drift_rate(1e9);
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 1e-8).collect();
        let a = sample_phase_trajectory(&laser, &times, 77).unwrap();
        let b = sample_phase_trajectory(&laser, &times, 77).unwrap();
        let c = sample_phase_trajectory(&laser, &times, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_delay_self_interference_is_exactly_zero() {
        let laser = LaserModel::from_linewidth(1e5).unwrap();
        assert_eq!(simulate_self_interference(&laser, 0.0, 100, 3).unwrap(), 0.0);
        assert!(simulate_self_interference(&laser, 1e-9, 1, 3).is_err());
        assert!(simulate_self_interference(&laser, -1e-9, 10, 3).is_err());
    }
}
