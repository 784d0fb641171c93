//! The optical link: interleaved reference/signal pulse train, modulation,
//! lossy fiber and heterodyne detection.
//!
//! Quadratures are in shot-noise units: vacuum variance is 1 and a coherent
//! state with mean photon number `n` has a mean quadrature vector of length
//! `2√n`. Heterodyne detection splits the input 50:50, so each output
//! quadrature carries `√(Tη/2)` of the input amplitude plus noise of variance
//! `1 + ν_el`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::noise_models::{sample_phase_trajectory, LaserModel};
use crate::seed::{self, stream};

/// What Alice writes on the signal pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    /// Both quadratures i.i.d. zero-mean Gaussian with `variance` (SNU).
    Gaussian { variance: f64 },
    /// Alternating bits `0101…`, bit `b` encoded as a coherent point at
    /// angle `phase0` or `phase1`.
    Bpsk { phase0: f64, phase1: f64 },
    /// Unmodulated coherent point at angle 0.
    None,
}

impl Modulation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Modulation::Gaussian { variance } if !(variance > 0.0) || !variance.is_finite() => {
                Err(Error::config(format!("gaussian modulation variance must be positive, got {variance}")))
            }
            Modulation::Bpsk { phase0, phase1 } if !phase0.is_finite() || !phase1.is_finite() => {
                Err(Error::config("bpsk phases must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Encoded angle of signal `index`, when the modulation is phase-only.
    pub fn encoded_phase(&self, index: u64) -> Option<f64> {
        match *self {
            Modulation::Bpsk { phase0, phase1 } => Some(if index.is_multiple_of(2) { phase0 } else { phase1 }),
            Modulation::None => Some(0.0),
            Modulation::Gaussian { .. } => None,
        }
    }
}

/// Alice's quadratures for signal `index`. `amplitude` is the coherent
/// amplitude (`2√n`) used by the phase-only modulations.
pub fn modulate_signal(modulation: &Modulation, amplitude: f64, index: u64, seed: u64) -> Result<(f64, f64)> {
    modulation.validate()?;
    Ok(match *modulation {
        Modulation::Gaussian { variance } => {
            let mut rng = seed::substream(seed, stream::MODULATION, index);
            let sd = variance.sqrt();
            let x: f64 = StandardNormal.sample(&mut rng);
            let p: f64 = StandardNormal.sample(&mut rng);
            (sd * x, sd * p)
        }
        _ => {
            let theta = modulation.encoded_phase(index).unwrap_or(0.0);
            (amplitude * theta.cos(), amplitude * theta.sin())
        }
    })
}

/// Coherent amplitude `2√n` of a state with mean photon number `n`.
pub fn coherent_amplitude(photons: f64) -> f64 {
    2.0 * photons.sqrt()
}

/// Interleaved schedule `R₀ S₀ R₁ S₁ …`: reference `i` at `2i·T_d`, signal `i`
/// at `(2i+1)·T_d`, so each signal sits midway between its two references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainConfig {
    /// Spacing between consecutive pulses (`T_d`), seconds.
    pub repetition_period: f64,
    pub n_pairs: usize,
    /// Mean photon number per signal pulse at the receiver.
    pub signal_photons: f64,
    /// Mean photon number per reference pulse at the receiver.
    pub reference_photons: f64,
    pub modulation: Modulation,
}

impl PulseTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_period > 0.0) || !self.repetition_period.is_finite() {
            return Err(Error::config(format!("repetition_period must be positive, got {}", self.repetition_period)));
        }
        if !(self.signal_photons >= 0.0) || !(self.reference_photons >= 0.0) {
            return Err(Error::config("photon numbers must be non-negative"));
        }
        self.modulation.validate()
    }

    /// Timestamp of schedule slot `slot` (even = reference, odd = signal).
    pub fn slot_time(&self, slot: usize) -> f64 {
        slot as f64 * self.repetition_period
    }
}

/// Fiber channel plus detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDetector {
    /// Fiber attenuation α, dB/km.
    pub attenuation: f64,
    /// Fiber length L, km.
    pub fiber_length: f64,
    /// Replaces `10^(−αL/10)` when set.
    pub transmittance_override: Option<f64>,
    /// η ∈ (0, 1].
    pub detector_efficiency: f64,
    /// ν_el ≥ 0, shot-noise units.
    pub electronic_noise: f64,
}

impl ChannelDetector {
    pub fn new(attenuation: f64, fiber_length: f64, detector_efficiency: f64, electronic_noise: f64) -> Self {
        Self { attenuation, fiber_length, transmittance_override: None, detector_efficiency, electronic_noise }
    }

    /// Back-to-back link with an ideal detector.
    pub fn ideal() -> Self {
        Self::new(0.0, 0.0, 1.0, 0.0)
    }

    pub fn with_transmittance(mut self, t: f64) -> Self {
        self.transmittance_override = Some(t);
        self
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance_override.unwrap_or_else(|| 10f64.powf(-self.attenuation * self.fiber_length / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation >= 0.0) || !self.attenuation.is_finite() {
            return Err(Error::config(format!("attenuation must be non-negative, got {}", self.attenuation)));
        }
        if !(self.fiber_length >= 0.0) || !self.fiber_length.is_finite() {
            return Err(Error::config(format!("fiber_length must be non-negative, got {}", self.fiber_length)));
        }
        let t = self.transmittance();
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!("transmittance must lie in (0, 1], got {t}")));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::config(format!(
                "detector_efficiency must lie in (0, 1], got {}",
                self.detector_efficiency
            )));
        }
        if !(self.electronic_noise >= 0.0) || !self.electronic_noise.is_finite() {
            return Err(Error::config(format!("electronic_noise must be non-negative, got {}", self.electronic_noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Signal,
    Reference,
}

impl fmt::Display for PulseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PulseKind::Signal => "signal",
            PulseKind::Reference => "reference",
        })
    }
}

/// One heterodyne outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub x: f64,
    pub p: f64,
    pub kind: PulseKind,
    /// Schedule slot; unique within a run.
    pub index: usize,
    /// Ground-truth signal/LO phase difference at detection (validation only).
    pub true_phase: Option<f64>,
    /// Alice's quadratures for signal pulses (validation only).
    pub alice: Option<(f64, f64)>,
}

/// Heterodyne detection of a coherent input `(x_in, p_in)` whose optical
/// phase is offset by `phase_offset` from the LO:
///
/// ```text
/// X = √(Tη/2)(x cos φ + p sin φ) + N_X
/// P = √(Tη/2)(−x sin φ + p cos φ) + N_P,   N ~ 𝒩(0, 1 + ν_el)
/// ```
pub fn heterodyne_measure<R: Rng + ?Sized>(
    x_in: f64,
    p_in: f64,
    phase_offset: f64,
    det: &ChannelDetector,
    rng: &mut R,
) -> (f64, f64) {
    let (mx, mp) = heterodyne_mean(x_in, p_in, phase_offset, det);
    let noise = Normal::new(0.0, (1.0 + det.electronic_noise).sqrt()).expect("validated detector");
    (mx + noise.sample(rng), mp + noise.sample(rng))
}

/// Noise-free part of [`heterodyne_measure`].
pub fn heterodyne_mean(x_in: f64, p_in: f64, phase_offset: f64, det: &ChannelDetector) -> (f64, f64) {
    let gain = (det.transmittance() * det.detector_efficiency / 2.0).sqrt();
    let (s, c) = phase_offset.sin_cos();
    (gain * (x_in * c + p_in * s), gain * (-x_in * s + p_in * c))
}

/// Simulate one pulse train through the link.
///
/// `lasers` is `(signal laser, LO laser)`; the phase offset seen by the
/// detector is `θ_LO(t) − θ_S(t)`. Photon numbers are referred to the
/// receiver, so Alice launches `n/T` photons. Every stochastic draw is
/// addressed by slot index, so output is a pure function of the arguments.
pub fn simulate_run(
    train: &PulseTrainConfig,
    lasers: (&LaserModel, &LaserModel),
    det: &ChannelDetector,
    seed: u64,
) -> Result<Vec<QuadratureSample>> {
    train.validate()?;
    det.validate()?;
    if train.n_pairs < 2 {
        return Err(Error::config(format!("n_pairs must be at least 2, got {}", train.n_pairs)));
    }
    let slots = 2 * train.n_pairs;
    let times: Vec<f64> = (0..slots).map(|k| train.slot_time(k)).collect();
    let signal_path = sample_phase_trajectory(lasers.0, &times, seed::derive(seed, stream::SIGNAL_LASER, 0))?;
    let lo_path = sample_phase_trajectory(lasers.1, &times, seed::derive(seed, stream::LO_LASER, 0))?;

    let launch = 1.0 / det.transmittance();
    let ref_amplitude = coherent_amplitude(train.reference_photons * launch);
    let sig_amplitude = coherent_amplitude(train.signal_photons * launch);
    let modulation_seed = seed::derive(seed, stream::MODULATION, 0);
    let detector_seed = seed::derive(seed, stream::DETECTOR, 0);

    let mut out = Vec::with_capacity(slots);
    for k in 0..slots {
        let phi = lo_path.phases()[k] - signal_path.phases()[k];
        let (kind, input, alice) = if k % 2 == 0 {
            (PulseKind::Reference, (ref_amplitude, 0.0), None)
        } else {
            let a = modulate_signal(&train.modulation, sig_amplitude, (k / 2) as u64, modulation_seed)?;
            (PulseKind::Signal, a, Some(a))
        };
        let mut rng = seed::substream(detector_seed, stream::DETECTOR, k as u64);
        let (x, p) = heterodyne_measure(input.0, input.1, phi, det, &mut rng);
        out.push(QuadratureSample { x, p, kind, index: k, true_phase: Some(phi), alice });
    }
    Ok(out)
}

/// Raw-sample export with columns `index,kind,x,p,true_phase`.
pub fn write_samples_csv<W: Write>(writer: W, samples: &[QuadratureSample]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "kind", "x", "p", "true_phase"])?;
    for s in samples {
        w.write_record([
            s.index.to_string(),
            s.kind.to_string(),
            format!("{:.16e}", s.x),
            format!("{:.16e}", s.p),
            s.true_phase.map(|v| format!("{v:.16e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unmodulated_point_has_length_two_root_n() {
        let (x, p) = modulate_signal(&Modulation::None, coherent_amplitude(25.0), 0, 1).unwrap();
        assert_eq!((x, p), (10.0, 0.0));
    }

    #[test]
    fn bpsk_alternates_and_hits_encoded_angle() {
        let m = Modulation::Bpsk { phase0: 0.0, phase1: 1.65 };
        let (x0, p0) = modulate_signal(&m, 2.0, 0, 1).unwrap();
        let (x1, p1) = modulate_signal(&m, 2.0, 1, 1).unwrap();
        assert_relative_eq!(p0.atan2(x0), 0.0);
        assert_relative_eq!(p1.atan2(x1), 1.65, max_relative = 1e-15);
        assert_relative_eq!((x1 * x1 + p1 * p1).sqrt(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn gaussian_modulation_rejects_non_positive_variance() {
        assert!(matches!(modulate_signal(&Modulation::Gaussian { variance: 0.0 }, 1.0, 0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn transmittance_from_fiber() {
        let det = ChannelDetector::new(0.2, 50.0, 1.0, 0.0);
        assert_relative_eq!(det.transmittance(), 0.1, max_relative = 1e-15);
        assert_eq!(ChannelDetector::new(0.2, 0.0, 1.0, 0.0).transmittance(), 1.0);
        assert_eq!(det.with_transmittance(0.3).transmittance(), 0.3);
    }

    #[test]
    fn detector_validation() {
        assert!(ChannelDetector::new(0.2, 10.0, 0.0, 0.0).validate().is_err());
        assert!(ChannelDetector::new(0.2, 10.0, 1.1, 0.0).validate().is_err());
        assert!(ChannelDetector::new(0.2, 10.0, 0.5, -0.1).validate().is_err());
        assert!(ChannelDetector::new(0.2, -1.0, 0.5, 0.1).validate().is_err());
        assert!(ChannelDetector::ideal().with_transmittance(0.0).validate().is_err());
        assert!(ChannelDetector::new(0.2, 10.0, 0.5, 0.1).validate().is_ok());
    }

    #[test]
    fn noiseless_limit_scales_input() {
        let det = ChannelDetector::new(0.0, 0.0, 0.5, 0.0).with_transmittance(0.64);
        let gain = (0.64f64 * 0.5 / 2.0).sqrt();
        let (x, p) = heterodyne_mean(3.0, -1.0, 0.0, &det);
        assert_relative_eq!(x, gain * 3.0, max_relative = 1e-15);
        assert_relative_eq!(p, -gain, max_relative = 1e-15);
    }

    #[test]
    fn static_interferometer_has_constant_phase() {
        let train = PulseTrainConfig {
            repetition_period: 20e-9,
            n_pairs: 50,
            signal_photons: 100.0,
            reference_photons: 100.0,
            modulation: Modulation::None,
        };
        let l = LaserModel::noiseless();
        let run = simulate_run(&train, (&l, &l), &ChannelDetector::ideal(), 5).unwrap();
        assert_eq!(run.len(), 100);
        assert!(run.iter().all(|s| s.true_phase == Some(0.0)));
        assert!(run.iter().enumerate().all(|(k, s)| s.index == k));
        assert_eq!(run[0].kind, PulseKind::Reference);
        assert_eq!(run[1].kind, PulseKind::Signal);
    }

    #[test]
    fn constant_detuning_advances_phase_per_slot() {
        let train = PulseTrainConfig {
            repetition_period: 20e-9,
            n_pairs: 20,
            signal_photons: 1.0,
            reference_photons: 1.0,
            modulation: Modulation::None,
        };
        let s = LaserModel::noiseless();
        let lo = LaserModel::noiseless().with_detuning(2e6);
        let run = simulate_run(&train, (&s, &lo), &ChannelDetector::ideal(), 5).unwrap();
        let step = 2.0 * std::f64::consts::PI * 2e6 * 20e-9;
        for w in run.windows(2) {
            assert_relative_eq!(w[1].true_phase.unwrap() - w[0].true_phase.unwrap(), step, max_relative = 1e-9);
        }
    }

    #[test]
    fn run_needs_two_pairs() {
        let train = PulseTrainConfig {
            repetition_period: 20e-9,
            n_pairs: 1,
            signal_photons: 1.0,
            reference_photons: 1.0,
            modulation: Modulation::None,
        };
        let l = LaserModel::noiseless();
        assert!(simulate_run(&train, (&l, &l), &ChannelDetector::ideal(), 5).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let s = QuadratureSample {
            x: 1.0,
            p: -0.5,
            kind: PulseKind::Signal,
            index: 3,
            true_phase: Some(0.25),
            alice: None,
        };
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,kind,x,p,true_phase"));
        assert_eq!(lines.next(), Some("3,signal,1.0000000000000000e0,-5.0000000000000000e-1,2.5000000000000000e-1"));
    }
}
