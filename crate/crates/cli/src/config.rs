//! Run configuration: paper defaults, overlaid by an optional JSON file and
//! then by `path=value` overrides. Unknown keys are rejected with the full
//! path of the offending field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use llo_sim_core::experiments::{
    default_distance_grid, default_pulse_grid, Bench, BpskConfig, LaserNoiseConfig, RemapConfig, WeakReferenceConfig,
    MIN_BATCHES, MIN_PAIRS_PER_BATCH,
};
use llo_sim_core::link_sim::ChannelDetector;
use llo_sim_core::noise_models::LaserModel;
use llo_sim_core::security::{DeltaAssignment, EpsilonBudget, SecurityParams};

use crate::CliError;

/// One laser. Exactly one of `linewidth`, `coherence_time` or
/// `phase_variance` sets the phase-noise strength; `phase_variance` is the
/// self-interference variance at the pulse spacing `train.repetition_period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    /// Hz.
    pub linewidth: Option<f64>,
    /// s.
    pub coherence_time: Option<f64>,
    /// rad².
    pub phase_variance: Option<f64>,
    /// Hz.
    pub detuning: f64,
    /// Hz/s.
    pub drift_rate: f64,
}

impl LaserSection {
    fn from_variance(variance: f64, detuning: f64) -> Self {
        Self { linewidth: None, coherence_time: None, phase_variance: Some(variance), detuning, drift_rate: 0.0 }
    }

    fn resolve(&self, field: &str, delay: f64) -> Result<LaserModel, CliError> {
        let set = [self.linewidth.is_some(), self.coherence_time.is_some(), self.phase_variance.is_some()];
        if set.iter().filter(|s| **s).count() != 1 {
            return Err(CliError::Config(format!(
                "{field}: set exactly one of linewidth, coherence_time, phase_variance"
            )));
        }
        let (name, result) = if let Some(lw) = self.linewidth {
            ("linewidth", LaserModel::from_linewidth(lw))
        } else if let Some(tc) = self.coherence_time {
            ("coherence_time", LaserModel::from_coherence_time(tc))
        } else {
            ("phase_variance", LaserModel::from_phase_variance(self.phase_variance.unwrap_or_default(), delay))
        };
        let laser = result.map_err(|e| CliError::Config(format!("{field}.{name}: {e}")))?;
        for (name, v) in [("detuning", self.detuning), ("drift_rate", self.drift_rate)] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("{field}.{name} must be finite, got {v}")));
            }
        }
        Ok(laser.with_detuning(self.detuning).with_drift_rate(self.drift_rate))
    }
}

/// Pulse train of the phase experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Pulse spacing, s.
    pub repetition_period: f64,
    pub n_pairs: usize,
    /// Photons per signal pulse at the receiver.
    pub signal_photons: f64,
    /// Photons per reference pulse at the receiver.
    pub reference_photons: f64,
    /// BPSK phases, rad.
    pub phase0: f64,
    pub phase1: f64,
    /// Independent sub-batches for standard errors.
    pub batches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// dB/km.
    pub attenuation: f64,
    /// km.
    pub fiber_length: f64,
    /// Overrides the fiber loss when set.
    pub transmittance: Option<f64>,
    pub detector_efficiency: f64,
    /// SNU.
    pub electronic_noise: f64,
}

impl ChannelSection {
    fn new(attenuation: f64, fiber_length: f64, detector_efficiency: f64, electronic_noise: f64) -> Self {
        Self { attenuation, fiber_length, transmittance: None, detector_efficiency, electronic_noise }
    }

    fn resolve(&self, field: &str) -> Result<ChannelDetector, CliError> {
        let mut det =
            ChannelDetector::new(self.attenuation, self.fiber_length, self.detector_efficiency, self.electronic_noise);
        if let Some(t) = self.transmittance {
            det = det.with_transmittance(t);
        }
        det.validate().map_err(|e| CliError::Config(format!("{field}: {e}")))?;
        Ok(det)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecuritySection {
    /// V_A, SNU.
    pub modulation_variance: f64,
    /// f (asymptotic) and β (finite-size).
    pub reconciliation_efficiency: f64,
    /// Residual phase variance, rad².
    pub sigma_phi: f64,
    pub epsilon: EpsilonBudget,
    pub discretization: u32,
    pub robustness: f64,
    pub n_pulses: u64,
    pub delta_assignment: DeltaAssignment,
}

impl Default for SecuritySection {
    fn default() -> Self {
        let p = SecurityParams::default();
        Self {
            modulation_variance: p.modulation_variance,
            reconciliation_efficiency: p.reconciliation_efficiency,
            sigma_phi: p.sigma_phi,
            epsilon: p.epsilon,
            discretization: p.discretization,
            robustness: p.robustness,
            n_pulses: p.n_pulses,
            delta_assignment: DeltaAssignment::default(),
        }
    }
}

impl SecuritySection {
    fn resolve(&self, channel: ChannelDetector) -> Result<SecurityParams, CliError> {
        let p = SecurityParams {
            modulation_variance: self.modulation_variance,
            reconciliation_efficiency: self.reconciliation_efficiency,
            sigma_phi: self.sigma_phi,
            channel,
            epsilon: self.epsilon,
            discretization: self.discretization,
            robustness: self.robustness,
            n_pulses: self.n_pulses,
        };
        p.validate().map_err(|e| CliError::Config(format!("security: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakRefSection {
    pub reference_photons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemapSection {
    pub n_pairs: usize,
    pub signal_photons: f64,
    pub reference_photons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserNoiseSection {
    /// s.
    pub delays: Vec<f64>,
    pub samples_per_delay: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSweepSection {
    /// km.
    pub grid: Vec<f64>,
}

/// Finite-size sweep over pulse count; it has its own link because the
/// reference scenario uses a short link and ideal detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSweepSection {
    pub grid: Vec<u64>,
    pub channel: ChannelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command used when none is given on the command line.
    pub experiment: Option<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub laser_s: LaserSection,
    pub laser_l: LaserSection,
    pub train: TrainSection,
    /// Detector of the phase experiments.
    pub bench: ChannelSection,
    /// Link of the key-rate commands.
    pub channel: ChannelSection,
    pub security: SecuritySection,
    pub weak_ref: WeakRefSection,
    pub remap: RemapSection,
    pub laser_noise: LaserNoiseSection,
    pub sweep_distance: DistanceSweepSection,
    pub sweep_n: PulseSweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bpsk = BpskConfig::default();
        let bench = Bench::default();
        let remap = RemapConfig::default();
        let laser_noise = LaserNoiseConfig::default();
        let d = bench.detector;
        Self {
            experiment: None,
            seed: 1,
            output_dir: PathBuf::from("results"),
            laser_s: LaserSection::from_variance(0.035, 0.0),
            laser_l: LaserSection::from_variance(0.044, bench.lo_laser.center_detuning()),
            train: TrainSection {
                repetition_period: bench.repetition_period,
                n_pairs: bpsk.n_pairs,
                signal_photons: bpsk.signal_photons,
                reference_photons: bpsk.reference_photons,
                phase0: bpsk.phase0,
                phase1: bpsk.phase1,
                batches: MIN_BATCHES,
            },
            bench: ChannelSection::new(d.attenuation, d.fiber_length, d.detector_efficiency, d.electronic_noise),
            channel: ChannelSection::new(0.2, 0.0, 0.5, 0.1),
            security: SecuritySection::default(),
            weak_ref: WeakRefSection { reference_photons: WeakReferenceConfig::default().reference_photons },
            remap: RemapSection {
                n_pairs: remap.n_pairs,
                signal_photons: remap.signal_photons,
                reference_photons: remap.reference_photons,
            },
            laser_noise: LaserNoiseSection {
                delays: laser_noise.delays,
                samples_per_delay: laser_noise.samples_per_delay,
            },
            sweep_distance: DistanceSweepSection { grid: default_distance_grid() },
            sweep_n: PulseSweepSection {
                grid: default_pulse_grid(),
                channel: ChannelSection::new(0.2, 10.0, 1.0, 0.0),
            },
        }
    }
}

/// Core-library views of a validated [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub bpsk: BpskConfig,
    pub weak_ref: WeakReferenceConfig,
    pub remap: RemapConfig,
    pub laser_noise: LaserNoiseConfig,
    pub security: SecurityParams,
    pub delta_assignment: DeltaAssignment,
    pub distance_grid: Vec<f64>,
    pub pulse_security: SecurityParams,
    pub pulse_grid: Vec<u64>,
}

impl RunConfig {
    /// Validate every section and build the core configurations.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let td = self.train.repetition_period;
        if !(td > 0.0) || !td.is_finite() {
            return Err(CliError::Config(format!("train.repetition_period must be positive, got {td}")));
        }
        if self.train.batches < MIN_BATCHES {
            return Err(CliError::Config(format!(
                "train.batches must be at least {MIN_BATCHES}, got {}",
                self.train.batches
            )));
        }
        let bench = Bench {
            signal_laser: self.laser_s.resolve("laser_s", td)?,
            lo_laser: self.laser_l.resolve("laser_l", td)?,
            repetition_period: td,
            detector: self.bench.resolve("bench")?,
            batches: self.train.batches,
        };
        for (name, v) in [
            ("train.signal_photons", self.train.signal_photons),
            ("train.reference_photons", self.train.reference_photons),
            ("remap.signal_photons", self.remap.signal_photons),
            ("remap.reference_photons", self.remap.reference_photons),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("train.phase0", self.train.phase0), ("train.phase1", self.train.phase1)] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, n) in [("train.n_pairs", self.train.n_pairs), ("remap.n_pairs", self.remap.n_pairs)] {
            if n < MIN_PAIRS_PER_BATCH * self.train.batches {
                return Err(CliError::Config(format!(
                    "{name} must be at least {MIN_PAIRS_PER_BATCH} x train.batches ({}), got {n}",
                    self.train.batches
                )));
            }
        }
        if self.weak_ref.reference_photons.is_empty() || self.weak_ref.reference_photons.iter().any(|n| !(*n > 0.0)) {
            return Err(CliError::Config("weak_ref.reference_photons must be non-empty and positive".into()));
        }
        if self.laser_noise.delays.is_empty() || self.laser_noise.delays.iter().any(|d| !(*d > 0.0)) {
            return Err(CliError::Config("laser_noise.delays must be non-empty and positive".into()));
        }
        if self.laser_noise.samples_per_delay < 2 * self.train.batches {
            return Err(CliError::Config(format!(
                "laser_noise.samples_per_delay must be at least twice train.batches, got {}",
                self.laser_noise.samples_per_delay
            )));
        }
        let g = &self.sweep_distance.grid;
        if g.len() < 2 || g.windows(2).any(|w| !(w[1] > w[0])) || g[0] < 0.0 {
            return Err(CliError::Config(
                "sweep_distance.grid must be non-negative, strictly increasing, with at least 2 points".into(),
            ));
        }
        let g = &self.sweep_n.grid;
        if g.len() < 2 || g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("sweep_n.grid must be strictly increasing with at least 2 points".into()));
        }

        let bpsk = BpskConfig {
            bench,
            n_pairs: self.train.n_pairs,
            signal_photons: self.train.signal_photons,
            reference_photons: self.train.reference_photons,
            phase0: self.train.phase0,
            phase1: self.train.phase1,
        };
        let security = self.security.resolve(self.channel.resolve("channel")?)?;
        let pulse_security = self.security.resolve(self.sweep_n.channel.resolve("sweep_n.channel")?)?;
        Ok(Resolved {
            bpsk,
            weak_ref: WeakReferenceConfig { base: bpsk, reference_photons: self.weak_ref.reference_photons.clone() },
            remap: RemapConfig {
                bench,
                n_pairs: self.remap.n_pairs,
                signal_photons: self.remap.signal_photons,
                reference_photons: self.remap.reference_photons,
            },
            laser_noise: LaserNoiseConfig {
                signal_laser: bench.signal_laser,
                lo_laser: bench.lo_laser,
                delays: self.laser_noise.delays.clone(),
                samples_per_delay: self.laser_noise.samples_per_delay,
                batches: self.train.batches,
            },
            security,
            delta_assignment: self.security.delta_assignment,
            distance_grid: self.sweep_distance.grid.clone(),
            pulse_security,
            pulse_grid: self.sweep_n.grid.clone(),
        })
    }
}

/// Recursively overlay `patch` onto `base`. Objects merge key by key; any
/// other value replaces the base value.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

const LASER_STRENGTHS: [&str; 3] = ["linewidth", "coherence_time", "phase_variance"];

/// Merge `patch` into `root`. A patch that sets one laser noise strength
/// clears the other two, so `laser_s.linewidth=...` alone is unambiguous.
fn overlay(root: &mut Value, patch: Value) {
    for laser in ["laser_s", "laser_l"] {
        let Some(section) = patch.get(laser).and_then(Value::as_object) else { continue };
        if LASER_STRENGTHS.iter().any(|k| section.contains_key(*k)) {
            if let Some(base) = root.get_mut(laser).and_then(Value::as_object_mut) {
                for k in LASER_STRENGTHS {
                    base.insert(k.to_string(), Value::Null);
                }
            }
        }
    }
    merge(root, patch);
}

/// Apply a `dotted.path=value` override. The value is parsed as JSON, or
/// taken as a string when it is not valid JSON.
fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` must have the form path=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{assignment}` has an empty path segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut patch = value;
    for key in path.rsplit('.') {
        let mut obj = serde_json::Map::new();
        obj.insert(key.to_string(), patch);
        patch = Value::Object(obj);
    }
    overlay(root, patch);
    Ok(())
}

/// Build a [`RunConfig`] from defaults, an optional JSON file and
/// `path=value` overrides, in that order.
pub fn parse_config(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut root = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        if !text.trim().is_empty() {
            let patch: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !patch.is_object() {
                return Err(CliError::Config(format!("{}: top level must be a JSON object", path.display())));
            }
            overlay(&mut root, patch);
        }
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = parse_config(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let r = cfg.resolve().unwrap();
        assert_eq!(r.security.channel.attenuation, 0.2);
        assert_eq!(r.security.channel.electronic_noise, 0.1);
        assert_eq!(r.security.channel.detector_efficiency, 0.5);
        assert_eq!(r.security.reconciliation_efficiency, 0.95);
        assert_eq!(r.security.modulation_variance, 1.0);
        assert_eq!(r.security.sigma_phi, 0.04);
        assert_eq!(r.bpsk.bench.repetition_period, 20e-9);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg =
            parse_config(None, &["channel.fiber_length=0".into(), "security.epsilon.epsilon=1e-10".into()]).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.security.channel.transmittance(), 1.0);
        assert_eq!(r.security.epsilon.epsilon, 1e-10);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = parse_config(None, &["channel.fibre_length=3".into()]).unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
        assert!(err.to_string().contains("fibre_length"), "{err}");
    }

    #[test]
    fn negative_linewidth_names_the_field() {
        let cfg = parse_config(None, &["laser_s.linewidth=-5".into()]).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("laser_s.linewidth"), "{err}");
    }

    #[test]
    fn setting_one_strength_clears_the_default() {
        let cfg = parse_config(None, &["laser_l.linewidth=1e5".into()]).unwrap();
        assert_eq!(cfg.laser_l.phase_variance, None);
        assert_eq!(cfg.laser_l.detuning, 4e6);
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn two_noise_strengths_are_ambiguous() {
        let cfg = parse_config(None, &[r#"laser_l={"linewidth":1e5,"coherence_time":1e-6}"#.into()]).unwrap();
        assert!(cfg.resolve().unwrap_err().to_string().contains("laser_l"));
    }

    #[test]
    fn malformed_override_is_rejected() {
        assert!(parse_config(None, &["seed".into()]).is_err());
        assert!(parse_config(None, &["a..b=1".into()]).is_err());
    }

    #[test]
    fn string_values_fall_back_from_json() {
        let cfg = parse_config(None, &["security.delta_assignment=swapped".into()]).unwrap();
        assert_eq!(cfg.security.delta_assignment, DeltaAssignment::Swapped);
    }
}
