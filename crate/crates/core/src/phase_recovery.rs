//! Pilot-aided feedforward phase recovery.
//!
//! Each reference pulse yields an estimate of the signal/LO phase offset. The
//! offset at a signal pulse is taken as the midpoint of its two neighbouring
//! reference estimates, and the signal data are then rotated back
//! (quadrature remapping).
//!
//! Midpoints are taken along the shorter arc, which is unambiguous as long as
//! the beat frequency stays below `1/(4T_d)`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::link_sim::{PulseKind, QuadratureSample};
use crate::stats;

/// Residual variances above this are outside the small-angle regime where
/// the wrapped linear variance approximates the circular one.
pub const LINEAR_REGIME_LIMIT: f64 = 0.5;

/// Reduce an angle to the principal range `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    /// Principal-range phase, rad.
    pub value: f64,
    /// Schedule slot of the pulse the estimate came from.
    pub source_index: usize,
}

/// Phase offset `φ = −atan2(P_R, X_R)` inferred from a reference pulse.
pub fn estimate_phase(x_r: f64, p_r: f64) -> Result<f64> {
    if x_r == 0.0 && p_r == 0.0 {
        return Err(Error::Estimation("phase of the zero vector is undefined".into()));
    }
    Ok(wrap_phase(-p_r.atan2(x_r)))
}

/// Angle of a measured quadrature vector, the "raw" phase of a signal pulse.
pub fn measured_angle(x: f64, p: f64) -> f64 {
    wrap_phase(p.atan2(x))
}

/// Midpoint of the shorter arc from `phi_i` to `phi_next`. Antipodal inputs
/// resolve toward the positive direction (see [`is_antipodal`]).
pub fn interpolate_phase(phi_i: f64, phi_next: f64) -> f64 {
    let d = wrap_phase(phi_next - phi_i);
    wrap_phase(phi_i + 0.5 * d)
}

/// Whether the two phases are (numerically) half a turn apart, in which case
/// the midpoint is ambiguous.
pub fn is_antipodal(phi_i: f64, phi_next: f64) -> bool {
    wrap_phase(phi_next - phi_i).abs() >= PI - 1e-12
}

/// Rotate Bob's data by `phi`:
/// `(x cos φ − p sin φ, x sin φ + p cos φ)`.
pub fn remap_quadratures(x_b: f64, p_b: f64, phi: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    (x_b * c - p_b * s, x_b * s + p_b * c)
}

/// `φ_cor,i = φ_raw,i + φ̄_S,i` where `φ̄_S,i` interpolates references `i`
/// and `i+1`.
pub fn correct_phases(raw: &[f64], references: &[PhaseEstimate]) -> Result<Vec<f64>> {
    if references.len() != raw.len() + 1 {
        return Err(Error::Schedule(format!(
            "{} raw phases need {} references, got {}",
            raw.len(),
            raw.len() + 1,
            references.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(references.windows(2))
        .map(|(r, w)| wrap_phase(r + interpolate_phase(w[0].value, w[1].value)))
        .collect())
}

/// Expected residual variance of the midpoint estimator, `(v_S + v_L)/2`,
/// given each laser's phase-noise variance over one pulse spacing.
pub fn predicted_sigma_phi(var_s: f64, var_l: f64) -> Result<f64> {
    if !(var_s >= 0.0) || !(var_l >= 0.0) {
        return Err(Error::domain(format!("variances must be non-negative, got ({var_s}, {var_l})")));
    }
    Ok(0.5 * (var_s + var_l))
}

/// Residual statistics for one encoded symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolResidual {
    pub symbol: f64,
    pub count: usize,
    pub variance: f64,
    pub standard_error: f64,
    /// Set when the variance exceeds [`LINEAR_REGIME_LIMIT`].
    pub exceeds_linear_regime: bool,
}

/// Wrapped differences `corrected − encoded`.
pub fn residuals(corrected: &[f64], encoded: &[f64]) -> Result<Vec<f64>> {
    if corrected.len() != encoded.len() {
        return Err(Error::Schedule(format!(
            "{} corrected phases vs {} encoded phases",
            corrected.len(),
            encoded.len()
        )));
    }
    Ok(corrected.iter().zip(encoded).map(|(c, e)| wrap_phase(c - e)).collect())
}

/// Sample variance of the wrapped residuals, grouped by encoded symbol and
/// ordered by symbol value.
pub fn residual_variance(corrected: &[f64], encoded: &[f64]) -> Result<Vec<SymbolResidual>> {
    let diffs = residuals(corrected, encoded)?;
    if diffs.is_empty() {
        return Err(Error::Estimation("no residuals to group".into()));
    }
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (d, e) in diffs.into_iter().zip(encoded) {
        // Order-preserving key for finite floats.
        let bits = e.to_bits();
        let key = if e.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry(key).or_insert_with(|| (*e, Vec::new())).1.push(d);
    }
    groups
        .into_values()
        .map(|(symbol, ds)| {
            if ds.len() < 2 {
                return Err(Error::Estimation(format!(
                    "symbol {symbol} has {} residual(s); need at least 2",
                    ds.len()
                )));
            }
            let variance = stats::variance(&ds);
            Ok(SymbolResidual {
                symbol,
                count: ds.len(),
                variance,
                standard_error: stats::variance_standard_error(variance, ds.len()),
                exceeds_linear_regime: variance > LINEAR_REGIME_LIMIT,
            })
        })
        .collect()
}

/// Phase-noise variance from the asymmetry of a remapped, unmodulated
/// signal cloud: `(Var[p'] − Var[x'])/mean[x']²`.
pub fn sigma_phi_from_quadratures(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::Estimation(format!("need at least 100 samples, got {}", samples.len())));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ps: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let x0 = stats::mean(&xs);
    let var_x = stats::variance(&xs);
    let var_p = stats::variance(&ps);
    // mean[x'] indistinguishable from zero at 3 standard errors
    if x0.abs() <= 3.0 * (var_x / xs.len() as f64).sqrt() {
        return Err(Error::Estimation(format!("mean X quadrature {x0} is indistinguishable from zero")));
    }
    Ok((var_p - var_x) / (x0 * x0))
}

/// Output of [`recover_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// Positions (into the sample slice) of the signals that were recovered.
    pub signal_positions: Vec<usize>,
    pub raw_phases: Vec<f64>,
    pub references: Vec<PhaseEstimate>,
    /// `φ̄_S,i` for each recovered signal.
    pub interpolated: Vec<f64>,
    pub corrected: Vec<f64>,
    /// Signals without a following reference.
    pub dropped: usize,
    /// Midpoints taken between antipodal references.
    pub antipodal_ties: usize,
}

/// Run the full feedforward pipeline over a `R S R S …` sample sequence.
pub fn recover_run(samples: &[QuadratureSample]) -> Result<Recovery> {
    let mut references = Vec::new();
    let mut signals = Vec::new();
    for (pos, s) in samples.iter().enumerate() {
        let expected = if pos % 2 == 0 { PulseKind::Reference } else { PulseKind::Signal };
        if s.kind != expected {
            return Err(Error::Schedule(format!("slot {pos} holds a {} pulse, expected {expected}", s.kind)));
        }
        match s.kind {
            PulseKind::Reference => {
                references.push(PhaseEstimate { value: estimate_phase(s.x, s.p)?, source_index: s.index })
            }
            PulseKind::Signal => signals.push(pos),
        }
    }
    let usable = signals.len().min(references.len().saturating_sub(1));
    let dropped = signals.len() - usable;
    signals.truncate(usable);
    references.truncate(usable + 1);

    let raw_phases: Vec<f64> = signals.iter().map(|&i| measured_angle(samples[i].x, samples[i].p)).collect();
    let interpolated: Vec<f64> = references.windows(2).map(|w| interpolate_phase(w[0].value, w[1].value)).collect();
    let antipodal_ties = references.windows(2).filter(|w| is_antipodal(w[0].value, w[1].value)).count();
    let corrected = correct_phases(&raw_phases, &references)?;
    Ok(Recovery { signal_positions: signals, raw_phases, references, interpolated, corrected, dropped, antipodal_ties })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn circ_dist(a: f64, b: f64) -> f64 {
        wrap_phase(a - b).abs()
    }

    #[test]
    fn estimate_phase_cardinal_points() {
        assert_eq!(estimate_phase(1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(estimate_phase(0.0, 1.0).unwrap(), -FRAC_PI_2);
        assert_eq!(estimate_phase(-1.0, 0.0).unwrap(), PI);
        assert!(matches!(estimate_phase(0.0, 0.0), Err(Error::Estimation(_))));
    }

    #[test]
    fn wrap_keeps_principal_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert_relative_eq!(wrap_phase(3.0 * PI / 2.0), -FRAC_PI_2);
    }

    #[test]
    fn midpoint_examples() {
        assert_relative_eq!(interpolate_phase(0.1, 0.3), 0.2, max_relative = 1e-14);
        assert!(circ_dist(interpolate_phase(3.1, -3.1), PI) < 1e-12);
        let (phi0, step) = (0.7, 2.0 * PI * 5e6 * 20e-9);
        let mid = interpolate_phase(phi0, wrap_phase(phi0 + 2.0 * step));
        assert!(circ_dist(mid, phi0 + step) < 1e-12);
    }

    #[test]
    fn antipodal_tie_goes_positive() {
        assert!(is_antipodal(0.0, PI));
        assert_relative_eq!(interpolate_phase(0.0, PI), FRAC_PI_2);
        assert!(!is_antipodal(0.1, 0.3));
    }

    #[test]
    fn remap_examples() {
        assert_eq!(remap_quadratures(1.5, -0.5, 0.0), (1.5, -0.5));
        let (x, p) = remap_quadratures(2.0, 3.0, FRAC_PI_2);
        assert_relative_eq!(x, -3.0, epsilon = 1e-15);
        assert_relative_eq!(p, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn remap_with_true_phase_undoes_the_channel_rotation() {
        use crate::link_sim::{heterodyne_mean, ChannelDetector};
        let det = ChannelDetector::ideal().with_transmittance(1.0);
        let gain = 0.5f64.sqrt();
        let (xa, pa, phi) = (1.3, -0.4, 2.2);
        let (xb, pb) = heterodyne_mean(xa, pa, phi, &det);
        let (x, p) = remap_quadratures(xb / gain, pb / gain, phi);
        assert_relative_eq!(x, xa, max_relative = 1e-14);
        assert_relative_eq!(p, pa, max_relative = 1e-13);
    }

    #[test]
    fn correct_phases_constant_references() {
        let refs: Vec<PhaseEstimate> = (0..5).map(|i| PhaseEstimate { value: 0.4, source_index: 2 * i }).collect();
        let out = correct_phases(&[0.0; 4], &refs).unwrap();
        assert!(out.iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(matches!(correct_phases(&[0.0; 5], &refs), Err(Error::Schedule(_))));
    }

    #[test]
    fn predicted_sigma_phi_examples() {
        assert_relative_eq!(predicted_sigma_phi(0.035, 0.044).unwrap(), 0.0395, max_relative = 1e-15);
        assert_eq!(predicted_sigma_phi(0.02, 0.02).unwrap(), 0.02);
        assert_eq!(predicted_sigma_phi(0.0, 0.0).unwrap(), 0.0);
        assert!(predicted_sigma_phi(-0.1, 0.0).is_err());
    }

    #[test]
    fn residual_variance_of_perfect_correction_is_zero() {
        let enc = [0.0, 1.65, 0.0, 1.65, 0.0, 1.65];
        let groups = residual_variance(&enc, &enc).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].symbol, 0.0);
        assert_eq!(groups[1].symbol, 1.65);
        assert!(groups.iter().all(|g| g.variance == 0.0 && g.count == 3));
    }

    #[test]
    fn residual_variance_errors() {
        assert!(matches!(residual_variance(&[], &[]), Err(Error::Estimation(_))));
        assert!(matches!(residual_variance(&[0.0], &[0.0, 1.0]), Err(Error::Schedule(_))));
        assert!(matches!(residual_variance(&[0.0, 0.1, 0.2], &[0.0, 0.0, 1.0]), Err(Error::Estimation(_))));
    }

    #[test]
    fn residuals_wrap_across_the_branch_cut() {
        let groups = residual_variance(&[PI - 0.01, -PI + 0.01, PI], &[PI; 3]).unwrap();
        assert!(groups[0].variance < 1e-3);
    }

    #[test]
    fn wide_residuals_are_flagged() {
        let c: Vec<f64> = (0..100).map(|i| wrap_phase(i as f64)).collect();
        let g = residual_variance(&c, &vec![0.0; 100]).unwrap();
        assert!(g[0].exceeds_linear_regime);
    }

    #[test]
    fn sigma_phi_needs_a_displaced_cloud() {
        let centred: Vec<(f64, f64)> = (0..200).map(|i| if i % 2 == 0 { (1.0, 0.5) } else { (-1.0, -0.5) }).collect();
        assert!(sigma_phi_from_quadratures(&centred).is_err());
        assert!(sigma_phi_from_quadratures(&centred[..50]).is_err());
        let symmetric: Vec<(f64, f64)> = (0..200).map(|i| if i % 2 == 0 { (9.0, 1.0) } else { (11.0, -1.0) }).collect();
        assert!(sigma_phi_from_quadratures(&symmetric).unwrap().abs() < 1e-12);
    }

    #[test]
    fn recover_run_rejects_broken_schedule() {
        let s = |kind, index| QuadratureSample { x: 1.0, p: 0.0, kind, index, true_phase: None, alice: None };
        let bad = [s(PulseKind::Signal, 0), s(PulseKind::Reference, 1)];
        assert!(matches!(recover_run(&bad), Err(Error::Schedule(_))));
        let good =
            [s(PulseKind::Reference, 0), s(PulseKind::Signal, 1), s(PulseKind::Reference, 2), s(PulseKind::Signal, 3)];
        let r = recover_run(&good).unwrap();
        assert_eq!(r.dropped, 1);
        assert_eq!(r.corrected.len(), 1);
        assert_eq!(r.references.len(), 2);
    }
}
