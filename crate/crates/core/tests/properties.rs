use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;

use llo_sim_core::link_sim::{
    heterodyne_measure, simulate_run, ChannelDetector, Modulation, PulseKind, PulseTrainConfig,
};
use llo_sim_core::noise_models::{
    coherence_time_from_linewidth, linewidth_from_coherence_time, sample_phase_trajectory, self_interference_samples,
    LaserModel,
};
use llo_sim_core::phase_recovery::{estimate_phase, recover_run, remap_quadratures, residual_variance, wrap_phase};
use llo_sim_core::security::{
    asymptotic_breakdown, asymptotic_key_rate, finite_size_breakdown, finite_size_correction, symplectic_eigenvalues,
    DeltaAssignment, GaussianConfidenceBound, NoiseBudget, SecurityParams, EIGENVALUE_TOLERANCE,
};
use llo_sim_core::seed::substream;
use llo_sim_core::stats;

fn within_3se(measured: f64, expected: f64, se: f64) -> bool {
    (measured - expected).abs() <= 3.0 * se
}

#[test]
fn wiener_increments_add_in_variance() {
    let laser = LaserModel::from_linewidth(2e5).unwrap();
    let n = 100_000;
    let v = |delay: f64, seed: u64| stats::variance(&self_interference_samples(&laser, delay, n, seed).unwrap());
    let (t1, t2) = (10e-9, 15e-9);
    let (v1, v2, v12) = (v(t1, 1), v(t2, 2), v(t1 + t2, 3));
    let se = (stats::variance_standard_error(v1, n).powi(2)
        + stats::variance_standard_error(v2, n).powi(2)
        + stats::variance_standard_error(v12, n).powi(2))
    .sqrt();
    assert!(within_3se(v1 + v2, v12, se), "{v1} + {v2} vs {v12} (SE {se})");
}

#[test]
fn phase_increments_are_gaussian() {
    let laser = LaserModel::from_phase_variance(0.044, 20e-9).unwrap();
    let n = 100_000;
    let xs = self_interference_samples(&laser, 20e-9, n, 11).unwrap();
    let skew_se = (6.0 / n as f64).sqrt();
    let kurt_se = (24.0 / n as f64).sqrt();
    assert!(stats::skewness(&xs).abs() <= 3.0 * skew_se, "skewness {}", stats::skewness(&xs));
    assert!(stats::excess_kurtosis(&xs).abs() <= 3.0 * kurt_se, "kurtosis {}", stats::excess_kurtosis(&xs));
}

#[test]
fn trajectories_are_reproducible() {
    let laser = LaserModel::from_linewidth(1e5).unwrap().with_detuning(3e6);
    let times: Vec<f64> = (0..500).map(|k| k as f64 * 20e-9).collect();
    let a = sample_phase_trajectory(&laser, &times, 42).unwrap();
    let b = sample_phase_trajectory(&laser, &times, 42).unwrap();
    let c = sample_phase_trajectory(&laser, &times, 43).unwrap();
    assert_eq!(a.phases(), b.phases());
    assert_ne!(a.phases(), c.phases());
}

proptest! {
    #[test]
    fn linewidth_round_trip(linewidth in 1e-3f64..1e12) {
        let back = linewidth_from_coherence_time(coherence_time_from_linewidth(linewidth).unwrap()).unwrap();
        prop_assert!((back / linewidth - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn remap_round_trip(x in -1e3f64..1e3, p in -1e3f64..1e3, phi in -10.0f64..10.0) {
        let (rx, rp) = remap_quadratures(x, p, phi);
        let (bx, bp) = remap_quadratures(rx, rp, -phi);
        let scale = x.abs().max(p.abs()).max(1.0);
        prop_assert!((bx - x).abs() <= 1e-12 * scale);
        prop_assert!((bp - p).abs() <= 1e-12 * scale);
    }

    #[test]
    fn remap_is_an_isometry(points in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..200),
                            phi in -4.0f64..4.0) {
        let (xs, ps): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let rotated: Vec<(f64, f64)> = points.iter().map(|&(x, p)| remap_quadratures(x, p, phi)).collect();
        let (rx, rp): (Vec<f64>, Vec<f64>) = rotated.iter().copied().unzip();
        let before = stats::variance(&xs) + stats::variance(&ps);
        let after = stats::variance(&rx) + stats::variance(&rp);
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
    }

    #[test]
    fn noiseless_reference_gives_minus_angle(theta in -10.0f64..10.0, r in 1e-3f64..1e4) {
        let est = estimate_phase(r * theta.cos(), r * theta.sin()).unwrap();
        let expected = wrap_phase(-theta);
        prop_assert!(wrap_phase(est - expected).abs() <= 1e-9);
    }

    #[test]
    fn finite_rate_never_exceeds_pessimistic_asymptotic(log_n in 3.0f64..13.0, km in 0.0f64..40.0) {
        let params = SecurityParams {
            n_pulses: 10f64.powf(log_n) as u64,
            channel: ChannelDetector::new(0.2, km, 1.0, 0.0),
            ..SecurityParams::default()
        };
        prop_assert!(finite_size_correction(&params, DeltaAssignment::Standard) >= 0.0);
        if let Ok(r) = finite_size_breakdown(&params, &GaussianConfidenceBound, DeltaAssignment::Standard) {
            prop_assert!(r.rate <= params.reconciliation_efficiency * r.mutual_information - r.worst_case.holevo);
        }
    }
}

#[test]
fn rotation_preserves_noise_statistics() {
    let det = ChannelDetector::new(0.2, 25.0, 0.5, 0.83);
    let n = 100_000;
    let mut rng = substream(5, 1, 0);
    let noise: Vec<(f64, f64)> = (0..n).map(|_| heterodyne_measure(0.0, 0.0, 0.0, &det, &mut rng)).collect();
    let mut angle_rng = substream(5, 2, 0);
    for phi in [0.3, 1.65, -2.9, f64::NAN] {
        let rotated: Vec<(f64, f64)> = noise
            .iter()
            .map(|&(x, p)| {
                let a = if phi.is_nan() { angle_rng.gen_range(-3.2..3.2) } else { phi };
                remap_quadratures(x, p, a)
            })
            .collect();
        let (xs, ps): (Vec<f64>, Vec<f64>) = rotated.iter().copied().unzip();
        let (vx, vp) = (stats::variance(&xs), stats::variance(&ps));
        let se = stats::variance_standard_error(1.83, n);
        assert!(within_3se(vx, 1.83, se), "Var x' {vx} at φ = {phi}");
        assert!(within_3se(vp, 1.83, se), "Var p' {vp} at φ = {phi}");
        let (mx, mp) = (stats::mean(&xs), stats::mean(&ps));
        let products: Vec<f64> = rotated.iter().map(|&(x, p)| (x - mx) * (p - mp)).collect();
        let cov = stats::mean(&products);
        // Var of a product of independent zero-mean normals is σ⁴.
        let cov_se = 1.83 / (n as f64).sqrt();
        assert!(within_3se(cov, 0.0, cov_se), "cross-covariance {cov} at φ = {phi}");
    }
}

#[test]
fn raw_signal_phases_are_uniform() {
    let laser_s = LaserModel::from_phase_variance(0.035, 20e-9).unwrap();
    let laser_l = LaserModel::from_phase_variance(0.044, 20e-9).unwrap().with_detuning(4e6);
    let train = PulseTrainConfig {
        repetition_period: 20e-9,
        n_pairs: 20_000,
        signal_photons: 1e4,
        reference_photons: 1e4,
        modulation: Modulation::None,
    };
    let samples = simulate_run(&train, (&laser_s, &laser_l), &ChannelDetector::new(0.2, 25.0, 0.5, 0.83), 3).unwrap();
    let rec = recover_run(&samples).unwrap();
    let test = stats::angle_uniformity(&rec.raw_phases, 100, 0.01).unwrap();
    assert!(test.passes(), "chi-square {} > {}", test.statistic, test.critical_value);
}

#[test]
fn received_energy_is_linear_in_photons_and_gain() {
    let n = 50_000;
    let mean_energy = |amplitude: f64, det: &ChannelDetector, seed: u64| {
        let mut rng = substream(seed, 1, 0);
        let e: Vec<f64> = (0..n)
            .map(|_| {
                let (x, p) = heterodyne_measure(amplitude, 0.0, 0.7, det, &mut rng);
                x * x + p * p
            })
            .collect();
        (stats::mean(&e), (stats::variance(&e) / n as f64).sqrt())
    };
    for (km, eta, photons) in [(0.0, 1.0, 10.0), (10.0, 0.5, 10.0), (25.0, 0.5, 40.0), (50.0, 0.8, 100.0)] {
        let det = ChannelDetector::new(0.2, km, eta, 0.1);
        let (e, se) = mean_energy(2.0 * f64::sqrt(photons), &det, km as u64);
        let expected = 2.0 * det.transmittance() * eta * photons + 2.0 * 1.1;
        assert!(within_3se(e, expected, se), "{e} vs {expected} at L = {km}, η = {eta}, n = {photons}");
    }
}

#[test]
fn bob_variance_matches_security_model() {
    let det = ChannelDetector::new(0.2, 20.0, 0.5, 0.1);
    let v_a = 2.0;
    let train = PulseTrainConfig {
        repetition_period: 20e-9,
        n_pairs: 100_000,
        signal_photons: 1.0,
        reference_photons: 1e4,
        modulation: Modulation::Gaussian { variance: v_a },
    };
    let quiet = LaserModel::noiseless();
    let samples = simulate_run(&train, (&quiet, &quiet), &det, 9).unwrap();
    let xs: Vec<f64> = samples.iter().filter(|s| s.kind == PulseKind::Signal).map(|s| s.x).collect();
    let measured = stats::variance(&xs);
    let params = SecurityParams { modulation_variance: v_a, sigma_phi: 0.0, channel: det, ..SecurityParams::default() };
    let b = NoiseBudget::from_params(&params).unwrap();
    let expected = 0.5 * det.detector_efficiency * b.transmittance * (params.total_variance() + b.chi_tot);
    let se = stats::variance_standard_error(measured, xs.len());
    assert!(within_3se(measured, expected, se), "{measured} vs {expected} (SE {se})");
}

#[test]
fn midpoint_residual_matches_average_laser_variance() {
    // Exact reference phases: huge photon numbers, no electronic noise.
    let laser_s = LaserModel::from_phase_variance(0.035, 20e-9).unwrap();
    let laser_l = LaserModel::from_phase_variance(0.044, 20e-9).unwrap();
    let train = PulseTrainConfig {
        repetition_period: 20e-9,
        n_pairs: 40_000,
        signal_photons: 1e12,
        reference_photons: 1e12,
        modulation: Modulation::Bpsk { phase0: 0.0, phase1: 1.65 },
    };
    let samples = simulate_run(&train, (&laser_s, &laser_l), &ChannelDetector::ideal(), 17).unwrap();
    let rec = recover_run(&samples).unwrap();
    let encoded: Vec<f64> = (0..rec.corrected.len()).map(|i| if i % 2 == 0 { 0.0 } else { 1.65 }).collect();
    for g in residual_variance(&rec.corrected, &encoded).unwrap() {
        assert!(within_3se(g.variance, 0.0395, g.standard_error), "symbol {}: {}", g.symbol, g.variance);
    }
}

fn grid() -> impl Iterator<Item = SecurityParams> {
    let lengths = (0..=30).map(|i| 5.0 * i as f64);
    lengths.flat_map(|l| {
        [0.0, 0.01, 0.02, 0.05, 0.1].into_iter().flat_map(move |eps| {
            [(1.0, 0.0), (0.5, 0.1), (0.7, 0.3)].into_iter().map(move |(eta, nu)| SecurityParams {
                sigma_phi: eps,
                channel: ChannelDetector::new(0.2, l, eta, nu),
                ..SecurityParams::default()
            })
        })
    })
}

#[test]
fn spectrum_and_rate_bounds_hold_on_grid() {
    for params in grid() {
        let budget = NoiseBudget::from_params(&params).unwrap();
        let s = symplectic_eigenvalues(&params, &budget).unwrap();
        assert_eq!(s.lambda[4], 1.0);
        assert!(s.lambda.iter().all(|&l| l >= 1.0 - EIGENVALUE_TOLERANCE), "{:?}", s.lambda);
        let r = asymptotic_breakdown(&params).unwrap();
        assert!(r.holevo >= 0.0);
        assert!(r.rate <= params.reconciliation_efficiency * r.mutual_information);
    }
}

#[test]
fn rate_is_nonincreasing_in_distance_and_excess_noise() {
    let rate = |l: f64, eps: f64| {
        asymptotic_key_rate(&SecurityParams { sigma_phi: eps, ..SecurityParams::default() }.with_fiber_length(l))
            .unwrap()
    };
    let lengths: Vec<f64> = (0..=30).map(|i| 5.0 * i as f64).collect();
    let noises: Vec<f64> = (0..=20).map(|i| 0.005 * i as f64).collect();
    let default_noise = SecurityParams::default().sigma_phi;
    for w in lengths.windows(2) {
        assert!(rate(w[1], default_noise) <= rate(w[0], default_noise), "L {} -> {}", w[0], w[1]);
    }
    // Negative rates climb back towards 0 as T -> 0, so across the noise grid
    // only the usable rate is monotone in distance.
    for &eps in &noises {
        for w in lengths.windows(2) {
            assert!(rate(w[1], eps).max(0.0) <= rate(w[0], eps).max(0.0), "L {} -> {} at ε {eps}", w[0], w[1]);
        }
    }
    for &l in &lengths {
        for w in noises.windows(2) {
            assert!(rate(l, w[1]) <= rate(l, w[0]), "ε {} -> {} at L {l}", w[0], w[1]);
        }
    }
}

#[test]
fn rate_vanishes_as_channel_closes() {
    for t in [1e-3, 1e-5, 1e-8] {
        let params = SecurityParams {
            channel: ChannelDetector::new(0.2, 0.0, 0.5, 0.1).with_transmittance(t),
            ..SecurityParams::default()
        };
        let r = asymptotic_key_rate(&params).unwrap();
        assert!(r <= 0.0, "R = {r} at T = {t}");
    }
}

#[test]
fn finite_rate_approaches_asymptotic_from_below() {
    let base = SecurityParams { channel: ChannelDetector::new(0.2, 10.0, 1.0, 0.0), ..SecurityParams::default() };
    let asym = asymptotic_key_rate(&base).unwrap();
    let finite = finite_size_breakdown(
        &SecurityParams { n_pulses: 10u64.pow(15), ..base },
        &GaussianConfidenceBound,
        DeltaAssignment::Standard,
    )
    .unwrap();
    assert!(finite.rate < asym);
    assert_relative_eq!(finite.rate, asym, max_relative = 0.05);
}
