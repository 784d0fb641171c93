//! Composable finite-size key rate under collective attacks:
//!
//! ```text
//! R = (1 − ε_rob)(β·I_AB − χ_worst − [Δ_AEP − Δ_ent − 2·log₂(1/(2ε̄))]/(2n))
//! Δ_AEP = √(2n)[(d+1)² + 4(d+1)·log₂(2/ε_sm²) + 2·log₂(2/(ε²ε_sm))] − 4ε_sm·d/ε
//! Δ_ent = log₂(1/ε) − √(8n·log₂²(4n)·log₂(1/ε))
//! ```
//!
//! The two Δ formulas are published under a single label; [`DeltaAssignment`]
//! selects which one plays which role. `Standard` is the assignment that
//! makes the correction term positive.
//!
//! `χ_worst` is the Holevo bound evaluated at pessimistic channel estimates.
//! It is pluggable through [`WorstCaseHolevo`]; the default
//! [`GaussianConfidenceBound`] takes one-sided Gaussian confidence limits on
//! the transmittance and excess noise from `n/2` estimation symbols.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use super::{holevo_bound, mutual_information, NoiseBudget, SecurityParams};
use crate::error::{Error, Result};

/// Smallest pulse count accepted by the finite-size analysis.
pub const MIN_PULSES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaAssignment {
    /// Δ_AEP is the `√(2n)(d+1)²…` expression, Δ_ent the `log₂(1/ε) − √(8n…)` one.
    #[default]
    Standard,
    /// The two expressions exchanged.
    Swapped,
}

pub fn delta_aep(n: f64, discretization: u32, epsilon: f64, epsilon_sm: f64) -> f64 {
    let d1 = discretization as f64 + 1.0;
    let log_sm = 1.0 - 2.0 * epsilon_sm.log2(); // log₂(2/ε_sm²)
    let log_joint = 1.0 - 2.0 * epsilon.log2() - epsilon_sm.log2(); // log₂(2/(ε²ε_sm))
    (2.0 * n).sqrt() * (d1 * d1 + 4.0 * d1 * log_sm + 2.0 * log_joint)
        - 4.0 * epsilon_sm * discretization as f64 / epsilon
}

pub fn delta_ent(n: f64, epsilon: f64) -> f64 {
    let log_inv = -epsilon.log2();
    let log_4n = (4.0 * n).log2();
    log_inv - (8.0 * n * log_4n * log_4n * log_inv).sqrt()
}

/// The bracketed term divided by `2n`.
pub fn finite_size_correction(params: &SecurityParams, assignment: DeltaAssignment) -> f64 {
    let n = params.n_pulses as f64;
    let eps = &params.epsilon;
    let a = delta_aep(n, params.discretization, eps.epsilon, eps.epsilon_sm);
    let e = delta_ent(n, eps.epsilon);
    let (aep, ent) = match assignment {
        DeltaAssignment::Standard => (a, e),
        DeltaAssignment::Swapped => (e, a),
    };
    (aep - ent - 2.0 * (1.0 / (2.0 * eps.epsilon_bar)).log2()) / (2.0 * n)
}

/// Pessimistic Holevo information and the channel estimates behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub holevo: f64,
    pub transmittance: f64,
    pub excess_noise: f64,
}

/// Plug point for the worst-case Holevo bound.
pub trait WorstCaseHolevo {
    fn worst_case_holevo(&self, params: &SecurityParams) -> Result<WorstCase>;
}

/// Confidence limits at failure probability `ε_PE` on `n/2` heterodyne
/// estimation symbols (two quadrature observations each).
///
/// Bob's quadratures follow `y = t·x + z` with `t = √(ηT/2)` and
/// `Var z = σ² = 1 + ν_el + ηTε/2`; with `N = n` observations,
///
/// ```text
/// t_low  = t − z_PE·√(σ²/(N·V_A))
/// σ²_high = σ² + z_PE·σ²·√(2/N)
/// ```
///
/// where `z_PE = √2·erfc⁻¹(ε_PE)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianConfidenceBound;

impl GaussianConfidenceBound {
    pub fn z_score(epsilon_pe: f64) -> f64 {
        std::f64::consts::SQRT_2 * erfc_inv(epsilon_pe)
    }
}

impl WorstCaseHolevo for GaussianConfidenceBound {
    fn worst_case_holevo(&self, params: &SecurityParams) -> Result<WorstCase> {
        if !(params.modulation_variance > 0.0) {
            return Err(Error::config("finite-size estimation needs a positive modulation variance"));
        }
        let nominal = NoiseBudget::from_params(params)?;
        let ch = &params.channel;
        let eta = ch.detector_efficiency;
        let observations = 2.0 * (params.n_pulses as f64 / 2.0);
        let z = Self::z_score(params.epsilon.epsilon_pe);

        let t = (eta * nominal.transmittance / 2.0).sqrt();
        let sigma2 = 1.0 + ch.electronic_noise + eta * nominal.transmittance * nominal.excess_noise / 2.0;
        let t_low = t - z * (sigma2 / (observations * params.modulation_variance)).sqrt();
        if !(t_low > 0.0) {
            return Err(Error::Numerical(format!(
                "transmittance confidence limit is non-positive at n = {}",
                params.n_pulses
            )));
        }
        let sigma2_high = sigma2 + z * sigma2 * (2.0 / observations).sqrt();
        let transmittance = (2.0 * t_low * t_low / eta).min(1.0);
        let excess_noise = 2.0 * (sigma2_high - 1.0 - ch.electronic_noise) / (eta * transmittance);
        let budget = NoiseBudget::new(transmittance, excess_noise, eta, ch.electronic_noise)?;
        Ok(WorstCase { holevo: holevo_bound(params, &budget)?, transmittance, excess_noise })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeRate {
    pub rate: f64,
    pub mutual_information: f64,
    pub worst_case: WorstCase,
    pub correction: f64,
    pub delta_aep: f64,
    pub delta_ent: f64,
}

pub fn finite_size_breakdown(
    params: &SecurityParams,
    bound: &dyn WorstCaseHolevo,
    assignment: DeltaAssignment,
) -> Result<FiniteSizeRate> {
    params.validate()?;
    if params.n_pulses < MIN_PULSES {
        return Err(Error::config(format!("n_pulses must be at least {MIN_PULSES}, got {}", params.n_pulses)));
    }
    let budget = NoiseBudget::from_params(params)?;
    let mutual_information = mutual_information(params, &budget);
    let worst_case = bound.worst_case_holevo(params)?;
    let correction = finite_size_correction(params, assignment);
    let n = params.n_pulses as f64;
    let rate = (1.0 - params.robustness)
        * (params.reconciliation_efficiency * mutual_information - worst_case.holevo - correction);
    Ok(FiniteSizeRate {
        rate,
        mutual_information,
        worst_case,
        correction,
        delta_aep: delta_aep(n, params.discretization, params.epsilon.epsilon, params.epsilon.epsilon_sm),
        delta_ent: delta_ent(n, params.epsilon.epsilon),
    })
}

/// Finite-size rate with the default worst-case bound, bits per pulse.
pub fn finite_size_key_rate(params: &SecurityParams) -> Result<f64> {
    Ok(finite_size_breakdown(params, &GaussianConfidenceBound, DeltaAssignment::Standard)?.rate)
}
