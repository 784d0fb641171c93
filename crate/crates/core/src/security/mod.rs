//! Secret key rates for Gaussian-modulated coherent states with heterodyne
//! detection and reverse reconciliation.
//!
//! The asymptotic rate under collective attacks is `R = f·I_AB − χ_BE`,
//! with Bob's detector noise trusted ("realistic" model). `χ_BE` comes from
//! five symplectic eigenvalues: two of the Alice/Bob state and three of the
//! state conditioned on Bob's measurement. Noise is referred to the channel
//! input:
//!
//! ```text
//! χ_line = 1/T − 1 + ε
//! χ_het  = [1 + (1 − η) + 2ν_el]/η
//! χ_tot  = χ_line + χ_het/T
//! ```
//!
//! The finite-size composable rate lives in [`finite_size`].

pub mod finite_size;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_sim::ChannelDetector;

pub use finite_size::{
    delta_aep, delta_ent, finite_size_breakdown, finite_size_correction, finite_size_key_rate, DeltaAssignment,
    FiniteSizeRate, GaussianConfidenceBound, WorstCase, WorstCaseHolevo,
};

/// Tolerance for symplectic eigenvalues dipping below 1 through rounding.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-9;

/// Negative Holevo values down to this size are rounding and read as 0.
pub const HOLEVO_ROUNDING: f64 = 1e-12;

/// Failure probabilities of the composable analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonBudget {
    pub epsilon: f64,
    pub epsilon_bar: f64,
    pub epsilon_sm: f64,
    pub epsilon_pe: f64,
    pub epsilon_cor: f64,
    pub epsilon_ent: f64,
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        Self {
            epsilon: 1e-20,
            epsilon_bar: 1e-21,
            epsilon_sm: 1e-21,
            epsilon_pe: 1e-41,
            epsilon_cor: 1e-41,
            epsilon_ent: 1e-41,
        }
    }
}

impl EpsilonBudget {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("epsilon", self.epsilon),
            ("epsilon_bar", self.epsilon_bar),
            ("epsilon_sm", self.epsilon_sm),
            ("epsilon_pe", self.epsilon_pe),
            ("epsilon_cor", self.epsilon_cor),
            ("epsilon_ent", self.epsilon_ent),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Protocol and hardware parameters for the key-rate calculators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Alice's modulation variance V_A (SNU).
    pub modulation_variance: f64,
    /// Reconciliation efficiency (f asymptotically, β finite-size).
    pub reconciliation_efficiency: f64,
    /// Residual phase-noise variance of the phase recovery, rad².
    pub sigma_phi: f64,
    pub channel: ChannelDetector,
    pub epsilon: EpsilonBudget,
    /// Discretization parameter d.
    pub discretization: u32,
    /// Robustness parameter ε_rob.
    pub robustness: f64,
    /// Number of pulses n.
    pub n_pulses: u64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            modulation_variance: 1.0,
            reconciliation_efficiency: 0.95,
            sigma_phi: 0.04,
            channel: ChannelDetector::new(0.2, 0.0, 0.5, 0.1),
            epsilon: EpsilonBudget::default(),
            discretization: 5,
            robustness: 0.0,
            n_pulses: 100_000_000_000,
        }
    }
}

impl SecurityParams {
    /// `V = V_A + 1`.
    pub fn total_variance(&self) -> f64 {
        self.modulation_variance + 1.0
    }

    pub fn with_fiber_length(mut self, km: f64) -> Self {
        self.channel.fiber_length = km;
        self.channel.transmittance_override = None;
        self
    }

    /// Checks everything the asymptotic rate depends on. `V_A = 0` is
    /// admitted as the no-modulation limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_variance >= 0.0) || !self.modulation_variance.is_finite() {
            return Err(Error::config(format!(
                "modulation_variance must be non-negative, got {}",
                self.modulation_variance
            )));
        }
        if !(self.reconciliation_efficiency > 0.0 && self.reconciliation_efficiency <= 1.0) {
            return Err(Error::config(format!(
                "reconciliation_efficiency must lie in (0, 1], got {}",
                self.reconciliation_efficiency
            )));
        }
        if !(self.sigma_phi >= 0.0) || !self.sigma_phi.is_finite() {
            return Err(Error::config(format!("sigma_phi must be non-negative, got {}", self.sigma_phi)));
        }
        if !(self.robustness >= 0.0 && self.robustness < 1.0) {
            return Err(Error::config(format!("robustness must lie in [0, 1), got {}", self.robustness)));
        }
        if self.discretization < 1 {
            return Err(Error::config("discretization must be at least 1"));
        }
        self.channel.validate()?;
        self.epsilon.validate()
    }
}

/// Excess noise `ε = V_A·σ_φ` produced by an uncertain remapping phase.
pub fn excess_noise_from_phase(v_a: f64, sigma_phi: f64) -> Result<f64> {
    if !(v_a >= 0.0) || !(sigma_phi >= 0.0) {
        return Err(Error::domain(format!("inputs must be non-negative, got ({v_a}, {sigma_phi})")));
    }
    Ok(v_a * sigma_phi)
}

/// Channel and detector noise referred to the channel input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub transmittance: f64,
    pub excess_noise: f64,
    pub chi_line: f64,
    pub chi_het: f64,
    pub chi_tot: f64,
}

impl NoiseBudget {
    pub fn new(transmittance: f64, excess_noise: f64, efficiency: f64, electronic_noise: f64) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(Error::domain(format!("transmittance must lie in (0, 1], got {transmittance}")));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::domain(format!("efficiency must lie in (0, 1], got {efficiency}")));
        }
        if !excess_noise.is_finite() || !(electronic_noise >= 0.0) {
            return Err(Error::domain("excess and electronic noise must be finite, electronic noise non-negative"));
        }
        let chi_line = 1.0 / transmittance - 1.0 + excess_noise;
        let chi_het = (1.0 + (1.0 - efficiency) + 2.0 * electronic_noise) / efficiency;
        Ok(Self { transmittance, excess_noise, chi_line, chi_het, chi_tot: chi_line + chi_het / transmittance })
    }

    /// Budget implied by `params`, with `ε = V_A·σ_φ`.
    pub fn from_params(params: &SecurityParams) -> Result<Self> {
        let ch = &params.channel;
        Self::new(
            ch.transmittance(),
            excess_noise_from_phase(params.modulation_variance, params.sigma_phi)?,
            ch.detector_efficiency,
            ch.electronic_noise,
        )
    }
}

/// `G(x) = (x+1)log₂(x+1) − x·log₂x`, with `G(0) = 0`.
pub fn g_function(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("G(x) needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// `I_AB = log₂[(V + χ_tot)/(1 + χ_tot)]`.
pub fn mutual_information(params: &SecurityParams, budget: &NoiseBudget) -> f64 {
    ((params.total_variance() + budget.chi_tot) / (1.0 + budget.chi_tot)).log2()
}

/// The five symplectic eigenvalues entering `χ_BE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    pub lambda: [f64; 5],
}

/// Roots `λ₁ ≥ λ₂` of `λ⁴ − Sλ² + P = 0` (sum `S`, product `P` of the squares).
fn eigen_pair(sum: f64, product: f64, labels: (usize, usize)) -> Result<(f64, f64)> {
    let mut disc = sum * sum - 4.0 * product;
    if disc < 0.0 {
        if disc < -EIGENVALUE_TOLERANCE * sum * sum {
            return Err(Error::Numerical(format!("negative discriminant {disc} for λ{},{}", labels.0, labels.1)));
        }
        disc = 0.0;
    }
    let big_sq = 0.5 * (sum + disc.sqrt());
    // product / big avoids cancellation in (sum − √disc)/2
    let small_sq = if big_sq > 0.0 { product / big_sq } else { 0.0 };
    Ok((checked_eigenvalue(big_sq.sqrt(), labels.0)?, checked_eigenvalue(small_sq.sqrt(), labels.1)?))
}

fn checked_eigenvalue(lambda: f64, label: usize) -> Result<f64> {
    if !lambda.is_finite() || lambda < 1.0 - EIGENVALUE_TOLERANCE {
        return Err(Error::Numerical(format!("symplectic eigenvalue λ{label} = {lambda} is below 1")));
    }
    Ok(lambda.max(1.0))
}

pub fn symplectic_eigenvalues(params: &SecurityParams, budget: &NoiseBudget) -> Result<SymplecticSpectrum> {
    let v = params.total_variance();
    let t = budget.transmittance;
    let (chi_line, chi_het, chi_tot) = (budget.chi_line, budget.chi_het, budget.chi_tot);

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = (t * (v * chi_line + 1.0)).powi(2);
    let (l1, l2) = eigen_pair(a, b, (1, 2))?;

    let norm = (t * (v + chi_tot)).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * b.sqrt() + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / norm;
    let d = (v + b.sqrt() * chi_het).powi(2) / norm;
    let (l3, l4) = eigen_pair(c, d, (3, 4))?;

    Ok(SymplecticSpectrum { lambda: [l1, l2, l3, l4, 1.0] })
}

/// Holevo bound `χ_BE` between Bob and Eve.
pub fn holevo_bound(params: &SecurityParams, budget: &NoiseBudget) -> Result<f64> {
    let s = symplectic_eigenvalues(params, budget)?;
    let g = |l: f64| g_function((l - 1.0) / 2.0);
    let chi = g(s.lambda[0])? + g(s.lambda[1])? - g(s.lambda[2])? - g(s.lambda[3])? - g(s.lambda[4])?;
    if chi >= 0.0 {
        Ok(chi)
    } else if chi >= -HOLEVO_ROUNDING {
        // eigenvalues that are exactly 1 can come out a few ulps above it
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("Holevo bound is negative: {chi}")))
    }
}

/// Asymptotic rate with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRate {
    pub rate: f64,
    pub mutual_information: f64,
    pub holevo: f64,
    pub budget: NoiseBudget,
    pub spectrum: SymplecticSpectrum,
}

pub fn asymptotic_breakdown(params: &SecurityParams) -> Result<AsymptoticRate> {
    params.validate()?;
    let budget = NoiseBudget::from_params(params)?;
    let spectrum = symplectic_eigenvalues(params, &budget)?;
    let mutual_information = mutual_information(params, &budget);
    let holevo = holevo_bound(params, &budget)?;
    Ok(AsymptoticRate {
        rate: params.reconciliation_efficiency * mutual_information - holevo,
        mutual_information,
        holevo,
        budget,
        spectrum,
    })
}

/// `R = f·I_AB − χ_BE` in bits per pulse. Negative values are returned as-is.
pub fn asymptotic_key_rate(params: &SecurityParams) -> Result<f64> {
    Ok(asymptotic_breakdown(params)?.rate)
}
