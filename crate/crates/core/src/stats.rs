//! Small statistics toolkit used by the experiment runners.
//!
//! Sums go through [`pairwise_sum`] so aggregates depend only on the order of
//! the input slice, never on how the work was scheduled.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A value with its standard error. `standard_error == None` marks an exact
/// (analytic or closed-form) value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Serialized as a number, or the string `"exact"` when absent.
    #[serde(with = "exact_marker")]
    pub standard_error: Option<f64>,
}

mod exact_marker {
    use serde::{de, Deserialize, Deserializer, Serializer};

    const EXACT: &str = "exact";

    pub fn serialize<S: Serializer>(se: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match se {
            Some(v) => s.serialize_f64(*v),
            None => s.serialize_str(EXACT),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Some(v)),
            Raw::Marker(m) if m == EXACT => Ok(None),
            Raw::Marker(m) => Err(de::Error::invalid_value(de::Unexpected::Str(&m), &"a number or \"exact\"")),
        }
    }
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, standard_error: None }
    }

    pub fn with_error(value: f64, standard_error: f64) -> Self {
        Self { value, standard_error: Some(standard_error) }
    }

    /// `true` when `target` lies within `k` standard errors of the value.
    /// Exact values compare with a 1e-12 relative tolerance.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        match self.standard_error {
            Some(se) => (self.value - target).abs() <= k * se,
            None => (self.value - target).abs() <= 1e-12 * target.abs().max(1.0),
        }
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Standard error of the unbiased variance estimate for roughly Gaussian data.
pub fn variance_standard_error(variance: f64, n: usize) -> f64 {
    variance * (2.0 / (n as f64 - 1.0)).sqrt()
}

/// Central moment of order `k` (biased).
fn central_moment(xs: &[f64], k: i32) -> f64 {
    let m = mean(xs);
    let terms: Vec<f64> = xs.iter().map(|x| (x - m).powi(k)).collect();
    pairwise_sum(&terms) / xs.len() as f64
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    central_moment(xs, 3) / m2.powf(1.5)
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    central_moment(xs, 4) / (m2 * m2) - 3.0
}

/// Combine per-batch estimates into their mean and the standard error of
/// that mean (batch-means method).
pub fn batch_means(values: &[f64]) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::Estimation(format!("batch means need at least 2 batches, got {}", values.len())));
    }
    let se = (variance(values) / values.len() as f64).sqrt();
    Ok(Estimate::with_error(mean(values), se))
}

/// Least-squares slope of a line through the origin and the (centered)
/// coefficient of determination of that fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginFit {
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> Result<OriginFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Estimation("fit needs at least two paired points".into()));
    }
    let sxy = pairwise_sum(&xs.iter().zip(ys).map(|(x, y)| x * y).collect::<Vec<_>>());
    let sxx = pairwise_sum(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
    if sxx == 0.0 {
        return Err(Error::Estimation("all abscissae are zero".into()));
    }
    let slope = sxy / sxx;
    let ym = mean(ys);
    let ss_res = pairwise_sum(&xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).collect::<Vec<_>>());
    let ss_tot = pairwise_sum(&ys.iter().map(|y| (y - ym).powi(2)).collect::<Vec<_>>());
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(OriginFit { slope, r_squared })
}

/// Counts of angles folded into `[0, 2π)` over `bins` uniform bins.
pub fn angle_histogram(angles: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for a in angles {
        let folded = a.rem_euclid(TAU);
        let idx = ((folded / TAU) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    counts
}

/// Pearson chi-square test of uniformity on `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub p_value: f64,
}

impl UniformityTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical_value
    }
}

/// Point with upper-tail probability `alpha`. The library inverse is only
/// accurate to a few parts in 1e5, so it seeds a short Newton polish.
fn upper_quantile(dist: &ChiSquared, alpha: f64) -> f64 {
    let mut x = dist.inverse_cdf(1.0 - alpha);
    for _ in 0..8 {
        let step = (dist.sf(x) - alpha) / dist.pdf(x);
        x += step;
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

/// Chi-square uniformity test of angles; `significance` is the rejection
/// level (0.01 for a 1% test).
pub fn angle_uniformity(angles: &[f64], bins: usize, significance: f64) -> Result<UniformityTest> {
    if bins < 2 || angles.len() < 5 * bins {
        return Err(Error::Estimation(format!(
            "uniformity test needs >= {} samples for {} bins, got {}",
            5 * bins,
            bins,
            angles.len()
        )));
    }
    let counts = angle_histogram(angles, bins);
    let expected = angles.len() as f64 / bins as f64;
    let terms: Vec<f64> = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).collect();
    let statistic = pairwise_sum(&terms);
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Estimation(e.to_string()))?;
    Ok(UniformityTest {
        statistic,
        degrees_of_freedom: dof,
        critical_value: upper_quantile(&dist, significance),
        p_value: dist.sf(statistic),
    })
}
