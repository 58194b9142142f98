//! Data-fitting metrics comparing measured samples against predicted
//! visibilities.
//!
//! With residual moduli `r_i = |y_i − p_i|`:
//!
//! ```text
//! chi2    = (1/N) Σ r_i / σ_i²          (first-power residual)
//! chi2_sq = (1/N) Σ r_i² / σ_i²         (squared-residual companion)
//! rmse    = √((1/N) Σ r_i²)
//! mre     = (1/N) Σ r_i / |y_i|
//! ```
//!
//! `chi2` deliberately uses the first power of the residual; the squared
//! variant is reported alongside it as `chi2_sq` for cross-checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::FrequencySample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub chi2: f64,
    pub chi2_sq: f64,
    pub rmse: f64,
    pub mre: f64,
}

fn check_lengths(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("metrics need at least one sample".into()));
    }
    if samples.len() != predicted.len() {
        return Err(Error::InvalidConfig(format!(
            "{} samples but {} predictions",
            samples.len(),
            predicted.len()
        )));
    }
    Ok(())
}

/// `(1/N) Σ |y_i − p_i| / σ_i²`.
pub fn chi2(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<f64> {
    check_lengths(samples, predicted)?;
    let sum: f64 = samples
        .iter()
        .zip(predicted)
        .map(|(s, p)| (s.value - p).norm() / (s.sigma * s.sigma))
        .sum();
    Ok(sum / samples.len() as f64)
}

/// `(1/N) Σ |y_i − p_i|² / σ_i²`.
pub fn chi2_sq(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<f64> {
    check_lengths(samples, predicted)?;
    let sum: f64 = samples
        .iter()
        .zip(predicted)
        .map(|(s, p)| (s.value - p).norm_sqr() / (s.sigma * s.sigma))
        .sum();
    Ok(sum / samples.len() as f64)
}

/// `√((1/N) Σ |y_i − p_i|²)`.
pub fn rmse(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<f64> {
    check_lengths(samples, predicted)?;
    let sum: f64 = samples.iter().zip(predicted).map(|(s, p)| (s.value - p).norm_sqr()).sum();
    Ok((sum / samples.len() as f64).sqrt())
}

/// `(1/N) Σ |y_i − p_i| / |y_i|`. Every measured modulus must be nonzero.
pub fn mre(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<f64> {
    check_lengths(samples, predicted)?;
    let mut sum = 0.0;
    for (i, (s, p)) in samples.iter().zip(predicted).enumerate() {
        let denom = s.value.norm();
        if denom == 0.0 {
            return Err(Error::DivisionByZero(format!(
                "sample {i} has |y| = 0; the mean relative error is undefined"
            )));
        }
        sum += (s.value - p).norm() / denom;
    }
    Ok(sum / samples.len() as f64)
}

impl Metrics {
    pub fn compute(samples: &[FrequencySample], predicted: &[Complex64]) -> Result<Metrics> {
        Ok(Metrics {
            chi2: chi2(samples, predicted)?,
            chi2_sq: chi2_sq(samples, predicted)?,
            rmse: rmse(samples, predicted)?,
            mre: mre(samples, predicted)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.chi2.is_finite()
            && self.chi2_sq.is_finite()
            && self.rmse.is_finite()
            && self.mre.is_finite()
    }
}
