//! Probability vectors over the integer options of an ordinal survey item.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a probability vector sums to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("options and probabilities differ in length ({options} vs {probs})")]
    LengthMismatch { options: usize, probs: usize },
    #[error("options must be non-empty, strictly increasing and contiguous")]
    BadOptions,
    #[error("probability {value} at index {index} is negative or not finite")]
    BadProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
}

/// A distribution over a contiguous run of integer response options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDistribution {
    pub question_id: String,
    pub options: Vec<i64>,
    pub probs: Vec<f64>,
}

impl ResponseDistribution {
    /// Builds a distribution, checking every invariant.
    pub fn new(
        question_id: impl Into<String>,
        options: Vec<i64>,
        probs: Vec<f64>,
    ) -> Result<Self, DistributionError> {
        let d = Self {
            question_id: question_id.into(),
            options,
            probs,
        };
        d.validate()?;
        Ok(d)
    }

    /// Normalizes non-negative weights onto `options`.
    pub fn from_weights(
        question_id: impl Into<String>,
        options: Vec<i64>,
        weights: &[f64],
    ) -> Result<Self, DistributionError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(DistributionError::NotNormalized(total));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Self::new(question_id, options, probs)
    }

    pub fn uniform(question_id: impl Into<String>, scale_min: i64, scale_max: i64) -> Self {
        let options: Vec<i64> = (scale_min..=scale_max).collect();
        let k = options.len() as f64;
        let probs = vec![1.0 / k; options.len()];
        Self {
            question_id: question_id.into(),
            options,
            probs,
        }
    }

    pub fn point_mass(question_id: impl Into<String>, scale_min: i64, scale_max: i64, at: i64) -> Self {
        let options: Vec<i64> = (scale_min..=scale_max).collect();
        let probs = options.iter().map(|&o| if o == at { 1.0 } else { 0.0 }).collect();
        Self {
            question_id: question_id.into(),
            options,
            probs,
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if self.options.len() != self.probs.len() {
            return Err(DistributionError::LengthMismatch {
                options: self.options.len(),
                probs: self.probs.len(),
            });
        }
        if self.options.is_empty() || self.options.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(DistributionError::BadOptions);
        }
        for (index, &value) in self.probs.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DistributionError::BadProbability { index, value });
            }
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE * self.probs.len().max(1) as f64 {
            return Err(DistributionError::NotNormalized(sum));
        }
        Ok(())
    }

    pub fn scale_min(&self) -> i64 {
        self.options[0]
    }

    pub fn scale_max(&self) -> i64 {
        self.options[self.options.len() - 1]
    }

    /// `Σ r_k p_k`.
    pub fn mean(&self) -> f64 {
        self.options
            .iter()
            .zip(&self.probs)
            .map(|(&r, &p)| r as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.options
            .iter()
            .zip(&self.probs)
            .map(|(&r, &p)| p * (r as f64 - m).powi(2))
            .sum()
    }

    /// True when all mass sits on a single option.
    pub fn is_point_mass(&self) -> bool {
        self.probs.iter().filter(|&&p| p > 0.0).count() <= 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps_in_options() {
        let err = ResponseDistribution::new("q", vec![1, 3], vec![0.5, 0.5]).unwrap_err();
        assert_eq!(err, DistributionError::BadOptions);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(
            ResponseDistribution::new("q", vec![1, 2], vec![0.5, 0.6]),
            Err(DistributionError::NotNormalized(_))
        ));
    }

    #[test]
    fn uniform_mean_is_midpoint() {
        let d = ResponseDistribution::uniform("q", 1, 4);
        assert!((d.mean() - 2.5).abs() < 1e-15);
        assert!((d.variance() - 1.25).abs() < 1e-15);
    }
}
