//! Per-layer Gaussian fit and log-density outlier separation.

use std::f64::consts::PI;

use super::{Outlier, OutlierSet, QuantError};
use crate::matrix::WeightMatrix;

/// Closed-form maximum-likelihood fit: arithmetic mean and population
/// standard deviation of every weight in the layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianFit {
    /// Natural-log density of `x` under this fit.
    pub fn log_pdf(&self, x: f64) -> Result<f64, QuantError> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(QuantError::DegenerateSigma);
        }
        let var = self.sigma * self.sigma;
        let d = x - self.mu;
        Ok(-0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var))
    }
}

pub fn fit_gaussian(weights: &WeightMatrix) -> Result<GaussianFit, QuantError> {
    let fit = fit_unchecked(weights.as_slice())?;
    if fit.sigma == 0.0 {
        return Err(QuantError::DegenerateSigma);
    }
    Ok(fit)
}

/// Like [`fit_gaussian`] but returns a zero-sigma fit instead of failing.
pub(crate) fn fit_unchecked(values: &[f32]) -> Result<GaussianFit, QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyMatrix);
    }
    let n = values.len() as f64;
    let mu = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mu;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(GaussianFit { mu, sigma: var.sqrt() })
}

pub fn log_pdf(x: f64, fit: &GaussianFit) -> Result<f64, QuantError> {
    fit.log_pdf(x)
}

/// Splits a layer into the G group (`mask[p] == true`) and the outlier set.
///
/// A weight is an outlier iff its log-density is strictly below `threshold`.
/// The threshold is in natural-log units; `-4.0` is the usual setting.
pub fn detect_outliers(
    weights: &WeightMatrix,
    fit: &GaussianFit,
    threshold: f64,
) -> Result<(Vec<bool>, OutlierSet), QuantError> {
    let cols = weights.cols();
    let mut mask = Vec::with_capacity(weights.len());
    let mut entries = Vec::new();
    for (p, &w) in weights.as_slice().iter().enumerate() {
        let is_outlier = fit.log_pdf(w as f64)? < threshold;
        mask.push(!is_outlier);
        if is_outlier {
            entries.push(Outlier { row: p / cols, col: p % cols, value: w });
        }
    }
    Ok((mask, OutlierSet { entries, threshold }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_is_degenerate() {
        let m = WeightMatrix::zeros(2, 2);
        assert_eq!(fit_gaussian(&m), Err(QuantError::DegenerateSigma));
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let m = WeightMatrix::zeros(0, 3);
        assert_eq!(fit_gaussian(&m), Err(QuantError::EmptyMatrix));
    }

    #[test]
    fn symmetric_pair_fits_unit_gaussian() {
        let m = WeightMatrix::new(1, 2, vec![-1.0, 1.0]).unwrap();
        let fit = fit_gaussian(&m).unwrap();
        assert_eq!(fit.mu, 0.0);
        assert_eq!(fit.sigma, 1.0);
    }

    #[test]
    fn log_pdf_peak_and_three_sigma() {
        let fit = GaussianFit { mu: 0.25, sigma: 1.0 };
        let peak = fit.log_pdf(0.25).unwrap();
        assert!((peak - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        let tail = fit.log_pdf(0.25 + 3.0).unwrap();
        assert!((tail - (peak - 4.5)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_far_tail_matches_high_precision_value() {
        // -ln(0.05 * sqrt(2*pi)) - 0.5^2 / (2 * 0.05^2), evaluated with 50-digit arithmetic.
        let fit = GaussianFit { mu: 0.0, sigma: 0.05 };
        let got = fit.log_pdf(0.5).unwrap();
        assert!((got - (-47.923_206_259_650_68)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn log_pdf_requires_positive_sigma() {
        let fit = GaussianFit { mu: 0.0, sigma: 0.0 };
        assert_eq!(fit.log_pdf(1.0), Err(QuantError::DegenerateSigma));
    }

    #[test]
    fn weights_at_mean_are_never_outliers() {
        let m = WeightMatrix::new(1, 4, vec![0.5; 4]).unwrap();
        let fit = GaussianFit { mu: 0.5, sigma: 0.1 };
        let (mask, set) = detect_outliers(&m, &fit, -4.0).unwrap();
        assert!(mask.iter().all(|&g| g));
        assert!(set.entries.is_empty());
    }
}
