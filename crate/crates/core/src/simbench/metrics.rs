use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::scale::median;
use crate::simbench::scenario::ErrorLaw;
use crate::types::FitResult;

/// Prediction accuracy and selection error rates of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Test RMSE, or the median absolute test residual under t(1) errors.
    pub accuracy: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// Fraction of truly non-zero coefficients estimated as exactly zero, and of
/// truly zero coefficients estimated as non-zero. Either is 0 when its
/// reference set is empty.
pub fn selection_rates(coeffs: &[f64], beta0: &[f64]) -> (f64, f64) {
    let (mut pos, mut neg, mut fneg, mut fpos) = (0usize, 0usize, 0usize, 0usize);
    for (b, t) in coeffs.iter().zip(beta0) {
        if *t != 0.0 {
            pos += 1;
            if *b == 0.0 {
                fneg += 1;
            }
        } else {
            neg += 1;
            if *b != 0.0 {
                fpos += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(fneg, pos), ratio(fpos, neg))
}

pub fn metrics(fit: &FitResult, test: &Dataset, beta0: &[f64], law: ErrorLaw) -> Metrics {
    let r = test.residuals(fit.intercept, &fit.coeffs);
    let accuracy = match law {
        ErrorLaw::T1 => {
            let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
            median(&abs).unwrap_or(f64::NAN)
        }
        _ => (r.norm_squared() / r.len() as f64).sqrt(),
    };
    let (fnr, fpr) = selection_rates(&fit.coeffs, beta0);
    Metrics { accuracy, fnr, fpr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn fit(coeffs: Vec<f64>) -> FitResult {
        FitResult {
            intercept: 0.0,
            coeffs,
            scale: 1.0,
            lambda: 0.0,
            iterations: 0,
            objective_trace: vec![],
            converged: true,
        }
    }

    #[test]
    fn rates() {
        let b0 = [3.0, 1.5, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        assert_eq!(selection_rates(&[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &b0), (0.0, 0.0));
        assert_eq!(selection_rates(&[0.0; 8], &b0), (1.0, 0.0));
        assert_eq!(selection_rates(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &b0), (1.0 / 3.0, 0.2));
    }

    #[test]
    fn accuracy_measures() {
        let x = DMatrix::zeros(4, 1);
        let y = DVector::from_vec(vec![1.0, -1.0, 3.0, -3.0]);
        let test = Dataset::new(x, y, true).unwrap();
        let m = metrics(&fit(vec![0.0]), &test, &[1.0], ErrorLaw::Normal);
        assert!((m.accuracy - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.fnr, 1.0);
        let m1 = metrics(&fit(vec![0.0]), &test, &[1.0], ErrorLaw::T1);
        assert_eq!(m1.accuracy, 2.0);
    }
}
