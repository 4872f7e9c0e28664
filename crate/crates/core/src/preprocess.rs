//! Robust column standardization and the map back to original coordinates.
//!
//! Non-intercept columns are centered at their median and divided by their
//! normalized MAD; the response is centered at its median. Constant columns
//! are dropped and recorded. A non-constant column whose MAD is zero (more
//! than half the entries tied) falls back to the normal-consistent mean
//! absolute deviation about the median.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scale::{median, norm_mad};
use crate::types::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub col_center: Vec<f64>,
    /// Positive for every column; 1 for dropped columns.
    pub col_scale: Vec<f64>,
    pub y_center: f64,
    pub has_intercept: bool,
    /// `true` for columns removed as constant.
    pub dropped: Vec<bool>,
}

impl Standardization {
    /// Transform that leaves `p` columns untouched.
    pub fn identity(p: usize, has_intercept: bool) -> Self {
        Self {
            col_center: vec![0.0; p],
            col_scale: vec![1.0; p],
            y_center: 0.0,
            has_intercept,
            dropped: vec![false; p],
        }
    }

    pub fn p(&self) -> usize {
        self.col_scale.len()
    }

    /// Original indices of the columns kept in the standardized design.
    pub fn kept(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !self.dropped[j]).collect()
    }

    /// Maps a standardized fit (intercept, kept-column slopes) to original
    /// coordinates. Dropped columns get an exact zero.
    pub fn destandardize(&self, intercept_std: f64, coeffs_std: &[f64]) -> Result<(f64, Vec<f64>)> {
        let kept = self.kept();
        if coeffs_std.len() != kept.len() {
            return Err(Error::Dimension(format!(
                "{} standardized coefficients for {} kept columns",
                coeffs_std.len(),
                kept.len()
            )));
        }
        let mut coeffs = vec![0.0; self.p()];
        let mut intercept = intercept_std + self.y_center;
        for (&j, &b) in kept.iter().zip(coeffs_std) {
            if b != 0.0 {
                let beta = b / self.col_scale[j];
                coeffs[j] = beta;
                intercept -= beta * self.col_center[j];
            }
        }
        Ok((intercept, coeffs))
    }

    pub fn destandardize_fit(&self, fit: &FitResult) -> Result<FitResult> {
        let (intercept, coeffs) = self.destandardize(fit.intercept, &fit.coeffs)?;
        Ok(FitResult {
            intercept,
            coeffs,
            ..fit.clone()
        })
    }

    /// Applies the stored transform to new carriers (e.g. a test sample),
    /// returning only the kept columns.
    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "expected {} columns, got {}",
                self.p(),
                x.ncols()
            )));
        }
        let kept = self.kept();
        let mut out = x.select_columns(&kept);
        for (k, &j) in kept.iter().enumerate() {
            let (c, s) = (self.col_center[j], self.col_scale[j]);
            out.column_mut(k).apply(|v| *v = (*v - c) / s);
        }
        Ok(out)
    }
}

/// Standardizes `data`, returning the transformed dataset (kept columns only)
/// and the record needed to undo it.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows, got {n}")));
    }
    let mut col_center = vec![0.0; p];
    let mut col_scale = vec![1.0; p];
    let mut dropped = vec![false; p];
    for j in 0..p {
        let col: Vec<f64> = data.x.column(j).iter().copied().collect();
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            dropped[j] = true;
            col_center[j] = first;
            continue;
        }
        let med = median(&col)?;
        let mut s = norm_mad(&col)?;
        if s == 0.0 {
            let mean_abs = col.iter().map(|v| (v - med).abs()).sum::<f64>() / n as f64;
            s = mean_abs * (std::f64::consts::PI / 2.0).sqrt();
        }
        col_center[j] = if data.intercept { med } else { 0.0 };
        col_scale[j] = s;
    }
    if p > 0 && dropped.iter().all(|&d| d) {
        return Err(Error::AllColumnsDegenerate);
    }
    let y: Vec<f64> = data.y.iter().copied().collect();
    let y_center = if data.intercept { median(&y)? } else { 0.0 };

    let record = Standardization {
        col_center,
        col_scale,
        y_center,
        has_intercept: data.intercept,
        dropped,
    };
    let x = record.transform_x(&data.x)?;
    let y = DVector::from_iterator(n, data.y.iter().map(|v| v - y_center));
    Ok((Dataset::new(x, y, data.intercept)?, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn column_example() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 5.0]);
        let (std, rec) = standardize(&Dataset::new(x, y, true).unwrap()).unwrap();
        assert_abs_diff_eq!(rec.col_center[0], 2.0);
        assert_abs_diff_eq!(rec.col_scale[0], 1.4826, epsilon = 1e-4);
        assert_abs_diff_eq!(std.x[(0, 0)], -0.6745, epsilon = 1e-3);
        assert_abs_diff_eq!(std.x[(1, 0)], 0.0);
        assert_abs_diff_eq!(std.x[(2, 0)], 0.6745, epsilon = 1e-3);
        assert_abs_diff_eq!(rec.y_center, 1.0);
    }

    #[test]
    fn restandardizing_keeps_center_at_zero() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 4.0, 2.0, 9.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (s1, _) = standardize(&Dataset::new(x, y, true).unwrap()).unwrap();
        let (_, r2) = standardize(&s1).unwrap();
        assert_abs_diff_eq!(r2.col_center[0], 0.0);
        assert_abs_diff_eq!(r2.col_scale[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r2.y_center, 0.0);
    }

    #[test]
    fn constant_column_is_dropped() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 5.0, 7.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let (std, rec) = standardize(&Dataset::new(x, y, true).unwrap()).unwrap();
        assert_eq!(std.p(), 1);
        assert_eq!(rec.dropped, vec![false, true]);
        let (_, coeffs) = rec.destandardize(0.3, &[0.5]).unwrap();
        assert_eq!(coeffs[1], 0.0);
    }

    #[test]
    fn all_constant_is_an_error() {
        let x = DMatrix::from_element(4, 2, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            standardize(&Dataset::new(x, y, true).unwrap()).unwrap_err(),
            Error::AllColumnsDegenerate
        );
    }

    #[test]
    fn tied_column_uses_fallback_scale() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.0, 0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (_, rec) = standardize(&Dataset::new(x, y, true).unwrap()).unwrap();
        assert!(!rec.dropped[0]);
        assert!(rec.col_scale[0] > 0.0);
    }

    #[test]
    fn identity_is_noop() {
        let rec = Standardization::identity(3, true);
        let (a, b) = rec.destandardize(1.5, &[1.0, 0.0, -2.0]).unwrap();
        assert_eq!(a, 1.5);
        assert_eq!(b, vec![1.0, 0.0, -2.0]);
        assert!(rec.destandardize(0.0, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn destandardized_predictions_match(
            seed in 0u64..1000,
            coef in proptest::collection::vec(-3.0f64..3.0, 4),
            zero_mask in proptest::collection::vec(any::<bool>(), 4),
            b0 in -2.0f64..2.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-5.0..5.0));
            let y = DVector::from_fn(12, |_, _| rng.random_range(-5.0..5.0));
            let data = Dataset::new(x, y, true).unwrap();
            let (std, rec) = standardize(&data).unwrap();
            let coef: Vec<f64> = coef.iter().zip(&zero_mask).map(|(&c, &z)| if z { 0.0 } else { c }).collect();
            let pred_std = std.predict(b0, &coef).add_scalar(rec.y_center);
            let (a, beta) = rec.destandardize(b0, &coef).unwrap();
            let pred = data.predict(a, &beta);
            for i in 0..12 {
                prop_assert!((pred[i] - pred_std[i]).abs() < 1e-10);
            }
            for j in 0..4 {
                prop_assert_eq!(coef[j] == 0.0, beta[j] == 0.0);
            }
        }
    }
}
