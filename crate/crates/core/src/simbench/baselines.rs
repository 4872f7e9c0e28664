//! Least-squares Lasso baselines with squared-error cross-validation, and
//! oracle fits restricted to the true support.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Penalty};
use crate::mmlasso::{fit_mmlasso, Reweighted};
use crate::preprocess::standardize;
use crate::pwls::{weighted_lasso, LassoOptions};
use crate::sridge::{fit_sridge, SRidgeConfig};
use crate::tuning::fold_assignment;
use crate::types::{CvResult, FitResult};

/// Number of log-spaced non-zero LS-Lasso candidates.
pub const LS_GRID_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsLassoFit {
    pub fit: FitResult,
    pub cv: Option<CvResult>,
}

/// `max_j |x_j'(y - mean(y))|`, the smallest penalty of
/// `1/2 |r|^2 + lambda |b|_1` with all slopes zero.
pub fn ls_lambda_max(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let yc: DVector<f64> = if data.intercept {
        data.y.add_scalar(-data.y.sum() / n)
    } else {
        data.y.clone()
    };
    let mut best: f64 = 0.0;
    for j in 0..data.p() {
        let col = data.x.column(j);
        let c = if data.intercept {
            let m = col.sum() / n;
            col.iter().zip(yc.iter()).map(|(x, y)| (x - m) * y).sum::<f64>()
        } else {
            col.dot(&yc)
        };
        best = best.max(c.abs());
    }
    best
}

/// Ascending candidates: 50 log-spaced values on `[1e-3, 1] * lambda_max`,
/// preceded by 0 when `p <= n`.
pub fn ls_grid(data: &Dataset) -> Vec<f64> {
    let lmax = ls_lambda_max(data).max(f64::MIN_POSITIVE);
    let mut g = Vec::with_capacity(LS_GRID_SIZE + 1);
    if data.p() <= data.n() {
        g.push(0.0);
    }
    for k in 0..LS_GRID_SIZE {
        g.push(lmax * 10f64.powf(-3.0 + 3.0 * k as f64 / (LS_GRID_SIZE - 1) as f64));
    }
    g
}

fn ls_fit(data: &Dataset, lambda: f64, warm: Option<&[f64]>) -> Result<FitResult> {
    let w = vec![1.0; data.n()];
    let sol = weighted_lasso(data, &w, lambda, warm, &LassoOptions::default())?;
    let r = data.residuals(sol.intercept, &sol.slopes);
    let rss = r.norm_squared();
    let l1: f64 = sol.slopes.iter().map(|b| b.abs()).sum();
    Ok(FitResult {
        intercept: sol.intercept,
        coeffs: sol.slopes,
        scale: (rss / data.n() as f64).sqrt(),
        lambda,
        iterations: sol.sweeps,
        objective_trace: vec![0.5 * rss + lambda * l1],
        converged: true,
    })
}

/// K-fold CV with summed squared held-out residuals; each fold walks the
/// grid from the largest penalty down with warm starts. Ties go to the
/// larger penalty.
fn cv_ls(data: &Dataset, grid: &[f64], folds: usize, seed: u64) -> Result<CvResult> {
    if grid.len() == 1 {
        return CvResult::select(grid.to_vec(), vec![Some(0.0)], true);
    }
    if data.n() < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "cross-validation with {folds} folds needs n >= {}",
            2 * folds
        )));
    }
    let split = fold_assignment(data.n(), folds, seed);
    let per_fold: Vec<Vec<Option<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split.split(data, f);
            let mut out = vec![None; grid.len()];
            let mut warm: Option<Vec<f64>> = None;
            for g in (0..grid.len()).rev() {
                if let Ok(fit) = ls_fit(&train, grid[g], warm.as_deref()) {
                    let r = test.residuals(fit.intercept, &fit.coeffs);
                    out[g] = Some(r.norm_squared()).filter(|v| v.is_finite());
                    warm = Some(fit.coeffs);
                }
            }
            out
        })
        .collect();
    let criterion = (0..grid.len())
        .map(|g| per_fold.iter().try_fold(0.0, |acc, f| f[g].map(|v| acc + v)))
        .collect();
    CvResult::select(grid.to_vec(), criterion, true)
}

fn ls_select(data: &Dataset, penalty: Penalty, folds: usize, seed: u64) -> Result<(FitResult, Option<CvResult>)> {
    let (lambda, cv) = match penalty {
        Penalty::Fixed(l) => (l, None),
        Penalty::Cv => {
            let cv = cv_ls(data, &ls_grid(data), folds, seed)?;
            (cv.selected, Some(cv))
        }
    };
    Ok((ls_fit(data, lambda, None)?, cv))
}

/// LS-Lasso `min 1/2 |y - a - Xb|^2 + lambda |b|_1` on median/MAD
/// standardized carriers, returned in original coordinates.
pub fn fit_lslasso(data: &Dataset, lambda: Penalty, folds: usize, seed: u64) -> Result<LsLassoFit> {
    let (work, record) = standardize(data)?;
    let (fit, cv) = ls_select(&work, lambda, folds, seed)?;
    Ok(LsLassoFit {
        fit: record.destandardize_fit(&fit)?,
        cv,
    })
}

/// Adaptive LS-Lasso with weights `1 / |pilot_j|` from an LS-Lasso pilot.
/// Returns `(pilot, adaptive)`.
pub fn fit_adaptive_lslasso(
    data: &Dataset,
    lambda: Penalty,
    iota: Penalty,
    folds: usize,
    seed: u64,
) -> Result<(LsLassoFit, LsLassoFit)> {
    let (work, record) = standardize(data)?;
    let (pilot, pilot_cv) = ls_select(&work, lambda, folds, seed)?;
    let rw = Reweighted::new(&work, &pilot.coeffs, 1.0)?;
    let (fit, cv) = if rw.kept.is_empty() {
        (ls_fit(&rw.data, 0.0, None)?, None)
    } else {
        ls_select(&rw.data, iota, folds, seed.wrapping_add(1))?
    };
    Ok((
        LsLassoFit {
            fit: record.destandardize_fit(&pilot)?,
            cv: pilot_cv,
        },
        LsLassoFit {
            fit: record.destandardize_fit(&rw.expand(&fit))?,
            cv,
        },
    ))
}

/// Unpenalized fit on the carriers in `support`: least squares, or an MM
/// fit (S-estimate start, 85% efficiency bisquare) when `robust`.
pub fn fit_oracle(data: &Dataset, support: &[usize], robust: bool, cfg: &EstimatorConfig) -> Result<FitResult> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("oracle support is empty".into()));
    }
    if support.iter().any(|&j| j >= data.p()) {
        return Err(Error::Dimension("oracle support index out of range".into()));
    }
    let sub = data.columns(support);
    let fit = if robust {
        let sr = SRidgeConfig {
            seed: cfg.seed,
            ..cfg.sridge.clone()
        };
        let init = fit_sridge(&sub, 0.0, &sr)?;
        fit_mmlasso(&sub, 0.0, &init, &cfg.mm)?
    } else {
        least_squares(&sub)?
    };
    let mut coeffs = vec![0.0; data.p()];
    for (k, &j) in support.iter().enumerate() {
        coeffs[j] = fit.coeffs[k];
    }
    Ok(FitResult { coeffs, ..fit })
}

fn least_squares(data: &Dataset) -> Result<FitResult> {
    let (n, p) = (data.n(), data.p());
    let off = usize::from(data.intercept);
    let mut a = DMatrix::from_element(n, p + off, 1.0);
    a.view_mut((0, off), (n, p)).copy_from(&data.x);
    let chol = a
        .tr_mul(&a)
        .cholesky()
        .ok_or_else(|| Error::Singular("oracle least-squares design".into()))?;
    let theta = chol.solve(&a.tr_mul(&data.y));
    let intercept = if data.intercept { theta[0] } else { 0.0 };
    let coeffs = theta.as_slice()[off..].to_vec();
    let r = data.residuals(intercept, &coeffs);
    let dof = (n as f64 - (p + off) as f64).max(1.0);
    Ok(FitResult {
        intercept,
        coeffs,
        scale: (r.norm_squared() / dof).sqrt(),
        lambda: 0.0,
        iterations: 1,
        objective_trace: vec![0.5 * r.norm_squared()],
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn linear_data(seed: u64, n: usize, beta: &[f64], sigma: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_column_slice(beta) + e.add_scalar(1.0);
        Dataset::new(x, y, true).unwrap()
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let data = linear_data(1, 50, &[1.0, -2.0, 0.5], 1.0);
        let ls = fit_lslasso(&data, Penalty::Fixed(0.0), 5, 0).unwrap().fit;
        let direct = least_squares(&data).unwrap();
        assert!((ls.intercept - direct.intercept).abs() < 1e-6);
        for j in 0..3 {
            assert!((ls.coeffs[j] - direct.coeffs[j]).abs() < 1e-6);
        }
        let oracle = fit_oracle(&data, &[0, 1, 2], false, &EstimatorConfig::default()).unwrap();
        assert_eq!(oracle.coeffs, direct.coeffs);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let data = linear_data(2, 40, &[1.0, 2.0], 1.0);
        let (work, _) = standardize(&data).unwrap();
        let lmax = ls_lambda_max(&work);
        assert_eq!(ls_fit(&work, lmax * 1.0001, None).unwrap().nonzero(), 0);
        assert!(ls_fit(&work, lmax * 0.99, None).unwrap().nonzero() > 0);
        let g = ls_grid(&work);
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert!((g[50] - lmax).abs() < 1e-9 * lmax);
    }

    #[test]
    fn cv_picks_a_reasonable_fit() {
        let data = linear_data(3, 80, &[3.0, 1.5, 0.0, 0.0, 2.0], 1.0);
        let fit = fit_lslasso(&data, Penalty::Cv, 5, 1).unwrap();
        assert!(fit.cv.is_some());
        assert!((fit.fit.coeffs[0] - 3.0).abs() < 0.5);
        let (pilot, ad) = fit_adaptive_lslasso(&data, Penalty::Cv, Penalty::Cv, 5, 1).unwrap();
        assert_eq!(pilot.fit, fit.fit);
        for j in 0..5 {
            if pilot.fit.coeffs[j] == 0.0 {
                assert_eq!(ad.fit.coeffs[j], 0.0);
            }
        }
    }

    #[test]
    fn robust_oracle_resists_outliers() {
        let mut data = linear_data(4, 60, &[2.0, 0.0, 1.0], 1.0);
        for i in 0..6 {
            data.y[i] = 100.0;
        }
        let cfg = EstimatorConfig::default();
        let mm = fit_oracle(&data, &[0, 2], true, &cfg).unwrap();
        assert!((mm.coeffs[0] - 2.0).abs() < 0.5 && (mm.coeffs[2] - 1.0).abs() < 0.5);
        assert_eq!(mm.coeffs[1], 0.0);
        assert!(fit_oracle(&data, &[], true, &cfg).is_err());
    }
}
