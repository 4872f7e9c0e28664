//! Weighted Lasso subproblem solved at every IRLS step.
//!
//! With row weights `w_i`, let `W = diag(sqrt(w))`, `y* = W y`, `X* = W X` and
//! `k* = sqrt(w)` (the weighted intercept column). Each column of `X*` is split
//! into its projection `eta_j k*` and the remainder `x*perp_j`, orthogonal to
//! `k*`. The slopes then solve an intercept-free Lasso on `X*perp`, and the
//! intercept follows in closed form.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Weighted ones-column and the design projected off it.
#[derive(Debug, Clone)]
pub struct InterceptProjection {
    pub k: DVector<f64>,
    pub k_norm2: f64,
    pub eta: DVector<f64>,
    pub x_perp: DMatrix<f64>,
}

/// Splits each column of `xw` into a multiple of `k` plus a part orthogonal to `k`.
pub fn orthogonalize_intercept(xw: &DMatrix<f64>, k: &DVector<f64>) -> Result<InterceptProjection> {
    if xw.nrows() != k.len() {
        return Err(Error::Dimension("weighted design and k* differ in length".into()));
    }
    let k_norm2 = k.norm_squared();
    if !(k_norm2 > 0.0) {
        return Err(Error::DegenerateWeights(
            "all observation weights are zero".into(),
        ));
    }
    let eta = xw.tr_mul(k) / k_norm2;
    let mut x_perp = xw.clone();
    for (j, mut col) in x_perp.column_iter_mut().enumerate() {
        col.axpy(-eta[j], k, 1.0);
    }
    Ok(InterceptProjection {
        k: k.clone(),
        k_norm2,
        eta,
        x_perp,
    })
}

/// Intercept solving the first normal equation,
/// `k*' y* - |k*|^2 (b_0 + sum_j eta_j b_j) = 0`.
pub fn recover_intercept(proj: &InterceptProjection, yw: &DVector<f64>, slopes: &[f64]) -> f64 {
    let shift: f64 = proj.eta.iter().zip(slopes).map(|(e, b)| e * b).sum();
    proj.k.dot(yw) / proj.k_norm2 - shift
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// A sweep phase ends once no coordinate moves the fit by more than this.
    pub tol: f64,
    /// KKT tolerance (absolute in standardized units; see [`kkt_tolerance`]).
    pub ktol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-9,
            ktol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coeffs: Vec<f64>,
    pub sweeps: usize,
    pub kkt_violation: f64,
}

/// Tolerance the KKT certificate is checked against: `ktol` in absolute terms,
/// or `1e-4 * ktol` relative to `max_j |x_j' y|` when that is larger than 1e4.
pub fn kkt_tolerance(x: &DMatrix<f64>, y: &DVector<f64>, ktol: f64) -> f64 {
    let g0 = x.tr_mul(y).amax();
    ktol * (1.0f64).max(1e-4 * g0)
}

/// Largest KKT violation of `beta` for `min 1/2 |y - X b|^2 + penalty |b|_1`.
/// Active coordinates contribute `|g_j - penalty sign(b_j)| / (1 + penalty)`,
/// inactive ones `max(0, |g_j| - penalty)`, with `g = X'(y - X b)`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, penalty: f64, beta: &[f64]) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    let g = x.tr_mul(&r);
    beta.iter()
        .zip(g.iter())
        .map(|(&b, &gj)| {
            if b != 0.0 {
                (gj - penalty * b.signum()).abs() / (1.0 + penalty)
            } else {
                (gj.abs() - penalty).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `1/2 |y - X b|^2 + penalty |b|_1` by cyclic coordinate descent
/// with active-set sweeps, stopping only once the KKT certificate holds.
pub fn solve_weighted_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalty: f64,
    warm_start: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension("design and response differ in length".into()));
    }
    if !(penalty >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty must be >= 0, got {penalty}")));
    }
    let mut beta = match warm_start {
        Some(w) if w.len() == p => w.to_vec(),
        Some(w) => {
            return Err(Error::Dimension(format!("warm start has {} entries, expected {p}", w.len())))
        }
        None => vec![0.0; p],
    };
    if p == 0 {
        return Ok(LassoSolution { coeffs: beta, sweeps: 0, kkt_violation: 0.0 });
    }
    let norm2: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let scale = 1.0 + y.norm();
    for (j, b) in beta.iter_mut().enumerate() {
        if norm2[j] == 0.0 {
            *b = 0.0;
        }
    }
    let ktol = kkt_tolerance(x, y, opts.ktol);
    // With n >= p, coordinate updates run on the Gram matrix and the
    // correlations g = X'r instead of the n-vector of residuals.
    let gram = (n >= p).then(|| x.tr_mul(x));
    let mut r = y - x * DVector::from_column_slice(&beta);
    let mut g = x.tr_mul(&r);
    let mut tol = opts.tol;
    let mut sweeps = 0;

    let update = |j: usize, beta: &mut [f64], r: &mut DVector<f64>, g: &mut DVector<f64>| -> f64 {
        if norm2[j] == 0.0 {
            return 0.0;
        }
        let old = beta[j];
        let corr = match &gram {
            Some(_) => g[j],
            None => x.column(j).dot(r),
        };
        let new = soft_threshold(corr + norm2[j] * old, penalty) / norm2[j];
        if new != old {
            match &gram {
                Some(gm) => g.axpy(old - new, &gm.column(j), 1.0),
                None => r.axpy(old - new, &x.column(j), 1.0),
            }
            beta[j] = new;
        }
        (new - old).abs() * norm2[j].sqrt()
    };

    loop {
        // Full sweep, then iterate on the active set until it settles.
        let mut moved = 0.0f64;
        for j in 0..p {
            moved = moved.max(update(j, &mut beta, &mut r, &mut g));
        }
        sweeps += 1;
        while moved > tol * scale && sweeps < opts.max_sweeps {
            moved = 0.0;
            for j in 0..p {
                if beta[j] != 0.0 {
                    moved = moved.max(update(j, &mut beta, &mut r, &mut g));
                }
            }
            sweeps += 1;
        }
        r = y - x * DVector::from_column_slice(&beta);
        if gram.is_some() {
            g = x.tr_mul(&r);
        }
        let violation = kkt_violation(x, y, penalty, &beta);
        if violation <= ktol {
            return Ok(LassoSolution {
                coeffs: beta,
                sweeps,
                kkt_violation: violation,
            });
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NoConvergence {
                what: "weighted lasso coordinate descent",
                iterations: sweeps,
            });
        }
        if moved <= tol * scale {
            tol = (tol * 0.01).max(1e-18);
        }
    }
}

/// Result of one weighted Lasso solve with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLassoFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub sweeps: usize,
}

/// Solves `min 1/2 sum_i w_i (y_i - b_0 - x_i'b)^2 + penalty |b|_1` with the
/// intercept (when `data.intercept`) left unpenalized.
pub fn weighted_lasso(
    data: &Dataset,
    weights: &[f64],
    penalty: f64,
    warm_start: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<WeightedLassoFit> {
    if weights.len() != data.n() {
        return Err(Error::Dimension("one weight per observation required".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    let k = DVector::from_iterator(weights.len(), weights.iter().map(|w| w.sqrt()));
    let mut xw = data.x.clone();
    for mut row_col in xw.column_iter_mut() {
        row_col.component_mul_assign(&k);
    }
    let yw = data.y.component_mul(&k);
    if data.intercept {
        let proj = orthogonalize_intercept(&xw, &k)?;
        let sol = solve_weighted_lasso(&proj.x_perp, &yw, penalty, warm_start, opts)?;
        let intercept = recover_intercept(&proj, &yw, &sol.coeffs);
        Ok(WeightedLassoFit {
            intercept,
            slopes: sol.coeffs,
            sweeps: sol.sweeps,
        })
    } else {
        if k.norm_squared() == 0.0 {
            return Err(Error::DegenerateWeights("all observation weights are zero".into()));
        }
        let sol = solve_weighted_lasso(&xw, &yw, penalty, warm_start, opts)?;
        Ok(WeightedLassoFit {
            intercept: 0.0,
            slopes: sol.coeffs,
            sweeps: sol.sweeps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn centered_columns_with_unit_weights_are_untouched() {
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, 1.0, -2.0, 2.0]);
        let k = DVector::from_element(4, 1.0);
        let proj = orthogonalize_intercept(&x, &k).unwrap();
        assert_abs_diff_eq!(proj.eta[0], 0.0);
        assert_eq!(proj.x_perp, x);
    }

    #[test]
    fn column_equal_to_k_projects_to_zero() {
        let k = DVector::from_vec(vec![0.5, 1.0, 2.0]);
        let x = DMatrix::from_column_slice(3, 1, k.as_slice());
        let proj = orthogonalize_intercept(&x, &k).unwrap();
        assert_abs_diff_eq!(proj.eta[0], 1.0, epsilon = 1e-15);
        assert!(proj.x_perp.amax() < 1e-15);
    }

    #[test]
    fn projection_is_orthogonal_to_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 5, 3);
        let k = DVector::from_fn(5, |_, _| rng.random_range(0.0..1.5));
        let proj = orthogonalize_intercept(&x, &k).unwrap();
        assert!(proj.x_perp.tr_mul(&k).amax() < 1e-12);
    }

    #[test]
    fn zero_weights_are_rejected() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            orthogonalize_intercept(&x, &DVector::zeros(3)),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn unpenalized_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 30, 4);
        let y = DVector::from_fn(30, |_, _| rng.random_range(-3.0..3.0));
        let sol = solve_weighted_lasso(&x, &y, 0.0, None, &LassoOptions::default()).unwrap();
        let ls = (x.tr_mul(&x)).cholesky().unwrap().solve(&x.tr_mul(&y));
        for j in 0..4 {
            assert!((sol.coeffs[j] - ls[j]).abs() <= 1e-8 * (1.0 + ls[j].abs()));
        }
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_matrix(&mut rng, 10, 4).qr().q();
        let y = DVector::from_fn(10, |_, _| rng.random_range(-3.0..3.0));
        let pen = 0.4;
        let sol = solve_weighted_lasso(&q, &y, pen, None, &LassoOptions::default()).unwrap();
        let z = q.tr_mul(&y);
        for j in 0..4 {
            assert_abs_diff_eq!(sol.coeffs[j], soft_threshold(z[j], pen), epsilon = 1e-8);
        }
    }

    #[test]
    fn large_penalty_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 12, 5);
        let y = DVector::from_fn(12, |_, _| rng.random_range(-3.0..3.0));
        let pen = x.tr_mul(&y).amax();
        let sol = solve_weighted_lasso(&x, &y, pen, Some(&[1.0; 5]), &LassoOptions::default()).unwrap();
        assert!(sol.coeffs.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn intercept_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Dataset::new(
            random_matrix(&mut rng, 9, 2),
            DVector::from_fn(9, |_, _| rng.random_range(-3.0..3.0)),
            true,
        )
        .unwrap();
        let w: Vec<f64> = (0..9).map(|_| rng.random_range(0.1..1.0)).collect();

        // zero slopes -> weighted mean of y
        let big = 1e6;
        let fit = weighted_lasso(&data, &w, big, None, &LassoOptions::default()).unwrap();
        let wmean = data.y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / w.iter().sum::<f64>();
        assert!(fit.slopes.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(fit.intercept, wmean, epsilon = 1e-12);

        // the first normal equation holds exactly
        let fit = weighted_lasso(&data, &w, 0.3, None, &LassoOptions::default()).unwrap();
        let r = data.residuals(fit.intercept, &fit.slopes);
        let eq1: f64 = r.iter().zip(&w).map(|(r, w)| r * w).sum();
        assert!(eq1.abs() < 1e-10);
    }

    #[test]
    fn centered_unit_weight_data_has_zero_intercept() {
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, 1.0, -2.0, 2.0]);
        let y = DVector::from_vec(vec![-1.0, 1.5, -2.5, 2.0]);
        let data = Dataset::new(x, y, true).unwrap();
        let fit = weighted_lasso(&data, &[1.0; 4], 0.1, None, &LassoOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-10);
    }
}
