//! S-Ridge initial estimator.
//!
//! Minimizes `n s_n(r(b))^2 + gamma |b|_2^2` (intercept unpenalized), where
//! `s_n` is the bisquare M-scale, by multi-start IRLS. At a stationary point
//!
//! ```text
//! sum_i w_i r_i x_i = gamma * (sum_i w_i r_i^2) / (n s^2) * b,   w_i = w0(r_i / s)
//! ```
//!
//! so each step is a weighted ridge regression with that effective penalty,
//! followed by step-halving whenever the objective would increase.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scale::{mscale, mscale_seeded, norm_mad, tau_scale, MScaleConfig};
use crate::tuning::{fold_assignment, task_seed};
use crate::types::{CvResult, FitResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SRidgeConfig {
    pub mscale: MScaleConfig,
    /// Candidate penalties for cross-validation; `None` uses [`default_gamma_grid`].
    pub gamma_grid: Option<Vec<f64>>,
    pub n_starts: usize,
    /// Starts kept for full iteration after two refinement steps each.
    pub n_keep: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SRidgeConfig {
    fn default() -> Self {
        Self {
            mscale: MScaleConfig::default(),
            gamma_grid: None,
            n_starts: 20,
            n_keep: 3,
            tol: 1e-6,
            max_iter: 100,
            folds: 5,
            seed: 0,
        }
    }
}

impl SRidgeConfig {
    fn validate(&self) -> Result<()> {
        self.mscale.validate()?;
        if self.n_starts == 0 || self.n_keep == 0 || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "n_starts, n_keep, tol and max_iter must be positive".into(),
            ));
        }
        if let Some(g) = &self.gamma_grid {
            if g.is_empty() || g.iter().any(|&v| !(v >= 0.0)) || g.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidArgument(
                    "gamma grid must be non-empty, non-negative and sorted".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `n s_n(r)^2 + gamma |slopes|^2`.
pub fn sridge_objective(
    data: &Dataset,
    intercept: f64,
    slopes: &[f64],
    gamma: f64,
    cfg: &MScaleConfig,
) -> Result<f64> {
    let r = data.residuals(intercept, slopes);
    let s = mscale(r.as_slice(), cfg)?;
    Ok(objective_from_scale(data.n(), s, slopes, gamma))
}

fn objective_from_scale(n: usize, s: f64, slopes: &[f64], gamma: f64) -> f64 {
    n as f64 * s * s + gamma * slopes.iter().map(|b| b * b).sum::<f64>()
}

/// Weighted ridge regression `min sum w_i (y_i - a - x_i'b)^2 + gamma |b|^2`.
/// Uses the `n x n` dual system when `p > n`.
pub fn weighted_ridge(data: &Dataset, weights: &[f64], gamma: f64) -> Result<(f64, Vec<f64>)> {
    let (n, p) = (data.n(), data.p());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights("ridge weights sum to zero".into()));
    }
    let (xbar, ybar) = if data.intercept {
        let w = DVector::from_column_slice(weights);
        (data.x.tr_mul(&w) / total, data.y.dot(&w) / total)
    } else {
        (DVector::zeros(p), 0.0)
    };
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut xt = DMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            xt[(i, j)] = sw[i] * (data.x[(i, j)] - xbar[j]);
        }
    }
    let yt = DVector::from_fn(n, |i, _| sw[i] * (data.y[i] - ybar));

    let beta = if p == 0 {
        DVector::zeros(0)
    } else if p <= n {
        let mut a = xt.tr_mul(&xt);
        for j in 0..p {
            a[(j, j)] += gamma;
        }
        let rhs = xt.tr_mul(&yt);
        a.cholesky()
            .ok_or_else(|| Error::Singular("weighted ridge normal equations".into()))?
            .solve(&rhs)
    } else {
        let mut k = &xt * xt.transpose();
        for i in 0..n {
            k[(i, i)] += gamma;
        }
        let alpha = k
            .cholesky()
            .ok_or_else(|| Error::Singular("weighted ridge dual system".into()))?
            .solve(&yt);
        xt.tr_mul(&alpha)
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("weighted ridge produced non-finite coefficients".into()));
    }
    let intercept = if data.intercept { ybar - xbar.dot(&beta) } else { 0.0 };
    Ok((intercept, beta.as_slice().to_vec()))
}

struct Start {
    intercept: f64,
    slopes: Vec<f64>,
}

/// Runs at most `max_iter` guarded IRLS steps from one start. The objective
/// trace of the result starts at the start point's objective.
fn irls_from(data: &Dataset, gamma: f64, cfg: &SRidgeConfig, start: Start, max_iter: usize) -> Result<FitResult> {
    let n = data.n();
    let rho = cfg.mscale.rho0;
    let mut a = start.intercept;
    let mut b = start.slopes;
    let mut r = data.residuals(a, &b);
    let mut s = mscale(r.as_slice(), &cfg.mscale)?;
    let mut obj = objective_from_scale(n, s, &b, gamma);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        if s == 0.0 {
            converged = true;
            break;
        }
        let w: Vec<f64> = r.iter().map(|&ri| rho.weight(ri / s)).collect();
        let wr2: f64 = r.iter().zip(&w).map(|(ri, wi)| wi * ri * ri).sum();
        let gamma_eff = gamma * wr2 / (n as f64 * s * s);
        let (mut a1, mut b1) = match weighted_ridge(data, &w, gamma_eff) {
            Ok(v) => v,
            Err(_) => break,
        };

        let mut accepted = None;
        for _ in 0..=10 {
            let r1 = data.residuals(a1, &b1);
            let s1 = mscale_seeded(r1.as_slice(), &cfg.mscale, Some(s))?;
            let obj1 = objective_from_scale(n, s1, &b1, gamma);
            if obj1 <= obj {
                accepted = Some((r1, s1, obj1));
                break;
            }
            a1 = 0.5 * (a + a1);
            for (x1, x0) in b1.iter_mut().zip(&b) {
                *x1 = 0.5 * (*x0 + *x1);
            }
        }
        let Some((r1, s1, obj1)) = accepted else {
            converged = true;
            break;
        };

        let mut diff2 = (a1 - a).powi(2);
        let mut norm2 = a.powi(2);
        for (x1, x0) in b1.iter().zip(&b) {
            diff2 += (x1 - x0).powi(2);
            norm2 += x0 * x0;
        }
        a = a1;
        b = b1;
        r = r1;
        s = s1;
        obj = obj1;
        trace.push(obj);
        if diff2.sqrt() <= cfg.tol * norm2.sqrt().max(1e-10) {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        intercept: a,
        coeffs: b,
        scale: s,
        lambda: gamma,
        iterations,
        objective_trace: trace,
        converged,
    })
}

/// Size of the random elemental subsamples used as extra starts.
fn subsample_size(n: usize, p: usize) -> usize {
    (p + 1).min(n.div_ceil(2)).max(1).min(n)
}

fn starts(data: &Dataset, gamma: f64, cfg: &SRidgeConfig) -> Vec<Start> {
    let (n, p) = (data.n(), data.p());
    let mut out = Vec::with_capacity(cfg.n_starts);
    if let Ok((a, b)) = weighted_ridge(data, &vec![1.0; n], gamma) {
        out.push(Start { intercept: a, slopes: b });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = subsample_size(n, p);
    for _ in 1..cfg.n_starts {
        for _attempt in 0..10 {
            let idx = sample(&mut rng, n, h);
            let mut w = vec![0.0; n];
            for i in idx.iter() {
                w[i] = 1.0;
            }
            if let Ok((a, b)) = weighted_ridge(data, &w, gamma) {
                out.push(Start { intercept: a, slopes: b });
                break;
            }
        }
    }
    out
}

const REFINE_STEPS: usize = 2;

/// S-Ridge fit for a fixed `gamma`. Every start (the full-data ridge fit and
/// `n_starts - 1` random subsample ridge fits) gets two IRLS steps; the
/// `n_keep` best are then iterated to convergence and the best is returned.
pub fn fit_sridge(data: &Dataset, gamma: f64, cfg: &SRidgeConfig) -> Result<FitResult> {
    cfg.validate()?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    let candidates = starts(data, gamma, cfg);
    let mut refined: Vec<FitResult> = candidates
        .into_par_iter()
        .filter_map(|st| irls_from(data, gamma, cfg, st, REFINE_STEPS.min(cfg.max_iter)).ok())
        .filter(|f| f.objective().is_finite())
        .collect();
    refined.sort_by(|a, b| a.objective().total_cmp(&b.objective()));
    let first_objectives: Vec<f64> = refined.iter().map(|f| f.objective_trace[0]).collect();
    refined.truncate(cfg.n_keep);

    let fits: Vec<FitResult> = refined
        .into_par_iter()
        .filter_map(|f| {
            if f.converged || f.iterations >= cfg.max_iter {
                return Some(f);
            }
            let st = Start {
                intercept: f.intercept,
                slopes: f.coeffs.clone(),
            };
            let more = irls_from(data, gamma, cfg, st, cfg.max_iter - f.iterations).ok()?;
            let mut trace = f.objective_trace;
            trace.extend_from_slice(&more.objective_trace[1..]);
            Some(FitResult {
                iterations: f.iterations + more.iterations,
                objective_trace: trace,
                ..more
            })
        })
        .filter(|f| f.objective().is_finite())
        .collect();
    let best = fits
        .iter()
        .min_by(|a, b| a.objective().total_cmp(&b.objective()))
        .ok_or_else(|| Error::NoCandidate("no S-Ridge start produced a finite objective".into()))?;
    debug_assert!(first_objectives
        .iter()
        .all(|&o| best.objective() <= o * (1.0 + 1e-12)));
    Ok(best.clone())
}

/// Default candidate penalties: 20 log-spaced values spanning
/// `[1e-3, 1e2] * n * madn(y)^2 / p`.
pub fn default_gamma_grid(data: &Dataset) -> Vec<f64> {
    let (n, p) = (data.n() as f64, data.p().max(1) as f64);
    let y: Vec<f64> = data.y.iter().copied().collect();
    let mut s = norm_mad(&y).unwrap_or(0.0);
    if !(s > 0.0) {
        s = 1.0;
    }
    let base = n * s * s / p;
    (0..20)
        .map(|k| base * 10f64.powf(-3.0 + 5.0 * k as f64 / 19.0))
        .collect()
}

/// Robust K-fold cross-validation of `gamma`: sum over folds of the tau-scale
/// of held-out residuals; ties go to the smaller `gamma`.
pub fn cv_sridge(data: &Dataset, cfg: &SRidgeConfig) -> Result<CvResult> {
    cfg.validate()?;
    let n = data.n();
    if n < 10 {
        return Err(Error::InvalidArgument(format!("cross-validation needs n >= 10, got {n}")));
    }
    let grid = cfg.gamma_grid.clone().unwrap_or_else(|| default_gamma_grid(data));
    if grid.len() == 1 {
        return CvResult::select(grid, vec![Some(0.0)], false);
    }
    let folds = fold_assignment(n, cfg.folds, cfg.seed);
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    let scores: Vec<Option<f64>> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let (train, test) = folds.split(data, f);
            let sub = SRidgeConfig {
                seed: task_seed(cfg.seed, (g * folds.len() + f) as u64),
                ..cfg.clone()
            };
            let fit = fit_sridge(&train, grid[g], &sub).ok()?;
            let r = test.residuals(fit.intercept, &fit.coeffs);
            tau_scale(r.as_slice()).ok()
        })
        .collect();
    let criterion = (0..grid.len())
        .map(|g| {
            scores[g * folds.len()..(g + 1) * folds.len()]
                .iter()
                .try_fold(0.0, |acc, s| s.map(|v| acc + v))
        })
        .collect();
    CvResult::select(grid, criterion, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn linear_data(seed: u64, n: usize, beta: &[f64], sigma: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_column_slice(beta) + e;
        Dataset::new(x, y, true).unwrap()
    }

    #[test]
    fn objective_examples() {
        let data = linear_data(1, 30, &[1.0, 0.0], 1.0);
        let cfg = MScaleConfig::default();
        let sy = mscale(data.y.as_slice(), &cfg).unwrap();
        let o = sridge_objective(&data, 0.0, &[0.0, 0.0], 5.0, &cfg).unwrap();
        assert!((o - 30.0 * sy * sy).abs() < 1e-10);
        let r = data.residuals(0.2, &[1.0, 0.5]);
        let s = mscale(r.as_slice(), &cfg).unwrap();
        let o0 = sridge_objective(&data, 0.2, &[1.0, 0.5], 0.0, &cfg).unwrap();
        assert!((o0 - 30.0 * s * s).abs() < 1e-10);
    }

    #[test]
    fn ridge_primal_and_dual_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..1.0)).collect();
        let data = Dataset::new(x.clone(), y.clone(), true).unwrap();
        let (a, b) = weighted_ridge(&data, &w, 0.7).unwrap();
        // Wide copy: pad with zero columns so that p > n takes the dual path.
        let wide = x.clone().resize_horizontally(8, 0.0);
        let data_wide = Dataset::new(wide, y, true).unwrap();
        let (a2, b2) = weighted_ridge(&data_wide, &w, 0.7).unwrap();
        assert!((a - a2).abs() < 1e-10);
        for j in 0..4 {
            assert!((b[j] - b2[j]).abs() < 1e-10);
        }
        assert!(b2[4..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn clean_data_recovers_coefficients() {
        let data = linear_data(7, 200, &[1.0, 2.0, 0.0, 0.0, 0.0], 1.0);
        let fit = fit_sridge(&data, 1.0, &SRidgeConfig::default()).unwrap();
        let truth = [1.0, 2.0, 0.0, 0.0, 0.0];
        for j in 0..5 {
            assert!((fit.coeffs[j] - truth[j]).abs() <= 0.2, "{:?}", fit.coeffs);
        }
        assert!(fit.scale > 0.5 && fit.scale < 1.5);
    }

    #[test]
    fn trace_is_non_increasing() {
        let data = linear_data(9, 60, &[3.0, 1.5, 0.0, 0.0], 1.0);
        let fit = fit_sridge(&data, 2.0, &SRidgeConfig::default()).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn penalized_norm_not_above_unpenalized() {
        let data = linear_data(3, 50, &[2.0, -1.0, 0.5], 1.0);
        let cfg = SRidgeConfig::default();
        let s = fit_sridge(&data, 0.0, &cfg).unwrap();
        let ps = fit_sridge(&data, 20.0, &cfg).unwrap();
        let n2 = |f: &FitResult| f.coeffs.iter().map(|b| b * b).sum::<f64>();
        assert!(n2(&ps) <= n2(&s) + 1e-8);
    }

    #[test]
    fn gross_outliers_do_not_beat_zero() {
        let mut data = linear_data(4, 40, &[1.0, 1.0], 1.0);
        for i in 0..12 {
            data.y[i] = 1e6;
        }
        let cfg = SRidgeConfig::default();
        let fit = fit_sridge(&data, 1.0, &cfg).unwrap();
        let at_zero = sridge_objective(&data, 0.0, &[0.0, 0.0], 1.0, &cfg.mscale).unwrap();
        assert!(fit.objective() <= at_zero);
        assert!(fit.coeffs.iter().all(|b| b.is_finite() && b.abs() < 5.0));
    }

    #[test]
    fn equivariant_in_response_scale() {
        let data = linear_data(5, 40, &[1.0, -2.0, 0.0], 1.0);
        let cfg = SRidgeConfig::default();
        let f1 = fit_sridge(&data, 3.0, &cfg).unwrap();
        let mut scaled = data.clone();
        scaled.y *= 4.0;
        let f4 = fit_sridge(&scaled, 3.0, &cfg).unwrap();
        for j in 0..3 {
            assert!((f4.coeffs[j] - 4.0 * f1.coeffs[j]).abs() < 1e-4 * (1.0 + f4.coeffs[j].abs()));
        }
    }

    #[test]
    fn cv_single_candidate_and_nonnegative_criterion() {
        let data = linear_data(6, 40, &[1.0, 0.0], 1.0);
        let cfg = SRidgeConfig {
            gamma_grid: Some(vec![2.5]),
            ..SRidgeConfig::default()
        };
        assert_eq!(cv_sridge(&data, &cfg).unwrap().selected, 2.5);
        let cfg = SRidgeConfig {
            gamma_grid: Some(vec![0.1, 1.0, 10.0]),
            n_starts: 5,
            ..SRidgeConfig::default()
        };
        let cv = cv_sridge(&data, &cfg).unwrap();
        assert!(cv.criterion.iter().all(|c| c.unwrap() >= 0.0));
    }
}
