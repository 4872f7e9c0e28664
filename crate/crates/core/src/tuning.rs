//! Penalty selection for the MM-Lasso: the `lambda_max` search, the 30-point
//! grid and robust K-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mmlasso::{fit_mmlasso, MMLassoConfig};
use crate::scale::{median, norm_mad, tau_scale};
use crate::types::{CvResult, FitResult};

/// Number of points in a penalty grid.
pub const GRID_SIZE: usize = 30;

/// Winsorization constant for [`winsorized_correlation`].
pub const WINSOR_C: f64 = 2.0;

/// Mixes a master seed with a task index (splitmix64 finalizer).
pub fn task_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A shuffled assignment of rows to folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    fold_of: Vec<usize>,
    k: usize,
}

impl Folds {
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == f).collect()
    }

    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != f).collect()
    }

    /// `(train, test)` for fold `f`.
    pub fn split(&self, data: &Dataset, f: usize) -> (Dataset, Dataset) {
        (data.rows(&self.train_rows(f)), data.rows(&self.test_rows(f)))
    }
}

/// Shuffles `0..n` with a seeded generator and deals rows round-robin into
/// `k` folds, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Folds {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k.max(1);
    }
    Folds { fold_of, k }
}

fn pearson(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 || svv == 0.0 {
        return 0.0;
    }
    (suv / (suu * svv).sqrt()).clamp(-1.0, 1.0)
}

fn robust_standardize(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let m = median(v)?;
    let s = norm_mad(v)?;
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("{what} has zero dispersion")));
    }
    Ok(v.iter().map(|x| (x - m) / s).collect())
}

/// Bivariate-winsorized correlation.
///
/// Both variables are standardized by median and normalized MAD. An initial
/// correlation `r0` comes from univariate winsorization at `+-c`; points
/// outside the ellipse `z' R0^-1 z <= c^2` are then pulled radially onto it
/// and the Pearson correlation of the adjusted points is returned.
pub fn winsorized_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension("correlation needs equal lengths".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("correlation needs n >= 3".into()));
    }
    let u = robust_standardize(x, "x")?;
    let v = robust_standardize(y, "y")?;
    let c = WINSOR_C;
    let uc: Vec<f64> = u.iter().map(|a| a.clamp(-c, c)).collect();
    let vc: Vec<f64> = v.iter().map(|a| a.clamp(-c, c)).collect();
    let r0 = pearson(&uc, &vc).clamp(-0.999, 0.999);
    let det = 1.0 - r0 * r0;
    let (mut ua, mut va) = (u, v);
    for (a, b) in ua.iter_mut().zip(va.iter_mut()) {
        let d2 = (*a * *a - 2.0 * r0 * *a * *b + *b * *b) / det;
        if d2 > c * c {
            let f = c / d2.sqrt();
            *a *= f;
            *b *= f;
        }
    }
    Ok(pearson(&ua, &va))
}

/// Penalty candidates, ascending and equally spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGrid {
    pub values: Vec<f64>,
    pub includes_zero: bool,
}

/// 30 equally spaced values on `[0, lambda_max]`, or on `(0, lambda_max]` when `p > n`.
pub fn make_grid(lambda_max: f64, p: usize, n: usize) -> Result<PenaltyGrid> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let k = GRID_SIZE as f64;
    let includes_zero = p <= n;
    let values = (0..GRID_SIZE)
        .map(|i| {
            if includes_zero {
                lambda_max * i as f64 / (k - 1.0)
            } else {
                lambda_max * (i + 1) as f64 / k
            }
        })
        .collect();
    Ok(PenaltyGrid { values, includes_zero })
}

const MAX_PROBES: usize = 60;
const BRACKET_REL_WIDTH: f64 = 0.02;

/// Approximate smallest `lambda` at which the MM-Lasso started from `start`
/// has all slopes equal to zero.
///
/// The seed `n max_j |corr_w(x_j, y)| madn(y) / s_n^2` is expanded by factors
/// of two until it brackets the transition, which is then bisected to a
/// relative width of 0.02. The upper end of the bracket is returned.
pub fn estimate_lambda_max(data: &Dataset, start: &FitResult, cfg: &MMLassoConfig) -> Result<f64> {
    if data.p() == 0 {
        return Err(Error::InvalidArgument("no slopes to penalize".into()));
    }
    let s = start.scale;
    let y: Vec<f64> = data.y.iter().copied().collect();
    let sy = norm_mad(&y).unwrap_or(0.0);
    let mut max_corr: f64 = 0.0;
    for j in 0..data.p() {
        let col: Vec<f64> = data.x.column(j).iter().copied().collect();
        if let Ok(r) = winsorized_correlation(&col, &y) {
            max_corr = max_corr.max(r.abs());
        }
    }
    let mut seed = data.n() as f64 * max_corr * sy / (s * s);
    if !(seed > 0.0 && seed.is_finite()) {
        seed = 1.0;
    }

    let mut probes = 0;
    let mut all_zero = |lambda: f64| -> Result<bool> {
        probes += 1;
        if probes > MAX_PROBES {
            return Err(Error::Bracket(format!(
                "lambda_max search exceeded {MAX_PROBES} probes"
            )));
        }
        let fit = fit_mmlasso(data, lambda, start, cfg)?;
        Ok(fit.coeffs.iter().all(|&b| b == 0.0))
    };

    let (mut lo, mut hi);
    if all_zero(seed)? {
        hi = seed;
        lo = seed / 2.0;
        while all_zero(lo)? {
            hi = lo;
            lo /= 2.0;
            if lo < seed * 1e-12 {
                return Ok(hi);
            }
        }
    } else {
        lo = seed;
        hi = 2.0 * seed;
        while !all_zero(hi)? {
            lo = hi;
            hi *= 2.0;
        }
    }
    while (hi - lo) / hi > BRACKET_REL_WIDTH {
        let mid = 0.5 * (lo + hi);
        if all_zero(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Robust K-fold cross-validation of the MM-Lasso penalty.
///
/// Within each fold the candidates are fitted in increasing order, the
/// smallest from `start` and each later one from the previous fit, all with
/// the frozen scale of `start`. The criterion is the tau-scale of all
/// held-out residuals pooled; a candidate with any failed fold fit is
/// disqualified. Ties go to the larger penalty.
pub fn cv_mmlasso(
    data: &Dataset,
    grid: &[f64],
    start: &FitResult,
    folds: usize,
    seed: u64,
    cfg: &MMLassoConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    let n = data.n();
    if n < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "cross-validation with {folds} folds needs n >= {}, got {n}",
            2 * folds
        )));
    }
    if grid.len() == 1 {
        return CvResult::select(grid.to_vec(), vec![Some(0.0)], true);
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let split = fold_assignment(n, folds, seed);
    // per_fold[f][g]: held-out residuals of fold f at candidate g.
    let per_fold: Vec<Vec<Option<Vec<f64>>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split.split(data, f);
            let mut out = vec![None; grid.len()];
            let mut warm = start.clone();
            for &g in &order {
                let Ok(fit) = fit_mmlasso(&train, grid[g], &warm, cfg) else { continue };
                let r = test.residuals(fit.intercept, &fit.coeffs);
                if r.iter().all(|v| v.is_finite()) {
                    out[g] = Some(r.as_slice().to_vec());
                    warm = FitResult {
                        scale: start.scale,
                        ..fit
                    };
                }
            }
            out
        })
        .collect();
    let residuals: Vec<Option<Vec<f64>>> = (0..grid.len())
        .flat_map(|g| per_fold.iter().map(move |pf| pf[g].clone()))
        .collect();
    let criterion = (0..grid.len())
        .map(|g| {
            let mut pooled = Vec::with_capacity(n);
            for r in &residuals[g * folds..(g + 1) * folds] {
                pooled.extend_from_slice(r.as_ref()?);
            }
            tau_scale(&pooled).ok()
        })
        .collect();
    CvResult::select(grid.to_vec(), criterion, true)
}
