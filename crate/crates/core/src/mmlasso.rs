//! MM-Lasso and adaptive MM-Lasso.
//!
//! With the residual scale `s_n` frozen from the initial S-Ridge fit, the
//! MM-Lasso minimizes
//!
//! ```text
//! sum_i rho1(r_i(b) / s_n) + lambda |b|_1      (intercept unpenalized)
//! ```
//!
//! Because `rho1(sqrt(v))` is concave in `v`, the weighted least-squares
//! surrogate with weights `w1(r_i / s_n)` majorizes the loss, and each IRLS
//! step is a weighted Lasso with penalty `lambda * s_n^2`. The objective trace
//! is therefore non-increasing.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::RhoSpec;
use crate::pwls::{weighted_lasso, LassoOptions};
use crate::sridge::{fit_sridge, SRidgeConfig};
use crate::types::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MMLassoConfig {
    pub rho1: RhoSpec,
    /// Relative change in the coefficient vector that declares convergence.
    pub delta: f64,
    pub max_iter: usize,
    #[serde(skip, default)]
    pub lasso: LassoOptions,
}

impl Default for MMLassoConfig {
    fn default() -> Self {
        Self {
            rho1: RhoSpec::efficiency_default(),
            delta: 1e-4,
            max_iter: 500,
            lasso: LassoOptions::default(),
        }
    }
}

impl MMLassoConfig {
    /// Checks `delta > 0` and that `rho1 <= rho0`, i.e. `c1 >= c0`.
    pub fn validate_against(&self, rho0: &RhoSpec) -> Result<()> {
        if !(self.delta > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("delta and max_iter must be positive".into()));
        }
        if self.rho1.c < rho0.c {
            return Err(Error::InvalidArgument(format!(
                "efficiency constant c1 = {} is below scale constant c0 = {}",
                self.rho1.c, rho0.c
            )));
        }
        Ok(())
    }
}

/// `sum_i rho1(r_i / s) + lambda * sum_j |b_j|^q`.
pub fn mm_objective(
    data: &Dataset,
    intercept: f64,
    slopes: &[f64],
    scale: f64,
    lambda: f64,
    q: f64,
    rho1: &RhoSpec,
) -> f64 {
    let r = data.residuals(intercept, slopes);
    let loss: f64 = r.iter().map(|&v| rho1.rho(v / scale)).sum();
    let pen: f64 = if lambda == 0.0 {
        0.0
    } else if q == 1.0 {
        slopes.iter().map(|b| b.abs()).sum()
    } else {
        slopes.iter().map(|b| b.abs().powf(q)).sum()
    };
    loss + lambda * pen
}

fn irls(
    data: &Dataset,
    lambda: f64,
    scale: f64,
    mut a: f64,
    mut b: Vec<f64>,
    cfg: &MMLassoConfig,
) -> Result<FitResult> {
    let rho = cfg.rho1;
    let penalty = lambda * scale * scale;
    let mut obj = mm_objective(data, a, &b, scale, lambda, 1.0, &rho);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let r = data.residuals(a, &b);
        let w: Vec<f64> = r.iter().map(|&v| rho.weight(v / scale)).collect();
        if w.iter().all(|&v| v == 0.0) {
            break;
        }
        let step = match weighted_lasso(data, &w, penalty, Some(&b), &cfg.lasso) {
            Ok(s) => s,
            // Degenerate weights, or a subproblem too ill-conditioned for the
            // inner solver: keep the current iterate, unconverged.
            Err(Error::DegenerateWeights(_) | Error::NoConvergence { .. }) => break,
            Err(e) => return Err(e),
        };
        let new_obj = mm_objective(data, step.intercept, &step.slopes, scale, lambda, 1.0, &rho);

        let mut diff2 = (step.intercept - a).powi(2);
        let mut norm2 = a * a;
        for (x1, x0) in step.slopes.iter().zip(&b) {
            diff2 += (x1 - x0).powi(2);
            norm2 += x0 * x0;
        }
        let rel = if norm2 > 0.0 { (diff2 / norm2).sqrt() } else { diff2.sqrt() };

        if new_obj > obj + 1e-8 * obj.abs().max(1.0) {
            // Majorization cannot increase the objective; an increase means the
            // inner solver's tolerance is exhausted.
            converged = rel <= 10.0 * cfg.delta;
            break;
        }
        a = step.intercept;
        b = step.slopes;
        obj = new_obj;
        trace.push(obj);
        if rel <= cfg.delta {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        intercept: a,
        coeffs: b,
        scale,
        lambda,
        iterations,
        objective_trace: trace,
        converged,
    })
}

/// MM-Lasso by IRLS from `start`, whose `scale` is the frozen `s_n`.
///
/// If the result ends above the objective of the zero-slope point with the
/// start's intercept (at most `n`), the IRLS is rerun from that point and the
/// better fit is returned, so `lambda |b|_1 <= n` always holds.
pub fn fit_mmlasso(data: &Dataset, lambda: f64, start: &FitResult, cfg: &MMLassoConfig) -> Result<FitResult> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(start.scale >= 0.0 && start.scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial residual scale must be finite and >= 0, got {}",
            start.scale
        )));
    }
    if start.coeffs.len() != data.p() {
        return Err(Error::Dimension(format!(
            "start has {} slopes, data has {} columns",
            start.coeffs.len(),
            data.p()
        )));
    }
    if start.scale == 0.0 {
        // Exact fit: the start already interpolates at least half the sample.
        return Ok(FitResult {
            lambda,
            iterations: 0,
            objective_trace: vec![lambda * start.l1_norm()],
            converged: true,
            ..start.clone()
        });
    }
    let a0 = if data.intercept { start.intercept } else { 0.0 };
    let fit = irls(data, lambda, start.scale, a0, start.coeffs.clone(), cfg)?;
    if start.coeffs.iter().all(|&b| b == 0.0) {
        return Ok(fit);
    }
    let zero = vec![0.0; data.p()];
    let at_zero = mm_objective(data, a0, &zero, start.scale, lambda, 1.0, &cfg.rho1);
    if fit.objective() <= at_zero {
        return Ok(fit);
    }
    let alt = irls(data, lambda, start.scale, a0, zero, cfg)?;
    Ok(if alt.objective() < fit.objective() { alt } else { fit })
}

/// Carriers rescaled by a pilot fit: column `j` becomes `x_j |pilot_j|^varsigma`,
/// and columns with a zero pilot coefficient are removed.
#[derive(Debug, Clone)]
pub struct Reweighted {
    pub data: Dataset,
    pub kept: Vec<usize>,
    pub factors: Vec<f64>,
    p: usize,
}

impl Reweighted {
    pub fn new(data: &Dataset, pilot: &[f64], varsigma: f64) -> Result<Self> {
        if pilot.len() != data.p() {
            return Err(Error::Dimension("pilot length differs from column count".into()));
        }
        if !(varsigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("varsigma must be >= 0, got {varsigma}")));
        }
        let kept: Vec<usize> = (0..data.p()).filter(|&j| pilot[j] != 0.0).collect();
        let factors: Vec<f64> = kept.iter().map(|&j| pilot[j].abs().powf(varsigma)).collect();
        let mut x = data.x.select_columns(&kept);
        for (k, f) in factors.iter().enumerate() {
            x.column_mut(k).scale_mut(*f);
        }
        Ok(Self {
            data: Dataset {
                x,
                y: data.y.clone(),
                intercept: data.intercept,
            },
            kept,
            factors,
            p: data.p(),
        })
    }

    /// Expresses a fit in original columns in the rescaled coordinates.
    pub fn to_reweighted(&self, fit: &FitResult) -> FitResult {
        let coeffs = self
            .kept
            .iter()
            .zip(&self.factors)
            .map(|(&j, f)| fit.coeffs[j] / f)
            .collect();
        FitResult {
            coeffs,
            ..fit.clone()
        }
    }

    /// Maps a fit on the rescaled carriers back: `b_j = b~_j |pilot_j|^varsigma`,
    /// zero for removed columns.
    pub fn expand(&self, fit: &FitResult) -> FitResult {
        let mut coeffs = vec![0.0; self.p];
        for ((&j, f), b) in self.kept.iter().zip(&self.factors).zip(&fit.coeffs) {
            coeffs[j] = b * f;
        }
        FitResult {
            coeffs,
            ..fit.clone()
        }
    }
}

/// Adaptive MM-Lasso with penalty `iota sum_j |b_j| / |pilot_j|^varsigma`,
/// computed as an MM-Lasso on reweighted carriers.
///
/// `start` supplies the IRLS starting point (in original columns) and the
/// frozen scale; the pipeline passes the pilot fit itself.
pub fn fit_adaptive_mmlasso(
    data: &Dataset,
    iota: f64,
    pilot: &[f64],
    start: &FitResult,
    varsigma: f64,
    cfg: &MMLassoConfig,
) -> Result<FitResult> {
    let rw = Reweighted::new(data, pilot, varsigma)?;
    let fit = fit_mmlasso(&rw.data, iota, &rw.to_reweighted(start), cfg)?;
    Ok(rw.expand(&fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub n: usize,
    pub contaminated: usize,
    pub magnitude: f64,
    pub penalty: f64,
    /// `|b|_1` for the MM-Lasso, or `sum_j |b_j| / |pilot_j|^varsigma` for the adaptive variant.
    pub penalized_norm: f64,
    /// `n / penalty`, implied by `penalty * norm <= objective(0) <= n`.
    pub bound: f64,
    pub within_bound: bool,
    pub fit: FitResult,
}

/// Replaces the first `m` rows with random carriers and responses of size
/// `magnitude`.
pub fn contaminate_rows(data: &Dataset, m: usize, magnitude: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    let p = data.p();
    for i in 0..m.min(data.n()) {
        for j in 0..p {
            out.x[(i, j)] = magnitude * rng.sample::<f64, _>(StandardNormal);
        }
        out.y[i] = magnitude * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Refits with fixed penalties after replacing `m` rows by outliers and
/// checks the norm bound that follows from `rho1 <= 1`.
#[allow(clippy::too_many_arguments)]
pub fn breakdown_probe(
    data: &Dataset,
    lambda: f64,
    gamma: f64,
    m: usize,
    magnitude: f64,
    seed: u64,
    sridge: &SRidgeConfig,
    cfg: &MMLassoConfig,
) -> Result<BreakdownReport> {
    let n = data.n();
    if m >= n {
        return Err(Error::InvalidArgument(format!("at most n - 1 = {} rows may be replaced", n - 1)));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("the breakdown bound needs lambda > 0".into()));
    }
    let bad = contaminate_rows(data, m, magnitude, seed);
    let init = fit_sridge(&bad, gamma, sridge)?;
    let fit = fit_mmlasso(&bad, lambda, &init, cfg)?;
    let norm = fit.l1_norm();
    let bound = n as f64 / lambda;
    Ok(BreakdownReport {
        n,
        contaminated: m,
        magnitude,
        penalty: lambda,
        penalized_norm: norm,
        bound,
        within_bound: norm.is_finite() && norm <= bound * (1.0 + 1e-9),
        fit,
    })
}

/// Adaptive counterpart of [`breakdown_probe`] with a fixed, bounded pilot.
#[allow(clippy::too_many_arguments)]
pub fn breakdown_probe_adaptive(
    data: &Dataset,
    iota: f64,
    pilot: &[f64],
    varsigma: f64,
    gamma: f64,
    m: usize,
    magnitude: f64,
    seed: u64,
    sridge: &SRidgeConfig,
    cfg: &MMLassoConfig,
) -> Result<BreakdownReport> {
    let n = data.n();
    if m >= n {
        return Err(Error::InvalidArgument(format!("at most n - 1 = {} rows may be replaced", n - 1)));
    }
    if !(iota > 0.0) {
        return Err(Error::InvalidArgument("the breakdown bound needs iota > 0".into()));
    }
    let bad = contaminate_rows(data, m, magnitude, seed);
    let init = fit_sridge(&bad, gamma, sridge)?;
    let start = FitResult {
        coeffs: pilot.to_vec(),
        ..init
    };
    let fit = fit_adaptive_mmlasso(&bad, iota, pilot, &start, varsigma, cfg)?;
    let norm: f64 = fit
        .coeffs
        .iter()
        .zip(pilot)
        .filter(|(_, p)| **p != 0.0)
        .map(|(b, p)| b.abs() / p.abs().powf(varsigma))
        .sum();
    let bound = n as f64 / iota;
    Ok(BreakdownReport {
        n,
        contaminated: m,
        magnitude,
        penalty: iota,
        penalized_norm: norm,
        bound,
        within_bound: norm.is_finite() && norm <= bound * (1.0 + 1e-9),
        fit,
    })
}

/// Gradient of the smooth part at `b` plus the weighted-lasso residual check
/// used to certify a fixed point: returns the largest violation of the
/// stationarity conditions of the weighted Lasso with weights recomputed at
/// the fit, on the scale of `lambda s^2`.
pub fn fixed_point_violation(data: &Dataset, fit: &FitResult, rho1: &RhoSpec) -> f64 {
    let s = fit.scale;
    let r = data.residuals(fit.intercept, &fit.coeffs);
    let w = DVector::from_iterator(r.len(), r.iter().map(|&v| rho1.weight(v / s)));
    let wr = r.component_mul(&w);
    let penalty = fit.lambda * s * s;
    let g: DVector<f64> = data.x.tr_mul(&wr);
    let mut worst: f64 = if data.intercept { wr.sum().abs() } else { 0.0 };
    for (j, &b) in fit.coeffs.iter().enumerate() {
        let v = if b != 0.0 {
            (g[j] - penalty * b.signum()).abs()
        } else {
            (g[j].abs() - penalty).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::MScaleConfig;
    use nalgebra::DMatrix;

    fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
        let mut xw = x.clone();
        for mut col in xw.column_iter_mut() {
            for (v, wi) in col.iter_mut().zip(w) {
                *v *= wi.sqrt();
            }
        }
        xw.tr_mul(&xw)
    }

    fn linear_data(seed: u64, n: usize, beta: &[f64], sigma: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_column_slice(beta) + e;
        Dataset::new(x, y, true).unwrap()
    }

    fn init(data: &Dataset) -> FitResult {
        fit_sridge(data, 1.0, &SRidgeConfig::default()).unwrap()
    }

    #[test]
    fn objective_examples() {
        let data = linear_data(1, 10, &[1.0, -1.0], 1.0);
        let rho = RhoSpec::efficiency_default();
        let b = [0.7, -1.3];
        let base = mm_objective(&data, 0.1, &b, 1.0, 0.0, 1.0, &rho);
        let r = data.residuals(0.1, &b);
        let direct: f64 = r.iter().map(|&v| rho.rho(v)).sum();
        assert!((base - direct).abs() < 1e-12);

        let mut far = data.clone();
        far.y.fill(1e3);
        let v = mm_objective(&far, 0.0, &[0.0, 0.0], 1.0, 2.0, 1.0, &rho);
        assert_eq!(v, 10.0);

        let unit = [1.0, 0.0];
        let o1 = mm_objective(&data, 0.0, &unit, 1.0, 3.0, 1.0, &rho);
        let o2 = mm_objective(&data, 0.0, &unit, 1.0, 3.0, 2.0, &rho);
        assert!((o1 - o2).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_start_is_returned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y = &x * DVector::from_column_slice(&[1.5, -0.5]);
        y.add_scalar_mut(2.0);
        y[0] = 40.0;
        let data = Dataset::new(x, y, true).unwrap();
        let start = fit_sridge(&data, 0.0, &SRidgeConfig::default()).unwrap();
        assert!(start.scale < 1e-12);
        let start = FitResult { scale: 0.0, ..start };
        let fit = fit_mmlasso(&data, 0.5, &start, &MMLassoConfig::default()).unwrap();
        assert!(fit.converged && fit.iterations == 0);
        assert_eq!(fit.coeffs, start.coeffs);
        assert!((fit.coeffs[0] - 1.5).abs() < 1e-8 && (fit.intercept - 2.0).abs() < 1e-8);
    }

    #[test]
    fn huge_lambda_zeroes_slopes() {
        let data = linear_data(2, 50, &[2.0, 1.0, 0.0], 1.0);
        let start = init(&data);
        let cfg = MMLassoConfig { delta: 1e-10, ..MMLassoConfig::default() };
        let fit = fit_mmlasso(&data, 1e6, &start, &cfg).unwrap();
        assert!(fit.coeffs.iter().all(|&b| b == 0.0));
        // the intercept is then an M-location of y
        let rho = cfg.rho1;
        let r = data.residuals(fit.intercept, &fit.coeffs);
        let bal: f64 = r.iter().map(|&v| rho.psi(v / fit.scale)).sum();
        assert!(bal.abs() < 1e-6, "{bal}");
    }

    #[test]
    fn trace_non_increasing_and_fixed_point() {
        let data = linear_data(3, 80, &[3.0, 1.5, 0.0, 0.0, 2.0], 1.0);
        let start = init(&data);
        let cfg = MMLassoConfig::default();
        let fit = fit_mmlasso(&data, 5.0, &start, &cfg).unwrap();
        assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
        }
        let viol = fixed_point_violation(&data, &fit, &cfg.rho1);
        let pen = fit.lambda * fit.scale * fit.scale;
        assert!(viol <= 1e-2 * (1.0 + pen), "{viol}");
    }

    #[test]
    fn zero_lambda_is_unpenalized_mm() {
        let data = linear_data(4, 500, &[1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 2.0, 0.0], 1.0);
        let start = init(&data);
        let cfg = MMLassoConfig { delta: 1e-10, ..MMLassoConfig::default() };
        let fit = fit_mmlasso(&data, 0.0, &start, &cfg).unwrap();
        // Unpenalized MM IRLS from the same start with dense weighted LS steps.
        let rho = cfg.rho1;
        let (mut a, mut b) = (start.intercept, start.coeffs.clone());
        let n = data.n();
        let mut xa = DMatrix::from_element(n, 9, 1.0);
        xa.view_mut((0, 1), (n, 8)).copy_from(&data.x);
        for _ in 0..500 {
            let r = data.residuals(a, &b);
            let w: Vec<f64> = r.iter().map(|&v| rho.weight(v / start.scale)).collect();
            let g = weighted_gram(&xa, &w);
            let rhs = xa.tr_mul(&DVector::from_iterator(n, data.y.iter().zip(&w).map(|(y, w)| y * w)));
            let th = g.cholesky().unwrap().solve(&rhs);
            a = th[0];
            b = th.as_slice()[1..].to_vec();
        }
        assert!((fit.intercept - a).abs() < 1e-6);
        for j in 0..8 {
            assert!((fit.coeffs[j] - b[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn adaptive_with_zero_exponent_matches_plain() {
        let data = linear_data(5, 60, &[2.0, 0.0, 1.0, 0.0], 1.0);
        let start = init(&data);
        let cfg = MMLassoConfig::default();
        let pilot = [1.5, 0.0, 0.8, -0.2];
        let a = fit_adaptive_mmlasso(&data, 2.0, &pilot, &start, 0.0, &cfg).unwrap();
        let kept = [0usize, 2, 3];
        let sub = data.columns(&kept);
        let sub_start = FitResult {
            coeffs: kept.iter().map(|&j| start.coeffs[j]).collect(),
            ..start.clone()
        };
        let b = fit_mmlasso(&sub, 2.0, &sub_start, &cfg).unwrap();
        assert_eq!(a.coeffs[1], 0.0);
        for (k, &j) in kept.iter().enumerate() {
            assert!((a.coeffs[j] - b.coeffs[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_zero_pilot_gives_intercept_only() {
        let data = linear_data(6, 40, &[2.0, 1.0], 1.0);
        let start = init(&data);
        let fit = fit_adaptive_mmlasso(&data, 1.0, &[0.0, 0.0], &start, 1.0, &MMLassoConfig::default()).unwrap();
        assert_eq!(fit.coeffs, vec![0.0, 0.0]);
        assert!(fit.intercept.is_finite());
    }

    #[test]
    fn breakdown_bound_holds_under_total_contamination() {
        let data = linear_data(7, 20, &[1.0, 2.0], 1.0);
        let cfg = MMLassoConfig::default();
        let sr = SRidgeConfig { n_starts: 10, ..SRidgeConfig::default() };
        let rep = breakdown_probe(&data, 1.0, 1.0, 19, 1e6, 1, &sr, &cfg).unwrap();
        assert!(rep.within_bound, "{} > {}", rep.penalized_norm, rep.bound);

        let clean = breakdown_probe(&data, 1.0, 1.0, 0, 1e6, 1, &sr, &cfg).unwrap();
        let direct = fit_mmlasso(&data, 1.0, &fit_sridge(&data, 1.0, &sr).unwrap(), &cfg).unwrap();
        assert_eq!(clean.fit.coeffs, direct.coeffs);
    }

    #[test]
    fn invalid_inputs() {
        let data = linear_data(8, 10, &[1.0], 1.0);
        let mut start = init(&data);
        let cfg = MMLassoConfig::default();
        assert!(fit_mmlasso(&data, -1.0, &start, &cfg).is_err());
        start.scale = f64::NAN;
        assert!(fit_mmlasso(&data, 1.0, &start, &cfg).is_err());
        let bad = MMLassoConfig { rho1: RhoSpec::bisquare(1.0).unwrap(), ..cfg };
        assert!(bad.validate_against(&MScaleConfig::default().rho0).is_err());
    }
}
