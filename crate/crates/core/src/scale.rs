//! Robust univariate location and dispersion: M-scales, the normalized MAD
//! and a tau-scale used as the cross-validation criterion.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::{RhoSpec, DEFAULT_SCALE_B};
use crate::numeric::{adaptive_simpson, brent};

/// Truncation constant of the tau-scale.
pub const TAU_C: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MScaleConfig {
    pub rho0: RhoSpec,
    /// Right-hand side of the M-scale equation; also its breakdown point.
    pub b: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MScaleConfig {
    fn default() -> Self {
        Self {
            rho0: RhoSpec::scale_default(),
            b: DEFAULT_SCALE_B,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl MScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::InvalidArgument(format!("b must lie in (0, 1), got {}", self.b)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// M-estimate of scale: the `s` solving `mean(rho(u_i / s)) = b`.
///
/// Returns exactly 0 when at least `(1 - b) n` residuals are zero.
pub fn mscale(u: &[f64], cfg: &MScaleConfig) -> Result<f64> {
    mscale_seeded(u, cfg, None)
}

/// Like [`mscale`], starting the bracket search from `seed` when given.
pub fn mscale_seeded(u: &[f64], cfg: &MScaleConfig, seed: Option<f64>) -> Result<f64> {
    cfg.validate()?;
    let n = u.len();
    if n == 0 {
        return Err(Error::InvalidArgument("mscale of an empty vector".into()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("mscale input contains non-finite values".into()));
    }
    let zeros = u.iter().filter(|&&v| v == 0.0).count();
    if zeros as f64 >= (1.0 - cfg.b) * n as f64 {
        return Ok(0.0);
    }

    let rho = cfg.rho0;
    let nf = n as f64;
    let excess = |s: f64| u.iter().map(|&v| rho.rho(v / s)).sum::<f64>() / nf - cfg.b;

    let mut start = match seed {
        Some(s) if s > 0.0 && s.is_finite() => s,
        _ => {
            let abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
            let mad = median_unchecked(&abs) * mad_consistency();
            if mad > 0.0 {
                mad
            } else {
                abs.iter().sum::<f64>() / nf
            }
        }
    };
    if !(start > 0.0) {
        start = 1.0;
    }

    // excess is non-increasing in s: positive below the root, negative above.
    let mut lo = start;
    let mut hi = start;
    let mut guard = 0;
    while excess(lo) <= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 2000 || lo == 0.0 {
            return Err(Error::Bracket("mscale lower bracket".into()));
        }
    }
    guard = 0;
    while excess(hi) >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::Bracket("mscale upper bracket".into()));
        }
    }

    let s = brent(excess, lo, hi, 0.0, 0.0, cfg.max_iter)?;
    if excess(s).abs() > cfg.tol {
        return Err(Error::NoConvergence {
            what: "mscale",
            iterations: cfg.max_iter,
        });
    }
    Ok(s)
}

fn median_unchecked(v: &[f64]) -> f64 {
    let mut w = v.to_vec();
    let n = w.len();
    let mid = n / 2;
    let (_, &mut upper, _) = w.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = w[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Sample median; the two middle order statistics are averaged for even length.
pub fn median(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("median of an empty vector".into()));
    }
    Ok(median_unchecked(v))
}

/// `1 / Phi^{-1}(3/4)`, making the MAD consistent for sigma at the normal.
pub fn mad_consistency() -> f64 {
    static K: OnceLock<f64> = OnceLock::new();
    *K.get_or_init(|| 1.0 / Normal::standard().inverse_cdf(0.75))
}

/// Normalized median absolute deviation about the median. May be zero.
pub fn norm_mad(v: &[f64]) -> Result<f64> {
    let m = median(v)?;
    let dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
    Ok(median_unchecked(&dev) * mad_consistency())
}

/// `E min(Z^2, TAU_C^2)` for standard normal `Z`.
pub fn tau_consistency() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| {
        let phi = Normal::standard();
        let body = 2.0 * adaptive_simpson(|z| z * z * phi.pdf(z), 0.0, TAU_C, 1e-14);
        body + TAU_C * TAU_C * 2.0 * phi.sf(TAU_C)
    })
}

/// Truncated-square tau-scale with normalized-MAD base scale:
/// `tau^2 = s^2 / (n kappa) * sum min((r_i / s)^2, c^2)`.
pub fn tau_scale(r: &[f64]) -> Result<f64> {
    let s = norm_mad(r)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let c2 = TAU_C * TAU_C;
    let sum: f64 = r
        .iter()
        .map(|&v| {
            let t = v / s;
            (t * t).min(c2)
        })
        .sum();
    Ok(s * (sum / (r.len() as f64 * tau_consistency())).sqrt())
}
