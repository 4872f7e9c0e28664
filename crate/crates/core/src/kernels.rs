//! Bounded rho-functions and their tuning constants.
//!
//! Only Tukey's bisquare family is implemented:
//!
//! ```text
//! rho_c(u) = 1 - (1 - (u/c)^2)^3   for |u| <= c,   1 otherwise
//! ```
//!
//! normalized so that `max rho = 1`. Tuning constants are found by solving
//! moment equations under the standard normal with Brent's method. On
//! `[-c, c]` every integrand is a polynomial in `u^2`, so the normal
//! expectations are evaluated exactly from truncated normal moments; a
//! Gauss-Hermite rule would converge slowly because of the corner at `|u| = c`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::numeric::brent;

/// Breakdown point `b` of the M-scale used throughout (maximal breakdown).
pub const DEFAULT_SCALE_B: f64 = 0.5;
/// Normal efficiency of the MM step.
pub const DEFAULT_EFFICIENCY: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoFamily {
    Bisquare,
}

/// A member of a bounded rho family: the family and its tuning constant `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSpec {
    pub family: RhoFamily,
    pub c: f64,
}

impl RhoSpec {
    pub fn bisquare(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tuning constant must be positive and finite, got {c}"
            )));
        }
        Ok(Self {
            family: RhoFamily::Bisquare,
            c,
        })
    }

    /// Bisquare tuned so that its M-scale with `b = 0.5` is consistent at the normal.
    pub fn scale_default() -> Self {
        Self {
            family: RhoFamily::Bisquare,
            c: tune_for_scale_consistency(DEFAULT_SCALE_B).expect("b = 0.5 is always bracketable"),
        }
    }

    /// Bisquare tuned for 85% normal efficiency of the MM step.
    pub fn efficiency_default() -> Self {
        Self {
            family: RhoFamily::Bisquare,
            c: tune_for_efficiency(DEFAULT_EFFICIENCY).expect("0.85 is always bracketable"),
        }
    }

    #[inline]
    pub fn rho(&self, u: f64) -> f64 {
        match self.family {
            RhoFamily::Bisquare => {
                let t = u / self.c;
                let t2 = t * t;
                if t2 >= 1.0 {
                    1.0
                } else {
                    let v = 1.0 - t2;
                    1.0 - v * v * v
                }
            }
        }
    }

    /// First derivative of `rho`. Odd, redescending to zero at `|u| = c`.
    #[inline]
    pub fn psi(&self, u: f64) -> f64 {
        match self.family {
            RhoFamily::Bisquare => {
                let t = u / self.c;
                let t2 = t * t;
                if t2 >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - t2;
                    6.0 * u / (self.c * self.c) * v * v
                }
            }
        }
    }

    /// Second derivative of `rho`; continuous, zero outside `[-c, c]`.
    #[inline]
    pub fn psi_prime(&self, u: f64) -> f64 {
        match self.family {
            RhoFamily::Bisquare => {
                let t = u / self.c;
                let t2 = t * t;
                if t2 >= 1.0 {
                    0.0
                } else {
                    6.0 / (self.c * self.c) * (1.0 - t2) * (1.0 - 5.0 * t2)
                }
            }
        }
    }

    /// IRLS weight `psi(u) / u`, with `w(0) = 6 / c^2`.
    #[inline]
    pub fn weight(&self, u: f64) -> f64 {
        match self.family {
            RhoFamily::Bisquare => {
                let t = u / self.c;
                let t2 = t * t;
                if t2 >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - t2;
                    6.0 / (self.c * self.c) * v * v
                }
            }
        }
    }

    /// `E rho(Z)` for standard normal `Z`.
    pub fn normal_mean_rho(&self) -> f64 {
        let c = self.c;
        let m = truncated_even_moments(c, 3);
        let c2 = c * c;
        3.0 * m[1] / c2 - 3.0 * m[2] / (c2 * c2) + m[3] / (c2 * c2 * c2) + 2.0 * Normal::standard().sf(c)
    }

    /// `(E psi(Z)^2, E psi'(Z))` for standard normal `Z`.
    pub fn normal_psi_moments(&self) -> (f64, f64) {
        let c2 = self.c * self.c;
        let m = truncated_even_moments(self.c, 5);
        // psi^2 = 36 z^2 / c^4 (1 - t)^4 and psi' = 6 / c^2 (1 - 6t + 5t^2), t = z^2 / c^2
        const BINOM4: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
        let mut a = 0.0;
        let mut ck = 1.0;
        for (k, coef) in BINOM4.iter().enumerate() {
            a += coef * m[k + 1] / ck;
            ck *= c2;
        }
        a *= 36.0 / (c2 * c2);
        let b = 6.0 / c2 * (m[0] - 6.0 * m[1] / c2 + 5.0 * m[2] / (c2 * c2));
        (a, b)
    }

    /// Normal efficiency `(E psi'(Z))^2 / E psi(Z)^2` of the M-step with this rho.
    pub fn normal_efficiency(&self) -> f64 {
        let (a, b) = self.normal_psi_moments();
        b * b / a
    }
}

/// `E[Z^(2k); |Z| < c]` for `k = 0..=kmax`, from
/// `M_2k = (2k - 1) M_(2k-2) - 2 c^(2k-1) phi(c)`.
fn truncated_even_moments(c: f64, kmax: usize) -> Vec<f64> {
    let phi = Normal::standard();
    let edge = 2.0 * phi.pdf(c);
    let mut m = Vec::with_capacity(kmax + 1);
    m.push(1.0 - 2.0 * phi.sf(c));
    let mut cpow = c;
    for k in 1..=kmax {
        let prev = m[k - 1];
        m.push((2 * k - 1) as f64 * prev - edge * cpow);
        cpow *= c * c;
    }
    m
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum TuningKind {
    Scale,
    Efficiency,
}

fn cache() -> &'static Mutex<HashMap<(RhoFamily, TuningKind, u64), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(RhoFamily, TuningKind, u64), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached<F>(kind: TuningKind, target: f64, compute: F) -> Result<f64>
where
    F: FnOnce() -> Result<f64>,
{
    let key = (RhoFamily::Bisquare, kind, target.to_bits());
    if let Some(&c) = cache().lock().unwrap().get(&key) {
        return Ok(c);
    }
    let c = compute()?;
    cache().lock().unwrap().insert(key, c);
    Ok(c)
}

/// Expands `[lo, hi]` geometrically until `g` changes sign over it.
fn bracket<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    for _ in 0..60 {
        let (glo, ghi) = (g(lo), g(hi));
        if glo.signum() != ghi.signum() || glo == 0.0 || ghi == 0.0 {
            return Ok((lo, hi));
        }
        lo /= 2.0;
        hi *= 2.0;
    }
    Err(Error::Bracket("tuning constant equation has no sign change".into()))
}

/// Bisquare constant `c` with `E_Phi rho_c(Z) = b`, making the M-scale with
/// breakdown `b` consistent for the standard deviation at the normal.
pub fn tune_for_scale_consistency(b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidArgument(format!("b must lie in (0, 1), got {b}")));
    }
    cached(TuningKind::Scale, b, || {
        let g = |c: f64| RhoSpec { family: RhoFamily::Bisquare, c }.normal_mean_rho() - b;
        let (lo, hi) = bracket(&g, 0.5, 4.0)?;
        brent(g, lo, hi, 1e-14, 1e-12, 200)
    })
}

/// Bisquare constant `c` whose M-estimator has normal efficiency `eff`.
pub fn tune_for_efficiency(eff: f64) -> Result<f64> {
    if !(eff > 0.0 && eff < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "efficiency must lie in (0, 1), got {eff}"
        )));
    }
    cached(TuningKind::Efficiency, eff, || {
        let g = |c: f64| RhoSpec { family: RhoFamily::Bisquare, c }.normal_efficiency() - eff;
        let (lo, hi) = bracket(&g, 2.0, 6.0)?;
        brent(g, lo, hi, 1e-14, 1e-12, 200)
    })
}
