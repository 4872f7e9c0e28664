//! Asymptotic constants of the MM-Lasso oracle distribution
//! `sqrt(n)(b_I - b0_I) -> N(0, s0^2 a / bconst^2 V_I^-1)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::kernels::RhoSpec;
use crate::numeric::{adaptive_simpson, brent};

/// Symmetric error law `F0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ErrorDist {
    Normal { sigma: f64 },
    T { nu: f64 },
}

impl ErrorDist {
    fn validate(&self) -> Result<()> {
        match *self {
            ErrorDist::Normal { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            ErrorDist::T { nu } if nu > 0.0 && nu.is_finite() => Ok(()),
            _ => Err(Error::InvalidArgument(format!("invalid error distribution {self:?}"))),
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        match *self {
            ErrorDist::Normal { sigma } => Normal::new(0.0, sigma).unwrap().pdf(u),
            ErrorDist::T { nu } => StudentsT::new(0.0, 1.0, nu).unwrap().pdf(u),
        }
    }

    /// `P(|U| > t)` for `t >= 0`.
    pub fn two_sided_tail(&self, t: f64) -> f64 {
        let sf = match *self {
            ErrorDist::Normal { sigma } => Normal::new(0.0, sigma).unwrap().sf(t),
            ErrorDist::T { nu } => StudentsT::new(0.0, 1.0, nu).unwrap().sf(t),
        };
        2.0 * sf
    }

    /// Variance, or `None` when it is infinite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            ErrorDist::Normal { sigma } => Some(sigma * sigma),
            ErrorDist::T { nu } if nu > 2.0 => Some(nu / (nu - 2.0)),
            ErrorDist::T { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    /// Asymptotic residual scale: `E rho0(u / s0) = b`.
    pub s0: f64,
    /// `E psi1(u / s0)^2`.
    pub a: f64,
    /// `E psi1'(u / s0)`.
    pub bconst: f64,
    /// Efficiency relative to least squares; `None` without a finite error variance.
    pub efficiency: Option<f64>,
}

impl AsymptoticConstants {
    /// `s0^2 a / bconst^2`, the asymptotic variance factor.
    pub fn variance_factor(&self) -> f64 {
        self.s0 * self.s0 * self.a / (self.bconst * self.bconst)
    }
}

const QUAD_TOL: f64 = 1e-10;

/// `E g(U)` for `g` vanishing outside `[-h, h]` and even in `u`.
fn even_expectation<G: Fn(f64) -> f64>(dist: &ErrorDist, g: G, h: f64) -> f64 {
    2.0 * adaptive_simpson(|u| g(u) * dist.pdf(u), 0.0, h, QUAD_TOL)
}

/// `E rho(U / s)` for a bisquare `rho`.
fn mean_rho(dist: &ErrorDist, rho: &RhoSpec, s: f64) -> f64 {
    let h = rho.c * s;
    even_expectation(dist, |u| rho.rho(u / s), h) + dist.two_sided_tail(h)
}

/// Computes `s0`, `a`, `bconst` and the efficiency by one-dimensional
/// quadrature and root finding.
pub fn asymptotic_constants(
    rho0: &RhoSpec,
    rho1: &RhoSpec,
    b: f64,
    dist: ErrorDist,
) -> Result<AsymptoticConstants> {
    dist.validate()?;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidArgument(format!("b must lie in (0, 1), got {b}")));
    }
    let g = |s: f64| mean_rho(&dist, rho0, s) - b;
    // mean_rho decreases from 1 (s -> 0) to 0 (s -> inf).
    let (mut lo, mut hi) = (0.5, 2.0);
    let mut tries = 0;
    while g(lo) <= 0.0 || g(hi) >= 0.0 {
        lo /= 2.0;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Bracket("asymptotic scale equation has no sign change".into()));
        }
    }
    let s0 = brent(g, lo, hi, 1e-12, 1e-10, 200)?;
    let h = rho1.c * s0;
    let a = even_expectation(&dist, |u| rho1.psi(u / s0).powi(2), h);
    let bconst = even_expectation(&dist, |u| rho1.psi_prime(u / s0), h);
    if !(s0 > 0.0 && a > 0.0 && bconst > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "degenerate asymptotic constants s0={s0}, a={a}, b={bconst}"
        )));
    }
    let factor = s0 * s0 * a / (bconst * bconst);
    Ok(AsymptoticConstants {
        s0,
        a,
        bconst,
        efficiency: dist.variance().map(|v| v / factor),
    })
}

/// `s0^2 a / bconst^2 * V^-1` for a symmetric positive definite `V`.
pub fn oracle_covariance(constants: &AsymptoticConstants, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !v.is_square() {
        return Err(Error::Dimension("covariance of the active carriers must be square".into()));
    }
    let chol = v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("active-carrier covariance is not positive definite".into()))?;
    let inv = chol.inverse() * constants.variance_factor();
    Ok((&inv + inv.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{tune_for_efficiency, tune_for_scale_consistency};

    fn tuned() -> (RhoSpec, RhoSpec) {
        (
            RhoSpec::bisquare(tune_for_scale_consistency(0.5).unwrap()).unwrap(),
            RhoSpec::bisquare(tune_for_efficiency(0.85).unwrap()).unwrap(),
        )
    }

    #[test]
    fn consistent_scale_at_the_normal() {
        let (r0, r1) = tuned();
        let k = asymptotic_constants(&r0, &r1, 0.5, ErrorDist::Normal { sigma: 1.0 }).unwrap();
        assert!((k.s0 - 1.0).abs() < 1e-3, "{}", k.s0);
        assert!((k.efficiency.unwrap() - 0.85).abs() < 5e-3);
        let k2 = asymptotic_constants(&r0, &r1, 0.5, ErrorDist::Normal { sigma: 3.0 }).unwrap();
        assert!((k2.s0 - 3.0 * k.s0).abs() < 1e-6);
        assert!((k2.efficiency.unwrap() - k.efficiency.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn cauchy_constants_are_finite() {
        let (r0, r1) = tuned();
        let k = asymptotic_constants(&r0, &r1, 0.5, ErrorDist::T { nu: 1.0 }).unwrap();
        assert!(k.s0.is_finite() && k.a.is_finite() && k.bconst.is_finite());
        assert!(k.efficiency.is_none());
        let t3 = asymptotic_constants(&r0, &r1, 0.5, ErrorDist::T { nu: 3.0 }).unwrap();
        // Against a heavy-tailed law the robust fit beats least squares.
        assert!(t3.efficiency.unwrap() > 1.0);
    }

    #[test]
    fn covariance_examples() {
        let (r0, r1) = tuned();
        let k = asymptotic_constants(&r0, &r1, 0.5, ErrorDist::Normal { sigma: 1.0 }).unwrap();
        let one = oracle_covariance(&k, &DMatrix::identity(1, 1)).unwrap();
        assert!((one[(0, 0)] - 1.0 / 0.85).abs() < 0.01);

        let eye = oracle_covariance(&k, &DMatrix::identity(3, 3)).unwrap();
        assert!((eye.clone() - DMatrix::identity(3, 3) * eye[(0, 0)]).norm() < 1e-14);

        // Active coordinates 1, 2 and 6 of an AR(0.5) design.
        let idx = [0i32, 1, 5];
        let v = DMatrix::from_fn(3, 3, |i, j| 0.5f64.powi((idx[i] - idx[j]).abs()));
        let c = oracle_covariance(&k, &v).unwrap();
        let brute = v.clone().try_inverse().unwrap() * k.variance_factor();
        assert!((c.clone() - brute).norm() < 1e-10);
        assert!((c.clone() - c.transpose()).norm() < 1e-12);
        assert!(c.cholesky().is_some());

        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(oracle_covariance(&k, &singular).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (r0, r1) = tuned();
        assert!(asymptotic_constants(&r0, &r1, 0.5, ErrorDist::Normal { sigma: 0.0 }).is_err());
        assert!(asymptotic_constants(&r0, &r1, 1.5, ErrorDist::T { nu: 3.0 }).is_err());
    }
}
