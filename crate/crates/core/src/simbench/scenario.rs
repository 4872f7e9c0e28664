use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Error distribution of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLaw {
    Normal,
    T3,
    T1,
}

impl ErrorLaw {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorLaw::Normal => "normal",
            ErrorLaw::T3 => "t3",
            ErrorLaw::T1 => "t1",
        }
    }

    /// Prediction accuracy is the residual MAD for t(1) and the RMSE otherwise.
    pub fn accuracy_name(&self) -> &'static str {
        match self {
            ErrorLaw::T1 => "MAD",
            _ => "RMSE",
        }
    }
}

impl std::str::FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ErrorLaw::Normal),
            "t3" => Ok(ErrorLaw::T3),
            "t1" => Ok(ErrorLaw::T1),
            other => Err(Error::InvalidArgument(format!(
                "unknown error law '{other}' (expected normal, t3 or t1)"
            ))),
        }
    }
}

/// A block of consecutive carriers with AR(1) correlation `rho^|i-j|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovBlock {
    pub size: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u32,
    pub error_law: ErrorLaw,
    pub n: usize,
    pub p: usize,
    pub beta0: Vec<f64>,
    /// Error standard deviation under normal errors; t errors are unscaled.
    pub sigma: f64,
    /// Independent blocks covering all `p` carriers.
    pub blocks: Vec<CovBlock>,
}

fn padded(values: &[f64], p: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.resize(p, 0.0);
    v
}

fn huang_beta(p: usize) -> Vec<f64> {
    let mut v = vec![2.5; 5];
    v.extend([1.5; 5]);
    v.extend([0.5; 5]);
    padded(&v, p)
}

impl ScenarioConfig {
    /// One of the six benchmark designs.
    pub fn standard(id: u32, error_law: ErrorLaw) -> Result<Self> {
        let b1 = [3.0, 1.5, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let (n, p, beta0, sigma, blocks) = match id {
            1 => (40, 8, b1.to_vec(), 3.0, vec![CovBlock { size: 8, rho: 0.5 }]),
            2 => (60, 8, b1.to_vec(), 1.0, vec![CovBlock { size: 8, rho: 0.5 }]),
            3 => (100, 30, huang_beta(30), 1.5, vec![CovBlock { size: 30, rho: 0.95 }]),
            4 | 5 => {
                let rho = if id == 4 { 0.5 } else { 0.95 };
                (
                    100,
                    200,
                    huang_beta(200),
                    1.5,
                    vec![CovBlock { size: 15, rho }, CovBlock { size: 185, rho }],
                )
            }
            6 => (50, 250, padded(&b1, 250), 3.0, vec![CovBlock { size: 250, rho: 0.5 }]),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "scenario id must be 1..=6, got {other}"
                )))
            }
        };
        Ok(Self {
            id,
            error_law,
            n,
            p,
            beta0,
            sigma,
            blocks,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0.len() != self.p {
            return Err(Error::Dimension("beta0 length differs from p".into()));
        }
        if self.blocks.iter().map(|b| b.size).sum::<usize>() != self.p {
            return Err(Error::Dimension("covariance blocks must cover all carriers".into()));
        }
        if self.blocks.iter().any(|b| !(b.rho.abs() < 1.0)) {
            return Err(Error::InvalidArgument("block correlation must lie in (-1, 1)".into()));
        }
        if self.n < 2 || !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument("need n >= 2 and sigma > 0".into()));
        }
        Ok(())
    }

    /// Indices of the non-zero true coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.beta0[j] != 0.0).collect()
    }

    /// Carrier covariance matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.p, self.p);
        let mut off = 0;
        for b in &self.blocks {
            for i in 0..b.size {
                for j in 0..b.size {
                    s[(off + i, off + j)] = b.rho.powi((i as i32 - j as i32).abs());
                }
            }
            off += b.size;
        }
        s
    }

    fn draw_error<R: Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self.error_law {
            ErrorLaw::Normal => self.sigma * z,
            ErrorLaw::T3 | ErrorLaw::T1 => {
                let nu: f64 = if self.error_law == ErrorLaw::T3 { 3.0 } else { 1.0 };
                let chi = ChiSquared::new(nu).unwrap().sample(rng);
                z / (chi / nu).sqrt()
            }
        }
    }

    /// Draws `n` rows of carriers and responses.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Dataset {
        let (n, p) = (self.n, self.p);
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            let mut off = 0;
            for b in &self.blocks {
                let innov = (1.0 - b.rho * b.rho).sqrt();
                let mut prev = 0.0;
                for k in 0..b.size {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = if k == 0 { z } else { b.rho * prev + innov * z };
                    x[(i, off + k)] = prev;
                }
                off += b.size;
            }
        }
        let beta = DVector::from_column_slice(&self.beta0);
        let mut y = &x * beta;
        for v in y.iter_mut() {
            *v += self.draw_error(rng);
        }
        Dataset { x, y, intercept: true }
    }
}

/// Independent training and test samples from `rng`.
pub fn generate_with<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let train = cfg.sample(rng);
    let test = cfg.sample(rng);
    Ok((train, test))
}

/// Independent training and test samples, deterministic in `seed`.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    generate_with(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Number of rows replaced by [`contaminate`]: `floor(0.1 n)`.
pub fn contamination_count(n: usize) -> usize {
    n / 10
}

/// High-leverage contamination: the first `floor(0.1 n)` rows get response
/// `5 y0` and carriers `(5, 0, ..., 0)`.
pub fn contaminate(train: &Dataset, y0: f64) -> Dataset {
    let mut out = train.clone();
    let m = contamination_count(train.n());
    for i in 0..m {
        out.y[i] = 5.0 * y0;
        for j in 0..train.p() {
            out.x[(i, j)] = if j == 0 { 5.0 } else { 0.0 };
        }
    }
    out
}
