//! End-to-end robust fit: standardize, S-Ridge initial estimate, MM-Lasso and
//! adaptive MM-Lasso with cross-validated or fixed penalties, and the map
//! back to original coordinates.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::mmlasso::{fit_mmlasso, MMLassoConfig, Reweighted};
use crate::preprocess::{standardize, Standardization};
use crate::sridge::{cv_sridge, fit_sridge, SRidgeConfig};
use crate::tuning::{cv_mmlasso, estimate_lambda_max, make_grid, task_seed};
use crate::types::{CvResult, FitResult};

/// How a penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    #[default]
    Cv,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub sridge: SRidgeConfig,
    pub mm: MMLassoConfig,
    pub folds: usize,
    pub seed: u64,
    /// Exponent of the adaptive weights `|pilot_j|^varsigma`.
    pub varsigma: f64,
    /// Standardize carriers by median/MAD before fitting.
    pub standardize: bool,
    pub gamma: Penalty,
    pub lambda: Penalty,
    pub iota: Penalty,
    /// Also compute the adaptive MM-Lasso.
    pub adaptive: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sridge: SRidgeConfig::default(),
            mm: MMLassoConfig::default(),
            folds: 5,
            seed: 0,
            varsigma: 1.0,
            standardize: true,
            gamma: Penalty::Cv,
            lambda: Penalty::Cv,
            iota: Penalty::Cv,
            adaptive: true,
        }
    }
}

/// All stages of a robust fit. Fits are in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFit {
    pub sridge: FitResult,
    pub mmlasso: FitResult,
    pub adaptive: Option<FitResult>,
    pub gamma: f64,
    pub lambda: f64,
    pub iota: Option<f64>,
    pub gamma_cv: Option<CvResult>,
    pub lambda_cv: Option<CvResult>,
    pub iota_cv: Option<CvResult>,
    pub standardization: Standardization,
}

fn choose_penalty(
    penalty: Penalty,
    data: &Dataset,
    start: &FitResult,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<(f64, Option<CvResult>)> {
    match penalty {
        Penalty::Fixed(v) => Ok((v, None)),
        Penalty::Cv => {
            let lmax = estimate_lambda_max(data, start, &cfg.mm)?;
            let grid = make_grid(lmax, data.p(), data.n())?;
            let cv = cv_mmlasso(data, &grid.values, start, cfg.folds, seed, &cfg.mm)?;
            Ok((cv.selected, Some(cv)))
        }
    }
}

/// Runs the full estimator on `data`.
pub fn fit_robust(data: &Dataset, cfg: &EstimatorConfig) -> Result<RobustFit> {
    cfg.mm.validate_against(&cfg.sridge.mscale.rho0)?;
    let (work, record) = if cfg.standardize {
        standardize(data)?
    } else {
        (data.clone(), Standardization::identity(data.p(), data.intercept))
    };
    let sridge_cfg = SRidgeConfig {
        seed: task_seed(cfg.seed, 0),
        folds: cfg.folds,
        ..cfg.sridge.clone()
    };

    let (gamma, gamma_cv) = match cfg.gamma {
        Penalty::Fixed(g) => (g, None),
        Penalty::Cv => {
            let cv = cv_sridge(&work, &sridge_cfg)?;
            (cv.selected, Some(cv))
        }
    };
    let init = fit_sridge(&work, gamma, &sridge_cfg)?;

    let (lambda, lambda_cv) = choose_penalty(cfg.lambda, &work, &init, cfg, task_seed(cfg.seed, 1))?;
    let mm = fit_mmlasso(&work, lambda, &init, &cfg.mm)?;

    let (adaptive, iota, iota_cv) = if cfg.adaptive {
        let rw = Reweighted::new(&work, &mm.coeffs, cfg.varsigma)?;
        let start = rw.to_reweighted(&mm);
        let (iota, iota_cv) = if rw.kept.is_empty() {
            (0.0, None)
        } else {
            choose_penalty(cfg.iota, &rw.data, &start, cfg, task_seed(cfg.seed, 2))?
        };
        let fit = fit_mmlasso(&rw.data, iota, &start, &cfg.mm)?;
        (Some(record.destandardize_fit(&rw.expand(&fit))?), Some(iota), iota_cv)
    } else {
        (None, None, None)
    };

    Ok(RobustFit {
        sridge: record.destandardize_fit(&init)?,
        mmlasso: record.destandardize_fit(&mm)?,
        adaptive,
        gamma,
        lambda,
        iota,
        gamma_cv,
        lambda_cv,
        iota_cv,
        standardization: record,
    })
}
