//! Robust sparse linear regression.
//!
//! MM-Lasso and adaptive MM-Lasso estimators started from an S-Ridge fit,
//! with robust cross-validation, asymptotic constants for the oracle
//! distribution, and a Monte Carlo benchmark harness.

pub mod asymptotics;
pub mod data;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod mmlasso;
pub mod numeric;
pub mod preprocess;
pub mod pwls;
pub mod scale;
pub mod simbench;
pub mod sridge;
pub mod tuning;
pub mod types;

pub use asymptotics::{asymptotic_constants, oracle_covariance, AsymptoticConstants, ErrorDist};
pub use data::Dataset;
pub use error::{Error, Result};
pub use estimator::{fit_robust, EstimatorConfig, Penalty, RobustFit};
pub use kernels::{tune_for_efficiency, tune_for_scale_consistency, RhoFamily, RhoSpec};
pub use mmlasso::{
    breakdown_probe, breakdown_probe_adaptive, fit_adaptive_mmlasso, fit_mmlasso, mm_objective,
    BreakdownReport, MMLassoConfig,
};
pub use preprocess::{standardize, Standardization};
pub use scale::{mscale, norm_mad, tau_scale, MScaleConfig};
pub use simbench::baselines::{fit_adaptive_lslasso, fit_lslasso, fit_oracle, LsLassoFit};
pub use sridge::{cv_sridge, fit_sridge, SRidgeConfig};
pub use tuning::{cv_mmlasso, estimate_lambda_max, make_grid, winsorized_correlation, PenaltyGrid};
pub use types::{CvResult, FitResult};
