//! Simulation benchmark: scenario generators, outlier injection, accuracy and
//! selection metrics, least-squares baselines and the Monte Carlo driver.

pub mod baselines;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;

pub use metrics::{metrics, selection_rates, Metrics};
pub use report::{write_report, ScenarioReport};
pub use runner::{run_monte_carlo, Estimator, MonteCarloConfig, DEFAULT_Y0_GRID};
pub use scenario::{contaminate, generate_scenario, ErrorLaw, ScenarioConfig};
