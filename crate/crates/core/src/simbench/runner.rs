use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_robust, EstimatorConfig, Penalty};
use crate::simbench::baselines::{fit_adaptive_lslasso, fit_lslasso, fit_oracle};
use crate::simbench::metrics::{metrics, Metrics};
use crate::simbench::report::{summarize, ReplicationRecord, ScenarioReport};
use crate::simbench::scenario::{contaminate, generate_with, ScenarioConfig};
use crate::types::FitResult;

/// Outlier sizes swept in contaminated runs.
pub const DEFAULT_Y0_GRID: [f64; 9] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Mmlasso,
    AdaptiveMmlasso,
    Lslasso,
    AdaptiveLslasso,
    Oracle,
    OracleMm,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Mmlasso,
        Estimator::AdaptiveMmlasso,
        Estimator::Lslasso,
        Estimator::AdaptiveLslasso,
        Estimator::Oracle,
        Estimator::OracleMm,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            Estimator::Mmlasso => "mmlasso",
            Estimator::AdaptiveMmlasso => "adaptive-mmlasso",
            Estimator::Lslasso => "lslasso",
            Estimator::AdaptiveLslasso => "adaptive-lslasso",
            Estimator::Oracle => "oracle",
            Estimator::OracleMm => "oracle-mm",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Mmlasso => "MM-Lasso",
            Estimator::AdaptiveMmlasso => "adaptive MM-Lasso",
            Estimator::Lslasso => "Lasso",
            Estimator::AdaptiveLslasso => "adaptive Lasso",
            Estimator::Oracle => "Oracle",
            Estimator::OracleMm => "Oracle MM",
        }
    }

    /// Estimators reported for clean or contaminated runs.
    pub fn defaults(contaminated: bool) -> Vec<Estimator> {
        let mut v = Estimator::ALL[..5].to_vec();
        if contaminated {
            v.push(Estimator::OracleMm);
        }
        v
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .iter()
            .copied()
            .find(|e| e.key() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub scenario: ScenarioConfig,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    /// Outlier sizes; `None` for an uncontaminated run.
    pub y0_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub fit: EstimatorConfig,
}

impl MonteCarloConfig {
    pub fn new(scenario: ScenarioConfig, replications: usize, y0_grid: Option<Vec<f64>>, seed: u64) -> Self {
        let contaminated = y0_grid.is_some();
        Self {
            scenario,
            estimators: Estimator::defaults(contaminated),
            replications,
            y0_grid,
            seed,
            fit: EstimatorConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidArgument("at least one replication is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators selected".into()));
        }
        if let Some(g) = &self.y0_grid {
            if g.is_empty() || g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("y0 grid must be non-empty and non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Random stream of replication `rep`: the master seed with a stream id made
/// of the scenario id and the replication index, so results do not depend on
/// scheduling.
pub fn replication_rng(seed: u64, scenario_id: u32, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario_id as u64) << 40) | rep as u64);
    rng
}

type Outcome = std::result::Result<FitResult, String>;

fn fit_all(cfg: &MonteCarloConfig, train: &crate::Dataset, fit_seed: u64) -> Vec<(Estimator, Outcome)> {
    let want = |e: Estimator| cfg.estimators.contains(&e);
    let mut out = Vec::new();

    if want(Estimator::Mmlasso) || want(Estimator::AdaptiveMmlasso) {
        let fc = EstimatorConfig {
            seed: fit_seed,
            adaptive: want(Estimator::AdaptiveMmlasso),
            ..cfg.fit.clone()
        };
        match fit_robust(train, &fc) {
            Ok(f) => {
                out.push((Estimator::Mmlasso, Ok(f.mmlasso)));
                if let Some(a) = f.adaptive {
                    out.push((Estimator::AdaptiveMmlasso, Ok(a)));
                }
            }
            Err(e) => {
                out.push((Estimator::Mmlasso, Err(e.to_string())));
                out.push((Estimator::AdaptiveMmlasso, Err(e.to_string())));
            }
        }
    }
    let folds = cfg.fit.folds;
    if want(Estimator::AdaptiveLslasso) {
        match fit_adaptive_lslasso(train, Penalty::Cv, Penalty::Cv, folds, fit_seed) {
            Ok((p, a)) => {
                out.push((Estimator::Lslasso, Ok(p.fit)));
                out.push((Estimator::AdaptiveLslasso, Ok(a.fit)));
            }
            Err(e) => {
                out.push((Estimator::Lslasso, Err(e.to_string())));
                out.push((Estimator::AdaptiveLslasso, Err(e.to_string())));
            }
        }
    } else if want(Estimator::Lslasso) {
        out.push((
            Estimator::Lslasso,
            fit_lslasso(train, Penalty::Cv, folds, fit_seed).map(|f| f.fit).map_err(|e| e.to_string()),
        ));
    }
    let support = cfg.scenario.support();
    let oc = EstimatorConfig {
        seed: fit_seed,
        ..cfg.fit.clone()
    };
    for (est, robust) in [(Estimator::Oracle, false), (Estimator::OracleMm, true)] {
        if want(est) {
            out.push((est, fit_oracle(train, &support, robust, &oc).map_err(|e| e.to_string())));
        }
    }
    out.retain(|(e, _)| want(*e));
    out.sort_by_key(|(e, _)| *e);
    out
}

/// Runs `replications` independent train/test draws (and, for contaminated
/// runs, every outlier size on each draw) and aggregates the metrics.
/// Individual fit failures are recorded and counted, not fatal.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let y0s: Vec<Option<f64>> = match &cfg.y0_grid {
        Some(g) => g.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let tasks: Vec<(usize, usize)> = (0..cfg.replications)
        .flat_map(|r| (0..y0s.len()).map(move |k| (r, k)))
        .collect();
    let law = cfg.scenario.error_law;
    let records: Vec<Vec<ReplicationRecord>> = tasks
        .par_iter()
        .map(|&(rep, k)| -> Result<Vec<ReplicationRecord>> {
            let mut rng = replication_rng(cfg.seed, cfg.scenario.id, rep);
            let (train, test) = generate_with(&cfg.scenario, &mut rng)?;
            let fit_seed: u64 = rng.random();
            let y0 = y0s[k];
            let train = match y0 {
                Some(v) => contaminate(&train, v),
                None => train,
            };
            Ok(fit_all(cfg, &train, fit_seed)
                .into_iter()
                .map(|(estimator, outcome)| {
                    let (m, converged, error): (Option<Metrics>, Option<bool>, Option<String>) = match outcome {
                        Ok(f) => {
                            let m = metrics(&f, &test, &cfg.scenario.beta0, law);
                            (Some(m), Some(f.converged), None)
                        }
                        Err(e) => (None, None, Some(e)),
                    };
                    ReplicationRecord {
                        replication: rep,
                        y0,
                        estimator,
                        metrics: m,
                        converged,
                        error,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = records.into_iter().flatten().collect();
    Ok(summarize(cfg, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbench::scenario::ErrorLaw;

    #[test]
    fn estimator_keys_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.key().parse::<Estimator>().unwrap(), e);
        }
        assert!("lars".parse::<Estimator>().is_err());
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = replication_rng(1, 2, 3).random();
        let b: u64 = replication_rng(1, 2, 4).random();
        let c: u64 = replication_rng(1, 3, 3).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, replication_rng(1, 2, 3).random::<u64>());
    }

    #[test]
    fn single_replication_is_reproducible() {
        let sc = ScenarioConfig::standard(1, ErrorLaw::Normal).unwrap();
        let mut cfg = MonteCarloConfig::new(sc, 1, None, 7);
        cfg.estimators = vec![Estimator::Lslasso, Estimator::Oracle];
        let a = run_monte_carlo(&cfg).unwrap();
        let b = run_monte_carlo(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2);
        assert!(a.summary.iter().all(|r| r.failures == 0));
    }
}
