use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simbench::metrics::Metrics;
use crate::simbench::runner::{Estimator, MonteCarloConfig};
use crate::simbench::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub y0: Option<f64>,
    pub estimator: Estimator,
    pub metrics: Option<Metrics>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

/// Aggregate for one estimator. Clean runs average over replications;
/// contaminated runs take, per metric, the maximum over `y0` of the
/// replication-averaged curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub accuracy: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fits: usize,
    pub failures: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub y0: f64,
    pub estimator: Estimator,
    pub accuracy: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioConfig,
    pub replications: usize,
    pub seed: u64,
    pub y0_grid: Option<Vec<f64>>,
    /// `RMSE`, `MAD`, or `max RMSE` for contaminated runs.
    pub accuracy_metric: String,
    pub summary: Vec<SummaryRow>,
    pub curve: Vec<CurvePoint>,
    pub records: Vec<ReplicationRecord>,
}

impl ScenarioReport {
    pub fn row(&self, e: Estimator) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.estimator == e)
    }

    pub fn contaminated(&self) -> bool {
        self.y0_grid.is_some()
    }

    /// Mean curve of one estimator as `(y0, accuracy)` pairs.
    pub fn curve_of(&self, e: Estimator) -> Vec<(f64, Option<f64>)> {
        self.curve
            .iter()
            .filter(|c| c.estimator == e)
            .map(|c| (c.y0, c.accuracy))
            .collect()
    }

    /// Plain-text table in the layout of the benchmark tables.
    pub fn table(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Scenario {} (n,p)=({},{}) errors={}{}  M={}",
            s.id,
            s.n,
            s.p,
            s.error_law.name(),
            if self.contaminated() { " contaminated" } else { "" },
            self.replications
        );
        let prefix = if self.contaminated() { "Max. " } else { "" };
        let _ = writeln!(
            out,
            "{:<20}{:>12}{:>10}{:>10}{:>10}",
            "estimator",
            self.accuracy_metric,
            format!("{prefix}FNR"),
            format!("{prefix}FPR"),
            "failed"
        );
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"));
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{:<20}{:>12}{:>10}{:>10}{:>10}",
                r.estimator.label(),
                fmt(r.accuracy),
                fmt(r.fnr),
                fmt(r.fpr),
                r.failures
            );
        }
        out
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for x in v {
        s += x;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

fn max_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    v.flatten().fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
}

pub(crate) fn summarize(cfg: &MonteCarloConfig, records: Vec<ReplicationRecord>) -> ScenarioReport {
    let mut estimators = cfg.estimators.clone();
    estimators.sort();
    estimators.dedup();
    let y0s: Vec<Option<f64>> = match &cfg.y0_grid {
        Some(g) => g.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };

    let mut curve = Vec::new();
    let mut summary = Vec::new();
    for &e in &estimators {
        let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == e).collect();
        let mut points = Vec::new();
        for &y0 in &y0s {
            let ok: Vec<Metrics> = mine.iter().filter(|r| r.y0 == y0).filter_map(|r| r.metrics).collect();
            points.push((
                y0,
                mean(ok.iter().map(|m| m.accuracy)),
                mean(ok.iter().map(|m| m.fnr)),
                mean(ok.iter().map(|m| m.fpr)),
            ));
        }
        summary.push(SummaryRow {
            estimator: e,
            accuracy: max_opt(points.iter().map(|p| p.1)),
            fnr: max_opt(points.iter().map(|p| p.2)),
            fpr: max_opt(points.iter().map(|p| p.3)),
            fits: mine.iter().filter(|r| r.metrics.is_some()).count(),
            failures: mine.iter().filter(|r| r.metrics.is_none()).count(),
            nonconverged: mine.iter().filter(|r| r.converged == Some(false)).count(),
        });
        if cfg.y0_grid.is_some() {
            for (y0, a, f, p) in points {
                curve.push(CurvePoint {
                    y0: y0.unwrap_or(0.0),
                    estimator: e,
                    accuracy: a,
                    fnr: f,
                    fpr: p,
                });
            }
        }
    }
    let base = cfg.scenario.error_law.accuracy_name();
    ScenarioReport {
        scenario: cfg.scenario.clone(),
        replications: cfg.replications,
        seed: cfg.seed,
        y0_grid: cfg.y0_grid.clone(),
        accuracy_metric: if cfg.y0_grid.is_some() {
            format!("max {base}")
        } else {
            base.to_string()
        },
        summary,
        curve,
        records,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Writes `report.json` (full detail), `summary.csv` (one row per estimator
/// and metric) and, for contaminated runs, `curve.csv` into `dir`.
pub fn write_report(report: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| io_err(&json_path, e))?;
    fs::write(&json_path, json + "\n").map_err(|e| io_err(&json_path, e))?;
    written.push(json_path);

    let sum_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&sum_path).map_err(|e| io_err(&sum_path, e))?;
    let s = &report.scenario;
    let contaminated = report.contaminated().to_string();
    w.write_record(["scenario", "errors", "contaminated", "estimator", "metric", "value", "fits", "failures"])
        .map_err(|e| io_err(&sum_path, e))?;
    for r in &report.summary {
        for (metric, v) in [
            (report.accuracy_metric.as_str(), r.accuracy),
            ("FNR", r.fnr),
            ("FPR", r.fpr),
        ] {
            w.write_record([
                s.id.to_string().as_str(),
                s.error_law.name(),
                contaminated.as_str(),
                r.estimator.key(),
                metric,
                fmt_opt(v).as_str(),
                r.fits.to_string().as_str(),
                r.failures.to_string().as_str(),
            ])
            .map_err(|e| io_err(&sum_path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&sum_path, e))?;
    written.push(sum_path);

    if report.contaminated() {
        let curve_path = dir.join("curve.csv");
        let mut w = csv::Writer::from_path(&curve_path).map_err(|e| io_err(&curve_path, e))?;
        w.write_record(["y0", "estimator", "mean_accuracy"]).map_err(|e| io_err(&curve_path, e))?;
        for c in &report.curve {
            w.write_record([format!("{}", c.y0), c.estimator.key().to_string(), fmt_opt(c.accuracy)])
                .map_err(|e| io_err(&curve_path, e))?;
        }
        w.flush().map_err(|e| io_err(&curve_path, e))?;
        written.push(curve_path);
    }
    Ok(written)
}
