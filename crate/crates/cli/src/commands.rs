use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use indexmap::IndexMap;
use serde::Serialize;

use mmlasso::simbench::{
    run_monte_carlo, write_report, ErrorLaw, Estimator, MonteCarloConfig, ScenarioConfig, DEFAULT_Y0_GRID,
};
use mmlasso::{
    asymptotic_constants, cv_sridge, fit_adaptive_lslasso, fit_lslasso, fit_robust, fit_sridge, standardize,
    tune_for_efficiency, tune_for_scale_consistency, CvResult, ErrorDist, EstimatorConfig, FitResult, Penalty,
    RhoSpec, SRidgeConfig, Standardization,
};

use crate::config::FileConfig;
use crate::input::read_csv;
use crate::{Common, ConstArgs, FitArgs, SimArgs};

/// An error with the process exit status it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn fitting(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

type Outcome = Result<ExitCode, Failure>;

fn init_threads(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(usage(anyhow!("--jobs must be at least 1")));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    Ok(())
}

struct Resolved {
    seed: u64,
    output: PathBuf,
    allow_nonconverged: bool,
}

fn resolve_common(c: &Common, file: &FileConfig) -> Result<Resolved, Failure> {
    init_threads(c.jobs.or(file.jobs))?;
    Ok(Resolved {
        seed: c.seed.or(file.seed).unwrap_or(0),
        output: c.output.clone().or(file.output.clone()).unwrap_or_else(|| PathBuf::from(".")),
        allow_nonconverged: c.allow_nonconverged || file.allow_nonconverged.unwrap_or(false),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(fitting)?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(usage)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(usage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    MmLasso,
    AdaptiveMmLasso,
    SRidge,
    LsLasso,
    AdaptiveLsLasso,
}

impl Kind {
    fn parse(s: &str) -> Result<Self, Failure> {
        Ok(match s {
            "mmlasso" => Kind::MmLasso,
            "adaptive-mmlasso" => Kind::AdaptiveMmLasso,
            "sridge" => Kind::SRidge,
            "lslasso" => Kind::LsLasso,
            "adaptive-lslasso" => Kind::AdaptiveLsLasso,
            other => {
                return Err(usage(anyhow!(
                    "unknown estimator '{other}' (expected mmlasso, adaptive-mmlasso, sridge, lslasso or adaptive-lslasso)"
                )))
            }
        })
    }

    fn key(&self) -> &'static str {
        match self {
            Kind::MmLasso => "mmlasso",
            Kind::AdaptiveMmLasso => "adaptive-mmlasso",
            Kind::SRidge => "sridge",
            Kind::LsLasso => "lslasso",
            Kind::AdaptiveLsLasso => "adaptive-lslasso",
        }
    }
}

#[derive(Serialize, Default)]
struct Penalties {
    gamma: Option<f64>,
    lambda: Option<f64>,
    iota: Option<f64>,
}

#[derive(Serialize, Default)]
struct CvCurves {
    gamma: Option<CvResult>,
    lambda: Option<CvResult>,
    iota: Option<CvResult>,
}

#[derive(Serialize)]
struct FitOutput {
    estimator: &'static str,
    response: String,
    intercept: f64,
    coefficients: IndexMap<String, f64>,
    scale: f64,
    lambda: f64,
    iterations: usize,
    converged: bool,
    penalties: Penalties,
    cv: CvCurves,
}

fn penalty(v: Option<f64>, name: &str) -> Result<Penalty, Failure> {
    match v {
        None => Ok(Penalty::Cv),
        Some(x) if x >= 0.0 && x.is_finite() => Ok(Penalty::Fixed(x)),
        Some(x) => Err(usage(anyhow!("--{name} must be a finite non-negative number, got {x}"))),
    }
}

pub fn fit(args: FitArgs, cv_report: bool) -> Outcome {
    let file = FileConfig::load(args.common.config.as_deref()).map_err(usage)?;
    let common = resolve_common(&args.common, &file)?;
    let input = args
        .input
        .clone()
        .or(file.input.clone())
        .ok_or_else(|| usage(anyhow!("--input is required")))?;
    let response_col = args.response_col.clone().or(file.response_col.clone());
    let kind = Kind::parse(
        args.estimator
            .as_deref()
            .or(file.estimator.as_deref())
            .unwrap_or("adaptive-mmlasso"),
    )?;
    let intercept = !(args.no_intercept || file.no_intercept.unwrap_or(false));
    let std_on = !(args.no_standardize || file.no_standardize.unwrap_or(false));
    let folds = args.folds.or(file.folds).unwrap_or(5);
    if folds < 2 {
        return Err(usage(anyhow!("--folds must be at least 2")));
    }
    let gamma = penalty(args.gamma.or(file.gamma), "gamma")?;
    let lambda = penalty(args.lambda.or(file.lambda), "lambda")?;
    let iota = penalty(args.iota.or(file.iota), "iota")?;

    let table = read_csv(&input, response_col.as_deref(), intercept).map_err(usage)?;
    let data = &table.data;
    let cfg = EstimatorConfig {
        folds,
        seed: common.seed,
        standardize: std_on,
        gamma,
        lambda,
        iota,
        adaptive: kind == Kind::AdaptiveMmLasso,
        ..EstimatorConfig::default()
    };

    let mut pens = Penalties::default();
    let mut curves = CvCurves::default();
    let fit: FitResult = match kind {
        Kind::MmLasso | Kind::AdaptiveMmLasso => {
            let rf = fit_robust(data, &cfg).map_err(fitting)?;
            pens.gamma = Some(rf.gamma);
            pens.lambda = Some(rf.lambda);
            pens.iota = rf.iota;
            curves = CvCurves {
                gamma: rf.gamma_cv,
                lambda: rf.lambda_cv,
                iota: rf.iota_cv,
            };
            if kind == Kind::AdaptiveMmLasso {
                rf.adaptive.expect("adaptive stage requested")
            } else {
                rf.mmlasso
            }
        }
        Kind::SRidge => {
            let (work, record) = if std_on {
                standardize(data).map_err(fitting)?
            } else {
                (data.clone(), Standardization::identity(data.p(), data.intercept))
            };
            let sr = SRidgeConfig {
                seed: common.seed,
                folds,
                ..SRidgeConfig::default()
            };
            let g = match gamma {
                Penalty::Fixed(g) => g,
                Penalty::Cv => {
                    let cv = cv_sridge(&work, &sr).map_err(fitting)?;
                    let g = cv.selected;
                    curves.gamma = Some(cv);
                    g
                }
            };
            pens.gamma = Some(g);
            let f = fit_sridge(&work, g, &sr).map_err(fitting)?;
            record.destandardize_fit(&f).map_err(fitting)?
        }
        Kind::LsLasso => {
            let f = fit_lslasso(data, lambda, folds, common.seed).map_err(fitting)?;
            pens.lambda = Some(f.fit.lambda);
            curves.lambda = f.cv;
            f.fit
        }
        Kind::AdaptiveLsLasso => {
            let (p, a) = fit_adaptive_lslasso(data, lambda, iota, folds, common.seed).map_err(fitting)?;
            pens.lambda = Some(p.fit.lambda);
            pens.iota = Some(a.fit.lambda);
            curves.lambda = p.cv;
            curves.iota = a.cv;
            a.fit
        }
    };

    let out = FitOutput {
        estimator: kind.key(),
        response: table.response.clone(),
        intercept: fit.intercept,
        coefficients: table.names.iter().cloned().zip(fit.coeffs.iter().copied()).collect(),
        scale: fit.scale,
        lambda: fit.lambda,
        iterations: fit.iterations,
        converged: fit.converged,
        penalties: pens,
        cv: curves,
    };

    ensure_dir(&common.output)?;
    if cv_report {
        write_json(&common.output.join("cv.json"), &out)?;
        println!("estimator: {}", out.estimator);
        for (name, v) in [("gamma", out.penalties.gamma), ("lambda", out.penalties.lambda), ("iota", out.penalties.iota)] {
            if let Some(v) = v {
                println!("selected {name}: {v}");
            }
        }
    } else {
        write_json(&common.output.join("fit.json"), &out)?;
        let path = common.output.join("coefficients.csv");
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(usage)?;
        let io = |e: csv::Error| usage(anyhow!("{}: {e}", path.display()));
        w.write_record(["term", "estimate"]).map_err(io)?;
        if data.intercept {
            w.write_record(["(Intercept)", &format!("{}", out.intercept)]).map_err(io)?;
        }
        for (name, v) in &out.coefficients {
            w.write_record([name.as_str(), &format!("{v}")]).map_err(io)?;
        }
        w.flush().map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
        println!("{} fit of '{}': {} of {} coefficients non-zero", out.estimator, out.response, fit.nonzero(), fit.coeffs.len());
        println!("intercept {:.6}  scale {:.6}  lambda {:.6}  converged {}", out.intercept, out.scale, out.lambda, out.converged);
    }

    if !out.converged && !common.allow_nonconverged {
        eprintln!("error: the fit did not converge (use --allow-nonconverged to accept it)");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(args: SimArgs) -> Outcome {
    let file = FileConfig::load(args.common.config.as_deref()).map_err(usage)?;
    let common = resolve_common(&args.common, &file)?;
    let id = args
        .scenario
        .or(file.scenario)
        .ok_or_else(|| usage(anyhow!("--scenario is required")))?;
    let law: ErrorLaw = args
        .errors
        .as_deref()
        .or(file.errors.as_deref())
        .unwrap_or("normal")
        .parse()
        .map_err(usage)?;
    let scenario = ScenarioConfig::standard(id, law).map_err(usage)?;
    let grid = args.y0_grid.clone().or(file.y0_grid.clone());
    let contaminated = args.contaminate || file.contaminate.unwrap_or(false) || grid.is_some();
    let y0_grid = contaminated.then(|| grid.unwrap_or_else(|| DEFAULT_Y0_GRID.to_vec()));
    let m = args
        .m
        .or(file.m)
        .unwrap_or(if contaminated { 50 } else { 100 });
    let mut cfg = MonteCarloConfig::new(scenario, m, y0_grid, common.seed);
    if let Some(list) = args.estimators.clone().or(file.estimators.clone()) {
        cfg.estimators = list
            .iter()
            .map(|s| s.parse::<Estimator>())
            .collect::<Result<_, _>>()
            .map_err(usage)?;
    }

    let report = run_monte_carlo(&cfg).map_err(usage)?;
    let written = write_report(&report, &common.output).map_err(usage)?;
    print!("{}", report.table());
    for p in written {
        println!("wrote {}", p.display());
    }
    let failures: usize = report.summary.iter().map(|r| r.failures).sum();
    let nonconverged: usize = report.summary.iter().map(|r| r.nonconverged).sum();
    if failures > 0 {
        eprintln!("warning: {failures} fits failed");
    }
    if nonconverged > 0 {
        eprintln!("warning: {nonconverged} fits did not converge");
    }
    if (failures > 0 || nonconverged > 0) && !common.allow_nonconverged {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ConstantsOutput {
    distribution: ErrorDist,
    b: f64,
    efficiency_target: f64,
    c0: f64,
    c1: f64,
    s0: f64,
    a: f64,
    bconst: f64,
    efficiency: Option<f64>,
    /// `s0^2 a / bconst^2`: asymptotic variance for a unit-variance carrier.
    oracle_variance: f64,
}

pub fn constants(args: ConstArgs) -> Outcome {
    let file = FileConfig::load(args.common.config.as_deref()).map_err(usage)?;
    let seed_etc = resolve_common(&args.common, &file)?;
    let b = args.b.or(file.b).unwrap_or(0.5);
    let eff = args.efficiency.or(file.efficiency).unwrap_or(0.85);
    let law: ErrorLaw = args
        .errors
        .as_deref()
        .or(file.errors.as_deref())
        .unwrap_or("normal")
        .parse()
        .map_err(usage)?;
    let sigma = args.sigma.or(file.sigma).unwrap_or(1.0);
    let dist = match law {
        ErrorLaw::Normal => ErrorDist::Normal { sigma },
        ErrorLaw::T3 => ErrorDist::T { nu: 3.0 },
        ErrorLaw::T1 => ErrorDist::T { nu: 1.0 },
    };
    let c0 = tune_for_scale_consistency(b).map_err(usage)?;
    let c1 = tune_for_efficiency(eff).map_err(usage)?;
    if c1 < c0 {
        return Err(usage(anyhow!(
            "efficiency constant {c1:.4} is below the scale constant {c0:.4}; raise --efficiency or --b"
        )));
    }
    let rho0 = RhoSpec::bisquare(c0).map_err(usage)?;
    let rho1 = RhoSpec::bisquare(c1).map_err(usage)?;
    let k = asymptotic_constants(&rho0, &rho1, b, dist).map_err(fitting)?;
    let out = ConstantsOutput {
        distribution: dist,
        b,
        efficiency_target: eff,
        c0,
        c1,
        s0: k.s0,
        a: k.a,
        bconst: k.bconst,
        efficiency: k.efficiency,
        oracle_variance: k.variance_factor(),
    };
    let text = serde_json::to_string_pretty(&out).map_err(fitting)?;
    println!("{text}");
    if args.common.output.is_some() || file.output.is_some() {
        ensure_dir(&seed_etc.output)?;
        write_json(&seed_etc.output.join("constants.json"), &out)?;
    }
    Ok(ExitCode::SUCCESS)
}
