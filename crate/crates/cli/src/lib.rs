//! Command-line experiments on top of `levy_euler`: configuration files,
//! subcommands and report directories.

pub mod config;

use std::path::{Path, PathBuf};

use levy_euler::harness::{
    closed_form_checks, decompose_error, default_surrogate, factorization_checks,
    generator_linearity, jump_adapted_step_stats, rate_experiment, simulate_paths, version_string,
    write_report, CsvValue, DecompositionConfig, HarnessError, Method, RateConfig, ReferencePolicy,
    ReportFiles, SchemeKind, Welford,
};
use levy_euler::levy::{LevyError, LevyMeasure};
use levy_euler::models::{
    catalog, catalog_names, martingale_check, ModelError, Problem, TestFunction,
};
use levy_euler::quad::QuadConfig;
use levy_euler::rng::StreamRoot;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Rate,
    Decompose,
    Adapted,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Decompose => "decompose",
            Command::Adapted => "adapted",
            Command::Check => "check",
        }
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub outdir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 2,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }
}

/// What a command produced before it is written to disk.
#[derive(Debug, Clone)]
pub struct CommandReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<CsvValue>>>,
    pub result: Value,
    pub pass: bool,
    pub warnings: Vec<String>,
    pub plot: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    /// Run directory, if anything was written.
    pub dir: Option<PathBuf>,
    pub message: Option<String>,
    pub warnings: Vec<String>,
}

/// Loads the config, applies `opts`, runs `command` and writes the run
/// directory. A summary is written even when the command fails.
pub fn execute(command: Command, config_path: &Path, opts: &RunOptions) -> Outcome {
    match ExperimentConfig::load(config_path) {
        Ok(mut cfg) => {
            if let Some(dir) = &opts.outdir {
                cfg.outdir = dir.clone();
            }
            if let Some(seed) = opts.seed {
                cfg.seed = seed;
            }
            if let Some(n) = opts.paths {
                cfg.n_paths = n;
            }
            execute_config(command, &cfg)
        }
        Err(e) => {
            let outdir = opts
                .outdir
                .clone()
                .unwrap_or_else(|| PathBuf::from("results"));
            let tag = config_path
                .file_stem()
                .and_then(|s| s.to_str())
                .filter(|s| !s.is_empty())
                .unwrap_or("config")
                .to_string();
            let summary = json!({
                "command": command.name(),
                "version": version_string(),
                "status": Status::Error.label(),
                "exit_code": Status::Error.exit_code(),
                "error": e.to_string(),
                "config_path": config_path.display().to_string(),
            });
            let files = ReportFiles {
                header: Vec::new(),
                rows: Vec::new(),
                summary,
                plot: String::new(),
            };
            let dir = write_report(&outdir, &tag, &files).ok();
            Outcome {
                status: Status::Error,
                dir,
                message: Some(e.to_string()),
                warnings: Vec::new(),
            }
        }
    }
}

/// Runs `command` on an already loaded config and writes the run directory.
pub fn execute_config(command: Command, cfg: &ExperimentConfig) -> Outcome {
    let run = cfg.validate().and_then(|_| run_command(command, cfg));
    let (status, report, message) = match run {
        Ok(r) if r.pass => (Status::Pass, Some(r), None),
        Ok(r) => (Status::Fail, Some(r), None),
        Err(e) => (Status::Error, None, Some(e.to_string())),
    };
    let warnings = report
        .as_ref()
        .map(|r| r.warnings.clone())
        .unwrap_or_default();
    let summary = json!({
        "command": command.name(),
        "version": version_string(),
        "status": status.label(),
        "exit_code": status.exit_code(),
        "error": message,
        "tag": cfg.tag,
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).unwrap_or(Value::Null),
        "warnings": warnings,
        "result": report.as_ref().map(|r| r.result.clone()).unwrap_or(Value::Null),
    });
    let files = match report {
        Some(r) => ReportFiles {
            header: r.header,
            rows: r.rows,
            summary,
            plot: r.plot,
        },
        None => ReportFiles {
            header: Vec::new(),
            rows: Vec::new(),
            summary,
            plot: String::new(),
        },
    };
    match write_report(&cfg.outdir, &cfg.tag, &files) {
        Ok(dir) => Outcome {
            status,
            dir: Some(dir),
            message,
            warnings,
        },
        Err(e) => Outcome {
            status: Status::Error,
            dir: None,
            message: Some(match message {
                Some(m) => format!("{m}; additionally {e}"),
                None => e.to_string(),
            }),
            warnings,
        },
    }
}

/// Runs `command` without touching the file system.
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Rate => cmd_rate(cfg),
        Command::Decompose => cmd_decompose(cfg),
        Command::Adapted => cmd_adapted(cfg),
        Command::Check => cmd_check(cfg),
    }
}

fn load_problem(cfg: &ExperimentConfig) -> Result<(Problem, TestFunction), CliError> {
    let problem = catalog(&cfg.problem, &cfg.overrides)?;
    let name = cfg
        .test_function
        .clone()
        .unwrap_or_else(|| problem.default_test.clone());
    let g = problem.test_function(&name)?.clone();
    Ok((problem, g))
}

fn root(cfg: &ExperimentConfig) -> StreamRoot {
    StreamRoot::new(cfg.seed, &cfg.tag)
}

fn rule_warnings(cfg: &ExperimentConfig, problem: &Problem) -> Vec<String> {
    cfg.rule
        .warning(problem.spec.alpha, problem.spec.beta)
        .into_iter()
        .collect()
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn f(x: f64) -> Option<CsvValue> {
    Some(CsvValue::Float(x))
}

fn opt(x: Option<f64>) -> Option<CsvValue> {
    x.map(CsvValue::Float)
}

fn single_sigma(cfg: &ExperimentConfig) -> Result<Option<f64>, CliError> {
    match cfg.sigmas.as_slice() {
        [] => Ok(None),
        [s] => Ok(Some(*s)),
        _ => Err(CliError::Config(format!(
            "sigmas: {} takes at most one truncation level",
            cfg.scheme.label()
        ))),
    }
}

/// Terminal values of every path for each step size.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    cfg.require_deltas()?;
    let (problem, g) = load_problem(cfg)?;
    let sigma = single_sigma(cfg)?;
    let d_min = cfg.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let surrogate = match cfg.scheme {
        SchemeKind::Simple => default_surrogate(&problem, problem.theory_kappa(&g), d_min)?,
        _ => None,
    };
    let root = root(cfg);
    let d = problem.model.d;
    let mut names = vec!["delta", "sigma", "path", "stream", "n_steps"];
    let state: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    names.extend(state.iter().map(String::as_str));
    names.push("g");
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    let mut finite = true;
    for &delta in &cfg.deltas {
        let method = Method {
            kind: cfg.scheme,
            delta,
            sigma,
            rule: cfg.rule,
        };
        let runs = simulate_paths(&problem, &method, cfg.n_paths, &root, surrogate)?;
        let mut w = Welford::default();
        for (i, run) in runs.iter().enumerate() {
            let value = g.value(&run.terminal);
            finite &= value.is_finite();
            w.push(value);
            let mut row = vec![
                f(delta),
                opt(sigma.or(surrogate)),
                Some(CsvValue::Int(i as i64)),
                Some(CsvValue::Text(format!("{:016x}", run.seed_path))),
                Some(run.n_steps.into()),
            ];
            row.extend(run.terminal.iter().map(|x| f(*x)));
            row.push(f(value));
            rows.push(row);
        }
        levels.push(json!({
            "delta": delta,
            "method": method.describe(),
            "mean": w.mean(),
            "se": w.se(),
        }));
    }
    Ok(CommandReport {
        header: header(&names),
        rows,
        result: json!({
            "problem": problem.name,
            "test_function": g.name,
            "surrogate_sigma": surrogate,
            "levels": levels,
        }),
        pass: finite,
        warnings: rule_warnings(cfg, &problem),
        plot: "set datafile separator ','\nset key autotitle columnhead\n\
               plot 'results.csv' using 3:(column('g')) with points\n"
            .into(),
    })
}

/// Weak errors over the step list and the fitted order.
pub fn cmd_rate(cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    cfg.require_deltas()?;
    let (problem, g) = load_problem(cfg)?;
    let rate_cfg = RateConfig {
        kind: cfg.scheme,
        deltas: cfg.deltas.clone(),
        sigma: single_sigma(cfg)?,
        rule: cfg.rule,
        n_paths: cfg.n_paths,
        reference: cfg.reference,
        pairing: cfg.pairing,
        fit: cfg.fit,
    };
    let report = rate_experiment(&problem, &g, &rate_cfg, &root(cfg))?;
    let rows = report
        .points
        .iter()
        .map(|p| {
            vec![
                f(p.delta),
                f(p.abscissa),
                opt(p.sigma),
                f(p.estimate),
                f(p.estimate_se),
                f(p.reference),
                f(p.error),
                f(p.se),
                f(p.mean_steps),
                Some(p.used.into()),
            ]
        })
        .collect();
    let in_band = match (cfg.expect_kappa, report.kappa_hat) {
        (Some([lo, hi]), Some(k)) => (lo..=hi).contains(&k),
        (Some(_), None) => false,
        (None, k) => k.is_some(),
    };
    Ok(CommandReport {
        header: header(&[
            "delta",
            "abscissa",
            "sigma",
            "estimate",
            "estimate_se",
            "reference",
            "error",
            "se",
            "mean_steps",
            "used",
        ]),
        rows,
        result: json!({
            "problem": problem.name,
            "test_function": g.name,
            "theory_kappa": report.theory_kappa,
            "report": report,
            "expect_kappa": cfg.expect_kappa,
        }),
        pass: in_band,
        warnings: rule_warnings(cfg, &problem),
        plot: "set datafile separator ','\nset logscale xy\nset key autotitle columnhead\n\
               plot 'results.csv' using 2:7:8 with yerrorbars title 'error'\n"
            .into(),
    })
}

/// Error table over `(δ, σ)` and the additive surface fit.
pub fn cmd_decompose(cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    cfg.require_deltas()?;
    let (problem, g) = load_problem(cfg)?;
    let delta_ref = match cfg.reference {
        ReferencePolicy::FineGrid { delta_ref, .. } => delta_ref,
        ReferencePolicy::Oracle => {
            return Err(CliError::Config(
                "reference: decompose needs a fine-grid reference".into(),
            ))
        }
    };
    let dcfg = DecompositionConfig {
        deltas: cfg.deltas.clone(),
        sigmas: cfg.sigmas.clone(),
        rule: cfg.rule,
        n_paths: cfg.n_paths,
        delta_ref,
    };
    let report = decompose_error(&problem, &g, &dcfg, &root(cfg))?;
    let rows = report
        .cells
        .iter()
        .map(|c| {
            vec![
                f(c.delta),
                f(c.sigma),
                f(c.phi),
                f(c.estimate),
                f(c.estimate_se),
                f(c.error),
                f(c.error_se),
                opt(c.substitution_error),
                opt(c.substitution_se),
            ]
        })
        .collect();
    Ok(CommandReport {
        header: header(&[
            "delta",
            "sigma",
            "phi",
            "estimate",
            "estimate_se",
            "error",
            "error_se",
            "substitution_error",
            "substitution_se",
        ]),
        rows,
        pass: report.surface.is_some(),
        result: json!({
            "problem": problem.name,
            "test_function": g.name,
            "report": report,
        }),
        warnings: rule_warnings(cfg, &problem),
        plot: "set datafile separator ','\nset logscale xy\nset key autotitle columnhead\n\
               plot 'results.csv' using 2:6 with points title 'error vs sigma'\n"
            .into(),
    })
}

/// Step statistics of jump-adapted partitions for every `(σ, δ)`.
pub fn cmd_adapted(cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    cfg.require_deltas()?;
    if cfg.sigmas.is_empty() {
        return Err(CliError::Config(
            "sigmas: adapted needs at least one truncation level".into(),
        ));
    }
    let (problem, _) = load_problem(cfg)?;
    let root = root(cfg);
    let mut stats = Vec::new();
    for &sigma in &cfg.sigmas {
        for &delta in &cfg.deltas {
            stats.push(jump_adapted_step_stats(
                &problem.spec,
                sigma,
                delta,
                problem.horizon,
                cfg.n_paths,
                &root,
            )?);
        }
    }
    let rows = stats
        .iter()
        .map(|s| {
            vec![
                f(s.sigma),
                f(s.delta),
                f(s.jump_rate),
                f(s.mean_first_step),
                f(s.se_first_step),
                f(s.expected_first_step),
                f(s.z_score),
                f(s.sandwich_lower),
                f(s.sandwich_upper),
                f(s.mean_steps),
                f(s.mean_sum_sq),
                f(s.sum_sq_ratio),
                Some(s.pass.into()),
            ]
        })
        .collect();
    Ok(CommandReport {
        header: header(&[
            "sigma",
            "delta",
            "jump_rate",
            "mean_first_step",
            "se_first_step",
            "expected_first_step",
            "z_score",
            "sandwich_lower",
            "sandwich_upper",
            "mean_steps",
            "mean_sum_sq",
            "sum_sq_ratio",
            "pass",
        ]),
        rows,
        pass: stats.iter().all(|s| s.pass),
        result: json!({ "problem": problem.name, "stats": stats }),
        warnings: Vec::new(),
        plot: "set datafile separator ','\nset key autotitle columnhead\n\
               plot 'results.csv' using 2:4:5 with yerrorbars, '' using 2:6 with lines\n"
            .into(),
    })
}

/// Relative tolerance of closed forms against quadrature.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// Relative tolerance of `B^σ (B^σ)ᵀ = Σ(σ)`.
pub const FACTOR_TOL: f64 = 1e-10;
/// Tolerance of generator linearity. Each jump integral carries an absolute
/// error up to 1e-10·(1 + |v|) per accepted subinterval.
pub const LINEARITY_TOL: f64 = 1e-7;

/// Truncation levels `2^{-k}`, `k = 0..=10`.
pub fn dyadic_levels() -> Vec<f64> {
    (0..=10).map(|k| 0.5f64.powi(k)).collect()
}

/// Measures of the self-check: the catalog drivers plus truncated stable
/// measures of index 0.5, 1 and 1.5, each with its `φ` exponent.
pub fn check_measures() -> Result<Vec<(String, LevyMeasure, f64)>, CliError> {
    let mut out = Vec::new();
    for &(index, alpha, beta) in &[(0.5, 0.6, 1.2), (1.0, 1.2, 2.0), (1.5, 1.6, 3.0)] {
        let m = LevyMeasure::truncated_stable(1, index, 1.0, 1.0, alpha, 2.0 * alpha)?;
        out.push((format!("truncated_stable({index})"), m, beta));
    }
    for name in catalog_names() {
        let p = catalog(name, &Default::default())?;
        if let Some(m) = p.spec.measure.as_deref() {
            if !out.iter().any(|(_, other, _)| other == m) {
                out.push((name.to_string(), m.clone(), p.spec.beta));
            }
        }
    }
    Ok(out)
}

/// Closed forms, factorization, generator linearity and the martingale
/// check of the configured problem.
pub fn cmd_check(cfg: &ExperimentConfig) -> Result<CommandReport, CliError> {
    let levels = dyadic_levels();
    let mut rows = Vec::new();
    let mut pass = true;
    let mut identities = Vec::new();
    let mut factors = Vec::new();
    for (label, m, beta) in check_measures()? {
        for c in closed_form_checks(&label, &m, beta.min(3.0), &levels, CLOSED_FORM_TOL)? {
            pass &= c.pass;
            rows.push(vec![
                Some("closed_form".into()),
                Some(c.measure.as_str().into()),
                Some(c.functional.into()),
                f(c.sigma),
                f(c.closed),
                f(c.quadrature),
                f(c.rel_err),
                Some(c.pass.into()),
            ]);
            identities.push(c);
        }
        for c in factorization_checks(&label, &m, &levels, FACTOR_TOL)? {
            pass &= c.pass;
            rows.push(vec![
                Some("factorization".into()),
                Some(c.measure.as_str().into()),
                Some("b_sigma".into()),
                f(c.sigma),
                None,
                None,
                f(c.rel_err),
                Some(c.pass.into()),
            ]);
            factors.push(c);
        }
    }

    let mut linearity = Vec::new();
    let mut skipped = Vec::new();
    for name in catalog_names() {
        let p = catalog(name, &Default::default())?;
        if p.experimental {
            skipped.push(json!({ "problem": name, "check": "generator_linearity", "reason": "experimental problem" }));
            continue;
        }
        match generator_linearity(&p, 50, cfg.seed, LINEARITY_TOL) {
            Ok(c) => {
                pass &= c.pass;
                rows.push(vec![
                    Some("generator_linearity".into()),
                    Some(c.problem.as_str().into()),
                    Some("sin_cos".into()),
                    None,
                    None,
                    None,
                    f(c.max_gap),
                    Some(c.pass.into()),
                ]);
                linearity.push(c);
            }
            Err(HarnessError::Model(ModelError::Constraint(msg))) => {
                skipped.push(
                    json!({ "problem": name, "check": "generator_linearity", "reason": msg }),
                );
            }
            Err(e) => return Err(e.into()),
        }
    }

    let (problem, _) = load_problem(cfg)?;
    let martingale = if problem.spec.exact.is_some() && !problem.experimental {
        let v = problem.test_function("sin")?;
        let fine = if cfg.deltas.len() >= 2 {
            cfg.deltas.clone()
        } else {
            vec![0.5f64.powi(8), 0.5f64.powi(7)]
        };
        let mut out = Vec::new();
        for t in [0.25 * problem.horizon, problem.horizon] {
            let c = martingale_check(
                &problem.model,
                &problem.spec,
                v,
                t,
                cfg.n_paths,
                &fine,
                &root(cfg),
                &QuadConfig::default(),
            )?;
            pass &= c.pass;
            for e in &c.estimates {
                rows.push(vec![
                    Some("martingale".into()),
                    Some(problem.name.as_str().into()),
                    Some(format!("t={t}").as_str().into()),
                    f(e.delta_fine),
                    f(e.defect),
                    f(e.se),
                    f(c.bias_slope),
                    Some(c.pass.into()),
                ]);
            }
            out.push(c);
        }
        json!(out)
    } else {
        skipped.push(json!({
            "problem": problem.name,
            "check": "martingale",
            "reason": "needs a non-experimental problem with an exact driver sampler",
        }));
        Value::Null
    };

    Ok(CommandReport {
        header: header(&[
            "check",
            "subject",
            "item",
            "sigma_or_delta",
            "a",
            "b",
            "gap",
            "pass",
        ]),
        rows,
        pass,
        result: json!({
            "closed_form_tol": CLOSED_FORM_TOL,
            "factorization_tol": FACTOR_TOL,
            "linearity_tol": LINEARITY_TOL,
            "closed_form": identities,
            "factorization": factors,
            "generator_linearity": linearity,
            "martingale": martingale,
            "skipped": skipped,
        }),
        warnings: Vec::new(),
        plot: String::new(),
    })
}
