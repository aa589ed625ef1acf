//! Monte Carlo weak-error estimation, rate fitting, error decomposition,
//! jump-adapted step statistics and report files.
//!
//! Every path reads its noise from streams keyed by `(seed, tag, path
//! index)`, so results are identical for any thread count. Per-path results
//! are collected in index order and reduced sequentially.

mod checks;
mod decompose;
mod fit;
mod report;
mod steps;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drivers::path::{NoiseLayout, NoisePath, ZView};
use crate::drivers::{DriverError, RSigmaRule, RuleCase};
use crate::levy::LevyError;
use crate::models::{ModelError, Problem, TestFunction};
use crate::rng::{Lane, StreamRoot};
use crate::schemes::{
    check_compatible, fine_cells_for, make_uniform_grid, run_on_path, wiener_dim, Grid,
    SchemeError, SchemeRun,
};

pub use checks::{
    closed_form_checks, factorization_checks, generator_linearity, FactorCheck, IdentityCheck,
    LinearityCheck,
};
pub use decompose::{
    decompose_error, substitution_scaling, DecompositionCell, DecompositionConfig,
    DecompositionReport, SubstitutionConfig, SubstitutionPoint, SubstitutionReport, SurfaceFit,
};
pub use fit::{fit_rate, FitOptions, RateFit, RatePoint, RateReport};
pub use report::{render_csv, version_string, write_report, CsvValue, ReportFiles};
pub use steps::{jump_adapted_step_stats, StepStats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(
        "non-finite test-function values on {count} path(s) of {scheme}; first indices {indices:?}"
    )]
    NonFinite {
        scheme: String,
        count: usize,
        indices: Vec<u64>,
    },
    #[error("no closed-form reference registered for test function '{test}' on {problem}")]
    NoOracle { problem: String, test: String },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Simple,
    Approximate,
    JumpAdapted,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Simple => "simple",
            SchemeKind::Approximate => "approximate",
            SchemeKind::JumpAdapted => "jump_adapted",
        }
    }
}

/// How `R^σ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    /// From the `(α, β)` case table.
    #[default]
    Auto,
    Drift,
    Gaussian,
    Zero,
}

impl RuleChoice {
    pub fn resolve(
        self,
        spec: &crate::drivers::DriverSpec,
        sigma: f64,
    ) -> Result<RSigmaRule, DriverError> {
        match self {
            RuleChoice::Auto => RSigmaRule::auto(spec, sigma),
            RuleChoice::Drift => RSigmaRule::with_case(spec, sigma, RuleCase::Drift),
            RuleChoice::Gaussian => RSigmaRule::with_case(spec, sigma, RuleCase::Gaussian),
            RuleChoice::Zero => RSigmaRule::with_case(spec, sigma, RuleCase::Zero),
        }
    }

    /// A message when a forced rule differs from the case table.
    pub fn warning(self, alpha: f64, beta: f64) -> Option<String> {
        let table = RuleCase::from_orders(alpha, beta);
        let forced = match self {
            RuleChoice::Auto => return None,
            RuleChoice::Drift => RuleCase::Drift,
            RuleChoice::Gaussian => RuleCase::Gaussian,
            RuleChoice::Zero => RuleCase::Zero,
        };
        (forced != table).then(|| {
            format!(
                "forced rule {forced:?} contradicts the case table for α = {alpha}, β = {beta}, \
                 which selects {table:?}"
            )
        })
    }
}

/// One scheme at one step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub kind: SchemeKind,
    pub delta: f64,
    /// Truncation level; required for approximate and jump-adapted schemes.
    pub sigma: Option<f64>,
    pub rule: RuleChoice,
}

impl Method {
    pub fn simple(delta: f64) -> Self {
        Self {
            kind: SchemeKind::Simple,
            delta,
            sigma: None,
            rule: RuleChoice::Auto,
        }
    }

    pub fn describe(&self) -> String {
        match self.sigma {
            Some(s) => format!(
                "{}(δ={}, σ={}, rule={:?})",
                self.kind.label(),
                self.delta,
                s,
                self.rule
            ),
            None => format!("{}(δ={})", self.kind.label(), self.delta),
        }
    }
}

/// A method bound to a problem: partition source and increment view.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub view: ZView,
    /// Truncation level actually used (the surrogate level for simple
    /// schemes without an exact sampler).
    pub sigma: Option<f64>,
    pub label: String,
}

/// Smallest expected bias a surrogate must stay well below: the
/// surrogate's `φ(σ)` is at most this fraction of it.
pub const SURROGATE_FRACTION: f64 = 1e-2;
/// Largest jump rate accepted for a surrogate driver.
pub const SURROGATE_MAX_RATE: f64 = 1e5;

/// Truncation level `σ` with `φ(σ) ≤ SURROGATE_FRACTION · bias`, found by
/// bisection in `log σ` (`φ` is non-decreasing).
pub fn surrogate_level(problem: &Problem, bias: f64) -> Result<f64, HarnessError> {
    let measure = problem
        .spec
        .measure
        .as_deref()
        .ok_or_else(|| HarnessError::Precondition("surrogate needs a Lévy measure".into()))?;
    let p = problem.spec.beta.min(3.0);
    let target = SURROGATE_FRACTION * bias;
    let phi = |s: f64| measure.small_moment(s, p);
    let mut hi = measure.support_radius().min(1.0);
    if phi(hi)? <= target {
        return Ok(hi);
    }
    let mut lo = hi;
    while phi(lo)? > target {
        lo *= 1e-3;
        if lo < 1e-200 {
            return Err(HarnessError::Precondition(format!(
                "no truncation level reaches φ(σ) ≤ {target:e}"
            )));
        }
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if phi(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = measure.tail_mass(lo)?;
    if rate > SURROGATE_MAX_RATE {
        return Err(HarnessError::Precondition(format!(
            "surrogate level σ = {lo:e} needs jump rate {rate:e} > {SURROGATE_MAX_RATE:e}"
        )));
    }
    Ok(lo)
}

/// Binds `method` to `problem`. Simple schemes without an exact sampler use
/// the approximate scheme at `surrogate` with the table rule.
pub fn setup(
    problem: &Problem,
    method: &Method,
    surrogate: Option<f64>,
) -> Result<Setup, HarnessError> {
    let spec = &problem.spec;
    if !(method.delta > 0.0) {
        return Err(HarnessError::Precondition(format!(
            "δ = {} must be positive",
            method.delta
        )));
    }
    let fixed = || -> Result<Grid, HarnessError> {
        Ok(Grid::Fixed(make_uniform_grid(
            problem.horizon,
            method.delta.min(problem.horizon),
        )?))
    };
    let need_sigma = || {
        method.sigma.filter(|s| *s > 0.0).ok_or_else(|| {
            HarnessError::Precondition(format!("{} needs a positive σ", method.kind.label()))
        })
    };
    let (grid, view, sigma) = match method.kind {
        SchemeKind::Simple => match ZView::exact(spec) {
            Ok(view) => (fixed()?, view, None),
            Err(DriverError::NoExactSampler) => {
                let s = surrogate.ok_or_else(|| {
                    HarnessError::Precondition(
                        "simple scheme without an exact sampler needs a surrogate level".into(),
                    )
                })?;
                (
                    fixed()?,
                    ZView::tilde(spec, s, RuleChoice::Auto.resolve(spec, s)?)?,
                    Some(s),
                )
            }
            Err(e) => return Err(e.into()),
        },
        SchemeKind::Approximate => {
            let s = need_sigma()?;
            (
                fixed()?,
                ZView::tilde(spec, s, method.rule.resolve(spec, s)?)?,
                Some(s),
            )
        }
        SchemeKind::JumpAdapted => {
            let s = need_sigma()?;
            let view = ZView::tilde(spec, s, method.rule.resolve(spec, s)?)?;
            (
                Grid::JumpAdapted {
                    delta: method.delta,
                },
                view,
                Some(s),
            )
        }
    };
    Ok(Setup {
        grid,
        view,
        sigma,
        label: method.describe(),
    })
}

/// Per-path output of a batch of setups sharing one noise path.
#[derive(Debug, Clone)]
struct PathOutcome {
    values: Vec<f64>,
    steps: Vec<usize>,
    sum_sq: Vec<f64>,
}

/// Largest fine grid used to align the Gaussian paths of several grids.
const FINE_CELL_CAP: usize = 1 << 16;

/// Runs every setup on the same noise for paths `0..n_paths`.
fn run_batch(
    problem: &Problem,
    g: &TestFunction,
    setups: &[&Setup],
    n_paths: usize,
    root: &StreamRoot,
) -> Result<Vec<PathOutcome>, HarnessError> {
    check_compatible(&problem.model, &problem.spec)?;
    let grids: Vec<&Grid> = setups.iter().map(|s| &s.grid).collect();
    let views: Vec<&ZView> = setups.iter().map(|s| &s.view).collect();
    let cells = fine_cells_for(&grids, problem.horizon, FINE_CELL_CAP);
    let layout = NoiseLayout::new(
        &problem.spec,
        wiener_dim(&problem.model),
        problem.horizon,
        cells,
        &views,
    )?;
    let outcomes: Vec<PathOutcome> = (0..n_paths as u64)
        .into_par_iter()
        .map(|index| -> Result<PathOutcome, HarnessError> {
            let mut noise = NoisePath::generate(&layout, root, index)?;
            let seed = root.stream_id(index, Lane::Jumps);
            let mut out = PathOutcome {
                values: Vec::with_capacity(setups.len()),
                steps: Vec::with_capacity(setups.len()),
                sum_sq: Vec::with_capacity(setups.len()),
            };
            for s in setups {
                let run = run_on_path(&problem.model, &s.grid, &s.view, &mut noise, seed)?;
                out.values.push(g.value(&run.terminal));
                out.steps.push(run.n_steps);
                out.sum_sq.push(run.step_sum_sq);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    for (k, s) in setups.iter().enumerate() {
        let bad: Vec<u64> = outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.values[k].is_finite())
            .map(|(i, _)| i as u64)
            .collect();
        if !bad.is_empty() {
            return Err(HarnessError::NonFinite {
                scheme: s.label.clone(),
                count: bad.len(),
                indices: bad.into_iter().take(20).collect(),
            });
        }
    }
    Ok(outcomes)
}

/// Running mean and variance in fixed order; exact for constant data.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
    pub fn se(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Estimate of `E g(Y_T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakEstimate {
    pub value: f64,
    pub se: f64,
    pub n_paths: usize,
    pub seed_root: u64,
    pub scheme: String,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub mean_steps: f64,
    pub mean_step_sum_sq: f64,
}

fn summarize(
    outcomes: &[PathOutcome],
    k: usize,
    setup: &Setup,
    delta: Option<f64>,
    root: &StreamRoot,
) -> WeakEstimate {
    let mut w = Welford::default();
    let mut steps = Welford::default();
    let mut sq = Welford::default();
    for o in outcomes {
        w.push(o.values[k]);
        steps.push(o.steps[k] as f64);
        sq.push(o.sum_sq[k]);
    }
    WeakEstimate {
        value: w.mean(),
        se: w.se(),
        n_paths: outcomes.len(),
        seed_root: root.seed(),
        scheme: setup.label.clone(),
        delta,
        sigma: setup.sigma,
        mean_steps: steps.mean(),
        mean_step_sum_sq: sq.mean(),
    }
}

/// Smallest number of paths accepted by the estimators.
pub const MIN_PATHS: usize = 100;

/// Mean and standard error of `g(Y_T)` over `n_paths` paths.
pub fn estimate_weak_value(
    problem: &Problem,
    method: &Method,
    g: &TestFunction,
    n_paths: usize,
    root: &StreamRoot,
    surrogate: Option<f64>,
) -> Result<WeakEstimate, HarnessError> {
    if n_paths < MIN_PATHS {
        return Err(HarnessError::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {n_paths}"
        )));
    }
    let s = setup(problem, method, surrogate)?;
    let outcomes = run_batch(problem, g, &[&s], n_paths, root)?;
    Ok(summarize(&outcomes, 0, &s, Some(method.delta), root))
}

/// Per-path scheme runs for paths `0..n_paths`, in index order.
pub fn simulate_paths(
    problem: &Problem,
    method: &Method,
    n_paths: usize,
    root: &StreamRoot,
    surrogate: Option<f64>,
) -> Result<Vec<SchemeRun>, HarnessError> {
    check_compatible(&problem.model, &problem.spec)?;
    let s = setup(problem, method, surrogate)?;
    let cells = fine_cells_for(&[&s.grid], problem.horizon, FINE_CELL_CAP);
    let layout = NoiseLayout::new(
        &problem.spec,
        wiener_dim(&problem.model),
        problem.horizon,
        cells,
        &[&s.view],
    )?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|index| {
            let mut noise = NoisePath::generate(&layout, root, index)?;
            let seed = root.stream_id(index, Lane::Jumps);
            Ok(run_on_path(
                &problem.model,
                &s.grid,
                &s.view,
                &mut noise,
                seed,
            )?)
        })
        .collect()
}

/// Where `E g(X_T)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferencePolicy {
    Oracle,
    /// Simple scheme at `delta_ref` (default `δ_min / 64`). Paired runs use
    /// the same paths as the schemes; independent runs use `n_paths`
    /// (default four times the scheme's paths).
    FineGrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_ref: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_paths: Option<usize>,
    },
}

impl Default for ReferencePolicy {
    fn default() -> Self {
        ReferencePolicy::FineGrid {
            delta_ref: None,
            n_paths: None,
        }
    }
}

/// Default reference step relative to the finest scheme step.
pub const REFERENCE_REFINEMENT: f64 = 64.0;

/// `E g(X_T)` by oracle or by a fine-grid simple scheme.
pub fn reference_value(
    problem: &Problem,
    g: &TestFunction,
    policy: &ReferencePolicy,
    n_paths: usize,
    root: &StreamRoot,
    surrogate: Option<f64>,
) -> Result<WeakEstimate, HarnessError> {
    match policy {
        ReferencePolicy::Oracle => {
            let value = problem
                .oracle(&g.name)
                .ok_or_else(|| HarnessError::NoOracle {
                    problem: problem.name.clone(),
                    test: g.name.clone(),
                })?;
            Ok(WeakEstimate {
                value,
                se: 0.0,
                n_paths: 0,
                seed_root: root.seed(),
                scheme: "oracle".into(),
                delta: None,
                sigma: None,
                mean_steps: 0.0,
                mean_step_sum_sq: 0.0,
            })
        }
        ReferencePolicy::FineGrid {
            delta_ref,
            n_paths: n_ref,
        } => {
            let delta = delta_ref.ok_or_else(|| {
                HarnessError::Precondition("fine-grid reference needs δ_ref".into())
            })?;
            estimate_weak_value(
                problem,
                &Method::simple(delta),
                g,
                n_ref.unwrap_or(n_paths),
                root,
                surrogate,
            )
        }
    }
}

/// Whether schemes and reference share noise paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Paired,
    Independent,
}

/// Settings of a rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub kind: SchemeKind,
    pub deltas: Vec<f64>,
    pub sigma: Option<f64>,
    pub rule: RuleChoice,
    pub n_paths: usize,
    pub reference: ReferencePolicy,
    pub pairing: Pairing,
    pub fit: FitOptions,
}

/// Validated, increasing list of distinct positive steps.
pub fn check_deltas(deltas: &[f64], horizon: f64) -> Result<Vec<f64>, HarnessError> {
    if deltas.is_empty() {
        return Err(HarnessError::Precondition("δ-list is empty".into()));
    }
    let mut ds = deltas.to_vec();
    if let Some(bad) = ds.iter().find(|d| !(**d > 0.0 && **d <= horizon)) {
        return Err(HarnessError::Precondition(format!(
            "δ = {bad} outside (0, T = {horizon}]"
        )));
    }
    ds.sort_by(f64::total_cmp);
    if ds.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Precondition(
            "δ-list has repeated values".into(),
        ));
    }
    Ok(ds)
}

/// Surrogate level for a problem whose smallest expected bias is
/// `min_delta^κ`, or `None` if the problem has an exact sampler.
pub fn default_surrogate(
    problem: &Problem,
    kappa: f64,
    min_delta: f64,
) -> Result<Option<f64>, HarnessError> {
    if problem.spec.exact.is_some() {
        return Ok(None);
    }
    surrogate_level(problem, min_delta.powf(kappa)).map(Some)
}

/// Error of the scheme against the reference at each step size and the
/// fitted order.
pub fn rate_experiment(
    problem: &Problem,
    g: &TestFunction,
    cfg: &RateConfig,
    root: &StreamRoot,
) -> Result<RateReport, HarnessError> {
    if cfg.n_paths < MIN_PATHS {
        return Err(HarnessError::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.n_paths
        )));
    }
    let deltas = check_deltas(&cfg.deltas, problem.horizon)?;
    let theory = problem.theory_kappa(g);
    let needs_surrogate =
        cfg.kind == SchemeKind::Simple || matches!(cfg.reference, ReferencePolicy::FineGrid { .. });
    let surrogate = if needs_surrogate {
        default_surrogate(problem, theory, deltas[0])?
    } else {
        None
    };
    let methods: Vec<Method> = deltas
        .iter()
        .map(|&delta| Method {
            kind: cfg.kind,
            delta,
            sigma: cfg.sigma,
            rule: cfg.rule,
        })
        .collect();
    let setups = methods
        .iter()
        .map(|m| setup(problem, m, surrogate))
        .collect::<Result<Vec<_>, _>>()?;
    let rate = match (cfg.kind, cfg.sigma) {
        (SchemeKind::JumpAdapted, Some(s)) => problem.spec.jump_rate(s)?,
        _ => 0.0,
    };
    let abscissa = |delta: f64| {
        if rate > 0.0 {
            delta.min(1.0 / rate)
        } else {
            delta
        }
    };

    let (reference_label, rows) = match (cfg.reference, cfg.pairing) {
        (ReferencePolicy::Oracle, _) => {
            let reference =
                reference_value(problem, g, &cfg.reference, cfg.n_paths, root, surrogate)?;
            let refs: Vec<&Setup> = setups.iter().collect();
            let outcomes = run_batch(problem, g, &refs, cfg.n_paths, root)?;
            let rows = setups
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let est = summarize(&outcomes, k, s, Some(methods[k].delta), root);
                    (
                        est.clone(),
                        reference.value,
                        est.value - reference.value,
                        est.se,
                    )
                })
                .collect::<Vec<_>>();
            ("oracle".to_string(), rows)
        }
        (
            ReferencePolicy::FineGrid {
                delta_ref,
                n_paths: n_ref,
            },
            pairing,
        ) => {
            let delta_ref = delta_ref.unwrap_or(deltas[0] / REFERENCE_REFINEMENT);
            let ref_setup = setup(problem, &Method::simple(delta_ref), surrogate)?;
            let label = format!("fine_grid(δ_ref={delta_ref})");
            match pairing {
                Pairing::Paired => {
                    let mut all: Vec<&Setup> = setups.iter().collect();
                    all.push(&ref_setup);
                    let outcomes = run_batch(problem, g, &all, cfg.n_paths, root)?;
                    let r = setups.len();
                    let reference = summarize(&outcomes, r, &ref_setup, Some(delta_ref), root);
                    let rows = setups
                        .iter()
                        .enumerate()
                        .map(|(k, s)| {
                            let est = summarize(&outcomes, k, s, Some(methods[k].delta), root);
                            let mut diff = Welford::default();
                            for o in &outcomes {
                                diff.push(o.values[k] - o.values[r]);
                            }
                            (est, reference.value, diff.mean(), diff.se())
                        })
                        .collect::<Vec<_>>();
                    (label, rows)
                }
                Pairing::Independent => {
                    let n_ref = n_ref.unwrap_or(4 * cfg.n_paths);
                    let ref_root = root.retag(&format!("{}/reference", problem.name));
                    let out = run_batch(problem, g, &[&ref_setup], n_ref, &ref_root)?;
                    let reference = summarize(&out, 0, &ref_setup, Some(delta_ref), &ref_root);
                    let mut rows = Vec::new();
                    for (k, s) in setups.iter().enumerate() {
                        let sub = root.retag(&format!("{}/level{k}", problem.name));
                        let out = run_batch(problem, g, &[s], cfg.n_paths, &sub)?;
                        let est = summarize(&out, 0, s, Some(methods[k].delta), &sub);
                        let se = est.se.hypot(reference.se);
                        let err = est.value - reference.value;
                        rows.push((est, reference.value, err, se));
                    }
                    (label, rows)
                }
            }
        }
    };

    let points: Vec<RatePoint> = rows
        .into_iter()
        .map(|(est, reference, err, se)| RatePoint {
            delta: est.delta.expect("scheme estimates carry δ"),
            abscissa: abscissa(est.delta.expect("scheme estimates carry δ")),
            sigma: est.sigma,
            estimate: est.value,
            estimate_se: est.se,
            reference,
            error: err.abs(),
            se,
            mean_steps: est.mean_steps,
            used: false,
        })
        .collect();
    Ok(fit::finish_report(
        points,
        &cfg.fit,
        theory,
        reference_label,
        surrogate,
    ))
}
