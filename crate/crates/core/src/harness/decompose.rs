//! Error over a `(δ, σ)` grid split into discretization and substitution parts.

use serde::{Deserialize, Serialize};

use super::fit::{fit_rate, FitOptions, RateFit};
use super::{
    check_deltas, run_batch, setup, summarize, surrogate_level, HarnessError, Method, RuleChoice,
    SchemeKind, Setup, Welford, MIN_PATHS, REFERENCE_REFINEMENT,
};
use crate::models::{Problem, TestFunction};
use crate::rng::StreamRoot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub rule: RuleChoice,
    pub n_paths: usize,
    /// Reference step, default `δ_min / 64`.
    pub delta_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionCell {
    pub delta: f64,
    pub sigma: f64,
    pub phi: f64,
    pub estimate: f64,
    pub estimate_se: f64,
    /// Against `E g(X_T)`.
    pub error: f64,
    pub error_se: f64,
    /// Against the same `δ` with the surrogate level; finest `δ` only.
    pub substitution_error: Option<f64>,
    pub substitution_se: Option<f64>,
}

/// `error ≈ c_time δ^kappa + c_subst φ(σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceFit {
    pub kappa: f64,
    pub c_time: f64,
    pub c_subst: f64,
    /// `sqrt(Σ ((fit − error)/se)² / cells)`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub cells: Vec<DecompositionCell>,
    pub surface: Option<SurfaceFit>,
    pub surface_error: Option<String>,
    /// Slope of log substitution error against log σ at the finest δ.
    pub sigma_slope: Option<RateFit>,
    /// Same against log φ(σ).
    pub phi_slope: Option<RateFit>,
    pub slope_error: Option<String>,
    pub reference: String,
    pub surrogate_sigma: Option<f64>,
    pub phi_exponent: f64,
}

fn distinct(xs: &[f64], what: &str) -> Result<Vec<f64>, HarnessError> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() < 3 {
        return Err(HarnessError::Precondition(format!(
            "decomposition needs at least 3 distinct {what} values, got {}",
            v.len()
        )));
    }
    Ok(v)
}

/// Runs the approximate scheme on every `(δ, σ)` pair with one shared
/// noise path per sample (common big jumps across σ), against a fine-grid
/// reference, and fits the additive error surface.
pub fn decompose_error(
    problem: &Problem,
    g: &TestFunction,
    cfg: &DecompositionConfig,
    root: &StreamRoot,
) -> Result<DecompositionReport, HarnessError> {
    let deltas = distinct(&cfg.deltas, "δ")?;
    let deltas = check_deltas(&deltas, problem.horizon)?;
    let sigmas = distinct(&cfg.sigmas, "σ")?;
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(HarnessError::Precondition(
            "σ values must be positive".into(),
        ));
    }
    if cfg.n_paths < MIN_PATHS {
        return Err(HarnessError::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.n_paths
        )));
    }
    let measure =
        problem.spec.measure.as_deref().ok_or_else(|| {
            HarnessError::Precondition("decomposition needs a Lévy measure".into())
        })?;
    let p = problem.spec.beta.min(3.0);
    let kappa = problem.theory_kappa(g);
    let d_min = deltas[0];
    let surrogate = if problem.spec.exact.is_some() {
        None
    } else {
        Some(surrogate_level(problem, d_min.powf(kappa))?.min(sigmas[0]))
    };
    let delta_ref = cfg.delta_ref.unwrap_or(d_min / REFERENCE_REFINEMENT);

    let mut setups: Vec<Setup> = Vec::new();
    let mut keys = Vec::new();
    for &delta in &deltas {
        for &sigma in &sigmas {
            let m = Method {
                kind: SchemeKind::Approximate,
                delta,
                sigma: Some(sigma),
                rule: cfg.rule,
            };
            setups.push(setup(problem, &m, surrogate)?);
            keys.push((delta, sigma));
        }
    }
    let sub_ref = setup(problem, &Method::simple(d_min), surrogate)?;
    let full_ref = setup(problem, &Method::simple(delta_ref), surrogate)?;
    let mut all: Vec<&Setup> = setups.iter().collect();
    all.push(&sub_ref);
    all.push(&full_ref);
    let outcomes = run_batch(problem, g, &all, cfg.n_paths, root)?;
    let (i_sub, i_ref) = (setups.len(), setups.len() + 1);

    let mut cells = Vec::with_capacity(setups.len());
    for (k, (&(delta, sigma), s)) in keys.iter().zip(&setups).enumerate() {
        let est = summarize(&outcomes, k, s, Some(delta), root);
        let mut full = Welford::default();
        let mut sub = Welford::default();
        for o in &outcomes {
            full.push(o.values[k] - o.values[i_ref]);
            sub.push(o.values[k] - o.values[i_sub]);
        }
        let finest = delta == d_min;
        cells.push(DecompositionCell {
            delta,
            sigma,
            phi: measure.small_moment(sigma, p)?,
            estimate: est.value,
            estimate_se: est.se,
            error: full.mean().abs(),
            error_se: full.se(),
            substitution_error: finest.then(|| sub.mean().abs()),
            substitution_se: finest.then(|| sub.se()),
        });
    }

    let (surface, surface_error) = match fit_surface(&cells) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let finest: Vec<&DecompositionCell> = cells.iter().filter(|c| c.delta == d_min).collect();
    let by_sigma: Vec<(f64, f64, f64)> = finest
        .iter()
        .map(|c| {
            (
                c.sigma,
                c.substitution_error.unwrap_or(0.0),
                c.substitution_se.unwrap_or(0.0),
            )
        })
        .collect();
    let by_phi: Vec<(f64, f64, f64)> = finest
        .iter()
        .map(|c| {
            (
                c.phi,
                c.substitution_error.unwrap_or(0.0),
                c.substitution_se.unwrap_or(0.0),
            )
        })
        .collect();
    let opts = FitOptions::default();
    let (sigma_slope, slope_error) = match fit_rate(&by_sigma, &opts) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let phi_slope = fit_rate(&by_phi, &opts).ok();
    Ok(DecompositionReport {
        cells,
        surface,
        surface_error,
        sigma_slope,
        phi_slope,
        slope_error,
        reference: format!("fine_grid(δ_ref={delta_ref})"),
        surrogate_sigma: surrogate,
        phi_exponent: p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionConfig {
    /// Fixed time step.
    pub delta: f64,
    pub sigmas: Vec<f64>,
    pub rule: RuleChoice,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubstitutionPoint {
    pub sigma: f64,
    pub phi: f64,
    pub estimate: f64,
    pub error: f64,
    pub se: f64,
    pub used: bool,
}

/// Substitution error at one step size as a function of `σ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubstitutionReport {
    pub delta: f64,
    /// Level of the reference driver; `None` for an exact sampler.
    pub sigma_ref: Option<f64>,
    /// Sorted by `σ`.
    pub points: Vec<SubstitutionPoint>,
    pub slope: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
    /// Log-log slope of `φ` over the same levels: the predicted exponent.
    pub phi_slope: f64,
    pub fit_error: Option<String>,
}

impl SubstitutionReport {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.slope.is_some_and(|k| (lo..=hi).contains(&k))
    }
}

/// Error of the approximate scheme at each `σ` against the same step with a
/// reference driver, all on shared big-jump streams. The reference level
/// satisfies `φ(σ_ref) ≤ 10⁻² φ(σ_min)`.
pub fn substitution_scaling(
    problem: &Problem,
    g: &TestFunction,
    cfg: &SubstitutionConfig,
    root: &StreamRoot,
) -> Result<SubstitutionReport, HarnessError> {
    let delta = check_deltas(&[cfg.delta], problem.horizon)?[0];
    let sigmas = distinct(&cfg.sigmas, "σ")?;
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(HarnessError::Precondition(
            "σ values must be positive".into(),
        ));
    }
    if cfg.n_paths < MIN_PATHS {
        return Err(HarnessError::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.n_paths
        )));
    }
    let measure =
        problem.spec.measure.as_deref().ok_or_else(|| {
            HarnessError::Precondition("substitution needs a Lévy measure".into())
        })?;
    let p = problem.spec.beta.min(3.0);
    let phis = sigmas
        .iter()
        .map(|&s| measure.small_moment(s, p))
        .collect::<Result<Vec<_>, _>>()?;
    let sigma_ref = if problem.spec.exact.is_some() {
        None
    } else {
        Some(surrogate_level(problem, phis[0])?.min(sigmas[0]))
    };
    let setups = sigmas
        .iter()
        .map(|&s| {
            let m = Method {
                kind: SchemeKind::Approximate,
                delta,
                sigma: Some(s),
                rule: cfg.rule,
            };
            setup(problem, &m, sigma_ref)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reference = setup(problem, &Method::simple(delta), sigma_ref)?;
    let mut all: Vec<&Setup> = setups.iter().collect();
    all.push(&reference);
    let outcomes = run_batch(problem, g, &all, cfg.n_paths, root)?;
    let r = setups.len();
    let mut points = Vec::with_capacity(r);
    for (k, (&sigma, &phi)) in sigmas.iter().zip(&phis).enumerate() {
        let mut diff = Welford::default();
        let mut est = Welford::default();
        for o in &outcomes {
            diff.push(o.values[k] - o.values[r]);
            est.push(o.values[k]);
        }
        points.push(SubstitutionPoint {
            sigma,
            phi,
            estimate: est.mean(),
            error: diff.mean().abs(),
            se: diff.se(),
            used: false,
        });
    }
    let raw: Vec<(f64, f64, f64)> = points.iter().map(|q| (q.sigma, q.error, q.se)).collect();
    let phi_pts: Vec<(f64, f64, f64)> = points.iter().map(|q| (q.sigma, q.phi, 0.0)).collect();
    let phi_slope = fit_rate(&phi_pts, &FitOptions::default())
        .map(|f| f.slope)
        .unwrap_or(f64::NAN);
    let (slope, slope_ci, fit_error) = match fit_rate(&raw, &FitOptions::default()) {
        Ok(f) => {
            for (q, u) in points.iter_mut().zip(&f.used) {
                q.used = *u;
            }
            (Some(f.slope), f.ci, None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(SubstitutionReport {
        delta,
        sigma_ref,
        points,
        slope,
        slope_ci,
        phi_slope,
        fit_error,
    })
}

/// Weighted residual of the best `(c_time, c_subst)` for a fixed `kappa`.
fn solve_fixed(cells: &[DecompositionCell], kappa: f64, with_phi: bool) -> Option<(f64, f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let weights: Vec<f64> = cells
        .iter()
        .map(|c| 1.0 / c.error_se.max(1e-300).powi(2))
        .collect();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    for (c, w) in cells.iter().zip(&weights) {
        let w = w / wmax;
        let x1 = c.delta.powf(kappa);
        let x2 = c.phi;
        a11 += w * x1 * x1;
        a12 += w * x1 * x2;
        a22 += w * x2 * x2;
        b1 += w * x1 * c.error;
        b2 += w * x2 * c.error;
    }
    let (c1, c2) = if with_phi {
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 1e-12 * a11 * a22) {
            return None;
        }
        ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
    } else {
        if !(a11 > 0.0) {
            return None;
        }
        (b1 / a11, 0.0)
    };
    let rss: f64 = cells
        .iter()
        .zip(&weights)
        .map(|(c, w)| w / wmax * (c1 * c.delta.powf(kappa) + c2 * c.phi - c.error).powi(2))
        .sum();
    Some((c1, c2, rss))
}

/// Nonlinear least squares in `kappa` by a scan and golden-section refinement.
fn fit_surface(cells: &[DecompositionCell]) -> Result<SurfaceFit, HarnessError> {
    let with_phi = cells.iter().any(|c| c.phi > 0.0);
    let objective = |k: f64| solve_fixed(cells, k, with_phi).map(|s| s.2);
    let (lo, hi, steps) = (0.02, 4.0, 400);
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=steps {
        let k = lo + (hi - lo) * i as f64 / steps as f64;
        if let Some(r) = objective(k) {
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((k, r));
            }
        }
    }
    let (k0, _) = best.ok_or_else(|| {
        HarnessError::DegenerateFit("normal equations are singular for every order".into())
    })?;
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((k0 - h).max(lo), (k0 + h).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let fc = objective(c).unwrap_or(f64::INFINITY);
        let fd = objective(d).unwrap_or(f64::INFINITY);
        if fc < fd {
            b = d;
        } else {
            a = c;
        }
    }
    let kappa = 0.5 * (a + b);
    let (c_time, c_subst, _) = solve_fixed(cells, kappa, with_phi).ok_or_else(|| {
        HarnessError::DegenerateFit("singular normal equations at the optimum".into())
    })?;
    let residual = cells
        .iter()
        .map(|c| {
            ((c_time * c.delta.powf(kappa) + c_subst * c.phi - c.error) / c.error_se.max(1e-300))
                .powi(2)
        })
        .sum::<f64>()
        / cells.len() as f64;
    Ok(SurfaceFit {
        kappa,
        c_time,
        c_subst,
        residual_norm: residual.sqrt(),
    })
}
