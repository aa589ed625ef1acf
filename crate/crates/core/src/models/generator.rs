//! Numerical evaluation of the SDE generator and Monte Carlo martingale
//! checks built on it.

use rayon::prelude::*;

use super::{ModelError, SdeModel, TestFunction};
use crate::drivers::path::{NoiseLayout, NoisePath, ZView};
use crate::drivers::DriverSpec;
use crate::levy::LevyError;
use crate::quad::QuadConfig;
use crate::rng::StreamRoot;
use crate::schemes::{check_compatible, euler_on_path, make_uniform_grid, wiener_dim};

/// Below `|Gυ| < TAYLOR_SWITCH·(1 + |x|)` the compensated jump integrand is
/// replaced by its second-order Taylor term to avoid cancellation.
pub const TAYLOR_SWITCH: f64 = 1e-4;

/// Absolute quadrature tolerance of the jump term, relative to `1 + |v(x)|`.
/// Rounding in `v(x + Gυ) − v(x)` makes tighter targets unreachable.
pub const JUMP_TERM_ABS_TOL: f64 = 1e-10;

/// `L v(x)`: drift and diffusion terms from derivatives of `v`, the jump
/// term by quadrature against the driver's Lévy measure.
pub fn apply_generator(
    model: &SdeModel,
    spec: &DriverSpec,
    v: &TestFunction,
    x: &[f64],
    cfg: &QuadConfig,
) -> Result<f64, ModelError> {
    let d = model.d;
    let needs_gradient =
        model.has_drift() || (model.has_jump() && spec.compensated() && spec.measure.is_some());
    let needs_hessian = model.has_diffusion() || (model.has_jump() && spec.compensated());
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    if needs_gradient {
        v.gradient(x, &mut grad)?;
    }
    if needs_hessian {
        v.hessian(x, &mut hess)?;
    }

    let mut total = 0.0;
    if model.has_drift() {
        let mut a = vec![0.0; d];
        model.drift_at(x, &mut a);
        total += dot(&a, &grad);
    }
    if model.has_diffusion() {
        let n = model.n;
        let mut b = vec![0.0; d * n];
        model.diffusion_at(x, &mut b);
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let bij: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
                acc += bij * hess[i * d + j];
            }
        }
        total += 0.5 * acc;
    }
    if let (true, Some(measure)) = (model.has_jump(), spec.measure.as_deref()) {
        total += jump_term(model, spec.compensated(), measure, v, x, &grad, &hess, cfg)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn jump_term(
    model: &SdeModel,
    compensated: bool,
    measure: &crate::levy::LevyMeasure,
    v: &TestFunction,
    x: &[f64],
    grad: &[f64],
    hess: &[f64],
    cfg: &QuadConfig,
) -> Result<f64, ModelError> {
    let (d, m) = (model.d, model.m);
    let mut g = vec![0.0; d * m];
    model.jump_at(x, &mut g);
    if g.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    let v_x = v.value(x);
    let eps = TAYLOR_SWITCH * (1.0 + x.iter().fold(0.0f64, |s, c| s.max(c.abs())));
    let integrand = |u: &[f64]| {
        let mut shift = vec![0.0; d];
        for (r, s) in shift.iter_mut().enumerate() {
            *s = g[r * m..(r + 1) * m]
                .iter()
                .zip(u)
                .map(|(a, b)| a * b)
                .sum();
        }
        let inside = compensated && u.iter().map(|c| c * c).sum::<f64>() <= 1.0;
        if inside && shift.iter().map(|c| c * c).sum::<f64>().sqrt() < eps {
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += shift[i] * hess[i * d + j] * shift[j];
                }
            }
            return 0.5 * q;
        }
        let moved: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let mut val = v.value(&moved) - v_x;
        if inside {
            val -= dot(grad, &shift);
        }
        val
    };

    let mut breaks = Vec::new();
    if compensated {
        breaks.extend([-1.0, 1.0]);
    }
    if m == 1 {
        let col_norm = (0..d).map(|r| g[r].powi(2)).sum::<f64>().sqrt();
        if col_norm > 0.0 {
            breaks.extend([-eps / col_norm, eps / col_norm]);
        }
        if d == 1 && g[0] != 0.0 {
            breaks.extend(v.kinks.iter().map(|k| (k - x[0]) / g[0]));
        }
    }
    breaks.retain(|b| b.is_finite() && *b != 0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let cfg = QuadConfig {
        abs_tol: cfg.abs_tol.max(JUMP_TERM_ABS_TOL * (1.0 + v_x.abs())),
        ..cfg.clone()
    };
    measure
        .integrate(integrand, &breaks, &cfg)
        .map_err(|e| match e {
            LevyError::Unsupported(msg) => ModelError::Constraint(format!(
                "generator jump term unavailable for this driver: {msg}"
            )),
            other => other.into(),
        })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Monte Carlo estimate of `E v(X_t) − v(x₀) − ∫₀ᵗ E Lv(X_s) ds`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DefectEstimate {
    pub defect: f64,
    pub se: f64,
    pub t: f64,
    pub delta_fine: f64,
    pub n_paths: usize,
}

/// Simulates `X` by the simple Euler scheme with exact driver increments on
/// a `delta_fine` grid and integrates `Lv` along each path by the trapezoid
/// rule.
#[allow(clippy::too_many_arguments)]
pub fn martingale_defect(
    model: &SdeModel,
    spec: &DriverSpec,
    v: &TestFunction,
    t: f64,
    n_paths: usize,
    delta_fine: f64,
    root: &StreamRoot,
    cfg: &QuadConfig,
) -> Result<DefectEstimate, ModelError> {
    if n_paths < 2 {
        return Err(ModelError::Constraint(
            "martingale defect needs at least 2 paths".into(),
        ));
    }
    let scheme_err = |e: crate::schemes::SchemeError| ModelError::Scheme(e.to_string());
    check_compatible(model, spec).map_err(scheme_err)?;
    let grid = make_uniform_grid(t, delta_fine.min(t)).map_err(scheme_err)?;
    let view = ZView::exact(spec)?;
    let layout = NoiseLayout::new(spec, wiener_dim(model), t, grid.n_steps(), &[&view])?;
    let times = grid.times();
    let v0 = v.value(&model.x0);

    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|index| -> Result<f64, ModelError> {
            let mut noise = NoisePath::generate(&layout, root, index)?;
            let mut integral = 0.0;
            let mut prev = 0.0;
            let mut failure = None;
            let terminal = euler_on_path(model, times, &mut noise, &view, |i, _, y| {
                if failure.is_some() {
                    return;
                }
                match apply_generator(model, spec, v, y, cfg) {
                    Ok(lv) => {
                        if i > 0 {
                            integral += 0.5 * (prev + lv) * (times[i] - times[i - 1]);
                        }
                        prev = lv;
                    }
                    Err(e) => failure = Some(e),
                }
            })
            .map_err(scheme_err)?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(v.value(&terminal) - v0 - integral)
        })
        .collect::<Result<_, _>>()?;

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(DefectEstimate {
        defect: mean,
        se: (var / n).sqrt(),
        t,
        delta_fine,
        n_paths,
    })
}

/// Martingale defects at two fine steps with a fitted `C δ` bias term.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MartingaleCheck {
    pub estimates: Vec<DefectEstimate>,
    /// Weighted least-squares slope of the defect on `δ_fine`, through the origin.
    pub bias_slope: f64,
    /// `|defect| ≤ 3·SE + |C| δ_fine` at every step.
    pub pass: bool,
}

/// Runs [`martingale_defect`] at each of `deltas_fine` on common streams
/// and tests the defects against `3·SE` plus a fitted linear bias.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check(
    model: &SdeModel,
    spec: &DriverSpec,
    v: &TestFunction,
    t: f64,
    n_paths: usize,
    deltas_fine: &[f64],
    root: &StreamRoot,
    cfg: &QuadConfig,
) -> Result<MartingaleCheck, ModelError> {
    if deltas_fine.len() < 2 {
        return Err(ModelError::Constraint(
            "martingale check needs two fine steps".into(),
        ));
    }
    let estimates = deltas_fine
        .iter()
        .map(|&d| martingale_defect(model, spec, v, t, n_paths, d, root, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let weight = |e: &DefectEstimate| if e.se > 0.0 { 1.0 / (e.se * e.se) } else { 1.0 };
    let num: f64 = estimates
        .iter()
        .map(|e| weight(e) * e.defect * e.delta_fine)
        .sum();
    let den: f64 = estimates
        .iter()
        .map(|e| weight(e) * e.delta_fine * e.delta_fine)
        .sum();
    let bias_slope = num / den;
    let pass = estimates
        .iter()
        .all(|e| e.defect.abs() <= 3.0 * e.se + bias_slope.abs() * e.delta_fine);
    Ok(MartingaleCheck {
        estimates,
        bias_slope,
        pass,
    })
}
