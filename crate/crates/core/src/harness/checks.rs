//! Deterministic self-checks: closed forms against quadrature, the `B^σ`
//! factorization, and linearity of the generator.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::HarnessError;
use crate::levy::{closed, quadrature, LevyMeasure};
use crate::models::{apply_generator, Problem, TestFunction};
use crate::quad::QuadConfig;
use crate::rng::PathRng;

/// Differences below this are treated as agreement when both routes are
/// essentially zero (e.g. the drift of a symmetric measure).
pub const ZERO_FLOOR: f64 = 1e-13;

/// One functional at one level computed by both routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub measure: String,
    pub functional: &'static str,
    pub sigma: f64,
    pub closed: f64,
    pub quadrature: f64,
    pub rel_err: f64,
    pub pass: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn compare(
    measure: &str,
    functional: &'static str,
    sigma: f64,
    a: &[f64],
    b: &[f64],
    tol: f64,
) -> IdentityCheck {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    let rel_err = if diff == 0.0 { 0.0 } else { diff / scale };
    IdentityCheck {
        measure: measure.to_string(),
        functional,
        sigma,
        closed: norm(a),
        quadrature: norm(b),
        rel_err,
        pass: rel_err <= tol || diff <= ZERO_FLOOR,
    }
}

/// `λ_σ`, `φ(σ)` at exponent `p`, `γ(σ)` and `∫_{|υ|≤σ} υυᵀ dπ` by closed
/// form and by quadrature, for every level with a closed form.
pub fn closed_form_checks(
    label: &str,
    measure: &LevyMeasure,
    p: f64,
    sigmas: &[f64],
    tol: f64,
) -> Result<Vec<IdentityCheck>, HarnessError> {
    let cfg = QuadConfig::default();
    let quad = |e: crate::quad::QuadError| HarnessError::Levy(e.into());
    let mut out = Vec::new();
    for &s in sigmas {
        if let Some(a) = closed::tail_mass(measure, s) {
            let b = quadrature::tail_mass(measure, s, &cfg).map_err(quad)?;
            out.push(compare(label, "tail_mass", s, &[a], &[b], tol));
        }
        if let Some(a) = closed::small_moment(measure, s, p) {
            let a = a?;
            let b = quadrature::small_moment(measure, s, p, &cfg)?;
            out.push(compare(label, "phi", s, &[a], &[b], tol));
        }
        if let Some(a) = closed::compensator_drift(measure, s) {
            let b = quadrature::compensator_drift(measure, s, &cfg).map_err(quad)?;
            out.push(compare(label, "gamma", s, &a, &b, tol));
        }
        if let Some(a) = closed::small_cov(measure, s) {
            let b = quadrature::small_cov(measure, s, &cfg).map_err(quad)?;
            out.push(compare(
                label,
                "second_moment",
                s,
                a.as_slice(),
                b.as_slice(),
                tol,
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorCheck {
    pub measure: String,
    pub sigma: f64,
    /// `‖B Bᵀ − Σ‖_F / ‖Σ‖_F`, zero when `Σ = 0`.
    pub rel_err: f64,
    pub pass: bool,
}

/// Checks `B^σ (B^σ)ᵀ = Σ(σ)` at every level.
pub fn factorization_checks(
    label: &str,
    measure: &LevyMeasure,
    sigmas: &[f64],
    tol: f64,
) -> Result<Vec<FactorCheck>, HarnessError> {
    sigmas
        .iter()
        .map(|&s| {
            let cov = measure.small_cov(s)?;
            let b = measure.small_cov_sqrt(s)?.matrix;
            let gap = (&b * b.transpose() - &cov).norm();
            let size = cov.norm();
            let rel_err = if gap == 0.0 { 0.0 } else { gap / size };
            Ok(FactorCheck {
                measure: label.to_string(),
                sigma: s,
                rel_err,
                pass: rel_err <= tol,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityCheck {
    pub problem: String,
    pub points: usize,
    /// Largest `|L(a f + b g) − a Lf − b Lg| / (1 + |a Lf + b Lg|)`.
    pub max_gap: f64,
    pub pass: bool,
}

/// Evaluates the generator on `sin`, `cos` and a combination of both at
/// `points` uniform states in `[-3, 3]`.
pub fn generator_linearity(
    problem: &Problem,
    points: usize,
    seed: u64,
    tol: f64,
) -> Result<LinearityCheck, HarnessError> {
    let sin = problem.test_function("sin")?;
    let cos = problem.test_function("cos")?;
    let (a, b) = (1.7, -0.6);
    let combo = TestFunction::linear_combination("combo", a, sin, b, cos);
    let cfg = QuadConfig::default();
    let mut rng = PathRng::seed_from_u64(seed);
    let mut max_gap = 0.0f64;
    for _ in 0..points {
        let x: Vec<f64> = (0..problem.model.d)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let lf = apply_generator(&problem.model, &problem.spec, sin, &x, &cfg)?;
        let lg = apply_generator(&problem.model, &problem.spec, cos, &x, &cfg)?;
        let l = apply_generator(&problem.model, &problem.spec, &combo, &x, &cfg)?;
        let want = a * lf + b * lg;
        max_gap = max_gap.max((l - want).abs() / (1.0 + want.abs()));
    }
    Ok(LinearityCheck {
        problem: problem.name.clone(),
        points,
        max_gap,
        pass: max_gap <= tol,
    })
}
