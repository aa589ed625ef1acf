//! Closed-form functionals. Every function returns `None` when the kind has
//! no closed form (the tempered stable kind), in which case callers fall
//! back to [`super::quadrature`].

use nalgebra::DMatrix;

use super::{
    norm, sphere_area, Interpolation, JumpLaw, LevyError, LevyMeasure, MeasureKind, Sides,
};

/// `K` in the radial density `K r^{-1-λ}` of a truncated stable measure.
pub(crate) fn stable_radial_constant(scale: f64, sides: Sides, dim: usize) -> f64 {
    match sides {
        Sides::Symmetric => scale * sphere_area(dim),
        Sides::Positive => scale,
    }
}

/// Exponent `λ` such that `∫_{|υ|≤σ} |υ|^p dπ < ∞` iff `p > λ`, for kinds
/// with infinite activity.
pub(crate) fn activity_index(m: &LevyMeasure) -> Option<f64> {
    match m.kind() {
        MeasureKind::TruncatedStable { index, .. } | MeasureKind::TemperedStable { index, .. } => {
            Some(*index)
        }
        _ => None,
    }
}

pub(crate) fn divergence(functional: &'static str, p: f64, index: f64) -> LevyError {
    LevyError::Divergent {
        functional,
        exponent: p,
        condition: format!("the exponent must exceed the stability index {index}"),
    }
}

/// `∫_a^b |u|^p du` for `a < b`, infinite if the interval touches 0 and `p ≤ -1`.
fn abs_power_integral(a: f64, b: f64, p: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        if p == -1.0 {
            return if a == 0.0 {
                f64::INFINITY
            } else {
                (b / a).ln()
            };
        }
        if a == 0.0 && p < -1.0 {
            return f64::INFINITY;
        }
        return (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
    }
    if b <= 0.0 {
        return abs_power_integral(-b, -a, p);
    }
    abs_power_integral(0.0, -a, p) + abs_power_integral(0.0, b, p)
}

/// `∫_{lo<|υ|≤hi} |υ|^p dπ`, possibly infinite.
pub fn moment_between(m: &LevyMeasure, lo: f64, hi: f64, p: f64) -> Option<f64> {
    if hi <= lo {
        return Some(0.0);
    }
    match m.kind() {
        MeasureKind::CompoundPoisson { rate, law } => Some(match law {
            JumpLaw::Discrete { atoms, weights } => {
                rate * atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, w)| {
                        let r = norm(a);
                        if r > lo && r <= hi && r > 0.0 {
                            w * r.powf(p)
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            }
            JumpLaw::Uniform { lo: a, hi: b } => {
                let density = rate / (b - a);
                // {lo < |u| ≤ hi} = [-hi, -lo) ∪ (lo, hi]
                let neg = abs_power_integral(a.max(-hi), b.min(-lo), p);
                let pos = abs_power_integral(a.max(lo), b.min(hi), p);
                density * (neg + pos)
            }
        }),
        MeasureKind::TruncatedStable {
            index,
            scale,
            radius,
            sides,
        } => {
            let k = stable_radial_constant(*scale, *sides, m.dim());
            let b = hi.min(*radius);
            if b <= lo {
                return Some(0.0);
            }
            let q = p - index;
            Some(if q == 0.0 {
                if lo == 0.0 || b.is_infinite() {
                    f64::INFINITY
                } else {
                    k * (b / lo).ln()
                }
            } else if (lo == 0.0 && q < 0.0) || (b.is_infinite() && q > 0.0) {
                f64::INFINITY
            } else {
                k * (b.powf(q) - lo.powf(q)) / q
            })
        }
        MeasureKind::TemperedStable { .. } => None,
        MeasureKind::Tabulated {
            radii,
            density,
            rule,
        } => {
            let mut total = 0.0;
            for k in 0..radii.len() - 1 {
                let a = radii[k].max(lo);
                let b = radii[k + 1].min(hi);
                if b > a {
                    total += table_cell_moment(radii, density, *rule, k, a, b, p);
                }
            }
            Some(total)
        }
    }
}

/// `∫_a^b r^p ν(r) dr` inside table cell `k`.
pub(crate) fn table_cell_moment(
    radii: &[f64],
    density: &[f64],
    rule: Interpolation,
    k: usize,
    a: f64,
    b: f64,
    p: f64,
) -> f64 {
    let (r0, r1) = (radii[k], radii[k + 1]);
    let (d0, d1) = (density[k], density[k + 1]);
    match rule {
        Interpolation::Linear => {
            let slope = (d1 - d0) / (r1 - r0);
            let intercept = d0 - slope * r0;
            intercept * power_span(a, b, p + 1.0) + slope * power_span(a, b, p + 2.0)
        }
        Interpolation::LogLog => {
            let s = (d1 / d0).ln() / (r1 / r0).ln();
            let q = p + s + 1.0;
            // ν(r) = d0 (r/r0)^s, integrated against r^p
            let scale = d0 * r0.powf(p + 1.0);
            let (x, y) = (a / r0, b / r0);
            if q.abs() < 1e-14 {
                scale * (y / x).ln()
            } else {
                scale * (y.powf(q) - x.powf(q)) / q
            }
        }
    }
}

/// `∫_a^b r^{e-1} dr` for `0 < a ≤ b`.
fn power_span(a: f64, b: f64, e: f64) -> f64 {
    if e == 0.0 {
        (b / a).ln()
    } else {
        (b.powf(e) - a.powf(e)) / e
    }
}

pub fn tail_mass(m: &LevyMeasure, sigma: f64) -> Option<f64> {
    moment_between(m, sigma, f64::INFINITY, 0.0)
}

pub fn small_moment(m: &LevyMeasure, sigma: f64, p: f64) -> Option<Result<f64, LevyError>> {
    if let Some(index) = activity_index(m) {
        if p <= index {
            return Some(Err(divergence("small-jump moment", p, index)));
        }
    }
    moment_between(m, 0.0, sigma, p).map(Ok)
}

/// Signed first moment `∫_{lo<|υ|≤hi} υ dπ`.
fn signed_moment(m: &LevyMeasure, lo: f64, hi: f64) -> Option<Vec<f64>> {
    let dim = m.dim();
    if hi <= lo {
        return Some(vec![0.0; dim]);
    }
    match m.kind() {
        MeasureKind::CompoundPoisson { rate, law } => Some(match law {
            JumpLaw::Discrete { atoms, weights } => {
                let mut out = vec![0.0; dim];
                for (a, w) in atoms.iter().zip(weights) {
                    let r = norm(a);
                    if r > lo && r <= hi {
                        for (o, x) in out.iter_mut().zip(a) {
                            *o += rate * w * x;
                        }
                    }
                }
                out
            }
            JumpLaw::Uniform { lo: a, hi: b } => {
                let density = rate / (b - a);
                let span = |x: f64, y: f64| if y > x { (y * y - x * x) / 2.0 } else { 0.0 };
                let neg = span(a.max(-hi), b.min(-lo));
                let pos = span(a.max(lo), b.min(hi));
                vec![density * (neg + pos)]
            }
        }),
        MeasureKind::TruncatedStable {
            sides: Sides::Positive,
            ..
        } => moment_between(m, lo, hi, 1.0).map(|v| vec![v]),
        MeasureKind::TruncatedStable { .. } | MeasureKind::Tabulated { .. } => Some(vec![0.0; dim]),
        MeasureKind::TemperedStable { .. } => None,
    }
}

pub fn compensator_drift(m: &LevyMeasure, sigma: f64) -> Option<Vec<f64>> {
    signed_moment(m, sigma, 1.0)
}

/// Caller has already checked `∫_{|υ|≤σ}|υ| dπ < ∞`.
pub fn small_drift(m: &LevyMeasure, sigma: f64) -> Option<Vec<f64>> {
    signed_moment(m, 0.0, sigma)
}

pub fn small_cov(m: &LevyMeasure, sigma: f64) -> Option<DMatrix<f64>> {
    let dim = m.dim();
    match m.kind() {
        MeasureKind::CompoundPoisson {
            rate,
            law: JumpLaw::Discrete { atoms, weights },
        } => {
            let mut cov = DMatrix::zeros(dim, dim);
            for (a, w) in atoms.iter().zip(weights) {
                if norm(a) <= sigma {
                    for i in 0..dim {
                        for j in 0..dim {
                            cov[(i, j)] += rate * w * a[i] * a[j];
                        }
                    }
                }
            }
            Some(cov)
        }
        MeasureKind::TemperedStable { .. } => None,
        _ => {
            let second = moment_between(m, 0.0, sigma, 2.0)?;
            Some(DMatrix::identity(dim, dim) * (second / dim as f64))
        }
    }
}
