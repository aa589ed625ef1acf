//! Quadrature route for the measure functionals.
//!
//! Everything reduces to `∫ h(r) ν(r) dr` over a radial interval, split at
//! the density's breakpoints and integrated with [`crate::quad::radial`]
//! (log substitution, chunked towards 0 and ∞). Point masses of discrete
//! compound Poisson laws are summed exactly.

use nalgebra::DMatrix;

use super::closed::{activity_index, divergence, stable_radial_constant};
use super::{norm, Interpolation, JumpLaw, LevyError, LevyMeasure, MeasureKind, Sides};
use crate::quad::{self, QuadConfig, QuadError};

/// Densities of positive and negative jumps of a one-dimensional measure
/// at distance `r`, or the radial density split evenly when `m > 1`.
fn side_densities(m: &LevyMeasure, r: f64) -> (f64, f64) {
    match m.kind() {
        MeasureKind::CompoundPoisson { rate, law } => match law {
            JumpLaw::Uniform { lo, hi } => {
                let d = rate / (hi - lo);
                let inside = |u: f64| if u >= *lo && u <= *hi { d } else { 0.0 };
                (inside(r), inside(-r))
            }
            JumpLaw::Discrete { .. } => (0.0, 0.0),
        },
        MeasureKind::TruncatedStable {
            index,
            scale,
            radius,
            sides,
        } => {
            if r > *radius || r <= 0.0 {
                return (0.0, 0.0);
            }
            let total = stable_radial_constant(*scale, *sides, m.dim()) * r.powf(-1.0 - index);
            match sides {
                Sides::Positive => (total, 0.0),
                Sides::Symmetric => (total / 2.0, total / 2.0),
            }
        }
        MeasureKind::TemperedStable {
            index,
            scale,
            tempering,
        } => {
            let d = scale * (-tempering * r).exp() * r.powf(-1.0 - index);
            (d, d)
        }
        MeasureKind::Tabulated {
            radii,
            density,
            rule,
        } => {
            let total = table_density(radii, density, *rule, r);
            (total / 2.0, total / 2.0)
        }
    }
}

pub(crate) fn table_density(radii: &[f64], density: &[f64], rule: Interpolation, r: f64) -> f64 {
    let last = radii.len() - 1;
    if r < radii[0] || r > radii[last] {
        return 0.0;
    }
    let k = radii.partition_point(|&x| x <= r).clamp(1, last) - 1;
    let t = (r - radii[k]) / (radii[k + 1] - radii[k]);
    match rule {
        Interpolation::Linear => density[k] + t * (density[k + 1] - density[k]),
        Interpolation::LogLog => {
            let s = (density[k + 1] / density[k]).ln() / (radii[k + 1] / radii[k]).ln();
            density[k] * (r / radii[k]).powf(s)
        }
    }
}

/// Radii where the density is not smooth.
fn breakpoints(m: &LevyMeasure) -> Vec<f64> {
    match m.kind() {
        MeasureKind::CompoundPoisson { law, .. } => match law {
            JumpLaw::Uniform { lo, hi } => vec![lo.abs(), hi.abs()],
            JumpLaw::Discrete { .. } => Vec::new(),
        },
        MeasureKind::TruncatedStable { radius, .. } => vec![*radius],
        MeasureKind::TemperedStable { .. } => Vec::new(),
        MeasureKind::Tabulated { radii, .. } => radii.clone(),
    }
}

fn discrete_law(m: &LevyMeasure) -> Option<(f64, &[Vec<f64>], &[f64])> {
    match m.kind() {
        MeasureKind::CompoundPoisson {
            rate,
            law: JumpLaw::Discrete { atoms, weights },
        } => Some((*rate, atoms, weights)),
        _ => None,
    }
}

/// `∫_lo^hi` of `f(r)` over cells of `[lo, hi]` split at `breaks`, each by
/// the radial quadrature.
fn split_radial<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<f64, QuadError> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi && b.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut points = Vec::with_capacity(cuts.len() + 2);
    points.push(lo);
    points.extend(cuts);
    points.push(hi);
    let mut total = 0.0;
    for w in points.windows(2) {
        total += quad::radial(&f, w[0], w[1], cfg)?.value;
    }
    Ok(total)
}

/// `∫_{lo<|υ|≤hi} h(|υ|) dπ`.
pub fn radial_integral<H: Fn(f64) -> f64>(
    m: &LevyMeasure,
    lo: f64,
    hi: f64,
    h: H,
    cfg: &QuadConfig,
) -> Result<f64, QuadError> {
    if let Some((rate, atoms, weights)) = discrete_law(m) {
        return Ok(rate
            * atoms
                .iter()
                .zip(weights)
                .map(|(a, w)| {
                    let r = norm(a);
                    if r > lo && r <= hi && r > 0.0 {
                        w * h(r)
                    } else {
                        0.0
                    }
                })
                .sum::<f64>());
    }
    let hi = hi.min(m.support_radius());
    if hi <= lo {
        return Ok(0.0);
    }
    split_radial(
        |r| {
            let (p, n) = side_densities(m, r);
            h(r) * (p + n)
        },
        lo,
        hi,
        &breakpoints(m),
        cfg,
    )
}

pub fn moment_between(
    m: &LevyMeasure,
    lo: f64,
    hi: f64,
    p: f64,
    cfg: &QuadConfig,
) -> Result<f64, QuadError> {
    radial_integral(m, lo, hi, |r| r.powf(p), cfg)
}

pub fn tail_mass(m: &LevyMeasure, sigma: f64, cfg: &QuadConfig) -> Result<f64, QuadError> {
    radial_integral(m, sigma, f64::INFINITY, |_| 1.0, cfg)
}

pub fn small_moment(
    m: &LevyMeasure,
    sigma: f64,
    p: f64,
    cfg: &QuadConfig,
) -> Result<f64, LevyError> {
    if let Some(index) = activity_index(m) {
        if p <= index {
            return Err(divergence("small-jump moment", p, index));
        }
    }
    radial_integral(m, 0.0, sigma, |r| r.powf(p), cfg).map_err(|e| match e {
        QuadError::Divergent { .. } => LevyError::Divergent {
            functional: "small-jump moment",
            exponent: p,
            condition: format!("quadrature towards 0 does not settle: {e}"),
        },
        other => other.into(),
    })
}

/// Signed first moment over `{lo < |υ| ≤ hi}`.
fn signed_moment(
    m: &LevyMeasure,
    lo: f64,
    hi: f64,
    cfg: &QuadConfig,
) -> Result<Vec<f64>, QuadError> {
    let dim = m.dim();
    if let Some((rate, atoms, weights)) = discrete_law(m) {
        let mut out = vec![0.0; dim];
        for (a, w) in atoms.iter().zip(weights) {
            let r = norm(a);
            if r > lo && r <= hi {
                for (o, x) in out.iter_mut().zip(a) {
                    *o += rate * w * x;
                }
            }
        }
        return Ok(out);
    }
    if dim > 1 {
        // radial kinds are isotropic in m > 1: the direction average vanishes
        return Ok(vec![0.0; dim]);
    }
    let hi = hi.min(m.support_radius());
    if hi <= lo {
        return Ok(vec![0.0]);
    }
    let v = split_radial(
        |r| {
            let (p, n) = side_densities(m, r);
            r * (p - n)
        },
        lo,
        hi,
        &breakpoints(m),
        cfg,
    )?;
    Ok(vec![v])
}

pub fn compensator_drift(
    m: &LevyMeasure,
    sigma: f64,
    cfg: &QuadConfig,
) -> Result<Vec<f64>, QuadError> {
    signed_moment(m, sigma, 1.0, cfg)
}

pub fn small_drift(m: &LevyMeasure, sigma: f64, cfg: &QuadConfig) -> Result<Vec<f64>, QuadError> {
    signed_moment(m, 0.0, sigma, cfg)
}

pub fn small_cov(m: &LevyMeasure, sigma: f64, cfg: &QuadConfig) -> Result<DMatrix<f64>, QuadError> {
    let dim = m.dim();
    if let Some((rate, atoms, weights)) = discrete_law(m) {
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
        return Ok(cov);
    }
    let second = moment_between(m, 0.0, sigma, 2.0, cfg)?;
    Ok(DMatrix::identity(dim, dim) * (second / dim as f64))
}

/// `∫ h(u) π(du)` on the line, `h` evaluated on both half-lines; `breaks`
/// are extra points (signed) where `h` is not smooth.
pub fn integrate_line<H: Fn(f64) -> f64>(
    m: &LevyMeasure,
    h: H,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<f64, QuadError> {
    let mut cuts = breakpoints(m);
    cuts.extend(breaks.iter().map(|b| b.abs()));
    let hi = m.support_radius();
    split_radial(
        |r| {
            let (p, n) = side_densities(m, r);
            let mut v = 0.0;
            if p != 0.0 {
                v += p * h(r);
            }
            if n != 0.0 {
                v += n * h(-r);
            }
            v
        },
        0.0,
        hi,
        &cuts,
        cfg,
    )
}
