//! Samplers for jump sizes above a truncation level, and the
//! Chambers–Mallows–Stuck generator for symmetric stable variates.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

use super::closed::table_cell_moment;
use super::{
    norm, Interpolation, JumpLaw, LevyError, LevyMeasure, MeasureKind, Sides, REJECTION_CAP,
};

/// Draws from `π(· ∩ {|υ| > σ}) / λ_σ`.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    sigma: f64,
    rate: f64,
    dim: usize,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    /// Radial inverse CDF `r = (hi + V (lo - hi))^{-1/λ}` with `lo = σ^{-λ}`, `hi = r₀^{-λ}`.
    Stable {
        index: f64,
        lo_pow: f64,
        hi_pow: f64,
        sides: Sides,
    },
    Tempered {
        index: f64,
        tempering: f64,
        /// Exponential proposal above σ instead of Pareto when `θσ > 1`.
        exponential: bool,
    },
    Table {
        cells: Vec<TableCell>,
        cumulative: Vec<f64>,
        rule: Interpolation,
    },
    Compound {
        law: JumpLaw,
        acceptance: f64,
    },
}

#[derive(Debug, Clone)]
struct TableCell {
    a: f64,
    b: f64,
    /// ν at `a` and the local slope (linear) or exponent (log-log).
    density_a: f64,
    shape: f64,
}

impl JumpSampler {
    pub fn new(measure: &LevyMeasure, sigma: f64) -> Result<Self, LevyError> {
        let mut rate = measure.tail_mass(sigma)?;
        if let MeasureKind::CompoundPoisson { rate: full, .. } = measure.kind() {
            // Keep the rate bitwise equal to Λ when nothing is cut off, so the
            // truncated and exact drivers consume a stream identically.
            if super::closed::moment_between(measure, 0.0, sigma, 0.0) == Some(0.0) {
                rate = *full;
            }
        }
        if !(rate > 0.0) {
            return Err(LevyError::NoMassAbove { sigma });
        }
        let inner = match measure.kind() {
            MeasureKind::TruncatedStable {
                index,
                radius,
                sides,
                ..
            } => Inner::Stable {
                index: *index,
                lo_pow: sigma.powf(-index),
                hi_pow: if radius.is_infinite() {
                    0.0
                } else {
                    radius.powf(-index)
                },
                sides: *sides,
            },
            MeasureKind::TemperedStable {
                index, tempering, ..
            } => Inner::Tempered {
                index: *index,
                tempering: *tempering,
                exponential: tempering * sigma > 1.0,
            },
            MeasureKind::Tabulated {
                radii,
                density,
                rule,
            } => {
                let mut cells = Vec::new();
                let mut cumulative = Vec::new();
                let mut total = 0.0;
                for k in 0..radii.len() - 1 {
                    let a = radii[k].max(sigma);
                    let b = radii[k + 1];
                    if b <= a {
                        continue;
                    }
                    let mass = table_cell_moment(radii, density, *rule, k, a, b, 0.0);
                    if mass <= 0.0 {
                        continue;
                    }
                    let density_a = super::quadrature::table_density(radii, density, *rule, a);
                    let shape = match rule {
                        Interpolation::Linear => {
                            (density[k + 1] - density[k]) / (radii[k + 1] - radii[k])
                        }
                        Interpolation::LogLog => {
                            (density[k + 1] / density[k]).ln() / (radii[k + 1] / radii[k]).ln()
                        }
                    };
                    total += mass;
                    cells.push(TableCell {
                        a,
                        b,
                        density_a,
                        shape,
                    });
                    cumulative.push(total);
                }
                Inner::Table {
                    cells,
                    cumulative,
                    rule: *rule,
                }
            }
            MeasureKind::CompoundPoisson { rate: full, law } => Inner::Compound {
                law: law.clone(),
                acceptance: rate / full,
            },
        };
        Ok(Self {
            sigma,
            rate,
            dim: measure.dim(),
            inner,
        })
    }

    /// `λ_σ`, the rate of jumps this sampler produces.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one jump into `out` (length `m`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<(), LevyError> {
        match &self.inner {
            Inner::Stable {
                index,
                lo_pow,
                hi_pow,
                sides,
            } => {
                let v: f64 = Open01.sample(rng);
                let r = (hi_pow + v * (lo_pow - hi_pow)).powf(-1.0 / index);
                match sides {
                    Sides::Positive => out[0] = r,
                    Sides::Symmetric => random_direction(rng, r, out),
                }
            }
            Inner::Tempered {
                index,
                tempering,
                exponential,
            } => {
                let sigma = self.sigma;
                let mut attempts = 0;
                let r = loop {
                    if attempts == REJECTION_CAP {
                        return Err(LevyError::RejectionCap {
                            sigma,
                            attempts,
                            acceptance: f64::NAN,
                        });
                    }
                    attempts += 1;
                    let v: f64 = Open01.sample(rng);
                    let u: f64 = rng.random();
                    if *exponential {
                        let e: f64 = Exp1.sample(rng);
                        let r = sigma + e / tempering;
                        if u < (sigma / r).powf(1.0 + index) {
                            break r;
                        }
                    } else {
                        let r = sigma * v.powf(-1.0 / index);
                        if u < (-tempering * (r - sigma)).exp() {
                            break r;
                        }
                    }
                };
                random_direction(rng, r, out);
            }
            Inner::Table {
                cells,
                cumulative,
                rule,
            } => {
                let total = *cumulative.last().expect("non-empty when λ_σ > 0");
                let target = rng.random::<f64>() * total;
                let k = cumulative
                    .partition_point(|&c| c <= target)
                    .min(cells.len() - 1);
                let before = if k == 0 { 0.0 } else { cumulative[k - 1] };
                let r = cells[k].invert(target - before, *rule);
                random_direction(rng, r, out);
            }
            Inner::Compound { law, acceptance } => {
                let mut attempts = 0;
                loop {
                    if attempts == REJECTION_CAP {
                        return Err(LevyError::RejectionCap {
                            sigma: self.sigma,
                            attempts,
                            acceptance: *acceptance,
                        });
                    }
                    attempts += 1;
                    sample_law(law, rng, out);
                    if norm(out) > self.sigma {
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

impl TableCell {
    /// Radius at which the mass of `(a, r]` equals `mass`.
    fn invert(&self, mass: f64, rule: Interpolation) -> f64 {
        let r = match rule {
            Interpolation::Linear => {
                // ν(a) t + shape t²/2 = mass
                let disc = (self.density_a * self.density_a + 2.0 * self.shape * mass).max(0.0);
                self.a + 2.0 * mass / (self.density_a + disc.sqrt())
            }
            Interpolation::LogLog => {
                let q = self.shape + 1.0;
                let base = self.density_a * self.a;
                if q.abs() < 1e-14 {
                    self.a * (mass / base).exp()
                } else {
                    self.a * (1.0 + q * mass / base).max(0.0).powf(1.0 / q)
                }
            }
        };
        r.clamp(self.a, self.b)
    }
}

/// `r` times a uniform direction: a random sign for `m = 1`, a normalized
/// Gaussian vector otherwise.
fn random_direction<R: Rng + ?Sized>(rng: &mut R, r: f64, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { r } else { -r };
        return;
    }
    loop {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let n = norm(out);
        if n > 1e-12 {
            for x in out.iter_mut() {
                *x *= r / n;
            }
            return;
        }
    }
}

/// One draw from a compound Poisson jump law.
pub fn sample_law<R: Rng + ?Sized>(law: &JumpLaw, rng: &mut R, out: &mut [f64]) {
    match law {
        JumpLaw::Discrete { atoms, weights } => {
            let k = if atoms.len() == 1 {
                0
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = atoms.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            };
            out.copy_from_slice(&atoms[k]);
        }
        JumpLaw::Uniform { lo, hi } => {
            out[0] = rng.random_range(*lo..*hi);
        }
    }
}

/// Standard symmetric stable variate with characteristic function
/// `exp(-|ξ|^λ)`.
pub fn stable_cms<R: Rng + ?Sized>(index: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let v = PI * (u - 0.5);
    if index == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let c = v.cos();
    (index * v).sin() / c.powf(1.0 / index)
        * ((v - index * v).cos() / w).powf((1.0 - index) / index)
}

/// Scale `s` such that a Lévy process with density `c|u|^{-1-λ}` on each
/// half-line has `Z_t ~ s t^{1/λ} S` with `S` from [`stable_cms`].
pub fn stable_cms_scale(index: f64, scale: f64) -> f64 {
    if index == 1.0 {
        return scale * PI;
    }
    let gamma = statrs::function::gamma::gamma(1.0 - index);
    (2.0 * scale * gamma * (FRAC_PI_2 * index).cos() / index).powf(1.0 / index)
}

/// Jump-size law when every jump of a compound Poisson measure is drawn.
pub fn full_law(measure: &LevyMeasure) -> Option<(f64, &JumpLaw)> {
    match measure.kind() {
        MeasureKind::CompoundPoisson { rate, law } => Some((*rate, law)),
        _ => None,
    }
}
