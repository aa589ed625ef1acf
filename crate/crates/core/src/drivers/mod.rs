//! Driving noises: the Wiener process, exact increments of `Z` where a
//! sampler exists, the truncated driver `Z^σ` (compensated compound
//! Poisson), the small-jump substitute `R^σ`, and `Z̃ = Z^σ + R^σ`.
//!
//! The free functions here draw single increments from an explicit stream.
//! [`path::NoisePath`] stores one sample of every noise on `[0, T]` so that
//! several schemes can be run on the same randomness.

pub mod path;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy::sampler::sample_law;
use crate::levy::{
    stable_cms, stable_cms_scale, JumpSampler, LevyError, LevyMeasure, MeasureKind, Sides,
};

pub use path::{JumpBase, JumpCursor, NoiseLayout, NoisePath, ZView};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("driver constraint violated: {0}")]
    Constraint(String),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(
        "no exact sampler for this driver; use the surrogate Z^σ + R^σ at a small reference \
         level σ instead"
    )]
    NoExactSampler,
    #[error("time {t} is not on the fine grid required by stable increments")]
    OffGrid { t: f64 },
}

/// Exact samplers for increments of `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactSampler {
    /// `Z` is a standard Brownian motion in `R^m`.
    Brownian,
    CompoundPoisson,
    /// Symmetric untruncated stable, one-dimensional.
    StableCms,
}

/// Which substitute replaces the jumps of size at most `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCase {
    Drift,
    Gaussian,
    Zero,
}

impl RuleCase {
    /// Case table: drift iff `α < β ∈ (1,2]` and `α ∈ (0,1]`; Gaussian iff
    /// `α < β ∈ (2,4]` and `α ∈ (1,2]`; nothing otherwise.
    pub fn from_orders(alpha: f64, beta: f64) -> Self {
        if alpha < beta && beta > 1.0 && beta <= 2.0 && alpha > 0.0 && alpha <= 1.0 {
            RuleCase::Drift
        } else if alpha < beta && beta > 2.0 && beta <= 4.0 && alpha > 1.0 && alpha <= 2.0 {
            RuleCase::Gaussian
        } else {
            RuleCase::Zero
        }
    }
}

/// A resolved small-jump substitute at one truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct RSigmaRule {
    pub case: RuleCase,
    /// `∫_{|υ|≤σ} υ dπ`, used in the drift case.
    pub drift_vector: Vec<f64>,
    /// `B^σ`, used in the Gaussian case.
    pub b_sigma: DMatrix<f64>,
}

impl RSigmaRule {
    pub fn zero(dim: usize) -> Self {
        Self {
            case: RuleCase::Zero,
            drift_vector: vec![0.0; dim],
            b_sigma: DMatrix::zeros(dim, dim),
        }
    }

    /// Rule selected by the case table for the driver's `(α, β)`.
    pub fn auto(spec: &DriverSpec, sigma: f64) -> Result<Self, DriverError> {
        Self::with_case(spec, sigma, RuleCase::from_orders(spec.alpha, spec.beta))
    }

    pub fn with_case(spec: &DriverSpec, sigma: f64, case: RuleCase) -> Result<Self, DriverError> {
        let m = spec.jump_dim;
        let mut rule = Self::zero(m);
        rule.case = case;
        if let Some(measure) = &spec.measure {
            match case {
                RuleCase::Drift => rule.drift_vector = measure.small_drift(sigma)?,
                RuleCase::Gaussian => rule.b_sigma = measure.small_cov_sqrt(sigma)?.matrix,
                RuleCase::Zero => {}
            }
        }
        Ok(rule)
    }

    /// True when the substitute contributes nothing at all.
    pub fn is_null(&self) -> bool {
        match self.case {
            RuleCase::Zero => true,
            RuleCase::Drift => self.drift_vector.iter().all(|&x| x == 0.0),
            RuleCase::Gaussian => self.b_sigma.iter().all(|&x| x == 0.0),
        }
    }
}

/// The driving noise of a model: optional Wiener part and the Lévy driver.
#[derive(Debug, Clone)]
pub struct DriverSpec {
    /// `None` when `Z` has no jumps.
    pub measure: Option<Arc<LevyMeasure>>,
    pub jump_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub has_wiener: bool,
    pub has_drift: bool,
    pub exact: Option<ExactSampler>,
}

impl DriverSpec {
    pub fn new(
        measure: Option<Arc<LevyMeasure>>,
        jump_dim: usize,
        beta: f64,
        has_wiener: bool,
        has_drift: bool,
        exact: Option<ExactSampler>,
        alpha_without_measure: f64,
    ) -> Result<Self, DriverError> {
        Self::build(
            measure,
            jump_dim,
            beta,
            has_wiener,
            has_drift,
            exact,
            alpha_without_measure,
            true,
        )
    }

    /// Like [`DriverSpec::new`] but without the `α < β ≤ μ ≤ 2α` chain, for
    /// drivers outside the convergence theory (e.g. untruncated stable
    /// laws, which have no tail moment of order above their index).
    pub fn experimental(
        measure: Option<Arc<LevyMeasure>>,
        jump_dim: usize,
        beta: f64,
        has_wiener: bool,
        has_drift: bool,
        exact: Option<ExactSampler>,
        alpha_without_measure: f64,
    ) -> Result<Self, DriverError> {
        Self::build(
            measure,
            jump_dim,
            beta,
            has_wiener,
            has_drift,
            exact,
            alpha_without_measure,
            false,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        measure: Option<Arc<LevyMeasure>>,
        jump_dim: usize,
        beta: f64,
        has_wiener: bool,
        has_drift: bool,
        exact: Option<ExactSampler>,
        alpha_without_measure: f64,
        chain: bool,
    ) -> Result<Self, DriverError> {
        let (alpha, mu) = match &measure {
            Some(m) => (m.alpha(), m.mu()),
            None => (alpha_without_measure, 2.0 * alpha_without_measure),
        };
        let spec = Self {
            measure,
            jump_dim,
            alpha,
            beta,
            mu,
            has_wiener,
            has_drift,
            exact,
        };
        spec.validate(chain)?;
        Ok(spec)
    }

    fn validate(&self, chain: bool) -> Result<(), DriverError> {
        let fail = |msg: String| Err(DriverError::Constraint(msg));
        let (alpha, beta, mu) = (self.alpha, self.beta, self.mu);
        if !(alpha > 0.0 && alpha <= 2.0) {
            return fail(format!("order α = {alpha} outside (0, 2]"));
        }
        if alpha < 1.0 && self.has_drift {
            return fail(format!("a drift requires α ≥ 1, got α = {alpha}"));
        }
        if alpha < 2.0 && self.has_wiener {
            return fail(format!("a Wiener part requires α = 2, got α = {alpha}"));
        }
        if chain && !(alpha < beta && beta <= mu && mu <= 2.0 * alpha) {
            return fail(format!(
                "need α < β ≤ μ ≤ 2α, got α = {alpha}, β = {beta}, μ = {mu}"
            ));
        }
        if let Some(m) = &self.measure {
            if m.dim() != self.jump_dim {
                return fail(format!(
                    "measure dimension {} differs from jump dimension {}",
                    m.dim(),
                    self.jump_dim
                ));
            }
        }
        match (self.exact, self.measure.as_deref()) {
            (None, _) => {}
            (Some(ExactSampler::Brownian), None) if alpha == 2.0 => {}
            (Some(ExactSampler::CompoundPoisson), Some(m)) if m.is_compound_poisson() => {}
            (Some(ExactSampler::StableCms), Some(m))
                if matches!(
                    m.kind(),
                    MeasureKind::TruncatedStable { radius, sides: Sides::Symmetric, .. }
                        if radius.is_infinite()
                ) && m.dim() == 1 => {}
            (Some(tag), _) => {
                return fail(format!("exact sampler {tag:?} does not fit this measure"));
            }
        }
        Ok(())
    }

    /// Whether moderate jumps are compensated, i.e. `α ∈ (1, 2]`.
    pub fn compensated(&self) -> bool {
        self.alpha > 1.0
    }

    /// `λ_σ`, zero without a measure.
    pub fn jump_rate(&self, sigma: f64) -> Result<f64, DriverError> {
        Ok(match &self.measure {
            Some(m) => m.tail_mass(sigma)?,
            None => 0.0,
        })
    }

    /// Everything needed to draw `Z̃` at level `σ` with the given rule.
    pub fn truncation(&self, sigma: f64, rule: RSigmaRule) -> Result<Truncation, DriverError> {
        let mut compensator = vec![0.0; self.jump_dim];
        let mut sampler = None;
        if let Some(m) = &self.measure {
            if self.compensated() {
                compensator = m.compensator_drift(sigma)?;
            }
            if m.tail_mass(sigma)? > 0.0 {
                sampler = Some(m.sampler_above(sigma)?);
            }
        }
        Ok(Truncation {
            sigma,
            sampler,
            compensator,
            rule,
        })
    }

    /// Compensation `E[υ 1{|υ|≤1}] Λ` of an exact compound Poisson driver.
    pub fn exact_compensator(&self) -> Result<Vec<f64>, DriverError> {
        match &self.measure {
            Some(m) if self.compensated() => Ok(m.compensator_drift(f64::MIN_POSITIVE)?),
            _ => Ok(vec![0.0; self.jump_dim]),
        }
    }
}

/// A truncation level with its prepared sampler, compensator and substitute.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub sigma: f64,
    /// `None` when `λ_σ = 0`.
    pub sampler: Option<JumpSampler>,
    /// `γ(σ)` when moderate jumps are compensated, zero otherwise.
    pub compensator: Vec<f64>,
    pub rule: RSigmaRule,
}

impl Truncation {
    pub fn rate(&self) -> f64 {
        self.sampler.as_ref().map_or(0.0, JumpSampler::rate)
    }
}

/// Jumps of `Z^σ` on `[start, end]` with the linear compensator.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSegment {
    pub start: f64,
    pub end: f64,
    pub times: Vec<f64>,
    pub sizes: Vec<Vec<f64>>,
    pub compensator_rate: Vec<f64>,
}

impl JumpSegment {
    /// `Z^σ_v − Z^σ_u` for `start ≤ u ≤ v ≤ end`: jumps in `(u, v]` minus the compensator.
    pub fn increment(&self, u: f64, v: f64) -> Vec<f64> {
        let mut out: Vec<f64> = vec![0.0; self.compensator_rate.len()];
        let first = self.times.partition_point(|&t| t <= u);
        for (t, size) in self.times[first..].iter().zip(&self.sizes[first..]) {
            if *t > v {
                break;
            }
            for (o, x) in out.iter_mut().zip(size) {
                *o += x;
            }
        }
        if v > u {
            for (o, c) in out.iter_mut().zip(&self.compensator_rate) {
                *o -= c * (v - u);
            }
        }
        out
    }
}

/// Jump times of a rate-`rate` Poisson process on `(0, len]` by exponential
/// spacings, each followed by one size draw.
pub(crate) fn poisson_jumps<R, F>(
    rate: f64,
    len: f64,
    rng: &mut R,
    mut draw: F,
) -> Result<Vec<f64>, DriverError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<(), DriverError>,
{
    let mut times = Vec::new();
    if !(rate > 0.0) || !(len > 0.0) {
        return Ok(times);
    }
    let mut offset = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        offset += e / rate;
        if offset > len {
            return Ok(times);
        }
        times.push(offset);
        draw(rng)?;
    }
}

/// Independent `N(0, dt)` components; exact zeros when `dt = 0`.
pub fn wiener_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64, n: usize) -> Vec<f64> {
    if dt == 0.0 {
        return vec![0.0; n];
    }
    let s = dt.sqrt();
    (0..n)
        .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn segment_from(
    trunc: &Truncation,
    start: f64,
    end: f64,
    rng: &mut (impl Rng + ?Sized),
) -> Result<JumpSegment, DriverError> {
    let m = trunc.compensator.len();
    let mut sizes = Vec::new();
    let offsets = match &trunc.sampler {
        Some(sampler) => poisson_jumps(sampler.rate(), end - start, rng, |r| {
            let mut out = vec![0.0; m];
            sampler.sample(r, &mut out)?;
            sizes.push(out);
            Ok(())
        })?,
        None => Vec::new(),
    };
    Ok(JumpSegment {
        start,
        end,
        times: offsets.into_iter().map(|o| start + o).collect(),
        sizes,
        compensator_rate: trunc.compensator.clone(),
    })
}

/// Jumps of `Z^σ` on `[s, t]`.
pub fn z_sigma_segment<R: Rng + ?Sized>(
    spec: &DriverSpec,
    sigma: f64,
    s: f64,
    t: f64,
    rng: &mut R,
) -> Result<JumpSegment, DriverError> {
    let trunc = spec.truncation(sigma, RSigmaRule::zero(spec.jump_dim))?;
    segment_from(&trunc, s, t, rng)
}

/// Increment of `R^σ` over a time step `dt`.
pub fn r_sigma_increment<R: Rng + ?Sized>(rule: &RSigmaRule, dt: f64, rng: &mut R) -> Vec<f64> {
    let m = rule.drift_vector.len();
    match rule.case {
        RuleCase::Zero => vec![0.0; m],
        RuleCase::Drift => rule.drift_vector.iter().map(|x| x * dt).collect(),
        RuleCase::Gaussian => {
            let w = DVector::from_vec(wiener_increment(rng, dt, m));
            (&rule.b_sigma * w).iter().copied().collect()
        }
    }
}

/// Exact increment of `Z` over a step `dt`.
pub fn z_exact_increment<R: Rng + ?Sized>(
    spec: &DriverSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DriverError> {
    let m = spec.jump_dim;
    if dt == 0.0 {
        return Ok(vec![0.0; m]);
    }
    match spec.exact {
        None => Err(DriverError::NoExactSampler),
        Some(ExactSampler::Brownian) => Ok(wiener_increment(rng, dt, m)),
        Some(ExactSampler::CompoundPoisson) => {
            let measure = spec.measure.as_deref().expect("validated");
            let (rate, law) = match measure.kind() {
                MeasureKind::CompoundPoisson { rate, law } => (*rate, law),
                _ => unreachable!("validated compound Poisson"),
            };
            let mut out = vec![0.0; m];
            let mut size = vec![0.0; m];
            poisson_jumps(rate, dt, rng, |r| {
                sample_law(law, r, &mut size);
                for (o, x) in out.iter_mut().zip(&size) {
                    *o += x;
                }
                Ok(())
            })?;
            for (o, c) in out.iter_mut().zip(spec.exact_compensator()?) {
                *o -= c * dt;
            }
            Ok(out)
        }
        Some(ExactSampler::StableCms) => {
            let (index, scale) = stable_parameters(spec).expect("validated");
            let s = stable_cms_scale(index, scale);
            Ok(vec![s * dt.powf(1.0 / index) * stable_cms(index, rng)])
        }
    }
}

pub(crate) fn stable_parameters(spec: &DriverSpec) -> Option<(f64, f64)> {
    match spec.measure.as_deref()?.kind() {
        MeasureKind::TruncatedStable { index, scale, .. } => Some((*index, *scale)),
        _ => None,
    }
}

/// Increment of `Z̃ = Z^σ + R^σ` over `[s, t]`: the jump part is drawn
/// first, then the substitute from the same stream.
pub fn z_tilde_increment<R: Rng + ?Sized>(
    spec: &DriverSpec,
    sigma: f64,
    rule: &RSigmaRule,
    s: f64,
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DriverError> {
    let trunc = spec.truncation(sigma, rule.clone())?;
    let mut out = segment_from(&trunc, s, t, rng)?.increment(s, t);
    if !rule.is_null() {
        for (o, r) in out.iter_mut().zip(r_sigma_increment(rule, t - s, rng)) {
            *o += r;
        }
    }
    Ok(out)
}
