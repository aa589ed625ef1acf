//! Parametric Lévy measures.
//!
//! A [`LevyMeasure`] is one of a closed catalog of kinds. Radial kinds are
//! isotropic in `m` dimensions (or one-sided when `m = 1`), so every
//! functional reduces to a one-dimensional integral against the radial
//! density `ν(r)`, with `π(|υ| ∈ dr) = ν(r) dr`. Compound Poisson measures
//! carry an explicit jump law instead.
//!
//! Each functional has two routes: the closed form in [`closed`] where the
//! kind admits one, and radial quadrature in [`quadrature`]. The public
//! methods prefer the closed form.

pub mod closed;
pub mod quadrature;
pub mod sampler;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{QuadConfig, QuadError};

pub use sampler::{stable_cms, stable_cms_scale, JumpSampler};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("invalid measure parameter: {0}")]
    InvalidParameter(String),
    #[error("order integral ∫(|υ|^{alpha} ∧ 1) dπ is not finite: {detail}")]
    OrderIntegral { alpha: f64, detail: QuadError },
    #[error("tail moment ∫_{{|υ|>1}} |υ|^{mu} dπ is not finite: {detail}")]
    TailMoment { mu: f64, detail: QuadError },
    #[error("measure declared symmetric but ∫_{{σ<|υ|≤1}} υ dπ = {drift:.3e} at σ = {sigma}")]
    NotSymmetric { sigma: f64, drift: f64 },
    #[error(
        "{functional} diverges: ∫_{{|υ|≤σ}} |υ|^{exponent} dπ is infinite for this measure \
         ({condition})"
    )]
    Divergent {
        functional: &'static str,
        exponent: f64,
        condition: String,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("no jump mass above σ = {sigma}")]
    NoMassAbove { sigma: f64 },
    #[error(
        "rejection sampler above σ = {sigma} exceeded {attempts} attempts \
         (expected acceptance rate {acceptance:.3e})"
    )]
    RejectionCap {
        sigma: f64,
        attempts: usize,
        acceptance: f64,
    },
    #[error("covariance eigenvalue {eigenvalue:.3e} is below the clamping threshold")]
    Indefinite { eigenvalue: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Jump-size law of a compound Poisson measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    /// Finitely many atoms (each an `m`-vector) with probabilities.
    Discrete {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Uniform on `[lo, hi]`, one-dimensional.
    Uniform { lo: f64, hi: f64 },
}

impl JumpLaw {
    pub fn constant(value: Vec<f64>) -> Self {
        JumpLaw::Discrete {
            atoms: vec![value],
            weights: vec![1.0],
        }
    }
}

/// Orientation of a radial kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sides {
    /// Isotropic in `m` dimensions (both signs when `m = 1`).
    #[default]
    Symmetric,
    /// Positive jumps only; `m = 1`.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    /// Power law between nodes (linear in log–log coordinates).
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureKind {
    CompoundPoisson {
        rate: f64,
        law: JumpLaw,
    },
    /// Density `c |υ|^{-m-λ}` on `0 < |υ| ≤ r₀`; `r₀ = ∞` gives the plain stable measure.
    TruncatedStable {
        index: f64,
        scale: f64,
        radius: f64,
        #[serde(default)]
        sides: Sides,
    },
    /// Density `c e^{-θ|υ|} |υ|^{-1-λ}` on the line.
    TemperedStable {
        index: f64,
        scale: f64,
        tempering: f64,
    },
    /// Radial density `ν(r)` tabulated on an increasing grid, zero outside it.
    Tabulated {
        radii: Vec<f64>,
        density: Vec<f64>,
        rule: Interpolation,
    },
}

/// Serializable declaration of a measure; [`LevyMeasure::from_spec`] validates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub dim: usize,
    pub alpha: f64,
    pub mu: f64,
    #[serde(default)]
    pub symmetric: bool,
}

/// A validated Lévy measure together with its declared order `α` and tail
/// exponent `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasure {
    kind: MeasureKind,
    dim: usize,
    alpha: f64,
    mu: f64,
    symmetric: bool,
}

/// Truncation-level summary used by the approximate schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationFunctionals {
    pub sigma: f64,
    pub lambda_sigma: f64,
    pub phi: f64,
    pub gamma: Vec<f64>,
    /// `None` when `∫_{|υ|≤σ} |υ| dπ` diverges.
    pub mu_small: Option<Vec<f64>>,
    pub cov_small: DMatrix<f64>,
    pub b_sigma: DMatrix<f64>,
}

/// Symmetric PSD square root with the magnitude of any clamped eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSqrt {
    pub matrix: DMatrix<f64>,
    pub clamped: f64,
}

/// Eigenvalues below `-CLAMP_TOL · max(1, max|λ|)` are an error, not noise.
pub const CLAMP_TOL: f64 = 1e-12;

/// Attempts allowed to a rejection sampler for a single draw.
pub const REJECTION_CAP: usize = 1_000_000;

/// Surface area of the unit sphere in `R^m`.
pub fn sphere_area(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}

impl LevyMeasure {
    pub fn new(
        kind: MeasureKind,
        dim: usize,
        alpha: f64,
        mu: f64,
        symmetric: bool,
    ) -> Result<Self, LevyError> {
        let m = Self {
            kind,
            dim,
            alpha,
            mu,
            symmetric,
        };
        m.validate_parameters()?;
        m.check_integrability()?;
        if symmetric {
            m.check_symmetry()?;
        }
        Ok(m)
    }

    pub fn from_spec(spec: &MeasureSpec) -> Result<Self, LevyError> {
        Self::new(
            spec.kind.clone(),
            spec.dim,
            spec.alpha,
            spec.mu,
            spec.symmetric,
        )
    }

    pub fn to_spec(&self) -> MeasureSpec {
        MeasureSpec {
            kind: self.kind.clone(),
            dim: self.dim,
            alpha: self.alpha,
            mu: self.mu,
            symmetric: self.symmetric,
        }
    }

    /// Isotropic truncated stable measure.
    pub fn truncated_stable(
        dim: usize,
        index: f64,
        scale: f64,
        radius: f64,
        alpha: f64,
        mu: f64,
    ) -> Result<Self, LevyError> {
        Self::new(
            MeasureKind::TruncatedStable {
                index,
                scale,
                radius,
                sides: Sides::Symmetric,
            },
            dim,
            alpha,
            mu,
            true,
        )
    }

    /// One-dimensional density `c υ^{-1-λ}` on `(0, r₀]`.
    pub fn one_sided_stable(
        index: f64,
        scale: f64,
        radius: f64,
        alpha: f64,
        mu: f64,
    ) -> Result<Self, LevyError> {
        Self::new(
            MeasureKind::TruncatedStable {
                index,
                scale,
                radius,
                sides: Sides::Positive,
            },
            1,
            alpha,
            mu,
            false,
        )
    }

    pub fn compound_poisson(
        rate: f64,
        law: JumpLaw,
        alpha: f64,
        mu: f64,
        symmetric: bool,
    ) -> Result<Self, LevyError> {
        let dim = match &law {
            JumpLaw::Discrete { atoms, .. } => atoms.first().map_or(0, Vec::len),
            JumpLaw::Uniform { .. } => 1,
        };
        Self::new(
            MeasureKind::CompoundPoisson { rate, law },
            dim,
            alpha,
            mu,
            symmetric,
        )
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn is_compound_poisson(&self) -> bool {
        matches!(self.kind, MeasureKind::CompoundPoisson { .. })
    }

    /// `sup |υ|` over the support (`∞` for unbounded kinds).
    pub fn support_radius(&self) -> f64 {
        match &self.kind {
            MeasureKind::CompoundPoisson { law, .. } => match law {
                JumpLaw::Discrete { atoms, weights } => atoms
                    .iter()
                    .zip(weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(a, _)| norm(a))
                    .fold(0.0, f64::max),
                JumpLaw::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            },
            MeasureKind::TruncatedStable { radius, .. } => *radius,
            MeasureKind::TemperedStable { .. } => f64::INFINITY,
            MeasureKind::Tabulated { radii, .. } => *radii.last().expect("validated"),
        }
    }

    fn validate_parameters(&self) -> Result<(), LevyError> {
        let bad = |msg: String| Err(LevyError::InvalidParameter(msg));
        if self.dim == 0 {
            return bad("dimension must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return bad(format!("order α = {} outside (0, 2]", self.alpha));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!(
                "tail exponent μ = {} must be finite and ≥ 0",
                self.mu
            ));
        }
        match &self.kind {
            MeasureKind::CompoundPoisson { rate, law } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("compound Poisson rate {rate} must be positive"));
                }
                match law {
                    JumpLaw::Discrete { atoms, weights } => {
                        if atoms.is_empty() || atoms.len() != weights.len() {
                            return bad(
                                "jump law needs matching non-empty atoms and weights".into()
                            );
                        }
                        if atoms
                            .iter()
                            .any(|a| a.len() != self.dim || a.iter().any(|x| !x.is_finite()))
                        {
                            return bad(format!("every atom must be a finite {}-vector", self.dim));
                        }
                        if weights.iter().any(|&w| !(w >= 0.0)) {
                            return bad("jump law weights must be non-negative".into());
                        }
                        let total: f64 = weights.iter().sum();
                        if (total - 1.0).abs() > 1e-12 {
                            return bad(format!("jump law weights sum to {total}, expected 1"));
                        }
                    }
                    JumpLaw::Uniform { lo, hi } => {
                        if self.dim != 1 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                            return bad("uniform jump law needs dim = 1 and finite lo < hi".into());
                        }
                    }
                }
            }
            MeasureKind::TruncatedStable {
                index,
                scale,
                radius,
                sides,
            } => {
                if !(*index > 0.0 && *index < 2.0) {
                    return bad(format!("stability index {index} outside (0, 2)"));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale {scale} must be positive"));
                }
                if !(*radius > 0.0) {
                    return bad(format!("support radius {radius} must be positive"));
                }
                if *sides == Sides::Positive && self.dim != 1 {
                    return bad("one-sided measures are one-dimensional".into());
                }
            }
            MeasureKind::TemperedStable {
                index,
                scale,
                tempering,
            } => {
                if self.dim != 1 {
                    return bad("tempered stable measures are one-dimensional".into());
                }
                if !(*index > 0.0 && *index < 2.0) {
                    return bad(format!("stability index {index} outside (0, 2)"));
                }
                if !(*scale > 0.0 && scale.is_finite())
                    || !(*tempering > 0.0 && tempering.is_finite())
                {
                    return bad("scale and tempering must be positive".into());
                }
            }
            MeasureKind::Tabulated {
                radii,
                density,
                rule,
            } => {
                if radii.len() < 2 || radii.len() != density.len() {
                    return bad("tabulated density needs at least two matching nodes".into());
                }
                if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated radii must be positive and strictly increasing".into());
                }
                if radii.iter().any(|r| !r.is_finite()) {
                    return bad("tabulated radii must be finite".into());
                }
                if density.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
                    return bad("tabulated densities must be finite and non-negative".into());
                }
                if *rule == Interpolation::LogLog && density.iter().any(|&d| d <= 0.0) {
                    return bad("log-log interpolation needs strictly positive densities".into());
                }
            }
        }
        Ok(())
    }

    fn check_integrability(&self) -> Result<(), LevyError> {
        if self.is_compound_poisson() {
            return Ok(());
        }
        let cfg = QuadConfig::default();
        let alpha = self.alpha;
        quadrature::radial_integral(self, 0.0, 1.0, |r| r.powf(alpha), &cfg)
            .and_then(|_| quadrature::radial_integral(self, 1.0, f64::INFINITY, |_| 1.0, &cfg))
            .map_err(|detail| LevyError::OrderIntegral { alpha, detail })?;
        let mu = self.mu;
        quadrature::radial_integral(self, 1.0, f64::INFINITY, |r| r.powf(mu), &cfg)
            .map_err(|detail| LevyError::TailMoment { mu, detail })?;
        Ok(())
    }

    fn check_symmetry(&self) -> Result<(), LevyError> {
        for k in 0..=10 {
            let sigma = 0.5f64.powi(k);
            let drift = self.compensator_drift(sigma)?;
            let scale = self.abs_moment_between(sigma, 1.0)?;
            let size = norm(&drift);
            if size > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(LevyError::NotSymmetric { sigma, drift: size });
            }
        }
        Ok(())
    }

    /// `∫_{lo<|υ|≤hi} |υ| dπ`.
    fn abs_moment_between(&self, lo: f64, hi: f64) -> Result<f64, LevyError> {
        if let Some(v) = closed::moment_between(self, lo, hi, 1.0) {
            return Ok(v);
        }
        Ok(quadrature::moment_between(
            self,
            lo,
            hi,
            1.0,
            &QuadConfig::default(),
        )?)
    }

    /// `λ_σ = π({|υ| > σ})`.
    pub fn tail_mass(&self, sigma: f64) -> Result<f64, LevyError> {
        check_level(sigma)?;
        match closed::tail_mass(self, sigma) {
            Some(v) => Ok(v),
            None => Ok(quadrature::tail_mass(self, sigma, &QuadConfig::default())?),
        }
    }

    /// `∫_{|υ|≤σ} |υ|^p dπ`; `φ(σ)` is `small_moment(σ, β ∧ 3)`.
    pub fn small_moment(&self, sigma: f64, p: f64) -> Result<f64, LevyError> {
        check_level(sigma)?;
        match closed::small_moment(self, sigma, p) {
            Some(v) => v,
            None => quadrature::small_moment(self, sigma, p, &QuadConfig::default()),
        }
    }

    /// `γ(σ) = ∫_{σ<|υ|≤1} υ dπ`; the zero vector for `σ ≥ 1`.
    pub fn compensator_drift(&self, sigma: f64) -> Result<Vec<f64>, LevyError> {
        check_level(sigma)?;
        match closed::compensator_drift(self, sigma) {
            Some(v) => Ok(v),
            None => Ok(quadrature::compensator_drift(
                self,
                sigma,
                &QuadConfig::default(),
            )?),
        }
    }

    /// `∫_{|υ|≤σ} υ dπ`, requiring `∫_{|υ|≤σ} |υ| dπ < ∞`.
    pub fn small_drift(&self, sigma: f64) -> Result<Vec<f64>, LevyError> {
        check_level(sigma)?;
        self.small_moment(sigma, 1.0).map_err(|e| match e {
            LevyError::Divergent { condition, .. } => LevyError::Divergent {
                functional: "small-jump drift",
                exponent: 1.0,
                condition,
            },
            other => other,
        })?;
        match closed::small_drift(self, sigma) {
            Some(v) => Ok(v),
            None => Ok(quadrature::small_drift(
                self,
                sigma,
                &QuadConfig::default(),
            )?),
        }
    }

    /// `∫_{|υ|≤σ} υ υᵀ dπ`.
    pub fn small_cov(&self, sigma: f64) -> Result<DMatrix<f64>, LevyError> {
        check_level(sigma)?;
        match closed::small_cov(self, sigma) {
            Some(v) => Ok(v),
            None => Ok(quadrature::small_cov(self, sigma, &QuadConfig::default())?),
        }
    }

    /// `B^σ`, the symmetric PSD square root of the small-jump covariance.
    pub fn small_cov_sqrt(&self, sigma: f64) -> Result<CovSqrt, LevyError> {
        psd_sqrt(&self.small_cov(sigma)?)
    }

    /// All truncation-level quantities at once, with `φ` taken at `β ∧ 3`.
    pub fn functionals(&self, sigma: f64, beta: f64) -> Result<TruncationFunctionals, LevyError> {
        let cov_small = self.small_cov(sigma)?;
        let b_sigma = psd_sqrt(&cov_small)?.matrix;
        let mu_small = match self.small_drift(sigma) {
            Ok(v) => Some(v),
            Err(LevyError::Divergent { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(TruncationFunctionals {
            sigma,
            lambda_sigma: self.tail_mass(sigma)?,
            phi: self.small_moment(sigma, beta.min(3.0))?,
            gamma: self.compensator_drift(sigma)?,
            mu_small,
            cov_small,
            b_sigma,
        })
    }

    /// Sampler for the normalized restriction of the measure to `{|υ| > σ}`.
    pub fn sampler_above(&self, sigma: f64) -> Result<JumpSampler, LevyError> {
        JumpSampler::new(self, sigma)
    }

    /// One draw from the normalized restriction to `{|υ| > σ}`.
    pub fn sample_jump_above<R: rand::Rng + ?Sized>(
        &self,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>, LevyError> {
        let sampler = self.sampler_above(sigma)?;
        let mut out = vec![0.0; self.dim];
        sampler.sample(rng, &mut out)?;
        Ok(out)
    }

    /// `∫ h(υ) dπ(υ)` for one-dimensional measures and for discrete
    /// compound Poisson measures in any dimension. `breaks` lists interior
    /// points where `h` is not smooth.
    pub fn integrate<H>(&self, h: H, breaks: &[f64], cfg: &QuadConfig) -> Result<f64, LevyError>
    where
        H: Fn(&[f64]) -> f64,
    {
        if let MeasureKind::CompoundPoisson {
            rate,
            law: JumpLaw::Discrete { atoms, weights },
        } = &self.kind
        {
            let total: f64 = atoms.iter().zip(weights).map(|(a, w)| w * h(a)).sum();
            return Ok(rate * total);
        }
        if self.dim != 1 {
            return Err(LevyError::Unsupported(
                "integration of non-radial functions needs a one-dimensional measure".into(),
            ));
        }
        Ok(quadrature::integrate_line(self, |u| h(&[u]), breaks, cfg)?)
    }
}

fn check_level(sigma: f64) -> Result<(), LevyError> {
    if sigma > 0.0 && !sigma.is_nan() {
        Ok(())
    } else {
        Err(LevyError::InvalidParameter(format!(
            "truncation level σ = {sigma} must be positive"
        )))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues in
/// `[-CLAMP_TOL·scale, 0)` are clamped to zero and reported.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<CovSqrt, LevyError> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(CovSqrt {
            matrix: cov.clone(),
            clamped: 0.0,
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut clamped = 0.0f64;
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL * scale {
                return Err(LevyError::Indefinite { eigenvalue: *v });
            }
            clamped = clamped.max(-*v);
            *v = 0.0;
        }
        *v = v.sqrt();
    }
    let q = &eig.eigenvectors;
    let b = q * DMatrix::from_diagonal(&roots) * q.transpose();
    let matrix = (&b + b.transpose()) * 0.5;
    Ok(CovSqrt { matrix, clamped })
}
