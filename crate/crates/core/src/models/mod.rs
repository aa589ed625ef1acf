//! SDE coefficient sets, test functions, the problem catalog and the
//! generator evaluator.
//!
//! Coefficient and test functions must be pure: they are called from many
//! threads and in no particular order.

pub mod catalog;
pub mod generator;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::drivers::DriverError;
use crate::levy::LevyError;

pub use catalog::{catalog, catalog_names, Overrides, Problem};
pub use generator::{
    apply_generator, martingale_check, martingale_defect, DefectEstimate, MartingaleCheck,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model constraint violated: {0}")]
    Constraint(String),
    #[error("unknown catalog problem '{name}'; known problems: {known}")]
    UnknownProblem { name: String, known: String },
    #[error("unknown test function '{name}' for problem {problem}")]
    UnknownTestFunction { name: String, problem: String },
    #[error("finite-difference step underflows at x = {at:?}")]
    StepUnderflow { at: Vec<f64> },
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error("{0}")]
    Scheme(String),
}

/// `f(x, out)` writes a vector or a row-major matrix into `out`.
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type Scalar = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coefficients `a`, `b`, `G` of `dX = a dt + b dW + G dZ` with declared
/// regularity. Missing coefficients are identically zero.
#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    drift: Option<Field>,
    diffusion: Option<Field>,
    jump: Option<Field>,
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub bounded: bool,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("dims", &(self.d, self.n, self.m))
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("jump", &self.jump.is_some())
            .field("x0", &self.x0)
            .field("orders", &(self.alpha, self.beta, self.mu))
            .finish()
    }
}

/// Builder for [`SdeModel`]; constraints are checked in [`ModelBuilder::build`].
pub struct ModelBuilder {
    model: SdeModel,
    check_chain: bool,
}

impl ModelBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.model.drift = Some(Arc::new(f));
        self
    }
    pub fn diffusion(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.model.diffusion = Some(Arc::new(f));
        self
    }
    pub fn jump(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.model.jump = Some(Arc::new(f));
        self
    }
    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.model.x0 = x0;
        self
    }
    pub fn orders(mut self, alpha: f64, beta: f64, mu: f64) -> Self {
        self.model.alpha = alpha;
        self.model.beta = beta;
        self.model.mu = mu;
        self
    }
    pub fn bounded(mut self, bounded: bool) -> Self {
        self.model.bounded = bounded;
        self
    }
    /// Skip the `α < β ≤ μ ≤ 2α` chain (experimental problems only).
    pub fn experimental(mut self) -> Self {
        self.check_chain = false;
        self
    }

    pub fn build(self) -> Result<SdeModel, ModelError> {
        let m = self.model;
        let fail = |msg: String| Err(ModelError::Constraint(msg));
        if m.d == 0 {
            return fail("state dimension must be positive".into());
        }
        if m.x0.len() != m.d || m.x0.iter().any(|x| !x.is_finite()) {
            return fail(format!("x0 must be a finite {}-vector", m.d));
        }
        if !(m.alpha > 0.0 && m.alpha <= 2.0) {
            return fail(format!("order α = {} outside (0, 2]", m.alpha));
        }
        if m.alpha < 1.0 && m.drift.is_some() {
            return fail(format!("a ≡ 0 is required for α = {} < 1", m.alpha));
        }
        if m.alpha < 2.0 && m.diffusion.is_some() {
            return fail(format!("b ≡ 0 is required for α = {} < 2", m.alpha));
        }
        if m.diffusion.is_some() && m.n == 0 {
            return fail("a diffusion coefficient needs n ≥ 1".into());
        }
        if m.jump.is_some() && m.m == 0 {
            return fail("a jump coefficient needs m ≥ 1".into());
        }
        if self.check_chain && !(m.alpha < m.beta && m.beta <= m.mu && m.mu <= 2.0 * m.alpha) {
            return fail(format!(
                "need α < β ≤ μ ≤ 2α, got α = {}, β = {}, μ = {}",
                m.alpha, m.beta, m.mu
            ));
        }
        Ok(m)
    }
}

impl SdeModel {
    pub fn builder(name: &str, d: usize, n: usize, m: usize) -> ModelBuilder {
        ModelBuilder {
            model: SdeModel {
                name: name.to_string(),
                d,
                n,
                m,
                drift: None,
                diffusion: None,
                jump: None,
                x0: vec![0.0; d],
                alpha: 2.0,
                beta: 4.0,
                mu: 4.0,
                bounded: true,
            },
            check_chain: true,
        }
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }
    pub fn has_diffusion(&self) -> bool {
        self.diffusion.is_some()
    }
    pub fn has_jump(&self) -> bool {
        self.jump.is_some()
    }

    /// Same model started elsewhere.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self, ModelError> {
        if x0.len() != self.d {
            return Err(ModelError::Constraint(format!(
                "x0 must have length {}",
                self.d
            )));
        }
        let mut m = self.clone();
        m.x0 = x0;
        Ok(m)
    }

    /// Same model without its diffusion coefficient.
    pub fn without_diffusion(&self) -> Self {
        let mut m = self.clone();
        m.diffusion = None;
        m
    }

    /// `a(x)` into `out` (length `d`); zeros when absent.
    pub fn drift_at(&self, x: &[f64], out: &mut [f64]) {
        eval(&self.drift, x, out);
    }
    /// `b(x)` into `out` (row-major `d × n`).
    pub fn diffusion_at(&self, x: &[f64], out: &mut [f64]) {
        eval(&self.diffusion, x, out);
    }
    /// `G(x)` into `out` (row-major `d × m`).
    pub fn jump_at(&self, x: &[f64], out: &mut [f64]) {
        eval(&self.jump, x, out);
    }
}

fn eval(f: &Option<Field>, x: &[f64], out: &mut [f64]) {
    match f {
        Some(f) => f(x, out),
        None => out.fill(0.0),
    }
}

/// Test function `g` with its declared Hölder exponent `ν`.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub nu: f64,
    value: Scalar,
    gradient: Option<Field>,
    hessian: Option<Field>,
    /// One-dimensional points where `g` is not smooth.
    pub kinks: Vec<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("nu", &self.nu)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

/// Relative central-difference steps, scaled by `|x_i| + 1`.
pub const GRADIENT_STEP: f64 = 1e-5;
pub const HESSIAN_STEP: f64 = 1e-4;

impl TestFunction {
    pub fn new(name: &str, nu: f64, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            nu,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            kinks: Vec::new(),
        }
    }

    pub fn with_gradient(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(f));
        self
    }

    pub fn with_hessian(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(f));
        self
    }

    /// `a·f + b·g`, with derivatives combined from those of `f` and `g`.
    pub fn linear_combination(
        name: &str,
        a: f64,
        f: &TestFunction,
        b: f64,
        g: &TestFunction,
    ) -> Self {
        let (f1, g1) = (f.clone(), g.clone());
        let (f2, g2) = (f.clone(), g.clone());
        let (f3, g3) = (f.clone(), g.clone());
        let mut kinks: Vec<f64> = f.kinks.iter().chain(&g.kinks).copied().collect();
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        let combine =
            move |x: &[f64],
                  out: &mut [f64],
                  first: &dyn Fn(&[f64], &mut [f64]) -> Result<(), ModelError>,
                  second: &dyn Fn(&[f64], &mut [f64]) -> Result<(), ModelError>| {
                let mut other = vec![0.0; out.len()];
                if first(x, out).is_err() || second(x, &mut other).is_err() {
                    out.fill(f64::NAN);
                    return;
                }
                for (o, p) in out.iter_mut().zip(&other) {
                    *o = a * *o + b * p;
                }
            };
        TestFunction::new(name, f.nu.min(g.nu), move |x| {
            a * f1.value(x) + b * g1.value(x)
        })
        .with_gradient(move |x, out| {
            combine(x, out, &|x, o| f2.gradient(x, o), &|x, o| g2.gradient(x, o))
        })
        .with_hessian(move |x, out| {
            combine(x, out, &|x, o| f3.hessian(x, o), &|x, o| g3.hessian(x, o))
        })
        .with_kinks(kinks)
    }

    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    /// Analytic gradient, or central differences.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        if let Some(g) = &self.gradient {
            g(x, out);
            return Ok(());
        }
        let mut y = x.to_vec();
        for i in 0..x.len() {
            let h = step(GRADIENT_STEP, x, i)?;
            y[i] = x[i] + h;
            let up = self.value(&y);
            y[i] = x[i] - h;
            let down = self.value(&y);
            y[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
        Ok(())
    }

    /// Analytic Hessian (row-major `d × d`), or central differences.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        if let Some(h) = &self.hessian {
            h(x, out);
            return Ok(());
        }
        let d = x.len();
        let mut y = x.to_vec();
        let centre = self.value(x);
        for i in 0..d {
            let hi = step(HESSIAN_STEP, x, i)?;
            y[i] = x[i] + hi;
            let up = self.value(&y);
            y[i] = x[i] - hi;
            let down = self.value(&y);
            y[i] = x[i];
            out[i * d + i] = (up - 2.0 * centre + down) / (hi * hi);
            for j in 0..i {
                let hj = step(HESSIAN_STEP, x, j)?;
                let mut corner = |si: f64, sj: f64| {
                    y[i] = x[i] + si * hi;
                    y[j] = x[j] + sj * hj;
                    let v = self.value(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                let mixed = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * hi * hj);
                out[i * d + j] = mixed;
                out[j * d + i] = mixed;
            }
        }
        Ok(())
    }
}

fn step(rel: f64, x: &[f64], i: usize) -> Result<f64, ModelError> {
    let h = rel * (x[i].abs() + 1.0);
    if x[i] + h == x[i] || !h.is_finite() {
        return Err(ModelError::StepUnderflow { at: x.to_vec() });
    }
    Ok(h)
}

#[cfg(test)]
mod tests;
