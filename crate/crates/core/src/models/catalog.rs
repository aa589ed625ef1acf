//! Named test problems: a model, its driver, a horizon and test functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ModelError, SdeModel, TestFunction};
use crate::drivers::{DriverSpec, ExactSampler};
use crate::levy::{JumpLaw, LevyMeasure, MeasureKind, MeasureSpec};

/// Catalog entries in the order they are listed to users.
const NAMES: [&str; 6] = [
    "IDENT-CP",
    "ZERO",
    "JD-SMOOTH",
    "ROUGH-G",
    "PJ-DEGEN",
    "ONE-SIDED",
];

pub fn catalog_names() -> &'static [&'static str] {
    &NAMES
}

/// Parameter changes applied on top of a catalog entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Declared regularity order `β`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// `false` drops the diffusion coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<bool>,
    /// Replaces the driver's Lévy measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
}

/// A fully parameterised test problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub model: SdeModel,
    pub spec: DriverSpec,
    pub horizon: f64,
    pub tests: Vec<TestFunction>,
    pub default_test: String,
    /// Closed-form `E g(X_T)` by test-function name.
    pub oracles: Vec<(String, f64)>,
    /// Outside the convergence theory; no rate is asserted.
    pub experimental: bool,
}

impl Problem {
    pub fn test_function(&self, name: &str) -> Result<&TestFunction, ModelError> {
        self.tests
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| ModelError::UnknownTestFunction {
                name: name.to_string(),
                problem: self.name.clone(),
            })
    }

    pub fn oracle(&self, test: &str) -> Option<f64> {
        self.oracles
            .iter()
            .find(|(n, _)| n == test)
            .map(|(_, v)| *v)
    }

    /// Predicted weak order: `β/α − 1` for test functions at least as smooth
    /// as the model, `ν(1/α − 1/β)` for rougher ones.
    pub fn theory_kappa(&self, g: &TestFunction) -> f64 {
        let (alpha, beta) = (self.model.alpha, self.model.beta);
        if g.nu >= beta {
            beta / alpha - 1.0
        } else {
            g.nu * (1.0 / alpha - 1.0 / beta)
        }
    }
}

/// Resolved parameters an entry is built from.
struct Params {
    x0: f64,
    horizon: f64,
    beta: Option<f64>,
    diffusion: bool,
    measure: Option<LevyMeasure>,
}

impl Params {
    fn resolve(o: &Overrides, default_x0: f64) -> Result<Self, ModelError> {
        let x0 = match &o.x0 {
            None => default_x0,
            Some(v) if v.len() == 1 => v[0],
            Some(v) => {
                return Err(ModelError::Constraint(format!(
                    "catalog problems are one-dimensional, x0 has length {}",
                    v.len()
                )))
            }
        };
        let horizon = o.horizon.unwrap_or(1.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::Constraint(format!(
                "horizon T = {horizon} must be positive"
            )));
        }
        let measure = o.measure.as_ref().map(LevyMeasure::from_spec).transpose()?;
        if let Some(m) = &measure {
            if m.dim() != 1 {
                return Err(ModelError::Constraint(format!(
                    "catalog drivers are one-dimensional, measure has dimension {}",
                    m.dim()
                )));
            }
        }
        Ok(Self {
            x0,
            horizon,
            beta: o.beta,
            diffusion: o.diffusion.unwrap_or(true),
            measure,
        })
    }
}

/// Builds the named problem with `overrides` applied.
pub fn catalog(name: &str, overrides: &Overrides) -> Result<Problem, ModelError> {
    match name {
        "IDENT-CP" => identity_cp(overrides, false),
        "ZERO" => identity_cp(overrides, true),
        "JD-SMOOTH" => jump_diffusion(overrides, "JD-SMOOTH", "cos"),
        "ROUGH-G" => jump_diffusion(overrides, "ROUGH-G", "rough"),
        "PJ-DEGEN" => pure_jump(overrides),
        "ONE-SIDED" => one_sided(overrides),
        _ => Err(ModelError::UnknownProblem {
            name: name.to_string(),
            known: NAMES.join(", "),
        }),
    }
}

/// Standard test functions; smooth ones carry `ν = beta`.
pub fn standard_tests(beta: f64) -> Vec<TestFunction> {
    vec![
        TestFunction::new("identity", beta, |x| x[0])
            .with_gradient(|_, g| g[0] = 1.0)
            .with_hessian(|_, h| h[0] = 0.0),
        TestFunction::new("square", beta, |x| x[0] * x[0])
            .with_gradient(|x, g| g[0] = 2.0 * x[0])
            .with_hessian(|_, h| h[0] = 2.0),
        TestFunction::new("sin", beta, |x| x[0].sin())
            .with_gradient(|x, g| g[0] = x[0].cos())
            .with_hessian(|x, h| h[0] = -x[0].sin()),
        TestFunction::new("cos", beta, |x| x[0].cos())
            .with_gradient(|x, g| g[0] = -x[0].sin())
            .with_hessian(|x, h| h[0] = -x[0].cos()),
        rough_test(),
    ]
}

/// `min(|x − 0.3|, 1)`: Lipschitz, kinked at −0.7, 0.3 and 1.3.
pub fn rough_test() -> TestFunction {
    TestFunction::new("rough", 1.0, |x| (x[0] - 0.3).abs().min(1.0))
        .with_kinks(vec![-0.7, 0.3, 1.3])
}

/// `E[υ]` and `E[υ²]` of a one-dimensional jump law.
fn law_moments(law: &JumpLaw) -> (f64, f64) {
    match law {
        JumpLaw::Discrete { atoms, weights } => {
            let total: f64 = weights.iter().sum();
            atoms
                .iter()
                .zip(weights)
                .fold((0.0, 0.0), |(m1, m2), (a, w)| {
                    (m1 + w * a[0] / total, m2 + w * a[0] * a[0] / total)
                })
        }
        JumpLaw::Uniform { lo, hi } => ((lo + hi) / 2.0, (lo * lo + lo * hi + hi * hi) / 3.0),
    }
}

/// `X_T = x₀ + Z_T` for a compound Poisson `Z` (or `X ≡ x₀` for the zero model).
fn identity_cp(o: &Overrides, zero: bool) -> Result<Problem, ModelError> {
    let p = Params::resolve(o, 0.0)?;
    let measure = match p.measure {
        Some(m) => m,
        None => LevyMeasure::compound_poisson(1.0, JumpLaw::constant(vec![0.2]), 1.0, 2.0, false)?,
    };
    let beta = p.beta.unwrap_or(2.0);
    let exact = measure
        .is_compound_poisson()
        .then_some(ExactSampler::CompoundPoisson);
    let compensated = measure.alpha() > 1.0;
    let cp = match measure.kind() {
        MeasureKind::CompoundPoisson { rate, law } => Some((*rate, law_moments(law))),
        _ => None,
    };
    let (alpha, mu) = (measure.alpha(), measure.mu());
    let spec = DriverSpec::new(Some(Arc::new(measure)), 1, beta, false, false, exact, alpha)?;
    let name = if zero { "ZERO" } else { "IDENT-CP" };
    let mut builder = SdeModel::builder(name, 1, 0, 1)
        .x0(vec![p.x0])
        .orders(alpha, beta, mu);
    if !zero {
        builder = builder.jump(|_, g| g[0] = 1.0);
    }
    let model = builder.build()?;
    let tests = standard_tests(beta);
    let oracles = if zero {
        tests
            .iter()
            .map(|g| (g.name.clone(), g.value(&[p.x0])))
            .collect()
    } else {
        match cp {
            Some((rate, (m1, m2))) if !compensated => {
                let mean = p.x0 + rate * p.horizon * m1;
                let var = rate * p.horizon * m2;
                vec![
                    ("identity".into(), mean),
                    ("square".into(), var + mean * mean),
                ]
            }
            _ => Vec::new(),
        }
    };
    Ok(Problem {
        name: name.into(),
        model,
        spec,
        horizon: p.horizon,
        tests,
        default_test: if zero { "cos" } else { "identity" }.into(),
        oracles,
        experimental: false,
    })
}

/// Symmetric bounded jumps for the jump-diffusion problems.
pub fn jump_diffusion_measure() -> Result<LevyMeasure, ModelError> {
    let law = JumpLaw::Discrete {
        atoms: vec![vec![-0.5], vec![0.5]],
        weights: vec![0.5, 0.5],
    };
    Ok(LevyMeasure::compound_poisson(2.0, law, 2.0, 4.0, true)?)
}

/// `dX = ½ sin X dt + (1 + ½ cos X) dW + (1 + ½ sin X) dZ` with compound Poisson `Z`.
fn jump_diffusion(o: &Overrides, name: &str, default_test: &str) -> Result<Problem, ModelError> {
    let p = Params::resolve(o, 0.0)?;
    let measure = match p.measure {
        Some(m) => m,
        None => jump_diffusion_measure()?,
    };
    let beta = p.beta.unwrap_or(4.0);
    let (alpha, mu) = (measure.alpha(), measure.mu());
    let exact = measure
        .is_compound_poisson()
        .then_some(ExactSampler::CompoundPoisson);
    let spec = DriverSpec::new(
        Some(Arc::new(measure)),
        1,
        beta,
        p.diffusion,
        true,
        exact,
        alpha,
    )?;
    let mut builder = SdeModel::builder(name, 1, usize::from(p.diffusion), 1)
        .x0(vec![p.x0])
        .orders(alpha, beta, mu)
        .drift(|x, a| a[0] = 0.5 * x[0].sin())
        .jump(|x, g| g[0] = 1.0 + 0.5 * x[0].sin());
    if p.diffusion {
        builder = builder.diffusion(|x, b| b[0] = 1.0 + 0.5 * x[0].cos());
    }
    Ok(Problem {
        name: name.into(),
        model: builder.build()?,
        spec,
        horizon: p.horizon,
        tests: standard_tests(beta),
        default_test: default_test.into(),
        oracles: Vec::new(),
        experimental: false,
    })
}

/// Index of the stable-like measure of the pure-jump problem. It sits just
/// below the declared order so that `∫ |υ|^α ∧ 1 dπ` is finite.
pub const PURE_JUMP_INDEX: f64 = 0.45;
pub const PURE_JUMP_SCALE: f64 = 1.0;
/// Off the symmetry point `x = 0`, where the leading error term of odd and
/// even test functions cancels.
pub const PURE_JUMP_X0: f64 = 1.0;

pub fn pure_jump_measure() -> Result<LevyMeasure, ModelError> {
    Ok(LevyMeasure::truncated_stable(
        1,
        PURE_JUMP_INDEX,
        PURE_JUMP_SCALE,
        1.0,
        0.5,
        1.0,
    )?)
}

/// `dX = (1 + ½ cos X) dZ` with a truncated symmetric stable-like `Z`.
fn pure_jump(o: &Overrides) -> Result<Problem, ModelError> {
    let p = Params::resolve(o, PURE_JUMP_X0)?;
    let measure = match p.measure {
        Some(m) => m,
        None => pure_jump_measure()?,
    };
    let beta = p.beta.unwrap_or(1.0);
    let (alpha, mu) = (measure.alpha(), measure.mu());
    let spec = DriverSpec::new(Some(Arc::new(measure)), 1, beta, false, false, None, alpha)?;
    let model = SdeModel::builder("PJ-DEGEN", 1, 0, 1)
        .x0(vec![p.x0])
        .orders(alpha, beta, mu)
        .jump(|x, g| g[0] = 1.0 + 0.5 * x[0].cos())
        .build()?;
    Ok(Problem {
        name: "PJ-DEGEN".into(),
        model,
        spec,
        horizon: p.horizon,
        tests: standard_tests(beta),
        default_test: "sin".into(),
        oracles: Vec::new(),
        experimental: false,
    })
}

/// `dX = (1 + ½ cos X) dZ` with an untruncated symmetric 0.5-stable `Z`,
/// sampled exactly. The stable law has no moment of order `β`, so the
/// order chain cannot hold and the problem is experimental.
fn one_sided(o: &Overrides) -> Result<Problem, ModelError> {
    let p = Params::resolve(o, 0.0)?;
    let measure = match p.measure {
        Some(m) => m,
        None => LevyMeasure::truncated_stable(1, 0.5, 0.1, f64::INFINITY, 0.6, 0.4)?,
    };
    let beta = p.beta.unwrap_or(1.2);
    let (alpha, mu) = (measure.alpha(), measure.mu());
    let stable = matches!(
        measure.kind(),
        MeasureKind::TruncatedStable { radius, .. } if radius.is_infinite()
    );
    let exact = if stable {
        Some(ExactSampler::StableCms)
    } else if measure.is_compound_poisson() {
        Some(ExactSampler::CompoundPoisson)
    } else {
        None
    };
    let spec =
        DriverSpec::experimental(Some(Arc::new(measure)), 1, beta, false, false, exact, alpha)?;
    let model = SdeModel::builder("ONE-SIDED", 1, 0, 1)
        .x0(vec![p.x0])
        .orders(alpha, beta, mu)
        .jump(|x, g| g[0] = 1.0 + 0.5 * x[0].cos())
        .experimental()
        .build()?;
    Ok(Problem {
        name: "ONE-SIDED".into(),
        model,
        spec,
        horizon: p.horizon,
        tests: standard_tests(beta),
        default_test: "cos".into(),
        oracles: Vec::new(),
        experimental: true,
    })
}
