//! Weighted log-log regression of errors on step sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Smallest number of usable points.
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    /// Errors at or below this absolute level are excluded.
    #[serde(default)]
    pub noise_floor: f64,
}

fn default_min_points() -> usize {
    3
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_points: default_min_points(),
            noise_floor: 0.0,
        }
    }
}

/// Points must exceed this many standard errors to enter a regression.
pub const SE_MULTIPLE: f64 = 2.0;

/// Result of [`fit_rate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    /// `log C` in `error ≈ C x^slope`.
    pub intercept: f64,
    /// 95% interval; `None` with only two points.
    pub ci: Option<(f64, f64)>,
    /// Which input points entered the regression.
    pub used: Vec<bool>,
    /// Abscissae of excluded points.
    pub excluded: Vec<f64>,
}

/// Weighted least squares of `log error` on `log x` over `(x, error, se)`
/// points. Points with `error ≤ max(2·se, floor)` are excluded. Weights are
/// `(error/se)²`, or uniform when some `se` is zero.
pub fn fit_rate(points: &[(f64, f64, f64)], opts: &FitOptions) -> Result<RateFit, HarnessError> {
    let mut used = Vec::with_capacity(points.len());
    let mut excluded = Vec::new();
    for &(x, err, se) in points {
        let ok = x > 0.0
            && err.is_finite()
            && err > (SE_MULTIPLE * se).max(opts.noise_floor)
            && err > 0.0;
        used.push(ok);
        if !ok {
            excluded.push(x);
        }
    }
    let kept: Vec<(f64, f64, f64)> = points
        .iter()
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|(p, _)| *p)
        .collect();
    let needed = opts.min_points.max(2);
    if kept.len() < needed {
        return Err(HarnessError::Precondition(format!(
            "{} usable point(s) after excluding errors within {SE_MULTIPLE}·SE or the noise floor; need {needed}",
            kept.len()
        )));
    }
    let mut xs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Precondition(
            "abscissae must be distinct".into(),
        ));
    }
    let uniform = kept.iter().any(|p| p.2 <= 0.0);
    let rows: Vec<(f64, f64, f64)> = kept
        .iter()
        .map(|&(x, e, se)| {
            let w = if uniform { 1.0 } else { (e / se).powi(2) };
            (x.ln(), e.ln(), w)
        })
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let xbar = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let ybar = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - xbar).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - xbar) * (r.1 - ybar)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::DegenerateFit(
            "abscissae have no spread".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let n = rows.len();
    let ci = (n > 2).then(|| {
        let rss: f64 = rows
            .iter()
            .map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2))
            .sum();
        let s2 = rss / (n - 2) as f64;
        let half = students_t_quantile(0.975, (n - 2) as f64) * (s2 / sxx).sqrt();
        (slope - half, slope + half)
    });
    Ok(RateFit {
        slope,
        intercept,
        ci,
        used,
        excluded,
    })
}

fn students_t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// One step size of a rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub delta: f64,
    /// Regression abscissa: `δ`, or `δ ∧ λ_σ⁻¹` for jump-adapted schemes.
    pub abscissa: f64,
    pub sigma: Option<f64>,
    pub estimate: f64,
    pub estimate_se: f64,
    pub reference: f64,
    pub error: f64,
    pub se: f64,
    pub mean_steps: f64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Sorted by `δ`.
    pub points: Vec<RatePoint>,
    pub kappa_hat: Option<f64>,
    pub kappa_ci: Option<(f64, f64)>,
    pub intercept: Option<f64>,
    pub theory_kappa: f64,
    pub reference: String,
    pub surrogate_sigma: Option<f64>,
    pub excluded: Vec<f64>,
    /// Every error is within 3 SE of zero: the scheme shows no bias.
    pub exact_scheme: bool,
    pub fit_error: Option<String>,
}

impl RateReport {
    /// Whether the fitted order lies in `[lo, hi]` and every point entered
    /// the regression.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.kappa_hat.is_some_and(|k| (lo..=hi).contains(&k)) && self.points.iter().all(|p| p.used)
    }
}

pub(crate) fn finish_report(
    mut points: Vec<RatePoint>,
    opts: &FitOptions,
    theory_kappa: f64,
    reference: String,
    surrogate_sigma: Option<f64>,
) -> RateReport {
    points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let raw: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.abscissa, p.error, p.se)).collect();
    let exact_scheme = points.iter().all(|p| p.error <= 3.0 * p.se);
    match fit_rate(&raw, opts) {
        Ok(fit) => {
            for (p, u) in points.iter_mut().zip(&fit.used) {
                p.used = *u;
            }
            RateReport {
                points,
                kappa_hat: Some(fit.slope),
                kappa_ci: fit.ci,
                intercept: Some(fit.intercept),
                theory_kappa,
                reference,
                surrogate_sigma,
                excluded: fit.excluded,
                exact_scheme,
                fit_error: None,
            }
        }
        Err(e) => RateReport {
            excluded: points.iter().map(|p| p.abscissa).collect(),
            points,
            kappa_hat: None,
            kappa_ci: None,
            intercept: None,
            theory_kappa,
            reference,
            surrogate_sigma,
            exact_scheme,
            fit_error: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::rng::PathRng;

    #[test]
    fn exact_power_laws() {
        let pts = [(0.1, 0.1, 1e-4), (0.01, 0.01, 1e-5), (0.001, 0.001, 1e-6)];
        let fit = fit_rate(&pts, &FitOptions::default()).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        let (lo, hi) = fit.ci.unwrap();
        assert!((hi - lo).abs() < 1e-9);

        let pts = [
            (0.25, 0.5 * 0.25f64.sqrt(), 0.0),
            (0.0625, 0.5 * 0.0625f64.sqrt(), 0.0),
        ];
        let two = FitOptions {
            min_points: 2,
            ..FitOptions::default()
        };
        let fit = fit_rate(&pts, &two).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit.ci.is_none());
        assert!(fit_rate(&pts, &FitOptions::default()).is_err());
    }

    #[test]
    fn noisy_points_are_excluded() {
        let pts = [
            (0.5, 0.5, 0.01),
            (0.25, 0.25, 0.01),
            (0.125, 0.125, 0.01),
            (0.0625, 0.015, 0.01),
        ];
        let fit = fit_rate(&pts, &FitOptions::default()).unwrap();
        assert_eq!(fit.used, vec![true, true, true, false]);
        assert_eq!(fit.excluded, vec![0.0625]);
        let floored = FitOptions {
            noise_floor: 0.2,
            ..FitOptions::default()
        };
        assert!(fit_rate(&pts, &floored).is_err());
    }

    #[test]
    fn synthetic_noise_recovers_the_slope() {
        let mut rng = PathRng::seed_from_u64(17);
        let deltas: Vec<f64> = (1..=6).map(|k| 0.5f64.powi(k)).collect();
        let trials = 10_000;
        let mut inside = 0;
        for _ in 0..trials {
            let pts: Vec<(f64, f64, f64)> = deltas
                .iter()
                .map(|&d| {
                    let eta: f64 = StandardNormal.sample(&mut rng);
                    (d, d + 0.01 * d * eta, 0.01 * d)
                })
                .collect();
            let k = fit_rate(&pts, &FitOptions::default()).unwrap().slope;
            if (0.9..=1.1).contains(&k) {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * trials as f64, "{inside}");
    }
}
