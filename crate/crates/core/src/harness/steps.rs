//! Empirical step-size law of jump-adapted partitions.

use rayon::prelude::*;
use serde::Serialize;

use super::{HarnessError, Welford};
use crate::drivers::DriverSpec;
use crate::rng::{Lane, StreamRoot};
use crate::schemes::jump_adapted_partition;

/// Lower constant of the mean-step sandwich `c (δ′ ∧ λ⁻¹) ≤ E[step] ≤ δ′ ∧ λ⁻¹`.
pub const SANDWICH_LOWER: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    pub sigma: f64,
    pub delta: f64,
    pub horizon: f64,
    pub jump_rate: f64,
    pub n_partitions: usize,
    pub mean_first_step: f64,
    pub se_first_step: f64,
    /// `(1 − e^{−λ δ′}) / λ` with `δ′ = δ ∧ T` (`δ′` when `λ = 0`).
    pub expected_first_step: f64,
    pub z_score: f64,
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    pub sandwich_ok: bool,
    pub mean_steps: f64,
    pub mean_sum_sq: f64,
    pub se_sum_sq: f64,
    /// `E Σ(Δτ)² / (T (δ ∧ λ⁻¹))`.
    pub sum_sq_ratio: f64,
    pub first_step_ok: bool,
    pub pass: bool,
}

/// Smallest number of partitions accepted.
pub const MIN_PARTITIONS: usize = 1000;

/// Draws `n_partitions` jump-adapted partitions and compares the first
/// step with its closed-form mean.
pub fn jump_adapted_step_stats(
    spec: &DriverSpec,
    sigma: f64,
    delta: f64,
    horizon: f64,
    n_partitions: usize,
    root: &StreamRoot,
) -> Result<StepStats, HarnessError> {
    if n_partitions < MIN_PARTITIONS {
        return Err(HarnessError::Precondition(format!(
            "need at least {MIN_PARTITIONS} partitions, got {n_partitions}"
        )));
    }
    let rate = spec.jump_rate(sigma)?;
    let draws: Vec<(f64, f64, usize)> = (0..n_partitions as u64)
        .into_par_iter()
        .map(|i| -> Result<_, HarnessError> {
            let mut rng = root.stream(i, Lane::Jumps);
            let (p, _) = jump_adapted_partition(spec, sigma, delta, horizon, &mut rng)?;
            Ok((p.times()[1], p.step_sum_sq(), p.n_steps()))
        })
        .collect::<Result<_, _>>()?;
    let mut first = Welford::default();
    let mut sum_sq = Welford::default();
    let mut steps = Welford::default();
    for &(f, s, n) in &draws {
        first.push(f);
        sum_sq.push(s);
        steps.push(n as f64);
    }
    let d_eff = delta.min(horizon);
    let expected = if rate > 0.0 {
        -(-rate * d_eff).exp_m1() / rate
    } else {
        d_eff
    };
    let (mean, se) = (first.mean(), first.se());
    let z_score = if se > 0.0 {
        (mean - expected) / se
    } else if (mean - expected).abs() <= 1e-12 * expected {
        0.0
    } else {
        f64::INFINITY
    };
    let upper = if rate > 0.0 {
        d_eff.min(1.0 / rate)
    } else {
        d_eff
    };
    let lower = SANDWICH_LOWER * upper;
    let slack = 3.0 * se + 1e-12 * upper;
    let sandwich_ok = mean >= lower - slack && mean <= upper + slack;
    let scale = if rate > 0.0 {
        delta.min(1.0 / rate)
    } else {
        delta
    };
    let first_step_ok = z_score.abs() <= 3.0;
    Ok(StepStats {
        sigma,
        delta,
        horizon,
        jump_rate: rate,
        n_partitions,
        mean_first_step: mean,
        se_first_step: se,
        expected_first_step: expected,
        z_score,
        sandwich_lower: lower,
        sandwich_upper: upper,
        sandwich_ok,
        mean_steps: steps.mean(),
        mean_sum_sq: sum_sq.mean(),
        se_sum_sq: sum_sq.se(),
        sum_sq_ratio: sum_sq.mean() / (horizon * scale),
        first_step_ok,
        pass: first_step_ok && sandwich_ok,
    })
}
