//! Euler-type integrators with coefficients frozen at the left end of each
//! cell, on deterministic or jump-adapted partitions.

use thiserror::Error;

use crate::drivers::path::{JumpCursor, NoiseLayout, NoisePath, ZView};
use crate::drivers::{z_sigma_segment, DriverError, DriverSpec, JumpSegment, RSigmaRule};
use crate::models::SdeModel;
use crate::rng::{Lane, StreamRoot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("model and driver do not fit together: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Relative slack on the max-step bound, absorbing rounding in `k·δ`.
pub const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Uniform,
    Custom,
    JumpAdapted,
}

/// `0 = τ_0 < … < τ_n = T` with steps at most `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    kind: PartitionKind,
    delta: f64,
}

impl Partition {
    /// Validates and wraps `times`.
    pub fn new(times: Vec<f64>, kind: PartitionKind, delta: f64) -> Result<Self, SchemeError> {
        let fail = |msg: String| Err(SchemeError::Partition(msg));
        if !(delta > 0.0 && delta.is_finite()) {
            return fail(format!("max step δ = {delta} must be positive and finite"));
        }
        if times.len() < 2 || times[0] != 0.0 {
            return fail("need at least two times starting at 0".into());
        }
        for (i, w) in times.windows(2).enumerate() {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return fail(format!("times not strictly increasing at index {}", i + 1));
            }
            if step > delta * (1.0 + STEP_SLACK) {
                return fail(format!("step {step} at index {i} exceeds δ = {delta}"));
            }
        }
        Ok(Self { times, kind, delta })
    }

    pub fn custom(times: Vec<f64>, delta: f64) -> Result<Self, SchemeError> {
        Self::new(times, PartitionKind::Custom, delta)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn kind(&self) -> PartitionKind {
        self.kind
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated non-empty")
    }
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }
    pub fn step_sum_sq(&self) -> f64 {
        self.times.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }
}

/// Number of equal cells of width at most `delta` covering `[0, horizon]`.
pub fn uniform_cells(horizon: f64, delta: f64) -> usize {
    let r = horizon / delta;
    let k = r.round();
    if (r - k).abs() <= STEP_SLACK * r.max(1.0) {
        (k as usize).max(1)
    } else {
        r.ceil() as usize
    }
}

/// `⌈T/δ⌉` equal cells; the last point is `T` exactly.
pub fn make_uniform_grid(horizon: f64, delta: f64) -> Result<Partition, SchemeError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(SchemeError::Partition(format!(
            "max step δ = {delta} must be positive"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SchemeError::Partition(format!(
            "horizon T = {horizon} must be positive"
        )));
    }
    if delta > horizon {
        return Err(SchemeError::Partition(format!(
            "max step δ = {delta} exceeds the horizon T = {horizon}"
        )));
    }
    let n = uniform_cells(horizon, delta);
    let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    times[n] = horizon;
    Partition::new(times, PartitionKind::Uniform, delta)
}

/// Cells end at the next jump, at `τ_i + δ`, or at `T`, whichever comes
/// first. `jumps` must be increasing; jumps outside `(0, T]` are ignored.
pub fn adapted_times(jumps: impl IntoIterator<Item = f64>, delta: f64, horizon: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut anchor = 0.0;
    let mut k = 1u64;
    let mut jumps = jumps
        .into_iter()
        .filter(|&t| t > 0.0 && t <= horizon)
        .peekable();
    loop {
        let last = *times.last().expect("non-empty");
        if last >= horizon {
            return times;
        }
        let mut tick = anchor + k as f64 * delta;
        if tick >= horizon - STEP_SLACK * delta {
            tick = horizon;
        }
        while jumps.peek().is_some_and(|&t| t <= last) {
            jumps.next();
        }
        match jumps.peek() {
            Some(&t) if t <= tick => {
                times.push(t);
                anchor = t;
                k = 1;
                jumps.next();
            }
            _ => {
                times.push(tick);
                k += 1;
            }
        }
    }
}

/// Result of integrating one path to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub terminal: Vec<f64>,
    pub n_steps: usize,
    pub step_sum_sq: f64,
    pub seed_path: u64,
}

/// Where the scheme's partition comes from.
#[derive(Debug, Clone)]
pub enum Grid {
    Fixed(Partition),
    /// Jump-adapted with max step `delta`, cut at jumps of the view's `Z^σ`.
    JumpAdapted {
        delta: f64,
    },
}

/// Checks that `model` can be driven by `spec`.
pub fn check_compatible(model: &SdeModel, spec: &DriverSpec) -> Result<(), SchemeError> {
    let fail = |msg: String| Err(SchemeError::Incompatible(msg));
    if model.has_jump() && model.m != spec.jump_dim {
        return fail(format!(
            "jump coefficient has {} columns, driver dimension is {}",
            model.m, spec.jump_dim
        ));
    }
    if model.has_diffusion() && !spec.has_wiener {
        return fail("model has a diffusion coefficient but the driver no Wiener part".into());
    }
    if model.has_drift() && !spec.has_drift {
        return fail("model has a drift but the driver excludes one".into());
    }
    if model.alpha != spec.alpha || model.beta != spec.beta {
        return fail(format!(
            "declared orders differ: model (α, β) = ({}, {}), driver ({}, {})",
            model.alpha, model.beta, spec.alpha, spec.beta
        ));
    }
    Ok(())
}

/// Wiener dimension the noise must provide for `model`.
pub fn wiener_dim(model: &SdeModel) -> usize {
    if model.has_diffusion() {
        model.n
    } else {
        0
    }
}

/// Euler recursion over `times` reading noise from `noise`. `observe` sees
/// `(i, τ_i, Y_{τ_i})` for every grid point including both ends.
pub fn euler_on_path(
    model: &SdeModel,
    times: &[f64],
    noise: &mut NoisePath,
    view: &ZView,
    mut observe: impl FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>, SchemeError> {
    let (d, n, m) = (model.d, model.n, model.m);
    let mut y = model.x0.clone();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d * n];
    let mut g = vec![0.0; d * m];
    let mut dw = vec![0.0; n];
    let mut dz = vec![0.0; m];
    let mut cursor = JumpCursor::default();
    observe(0, times[0], &y);
    for (i, w) in times.windows(2).enumerate() {
        let (u, v) = (w[0], w[1]);
        let dt = v - u;
        if model.has_drift() {
            model.drift_at(&y, &mut a);
        }
        if model.has_diffusion() {
            model.diffusion_at(&y, &mut b);
            noise.wiener_increment(u, v, &mut dw);
        }
        if model.has_jump() {
            model.jump_at(&y, &mut g);
            noise.z_increment(view, &mut cursor, u, v, &mut dz)?;
        }
        for r in 0..d {
            let mut step = 0.0;
            if model.has_drift() {
                step += a[r] * dt;
            }
            if model.has_diffusion() {
                step += b[r * n..(r + 1) * n]
                    .iter()
                    .zip(&dw)
                    .map(|(x, z)| x * z)
                    .sum::<f64>();
            }
            if model.has_jump() {
                step += g[r * m..(r + 1) * m]
                    .iter()
                    .zip(&dz)
                    .map(|(x, z)| x * z)
                    .sum::<f64>();
            }
            y[r] += step;
        }
        observe(i + 1, v, &y);
    }
    Ok(y)
}

/// Times of `grid` on the given noise path.
pub fn grid_times(grid: &Grid, noise: &NoisePath, view: &ZView) -> Vec<f64> {
    match grid {
        Grid::Fixed(p) => p.times().to_vec(),
        Grid::JumpAdapted { delta } => adapted_times(
            noise.jump_times_above(view.sigma()),
            *delta,
            noise.horizon(),
        ),
    }
}

/// One path of `model` on `grid` with increments from `view`.
pub fn run_on_path(
    model: &SdeModel,
    grid: &Grid,
    view: &ZView,
    noise: &mut NoisePath,
    seed_path: u64,
) -> Result<SchemeRun, SchemeError> {
    let times = grid_times(grid, noise, view);
    let terminal = euler_on_path(model, &times, noise, view, |_, _, _| {})?;
    Ok(SchemeRun {
        terminal,
        n_steps: times.len() - 1,
        step_sum_sq: times.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum(),
        seed_path,
    })
}

/// Fine-grid cell count serving a set of grids on `[0, horizon]`: the least
/// common multiple of the uniform cell counts, capped at `cap`.
pub fn fine_cells_for(grids: &[&Grid], horizon: f64, cap: usize) -> usize {
    let mut cells = 1usize;
    for grid in grids {
        let k = match grid {
            Grid::Fixed(p) if p.kind() == PartitionKind::Uniform => p.n_steps(),
            Grid::Fixed(_) => continue,
            Grid::JumpAdapted { delta } => uniform_cells(horizon, delta.min(horizon)),
        };
        let l = lcm(cells, k);
        if l > cap {
            return cells.max(k.min(cap));
        }
        cells = l;
    }
    cells
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn single_run(
    model: &SdeModel,
    spec: &DriverSpec,
    grid: Grid,
    view: ZView,
    horizon: f64,
    root: &StreamRoot,
    index: u64,
) -> Result<SchemeRun, SchemeError> {
    check_compatible(model, spec)?;
    let cells = fine_cells_for(&[&grid], horizon, 1 << 20);
    let layout = NoiseLayout::new(spec, wiener_dim(model), horizon, cells, &[&view])?;
    let mut noise = NoisePath::generate(&layout, root, index)?;
    run_on_path(
        model,
        &grid,
        &view,
        &mut noise,
        root.stream_id(index, Lane::Jumps),
    )
}

/// Simple Euler scheme driven by exact increments of `Z` on a deterministic grid.
pub fn simple_euler(
    model: &SdeModel,
    grid: &Partition,
    spec: &DriverSpec,
    root: &StreamRoot,
    index: u64,
) -> Result<SchemeRun, SchemeError> {
    let view = ZView::exact(spec)?;
    single_run(
        model,
        spec,
        Grid::Fixed(grid.clone()),
        view,
        grid.horizon(),
        root,
        index,
    )
}

/// Euler scheme driven by `Z̃ = Z^σ + R^σ`.
pub fn approx_euler(
    model: &SdeModel,
    grid: &Partition,
    spec: &DriverSpec,
    sigma: f64,
    rule: RSigmaRule,
    root: &StreamRoot,
    index: u64,
) -> Result<SchemeRun, SchemeError> {
    let view = ZView::tilde(spec, sigma, rule)?;
    single_run(
        model,
        spec,
        Grid::Fixed(grid.clone()),
        view,
        grid.horizon(),
        root,
        index,
    )
}

/// Euler scheme on the jump-adapted partition of `Z^σ`, driven by `Z̃`.
#[allow(clippy::too_many_arguments)]
pub fn jump_adapted_euler(
    model: &SdeModel,
    spec: &DriverSpec,
    sigma: f64,
    rule: RSigmaRule,
    delta: f64,
    horizon: f64,
    root: &StreamRoot,
    index: u64,
) -> Result<SchemeRun, SchemeError> {
    if !(delta > 0.0) {
        return Err(SchemeError::Partition(format!(
            "max step δ = {delta} must be positive"
        )));
    }
    let view = ZView::tilde(spec, sigma, rule)?;
    single_run(
        model,
        spec,
        Grid::JumpAdapted { delta },
        view,
        horizon,
        root,
        index,
    )
}

/// Jump-adapted partition of `[0, T]` together with the jumps of `Z^σ` that cut it.
pub fn jump_adapted_partition<R: rand::Rng + ?Sized>(
    spec: &DriverSpec,
    sigma: f64,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<(Partition, JumpSegment), SchemeError> {
    if !(delta > 0.0) || !(horizon > 0.0) {
        return Err(SchemeError::Partition(format!(
            "need δ > 0 and T > 0, got δ = {delta}, T = {horizon}"
        )));
    }
    let segment = z_sigma_segment(spec, sigma, 0.0, horizon, rng)?;
    let times = adapted_times(segment.times.iter().copied(), delta, horizon);
    let partition = Partition::new(times, PartitionKind::JumpAdapted, delta)?;
    Ok((partition, segment))
}

#[cfg(test)]
mod tests;
