//! One stored sample of all driving noises on `[0, T]`.
//!
//! Brownian paths live on a fine uniform grid; values at other times are
//! filled in by Brownian bridge sampling and cached, so any number of
//! partitions (coarse, fine, jump-adapted) see the same path. Jumps are
//! drawn once at a base truncation level and filtered by size for coarser
//! levels.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVectorView};
use rand_distr::{Distribution, StandardNormal};

use super::{
    poisson_jumps, stable_parameters, DriverError, DriverSpec, ExactSampler, JumpSegment,
    RSigmaRule, RuleCase, Truncation,
};
use crate::levy::sampler::sample_law;
use crate::levy::{stable_cms, stable_cms_scale, JumpLaw, JumpSampler, MeasureKind};
use crate::rng::{Lane, PathRng, StreamRoot};

/// How a scheme reads increments of `Z` from a [`NoisePath`].
#[derive(Debug, Clone)]
pub enum ZView {
    Exact {
        sampler: ExactSampler,
        compensator: Vec<f64>,
    },
    Tilde(Arc<Truncation>),
}

impl ZView {
    pub fn exact(spec: &DriverSpec) -> Result<Self, DriverError> {
        let sampler = spec.exact.ok_or(DriverError::NoExactSampler)?;
        Ok(ZView::Exact {
            sampler,
            compensator: spec.exact_compensator()?,
        })
    }

    pub fn tilde(spec: &DriverSpec, sigma: f64, rule: RSigmaRule) -> Result<Self, DriverError> {
        Ok(ZView::Tilde(Arc::new(spec.truncation(sigma, rule)?)))
    }

    /// Truncation level of the jump part; zero for exact views.
    pub fn sigma(&self) -> f64 {
        match self {
            ZView::Exact { .. } => 0.0,
            ZView::Tilde(t) => t.sigma,
        }
    }
}

/// Which jumps a [`NoisePath`] stores.
#[derive(Debug, Clone)]
pub enum JumpBase {
    None,
    /// Every jump of a compound Poisson driver.
    All {
        rate: f64,
        law: JumpLaw,
    },
    /// Jumps above the sampler's level.
    Above(JumpSampler),
}

impl JumpBase {
    fn level(&self) -> f64 {
        match self {
            JumpBase::None => f64::INFINITY,
            JumpBase::All { .. } => 0.0,
            JumpBase::Above(s) => s.sigma(),
        }
    }
}

/// What to draw for each path.
#[derive(Debug, Clone)]
pub struct NoiseLayout {
    pub horizon: f64,
    pub fine_cells: usize,
    pub wiener_dim: usize,
    pub jump_dim: usize,
    pub base: JumpBase,
    /// Draw the auxiliary `m`-dimensional Brownian motion `W̃`.
    pub remainder: bool,
    /// Index and scale of untruncated stable increments on the fine grid.
    pub stable: Option<(f64, f64)>,
}

impl NoiseLayout {
    /// Layout able to serve every view in `views`.
    pub fn new(
        spec: &DriverSpec,
        wiener_dim: usize,
        horizon: f64,
        fine_cells: usize,
        views: &[&ZView],
    ) -> Result<Self, DriverError> {
        if !(horizon > 0.0) || fine_cells == 0 {
            return Err(DriverError::Constraint(
                "noise layout needs a positive horizon and at least one fine cell".into(),
            ));
        }
        let mut base = JumpBase::None;
        let mut remainder = false;
        let mut stable = None;
        let cp = spec.measure.as_deref().and_then(|m| match m.kind() {
            MeasureKind::CompoundPoisson { rate, law } => Some((*rate, law.clone())),
            _ => None,
        });
        let mut lowest: Option<&Truncation> = None;
        for view in views {
            match view {
                ZView::Exact { sampler, .. } => match sampler {
                    ExactSampler::Brownian => remainder = true,
                    ExactSampler::CompoundPoisson => {
                        let (rate, law) = cp.clone().expect("validated compound Poisson");
                        base = JumpBase::All { rate, law };
                    }
                    ExactSampler::StableCms => stable = stable_parameters(spec),
                },
                ZView::Tilde(t) => {
                    if t.rule.case == RuleCase::Gaussian {
                        remainder = true;
                    }
                    if t.sampler.is_some() && lowest.is_none_or(|l| t.sigma < l.sigma) {
                        lowest = Some(t);
                    }
                }
            }
        }
        if let Some(t) = lowest {
            if matches!(base, JumpBase::None) {
                base = match &cp {
                    Some((rate, law)) => JumpBase::All {
                        rate: *rate,
                        law: law.clone(),
                    },
                    None => JumpBase::Above(t.sampler.clone().expect("checked above")),
                };
            }
        }
        Ok(Self {
            horizon,
            fine_cells,
            wiener_dim,
            jump_dim: spec.jump_dim,
            base,
            remainder,
            stable,
        })
    }
}

/// A Brownian path on a uniform grid plus bridge-sampled off-grid values.
#[derive(Debug, Clone)]
struct GaussianPath {
    dim: usize,
    cells: usize,
    horizon: f64,
    cumulative: Vec<f64>,
    extra: BTreeMap<u64, Vec<f64>>,
}

enum Slot {
    Grid(usize),
    Off(usize),
}

impl GaussianPath {
    fn draw(dim: usize, cells: usize, horizon: f64, rng: &mut PathRng) -> Self {
        let sd = (horizon / cells as f64).sqrt();
        let mut cumulative = vec![0.0; (cells + 1) * dim];
        for k in 0..cells {
            for j in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                cumulative[(k + 1) * dim + j] = cumulative[k * dim + j] + sd * z;
            }
        }
        Self {
            dim,
            cells,
            horizon,
            cumulative,
            extra: BTreeMap::new(),
        }
    }

    fn grid_time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.cells as f64
    }

    fn slot(&self, t: f64) -> Slot {
        let x = t / self.horizon * self.cells as f64;
        let k = x.round();
        if (x - k).abs() <= 1e-9 * x.max(1.0) {
            Slot::Grid((k as usize).min(self.cells))
        } else {
            Slot::Off((x.floor() as usize).min(self.cells - 1))
        }
    }

    fn grid_value(&self, k: usize) -> &[f64] {
        &self.cumulative[k * self.dim..(k + 1) * self.dim]
    }

    /// Value at `t`, sampling a bridge point on first access.
    fn value(&mut self, t: f64, rng: &mut PathRng, out: &mut [f64]) {
        let cell = match self.slot(t) {
            Slot::Grid(k) => {
                out.copy_from_slice(self.grid_value(k));
                return;
            }
            Slot::Off(cell) => cell,
        };
        let key = t.to_bits();
        if let Some(v) = self.extra.get(&key) {
            out.copy_from_slice(v);
            return;
        }
        let (mut a, mut b) = (self.grid_time(cell), self.grid_time(cell + 1));
        let mut left = self.grid_value(cell).to_vec();
        let mut right = self.grid_value(cell + 1).to_vec();
        // non-negative times: bit order equals numeric order
        if let Some((&k, v)) = self.extra.range(a.to_bits()..key).next_back() {
            a = f64::from_bits(k);
            left.clone_from(v);
        }
        if let Some((&k, v)) = self.extra.range(key + 1..b.to_bits()).next() {
            b = f64::from_bits(k);
            right.clone_from(v);
        }
        let w = (t - a) / (b - a);
        let sd = ((t - a) * (b - t) / (b - a)).max(0.0).sqrt();
        for j in 0..self.dim {
            let z: f64 = StandardNormal.sample(rng);
            out[j] = left[j] + w * (right[j] - left[j]) + sd * z;
        }
        self.extra.insert(key, out.to_vec());
    }

    fn increment(&mut self, u: f64, v: f64, rng: &mut PathRng, out: &mut [f64]) {
        if let (Slot::Grid(i), Slot::Grid(j)) = (self.slot(u), self.slot(v)) {
            for d in 0..self.dim {
                out[d] = self.cumulative[j * self.dim + d] - self.cumulative[i * self.dim + d];
            }
            return;
        }
        let mut start = vec![0.0; self.dim];
        self.value(u, rng, &mut start);
        self.value(v, rng, out);
        for (o, s) in out.iter_mut().zip(&start) {
            *o -= s;
        }
    }
}

/// Position in the stored jump list; schemes move it forward only.
#[derive(Debug, Clone, Copy, Default)]
pub struct JumpCursor {
    pos: usize,
}

/// One sample of every driving noise on `[0, T]`.
#[derive(Debug, Clone)]
pub struct NoisePath {
    horizon: f64,
    jump_dim: usize,
    base_level: f64,
    wiener: Option<GaussianPath>,
    remainder: Option<GaussianPath>,
    stable: Option<Vec<f64>>,
    times: Vec<f64>,
    sizes: Vec<f64>,
    norms: Vec<f64>,
    bridge: PathRng,
}

impl NoisePath {
    pub fn generate(
        layout: &NoiseLayout,
        root: &StreamRoot,
        index: u64,
    ) -> Result<Self, DriverError> {
        let (t, n) = (layout.horizon, layout.fine_cells);
        let wiener = (layout.wiener_dim > 0).then(|| {
            GaussianPath::draw(
                layout.wiener_dim,
                n,
                t,
                &mut root.stream(index, Lane::Wiener),
            )
        });
        let remainder = layout.remainder.then(|| {
            GaussianPath::draw(
                layout.jump_dim,
                n,
                t,
                &mut root.stream(index, Lane::Remainder),
            )
        });
        let stable = layout.stable.map(|(index_, scale)| {
            let mut rng = root.stream(index, Lane::Aux(0));
            let s = stable_cms_scale(index_, scale) * (t / n as f64).powf(1.0 / index_);
            let mut cum = Vec::with_capacity(n + 1);
            cum.push(0.0);
            let mut acc = 0.0;
            for _ in 0..n {
                acc += s * stable_cms(index_, &mut rng);
                cum.push(acc);
            }
            cum
        });
        let m = layout.jump_dim;
        let mut sizes = Vec::new();
        let mut size = vec![0.0; m];
        let mut rng = root.stream(index, Lane::Jumps);
        let times = match &layout.base {
            JumpBase::None => Vec::new(),
            JumpBase::All { rate, law } => poisson_jumps(*rate, t, &mut rng, |r| {
                sample_law(law, r, &mut size);
                sizes.extend_from_slice(&size);
                Ok(())
            })?,
            JumpBase::Above(sampler) => poisson_jumps(sampler.rate(), t, &mut rng, |r| {
                sampler.sample(r, &mut size)?;
                sizes.extend_from_slice(&size);
                Ok(())
            })?,
        };
        let norms = sizes
            .chunks_exact(m.max(1))
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Ok(Self {
            horizon: t,
            jump_dim: m,
            base_level: layout.base.level(),
            wiener,
            remainder,
            stable,
            times,
            sizes,
            norms,
            bridge: root.stream(index, Lane::Bridge),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    /// `W_v − W_u` written into `out`.
    pub fn wiener_increment(&mut self, u: f64, v: f64, out: &mut [f64]) {
        match &mut self.wiener {
            Some(w) => w.increment(u, v, &mut self.bridge, out),
            None => out.fill(0.0),
        }
    }

    /// Times of stored jumps larger than `sigma`, in order.
    pub fn jump_times_above(&self, sigma: f64) -> impl Iterator<Item = f64> + '_ {
        self.times
            .iter()
            .zip(&self.norms)
            .filter(move |(_, &n)| n > sigma)
            .map(|(&t, _)| t)
    }

    /// Stored jumps of `Z^σ` on `[0, T]` as a segment.
    pub fn segment(&self, trunc: &Truncation) -> JumpSegment {
        let m = self.jump_dim;
        let mut times = Vec::new();
        let mut sizes = Vec::new();
        for (k, (&t, &n)) in self.times.iter().zip(&self.norms).enumerate() {
            if n > trunc.sigma {
                times.push(t);
                sizes.push(self.sizes[k * m..(k + 1) * m].to_vec());
            }
        }
        JumpSegment {
            start: 0.0,
            end: self.horizon,
            times,
            sizes,
            compensator_rate: trunc.compensator.clone(),
        }
    }

    /// Sum of stored jumps above `sigma` in `(u, v]`, added to `out`.
    fn add_jumps(&self, cursor: &mut JumpCursor, sigma: f64, u: f64, v: f64, out: &mut [f64]) {
        let m = self.jump_dim;
        while cursor.pos < self.times.len() && self.times[cursor.pos] <= u {
            cursor.pos += 1;
        }
        let mut k = cursor.pos;
        while k < self.times.len() && self.times[k] <= v {
            if self.norms[k] > sigma {
                for (o, x) in out.iter_mut().zip(&self.sizes[k * m..(k + 1) * m]) {
                    *o += x;
                }
            }
            k += 1;
        }
        cursor.pos = k;
    }

    /// `Z_v − Z_u` under `view`, written into `out` (length `m`).
    pub fn z_increment(
        &mut self,
        view: &ZView,
        cursor: &mut JumpCursor,
        u: f64,
        v: f64,
        out: &mut [f64],
    ) -> Result<(), DriverError> {
        out.fill(0.0);
        let dt = v - u;
        match view {
            ZView::Exact {
                sampler,
                compensator,
            } => match sampler {
                ExactSampler::CompoundPoisson => {
                    self.add_jumps(cursor, 0.0, u, v, out);
                    subtract_drift(out, compensator, dt);
                }
                ExactSampler::Brownian => {
                    let w = self.remainder.as_mut().expect("layout draws W̃");
                    w.increment(u, v, &mut self.bridge, out);
                }
                ExactSampler::StableCms => {
                    let cum = self
                        .stable
                        .as_ref()
                        .expect("layout draws stable increments");
                    let cells = cum.len() - 1;
                    let at = |t: f64| {
                        let x = t / self.horizon * cells as f64;
                        let k = x.round();
                        ((x - k).abs() <= 1e-9 * x.max(1.0)).then_some(k as usize)
                    };
                    let i = at(u).ok_or(DriverError::OffGrid { t: u })?;
                    let j = at(v).ok_or(DriverError::OffGrid { t: v })?;
                    out[0] = cum[j] - cum[i];
                }
            },
            ZView::Tilde(trunc) => {
                if trunc.sampler.is_some() {
                    if trunc.sigma < self.base_level {
                        return Err(DriverError::Constraint(format!(
                            "stored jumps start at level {}, view asks for {}",
                            self.base_level, trunc.sigma
                        )));
                    }
                    self.add_jumps(cursor, trunc.sigma, u, v, out);
                }
                subtract_drift(out, &trunc.compensator, dt);
                match trunc.rule.case {
                    RuleCase::Zero => {}
                    RuleCase::Drift => {
                        for (o, d) in out.iter_mut().zip(&trunc.rule.drift_vector) {
                            *o += d * dt;
                        }
                    }
                    RuleCase::Gaussian => {
                        let mut w = vec![0.0; self.jump_dim];
                        let path = self.remainder.as_mut().expect("layout draws W̃");
                        path.increment(u, v, &mut self.bridge, &mut w);
                        add_matrix_product(out, &trunc.rule.b_sigma, &w);
                    }
                }
            }
        }
        Ok(())
    }
}

fn subtract_drift(out: &mut [f64], rate: &[f64], dt: f64) {
    if rate.iter().any(|&c| c != 0.0) {
        for (o, c) in out.iter_mut().zip(rate) {
            *o -= c * dt;
        }
    }
}

fn add_matrix_product(out: &mut [f64], b: &DMatrix<f64>, w: &[f64]) {
    let prod = b * DVectorView::from_slice(w, w.len());
    for (o, p) in out.iter_mut().zip(prod.iter()) {
        *o += p;
    }
}
