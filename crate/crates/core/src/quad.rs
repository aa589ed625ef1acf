//! Adaptive Gauss–Kronrod quadrature.
//!
//! The Lévy functionals integrate power-law densities that blow up at the
//! origin. Everything radial goes through [`radial`], which maps `r = e^s`
//! so that `r^q dr` becomes the smooth `e^{(q+1)s} ds`, and integrates the
//! unbounded end in geometrically growing chunks until the contributions
//! die out. A chunk sequence that never dies out is reported as divergent.

use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Largest |s| reached by the log-substituted chunking; `e^{±700}` stays finite.
const LOG_SPAN_LIMIT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error(
        "quadrature did not converge on [{a}, {b}]: achieved error {achieved:.3e}, \
         requested {requested:.3e} after {subdivisions} subdivisions"
    )]
    NoConvergence {
        a: f64,
        b: f64,
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },
    #[error("integral diverges toward {toward}: last chunk contributed {last_chunk:.3e}")]
    Divergent {
        toward: &'static str,
        last_chunk: f64,
    },
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_subdivisions: 2000,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod evaluation with the embedded 7-point Gauss error.
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Result<Estimate, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { at: center });
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite { at: x2 });
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok(Estimate { value, error })
}

struct Interval {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive bisection on `[a, b]`, always splitting the interval
/// with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<Estimate, QuadError> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = gk15(f, a, b)?;
    let mut heap = BinaryHeap::new();
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(Interval { a, b, est: first });
    let mut subdivisions = 0;
    loop {
        let requested = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= requested {
            return Ok(Estimate {
                value: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap always holds the current partition");
        let mid = 0.5 * (worst.a + worst.b);
        if subdivisions >= cfg.max_subdivisions || mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            return Err(QuadError::NoConvergence {
                a,
                b,
                achieved: total_err,
                requested,
                subdivisions,
            });
        }
        let left = gk15(f, worst.a, mid)?;
        let right = gk15(f, mid, worst.b)?;
        total += left.value + right.value - worst.est.value;
        total_err += left.error + right.error - worst.est.error;
        heap.push(Interval {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Interval {
            a: mid,
            b: worst.b,
            est: right,
        });
        subdivisions += 1;
    }
}

/// `∫_lo^hi f(r) dr` for `0 <= lo < hi <= ∞`, using the substitution `r = e^s`.
///
/// An endpoint at zero or infinity is approached by chunks of doubling width
/// in `s`; the integral stops once two consecutive chunks are negligible
/// relative to the running total.
pub fn radial<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    lo: f64,
    hi: f64,
    cfg: &QuadConfig,
) -> Result<Estimate, QuadError> {
    assert!(
        lo >= 0.0 && hi >= lo,
        "radial bounds must satisfy 0 <= lo <= hi"
    );
    if lo == hi {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let g = |s: f64| {
        let r = s.exp();
        f(r) * r
    };
    match (lo == 0.0, hi.is_infinite()) {
        (false, false) => integrate(&g, lo.ln(), hi.ln(), cfg),
        (true, false) => chunked(&g, hi.ln(), -1.0, cfg, "zero"),
        (false, true) => chunked(&g, lo.ln(), 1.0, cfg, "infinity"),
        (true, true) => {
            let left = chunked(&g, 0.0, -1.0, cfg, "zero")?;
            let right = chunked(&g, 0.0, 1.0, cfg, "infinity")?;
            Ok(Estimate {
                value: left.value + right.value,
                error: left.error + right.error,
            })
        }
    }
}

/// Chunk width in `s` once the initial doubling phase is over.
const CHUNK_WIDTH: f64 = 8.0;

fn chunked<F: Fn(f64) -> f64 + ?Sized>(
    g: &F,
    start: f64,
    direction: f64,
    cfg: &QuadConfig,
    toward: &'static str,
) -> Result<Estimate, QuadError> {
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut width = 1.0;
    let mut offset = 0.0;
    let mut quiet = 0;
    let mut last = 0.0;
    // Consecutive equal-width chunks of a power-law tail shrink by a fixed
    // ratio; once that ratio is stable the remaining tail is geometric.
    let mut previous: Option<f64> = None;
    let mut ratio: Option<f64> = None;
    let mut stable = 0;
    while offset < LOG_SPAN_LIMIT {
        let next = (offset + width).min(LOG_SPAN_LIMIT);
        let (a, b) = if direction > 0.0 {
            (start + offset, start + next)
        } else {
            (start - next, start - offset)
        };
        let piece = integrate(g, a, b, cfg)?;
        total += piece.value;
        total_err += piece.error;
        last = piece.value;
        if piece.value.abs() <= cfg.rel_tol * 1e-2 * total.abs() || piece.value == 0.0 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(Estimate {
                    value: total,
                    error: total_err,
                });
            }
        } else {
            quiet = 0;
        }
        if width == CHUNK_WIDTH && next - offset == CHUNK_WIDTH {
            if let Some(prev) = previous.filter(|p| *p != 0.0) {
                let q = piece.value / prev;
                match ratio {
                    Some(r) if (q - r).abs() <= 1e-6 * q.abs() => stable += 1,
                    _ => stable = 0,
                }
                ratio = Some(q);
                if stable >= 2 {
                    if q >= 1.0 - 1e-9 {
                        break;
                    }
                    if q > 0.0 {
                        let tail = piece.value * q / (1.0 - q);
                        return Ok(Estimate {
                            value: total + tail,
                            error: total_err + 1e-6 * tail.abs(),
                        });
                    }
                }
            }
            previous = Some(piece.value);
        }
        offset = next;
        width = (width * 2.0).min(CHUNK_WIDTH);
    }
    Err(QuadError::Divergent {
        toward,
        last_chunk: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(&|x: f64| 3.0 * x * x, 0.0, 2.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 8.0).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_integrand_converges() {
        let est = integrate(&|x: f64| (10.0 * x).sin(), 0.0, 3.0, &QuadConfig::default()).unwrap();
        let exact = (1.0 - (30.0f64).cos()) / 10.0;
        assert!((est.value - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn power_singularity_at_zero() {
        // ∫_0^1 r^{-0.5} dr = 2
        let est = radial(&|r: f64| r.powf(-0.5), 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 2.0).abs() < 1e-10);
        // ∫_0^0.25 r^{-0.95} dr = 0.25^{0.05} / 0.05
        let est = radial(&|r: f64| r.powf(-0.95), 0.0, 0.25, &QuadConfig::default()).unwrap();
        let exact = 0.25f64.powf(0.05) / 0.05;
        assert!((est.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn heavy_tail_to_infinity() {
        // ∫_1^∞ r^{-2.5} dr = 1/1.5
        let est = radial(
            &|r: f64| r.powf(-2.5),
            1.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap();
        assert!((est.value - 1.0 / 1.5).abs() < 1e-10);
        let est = radial(
            &|r: f64| (-r).exp(),
            0.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn divergence_is_detected() {
        let err = radial(&|r: f64| 1.0 / r, 0.0, 1.0, &QuadConfig::default()).unwrap_err();
        assert!(matches!(err, QuadError::Divergent { toward: "zero", .. }));
        let err = radial(&|r: f64| r.powf(-1.2), 0.0, 1.0, &QuadConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            QuadError::Divergent { .. } | QuadError::NonFinite { .. }
        ));
        let err = radial(
            &|r: f64| r.powf(-0.5),
            1.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            QuadError::Divergent {
                toward: "infinity",
                ..
            }
        ));
    }

    #[test]
    fn subdivision_cap_reports_achieved_tolerance() {
        let cfg = QuadConfig {
            rel_tol: 1e-15,
            abs_tol: 0.0,
            max_subdivisions: 3,
        };
        let err = integrate(&|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &cfg).unwrap_err();
        match err {
            QuadError::NoConvergence {
                achieved,
                subdivisions,
                ..
            } => {
                assert!(achieved > 0.0);
                assert_eq!(subdivisions, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
