use std::sync::Arc;

use rand::SeedableRng;

use super::*;
use crate::drivers::{ExactSampler, RuleCase};
use crate::levy::{JumpLaw, LevyMeasure};
use crate::rng::PathRng;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn cp_spec(rate: f64, jump: f64) -> DriverSpec {
    let m = LevyMeasure::compound_poisson(rate, JumpLaw::constant(vec![jump]), 1.0, 2.0, false)
        .unwrap();
    DriverSpec::new(
        Some(Arc::new(m)),
        1,
        2.0,
        false,
        false,
        Some(ExactSampler::CompoundPoisson),
        1.0,
    )
    .unwrap()
}

fn identity_model() -> SdeModel {
    SdeModel::builder("identity", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .jump(|_, g| g[0] = 1.0)
        .build()
        .unwrap()
}

#[test]
fn uniform_grid_examples() {
    let g = make_uniform_grid(1.0, 0.25).unwrap();
    assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    let g = make_uniform_grid(1.0, 0.3).unwrap();
    assert_eq!(g.n_steps(), 4);
    assert!(g
        .times()
        .windows(2)
        .all(|w| (w[1] - w[0] - 0.25).abs() < 1e-15));
    assert_eq!(make_uniform_grid(1.0, 1.0).unwrap().times(), &[0.0, 1.0]);
    assert_eq!(make_uniform_grid(1.0, 0.1).unwrap().n_steps(), 10);
    assert_eq!(
        *make_uniform_grid(3.0, 0.1).unwrap().times().last().unwrap(),
        3.0
    );
    assert!(make_uniform_grid(1.0, 0.0).is_err());
    assert!(make_uniform_grid(1.0, -0.5).is_err());
}

#[test]
fn custom_partition_is_validated() {
    assert!(Partition::custom(vec![0.0, 0.3, 0.5, 1.0], 0.5).is_ok());
    assert!(Partition::custom(vec![0.0, 0.6, 1.0], 0.5).is_err());
    assert!(Partition::custom(vec![0.0, 0.5, 0.5, 1.0], 0.5).is_err());
    assert!(Partition::custom(vec![0.1, 0.5, 1.0], 0.5).is_err());
}

#[test]
fn adapted_times_without_jumps_is_the_delta_grid() {
    let t = adapted_times(std::iter::empty(), 0.1, 1.0);
    assert_eq!(t.len(), 11);
    assert_eq!(*t.last().unwrap(), 1.0);
    let t = adapted_times(std::iter::empty(), 0.3, 1.0);
    assert_eq!(t.len(), 5);
    assert!((t[3] - 0.9).abs() < 1e-15);
    let t = adapted_times([0.25, 0.27, 1.0, 2.0], 0.1, 1.0);
    assert!(t.contains(&0.25) && t.contains(&0.27));
    assert!((t[1] - 0.1).abs() < 1e-15);
    assert_eq!((t[3], t[4]), (0.25, 0.27));
    assert!((t[5] - 0.37).abs() < 1e-15);
    assert_eq!(*t.last().unwrap(), 1.0);
    assert_eq!(t.iter().filter(|&&x| x == 1.0).count(), 1);
}

#[test]
fn zero_model_stays_at_start() {
    let model = SdeModel::builder("zero", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .x0(vec![0.7])
        .build()
        .unwrap();
    let spec = cp_spec(1.0, 0.2);
    let root = StreamRoot::new(3, "zero");
    for delta in [1.0, 0.3, 0.01] {
        let grid = make_uniform_grid(1.0, delta).unwrap();
        for i in 0..20 {
            assert_eq!(
                simple_euler(&model, &grid, &spec, &root, i)
                    .unwrap()
                    .terminal,
                vec![0.7]
            );
        }
    }
}

#[test]
fn constant_drift_is_exact_on_any_grid() {
    let model = SdeModel::builder("drift", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .drift(|_, a| a[0] = 0.7)
        .build()
        .unwrap();
    let m =
        LevyMeasure::compound_poisson(1.0, JumpLaw::constant(vec![0.2]), 1.0, 2.0, false).unwrap();
    let spec = DriverSpec::new(
        Some(Arc::new(m)),
        1,
        2.0,
        false,
        true,
        Some(ExactSampler::CompoundPoisson),
        1.0,
    )
    .unwrap();
    let root = StreamRoot::new(3, "drift");
    for delta in [1.0, 0.25, 0.3, 1e-3] {
        let grid = make_uniform_grid(1.0, delta).unwrap();
        let y = simple_euler(&model, &grid, &spec, &root, 0)
            .unwrap()
            .terminal[0];
        assert!((y - 0.7).abs() < 1e-12, "δ = {delta}: {y}");
    }
}

#[test]
fn identity_scheme_reproduces_the_driver_mean() {
    let spec = cp_spec(1.0, 0.2);
    let model = identity_model();
    let grid = make_uniform_grid(1.0, 0.1).unwrap();
    let root = StreamRoot::new(11, "ident");
    let ys: Vec<f64> = (0..200_000)
        .map(|i| {
            simple_euler(&model, &grid, &spec, &root, i)
                .unwrap()
                .terminal[0]
        })
        .collect();
    let (m, se) = mean_se(&ys);
    assert!((m - 0.2).abs() < 3.0 * se, "mean {m} se {se}");
}

#[test]
fn terminal_values_do_not_depend_on_the_grid_for_constant_coefficients() {
    let spec = cp_spec(3.0, 0.2);
    let model = SdeModel::builder("const", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .jump(|_, g| g[0] = 1.5)
        .build()
        .unwrap();
    let root = StreamRoot::new(5, "freeze");
    for i in 0..200 {
        let a = simple_euler(
            &model,
            &make_uniform_grid(1.0, 0.5).unwrap(),
            &spec,
            &root,
            i,
        )
        .unwrap();
        let b = simple_euler(
            &model,
            &make_uniform_grid(1.0, 1.0).unwrap(),
            &spec,
            &root,
            i,
        )
        .unwrap();
        // dyadic jump sizes make the sums exact
        let c = simple_euler(
            &model,
            &make_uniform_grid(1.0, 0.25).unwrap(),
            &spec,
            &root,
            i,
        )
        .unwrap();
        assert!((a.terminal[0] - b.terminal[0]).abs() < 1e-12);
        assert!((a.terminal[0] - c.terminal[0]).abs() < 1e-12);
    }
}

#[test]
fn dyadic_grids_agree_bitwise_for_constant_coefficients() {
    let m =
        LevyMeasure::compound_poisson(3.0, JumpLaw::constant(vec![0.25]), 1.0, 2.0, false).unwrap();
    let spec = DriverSpec::new(
        Some(Arc::new(m)),
        1,
        2.0,
        false,
        false,
        Some(ExactSampler::CompoundPoisson),
        1.0,
    )
    .unwrap();
    let model = SdeModel::builder("const", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .jump(|_, g| g[0] = 2.0)
        .build()
        .unwrap();
    let root = StreamRoot::new(8, "bitwise");
    for i in 0..200 {
        let a = simple_euler(
            &model,
            &make_uniform_grid(1.0, 0.5).unwrap(),
            &spec,
            &root,
            i,
        )
        .unwrap();
        let b = simple_euler(
            &model,
            &make_uniform_grid(1.0, 0.125).unwrap(),
            &spec,
            &root,
            i,
        )
        .unwrap();
        assert_eq!(a.terminal[0].to_bits(), b.terminal[0].to_bits());
    }
}

#[test]
fn approx_equals_simple_below_all_mass() {
    let spec = cp_spec(2.0, 0.5);
    let model = SdeModel::builder("g", 1, 0, 1)
        .orders(1.0, 2.0, 2.0)
        .jump(|x, g| g[0] = 1.0 + 0.5 * x[0].cos())
        .build()
        .unwrap();
    let grid = make_uniform_grid(1.0, 0.1).unwrap();
    let root = StreamRoot::new(21, "couple");
    for i in 0..300 {
        let a = simple_euler(&model, &grid, &spec, &root, i).unwrap();
        let b = approx_euler(&model, &grid, &spec, 0.1, RSigmaRule::zero(1), &root, i).unwrap();
        assert_eq!(a.terminal[0].to_bits(), b.terminal[0].to_bits());
    }
}

#[test]
fn drift_rule_with_symmetric_measure_is_centered() {
    let m = LevyMeasure::truncated_stable(1, 0.5, 1.0, 1.0, 0.6, 1.2).unwrap();
    let spec = DriverSpec::new(Some(Arc::new(m)), 1, 1.2, false, false, None, 0.6).unwrap();
    let model = SdeModel::builder("id", 1, 0, 1)
        .orders(0.6, 1.2, 1.2)
        .jump(|_, g| g[0] = 1.0)
        .build()
        .unwrap();
    let rule = RSigmaRule::auto(&spec, 0.1).unwrap();
    assert_eq!(rule.case, RuleCase::Drift);
    let grid = make_uniform_grid(1.0, 0.25).unwrap();
    let root = StreamRoot::new(2, "centered");
    let ys: Vec<f64> = (0..50_000)
        .map(|i| {
            approx_euler(&model, &grid, &spec, 0.1, rule.clone(), &root, i)
                .unwrap()
                .terminal[0]
        })
        .collect();
    let (m, se) = mean_se(&ys);
    assert!(m.abs() < 3.0 * se, "mean {m} se {se}");
}

#[test]
fn gaussian_rule_restores_the_full_variance() {
    let measure = LevyMeasure::truncated_stable(1, 1.0, 1.0, 1.0, 1.5, 2.5).unwrap();
    let full = measure.small_moment(1.0, 2.0).unwrap();
    let spec = DriverSpec::new(Some(Arc::new(measure)), 1, 2.5, false, false, None, 1.5).unwrap();
    let rule = RSigmaRule::auto(&spec, 0.25).unwrap();
    assert_eq!(rule.case, RuleCase::Gaussian);
    let model = SdeModel::builder("id", 1, 0, 1)
        .orders(1.5, 2.5, 2.5)
        .jump(|_, g| g[0] = 1.0)
        .build()
        .unwrap();
    let grid = make_uniform_grid(1.0, 1.0).unwrap();
    let root = StreamRoot::new(4, "variance");
    let n = 400_000;
    let ys: Vec<f64> = (0..n)
        .map(|i| {
            approx_euler(&model, &grid, &spec, 0.25, rule.clone(), &root, i)
                .unwrap()
                .terminal[0]
        })
        .collect();
    let (m, _) = mean_se(&ys);
    let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    // sampling error of a variance with kurtosis ≈ 1 + ∫υ⁴dπ/var² is a few 1e-3
    assert!((var / full - 1.0).abs() < 0.01, "var {var} vs {full}");
}

#[test]
fn jump_adapted_identity_is_the_truncated_driver() {
    let measure = LevyMeasure::truncated_stable(1, 0.5, 1.0, 1.0, 0.6, 1.2).unwrap();
    let spec = DriverSpec::new(Some(Arc::new(measure)), 1, 1.2, false, false, None, 0.6).unwrap();
    let model = SdeModel::builder("id", 1, 0, 1)
        .orders(0.6, 1.2, 1.2)
        .jump(|_, g| g[0] = 1.0)
        .build()
        .unwrap();
    let root = StreamRoot::new(6, "adapted");
    let sigma = 0.05;
    let view = ZView::tilde(&spec, sigma, RSigmaRule::zero(1)).unwrap();
    let grid = Grid::JumpAdapted { delta: 0.1 };
    let layout = NoiseLayout::new(&spec, 0, 1.0, 10, &[&view]).unwrap();
    for i in 0..100 {
        let mut noise = NoisePath::generate(&layout, &root, i).unwrap();
        let ZView::Tilde(trunc) = &view else {
            unreachable!()
        };
        let direct = noise.segment(trunc).increment(0.0, 1.0)[0];
        let run = run_on_path(&model, &grid, &view, &mut noise, 0).unwrap();
        assert!((run.terminal[0] - direct).abs() < 1e-12);
        assert!(run.step_sum_sq <= 0.1 * 1.0 + 1e-15);
        let alt = jump_adapted_euler(
            &model,
            &spec,
            sigma,
            RSigmaRule::zero(1),
            0.1,
            1.0,
            &root,
            i,
        )
        .unwrap();
        assert_eq!(alt.terminal, run.terminal);
    }
}

#[test]
fn jump_adapted_wald_identity() {
    let spec = cp_spec(2.0, 1.0);
    let model = identity_model();
    let root = StreamRoot::new(9, "wald");
    let ys: Vec<f64> = (0..200_000)
        .map(|i| {
            jump_adapted_euler(&model, &spec, 0.5, RSigmaRule::zero(1), 1.0, 1.0, &root, i)
                .unwrap()
                .terminal[0]
        })
        .collect();
    let (m, se) = mean_se(&ys);
    assert!((m - 2.0).abs() < 3.0 * se, "mean {m} se {se}");
}

#[test]
fn partition_without_jumps_is_uniform() {
    let spec = cp_spec(2.0, 0.5);
    let mut rng = PathRng::seed_from_u64(1);
    let (p, seg) = jump_adapted_partition(&spec, 1.0, 0.125, 1.0, &mut rng).unwrap();
    assert!(seg.times.is_empty());
    assert_eq!(p.n_steps(), 8);
    assert!(p.times().windows(2).all(|w| w[1] - w[0] == 0.125));
}

#[test]
fn jump_adapted_partition_cuts_at_every_jump() {
    let spec = cp_spec(4.0, 0.5);
    let mut rng = PathRng::seed_from_u64(7);
    for _ in 0..10_000 {
        let (p, seg) = jump_adapted_partition(&spec, 0.1, 0.3, 1.0, &mut rng).unwrap();
        for t in &seg.times {
            assert!(p.times().contains(t));
        }
        assert_eq!(*p.times().last().unwrap(), 1.0);
        assert!(p
            .times()
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 0.3 * (1.0 + 1e-12)));
    }
}

#[test]
fn mismatched_models_are_rejected() {
    let spec = cp_spec(1.0, 0.2);
    let model = SdeModel::builder("wrong", 1, 0, 1)
        .orders(1.0, 1.5, 2.0)
        .jump(|_, g| g[0] = 1.0)
        .build()
        .unwrap();
    let grid = make_uniform_grid(1.0, 0.5).unwrap();
    let err = simple_euler(&model, &grid, &spec, &StreamRoot::new(0, "x"), 0).unwrap_err();
    assert!(matches!(err, SchemeError::Incompatible(_)));
}
