use std::sync::Arc;

use rand::{Rng, SeedableRng};

use super::*;
use crate::drivers::{DriverSpec, ExactSampler};
use crate::levy::{JumpLaw, LevyMeasure};
use crate::quad::QuadConfig;
use crate::rng::{PathRng, StreamRoot};

fn symmetric_spec(alpha: f64, beta: f64) -> (DriverSpec, f64) {
    let m = LevyMeasure::truncated_stable(1, 1.2, 0.8, 1.0, alpha, 2.0 * alpha).unwrap();
    let m2 = m.small_moment(1.0, 2.0).unwrap();
    let spec = DriverSpec::new(Some(Arc::new(m)), 1, beta, true, true, None, alpha).unwrap();
    (spec, m2)
}

fn constant_model(a0: f64, b0: f64, g0: f64) -> SdeModel {
    SdeModel::builder("const", 1, 1, 1)
        .orders(2.0, 3.0, 4.0)
        .drift(move |_, a| a[0] = a0)
        .diffusion(move |_, b| b[0] = b0)
        .jump(move |_, g| g[0] = g0)
        .build()
        .unwrap()
}

#[test]
fn builder_enforces_order_constraints() {
    let err = SdeModel::builder("x", 1, 0, 1)
        .orders(0.5, 1.0, 1.0)
        .drift(|_, a| a[0] = 1.0)
        .build()
        .unwrap_err();
    assert!(matches!(err, ModelError::Constraint(_)));
    let err = SdeModel::builder("x", 1, 1, 1)
        .orders(1.5, 2.0, 2.5)
        .diffusion(|_, b| b[0] = 1.0)
        .build()
        .unwrap_err();
    assert!(matches!(err, ModelError::Constraint(_)));
    assert!(SdeModel::builder("x", 1, 0, 1)
        .orders(1.0, 1.0, 2.0)
        .build()
        .is_err());
    assert!(SdeModel::builder("x", 1, 0, 1)
        .orders(1.0, 2.0, 2.5)
        .build()
        .is_err());
    assert!(SdeModel::builder("x", 1, 0, 1)
        .orders(1.0, 1.5, 2.0)
        .build()
        .is_ok());
}

#[test]
fn catalog_entries_satisfy_their_declarations() {
    for name in catalog_names() {
        let p = catalog(name, &Overrides::default()).unwrap();
        let (a, b, m) = (p.model.alpha, p.model.beta, p.model.mu);
        if !p.experimental {
            assert!(a < b && b <= m && m <= 2.0 * a, "{name}: ({a}, {b}, {m})");
        }
        assert!(p.model.bounded);
        if a < 1.0 {
            assert!(!p.model.has_drift(), "{name}");
        }
        if a < 2.0 {
            assert!(!p.model.has_diffusion(), "{name}");
        }
        assert!(p.test_function(&p.default_test).is_ok());
        for g in &p.tests {
            for k in -20..=20 {
                assert!(g.value(&[0.25 * k as f64]).is_finite());
            }
        }
    }
    let jd = catalog("JD-SMOOTH", &Overrides::default()).unwrap();
    assert_eq!(
        (jd.model.alpha, jd.model.beta, jd.model.mu),
        (2.0, 4.0, 4.0)
    );
    let pj = catalog("PJ-DEGEN", &Overrides::default()).unwrap();
    assert_eq!(
        (pj.model.alpha, pj.model.beta, pj.model.mu),
        (0.5, 1.0, 1.0)
    );
    assert!(!pj.model.has_drift() && !pj.model.has_diffusion());
    assert!(matches!(
        catalog("NOPE", &Overrides::default()),
        Err(ModelError::UnknownProblem { .. })
    ));
}

#[test]
fn catalog_theory_orders() {
    let jd = catalog("JD-SMOOTH", &Overrides::default()).unwrap();
    assert_eq!(jd.theory_kappa(jd.test_function("cos").unwrap()), 1.0);
    let rough = catalog("ROUGH-G", &Overrides::default()).unwrap();
    assert_eq!(
        rough.theory_kappa(rough.test_function("rough").unwrap()),
        0.25
    );
    let pj = catalog("PJ-DEGEN", &Overrides::default()).unwrap();
    assert_eq!(pj.theory_kappa(pj.test_function("cos").unwrap()), 1.0);
}

#[test]
fn identity_oracles() {
    let p = catalog("IDENT-CP", &Overrides::default()).unwrap();
    assert!((p.oracle("identity").unwrap() - 0.2).abs() < 1e-15);
    assert!((p.oracle("square").unwrap() - 0.08).abs() < 1e-15);
    let o = Overrides {
        x0: Some(vec![1.0]),
        horizon: Some(2.0),
        ..Overrides::default()
    };
    let p = catalog("IDENT-CP", &o).unwrap();
    assert!((p.oracle("identity").unwrap() - 1.4).abs() < 1e-15);
    assert!((p.oracle("square").unwrap() - (1.4 * 1.4 + 0.08)).abs() < 1e-12);
}

#[test]
fn overrides_replace_the_measure() {
    let o = Overrides {
        measure: Some(
            LevyMeasure::compound_poisson(3.0, JumpLaw::constant(vec![0.5]), 1.0, 2.0, false)
                .unwrap()
                .to_spec(),
        ),
        ..Overrides::default()
    };
    let p = catalog("IDENT-CP", &o).unwrap();
    assert!((p.oracle("identity").unwrap() - 1.5).abs() < 1e-15);
    let no_diffusion = Overrides {
        diffusion: Some(false),
        ..Overrides::default()
    };
    let p = catalog("JD-SMOOTH", &no_diffusion).unwrap();
    assert!(!p.model.has_diffusion());
}

#[test]
fn overrides_round_trip_through_json() {
    let o = Overrides {
        x0: Some(vec![0.5]),
        beta: Some(3.5),
        measure: Some(
            crate::models::catalog::pure_jump_measure()
                .unwrap()
                .to_spec(),
        ),
        ..Overrides::default()
    };
    let text = serde_json::to_string(&o).unwrap();
    assert_eq!(serde_json::from_str::<Overrides>(&text).unwrap(), o);
    assert!(serde_json::from_str::<Overrides>(r#"{"x_0": [1.0]}"#).is_err());
}

#[test]
fn generator_of_constants_vanishes() {
    let cfg = QuadConfig::default();
    let c = TestFunction::new("c", 4.0, |_| 3.0);
    for name in catalog_names() {
        let p = catalog(name, &Overrides::default()).unwrap();
        for x in [-1.0, 0.0, 0.4, 2.0] {
            let lv = apply_generator(&p.model, &p.spec, &c, &[x], &cfg).unwrap();
            assert_eq!(lv, 0.0, "{name} at {x}");
        }
    }
}

#[test]
fn generator_of_identity_is_the_drift() {
    let (spec, _) = symmetric_spec(2.0, 3.0);
    let model = SdeModel::builder("m", 1, 1, 1)
        .orders(2.0, 3.0, 4.0)
        .drift(|x, a| a[0] = 0.5 * x[0].sin())
        .diffusion(|_, b| b[0] = 1.0)
        .jump(|_, g| g[0] = 0.7)
        .build()
        .unwrap();
    let id = catalog::standard_tests(3.0).remove(0);
    let cfg = QuadConfig::default();
    for x in [-1.3, 0.0, 0.8] {
        let lv = apply_generator(&model, &spec, &id, &[x], &cfg).unwrap();
        assert!((lv - 0.5 * f64::sin(x)).abs() < 1e-10, "{lv}");
    }
}

#[test]
fn generator_of_square_matches_the_expansion() {
    let (spec, m2) = symmetric_spec(2.0, 3.0);
    let (a0, b0, g0) = (0.3, 0.9, 1.4);
    let model = constant_model(a0, b0, g0);
    let sq = catalog::standard_tests(3.0).remove(1);
    let cfg = QuadConfig::default();
    for x in [-2.0, 0.0, 0.5, 3.0] {
        let lv = apply_generator(&model, &spec, &sq, &[x], &cfg).unwrap();
        let expected = 2.0 * a0 * x + b0 * b0 + g0 * g0 * m2;
        assert!(
            (lv - expected).abs() < 1e-8 * expected.abs().max(1.0),
            "{lv} vs {expected}"
        );
    }
}

#[test]
fn generator_is_linear() {
    let p = catalog("JD-SMOOTH", &Overrides::default()).unwrap();
    let pj = catalog("PJ-DEGEN", &Overrides::default()).unwrap();
    let tests = catalog::standard_tests(4.0);
    let (sin, cos) = (tests[2].clone(), tests[3].clone());
    let (c1, c2) = (1.7, -0.6);
    let combo = {
        let (s, c) = (sin.clone(), cos.clone());
        TestFunction::new("combo", 4.0, move |x| c1 * s.value(x) + c2 * c.value(x))
    };
    let cfg = QuadConfig::default();
    let mut rng = PathRng::seed_from_u64(42);
    for problem in [&p, &pj] {
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0)];
            let l1 = apply_generator(&problem.model, &problem.spec, &sin, &x, &cfg).unwrap();
            let l2 = apply_generator(&problem.model, &problem.spec, &cos, &x, &cfg).unwrap();
            let l = apply_generator(&problem.model, &problem.spec, &combo, &x, &cfg).unwrap();
            let expected = c1 * l1 + c2 * l2;
            // `combo` uses finite differences
            assert!(
                (l - expected).abs() < 1e-5 * (1.0 + expected.abs()),
                "{l} vs {expected}"
            );
        }
    }
}

#[test]
fn finite_difference_hessian_of_square() {
    let plain = TestFunction::new("sq", 4.0, |x| x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] * x[1]);
    let mut h = [0.0; 4];
    for x in [[0.0, 0.0], [1.5, -2.0], [10.0, 3.0]] {
        plain.hessian(&x, &mut h).unwrap();
        let expected = [2.0, 3.0, 3.0, -2.0];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{h:?}");
        }
        let mut g = [0.0; 2];
        plain.gradient(&x, &mut g).unwrap();
        assert!((g[0] - (2.0 * x[0] + 3.0 * x[1])).abs() < 1e-6);
        assert!((g[1] - (3.0 * x[0] - 2.0 * x[1])).abs() < 1e-6);
    }
}

#[test]
fn martingale_defect_trivial_cases() {
    let cfg = QuadConfig::default();
    let root = StreamRoot::new(1, "defect");
    let zero = catalog("ZERO", &Overrides::default()).unwrap();
    let cos = zero.test_function("cos").unwrap();
    let d = martingale_defect(&zero.model, &zero.spec, cos, 1.0, 200, 0.01, &root, &cfg).unwrap();
    assert_eq!((d.defect, d.se), (0.0, 0.0));
    let jd = catalog("JD-SMOOTH", &Overrides::default()).unwrap();
    let c = TestFunction::new("c", 4.0, |_| 2.0);
    let d = martingale_defect(&jd.model, &jd.spec, &c, 1.0, 200, 0.01, &root, &cfg).unwrap();
    assert_eq!((d.defect, d.se), (0.0, 0.0));
}

#[test]
fn martingale_defect_of_the_identity_problem() {
    let cfg = QuadConfig::default();
    let root = StreamRoot::new(7, "defect-ident");
    let p = catalog("IDENT-CP", &Overrides::default()).unwrap();
    let id = p.test_function("identity").unwrap();
    for t in [0.25, 0.5, 1.0] {
        let d =
            martingale_defect(&p.model, &p.spec, id, t, 20_000, 1.0 / 64.0, &root, &cfg).unwrap();
        assert!(d.defect.abs() <= 3.0 * d.se, "t = {t}: {d:?}");
    }
}

#[test]
fn exact_sampler_for_one_sided_is_stable() {
    let p = catalog("ONE-SIDED", &Overrides::default()).unwrap();
    assert_eq!(p.spec.exact, Some(ExactSampler::StableCms));
    assert!(p.experimental);
}
