use std::sync::Arc;

use levy_euler::drivers::{DriverSpec, ExactSampler};
use levy_euler::harness::*;
use levy_euler::levy::{JumpLaw, LevyMeasure};
use levy_euler::models::{catalog, Overrides, Problem};
use levy_euler::rng::StreamRoot;

fn problem(name: &str) -> Problem {
    catalog(name, &Overrides::default()).unwrap()
}

fn rate_four_spec() -> DriverSpec {
    let m =
        LevyMeasure::compound_poisson(4.0, JumpLaw::constant(vec![1.0]), 1.0, 2.0, false).unwrap();
    DriverSpec::new(
        Some(Arc::new(m)),
        1,
        1.5,
        false,
        false,
        Some(ExactSampler::CompoundPoisson),
        1.0,
    )
    .unwrap()
}

#[test]
fn identity_problem_matches_its_oracles() {
    let p = problem("IDENT-CP");
    for (test, want) in [("identity", 0.2), ("square", 0.08)] {
        let g = p.test_function(test).unwrap();
        for delta in [0.5, 0.125, 1.0 / 32.0] {
            let est = estimate_weak_value(
                &p,
                &Method::simple(delta),
                g,
                20_000,
                &StreamRoot::new(3, "id"),
                None,
            )
            .unwrap();
            assert!(
                (est.value - want).abs() <= 3.0 * est.se,
                "{test} δ={delta}: {est:?}"
            );
        }
    }
}

#[test]
fn zero_model_has_no_error_and_no_variance() {
    let p = problem("ZERO");
    let g = p.test_function("cos").unwrap();
    let est = estimate_weak_value(
        &p,
        &Method::simple(0.25),
        g,
        500,
        &StreamRoot::new(5, "z"),
        None,
    )
    .unwrap();
    assert_eq!(est.se, 0.0);
    assert_eq!(est.value, 1.0);
    assert_eq!(est.value - p.oracle("cos").unwrap(), 0.0);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let p = problem("JD-SMOOTH");
    let g = p.test_function("cos").unwrap().clone();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate_weak_value(
                    &p,
                    &Method::simple(1.0 / 16.0),
                    &g,
                    2000,
                    &StreamRoot::new(9, "t"),
                    None,
                )
                .unwrap()
            })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.value.to_bits(), four.value.to_bits());
    assert_eq!(one.se.to_bits(), four.se.to_bits());
}

#[test]
fn step_law_matches_closed_form() {
    let spec = rate_four_spec();
    for delta in [0.1, 0.5, 1.0] {
        let s =
            jump_adapted_step_stats(&spec, 0.5, delta, 1.0, 20_000, &StreamRoot::new(1, "steps"))
                .unwrap();
        assert_eq!(s.jump_rate, 4.0);
        assert!(s.pass, "{s:?}");
    }
    let expected = (1.0 - (-4.0f64 * 0.1).exp()) / 4.0;
    let s =
        jump_adapted_step_stats(&spec, 0.5, 0.1, 1.0, 1000, &StreamRoot::new(1, "steps")).unwrap();
    assert!((s.expected_first_step - expected).abs() < 1e-15);
    assert!((s.expected_first_step - 0.082420).abs() < 1e-6);
}

#[test]
fn step_law_without_jumps_is_deterministic() {
    let spec = rate_four_spec();
    let s =
        jump_adapted_step_stats(&spec, 2.0, 0.5, 1.0, 1000, &StreamRoot::new(1, "steps")).unwrap();
    assert_eq!(s.jump_rate, 0.0);
    assert_eq!(s.mean_first_step, 0.5);
    assert_eq!(s.se_first_step, 0.0);
    assert_eq!(s.z_score, 0.0);
    assert!(s.pass);
}

#[test]
fn too_few_partitions_are_rejected() {
    let spec = rate_four_spec();
    assert!(jump_adapted_step_stats(&spec, 0.5, 0.1, 1.0, 10, &StreamRoot::new(1, "s")).is_err());
}

#[test]
fn pairing_reduces_variance_of_errors() {
    let p = problem("JD-SMOOTH");
    let g = p.test_function("cos").unwrap();
    let base = RateConfig {
        kind: SchemeKind::Simple,
        deltas: vec![0.25, 0.125, 0.0625],
        sigma: None,
        rule: RuleChoice::Auto,
        n_paths: 4000,
        reference: ReferencePolicy::FineGrid {
            delta_ref: Some(1.0 / 256.0),
            n_paths: Some(4000),
        },
        pairing: Pairing::Paired,
        fit: FitOptions::default(),
    };
    let paired = rate_experiment(&p, g, &base, &StreamRoot::new(2, "pair")).unwrap();
    let independent = rate_experiment(
        &p,
        g,
        &RateConfig {
            pairing: Pairing::Independent,
            ..base.clone()
        },
        &StreamRoot::new(2, "pair"),
    )
    .unwrap();
    for (a, b) in paired.points.iter().zip(&independent.points) {
        assert!(
            a.se <= b.se,
            "δ={}: paired {} vs independent {}",
            a.delta,
            a.se,
            b.se
        );
    }
}

#[test]
fn exact_scheme_yields_no_fit() {
    let p = problem("IDENT-CP");
    let g = p.test_function("identity").unwrap();
    let cfg = RateConfig {
        kind: SchemeKind::Simple,
        deltas: vec![0.5, 0.25, 0.125, 0.0625],
        sigma: None,
        rule: RuleChoice::Auto,
        n_paths: 5000,
        reference: ReferencePolicy::Oracle,
        pairing: Pairing::Paired,
        fit: FitOptions::default(),
    };
    let r = rate_experiment(&p, g, &cfg, &StreamRoot::new(4, "exact")).unwrap();
    assert!(r.exact_scheme);
    assert!(r.kappa_hat.is_none());
    assert!(r.fit_error.is_some());
    assert_eq!(r.excluded.len(), 4);
}

#[test]
fn oracle_reference_needs_an_oracle() {
    let p = problem("JD-SMOOTH");
    let g = p.test_function("cos").unwrap();
    let err = reference_value(
        &p,
        g,
        &ReferencePolicy::Oracle,
        100,
        &StreamRoot::new(1, "o"),
        None,
    )
    .unwrap_err();
    assert!(matches!(err, HarnessError::NoOracle { .. }));
}

#[test]
fn preconditions_are_checked() {
    let p = problem("JD-SMOOTH");
    let g = p.test_function("cos").unwrap();
    let root = StreamRoot::new(1, "p");
    assert!(estimate_weak_value(&p, &Method::simple(0.1), g, 10, &root, None).is_err());
    assert!(estimate_weak_value(&p, &Method::simple(-0.1), g, 200, &root, None).is_err());
    assert!(check_deltas(&[0.1, 0.1], 1.0).is_err());
    assert!(check_deltas(&[2.0], 1.0).is_err());
    assert_eq!(
        check_deltas(&[0.1, 0.5, 0.25], 1.0).unwrap(),
        vec![0.1, 0.25, 0.5]
    );
    let cfg = DecompositionConfig {
        deltas: vec![0.1, 0.2],
        sigmas: vec![0.1, 0.2, 0.3],
        rule: RuleChoice::Auto,
        n_paths: 200,
        delta_ref: None,
    };
    assert!(decompose_error(&problem("PJ-DEGEN"), g, &cfg, &root).is_err());
}

#[test]
fn forced_rule_warning_follows_the_table() {
    assert!(RuleChoice::Auto.warning(0.5, 1.5).is_none());
    assert!(RuleChoice::Drift.warning(0.5, 1.5).is_none());
    assert!(RuleChoice::Gaussian.warning(0.5, 1.5).is_some());
    assert!(RuleChoice::Gaussian.warning(1.5, 2.5).is_none());
    assert!(RuleChoice::Zero.warning(0.5, 1.0).is_none());
}

#[test]
fn decomposition_reports_every_cell() {
    let p = problem("PJ-DEGEN");
    let g = p.test_function("cos").unwrap();
    let cfg = DecompositionConfig {
        deltas: vec![0.25, 0.125, 0.0625],
        sigmas: vec![0.5, 0.25, 0.125],
        rule: RuleChoice::Auto,
        n_paths: 400,
        delta_ref: Some(1.0 / 256.0),
    };
    let a = decompose_error(&p, g, &cfg, &StreamRoot::new(8, "d")).unwrap();
    let b = decompose_error(&p, g, &cfg, &StreamRoot::new(8, "d")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 9);
    assert_eq!(
        a.cells
            .iter()
            .filter(|c| c.substitution_error.is_some())
            .count(),
        3
    );
    assert!(a
        .cells
        .windows(2)
        .all(|w| w[0].sigma != w[1].sigma || w[0].delta != w[1].delta));
    assert!(a.surface.is_some() || a.surface_error.is_some());
}

#[test]
fn reports_are_written_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let files = ReportFiles {
        header: vec!["delta".into(), "error".into(), "note".into()],
        rows: vec![
            vec![Some(0.5.into()), Some(1.25e-3.into()), None],
            vec![Some(0.25.into()), None, Some("a,b".into())],
        ],
        summary: serde_json::json!({"kappa": 1.0, "tag": "x"}),
        plot: "plot results.csv\n".into(),
    };
    let out = write_report(dir.path(), "run", &files).unwrap();
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(
        csv,
        "delta,error,note\n5.0000000000000000e-1,1.2500000000000000e-3,\n2.5000000000000000e-1,,\"a,b\"\n"
    );
    let first = std::fs::read(out.join("summary.json")).unwrap();
    write_report(dir.path(), "run", &files).unwrap();
    assert_eq!(first, std::fs::read(out.join("summary.json")).unwrap());
    assert!(write_report(dir.path(), "../x", &files).is_err());
    assert!(version_string().starts_with("levy-euler "));
}
