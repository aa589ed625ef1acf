use std::path::Path;
use std::process::Command as Process;

use levy_euler::harness::{Pairing, ReferencePolicy, RuleChoice, SchemeKind};
use levy_euler::models::Overrides;
use levy_euler_cli::{execute, execute_config, Command, ExperimentConfig, RunOptions, Status};
use proptest::prelude::*;
use serde_json::Value;

fn base(tag: &str, problem: &str, outdir: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "tag = \"{tag}\"\nproblem = \"{problem}\"\nn_paths = 400\nseed = 11\noutdir = \"{}\"\n",
        outdir.display()
    ))
    .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

#[test]
fn missing_field_is_named() {
    let err = ExperimentConfig::parse("tag = \"x\"\nproblem = \"ZERO\"\nseed = 1\n").unwrap_err();
    assert!(err.to_string().contains("n_paths"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let err = ExperimentConfig::parse(
        "tag = \"x\"\nproblem = \"ZERO\"\nseed = 1\nn_paths = 5\nsigma = 1\n",
    )
    .unwrap_err();
    assert!(err.to_string().contains("sigma"), "{err}");
    let err = ExperimentConfig::parse(
        "tag = \"x\"\nproblem = \"ZERO\"\nseed = 1\nn_paths = 5\n[overrides]\nxo = [1.0]\n",
    )
    .unwrap_err();
    assert!(err.to_string().contains("xo"), "{err}");
}

#[test]
fn zero_model_terminal_values_equal_start() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base("zero", "ZERO", dir.path());
    cfg.deltas = vec![0.25, 0.1];
    cfg.overrides.x0 = Some(vec![0.75]);
    let out = execute_config(Command::Simulate, &cfg);
    assert_eq!(out.status, Status::Pass, "{:?}", out.message);
    let csv = String::from_utf8(read(out.dir.as_ref().unwrap(), "results.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "x0").unwrap();
    let mut n = 0;
    for line in lines {
        let x: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert_eq!(x, 0.75);
        n += 1;
    }
    assert_eq!(n, 800);
    assert!(!csv.contains('\r'));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs: Vec<(Command, ExperimentConfig)> = Vec::new();
    let mut sim = base("sim", "JD-SMOOTH", dir.path());
    sim.deltas = vec![0.125];
    runs.push((Command::Simulate, sim));
    let mut rate = base("rate", "JD-SMOOTH", dir.path());
    rate.deltas = vec![0.25, 0.125, 0.0625];
    runs.push((Command::Rate, rate));
    let mut adapted = base("adapted", "IDENT-CP", dir.path());
    adapted.deltas = vec![0.1, 0.5];
    adapted.sigmas = vec![0.1];
    adapted.n_paths = 1000;
    runs.push((Command::Adapted, adapted));
    let mut dec = base("dec", "PJ-DEGEN", dir.path());
    dec.deltas = vec![0.25, 0.125, 0.0625];
    dec.sigmas = vec![0.5, 0.25, 0.125];
    dec.reference = ReferencePolicy::FineGrid {
        delta_ref: Some(1.0 / 128.0),
        n_paths: None,
    };
    runs.push((Command::Decompose, dec));
    for (cmd, cfg) in runs {
        let a = execute_config(cmd, &cfg);
        let csv = read(a.dir.as_ref().unwrap(), "results.csv");
        let json = read(a.dir.as_ref().unwrap(), "summary.json");
        let b = execute_config(cmd, &cfg);
        assert_eq!(a.status, b.status);
        assert_ne!(a.status, Status::Error, "{cmd:?}: {:?}", a.message);
        assert_eq!(csv, read(b.dir.as_ref().unwrap(), "results.csv"), "{cmd:?}");
        assert_eq!(
            json,
            read(b.dir.as_ref().unwrap(), "summary.json"),
            "{cmd:?}"
        );
    }
}

#[test]
fn empty_step_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = base("empty", "JD-SMOOTH", dir.path());
    let out = execute_config(Command::Rate, &cfg);
    assert_eq!(out.status, Status::Error);
    assert!(out.message.unwrap().contains("deltas"));
    let s = summary(out.dir.as_ref().unwrap());
    assert_eq!(s["status"], "error");
    assert_eq!(s["exit_code"], 2);
}

#[test]
fn rate_reports_theory_orders() {
    let dir = tempfile::tempdir().unwrap();
    for (problem, kappa) in [("JD-SMOOTH", 1.0), ("ROUGH-G", 0.25)] {
        let mut cfg = base(problem, problem, dir.path());
        cfg.deltas = vec![0.25, 0.125];
        let out = execute_config(Command::Rate, &cfg);
        assert_ne!(out.status, Status::Error, "{:?}", out.message);
        let s = summary(out.dir.as_ref().unwrap());
        assert_eq!(s["result"]["theory_kappa"].as_f64().unwrap(), kappa);
        assert_eq!(s["config"]["problem"], problem);
    }
}

#[test]
fn adapted_without_jumps_takes_full_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base("nojumps", "IDENT-CP", dir.path());
    cfg.deltas = vec![0.25];
    cfg.sigmas = vec![0.5];
    cfg.n_paths = 1000;
    let out = execute_config(Command::Adapted, &cfg);
    assert_eq!(out.status, Status::Pass, "{:?}", out.message);
    let s = summary(out.dir.as_ref().unwrap());
    let stats = &s["result"]["stats"][0];
    assert_eq!(stats["jump_rate"].as_f64().unwrap(), 0.0);
    assert_eq!(stats["mean_first_step"].as_f64().unwrap(), 0.25);
    assert_eq!(stats["mean_steps"].as_f64().unwrap(), 4.0);
    assert_eq!(stats["mean_sum_sq"].as_f64().unwrap(), 0.25);
}

#[test]
fn single_cell_decomposition_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base("cell", "PJ-DEGEN", dir.path());
    cfg.deltas = vec![0.1];
    cfg.sigmas = vec![0.1];
    let out = execute_config(Command::Decompose, &cfg);
    assert_eq!(out.status, Status::Error);
    assert!(
        out.message.as_ref().unwrap().contains("at least 3"),
        "{:?}",
        out.message
    );
    assert_eq!(summary(out.dir.as_ref().unwrap())["status"], "error");
}

#[test]
fn forced_rule_against_table_warns() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base("warn", "PJ-DEGEN", dir.path());
    cfg.scheme = SchemeKind::Approximate;
    cfg.rule = RuleChoice::Drift;
    cfg.deltas = vec![0.25];
    cfg.sigmas = vec![0.25];
    let out = execute_config(Command::Simulate, &cfg);
    assert_eq!(out.status, Status::Pass, "{:?}", out.message);
    assert_eq!(out.warnings.len(), 1);
    assert!(out.warnings[0].contains("contradicts"));
    let s = summary(out.dir.as_ref().unwrap());
    assert_eq!(s["warnings"].as_array().unwrap().len(), 1);
    cfg.rule = RuleChoice::Auto;
    assert!(execute_config(Command::Simulate, &cfg).warnings.is_empty());
}

#[test]
fn check_passes_on_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base("check", "JD-SMOOTH", dir.path());
    cfg.n_paths = 4000;
    let out = execute_config(Command::Check, &cfg);
    assert_eq!(out.status, Status::Pass, "{:?}", out.message);
    let s = summary(out.dir.as_ref().unwrap());
    assert!(!s["result"]["closed_form"].as_array().unwrap().is_empty());
    assert_eq!(s["result"]["martingale"].as_array().unwrap().len(), 2);
}

#[test]
fn unreadable_config_still_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "tag = \n").unwrap();
    let opts = RunOptions {
        outdir: Some(dir.path().join("out")),
        ..RunOptions::default()
    };
    let out = execute(Command::Rate, &path, &opts);
    assert_eq!(out.status, Status::Error);
    assert_eq!(summary(&dir.path().join("out/broken"))["status"], "error");
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_levy-euler");
    let good = dir.path().join("good.toml");
    std::fs::write(
        &good,
        "tag = \"good\"\nproblem = \"IDENT-CP\"\ndeltas = [0.25]\ntest_function = \"identity\"\nn_paths = 200\nseed = 3\n",
    )
    .unwrap();
    let status = Process::new(bin)
        .args(["simulate", "--config"])
        .arg(&good)
        .arg("--outdir")
        .arg(dir.path())
        .args(["--threads", "2", "--seed", "5", "--paths", "300"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let s = summary(&dir.path().join("good"));
    assert_eq!(s["seed"], 5);
    assert_eq!(s["config"]["n_paths"], 300);

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "tag = \"bad\"\nproblem = \"NOPE\"\nn_paths = 200\nseed = 3\ndeltas = [0.1]\n",
    )
    .unwrap();
    let status = Process::new(bin)
        .args(["rate", "--config"])
        .arg(&bad)
        .arg("--outdir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let band = dir.path().join("band.toml");
    std::fs::write(
        &band,
        "tag = \"band\"\nproblem = \"IDENT-CP\"\ntest_function = \"identity\"\ndeltas = [0.5, 0.25, 0.125]\n\
         n_paths = 500\nseed = 3\nexpect_kappa = [0.9, 1.1]\n[reference]\ntype = \"oracle\"\n",
    )
    .unwrap();
    let status = Process::new(bin)
        .args(["rate", "--config"])
        .arg(&band)
        .arg("--outdir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![1e-6..10.0f64, -10.0..10.0f64]
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    (
        (
            "[a-z][a-z0-9_-]{0,12}",
            prop::sample::select(vec![
                "IDENT-CP",
                "ZERO",
                "JD-SMOOTH",
                "ROUGH-G",
                "PJ-DEGEN",
                "ONE-SIDED",
            ]),
            prop::sample::select(vec![
                SchemeKind::Simple,
                SchemeKind::Approximate,
                SchemeKind::JumpAdapted,
            ]),
            prop::collection::vec(1e-4..1.0f64, 0..6),
            prop::collection::vec(1e-4..1.0f64, 0..6),
            prop::sample::select(vec![
                RuleChoice::Auto,
                RuleChoice::Drift,
                RuleChoice::Gaussian,
                RuleChoice::Zero,
            ]),
            prop::option::of(prop::sample::select(vec!["sin", "cos", "rough"])),
            1usize..1_000_000,
        ),
        (
            0u64..(i64::MAX as u64),
            prop::option::of((finite(), finite())),
            prop::option::of(finite()),
            prop::option::of(1e-4..1.0f64),
            any::<bool>(),
            0usize..6,
        ),
    )
        .prop_map(
            |(
                (tag, problem, scheme, deltas, sigmas, rule, g, n_paths),
                (seed, band, x0, delta_ref, paired, min_points),
            )| {
                let mut cfg = ExperimentConfig::parse(&format!(
                    "tag = \"{tag}\"\nproblem = \"{problem}\"\nn_paths = {n_paths}\nseed = {seed}\n"
                ))
                .unwrap();
                cfg.scheme = scheme;
                cfg.deltas = deltas;
                cfg.sigmas = sigmas;
                cfg.rule = rule;
                cfg.test_function = g.map(str::to_string);
                cfg.expect_kappa = band.map(|(a, b)| [a.min(b), a.max(b)]);
                cfg.overrides = Overrides {
                    x0: x0.map(|x| vec![x]),
                    ..Overrides::default()
                };
                cfg.reference = match delta_ref {
                    Some(d) => ReferencePolicy::FineGrid {
                        delta_ref: Some(d),
                        n_paths: Some(n_paths),
                    },
                    None => ReferencePolicy::Oracle,
                };
                cfg.pairing = if paired {
                    Pairing::Paired
                } else {
                    Pairing::Independent
                };
                cfg.fit.min_points = min_points;
                cfg
            },
        )
}

proptest! {
    #[test]
    fn config_round_trips(cfg in config_strategy()) {
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
