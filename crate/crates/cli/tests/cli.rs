use std::path::Path;
use std::process::Command;

use klmc_cli::{run, validate, CliError, ExperimentConfig, ExperimentKind, ExperimentReport, Level, Overrides, TargetSpec};
use klmc_core::tuning::{klmc_iterations, klmc_step_size};
use klmc_core::Algorithm;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_klmc"))
}

fn small_converge(out: &Path, seed: Option<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.steps = 400;
    cfg.sampler.thin = 50;
    cfg.sampler.theta0 = Some(vec![3.0, 0.0]);
    cfg.metrics.n_chains = 16;
    cfg.seed = seed;
    cfg.out = Some(out.to_path_buf());
    cfg
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn default_config_has_no_diagnostics() {
    let cfg = ExperimentConfig::default();
    for kind in [
        ExperimentKind::Sample,
        ExperimentKind::Converge,
        ExperimentKind::Order,
        ExperimentKind::Contraction,
        ExperimentKind::Tune,
        ExperimentKind::Regions,
    ] {
        assert_eq!(validate(&cfg, kind), vec![], "{kind}");
    }
}

#[test]
fn step_above_cap_is_flagged() {
    let mut cfg = ExperimentConfig::default();
    let cap = 1.0 / (4.0 * 2f64.sqrt());
    cfg.sampler.h = 2.0 * cap;
    let diags = validate(&cfg, ExperimentKind::Converge);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].level, Level::Warning);
    assert_eq!(diags[0].field, "sampler.h");
    assert!(diags[0].message.contains("m/(4γM)"), "{}", diags[0].message);
}

#[test]
fn low_friction_is_flagged() {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.gamma = Some(1.0);
    cfg.sampler.h = 0.001;
    let diags = validate(&cfg, ExperimentKind::Sample);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].field, "sampler.gamma");
    assert!(diags[0].message.contains("γ ≥ √(m+M)"), "{}", diags[0].message);
}

#[test]
fn second_order_cap_is_flagged() {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.algorithm = Algorithm::Klmc2;
    cfg.sampler.h = 0.5;
    let diags = validate(&cfg, ExperimentKind::Sample);
    assert!(diags.iter().any(|d| d.message.contains("m/(5γM)")));
}

#[test]
fn structural_errors() {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.theta0 = Some(vec![1.0, 2.0, 3.0]);
    let diags = validate(&cfg, ExperimentKind::Sample);
    assert!(diags.iter().any(|d| d.level == Level::Error && d.field == "sampler.theta0"));

    let mut cfg = ExperimentConfig::default();
    cfg.experiment = Some(ExperimentKind::Tune);
    assert!(validate(&cfg, ExperimentKind::Regions).iter().any(|d| d.field == "experiment"));

    let cfg = ExperimentConfig {
        target: TargetSpec::Logistic { dataset: "/nonexistent/data.csv".into(), prior_precision: 1.0 },
        ..ExperimentConfig::default()
    };
    assert!(validate(&cfg, ExperimentKind::Sample).iter().any(|d| d.field == "target.dataset"));
}

#[test]
fn validation_does_not_mutate() {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.h = 1.0;
    let before = cfg.clone();
    let _ = validate(&cfg, ExperimentKind::Converge);
    assert_eq!(cfg, before);
}

#[test]
fn parse_errors_name_line_and_field() {
    let err = ExperimentConfig::from_toml("[sampler]\nh = \"fast\"\n").unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("h"), "{err}");
    let err = ExperimentConfig::from_toml("[sampler]\nstep_size = 0.1\n").unwrap_err().to_string();
    assert!(err.contains("step_size"), "{err}");
    let cfg = ExperimentConfig::from_toml("seed = 3\n[target]\nkind = \"quadratic\"\nlambdas = [1.0, 4.0]\n").unwrap();
    assert_eq!(cfg.seed, Some(3));
    assert_eq!(cfg.target, TargetSpec::Quadratic { lambdas: vec![1.0, 4.0] });
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.gamma = Some(2.5);
    cfg.seed = Some(i64::MAX as u64);
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    cfg.seed = Some(u64::MAX);
    assert!(cfg.to_toml().is_err());
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = small_converge(&out, Some(1));
    cfg.sampler.h = -1.0;
    match run(ExperimentKind::Converge, cfg) {
        Err(CliError::Invalid(d)) => assert!(d.iter().any(|x| x.level == Level::Error)),
        other => panic!("expected validation failure, got {other:?}"),
    }
    assert!(!out.exists());
}

#[test]
fn converge_report_has_empirical_and_bound_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (report, out) = run(ExperimentKind::Converge, small_converge(dir.path(), Some(3))).unwrap();
    assert_eq!(report.seed, 3);
    assert_eq!(report.artifacts, vec!["converge.csv"]);
    let csv = read(out.join("converge.csv"));
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[..4], ["step", "w2_plugin", "w2_std_error", "w2_exact"]);
    assert_eq!(header[7], "bound_total");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    // point mass at θ₀ against N(0, I): √(9 + 2)
    assert!((rows[0][1] - 11f64.sqrt()).abs() < 1e-12);
    for r in &rows {
        assert!(r[3] <= r[7], "exact W₂ above bound at step {}", r[0]);
    }
    let saved: ExperimentReport = serde_json::from_str(&read(out.join("report.json"))).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(ExperimentKind::Converge, small_converge(a.path(), Some(11))).unwrap();
    run(ExperimentKind::Converge, small_converge(b.path(), Some(11))).unwrap();
    assert_eq!(read(a.path().join("converge.csv")), read(b.path().join("converge.csv")));
    let c = tempfile::tempdir().unwrap();
    run(ExperimentKind::Converge, small_converge(c.path(), Some(12))).unwrap();
    assert_ne!(read(a.path().join("converge.csv")), read(c.path().join("converge.csv")));
}

#[test]
fn missing_seed_is_recorded_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let (report, out) = run(ExperimentKind::Sample, small_converge(a.path(), None)).unwrap();
    assert_eq!(report.config.seed, Some(report.seed));
    assert!(report.seed < 1 << 63);
    let b = tempfile::tempdir().unwrap();
    let mut again = ExperimentConfig::load(&out.join("report.json")).unwrap();
    Overrides { seed: None, out: Some(b.path().to_path_buf()) }.apply(&mut again);
    let (replay, _) = run(ExperimentKind::Sample, again).unwrap();
    assert_eq!(replay.seed, report.seed);
    assert_eq!(replay.run_id, report.run_id);
    assert_eq!(read(a.path().join("chains.csv")), read(b.path().join("chains.csv")));
}

#[test]
fn tune_echoes_tuning_functions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.out = Some(dir.path().to_path_buf());
    cfg.tune.m = Some(1.0);
    cfg.tune.big_m = Some(4.0);
    cfg.tune.p = Some(10);
    cfg.tune.epsilon = 0.05;
    cfg.tune.w2_init = Some(3.0);
    let (report, _) = run(ExperimentKind::Tune, cfg).unwrap();
    let s = &report.summary;
    assert_eq!(s["klmc_step_size"].as_f64().unwrap(), klmc_step_size(1.0, 4.0, 10, 0.05).unwrap());
    assert_eq!(s["klmc_iterations"].as_u64().unwrap(), klmc_iterations(1.0, 4.0, 10, 0.05, 3.0).unwrap());
    assert!(s["bound_at_k"].as_f64().unwrap() <= 0.05);
    assert_eq!(s["gamma"].as_f64().unwrap(), 5f64.sqrt());
}

#[test]
fn order_contraction_and_regions_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.out = Some(dir.path().join("order"));
    let (r, out) = run(ExperimentKind::Order, cfg.clone()).unwrap();
    assert!(r.summary["log_log_slopes"]["KLMC"].as_f64().unwrap() >= 0.9);
    assert!(r.summary["log_log_slopes"]["KLMC2"].as_f64().unwrap() >= 1.8);
    assert_eq!(read(out.join("order.csv")).lines().count(), 9);

    cfg.target = TargetSpec::Quadratic { lambdas: vec![1.0, 4.0] };
    cfg.contraction.gammas = Some(vec![4.0]);
    cfg.out = Some(dir.path().join("contraction"));
    let (r, out) = run(ExperimentKind::Contraction, cfg.clone()).unwrap();
    let row = &r.summary["rates"][0];
    let exact = 2.0 - 3f64.sqrt();
    assert!((row["beta_measured"].as_f64().unwrap() - exact).abs() < 1e-3 * exact);
    assert!((row["beta_predicted"].as_f64().unwrap() - exact).abs() < 1e-12);
    assert_eq!(row["asymptotic"], true);
    assert!(read(out.join("decay_0.csv")).starts_with("t,mean_sq_distance,log_distance\n"));

    cfg.out = Some(dir.path().join("regions"));
    cfg.regions.n_scale = 5;
    cfg.regions.n_kappa = 4;
    let (r, out) = run(ExperimentKind::Regions, cfg).unwrap();
    assert_eq!(r.summary["cells"], 20);
    let csv = read(out.join("regions.csv"));
    assert!(csv.starts_with("log10_scale,log10_kappa,K_lmc,K_klmc,winner\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn logistic_target_from_relative_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::from("x1,x2,y\n");
    for i in 0..40 {
        let a = (i as f64 * 0.7).sin();
        let b = (i as f64 * 1.3).cos();
        data.push_str(&format!("{a},{b},{}\n", u8::from(a + 0.5 * b > 0.1)));
    }
    std::fs::write(dir.path().join("data.csv"), data).unwrap();
    let config = "[target]\nkind = \"logistic\"\ndataset = \"data.csv\"\n\n[contraction]\nt_max = 4.0\nh_fine = 0.01\nn_pairs = 4\nrecord_every = 10\n";
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    let mut cfg = ExperimentConfig::load(&dir.path().join("exp.toml")).unwrap();
    assert!(matches!(&cfg.target, TargetSpec::Logistic { dataset, .. } if dataset.is_absolute()));
    cfg.seed = Some(2);
    cfg.out = Some(dir.path().join("out"));
    assert_eq!(validate(&cfg, ExperimentKind::Contraction), vec![]);
    let (r, _) = run(ExperimentKind::Contraction, cfg).unwrap();
    for row in r.summary["rates"].as_array().unwrap() {
        assert!(row["beta_measured"].as_f64().unwrap() > 0.0);
        assert!(row["std_error"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn binary_flags_override_file_and_threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "seed = 5\n[sampler]\nsteps = 300\nthin = 100\n[metrics]\nn_chains = 12\n").unwrap();
    let run_bin = |out: &str, threads: &str| {
        let status = bin()
            .args(["sample", "--config"])
            .arg(&config)
            .args(["--seed", "7", "--threads", threads, "--out"])
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let report: ExperimentReport = serde_json::from_str(&read(dir.path().join(out).join("report.json"))).unwrap();
        assert_eq!(report.seed, 7);
        assert_eq!(report.config.sampler.steps, 300);
        read(dir.path().join(out).join("chains.csv"))
    };
    assert_eq!(run_bin("one", "1"), run_bin("four", "4"));
}

#[test]
fn binary_reports_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[sampler]\nh = 0.01\nthin = \"x\"\n").unwrap();
    let out = bin().args(["converge", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("thin"), "{err}");

    std::fs::write(&config, "[sampler]\nh = 0.0\n").unwrap();
    let target = dir.path().join("out");
    let out = bin().args(["converge", "--config"]).arg(&config).arg("--out").arg(&target).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampler"));
    assert!(!target.exists());
}

#[test]
fn shipped_configs_validate_cleanly() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let kind = cfg.experiment.expect("shipped configs name their experiment");
        assert_eq!(validate(&cfg, kind), vec![], "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 3);
}
