//! Artifact layout, determinism, report verification and config handling.

use std::path::Path;
use std::process::Command;

use creditlab_experiments::table::Table;
use creditlab_experiments::{emit_report, run_experiment, Error, ExperimentConfig, ExperimentKind};

/// The bundled config with a small replicate count.
fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = kind.default_config();
    cfg.replicates = match kind {
        ExperimentKind::Tightness => 50,
        ExperimentKind::Separation => 20,
        ExperimentKind::Bounds => 10,
        ExperimentKind::CpiCompare => 30,
        ExperimentKind::SrpoToy => 2,
        ExperimentKind::LocalizationQuality => 1,
    };
    if let Some(p) = cfg.srpo_toy.as_mut() {
        p.updates = 10;
    }
    if let Some(p) = cfg.localization_quality.as_mut() {
        p.records = 200;
    }
    cfg
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.ends_with(".csv").then_some(name)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn zero_replicates_write_header_only_files() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        let mut cfg = small(kind);
        cfg.replicates = 0;
        let dir = tmp.path().join(kind.name());
        let outcome = run_experiment(&cfg, &dir).unwrap();
        assert!(outcome.checks.is_empty());
        for f in csv_files(&dir) {
            let t = Table::read(&dir.join(&f)).unwrap();
            assert!(!t.headers.is_empty(), "{kind}/{f}");
            assert!(t.rows.is_empty(), "{kind}/{f} has rows");
        }
        assert!(dir.join("plots").is_dir());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        let cfg = small(kind);
        let (a, b) = (tmp.path().join(format!("{kind}-a")), tmp.path().join(format!("{kind}-b")));
        run_experiment(&cfg, &a).unwrap();
        run_experiment(&cfg, &b).unwrap();
        let files = csv_files(&a);
        assert!(files.len() >= 3);
        for f in files {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{kind}/{f}");
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::CpiCompare);
    let run_with = |threads: usize, name: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let dir = tmp.path().join(name);
        pool.install(|| run_experiment(&cfg, &dir)).unwrap();
        std::fs::read(dir.join("aggregate.csv")).unwrap()
    };
    assert_eq!(run_with(1, "one"), run_with(4, "four"));
}

#[test]
fn different_seeds_give_different_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Tightness);
    run_experiment(&cfg, &tmp.path().join("a")).unwrap();
    cfg.master_seed += 1;
    run_experiment(&cfg, &tmp.path().join("b")).unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("replicates.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn report_verifies_and_lists_every_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        run_experiment(&small(kind), &tmp.path().join(kind.name())).unwrap();
    }
    let summary = std::fs::read_to_string(emit_report(tmp.path()).unwrap()).unwrap();
    for kind in ExperimentKind::ALL {
        assert!(summary.contains(&format!("## {kind}")), "{kind} missing");
        assert!(summary.contains(&format!("{kind} → {}", kind.anchor())));
    }
    assert!(summary.contains("6 experiment(s)"));
}

#[test]
fn passed_check_run_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentKind::Bounds.default_config();
    cfg.replicates = 20;
    let outcome = run_experiment(&cfg, tmp.path()).unwrap();
    assert!(outcome.passed());
    let summary = std::fs::read_to_string(emit_report(tmp.path()).unwrap()).unwrap();
    assert!(summary.contains("## bounds: PASS"));
    assert!(!summary.contains("FAIL"));
}

#[test]
fn tampered_csv_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    run_experiment(&small(ExperimentKind::Bounds), tmp.path()).unwrap();
    let path = tmp.path().join("aggregate.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("forged,1,0\n");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(emit_report(tmp.path()), Err(Error::CorruptArtifact { .. })));
}

#[test]
fn missing_artifact_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    run_experiment(&small(ExperimentKind::Bounds), tmp.path()).unwrap();
    std::fs::remove_file(tmp.path().join("replicates.csv")).unwrap();
    assert!(matches!(emit_report(tmp.path()), Err(Error::MissingArtifact(_))));
    assert!(matches!(emit_report(&tmp.path().join("nowhere")), Err(Error::MissingArtifact(_))));
}

#[test]
fn snapshot_round_trips() {
    for kind in ExperimentKind::ALL {
        let cfg = kind.default_config();
        assert_eq!(ExperimentConfig::from_toml(&cfg.snapshot()).unwrap(), cfg);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        "experiment = \"bounds\"\nreplicates = 1\nmaster_seed = 0\n[tightness]\n",
        "experiment = \"nope\"\nreplicates = 1\nmaster_seed = 0\n",
        "experiment = \"bounds\"\nreplicates = 1\n",
        "experiment = \"bounds\"\nreplicates = 1\nmaster_seed = 0\nextra = 3\n",
        "experiment = \"tightness\"\nreplicates = 1\nmaster_seed = 0\n[tightness]\np = 1.5\n",
        "experiment = \"separation\"\nreplicates = 1\nmaster_seed = 0\n[separation]\ncoverages = [0.5]\n",
        "experiment = \"srpo-toy\"\nreplicates = 1\nmaster_seed = 0\n[srpo_toy]\ng = 1\n",
        "experiment = \"localization-quality\"\nreplicates = 1\nmaster_seed = 0\n[localization_quality]\nlocalizer = { mode = \"noisy\", p_exact = 2.0, max_offset = 1 }\n",
    ];
    for text in bad {
        assert!(ExperimentConfig::from_toml(text).is_err(), "accepted:\n{text}");
    }
    let minimal = ExperimentConfig::from_toml("experiment = \"cpi-compare\"\nreplicates = 3\nmaster_seed = 9\n").unwrap();
    assert_eq!(minimal.cpi_compare(), Default::default());
}

#[test]
fn cli_run_check_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bounds.toml");
    std::fs::write(&config, ExperimentKind::Bounds.default_config_text()).unwrap();
    let out = tmp.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_creditlab"))
        .args(["run", config.to_str().unwrap(), "--check", "--replicates", "5", "--seed", "3", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let snap = ExperimentConfig::load(out.join("config.snapshot")).unwrap();
    assert_eq!((snap.replicates, snap.master_seed), (5, 3));
    let status = Command::new(env!("CARGO_BIN_EXE_creditlab")).args(["report", out.to_str().unwrap()]).status().unwrap();
    assert!(status.success());
    assert!(out.join("summary.md").exists());
}

#[test]
fn cli_uses_output_root_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("loc.toml");
    std::fs::write(&config, "experiment = \"localization-quality\"\nreplicates = 1\nmaster_seed = 1\n[localization_quality]\nrecords = 50\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_creditlab"))
        .args(["run", config.to_str().unwrap()])
        .env("CREDITLAB_OUTPUT_ROOT", tmp.path().join("root"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(tmp.path().join("root/localization-quality/manifest.sha256").exists());
}

#[test]
fn cli_check_fails_on_unmet_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("t.toml");
    // Demanding a sign-failure rate of 1 cannot be met.
    std::fs::write(&config, "experiment = \"tightness\"\nreplicates = 20\nmaster_seed = 1\n[tightness]\nmin_failure_rate = 1.0\nn_grid = [16]\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_creditlab"))
        .args(["run", config.to_str().unwrap(), "--check", "--out", tmp.path().join("o").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let status = Command::new(env!("CARGO_BIN_EXE_creditlab"))
        .args(["run", tmp.path().join("missing.toml").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
