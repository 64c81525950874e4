use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gaitsada_core::config::ExperimentConfig;
use gaitsada_core::dataset::Manifest;
use gaitsada_core::eval::AblationRow;

fn gaitsada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitsada"))
        .args(args)
        .env_remove("GAITSADA_SEED")
        .env_remove("GAITSADA_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(path: &Path) {
    let mut cfg = ExperimentConfig::default();
    cfg.roster.subjects = 2;
    cfg.days = 2;
    cfg.source_days = None;
    cfg.walk.samples_per_direction = 2;
    cfg.train.epochs_stage1 = 2;
    cfg.train.epochs_stage2 = 2;
    cfg.train.batch_size = 4;
    cfg.ablation.rows = vec![AblationRow::SupervisedAm, AblationRow::Full];
    cfg.ablation.seeds = vec![0];
    fs::write(path, cfg.to_json().unwrap()).unwrap();
}

#[test]
fn help_succeeds_and_unknown_flags_are_usage_errors() {
    assert_eq!(gaitsada(&["--help"]).status.code(), Some(0));
    assert_eq!(gaitsada(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(gaitsada(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(gaitsada(&["train", "--stage", "3"]).status.code(), Some(2));
    assert_eq!(gaitsada(&["simulate", "--domains", "garage"]).status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"sede": 3}"#).unwrap();
    let out = gaitsada(&["simulate", "--config", cfg.to_str().unwrap(), "--run", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sede"), "{}", stderr(&out));

    fs::write(&cfg, r#"{"train": {"tau": 1.5}}"#).unwrap();
    let out = gaitsada(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("tau"), "{}", stderr(&out));
}

#[test]
fn simulate_writes_one_entry_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = gaitsada(&[
        "simulate", "--subjects", "4", "--days", "4", "--domains", "source,office", "--seed", "1", "--samples", "1", "--run",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = Manifest::load(&run).unwrap();
    assert_eq!(manifest.entries.len(), 4 * 4 * 2 * 2);
    for sub in ["checkpoints", "reports", "plots", "config.json", "manifest.json"] {
        assert!(run.join(sub).exists(), "{sub} missing");
    }
    let embedded = ExperimentConfig::load(&run.join("config.json")).unwrap();
    assert_eq!((embedded.roster.subjects, embedded.days, embedded.seed), (4, 4, 1));
}

#[test]
fn stage_two_requires_stage_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    tiny_config(&cfg);
    let run = dir.path().join("run");
    let (c, r) = (cfg.to_str().unwrap(), run.to_str().unwrap());
    assert!(gaitsada(&["simulate", "--config", c, "--run", r]).status.success());
    let out = gaitsada(&["train", "--stage", "2", "--run", r]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("stage-1 checkpoint"), "{}", stderr(&out));
    let out = gaitsada(&["eval", "--run", r]);
    assert!(!out.status.success());
}

#[test]
fn corrupted_dataset_exits_with_integrity_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    tiny_config(&cfg);
    let run = dir.path().join("run");
    let (c, r) = (cfg.to_str().unwrap(), run.to_str().unwrap());
    assert!(gaitsada(&["simulate", "--config", c, "--run", r]).status.success());
    let manifest = Manifest::load(&run).unwrap();
    let victim = run.join(&manifest.entries[0].path);
    let mut bytes = fs::read(&victim).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&victim, bytes).unwrap();
    let out = gaitsada(&["train", "--stage", "1", "--run", r]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("checksum"));
}

#[test]
fn environment_overrides_seed_and_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("from-env");
    let cfg = dir.path().join("cfg.json");
    tiny_config(&cfg);
    let out = Command::new(env!("CARGO_BIN_EXE_gaitsada"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("GAITSADA_SEED", "7")
        .env("GAITSADA_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let embedded = ExperimentConfig::load(&root.join("config.json")).unwrap();
    assert_eq!((embedded.seed, embedded.train.seed), (7, 7));

    let bad = Command::new(env!("CARGO_BIN_EXE_gaitsada"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("GAITSADA_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    tiny_config(&cfg);
    let c = cfg.to_str().unwrap();
    let mut checkpoints = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let r = run.to_str().unwrap();
        for args in [
            vec!["simulate", "--config", c, "--run", r],
            vec!["--workers", "2", "train", "--stage", "1", "--run", r],
            vec!["train", "--stage", "2", "--run", r],
        ] {
            let out = gaitsada(&args);
            assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        }
        let eval = gaitsada(&["eval", "--run", r]);
        assert!(eval.status.success());
        assert!(String::from_utf8_lossy(&eval.stdout).contains("accuracy"));
        checkpoints.push((fs::read(run.join("checkpoints/stage2.bin")).unwrap(), fs::read(run.join("manifest.json")).unwrap()));

        if name == "a" {
            let out = gaitsada(&["ablate", "--run", r]);
            assert!(out.status.success(), "{}", stderr(&out));
            let csv = fs::read_to_string(run.join("reports/ablation.csv")).unwrap();
            assert_eq!(csv.lines().count(), 3);
            // a second invocation resumes from the stored cells
            let again = gaitsada(&["ablate", "--run", r]);
            assert_eq!(fs::read_to_string(run.join("reports/ablation.csv")).unwrap(), csv);
            assert!(again.status.success());

            let out = gaitsada(&["plots", "--run", r, "--saliency", "2"]);
            assert!(out.status.success(), "{}", stderr(&out));
            let pngs: Vec<String> = fs::read_dir(run.join("plots"))
                .unwrap()
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            for expected in ["spectrogram_grid.png", "stage1_curves.png", "stage2_curves.png", "ablation_bars.png"] {
                assert!(pngs.iter().any(|p| p == expected), "{expected} not in {pngs:?}");
            }
            assert_eq!(pngs.iter().filter(|p| p.starts_with("saliency_")).count(), 2);
        }
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
}
