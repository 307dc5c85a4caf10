use std::path::Path;
use std::process::{Command, Output};

use lanetraj::harness::{Config, EpochLog, TrainCheckpoint, OUT_DIR_ENV};
use lanetraj::model::Model;

fn cli(out: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lanetraj"));
    cmd.args(args).env_remove(OUT_DIR_ENV);
    if let Some(out) = out {
        cmd.arg("--out-dir").arg(out);
    }
    cmd.output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn small_dataset(out: &Path) {
    ok(&cli(Some(out), &["generate", "--train-scenes", "64", "--eval-scenes", "24"]));
}

fn read_log(out: &Path) -> Vec<EpochLog> {
    std::fs::read_to_string(out.join("train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let o = cli(Some(dir.path()), &["--config", bad.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(Some(dir.path()), &["train", "--lr", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(Some(dir.path()), &["eval", "--k", "9"]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    let o = cli(Some(dir.path()), &["--config", missing.to_str().unwrap(), "eval"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_3_and_names_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let o = cli(Some(dir.path()), &["train", "--epochs", "2", "--lr", "1e300", "--batch-size", "8"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("batch"), "{err}");
}

#[test]
fn env_var_sets_output_dir_and_flag_overrides_it() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let run = |flag: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lanetraj"));
        cmd.args(["generate", "--train-scenes", "4", "--eval-scenes", "2"]).env(OUT_DIR_ENV, env_dir.path());
        if let Some(f) = flag {
            cmd.arg("--out-dir").arg(f);
        }
        ok(&cmd.output().unwrap());
    };
    run(None);
    assert!(env_dir.path().join("train.jsonl").exists());
    run(Some(flag_dir.path()));
    assert!(flag_dir.path().join("train.jsonl").exists());
}

#[test]
fn resolved_config_is_written_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "[data]\ntrain_scenes = 10\neval_scenes = 5\n[train]\nepochs = 7\n").unwrap();
    ok(&cli(Some(dir.path()), &["--config", file.to_str().unwrap(), "--seed", "9", "generate", "--eval-scenes", "3"]));
    let resolved = Config::load(&dir.path().join("generate.config.toml")).unwrap();
    assert_eq!(resolved.data.train_scenes, 10);
    assert_eq!(resolved.data.eval_scenes, 3);
    assert_eq!(resolved.train.epochs, 7);
    assert_eq!(resolved.scenario.seed, 9);
    assert_eq!(resolved.out_dir, dir.path());
}

#[test]
fn zero_epoch_checkpoint_equals_initialization() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    ok(&cli(Some(dir.path()), &["--seed", "4", "train", "--epochs", "0"]));
    let ckpt = TrainCheckpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.epochs_completed, 0);
    let init = Model::new(Config::default().model, 4).unwrap();
    assert_eq!(ckpt.params, init.to_checkpoint());
}

#[test]
fn lr_decay_is_logged_and_resume_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    for d in [&full, &split] {
        small_dataset(d.path());
    }
    let sched = ["--lr-decay-epoch", "1", "--batch-size", "16"];
    ok(&cli(Some(full.path()), &[&["train", "--epochs", "2"][..], &sched].concat()));
    let log = read_log(full.path());
    assert_eq!(log.len(), 2);
    assert_eq!(log[0].lr, 1e-3);
    assert!((log[1].lr - 1e-4).abs() < 1e-18);
    assert!(log[0].prop.is_some());

    ok(&cli(Some(split.path()), &[&["train", "--epochs", "1"][..], &sched].concat()));
    let first = split.path().join("first.json");
    std::fs::rename(split.path().join("checkpoint.json"), &first).unwrap();
    let resume = ["train", "--epochs", "2", "--resume", first.to_str().unwrap()];
    ok(&cli(Some(split.path()), &[&resume[..], &sched].concat()));
    assert_eq!(read_log(split.path()), log);
    assert_eq!(
        std::fs::read(full.path().join("checkpoint.json")).unwrap(),
        std::fs::read(split.path().join("checkpoint.json")).unwrap()
    );
}

#[test]
fn eval_is_pure_and_plot_uses_the_palette() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    ok(&cli(Some(dir.path()), &["train", "--epochs", "1", "--no-tpa", "--no-lane-loss"]));
    ok(&cli(Some(dir.path()), &["eval", "--k", "6", "--k", "1"]));
    let first = std::fs::read(dir.path().join("report.json")).unwrap();
    ok(&cli(Some(dir.path()), &["eval", "--k", "6", "--k", "1"]));
    assert_eq!(first, std::fs::read(dir.path().join("report.json")).unwrap());
    let table = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    for col in ["minADE6", "minFDE6", "minADE1", "minFDE1", "minLaneFDE6", "turns"] {
        assert!(table.contains(col), "{table}");
    }
    ok(&cli(Some(dir.path()), &["plot", "--scenes", "2"]));
    let svg = std::fs::read_to_string(dir.path().join("plots/scene_0002.svg")).unwrap();
    for color in ["#9e9e9e", "#f2c200", "#2e9e3e", "#d62728"] {
        assert!(svg.contains(color));
    }
    let o = cli(Some(dir.path()), &["plot", "--scenes", "999"]);
    assert_eq!(o.status.code(), Some(2));
}
