//! Black-box tests of the command-line interface: exit codes, artifact
//! layout, determinism across reruns, and the error surface users actually
//! see. Each test drives the compiled binary through `std::process::Command`.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_ganlab");

fn run(args: &[&str]) -> Output {
    Command::new(EXE)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small but non-trivial training config: two hidden layers would slow the
/// suite for no extra coverage, so both nets get one width-16 layer.
fn tiny_train_config(seed: u64) -> String {
    format!(
        r#"{{
  "objective": "vanilla",
  "penalty": {{"variant": "dragan_eq1", "lambda": 10.0, "k": 1.0, "c": 0.5}},
  "optimizer": {{"adam": {{"alpha": 0.001, "beta1": 0.5, "beta2": 0.9, "eps": 1e-8}}}},
  "batch_size": 32,
  "total_g_iters": 150,
  "eval_interval": 50,
  "seed": {seed},
  "dataset": "8gaussians",
  "generator": {{"family": "mlp", "depth": 1, "widths": [16], "hidden_activation": "tanh", "output_activation": "identity", "latent_dim": 2}},
  "discriminator": {{"family": "mlp", "depth": 1, "widths": [16], "hidden_activation": "leaky_relu", "output_activation": "sigmoid", "latent_dim": 2}}
}}"#
    )
}

#[test]
fn bare_invocation_prints_help_and_exits_zero() {
    let out = run(&[]);
    assert!(out.status.success(), "help display is not an error");
    let text = format!("{}{}", stdout_of(&out), stderr_of(&out));
    assert!(text.contains("Usage"), "help text shows usage: {text}");
    assert!(text.contains("train"), "help lists the train subcommand");
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(1), "usage errors exit with 1");
    assert!(
        stderr_of(&out).contains("--config"),
        "error names the missing flag: {}",
        stderr_of(&out)
    );
}

#[test]
fn missing_config_file_reports_invalid_config() {
    let out = run(&["train", "--config", "definitely_missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("invalid config: config not found"),
        "stderr explains what is wrong: {err}"
    );
}

#[test]
fn train_writes_artifacts_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, tiny_train_config(3)).unwrap();

    let run_train = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--levelsets",
            "2",
        ]);
        assert!(
            out.status.success(),
            "train succeeds: stderr={}",
            stderr_of(&out)
        );
        out_dir
    };
    let first = run_train("first");
    let second = run_train("second");

    for name in [
        "train_log.csv",
        "samples.csv",
        "generator.ckpt",
        "discriminator.ckpt",
    ] {
        let a = fs::read(first.join(name)).unwrap_or_else(|_| panic!("{name} written"));
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} is byte-identical across reruns");
        assert!(!a.is_empty(), "{name} is non-empty");
    }

    let log = fs::read_to_string(first.join("train_log.csv")).unwrap();
    assert!(
        log.starts_with("g_iter,d_iter,d_loss,g_loss,penalty,grad_norm_real,covered_modes,hq_fraction,wall_ms\n"),
        "training log carries the documented header: {log}"
    );
    // 150 iterations at interval 50 -> rows at 50, 100, 150.
    assert_eq!(log.lines().count(), 4, "header plus one row per checkpoint");

    let snapshots: Vec<_> = fs::read_dir(&first)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("levelset_") && n.ends_with(".pgm"))
        .collect();
    assert_eq!(snapshots.len(), 2, "requested two level-set snapshots, got {snapshots:?}");
}

#[test]
fn train_seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, tiny_train_config(3)).unwrap();

    let base = dir.path().join("base");
    let reseeded = dir.path().join("reseeded");
    for (out_dir, extra) in [(&base, None), (&reseeded, Some(["--seed", "99"]))] {
        let mut args = vec![
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--levelsets",
            "1",
        ];
        if let Some(pair) = extra {
            args.extend(pair);
        }
        let out = run(&args);
        assert!(out.status.success(), "stderr={}", stderr_of(&out));
    }
    let a = fs::read(base.join("train_log.csv")).unwrap();
    let b = fs::read(reseeded.join("train_log.csv")).unwrap();
    assert_ne!(a, b, "a different seed changes the trajectory");
}

#[test]
fn diverging_run_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // An unpenalized Pearson-χ² game with a huge SGD step: the conjugate term
    // squares the critic output, so the parameters overflow within a few
    // iterations and the run is marked failed.
    fs::write(
        &cfg,
        r#"{
  "objective": "fgan(pearson_chi2)",
  "optimizer": {"sgd": {"eta": 100.0}},
  "batch_size": 64,
  "total_g_iters": 100,
  "eval_interval": 20,
  "seed": 0,
  "dataset": "8gaussians",
  "generator": {"family": "mlp", "depth": 1, "widths": [32], "hidden_activation": "tanh", "output_activation": "identity", "latent_dim": 2},
  "discriminator": {"family": "mlp", "depth": 1, "widths": [32], "hidden_activation": "leaky_relu", "output_activation": "identity", "latent_dim": 2}
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "failed runs exit with 2");
    assert!(
        stderr_of(&out).contains("run failed"),
        "stderr reports the failure: {}",
        stderr_of(&out)
    );
    // The partial log is still written for post-mortems.
    assert!(out_dir.join("train_log.csv").exists(), "partial log kept");
}

#[test]
fn gradcheck_subcommand_reports_pass() {
    let out = run(&["gradcheck", "--cases", "5", "--seed", "7"]);
    assert!(out.status.success(), "stderr={}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("gradcheck: PASS"), "verdict line present: {text}");
}

#[test]
fn game_demo_writes_gap_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "game-demo",
        "--iters",
        "300",
        "--checkpoint-every",
        "100",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr={}", stderr_of(&out));
    assert!(
        stdout_of(&out).contains("averaged-iterate gap"),
        "summary line printed: {}",
        stdout_of(&out)
    );
    let csv = fs::read_to_string(dir.path().join("game_demo.csv")).unwrap();
    assert!(
        csv.starts_with("round,phi,theta,phi_bar,theta_bar,regret_1,regret_2,duality_gap\n"),
        "gap log carries the documented header: {csv}"
    );
    assert_eq!(csv.lines().count(), 4, "header plus rounds 100, 200, 300");
}

#[test]
fn levelset_and_latent_walk_read_training_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, tiny_train_config(7)).unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--levelsets",
        "1",
    ]);
    assert!(out.status.success(), "stderr={}", stderr_of(&out));

    let pgm_path = dir.path().join("d.pgm");
    let out = run(&[
        "levelset",
        "--checkpoint",
        out_dir.join("discriminator.ckpt").to_str().unwrap(),
        "--resolution",
        "16",
        "--out",
        pgm_path.to_str().unwrap(),
        "--csv",
    ]);
    assert!(out.status.success(), "stderr={}", stderr_of(&out));
    let pgm = fs::read(&pgm_path).unwrap();
    assert!(
        pgm.starts_with(b"P5\n16 16\n255\n"),
        "binary PGM header with the requested resolution"
    );
    assert!(
        Path::new(&pgm_path.with_extension("csv")).exists(),
        "--csv writes the numeric companion"
    );

    let walk_path = dir.path().join("walk.csv");
    let out = run(&[
        "latent-walk",
        "--checkpoint",
        out_dir.join("generator.ckpt").to_str().unwrap(),
        "--steps",
        "5",
        "--seed",
        "7",
        "--out",
        walk_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr={}", stderr_of(&out));
    let walk = fs::read_to_string(&walk_path).unwrap();
    assert!(
        walk.starts_with("step,t,x0,x1\n"),
        "walk header names one column per output coordinate: {walk}"
    );
    assert_eq!(walk.lines().count(), 6, "header plus five interpolation steps");
}

#[test]
fn missing_checkpoint_is_reported_on_stderr() {
    let out = run(&["levelset", "--checkpoint", "no_such.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).starts_with("error:"),
        "failure goes through the uniform error formatter: {}",
        stderr_of(&out)
    );
}
