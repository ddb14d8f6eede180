//! The `doa` binary on miniature configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
behavior = "periodic"
runs = 2
seed = 3

[env]
n_obstacles = 4
n_steps = 40

[agent]
hidden_units = 8
batch_size = 8

[schedule]
total_steps = 120
warmup_steps = 40
eval_interval = 60
eval_episodes = 2

[predictor]
train_trajectories = 12
eval_trajectories = 6
trajectory_len = 120

[predictor.train]
hidden_units = 8
max_epochs = 2
"#;

fn doa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doa"))
        .args(args)
        .current_dir(dir)
        .env_remove("DOA_OUT_ROOT")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = doa(dir, args);
    assert!(
        out.status.success(),
        "doa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn has_figure(csv: &Path) -> bool {
    csv.is_file() && fs::read_to_string(csv.with_extension("svg")).is_ok_and(|s| s.starts_with("<svg"))
}

#[test]
fn full_pipeline_emits_data_and_figures() {
    let dir = setup();
    let d = dir.path();
    let common = ["--config", "tiny.toml", "--out", "out"];
    let train = ok(d, &[&["train-predictor"][..], &common].concat());
    assert!(train.contains("periodic predictor"));
    let out = d.join("out");
    assert!(has_figure(&out.join("predictor-periodic-loss.csv")));
    assert!(out.join("predictor-periodic.json").is_file());

    ok(d, &[&["eval-predictor"][..], &common].concat());
    for stem in ["rmse-periodic", "overlay-periodic", "cpa-profile-periodic"] {
        assert!(has_figure(&out.join(format!("{stem}.csv"))), "{stem}");
    }

    ok(d, &[&["train-agent"][..], &common].concat());
    ok(d, &[&["train-agent", "--mode", "baseline"][..], &common].concat());
    assert!(has_figure(&out.join("sl-td3-periodic/learning-curve.csv")));
    assert!(has_figure(&out.join("td3-periodic/run-01/trace.csv")));
    let combined = fs::read_to_string(out.join("learning-curves-periodic.csv")).unwrap();
    assert!(combined.starts_with("variant,"));
    assert!(combined.contains("\nSL-LSTM-TD3,") && combined.contains("\nLSTM-TD3,"));
    let svg = fs::read_to_string(out.join("learning-curves-periodic.svg")).unwrap();
    assert!(svg.contains("SL-LSTM-TD3 (N = 2)") && svg.contains(">\nLSTM-TD3 (N = 2)"));

    let eval = ok(
        d,
        &[
            &[
                "eval-agent",
                "--checkpoint",
                "out/sl-td3-periodic/run-00/agent.json",
                "--episodes",
                "2",
            ][..],
            &common,
        ]
        .concat(),
    );
    assert!(eval.contains("mean return"));
    assert!(has_figure(&out.join("eval/sl-td3-periodic/trace-01.csv")));
}

#[test]
fn plot_is_a_pure_function_of_the_data_file() {
    let dir = setup();
    let d = dir.path();
    ok(
        d,
        &[
            "train-agent",
            "--config",
            "tiny.toml",
            "--out",
            "out",
            "--mode",
            "baseline",
            "--runs",
            "1",
        ],
    );
    let csv = d.join("out/td3-periodic/learning-curve.csv");
    let svg = csv.with_extension("svg");
    let first = fs::read(&svg).unwrap();
    fs::remove_file(&svg).unwrap();
    ok(d, &["plot", csv.to_str().unwrap()]);
    assert_eq!(fs::read(&svg).unwrap(), first);

    // a single run collapses the band onto the mean
    let text = fs::read_to_string(&csv).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[2]);
        assert_eq!(f[1], f[3]);
    }
}

#[test]
fn several_curves_need_an_output_path() {
    let dir = setup();
    let d = dir.path();
    ok(
        d,
        &[
            "train-agent",
            "--config",
            "tiny.toml",
            "--out",
            "out",
            "--mode",
            "baseline",
            "--runs",
            "1",
        ],
    );
    ok(
        d,
        &[
            "train-agent",
            "--config",
            "tiny.toml",
            "--out",
            "out",
            "--mode",
            "baseline",
            "--runs",
            "1",
            "--algo",
            "sac",
        ],
    );
    let a = "out/td3-periodic/learning-curve.csv";
    let b = "out/sac-periodic/learning-curve.csv";
    assert!(!doa(d, &["plot", a, b]).status.success());
    ok(d, &["plot", a, b, "--output", "fig6.svg"]);
    assert!(has_figure(&d.join("fig6.csv")));
}

#[test]
fn output_root_comes_from_environment_when_no_flag() {
    let dir = setup();
    let d = dir.path();
    let status = Command::new(env!("CARGO_BIN_EXE_doa"))
        .args(["train-predictor", "--config", "tiny.toml"])
        .current_dir(d)
        .env("DOA_OUT_ROOT", d.join("from-env"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(d.join("from-env/predictor-periodic.json").is_file());
}

#[test]
fn errors_exit_non_zero() {
    let dir = setup();
    let d = dir.path();
    // behavior mismatch between checkpoint and request
    ok(d, &["train-predictor", "--config", "tiny.toml", "--out", "out"]);
    let out = doa(
        d,
        &[
            "eval-predictor",
            "--config",
            "tiny.toml",
            "--out",
            "out",
            "--behavior",
            "stochastic",
            "--checkpoint",
            "out/predictor-periodic.json",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("behavior"));
    // SL training without any predictor
    assert!(!doa(
        d,
        &[
            "train-agent",
            "--config",
            "tiny.toml",
            "--out",
            "empty",
            "--behavior",
            "linear"
        ]
    )
    .status
    .success());
    // invalid configuration
    fs::write(d.join("bad.toml"), "[env]\nn_obstacles = 3\n").unwrap();
    assert!(!doa(d, &["train-agent", "--config", "bad.toml", "--mode", "baseline"])
        .status
        .success());
    assert!(!doa(d, &["train-agent", "--config", "missing.toml"]).status.success());
    assert!(!doa(d, &["train-agent", "--algo", "ppo"]).status.success());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = doa_core::harness::ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
    }
}
