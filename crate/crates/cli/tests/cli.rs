use std::path::Path;
use std::process::{Command, Output};

use salab::diagnostics::report::{read_band_energy, read_eval_report, read_freq_response};
use salab::frl::{FrlConfig, TrainMode};
use salab::nn::checkpoint::TrainingMeta;
use salab::nn::{load_checkpoint, save_checkpoint, Predictor, PredictorCheckpoint, PredictorConfig};
use salab::read_dataset;

fn salab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salab")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) {
    let out = salab(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str], dir: &Path) -> i32 {
    salab(args, dir).status.code().unwrap()
}

const GEN: &[&str] = &["gen-data", "--resolution", "32", "--trajectories", "10", "--snapshots", "5"];

fn with_data(dir: &Path) {
    let mut args = GEN.to_vec();
    args.extend(["--out", "data.salb"]);
    ok(&args, dir);
}

fn small_train(mode: &str, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "train", "--data", "data.salb", "--mode", mode, "--train-res", "16", "--epochs", "2", "--hidden", "4",
        "--blocks", "1", "--n-freq", "2", "--levels", "2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn gen_data_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut a = GEN.to_vec();
    a.extend(["--out", "a.salb"]);
    ok(&a, d);
    let mut b = GEN.to_vec();
    b.extend(["--out", "b.salb"]);
    ok(&b, d);
    assert_eq!(std::fs::read(d.join("a.salb")).unwrap(), std::fs::read(d.join("b.salb")).unwrap());
    let ds = read_dataset(&d.join("a.salb")).unwrap();
    let c = ds.config();
    assert_eq!((c.nu, c.vx, c.vy, c.seed), (0.01, 1.0, 0.5, 42));
    assert_eq!(ds.n_trajectories(), 10);
    let cfg = std::fs::read_to_string(d.join("a.config.toml")).unwrap();
    assert!(cfg.contains("trajectories = 10"));
}

#[test]
fn gen_data_auto_stabilizes_but_rejects_an_explicit_unstable_dt() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--resolution", "128", "--trajectories", "1", "--snapshots", "2", "--out", "x.salb"], d);
    let c = read_dataset(&d.join("x.salb")).unwrap().config().clone();
    assert!((c.dt_snapshot() - 0.01).abs() < 1e-15 && c.dt < 1e-3);
    let bad = ["gen-data", "--resolution", "128", "--trajectories", "1", "--snapshots", "2", "--dt", "0.001"];
    assert_eq!(code(&bad, d), 4);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["gen-data", "--trajectories", "0"], d), 2);
    assert_eq!(code(&["frobnicate"], d), 2);
    with_data(d);
    assert_eq!(code(&as_strs(&small_train("baseline", &["--ablate", "freqenc"])), d), 2);
    std::fs::write(d.join("bad.toml"), "[frl]\nlamda = 0.1\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "gen-data"], d), 2);
    std::fs::write(d.join("empty.toml"), "[sweep]\nlevels = []\n").unwrap();
    assert_eq!(code(&["--config", "empty.toml", "sweep", "--data", "data.salb"], d), 2);
}

#[test]
fn missing_or_corrupt_inputs_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    with_data(d);
    assert_eq!(code(&["eval", "--checkpoint", "nope.sack", "--data", "data.salb"], d), 3);
    std::fs::write(d.join("junk.sack"), b"SACKjunk").unwrap();
    assert_eq!(code(&["probe", "--checkpoint", "junk.sack"], d), 3);
}

#[test]
fn train_eval_probe_band_energy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    with_data(d);
    ok(&as_strs(&small_train("frl", &["--ablate", "freqenc", "--out", "m.sack"])), d);
    let ckpt = load_checkpoint(&d.join("m.sack")).unwrap();
    assert!(!ckpt.meta.frl.use_freq_enc && ckpt.meta.frl.use_multires);
    assert!(d.join("m.config.toml").exists());

    let base = small_train("baseline", &["--lambda", "0.3", "--out", "b.sack"]);
    let out = salab(&as_strs(&base), d);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--lambda has no effect"));

    ok(&["eval", "--checkpoint", "m.sack", "--data", "data.salb", "--resolutions", "16,32", "--horizon", "3", "--out", "ev"], d);
    let text = std::fs::read_to_string(d.join("ev/eval_report.csv")).unwrap();
    assert!(text.starts_with("resolution,rmse,mae,rel_err,error_ratio,f_oob\n"));
    assert_eq!(read_eval_report(&d.join("ev/eval_report.csv")).unwrap().len(), 2);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ev/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "frl");
    assert!(summary["rmse_ratio"].is_number());

    ok(&["probe", "--checkpoint", "m.sack", "--probe-res", "32", "--repeats", "2", "--out", "pr"], d);
    let curve = read_freq_response(&d.join("pr/freq_response.csv")).unwrap();
    assert_eq!(curve.len(), 16);
    assert_eq!(code(&["probe", "--checkpoint", "m.sack", "--probe-res", "32", "--f-max", "16"], d), 2);

    ok(&["band-energy", "--checkpoint", "m.sack", "--data", "data.salb", "--resolution", "32", "--steps", "3", "--band-width", "4", "--out", "be"], d);
    let rows = read_band_energy(&d.join("be/band_energy.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 4);
}

#[test]
fn identity_checkpoint_probe_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let frl = FrlConfig { n_freq: 2, ..FrlConfig::default() };
    let ckpt = PredictorCheckpoint {
        model: Predictor::zeros(PredictorConfig::for_n_freq(2)).unwrap(),
        meta: TrainingMeta { mode: TrainMode::Frl, train_res: 16, best_epoch: 0, epochs_run: 0, seed: 42, frl, history: vec![] },
    };
    save_checkpoint(&ckpt, &d.join("id.sack")).unwrap();
    ok(&["probe", "--checkpoint", "id.sack", "--probe-res", "64", "--f-max", "30", "--out", "pr"], d);
    for s in read_freq_response(&d.join("pr/freq_response.csv")).unwrap() {
        assert!((s.h_mag - 1.0).abs() <= 1e-6, "{s:?}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("pr/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["bandwidth"], ">30.00");
    assert!((summary["anchoring_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    with_data(d);
    ok(
        &[
            "sweep", "--data", "data.salb", "--levels-list", "1,2", "--lambda-list", "0.1", "--train-res", "16",
            "--epochs", "1", "--hidden", "4", "--blocks", "1", "--n-freq", "2", "--resolutions", "16,32", "--horizon",
            "2", "--out", "sw",
        ],
        d,
    );
    let text = std::fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "levels,lambda,rmse_ratio,train_res_rmse");
    assert_eq!(lines.len(), 3);
    assert!(d.join("sw/cells/levels2_lambda0.1/model.config.toml").exists());
}
