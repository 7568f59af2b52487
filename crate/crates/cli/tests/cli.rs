use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kae")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn tiny_pendulum(out: &Path) -> serde_json::Value {
    serde_json::json!({
        "dataset": {"generator": "pendulum", "trajectories": 8, "params": {"steps": 40}},
        "model": {"latent_dim": 4, "hidden": [8]},
        "training": {"horizon": 3, "epochs": 7, "batch_size": 32},
        "scheme": "both",
        "theta": 0.0,
        "eigenloss_weight": 1000.0,
        "seeds": [1, 2],
        "eval_horizon": 5,
        "output_dir": out
    })
}

#[test]
fn train_eval_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let config = write_config(tmp.path(), tiny_pendulum(&run));

    let o = kae(&["train", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("seed 1: cumulative test error"));
    for name in [
        "losses_1.csv",
        "eig_heatmap_2.csv",
        "horizons_1.csv",
        "timing_2.csv",
        "aggregate.csv",
        "manifest.json",
        "model_1.kae",
    ] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"][0]["status"], "ok");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let ckpt = run.join("model_1.kae");
    let o = kae(&["eval", "--config", &config, "--seed", "1", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("horizon,test_mse\n"));
    // Matches the horizon file written during training.
    let written = fs::read_to_string(run.join("horizons_1.csv")).unwrap();
    assert!(text.starts_with(&written));

    let o = kae(&["report", run.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("both"));
    assert!(stdout(&o).contains("2/2"));
}

#[test]
fn seed_and_out_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), tiny_pendulum(&tmp.path().join("ignored")));
    let out = tmp.path().join("elsewhere");
    let o = kae(&["train", "--config", &config, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("losses_9.csv").exists());
    assert!(!out.join("losses_1.csv").exists());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn gen_data_then_estimate_theta() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        serde_json::json!({
            "dataset": {
                "generator": "linear",
                "spectrum": [[1.0, 0.0], [-1.0, 0.0], [0.5, 0.0], [0.2, 0.0]],
                "trajectories": 10,
                "steps": 20
            },
            "scheme": "none",
            "seeds": [4],
            "output_dir": tmp.path().join("unused")
        }),
    );
    let data = tmp.path().join("linear.kds");
    let o = kae(&["gen-data", "--config", &config, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&fs::read(&data).unwrap()[..4], b"KDS1");

    let o = kae(&["estimate-theta", "--data", data.to_str().unwrap(), "--latent-dim", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("theta_hat 0.5\n"), "{}", stdout(&o));
}

#[test]
fn init_spectrum_writes_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kae(&["init-spectrum", "--samples", "200", "--seed", "3", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = fs::read_to_string(tmp.path().join("init_spectrum.csv")).unwrap();
    assert!(hist.starts_with("bin_low,bin_high,eigeninit_theta_0,gaussian,xavier\n"));
    assert_eq!(hist.lines().count(), 41);
    let again = tempfile::tempdir().unwrap();
    kae(&["init-spectrum", "--samples", "200", "--seed", "3", "--out", again.path().to_str().unwrap()]);
    assert_eq!(hist, fs::read_to_string(again.path().join("init_spectrum.csv")).unwrap());
}

#[test]
fn bad_configs_fail_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = tiny_pendulum(&tmp.path().join("run"));
    body["learning_rate"] = serde_json::json!(0.1);
    let config = write_config(tmp.path(), body);
    let o = kae(&["train", "--config", &config]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));

    let o = kae(&["train"]);
    assert!(!o.status.success());
    let o = kae(&["estimate-theta", "--data", "/nonexistent.kds", "--latent-dim", "2"]);
    assert!(!o.status.success());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let config = kae_core::experiment::ExperimentConfig::load(&path);
            assert!(config.is_ok(), "{}: {:?}", path.display(), config.err());
            count += 1;
        }
    }
    assert!(count >= 6);
}
