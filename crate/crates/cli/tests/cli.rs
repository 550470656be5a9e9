use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn afc(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "afc {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL: &str = r#"
n_cfd = 2
n_marl = 3
n_training_steps = 2
transient_cut = 1.0
reward_window = 1.0
[episode]
t_eps = 4.0
n_actions = 8
[ppo]
hidden = [8]
minibatch = 12
"#;

#[test]
fn default_configs_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    for env in ["oscillator", "cylinder"] {
        let out = afc(&["default-config", "--env", env], dir.path());
        let path = dir.path().join(format!("{env}.toml"));
        std::fs::write(&path, &out.stdout).unwrap();
        afc_core::orchestrator::RunConfig::from_file(&path).unwrap();
    }
}

#[test]
fn shipped_configs_are_valid() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for f in ["oscillator.toml", "cylinder.toml", "cylinder_coarse.toml"] {
        afc_core::orchestrator::RunConfig::from_file(&configs.join(f)).unwrap();
    }
}

#[test]
fn train_evaluate_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), SMALL).unwrap();
    afc(
        &["train", "--config", "run.toml", "--output-dir", "out", "--seed", "3"],
        d,
    );
    for f in ["policy_0.ckpt", "policy_2.ckpt", "reward_curve.csv", "train_log.csv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let curve = std::fs::read_to_string(d.join("out/reward_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2 * 2 * 3);
    afc(
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--checkpoint",
            "out/policy_2.ckpt",
            "--output-dir",
            "eval",
            "--duration",
            "8",
        ],
        d,
    );
    afc(
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--zero-policy",
            "--output-dir",
            "zero",
            "--duration",
            "8",
        ],
        d,
    );
    let out = afc(
        &[
            "analyze",
            "--input",
            "eval",
            "--baseline",
            "zero",
            "--transient-cut",
            "1",
        ],
        d,
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("eval/summary.json")).unwrap()).unwrap();
    assert!(summary["summary"]["c_d_mean"].as_f64().unwrap() > 0.0);
    assert!(summary["deltas"]["c_d"].is_number());
    assert!(String::from_utf8_lossy(&out.stdout).contains("lift_peak"));
    let psd = std::fs::read_to_string(d.join("eval/psd.csv")).unwrap();
    assert!(psd.starts_with("St,power"));
}

#[test]
fn evaluate_rejects_checkpoint_of_wrong_size() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), SMALL).unwrap();
    let ck = afc_core::agent::Checkpoint::zero_policy(5, 1, &[4]);
    afc_core::agent::save_checkpoint(&d.join("bad.ckpt"), &ck).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(["evaluate", "--config", "run.toml", "--checkpoint", "bad.ckpt"])
        .current_dir(d)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("policy input"));
}

#[test]
fn cylinder_without_baseline_names_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "env_kind = \"cylinder\"\nn_marl = 1\nn_cfd = 1\n[cylinder]\nbaseline_dir = \"nowhere\"\n";
    std::fs::write(d.join("cyl.toml"), cfg).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(["train", "--config", "cyl.toml"])
        .current_dir(d)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("afc baseline"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn external_socket_workers_match_in_process_training() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    // Top-level keys must precede tables.
    let socket = format!("mode = \"socket\"\nspawn_workers = false\nlisten = \"127.0.0.1:{port}\"\n{SMALL}");
    std::fs::write(d.join("sock.toml"), socket).unwrap();
    std::fs::write(d.join("run.toml"), SMALL).unwrap();
    let coordinator = Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(["train", "--config", "sock.toml", "--output-dir", "sock"])
        .current_dir(d)
        .spawn()
        .unwrap();
    let addr = format!("127.0.0.1:{port}");
    let workers: Vec<_> = (0..2)
        .map(|id| {
            Command::new(env!("CARGO_BIN_EXE_afc"))
                .args([
                    "worker",
                    "--config",
                    "run.toml",
                    "--connect",
                    &addr,
                    "--cfd-id",
                    &id.to_string(),
                ])
                .current_dir(d)
                .spawn()
                .unwrap()
        })
        .collect();
    assert!(coordinator.wait_with_output().unwrap().status.success());
    for w in workers {
        assert!(w.wait_with_output().unwrap().status.success());
    }
    afc(&["train", "--config", "run.toml", "--output-dir", "local"], d);
    for f in ["reward_curve.csv", "policy_2.ckpt"] {
        assert_eq!(
            std::fs::read(d.join("sock").join(f)).unwrap(),
            std::fs::read(d.join("local").join(f)).unwrap(),
            "{f}"
        );
    }
}
