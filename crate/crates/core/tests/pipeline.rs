use std::path::PathBuf;

use afc_core::agent::Checkpoint;
use afc_core::analysis::{read_actions_csv, read_forces_csv};
use afc_core::envs::{run_baseline, CylinderEnv, CylinderEnvConfig, Environment, EpisodeConfig};
use afc_core::orchestrator::{evaluate, train, EnvKind, RunConfig};
use afc_core::reward::RewardConfig;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn oscillator_reward_improves_over_training() {
    let base = RunConfig::from_file(&configs_dir().join("oscillator.toml")).unwrap();
    let mut improved = 0;
    for seed in 10..13 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            seed,
            output_dir: dir.path().to_path_buf(),
            ..base.clone()
        };
        let summary = train(&cfg, |_, _| {}).unwrap();
        let per_step = summary.log.iter().map(|r| r.mean_reward).collect::<Vec<_>>();
        let first: f64 = per_step[..5].iter().sum::<f64>() / 5.0;
        let last: f64 = per_step[per_step.len() - 5..].iter().sum::<f64>() / 5.0;
        improved += usize::from(last > first);
    }
    assert_eq!(improved, 3);
}

#[test]
fn evaluation_outputs_roundtrip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        episode: EpisodeConfig::new(4.0, 8).unwrap(),
        transient_cut: 1.0,
        ..RunConfig::default()
    };
    let ck = Checkpoint::zero_policy(6, 1, &[4]);
    let rep = evaluate(&cfg, &ck, 6.0, Some(dir.path())).unwrap();
    assert_eq!(rep.actions.len(), 12 * 3);
    assert!(rep.actions.iter().all(|a| a.u_jet == 0.0));
    assert_eq!(read_forces_csv(&dir.path().join("forces.csv")).unwrap(), rep.forces);
    assert_eq!(read_actions_csv(&dir.path().join("actions.csv")).unwrap(), rep.actions);
    let t_last = rep.forces.last().unwrap().t;
    assert!((t_last - 6.0).abs() < 1e-9, "{t_last}");
}

/// A zero-action episode started from the baseline snapshot stays on the
/// baseline: its mean drag is within two standard deviations of the
/// episode-length window means of the baseline record.
#[test]
fn zero_action_episode_reproduces_baseline_drag() {
    let dir = tempfile::tempdir().unwrap();
    let episode = EpisodeConfig::new(12.0, 60).unwrap();
    let cyl = CylinderEnvConfig {
        baseline_dir: dir.path().to_path_buf(),
        ..CylinderEnvConfig::coarse()
    };
    let run = run_baseline(&cyl, 120.0, 60.0, episode.t_act(), |_| {}).unwrap();
    run.write(dir.path()).unwrap();
    let mut env = CylinderEnv::new(cyl, episode, RewardConfig::default(), 1.0).unwrap();
    env.reset(5).unwrap();
    let mut drag = Vec::new();
    for _ in 0..episode.n_actions {
        drag.extend(env.step_action(&[0.0]).unwrap().env_record.iter().map(|s| s.c_d));
    }
    let episode_mean = drag.iter().sum::<f64>() / drag.len() as f64;

    // Means of episode-length windows sliding over the baseline window.
    let t_end = run.record.last().unwrap().t;
    let blocks: Vec<f64> = (0..=96)
        .map(|b| {
            let lo = t_end - 60.0 + 0.5 * b as f64;
            let sel: Vec<f64> = run
                .record
                .iter()
                .filter(|s| s.t > lo && s.t <= lo + 12.0)
                .map(|s| s.c_d)
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        })
        .collect();
    let m = blocks.iter().sum::<f64>() / blocks.len() as f64;
    let sd = (blocks.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (blocks.len() - 1) as f64).sqrt();
    assert!(
        (episode_mean - run.stats.c_d).abs() <= 2.0 * sd.max(1e-4),
        "episode {episode_mean}, baseline {}, block sd {sd}",
        run.stats.c_d
    );
}

#[test]
fn cylinder_run_config_requires_single_agent() {
    let mut cfg = RunConfig {
        env_kind: EnvKind::Cylinder,
        n_marl: 1,
        ..RunConfig::default()
    };
    assert!(cfg.validate().is_ok());
    cfg.n_marl = 2;
    assert!(cfg.validate().is_err());
}
