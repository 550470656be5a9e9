//! Exit-gate checks. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails. Run with `--nocapture` to see the lines.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use afc_core::agent::*;
use afc_core::analysis::*;
use afc_core::envs::run_baseline;
use afc_core::orchestrator::*;
use afc_core::reward::*;
use afc_core::solver2d::*;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn criterion_1() -> Outcome {
    let cfg: RewardConfig<f64> = RewardConfig {
        c_d_baseline: 0.2095,
        c_l_baseline: 0.7642,
        alpha: 0.3,
        beta: 0.5,
        gamma: 0.8,
    };
    let zero = local_reward(0.2095, 0.7642, 0.7642, &cfg);
    let fixture = local_reward(0.0739, 1.3685, 1.3685, &cfg);
    let drag_only = RewardConfig {
        alpha: 0.0,
        beta: 0.0,
        ..cfg.clone()
    };
    let minus_one = local_reward(0.2095 + 1.0, 0.3, -0.4, &drag_only);
    let r = [1.0f64, 2.0, 3.0];
    let blended = global_reward(&r, 0, 0.8);
    let local_limit = global_rewards(&r, 1.0);
    let global_limit = global_rewards(&r, 0.0);
    let ok = zero.abs() <= 1e-12
        && (fixture - 0.43775).abs() <= 1e-12
        && (minus_one + 1.0).abs() <= 1e-12
        && (blended - 1.2).abs() <= 1e-12
        && local_limit.iter().zip(&r).all(|(a, b)| (a - b).abs() <= 1e-12)
        && global_limit.iter().all(|x| (x - 2.0).abs() <= 1e-12);
    check(
        ok,
        format!("r(baseline) = {zero:e}, r(fixture) = {fixture:.12}, R_0 = {blended:.12}"),
    )
}

fn constant_summary(c_l: f64, c_d: f64) -> AeroSummary<f64> {
    let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
    let lift = TimeSeries::from_fn(t.clone(), |_| c_l).unwrap();
    let drag = TimeSeries::from_fn(t, |_| c_d).unwrap();
    aero_summary(&lift, &drag, 0.0, 10.0).unwrap()
}

fn criterion_2() -> Outcome {
    let base_means = constant_summary(0.7642, 0.2095);
    let drl_means = constant_summary(1.3685, 0.0739);
    let base = AeroSummary::from_means(base_means.c_l_mean, base_means.c_d_mean, 0.0334).unwrap();
    let drl = AeroSummary::from_means(drl_means.c_l_mean, drl_means.c_d_mean, 0.0205).unwrap();
    let d = deltas(&drl, &base).unwrap();
    let ok = (base.efficiency - 3.648).abs() < 5e-4
        && (drl.efficiency - 18.52).abs() < 5e-3
        && (d.c_l - 79.0).abs() <= 1.0
        && (d.c_d + 65.0).abs() <= 1.0
        && (d.c_l_rms + 39.0).abs() <= 1.0
        && (d.efficiency - 408.0).abs() <= 1.0;
    check(
        ok,
        format!(
            "E = {:.3} / {:.2}; dC_l {:+.1}%, dC_d {:+.1}%, dC_l,rms {:+.1}%, dE {:+.1}%",
            base.efficiency, drl.efficiency, d.c_l, d.c_d, d.c_l_rms, d.efficiency
        ),
    )
}

fn taylor_green_error(n: usize) -> f64 {
    let l = 2.0 * PI;
    let grid = Grid::new(n, n, l, l, [0.0, 0.0]).unwrap();
    let cfg = SolverConfig {
        re: 10.0,
        boundary: Boundary::Periodic,
        poisson_tol: 1e-11,
        cfl: 0.4,
        ..SolverConfig::<f64>::default()
    };
    let decay = |t: f64| (-2.0 / cfg.re * t).exp();
    let mut f = FlowField::zeros(grid.clone());
    f.u = Array2::from_shape_fn(f.u.raw_dim(), |(i, j)| {
        let [x, y] = grid.u_face(i, j);
        x.sin() * y.cos()
    });
    f.v = Array2::from_shape_fn(f.v.raw_dim(), |(i, j)| {
        let [x, y] = grid.v_face(i, j);
        -x.cos() * y.sin()
    });
    let mut solver = Solver::new(grid.clone(), cfg.clone()).unwrap();
    let steps = (1.0 / solver.stable_dt(&f, None)).ceil() as usize;
    for _ in 0..steps {
        f = solver.step(&f, None, 1.0 / steps as f64).unwrap();
    }
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            let [x, y] = grid.u_face(i, j);
            err += (f.u[[i, j]] - x.sin() * y.cos() * decay(f.time)).powi(2);
            let [x, y] = grid.v_face(i, j);
            err += (f.v[[i, j]] + x.cos() * y.sin() * decay(f.time)).powi(2);
        }
    }
    (err / (n * n) as f64).sqrt()
}

fn criterion_3() -> Outcome {
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| taylor_green_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let cfg = RunConfig::from_file(&configs_dir().join("cylinder.toml")).unwrap();
    let (t_end, window) = (cfg.baseline.t_end, cfg.baseline.window);
    assert!(window >= 100.0);
    let run = run_baseline(&cfg.cylinder, t_end, window, cfg.episode.t_act(), |_| {}).unwrap();
    let t_last = run.record.last().unwrap().t;
    let a = analyze_forces(&run.record, None, t_last - window).unwrap();
    let st = a.lift_peak.map_or(f64::NAN, |p| p.strouhal);
    let ok = orders.iter().all(|&o| o >= 1.9)
        && (1.25..=1.40).contains(&a.summary.c_d_mean)
        && (0.155..=0.175).contains(&st);
    check(
        ok,
        format!(
            "Taylor-Green orders {:.2}/{:.2}; cylinder C_d = {:.4}, St = {st:.4} over t in [{:.0}, {:.0}]",
            orders[0], orders[1], a.summary.c_d_mean, a.t_start, a.t_end
        ),
    )
}

fn toy_networks() -> (Policy<f64>, MlpParams<f64>) {
    let policy = Policy {
        actor: MlpParams {
            layers: vec![
                Layer {
                    w: array![[0.7]],
                    b: array![-0.2],
                    act: Activation::Tanh,
                },
                Layer {
                    w: array![[1.3]],
                    b: array![0.1],
                    act: Activation::Linear,
                },
            ],
        },
        log_std: vec![-0.4],
    };
    let critic = MlpParams {
        layers: vec![
            Layer {
                w: array![[-0.5]],
                b: array![0.3],
                act: Activation::Tanh,
            },
            Layer {
                w: array![[0.9]],
                b: array![-0.1],
                act: Activation::Linear,
            },
        ],
    };
    (policy, critic)
}

/// Largest relative error over entries whose absolute difference exceeds
/// 1e-10, and the largest absolute difference.
fn worst_gradient_error() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = PpoConfig {
        entropy_coef: 0.01,
        ..PpoConfig::default()
    };
    let (policy, critic) = toy_networks();
    let (mut worst, mut worst_abs): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let b = 6;
        let batch = PpoBatch {
            obs: Array2::from_shape_fn((b, 1), |_| rng.random_range(-1.5..1.5)),
            raw: Array2::from_shape_fn((b, 1), |_| rng.random_range(-1.0..1.0)),
            old_log_prob: Array1::from_shape_fn(b, |_| rng.random_range(-1.2..-0.6)),
            advantages: Array1::from_shape_fn(b, |_| rng.random_range(-1.0..1.0)),
            returns: Array1::from_shape_fn(b, |_| rng.random_range(-1.0..1.0)),
        };
        let (_, g) = ppo_loss_and_grad(&policy, &critic, &batch, &cfg).unwrap();
        let mut analytic = g.actor.params();
        analytic.extend_from_slice(&g.log_std);
        analytic.extend(g.critic.params());
        let mut base = policy.actor.params();
        base.extend_from_slice(&policy.log_std);
        base.extend(critic.params());
        let loss = |v: &[f64]| {
            let (mut p, mut c) = (policy.clone(), critic.clone());
            p.actor.set_params(&v[..4]);
            p.log_std = vec![v[4]];
            c.set_params(&v[5..]);
            ppo_loss_and_grad(&p, &c, &batch, &cfg).unwrap().0.total
        };
        let h = 1e-5;
        for k in 0..base.len() {
            let (mut up, mut dn) = (base.clone(), base.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            let diff = (fd - analytic[k]).abs();
            worst_abs = worst_abs.max(diff);
            if diff > 1e-10 {
                worst = worst.max(diff / fd.abs().max(analytic[k].abs()));
            }
        }
    }
    (worst, worst_abs)
}

fn zero_advantage_is_stationary() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        hidden: vec![16, 16],
        minibatch: 8,
        epochs: 4,
        ..PpoConfig::default()
    };
    let mut agent = PpoAgent::new(1, 1, 1.0, cfg, &mut rng).unwrap();
    // Value equal to the one-step return gives zero advantage everywhere.
    let trajs: Vec<Trajectory<f64>> = (0..20)
        .map(|k| {
            let obs = vec![k as f64 * 0.1];
            let a = sample_action(&policy_forward(&agent.policy, &obs).unwrap(), &mut rng, 1.0);
            let r = 0.3 * k as f64;
            Trajectory {
                transitions: vec![Transition {
                    obs,
                    raw_action: a.raw,
                    log_prob: a.log_prob,
                    value: r,
                    reward: r,
                    done: true,
                }],
            }
        })
        .collect();
    let before = agent.policy.clone();
    let report = agent.update(&trajs, &mut rng).unwrap();
    report.aborted.is_none() && agent.policy == before
}

fn bandit_action() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = PpoConfig {
        hidden: vec![32, 32],
        minibatch: 32,
        lr: 1e-3,
        entropy_coef: 0.0,
        ..PpoConfig::default()
    };
    let mut agent = PpoAgent::new(1, 1, 1.0, cfg, &mut rng).unwrap();
    let obs = vec![1.0];
    for _ in 0..200 {
        let trajs: Vec<Trajectory<f64>> = (0..64)
            .map(|_| {
                let a = sample_action(&policy_forward(&agent.policy, &obs).unwrap(), &mut rng, 1.0);
                let reward = -(a.bounded[0] - 0.3f64).powi(2);
                let value = value_forward(&agent.critic, &obs).unwrap();
                Trajectory {
                    transitions: vec![Transition {
                        obs: obs.clone(),
                        raw_action: a.raw,
                        log_prob: a.log_prob,
                        value,
                        reward,
                        done: true,
                    }],
                }
            })
            .collect();
        assert!(agent.update(&trajs, &mut rng).unwrap().aborted.is_none());
    }
    deterministic_action(&policy_forward(&agent.policy, &obs).unwrap(), 1.0)[0]
}

fn criterion_4() -> Outcome {
    let (grad, grad_abs) = worst_gradient_error();
    let stationary = zero_advantage_is_stationary();
    let action = bandit_action();
    let ok = grad <= 1e-4 && stationary && (action - 0.3).abs() <= 0.05;
    check(ok, format!("max rel. gradient error {grad:.1e} (max abs. {grad_abs:.1e}); zero-advantage actor unchanged: {stationary}; bandit action {action:.4} (optimum 0.3)"))
}

fn criterion_5() -> Outcome {
    let base_cfg = RunConfig::from_file(&configs_dir().join("oscillator.toml")).unwrap();
    assert_eq!((base_cfg.n_marl, base_cfg.n_cfd, base_cfg.n_training_steps), (3, 4, 30));
    let mut lines = Vec::new();
    let mut passed = 0;
    for seed in 0..3 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            seed,
            output_dir: dir.path().to_path_buf(),
            ..base_cfg.clone()
        };
        let summary = train(&cfg, |_, _| {}).unwrap();
        let trained = evaluate(&cfg, &load_checkpoint(&summary.final_checkpoint).unwrap(), 40.0, None).unwrap();
        let zero = evaluate(&cfg, &Checkpoint::zero_policy(6, 1, &cfg.ppo.hidden), 40.0, None).unwrap();
        let reduction = 1.0 - trained.summary.c_d_mean / zero.summary.c_d_mean;
        passed += usize::from(reduction >= 0.5);
        lines.push(format!(
            "seed {seed}: {:.3} -> {:.3} ({:.0}%)",
            zero.summary.c_d_mean,
            trained.summary.c_d_mean,
            100.0 * reduction
        ));
    }
    check(
        passed >= 2,
        format!("sum |A|^2 reduced >= 50% in {passed}/3 seeds [{}]", lines.join("; ")),
    )
}

fn criterion_6() -> Outcome {
    let steps = 3;
    let run = |dir: &std::path::Path| {
        let cfg = RunConfig {
            n_cfd: 10,
            n_marl: 3,
            n_training_steps: steps,
            seed: 42,
            output_dir: dir.to_path_buf(),
            ppo: PpoConfig {
                hidden: vec![32, 32],
                ..PpoConfig::default()
            },
            ..RunConfig::default()
        };
        let mut shapes_ok = true;
        let mut fingerprints = Vec::new();
        let summary = train(&cfg, |ep, _| {
            shapes_ok &= ep.trajectories.len() == 30
                && ep
                    .trajectories
                    .iter()
                    .all(|k| k.trajectory.transitions.len() == cfg.episode.n_actions);
            fingerprints.push(ep.fingerprint());
        })
        .unwrap();
        let rows = read_reward_curve_csv(&dir.join("reward_curve.csv")).unwrap().len();
        let files: Vec<Vec<u8>> = ["reward_curve.csv", "train_log.csv"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap())
            .chain(std::iter::once(std::fs::read(&summary.final_checkpoint).unwrap()))
            .collect();
        (shapes_ok, rows, fingerprints, files)
    };
    let (a_dir, b_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run(a_dir.path());
    let b = run(b_dir.path());
    let reproducible = a.2 == b.2 && a.3 == b.3;
    let ok = a.0 && b.0 && a.1 == 30 * steps && reproducible;
    check(ok, format!("30 x 40 trajectories every episode: {}; {} curve rows after {steps} steps; bitwise reproducible: {reproducible}", a.0 && b.0, a.1))
}

fn random_message(rng: &mut ChaCha8Rng) -> WireMessage {
    let kinds = [
        MessageKind::Hello,
        MessageKind::State,
        MessageKind::Action,
        MessageKind::Reward,
        MessageKind::EpisodeEnd,
        MessageKind::Shutdown,
    ];
    let n = if rng.random_bool(0.1) {
        rng.random_range(0..2000)
    } else {
        rng.random_range(0..40)
    };
    WireMessage::new(
        kinds[rng.random_range(0..kinds.len())],
        rng.random(),
        rng.random(),
        rng.random(),
        (0..n).map(|_| f64::from_bits(rng.random())).collect(),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut roundtrip_failures, mut truncation_failures) = (0, 0);
    for _ in 0..10_000 {
        let msg = random_message(&mut rng);
        let bytes = encode_message(&msg).unwrap();
        match decode_message(&bytes) {
            Ok((back, used)) => {
                let same = used == bytes.len()
                    && back.kind == msg.kind
                    && (back.cfd_id, back.marl_id, back.step) == (msg.cfd_id, msg.marl_id, msg.step)
                    && back
                        .payload
                        .iter()
                        .map(|x| x.to_bits())
                        .eq(msg.payload.iter().map(|x| x.to_bits()));
                roundtrip_failures += usize::from(!same);
            }
            Err(_) => roundtrip_failures += 1,
        }
        let cut = rng.random_range(0..bytes.len());
        truncation_failures += usize::from(!matches!(
            decode_message(&bytes[..cut]),
            Err(FrameError::Truncated { .. })
        ));
    }
    check(
        roundtrip_failures == 0 && truncation_failures == 0,
        format!(
            "10000 frames: {roundtrip_failures} roundtrip failures, {truncation_failures} truncations not rejected"
        ),
    )
}

fn criterion_8() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_file(&configs_dir().join("cylinder_coarse.toml")).unwrap();
    assert_eq!((cfg.n_marl, cfg.n_cfd, cfg.n_training_steps), (1, 2, 10));
    cfg.cylinder.baseline_dir = base.path().to_path_buf();
    cfg.output_dir = out.path().to_path_buf();
    run_baseline(
        &cfg.cylinder,
        cfg.baseline.t_end,
        cfg.baseline.window,
        cfg.episode.t_act(),
        |_| {},
    )
    .unwrap()
    .write(base.path())
    .unwrap();
    let summary = train(&cfg, |_, _| {}).unwrap();
    let trained = evaluate(
        &cfg,
        &load_checkpoint(&summary.final_checkpoint).unwrap(),
        cfg.episode.t_eps,
        None,
    )
    .unwrap();
    let obs = trained.episode.trajectories[0].trajectory.transitions[0].obs.len();
    let zero = evaluate(
        &cfg,
        &Checkpoint::zero_policy(obs, 1, &cfg.ppo.hidden),
        cfg.episode.t_eps,
        None,
    )
    .unwrap();
    check(
        trained.mean_reward > zero.mean_reward,
        format!(
            "mean episode reward trained {:.5} vs zero action {:.5}",
            trained.mean_reward, zero.mean_reward
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("reward arithmetic", criterion_1),
        ("aerodynamic deltas", criterion_2),
        ("solver verification", criterion_3),
        ("PPO correctness", criterion_4),
        ("MARL learning on the oscillator lattice", criterion_5),
        ("orchestration accounting", criterion_6),
        ("wire protocol", criterion_7),
        ("cylinder end-to-end smoke", criterion_8),
    ];
    let results: Vec<(Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(_, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
                        let msg = e
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                        Err(format!("panicked: {}", msg.unwrap_or_default()))
                    });
                    (r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    // Written to the raw handle so the lines show up even when libtest captures output.
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    let mut failed = Vec::new();
    for (k, ((name, _), (r, secs))) in criteria.iter().zip(&results).enumerate() {
        let (verdict, d) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(k + 1);
                ("FAIL", d)
            }
        };
        writeln!(out, "criterion {} ({name}): {verdict} [{secs:.1} s] {d}", k + 1).unwrap();
    }
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
