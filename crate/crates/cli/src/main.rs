use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use afc_core::agent::{load_checkpoint, Checkpoint};
use afc_core::analysis::{analyze_forces, read_forces_csv, write_forces_csv, write_psd_csv};
use afc_core::envs::{run_baseline, CylinderEnvConfig};
use afc_core::orchestrator::{evaluate, run_worker, train, EnvKind, Mode, RunConfig, TcpLink};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "afc",
    version,
    about = "Jet-actuated flow control trained with shared-policy PPO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    InProcess,
    Socket,
}

/// Flags shared by every command that reads a run configuration.
#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration (TOML). Defaults are used for anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    n_cfd: Option<usize>,
    #[arg(long)]
    mode: Option<ModeArg>,
    /// Directory holding the baseline snapshot and statistics.
    #[arg(long)]
    baseline_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(n) = self.n_cfd {
            cfg.n_cfd = n;
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::InProcess => Mode::InProcess,
                ModeArg::Socket => Mode::Socket,
            };
        }
        if let Some(d) = &self.baseline_dir {
            cfg.cylinder.baseline_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the unactuated cylinder flow and store the baseline snapshot and statistics.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Simulated time (convective units).
        #[arg(long)]
        t_end: Option<f64>,
        /// Averaging window at the end of the run.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Train a policy; writes checkpoints, reward_curve.csv and train_log.csv.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a checkpoint deterministically; writes forces.csv, actions.csv and summary.json.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Policy checkpoint. With --zero-policy instead, every action is 0.
        #[arg(long, required_unless_present = "zero_policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        zero_policy: bool,
        /// Evaluation length; defaults to one episode.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Summarise a forces.csv directory; writes summary.json and psd.csv into it.
    Analyze {
        /// Directory containing forces.csv.
        #[arg(long)]
        input: PathBuf,
        /// Directory with the baseline forces.csv, for percentage changes.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        transient_cut: f64,
    },
    /// Serve one environment to a coordinator listening on --connect.
    Worker {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        connect: String,
        #[arg(long)]
        cfd_id: u32,
    },
    /// Print the default run configuration.
    DefaultConfig {
        #[arg(long, value_enum, default_value = "oscillator")]
        env: EnvArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Oscillator,
    Cylinder,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn baseline(cfg: &RunConfig, t_end: Option<f64>, window: Option<f64>) -> Result<()> {
    let t_end = t_end.unwrap_or(cfg.baseline.t_end);
    let window = window.unwrap_or(cfg.baseline.window);
    let mut next_report = 0.0;
    let run = run_baseline(&cfg.cylinder, t_end, window, cfg.episode.t_act(), |s| {
        if s.t >= next_report {
            log::info!("t = {:.1}  C_l = {:+.4}  C_d = {:.4}", s.t, s.c_l, s.c_d);
            next_report += 10.0;
        }
    })?;
    let dir = &cfg.cylinder.baseline_dir;
    run.write(dir)?;
    write_forces_csv(&dir.join("forces.csv"), &run.record)?;
    let analysis = analyze_forces(&run.record, None, t_end - window)?;
    write_json(&dir.join("summary.json"), &analysis)?;
    println!(
        "baseline: C_d = {:.4}, C_l = {:+.4}, C_l rms = {:.4}, St = {}",
        run.stats.c_d,
        run.stats.c_l,
        run.stats.c_l_rms,
        analysis
            .lift_peak
            .map_or("n/a".into(), |p| format!("{:.4}", p.strouhal))
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, duration: Option<f64>) -> Result<()> {
    let ck = match checkpoint {
        Some(p) => load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let obs = afc_core::orchestrator::make_env(cfg, cfg.episode)?.obs_size();
            Checkpoint::zero_policy(obs, 1, &cfg.ppo.hidden)
        }
    };
    let dir = &cfg.output_dir;
    let rep = evaluate(cfg, &ck, duration.unwrap_or(cfg.episode.t_eps), Some(dir))?;
    #[derive(serde::Serialize)]
    struct Out<'a> {
        summary: &'a afc_core::analysis::AeroSummary<f64>,
        mean_reward: f64,
        transient_cut: f64,
        duration: f64,
    }
    let out = Out {
        summary: &rep.summary,
        mean_reward: rep.mean_reward,
        transient_cut: cfg.transient_cut,
        duration: rep.forces.last().map_or(0.0, |s| s.t),
    };
    write_json(&dir.join("summary.json"), &out)?;
    println!(
        "C_l = {:+.4}  C_d = {:.4}  C_l rms = {:.4}  E = {:.4}  mean reward = {:.4}",
        rep.summary.c_l_mean, rep.summary.c_d_mean, rep.summary.c_l_rms, rep.summary.efficiency, rep.mean_reward
    );
    Ok(())
}

fn analyze(input: &Path, baseline: Option<&Path>, transient_cut: f64) -> Result<()> {
    let forces = read_forces_csv(&input.join("forces.csv"))?;
    let base = baseline.map(|d| read_forces_csv(&d.join("forces.csv"))).transpose()?;
    let a = analyze_forces(&forces, base.as_deref(), transient_cut)?;
    write_json(&input.join("summary.json"), &a)?;
    if let Some(psd) = &a.lift_psd {
        write_psd_csv(&input.join("psd.csv"), psd)?;
    }
    println!("{}", serde_json::to_string_pretty(&a)?);
    Ok(())
}

/// Workers may start before the coordinator is listening.
fn connect_with_retry(addr: &str, patience: Duration) -> Result<TcpLink> {
    let start = Instant::now();
    loop {
        match TcpLink::connect(addr) {
            Ok(link) => return Ok(link),
            Err(e) if start.elapsed() > patience => return Err(e).with_context(|| format!("connecting to {addr}")),
            Err(_) => std::thread::sleep(Duration::from_millis(100)),
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Baseline { cfg, t_end, window } => {
            let cfg = cfg.load()?;
            baseline(&cfg, t_end, window)
        }
        Command::Train { cfg, steps } => {
            let mut cfg = cfg.load()?;
            if let Some(s) = steps {
                cfg.n_training_steps = s;
            }
            let summary = train(&cfg, |ep, report| {
                let n = ep.mean_local_reward.len() as f64;
                let mean = ep.mean_local_reward.iter().map(|r| r.mean_local_reward).sum::<f64>() / n;
                log::info!(
                    "step {:>4}  reward {:+.4}  policy loss {:+.4}  value loss {:.4}  kl {:.4}  ({:.1} s)",
                    ep.step,
                    mean,
                    report.loss.policy,
                    report.loss.value,
                    report.loss.approx_kl,
                    ep.wall_clock.as_secs_f64()
                );
            })?;
            println!("final checkpoint: {}", summary.final_checkpoint.display());
            Ok(())
        }
        Command::Evaluate {
            cfg,
            checkpoint,
            zero_policy,
            duration,
        } => {
            let cfg = cfg.load()?;
            if zero_policy && checkpoint.is_some() {
                bail!("--checkpoint and --zero-policy are exclusive");
            }
            run_evaluate(&cfg, checkpoint.as_deref(), duration)
        }
        Command::Analyze {
            input,
            baseline,
            transient_cut,
        } => analyze(&input, baseline.as_deref(), transient_cut),
        Command::Worker { cfg, connect, cfd_id } => {
            let cfg = cfg.load()?;
            let mut link = connect_with_retry(&connect, Duration::from_secs(30))?;
            let mut env = afc_core::orchestrator::make_env(&cfg, cfg.episode)?;
            run_worker(&mut link, env.as_mut(), cfd_id, cfg.reward.gamma)?;
            Ok(())
        }
        Command::DefaultConfig { env } => {
            let mut cfg = RunConfig::default();
            if let EnvArg::Cylinder = env {
                cfg.env_kind = EnvKind::Cylinder;
                cfg.n_marl = 1;
                cfg.cylinder = CylinderEnvConfig::default();
            }
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}
