//! Parallel rollouts: one coordinator thread doing batched policy inference
//! and `n_cfd` environment workers talking to it over a framed message
//! protocol, either through in-process channels or TCP.

mod protocol;
mod transport;
mod worker;

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use protocol::{
    decode_message, encode_message, frame_len, FrameError, MessageKind, ProtocolGuard, ProtocolViolation, WireMessage,
    HEADER_LEN, MAX_PAYLOAD, PROTOCOL_VERSION,
};
pub use transport::{channel_pair, ChannelLink, Link, LinkError, TcpLink};
pub use worker::run_worker;

use crate::agent::{
    deterministic_action, load_checkpoint, policy_forward, sample_action, save_checkpoint, squashed_log_prob,
    value_forward, AgentError, Checkpoint, PpoAgent, PpoConfig, Trajectory, Transition, UpdateReport,
};
use crate::analysis::{
    aero_summary, write_actions_csv, write_forces_csv, ActionSample, AeroSummary, AnalysisError, RewardCurveRow,
    TimeSeries,
};
use crate::envs::{
    CylinderEnv, CylinderEnvConfig, EnvError, Environment, EpisodeConfig, OscillatorEnv, OscillatorLatticeConfig,
};
use crate::reward::{ForceSample, RewardConfig};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("link to worker {cfd_id}: {source}")]
    Link { cfd_id: u32, source: LinkError },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("worker {cfd_id} failed after step {}: {reason}", last_step.map_or("none".to_string(), |s| s.to_string()))]
    WorkerFailed {
        cfd_id: u32,
        last_step: Option<u32>,
        reason: String,
    },
    #[error("policy update {step} aborted ({reason}); last good checkpoint is {}", last_checkpoint.display())]
    UpdateAborted {
        step: usize,
        reason: String,
        last_checkpoint: PathBuf,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ProtocolViolation> for OrchestratorError {
    fn from(v: ProtocolViolation) -> Self {
        OrchestratorError::Protocol(v.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InProcess,
    Socket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Cylinder,
    Oscillator,
}

/// Length and averaging window of the unactuated run behind `afc baseline`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineRunConfig {
    pub t_end: f64,
    pub window: f64,
}

impl Default for BaselineRunConfig {
    fn default() -> Self {
        Self {
            t_end: 160.0,
            window: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_cfd: usize,
    pub n_marl: usize,
    pub episode: EpisodeConfig,
    pub n_training_steps: usize,
    pub seed: u64,
    pub mode: Mode,
    pub env_kind: EnvKind,
    pub reward: RewardConfig<f64>,
    pub ppo: PpoConfig<f64>,
    /// Largest allowed |U_jet| / U_inf (or oscillator forcing).
    pub action_bound: f64,
    /// Final part of each episode averaged into the reward curve.
    pub reward_window: f64,
    /// Start-up time excluded from evaluation statistics.
    pub transient_cut: f64,
    pub output_dir: PathBuf,
    /// Seconds to wait for any single worker message; 0 waits forever.
    pub worker_timeout_s: f64,
    /// In socket mode, address to listen on.
    pub listen: String,
    /// In socket mode, start the workers as local threads. When false the
    /// coordinator waits for `n_cfd` external `afc worker` processes.
    pub spawn_workers: bool,
    pub oscillator: OscillatorLatticeConfig<f64>,
    pub cylinder: CylinderEnvConfig,
    pub baseline: BaselineRunConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_cfd: 4,
            n_marl: 3,
            episode: EpisodeConfig {
                t_eps: 20.0,
                n_actions: 40,
            },
            n_training_steps: 30,
            seed: 0,
            mode: Mode::InProcess,
            env_kind: EnvKind::Oscillator,
            reward: RewardConfig::default(),
            ppo: PpoConfig::default(),
            action_bound: 1.0,
            reward_window: 5.0,
            transient_cut: 15.0,
            output_dir: PathBuf::from("run"),
            worker_timeout_s: 600.0,
            listen: "127.0.0.1:0".into(),
            spawn_workers: true,
            oscillator: OscillatorLatticeConfig::default(),
            cylinder: CylinderEnvConfig::default(),
            baseline: BaselineRunConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: Self = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: String| Err(OrchestratorError::Config(m));
        if self.n_cfd == 0 || self.n_marl == 0 {
            return bad(format!(
                "n_cfd and n_marl must be >= 1 (got {}, {})",
                self.n_cfd, self.n_marl
            ));
        }
        self.episode.validate()?;
        if !(self.action_bound > 0.0) || !(self.reward_window > 0.0) || !(self.transient_cut >= 0.0) {
            return bad("action_bound and reward_window must be positive, transient_cut non-negative".into());
        }
        if self.worker_timeout_s < 0.0 {
            return bad("worker_timeout_s must be >= 0".into());
        }
        self.reward
            .validate()
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        self.ppo.validate()?;
        match self.env_kind {
            EnvKind::Cylinder => {
                if self.n_marl != 1 {
                    return bad(format!(
                        "the cylinder environment has a single pseudo-environment (n_marl = {})",
                        self.n_marl
                    ));
                }
                self.cylinder.validate()?;
            }
            EnvKind::Oscillator => {
                if self.oscillator.n_osc != self.n_marl {
                    return bad(format!(
                        "oscillator.n_osc ({}) must equal n_marl ({})",
                        self.oscillator.n_osc, self.n_marl
                    ));
                }
                self.oscillator.validate()?;
            }
        }
        Ok(())
    }

    pub fn worker_timeout(&self) -> Option<Duration> {
        (self.worker_timeout_s > 0.0).then(|| Duration::from_secs_f64(self.worker_timeout_s))
    }
}

/// Builds the environment a worker hosts.
pub fn make_env(cfg: &RunConfig, episode: EpisodeConfig) -> Result<Box<dyn Environment>, OrchestratorError> {
    Ok(match cfg.env_kind {
        EnvKind::Oscillator => Box::new(OscillatorEnv::new(
            cfg.oscillator.clone(),
            episode,
            cfg.reward.clone(),
            cfg.action_bound,
        )?),
        EnvKind::Cylinder => Box::new(CylinderEnv::new(
            cfg.cylinder.clone(),
            episode,
            cfg.reward.clone(),
            cfg.action_bound,
        )?),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-episode seed for `stream` (a worker's `cfd_id`, or one of the
/// coordinator streams below): `splitmix64(splitmix64(splitmix64(master) ^ step) ^ stream)`.
pub fn derive_seed(master: u64, step: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ step) ^ stream)
}

const POLICY_STREAM: u64 = u64::MAX;
const UPDATE_STREAM: u64 = u64::MAX - 1;
const INIT_STREAM: u64 = u64::MAX - 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyedTrajectory {
    pub cfd_id: usize,
    pub marl_id: usize,
    pub trajectory: Trajectory<f64>,
    /// Unblended local rewards, one per action.
    pub local_rewards: Vec<f64>,
    /// Observations before normalisation, one per action.
    pub raw_observations: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub step: usize,
    /// Ordered by (cfd_id, marl_id).
    pub trajectories: Vec<KeyedTrajectory>,
    /// Whole-environment force record per worker.
    pub forces: Vec<Vec<ForceSample<f64>>>,
    /// Applied actions per worker, stamped with the start of their period.
    pub actions: Vec<Vec<ActionSample>>,
    /// Mean local reward over the final reward window, per (cfd_id, marl_id).
    pub mean_local_reward: Vec<RewardCurveRow>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl EpisodeResult {
    /// Serialised form without wall-clock time, for determinism checks.
    pub fn fingerprint(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("episode result serialises")
    }

    pub fn plain_trajectories(&self) -> Vec<Trajectory<f64>> {
        self.trajectories.iter().map(|k| k.trajectory.clone()).collect()
    }
}

struct WorkerSlot {
    cfd_id: u32,
    link: Box<dyn Link>,
    thread: Option<JoinHandle<Result<(), String>>>,
    last_step: Option<u32>,
}

/// Hosts the workers and drives episodes against a policy snapshot.
pub struct Coordinator {
    episode: EpisodeConfig,
    seed: u64,
    reward_window: f64,
    timeout: Option<Duration>,
    workers: Vec<WorkerSlot>,
    obs_size: usize,
    n_marl: usize,
}

fn spawn_local_worker(
    cfg: &RunConfig,
    episode: EpisodeConfig,
    cfd_id: u32,
    mut link: impl Link + 'static,
) -> Result<JoinHandle<Result<(), String>>, OrchestratorError> {
    let cfg = cfg.clone();
    Ok(std::thread::Builder::new()
        .name(format!("cfd-{cfd_id}"))
        .spawn(move || {
            let mut env = make_env(&cfg, episode).map_err(|e| e.to_string())?;
            run_worker(&mut link, env.as_mut(), cfd_id, cfg.reward.gamma).map_err(|e| e.to_string())
        })?)
}

impl Coordinator {
    /// Starts `n_cfd` workers for `episode` according to `cfg.mode` and
    /// completes the handshake with each.
    pub fn launch(cfg: &RunConfig, episode: EpisodeConfig, n_cfd: usize) -> Result<Self, OrchestratorError> {
        cfg.validate()?;
        episode.validate()?;
        let mut slots = Vec::with_capacity(n_cfd);
        match cfg.mode {
            Mode::InProcess => {
                for id in 0..n_cfd as u32 {
                    let (ours, theirs) = channel_pair();
                    let thread = spawn_local_worker(cfg, episode, id, theirs)?;
                    slots.push(WorkerSlot {
                        cfd_id: id,
                        link: Box::new(ours),
                        thread: Some(thread),
                        last_step: None,
                    });
                }
            }
            Mode::Socket => {
                let listener = TcpListener::bind(&cfg.listen)?;
                let addr = listener.local_addr()?.to_string();
                let mut threads = Vec::new();
                if cfg.spawn_workers {
                    for id in 0..n_cfd as u32 {
                        let link =
                            TcpLink::connect(&addr).map_err(|source| OrchestratorError::Link { cfd_id: id, source })?;
                        threads.push(Some(spawn_local_worker(cfg, episode, id, link)?));
                    }
                } else {
                    log::info!("waiting for {n_cfd} workers on {addr}");
                }
                for _ in 0..n_cfd {
                    let (stream, _) = listener.accept()?;
                    let link = TcpLink::new(stream).map_err(|source| OrchestratorError::Link {
                        cfd_id: u32::MAX,
                        source,
                    })?;
                    slots.push(WorkerSlot {
                        cfd_id: u32::MAX,
                        link: Box::new(link),
                        thread: None,
                        last_step: None,
                    });
                }
                // Threads are matched to connections after the handshake, by cfd_id.
                let mut c = Self::handshake(cfg, episode, slots)?;
                for slot in &mut c.workers {
                    if let Some(t) = threads.get_mut(slot.cfd_id as usize) {
                        slot.thread = t.take();
                    }
                }
                return Ok(c);
            }
        }
        Self::handshake(cfg, episode, slots)
    }

    fn handshake(
        cfg: &RunConfig,
        episode: EpisodeConfig,
        mut slots: Vec<WorkerSlot>,
    ) -> Result<Self, OrchestratorError> {
        let timeout = cfg.worker_timeout();
        let mut obs_size = None;
        for (k, slot) in slots.iter_mut().enumerate() {
            let hello = match slot.link.recv(timeout) {
                Ok(m) => m,
                Err(e) => {
                    let reason = join_reason(slot.thread.take()).unwrap_or_else(|| e.to_string());
                    return Err(OrchestratorError::WorkerFailed {
                        cfd_id: k as u32,
                        last_step: None,
                        reason,
                    });
                }
            };
            let ok = hello.kind == MessageKind::Hello && hello.payload.len() == 5;
            if !ok || hello.payload[0] != f64::from(PROTOCOL_VERSION) {
                return Err(OrchestratorError::Protocol(format!(
                    "bad hello from worker {}: {:?} {:?}",
                    hello.cfd_id, hello.kind, hello.payload
                )));
            }
            let (obs, act, n_marl, n_actions) = (
                hello.payload[1] as usize,
                hello.payload[2] as usize,
                hello.payload[3] as usize,
                hello.payload[4] as usize,
            );
            if act != 1 || n_marl != cfg.n_marl || n_actions != episode.n_actions || obs_size.is_some_and(|o| o != obs)
            {
                return Err(OrchestratorError::Protocol(format!(
                    "worker {} reports obs {obs}, act {act}, n_marl {n_marl}, n_actions {n_actions}; \
                     expected act 1, n_marl {}, n_actions {}",
                    hello.cfd_id, cfg.n_marl, episode.n_actions
                )));
            }
            obs_size = Some(obs);
            slot.cfd_id = hello.cfd_id;
        }
        slots.sort_by_key(|s| s.cfd_id);
        for (k, s) in slots.iter().enumerate() {
            if s.cfd_id as usize != k {
                return Err(OrchestratorError::Protocol(format!(
                    "worker ids are not 0..{}",
                    slots.len()
                )));
            }
        }
        Ok(Self {
            episode,
            seed: cfg.seed,
            reward_window: cfg.reward_window,
            timeout,
            workers: slots,
            obs_size: obs_size.unwrap_or(0),
            n_marl: cfg.n_marl,
        })
    }

    pub fn obs_size(&self) -> usize {
        self.obs_size
    }

    pub fn n_cfd(&self) -> usize {
        self.workers.len()
    }

    pub fn episode(&self) -> &EpisodeConfig {
        &self.episode
    }

    fn recv(&mut self, w: usize) -> Result<WireMessage, OrchestratorError> {
        let timeout = self.timeout;
        let slot = &mut self.workers[w];
        match slot.link.recv(timeout) {
            Ok(m) => {
                if m.cfd_id != slot.cfd_id {
                    return Err(OrchestratorError::Protocol(format!(
                        "message for cfd {} arrived on worker {}'s channel",
                        m.cfd_id, slot.cfd_id
                    )));
                }
                Ok(m)
            }
            Err(e) => {
                let reason = match e {
                    LinkError::Timeout => format!("no message within {:?}", timeout.unwrap_or_default()),
                    other => join_reason(slot.thread.take()).unwrap_or_else(|| other.to_string()),
                };
                Err(OrchestratorError::WorkerFailed {
                    cfd_id: slot.cfd_id,
                    last_step: slot.last_step,
                    reason,
                })
            }
        }
    }

    fn send(&mut self, w: usize, msg: &WireMessage) -> Result<(), OrchestratorError> {
        let slot = &mut self.workers[w];
        slot.link.send(msg).map_err(|e| {
            let reason = join_reason(slot.thread.take()).unwrap_or_else(|| e.to_string());
            OrchestratorError::WorkerFailed {
                cfd_id: slot.cfd_id,
                last_step: slot.last_step,
                reason,
            }
        })
    }

    /// Runs one synchronised episode on every worker. With `explore` the
    /// actions are sampled; otherwise the squashed mean is applied.
    pub fn run_episode(
        &mut self,
        agent: &PpoAgent<f64>,
        step: usize,
        explore: bool,
    ) -> Result<EpisodeResult, OrchestratorError> {
        if agent.obs_size() != self.obs_size || agent.act_size() != 1 {
            return Err(OrchestratorError::Agent(AgentError::Shape {
                what: "policy input".into(),
                expected: self.obs_size,
                actual: agent.obs_size(),
            }));
        }
        let started = Instant::now();
        let (n_cfd, n_marl, n_actions) = (self.workers.len(), self.n_marl, self.episode.n_actions);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, step as u64, POLICY_STREAM));
        let mut guards: Vec<Vec<ProtocolGuard>> = (0..n_cfd)
            .map(|c| {
                (0..n_marl)
                    .map(|m| ProtocolGuard::new(c as u32, m as u32, n_actions as u32))
                    .collect()
            })
            .collect();
        let mut keyed: Vec<KeyedTrajectory> = (0..n_cfd * n_marl)
            .map(|k| KeyedTrajectory {
                cfd_id: k / n_marl,
                marl_id: k % n_marl,
                trajectory: Trajectory::default(),
                local_rewards: Vec::with_capacity(n_actions),
                raw_observations: Vec::with_capacity(n_actions),
            })
            .collect();
        let mut actions = vec![Vec::with_capacity(n_actions * n_marl); n_cfd];

        for w in 0..n_cfd {
            guards[w].iter_mut().for_each(ProtocolGuard::start_episode);
            self.workers[w].last_step = None;
            let seed = derive_seed(self.seed, step as u64, w as u64);
            let payload = vec![(seed & 0xFFFF_FFFF) as f64, (seed >> 32) as f64];
            self.send(
                w,
                &WireMessage::new(MessageKind::Hello, w as u32, 0, step as u32, payload),
            )?;
        }
        let mut obs = vec![vec![Vec::new(); n_marl]; n_cfd];
        self.collect(&mut guards, &mut obs, &mut keyed, 0)?;

        for k in 0..n_actions {
            let t_start = if k == 0 { 0.0 } else { self.episode.action_end(k - 1) };
            for w in 0..n_cfd {
                for m in 0..n_marl {
                    let raw_obs = std::mem::take(&mut obs[w][m]);
                    let x = agent.normalizer.normalize(&raw_obs);
                    let out = policy_forward(&agent.policy, &x)?;
                    let value = value_forward(&agent.critic, &x)?;
                    let (raw, bounded, log_prob) = if explore {
                        let s = sample_action(&out, &mut rng, agent.bound);
                        (s.raw, s.bounded, s.log_prob)
                    } else {
                        let lp = squashed_log_prob(&out, &out.mean, agent.bound);
                        (out.mean.clone(), deterministic_action(&out, agent.bound), lp)
                    };
                    let kt = &mut keyed[w * n_marl + m];
                    kt.raw_observations.push(raw_obs);
                    kt.trajectory.transitions.push(Transition {
                        obs: x,
                        raw_action: raw,
                        log_prob,
                        value,
                        reward: f64::NAN,
                        done: k + 1 == n_actions,
                    });
                    actions[w].push(ActionSample {
                        t: t_start,
                        marl_id: m,
                        u_jet: bounded[0],
                    });
                    guards[w][m].observe(MessageKind::Action, k as u32)?;
                    self.send(
                        w,
                        &WireMessage::new(MessageKind::Action, w as u32, m as u32, k as u32, bounded),
                    )?;
                }
            }
            self.collect(&mut guards, &mut obs, &mut keyed, k + 1)?;
        }

        let mut forces = Vec::with_capacity(n_cfd);
        for w in 0..n_cfd {
            let end = self.recv(w)?;
            if end.kind != MessageKind::EpisodeEnd
                || end.payload.len() % 3 != 0
                || !guards[w].iter().all(|g| g.is_finished())
            {
                return Err(OrchestratorError::Protocol(format!(
                    "expected EpisodeEnd from worker {w}, got {:?}",
                    end.kind
                )));
            }
            forces.push(
                end.payload
                    .chunks_exact(3)
                    .map(|c| ForceSample {
                        t: c[0],
                        c_l: c[1],
                        c_d: c[2],
                    })
                    .collect(),
            );
        }

        let window_start = self.episode.t_eps - self.reward_window;
        let mean_local_reward = keyed
            .iter()
            .map(|kt| {
                let picked: Vec<f64> = (0..n_actions)
                    .filter(|&k| self.episode.action_end(k) > window_start + 1e-9 * self.episode.t_eps)
                    .map(|k| kt.local_rewards[k])
                    .collect();
                RewardCurveRow {
                    step,
                    cfd_id: kt.cfd_id,
                    marl_id: kt.marl_id,
                    mean_local_reward: picked.iter().sum::<f64>() / picked.len().max(1) as f64,
                }
            })
            .collect();
        Ok(EpisodeResult {
            step,
            trajectories: keyed,
            forces,
            actions,
            mean_local_reward,
            wall_clock: started.elapsed(),
        })
    }

    /// Receives the messages answering step `k - 1` (or the initial states
    /// for `k == 0`) from every worker in order.
    fn collect(
        &mut self,
        guards: &mut [Vec<ProtocolGuard>],
        obs: &mut [Vec<Vec<f64>>],
        keyed: &mut [KeyedTrajectory],
        k: usize,
    ) -> Result<(), OrchestratorError> {
        let (n_marl, n_actions, obs_size) = (self.n_marl, self.episode.n_actions, self.obs_size);
        for w in 0..self.workers.len() {
            for _ in 0..n_marl {
                let msg = self.recv(w)?;
                let m = msg.marl_id as usize;
                if m >= n_marl {
                    return Err(OrchestratorError::Protocol(format!(
                        "worker {w} sent marl_id {m} >= {n_marl}"
                    )));
                }
                guards[w][m].observe(msg.kind, msg.step)?;
                let final_reward = k == n_actions;
                let expected_len = if final_reward {
                    2
                } else if k == 0 {
                    obs_size
                } else {
                    obs_size + 2
                };
                if msg.payload.len() != expected_len {
                    return Err(OrchestratorError::Protocol(format!(
                        "{:?} from ({w}, {m}) has {} values, expected {expected_len}",
                        msg.kind,
                        msg.payload.len()
                    )));
                }
                let mut payload = msg.payload;
                if k > 0 {
                    let r = payload.split_off(payload.len() - 2);
                    let kt = &mut keyed[w * n_marl + m];
                    kt.trajectory.transitions[k - 1].reward = r[0];
                    kt.local_rewards.push(r[1]);
                }
                if !final_reward {
                    obs[w][m] = payload;
                }
            }
            if k > 0 {
                self.workers[w].last_step = Some(k as u32 - 1);
            }
        }
        Ok(())
    }

    /// Stops the workers and reports the first worker error, if any.
    pub fn shutdown(mut self) -> Result<(), OrchestratorError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), OrchestratorError> {
        let mut first = None;
        for slot in &mut self.workers {
            let _ = slot.link.send(&WireMessage::shutdown());
            if let Some(t) = slot.thread.take() {
                if let Ok(Err(reason)) = t.join() {
                    first.get_or_insert(OrchestratorError::WorkerFailed {
                        cfd_id: slot.cfd_id,
                        last_step: slot.last_step,
                        reason,
                    });
                }
            }
        }
        first.map_or(Ok(()), Err)
    }
}

impl Drop for Coordinator {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn join_reason(thread: Option<JoinHandle<Result<(), String>>>) -> Option<String> {
    match thread?.join() {
        Ok(Err(reason)) => Some(reason),
        Ok(Ok(())) => Some("worker exited".into()),
        Err(_) => Some("worker thread panicked".into()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub final_checkpoint: PathBuf,
    pub curve: Vec<RewardCurveRow>,
    pub log: Vec<TrainLogRow>,
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("policy_{step}.ckpt"))
}

fn append_line(path: &Path, line: &str) -> Result<(), OrchestratorError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

fn snapshot(agent: &PpoAgent<f64>) -> Checkpoint {
    Checkpoint {
        policy: agent.policy.clone(),
        critic: agent.critic.clone(),
        normalizer: agent.normalizer.clone(),
    }
}

/// Episode / update loop. Writes `policy_<k>.ckpt` after every update
/// (`policy_0.ckpt` is the initial policy), `reward_curve.csv` and
/// `train_log.csv` into `cfg.output_dir`.
pub fn train(
    cfg: &RunConfig,
    mut progress: impl FnMut(&EpisodeResult, &UpdateReport<f64>),
) -> Result<TrainSummary, OrchestratorError> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut coordinator = Coordinator::launch(cfg, cfg.episode, cfg.n_cfd)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, INIT_STREAM));
    let mut agent = PpoAgent::new(
        coordinator.obs_size(),
        1,
        cfg.action_bound,
        cfg.ppo.clone(),
        &mut init_rng,
    )?;
    let mut last = checkpoint_path(dir, 0);
    save_checkpoint(&last, &snapshot(&agent))?;
    let curve_path = dir.join("reward_curve.csv");
    let log_path = dir.join("train_log.csv");
    fs::write(&curve_path, "step,cfd_id,marl_id,mean_local_reward\n")?;
    fs::write(
        &log_path,
        "step,policy_loss,value_loss,entropy,approx_kl,clip_fraction,mean_reward\n",
    )?;
    let mut curve = Vec::new();
    let mut log = Vec::new();
    for step in 0..cfg.n_training_steps {
        let result = coordinator.run_episode(&agent, step, true)?;
        for row in &result.mean_local_reward {
            append_line(
                &curve_path,
                &format!(
                    "{},{},{},{:.16e}",
                    row.step, row.cfd_id, row.marl_id, row.mean_local_reward
                ),
            )?;
            curve.push(*row);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, step as u64, UPDATE_STREAM));
        let report = agent.update(&result.plain_trajectories(), &mut rng)?;
        if let Some(reason) = report.aborted.clone() {
            return Err(OrchestratorError::UpdateAborted {
                step,
                reason,
                last_checkpoint: last,
            });
        }
        for kt in &result.trajectories {
            kt.raw_observations.iter().for_each(|o| agent.normalizer.update(o));
        }
        last = checkpoint_path(dir, step + 1);
        save_checkpoint(&last, &snapshot(&agent))?;
        let mean_reward = result
            .mean_local_reward
            .iter()
            .map(|r| r.mean_local_reward)
            .sum::<f64>()
            / result.mean_local_reward.len() as f64;
        let row = TrainLogRow {
            step,
            policy_loss: report.loss.policy,
            value_loss: report.loss.value,
            entropy: report.loss.entropy,
            approx_kl: report.loss.approx_kl,
            clip_fraction: report.loss.clip_fraction,
            mean_reward,
        };
        append_line(
            &log_path,
            &format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                row.step,
                row.policy_loss,
                row.value_loss,
                row.entropy,
                row.approx_kl,
                row.clip_fraction,
                row.mean_reward
            ),
        )?;
        log.push(row);
        progress(&result, &report);
    }
    coordinator.shutdown()?;
    Ok(TrainSummary {
        final_checkpoint: last,
        curve,
        log,
    })
}

#[derive(Clone, Debug)]
pub struct EvaluationReport {
    pub forces: Vec<ForceSample<f64>>,
    pub actions: Vec<ActionSample>,
    /// Statistics of the whole-environment record after the transient cut.
    pub summary: AeroSummary<f64>,
    /// Mean local reward over every action and pseudo-environment.
    pub mean_reward: f64,
    pub episode: EpisodeResult,
}

/// Runs the deterministic policy from `checkpoint` for `duration` on one
/// worker (seeded from `cfg.seed`). Writes `forces.csv` and `actions.csv`
/// into `out_dir` when given.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: &Checkpoint,
    duration: f64,
    out_dir: Option<&Path>,
) -> Result<EvaluationReport, OrchestratorError> {
    cfg.validate()?;
    checkpoint.validate()?;
    let t_act = cfg.episode.t_act();
    let n_actions = ((duration / t_act).round() as usize).max(1);
    let episode = EpisodeConfig::new(t_act * n_actions as f64, n_actions)?;
    if cfg.transient_cut >= episode.t_eps {
        return Err(OrchestratorError::Config(format!(
            "transient cut {} leaves nothing of a {}-unit evaluation",
            cfg.transient_cut, episode.t_eps
        )));
    }
    // External workers are configured for training episodes, so evaluation always hosts its own.
    let local = RunConfig {
        spawn_workers: true,
        ..cfg.clone()
    };
    let mut coordinator = Coordinator::launch(&local, episode, 1)?;
    let agent = PpoAgent::from_parts(
        checkpoint.policy.clone(),
        checkpoint.critic.clone(),
        checkpoint.normalizer.clone(),
        cfg.ppo.clone(),
        cfg.action_bound,
    );
    let result = coordinator.run_episode(&agent, 0, false)?;
    coordinator.shutdown()?;
    let forces = result.forces[0].clone();
    let actions = result.actions[0].clone();
    let t: Vec<f64> = forces.iter().map(|s| s.t).collect();
    let lift = TimeSeries::new(t.clone(), forces.iter().map(|s| s.c_l).collect())?;
    let drag = TimeSeries::new(t, forces.iter().map(|s| s.c_d).collect())?;
    let summary = aero_summary(&lift, &drag, cfg.transient_cut, episode.t_eps)?;
    let all: Vec<f64> = result
        .trajectories
        .iter()
        .flat_map(|k| k.local_rewards.iter().copied())
        .collect();
    let mean_reward = all.iter().sum::<f64>() / all.len() as f64;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_forces_csv(&dir.join("forces.csv"), &forces)?;
        write_actions_csv(&dir.join("actions.csv"), &actions)?;
    }
    Ok(EvaluationReport {
        forces,
        actions,
        summary,
        mean_reward,
        episode: result,
    })
}

/// `evaluate` from a checkpoint file; rejects checkpoints whose input size
/// does not match the configured environment.
pub fn evaluate_file(
    cfg: &RunConfig,
    checkpoint: &Path,
    duration: f64,
    out_dir: Option<&Path>,
) -> Result<EvaluationReport, OrchestratorError> {
    evaluate(cfg, &load_checkpoint(checkpoint)?, duration, out_dir)
}
