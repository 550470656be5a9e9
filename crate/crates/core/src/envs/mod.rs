//! Control environments: a jet-actuated cylinder wake and a ring of coupled
//! Stuart–Landau oscillators used as a cheap multi-agent testbed.

mod cylinder;
mod oscillator;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cylinder::{
    baseline_paths, run_baseline, BaselineRun, CylinderEnv, CylinderEnvConfig, BASELINE_SNAPSHOT, BASELINE_STATS,
};
pub use oscillator::{oscillator_step, OscillatorEnv, OscillatorLatticeConfig};

use crate::reward::{ForceSample, RewardError};
use crate::solver2d::SolverError;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment setup: {0}")]
    Setup(String),
    #[error("baseline file {} not found; run `afc baseline` first", .0.display())]
    MissingBaseline(PathBuf),
    #[error("action {index} = {value} exceeds bound {bound}")]
    ActionRange { index: usize, value: f64, bound: f64 },
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
    #[error("state became non-finite at t = {time}")]
    Diverged { time: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Episode duration in convective units.
    pub t_eps: f64,
    pub n_actions: usize,
}

impl EpisodeConfig {
    pub fn new(t_eps: f64, n_actions: usize) -> Result<Self, EnvError> {
        let cfg = Self { t_eps, n_actions };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_actions == 0 || !(self.t_eps > 0.0) || !self.t_eps.is_finite() {
            return Err(EnvError::Setup(format!(
                "episode needs n_actions >= 1 and T_eps > 0 (got {}, {})",
                self.n_actions, self.t_eps
            )));
        }
        Ok(())
    }

    pub fn t_act(&self) -> f64 {
        self.t_eps / self.n_actions as f64
    }

    /// Time at which action `k` (0-based) ends. Computed from the episode
    /// length directly so the final action ends exactly at `t_eps`.
    pub fn action_end(&self, k: usize) -> f64 {
        self.t_eps * (k + 1) as f64 / self.n_actions as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: Vec<f64>,
    pub sensors_per_slice: usize,
    pub n_slices: usize,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Observation of pseudo-environment `marl_id`: its own slice of `global`
/// flanked by its periodic neighbours, ordered (left, center, right).
/// `global` holds `n_slices` consecutive slices of equal length.
pub fn partition_observation(global: &[f64], marl_id: usize, n_slices: usize) -> Observation {
    assert!(
        n_slices > 0 && marl_id < n_slices,
        "marl_id {marl_id} out of range for {n_slices} slices"
    );
    assert_eq!(
        global.len() % n_slices,
        0,
        "sensor field does not split into {n_slices} slices"
    );
    let per = global.len() / n_slices;
    let slice = |k: usize| &global[k * per..(k + 1) * per];
    let left = (marl_id + n_slices - 1) % n_slices;
    let right = (marl_id + 1) % n_slices;
    let values = [slice(left), slice(marl_id), slice(right)].concat();
    Observation {
        values,
        sensors_per_slice: per,
        n_slices: 3,
    }
}

/// What one pseudo-environment saw over the last action period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoEnvView {
    pub marl_id: usize,
    pub observation: Observation,
    pub action: f64,
    /// Period-averaged local coefficients.
    pub c_l: f64,
    pub c_d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub views: Vec<PseudoEnvView>,
    /// Per pseudo-environment force samples covering the action period.
    pub records: Vec<Vec<ForceSample<f64>>>,
    /// Whole-body force samples over the same period.
    pub env_record: Vec<ForceSample<f64>>,
    pub local_rewards: Vec<f64>,
    pub done: bool,
}

impl StepOutcome {
    pub fn observations(&self) -> Vec<Observation> {
        self.views.iter().map(|v| v.observation.clone()).collect()
    }
}

pub trait Environment: Send {
    fn n_marl(&self) -> usize;
    /// Length of one pseudo-environment observation.
    fn obs_size(&self) -> usize;
    fn episode(&self) -> &EpisodeConfig;
    fn action_bound(&self) -> f64;
    fn time(&self) -> f64;
    fn reset(&mut self, seed: u64) -> Result<Vec<Observation>, EnvError>;
    fn step_action(&mut self, actions: &[f64]) -> Result<StepOutcome, EnvError>;
}

/// Shared bookkeeping for the action counter and the bounds check.
#[derive(Clone, Debug, Default)]
struct Lifecycle {
    started: bool,
    taken: usize,
}

impl Lifecycle {
    fn reset(&mut self) {
        self.started = true;
        self.taken = 0;
    }

    fn begin_step(
        &self,
        episode: &EpisodeConfig,
        actions: &[f64],
        n_marl: usize,
        bound: f64,
    ) -> Result<usize, EnvError> {
        if !self.started {
            return Err(EnvError::Lifecycle("step_action called before reset".into()));
        }
        if self.taken >= episode.n_actions {
            return Err(EnvError::Lifecycle(format!(
                "episode finished after {} actions; reset before stepping again",
                episode.n_actions
            )));
        }
        if actions.len() != n_marl {
            return Err(EnvError::Setup(format!(
                "expected {n_marl} actions, got {}",
                actions.len()
            )));
        }
        for (index, &value) in actions.iter().enumerate() {
            if !value.is_finite() || value.abs() > bound {
                return Err(EnvError::ActionRange { index, value, bound });
            }
        }
        Ok(self.taken)
    }
}

fn period_means(record: &[ForceSample<f64>]) -> (f64, f64) {
    let n = record.len().max(1) as f64;
    let c_l = record.iter().map(|s| s.c_l).sum::<f64>() / n;
    let c_d = record.iter().map(|s| s.c_d).sum::<f64>() / n;
    (c_l, c_d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_slice_repeats() {
        let g: Vec<f64> = (0..90).map(f64::from).collect();
        let o = partition_observation(&g, 0, 1);
        assert_eq!(o.len(), 270);
        assert_eq!(o.values, [g.clone(), g.clone(), g].concat());
    }

    #[test]
    fn three_slices_wrap() {
        let g: Vec<f64> = (0..6).map(f64::from).collect();
        let o = partition_observation(&g, 0, 3);
        assert_eq!(o.values, vec![4.0, 5.0, 0.0, 1.0, 2.0, 3.0]);
        let o = partition_observation(&g, 2, 3);
        assert_eq!(o.values, vec![2.0, 3.0, 4.0, 5.0, 0.0, 1.0]);
    }

    #[test]
    fn action_times_end_on_episode_length() {
        for (t, n) in [(10.52, 120), (20.0, 40), (0.3, 7)] {
            let e = EpisodeConfig::new(t, n).unwrap();
            assert_eq!(e.action_end(n - 1), t);
            assert!((e.t_act() * n as f64 - t).abs() <= 4.0 * f64::EPSILON * t);
        }
        assert!(EpisodeConfig::new(1.0, 0).is_err());
        assert!(EpisodeConfig::new(0.0, 3).is_err());
    }
}
