use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    partition_observation, period_means, EnvError, Environment, EpisodeConfig, Lifecycle, Observation, PseudoEnvView,
    StepOutcome,
};
use crate::reward::{local_reward, ForceSample, RewardConfig, RunningLiftMean};
use crate::Real;

/// Ring of Stuart–Landau oscillators
/// `dA_k/dt = (sigma + i omega) A_k - |A_k|^2 A_k + kappa (A_{k+1} + A_{k-1} - 2 A_k) + b a_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorLatticeConfig<T> {
    pub n_osc: usize,
    pub sigma: T,
    pub omega: T,
    pub kappa: T,
    pub b: T,
    pub noise_std: T,
    pub dt_int: T,
}

impl<T: Real> Default for OscillatorLatticeConfig<T> {
    fn default() -> Self {
        Self {
            n_osc: 3,
            sigma: T::one(),
            omega: T::one(),
            kappa: T::lit(0.1),
            b: T::one(),
            noise_std: T::lit(0.01),
            dt_int: T::lit(0.01),
        }
    }
}

impl<T: Real> OscillatorLatticeConfig<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = self.n_osc >= 1
            && self.sigma > T::zero()
            && self.dt_int > T::zero()
            && self.noise_std >= T::zero()
            && [self.sigma, self.omega, self.kappa, self.b, self.noise_std, self.dt_int]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(EnvError::Setup(format!(
                "oscillator lattice needs n_osc >= 1, sigma > 0, dt_int > 0 (got {}, {}, {})",
                self.n_osc,
                self.sigma.as_f64(),
                self.dt_int.as_f64()
            )))
        }
    }

    /// Amplitude of the unforced limit cycle.
    pub fn limit_radius(&self) -> T {
        self.sigma.sqrt()
    }
}

fn rhs<T: Real>(a: &[Complex<T>], act: &[T], cfg: &OscillatorLatticeConfig<T>) -> Vec<Complex<T>> {
    let n = a.len();
    let lin = Complex::new(cfg.sigma, cfg.omega);
    (0..n)
        .map(|k| {
            let left = a[(k + n - 1) % n];
            let right = a[(k + 1) % n];
            let ak = a[k];
            lin * ak - ak * ak.norm_sqr()
                + (left + right - ak * T::lit(2.0)) * cfg.kappa
                + Complex::new(cfg.b * act[k], T::zero())
        })
        .collect()
}

/// One classical RK4 step with actions held constant. Noise is not applied
/// here; the environment adds it separately.
pub fn oscillator_step<T: Real>(
    state: &[Complex<T>],
    actions: &[T],
    cfg: &OscillatorLatticeConfig<T>,
    dt: T,
) -> Result<Vec<Complex<T>>, EnvError> {
    if state.len() != actions.len() {
        return Err(EnvError::Setup(format!(
            "{} oscillators but {} actions",
            state.len(),
            actions.len()
        )));
    }
    if !(dt > T::zero()) || dt > cfg.dt_int {
        return Err(EnvError::Setup(format!(
            "integration step {} outside (0, {}]",
            dt.as_f64(),
            cfg.dt_int.as_f64()
        )));
    }
    let axpy = |x: &[Complex<T>], k: &[Complex<T>], h: T| -> Vec<Complex<T>> {
        x.iter().zip(k).map(|(&x, &k)| x + k * h).collect()
    };
    let half = dt * T::lit(0.5);
    let k1 = rhs(state, actions, cfg);
    let k2 = rhs(&axpy(state, &k1, half), actions, cfg);
    let k3 = rhs(&axpy(state, &k2, half), actions, cfg);
    let k4 = rhs(&axpy(state, &k3, dt), actions, cfg);
    let sixth = dt / T::lit(6.0);
    let out: Vec<Complex<T>> = (0..state.len())
        .map(|k| state[k] + (k1[k] + (k2[k] + k3[k]) * T::lit(2.0) + k4[k]) * sixth)
        .collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(EnvError::Diverged { time: f64::NAN });
    }
    Ok(out)
}

/// Each oscillator is one pseudo-environment with sensors `[Re A, Im A]`,
/// lift `Re A` and drag `|A|^2`.
pub struct OscillatorEnv {
    cfg: OscillatorLatticeConfig<f64>,
    episode: EpisodeConfig,
    reward: RewardConfig<f64>,
    bound: f64,
    state: Vec<Complex<f64>>,
    time: f64,
    rng: ChaCha8Rng,
    lift_mean: Vec<RunningLiftMean<f64>>,
    life: Lifecycle,
}

impl OscillatorEnv {
    /// The reward baselines are the limit-cycle values: mean drag `sigma`, mean lift 0.
    pub fn new(
        cfg: OscillatorLatticeConfig<f64>,
        episode: EpisodeConfig,
        reward: RewardConfig<f64>,
        bound: f64,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        episode.validate()?;
        if !(bound > 0.0) {
            return Err(EnvError::Setup(format!("action bound must be positive, got {bound}")));
        }
        let reward = RewardConfig {
            c_d_baseline: cfg.sigma,
            c_l_baseline: 0.0,
            ..reward
        };
        reward.validate()?;
        let n = cfg.n_osc;
        Ok(Self {
            cfg,
            episode,
            reward,
            bound,
            state: vec![Complex::new(0.0, 0.0); n],
            time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
            lift_mean: vec![RunningLiftMean::new(); n],
            life: Lifecycle::default(),
        })
    }

    pub fn config(&self) -> &OscillatorLatticeConfig<f64> {
        &self.cfg
    }

    pub fn reward_config(&self) -> &RewardConfig<f64> {
        &self.reward
    }

    pub fn state(&self) -> &[Complex<f64>] {
        &self.state
    }

    /// Replaces the state, e.g. to start from a chosen condition after `reset`.
    pub fn set_state(&mut self, state: Vec<Complex<f64>>) -> Result<Vec<Observation>, EnvError> {
        if state.len() != self.cfg.n_osc {
            return Err(EnvError::Setup(format!(
                "expected {} amplitudes, got {}",
                self.cfg.n_osc,
                state.len()
            )));
        }
        self.state = state;
        Ok(self.observe())
    }

    fn sensors(&self) -> Vec<f64> {
        self.state.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    fn observe(&self) -> Vec<Observation> {
        let g = self.sensors();
        (0..self.cfg.n_osc)
            .map(|k| partition_observation(&g, k, self.cfg.n_osc))
            .collect()
    }
}

impl Environment for OscillatorEnv {
    fn n_marl(&self) -> usize {
        self.cfg.n_osc
    }

    fn obs_size(&self) -> usize {
        6
    }

    fn episode(&self) -> &EpisodeConfig {
        &self.episode
    }

    fn action_bound(&self) -> f64 {
        self.bound
    }

    fn time(&self) -> f64 {
        self.time
    }

    /// Starts on the synchronised limit cycle at a random phase, with small
    /// seeded amplitude and phase offsets per oscillator.
    fn reset(&mut self, seed: u64) -> Result<Vec<Observation>, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let phase0: f64 = Uniform::new(0.0, std::f64::consts::TAU)
            .expect("valid range")
            .sample(&mut self.rng);
        let r = self.cfg.limit_radius();
        self.state = (0..self.cfg.n_osc)
            .map(|_| {
                let dp: f64 = StandardNormal.sample(&mut self.rng);
                let dr: f64 = StandardNormal.sample(&mut self.rng);
                Complex::from_polar(r * (1.0 + 0.05 * dr), phase0 + 0.1 * dp)
            })
            .collect();
        self.time = 0.0;
        self.lift_mean = vec![RunningLiftMean::new(); self.cfg.n_osc];
        self.life.reset();
        Ok(self.observe())
    }

    fn step_action(&mut self, actions: &[f64]) -> Result<StepOutcome, EnvError> {
        let n = self.cfg.n_osc;
        let k_act = self.life.begin_step(&self.episode, actions, n, self.bound)?;
        let t_end = self.episode.action_end(k_act);
        let n_sub = ((t_end - self.time) / self.cfg.dt_int).ceil().max(1.0) as usize;
        let dt = (t_end - self.time) / n_sub as f64;
        let noise = self.cfg.noise_std * dt.sqrt();
        let t0 = self.time;
        let mut records = vec![Vec::with_capacity(n_sub); n];
        let mut env_record = Vec::with_capacity(n_sub);
        for m in 1..=n_sub {
            let mut next = oscillator_step(&self.state, actions, &self.cfg, dt)
                .map_err(|_| EnvError::Diverged { time: self.time })?;
            if noise > 0.0 {
                for z in &mut next {
                    let (a, b): (f64, f64) = (
                        StandardNormal.sample(&mut self.rng),
                        StandardNormal.sample(&mut self.rng),
                    );
                    *z += Complex::new(noise * a, noise * b);
                }
            }
            self.state = next;
            self.time = if m == n_sub { t_end } else { t0 + dt * m as f64 };
            let (mut sum_l, mut sum_d) = (0.0, 0.0);
            for (k, z) in self.state.iter().enumerate() {
                let s = ForceSample {
                    t: self.time,
                    c_l: z.re,
                    c_d: z.norm_sqr(),
                };
                self.lift_mean[k] = self.lift_mean[k].update(s.c_l);
                sum_l += s.c_l;
                sum_d += s.c_d;
                records[k].push(s);
            }
            env_record.push(ForceSample {
                t: self.time,
                c_l: sum_l,
                c_d: sum_d,
            });
        }
        self.life.taken += 1;
        let obs = self.observe();
        let mut views = Vec::with_capacity(n);
        let mut local_rewards = Vec::with_capacity(n);
        for (k, observation) in obs.into_iter().enumerate() {
            let (c_l, c_d) = period_means(&records[k]);
            local_rewards.push(local_reward(c_d, c_l, self.lift_mean[k].mean, &self.reward));
            views.push(PseudoEnvView {
                marl_id: k,
                observation,
                action: actions[k],
                c_l,
                c_d,
            });
        }
        Ok(StepOutcome {
            views,
            records,
            env_record,
            local_rewards,
            done: self.life.taken == self.episode.n_actions,
        })
    }
}
