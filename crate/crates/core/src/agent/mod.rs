//! PPO actor-critic written against `ndarray`: tanh MLPs, a tanh-squashed
//! Gaussian policy with state-independent log-std, GAE and clipped updates.

mod checkpoint;
mod mlp;
mod normalizer;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Activation, ForwardCache, Layer, MlpParams};
pub use normalizer::ObsNormalizer;

use crate::Real;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("{what} has size {actual}, expected {expected}")]
    Shape {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("trajectory {index}: {reason}")]
    Trajectory { index: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig<T> {
    pub clip_eps: T,
    pub lr: T,
    pub epochs: usize,
    /// Tuples per minibatch.
    pub minibatch: usize,
    pub discount: T,
    pub gae_lambda: T,
    pub entropy_coef: T,
    pub value_coef: T,
    pub max_grad_norm: T,
    pub hidden: Vec<usize>,
    /// Initial standard deviation of the pre-squash Gaussian.
    pub init_std: T,
}

impl<T: Real> Default for PpoConfig<T> {
    fn default() -> Self {
        Self {
            clip_eps: T::lit(0.2),
            lr: T::lit(3e-4),
            epochs: 10,
            minibatch: 30,
            discount: T::lit(0.99),
            gae_lambda: T::lit(0.95),
            entropy_coef: T::lit(1e-3),
            value_coef: T::lit(0.5),
            max_grad_norm: T::lit(0.5),
            hidden: vec![512, 512],
            init_std: T::lit(0.2),
        }
    }
}

impl<T: Real> PpoConfig<T> {
    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        let ok = self.clip_eps > T::zero()
            && self.lr > T::zero()
            && self.epochs >= 1
            && self.minibatch >= 1
            && unit(self.discount)
            && unit(self.gae_lambda)
            && self.entropy_coef >= T::zero()
            && self.value_coef >= T::zero()
            && self.max_grad_norm > T::zero()
            && self.init_std > T::zero()
            && !self.hidden.is_empty()
            && !self.hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(AgentError::Config(format!("{self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput<T> {
    /// Pre-squash mean per action dimension.
    pub mean: Vec<T>,
    pub log_std: Vec<T>,
}

/// Actor network plus the state-independent log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    pub actor: MlpParams<T>,
    pub log_std: Vec<T>,
}

fn clamp_log_std<T: Real>(x: T) -> T {
    x.max(T::lit(LOG_STD_MIN)).min(T::lit(LOG_STD_MAX))
}

fn layer_sizes(obs: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut s = vec![obs];
    s.extend_from_slice(hidden);
    s.push(out);
    s
}

impl<T: Real> Policy<T> {
    pub fn init(obs_size: usize, act_size: usize, cfg: &PpoConfig<T>, rng: &mut impl Rng) -> Result<Self, AgentError> {
        let actor = MlpParams::init(&layer_sizes(obs_size, &cfg.hidden, act_size), T::lit(0.01), rng)?;
        Ok(Self {
            actor,
            log_std: vec![clamp_log_std(cfg.init_std.ln()); act_size],
        })
    }

    /// All weights and biases zero: the mean action is zero for any input.
    pub fn zero(obs_size: usize, act_size: usize, hidden: &[usize], log_std: T) -> Self {
        Self {
            actor: MlpParams::zeros(&layer_sizes(obs_size, hidden, act_size)),
            log_std: vec![clamp_log_std(log_std); act_size],
        }
    }

    pub fn obs_size(&self) -> usize {
        self.actor.input_size()
    }

    pub fn act_size(&self) -> usize {
        self.actor.output_size()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.actor.validate()?;
        if self.log_std.len() != self.act_size() {
            return Err(AgentError::Shape {
                what: "log_std".into(),
                expected: self.act_size(),
                actual: self.log_std.len(),
            });
        }
        if self.log_std.iter().any(|x| !x.is_finite()) {
            return Err(AgentError::NonFinite("log_std".into()));
        }
        Ok(())
    }
}

pub fn policy_forward<T: Real>(policy: &Policy<T>, obs: &[T]) -> Result<PolicyOutput<T>, AgentError> {
    let mean = policy.actor.forward(obs)?;
    Ok(PolicyOutput {
        mean,
        log_std: policy.log_std.iter().map(|&x| clamp_log_std(x)).collect(),
    })
}

pub fn value_forward<T: Real>(critic: &MlpParams<T>, obs: &[T]) -> Result<T, AgentError> {
    let out = critic.forward(obs)?;
    if out.len() != 1 {
        return Err(AgentError::Shape {
            what: "critic output".into(),
            expected: 1,
            actual: out.len(),
        });
    }
    Ok(out[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledAction<T> {
    pub raw: Vec<T>,
    pub bounded: Vec<T>,
    pub log_prob: T,
}

fn half_log_two_pi<T: Real>() -> T {
    T::lit(0.5) * T::TAU().ln()
}

/// Log-density of `raw` under the pre-squash Gaussian.
pub fn gaussian_log_prob<T: Real>(out: &PolicyOutput<T>, raw: &[T]) -> T {
    out.mean
        .iter()
        .zip(&out.log_std)
        .zip(raw)
        .map(|((&mu, &ls), &x)| {
            let z = (x - mu) / ls.exp();
            -T::lit(0.5) * z * z - ls - half_log_two_pi()
        })
        .sum()
}

/// `log |d bounded / d raw|` summed over dimensions, for `bounded = bound tanh(raw)`.
pub fn squash_log_jacobian<T: Real>(raw: &[T], bound: T) -> T {
    // log(1 - tanh^2 x) = 2 (log 2 - x - softplus(-2x)), stable for large |x|.
    let two = T::lit(2.0);
    raw.iter()
        .map(|&x| {
            let softplus = if -two * x > T::lit(30.0) {
                -two * x
            } else {
                (T::one() + (-two * x).exp()).ln()
            };
            bound.ln() + two * (T::LN_2() - x - softplus)
        })
        .sum()
}

/// Log-density of the bounded action corresponding to `raw`.
pub fn squashed_log_prob<T: Real>(out: &PolicyOutput<T>, raw: &[T], bound: T) -> T {
    gaussian_log_prob(out, raw) - squash_log_jacobian(raw, bound)
}

pub fn sample_action<T: Real>(out: &PolicyOutput<T>, rng: &mut impl Rng, bound: T) -> SampledAction<T> {
    let raw: Vec<T> = out
        .mean
        .iter()
        .zip(&out.log_std)
        .map(|(&mu, &ls)| {
            let z: f64 = StandardNormal.sample(rng);
            mu + ls.exp() * T::lit(z)
        })
        .collect();
    let bounded = raw.iter().map(|&x| bound * x.tanh()).collect();
    let log_prob = squashed_log_prob(out, &raw, bound);
    SampledAction { raw, bounded, log_prob }
}

/// Evaluation action: the squashed distribution mean.
pub fn deterministic_action<T: Real>(out: &PolicyOutput<T>, bound: T) -> Vec<T> {
    out.mean.iter().map(|&m| bound * m.tanh()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    /// Observation as fed to the networks (already normalised).
    pub obs: Vec<T>,
    pub raw_action: Vec<T>,
    pub log_prob: T,
    pub value: T,
    pub reward: T,
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub transitions: Vec<Transition<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Complete means non-empty with a single `done`, on the last tuple.
    pub fn validate(&self, index: usize) -> Result<(), AgentError> {
        let err = |reason: &str| {
            Err(AgentError::Trajectory {
                index,
                reason: reason.into(),
            })
        };
        let Some(last) = self.transitions.last() else {
            return err("empty");
        };
        if !last.done {
            return err("incomplete: final tuple is not marked done");
        }
        if self.transitions.iter().filter(|t| t.done).count() != 1 {
            return err("done flag set before the final tuple");
        }
        Ok(())
    }
}

/// Generalised advantage estimates and value targets.
pub fn compute_gae<T: Real>(traj: &Trajectory<T>, discount: T, gae_lambda: T) -> Result<(Vec<T>, Vec<T>), AgentError> {
    traj.validate(0)?;
    let tr = &traj.transitions;
    let n = tr.len();
    let mut adv = vec![T::zero(); n];
    let mut acc = T::zero();
    for t in (0..n).rev() {
        let (next_value, live) = if t + 1 < n && !tr[t].done {
            (tr[t + 1].value, T::one())
        } else {
            (T::zero(), T::zero())
        };
        let delta = tr[t].reward + discount * next_value * live - tr[t].value;
        acc = delta + discount * gae_lambda * live * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(tr).map(|(&a, t)| a + t.value).collect();
    Ok((adv, returns))
}

/// Clipped surrogate for one sample.
pub fn clipped_surrogate<T: Real>(ratio: T, advantage: T, clip_eps: T) -> T {
    let clipped = ratio.max(T::one() - clip_eps).min(T::one() + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Flattened training batch. `old_log_prob` is the pre-squash Gaussian
/// log-density (the squash correction cancels in the ratio).
#[derive(Clone, Debug)]
pub struct PpoBatch<T> {
    pub obs: Array2<T>,
    pub raw: Array2<T>,
    pub old_log_prob: Array1<T>,
    pub advantages: Array1<T>,
    pub returns: Array1<T>,
}

impl<T: Real> PpoBatch<T> {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        use ndarray::Axis;
        Self {
            obs: self.obs.select(Axis(0), idx),
            raw: self.raw.select(Axis(0), idx),
            old_log_prob: self.old_log_prob.select(Axis(0), idx),
            advantages: self.advantages.select(Axis(0), idx),
            returns: self.returns.select(Axis(0), idx),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms<T> {
    /// Negated mean clipped surrogate.
    pub policy: T,
    pub value: T,
    pub entropy: T,
    pub total: T,
    pub approx_kl: T,
    pub clip_fraction: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub actor: MlpParams<T>,
    pub log_std: Vec<T>,
    pub critic: MlpParams<T>,
}

impl<T: Real> Gradients<T> {
    pub fn norm(&self) -> T {
        let sq = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>();
        (sq(&self.actor.params()) + sq(&self.log_std) + sq(&self.critic.params())).sqrt()
    }
}

/// Total loss `policy - entropy_coef * entropy + value_coef * value` and its
/// exact gradient.
pub fn ppo_loss_and_grad<T: Real>(
    policy: &Policy<T>,
    critic: &MlpParams<T>,
    batch: &PpoBatch<T>,
    cfg: &PpoConfig<T>,
) -> Result<(LossTerms<T>, Gradients<T>), AgentError> {
    let b = batch.len();
    if b == 0 {
        return Err(AgentError::Config("empty batch".into()));
    }
    let inv_b = T::one() / T::from_usize_lossy(b);
    let act = policy.act_size();
    let log_std: Vec<T> = policy.log_std.iter().map(|&x| clamp_log_std(x)).collect();
    let actor_cache = policy.actor.forward_batch(&batch.obs)?;
    let mean = actor_cache.output();
    let critic_cache = critic.forward_batch(&batch.obs)?;
    let values = critic_cache.output();

    let mut d_mean = Array2::zeros((b, act));
    let mut d_log_std = vec![T::zero(); act];
    let mut surr_sum = T::zero();
    let mut kl_sum = T::zero();
    let mut clipped = 0usize;
    for i in 0..b {
        let mut logp = T::zero();
        for d in 0..act {
            let z = (batch.raw[[i, d]] - mean[[i, d]]) / log_std[d].exp();
            logp += -T::lit(0.5) * z * z - log_std[d] - half_log_two_pi();
        }
        let log_ratio = logp - batch.old_log_prob[i];
        let ratio = log_ratio.exp();
        let a = batch.advantages[i];
        surr_sum += clipped_surrogate(ratio, a, cfg.clip_eps);
        kl_sum += ratio - T::one() - log_ratio;
        let unclipped_active = ratio * a <= ratio.max(T::one() - cfg.clip_eps).min(T::one() + cfg.clip_eps) * a;
        if (ratio - T::one()).abs() > cfg.clip_eps {
            clipped += 1;
        }
        if unclipped_active {
            // d(-surr)/d logp = -ratio * a.
            let g = -ratio * a * inv_b;
            for d in 0..act {
                let sigma = log_std[d].exp();
                let diff = batch.raw[[i, d]] - mean[[i, d]];
                d_mean[[i, d]] = g * diff / (sigma * sigma);
                d_log_std[d] += g * (diff * diff / (sigma * sigma) - T::one());
            }
        }
    }
    let entropy: T = log_std.iter().map(|&ls| ls + T::lit(0.5) + half_log_two_pi()).sum();
    for g in &mut d_log_std {
        *g -= cfg.entropy_coef;
    }
    for (g, &raw) in d_log_std.iter_mut().zip(&policy.log_std) {
        if raw < T::lit(LOG_STD_MIN) || raw > T::lit(LOG_STD_MAX) {
            *g = T::zero();
        }
    }
    let mut d_value = Array2::zeros((b, 1));
    let mut value_sum = T::zero();
    for i in 0..b {
        let e = values[[i, 0]] - batch.returns[i];
        value_sum += e * e;
        d_value[[i, 0]] = cfg.value_coef * T::lit(2.0) * e * inv_b;
    }
    let policy_loss = -surr_sum * inv_b;
    let value_loss = value_sum * inv_b;
    let terms = LossTerms {
        policy: policy_loss,
        value: value_loss,
        entropy,
        total: policy_loss - cfg.entropy_coef * entropy + cfg.value_coef * value_loss,
        approx_kl: kl_sum * inv_b,
        clip_fraction: T::from_usize_lossy(clipped) * inv_b,
    };
    let grads = Gradients {
        actor: policy.actor.backward(&actor_cache, &d_mean),
        log_std: d_log_std,
        critic: critic.backward(&critic_cache, &d_value),
    };
    Ok((terms, grads))
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            t: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: T) {
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (T::one() - self.beta1) * grads[k];
            self.v[k] = self.beta2 * self.v[k] + (T::one() - self.beta2) * grads[k] * grads[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport<T> {
    /// Minibatch-averaged loss terms.
    pub loss: LossTerms<T>,
    pub grad_norm: T,
    pub minibatches: usize,
    /// Set when the update was abandoned; parameters are then unchanged.
    pub aborted: Option<String>,
}

/// Shared policy, critic, optimiser state and observation normaliser.
#[derive(Clone, Debug)]
pub struct PpoAgent<T> {
    pub policy: Policy<T>,
    pub critic: MlpParams<T>,
    pub normalizer: ObsNormalizer<T>,
    pub cfg: PpoConfig<T>,
    pub bound: T,
    adam_actor: Adam<T>,
    adam_critic: Adam<T>,
}

impl<T: Real> PpoAgent<T> {
    pub fn new(
        obs_size: usize,
        act_size: usize,
        bound: T,
        cfg: PpoConfig<T>,
        rng: &mut impl Rng,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        if !(bound > T::zero()) {
            return Err(AgentError::Config(format!(
                "action bound must be positive, got {}",
                bound.as_f64()
            )));
        }
        let policy = Policy::init(obs_size, act_size, &cfg, rng)?;
        let critic = MlpParams::init(&layer_sizes(obs_size, &cfg.hidden, 1), T::one(), rng)?;
        Ok(Self::from_parts(
            policy,
            critic,
            ObsNormalizer::new(obs_size),
            cfg,
            bound,
        ))
    }

    pub fn from_parts(
        policy: Policy<T>,
        critic: MlpParams<T>,
        normalizer: ObsNormalizer<T>,
        cfg: PpoConfig<T>,
        bound: T,
    ) -> Self {
        let adam_actor = Adam::new(policy.actor.n_params() + policy.log_std.len());
        let adam_critic = Adam::new(critic.n_params());
        Self {
            policy,
            critic,
            normalizer,
            cfg,
            bound,
            adam_actor,
            adam_critic,
        }
    }

    pub fn obs_size(&self) -> usize {
        self.policy.obs_size()
    }

    pub fn act_size(&self) -> usize {
        self.policy.act_size()
    }

    /// Builds the flattened batch: GAE per trajectory, then advantages
    /// standardised over the whole batch.
    pub fn build_batch(&self, trajectories: &[Trajectory<T>]) -> Result<PpoBatch<T>, AgentError> {
        if trajectories.is_empty() {
            return Err(AgentError::Config("no trajectories to train on".into()));
        }
        let (obs_n, act_n) = (self.obs_size(), self.act_size());
        let total: usize = trajectories.iter().map(|t| t.len()).sum();
        let mut obs = Array2::zeros((total, obs_n));
        let mut raw = Array2::zeros((total, act_n));
        let mut old = Array1::zeros(total);
        let mut adv = Array1::zeros(total);
        let mut ret = Array1::zeros(total);
        let mut row = 0;
        for (index, traj) in trajectories.iter().enumerate() {
            traj.validate(index)?;
            let (a, r) = compute_gae(traj, self.cfg.discount, self.cfg.gae_lambda)?;
            for (k, tr) in traj.transitions.iter().enumerate() {
                if tr.obs.len() != obs_n || tr.raw_action.len() != act_n {
                    return Err(AgentError::Trajectory {
                        index,
                        reason: format!("tuple {k} has wrong observation/action size"),
                    });
                }
                obs.row_mut(row).assign(&Array1::from_vec(tr.obs.clone()));
                raw.row_mut(row).assign(&Array1::from_vec(tr.raw_action.clone()));
                old[row] = tr.log_prob + squash_log_jacobian(&tr.raw_action, self.bound);
                adv[row] = a[k];
                ret[row] = r[k];
                row += 1;
            }
        }
        let n = T::from_usize_lossy(total);
        let mean = adv.sum() / n;
        let var = adv.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
        let std = var.sqrt();
        adv.mapv_inplace(|x| (x - mean) / (std + T::lit(1e-8)));
        Ok(PpoBatch {
            obs,
            raw,
            old_log_prob: old,
            advantages: adv,
            returns: ret,
        })
    }

    /// Clipped PPO update over all trajectories. On a non-finite loss or
    /// gradient the parameters and optimiser state are restored and the
    /// report carries the reason.
    pub fn update(
        &mut self,
        trajectories: &[Trajectory<T>],
        rng: &mut impl Rng,
    ) -> Result<UpdateReport<T>, AgentError> {
        let batch = self.build_batch(trajectories)?;
        let saved = (
            self.policy.clone(),
            self.critic.clone(),
            self.adam_actor.clone(),
            self.adam_critic.clone(),
        );
        let mut report = UpdateReport::default();
        let mut sum = LossTerms::<T>::default();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let mb = batch.select(chunk);
                let (terms, mut grads) = ppo_loss_and_grad(&self.policy, &self.critic, &mb, &self.cfg)?;
                let norm = grads.norm();
                if !terms.total.is_finite() || !norm.is_finite() {
                    (self.policy, self.critic, self.adam_actor, self.adam_critic) = saved;
                    report.aborted = Some(format!(
                        "non-finite loss or gradient in minibatch {}",
                        report.minibatches
                    ));
                    return Ok(report);
                }
                if norm > self.cfg.max_grad_norm {
                    let s = self.cfg.max_grad_norm / norm;
                    grads.actor.for_each_param_mut(|g| *g *= s);
                    grads.critic.for_each_param_mut(|g| *g *= s);
                    grads.log_std.iter_mut().for_each(|g| *g *= s);
                }
                self.apply(&grads);
                report.minibatches += 1;
                report.grad_norm += norm;
                sum.policy += terms.policy;
                sum.value += terms.value;
                sum.entropy += terms.entropy;
                sum.total += terms.total;
                sum.approx_kl += terms.approx_kl;
                sum.clip_fraction += terms.clip_fraction;
            }
        }
        let k = T::from_usize_lossy(report.minibatches.max(1));
        report.grad_norm /= k;
        report.loss = LossTerms {
            policy: sum.policy / k,
            value: sum.value / k,
            entropy: sum.entropy / k,
            total: sum.total / k,
            approx_kl: sum.approx_kl / k,
            clip_fraction: sum.clip_fraction / k,
        };
        if !self.policy.actor.is_finite() || !self.critic.is_finite() {
            (self.policy, self.critic, self.adam_actor, self.adam_critic) = saved;
            report.aborted = Some("parameters became non-finite".into());
        }
        Ok(report)
    }

    fn apply(&mut self, grads: &Gradients<T>) {
        let mut p = self.policy.actor.params();
        p.extend_from_slice(&self.policy.log_std);
        let mut g = grads.actor.params();
        g.extend_from_slice(&grads.log_std);
        self.adam_actor.step(&mut p, &g, self.cfg.lr);
        let n = self.policy.actor.n_params();
        self.policy.actor.set_params(&p[..n]);
        for (ls, &v) in self.policy.log_std.iter_mut().zip(&p[n..]) {
            *ls = clamp_log_std(v);
        }
        let mut c = self.critic.params();
        self.adam_critic.step(&mut c, &grads.critic.params(), self.cfg.lr);
        self.critic.set_params(&c);
    }
}
