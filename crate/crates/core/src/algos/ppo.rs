use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::policy::{argmax, log_softmax, sample_categorical, softmax};
use crate::mlp::{Adam, AdamState, Gradient, Mlp, MlpSpec};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    /// Completed episodes between updates.
    pub update_frequency: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub minibatch_size: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            clip: 0.2,
            gae_lambda: 0.97,
            update_epochs: 10,
            update_frequency: 5,
            entropy_coef: 0.01,
            value_coef: 0.5,
            minibatch_size: 64,
            lr: 3e-4,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("ppo gamma and gae_lambda must lie in [0, 1)".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("ppo clip must be positive".into()));
        }
        if self.update_epochs == 0 || self.update_frequency == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("ppo epochs, update frequency and minibatch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0 && self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err(Error::Config("ppo lr, gradient clip and loss coefficients must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub logp: f64,
    pub value: f64,
    /// Reward after penalty shaping; this is what PPO optimizes.
    pub reward: f64,
    pub raw_reward: f64,
    pub cost: f64,
    pub violation: f64,
    pub done: bool,
}

/// On-policy trajectories since the last update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Value of the state after the last transition, used if it is not `done`.
    pub bootstrap: f64,
    pub episodes: usize,
}

impl RolloutBuffer {
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.bootstrap = 0.0;
        self.episodes = 0;
    }
}

/// Per-sample clipped-surrogate loss and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub loss: f64,
    pub dlogits: Vec<f64>,
    pub ratio: f64,
    /// The clipped branch of the minimum was active (zero surrogate gradient).
    pub clipped: bool,
    pub entropy: f64,
}

/// `−min(ρA, clip(ρ, 1±ε)A) − c_e·H(π)` for one sample.
pub fn ppo_sample_loss(
    logits: &[f64],
    action: usize,
    old_logp: f64,
    advantage: f64,
    clip: f64,
    entropy_coef: f64,
) -> SampleLoss {
    let logp = log_softmax(logits);
    let p = softmax(logits);
    let ratio = (logp[action] - old_logp).exp();
    let unclipped = ratio * advantage;
    let clipped_val = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let clipped = clipped_val < unclipped;
    let entropy: f64 = -p.iter().zip(&logp).map(|(pi, lpi)| if *pi > 0.0 { pi * lpi } else { 0.0 }).sum::<f64>();
    let loss = -unclipped.min(clipped_val) - entropy_coef * entropy;
    let dlogits = (0..logits.len())
        .map(|i| {
            let onehot = if i == action { 1.0 } else { 0.0 };
            let surrogate = if clipped { 0.0 } else { -advantage * ratio * (onehot - p[i]) };
            let ent = if p[i] > 0.0 { entropy_coef * p[i] * (logp[i] + entropy) } else { 0.0 };
            surrogate + ent
        })
        .collect();
    SampleLoss { loss, dlogits, ratio, clipped, entropy }
}

/// Separate actor (logits) and critic (state value) networks with their optimizers.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub config: PpoConfig,
    actor_opt: AdamState,
    critic_opt: AdamState,
}

impl PpoAgent {
    pub fn new(n_actions: usize, config: PpoConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::new(MlpSpec::actor(n_actions), rng)?;
        let critic = Mlp::new(MlpSpec::critic(), rng)?;
        Ok(Self::from_nets(actor, critic, config))
    }

    pub fn from_nets(actor: Mlp, critic: Mlp, config: PpoConfig) -> Self {
        let actor_opt = AdamState::new(&actor);
        let critic_opt = AdamState::new(&critic);
        Self { actor, critic, config, actor_opt, critic_opt }
    }

    /// Sampled action, its log-probability and the state value.
    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<(usize, f64, f64)> {
        let logits = self.actor.forward(obs)?;
        let a = sample_categorical(&softmax(&logits), rng);
        Ok((a, log_softmax(&logits)[a], self.value(obs)?))
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.actor.forward(obs)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }
}

/// Averages over every sample seen during an update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PpoLossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Optimize the clipped surrogate plus value loss on one rollout.
///
/// Advantages are normalized over the whole rollout. Each minibatch takes one
/// Adam step per network after clipping the gradient norm. On a non-finite
/// loss the update stops with an error; earlier minibatch steps are kept.
pub fn ppo_update(agent: &mut PpoAgent, rollout: &RolloutBuffer, rng: &mut Rng) -> Result<PpoLossReport> {
    let ts = &rollout.transitions;
    if ts.is_empty() {
        return Err(Error::invalid("empty rollout"));
    }
    let cfg = agent.config;
    let rewards: Vec<f64> = ts.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = ts.iter().map(|t| t.value).collect();
    let dones: Vec<bool> = ts.iter().map(|t| t.done).collect();
    let (mut adv, returns) = gae(&rewards, &values, &dones, rollout.bootstrap, cfg.gamma, cfg.gae_lambda)?;
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    for a in &mut adv {
        *a = (*a - mean) / std;
    }

    let adam = Adam::with_lr(cfg.lr);
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    let mut report = PpoLossReport::default();
    let mut seen = 0usize;
    for epoch in 0..cfg.update_epochs {
        idx.shuffle(rng);
        for (mb_i, chunk) in idx.chunks(cfg.minibatch_size).enumerate() {
            let mut ga = Gradient::zeros_like(&agent.actor);
            let mut gc = Gradient::zeros_like(&agent.critic);
            let scale = 1.0 / chunk.len() as f64;
            let mut mb_loss = 0.0;
            for &i in chunk {
                let t = &ts[i];
                let cache = agent.actor.forward_cached(&t.obs)?;
                let s = ppo_sample_loss(cache.output(), t.action, t.logp, adv[i], cfg.clip, cfg.entropy_coef);
                let dl: Vec<f64> = s.dlogits.iter().map(|g| g * scale).collect();
                agent.actor.backward_cached(&cache, &dl, &mut ga)?;

                let vcache = agent.critic.forward_cached(&t.obs)?;
                let v = vcache.output()[0];
                let err = v - returns[i];
                agent.critic.backward_cached(&vcache, &[2.0 * cfg.value_coef * err * scale], &mut gc)?;

                let surrogate = s.loss + cfg.entropy_coef * s.entropy;
                mb_loss += s.loss + cfg.value_coef * err * err;
                report.policy_loss += surrogate;
                report.value_loss += err * err;
                report.entropy += s.entropy;
                report.approx_kl += (s.ratio - 1.0) - s.ratio.ln();
                report.clip_fraction += f64::from(u8::from(s.clipped));
                seen += 1;
            }
            if !mb_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "ppo loss at epoch {epoch}, minibatch {mb_i} (loss {mb_loss}, advantage std {std})"
                )));
            }
            ga.clip_norm(cfg.max_grad_norm);
            gc.clip_norm(cfg.max_grad_norm);
            adam.step(&mut agent.actor, &ga, &mut agent.actor_opt)?;
            adam.step(&mut agent.critic, &gc, &mut agent.critic_opt)?;
            report.minibatches += 1;
        }
    }
    let k = seen as f64;
    report.policy_loss /= k;
    report.value_loss /= k;
    report.entropy /= k;
    report.approx_kl /= k;
    report.clip_fraction /= k;
    Ok(report)
}
