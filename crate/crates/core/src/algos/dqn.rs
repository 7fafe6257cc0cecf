use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::policy::argmax;
use crate::mlp::{Adam, AdamState, Gradient, Layer, Mlp, MlpSpec};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total steps over which ε decays linearly.
    pub epsilon_fraction: f64,
    /// Environment steps before the first update.
    pub learning_starts: usize,
    pub max_grad_norm: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.05,
            buffer_capacity: 10_000,
            batch_size: 64,
            lr: 3e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.2,
            learning_starts: 1000,
            max_grad_norm: 10.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("dqn tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("dqn gamma must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config("dqn buffer capacity must be at least the batch size".into()));
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::Config("dqn lr and gradient clip must be positive".into()));
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !(eps_ok(self.epsilon_start) && eps_ok(self.epsilon_end) && eps_ok(self.epsilon_fraction)) {
            return Err(Error::Config("dqn epsilon schedule values must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Linearly decayed exploration rate at `step` of `total_steps`.
    pub fn epsilon_at(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = self.epsilon_fraction * total_steps as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let frac = step as f64 / horizon;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// `Q = V + A − mean(A)`.
pub fn duel_q_values(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}

/// Q-values from a dueling network whose output is `[V, A_1, …, A_n]`.
fn q_of(net: &Mlp, obs: &[f64]) -> Result<Vec<f64>> {
    let out = net.forward(obs)?;
    Ok(duel_q_values(out[0], &out[1..]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqnTransition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True terminal; time-limit truncation is stored as `false`.
    pub done: bool,
}

/// FIFO ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<DqnTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: DqnTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&DqnTransition> {
        self.items.get(i)
    }

    /// `n` distinct transitions drawn uniformly.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&DqnTransition>> {
        if n > self.items.len() {
            return Err(Error::invalid(format!("cannot sample {n} from {} transitions", self.items.len())));
        }
        Ok(sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Online and target dueling networks with the replay buffer.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub replay: ReplayBuffer,
    pub config: DqnConfig,
    opt: AdamState,
}

impl DqnAgent {
    pub fn new(n_actions: usize, config: DqnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let online = Mlp::new(MlpSpec::new(vec![13, 64, 64, 1 + n_actions])?, rng)?;
        Ok(Self::from_net(online, config))
    }

    pub fn from_net(online: Mlp, config: DqnConfig) -> Self {
        let opt = AdamState::new(&online);
        Self { target: online.clone(), replay: ReplayBuffer::new(config.buffer_capacity), online, config, opt }
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim() - 1
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        q_of(&self.online, obs)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    pub fn act(&self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.n_actions()))
        } else {
            self.greedy(obs)
        }
    }

    /// Network with outputs `A_1..A_n`: same argmax as the Q-values, used
    /// wherever a policy network is needed (violation, verification).
    pub fn policy_net(&self) -> Mlp {
        advantage_head(&self.online)
    }
}

/// Drop the value output of a dueling network.
pub(crate) fn advantage_head(net: &Mlp) -> Mlp {
    let mut layers = net.layers().to_vec();
    let last = layers.pop().expect("non-empty network");
    let n = last.n_out - 1;
    layers.push(Layer {
        n_in: last.n_in,
        n_out: n,
        weights: last.weights[last.n_in..].to_vec(),
        biases: last.biases[1..].to_vec(),
    });
    Mlp::from_layers(layers).expect("shape preserved")
}

fn ddqn_target(online: &Mlp, target: &Mlp, t: &DqnTransition, gamma: f64) -> Result<f64> {
    if t.done {
        return Ok(t.reward);
    }
    let a_star = argmax(&q_of(online, &t.next_obs)?);
    Ok(t.reward + gamma * q_of(target, &t.next_obs)?[a_star])
}

/// Mean squared TD error of the double-DQN target over `batch`.
pub fn ddqn_loss(online: &Mlp, target: &Mlp, batch: &[&DqnTransition], gamma: f64) -> Result<f64> {
    let mut sum = 0.0;
    for t in batch {
        let y = ddqn_target(online, target, t, gamma)?;
        let q = q_of(online, &t.obs)?[t.action];
        sum += (q - y).powi(2);
    }
    Ok(sum / batch.len() as f64)
}

/// Gradient of [`ddqn_loss`] with the targets held fixed.
fn ddqn_grad(online: &Mlp, target: &Mlp, batch: &[&DqnTransition], gamma: f64) -> Result<(f64, Gradient)> {
    let mut grad = Gradient::zeros_like(online);
    let n_act = online.output_dim() - 1;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let y = ddqn_target(online, target, t, gamma)?;
        let cache = online.forward_cached(&t.obs)?;
        let out = cache.output();
        let q = duel_q_values(out[0], &out[1..])[t.action];
        let e = q - y;
        loss += e * e * scale;
        let g = 2.0 * e * scale;
        let mut dout = vec![-g / n_act as f64; 1 + n_act];
        dout[0] = g;
        dout[1 + t.action] += g;
        online.backward_cached(&cache, &dout, &mut grad)?;
    }
    Ok((loss, grad))
}

/// One gradient step on a sampled minibatch followed by a soft target update.
pub fn ddqn_update(agent: &mut DqnAgent, rng: &mut Rng) -> Result<f64> {
    let cfg = agent.config;
    let batch = agent.replay.sample(cfg.batch_size, rng)?;
    let (loss, mut grad) = ddqn_grad(&agent.online, &agent.target, &batch, cfg.gamma)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("ddqn loss {loss}")));
    }
    grad.clip_norm(cfg.max_grad_norm);
    Adam::with_lr(cfg.lr).step(&mut agent.online, &grad, &mut agent.opt)?;
    agent.target.soft_update_from(&agent.online, cfg.tau)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn random_transition(rng: &mut Rng, done: bool) -> DqnTransition {
        DqnTransition {
            obs: (0..13).map(|_| rng.random()).collect(),
            action: rng.random_range(0..5),
            reward: rng.random_range(-1.0..1.0),
            next_obs: (0..13).map(|_| rng.random()).collect(),
            done,
        }
    }

    #[test]
    fn q_aggregation() {
        assert_eq!(duel_q_values(2.0, &[0.5, 0.5, 0.5]), vec![2.0; 3]);
        let a = [0.1, -0.4, 0.9];
        let shifted: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        let q1 = duel_q_values(1.0, &a);
        let q2 = duel_q_values(1.0, &shifted);
        for (x, y) in q1.iter().zip(&q2) {
            assert!((x - y).abs() < 1e-14);
        }
        let mean = a.iter().sum::<f64>() / 3.0;
        for (q, ai) in q1.iter().zip(&a) {
            assert_eq!(*q, 1.0 + ai - mean);
        }
    }

    #[test]
    fn done_target_is_reward() {
        let mut rng = rng_from_seed(0);
        let agent = DqnAgent::new(5, DqnConfig::default(), &mut rng).unwrap();
        let t = random_transition(&mut rng, true);
        assert_eq!(ddqn_target(&agent.online, &agent.target, &t, 0.99).unwrap(), t.reward);
    }

    #[test]
    fn loss_matches_hand_rolled() {
        let mut rng = rng_from_seed(3);
        let agent = DqnAgent::new(5, DqnConfig::default(), &mut rng).unwrap();
        let mut target = agent.online.clone();
        target.layers_mut()[2].biases[0] += 0.3;
        let ts: Vec<DqnTransition> = (0..8).map(|i| random_transition(&mut rng, i % 3 == 0)).collect();
        let batch: Vec<&DqnTransition> = ts.iter().collect();
        let mut oracle = 0.0;
        for t in &ts {
            let qv = |net: &Mlp, x: &[f64]| {
                let o = net.forward(x).unwrap();
                let m = o[1..].iter().sum::<f64>() / 5.0;
                (0..5).map(|i| o[0] + o[1 + i] - m).collect::<Vec<f64>>()
            };
            let y = if t.done {
                t.reward
            } else {
                let qn = qv(&agent.online, &t.next_obs);
                let mut best = 0;
                for i in 1..5 {
                    if qn[i] > qn[best] {
                        best = i;
                    }
                }
                t.reward + 0.99 * qv(&target, &t.next_obs)[best]
            };
            oracle += (qv(&agent.online, &t.obs)[t.action] - y).powi(2) / 8.0;
        }
        let loss = ddqn_loss(&agent.online, &target, &batch, 0.99).unwrap();
        assert!((loss - oracle).abs() < 1e-10);
        let (l2, _) = ddqn_grad(&agent.online, &target, &batch, 0.99).unwrap();
        assert!((l2 - oracle).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(11);
        let online = Mlp::new(MlpSpec::new(vec![13, 8, 8, 6]).unwrap(), &mut rng).unwrap();
        let mut target = online.clone();
        target.layers_mut()[1].biases[2] -= 0.2;
        let ts: Vec<DqnTransition> = (0..6).map(|i| random_transition(&mut rng, i % 2 == 0)).collect();
        let batch: Vec<&DqnTransition> = ts.iter().collect();
        let (_, grad) = ddqn_grad(&online, &target, &batch, 0.9).unwrap();
        let h = 1e-5;
        for _ in 0..60 {
            let l = rng.random_range(0..3);
            let w = rng.random_bool(0.7);
            let len = if w { online.layers()[l].weights.len() } else { online.layers()[l].biases.len() };
            let j = rng.random_range(0..len);
            let eval = |delta: f64| {
                let mut net = online.clone();
                let layer = &mut net.layers_mut()[l];
                if w {
                    layer.weights[j] += delta;
                } else {
                    layer.biases[j] += delta;
                }
                ddqn_loss(&net, &target, &batch, 0.9).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let g = if w { grad.weights[l][j] } else { grad.biases[l][j] };
            assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1.0), "layer {l} {w} {j}: {g} vs {fd}");
        }
    }

    #[test]
    fn soft_update_full_copy() {
        let mut rng = rng_from_seed(4);
        let mut agent = DqnAgent::new(5, DqnConfig { tau: 1.0, batch_size: 4, ..DqnConfig::default() }, &mut rng).unwrap();
        for _ in 0..10 {
            let t = random_transition(&mut rng, false);
            agent.replay.push(t);
        }
        ddqn_update(&mut agent, &mut rng).unwrap();
        assert_eq!(agent.online, agent.target);
    }

    #[test]
    fn replay_fifo_eviction() {
        let mut rng = rng_from_seed(5);
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            let mut t = random_transition(&mut rng, false);
            t.reward = i as f64;
            buf.push(t);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).unwrap().reward, 2.0);
        assert!(buf.sample(4, &mut rng).is_err());
        let s = buf.sample(3, &mut rng).unwrap();
        let mut rs: Vec<f64> = s.iter().map(|t| t.reward).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn advantage_head_keeps_greedy_action() {
        let mut rng = rng_from_seed(6);
        let agent = DqnAgent::new(5, DqnConfig::default(), &mut rng).unwrap();
        let head = agent.policy_net();
        assert_eq!(head.output_dim(), 5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..13).map(|_| rng.random()).collect();
            assert_eq!(argmax(&head.forward(&x).unwrap()), agent.greedy(&x).unwrap());
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig::default();
        assert_eq!(c.epsilon_at(0, 1000), 1.0);
        assert!((c.epsilon_at(100, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon_at(200, 1000), 0.05);
        assert_eq!(c.epsilon_at(900, 1000), 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(DqnConfig { tau: 0.0, ..DqnConfig::default() }.validate().is_err());
        assert!(DqnConfig { buffer_capacity: 10, ..DqnConfig::default() }.validate().is_err());
    }
}
