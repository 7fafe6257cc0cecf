use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dqn::{ddqn_update, DqnAgent, DqnConfig, DqnTransition};
use super::lagrangian::{lagrangian_reward, LagrangianConfig, LagrangianState};
use super::penalty::{apply_penalty, PenaltyMode};
use super::policy::argmax;
use super::ppo::{ppo_update, PpoAgent, PpoConfig, RolloutBuffer, Transition};
use crate::env::{make_task, EnvConfig, NavEnv, Task, N_ACTIONS};
use crate::mlp::Mlp;
use crate::properties::{
    approximate_violation, generate_online_property, merge_online, navigation_property_set, InputBox, Origin,
    PropertySet, ViolationEstimate, DEFAULT_EPSILON,
};
use crate::{rng_from_seed, Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[default]
    Ppo,
    #[serde(rename = "dueldqn")]
    DuelDqn,
    /// PPO with a Lagrangian multiplier on the episode cost.
    Lppo,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Ppo => "ppo",
            AgentKind::DuelDqn => "dueldqn",
            AgentKind::Lppo => "lppo",
        })
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(AgentKind::Ppo),
            "dueldqn" | "duelddqn" | "dqn" => Ok(AgentKind::DuelDqn),
            "lppo" => Ok(AgentKind::Lppo),
            _ => Err(Error::Config(format!("unknown agent '{s}'"))),
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub agent: AgentKind,
    pub task: Task,
    pub penalty: PenaltyMode,
    pub omega: f64,
    pub total_steps: usize,
    pub seed: u64,
    /// Samples per property for the per-step violation.
    pub samples: usize,
    /// Half-width of online property boxes.
    pub epsilon: f64,
    pub online_properties: bool,
    pub log_every: usize,
    /// Trailing window, in steps, for the logged rates.
    pub window: usize,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub lagrangian: LagrangianConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            agent: AgentKind::Ppo,
            task: Task::FixedObsNT,
            penalty: PenaltyMode::None,
            omega: 1.0,
            total_steps: 100_000,
            seed: 0,
            samples: 1000,
            epsilon: DEFAULT_EPSILON,
            online_properties: true,
            log_every: 1000,
            window: 1000,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
            lagrangian: LagrangianConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agent == AgentKind::Lppo && self.penalty == PenaltyMode::Cost {
            return Err(Error::Config("lppo already constrains the cost; combine it with penalty none or violation".into()));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::Config(format!("omega must be finite and non-negative, got {}", self.omega)));
        }
        if self.samples == 0 || self.log_every == 0 || self.window == 0 {
            return Err(Error::Config("samples, log_every and window must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.ppo.validate()?;
        self.dqn.validate()?;
        Ok(())
    }

    pub fn lagrangian_threshold(&self) -> f64 {
        self.lagrangian.threshold.unwrap_or_else(|| LagrangianConfig::default_threshold(self.task))
    }

    /// Short label such as `ppo_violation`.
    pub fn label(&self) -> String {
        match self.penalty {
            PenaltyMode::None => self.agent.to_string(),
            p => format!("{}_{p}", self.agent),
        }
    }
}

pub const METRICS_HEADER: [&str; 8] =
    ["step", "episode", "success_rate_1k", "cost_1k", "violation_1k", "reward_1k", "lambda", "active_property_count"];

/// One logged line; rates cover the trailing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub episode: usize,
    /// Goals reached in the window.
    pub success_rate_1k: f64,
    /// Collision steps in the window.
    pub cost_1k: f64,
    /// Mean per-step violation in the window.
    pub violation_1k: f64,
    /// Mean raw (unshaped) reward per step in the window.
    pub reward_1k: f64,
    pub lambda: Option<f64>,
    /// Mean `|P′|` over the window's unsafe steps; empty if there were none.
    pub active_property_count: Option<f64>,
}

impl MetricsRow {
    pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(METRICS_HEADER)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != METRICS_HEADER {
            return Err(Error::Format(format!("unexpected metrics header {header:?}")));
        }
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

/// Whole-run totals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub episodes: usize,
    pub goals: usize,
    pub total_cost: f64,
    pub mean_cost_per_step: f64,
    pub mean_violation: f64,
    pub mean_reward: f64,
    pub unsafe_steps: usize,
    /// Unsafe steps at which at least one property was active.
    pub unsafe_steps_covered: usize,
    /// Mean `|P′|` over unsafe steps (0 if there were none).
    pub mean_active_at_unsafe: f64,
    pub property_count: usize,
    pub online_property_count: usize,
    pub final_lambda: Option<f64>,
    pub updates: usize,
    pub wall_seconds: f64,
}

pub struct TrainOutput {
    /// Network whose argmax is the greedy action.
    pub actor: Mlp,
    /// PPO critic or the full dueling Q-network.
    pub value_net: Mlp,
    pub properties: PropertySet,
    pub metrics: Vec<MetricsRow>,
    pub summary: RunSummary,
}

enum Agent {
    Ppo { agent: PpoAgent, buffer: RolloutBuffer },
    Dqn { agent: DqnAgent, head: Mlp },
}

#[derive(Clone, Copy)]
struct StepRecord {
    goal: bool,
    cost: f64,
    violation: f64,
    reward: f64,
    unsafe_active: Option<usize>,
}

fn window_row(window: &VecDeque<StepRecord>, step: usize, episode: usize, lambda: Option<f64>) -> MetricsRow {
    let n = window.len().max(1) as f64;
    let unsafe_counts: Vec<usize> = window.iter().filter_map(|r| r.unsafe_active).collect();
    MetricsRow {
        step,
        episode,
        success_rate_1k: window.iter().filter(|r| r.goal).count() as f64,
        cost_1k: window.iter().map(|r| r.cost).sum(),
        violation_1k: window.iter().map(|r| r.violation).sum::<f64>() / n,
        reward_1k: window.iter().map(|r| r.reward).sum::<f64>() / n,
        lambda,
        active_property_count: (!unsafe_counts.is_empty())
            .then(|| unsafe_counts.iter().sum::<usize>() as f64 / unsafe_counts.len() as f64),
    }
}

/// Train one agent on one task from `cfg.seed`.
///
/// At every step the approximate violation at the current state is computed
/// with the current policy, whatever the penalty mode, so every run logs it.
/// When a step is unsafe and no property covers its state, a property
/// forbidding the action just taken around that state is added (if enabled)
/// and the violation recomputed before shaping.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(cfg, make_task(cfg.task), navigation_property_set())
}

/// [`train`] on an explicit environment and initial property set.
pub fn train_with(cfg: &TrainConfig, env_cfg: EnvConfig, mut props: PropertySet) -> Result<TrainOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut master = rng_from_seed(cfg.seed);
    let env_seed: u64 = master.random();
    let mut init_rng = rng_from_seed(master.random());
    let mut act_rng = rng_from_seed(master.random());
    let mut viol_rng = rng_from_seed(master.random());
    let mut update_rng = rng_from_seed(master.random());

    let mut env = NavEnv::new(EnvConfig { rng_seed: env_seed, ..env_cfg })?;
    let domain = InputBox::navigation_domain();
    props.validate(domain.dim(), N_ACTIONS, Some(&domain))?;

    let mut agent = match cfg.agent {
        AgentKind::Ppo | AgentKind::Lppo => {
            Agent::Ppo { agent: PpoAgent::new(N_ACTIONS, cfg.ppo, &mut init_rng)?, buffer: RolloutBuffer::default() }
        }
        AgentKind::DuelDqn => {
            let agent = DqnAgent::new(N_ACTIONS, cfg.dqn, &mut init_rng)?;
            let head = agent.policy_net();
            Agent::Dqn { agent, head }
        }
    };
    let mut lagrangian = match cfg.agent {
        AgentKind::Lppo => Some(LagrangianState::new(cfg.lagrangian.init, cfg.lagrangian_threshold(), cfg.lagrangian.lr)?),
        _ => None,
    };

    let mut summary = RunSummary::default();
    let mut metrics = Vec::new();
    let mut window: VecDeque<StepRecord> = VecDeque::with_capacity(cfg.window + 1);
    let mut active_sum_unsafe = 0usize;
    let mut violation_sum = 0.0;
    let mut reward_sum = 0.0;
    let mut episode_cost = 0.0;
    let mut obs = env.reset()?;

    for step in 1..=cfg.total_steps {
        let policy: &Mlp = match &agent {
            Agent::Ppo { agent, .. } => &agent.actor,
            Agent::Dqn { head, .. } => head,
        };
        let (action, logp, value) = match &agent {
            Agent::Ppo { agent, .. } => agent.act(&obs, &mut act_rng)?,
            Agent::Dqn { agent, .. } => {
                let eps = cfg.dqn.epsilon_at(step - 1, cfg.total_steps);
                (agent.act(&obs, eps, &mut act_rng)?, 0.0, 0.0)
            }
        };
        let mut est: ViolationEstimate = approximate_violation(policy, &props, &obs, cfg.samples, &mut viol_rng)?;
        let res = env.step(action)?;
        let cost = res.cost();
        if res.collision && est.active_count == 0 && cfg.online_properties {
            let p = generate_online_property(&obs, action, cfg.epsilon, &domain)?;
            if merge_online(&mut props, p) {
                est = approximate_violation(policy, &props, &obs, cfg.samples, &mut viol_rng)?;
            }
        }

        let mut shaped = apply_penalty(res.reward, cost, est.value, cfg.penalty, cfg.omega)?;
        if let Some(l) = &lagrangian {
            shaped = lagrangian_reward(shaped, cost, l.lambda);
        }

        match &mut agent {
            Agent::Ppo { agent, buffer } => {
                if res.truncated() {
                    shaped += agent.config.gamma * agent.value(&res.obs)?;
                }
                buffer.push(Transition {
                    obs: std::mem::take(&mut obs),
                    action,
                    logp,
                    value,
                    reward: shaped,
                    raw_reward: res.reward,
                    cost,
                    violation: est.value,
                    done: res.done,
                });
            }
            Agent::Dqn { agent, head } => {
                agent.replay.push(DqnTransition {
                    obs: std::mem::take(&mut obs),
                    action,
                    reward: shaped,
                    next_obs: res.obs.clone(),
                    done: res.done && !res.truncated(),
                });
                if step >= agent.config.learning_starts && agent.replay.len() >= agent.config.batch_size {
                    ddqn_update(agent, &mut update_rng)?;
                    *head = agent.policy_net();
                    summary.updates += 1;
                }
            }
        }

        summary.goals += usize::from(res.goal_reached);
        summary.total_cost += cost;
        violation_sum += est.value;
        reward_sum += res.reward;
        episode_cost += cost;
        let unsafe_active = res.collision.then_some(est.active_count);
        if let Some(n) = unsafe_active {
            summary.unsafe_steps += 1;
            summary.unsafe_steps_covered += usize::from(n >= 1);
            active_sum_unsafe += n;
        }
        window.push_back(StepRecord { goal: res.goal_reached, cost, violation: est.value, reward: res.reward, unsafe_active });
        if window.len() > cfg.window {
            window.pop_front();
        }

        if res.done {
            summary.episodes += 1;
            if let Some(l) = &mut lagrangian {
                l.step(episode_cost)?;
            }
            episode_cost = 0.0;
            if let Agent::Ppo { agent, buffer } = &mut agent {
                buffer.episodes += 1;
                if buffer.episodes >= agent.config.update_frequency {
                    ppo_update(agent, buffer, &mut update_rng)?;
                    buffer.clear();
                    summary.updates += 1;
                }
            }
            obs = env.reset()?;
        } else {
            obs = res.obs;
        }

        if step % cfg.log_every == 0 || step == cfg.total_steps {
            metrics.push(window_row(&window, step, summary.episodes, lagrangian.map(|l| l.lambda)));
        }
    }

    let steps = cfg.total_steps;
    let per_step = |x: f64| if steps == 0 { 0.0 } else { x / steps as f64 };
    summary.steps = steps;
    summary.mean_cost_per_step = per_step(summary.total_cost);
    summary.mean_violation = per_step(violation_sum);
    summary.mean_reward = per_step(reward_sum);
    summary.mean_active_at_unsafe =
        if summary.unsafe_steps == 0 { 0.0 } else { active_sum_unsafe as f64 / summary.unsafe_steps as f64 };
    summary.property_count = props.len();
    summary.online_property_count = props.count_origin(Origin::Online);
    summary.final_lambda = lagrangian.map(|l| l.lambda);
    summary.wall_seconds = start.elapsed().as_secs_f64();

    let (actor, value_net) = match agent {
        Agent::Ppo { agent, .. } => (agent.actor, agent.critic),
        Agent::Dqn { agent, head } => (head, agent.online),
    };
    Ok(TrainOutput { actor, value_net, properties: props, metrics, summary })
}

/// Greedy-policy evaluation averages, per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    /// Goals reached per episode.
    pub success: f64,
    /// Collision steps per episode.
    pub cost: f64,
    /// Mean per-step violation, averaged over episodes.
    pub violation: f64,
}

/// Roll out the greedy policy of `actor` for `episodes` full episodes.
pub fn evaluate(
    actor: &Mlp,
    env_cfg: &EnvConfig,
    props: &PropertySet,
    episodes: usize,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let mut master = rng_from_seed(seed);
    let mut env = NavEnv::new(EnvConfig { rng_seed: master.random(), ..env_cfg.clone() })?;
    let mut viol_rng: Rng = rng_from_seed(master.random());
    let (mut success, mut cost, mut violation) = (0.0, 0.0, 0.0);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        let (mut v_sum, mut n) = (0.0, 0usize);
        loop {
            let a = argmax(&actor.forward(&obs)?);
            v_sum += approximate_violation(actor, props, &obs, samples, &mut viol_rng)?.value;
            n += 1;
            let res = env.step(a)?;
            success += f64::from(u8::from(res.goal_reached));
            cost += res.cost();
            if res.done {
                break;
            }
            obs = res.obs;
        }
        violation += v_sum / n as f64;
    }
    let k = episodes as f64;
    Ok(EvalReport { episodes, success: success / k, cost: cost / k, violation: violation / k })
}
