//! Reinforcement learning: PPO, dueling double DQN, Lagrangian PPO, and the
//! cost / violation reward penalties, plus the training loop tying them to
//! the navigation environment.

mod dqn;
mod gae;
mod lagrangian;
mod penalty;
mod policy;
mod ppo;
mod train;

pub use dqn::{ddqn_loss, ddqn_update, duel_q_values, DqnAgent, DqnConfig, DqnTransition, ReplayBuffer};
pub use gae::gae;
pub use lagrangian::{lagrangian_reward, LagrangianConfig, LagrangianState};
pub use penalty::{apply_penalty, PenaltyMode};
pub use policy::{argmax, log_softmax, sample_categorical, softmax};
pub use ppo::{ppo_sample_loss, ppo_update, PpoAgent, PpoConfig, PpoLossReport, RolloutBuffer, SampleLoss, Transition};
pub use train::{
    evaluate, train, train_with, AgentKind, EvalReport, MetricsRow, RunSummary, TrainConfig, TrainOutput, METRICS_HEADER,
};
