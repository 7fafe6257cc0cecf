use serde::{Deserialize, Serialize};

use crate::env::Task;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagrangianConfig {
    pub init: f64,
    pub lr: f64,
    /// Per-episode cost budget; `None` takes the task default.
    pub threshold: Option<f64>,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self { init: 1.0, lr: 0.01, threshold: None }
    }
}

impl LagrangianConfig {
    /// Episode cost thresholds for each task.
    pub fn default_threshold(task: Task) -> f64 {
        match task {
            Task::FixedObsT => 0.48,
            Task::DynamicObsT => 0.98,
            Task::FixedObsNT => 4.5,
            Task::DynamicObsNT | Task::EvaluationNT => 11.0,
        }
    }
}

/// Projected dual ascent on the episode cost constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangianState {
    pub lambda: f64,
    pub threshold: f64,
    pub lr: f64,
}

impl LagrangianState {
    pub fn new(init: f64, threshold: f64, lr: f64) -> Result<Self> {
        if !(init.is_finite() && init >= 0.0) {
            return Err(Error::Config(format!("initial multiplier must be non-negative, got {init}")));
        }
        if !(threshold.is_finite() && threshold >= 0.0 && lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config("lagrangian threshold and lr must be finite and non-negative".into()));
        }
        Ok(Self { lambda: init, threshold, lr })
    }

    /// `λ ← max(0, λ + lr·(J_C − t))`; returns the new λ.
    pub fn step(&mut self, episode_cost: f64) -> Result<f64> {
        if !(episode_cost.is_finite() && episode_cost >= 0.0) {
            return Err(Error::invalid(format!("episode cost must be finite and non-negative, got {episode_cost}")));
        }
        self.lambda = (self.lambda + self.lr * (episode_cost - self.threshold)).max(0.0);
        Ok(self.lambda)
    }
}

/// `(r − λ·c) / (1 + λ)`.
pub fn lagrangian_reward(reward: f64, cost: f64, lambda: f64) -> f64 {
    (reward - lambda * cost) / (1.0 + lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_and_growth() {
        let mut s = LagrangianState::new(1.0, 4.5, 0.01).unwrap();
        assert_eq!(s.step(4.5).unwrap(), 1.0);
        let mut prev = s.lambda;
        for _ in 0..10 {
            let l = s.step(20.0).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn projected_at_zero() {
        let mut s = LagrangianState::new(0.05, 10.0, 0.1).unwrap();
        assert_eq!(s.step(0.0).unwrap(), 0.0);
        assert_eq!(s.step(0.0).unwrap(), 0.0);
        assert!(s.step(-1.0).is_err());
    }

    #[test]
    fn shaped_reward() {
        assert_eq!(lagrangian_reward(1.0, 1.0, 0.0), 1.0);
        assert_eq!(lagrangian_reward(1.0, 1.0, 1.0), 0.0);
        assert_eq!(lagrangian_reward(0.5, 0.0, 3.0), 0.125);
    }

    #[test]
    fn task_thresholds() {
        assert_eq!(LagrangianConfig::default_threshold(Task::FixedObsT), 0.48);
        assert_eq!(LagrangianConfig::default_threshold(Task::FixedObsNT), 4.5);
        assert_eq!(LagrangianConfig::default_threshold(Task::DynamicObsNT), 11.0);
    }
}
