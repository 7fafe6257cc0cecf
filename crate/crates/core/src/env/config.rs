use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalMode {
    /// Touching a terminal obstacle ends the episode.
    #[serde(rename = "T")]
    Terminal,
    /// Obstacles are visible to the lidar but the robot passes through them.
    #[serde(rename = "NT")]
    NonTerminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleShape {
    FixedRect { center: Vec2, half_extents: Vec2 },
    /// Disc moving at constant speed toward `waypoint`; a new waypoint is drawn on arrival.
    MovingDisc { center: Vec2, radius: f64, speed: f64, waypoint: Vec2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(flatten)]
    pub shape: ObstacleShape,
    #[serde(default = "default_true")]
    pub terminal: bool,
}

fn default_true() -> bool {
    true
}

impl Obstacle {
    pub fn rect(cx: f64, cy: f64, hx: f64, hy: f64) -> Self {
        Self { shape: ObstacleShape::FixedRect { center: [cx, cy], half_extents: [hx, hy] }, terminal: true }
    }

    /// Moving disc; the waypoint starts at the center and is drawn on reset.
    pub fn disc(cx: f64, cy: f64, radius: f64, speed: f64) -> Self {
        Self { shape: ObstacleShape::MovingDisc { center: [cx, cy], radius, speed, waypoint: [cx, cy] }, terminal: true }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.shape, ObstacleShape::MovingDisc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    /// Side of the square arena, meters.
    pub arena_size: f64,
    pub obstacles: Vec<Obstacle>,
    pub terminal_mode: TerminalMode,
    pub max_steps: usize,
    pub n_rays: usize,
    pub lidar_max_range: f64,
    /// Total lidar field of view, radians.
    pub lidar_fov: f64,
    pub robot_radius: f64,
    pub goal_radius: f64,
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Per-step time penalty in the dense reward.
    pub beta: f64,
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "empty".into(),
            arena_size: 4.0,
            obstacles: Vec::new(),
            terminal_mode: TerminalMode::NonTerminal,
            max_steps: 500,
            n_rays: 11,
            lidar_max_range: 3.5,
            lidar_fov: PI,
            robot_radius: 0.105,
            goal_radius: 0.15,
            dt: 0.1,
            v_max: 0.22,
            omega_max: 2.84,
            beta: 0.0005,
            rng_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arena_size", self.arena_size),
            ("lidar_max_range", self.lidar_max_range),
            ("lidar_fov", self.lidar_fov),
            ("robot_radius", self.robot_radius),
            ("goal_radius", self.goal_radius),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.lidar_fov > 2.0 * PI {
            return Err(Error::Config("lidar_fov exceeds a full turn".into()));
        }
        if self.n_rays < 2 {
            return Err(Error::Config("need at least two lidar rays".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if 2.0 * self.robot_radius >= self.arena_size {
            return Err(Error::Config("robot does not fit in the arena".into()));
        }
        let l = self.arena_size;
        let inside = |c: f64, h: f64| c - h >= 0.0 && c + h <= l;
        for (i, o) in self.obstacles.iter().enumerate() {
            let ok = match &o.shape {
                ObstacleShape::FixedRect { center, half_extents } => {
                    half_extents.iter().all(|&h| h.is_finite() && h > 0.0)
                        && inside(center[0], half_extents[0])
                        && inside(center[1], half_extents[1])
                }
                ObstacleShape::MovingDisc { center, radius, speed, waypoint } => {
                    radius.is_finite()
                        && *radius > 0.0
                        && speed.is_finite()
                        && *speed > 0.0
                        && center.iter().chain(waypoint).all(|&c| inside(c, *radius))
                }
            };
            if !ok {
                return Err(Error::Config(format!("obstacle {i} is degenerate or leaves the arena")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn arena_diagonal(&self) -> f64 {
        self.arena_size * std::f64::consts::SQRT_2
    }
}

/// The five navigation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "Fixed_obs_T")]
    FixedObsT,
    #[serde(rename = "Fixed_obs_NT")]
    FixedObsNT,
    #[serde(rename = "Dynamic_obs_T")]
    DynamicObsT,
    #[serde(rename = "Dynamic_obs_NT")]
    DynamicObsNT,
    #[serde(rename = "Evaluation_NT")]
    EvaluationNT,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::FixedObsT, Task::FixedObsNT, Task::DynamicObsT, Task::DynamicObsNT, Task::EvaluationNT];

    pub fn name(&self) -> &'static str {
        match self {
            Task::FixedObsT => "Fixed_obs_T",
            Task::FixedObsNT => "Fixed_obs_NT",
            Task::DynamicObsT => "Dynamic_obs_T",
            Task::DynamicObsNT => "Dynamic_obs_NT",
            Task::EvaluationNT => "Evaluation_NT",
        }
    }

    pub fn config(&self) -> EnvConfig {
        make_task(*self)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

fn fixed_layout() -> Vec<Obstacle> {
    vec![
        Obstacle::rect(1.0, 1.0, 0.25, 0.25),
        Obstacle::rect(3.0, 1.2, 0.2, 0.4),
        Obstacle::rect(2.0, 2.6, 0.45, 0.15),
        Obstacle::rect(0.9, 3.1, 0.2, 0.2),
        Obstacle::rect(3.2, 3.2, 0.25, 0.15),
    ]
}

fn dynamic_layout() -> Vec<Obstacle> {
    vec![
        Obstacle::disc(1.0, 1.0, 0.18, 0.15),
        Obstacle::disc(3.0, 1.0, 0.18, 0.1),
        Obstacle::disc(1.0, 3.0, 0.18, 0.1),
        Obstacle::disc(3.0, 3.0, 0.18, 0.15),
        Obstacle::disc(2.0, 2.0, 0.15, 0.05),
    ]
}

fn evaluation_layout() -> Vec<Obstacle> {
    vec![
        Obstacle::rect(1.2, 1.2, 0.3, 0.3),
        Obstacle::rect(4.6, 1.5, 0.25, 0.5),
        Obstacle::rect(3.0, 3.0, 0.5, 0.2),
        Obstacle::rect(1.3, 4.7, 0.3, 0.25),
        Obstacle::rect(4.7, 4.6, 0.3, 0.3),
        Obstacle::rect(3.0, 0.6, 0.2, 0.2),
        Obstacle::disc(2.0, 2.0, 0.18, 0.12),
        Obstacle::disc(4.0, 2.2, 0.18, 0.1),
        Obstacle::disc(2.2, 4.0, 0.18, 0.1),
        Obstacle::disc(4.0, 4.0, 0.18, 0.15),
    ]
}

/// Canned configuration for one of the five tasks.
pub fn make_task(task: Task) -> EnvConfig {
    let base = EnvConfig { name: task.name().into(), ..EnvConfig::default() };
    let (obstacles, mode, arena) = match task {
        Task::FixedObsT => (fixed_layout(), TerminalMode::Terminal, 4.0),
        Task::FixedObsNT => (fixed_layout(), TerminalMode::NonTerminal, 4.0),
        Task::DynamicObsT => (dynamic_layout(), TerminalMode::Terminal, 4.0),
        Task::DynamicObsNT => (dynamic_layout(), TerminalMode::NonTerminal, 4.0),
        Task::EvaluationNT => (evaluation_layout(), TerminalMode::NonTerminal, 6.0),
    };
    EnvConfig { obstacles, terminal_mode: mode, arena_size: arena, ..base }
}

/// [`make_task`] by name, e.g. `"Fixed_obs_NT"`.
pub fn make_task_by_name(name: &str) -> Result<EnvConfig> {
    Ok(make_task(name.parse()?))
}
