//! Deterministic 2D mapless navigation.
//!
//! A unicycle robot with a fan of lidar rays drives to randomly placed goals
//! in a square arena with static boxes and moving discs. Observations are the
//! normalized lidar readings followed by the goal distance and heading.

mod config;
pub mod geometry;

use std::f64::consts::PI;

use rand::Rng as _;
use serde::Serialize;

pub use config::{make_task, make_task_by_name, EnvConfig, Obstacle, ObstacleShape, Task, TerminalMode};
use geometry::{distance, point_rect_distance, ray_aabb, ray_circle, ray_exit_aabb, wrap_angle, Vec2};

use crate::{rng_from_seed, Error, Result, Rng};

pub const N_ACTIONS: usize = 5;
pub const ACTION_NAMES: [&str; N_ACTIONS] = ["turn_left", "forward_left", "forward_right", "turn_right", "forward"];
const MAX_SAMPLING_TRIES: usize = 10_000;

pub type Observation = Vec<f64>;

/// Linear and angular velocity of an action.
pub fn action_velocities(cfg: &EnvConfig, action: usize) -> Result<(f64, f64)> {
    let (v, w) = (cfg.v_max, cfg.omega_max);
    Ok(match action {
        0 => (0.0, w),
        1 => (0.5 * v, 0.5 * w),
        2 => (0.5 * v, -0.5 * w),
        3 => (0.0, -w),
        4 => (v, 0.0),
        _ => return Err(Error::invalid(format!("action {action} out of range 0..{N_ACTIONS}"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in `(−π, π]`.
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        [self.x, self.y]
    }

    /// Pose after driving at `(v, omega)` for `dt`, integrating the arc exactly.
    pub fn advance(&self, v: f64, omega: f64, dt: f64) -> Pose {
        if omega == 0.0 {
            return Pose { x: self.x + v * dt * self.theta.cos(), y: self.y + v * dt * self.theta.sin(), theta: self.theta };
        }
        let th = self.theta + omega * dt;
        let r = v / omega;
        Pose { x: self.x + r * (th.sin() - self.theta.sin()), y: self.y - r * (th.cos() - self.theta.cos()), theta: wrap_angle(th) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Running,
    GoalReached,
    /// Hit a terminal obstacle in terminal mode.
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    /// The robot overlaps an obstacle after this step.
    pub collision: bool,
    pub done: bool,
    pub outcome: Outcome,
    /// A goal was reached this step (and a new one drawn), even if the step
    /// also timed out.
    pub goal_reached: bool,
}

impl StepResult {
    pub fn cost(&self) -> f64 {
        if self.collision {
            1.0
        } else {
            0.0
        }
    }

    /// Ended by the step limit rather than by the task.
    pub fn truncated(&self) -> bool {
        self.outcome == Outcome::Timeout
    }
}

/// Distances from `pose` along each lidar ray, normalized by the range and
/// clamped to 1.
///
/// Ray `i` points at `theta + fov/2 − i·fov/(n−1)`: ray 0 is the leftmost,
/// the middle ray looks straight ahead. Obstacles containing the sensor are
/// not seen; the arena walls always are.
pub fn lidar_scan(pose: &Pose, obstacles: &[Obstacle], cfg: &EnvConfig) -> Vec<f64> {
    let n = cfg.n_rays;
    let o = pose.position();
    let l = cfg.arena_size;
    (0..n)
        .map(|i| {
            let a = pose.theta + 0.5 * cfg.lidar_fov - i as f64 * cfg.lidar_fov / (n - 1) as f64;
            let dir = [a.cos(), a.sin()];
            let mut t = ray_exit_aabb(o, dir, [0.0, 0.0], [l, l]);
            for ob in obstacles {
                let hit = match &ob.shape {
                    ObstacleShape::FixedRect { center, half_extents } => ray_aabb(
                        o,
                        dir,
                        [center[0] - half_extents[0], center[1] - half_extents[1]],
                        [center[0] + half_extents[0], center[1] + half_extents[1]],
                    ),
                    ObstacleShape::MovingDisc { center, radius, .. } => ray_circle(o, dir, *center, *radius),
                };
                if let Some(h) = hit {
                    t = t.min(h);
                }
            }
            (t / cfg.lidar_max_range).clamp(0.0, 1.0)
        })
        .collect()
}

/// Goal distance over the arena diagonal (clamped to 1) and relative bearing
/// over π, with "directly behind" mapped to +1.
pub fn goal_features(pose: &Pose, goal: Vec2, cfg: &EnvConfig) -> (f64, f64) {
    let dx = goal[0] - pose.x;
    let dy = goal[1] - pose.y;
    let d = dx.hypot(dy);
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let heading = wrap_angle(dy.atan2(dx) - pose.theta) / PI;
    ((d / cfg.arena_diagonal()).min(1.0), heading)
}

fn overlaps(p: Vec2, radius: f64, ob: &Obstacle) -> bool {
    match &ob.shape {
        ObstacleShape::FixedRect { center, half_extents } => point_rect_distance(p, *center, *half_extents) < radius,
        ObstacleShape::MovingDisc { center, radius: r, .. } => distance(p, *center) < radius + r,
    }
}

/// One navigation episode stream. Construct, [`reset`](NavEnv::reset), then
/// [`step`](NavEnv::step) until `done`.
#[derive(Debug, Clone)]
pub struct NavEnv {
    cfg: EnvConfig,
    obstacles: Vec<Obstacle>,
    pose: Pose,
    goal: Vec2,
    prev_dist: f64,
    steps: usize,
    done: bool,
    rng: Rng,
}

impl NavEnv {
    /// Validates `cfg`; the generator is seeded from `cfg.rng_seed`.
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.arena_size;
        Ok(Self {
            obstacles: cfg.obstacles.clone(),
            pose: Pose::new(0.5 * l, 0.5 * l, 0.0),
            goal: [0.5 * l, 0.5 * l],
            prev_dist: 0.0,
            steps: 0,
            done: true,
            rng: rng_from_seed(cfg.rng_seed),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Reseed and start a new episode.
    pub fn reset_seeded(&mut self, seed: u64) -> Result<Observation> {
        self.rng = rng_from_seed(seed);
        self.reset()
    }

    /// Start a new episode, continuing the generator stream.
    pub fn reset(&mut self) -> Result<Observation> {
        self.obstacles = self.cfg.obstacles.clone();
        let l = self.cfg.arena_size;
        for i in 0..self.obstacles.len() {
            if let ObstacleShape::MovingDisc { radius, .. } = self.obstacles[i].shape {
                let wp = self.sample_point(radius, l - radius);
                if let ObstacleShape::MovingDisc { waypoint, .. } = &mut self.obstacles[i].shape {
                    *waypoint = wp;
                }
            }
        }
        let r = self.cfg.robot_radius;
        let mut placed = false;
        for _ in 0..MAX_SAMPLING_TRIES {
            let p = self.sample_point(r, l - r);
            if !self.obstacles.iter().any(|o| overlaps(p, r, o)) {
                let theta = self.rng.random_range(-PI..PI);
                self.pose = Pose::new(p[0], p[1], theta);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!("no collision-free start found in {MAX_SAMPLING_TRIES} tries")));
        }
        self.resample_goal()?;
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    fn sample_point(&mut self, lo: f64, hi: f64) -> Vec2 {
        [self.rng.random_range(lo..=hi), self.rng.random_range(lo..=hi)]
    }

    /// Uniform goal clear of every obstacle inflated by the robot radius and
    /// not already reached.
    fn resample_goal(&mut self) -> Result<()> {
        let r = self.cfg.robot_radius;
        let l = self.cfg.arena_size;
        for _ in 0..MAX_SAMPLING_TRIES {
            let g = self.sample_point(r, l - r);
            if distance(g, self.pose.position()) > self.cfg.goal_radius && !self.obstacles.iter().any(|o| overlaps(g, r, o)) {
                self.goal = g;
                self.prev_dist = distance(g, self.pose.position());
                return Ok(());
            }
        }
        Err(Error::Config(format!("no free goal found in {MAX_SAMPLING_TRIES} tries")))
    }

    /// Place the robot and goal directly, for scripted scenarios.
    pub fn set_state(&mut self, pose: Pose, goal: Vec2) {
        self.pose = pose;
        self.goal = goal;
        self.prev_dist = distance(goal, pose.position());
        self.done = false;
    }

    pub fn observe(&self) -> Observation {
        let mut obs = lidar_scan(&self.pose, &self.obstacles, &self.cfg);
        let (d, h) = goal_features(&self.pose, self.goal, &self.cfg);
        obs.push(d);
        obs.push(h);
        obs
    }

    /// Whether the robot overlaps any obstacle, and whether any of those is terminal.
    pub fn collision_state(&self) -> (bool, bool) {
        let p = self.pose.position();
        let r = self.cfg.robot_radius;
        let mut any = false;
        let mut terminal = false;
        for o in self.obstacles.iter().filter(|o| overlaps(p, r, o)) {
            any = true;
            terminal |= o.terminal;
        }
        (any, terminal)
    }

    fn move_obstacles(&mut self) {
        let dt = self.cfg.dt;
        let l = self.cfg.arena_size;
        for i in 0..self.obstacles.len() {
            let ObstacleShape::MovingDisc { center, radius, speed, waypoint } = self.obstacles[i].shape else {
                continue;
            };
            let d = distance(center, waypoint);
            let stride = speed * dt;
            let (new_center, arrived) = if d <= stride {
                (waypoint, true)
            } else {
                let f = stride / d;
                ([center[0] + f * (waypoint[0] - center[0]), center[1] + f * (waypoint[1] - center[1])], false)
            };
            let new_wp = if arrived { self.sample_point(radius, l - radius) } else { waypoint };
            if let ObstacleShape::MovingDisc { center, waypoint, .. } = &mut self.obstacles[i].shape {
                *center = new_center;
                *waypoint = new_wp;
            }
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let (v, w) = action_velocities(&self.cfg, action)?;
        self.move_obstacles();
        let r = self.cfg.robot_radius;
        let hi = self.cfg.arena_size - r;
        let next = self.pose.advance(v, w, self.cfg.dt);
        self.pose = Pose { x: next.x.clamp(r, hi), y: next.y.clamp(r, hi), theta: next.theta };
        self.steps += 1;

        let (collision, terminal_hit) = self.collision_state();
        let d = distance(self.goal, self.pose.position());
        let mut outcome = Outcome::Running;
        let mut goal_reached = false;
        let reward = if d <= self.cfg.goal_radius {
            goal_reached = true;
            outcome = Outcome::GoalReached;
            self.resample_goal()?;
            1.0
        } else {
            let rew = (self.prev_dist - d) - self.cfg.beta;
            self.prev_dist = d;
            rew
        };
        if terminal_hit && self.cfg.terminal_mode == TerminalMode::Terminal {
            outcome = Outcome::Collision;
            self.done = true;
        } else if self.steps >= self.cfg.max_steps {
            outcome = Outcome::Timeout;
            self.done = true;
        }
        Ok(StepResult { obs: self.observe(), reward, collision, done: self.done, outcome, goal_reached })
    }
}
