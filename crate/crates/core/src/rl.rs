//! Q-learning on classic control tasks with a mixture as the action-value
//! approximator.
//!
//! The agent models the joint vector `[state ; q_1 .. q_A]` and reads the
//! action values back by conditioning on the state. Each update rewrites the
//! taken action's slot with its TD target and keeps the current prediction
//! in the other slots.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::LearnerParams;
use crate::inference::{argmax, predict, Partition};
use crate::model::{Mixture, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskName {
    CartPole,
    MountainCar,
}

impl TaskName {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::CartPole => "cart-pole",
            TaskName::MountainCar => "mountain-car",
        }
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cart-pole" | "cartpole" => Ok(TaskName::CartPole),
            "mountain-car" | "mountaincar" => Ok(TaskName::MountainCar),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }
}

// cart-pole constants
const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const POLE_HALF_LENGTH: f64 = 0.5;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * 2.0 * PI / 360.0;

// mountain-car constants
const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const POWER: f64 = 0.001;
const HILL_GRAVITY: f64 = 0.0025;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: TaskName,
    pub state_dim: usize,
    pub action_count: usize,
    /// Episodes are truncated (not terminated) after this many steps.
    pub max_steps: usize,
    /// Rolling mean episode reward that counts as solved.
    pub solve_threshold: f64,
    /// Typical spread of each state variable, used to size new components.
    pub state_scale: Vec<f64>,
}

impl EnvSpec {
    pub fn new(name: TaskName) -> Self {
        match name {
            TaskName::CartPole => Self {
                name,
                state_dim: 4,
                action_count: 2,
                max_steps: 200,
                solve_threshold: 195.0,
                state_scale: vec![2.0 * X_LIMIT, 2.0, 2.0 * THETA_LIMIT, 3.0],
            },
            TaskName::MountainCar => Self {
                name,
                state_dim: 2,
                action_count: 3,
                max_steps: 200,
                solve_threshold: -110.0,
                state_scale: vec![MAX_POSITION - MIN_POSITION, 2.0 * MAX_SPEED],
            },
        }
    }

    pub fn cart_pole() -> Self {
        Self::new(TaskName::CartPole)
    }

    pub fn mountain_car() -> Self {
        Self::new(TaskName::MountainCar)
    }

    pub fn reset<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.name {
            TaskName::CartPole => (0..4).map(|_| rng.gen_range(-0.05..0.05)).collect(),
            TaskName::MountainCar => vec![rng.gen_range(-0.6..-0.4), 0.0],
        }
    }

    /// Whether an episode with this terminal flag and length reached the
    /// task's goal: the full horizon for cart-pole, the flag for mountain car.
    pub fn is_success(&self, terminal: bool, steps: usize) -> bool {
        match self.name {
            TaskName::CartPole => steps >= self.max_steps,
            TaskName::MountainCar => terminal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// One step of the task dynamics.
///
/// # Panics
/// If `action >= spec.action_count` or the state has the wrong length.
pub fn env_step(spec: &EnvSpec, state: &[f64], action: usize) -> Transition {
    assert!(action < spec.action_count, "action {action} out of range for {}", spec.name.as_str());
    assert_eq!(state.len(), spec.state_dim, "state length");
    let (next_state, reward, terminal) = match spec.name {
        TaskName::CartPole => {
            let [x, x_dot, theta, theta_dot] = [state[0], state[1], state[2], state[3]];
            let force = if action == 1 { FORCE } else { -FORCE };
            let total_mass = CART_MASS + POLE_MASS;
            let pole_moment = POLE_MASS * POLE_HALF_LENGTH;
            let (sin, cos) = theta.sin_cos();
            let temp = (force + pole_moment * theta_dot * theta_dot * sin) / total_mass;
            let theta_acc = (GRAVITY * sin - cos * temp)
                / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
            let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
            let next = vec![
                x + TAU * x_dot,
                x_dot + TAU * x_acc,
                theta + TAU * theta_dot,
                theta_dot + TAU * theta_acc,
            ];
            let terminal = next[0].abs() > X_LIMIT || next[2].abs() > THETA_LIMIT;
            (next, 1.0, terminal)
        }
        TaskName::MountainCar => {
            let (mut position, mut velocity) = (state[0], state[1]);
            velocity += (action as f64 - 1.0) * POWER - (3.0 * position).cos() * HILL_GRAVITY;
            velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
            position = (position + velocity).clamp(MIN_POSITION, MAX_POSITION);
            if position == MIN_POSITION && velocity < 0.0 {
                velocity = 0.0;
            }
            (vec![position, velocity], -1.0, position >= GOAL_POSITION)
        }
    };
    Transition {
        state: state.to_vec(),
        action,
        reward,
        next_state,
        terminal,
    }
}

/// `epsilon(episode) = max(floor, start * decay^episode)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        (self.start * self.decay.powf(episode as f64)).max(self.floor).clamp(0.0, 1.0)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            decay: 0.995,
            floor: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Action value reported before the mixture has any component.
    pub q_init: f64,
    pub learner: LearnerParams,
    /// Spread assigned to each action-value dimension.
    pub q_scale: f64,
    pub episode_cap: usize,
    pub solve_window: usize,
    /// End the run as soon as the solve criterion holds.
    pub stop_when_solved: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            q_init: 0.0,
            learner: LearnerParams {
                delta: 0.1,
                beta: 0.001,
                representation: Representation::Precision,
                ..LearnerParams::default()
            },
            q_scale: 10.0,
            episode_cap: 1000,
            solve_window: 100,
            stop_when_solved: true,
        }
    }
}

impl AgentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.floor) || !(0.0..=1.0).contains(&e.decay) {
            return Err(Error::config("epsilon schedule values must lie in [0, 1]"));
        }
        if self.solve_window == 0 {
            return Err(Error::config("solve window must be positive"));
        }
        if !(self.q_scale > 0.0) {
            return Err(Error::config("q_scale must be positive"));
        }
        Ok(())
    }
}

pub struct QAgent {
    mixture: Mixture,
    partition: Partition,
    gamma: f64,
    q_init: f64,
    action_count: usize,
}

impl QAgent {
    pub fn new(spec: &EnvSpec, cfg: &AgentConfig) -> Result<Self> {
        Self::for_space(&spec.state_scale, spec.action_count, cfg)
    }

    /// Agent for an arbitrary state space described by per-variable scales.
    /// Unlike a run config, `cfg.gamma` may be 0 here.
    pub fn for_space(state_scale: &[f64], action_count: usize, cfg: &AgentConfig) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::config("need at least one action"));
        }
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(Error::config(format!("gamma must be in [0, 1], got {}", cfg.gamma)));
        }
        let mut scale = state_scale.to_vec();
        scale.extend(std::iter::repeat_n(cfg.q_scale, action_count));
        let dim = scale.len();
        Ok(Self {
            mixture: Mixture::new(cfg.learner.config(&scale)?),
            partition: Partition::trailing(dim, action_count)?,
            gamma: cfg.gamma,
            q_init: cfg.q_init,
            action_count,
        })
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        if self.mixture.is_empty() {
            return Ok(vec![self.q_init; self.action_count]);
        }
        Ok(predict(&self.mixture, &self.partition, state)?.target_mean.as_slice().to_vec())
    }

    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        if t.terminal || self.gamma == 0.0 {
            return Ok(t.reward);
        }
        let next = self.q_values(&t.next_state)?;
        Ok(t.reward + self.gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn agent_step(&mut self, t: &Transition) -> Result<()> {
        let q = self.q_values(&t.state)?;
        self.learn_with(t, q)
    }

    /// `agent_step` with the current values of `t.state` already computed.
    fn learn_with(&mut self, t: &Transition, mut q: Vec<f64>) -> Result<()> {
        if t.action >= self.action_count {
            return Err(Error::config(format!("action {} out of range", t.action)));
        }
        q[t.action] = self.td_target(t)?;
        let mut x = t.state.clone();
        x.extend(q);
        self.mixture.learn(&x)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Learning,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub reward: f64,
    pub epsilon: f64,
    pub components: usize,
}

#[derive(Clone, Debug)]
pub struct TaskReport {
    pub task: TaskName,
    pub policy: Policy,
    pub episodes: Vec<EpisodeRecord>,
    /// Episode at which the rolling mean over the solve window first met
    /// the threshold.
    pub solved_at: Option<usize>,
    /// First episode that reached the task goal.
    pub first_success: Option<usize>,
    pub max_components: usize,
}

/// Runs the learning agent until solved or the episode cap.
pub fn run_task(spec: &EnvSpec, cfg: &AgentConfig, seed: u64) -> Result<TaskReport> {
    run(spec, cfg, seed, Policy::Learning)
}

/// Uniformly random actions under the same episode accounting.
pub fn run_random(spec: &EnvSpec, cfg: &AgentConfig, seed: u64) -> Result<TaskReport> {
    run(spec, cfg, seed, Policy::Random)
}

pub fn run(spec: &EnvSpec, cfg: &AgentConfig, seed: u64, policy: Policy) -> Result<TaskReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = QAgent::new(spec, cfg)?;
    let mut report = TaskReport {
        task: spec.name,
        policy,
        episodes: Vec::with_capacity(cfg.episode_cap),
        solved_at: None,
        first_success: None,
        max_components: 0,
    };
    let mut window_sum = 0.0;

    for episode in 1..=cfg.episode_cap {
        let epsilon = match policy {
            Policy::Learning => cfg.epsilon.at(episode - 1),
            Policy::Random => 1.0,
        };
        let mut state = spec.reset(&mut rng);
        let mut reward = 0.0;
        let mut steps = 0;
        let mut terminal = false;
        while steps < spec.max_steps && !terminal {
            let q = match policy {
                Policy::Learning => Some(agent.q_values(&state)?),
                Policy::Random => None,
            };
            let action = match &q {
                Some(q) if rng.gen::<f64>() >= epsilon => argmax(q),
                _ => rng.gen_range(0..spec.action_count),
            };
            let t = env_step(spec, &state, action);
            if let Some(q) = q {
                agent.learn_with(&t, q)?;
                report.max_components = report.max_components.max(agent.mixture.len());
            }
            reward += t.reward;
            steps += 1;
            terminal = t.terminal;
            state = t.next_state;
        }
        if report.first_success.is_none() && spec.is_success(terminal, steps) {
            report.first_success = Some(episode);
        }
        report.episodes.push(EpisodeRecord {
            episode,
            reward,
            epsilon,
            components: agent.mixture.len(),
        });

        window_sum += reward;
        if episode > cfg.solve_window {
            window_sum -= report.episodes[episode - 1 - cfg.solve_window].reward;
        }
        if episode >= cfg.solve_window
            && report.solved_at.is_none()
            && window_sum / cfg.solve_window as f64 >= spec.solve_threshold
        {
            report.solved_at = Some(episode);
            if cfg.stop_when_solved {
                break;
            }
        }
    }
    Ok(report)
}

/// `episode,reward,epsilon,components`
pub fn write_csv<W: Write>(episodes: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "reward", "epsilon", "components"])?;
    for e in episodes {
        w.write_record([
            e.episode.to_string(),
            e.reward.to_string(),
            format!("{:.6}", e.epsilon),
            e.components.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valley_bottom_is_at_rest() {
        let spec = EnvSpec::mountain_car();
        let bottom = -PI / 6.0;
        let t = env_step(&spec, &[bottom, 0.0], 1);
        assert!((t.next_state[0] - bottom).abs() < 1e-12);
        assert!(t.next_state[1].abs() < 1e-12);
        assert_eq!(t.reward, -1.0);
        assert!(!t.terminal);
    }

    #[test]
    fn cart_pole_falls_past_twelve_degrees() {
        let spec = EnvSpec::cart_pole();
        let t = env_step(&spec, &[0.0, 0.0, 13f64.to_radians(), 0.0], 0);
        assert!(t.terminal);
        assert_eq!(t.reward, 1.0);
        let t = env_step(&spec, &[0.0, 0.0, 0.0, 0.0], 0);
        assert!(!t.terminal);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn invalid_action_panics() {
        env_step(&EnvSpec::cart_pole(), &[0.0; 4], 2);
    }

    #[test]
    fn epsilon_schedule_bounds() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(1) - 0.995).abs() < 1e-15);
        assert_eq!(s.at(10_000), 0.05);
    }

    #[test]
    fn untrained_agent_reports_q_init() {
        let cfg = AgentConfig {
            q_init: 2.5,
            ..AgentConfig::default()
        };
        let agent = QAgent::new(&EnvSpec::mountain_car(), &cfg).unwrap();
        assert_eq!(agent.q_values(&[-0.5, 0.0]).unwrap(), vec![2.5; 3]);
    }

    #[test]
    fn single_terminal_transition_is_fit() {
        let spec = EnvSpec::mountain_car();
        let mut agent = QAgent::new(&spec, &AgentConfig::default()).unwrap();
        let t = Transition {
            state: vec![0.45, 0.05],
            action: 2,
            reward: -1.0,
            next_state: vec![0.5, 0.05],
            terminal: true,
        };
        assert_eq!(agent.td_target(&t).unwrap(), -1.0);
        agent.agent_step(&t).unwrap();
        let q = agent.q_values(&t.state).unwrap();
        assert_eq!(q.len(), 3);
        assert!((q[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_ignores_next_state() {
        let spec = EnvSpec::cart_pole();
        let cfg = AgentConfig {
            gamma: 0.0,
            ..AgentConfig::default()
        };
        let mut agent = QAgent::new(&spec, &cfg).unwrap();
        agent
            .agent_step(&Transition {
                state: vec![0.0; 4],
                action: 0,
                reward: 7.0,
                next_state: vec![0.0; 4],
                terminal: false,
            })
            .unwrap();
        let t = Transition {
            state: vec![0.1; 4],
            action: 1,
            reward: 3.0,
            next_state: vec![0.0; 4],
            terminal: false,
        };
        assert_eq!(agent.td_target(&t).unwrap(), 3.0);
    }

    #[test]
    fn reward_accounting_and_determinism() {
        let cfg = AgentConfig {
            episode_cap: 15,
            ..AgentConfig::default()
        };
        for spec in [EnvSpec::cart_pole(), EnvSpec::mountain_car()] {
            let a = run_task(&spec, &cfg, 9).unwrap();
            let b = run_task(&spec, &cfg, 9).unwrap();
            assert_eq!(a.episodes, b.episodes);
            assert_eq!(a.episodes.len(), 15);
            for e in &a.episodes {
                match spec.name {
                    TaskName::CartPole => assert!(e.reward >= 1.0 && e.reward <= 200.0),
                    TaskName::MountainCar => assert!(e.reward <= -1.0 && e.reward >= -200.0),
                }
                assert!((0.0..=1.0).contains(&e.epsilon));
            }
        }
    }

    #[test]
    fn csv_layout() {
        let rows = vec![EpisodeRecord {
            episode: 1,
            reward: 12.0,
            epsilon: 1.0,
            components: 3,
        }];
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "episode,reward,epsilon,components\n1,12,1.000000,3\n");
    }
}
