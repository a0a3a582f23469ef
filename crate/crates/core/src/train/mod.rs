//! Trainers that produce policy networks for division analysis.
//!
//! Both trainers are single-threaded and draw every random number from one
//! seeded ChaCha stream, so a configuration and seed determine the final
//! weights bit for bit.

mod ddpg;
mod ppo;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{State, TrajectoryMetrics};
use crate::net::{Activation, PolicyNet};
use crate::textio::sig9;

pub use ddpg::CriticNet;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("training diverged at episode {episode}")]
    Diverged { episode: usize },
    #[error("environment error: {0}")]
    Env(#[from] crate::env::EnvError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ddpg,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub position: f64,
    pub velocity: f64,
    pub action: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            position: 1.0,
            velocity: 0.1,
            action: 0.001,
        }
    }
}

/// `−(w_p·p² + w_v·v² + w_a·a²)`, with `a` in m/s².
pub fn reward(s: State, a: f64, w: &RewardWeights) -> f64 {
    -(w.position * s.p * s.p + w.velocity * s.v * s.v + w.action * a * a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub dt: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Actor hidden widths.
    pub hidden_layers: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Bias-free tanh actor when true.
    pub simplified: bool,
    /// Hidden activation of a general (non-simplified) actor.
    pub activation: Activation,
    pub action_bound: f64,
    pub init_p_range: (f64, f64),
    pub init_v_range: (f64, f64),
    pub reward_weights: RewardWeights,
    /// Multiplier applied to rewards before they reach the learners.
    pub reward_scale: f64,
    /// Critic inputs are `(p, v)·critic_state_scale`.
    pub critic_state_scale: f64,
    pub max_grad_norm: f64,

    // DDPG
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub update_every: usize,
    pub tau: f64,
    pub exploration_noise_std: f64,
    pub exploration_decay: f64,

    // PPO
    pub clip_ratio: f64,
    pub epochs_per_update: usize,
    pub rollout_batch: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub init_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Ddpg,
            seed: 0,
            episodes: 2000,
            steps_per_episode: 400,
            dt: 0.05,
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            hidden_layers: vec![32, 32, 32],
            critic_hidden: vec![64, 64],
            simplified: true,
            activation: Activation::Tanh,
            action_bound: crate::net::DEFAULT_ACTION_BOUND,
            init_p_range: (-10.0, 10.0),
            init_v_range: (-1.0, 1.0),
            reward_weights: RewardWeights::default(),
            reward_scale: 0.01,
            critic_state_scale: 0.1,
            max_grad_norm: 1.0,
            replay_capacity: 100_000,
            batch_size: 64,
            warmup_steps: 1000,
            update_every: 1,
            tau: 0.005,
            exploration_noise_std: 0.5,
            exploration_decay: 0.999,
            clip_ratio: 0.2,
            epochs_per_update: 10,
            rollout_batch: 2048,
            minibatch_size: 64,
            gae_lambda: 0.95,
            init_log_std: -0.5,
        }
    }
}

impl TrainConfig {
    pub fn ddpg(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn ppo(seed: u64) -> Self {
        TrainConfig {
            algorithm: Algorithm::Ppo,
            seed,
            actor_lr: 3e-4,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |what: &str| Err(TrainError::Invariant(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("discount");
        }
        let ordered = |(lo, hi): (f64, f64)| lo <= hi;
        if !ordered(self.init_p_range) || !ordered(self.init_v_range) {
            return fail("initial-state ranges must be ordered");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail("time step must be positive");
        }
        if self.action_bound.is_nan() || self.action_bound <= 0.0 {
            return fail("action bound must be positive");
        }
        if self.steps_per_episode == 0 {
            return fail("steps per episode must be positive");
        }
        if self.hidden_layers.iter().chain(&self.critic_hidden).any(|&w| w == 0) {
            return fail("layer widths must be positive");
        }
        if self.simplified && self.activation != Activation::Tanh {
            return fail("simplified actor requires tanh activation");
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("tau and gae_lambda must lie in [0, 1]");
        }
        match self.algorithm {
            Algorithm::Ddpg => {
                if self.batch_size == 0 || self.replay_capacity < self.batch_size || self.update_every == 0 {
                    return fail("replay capacity must hold at least one batch");
                }
            }
            Algorithm::Ppo => {
                if self.rollout_batch == 0 || self.minibatch_size == 0 || self.clip_ratio <= 0.0 {
                    return fail("PPO batch sizes and clip ratio must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        TrainConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub(crate) fn initial_actor<R: Rng + ?Sized>(&self, rng: &mut R) -> PolicyNet {
        PolicyNet::random(
            &self.hidden_layers,
            self.activation,
            self.simplified,
            self.action_bound,
            rng,
        )
    }

    pub(crate) fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let p = draw(rng, self.init_p_range);
        let v = draw(rng, self.init_v_range);
        State::new(p, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub actor: PolicyNet,
    /// `(episode, undiscounted return)` per completed episode.
    pub curve: Vec<(usize, f64)>,
}

impl TrainOutcome {
    pub fn write_curve<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "episode,return")?;
        for (e, r) in &self.curve {
            writeln!(out, "{e},{}", sig9(*r))?;
        }
        Ok(())
    }

    pub fn mean_return(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.curve[range];
        slice.iter().map(|(_, r)| r).sum::<f64>() / slice.len() as f64
    }
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    match config.algorithm {
        Algorithm::Ddpg => ddpg::train(config),
        Algorithm::Ppo => ppo::train(config),
    }
}

/// Rollout of the deterministic actor with the default evaluation settings.
pub fn evaluate(actor: &PolicyNet, s0: State) -> Result<TrajectoryMetrics, TrainError> {
    let opts = crate::env::RolloutOptions {
        action_bound: actor.action_bound(),
        ..Default::default()
    };
    let traj = crate::env::rollout(actor, s0, &opts)?;
    Ok(traj.metrics(actor.action_bound()))
}

const GUARD_WINDOW: usize = 50;
const SATURATION: f64 = 0.999;
const PROBES: [State; 8] = [
    State::new(0.5, 0.0),
    State::new(-0.5, 0.0),
    State::new(0.0, 0.5),
    State::new(0.0, -0.5),
    State::new(0.5, 0.5),
    State::new(-0.5, -0.5),
    State::new(0.5, -0.5),
    State::new(-0.5, 0.5),
];

/// Aborts when the actor output is pinned at ±1 on every probe state for a
/// full window of episodes while the return gets worse.
#[derive(Debug, Default)]
pub(crate) struct DivergenceGuard {
    saturated_run: usize,
}

impl DivergenceGuard {
    pub fn check(&mut self, actor: &PolicyNet, curve: &[(usize, f64)]) -> Result<(), TrainError> {
        let saturated = PROBES
            .iter()
            .all(|&s| actor.output(s).map_or(true, |mu| mu.abs() > SATURATION));
        self.saturated_run = if saturated { self.saturated_run + 1 } else { 0 };
        if self.saturated_run >= GUARD_WINDOW && curve.len() >= 2 * GUARD_WINDOW {
            let n = curve.len();
            let mean = |r: std::ops::Range<usize>| curve[r].iter().map(|(_, x)| x).sum::<f64>() / GUARD_WINDOW as f64;
            if mean(n - GUARD_WINDOW..n) < mean(n - 2 * GUARD_WINDOW..n - GUARD_WINDOW) {
                return Err(TrainError::Diverged { episode: n });
            }
        }
        Ok(())
    }
}

/// One draw from N(0, 1).
pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_values() {
        let w = RewardWeights::default();
        assert_eq!(reward(State::ORIGIN, 0.0, &w), 0.0);
        assert_eq!(reward(State::new(-10.0, 0.0), 0.0, &w), -100.0);
        let s = State::new(1.5, -2.0);
        assert_eq!(reward(-s, 3.0, &w), reward(s, -3.0, &w));
    }

    #[test]
    fn discount_out_of_range() {
        let config = TrainConfig {
            gamma: 1.5,
            ..TrainConfig::default()
        };
        let err = config.validate().unwrap_err();
        assert_eq!(err.to_string(), "invariant violation: discount");
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let config = TrainConfig::ppo(7);
        assert_eq!(TrainConfig::from_toml(&config.to_toml()).unwrap(), config);
        let partial = TrainConfig::from_toml("algorithm = \"ppo\"\nepisodes = 3\n").unwrap();
        assert_eq!(partial.algorithm, Algorithm::Ppo);
        assert_eq!(partial.episodes, 3);
        assert!(TrainConfig::from_toml("unknown_key = 1").is_err());
        assert!(TrainConfig::from_toml("init_p_range = [3.0, -3.0]").is_err());
    }

    #[test]
    fn zero_episodes_returns_initial_actor() {
        for config in [TrainConfig::ddpg(5), TrainConfig::ppo(5)] {
            let config = TrainConfig { episodes: 0, ..config };
            let out = train(&config).unwrap();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
            assert_eq!(out.actor, config.initial_actor(&mut rng));
            assert!(out.curve.is_empty());
        }
    }
}
