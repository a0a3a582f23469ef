//! Proximal policy optimization with a Gaussian head around the actor mean.
//!
//! The actor's unscaled output μ(s) is the mean of `u ~ N(μ, σ²)` with a
//! state-independent learnable `log σ`; the plant receives `ā·clip(u, −1, 1)`.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{reward, standard_normal, DivergenceGuard, TrainConfig, TrainError, TrainOutcome};
use crate::env::{DoubleIntegrator, State};
use crate::net::{Activation, Adam, Mlp, PolicyNet};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - LOG_SQRT_2PI
}

/// Scalar Adam for the log standard deviation.
struct ScalarAdam {
    lr: f64,
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    fn step(&mut self, param: &mut f64, g: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.t));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.t));
        *param -= self.lr * m_hat / (v_hat.sqrt() + 1e-8);
    }
}

struct Rollout {
    states: Vec<[f64; 2]>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    /// Value of the successor state.
    next_values: Vec<f64>,
    /// The advantage recursion does not continue past this step.
    boundary: Vec<bool>,
}

impl Rollout {
    fn with_capacity(n: usize) -> Self {
        Rollout {
            states: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            next_values: Vec::with_capacity(n),
            boundary: Vec::with_capacity(n),
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    /// Generalized advantage estimates and value targets.
    fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut adv = vec![0.0; n];
        let mut carry = 0.0;
        for t in (0..n).rev() {
            if self.boundary[t] {
                carry = 0.0;
            }
            let delta = self.rewards[t] + gamma * self.next_values[t] - self.values[t];
            carry = delta + gamma * lambda * carry;
            adv[t] = carry;
        }
        let returns = adv.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        (adv, returns)
    }
}

fn value_of(critic: &Mlp, scale: f64, s: State) -> f64 {
    critic.eval(&[s.p * scale, s.v * scale])[0]
}

pub(super) fn train(config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut actor: PolicyNet = config.initial_actor(&mut rng);
    if config.episodes == 0 {
        return Ok(TrainOutcome { actor, curve: Vec::new() });
    }
    let mut widths = vec![2];
    widths.extend_from_slice(&config.critic_hidden);
    widths.push(1);
    let mut critic = Mlp::random(&widths, true, Activation::Relu, Activation::Identity, &mut rng);
    let scale = config.critic_state_scale;
    let mut actor_opt = Adam::new(actor.mlp(), config.actor_lr);
    let mut critic_opt = Adam::new(&critic, config.critic_lr);
    let mut log_std = config.init_log_std;
    let mut log_std_opt = ScalarAdam {
        lr: config.actor_lr,
        m: 0.0,
        v: 0.0,
        t: 0,
    };

    let plant = DoubleIntegrator::new(config.action_bound);
    let mut guard = DivergenceGuard::default();
    let mut curve = Vec::with_capacity(config.episodes);
    let total_steps = config.episodes * config.steps_per_episode;
    let mut done_steps = 0usize;
    let mut s = config.sample_initial_state(&mut rng);
    let mut step_in_episode = 0usize;
    let mut ret = 0.0;

    while done_steps < total_steps {
        let n = config.rollout_batch.min(total_steps - done_steps);
        let mut batch = Rollout::with_capacity(n);
        let mut finished = Vec::new();
        for k in 0..n {
            let mean = actor.output(s).map_err(|_| crate::env::EnvError::NonFinite)?;
            let u = mean + log_std.exp() * standard_normal(&mut rng);
            let a = config.action_bound * u.clamp(-1.0, 1.0);
            let next = plant.step(s, a, config.dt)?;
            let r = reward(s, a, &config.reward_weights);
            ret += r;
            batch.states.push([s.p, s.v]);
            batch.actions.push(u);
            batch.log_probs.push(log_prob(u, mean, log_std));
            batch.rewards.push(r * config.reward_scale);
            batch.values.push(value_of(&critic, scale, s));
            batch.next_values.push(value_of(&critic, scale, next));
            step_in_episode += 1;
            let episode_over = step_in_episode == config.steps_per_episode;
            batch.boundary.push(episode_over || k + 1 == n);
            if episode_over {
                finished.push(ret);
                ret = 0.0;
                step_in_episode = 0;
                s = config.sample_initial_state(&mut rng);
            } else {
                s = next;
            }
        }
        done_steps += n;

        let (mut adv, returns) = batch.advantages(config.gamma, config.gae_lambda);
        let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
        let std_adv = (adv.iter().map(|a| (a - mean_adv).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
        for a in &mut adv {
            *a = (*a - mean_adv) / (std_adv + 1e-8);
        }

        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..config.epochs_per_update {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.minibatch_size) {
                let m = chunk.len();
                let mut states = Array2::zeros((m, 2));
                for (row, &idx) in chunk.iter().enumerate() {
                    states[[row, 0]] = batch.states[idx][0];
                    states[[row, 1]] = batch.states[idx][1];
                }

                let trace = actor.mlp().forward_batch(&states);
                let sigma = log_std.exp();
                let mut grad_mean = Array2::zeros((m, 1));
                let mut grad_log_std = 0.0;
                for (row, &idx) in chunk.iter().enumerate() {
                    let mean = trace.output()[[row, 0]];
                    let u = batch.actions[idx];
                    let ratio = (log_prob(u, mean, log_std) - batch.log_probs[idx]).exp();
                    let a = adv[idx];
                    let clipped = (a > 0.0 && ratio > 1.0 + config.clip_ratio)
                        || (a < 0.0 && ratio < 1.0 - config.clip_ratio);
                    if clipped {
                        continue;
                    }
                    let z = (u - mean) / sigma;
                    // loss = −ratio·A; d ratio = ratio · d log π
                    let coef = -a * ratio / m as f64;
                    grad_mean[[row, 0]] = coef * z / sigma;
                    grad_log_std += coef * (z * z - 1.0);
                }
                let (mut grads, _) = actor.mlp().backward(&trace, &grad_mean);
                grads.clip_norm(config.max_grad_norm);
                actor_opt.step(actor.mlp_mut(), &grads);
                log_std_opt.step(&mut log_std, grad_log_std);
                log_std = log_std.clamp(-5.0, 1.0);

                let scaled = &states * scale;
                let vtrace = critic.forward_batch(&scaled);
                let targets = Array1::from_iter(chunk.iter().map(|&idx| returns[idx])).insert_axis(ndarray::Axis(1));
                let grad_v = (vtrace.output() - &targets) / m as f64;
                let (mut vgrads, _) = critic.backward(&vtrace, &grad_v);
                vgrads.clip_norm(config.max_grad_norm);
                critic_opt.step(&mut critic, &vgrads);
            }
        }

        for r in finished {
            curve.push((curve.len(), r));
            guard.check(&actor, &curve)?;
        }
        log::debug!(
            "ppo: {done_steps}/{total_steps} steps, {} episodes, log_std {log_std:.3}",
            curve.len()
        );
    }
    Ok(TrainOutcome { actor, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_prob_is_normal_density() {
        let lp = log_prob(0.3, 0.1, (0.5f64).ln());
        let expected = (-(0.2f64 / 0.5).powi(2) / 2.0).exp() / (0.5 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((lp.exp() - expected).abs() < 1e-12);
    }

    #[test]
    fn gae_stops_at_boundaries() {
        let batch = Rollout {
            states: vec![[0.0; 2]; 3],
            actions: vec![0.0; 3],
            log_probs: vec![0.0; 3],
            rewards: vec![1.0, 1.0, 1.0],
            values: vec![0.0; 3],
            next_values: vec![0.0; 3],
            boundary: vec![false, true, true],
        };
        let (adv, _) = batch.advantages(0.5, 1.0);
        assert_eq!(adv, vec![1.5, 1.0, 1.0]);
    }
}
