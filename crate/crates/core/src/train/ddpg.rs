//! Deterministic policy gradient with a replay buffer and soft target
//! networks.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reward, standard_normal, DivergenceGuard, TrainConfig, TrainError, TrainOutcome};
use crate::env::{DoubleIntegrator, State};
use crate::net::{Activation, Adam, Mlp, PolicyNet};

/// Q(p, v, u) with `u` the unscaled action in [-1, 1]. Biased ReLU hidden
/// layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: Mlp,
    pub state_scale: f64,
}

impl CriticNet {
    pub fn random<R: Rng + ?Sized>(hidden: &[usize], state_scale: f64, rng: &mut R) -> Self {
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        CriticNet {
            mlp: Mlp::random(&widths, true, Activation::Relu, Activation::Identity, rng),
            state_scale,
        }
    }

    fn inputs(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        let n = states.nrows();
        let mut x = Array2::zeros((n, 3));
        x.slice_mut(s![.., 0..2]).assign(&(states * self.state_scale));
        x.slice_mut(s![.., 2..3]).assign(actions);
        x
    }

    pub fn value(&self, s: State, u: f64) -> f64 {
        self.mlp.eval(&[s.p * self.state_scale, s.v * self.state_scale, u])[0]
    }
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    state: [f64; 2],
    action: f64,
    reward: f64,
    next: [f64; 2],
}

/// Fixed-capacity ring buffer.
struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch {
        let mut batch = Batch {
            states: Array2::zeros((n, 2)),
            actions: Array2::zeros((n, 1)),
            rewards: Array2::zeros((n, 1)),
            next: Array2::zeros((n, 2)),
        };
        for row in 0..n {
            let t = &self.items[rng.gen_range(0..self.items.len())];
            batch.states[[row, 0]] = t.state[0];
            batch.states[[row, 1]] = t.state[1];
            batch.actions[[row, 0]] = t.action;
            batch.rewards[[row, 0]] = t.reward;
            batch.next[[row, 0]] = t.next[0];
            batch.next[[row, 1]] = t.next[1];
        }
        batch
    }
}

struct Batch {
    states: Array2<f64>,
    actions: Array2<f64>,
    rewards: Array2<f64>,
    next: Array2<f64>,
}

struct Learner {
    actor: PolicyNet,
    actor_target: Mlp,
    critic: CriticNet,
    critic_target: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    gamma: f64,
    tau: f64,
    max_grad_norm: f64,
}

impl Learner {
    fn update(&mut self, batch: &Batch) {
        let n = batch.states.nrows() as f64;

        // critic: regress onto r + γ Q'(s', μ'(s'))
        let next_actions = self.actor_target.forward_batch(&batch.next).output().clone();
        let next_q = self
            .critic_target
            .mlp
            .forward_batch(&self.critic_target.inputs(&batch.next, &next_actions))
            .output()
            .clone();
        let targets = &batch.rewards + &(next_q * self.gamma);
        let trace = self.critic.mlp.forward_batch(&self.critic.inputs(&batch.states, &batch.actions));
        let grad_q = (trace.output() - &targets) / n;
        let (mut critic_grads, _) = self.critic.mlp.backward(&trace, &grad_q);
        critic_grads.clip_norm(self.max_grad_norm);
        self.critic_opt.step(&mut self.critic.mlp, &critic_grads);

        // actor: ascend Q(s, μ(s))
        let actor_trace = self.actor.mlp().forward_batch(&batch.states);
        let q_trace = self
            .critic
            .mlp
            .forward_batch(&self.critic.inputs(&batch.states, actor_trace.output()));
        let ascend = Array2::from_elem((batch.states.nrows(), 1), -1.0 / n);
        let (_, grad_input) = self.critic.mlp.backward(&q_trace, &ascend);
        let grad_u = grad_input.slice(s![.., 2..3]).to_owned();
        let (mut actor_grads, _) = self.actor.mlp().backward(&actor_trace, &grad_u);
        actor_grads.clip_norm(self.max_grad_norm);
        self.actor_opt.step(self.actor.mlp_mut(), &actor_grads);

        self.actor_target.soft_update(self.actor.mlp(), self.tau);
        self.critic_target.mlp.soft_update(&self.critic.mlp, self.tau);
    }
}

pub(super) fn train(config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let actor = config.initial_actor(&mut rng);
    if config.episodes == 0 {
        return Ok(TrainOutcome { actor, curve: Vec::new() });
    }
    let critic = CriticNet::random(&config.critic_hidden, config.critic_state_scale, &mut rng);
    let mut learner = Learner {
        actor_target: actor.mlp().clone(),
        critic_target: critic.clone(),
        actor_opt: Adam::new(actor.mlp(), config.actor_lr),
        critic_opt: Adam::new(&critic.mlp, config.critic_lr),
        actor,
        critic,
        gamma: config.gamma,
        tau: config.tau,
        max_grad_norm: config.max_grad_norm,
    };
    let plant = DoubleIntegrator::new(config.action_bound);
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut guard = DivergenceGuard::default();
    let mut curve = Vec::with_capacity(config.episodes);
    let mut noise = config.exploration_noise_std;
    let mut total_steps = 0usize;

    for episode in 0..config.episodes {
        let mut s = config.sample_initial_state(&mut rng);
        let mut ret = 0.0;
        for _ in 0..config.steps_per_episode {
            let mu = learner.actor.output(s).map_err(|_| crate::env::EnvError::NonFinite)?;
            let u = (mu + noise * standard_normal(&mut rng)).clamp(-1.0, 1.0);
            let a = config.action_bound * u;
            let next = plant.step(s, a, config.dt)?;
            let r = reward(s, a, &config.reward_weights);
            ret += r;
            buffer.push(Transition {
                state: [s.p, s.v],
                action: u,
                reward: r * config.reward_scale,
                next: [next.p, next.v],
            });
            s = next;
            total_steps += 1;
            if total_steps >= config.warmup_steps
                && buffer.len() >= config.batch_size
                && total_steps.is_multiple_of(config.update_every)
            {
                let batch = buffer.sample(config.batch_size, &mut rng);
                learner.update(&batch);
            }
        }
        curve.push((episode, ret));
        noise *= config.exploration_decay;
        guard.check(&learner.actor, &curve)?;
        log::debug!("ddpg episode {episode}: return {ret:.1}");
    }
    Ok(TrainOutcome {
        actor: learner.actor,
        curve,
    })
}
