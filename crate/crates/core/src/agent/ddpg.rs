use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentAction, AgentState, ExplorationNoise, ReplayMemory, StateMode, StateScales, Transition};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, Mlp};

/// Tag written at the top of every agent checkpoint.
pub const CHECKPOINT_FORMAT: &str = "slicelab-ddpg";
const CHECKPOINT_VERSION: u32 = 1;

/// DDPG hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub noise_std: f64,
    pub noise_decay: f64,
    /// Transitions collected with uniform random actions before learning starts.
    /// Defaults to `batch_size` when absent.
    pub warmup: Option<usize>,
    /// Multiplier applied to stored rewards when forming critic targets.
    pub reward_scale: f64,
    /// Output layers of both networks are drawn from `±final_layer_init`.
    pub final_layer_init: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            hidden: vec![128, 128],
            leaky_slope: 0.01,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 512,
            replay_capacity: 100_000,
            noise_std: 1.0,
            noise_decay: 0.9999,
            warmup: None,
            reward_scale: 1.0,
            final_layer_init: 3e-3,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("agent: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0,1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0,1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if !(self.noise_std >= 0.0 && (0.0..=1.0).contains(&self.noise_decay)) {
            return bad("noise std must be >= 0 and decay in [0,1]");
        }
        if !(self.final_layer_init > 0.0) {
            return bad("final_layer_init must be > 0");
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup.unwrap_or(self.batch_size).max(self.batch_size)
    }
}

/// A minibatch of transitions as row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

/// Diagnostics from one update step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateMetrics {
    /// Mean squared Bellman error before the critic step.
    pub critic_loss: f64,
    /// Mean `Q(s, mu(s))` over the batch before the actor step.
    pub actor_objective: f64,
}

/// Deep deterministic policy gradient agent for one RA.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub slices: usize,
    pub resources: usize,
    pub mode: StateMode,
    pub scales: StateScales,
    pub config: DdpgConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub replay: ReplayMemory,
    pub noise: ExplorationNoise,
    /// Update steps taken.
    pub updates: u64,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn new(
        slices: usize,
        resources: usize,
        mode: StateMode,
        scales: StateScales,
        config: DdpgConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        scales.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state_dim = match mode {
            StateMode::Full => 2 * slices,
            StateMode::CoordinationOnly => slices,
        };
        let action_dim = slices * resources;
        let hidden = Activation::LeakyRelu {
            slope: config.leaky_slope,
        };
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let b = config.final_layer_init;
        let actor = Mlp::with_output_init(&actor_sizes, hidden, Activation::Sigmoid, b, &mut rng);
        let critic = Mlp::with_output_init(&critic_sizes, hidden, Activation::Identity, b, &mut rng);
        Ok(DdpgAgent {
            slices,
            resources,
            mode,
            scales,
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic_opt: Adam::new(&critic, config.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            replay: ReplayMemory::new(config.replay_capacity, state_dim, action_dim),
            noise: ExplorationNoise::new(config.noise_std, config.noise_decay),
            updates: 0,
            config,
            rng,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn observe(&self, queues: &[f64], coordination: &[f64]) -> AgentState {
        AgentState::new(self.mode, queues, coordination)
    }

    fn input(&self, state: &AgentState) -> Result<Vec<f64>> {
        if state.dim() != self.state_dim() || state.coordination.len() != self.slices {
            return Err(Error::config(format!(
                "agent expects a {}-dim state, got {}",
                self.state_dim(),
                state.dim()
            )));
        }
        Ok(state.to_input(&self.scales))
    }

    /// Actor output for a normalized input, optionally perturbed and clipped.
    /// Returns the action and the pre-clip noise that was added.
    pub fn act_raw(&mut self, input: &[f64], explore: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut a = self.actor.forward(input)?;
        let noise = if explore {
            self.noise.sample(&mut self.rng, a.len())
        } else {
            vec![0.0; a.len()]
        };
        if explore {
            for (v, n) in a.iter_mut().zip(&noise) {
                *v = (*v + n).clamp(0.0, 1.0);
            }
        }
        Ok((a, noise))
    }

    pub fn act(&mut self, state: &AgentState, explore: bool) -> Result<AgentAction> {
        self.act_with_noise(state, explore).map(|(a, _)| a)
    }

    /// As [`DdpgAgent::act`], also returning the pre-clip noise.
    pub fn act_with_noise(&mut self, state: &AgentState, explore: bool) -> Result<(AgentAction, Vec<f64>)> {
        let input = self.input(state)?;
        let (a, noise) = self.act_raw(&input, explore)?;
        Ok((AgentAction::from_flat(a, self.slices, self.resources)?, noise))
    }

    /// Uniform random action used during warm-up.
    pub fn random_action(&mut self) -> AgentAction {
        let flat = (0..self.action_dim()).map(|_| self.rng.random::<f64>()).collect();
        AgentAction::from_flat(flat, self.slices, self.resources).expect("uniform in [0,1)")
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    /// Whether the replay memory holds enough transitions to learn.
    pub fn ready(&self) -> bool {
        self.replay.len() >= self.config.warmup_steps()
    }

    /// Bellman targets `r + gamma * Q'(s', mu'(s'))` from the target networks.
    pub fn targets(&self, batch: &Batch) -> Array1<f64> {
        let next_actions = self.actor_target.forward_batch(batch.next_states.view());
        let critic_in = concatenate![Axis(1), batch.next_states, next_actions];
        let q_next = self.critic_target.forward_batch(critic_in.view());
        let mut g = &batch.rewards * self.config.reward_scale;
        g.scaled_add(self.config.gamma, &q_next.column(0));
        g
    }

    /// Mean squared Bellman error of the online critic on `batch`.
    pub fn critic_loss(&self, batch: &Batch) -> Result<f64> {
        if batch.rewards.is_empty() {
            return Err(Error::config("critic loss of an empty batch"));
        }
        let g = self.targets(batch);
        let q = self.q_values(batch.states.view(), batch.actions.view());
        Ok((&g - &q).mapv(|d| d * d).mean().expect("non-empty"))
    }

    pub fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
        let input = concatenate![Axis(1), states, actions];
        self.critic.forward_batch(input.view()).column(0).to_owned()
    }

    /// Critic step, actor step, target tracking and noise decay on `batch`.
    pub fn update_on(&mut self, batch: &Batch) -> Result<UpdateMetrics> {
        let n = batch.rewards.len();
        if n == 0 {
            return Err(Error::config("update on an empty batch"));
        }
        let nf = n as f64;
        let sd = self.state_dim();

        let g = self.targets(batch);
        let critic_in = concatenate![Axis(1), batch.states, batch.actions];
        let cache = self.critic.forward_cached(critic_in.view());
        let diff = &g - &cache.output.column(0);
        let critic_loss = diff.mapv(|d| d * d).sum() / nf;
        let dq = diff.mapv(|d| -2.0 * d / nf).insert_axis(Axis(1));
        let tape = self.critic.backward_batch(&cache, dq.view());
        self.critic_opt.apply(&mut self.critic, &tape, 1.0)?;

        let actor_cache = self.actor.forward_cached(batch.states.view());
        let critic_in = concatenate![Axis(1), batch.states, actor_cache.output];
        let q_cache = self.critic.forward_cached(critic_in.view());
        let actor_objective = q_cache.output.sum() / nf;
        let ascend = Array2::from_elem((n, 1), -1.0 / nf);
        let q_tape = self.critic.backward_batch(&q_cache, ascend.view());
        let da = q_tape.input.slice(s![.., sd..]);
        let actor_tape = self.actor.backward_batch(&actor_cache, da);
        self.actor_opt.apply(&mut self.actor, &actor_tape, 1.0)?;

        soft_update(&mut self.critic_target, &self.critic, self.config.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.config.tau)?;
        self.noise.decay_step();
        self.updates += 1;
        Ok(UpdateMetrics {
            critic_loss,
            actor_objective,
        })
    }

    /// One training step on a uniformly sampled minibatch; `None` until the
    /// replay memory holds at least `batch_size` transitions.
    pub fn update(&mut self) -> Option<UpdateMetrics> {
        if self.replay.len() < self.config.batch_size {
            return None;
        }
        let idx = self.replay.sample_indices(&mut self.rng, self.config.batch_size);
        let batch = self.replay.batch(&idx);
        Some(self.update_on(&batch).expect("shapes fixed at construction"))
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            slices: self.slices,
            resources: self.resources,
            mode: self.mode,
            scales: self.scales,
            config: self.config.clone(),
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            noise_std: self.noise.std,
            updates: self.updates,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Restores networks and optimizer state into an agent built for the same
    /// architecture. The replay memory starts empty.
    pub fn restore(&mut self, ck: AgentCheckpoint) -> Result<()> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.slices != self.slices || ck.resources != self.resources || ck.mode != self.mode {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for {} slices x {} resources ({:?}), agent is {} x {} ({:?})",
                ck.slices, ck.resources, ck.mode, self.slices, self.resources, self.mode
            )));
        }
        let nets = [
            (&ck.actor, &self.actor),
            (&ck.actor_target, &self.actor),
            (&ck.critic, &self.critic),
            (&ck.critic_target, &self.critic),
        ];
        for (have, want) in nets {
            if have.layer_sizes() != want.layer_sizes() || have.hidden != want.hidden || have.output != want.output {
                return Err(Error::Checkpoint(format!(
                    "network {:?} does not match expected {:?}",
                    have.layer_sizes(),
                    want.layer_sizes()
                )));
            }
        }
        if !ck.actor_opt.matches(&ck.actor) || !ck.critic_opt.matches(&ck.critic) {
            return Err(Error::Checkpoint("optimizer state does not match networks".into()));
        }
        self.actor = ck.actor;
        self.critic = ck.critic;
        self.actor_target = ck.actor_target;
        self.critic_target = ck.critic_target;
        self.actor_opt = ck.actor_opt;
        self.critic_opt = ck.critic_opt;
        self.noise.std = ck.noise_std;
        self.updates = ck.updates;
        self.scales = ck.scales;
        Ok(())
    }

    /// Loads a checkpoint into an agent with the expected shape and config.
    pub fn load(
        path: &Path,
        slices: usize,
        resources: usize,
        mode: StateMode,
        config: DdpgConfig,
        seed: u64,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: AgentCheckpoint = serde_json::from_str(&text)?;
        let mut agent = DdpgAgent::new(slices, resources, mode, ck.scales, config, seed)?;
        agent.restore(ck)?;
        Ok(agent)
    }
}

/// Serialized agent: networks, optimizer state and exploration scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub slices: usize,
    pub resources: usize,
    pub mode: StateMode,
    pub scales: StateScales,
    pub config: DdpgConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub noise_std: f64,
    pub updates: u64,
}
