use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{shaped_reward, AgentAction, AgentState, DdpgAgent, Transition, UpdateMetrics};
use crate::env::NetworkEnv;
use crate::error::{Error, Result};

/// The seam between the offline training loop and a learning algorithm.
pub trait Learner {
    fn observe(&self, queues: &[f64], coordination: &[f64]) -> AgentState;
    /// Action with exploration, or a uniform random action during warm-up.
    fn explore(&mut self, state: &AgentState) -> Result<AgentAction>;
    fn remember(&mut self, state: &AgentState, action: &AgentAction, reward: f64, next: &AgentState);
    /// One learning step if enough experience has been collected.
    fn learn(&mut self) -> Option<UpdateMetrics>;
}

impl Learner for DdpgAgent {
    fn observe(&self, queues: &[f64], coordination: &[f64]) -> AgentState {
        DdpgAgent::observe(self, queues, coordination)
    }

    fn explore(&mut self, state: &AgentState) -> Result<AgentAction> {
        if self.ready() {
            self.act(state, true)
        } else {
            Ok(self.random_action())
        }
    }

    fn remember(&mut self, state: &AgentState, action: &AgentAction, reward: f64, next: &AgentState) {
        let t = Transition {
            state: state.to_input(&self.scales),
            action: action.flat(),
            reward,
            next_state: next.to_input(&self.scales),
        };
        DdpgAgent::remember(self, t);
    }

    fn learn(&mut self) -> Option<UpdateMetrics> {
        if self.ready() {
            self.update()
        } else {
            None
        }
    }
}

/// Draws per-slice period coordination targets uniformly from a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationSampler {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl CoordinationSampler {
    pub fn uniform(slices: usize, low: f64, high: f64) -> Self {
        CoordinationSampler {
            low: vec![low; slices],
            high: vec![high; slices],
        }
    }

    pub fn validate(&self, slices: usize) -> Result<()> {
        if self.low.len() != slices || self.high.len() != slices {
            return Err(Error::config("coordination sampler bounds must have one entry per slice"));
        }
        if self.low.iter().zip(&self.high).any(|(l, h)| !(l <= h && l.is_finite() && h.is_finite())) {
            return Err(Error::config("coordination sampler needs finite low <= high"));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| if l == h { *l } else { rng.random_range(*l..*h) })
            .collect()
    }
}

/// Knobs of the offline training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub total_steps: u64,
    /// Episode length, one coordination period.
    pub period_len: usize,
    pub rho: f64,
    pub beta: f64,
    pub seed: u64,
    /// Queues are emptied after any interval that leaves one above this.
    pub queue_reset: f64,
}

/// Per-episode training statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStat {
    pub episode: u64,
    pub steps: u64,
    /// Sum of shaped rewards.
    pub reward: f64,
    /// Sum of slice performance.
    pub performance: f64,
    /// Summed capacity overshoot in resource units.
    pub overshoot: f64,
    pub critic_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub curve: Vec<EpisodeStat>,
}

impl TrainReport {
    /// Mean episode reward over the first and last `fraction` of episodes.
    pub fn head_tail_means(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.curve.len();
        let k = ((n as f64 * fraction).round() as usize).max(1);
        if n < 2 * k {
            return None;
        }
        let mean = |xs: &[EpisodeStat]| xs.iter().map(|e| e.reward).sum::<f64>() / xs.len() as f64;
        Some((mean(&self.curve[..k]), mean(&self.curve[n - k..])))
    }
}

/// Trains `agent` on the single-RA environment `env` for `total_steps`
/// intervals. Each episode lasts one period with a freshly sampled
/// coordination vector. Queues carry across episodes and are emptied whenever
/// one exceeds `queue_reset`, which keeps the replay memory in the operating
/// range the agent is meant to control.
pub fn train_offline<L: Learner>(
    agent: &mut L,
    env: &NetworkEnv,
    sampler: &CoordinationSampler,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if env.num_ras() != 1 {
        return Err(Error::config("offline training runs on a single-RA environment"));
    }
    if opts.period_len == 0 {
        return Err(Error::config("period length must be >= 1"));
    }
    sampler.validate(env.num_slices())?;
    let ra = &env.ras[0];
    let mut state = env.reset(opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(u64::MAX);
    let mut report = TrainReport::default();
    let mut steps = 0u64;
    while steps < opts.total_steps {
        let coord = sampler.sample(&mut rng);
        let mut stat = EpisodeStat {
            episode: report.curve.len() as u64,
            steps: 0,
            reward: 0.0,
            performance: 0.0,
            overshoot: 0.0,
            critic_loss: 0.0,
        };
        let mut losses = 0u64;
        for _ in 0..opts.period_len {
            if steps >= opts.total_steps {
                break;
            }
            let queues: Vec<f64> = state.queues.column(0).to_vec();
            let obs = agent.observe(&queues, &coord);
            let action = agent.explore(&obs)?;
            let alloc = action.to_allocation(&ra.capacity);
            let out = env.step_mut(&mut state, std::slice::from_ref(&alloc))?;
            let perf: Vec<f64> = out.perf.values.column(0).to_vec();
            let reward = shaped_reward(&perf, &action, &coord, opts.rho, opts.beta, &ra.capacity, opts.period_len);
            let next_queues: Vec<f64> = state.queues.column(0).to_vec();
            let next = agent.observe(&next_queues, &coord);
            agent.remember(&obs, &action, reward, &next);
            if let Some(m) = agent.learn() {
                stat.critic_loss += m.critic_loss;
                losses += 1;
            }
            stat.steps += 1;
            stat.reward += reward;
            stat.performance += perf.iter().sum::<f64>();
            stat.overshoot += crate::model::capacity_violation(&alloc, &ra.capacity).iter().sum::<f64>();
            steps += 1;
            if state.queues.iter().any(|q| *q > opts.queue_reset) {
                state.clear_queues();
            }
        }
        if losses > 0 {
            stat.critic_loss /= losses as f64;
        }
        report.curve.push(stat);
    }
    Ok(report)
}
