//! Per-RA orchestration agent: state assembly, bounded actions, shaped
//! reward, replay memory, exploration noise and DDPG training.

mod ddpg;
mod noise;
mod replay;
mod reward;
mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Allocation;

pub use ddpg::{AgentCheckpoint, Batch, DdpgAgent, DdpgConfig, UpdateMetrics, CHECKPOINT_FORMAT};
pub use noise::ExplorationNoise;
pub use replay::{ReplayMemory, Transition};
pub use reward::shaped_reward;
pub use train::{train_offline, CoordinationSampler, EpisodeStat, Learner, TrainOptions, TrainReport};

/// Which parts of the observation an agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMode {
    /// Queue lengths followed by coordination terms.
    Full,
    /// Coordination terms only.
    CoordinationOnly,
}

/// Normalizers and clamps applied before the state enters a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScales {
    /// Tasks corresponding to an input of 1.0.
    pub queue_scale: f64,
    /// Period-summed performance corresponding to an input of 1.0.
    pub perf_scale: f64,
    /// Queue lengths above this are seen as this.
    #[serde(default)]
    pub queue_max: Option<f64>,
    /// Coordination terms are clamped into `[coordination_min, coordination_max]`.
    #[serde(default)]
    pub coordination_min: Option<f64>,
    #[serde(default)]
    pub coordination_max: Option<f64>,
}

impl Default for StateScales {
    fn default() -> Self {
        StateScales {
            queue_scale: 100.0,
            perf_scale: 50.0,
            queue_max: None,
            coordination_min: None,
            coordination_max: None,
        }
    }
}

impl StateScales {
    pub fn validate(&self) -> Result<()> {
        if !(self.queue_scale > 0.0 && self.perf_scale > 0.0) {
            return Err(Error::config("state scales must be > 0"));
        }
        if self.queue_max.is_some_and(|q| !(q >= 0.0)) {
            return Err(Error::config("queue_max must be >= 0"));
        }
        if let (Some(lo), Some(hi)) = (self.coordination_min, self.coordination_max) {
            if !(lo <= hi) {
                return Err(Error::config("coordination_min must not exceed coordination_max"));
            }
        }
        Ok(())
    }

    fn queue(&self, q: f64) -> f64 {
        self.queue_max.map_or(q, |m| q.min(m)) / self.queue_scale
    }

    fn coordination(&self, c: f64) -> f64 {
        let c = self.coordination_min.map_or(c, |m| c.max(m));
        self.coordination_max.map_or(c, |m| c.min(m)) / self.perf_scale
    }
}

/// Observation of one RA's agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Per-slice queue lengths; empty for coordination-only agents.
    pub queue_lengths: Vec<f64>,
    /// Per-slice `z - y`.
    pub coordination: Vec<f64>,
}

impl AgentState {
    pub fn new(mode: StateMode, queues: &[f64], coordination: &[f64]) -> Self {
        AgentState {
            queue_lengths: match mode {
                StateMode::Full => queues.to_vec(),
                StateMode::CoordinationOnly => Vec::new(),
            },
            coordination: coordination.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.queue_lengths.len() + self.coordination.len()
    }

    /// Network input: clamped and scaled queues, then coordination.
    pub fn to_input(&self, scales: &StateScales) -> Vec<f64> {
        self.queue_lengths
            .iter()
            .map(|&q| scales.queue(q))
            .chain(self.coordination.iter().map(|&c| scales.coordination(c)))
            .collect()
    }
}

/// Capacity fractions chosen by an agent, I x K in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    pub fractions: Array2<f64>,
}

impl AgentAction {
    pub fn from_flat(flat: Vec<f64>, slices: usize, resources: usize) -> Result<Self> {
        let fractions = Array2::from_shape_vec((slices, resources), flat)
            .map_err(|e| Error::config(format!("action shape: {e}")))?;
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("action fractions must lie in [0,1]"));
        }
        Ok(AgentAction { fractions })
    }

    pub fn flat(&self) -> Vec<f64> {
        self.fractions.iter().copied().collect()
    }

    pub fn to_allocation(&self, capacity: &[f64]) -> Allocation {
        Allocation::from_fractions(&self.fractions, capacity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_layout() {
        let scales = StateScales {
            queue_scale: 10.0,
            perf_scale: 50.0,
            ..StateScales::default()
        };
        let full = AgentState::new(StateMode::Full, &[5.0, 20.0], &[-25.0, -50.0]);
        assert_eq!(full.to_input(&scales), vec![0.5, 2.0, -0.5, -1.0]);
        let nt = AgentState::new(StateMode::CoordinationOnly, &[5.0, 20.0], &[-25.0, -50.0]);
        assert_eq!(nt.dim(), 2);
        assert_eq!(nt.to_input(&scales), full.to_input(&scales)[2..].to_vec());
    }

    #[test]
    fn state_clamped() {
        let scales = StateScales {
            queue_scale: 10.0,
            perf_scale: 50.0,
            queue_max: Some(15.0),
            coordination_min: Some(-100.0),
            coordination_max: Some(0.0),
        };
        let s = AgentState::new(StateMode::Full, &[5.0, 20.0], &[-250.0, 30.0]);
        assert_eq!(s.to_input(&scales), vec![0.5, 1.5, -2.0, 0.0]);
    }

    #[test]
    fn action_bounds_checked() {
        assert!(AgentAction::from_flat(vec![0.5, 1.2], 1, 2).is_err());
        assert!(AgentAction::from_flat(vec![0.5], 1, 2).is_err());
        let a = AgentAction::from_flat(vec![0.5, 1.0], 1, 2).unwrap();
        assert_eq!(a.to_allocation(&[10.0, 4.0]).amounts, ndarray::array![[5.0, 4.0]]);
    }
}
