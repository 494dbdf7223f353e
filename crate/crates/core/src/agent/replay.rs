use ndarray::{Array1, Array2};
use rand::Rng;

use super::ddpg::Batch;

/// One stored interaction, with states already normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity ring buffer of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    /// Slot the next push overwrites once full.
    head: usize,
    len: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            head: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        assert_eq!(t.state.len(), self.state_dim, "state dimension");
        assert_eq!(t.next_state.len(), self.state_dim, "next state dimension");
        assert_eq!(t.action.len(), self.action_dim, "action dimension");
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.len += 1;
        } else {
            let h = self.head;
            let (s, a) = (self.state_dim, self.action_dim);
            self.states[h * s..(h + 1) * s].copy_from_slice(&t.state);
            self.actions[h * a..(h + 1) * a].copy_from_slice(&t.action);
            self.rewards[h] = t.reward;
            self.next_states[h * s..(h + 1) * s].copy_from_slice(&t.next_state);
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> Transition {
        let (s, a) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[idx * s..(idx + 1) * s].to_vec(),
            action: self.actions[idx * a..(idx + 1) * a].to_vec(),
            reward: self.rewards[idx],
            next_state: self.next_states[idx * s..(idx + 1) * s].to_vec(),
        }
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    /// Gathers the given slots into a batch.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let (s, a, n) = (self.state_dim, self.action_dim, indices.len());
        let mut states = Array2::zeros((n, s));
        let mut actions = Array2::zeros((n, a));
        let mut next_states = Array2::zeros((n, s));
        let mut rewards = Array1::zeros(n);
        for (r, &idx) in indices.iter().enumerate() {
            states
                .row_mut(r)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.states[idx * s..(idx + 1) * s]);
            actions
                .row_mut(r)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.actions[idx * a..(idx + 1) * a]);
            next_states
                .row_mut(r)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(&self.next_states[idx * s..(idx + 1) * s]);
            rewards[r] = self.rewards[idx];
        }
        Batch {
            states,
            actions,
            rewards,
            next_states,
        }
    }
}
