use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Additive Gaussian exploration noise whose scale decays per update step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationNoise {
    pub std: f64,
    /// Multiplicative decay applied once per update.
    pub decay: f64,
}

impl ExplorationNoise {
    pub fn new(std: f64, decay: f64) -> Self {
        ExplorationNoise {
            std: std.max(0.0),
            decay: decay.clamp(0.0, 1.0),
        }
    }

    /// One zero-mean draw per action component at the current scale.
    pub fn sample<R: Rng>(&self, rng: &mut R, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|_| self.std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn decay_step(&mut self) {
        self.std *= self.decay;
    }
}
