use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::mlp::{GradientTape, Mlp};
use crate::error::{Error, Result};

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of steps taken so far.
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let shapes: Vec<Vec<f64>> = net
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    /// Whether this state was created for a network shaped like `net`.
    pub fn matches(&self, net: &Mlp) -> bool {
        let expected: Vec<usize> = net
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        let have: Vec<usize> = self.m.iter().map(Vec::len).collect();
        expected == have && self.v.iter().map(Vec::len).eq(expected.iter().copied())
    }

    /// Moves the parameters of `net` against `scale * tape`.
    pub fn apply(&mut self, net: &mut Mlp, tape: &GradientTape, scale: f64) -> Result<()> {
        if !self.matches(net) || tape.weights.len() != net.layers.len() {
            return Err(Error::config("optimizer state does not match network"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g * scale;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            step_array2(&mut layer.weights, &tape.weights[l], &mut self.m[2 * l], &mut self.v[2 * l], update);
            step_array1(&mut layer.bias, &tape.biases[l], &mut self.m[2 * l + 1], &mut self.v[2 * l + 1], update);
        }
        Ok(())
    }
}

fn step_array2(
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut [f64],
    v: &mut [f64],
    f: impl Fn(&mut f64, f64, &mut f64, &mut f64),
) {
    let g = g.as_standard_layout();
    let p = p.as_slice_mut().expect("standard layout");
    Zip::from(p)
        .and(g.as_slice().expect("standard layout"))
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| f(p, g, m, v));
}

fn step_array1(
    p: &mut Array1<f64>,
    g: &Array1<f64>,
    m: &mut [f64],
    v: &mut [f64],
    f: impl Fn(&mut f64, f64, &mut f64, &mut f64),
) {
    Zip::from(p.as_slice_mut().expect("contiguous"))
        .and(g.as_slice().expect("contiguous"))
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| f(p, g, m, v));
}
