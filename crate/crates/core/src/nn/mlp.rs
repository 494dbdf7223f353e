use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise activation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: 0.01 }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Sigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer; `weights` is fan_in x fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multi-layer perceptron with a shared hidden activation and its own output activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDump", into = "MlpDump")]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; the first entry is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    /// Network output.
    pub output: Array2<f64>,
}

/// Gradients for every parameter of an [`Mlp`] plus the gradient at its input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient with respect to the input batch (batch x fan_in).
    pub input: Array2<f64>,
}

impl GradientTape {
    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| *v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|v| *v == 0.0))
    }
}

impl Mlp {
    /// Random network with weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(sizes, hidden, output);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weights.nrows() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        net
    }

    /// As [`Mlp::new`], with the output layer drawn from `±output_bound`.
    pub fn with_output_init<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        output_bound: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Mlp::new(sizes, hidden, output, rng);
        let last = net.layers.last_mut().expect("at least one layer");
        last.weights.mapv_inplace(|_| rng.random_range(-output_bound..=output_bound));
        last.bias.mapv_inplace(|_| rng.random_range(-output_bound..=output_bound));
        net
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Mlp {
            layers,
            hidden,
            output,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes() == other.layer_sizes()
            && self.hidden == other.hidden
            && self.output == other.output
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous");
        Ok(self.forward_batch(x).into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut a = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            let act = self.activation(l);
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        a
    }

    /// Forward pass that keeps what [`Mlp::backward_batch`] needs.
    pub fn forward_cached(&self, input: ArrayView2<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            let act = self.activation(l);
            let next = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        ForwardCache {
            inputs,
            pre,
            output: a,
        }
    }

    /// Gradients of `sum(output * output_grad)` over the batch.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> GradientTape {
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut upstream = output_grad.to_owned();
        let mut post = cache.output.clone();
        for l in (0..n).rev() {
            let act = self.activation(l);
            let mut dz = upstream;
            Zip::from(&mut dz)
                .and(&cache.pre[l])
                .and(&post)
                .for_each(|g, &z, &a| *g *= act.derivative(z, a));
            weights.push(cache.inputs[l].t().dot(&dz));
            biases.push(dz.sum_axis(Axis(0)));
            upstream = dz.dot(&self.layers[l].weights.t());
            post = cache.inputs[l].clone();
        }
        weights.reverse();
        biases.reverse();
        GradientTape {
            weights,
            biases,
            input: upstream,
        }
    }

    /// Single-sample reverse pass.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<GradientTape> {
        if input.len() != self.input_dim() || output_grad.len() != self.output_dim() {
            return Err(Error::config(format!(
                "backward expects {} inputs and {} output grads, got {} and {}",
                self.input_dim(),
                self.output_dim(),
                input.len(),
                output_grad.len()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous");
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("contiguous");
        let cache = self.forward_cached(x);
        Ok(self.backward_batch(&cache, g))
    }

    /// Visits every parameter in a fixed order: per layer, weights row-major then bias.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

/// `target <- tau * source + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(source) {
        return Err(Error::config("soft_update between different architectures"));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weights)
            .and(&s.weights)
            .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LayerDump {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpDump {
    layer_sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    layers: Vec<LayerDump>,
}

impl From<Mlp> for MlpDump {
    fn from(net: Mlp) -> Self {
        MlpDump {
            layer_sizes: net.layer_sizes(),
            hidden: net.hidden,
            output: net.output,
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerDump {
                    fan_in: l.weights.nrows(),
                    fan_out: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpDump> for Mlp {
    type Error = String;

    fn try_from(d: MlpDump) -> std::result::Result<Self, String> {
        if d.layers.len() + 1 != d.layer_sizes.len() || d.layers.is_empty() {
            return Err("layer count does not match layer_sizes".into());
        }
        let mut layers = Vec::with_capacity(d.layers.len());
        for (l, dump) in d.layers.into_iter().enumerate() {
            if dump.fan_in != d.layer_sizes[l] || dump.fan_out != d.layer_sizes[l + 1] {
                return Err(format!("layer {l} shape does not match layer_sizes"));
            }
            if dump.bias.len() != dump.fan_out {
                return Err(format!("layer {l} bias has wrong length"));
            }
            let weights = Array2::from_shape_vec((dump.fan_in, dump.fan_out), dump.weights)
                .map_err(|e| format!("layer {l}: {e}"))?;
            layers.push(Layer {
                weights,
                bias: Array1::from(dump.bias),
            });
        }
        Ok(Mlp {
            layers,
            hidden: d.hidden,
            output: d.output,
        })
    }
}
