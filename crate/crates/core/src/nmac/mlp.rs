//! Small fully connected network with manual backpropagation.
//!
//! Parameters flatten layer by layer, weights (row-major, one row per
//! output unit) before biases; gradients use the same layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b);
        }
    }
}

/// Hidden layers use ReLU; the last layer uses `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Pre- and post-activation values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the network output.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpParams {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0].max(1) as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                };
                Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: draw(w[0] * w[1]),
                    bias: draw(w[1]),
                }
            })
            .collect();
        MlpParams { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        MlpParams { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(format!(
                    "layer {k} storage does not match its size"
                )));
            }
            if k > 0 && self.layers[k - 1].outputs != l.inputs {
                return Err(Error::Shape(format!(
                    "layer {k} input does not match layer {}",
                    k - 1
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_cached(x)
            .map(|c| c.activations.into_iter().last().unwrap())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&activations[k], &mut z);
            let a: Vec<f64> = if k < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                match self.output {
                    OutputActivation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                    OutputActivation::Identity => z.clone(),
                }
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Gradients of `sum(grad_out * output)` with respect to the flattened
    /// parameters and to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grads = vec![0.0; self.num_params()];
        let input_grad = self.backward_into(cache, grad_out, &mut grads);
        (grads, input_grad)
    }

    /// Like `backward` but accumulates parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let out = cache.output();
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Sigmoid => grad_out
                .iter()
                .zip(out)
                .map(|(g, s)| g * s * (1.0 - s))
                .collect(),
            OutputActivation::Identity => grad_out.to_vec(),
        };
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.len() + l.bias.len();
        }
        for k in (0..=last).rev() {
            let layer = &self.layers[k];
            let input = &cache.activations[k];
            let base = offsets[k];
            let (gw, gb) = grads[base..base + layer.weights.len() + layer.bias.len()]
                .split_at_mut(layer.weights.len());
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, x) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter_mut()
                    .zip(input)
                {
                    *g += d * x;
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if k > 0 {
                for (p, z) in prev.iter_mut().zip(&cache.pre_activations[k - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    /// `params += scale * delta` over the flattened layout.
    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        debug_assert_eq!(delta.len(), self.num_params());
        let mut it = delta.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w += scale * it.next().unwrap();
            }
        }
    }

    /// `self = rate * online + (1 - rate) * self`, elementwise.
    pub fn blend_toward(&mut self, online: &MlpParams, rate: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tv, ov) in t
                .weights
                .iter_mut()
                .chain(t.bias.iter_mut())
                .zip(o.weights.iter().chain(&o.bias))
            {
                *tv = if rate == 1.0 {
                    *ov
                } else {
                    rate * ov + (1.0 - rate) * *tv
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_actor_outputs_half() {
        let net = MlpParams::zeros(&[3, 64, 64, 2], OutputActivation::Sigmoid);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        let critic = MlpParams::zeros(&[3, 64, 64, 1], OutputActivation::Identity);
        assert_eq!(critic.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = MlpParams::zeros(&[3, 4, 1], OutputActivation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpParams::new(&[4, 8, 8, 3], OutputActivation::Sigmoid, &mut rng);
        let flat = net.flatten();
        let mut other = MlpParams::zeros(&[4, 8, 8, 3], OutputActivation::Sigmoid);
        other.set_flat(&flat).unwrap();
        assert_eq!(other, net);
        assert_eq!(flat.len(), net.num_params());
        net.validate().unwrap();
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::new(&[16, 64, 1], OutputActivation::Identity, &mut rng);
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= 0.25));
        assert!(net.layers[1].weights.iter().all(|w| w.abs() <= 0.125));
    }

    #[test]
    fn blend_examples() {
        let mut target = MlpParams::zeros(&[1, 1], OutputActivation::Identity);
        let mut online = target.clone();
        online.set_flat(&[2.0, 2.0]).unwrap();
        target.blend_toward(&online, 0.5);
        assert_eq!(target.flatten(), vec![1.0, 1.0]);
        target.blend_toward(&online, 1.0);
        assert_eq!(target, online);
    }

    #[test]
    fn extreme_inputs_stay_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::new(&[2, 8, 1], OutputActivation::Sigmoid, &mut rng);
        for x in [-1e3, -10.0, 0.0, 10.0, 1e3] {
            let y = net.forward(&[x, -x]).unwrap()[0];
            assert!((0.0..=1.0).contains(&y));
        }
    }
}
