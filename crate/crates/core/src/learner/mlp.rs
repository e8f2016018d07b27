use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::LearnerError;

/// Fully connected network with tanh hidden layers and a linear output layer. Parameters
/// are stored flat, layer by layer, each as a row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input followed by each layer's output.
    pub layers: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("cache holds the input")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Gaussian weights with variance 1/fan_in, zero biases, the output layer scaled by `output_scale`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut at = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (1.0 / fan_in as f64).sqrt() * if l + 1 == layers { output_scale } else { 1.0 };
            let normal = Normal::new(0.0, std).expect("finite std");
            for p in &mut net.params[at..at + fan_in * fan_out] {
                *p = normal.sample(rng);
            }
            at += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("at least one layer")
    }

    pub fn forward(&self, input: &[f64]) -> Result<Cache, LearnerError> {
        if input.len() != self.input_len() {
            return Err(LearnerError::DimensionMismatch {
                what: "network input",
                got: input.len(),
                expected: self.input_len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut cache = Cache {
            layers: Vec::with_capacity(layers + 1),
        };
        cache.layers.push(input.to_vec());
        let mut at = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[at..at + n_in * n_out];
            let bias = &self.params[at + n_in * n_out..at + n_in * n_out + n_out];
            let x = cache.layers.last().expect("input pushed");
            let mut y: Vec<f64> = bias.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut y {
                    *v = v.tanh();
                }
            }
            cache.layers.push(y);
            at += n_in * n_out + n_out;
        }
        Ok(cache)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, LearnerError> {
        Ok(self.forward(input)?.layers.pop().expect("output layer"))
    }

    /// Adds the parameter gradient of `grad_output · output` to `grad`.
    pub fn backward(&self, cache: &Cache, grad_output: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut at = 0;
        for w in self.sizes.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (d, y) in delta.iter_mut().zip(&cache.layers[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let x = &cache.layers[l];
            let at = offsets[l];
            let (gw, gb) = grad[at..at + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let weights = &self.params[at..at + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (n, w) in next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
