//! Fully connected network on a flat parameter vector.
//!
//! Layer `l` stores its weights row-major (`dims[l+1] × dims[l]`) followed by
//! its biases. Hidden layers use leaky ReLU; the last layer is linear and the
//! caller applies whatever head it needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub leaky_slope: f64,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl MlpCache {
    /// Hidden-layer pre-activations, one vector per hidden layer.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

impl Mlp {
    pub fn zeros(dims: &[usize], leaky_slope: f64) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "network needs at least an input and an output layer");
        Self { dims: dims.to_vec(), leaky_slope, params: vec![0.0; param_count(dims)] }
    }

    /// Uniform fan-in initialization, zero biases; the last layer is scaled by
    /// `last_scale` so fresh networks start near a neutral output.
    pub fn init<R: Rng>(dims: &[usize], leaky_slope: f64, last_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims, leaky_slope);
        let mut off = 0;
        let n_layers = dims.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = (1.0 / fan_in as f64).sqrt() * if l + 1 == n_layers { last_scale } else { 3f64.sqrt() };
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.gen_range(-bound..=bound);
            }
            off += (fan_in + 1) * fan_out;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: z.len() });
        }
        Ok(())
    }

    /// `(weights, biases)` slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off: usize = self.dims.windows(2).take(l).map(|w| (w[0] + 1) * w[1]).sum();
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + (i + 1) * o])
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let mut h = z.to_vec();
        let n_layers = self.dims.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (ni, no) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = (&self.params[off..off + ni * no], &self.params[off + ni * no..off + (ni + 1) * no]);
            let mut next = b.to_vec();
            for (o, acc) in next.iter_mut().enumerate() {
                let row = &w[o * ni..(o + 1) * ni];
                *acc += row.iter().zip(&h).map(|(a, x)| a * x).sum::<f64>();
            }
            if l + 1 < n_layers {
                for v in &mut next {
                    *v = leaky(*v, self.leaky_slope);
                }
            }
            h = next;
            off += (ni + 1) * no;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, z: &[f64]) -> Result<MlpCache> {
        self.check_input(z)?;
        let n_layers = self.dims.len() - 1;
        let mut cache = MlpCache { inputs: Vec::with_capacity(n_layers), pre: Vec::with_capacity(n_layers - 1), output: Vec::new() };
        let mut h = z.to_vec();
        let mut off = 0;
        for l in 0..n_layers {
            let (ni, no) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = (&self.params[off..off + ni * no], &self.params[off + ni * no..off + (ni + 1) * no]);
            let mut next = b.to_vec();
            for (o, acc) in next.iter_mut().enumerate() {
                let row = &w[o * ni..(o + 1) * ni];
                *acc += row.iter().zip(&h).map(|(a, x)| a * x).sum::<f64>();
            }
            cache.inputs.push(h);
            if l + 1 < n_layers {
                cache.pre.push(next.clone());
                for v in &mut next {
                    *v = leaky(*v, self.leaky_slope);
                }
            }
            h = next;
            off += (ni + 1) * no;
        }
        cache.output = h;
        Ok(cache)
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64], grad: &mut [f64]) {
        assert_eq!(upstream.len(), self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.dims.len() - 1;
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(self.dims.windows(2).scan(0, |acc, w| {
                *acc += (w[0] + 1) * w[1];
                Some(*acc)
            }))
            .collect();
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (ni, no) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let x = &cache.inputs[l];
            for o in 0..no {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * ni..off + (o + 1) * ni];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += d * xi;
                }
                grad[off + ni * no + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + ni * no];
            let mut prev = vec![0.0; ni];
            for o in 0..no {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * ni..(o + 1) * ni]) {
                    *p += d * wi;
                }
            }
            for (p, &a) in prev.iter_mut().zip(&cache.pre[l - 1]) {
                if a <= 0.0 {
                    *p *= self.leaky_slope;
                }
            }
            delta = prev;
        }
    }
}
