// SPDX-License-Identifier: Apache-2.0
//! Minimal dense-network building blocks with hand-written gradients.
//!
//! Everything is `f64` and row-major. Models expose their parameters as one
//! flat vector so optimizers and finite-difference checks stay generic.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unsupported tensor file version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Flat access to a model's trainable parameters.
pub trait Parameters {
    fn param_count(&self) -> usize;
    /// Appends all parameters in a fixed order.
    fn write_params(&self, out: &mut Vec<f64>);
    /// Reads parameters in the same order; returns the number consumed.
    fn read_params(&mut self, src: &[f64]) -> usize;

    fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        self.write_params(&mut v);
        v
    }

    fn set_flat_params(&mut self, src: &[f64]) {
        let used = self.read_params(src);
        debug_assert_eq!(used, src.len());
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn relu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter().zip(dy).map(|(p, d)| if *p > 0.0 { *d } else { 0.0 }).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Affine layer `y = W x + b`, `W` stored `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Uniform init in `±sqrt(6 / (in + out))`, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect();
        Self { inputs, outputs, weight, bias: vec![0.0; outputs] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` (laid out like
    /// [`Parameters::write_params`]) and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let (gw, gb) = grad.split_at_mut(self.inputs * self.outputs);
        let mut dx = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }

    pub fn check_shape(&self) -> Result<(), NnError> {
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(NnError::Shape(format!(
                "linear {}x{} has {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

impl Parameters for Linear {
    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weight);
        out.extend_from_slice(&self.bias);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let nw = self.weight.len();
        let nb = self.bias.len();
        self.weight.copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..nw + nb]);
        nw + nb
    }
}

/// Layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

/// Values saved by [`LayerNorm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], beta: vec![0.0; dim], eps: 1e-5 }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + self.eps).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let y = xhat.iter().zip(&self.gamma).zip(&self.beta).map(|((h, g), b)| h * g + b).collect();
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let d = self.gamma.len();
        let (gg, gb) = grad.split_at_mut(d);
        let mut dxhat = vec![0.0; d];
        for i in 0..d {
            gg[i] += dy[i] * cache.xhat[i];
            gb[i] += dy[i];
            dxhat[i] = dy[i] * self.gamma[i];
        }
        let n = d as f64;
        let sum_d: f64 = dxhat.iter().sum();
        let sum_dx: f64 = dxhat.iter().zip(&cache.xhat).map(|(a, b)| a * b).sum();
        (0..d).map(|i| cache.inv_std / n * (n * dxhat[i] - sum_d - cache.xhat[i] * sum_dx)).collect()
    }
}

impl Parameters for LayerNorm {
    fn param_count(&self) -> usize {
        self.gamma.len() * 2
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.beta);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let d = self.gamma.len();
        self.gamma.copy_from_slice(&src[..d]);
        self.beta.copy_from_slice(&src[d..2 * d]);
        2 * d
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Plain gradient descent step.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Versioned JSON checkpoint: named tensors with declared shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub version: u32,
    pub kind: String,
    pub tensors: Vec<Tensor>,
}

impl TensorFile {
    pub const VERSION: u32 = 1;

    pub fn new(kind: &str) -> Self {
        Self { version: Self::VERSION, kind: kind.to_string(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        self.tensors.push(Tensor { name: name.into(), shape: shape.to_vec(), data: data.to_vec() });
    }

    pub fn push_linear(&mut self, name: &str, l: &Linear) {
        self.push(&format!("{name}.weight"), &[l.outputs, l.inputs], &l.weight);
        self.push(&format!("{name}.bias"), &[l.outputs], &l.bias);
    }

    pub fn push_layer_norm(&mut self, name: &str, l: &LayerNorm) {
        self.push(&format!("{name}.gamma"), &[l.gamma.len()], &l.gamma);
        self.push(&format!("{name}.beta"), &[l.beta.len()], &l.beta);
    }

    pub fn get(&self, name: &str, shape: &[usize]) -> Result<&[f64], NnError> {
        let t = self.tensors.iter().find(|t| t.name == name).ok_or_else(|| NnError::MissingTensor(name.into()))?;
        let n: usize = shape.iter().product();
        if t.shape != shape || t.data.len() != n {
            return Err(NnError::Shape(format!("`{name}` is {:?}, expected {shape:?}", t.shape)));
        }
        Ok(&t.data)
    }

    pub fn linear(&self, name: &str, inputs: usize, outputs: usize) -> Result<Linear, NnError> {
        Ok(Linear {
            inputs,
            outputs,
            weight: self.get(&format!("{name}.weight"), &[outputs, inputs])?.to_vec(),
            bias: self.get(&format!("{name}.bias"), &[outputs])?.to_vec(),
        })
    }

    pub fn layer_norm(&self, name: &str, dim: usize) -> Result<LayerNorm, NnError> {
        Ok(LayerNorm {
            gamma: self.get(&format!("{name}.gamma"), &[dim])?.to_vec(),
            beta: self.get(&format!("{name}.beta"), &[dim])?.to_vec(),
            eps: 1e-5,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let f: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.version != Self::VERSION {
            return Err(NnError::Version(f.version));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Linear::init(3, 2, &mut rng);
        let x = [0.3, -1.2, 0.7];
        let loss = |l: &Linear| l.forward(&x).iter().map(|v| v * v).sum::<f64>();
        let mut grad = vec![0.0; l.param_count()];
        let y = l.forward(&x);
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        l.backward(&x, &dy, &mut grad);
        let p = l.flat_params();
        let num = numeric_gradient(&p, 1e-6, |q| {
            let mut m = l.clone();
            m.set_flat_params(q);
            loss(&m)
        });
        assert!(max_relative_error(&grad, &num, 1e-6) < 1e-6);
    }

    #[test]
    fn layer_norm_gradient_and_scale_invariance() {
        let mut ln = LayerNorm::new(4);
        ln.gamma = vec![1.5, 0.5, -1.0, 2.0];
        ln.beta = vec![0.1, 0.2, 0.3, 0.4];
        let x = [0.5, -0.3, 1.7, 0.2];
        let w = [1.0, -2.0, 0.5, 3.0];
        let (y, cache) = ln.forward(&x);
        let mut grad = vec![0.0; 8];
        let dx = ln.backward(&cache, &w, &mut grad);
        let f = |x: &[f64]| ln.forward(x).0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let num = numeric_gradient(&x, 1e-6, f);
        assert!(max_relative_error(&dx, &num, 1e-6) < 1e-5);
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.0).collect();
        let (ys, _) = ln.forward(&scaled);
        assert!(max_relative_error(&y, &ys, 1e-3) < 1e-4);
    }

    #[test]
    fn helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let ls = log_softmax(&[0.0, 0.0]);
        assert!((ls[0] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1, 2);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn tensor_file_round_trip_and_shape_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Linear::init(2, 3, &mut rng);
        let mut f = TensorFile::new("test");
        f.push_linear("fc", &l);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        f.save(&path).unwrap();
        let back = TensorFile::load(&path).unwrap();
        assert_eq!(back.linear("fc", 2, 3).unwrap(), l);
        assert!(matches!(back.linear("fc", 3, 2), Err(NnError::Shape(_))));
    }
}
