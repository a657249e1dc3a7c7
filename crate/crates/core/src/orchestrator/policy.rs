// SPDX-License-Identifier: Apache-2.0
//! Actor-critic network: shared trunk with layer norm, discrete,
//! continuous and value heads.

use super::action::{OrchestrationAction, N_AGENTS, N_CONTINUOUS, N_FOCUS};
use super::state::STATE_DIM;
use crate::nn::{self, LayerNorm, LayerNormCache, Linear, NnError, Parameters, TensorFile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const HIDDEN: usize = 256;
pub const N_DISCRETE: usize = N_AGENTS + N_FOCUS;
/// Fixed standard deviation of the continuous head, pre-sigmoid.
pub const POLICY_SIGMA: f64 = 0.1;
/// Exploration noise scale; the per-sample noise is `NOISE_SCALE * epsilon`.
pub const NOISE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub l1: Linear,
    pub ln1: LayerNorm,
    pub l2: Linear,
    pub ln2: LayerNorm,
    pub head_d: Linear,
    pub head_c: Linear,
    pub head_v: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub agent_logits: [f64; N_AGENTS],
    pub focus_logits: [f64; N_FOCUS],
    /// Continuous head before the sigmoid.
    pub pre_means: [f64; N_CONTINUOUS],
    /// `sigmoid(pre_means)`, in `[0, 1]`.
    pub means: [f64; N_CONTINUOUS],
    pub value: f64,
}

/// Activations kept for [`PolicyNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    c1: LayerNormCache,
    n1: Vec<f64>,
    a1: Vec<f64>,
    c2: LayerNormCache,
    n2: Vec<f64>,
    a2: Vec<f64>,
}

/// Loss gradients with respect to each head output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputGrad {
    pub agent_logits: [f64; N_AGENTS],
    pub focus_logits: [f64; N_FOCUS],
    pub pre_means: [f64; N_CONTINUOUS],
    pub value: f64,
}

impl PolicyNetwork {
    pub fn zeros() -> Self {
        Self::zeros_with_hidden(HIDDEN)
    }

    pub fn zeros_with_hidden(h: usize) -> Self {
        Self {
            l1: Linear::zeros(STATE_DIM, h),
            ln1: LayerNorm::new(h),
            l2: Linear::zeros(h, h),
            ln2: LayerNorm::new(h),
            head_d: Linear::zeros(h, N_DISCRETE),
            head_c: Linear::zeros(h, N_CONTINUOUS),
            head_v: Linear::zeros(h, 1),
        }
    }

    pub fn init(seed: u64) -> Self {
        Self::init_with_hidden(HIDDEN, seed)
    }

    pub fn init_with_hidden(h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            l1: Linear::init(STATE_DIM, h, &mut rng),
            ln1: LayerNorm::new(h),
            l2: Linear::init(h, h, &mut rng),
            ln2: LayerNorm::new(h),
            head_d: Linear::init(h, N_DISCRETE, &mut rng),
            head_c: Linear::init(h, N_CONTINUOUS, &mut rng),
            head_v: Linear::init(h, 1, &mut rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.l1.outputs
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        let h = self.hidden();
        let layers =
            [(&self.l1, STATE_DIM, h), (&self.l2, h, h), (&self.head_d, h, N_DISCRETE), (&self.head_c, h, N_CONTINUOUS), (&self.head_v, h, 1)];
        for (l, i, o) in layers {
            l.check_shape()?;
            if l.inputs != i || l.outputs != o {
                return Err(NnError::Shape(format!("policy layer is {}x{}, expected {o}x{i}", l.outputs, l.inputs)));
            }
        }
        for ln in [&self.ln1, &self.ln2] {
            if ln.gamma.len() != h || ln.beta.len() != h {
                return Err(NnError::Shape(format!("layer norm has {} entries, expected {h}", ln.gamma.len())));
            }
        }
        Ok(())
    }

    pub fn forward(&self, state: &[f64]) -> Result<PolicyOutput, NnError> {
        self.check_shapes()?;
        if state.len() != STATE_DIM {
            return Err(NnError::Shape(format!("state has {} entries, expected {STATE_DIM}", state.len())));
        }
        Ok(self.forward_cached(state).0)
    }

    /// Forward pass without shape checks, returning the backward cache.
    pub fn forward_cached(&self, state: &[f64]) -> (PolicyOutput, ForwardCache) {
        let z1 = self.l1.forward(state);
        let (n1, c1) = self.ln1.forward(&z1);
        let a1 = nn::relu(&n1);
        let z2 = self.l2.forward(&a1);
        let (n2, c2) = self.ln2.forward(&z2);
        let a2 = nn::relu(&n2);
        let d = self.head_d.forward(&a2);
        let c = self.head_c.forward(&a2);
        let v = self.head_v.forward(&a2);
        let pre_means: [f64; N_CONTINUOUS] = std::array::from_fn(|i| c[i]);
        let out = PolicyOutput {
            agent_logits: std::array::from_fn(|i| d[i]),
            focus_logits: std::array::from_fn(|i| d[N_AGENTS + i]),
            means: pre_means.map(nn::sigmoid),
            pre_means,
            value: v[0],
        };
        (out, ForwardCache { x: state.to_vec(), c1, n1, a1, c2, n2, a2 })
    }

    /// Accumulates parameter gradients (in [`Parameters`] order) into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dy: &OutputGrad, grad: &mut [f64]) {
        let sizes = [
            self.l1.param_count(),
            self.ln1.param_count(),
            self.l2.param_count(),
            self.ln2.param_count(),
            self.head_d.param_count(),
            self.head_c.param_count(),
        ];
        let (g_l1, rest) = grad.split_at_mut(sizes[0]);
        let (g_ln1, rest) = rest.split_at_mut(sizes[1]);
        let (g_l2, rest) = rest.split_at_mut(sizes[2]);
        let (g_ln2, rest) = rest.split_at_mut(sizes[3]);
        let (g_d, rest) = rest.split_at_mut(sizes[4]);
        let (g_c, g_v) = rest.split_at_mut(sizes[5]);

        let dd: Vec<f64> = dy.agent_logits.iter().chain(&dy.focus_logits).copied().collect();
        let mut da2 = self.head_d.backward(&cache.a2, &dd, g_d);
        for (a, b) in da2.iter_mut().zip(self.head_c.backward(&cache.a2, &dy.pre_means, g_c)) {
            *a += b;
        }
        for (a, b) in da2.iter_mut().zip(self.head_v.backward(&cache.a2, &[dy.value], g_v)) {
            *a += b;
        }
        let dn2 = nn::relu_backward(&cache.n2, &da2);
        let dz2 = self.ln2.backward(&cache.c2, &dn2, g_ln2);
        let da1 = self.l2.backward(&cache.a1, &dz2, g_l2);
        let dn1 = nn::relu_backward(&cache.n1, &da1);
        let dz1 = self.ln1.backward(&cache.c1, &dn1, g_ln1);
        self.l1.backward(&cache.x, &dz1, g_l1);
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new("policy");
        f.push_linear("l1", &self.l1);
        f.push_layer_norm("ln1", &self.ln1);
        f.push_linear("l2", &self.l2);
        f.push_layer_norm("ln2", &self.ln2);
        f.push_linear("head_d", &self.head_d);
        f.push_linear("head_c", &self.head_c);
        f.push_linear("head_v", &self.head_v);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self, NnError> {
        let h = f
            .tensors
            .iter()
            .find(|t| t.name == "l1.bias")
            .map(|t| t.data.len())
            .ok_or_else(|| NnError::MissingTensor("l1.bias".into()))?;
        let net = Self {
            l1: f.linear("l1", STATE_DIM, h)?,
            ln1: f.layer_norm("ln1", h)?,
            l2: f.linear("l2", h, h)?,
            ln2: f.layer_norm("ln2", h)?,
            head_d: f.linear("head_d", h, N_DISCRETE)?,
            head_c: f.linear("head_c", h, N_CONTINUOUS)?,
            head_v: f.linear("head_v", h, 1)?,
        };
        net.check_shapes()?;
        Ok(net)
    }
}

impl Parameters for PolicyNetwork {
    fn param_count(&self) -> usize {
        self.l1.param_count()
            + self.ln1.param_count()
            + self.l2.param_count()
            + self.ln2.param_count()
            + self.head_d.param_count()
            + self.head_c.param_count()
            + self.head_v.param_count()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.l1.write_params(out);
        self.ln1.write_params(out);
        self.l2.write_params(out);
        self.ln2.write_params(out);
        self.head_d.write_params(out);
        self.head_c.write_params(out);
        self.head_v.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut n = self.l1.read_params(src);
        n += self.ln1.read_params(&src[n..]);
        n += self.l2.read_params(&src[n..]);
        n += self.ln2.read_params(&src[n..]);
        n += self.head_d.read_params(&src[n..]);
        n += self.head_c.read_params(&src[n..]);
        n + self.head_v.read_params(&src[n..])
    }
}

/// A sampled action with the pre-sigmoid continuous values needed for the
/// Gaussian log-density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledAction {
    pub action: OrchestrationAction,
    pub pre_sigmoid: [f64; N_CONTINUOUS],
    /// Whether the discrete components came from the uniform branch.
    pub explored: bool,
}

/// Pre-sigmoid values for an externally chosen action (heuristic or
/// planner), clamped away from 0 and 1.
pub fn pre_sigmoid_of(action: &OrchestrationAction) -> [f64; N_CONTINUOUS] {
    action.continuous().map(|a| {
        let a = a.clamp(1e-3, 1.0 - 1e-3);
        (a / (1.0 - a)).ln()
    })
}

/// Epsilon-greedy draw. With probability `epsilon` the agent and focus are
/// uniform, otherwise the argmax of their logits. Continuous components add
/// Gaussian noise with standard deviation `0.1 * epsilon`, clipped at two
/// standard deviations, before the sigmoid.
pub fn sample_action_with<R: Rng>(out: &PolicyOutput, epsilon: f64, rng: &mut R) -> SampledAction {
    let epsilon = epsilon.clamp(0.0, 1.0);
    let explored = rng.random::<f64>() < epsilon;
    let (agent, focus) = if explored {
        (rng.random_range(0..N_AGENTS), rng.random_range(0..N_FOCUS))
    } else {
        (nn::argmax(&out.agent_logits), nn::argmax(&out.focus_logits))
    };
    let sigma = NOISE_SCALE * epsilon;
    let mut pre = out.pre_means;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for p in &mut pre {
            *p += normal.sample(rng).clamp(-2.0 * sigma, 2.0 * sigma);
        }
    }
    let cont = pre.map(|u| nn::sigmoid(u).clamp(0.0, 1.0));
    let action = OrchestrationAction::from_parts(agent, focus, cont).expect("indices and sigmoid values in range");
    SampledAction { action, pre_sigmoid: pre, explored }
}

pub fn sample_action(out: &PolicyOutput, epsilon: f64, seed: u64) -> SampledAction {
    sample_action_with(out, epsilon, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs() {
        let p = PolicyNetwork::zeros();
        assert_eq!(p.param_count(), 168 * 256 + 256 + 512 + 256 * 256 + 256 + 512 + 256 * 9 + 9 + 256 * 4 + 4 + 257);
        let o = p.forward(&state(1)).unwrap();
        assert_eq!(o.agent_logits, [0.0; 4]);
        assert_eq!(o.focus_logits, [0.0; 5]);
        assert_eq!(o.means, [0.5; 4]);
        assert_eq!(o.value, 0.0);
        assert!(p.forward(&[0.0; 10]).is_err());
    }

    // Independent oracle: plain loops, separate layer-norm arithmetic.
    fn oracle(p: &PolicyNetwork, x: &[f64]) -> Vec<f64> {
        fn affine(l: &Linear, x: &[f64]) -> Vec<f64> {
            let mut y = l.bias.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                for (i, xi) in x.iter().enumerate() {
                    *yo += l.weight[o * l.inputs + i] * xi;
                }
            }
            y
        }
        fn norm_relu(ln: &LayerNorm, z: &[f64]) -> Vec<f64> {
            let n = z.len() as f64;
            let mu = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            z.iter().enumerate().map(|(i, v)| ((v - mu) / (var + 1e-5).sqrt() * ln.gamma[i] + ln.beta[i]).max(0.0)).collect()
        }
        let a1 = norm_relu(&p.ln1, &affine(&p.l1, x));
        let a2 = norm_relu(&p.ln2, &affine(&p.l2, &a1));
        let mut out = affine(&p.head_d, &a2);
        out.extend(affine(&p.head_c, &a2).iter().map(|u| 1.0 / (1.0 + (-u).exp())));
        out.extend(affine(&p.head_v, &a2));
        out
    }

    #[test]
    fn golden_forward_matches_oracle() {
        let p = PolicyNetwork::init_with_hidden(16, 9);
        let x = state(2);
        let o = p.forward_cached(&x).0;
        let got: Vec<f64> =
            o.agent_logits.iter().chain(&o.focus_logits).chain(&o.means).chain(std::iter::once(&o.value)).copied().collect();
        let want = oracle(&p, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = PolicyNetwork::init_with_hidden(6, 3);
        let x = state(4);
        let dy = OutputGrad {
            agent_logits: [0.3, -0.2, 0.5, 0.1],
            focus_logits: [-0.4, 0.2, 0.0, 0.7, 0.1],
            pre_means: [0.2, -0.3, 0.6, 0.05],
            value: 0.9,
        };
        let f = |net: &PolicyNetwork| {
            let o = net.forward_cached(&x).0;
            let mut s = o.value * dy.value;
            for i in 0..4 {
                s += o.agent_logits[i] * dy.agent_logits[i] + o.pre_means[i] * dy.pre_means[i];
            }
            for i in 0..5 {
                s += o.focus_logits[i] * dy.focus_logits[i];
            }
            s
        };
        let mut g = vec![0.0; p.param_count()];
        p.backward(&p.forward_cached(&x).1, &dy, &mut g);
        let num = nn::numeric_gradient(&p.flat_params(), 1e-6, |q| {
            let mut m = p.clone();
            m.set_flat_params(q);
            f(&m)
        });
        assert!(nn::max_relative_error(&g, &num, 1e-5) < 1e-4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = PolicyNetwork::init_with_hidden(8, 5);
        let back = PolicyNetwork::from_tensor_file(&p.to_tensor_file()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn greedy_sampling_is_exact() {
        let out = PolicyOutput {
            agent_logits: [0.1, 0.2, 3.0, -1.0],
            focus_logits: [0.0, 0.0, 0.0, 2.0, 0.0],
            pre_means: [0.0, 1.0, -1.0, 0.5],
            means: [0.0, 1.0, -1.0, 0.5].map(nn::sigmoid),
            value: 0.0,
        };
        let s = sample_action(&out, 0.0, 7);
        assert_eq!((s.action.agent(), s.action.focus()), (2, 3));
        assert_eq!(s.action.continuous(), out.means);
        assert!(!s.explored);
        assert_eq!(sample_action(&out, 0.7, 11), sample_action(&out, 0.7, 11));
    }

    #[test]
    fn exploration_frequency() {
        let out = PolicyOutput {
            agent_logits: [0.0; 4],
            focus_logits: [0.0; 5],
            pre_means: [0.0; 4],
            means: [0.5; 4],
            value: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut explored = 0;
        for _ in 0..n {
            let s = sample_action_with(&out, 0.3, &mut rng);
            explored += usize::from(s.explored);
            for (u, m) in s.pre_sigmoid.iter().zip(out.pre_means) {
                assert!((u - m).abs() <= 2.0 * 0.03 + 1e-12);
            }
        }
        let f = explored as f64 / n as f64;
        assert!((f - 0.3).abs() <= 0.02, "{f}");
    }

    #[test]
    fn pre_sigmoid_inverts() {
        let a = OrchestrationAction::new(0, 0, 0.3, 0.0, 1.0, 0.5).unwrap();
        let u = pre_sigmoid_of(&a);
        assert!((nn::sigmoid(u[0]) - 0.3).abs() < 1e-12);
        assert!((nn::sigmoid(u[1]) - 1e-3).abs() < 1e-12);
        assert_eq!(u[3], 0.0);
    }
}
