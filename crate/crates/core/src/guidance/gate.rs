// SPDX-License-Identifier: Apache-2.0
//! Six-way configuration gate: 20 features, ReLU hidden layers of 64 and
//! 32 units, element-wise sigmoid outputs.
//!
//! Feature layout:
//!
//! | index | feature |
//! |-------|---------|
//! | 0..7  | design-category one-hot (combinational, sequential, fsm, memory, bus, processor, unknown) |
//! | 7     | fsm keywords |
//! | 8     | protocol keywords |
//! | 9     | memory keywords |
//! | 10    | symbolic trigger present |
//! | 11    | waveform trigger present |
//! | 12    | sequential keywords |
//! | 13    | arithmetic keywords |
//! | 14    | hierarchical (component count at threshold) |
//! | 15    | description words / 400 |
//! | 16    | component keywords / 5 |
//! | 17    | interface-header ports / 32 |
//! | 18    | widest stated bit width / 64 |
//! | 19    | pass-rate history for the category |
//!
//! Continuous features are clamped to `[0, 1]`.

use crate::nn::{self, Linear, NnError, Parameters, TensorFile};
use crate::spec::{DesignCategory, Router, Spec};
use crate::text::{contains_keyword, words};
use crate::verilog::header_ports;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::LazyLock;
use thiserror::Error;

pub const GATE_FEATURES: usize = 20;
const H1: usize = 64;
const H2: usize = 32;
const OUT: usize = 6;

pub type GateFeatures = [f64; GATE_FEATURES];

#[derive(Debug, Error)]
pub enum GateError {
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("training dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateConfig {
    Minimal,
    FsmOnly,
    ProtocolFocused,
    MemoryFocused,
    DeterministicKmap,
    FullStack,
}

impl GateConfig {
    pub const ALL: [GateConfig; 6] = [
        GateConfig::Minimal,
        GateConfig::FsmOnly,
        GateConfig::ProtocolFocused,
        GateConfig::MemoryFocused,
        GateConfig::DeterministicKmap,
        GateConfig::FullStack,
    ];

    /// Prompt directive the selected configuration contributes.
    pub fn directive(self) -> &'static str {
        match self {
            GateConfig::Minimal => "Keep the implementation minimal and direct.",
            GateConfig::FsmOnly => "Structure the design as an explicit finite state machine with separate next-state and output logic.",
            GateConfig::ProtocolFocused => "Follow the bus or serial protocol timing exactly; handshake ordering matters more than brevity.",
            GateConfig::MemoryFocused => "Pay attention to memory read latency, write enables and address widths.",
            GateConfig::DeterministicKmap => "The function is fully specified by its table; implement it exactly.",
            GateConfig::FullStack => "Apply all relevant guidance; the design spans several interacting blocks.",
        }
    }
}

/// Argmax with ties to the earlier configuration; symbolic specs always
/// get [`GateConfig::DeterministicKmap`].
pub fn select_config(probs: &[f64; OUT], symbolic: bool) -> GateConfig {
    if symbolic {
        return GateConfig::DeterministicKmap;
    }
    GateConfig::ALL[nn::argmax(probs)]
}

/// Exponentially weighted pass rate per design category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassRateHistory {
    rates: BTreeMap<DesignCategory, f64>,
}

impl PassRateHistory {
    pub const DECAY: f64 = 0.9;
    pub const DEFAULT: f64 = 0.5;

    pub fn rate(&self, category: DesignCategory) -> f64 {
        self.rates.get(&category).copied().unwrap_or(Self::DEFAULT)
    }

    pub fn record(&mut self, category: DesignCategory, passed: bool) {
        let r = self.rate(category);
        let x = if passed { 1.0 } else { 0.0 };
        self.rates.insert(category, Self::DECAY * r + (1.0 - Self::DECAY) * x);
    }
}

fn any_kw(text: &str, kws: &[&str]) -> f64 {
    if kws.iter().any(|k| contains_keyword(text, k)) {
        1.0
    } else {
        0.0
    }
}

fn widest_bits(text: &str) -> u32 {
    static WIDTH: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)\b(\d{1,4})[- ]bits?\b|\[(\d{1,4}):0\]").unwrap());
    WIDTH
        .captures_iter(text)
        .filter_map(|c| {
            c.get(1)
                .and_then(|m| m.as_str().parse::<u32>().ok())
                .or_else(|| c.get(2).and_then(|m| m.as_str().parse::<u32>().ok().map(|v| v + 1)))
        })
        .max()
        .unwrap_or(0)
}

pub fn gate_features(spec: &Spec, router: &Router, history: &PassRateHistory) -> GateFeatures {
    let d = &spec.description;
    let mut f = [0.0; GATE_FEATURES];
    let cat = spec.effective_category();
    f[cat.index()] = 1.0;
    f[7] = any_kw(d, &["fsm", "state machine", "moore", "mealy", "state transition"]);
    f[8] = any_kw(d, &["apb", "axi", "ahb", "uart", "spi", "i2c", "handshake", "protocol", "bus"]);
    f[9] = any_kw(d, &["ram", "rom", "memory", "fifo", "cache", "register file", "regfile"]);
    f[10] = f64::from(u8::from(router.detect_symbolic(spec)));
    f[11] = f64::from(u8::from(router.detect_waveform(spec)));
    f[12] = any_kw(d, &["clock", "clk", "posedge", "register", "counter", "flip-flop", "shift register"]);
    f[13] = any_kw(d, &["adder", "alu", "multiplier", "multiply", "arithmetic", "subtract", "sum"]);
    let components = router.count_components(spec).len();
    f[14] = f64::from(u8::from(components >= router.hierarchy_threshold));
    f[15] = (words(d).count() as f64 / 400.0).min(1.0);
    f[16] = (components as f64 / 5.0).min(1.0);
    let ports = spec.interface_header.as_deref().map_or(0, |h| header_ports(h).len());
    f[17] = (ports as f64 / 32.0).min(1.0);
    f[18] = (f64::from(widest_bits(d)) / 64.0).min(1.0);
    f[19] = history.rate(cat).clamp(0.0, 1.0);
    f
}

/// Rule-generated warm-start targets derived from the keyword flags.
pub fn synthetic_labels(f: &GateFeatures) -> [f64; OUT] {
    let mut y = [0.0; OUT];
    if f[10] > 0.5 {
        y[4] = 1.0;
        return y;
    }
    if f[7] > 0.5 {
        y[1] = 1.0;
    }
    if f[8] > 0.5 {
        y[2] = 1.0;
    }
    if f[9] > 0.5 {
        y[3] = 1.0;
    }
    if f[14] > 0.5 {
        y[5] = 1.0;
    }
    if y.iter().all(|v| *v == 0.0) {
        y[0] = 1.0;
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub features: GateFeatures,
    /// Per-configuration success targets in `[0, 1]`.
    pub labels: [f64; OUT],
}

struct Trace {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    p: Vec<f64>,
}

impl GateWeights {
    pub fn zeros() -> Self {
        Self { l1: Linear::zeros(GATE_FEATURES, H1), l2: Linear::zeros(H1, H2), l3: Linear::zeros(H2, OUT) }
    }

    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            l1: Linear::init(GATE_FEATURES, H1, &mut rng),
            l2: Linear::init(H1, H2, &mut rng),
            l3: Linear::init(H2, OUT, &mut rng),
        }
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        for (l, i, o) in [(&self.l1, GATE_FEATURES, H1), (&self.l2, H1, H2), (&self.l3, H2, OUT)] {
            l.check_shape()?;
            if l.inputs != i || l.outputs != o {
                return Err(NnError::Shape(format!("gate layer is {}x{}, expected {o}x{i}", l.outputs, l.inputs)));
            }
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let z1 = self.l1.forward(x);
        let a1 = nn::relu(&z1);
        let z2 = self.l2.forward(&a1);
        let a2 = nn::relu(&z2);
        let p = self.l3.forward(&a2).into_iter().map(nn::sigmoid).collect();
        Trace { z1, a1, z2, a2, p }
    }

    /// Six independent success probabilities.
    pub fn forward(&self, features: &GateFeatures) -> Result<[f64; OUT], GateError> {
        self.check_shapes()?;
        let p = self.trace(features).p;
        Ok(std::array::from_fn(|i| p[i]))
    }

    /// Mean binary cross-entropy over `samples` (summed over outputs) and
    /// its gradient in [`Parameters`] order.
    pub fn loss_and_grad(&self, samples: &[&GateSample]) -> (f64, Vec<f64>) {
        let n = samples.len().max(1) as f64;
        let mut grad = vec![0.0; self.param_count()];
        let (s1, s2) = (self.l1.param_count(), self.l2.param_count());
        let mut loss = 0.0;
        for s in samples {
            let t = self.trace(&s.features);
            let mut dz3 = vec![0.0; OUT];
            for k in 0..OUT {
                let p = t.p[k].clamp(1e-12, 1.0 - 1e-12);
                let y = s.labels[k];
                loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                dz3[k] = (t.p[k] - y) / n;
            }
            let (g1, rest) = grad.split_at_mut(s1);
            let (g2, g3) = rest.split_at_mut(s2);
            let da2 = self.l3.backward(&t.a2, &dz3, g3);
            let dz2 = nn::relu_backward(&t.z2, &da2);
            let da1 = self.l2.backward(&t.a1, &dz2, g2);
            let dz1 = nn::relu_backward(&t.z1, &da1);
            self.l1.backward(&s.features, &dz1, g1);
        }
        (loss / n, grad)
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new("gate");
        f.push_linear("l1", &self.l1);
        f.push_linear("l2", &self.l2);
        f.push_linear("l3", &self.l3);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self, NnError> {
        Ok(Self { l1: f.linear("l1", GATE_FEATURES, H1)?, l2: f.linear("l2", H1, H2)?, l3: f.linear("l3", H2, OUT)? })
    }
}

impl Parameters for GateWeights {
    fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.l3.param_count()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.l1.write_params(out);
        self.l2.write_params(out);
        self.l3.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let a = self.l1.read_params(src);
        let b = self.l2.read_params(&src[a..]);
        a + b + self.l3.read_params(&src[a + b..])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GateTrainOptions {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 200, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Mini-batch gradient descent on binary cross-entropy, starting from
/// `start` (or a seeded initialization).
pub fn gate_train(
    samples: &[GateSample],
    start: Option<GateWeights>,
    opts: &GateTrainOptions,
) -> Result<(GateWeights, GateTrainReport), GateError> {
    if samples.is_empty() {
        return Err(GateError::EmptyDataset);
    }
    let mut w = start.unwrap_or_else(|| GateWeights::init(opts.seed));
    w.check_shapes()?;
    let all: Vec<&GateSample> = samples.iter().collect();
    let initial_loss = w.loss_and_grad(&all).0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut params = w.flat_params();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let batch: Vec<&GateSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (_, g) = w.loss_and_grad(&batch);
            nn::sgd_step(&mut params, &g, opts.learning_rate);
            w.set_flat_params(&params);
        }
    }
    let final_loss = w.loss_and_grad(&all).0;
    Ok((w, GateTrainReport { initial_loss, final_loss }))
}
