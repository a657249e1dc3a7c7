// SPDX-License-Identifier: Apache-2.0
//! State encoding: 40 structural features followed by a 128-entry
//! identifier hashed from the specification text.
//!
//! The index map ships as `data/state_layout.json`; [`STATE_LAYOUT`] exposes
//! it and a unit test keeps it in step with the constants here.

use crate::spec::{DesignCategory, Router, Spec};
use crate::text::{fnv1a64, words};
use crate::validation::{error_trend, ErrorCategory, ErrorTrend, Stage, ValidationReport};
use crate::verilog::{code_metrics, header_ports};
use serde::{Deserialize, Serialize};

pub const STRUCTURAL_DIM: usize = 40;
pub const IDENTIFIER_DIM: usize = 128;
pub const STATE_DIM: usize = STRUCTURAL_DIM + IDENTIFIER_DIM;
pub const MAX_ITERATIONS: usize = 5;

pub const STATE_LAYOUT: &str = include_str!("../../data/state_layout.json");

/// Feature offsets inside the structural block.
pub mod idx {
    pub const COMPLEXITY: usize = 0;
    pub const CATEGORY: usize = 1; // 7 entries
    pub const HIERARCHICAL: usize = 8;
    pub const ITERATION: usize = 9;
    pub const STAGE: usize = 10; // 4 entries
    pub const PHASE_FIRST: usize = 14;
    pub const PHASE_REPAIR: usize = 15;
    pub const PHASE_OPTIMIZE: usize = 16;
    pub const ERRORS: usize = 17; // 6 entries, ErrorCategory order
    pub const TREND: usize = 23; // 4 entries
    pub const CODE_LINES: usize = 27;
    pub const CODE_ALWAYS: usize = 28;
    pub const CODE_PORTS: usize = 29;
    pub const AGENT_COUNTS: usize = 30; // 4 entries
    pub const LAST_AGENT: usize = 34; // 4 entries
    pub const SIM_MISMATCH: usize = 38;
    pub const SIM_LATENCY: usize = 39;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestrationState(pub Vec<f64>);

impl OrchestrationState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn structural(&self) -> &[f64] {
        &self.0[..STRUCTURAL_DIM]
    }

    pub fn identifier(&self) -> &[f64] {
        &self.0[STRUCTURAL_DIM..]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn iteration(&self) -> usize {
        (self.0[idx::ITERATION] * MAX_ITERATIONS as f64).round() as usize
    }

    pub fn complexity(&self) -> f64 {
        self.0[idx::COMPLEXITY]
    }

    pub fn stage(&self) -> Stage {
        const S: [Stage; 4] = [Stage::None, Stage::LintPassed, Stage::SimPassed, Stage::SynthPassed];
        (0..4).find(|i| self.0[idx::STAGE + i] > 0.5).map_or(Stage::None, |i| S[i])
    }

    pub fn error_fraction(&self, c: ErrorCategory) -> f64 {
        self.0[idx::ERRORS + c.index()]
    }

    pub fn has_errors(&self) -> bool {
        (0..6).any(|i| self.0[idx::ERRORS + i] > 0.0)
    }
}

/// Everything the encoder needs besides the spec text and the reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationContext {
    /// 0-based refinement iteration.
    pub iteration: usize,
    pub complexity: f64,
    pub category: DesignCategory,
    pub hierarchical: bool,
    /// Times each orchestrated agent was picked so far.
    pub agent_counts: [u32; 4],
    pub last_agent: Option<usize>,
    /// Latest candidate source, for the code metrics.
    pub source: Option<String>,
    pub sim_latency_ms: u64,
}

/// Complexity proxy in `[0, 1]`: half description length (300 words
/// saturates), three tenths component keywords (5 saturate), a fifth port
/// count (32 saturate).
pub fn complexity_estimate(spec: &Spec, router: &Router) -> f64 {
    let w = (words(&spec.description).count() as f64 / 300.0).min(1.0);
    let c = (router.count_components(spec).len() as f64 / 5.0).min(1.0);
    let p = (spec.interface_header.as_deref().map_or(0, |h| header_ports(h).len()) as f64 / 32.0).min(1.0);
    (0.5 * w + 0.3 * c + 0.2 * p).clamp(0.0, 1.0)
}

impl IterationContext {
    pub fn for_spec(spec: &Spec, router: &Router) -> Self {
        Self {
            complexity: complexity_estimate(spec, router),
            category: spec.effective_category(),
            hierarchical: router.route(spec).hierarchical,
            ..Self::default()
        }
    }

    pub fn record_agent(&mut self, agent: usize) {
        if agent < 4 {
            self.agent_counts[agent] += 1;
            self.last_agent = Some(agent);
        }
    }
}

fn normalize_text(text: &str) -> Vec<char> {
    let lower = text.to_lowercase();
    let mut out = Vec::with_capacity(lower.len());
    for w in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(w.chars());
    }
    out
}

/// Deterministic text fingerprint.
///
/// The text is lowercased and whitespace runs collapse to one space. Each
/// character trigram is hashed with 64-bit FNV-1a over its UTF-8 bytes;
/// `hash % 128` picks the bucket and bit 32 the sign (set means -1). The
/// bucket vector is then scaled to unit L2 norm. Texts with fewer than
/// three characters map to the zero vector.
pub fn spec_identifier(text: &str) -> [f64; IDENTIFIER_DIM] {
    let chars = normalize_text(text);
    let mut v = [0.0; IDENTIFIER_DIM];
    let mut buf = String::with_capacity(12);
    for w in chars.windows(3) {
        buf.clear();
        buf.extend(w.iter());
        let h = fnv1a64(buf.as_bytes());
        let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
        v[(h % IDENTIFIER_DIM as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn frac(x: f64, scale: f64) -> f64 {
    (x / scale).clamp(0.0, 1.0)
}

/// Encodes one decision point. `history` holds the reports of earlier
/// iterations, oldest first; the last one is the latest.
pub fn encode_state(spec_text: &str, ctx: &IterationContext, history: &[ValidationReport]) -> OrchestrationState {
    let mut s = vec![0.0; STATE_DIM];
    s[idx::COMPLEXITY] = ctx.complexity.clamp(0.0, 1.0);
    s[idx::CATEGORY + ctx.category.index()] = 1.0;
    s[idx::HIERARCHICAL] = f64::from(u8::from(ctx.hierarchical));
    s[idx::ITERATION] = frac(ctx.iteration as f64, MAX_ITERATIONS as f64);

    let latest = history.last();
    let stage = latest.map_or(Stage::None, |r| r.stage_reached);
    s[idx::STAGE + stage.rank() as usize] = 1.0;
    s[idx::PHASE_FIRST] = f64::from(u8::from(ctx.iteration == 0));
    if let Some(r) = latest {
        let functional = r.sim_passed() || (r.sim_skipped && stage == Stage::SynthPassed);
        s[idx::PHASE_REPAIR] = f64::from(u8::from(!functional));
        s[idx::PHASE_OPTIMIZE] = f64::from(u8::from(functional));
        for c in ErrorCategory::ALL {
            s[idx::ERRORS + c.index()] = frac(r.error_count(c) as f64, 10.0);
        }
        if let Some(sim) = r.sim {
            if sim.samples > 0 {
                s[idx::SIM_MISMATCH] = frac(sim.mismatches as f64, sim.samples as f64);
            } else if !sim.passed {
                s[idx::SIM_MISMATCH] = 1.0;
            }
        }
    }
    if let [.., prev, cur] = history {
        let t = match error_trend(prev, cur) {
            ErrorTrend::Improving => 0,
            ErrorTrend::Worsening => 1,
            ErrorTrend::TypeChanged => 2,
            ErrorTrend::Unchanged => 3,
        };
        s[idx::TREND + t] = 1.0;
    }
    if let Some(src) = &ctx.source {
        let m = code_metrics(src);
        s[idx::CODE_LINES] = frac(m.lines as f64, 200.0);
        s[idx::CODE_ALWAYS] = frac(m.always_blocks as f64, 10.0);
        s[idx::CODE_PORTS] = frac(m.ports as f64, 32.0);
    }
    for (i, n) in ctx.agent_counts.iter().enumerate() {
        s[idx::AGENT_COUNTS + i] = frac(f64::from(*n), MAX_ITERATIONS as f64);
    }
    if let Some(a) = ctx.last_agent.filter(|a| *a < 4) {
        s[idx::LAST_AGENT + a] = 1.0;
    }
    s[idx::SIM_LATENCY] = frac(ctx.sim_latency_ms as f64, 60_000.0);
    s[STRUCTURAL_DIM..].copy_from_slice(&spec_identifier(spec_text));
    OrchestrationState(s)
}
