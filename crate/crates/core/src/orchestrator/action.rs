// SPDX-License-Identifier: Apache-2.0
//! The hybrid action and its mapping onto a generation configuration.

use crate::agents::AgentName;
use crate::knowledge::{FocusStrategy, MAX_K, MIN_K};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_AGENTS: usize = 4;
pub const N_FOCUS: usize = 5;
pub const N_CONTINUOUS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("agent index {0} outside 0..4")]
    Agent(usize),
    #[error("focus index {0} outside 0..5")]
    Focus(usize),
    #[error("{0} = {1} outside [0, 1]")]
    Continuous(&'static str, f64),
}

/// `(agent, focus, temperature, token_budget, rag_depth, retry_budget)`.
/// Bounds are checked on construction and on deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAction", into = "RawAction")]
pub struct OrchestrationAction {
    agent: usize,
    focus: usize,
    continuous: [f64; N_CONTINUOUS],
}

#[derive(Serialize, Deserialize)]
struct RawAction {
    agent: usize,
    focus: usize,
    temperature: f64,
    token_budget: f64,
    rag_depth: f64,
    retry_budget: f64,
}

impl TryFrom<RawAction> for OrchestrationAction {
    type Error = ActionError;
    fn try_from(r: RawAction) -> Result<Self, ActionError> {
        Self::new(r.agent, r.focus, r.temperature, r.token_budget, r.rag_depth, r.retry_budget)
    }
}

impl From<OrchestrationAction> for RawAction {
    fn from(a: OrchestrationAction) -> Self {
        let [temperature, token_budget, rag_depth, retry_budget] = a.continuous;
        RawAction { agent: a.agent, focus: a.focus, temperature, token_budget, rag_depth, retry_budget }
    }
}

const NAMES: [&str; N_CONTINUOUS] = ["temperature", "token_budget", "rag_depth", "retry_budget"];

impl OrchestrationAction {
    pub fn new(
        agent: usize,
        focus: usize,
        temperature: f64,
        token_budget: f64,
        rag_depth: f64,
        retry_budget: f64,
    ) -> Result<Self, ActionError> {
        Self::from_parts(agent, focus, [temperature, token_budget, rag_depth, retry_budget])
    }

    pub fn from_parts(agent: usize, focus: usize, continuous: [f64; N_CONTINUOUS]) -> Result<Self, ActionError> {
        if agent >= N_AGENTS {
            return Err(ActionError::Agent(agent));
        }
        if focus >= N_FOCUS {
            return Err(ActionError::Focus(focus));
        }
        for (name, v) in NAMES.iter().zip(continuous) {
            if !(0.0..=1.0).contains(&v) {
                return Err(ActionError::Continuous(name, v));
            }
        }
        Ok(Self { agent, focus, continuous })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }
    pub fn focus(&self) -> usize {
        self.focus
    }
    pub fn temperature(&self) -> f64 {
        self.continuous[0]
    }
    pub fn token_budget(&self) -> f64 {
        self.continuous[1]
    }
    pub fn rag_depth(&self) -> f64 {
        self.continuous[2]
    }
    pub fn retry_budget(&self) -> f64 {
        self.continuous[3]
    }
    pub fn continuous(&self) -> [f64; N_CONTINUOUS] {
        self.continuous
    }

    /// One-hot agent, one-hot focus, then the four continuous values.
    pub fn features(&self) -> [f64; N_AGENTS + N_FOCUS + N_CONTINUOUS] {
        let mut f = [0.0; N_AGENTS + N_FOCUS + N_CONTINUOUS];
        f[self.agent] = 1.0;
        f[N_AGENTS + self.focus] = 1.0;
        f[N_AGENTS + N_FOCUS..].copy_from_slice(&self.continuous);
        f
    }
}

/// Index order of the focus head: full, minimal, error, synthesis,
/// architecture.
pub const FOCUS_BY_INDEX: [FocusStrategy; N_FOCUS] = [
    FocusStrategy::Comprehensive,
    FocusStrategy::PatternFocused,
    FocusStrategy::ErrorFocused,
    FocusStrategy::SynthesisFocused,
    FocusStrategy::ArchitectureFocused,
];

/// Concrete knobs for one generation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub agent: AgentName,
    pub focus: FocusStrategy,
    pub temperature: f64,
    pub rag_k: usize,
    pub max_tokens: u32,
    pub retries: u32,
}

/// `k = round(3 + 17 r)`, `max_tokens = round(256 + 3840 t)`,
/// `retries = round(1 + 4 b)`; temperature passes through.
pub fn map_action(a: &OrchestrationAction) -> GenerationConfig {
    GenerationConfig {
        agent: AgentName::ORCHESTRATED[a.agent],
        focus: FOCUS_BY_INDEX[a.focus],
        temperature: a.temperature(),
        rag_k: ((MIN_K as f64 + (MAX_K - MIN_K) as f64 * a.rag_depth()).round() as usize).clamp(MIN_K, MAX_K),
        max_tokens: (256.0 + 3840.0 * a.token_budget()).round() as u32,
        retries: (1.0 + 4.0 * a.retry_budget()).round() as u32,
    }
}

/// Exploration rate after `episode` completed episodes: `0.3 * 0.995^episode`.
pub fn epsilon_schedule(episode: u64) -> f64 {
    EPSILON0 * EPSILON_DECAY.powf(episode as f64)
}

pub const EPSILON0: f64 = 0.3;
pub const EPSILON_DECAY: f64 = 0.995;
