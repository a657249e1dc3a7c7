// SPDX-License-Identifier: Apache-2.0
//! Random-shooting model-predictive planner.

use super::action::{OrchestrationAction, N_AGENTS, N_FOCUS};
use super::state::{idx, MAX_ITERATIONS};
use super::world::{Dynamics, Prediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcOptions {
    pub candidates: usize,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for MpcOptions {
    fn default() -> Self {
        Self { candidates: 64, horizon: 3, gamma: 0.99 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MpcError {
    #[error("no world model loaded")]
    ModelMissing,
    #[error("candidates and horizon must be positive")]
    EmptyBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcPlan {
    pub action: OrchestrationAction,
    pub score: f64,
    pub best_index: usize,
    pub model_calls: usize,
}

pub fn random_action<R: Rng>(rng: &mut R) -> OrchestrationAction {
    OrchestrationAction::new(
        rng.random_range(0..N_AGENTS),
        rng.random_range(0..N_FOCUS),
        rng.random(),
        rng.random(),
        rng.random(),
        rng.random(),
    )
    .expect("uniform draws are in range")
}

/// Applies a predicted outcome to the stage, error and iteration features.
pub fn advance_state(state: &[f64], p: &Prediction) -> Vec<f64> {
    let mut s = state.to_vec();
    let cur = (0..4).find(|i| s[idx::STAGE + i] > 0.5).unwrap_or(0) as f64;
    let next = (cur + p.stage_delta.round()).clamp(0.0, 3.0) as usize;
    s[idx::STAGE..idx::STAGE + 4].fill(0.0);
    s[idx::STAGE + next] = 1.0;

    let errs = &mut s[idx::ERRORS..idx::ERRORS + 6];
    let total: f64 = errs.iter().sum::<f64>() * 10.0;
    let new_total = (total + p.error_delta).max(0.0);
    if total > 0.0 {
        let k = new_total / total;
        errs.iter_mut().for_each(|e| *e = (*e * k).min(1.0));
    } else if new_total > 0.0 {
        errs[5] = (new_total / 10.0).min(1.0);
    }
    s[idx::ITERATION] = (s[idx::ITERATION] + 1.0 / MAX_ITERATIONS as f64).min(1.0);
    s
}

/// Samples `candidates` uniform action sequences of length `horizon`, rolls
/// each through `model` and returns the first action of the sequence with the
/// highest discounted predicted reward. Ties keep the lower sequence index.
pub fn mpc_plan(
    state: &[f64],
    model: Option<&dyn Dynamics>,
    opts: &MpcOptions,
    seed: u64,
) -> Result<MpcPlan, MpcError> {
    let model = model.ok_or(MpcError::ModelMissing)?;
    if opts.candidates == 0 || opts.horizon == 0 {
        return Err(MpcError::EmptyBudget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, usize, OrchestrationAction)> = None;
    let mut calls = 0;
    for c in 0..opts.candidates {
        let seq: Vec<OrchestrationAction> = (0..opts.horizon).map(|_| random_action(&mut rng)).collect();
        let mut s = state.to_vec();
        let mut score = 0.0;
        let mut discount = 1.0;
        for a in &seq {
            let p = model.predict(&s, a);
            calls += 1;
            score += discount * p.reward;
            discount *= opts.gamma;
            s = advance_state(&s, &p);
        }
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, c, seq[0]));
        }
    }
    let (score, best_index, action) = best.expect("at least one candidate");
    Ok(MpcPlan { action, score, best_index, model_calls: calls })
}
