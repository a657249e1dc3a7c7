// SPDX-License-Identifier: Apache-2.0
//! Learned one-step dynamics used by the planner.

use super::action::{OrchestrationAction, N_AGENTS, N_CONTINUOUS, N_FOCUS};
use super::ppo::Transition;
use super::state::{idx, STATE_DIM};
use crate::nn::{self, Adam, Linear, NnError, Parameters, TensorFile};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WORLD_INPUT: usize = STATE_DIM + N_AGENTS + N_FOCUS + N_CONTINUOUS;
pub const WORLD_HIDDEN: usize = 64;
pub const WORLD_OUTPUT: usize = 4;
/// Outputs are regressed in units of these scales.
pub const OUTPUT_SCALES: [f64; WORLD_OUTPUT] = [1.0, 1.0, 1000.0, 100.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub stage_delta: f64,
    pub error_delta: f64,
    pub token_cost: f64,
    pub reward: f64,
}

impl Prediction {
    pub fn to_array(self) -> [f64; WORLD_OUTPUT] {
        [self.stage_delta, self.error_delta, self.token_cost, self.reward]
    }

    pub fn from_array(a: [f64; WORLD_OUTPUT]) -> Self {
        Self { stage_delta: a[0], error_delta: a[1], token_cost: a[2], reward: a[3] }
    }
}

/// Anything that predicts the outcome of taking `action` in `state`.
pub trait Dynamics: Send + Sync {
    fn predict(&self, state: &[f64], action: &OrchestrationAction) -> Prediction;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTransition {
    pub state: Vec<f64>,
    pub action: OrchestrationAction,
    pub outcome: Prediction,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("no transitions to train on")]
    EmptyDataset,
    #[error(transparent)]
    Shape(#[from] NnError),
}

/// `state ++ action features -> 64 -> ReLU -> 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub l1: Linear,
    pub l2: Linear,
}

fn input(state: &[f64], action: &OrchestrationAction) -> Vec<f64> {
    let mut x = Vec::with_capacity(WORLD_INPUT);
    x.extend_from_slice(state);
    x.extend_from_slice(&action.features());
    x
}

impl WorldModel {
    pub fn zeros() -> Self {
        Self { l1: Linear::zeros(WORLD_INPUT, WORLD_HIDDEN), l2: Linear::zeros(WORLD_HIDDEN, WORLD_OUTPUT) }
    }

    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { l1: Linear::init(WORLD_INPUT, WORLD_HIDDEN, &mut rng), l2: Linear::init(WORLD_HIDDEN, WORLD_OUTPUT, &mut rng) }
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        for (l, i, o) in [(&self.l1, WORLD_INPUT, WORLD_HIDDEN), (&self.l2, WORLD_HIDDEN, WORLD_OUTPUT)] {
            l.check_shape()?;
            if l.inputs != i || l.outputs != o {
                return Err(NnError::Shape(format!("world layer is {}x{}, expected {o}x{i}", l.outputs, l.inputs)));
            }
        }
        Ok(())
    }

    /// Raw outputs in scaled units.
    fn raw(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let z = self.l1.forward(x);
        let a = nn::relu(&z);
        let y = self.l2.forward(&a);
        (z, a, y)
    }

    /// Mean squared error in scaled units and its gradient.
    pub fn loss_and_grad(&self, batch: &[&WorldTransition]) -> (f64, Vec<f64>) {
        let n = batch.len().max(1) as f64;
        let mut grad = vec![0.0; self.param_count()];
        let (g1, g2) = grad.split_at_mut(self.l1.param_count());
        let mut loss = 0.0;
        for t in batch {
            let x = input(&t.state, &t.action);
            let (z, a, y) = self.raw(&x);
            let target = t.outcome.to_array();
            let mut dy = [0.0; WORLD_OUTPUT];
            for k in 0..WORLD_OUTPUT {
                let e = y[k] - target[k] / OUTPUT_SCALES[k];
                loss += e * e / n;
                dy[k] = 2.0 * e / n;
            }
            let da = self.l2.backward(&a, &dy, g2);
            self.l1.backward(&x, &nn::relu_backward(&z, &da), g1);
        }
        (loss, grad)
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new("world_model");
        f.push_linear("l1", &self.l1);
        f.push_linear("l2", &self.l2);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self, NnError> {
        Ok(Self { l1: f.linear("l1", WORLD_INPUT, WORLD_HIDDEN)?, l2: f.linear("l2", WORLD_HIDDEN, WORLD_OUTPUT)? })
    }
}

impl Dynamics for WorldModel {
    fn predict(&self, state: &[f64], action: &OrchestrationAction) -> Prediction {
        let y = self.raw(&input(state, action)).2;
        Prediction::from_array(std::array::from_fn(|k| y[k] * OUTPUT_SCALES[k]))
    }
}

impl Parameters for WorldModel {
    fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.l1.write_params(out);
        self.l2.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let a = self.l1.read_params(src);
        a + self.l2.read_params(&src[a..])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for WorldTrainOptions {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 200, batch_size: 32, seed: 0 }
    }
}

/// Adam on squared error from a seeded initialization. Returns the model
/// and its final full-dataset loss.
pub fn world_model_train(data: &[WorldTransition], opts: &WorldTrainOptions) -> Result<(WorldModel, f64), WorldError> {
    if data.is_empty() {
        return Err(WorldError::EmptyDataset);
    }
    for t in data {
        if t.state.len() != STATE_DIM {
            return Err(NnError::Shape(format!("state has {} entries, expected {STATE_DIM}", t.state.len())).into());
        }
    }
    let mut m = WorldModel::init(opts.seed);
    let mut params = m.flat_params();
    let mut adam = Adam::new(opts.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let batch: Vec<&WorldTransition> = chunk.iter().map(|&i| &data[i]).collect();
            adam.step(&mut params, &m.loss_and_grad(&batch).1);
            m.set_flat_params(&params);
        }
    }
    let all: Vec<&WorldTransition> = data.iter().collect();
    let loss = m.loss_and_grad(&all).0;
    Ok((m, loss))
}

fn stage_rank(s: &[f64]) -> f64 {
    (0..4).find(|i| s[idx::STAGE + i] > 0.5).unwrap_or(0) as f64
}

fn error_total(s: &[f64]) -> f64 {
    s[idx::ERRORS..idx::ERRORS + 6].iter().sum::<f64>() * 10.0
}

/// Training target for one logged step, in the units the planner's state
/// update expects.
pub fn world_transition(t: &Transition) -> WorldTransition {
    WorldTransition {
        state: t.state.clone(),
        action: t.action,
        outcome: Prediction {
            stage_delta: stage_rank(&t.next_state) - stage_rank(&t.state),
            error_delta: error_total(&t.next_state) - error_total(&t.state),
            token_cost: t.tokens as f64,
            reward: t.reward.total,
        },
    }
}

pub fn world_model_predict(model: &WorldModel, state: &[f64], action: &OrchestrationAction) -> Prediction {
    model.predict(state, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn data(n: usize, seed: u64, target: impl Fn(&[f64], &OrchestrationAction) -> Prediction) -> Vec<WorldTransition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let state: Vec<f64> = (0..STATE_DIM).map(|_| rng.random_range(0.0..1.0)).collect();
                let action = OrchestrationAction::new(
                    rng.random_range(0..4),
                    rng.random_range(0..5),
                    rng.random(),
                    rng.random(),
                    rng.random(),
                    rng.random(),
                )
                .unwrap();
                let outcome = target(&state, &action);
                WorldTransition { state, action, outcome }
            })
            .collect()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let d = data(1, 1, |_, _| Prediction::default());
        assert_eq!(WorldModel::zeros().predict(&d[0].state, &d[0].action), Prediction::default());
    }

    #[test]
    fn constant_targets_are_learned() {
        let c = Prediction { stage_delta: 1.0, error_delta: -2.0, token_cost: 800.0, reward: 60.0 };
        let d = data(16, 2, |_, _| c);
        let opts = WorldTrainOptions { learning_rate: 1e-3, epochs: 1500, batch_size: 16, seed: 3 };
        let (m, _) = world_model_train(&d, &opts).unwrap();
        let p = m.predict(&d[5].state, &d[5].action).to_array();
        for ((got, want), scale) in p.iter().zip(c.to_array()).zip(OUTPUT_SCALES) {
            assert!((got - want).abs() / scale < 1e-2, "{got} vs {want}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = data(3, 4, |s, a| Prediction {
            stage_delta: s[0],
            error_delta: -s[1],
            token_cost: 300.0 * a.token_budget(),
            reward: 40.0 * a.temperature(),
        });
        let m = WorldModel::init(8);
        let refs: Vec<&WorldTransition> = d.iter().collect();
        let g = m.loss_and_grad(&refs).1;
        let num = nn::numeric_gradient(&m.flat_params(), 1e-6, |q| {
            let mut w = m.clone();
            w.set_flat_params(q);
            w.loss_and_grad(&refs).0
        });
        assert!(nn::max_relative_error(&g, &num, 1e-5) < 1e-4);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(world_model_train(&[], &WorldTrainOptions::default()), Err(WorldError::EmptyDataset)));
    }
}
