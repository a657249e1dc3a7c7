// SPDX-License-Identifier: Apache-2.0
//! Proximal policy optimization over the hybrid action space.

use super::action::{OrchestrationAction, N_CONTINUOUS};
use super::policy::{OutputGrad, PolicyNetwork, POLICY_SIGMA};
use super::reward::RewardBreakdown;
use crate::nn::{self, Adam, Parameters};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoHyperparameters {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub warm_start_episodes: u64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for PpoHyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epsilon0: super::action::EPSILON0,
            epsilon_decay: super::action::EPSILON_DECAY,
            warm_start_episodes: 20,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 32,
            seed: 0,
        }
    }
}

impl PpoHyperparameters {
    pub fn validate(&self) -> Result<(), PpoError> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("clip_ratio", self.clip_ratio),
            ("epsilon0", self.epsilon0),
            ("epsilon_decay", self.epsilon_decay),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(PpoError::Hyper(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 || self.learning_rate <= 0.0 {
            return Err(PpoError::Hyper("epochs, minibatch and learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: u64) -> f64 {
        self.epsilon0 * self.epsilon_decay.powf(episode as f64)
    }
}

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("transition buffer is empty")]
    EmptyBuffer,
    #[error("transition buffer holds no completed episode")]
    NoCompletedEpisode,
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error(transparent)]
    Shape(#[from] nn::NnError),
}

/// One step of experience. `pre_sigmoid` holds the continuous components
/// before the sigmoid, where the Gaussian log-density is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: OrchestrationAction,
    pub pre_sigmoid: [f64; N_CONTINUOUS],
    pub reward: RewardBreakdown,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Tokens spent on the step; feeds the world model's cost head.
    #[serde(default)]
    pub tokens: u64,
}

/// A transition prepared for the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub state: Vec<f64>,
    pub agent: usize,
    pub focus: usize,
    pub pre_sigmoid: [f64; N_CONTINUOUS],
    pub logp_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub samples: usize,
    pub initial: PpoLoss,
    pub last: PpoLoss,
    pub steps: usize,
}

/// Generalized advantage estimation over a sequence that may contain several
/// episodes; `dones[t]` cuts bootstrapping after step `t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn gaussian_logpdf(u: f64, mu: f64) -> f64 {
    let z = (u - mu) / POLICY_SIGMA;
    -0.5 * z * z - POLICY_SIGMA.ln() - 0.5 * LN_2PI
}

fn entropy_and_grad(logits: &[f64]) -> (f64, Vec<f64>) {
    let lp = nn::log_softmax(logits);
    let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    let g = lp.iter().map(|l| -l.exp() * (l + h)).collect();
    (h, g)
}

/// Joint log-probability of a stored action under `net`.
pub fn log_prob(net: &PolicyNetwork, state: &[f64], agent: usize, focus: usize, pre: &[f64; N_CONTINUOUS]) -> f64 {
    let o = net.forward_cached(state).0;
    nn::log_softmax(&o.agent_logits)[agent]
        + nn::log_softmax(&o.focus_logits)[focus]
        + pre.iter().zip(o.pre_means).map(|(u, m)| gaussian_logpdf(*u, m)).sum::<f64>()
}

/// Mean clipped-surrogate loss plus `value_coef` times squared value error
/// minus `entropy_coef` times categorical entropy, and its gradient.
pub fn loss_and_grad(net: &PolicyNetwork, batch: &[&PpoSample], hyper: &PpoHyperparameters) -> (PpoLoss, Vec<f64>) {
    let n = batch.len().max(1) as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut acc = PpoLoss::default();
    for s in batch {
        let (o, cache) = net.forward_cached(&s.state);
        let lpa = nn::log_softmax(&o.agent_logits);
        let lpf = nn::log_softmax(&o.focus_logits);
        let gauss: f64 = s.pre_sigmoid.iter().zip(o.pre_means).map(|(u, m)| gaussian_logpdf(*u, m)).sum();
        let logp = lpa[s.agent] + lpf[s.focus] + gauss;
        let ratio = (logp - s.logp_old).exp();
        let surr1 = ratio * s.advantage;
        let surr2 = ratio.clamp(1.0 - hyper.clip_ratio, 1.0 + hyper.clip_ratio) * s.advantage;
        let policy = -surr1.min(surr2);
        let dlogp = if surr1 <= surr2 { -s.advantage * ratio } else { 0.0 };
        let value_err = o.value - s.ret;
        let (ha, gha) = entropy_and_grad(&o.agent_logits);
        let (hf, ghf) = entropy_and_grad(&o.focus_logits);

        acc.policy += policy / n;
        acc.value += value_err * value_err / n;
        acc.entropy += (ha + hf) / n;

        let mut dy = OutputGrad::default();
        for (i, l) in lpa.iter().enumerate() {
            let onehot = if i == s.agent { 1.0 } else { 0.0 };
            dy.agent_logits[i] = (dlogp * (onehot - l.exp()) - hyper.entropy_coef * gha[i]) / n;
        }
        for (i, l) in lpf.iter().enumerate() {
            let onehot = if i == s.focus { 1.0 } else { 0.0 };
            dy.focus_logits[i] = (dlogp * (onehot - l.exp()) - hyper.entropy_coef * ghf[i]) / n;
        }
        for i in 0..N_CONTINUOUS {
            dy.pre_means[i] = dlogp * (s.pre_sigmoid[i] - o.pre_means[i]) / (POLICY_SIGMA * POLICY_SIGMA) / n;
        }
        dy.value = hyper.value_coef * 2.0 * value_err / n;
        net.backward(&cache, &dy, &mut grad);
    }
    acc.total = acc.policy + hyper.value_coef * acc.value - hyper.entropy_coef * acc.entropy;
    (acc, grad)
}

/// Stateful trainer: keeps the optimizer moments and minibatch rng across
/// updates. Single writer; callers publish snapshots of [`Self::net`].
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub net: PolicyNetwork,
    pub hyper: PpoHyperparameters,
    adam: Adam,
    rng: ChaCha8Rng,
    updates: u64,
}

impl PpoTrainer {
    pub fn new(net: PolicyNetwork, hyper: PpoHyperparameters) -> Result<Self, PpoError> {
        hyper.validate()?;
        net.check_shapes()?;
        let adam = Adam::new(hyper.learning_rate, net.param_count());
        let rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        Ok(Self { net, hyper, adam, rng, updates: 0 })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// GAE, advantage normalization (batches of two or more) and the
    /// clipped-surrogate epochs.
    pub fn update(&mut self, transitions: &[Transition]) -> Result<PpoStats, PpoError> {
        if transitions.is_empty() {
            return Err(PpoError::EmptyBuffer);
        }
        if !transitions.iter().any(|t| t.done) {
            return Err(PpoError::NoCompletedEpisode);
        }
        let samples = self.prepare(transitions)?;
        Ok(self.update_samples(&samples))
    }

    fn prepare(&self, transitions: &[Transition]) -> Result<Vec<PpoSample>, PpoError> {
        let net = &self.net;
        let mut values = Vec::with_capacity(transitions.len());
        let mut next_values = Vec::with_capacity(transitions.len());
        for t in transitions {
            values.push(net.forward(&t.state)?.value);
            next_values.push(if t.done { 0.0 } else { net.forward(&t.next_state)?.value });
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward.total).collect();
        let dones: Vec<bool> = transitions.iter().map(|t| t.done).collect();
        let (mut adv, returns) =
            compute_gae(&rewards, &values, &next_values, &dones, self.hyper.gamma, self.hyper.gae_lambda);
        if adv.len() > 1 {
            let mean = adv.iter().sum::<f64>() / adv.len() as f64;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
            for a in &mut adv {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
        Ok(transitions
            .iter()
            .zip(adv)
            .zip(returns)
            .map(|((t, advantage), ret)| PpoSample {
                state: t.state.clone(),
                agent: t.action.agent(),
                focus: t.action.focus(),
                pre_sigmoid: t.pre_sigmoid,
                logp_old: log_prob(net, &t.state, t.action.agent(), t.action.focus(), &t.pre_sigmoid),
                advantage,
                ret,
            })
            .collect())
    }

    /// Runs the optimization epochs on already prepared samples.
    pub fn update_samples(&mut self, samples: &[PpoSample]) -> PpoStats {
        let all: Vec<&PpoSample> = samples.iter().collect();
        let initial = loss_and_grad(&self.net, &all, &self.hyper).0;
        let mut params = self.net.flat_params();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut steps = 0;
        for _ in 0..self.hyper.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.hyper.minibatch) {
                let batch: Vec<&PpoSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let (_, g) = loss_and_grad(&self.net, &batch, &self.hyper);
                self.adam.step(&mut params, &g);
                self.net.set_flat_params(&params);
                steps += 1;
            }
        }
        self.updates += 1;
        let last = loss_and_grad(&self.net, &all, &self.hyper).0;
        PpoStats { samples: samples.len(), initial, last, steps }
    }
}

/// One update from fresh optimizer state.
pub fn ppo_update(
    params: &PolicyNetwork,
    transitions: &[Transition],
    hyper: &PpoHyperparameters,
) -> Result<(PolicyNetwork, PpoStats), PpoError> {
    let mut t = PpoTrainer::new(params.clone(), hyper.clone())?;
    let stats = t.update(transitions)?;
    Ok((t.net, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::policy::sample_action_with;
    use crate::orchestrator::state::STATE_DIM;
    use rand::Rng;

    fn reward(total: f64) -> RewardBreakdown {
        RewardBreakdown { term: total, eff: 0.0, qual: 0.0, prog: 0.0, total }
    }

    #[test]
    fn gae_matches_hand_computation() {
        // two-step episode then a one-step episode
        let (adv, ret) = compute_gae(&[1.0, 2.0, 3.0], &[0.5, 0.25, 1.0], &[0.25, 9.0, 9.0], &[false, true, true], 0.9, 0.8);
        let d1 = 2.0 - 0.25;
        let d0 = 1.0 + 0.9 * 0.25 - 0.5;
        assert!((adv[1] - d1).abs() < 1e-12);
        assert!((adv[0] - (d0 + 0.9 * 0.8 * d1)).abs() < 1e-12);
        assert!((adv[2] - 2.0).abs() < 1e-12);
        assert!((ret[0] - (adv[0] + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn empty_and_incomplete_buffers_rejected() {
        let net = PolicyNetwork::zeros_with_hidden(4);
        assert!(matches!(ppo_update(&net, &[], &PpoHyperparameters::default()), Err(PpoError::EmptyBuffer)));
        let t = Transition {
            state: vec![0.0; STATE_DIM],
            action: OrchestrationAction::new(0, 0, 0.5, 0.5, 0.5, 0.5).unwrap(),
            pre_sigmoid: [0.0; 4],
            reward: reward(1.0),
            next_state: vec![0.0; STATE_DIM],
            done: false,
            tokens: 0,
        };
        assert!(matches!(ppo_update(&net, &[t], &PpoHyperparameters::default()), Err(PpoError::NoCompletedEpisode)));
    }

    #[test]
    fn zero_advantage_leaves_parameters() {
        let net = PolicyNetwork::init_with_hidden(8, 2);
        let state = vec![0.1; STATE_DIM];
        let v = net.forward(&state).unwrap().value;
        let t = Transition {
            state,
            action: OrchestrationAction::new(1, 3, 0.5, 0.5, 0.5, 0.5).unwrap(),
            pre_sigmoid: [0.0; 4],
            reward: reward(v),
            next_state: vec![0.0; STATE_DIM],
            done: true,
            tokens: 0,
        };
        let hyper = PpoHyperparameters { entropy_coef: 0.0, ..Default::default() };
        let (after, stats) = ppo_update(&net, &[t], &hyper).unwrap();
        assert_eq!(stats.initial.policy, 0.0);
        assert_eq!(stats.initial.value, 0.0);
        assert_eq!(after, net);
    }

    fn fixture(net: &PolicyNetwork) -> Vec<PpoSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..3)
            .map(|i| {
                let state: Vec<f64> = (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
                let pre = [0.3, -0.2, 0.1, 0.4];
                let lp = log_prob(net, &state, i, i + 1, &pre);
                PpoSample {
                    state,
                    agent: i,
                    focus: i + 1,
                    pre_sigmoid: pre,
                    // ratios near 1, 1.1 and 0.7 (the last one clipped)
                    logp_old: lp - [0.0, 0.1f64.ln_1p(), 0.7f64.ln()][i],
                    advantage: [0.8, -1.3, 0.5][i],
                    ret: [0.4, -0.2, 1.1][i],
                }
            })
            .collect()
    }

    #[test]
    fn policy_loss_gradient_matches_finite_differences() {
        let hyper = PpoHyperparameters::default();
        let net = PolicyNetwork::init_with_hidden(8, 21);
        let samples = fixture(&net);
        let refs: Vec<&PpoSample> = samples.iter().collect();
        let (_, g) = loss_and_grad(&net, &refs, &hyper);
        let num = nn::numeric_gradient(&net.flat_params(), 1e-6, |q| {
            let mut m = net.clone();
            m.set_flat_params(q);
            loss_and_grad(&m, &refs, &hyper).0.total
        });
        let err = nn::max_relative_error(&g, &num, 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn bandit_prefers_debug_agent() {
        let hyper = PpoHyperparameters::default();
        let mut trainer = PpoTrainer::new(PolicyNetwork::zeros_with_hidden(16), hyper.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut batch = Vec::new();
        for ep in 0..300u64 {
            let state: Vec<f64> = (0..STATE_DIM).map(|_| rng.random_range(0.0..1.0)).collect();
            let out = trainer.net.forward(&state).unwrap();
            let s = sample_action_with(&out, hyper.epsilon(ep), &mut rng);
            let r = if s.action.agent() == 2 { 100.0 } else { -50.0 };
            batch.push(Transition {
                next_state: state.clone(),
                state,
                action: s.action,
                pre_sigmoid: s.pre_sigmoid,
                reward: reward(r),
                done: true,
                tokens: 0,
            });
            if batch.len() == 8 {
                trainer.update(&batch).unwrap();
                batch.clear();
            }
        }
        let out = trainer.net.forward(&vec![0.5; STATE_DIM]).unwrap();
        assert_eq!(nn::argmax(&out.agent_logits), 2, "{:?}", out.agent_logits);
    }
}
