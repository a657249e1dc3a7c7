// SPDX-License-Identifier: Apache-2.0
//! Reinforcement-learning orchestration of the generation loop.
//!
//! Each refinement iteration encodes an [`OrchestrationState`], asks the
//! [`Orchestrator`] for an [`OrchestrationAction`], maps it to a
//! [`GenerationConfig`] and, once validation has run, scores it with
//! [`compute_reward`]. A finished episode (one spec's refinement run) goes
//! to the replay buffer and, in training mode, into a PPO update.

pub mod action;
pub mod heuristic;
pub mod mpc;
pub mod policy;
pub mod ppo;
pub mod replay;
pub mod reward;
pub mod state;
pub mod world;

pub use action::{epsilon_schedule, map_action, ActionError, GenerationConfig, OrchestrationAction};
pub use heuristic::{heuristic_policy, HeuristicTable};
pub use mpc::{mpc_plan, MpcError, MpcOptions, MpcPlan};
pub use policy::{pre_sigmoid_of, sample_action, sample_action_with, PolicyNetwork, PolicyOutput, SampledAction};
pub use ppo::{ppo_update, PpoError, PpoHyperparameters, PpoStats, PpoTrainer, Transition};
pub use replay::{read_transitions, write_transitions, Episode, ReplayBuffer};
pub use reward::{compute_reward, RewardBreakdown, RewardConfig};
pub use state::{encode_state, spec_identifier, IterationContext, OrchestrationState, STATE_DIM};
pub use world::{world_model_predict, world_model_train, world_transition, WorldTrainOptions, Dynamics, Prediction, WorldModel, WorldTransition};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSource {
    Heuristic,
    Policy,
    Planner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: OrchestrationAction,
    pub pre_sigmoid: [f64; action::N_CONTINUOUS],
    pub source: DecisionSource,
    pub epsilon: f64,
    pub policy_version: u64,
}

/// Immutable parameter set read by concurrent inference.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub version: u64,
    pub net: PolicyNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub hyper: PpoHyperparameters,
    /// Run PPO updates as episodes complete.
    pub train: bool,
    /// Completed episodes collected per update.
    pub update_every: usize,
    pub replay_capacity: usize,
    pub mpc: MpcOptions,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { hyper: PpoHyperparameters::default(), train: false, update_every: 8, replay_capacity: 1024, mpc: MpcOptions::default() }
    }
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    snapshot: RwLock<Arc<PolicySnapshot>>,
    trainer: Mutex<PpoTrainer>,
    buffer: ReplayBuffer,
    planner: Option<Arc<dyn Dynamics>>,
    log: Option<Mutex<PathBuf>>,
}

impl Orchestrator {
    pub fn new(net: PolicyNetwork, config: OrchestratorConfig) -> Result<Self, PpoError> {
        let trainer = PpoTrainer::new(net.clone(), config.hyper.clone())?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(PolicySnapshot { version: 0, net })),
            trainer: Mutex::new(trainer),
            buffer: ReplayBuffer::new(config.replay_capacity),
            config,
            planner: None,
            log: None,
        })
    }

    /// Plans with the given dynamics model instead of sampling the policy.
    pub fn with_planner(mut self, model: Arc<dyn Dynamics>) -> Self {
        self.planner = Some(model);
        self
    }

    /// Appends every finished episode to a JSON-lines file.
    pub fn with_transition_log(mut self, path: PathBuf) -> Self {
        self.log = Some(Mutex::new(path));
        self
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<PolicySnapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Picks the action for `state`. `episode` drives the warm start and the
    /// exploration schedule; `seed` makes the draw reproducible.
    pub fn decide(&self, state: &OrchestrationState, episode: u64, seed: u64) -> Decision {
        let snap = self.snapshot();
        let epsilon = self.config.hyper.epsilon(episode);
        if episode < self.config.hyper.warm_start_episodes {
            let action = heuristic_policy(state);
            return Decision {
                action,
                pre_sigmoid: pre_sigmoid_of(&action),
                source: DecisionSource::Heuristic,
                epsilon,
                policy_version: snap.version,
            };
        }
        if let Some(model) = &self.planner {
            if let Ok(plan) = mpc_plan(state.as_slice(), Some(model.as_ref()), &self.config.mpc, seed) {
                return Decision {
                    action: plan.action,
                    pre_sigmoid: pre_sigmoid_of(&plan.action),
                    source: DecisionSource::Planner,
                    epsilon,
                    policy_version: snap.version,
                };
            }
        }
        let out = snap.net.forward_cached(state.as_slice()).0;
        let s = sample_action(&out, epsilon, seed);
        Decision { action: s.action, pre_sigmoid: s.pre_sigmoid, source: DecisionSource::Policy, epsilon, policy_version: snap.version }
    }

    /// Records a finished episode. In training mode, once `update_every`
    /// episodes are buffered, runs one PPO update and publishes a new
    /// snapshot.
    pub fn finish_episode(&self, episode: Episode) -> Result<Option<PpoStats>, PpoError> {
        if let Some(path) = &self.log {
            let p = path.lock().unwrap_or_else(|e| e.into_inner());
            write_transitions(&p, &episode).map_err(|e| PpoError::Hyper(format!("transition log: {e}")))?;
        }
        self.buffer.push(episode);
        if !self.config.train || self.buffer.len() < self.config.update_every {
            return Ok(None);
        }
        let mut trainer = self.trainer.lock().unwrap_or_else(|e| e.into_inner());
        if self.buffer.len() < self.config.update_every {
            return Ok(None);
        }
        let batch: Vec<Transition> = self.buffer.drain().into_iter().flatten().collect();
        let stats = trainer.update(&batch)?;
        let mut slot = self.snapshot.write().unwrap_or_else(|e| e.into_inner());
        *slot = Arc::new(PolicySnapshot { version: slot.version + 1, net: trainer.net.clone() });
        Ok(Some(stats))
    }
}
