// SPDX-License-Identifier: Apache-2.0
//! Top-level loop, benchmark harness, cost accounting and traces.

pub mod bench;
pub mod config;
pub mod cost;
pub mod run;
pub mod thought;

pub use bench::{load_problems, run_benchmark, summarize, BenchmarkRun, BenchmarkSummary, GroupStats, Problem, ProblemResult};
pub use config::{BackendConfig, Budget, ConfigError, Planner, PipelineConfig, ToolMode};
pub use cost::{estimate_cost, usage_cost, CostError, ModelPrice, ModelUsage, PriceTable, Usage};
pub use run::{
    generate_module, module_name_of, HierarchySummary, IterationRecord, ModuleRun, Outcome, Resources, RunRecord,
    SubmoduleSummary, TestbenchSource,
};
pub use thought::{emit_thought, JsonlSink, MemorySink, NullSink, ThoughtCategory, ThoughtEvent, ThoughtSink, Tracer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] crate::spec::SpecError),
    #[error(transparent)]
    Knowledge(#[from] crate::knowledge::KnowledgeError),
    #[error(transparent)]
    Registry(#[from] crate::guidance::RegistryError),
    #[error(transparent)]
    Profiles(#[from] crate::agents::ProfileError),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::NnError),
    #[error(transparent)]
    Ppo(#[from] crate::orchestrator::PpoError),
    #[error(transparent)]
    Planner(#[from] crate::orchestrator::MpcError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("no problems found in {0}")]
    NoProblems(String),
    #[error("{0}")]
    Io(String),
}
