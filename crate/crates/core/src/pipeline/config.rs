// SPDX-License-Identifier: Apache-2.0
//! Pipeline configuration, loaded from JSON.

use crate::agents::RemoteConfig;
use crate::validation::ToolPaths;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_MAX_ITERATIONS: usize = 5;
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    #[default]
    Ppo,
    Mpc,
    Heuristic,
}

impl std::str::FromStr for Planner {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Self::Ppo),
            "mpc" => Ok(Self::Mpc),
            "heuristic" => Ok(Self::Heuristic),
            _ => Err(ConfigError::Invalid(format!("unknown planner `{s}`"))),
        }
    }
}

/// Where completions come from. `Scripted` replays per-problem response
/// files (`<problem>.script.json`, a JSON array of strings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    #[default]
    Scripted,
    Remote(RemoteConfig),
}

/// `Auto` runs the real tools when all of them resolve and the fixture
/// runner otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ToolMode {
    #[default]
    Auto,
    Process,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Budget {
    /// Input plus output tokens across all calls of one run.
    #[serde(default)]
    pub max_tokens: Option<u64>,
    #[serde(default)]
    pub max_wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_iterations: usize,
    pub planner: Planner,
    pub backend: BackendConfig,
    pub tool_mode: ToolMode,
    pub tools: ToolPaths,
    /// Fixture set for the fixture runner; structural checks when absent.
    pub fixtures: Option<PathBuf>,
    pub knowledge_base: Option<PathBuf>,
    pub guidance_registry: Option<PathBuf>,
    pub agent_profiles: Option<PathBuf>,
    pub router: Option<PathBuf>,
    /// JSON-lines reference-library index and the root it is relative to.
    pub library_index: Option<PathBuf>,
    pub library_root: Option<PathBuf>,
    pub policy_checkpoint: Option<PathBuf>,
    pub world_model_checkpoint: Option<PathBuf>,
    /// model id -> prices, see [`super::PriceTable`].
    pub price_table: Option<PathBuf>,
    pub budget: Budget,
    pub seed: u64,
    /// Episode index of the first run; drives warm start and exploration.
    pub episode_offset: u64,
    pub train: bool,
    pub transition_log: Option<PathBuf>,
    pub workers: usize,
    pub generate_testbench: bool,
    pub max_tool_concurrency: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            planner: Planner::default(),
            backend: BackendConfig::default(),
            tool_mode: ToolMode::default(),
            tools: ToolPaths::default(),
            fixtures: None,
            knowledge_base: None,
            guidance_registry: None,
            agent_profiles: None,
            router: None,
            library_index: None,
            library_root: None,
            policy_checkpoint: None,
            world_model_checkpoint: None,
            price_table: None,
            budget: Budget::default(),
            seed: 0,
            episode_offset: 0,
            train: false,
            transition_log: None,
            workers: DEFAULT_WORKERS,
            generate_testbench: true,
            max_tool_concurrency: DEFAULT_WORKERS,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut c = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            c.rebase(dir);
        }
        Ok(c)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = dir.join(&*x);
                }
            }
        };
        for p in [
            &mut self.fixtures,
            &mut self.knowledge_base,
            &mut self.guidance_registry,
            &mut self.agent_profiles,
            &mut self.router,
            &mut self.library_index,
            &mut self.library_root,
            &mut self.policy_checkpoint,
            &mut self.world_model_checkpoint,
            &mut self.price_table,
            &mut self.transition_log,
        ] {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::Invalid("max_iterations must be at least 1".into()));
        }
        if self.workers == 0 || self.max_tool_concurrency == 0 {
            return Err(ConfigError::Invalid("workers and max_tool_concurrency must be at least 1".into()));
        }
        if self.planner == Planner::Mpc && self.world_model_checkpoint.is_none() {
            return Err(ConfigError::Invalid("planner `mpc` needs world_model_checkpoint".into()));
        }
        if let Some(t) = self.budget.max_wall_seconds {
            if !(t > 0.0) {
                return Err(ConfigError::Invalid("budget.max_wall_seconds must be positive".into()));
            }
        }
        if self.library_index.is_some() != self.library_root.is_some() {
            return Err(ConfigError::Invalid("library_index and library_root go together".into()));
        }
        Ok(())
    }
}
