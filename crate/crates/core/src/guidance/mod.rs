// SPDX-License-Identifier: Apache-2.0
//! Spec-guidance registry and the learned configuration gate.
//!
//! Detectors are matched against the original description in ascending
//! priority; every match appends its guidance block. Guidance text is never
//! re-scanned, so one detector's brief cannot fire another detector.

mod gate;

pub use gate::{
    gate_features, gate_train, select_config, synthetic_labels, GateConfig, GateError, GateFeatures,
    GateSample, GateTrainOptions, GateTrainReport, GateWeights, PassRateHistory, GATE_FEATURES,
};

use crate::spec::Spec;
use crate::text::contains_keyword;
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

pub const MIN_GUIDANCE_LINES: usize = 10;
pub const MAX_GUIDANCE_LINES: usize = 200;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("detector `{0}` has empty guidance")]
    EmptyGuidance(String),
    #[error("detector `{id}` guidance has {lines} lines, expected {MIN_GUIDANCE_LINES}..={MAX_GUIDANCE_LINES}")]
    GuidanceLength { id: String, lines: usize },
    #[error("priority {0} used by more than one detector")]
    DuplicatePriority(i32),
    #[error("detector `{id}`: invalid regex: {source}")]
    Regex { id: String, source: regex::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Semantic,
    FixtureGrounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    InterfacePreservation,
    RtlHazards,
    ProtocolPatterns,
    Microarchitecture,
    MlOperators,
}

/// Boolean tree over case-insensitive predicates on the description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    All(Vec<Trigger>),
    Any(Vec<Trigger>),
    /// Whole-word match for one word, substring match for a phrase.
    Phrase(String),
    /// Case-insensitive regular expression.
    Regex(String),
}

impl Trigger {
    pub fn matches(&self, text: &str) -> bool {
        match self {
            Trigger::All(ts) => ts.iter().all(|t| t.matches(text)),
            Trigger::Any(ts) => ts.iter().any(|t| t.matches(text)),
            Trigger::Phrase(p) => contains_keyword(text, p),
            Trigger::Regex(r) => RegexBuilder::new(r).case_insensitive(true).build().is_ok_and(|re| re.is_match(text)),
        }
    }

    fn check(&self) -> Result<(), regex::Error> {
        match self {
            Trigger::All(ts) | Trigger::Any(ts) => ts.iter().try_for_each(Trigger::check),
            Trigger::Phrase(_) => Ok(()),
            Trigger::Regex(r) => RegexBuilder::new(r).build().map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detector {
    pub id: String,
    pub priority: i32,
    pub kind: DetectorKind,
    pub band: Band,
    pub trigger: Trigger,
    pub guidance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    detectors: Vec<Detector>,
}

impl Registry {
    /// Validates and sorts detectors by priority.
    pub fn new(mut detectors: Vec<Detector>) -> Result<Self, RegistryError> {
        let mut seen = BTreeSet::new();
        for d in &detectors {
            if d.guidance.trim().is_empty() {
                return Err(RegistryError::EmptyGuidance(d.id.clone()));
            }
            let lines = d.guidance.trim_end().lines().count();
            if !(MIN_GUIDANCE_LINES..=MAX_GUIDANCE_LINES).contains(&lines) {
                return Err(RegistryError::GuidanceLength { id: d.id.clone(), lines });
            }
            if !seen.insert(d.priority) {
                return Err(RegistryError::DuplicatePriority(d.priority));
            }
            d.trigger.check().map_err(|source| RegistryError::Regex { id: d.id.clone(), source })?;
        }
        detectors.sort_by_key(|d| d.priority);
        Ok(Self { detectors })
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The seed registry compiled into the crate.
    pub fn seed() -> Self {
        Self::from_json(include_str!("../../data/guidance_registry.json")).expect("seed registry is valid")
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    /// Ids of detectors matching `description`, in priority order.
    pub fn matching(&self, description: &str) -> Vec<&Detector> {
        self.detectors.iter().filter(|d| d.trigger.matches(description)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrichment {
    pub spec: Spec,
    pub fired: Vec<String>,
}

/// Appends the guidance of every matching detector, in priority order.
pub fn enrich_spec(spec: &Spec, registry: &Registry) -> Enrichment {
    let fired = registry.matching(&spec.description);
    let mut out = spec.clone();
    for d in &fired {
        out.description.push_str(&format!("\n\n[guidance: {}]\n{}", d.id, d.guidance.trim_end()));
    }
    Enrichment { spec: out, fired: fired.iter().map(|d| d.id.clone()).collect() }
}
