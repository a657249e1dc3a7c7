// SPDX-License-Identifier: Apache-2.0
//! Agent profiles, prompt assembly, completion backends, code extraction and
//! testbench handling.

mod backend;
mod extract;
mod testbench;

pub use backend::{Backend, BackendError, CompletionResult, MockBackend, RemoteBackend, RemoteConfig};
pub use extract::{extract_code, ExtractionFailed};
pub use testbench::{
    adapt_testbench, check_testbench, generate_testbench, AdaptError, ComplianceIssue, TestbenchError,
    MAX_TESTBENCH_ATTEMPTS,
};

use crate::spec::Spec;
use crate::validation::CategorizedError;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentName {
    Genius,
    Fast,
    Debug,
    Optimize,
    Waveform,
    Testbench,
}

impl AgentName {
    /// The four agents the orchestrator chooses between, in action-index order.
    pub const ORCHESTRATED: [AgentName; 4] = [AgentName::Genius, AgentName::Fast, AgentName::Debug, AgentName::Optimize];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ORCHESTRATED.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Genius => "genius",
            Self::Fast => "fast",
            Self::Debug => "debug",
            Self::Optimize => "optimize",
            Self::Waveform => "waveform",
            Self::Testbench => "testbench",
        }
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    RlPolicy,
    KeywordRule,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: AgentName,
    pub model_id: String,
    pub default_temperature: f64,
    pub default_rag_k: usize,
    pub selection: Selection,
    pub system_prompt_template: String,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile file: {0}")]
    Io(#[from] std::io::Error),
    #[error("profile JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("profile {0}: temperature outside [0, 1]")]
    Temperature(AgentName),
    #[error("missing profile for {0}")]
    Missing(AgentName),
    #[error("duplicate profile for {0}")]
    Duplicate(AgentName),
}

/// The full set of six profiles plus the shared coding guidelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfiles {
    pub version: u32,
    pub guidelines: String,
    pub profiles: Vec<AgentProfile>,
}

impl AgentProfiles {
    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let set: AgentProfiles = serde_json::from_str(text)?;
        set.check()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seed() -> Self {
        Self::from_json(include_str!("../../data/agent_profiles.json")).expect("bundled profiles are valid")
    }

    fn check(&self) -> Result<(), ProfileError> {
        for name in [
            AgentName::Genius,
            AgentName::Fast,
            AgentName::Debug,
            AgentName::Optimize,
            AgentName::Waveform,
            AgentName::Testbench,
        ] {
            match self.profiles.iter().filter(|p| p.name == name).count() {
                0 => return Err(ProfileError::Missing(name)),
                1 => {}
                _ => return Err(ProfileError::Duplicate(name)),
            }
        }
        if let Some(p) = self.profiles.iter().find(|p| !(0.0..=1.0).contains(&p.default_temperature)) {
            return Err(ProfileError::Temperature(p.name));
        }
        Ok(())
    }

    pub fn get(&self, name: AgentName) -> &AgentProfile {
        self.profiles.iter().find(|p| p.name == name).expect("checked on load")
    }

    /// Role template followed by the shared guidelines. The testbench agent
    /// gets its template alone, since the design rules forbid what a
    /// testbench needs.
    pub fn system_prompt(&self, name: AgentName) -> String {
        let p = self.get(name);
        if name == AgentName::Testbench {
            p.system_prompt_template.clone()
        } else {
            format!("{}\n\n{}", p.system_prompt_template, self.guidelines)
        }
    }
}

/// What a backend is asked. Self-contained: no conversation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t.clamp(0.0, 1.0);
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n.max(1);
        self
    }

    /// Appends an extra instruction paragraph to the system prompt.
    pub fn with_directive(mut self, directive: &str) -> Self {
        if !directive.trim().is_empty() {
            self.system.push_str("\n\n");
            self.system.push_str(directive.trim());
        }
        self
    }
}

/// Structured feedback from the previous iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorFeedback {
    pub errors: Vec<CategorizedError>,
    #[serde(default)]
    pub hints: Vec<String>,
    #[serde(default)]
    pub previous_source: Option<String>,
    /// e.g. "Mismatches: 2 in 439 samples"
    #[serde(default)]
    pub sim_summary: Option<String>,
}

fn section(out: &mut String, label: &str, body: &str) {
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    let _ = write!(out, "=== {label} ===\n{}", body.trim_end());
}

/// Formats errors as numbered blocks with their source context.
pub fn format_errors(errors: &[CategorizedError]) -> String {
    let mut s = String::new();
    for (i, e) in errors.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let loc = match (&e.file, e.line) {
            (Some(f), Some(l)) => format!(" at {f}:{l}"),
            (None, Some(l)) => format!(" at line {l}"),
            _ => String::new(),
        };
        let _ = writeln!(s, "[{}] {}{loc}: {}", i + 1, e.category, e.message);
        for c in &e.context {
            let _ = writeln!(s, "    {c}");
        }
    }
    s
}

/// Assembles the request for one generation call. The user prompt holds
/// labelled sections: specification, interface, reference material, errors
/// and fix hints, the previous attempt. Empty sections are omitted.
pub fn build_prompt(
    profiles: &AgentProfiles,
    agent: AgentName,
    spec: &Spec,
    rag_context: &str,
    feedback: Option<&ErrorFeedback>,
) -> CompletionRequest {
    let profile = profiles.get(agent);
    let mut user = String::new();
    section(&mut user, "SPECIFICATION", &spec.description);
    if let Some(h) = spec.interface_header.as_deref().filter(|h| !h.trim().is_empty()) {
        section(&mut user, "INTERFACE", h);
    }
    if let Some(ctx) = spec.context_rtl.as_deref().filter(|c| !c.trim().is_empty()) {
        section(&mut user, "EXISTING RTL", ctx);
    }
    if !rag_context.trim().is_empty() {
        section(&mut user, "REFERENCE", rag_context);
    }
    if let Some(fb) = feedback {
        if !fb.errors.is_empty() {
            section(&mut user, "ERRORS", &format_errors(&fb.errors));
        }
        if let Some(s) = &fb.sim_summary {
            section(&mut user, "SIMULATION", s);
        }
        if !fb.hints.is_empty() {
            let hints: Vec<String> = fb.hints.iter().map(|h| format!("- {h}")).collect();
            section(&mut user, "FIX HINTS", &hints.join("\n"));
        }
        if let Some(src) = &fb.previous_source {
            section(&mut user, "PREVIOUS ATTEMPT", &format!("```verilog\n{}\n```", src.trim_end()));
        }
    }
    CompletionRequest {
        model: profile.model_id.clone(),
        system: profiles.system_prompt(agent),
        user,
        temperature: profile.default_temperature,
        max_tokens: DEFAULT_MAX_TOKENS,
    }
}

/// Output of one generation call after code extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub source: String,
    pub raw_response: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub agent: AgentName,
    /// No module span could be extracted; `source` is empty.
    pub extraction_failed: bool,
}

/// Sends `req` and extracts code from the reply.
pub fn generate(backend: &dyn Backend, agent: AgentName, req: &CompletionRequest) -> Result<GenerationResult, BackendError> {
    let res = backend.complete(req)?;
    let (source, extraction_failed) = match extract_code(&res.text) {
        Ok(s) => (s, false),
        Err(_) => (String::new(), true),
    };
    Ok(GenerationResult {
        source,
        raw_response: res.text,
        tokens_in: res.input_tokens,
        tokens_out: res.output_tokens,
        agent,
        extraction_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{categorize_errors, ErrorCategory};

    #[test]
    fn table_values() {
        let p = AgentProfiles::seed();
        let got: Vec<(AgentName, f64, usize, Selection)> =
            p.profiles.iter().map(|p| (p.name, p.default_temperature, p.default_rag_k, p.selection)).collect();
        use AgentName::*;
        use Selection::*;
        assert_eq!(
            got,
            [
                (Genius, 0.7, 15, RlPolicy),
                (Fast, 0.5, 3, RlPolicy),
                (Debug, 0.3, 5, RlPolicy),
                (Optimize, 0.4, 4, RlPolicy),
                (Waveform, 0.4, 15, KeywordRule),
                (Testbench, 0.6, 4, Explicit),
            ]
        );
        let again = AgentProfiles::from_json(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn waveform_prompt_has_six_steps() {
        let p = AgentProfiles::seed();
        let sys = p.system_prompt(AgentName::Waveform);
        for step in [
            "Extract all transitions",
            "Identify pattern type",
            "Find exact wrap points",
            "Resolve temporal dependencies",
            "Derive logic",
            "Verify",
        ] {
            assert!(sys.contains(step), "{step}");
        }
    }

    #[test]
    fn minimal_prompt() {
        let p = AgentProfiles::seed();
        let spec = Spec::new("and2", "Two-input AND gate.").unwrap();
        let req = build_prompt(&p, AgentName::Fast, &spec, "", None);
        assert_eq!(req.user, "=== SPECIFICATION ===\nTwo-input AND gate.");
        assert_eq!(req.temperature, 0.5);
        assert_eq!(req.max_tokens, DEFAULT_MAX_TOKENS);
        assert_eq!(req, build_prompt(&p, AgentName::Fast, &spec, "", None));
    }

    #[test]
    fn debug_prompt_carries_error_context() {
        let p = AgentProfiles::seed();
        let src = "module m(input a, output y);\nwire t;\nassign t = a;\nassign y = q;\nassign z = t;\nendmodule\n";
        let log = "design.v:4: error: Unable to bind wire/reg/memory `q' in `m'\n\
                   design.v:5: error: Could not find variable ``z'' in ``m''\n";
        let errors = categorize_errors(log, Some(src));
        assert_eq!(errors.len(), 2);
        assert!(errors.iter().all(|e| e.category == ErrorCategory::UndeclaredSignal));
        let fb = ErrorFeedback { errors, ..Default::default() };
        let spec = Spec::new("m", "pass-through").unwrap();
        let req = build_prompt(&p, AgentName::Debug, &spec, "", Some(&fb));
        assert!(req.user.contains("[1] undeclared_signal at design.v:4"));
        assert!(req.user.contains("[2] undeclared_signal at design.v:5"));
        assert!(req.user.contains("   2 | wire t;"));
        assert!(req.user.contains("   6 | endmodule"));
        assert_eq!(req.temperature, 0.3);
    }
}
