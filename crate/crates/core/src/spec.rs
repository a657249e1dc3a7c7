// SPDX-License-Identifier: Apache-2.0
//! Specifications, problem-type detection and three-tier routing.
//!
//! Routing is purely lexical. A spec that mentions a Karnaugh map or truth
//! table goes to the symbolic solver, one that talks about waveforms goes to
//! the waveform specialist, and everything else goes to the general
//! RL-orchestrated loop. Specs naming three or more distinct hardware
//! components are additionally flagged for hierarchical decomposition.

use crate::text::contains_keyword;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("spec name must be non-empty")]
    EmptyName,
    #[error("spec description must be non-empty")]
    EmptyDescription,
    #[error("unknown design category `{0}`")]
    UnknownCategory(String),
    #[error("reading spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing spec JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse design family, used for fix hints, state features and rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DesignCategory {
    Combinational,
    Sequential,
    Fsm,
    Memory,
    Bus,
    Processor,
    #[default]
    Unknown,
}

impl DesignCategory {
    pub const ALL: [DesignCategory; 7] = [
        Self::Combinational,
        Self::Sequential,
        Self::Fsm,
        Self::Memory,
        Self::Bus,
        Self::Processor,
        Self::Unknown,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap_or(6)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Combinational => "combinational",
            Self::Sequential => "sequential",
            Self::Fsm => "fsm",
            Self::Memory => "memory",
            Self::Bus => "bus",
            Self::Processor => "processor",
            Self::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SpecError> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SpecError::UnknownCategory(s.to_string()))
    }

    /// Keyword heuristic used when a spec carries no explicit category.
    /// Earlier rows win.
    pub fn infer(description: &str) -> Self {
        const RULES: &[(DesignCategory, &[&str])] = &[
            (DesignCategory::Processor, &["cpu", "processor", "risc-v", "riscv", "pipeline", "instruction", "alu"]),
            (DesignCategory::Bus, &["apb", "axi", "ahb", "wishbone", "bus", "uart", "spi", "i2c", "arbiter", "handshake"]),
            (DesignCategory::Memory, &["memory", "ram", "rom", "fifo", "cache", "register file", "regfile"]),
            (DesignCategory::Fsm, &["state machine", "fsm", "moore", "mealy", "next state", "state transition"]),
            (DesignCategory::Sequential, &["clock", "clk", "posedge", "flip-flop", "flip flop", "register", "counter", "shift register", "reset"]),
            (DesignCategory::Combinational, &["combinational", "mux", "multiplexer", "decoder", "encoder", "adder", "gate", "karnaugh", "k-map", "truth table", "xor", "comparator"]),
        ];
        RULES
            .iter()
            .find(|(_, kws)| kws.iter().any(|k| contains_keyword(description, k)))
            .map_or(DesignCategory::Unknown, |(c, _)| *c)
    }
}

impl fmt::Display for DesignCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named natural-language hardware specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub category: DesignCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_rtl: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_header: Option<String>,
}

impl Spec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Result<Self, SpecError> {
        let spec = Spec {
            name: name.into(),
            description: description.into(),
            category: DesignCategory::Unknown,
            context_rtl: None,
            interface_header: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_category(mut self, category: DesignCategory) -> Self {
        self.category = category;
        self
    }

    pub fn with_interface_header(mut self, header: impl Into<String>) -> Self {
        self.interface_header = Some(header.into());
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.name.trim().is_empty() {
            return Err(SpecError::EmptyName);
        }
        if self.description.trim().is_empty() {
            return Err(SpecError::EmptyDescription);
        }
        Ok(())
    }

    /// Explicit category, or the keyword heuristic when absent.
    pub fn effective_category(&self) -> DesignCategory {
        match self.category {
            DesignCategory::Unknown => DesignCategory::infer(&self.description),
            c => c,
        }
    }

    /// Parses either the JSON object form or the plain-text form (first line
    /// is the name, the rest the description).
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let trimmed = text.trim_start();
        let spec: Spec = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed)?
        } else {
            let (name, rest) = trimmed.split_once('\n').unwrap_or((trimmed, ""));
            Spec {
                name: name.trim().to_string(),
                description: rest.trim().to_string(),
                category: DesignCategory::Unknown,
                context_rtl: None,
                interface_header: None,
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Symbolic,
    WaveformSpecialist,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub tier: Tier,
    pub hierarchical: bool,
    pub matched_component_keywords: BTreeSet<String>,
    pub matched_trigger_keywords: BTreeSet<String>,
}

/// Keyword dictionaries driving the router. Loadable from JSON so the
/// component list can be extended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Router {
    pub symbolic_triggers: Vec<String>,
    pub waveform_triggers: Vec<String>,
    /// Each entry is a group: the first item is the canonical keyword, the
    /// rest aliases that count as the same component.
    pub component_groups: Vec<Vec<String>>,
    /// Minimum distinct component count that triggers decomposition.
    pub hierarchy_threshold: usize,
}

impl Default for Router {
    fn default() -> Self {
        serde_json::from_str(include_str!("../data/router.json"))
            .expect("embedded router dictionary is valid")
    }
}

impl Router {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    fn matches(&self, description: &str, dict: &[String]) -> BTreeSet<String> {
        dict.iter()
            .filter(|k| contains_keyword(description, k))
            .map(|k| k.to_ascii_lowercase())
            .collect()
    }

    pub fn symbolic_matches(&self, spec: &Spec) -> BTreeSet<String> {
        self.matches(&spec.description, &self.symbolic_triggers)
    }

    pub fn waveform_matches(&self, spec: &Spec) -> BTreeSet<String> {
        self.matches(&spec.description, &self.waveform_triggers)
    }

    pub fn detect_symbolic(&self, spec: &Spec) -> bool {
        !self.symbolic_matches(spec).is_empty()
    }

    pub fn detect_waveform(&self, spec: &Spec) -> bool {
        !self.waveform_matches(spec).is_empty()
    }

    /// Distinct component keywords (canonical group names) present in the
    /// description.
    pub fn count_components(&self, spec: &Spec) -> BTreeSet<String> {
        self.component_groups
            .iter()
            .filter(|group| group.iter().any(|k| contains_keyword(&spec.description, k)))
            .filter_map(|group| group.first().map(|k| k.to_ascii_lowercase()))
            .collect()
    }

    pub fn route(&self, spec: &Spec) -> RoutingDecision {
        let symbolic = self.symbolic_matches(spec);
        let waveform = self.waveform_matches(spec);
        let components = self.count_components(spec);
        let (tier, triggers) = if !symbolic.is_empty() {
            (Tier::Symbolic, symbolic)
        } else if !waveform.is_empty() {
            (Tier::WaveformSpecialist, waveform)
        } else {
            (Tier::General, BTreeSet::new())
        };
        RoutingDecision {
            tier,
            hierarchical: tier != Tier::Symbolic && components.len() >= self.hierarchy_threshold,
            matched_component_keywords: components,
            matched_trigger_keywords: triggers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: &str) -> Spec {
        Spec::new("t", d).unwrap()
    }

    #[test]
    fn symbolic_detection() {
        let r = Router::default();
        assert!(r.detect_symbolic(&spec("Implement the Karnaugh map below")));
        assert!(!r.detect_symbolic(&spec("4-bit counter")));
        assert!(r.detect_symbolic(&spec("Given the truth table, write the module")));
        assert!(r.detect_symbolic(&spec("Use the K-map to simplify")));
    }

    #[test]
    fn empty_description_rejected() {
        assert!(matches!(Spec::new("x", "  "), Err(SpecError::EmptyDescription)));
        assert!(matches!(Spec::new("", "a"), Err(SpecError::EmptyName)));
    }

    #[test]
    fn waveform_detection() {
        let r = Router::default();
        assert!(r.detect_waveform(&spec("Build it from the following timing diagram: ...")));
        assert!(!r.detect_waveform(&spec("full adder from equations")));
        assert!(r.detect_waveform(&spec("examine the waveform and determine what the circuit does")));
    }

    #[test]
    fn component_counting() {
        let r = Router::default();
        let got = r.count_components(&spec("RISC-V SoC with cache, bus, UART, and GPIO"));
        let want: BTreeSet<String> = ["cpu", "cache", "bus", "uart", "gpio"].map(String::from).into();
        assert_eq!(got, want);
        assert!(r.count_components(&spec("2-input AND gate")).is_empty());
        assert_eq!(r.count_components(&spec("uart uart uart")).len(), 1);
        assert!(r.count_components(&spec("an scache unit")).is_empty());
    }

    #[test]
    fn routing_examples() {
        let r = Router::default();
        let d = r.route(&spec("Implement the circuit described by the Karnaugh map below, which has a cpu, bus, cache"));
        assert_eq!(d.tier, Tier::Symbolic);
        assert!(!d.hierarchical);

        let d = r.route(&spec("RISC-V SoC with pipeline, cache, bus, UART, and GPIO"));
        assert_eq!(d.tier, Tier::General);
        assert!(d.hierarchical);

        let d = r.route(&spec("Read the waveform and determine what the circuit does"));
        assert_eq!(d.tier, Tier::WaveformSpecialist);
        assert!(!d.hierarchical);
    }

    #[test]
    fn category_inference() {
        assert_eq!(DesignCategory::infer("a dual-port RAM with 16 words"), DesignCategory::Memory);
        assert_eq!(DesignCategory::infer("Moore state machine for a traffic light"), DesignCategory::Fsm);
        assert_eq!(DesignCategory::infer("8-bit adder"), DesignCategory::Combinational);
        assert_eq!(DesignCategory::infer("something vague"), DesignCategory::Unknown);
    }

    #[test]
    fn plain_text_and_json_forms() {
        let s = Spec::parse("counter4\nA 4-bit counter with synchronous reset.\n").unwrap();
        assert_eq!(s.name, "counter4");
        assert_eq!(s.category, DesignCategory::Unknown);
        let s = Spec::parse(r#"{"name":"m","description":"d","category":"fsm"}"#).unwrap();
        assert_eq!(s.category, DesignCategory::Fsm);
        assert!(Spec::parse(r#"{"name":"m","description":""}"#).is_err());
    }
}
