// SPDX-License-Identifier: Apache-2.0
//! Rule-table fallback used before the policy has trained.

use super::action::OrchestrationAction;
use super::state::OrchestrationState;
use crate::validation::{ErrorCategory, Stage};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub const HEURISTIC_RULES: &str = include_str!("../../data/heuristic_rules.json");

/// Conjunction of optional predicates over state features; an empty
/// condition always matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub stage_at_least: Option<Stage>,
    #[serde(default)]
    pub has_errors: Option<bool>,
    #[serde(default)]
    pub latch_errors: Option<bool>,
    #[serde(default)]
    pub iteration: Option<usize>,
    #[serde(default)]
    pub complexity_at_least: Option<f64>,
}

impl Condition {
    pub fn matches(&self, s: &OrchestrationState) -> bool {
        let stage = s.stage();
        self.stage.is_none_or(|x| stage == x)
            && self.stage_at_least.is_none_or(|x| stage >= x)
            && self.has_errors.is_none_or(|x| s.has_errors() == x)
            && self.latch_errors.is_none_or(|x| (s.error_fraction(ErrorCategory::InferredLatch) > 0.0) == x)
            && self.iteration.is_none_or(|x| s.iteration() == x)
            && self.complexity_at_least.is_none_or(|x| s.complexity() >= x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRule {
    pub name: String,
    pub when: Condition,
    pub then: OrchestrationAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTable {
    pub version: u32,
    pub rules: Vec<HeuristicRule>,
}

impl HeuristicTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn seed() -> &'static Self {
        static T: OnceLock<HeuristicTable> = OnceLock::new();
        T.get_or_init(|| Self::from_json(HEURISTIC_RULES).expect("bundled heuristic rules parse"))
    }

    /// First matching rule, if any.
    pub fn select(&self, s: &OrchestrationState) -> Option<&HeuristicRule> {
        self.rules.iter().find(|r| r.when.matches(s))
    }
}

/// Action of the first matching bundled rule. The table ends with a
/// catch-all, so this always yields an action.
pub fn heuristic_policy(state: &OrchestrationState) -> OrchestrationAction {
    HeuristicTable::seed().select(state).map(|r| r.then).expect("bundled table has a catch-all rule")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::action::map_action;
    use crate::orchestrator::state::{idx, STATE_DIM};
    use crate::agents::AgentName;

    fn state(f: impl FnOnce(&mut Vec<f64>)) -> OrchestrationState {
        let mut v = vec![0.0; STATE_DIM];
        v[idx::STAGE] = 1.0;
        f(&mut v);
        OrchestrationState(v)
    }

    fn set_stage(v: &mut [f64], s: Stage) {
        v[idx::STAGE..idx::STAGE + 4].fill(0.0);
        v[idx::STAGE + s.rank() as usize] = 1.0;
    }

    #[test]
    fn syntax_errors_go_to_debug() {
        let s = state(|v| {
            v[idx::ITERATION] = 0.2;
            v[idx::ERRORS + ErrorCategory::Syntax.index()] = 0.3;
        });
        let a = heuristic_policy(&s);
        assert_eq!((a.agent(), a.focus(), a.temperature()), (2, 2, 0.3));
        assert_eq!(map_action(&a).rag_k, 5);
    }

    #[test]
    fn first_attempts_split_on_complexity() {
        let hard = heuristic_policy(&state(|v| v[idx::COMPLEXITY] = 0.9));
        assert_eq!(map_action(&hard).agent, AgentName::Genius);
        assert_eq!(map_action(&hard).rag_k, 15);
        let easy = heuristic_policy(&state(|v| v[idx::COMPLEXITY] = 0.2));
        assert_eq!(map_action(&easy).agent, AgentName::Fast);
        assert_eq!(map_action(&easy).rag_k, 3);
    }

    #[test]
    fn latch_warning_after_sim_goes_to_optimize() {
        let s = state(|v| {
            v[idx::ITERATION] = 0.4;
            set_stage(v, Stage::SynthPassed);
            v[idx::ERRORS + ErrorCategory::InferredLatch.index()] = 0.1;
        });
        let a = heuristic_policy(&s);
        assert_eq!(map_action(&a).agent, AgentName::Optimize);
        assert_eq!(map_action(&a).rag_k, 4);
        assert_eq!(a.temperature(), 0.4);
    }

    #[test]
    fn lint_clean_sim_failing_goes_to_debug() {
        let s = state(|v| {
            v[idx::ITERATION] = 0.2;
            set_stage(v, Stage::LintPassed);
        });
        assert_eq!(heuristic_policy(&s).agent(), 2);
    }

    #[test]
    fn table_rejects_unknown_predicates() {
        let bad = r#"{"version":1,"rules":[{"name":"x","when":{"colour":"red"},"then":{"agent":0,"focus":0,"temperature":0,"token_budget":0,"rag_depth":0,"retry_budget":0}}]}"#;
        assert!(HeuristicTable::from_json(bad).is_err());
    }
}
