// SPDX-License-Identifier: Apache-2.0
//! Four-part reward: terminal outcome, efficiency, quality and progress.

use crate::spec::DesignCategory;
use crate::validation::ValidationReport;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SIM_PASS: f64 = 100.0;
pub const LINT_PASS: f64 = 60.0;
pub const TOTAL_FAILURE: f64 = -50.0;
pub const FIRST_TRY: f64 = 20.0;
pub const PER_TOKEN: f64 = -0.001;
pub const LOW_AREA: f64 = 10.0;
pub const TIMING_MET: f64 = 15.0;
pub const PER_STAGE: f64 = 5.0;
pub const PER_ERROR_FIXED: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub term: f64,
    pub eff: f64,
    pub qual: f64,
    pub prog: f64,
    pub total: f64,
}

/// Area threshold for the low-area bonus: `cell_count <= factor * baseline`
/// with a per-category baseline cell count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub area_factor: f64,
    pub baseline_cells: BTreeMap<DesignCategory, f64>,
    pub default_baseline: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let baseline_cells = [
            (DesignCategory::Combinational, 20.0),
            (DesignCategory::Sequential, 40.0),
            (DesignCategory::Fsm, 60.0),
            (DesignCategory::Memory, 200.0),
            (DesignCategory::Bus, 150.0),
            (DesignCategory::Processor, 1500.0),
        ]
        .into_iter()
        .collect();
        Self { area_factor: 1.25, baseline_cells, default_baseline: 100.0 }
    }
}

impl RewardConfig {
    pub fn area_threshold(&self, category: DesignCategory) -> f64 {
        self.area_factor * self.baseline_cells.get(&category).copied().unwrap_or(self.default_baseline)
    }
}

/// Pure function of the reports, token count and attempt flag.
///
/// * term: +100 when simulation passed, else +60 when lint passed, else -50.
/// * eff: +20 when simulation passed on the first attempt, minus 0.001 per token.
/// * qual: only when synthesis ran; +10 for cell count within the area
///   threshold, +15 for zero latch and loop warnings.
/// * prog: +5 per stage gained over `previous` (a missing previous report
///   counts as stage None) and +3 per error removed.
pub fn compute_reward(
    report: &ValidationReport,
    previous: Option<&ValidationReport>,
    tokens_used: u64,
    first_attempt: bool,
    category: DesignCategory,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let sim = report.sim_passed();
    let term = if sim {
        SIM_PASS
    } else if report.lint_passed() {
        LINT_PASS
    } else {
        TOTAL_FAILURE
    };
    let eff = if sim && first_attempt { FIRST_TRY } else { 0.0 } + PER_TOKEN * tokens_used as f64;
    let qual = match report.synth {
        Some(m) => {
            let area = if (m.cell_count as f64) <= cfg.area_threshold(category) { LOW_AREA } else { 0.0 };
            let timing = if m.latch_warnings == 0 && m.loop_warnings == 0 { TIMING_MET } else { 0.0 };
            area + timing
        }
        None => 0.0,
    };
    let prev_stage = previous.map_or(0, |p| p.stage_reached.rank());
    let stages = report.stage_reached.rank().saturating_sub(prev_stage);
    let fixed = previous.map_or(0, |p| p.errors.len().saturating_sub(report.errors.len()));
    let prog = PER_STAGE * f64::from(stages) + PER_ERROR_FIXED * fixed as f64;
    RewardBreakdown { term, eff, qual, prog, total: term + eff + qual + prog }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{CategorizedError, ErrorCategory, SimResult, Stage, SynthMetrics};

    fn c() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn sim_pass_first_try() {
        let r = ValidationReport {
            stage_reached: Stage::SimPassed,
            sim: Some(SimResult { passed: true, mismatches: 0, samples: 20 }),
            ..Default::default()
        };
        let b = compute_reward(&r, None, 1000, true, DesignCategory::Unknown, &c());
        assert_eq!((b.term, b.eff, b.qual, b.prog, b.total), (100.0, 19.0, 0.0, 10.0, 129.0));
    }

    #[test]
    fn lint_only() {
        let prev = ValidationReport {
            errors: vec![CategorizedError::new(ErrorCategory::Syntax, "a"), CategorizedError::new(ErrorCategory::Syntax, "b")],
            ..Default::default()
        };
        let cur = ValidationReport { stage_reached: Stage::LintPassed, ..Default::default() };
        let b = compute_reward(&cur, Some(&prev), 500, false, DesignCategory::Unknown, &c());
        assert_eq!((b.term, b.eff, b.prog, b.total), (60.0, -0.5, 11.0, 70.5));
    }

    #[test]
    fn total_failure() {
        let b = compute_reward(&ValidationReport::default(), None, 0, true, DesignCategory::Unknown, &c());
        assert_eq!(b.total, -50.0);
        assert_eq!(b.term + b.eff + b.qual + b.prog, b.total);
    }

    #[test]
    fn quality_bonuses() {
        let mut r = ValidationReport {
            stage_reached: Stage::SynthPassed,
            sim: Some(SimResult { passed: true, mismatches: 0, samples: 1 }),
            synth: Some(SynthMetrics { cell_count: 25, wire_count: 3, latch_warnings: 0, loop_warnings: 0 }),
            ..Default::default()
        };
        let prev = ValidationReport { stage_reached: Stage::SimPassed, ..r.clone() };
        let b = compute_reward(&r, Some(&prev), 0, false, DesignCategory::Combinational, &c());
        assert_eq!((b.qual, b.prog), (25.0, 5.0));
        r.synth = Some(SynthMetrics { cell_count: 26, wire_count: 3, latch_warnings: 1, loop_warnings: 0 });
        assert_eq!(compute_reward(&r, Some(&prev), 0, false, DesignCategory::Combinational, &c()).qual, 0.0);
    }
}
