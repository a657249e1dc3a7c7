// SPDX-License-Identifier: Apache-2.0
//! Lint, simulation and synthesis checks with structured error reports.

mod categorize;
mod hints;
mod markers;
pub mod runner;
mod synth;

pub use categorize::{categorize_errors, context_lines, CategorizedError, ErrorCategory};
pub use hints::{fix_hints, HintDb};
pub use markers::{scan_line, scan_sim_output, Marker, MarkerScan};
pub use runner::{
    FixtureRule, FixtureRunner, FixtureSet, ProcessRunner, SourceFile, ToolError, ToolInvocation, ToolOutput,
    ToolPaths, ToolRunner, ToolStage,
};
pub use synth::{parse_synth_report, SynthMetrics};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Stage {
    #[default]
    None,
    LintPassed,
    SimPassed,
    SynthPassed,
}

impl Stage {
    /// 0 for `None` up to 3 for `SynthPassed`.
    pub fn rank(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub passed: bool,
    pub mismatches: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorTrend {
    Improving,
    Worsening,
    TypeChanged,
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LintMode {
    #[default]
    Strict2001,
    SystemVerilog,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stage_reached: Stage,
    pub errors: Vec<CategorizedError>,
    pub sim: Option<SimResult>,
    pub synth: Option<SynthMetrics>,
    /// Set when no testbench was supplied and simulation did not run.
    #[serde(default)]
    pub sim_skipped: bool,
    /// Raw tool output keyed by stage name.
    #[serde(default)]
    pub tool_logs: BTreeMap<String, String>,
}

impl ValidationReport {
    pub fn lint_passed(&self) -> bool {
        self.stage_reached >= Stage::LintPassed
    }

    pub fn sim_passed(&self) -> bool {
        self.sim.is_some_and(|s| s.passed)
    }

    /// Latch or loop warnings from synthesis.
    pub fn synth_warnings(&self) -> u32 {
        self.synth.map_or(0, |s| s.latch_warnings + s.loop_warnings)
    }

    pub fn error_count(&self, category: ErrorCategory) -> usize {
        self.errors.iter().filter(|e| e.category == category).count()
    }

    /// Checks the stage invariants; used by tests and debug assertions.
    pub fn is_consistent(&self) -> bool {
        let sim_ok = match self.stage_reached {
            Stage::SimPassed => self.sim_passed(),
            Stage::SynthPassed => self.sim_passed() || (self.sim_skipped && self.sim.is_none()),
            _ => true,
        };
        let synth_ok = self.stage_reached != Stage::SynthPassed || self.synth.is_some();
        sim_ok && synth_ok
    }
}

fn category_multiset(r: &ValidationReport) -> [usize; 6] {
    let mut m = [0; 6];
    for e in &r.errors {
        m[e.category.index()] += 1;
    }
    m
}

pub fn error_trend(previous: &ValidationReport, current: &ValidationReport) -> ErrorTrend {
    use std::cmp::Ordering::*;
    match current.errors.len().cmp(&previous.errors.len()) {
        Less => ErrorTrend::Improving,
        Greater => ErrorTrend::Worsening,
        Equal if category_multiset(previous) != category_multiset(current) => ErrorTrend::TypeChanged,
        Equal => ErrorTrend::Unchanged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorConfig {
    #[serde(with = "secs", default = "default_sim_timeout")]
    pub sim_timeout: Duration,
    #[serde(with = "secs", default = "default_tool_timeout")]
    pub tool_timeout: Duration,
}

fn default_sim_timeout() -> Duration {
    Duration::from_secs(60)
}

fn default_tool_timeout() -> Duration {
    Duration::from_secs(120)
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self { sim_timeout: default_sim_timeout(), tool_timeout: default_tool_timeout() }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LintOutcome {
    pub passed: bool,
    pub errors: Vec<CategorizedError>,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub result: SimResult,
    /// Compile errors, or an `Other` error when the run produced no marker
    /// or timed out.
    pub errors: Vec<CategorizedError>,
    pub compiled: bool,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub metrics: Option<SynthMetrics>,
    pub errors: Vec<CategorizedError>,
    pub log: String,
}

/// Runs the three stages through a [`ToolRunner`]. Each call works in its
/// own temporary directory.
#[derive(Clone)]
pub struct Validator {
    runner: Arc<dyn ToolRunner>,
    pub config: ValidatorConfig,
}

const DESIGN_FILE: &str = "design.v";
const TB_FILE: &str = "tb.v";

fn files(source: &str, deps: &[&str]) -> Vec<SourceFile> {
    let mut v = vec![SourceFile::new(DESIGN_FILE, source)];
    v.extend(deps.iter().enumerate().map(|(i, d)| SourceFile::new(format!("dep{i}.v"), *d)));
    v
}

impl Validator {
    pub fn new(runner: Arc<dyn ToolRunner>) -> Self {
        Self { runner, config: ValidatorConfig::default() }
    }

    pub fn with_config(mut self, config: ValidatorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn runner(&self) -> &Arc<dyn ToolRunner> {
        &self.runner
    }

    fn invoke(
        &self,
        stage: ToolStage,
        files: Vec<SourceFile>,
        top: Option<&str>,
        dir: &std::path::Path,
    ) -> Result<ToolOutput, ToolError> {
        let timeout = if stage == ToolStage::Simulate { self.config.sim_timeout } else { self.config.tool_timeout };
        self.runner.run(&ToolInvocation {
            stage,
            files,
            top: top.map(str::to_string),
            workdir: dir.to_path_buf(),
            timeout,
        })
    }

    fn lint_in(
        &self,
        dir: &std::path::Path,
        source: &str,
        deps: &[&str],
        mode: LintMode,
    ) -> Result<LintOutcome, ToolError> {
        let fs = files(source, deps);
        let out = match mode {
            LintMode::Strict2001 => self.invoke(ToolStage::LintStrict, fs, None, dir)?,
            LintMode::SystemVerilog => match self.invoke(ToolStage::LintVerilator, fs.clone(), None, dir) {
                Err(ToolError::Missing(..)) => self.invoke(ToolStage::LintIcarusSv, fs, None, dir)?,
                other => other?,
            },
        };
        let log = out.combined();
        let passed = out.success();
        let mut errors = categorize_errors(&log, Some(source));
        if passed {
            // warnings only; keep width and latch shapes, they still guide repair
            errors.retain(|e| matches!(e.category, ErrorCategory::WidthMismatch | ErrorCategory::InferredLatch));
        } else if errors.is_empty() {
            let msg = if out.timed_out { "lint timed out" } else { "lint failed without a recognizable message" };
            errors.push(CategorizedError::new(ErrorCategory::Other, msg));
        }
        Ok(LintOutcome { passed, errors, log })
    }

    /// Compile-only check. `deps` are extra sources (sub-modules).
    pub fn lint(&self, source: &str, deps: &[&str], mode: LintMode) -> Result<LintOutcome, ToolError> {
        let dir = tempfile::tempdir()?;
        self.lint_in(dir.path(), source, deps, mode)
    }

    fn simulate_in(
        &self,
        dir: &std::path::Path,
        design: &str,
        deps: &[&str],
        testbench: &str,
    ) -> Result<SimOutcome, ToolError> {
        let mut fs = files(design, deps);
        fs.push(SourceFile::new(TB_FILE, testbench));
        let compile = self.invoke(ToolStage::SimCompile, fs.clone(), None, dir)?;
        let clog = compile.combined();
        let failed = SimResult { passed: false, mismatches: 0, samples: 0 };
        if !compile.success() {
            let mut errors = categorize_errors(&clog, Some(design));
            if errors.is_empty() {
                errors.push(CategorizedError::new(ErrorCategory::Other, "simulation compile failed"));
            }
            return Ok(SimOutcome { result: failed, errors, compiled: false, log: clog });
        }
        let run = self.invoke(ToolStage::Simulate, fs, None, dir)?;
        let log = run.combined();
        if run.timed_out {
            let e = CategorizedError::new(ErrorCategory::Other, "simulation timed out");
            return Ok(SimOutcome { result: failed, errors: vec![e], compiled: true, log });
        }
        let scan = scan_sim_output(&run.stdout);
        let result = SimResult { passed: scan.passed, mismatches: scan.mismatches, samples: scan.samples };
        let errors = if scan.marker.is_none() {
            vec![CategorizedError::new(ErrorCategory::Other, "no status marker")]
        } else {
            Vec::new()
        };
        Ok(SimOutcome { result, errors, compiled: true, log })
    }

    pub fn simulate(&self, design: &str, deps: &[&str], testbench: &str) -> Result<SimOutcome, ToolError> {
        let dir = tempfile::tempdir()?;
        self.simulate_in(dir.path(), design, deps, testbench)
    }

    fn synth_in(
        &self,
        dir: &std::path::Path,
        source: &str,
        deps: &[&str],
        top: Option<&str>,
    ) -> Result<SynthOutcome, ToolError> {
        let out = self.invoke(ToolStage::Synth, files(source, deps), top, dir)?;
        let log = out.combined();
        if !out.success() {
            let mut errors = categorize_errors(&log, Some(source));
            if errors.is_empty() {
                errors.push(CategorizedError::new(ErrorCategory::Other, "synthesis failed"));
            }
            return Ok(SynthOutcome { metrics: None, errors, log });
        }
        let metrics = parse_synth_report(&log);
        let errors = categorize_errors(&log, Some(source))
            .into_iter()
            .filter(|e| e.category == ErrorCategory::InferredLatch)
            .collect();
        Ok(SynthOutcome { metrics: Some(metrics), errors, log })
    }

    pub fn synthesize_check(&self, source: &str, deps: &[&str], top: Option<&str>) -> Result<SynthOutcome, ToolError> {
        let dir = tempfile::tempdir()?;
        self.synth_in(dir.path(), source, deps, top)
    }

    /// Full pipeline. Simulation runs only after lint passes and synthesis
    /// only after simulation passes; without a testbench simulation is
    /// skipped and recorded as such.
    pub fn validate(
        &self,
        source: &str,
        deps: &[&str],
        testbench: Option<&str>,
        top: Option<&str>,
        mode: LintMode,
    ) -> Result<ValidationReport, ToolError> {
        let dir = tempfile::tempdir()?;
        let mut report = ValidationReport::default();
        let lint = self.lint_in(dir.path(), source, deps, mode)?;
        report.tool_logs.insert("lint".into(), lint.log);
        report.errors = lint.errors;
        if !lint.passed {
            return Ok(report);
        }
        report.stage_reached = Stage::LintPassed;
        match testbench {
            Some(tb) => {
                let sim = self.simulate_in(dir.path(), source, deps, tb)?;
                report.tool_logs.insert("sim".into(), sim.log);
                report.errors.extend(sim.errors);
                report.sim = Some(sim.result);
                if !sim.result.passed {
                    return Ok(report);
                }
                report.stage_reached = Stage::SimPassed;
            }
            None => report.sim_skipped = true,
        }
        let synth = self.synth_in(dir.path(), source, deps, top)?;
        report.tool_logs.insert("synth".into(), synth.log);
        report.errors.extend(synth.errors);
        if let Some(m) = synth.metrics {
            report.synth = Some(m);
            report.stage_reached = Stage::SynthPassed;
        }
        debug_assert!(report.is_consistent());
        Ok(report)
    }
}
