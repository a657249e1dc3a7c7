// SPDX-License-Identifier: Apache-2.0
//! Runs a directory of problems and summarizes them.
//!
//! A problem is `<name>.spec.json` or `<name>.spec.txt`, optionally with
//! `<name>.tb.v` (testbench) and `<name>.script.json` (scripted responses,
//! a JSON array of strings).

use super::config::BackendConfig;
use super::run::{generate_module, ModuleRun, Outcome, Resources};
use super::thought::{JsonlSink, NullSink, ThoughtSink};
use super::PipelineError;
use crate::agents::{Backend, MockBackend};
use crate::spec::Spec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub spec: Spec,
    pub testbench: Option<String>,
    pub script: Option<Vec<String>>,
}

fn io(p: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", p.display()))
}

fn read_opt(p: &Path) -> Result<Option<String>, PipelineError> {
    match std::fs::read_to_string(p) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io(p, e)),
    }
}

/// Problems sorted by name.
pub fn load_problems(dir: &Path) -> Result<Vec<Problem>, PipelineError> {
    let mut names: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
        if let Some(stem) = file.strip_suffix(".spec.json").or_else(|| file.strip_suffix(".spec.txt")) {
            names.push((stem.to_string(), path.clone()));
        }
    }
    if names.is_empty() {
        return Err(PipelineError::NoProblems(dir.display().to_string()));
    }
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(PipelineError::Io(format!("problem `{}` has both .spec.json and .spec.txt", w[0].0)));
    }
    names
        .into_iter()
        .map(|(name, path)| {
            let spec = Spec::load(&path)?;
            let testbench = read_opt(&dir.join(format!("{name}.tb.v")))?;
            let script = match read_opt(&dir.join(format!("{name}.script.json")))? {
                Some(s) => {
                    let p = dir.join(format!("{name}.script.json"));
                    Some(serde_json::from_str::<Vec<String>>(&s).map_err(|e| io(&p, e))?)
                }
                None => None,
            };
            Ok(Problem { name, spec, testbench, script })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub total: usize,
    pub solved: usize,
    pub pass_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub name: String,
    pub outcome: Outcome,
    pub iterations_used: usize,
    pub backend_calls: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub total: usize,
    pub solved: usize,
    pub pass_at_1: f64,
    /// Over solved problems only; `None` when nothing was solved.
    pub mean_iterations_to_success: Option<f64>,
    /// `None` when any run could not be priced.
    pub total_cost_usd: Option<f64>,
    pub mean_cost_usd: Option<f64>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub backend_calls: usize,
    pub per_category: BTreeMap<String, GroupStats>,
    pub per_tier: BTreeMap<String, GroupStats>,
    /// Names of unsolved problems.
    pub failures: Vec<String>,
    pub problems: Vec<ProblemResult>,
}

pub struct BenchmarkRun {
    pub summary: BenchmarkSummary,
    pub runs: Vec<(String, ModuleRun)>,
}

fn bump(map: &mut BTreeMap<String, GroupStats>, key: String, solved: bool) {
    let g = map.entry(key).or_default();
    g.total += 1;
    g.solved += solved as usize;
    g.pass_at_1 = g.solved as f64 / g.total as f64;
}

pub fn summarize(runs: &[(String, ModuleRun)]) -> BenchmarkSummary {
    let total = runs.len();
    let solved_runs: Vec<&ModuleRun> = runs.iter().map(|(_, r)| r).filter(|r| r.record.outcome == Outcome::Solved).collect();
    let solved = solved_runs.len();
    let costs: Option<Vec<f64>> = runs.iter().map(|(_, r)| r.record.cost_usd).collect();
    let total_cost = costs.map(|c| c.iter().sum::<f64>());
    let mut per_category = BTreeMap::new();
    let mut per_tier = BTreeMap::new();
    for (_, r) in runs {
        let ok = r.record.outcome == Outcome::Solved;
        bump(&mut per_category, r.record.category.to_string(), ok);
        let tier = if r.record.routing.hierarchical && r.record.hierarchy.is_some() {
            "hierarchical".to_string()
        } else {
            format!("{:?}", r.record.routing.tier).to_lowercase()
        };
        bump(&mut per_tier, tier, ok);
    }
    BenchmarkSummary {
        total,
        solved,
        pass_at_1: if total == 0 { 0.0 } else { solved as f64 / total as f64 },
        mean_iterations_to_success: (solved > 0)
            .then(|| solved_runs.iter().map(|r| r.record.iterations_used as f64).sum::<f64>() / solved as f64),
        total_cost_usd: total_cost,
        mean_cost_usd: total_cost.filter(|_| total > 0).map(|c| c / total as f64),
        tokens_in: runs.iter().map(|(_, r)| r.record.tokens_in).sum(),
        tokens_out: runs.iter().map(|(_, r)| r.record.tokens_out).sum(),
        backend_calls: runs.iter().map(|(_, r)| r.record.backend_calls).sum(),
        per_category,
        per_tier,
        failures: runs.iter().filter(|(_, r)| r.record.outcome != Outcome::Solved).map(|(n, _)| n.clone()).collect(),
        problems: runs
            .iter()
            .map(|(n, r)| ProblemResult {
                name: n.clone(),
                outcome: r.record.outcome,
                iterations_used: r.record.iterations_used,
                backend_calls: r.record.backend_calls,
                tokens_in: r.record.tokens_in,
                tokens_out: r.record.tokens_out,
                cost_usd: r.record.cost_usd,
            })
            .collect(),
    }
}

/// Runs every problem in `dir`, `config.workers` at a time. With `out_dir`
/// set, writes `records/<name>.json`, `sources/<name>.v`,
/// `traces/<name>.jsonl` and `summary.json` there.
pub fn run_benchmark(dir: &Path, res: &Resources, out_dir: Option<&Path>) -> Result<BenchmarkRun, PipelineError> {
    let problems = load_problems(dir)?;
    if let Some(out) = out_dir {
        for sub in ["records", "sources", "traces"] {
            std::fs::create_dir_all(out.join(sub)).map_err(|e| io(out, e))?;
        }
    }
    let remote = res.remote_backend();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(res.config.workers)
        .build()
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    let results: Vec<Result<(String, ModuleRun), PipelineError>> = pool.install(|| {
        problems
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mock;
                let backend: &dyn Backend = match (&res.config.backend, &remote) {
                    (BackendConfig::Remote(_), Some(r)) => r,
                    _ => {
                        mock = MockBackend::new(p.script.clone().unwrap_or_default());
                        &mock
                    }
                };
                let mut file_sink;
                let mut null = NullSink;
                let sink: &mut dyn ThoughtSink = match out_dir {
                    Some(out) => {
                        let path = out.join("traces").join(format!("{}.jsonl", p.name));
                        file_sink = JsonlSink::create(&path).map_err(|e| io(&path, e))?;
                        &mut file_sink
                    }
                    None => &mut null,
                };
                let episode = res.config.episode_offset + i as u64;
                let run = generate_module(res, &p.spec, backend, p.testbench.as_deref(), episode, sink)?;
                Ok((p.name.clone(), run))
            })
            .collect()
    });
    let runs: Vec<(String, ModuleRun)> = results.into_iter().collect::<Result<_, _>>()?;
    let summary = summarize(&runs);
    if let Some(out) = out_dir {
        for (name, run) in &runs {
            let p = out.join("records").join(format!("{name}.json"));
            let text = serde_json::to_string_pretty(&run.record).map_err(|e| io(&p, e))?;
            std::fs::write(&p, text).map_err(|e| io(&p, e))?;
            let s = out.join("sources").join(format!("{name}.v"));
            std::fs::write(&s, &run.source).map_err(|e| io(&s, e))?;
        }
        let p = out.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).map_err(|e| io(&p, e))?;
        std::fs::write(&p, text).map_err(|e| io(&p, e))?;
    }
    Ok(BenchmarkRun { summary, runs })
}
