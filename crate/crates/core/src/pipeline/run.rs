// SPDX-License-Identifier: Apache-2.0
//! One spec in, one run record and a source file out.

use super::config::{BackendConfig, PipelineConfig, Planner, ToolMode};
use super::cost::{usage_cost, ModelUsage, PriceTable, Usage};
use super::thought::{ThoughtCategory as C, ThoughtSink, Tracer};
use super::PipelineError;
use crate::agents::{
    adapt_testbench, build_prompt, generate, generate_testbench, AgentName, AgentProfiles, Backend, BackendError,
    CompletionRequest, CompletionResult, ErrorFeedback, RemoteBackend,
};
use crate::guidance::{enrich_spec, Registry};
use crate::hierarchy::{decompose, generate_hierarchical, HierarchyEnv, HierarchyOptions};
use crate::kmap::solve_spec;
use crate::knowledge::{format_context, load_index, KnowledgeBase, ReferenceModule, RetrievalQuery};
use crate::nn::TensorFile;
use crate::orchestrator::{
    compute_reward, encode_state, heuristic_policy, map_action, mpc_plan, pre_sigmoid_of, DecisionSource,
    IterationContext, OrchestrationAction, OrchestrationState, Orchestrator, OrchestratorConfig, PolicyNetwork,
    RewardBreakdown, RewardConfig, Transition, WorldModel,
};
use crate::spec::{Router, RoutingDecision, Spec, Tier};
use crate::text::{fnv1a64, is_identifier};
use crate::validation::{
    error_trend, fix_hints, CategorizedError, ErrorCategory, ErrorTrend, FixtureRunner, LintMode, ProcessRunner,
    Stage, ToolRunner, ValidationReport, Validator,
};
use crate::verilog::find_modules;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Everything a run reads. Shared read-only across parallel runs, except
/// the orchestrator's transition buffer.
pub struct Resources {
    pub config: PipelineConfig,
    pub router: Router,
    pub registry: Registry,
    pub kb: KnowledgeBase,
    pub library: Vec<ReferenceModule>,
    pub profiles: AgentProfiles,
    pub validator: Validator,
    pub orchestrator: Orchestrator,
    pub world_model: Option<Arc<WorldModel>>,
    pub reward: RewardConfig,
    pub prices: Option<PriceTable>,
    /// Real EDA tools, as opposed to the fixture runner.
    pub real_tools: bool,
}

impl Resources {
    pub fn load(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let router = match &config.router {
            Some(p) => Router::from_json(&read(p)?)?,
            None => Router::default(),
        };
        let registry = match &config.guidance_registry {
            Some(p) => Registry::load(p)?,
            None => Registry::seed(),
        };
        let kb = match &config.knowledge_base {
            Some(p) => KnowledgeBase::load(p)?,
            None => KnowledgeBase::seed(),
        };
        let library = match (&config.library_index, &config.library_root) {
            (Some(i), Some(r)) => load_index(i, r).map_err(|e| PipelineError::Io(format!("{}: {e}", i.display())))?,
            _ => Vec::new(),
        };
        let profiles = match &config.agent_profiles {
            Some(p) => AgentProfiles::load(p)?,
            None => AgentProfiles::seed(),
        };
        let (runner, real_tools): (Arc<dyn ToolRunner>, bool) = match config.tool_mode {
            ToolMode::Process => (Arc::new(ProcessRunner::new(config.tools.clone(), config.max_tool_concurrency)), true),
            ToolMode::Auto if config.tools.all_present() => {
                (Arc::new(ProcessRunner::new(config.tools.clone(), config.max_tool_concurrency)), true)
            }
            _ => (Arc::new(fixture_runner(&config)?), false),
        };
        let net = match &config.policy_checkpoint {
            Some(p) => PolicyNetwork::from_tensor_file(&TensorFile::load(p)?)?,
            None => PolicyNetwork::zeros(),
        };
        let mut oc = OrchestratorConfig { train: config.train, ..OrchestratorConfig::default() };
        oc.hyper.seed = config.seed;
        let mut orchestrator = Orchestrator::new(net, oc)?;
        if let Some(p) = &config.transition_log {
            orchestrator = orchestrator.with_transition_log(p.clone());
        }
        let world_model = match &config.world_model_checkpoint {
            Some(p) => Some(Arc::new(WorldModel::from_tensor_file(&TensorFile::load(p)?)?)),
            None => None,
        };
        let prices = config.price_table.as_deref().map(PriceTable::load).transpose()?;
        Ok(Self {
            router,
            registry,
            kb,
            library,
            profiles,
            validator: Validator::new(runner),
            orchestrator,
            world_model,
            reward: RewardConfig::default(),
            prices,
            real_tools,
            config,
        })
    }

    /// Swaps the tool runner, e.g. for a fixture set built in code.
    pub fn with_runner(mut self, runner: Arc<dyn ToolRunner>) -> Self {
        self.validator = Validator::new(runner);
        self.real_tools = false;
        self
    }

    /// The configured remote endpoint, if any.
    pub fn remote_backend(&self) -> Option<RemoteBackend> {
        match &self.config.backend {
            BackendConfig::Remote(r) => Some(RemoteBackend::new(r.clone())),
            BackendConfig::Scripted => None,
        }
    }
}

fn read(p: &std::path::Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(p).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))
}

fn fixture_runner(config: &PipelineConfig) -> Result<FixtureRunner, PipelineError> {
    match &config.fixtures {
        Some(p) => FixtureRunner::from_json(&read(p)?).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display()))),
        None => Ok(FixtureRunner::structural()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Solved,
    Exhausted,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestbenchSource {
    Provided,
    Generated,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub decision_source: DecisionSource,
    pub action: OrchestrationAction,
    pub agent: AgentName,
    pub model: String,
    pub temperature: f64,
    pub rag_k: usize,
    pub max_tokens: u32,
    pub retry_budget: u32,
    /// Extra calls after the first one failed.
    pub retries_used: u32,
    pub retrieved: Vec<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub error: Option<String>,
    pub reward: RewardBreakdown,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmoduleSummary {
    pub name: String,
    pub passed: bool,
    pub iterations: usize,
    pub loc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub order: Vec<String>,
    pub modules: Vec<SubmoduleSummary>,
    pub decomposition_attempts: usize,
    pub combined_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// FNV-1a of the spec description, hex.
    pub spec_id: String,
    pub spec_name: String,
    pub category: crate::spec::DesignCategory,
    pub routing: RoutingDecision,
    pub guidance: Vec<String>,
    pub planner: Planner,
    pub episode: u64,
    pub testbench: TestbenchSource,
    pub required_stage: Stage,
    pub iterations: Vec<IterationRecord>,
    pub hierarchy: Option<HierarchySummary>,
    pub outcome: Outcome,
    pub iterations_used: usize,
    /// Generation calls, one per iteration at most.
    pub generation_calls: usize,
    /// Retries, testbench generation, decomposition.
    pub aux_calls: usize,
    pub backend_calls: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub usage: Usage,
    pub cost_usd: Option<f64>,
    pub final_report: Option<ValidationReport>,
    pub errors: Vec<String>,
    pub thoughts: usize,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

impl RunRecord {
    /// JSON with the timestamps zeroed, for comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.started_at_ms = 0;
        r.finished_at_ms = 0;
        serde_json::to_string(&r).expect("run record serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ModuleRun {
    pub record: RunRecord,
    pub source: String,
}

/// Counts calls and tokens per model on the way through.
struct Metered<'a> {
    inner: &'a dyn Backend,
    usage: Mutex<Usage>,
}

impl<'a> Metered<'a> {
    fn new(inner: &'a dyn Backend) -> Self {
        Self { inner, usage: Mutex::new(Usage::new()) }
    }

    fn usage(&self) -> Usage {
        self.usage.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn calls(&self) -> usize {
        self.usage().values().map(|u| u.calls).sum()
    }
}

impl Backend for Metered<'_> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let r = self.inner.complete(req);
        let mut u = self.usage.lock().unwrap_or_else(|e| e.into_inner());
        let e = u.entry(req.model.clone()).or_insert_with(ModelUsage::default);
        e.calls += 1;
        if let Ok(c) = &r {
            e.tokens_in += c.input_tokens;
            e.tokens_out += c.output_tokens;
        }
        r
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Module name from the interface header, else the spec name when it is a
/// legal identifier.
pub fn module_name_of(spec: &Spec) -> String {
    if let Some(h) = &spec.interface_header {
        let src = if h.contains("endmodule") { h.clone() } else { format!("{h}\nendmodule") };
        if let Some(m) = find_modules(&src).into_iter().next() {
            return m.name;
        }
    }
    let n = spec.name.trim();
    if is_identifier(n) {
        n.to_string()
    } else {
        "top_module".to_string()
    }
}

fn header_module(spec: &Spec) -> Option<String> {
    spec.interface_header.as_ref().map(|_| module_name_of(spec))
}

fn failure_report(category: ErrorCategory, message: String) -> ValidationReport {
    ValidationReport {
        errors: vec![CategorizedError { category, message, file: None, line: None, context: Vec::new() }],
        ..ValidationReport::default()
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

struct Decided {
    action: OrchestrationAction,
    pre_sigmoid: [f64; 4],
    source: DecisionSource,
    epsilon: f64,
}

fn decide(res: &Resources, state: &OrchestrationState, episode: u64, seed: u64) -> Result<Decided, PipelineError> {
    match res.config.planner {
        Planner::Heuristic => {
            let a = heuristic_policy(state);
            Ok(Decided { action: a, pre_sigmoid: pre_sigmoid_of(&a), source: DecisionSource::Heuristic, epsilon: 0.0 })
        }
        Planner::Ppo => {
            let d = res.orchestrator.decide(state, episode, seed);
            Ok(Decided { action: d.action, pre_sigmoid: d.pre_sigmoid, source: d.source, epsilon: d.epsilon })
        }
        Planner::Mpc => {
            let model = res.world_model.as_deref().map(|m| m as &dyn crate::orchestrator::Dynamics);
            let plan = mpc_plan(state.as_slice(), model, &res.orchestrator.config().mpc, seed)?;
            Ok(Decided {
                action: plan.action,
                pre_sigmoid: pre_sigmoid_of(&plan.action),
                source: DecisionSource::Planner,
                epsilon: 0.0,
            })
        }
    }
}

fn required_stage(tb: &Option<String>) -> Stage {
    if tb.is_some() {
        Stage::SimPassed
    } else {
        Stage::SynthPassed
    }
}

/// Design under test, wrapped so the testbench's instance name resolves.
fn design_for(src: &str, tb: Option<&str>, expected_top: Option<&str>) -> String {
    match (tb, expected_top) {
        (Some(tb), Some(top)) => adapt_testbench(src, tb, top).unwrap_or_else(|_| src.to_string()),
        _ => src.to_string(),
    }
}

fn short(errors: &[CategorizedError]) -> Vec<String> {
    errors.iter().take(3).map(|e| format!("{}: {}", e.category, e.message)).collect()
}

/// Runs one spec through routing and the matching tier. `episode` indexes
/// the run for warm start and exploration; `provided_tb` is a testbench
/// that ships with the problem.
pub fn generate_module(
    res: &Resources,
    spec: &Spec,
    backend: &dyn Backend,
    provided_tb: Option<&str>,
    episode: u64,
    sink: &mut dyn ThoughtSink,
) -> Result<ModuleRun, PipelineError> {
    spec.validate()?;
    let started = Instant::now();
    let mut t = Tracer::new(sink);
    let metered = Metered::new(backend);
    let enr = enrich_spec(spec, &res.registry);
    let routing = res.router.route(spec);
    let category = spec.effective_category();
    t.note(C::Analysis, format!("category {category}, guidance fired: {}", enr.fired.len()), 0.9, enr.fired.clone());
    t.note(
        C::Analysis,
        format!("routed to {:?}{}", routing.tier, if routing.hierarchical { ", hierarchical" } else { "" }),
        0.9,
        routing.matched_trigger_keywords.iter().chain(&routing.matched_component_keywords).cloned().collect(),
    );
    let mut rec = RunRecord {
        spec_id: format!("{:016x}", fnv1a64(spec.description.as_bytes())),
        spec_name: spec.name.clone(),
        category,
        routing: routing.clone(),
        guidance: enr.fired.clone(),
        planner: res.config.planner,
        episode,
        testbench: TestbenchSource::None,
        required_stage: Stage::SynthPassed,
        iterations: Vec::new(),
        hierarchy: None,
        outcome: Outcome::Exhausted,
        iterations_used: 0,
        generation_calls: 0,
        aux_calls: 0,
        backend_calls: 0,
        tokens_in: 0,
        tokens_out: 0,
        usage: Usage::new(),
        cost_usd: None,
        final_report: None,
        errors: Vec::new(),
        thoughts: 0,
        started_at_ms: now_ms(),
        finished_at_ms: 0,
    };

    let mut source = String::new();
    let mut done = false;
    if routing.tier == Tier::Symbolic {
        done = symbolic(res, spec, provided_tb, &mut rec, &mut source, &mut t);
    }
    if !done && routing.hierarchical {
        hierarchical(res, spec, &enr.spec, provided_tb, &metered, &mut rec, &mut source, &mut t);
        done = true;
    }
    if !done {
        iterative(res, spec, &enr.spec, provided_tb, &metered, episode, started, &mut rec, &mut source, &mut t)?;
    }

    rec.usage = metered.usage();
    rec.backend_calls = metered.calls();
    rec.aux_calls = rec.backend_calls - rec.generation_calls.min(rec.backend_calls);
    rec.tokens_in = rec.usage.values().map(|u| u.tokens_in).sum();
    rec.tokens_out = rec.usage.values().map(|u| u.tokens_out).sum();
    if let Some(p) = &res.prices {
        match usage_cost(&rec.usage, p) {
            Ok(c) => rec.cost_usd = Some(c),
            Err(e) => {
                t.note(C::Error, format!("cost: {e}"), 1.0, vec![]);
                rec.errors.push(e.to_string());
            }
        }
    } else if rec.backend_calls == 0 {
        rec.cost_usd = Some(0.0);
    }
    t.note(
        C::Progress,
        format!("{:?} after {} iterations, {} backend calls", rec.outcome, rec.iterations_used, rec.backend_calls),
        if rec.outcome == Outcome::Solved { 1.0 } else { 0.5 },
        vec![rec.spec_id.clone()],
    );
    rec.thoughts = t.count();
    rec.finished_at_ms = now_ms().max(rec.started_at_ms);
    Ok(ModuleRun { record: rec, source })
}

/// Returns false when the spec has no usable grid, so the caller falls
/// through to the general loop.
fn symbolic(
    res: &Resources,
    spec: &Spec,
    provided_tb: Option<&str>,
    rec: &mut RunRecord,
    source: &mut String,
    t: &mut Tracer<'_>,
) -> bool {
    let name = module_name_of(spec);
    let sol = match solve_spec(spec, &name) {
        Ok(s) => s,
        Err(e) => {
            t.note(C::Error, format!("symbolic solver declined: {e}"), 0.8, vec![]);
            rec.errors.push(format!("symbolic: {e}"));
            return false;
        }
    };
    let labels: Vec<String> = sol.functions.iter().map(|(tf, _)| tf.output_name().to_string()).collect();
    t.note(C::Generation, format!("minimized {} output(s) into `{name}`", labels.len()), 1.0, labels);
    let tb = provided_tb.map(str::to_string);
    rec.testbench = if tb.is_some() { TestbenchSource::Provided } else { TestbenchSource::None };
    rec.required_stage = required_stage(&tb);
    *source = sol.source;
    let design = design_for(source, tb.as_deref(), Some(&name));
    let report = match res.validator.validate(&design, &[], tb.as_deref(), Some(&name), LintMode::Strict2001) {
        Ok(r) => r,
        Err(e) => {
            t.note(C::Error, format!("tool error: {e}"), 1.0, vec![]);
            rec.errors.push(e.to_string());
            rec.outcome = Outcome::Error;
            return true;
        }
    };
    t.note(C::Validation, format!("symbolic output reached {:?}", report.stage_reached), 1.0, short(&report.errors));
    rec.outcome = if report.stage_reached >= rec.required_stage { Outcome::Solved } else { Outcome::Exhausted };
    rec.final_report = Some(report);
    true
}

fn acquire_testbench(
    res: &Resources,
    spec: &Spec,
    provided: Option<&str>,
    backend: &dyn Backend,
    rec: &mut RunRecord,
    t: &mut Tracer<'_>,
) -> Option<String> {
    if let Some(tb) = provided {
        rec.testbench = TestbenchSource::Provided;
        t.note(C::Analysis, "using the provided testbench", 1.0, vec![]);
        return Some(tb.to_string());
    }
    let header = spec.interface_header.as_deref().filter(|_| res.config.generate_testbench)?;
    match generate_testbench(backend, &res.profiles, spec, header) {
        Ok(tb) => {
            rec.testbench = TestbenchSource::Generated;
            t.note(C::Generation, "testbench generated", 0.7, vec![res.profiles.get(AgentName::Testbench).model_id.clone()]);
            Some(tb)
        }
        Err(e) => {
            t.note(C::Error, format!("testbench generation failed: {e}"), 0.9, vec![]);
            rec.errors.push(format!("testbench: {e}"));
            None
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn hierarchical(
    res: &Resources,
    spec: &Spec,
    enriched: &Spec,
    provided_tb: Option<&str>,
    backend: &Metered<'_>,
    rec: &mut RunRecord,
    source: &mut String,
    t: &mut Tracer<'_>,
) {
    let tb = provided_tb.map(str::to_string);
    rec.testbench = if tb.is_some() { TestbenchSource::Provided } else { TestbenchSource::None };
    rec.required_stage = required_stage(&tb);
    let model = res.profiles.get(AgentName::Genius).model_id.clone();
    let dec = match decompose(enriched, backend, &model) {
        Ok(d) => d,
        Err(e) => {
            t.note(C::Error, format!("decomposition failed: {e}"), 1.0, vec![]);
            rec.errors.push(e.to_string());
            rec.outcome = Outcome::Error;
            return;
        }
    };
    let names: Vec<String> = dec.plan.submodules.iter().map(|s| s.name.clone()).collect();
    t.note(C::Decision, format!("decomposed into {} sub-modules, top `{}`", names.len(), dec.plan.top), 0.8, names);
    let env = HierarchyEnv {
        backend,
        profiles: &res.profiles,
        validator: &res.validator,
        options: HierarchyOptions { max_iterations: res.config.max_iterations, ..HierarchyOptions::default() },
    };
    let calls_before = backend.calls();
    let result = match generate_hierarchical(&dec.plan, &env) {
        Ok(r) => r,
        Err(e) => {
            t.note(C::Error, format!("hierarchical generation failed: {e}"), 1.0, vec![]);
            rec.errors.push(e.to_string());
            rec.outcome = Outcome::Error;
            return;
        }
    };
    rec.generation_calls = backend.calls() - calls_before;
    for m in &result.modules {
        let agents: Vec<String> = m.agents.iter().map(|a| a.to_string()).collect();
        t.note(C::Generation, format!("`{}`: {} attempt(s)", m.name, m.iterations), 0.8, agents);
        t.note(C::Validation, format!("`{}` lint {}", m.name, if m.passed { "passed" } else { "failed" }), 1.0, short(&m.errors));
    }
    t.note(
        C::Validation,
        format!("combined lint {}", if result.combined_passed { "passed" } else { "failed" }),
        1.0,
        short(&result.combined_errors),
    );
    rec.iterations_used = result.modules.iter().map(|m| m.iterations).max().unwrap_or(0);
    *source = result.combined_source.clone();
    let top = dec.plan.top.clone();
    let design = design_for(source, tb.as_deref(), header_module(spec).as_deref().or(Some(&top)));
    let report = match res.validator.validate(&design, &[], tb.as_deref(), Some(&top), LintMode::SystemVerilog) {
        Ok(r) => r,
        Err(e) => {
            t.note(C::Error, format!("tool error: {e}"), 1.0, vec![]);
            rec.errors.push(e.to_string());
            failure_report(ErrorCategory::Other, e.to_string())
        }
    };
    t.note(C::Validation, format!("combined design reached {:?}", report.stage_reached), 1.0, short(&report.errors));
    rec.outcome = if result.all_passed() && report.stage_reached >= rec.required_stage {
        Outcome::Solved
    } else {
        Outcome::Exhausted
    };
    rec.hierarchy = Some(HierarchySummary {
        order: result.order.clone(),
        modules: result
            .modules
            .iter()
            .map(|m| SubmoduleSummary { name: m.name.clone(), passed: m.passed, iterations: m.iterations, loc: m.loc })
            .collect(),
        decomposition_attempts: dec.attempts,
        combined_passed: result.combined_passed,
    });
    rec.final_report = Some(report);
}

#[allow(clippy::too_many_arguments)]
fn iterative(
    res: &Resources,
    spec: &Spec,
    enriched: &Spec,
    provided_tb: Option<&str>,
    backend: &Metered<'_>,
    episode: u64,
    started: Instant,
    rec: &mut RunRecord,
    source: &mut String,
    t: &mut Tracer<'_>,
) -> Result<(), PipelineError> {
    let cfg = &res.config;
    let tb = acquire_testbench(res, enriched, provided_tb, backend, rec, t);
    rec.required_stage = required_stage(&tb);
    let top = header_module(spec);
    let mut ctx = IterationContext::for_spec(spec, &res.router);
    let mut history: Vec<ValidationReport> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut feedback: Option<ErrorFeedback> = None;
    let id = fnv1a64(spec.description.as_bytes());

    for it in 0..cfg.max_iterations {
        let used = backend.usage().values().map(|u| u.tokens_in + u.tokens_out).sum::<u64>();
        if cfg.budget.max_tokens.is_some_and(|cap| used >= cap) {
            t.note(C::Bottleneck, format!("token budget spent ({used} tokens)"), 1.0, vec![]);
            break;
        }
        if cfg.budget.max_wall_seconds.is_some_and(|s| started.elapsed().as_secs_f64() >= s) {
            t.note(C::Bottleneck, "wall-clock budget spent", 1.0, vec![]);
            break;
        }
        ctx.iteration = it;
        let state = encode_state(&spec.description, &ctx, &history);
        let d = decide(res, &state, episode, mix(cfg.seed, id, it as u64))?;
        let gc = map_action(&d.action);
        let agent = if rec.routing.tier == Tier::WaveformSpecialist && it == 0 { AgentName::Waveform } else { gc.agent };
        t.note(
            C::Decision,
            format!("agent {agent}, focus {:?}, T={:.2}, k={}, tokens={}, retries={}", gc.focus, gc.temperature, gc.rag_k, gc.max_tokens, gc.retries),
            1.0 - d.epsilon,
            vec![format!("{:?}", d.source)],
        );

        let mut query = RetrievalQuery::new(enriched.description.clone(), gc.focus, gc.rag_k)?;
        if let Some(fb) = &feedback {
            query = query.with_error_context(fb.errors.iter().map(|e| e.message.as_str()).collect::<Vec<_>>().join("\n"));
        }
        let retrieved = match res.kb.retrieve(&res.library, &query) {
            Ok(r) => r,
            Err(e) => {
                t.note(C::Error, format!("retrieval: {e}"), 1.0, vec![]);
                Vec::new()
            }
        };
        let ids: Vec<String> = retrieved.iter().map(|r| r.id.clone()).collect();
        t.note(C::Retrieval, format!("{} reference entries", ids.len()), 0.8, ids.clone());

        let req = build_prompt(&res.profiles, agent, enriched, &format_context(&retrieved), feedback.as_ref())
            .with_temperature(gc.temperature)
            .with_max_tokens(gc.max_tokens);
        let mut retries_used = 0u32;
        let (mut tin, mut tout) = (0u64, 0u64);
        let mut gen_error: Option<String>;
        let mut candidate: Option<String> = None;
        loop {
            match generate(backend, agent, &req) {
                Ok(g) => {
                    tin += g.tokens_in;
                    tout += g.tokens_out;
                    if g.extraction_failed {
                        gen_error = Some("no Verilog module in the response".into());
                        t.note(C::Error, "no code could be extracted", 1.0, vec![req.model.clone()]);
                    } else {
                        t.note(
                            C::Generation,
                            format!("{agent} returned {} lines", g.source.lines().count()),
                            0.7,
                            vec![req.model.clone()],
                        );
                        candidate = Some(g.source);
                        gen_error = None;
                    }
                }
                Err(e) => {
                    t.note(C::Error, format!("backend: {e}"), 1.0, vec![req.model.clone()]);
                    gen_error = Some(e.to_string());
                }
            }
            if retries_used == 0 {
                rec.generation_calls += 1;
            }
            if candidate.is_some() || retries_used >= gc.retries {
                break;
            }
            retries_used += 1;
        }

        let report = match &candidate {
            None => failure_report(ErrorCategory::Other, gen_error.clone().unwrap_or_default()),
            Some(src) => {
                let design = design_for(src, tb.as_deref(), top.as_deref());
                match res.validator.validate(&design, &[], tb.as_deref(), top.as_deref(), LintMode::Strict2001) {
                    Ok(r) => r,
                    Err(e) => {
                        t.note(C::Error, format!("tool error: {e}"), 1.0, vec![]);
                        gen_error = Some(e.to_string());
                        failure_report(ErrorCategory::Other, e.to_string())
                    }
                }
            }
        };
        t.note(
            C::Validation,
            format!("reached {:?} with {} error(s)", report.stage_reached, report.errors.len()),
            1.0,
            short(&report.errors),
        );
        let reward = compute_reward(&report, history.last(), tin + tout, it == 0, ctx.category, &res.reward);
        t.note(C::Progress, format!("reward {:.1}", reward.total), 1.0, vec![]);
        if let Some(prev) = history.last() {
            if matches!(error_trend(prev, &report), ErrorTrend::Unchanged | ErrorTrend::Worsening) && report.stage_reached <= prev.stage_reached {
                t.note(C::Bottleneck, "no progress since the last iteration", 0.7, short(&report.errors));
            }
        }

        if let Some(i) = AgentName::ORCHESTRATED.iter().position(|a| *a == agent) {
            ctx.record_agent(i);
        }
        if let Some(src) = &candidate {
            ctx.source = Some(src.clone());
            *source = src.clone();
        }
        let solved = report.stage_reached >= rec.required_stage;
        history.push(report.clone());
        ctx.iteration = it + 1;
        let next_state = encode_state(&spec.description, &ctx, &history);
        let last = solved || it + 1 == cfg.max_iterations;
        transitions.push(Transition {
            state: state.0,
            action: d.action,
            pre_sigmoid: d.pre_sigmoid,
            reward,
            next_state: next_state.0,
            done: last,
            tokens: tin + tout,
        });
        rec.iterations.push(IterationRecord {
            iteration: it,
            decision_source: d.source,
            action: d.action,
            agent,
            model: req.model.clone(),
            temperature: req.temperature,
            rag_k: gc.rag_k,
            max_tokens: gc.max_tokens,
            retry_budget: gc.retries,
            retries_used,
            retrieved: ids,
            tokens_in: tin,
            tokens_out: tout,
            error: gen_error,
            reward,
            report: report.clone(),
        });
        rec.iterations_used = it + 1;
        if solved {
            rec.outcome = Outcome::Solved;
            break;
        }
        let hints = report.errors.first().map(|e| fix_hints(e.category, ctx.category)).unwrap_or_default();
        if !hints.is_empty() {
            t.note(C::Proposal, format!("{} fix hint(s) for the next attempt", hints.len()), 0.6, hints.clone());
        }
        feedback = Some(ErrorFeedback {
            errors: report.errors.clone(),
            hints,
            previous_source: candidate.clone(),
            sim_summary: report.sim.map(|s| format!("Mismatches: {} in {} samples", s.mismatches, s.samples)),
        });
    }
    rec.final_report = history.last().cloned();

    if let Some(last) = transitions.last_mut() {
        last.done = true;
    }
    if !transitions.is_empty() {
        match res.orchestrator.finish_episode(transitions) {
            Ok(Some(stats)) => t.note(C::Progress, format!("policy updated on {} samples", stats.samples), 1.0, vec![]),
            Ok(None) => {}
            Err(e) => {
                t.note(C::Error, format!("transition buffer: {e}"), 1.0, vec![]);
                rec.errors.push(e.to_string());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockBackend;
    use crate::pipeline::{MemorySink, ThoughtCategory};

    const GOOD: &str = "```verilog\nmodule inv(input a, output y);\n  assign y = ~a;\nendmodule\n```";
    // `logic` is rejected by the strict Verilog-2001 lint
    const BAD: &str = "```verilog\nmodule inv(input logic a, output logic y);\n  assign y = ~a;\nendmodule\n```";

    fn resources(planner: Planner) -> Resources {
        let cfg = PipelineConfig { planner, tool_mode: ToolMode::Fixture, ..PipelineConfig::default() };
        Resources::load(cfg).unwrap()
    }

    fn inv() -> Spec {
        Spec::parse("inv\nAn inverter: output y is the logical negation of input a.").unwrap()
    }

    fn run(res: &Resources, spec: &Spec, script: &[&str]) -> (ModuleRun, MemorySink, usize) {
        let mock = MockBackend::new(script.iter().copied());
        let mut sink = MemorySink::default();
        let r = generate_module(res, spec, &mock, None, 0, &mut sink).unwrap();
        (r, sink, mock.calls())
    }

    #[test]
    fn truth_table_is_free() {
        let res = resources(Planner::Heuristic);
        let spec = Spec::parse("maj\nImplement the truth table below.\n a b c | f\n 0 0 0 | 0\n 0 0 1 | 0\n 0 1 0 | 0\n 0 1 1 | 1\n 1 0 0 | 0\n 1 0 1 | 1\n 1 1 0 | 1\n 1 1 1 | 1\n").unwrap();
        let (r, _, calls) = run(&res, &spec, &[]);
        assert_eq!(r.record.routing.tier, Tier::Symbolic);
        assert_eq!(r.record.outcome, Outcome::Solved);
        assert_eq!((calls, r.record.backend_calls, r.record.iterations_used), (0, 0, 0));
        assert_eq!(r.record.cost_usd, Some(0.0));
        assert!(r.source.contains("module maj"));
    }

    #[test]
    fn first_attempt_success() {
        let res = resources(Planner::Heuristic);
        let (r, sink, calls) = run(&res, &inv(), &[GOOD]);
        assert_eq!(r.record.outcome, Outcome::Solved);
        assert_eq!(r.record.iterations_used, 1);
        assert_eq!(calls, 1);
        assert_eq!(r.record.final_report.as_ref().unwrap().stage_reached, Stage::SynthPassed);
        assert!(r.source.contains("assign y = ~a;"));
        let cats: Vec<_> = sink.events.iter().map(|e| e.category).collect();
        for c in [ThoughtCategory::Analysis, ThoughtCategory::Decision, ThoughtCategory::Retrieval, ThoughtCategory::Generation, ThoughtCategory::Validation, ThoughtCategory::Progress] {
            assert!(cats.contains(&c), "{c:?} missing");
        }
        assert_eq!(r.record.thoughts, sink.events.len());
    }

    #[test]
    fn fifth_attempt_success_and_exhaustion() {
        let res = resources(Planner::Heuristic);
        let (r, _, calls) = run(&res, &inv(), &[BAD, BAD, BAD, BAD, GOOD]);
        assert_eq!(r.record.outcome, Outcome::Solved);
        assert_eq!((r.record.iterations_used, calls, r.record.generation_calls), (5, 5, 5));
        assert_eq!(r.record.iterations[1].agent, AgentName::Debug);
        let (r, _, _) = run(&res, &inv(), &[BAD; 5]);
        assert_eq!(r.record.outcome, Outcome::Exhausted);
        assert_eq!(r.record.iterations_used, 5);
        assert!(r.record.iterations.iter().all(|i| i.report.stage_reached == Stage::None));
        assert!(r.record.iterations[4].reward.total < 0.0);
    }

    #[test]
    fn retries_are_counted_apart() {
        let res = resources(Planner::Heuristic);
        let (r, sink, calls) = run(&res, &inv(), &["no code here", GOOD]);
        assert_eq!(r.record.outcome, Outcome::Solved);
        assert_eq!(calls, 2);
        assert_eq!((r.record.generation_calls, r.record.aux_calls), (1, 1));
        assert_eq!(r.record.iterations[0].retries_used, 1);
        assert!(sink.events.iter().any(|e| e.category == ThoughtCategory::Error));
    }

    #[test]
    fn backend_failure_consumes_iterations() {
        let res = resources(Planner::Heuristic);
        let (r, _, _) = run(&res, &inv(), &[]);
        assert_eq!(r.record.outcome, Outcome::Exhausted);
        assert_eq!(r.record.iterations_used, 5);
        assert_eq!(r.record.generation_calls, 5);
        assert!(r.record.iterations.iter().all(|i| i.error.as_deref().is_some_and(|e| e.contains("exhausted"))));
    }

    #[test]
    fn token_budget_stops_early() {
        let mut cfg = PipelineConfig { planner: Planner::Heuristic, tool_mode: ToolMode::Fixture, ..PipelineConfig::default() };
        cfg.budget.max_tokens = Some(1);
        let res = Resources::load(cfg).unwrap();
        let (r, _, calls) = run(&res, &inv(), &[BAD, BAD, GOOD]);
        assert_eq!((r.record.iterations_used, calls), (1, 1));
        assert_eq!(r.record.outcome, Outcome::Exhausted);
    }

    #[test]
    fn seeded_runs_match() {
        let res = resources(Planner::Ppo);
        let mock = || MockBackend::new([BAD, BAD, GOOD]);
        let go = |ep| {
            let m = mock();
            generate_module(&res, &inv(), &m, None, ep, &mut MemorySink::default()).unwrap().record.canonical_json()
        };
        assert_eq!(go(25), go(25));
        assert_eq!(go(3), go(3));
    }

    #[test]
    fn priced_run() {
        let res = resources(Planner::Heuristic);
        let mut table = PriceTable::default();
        let (r, _, _) = run(&res, &inv(), &[GOOD]);
        assert!(crate::pipeline::estimate_cost(&r.record, &table).is_err());
        for m in r.record.usage.keys() {
            table.insert(m.clone(), 1e-6, 2e-6);
        }
        let want = r.record.tokens_in as f64 * 1e-6 + r.record.tokens_out as f64 * 2e-6;
        assert!((crate::pipeline::estimate_cost(&r.record, &table).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn provided_testbench_requires_simulation() {
        let res = resources(Planner::Heuristic);
        let spec = inv().with_interface_header("module inv(input a, output y);");
        let tb = "module tb;\n  reg a; wire y;\n  inv dut(.a(a), .y(y));\n  initial $finish;\nendmodule\n";
        let mock = MockBackend::new([GOOD]);
        let r = generate_module(&res, &spec, &mock, Some(tb), 0, &mut MemorySink::default()).unwrap();
        assert_eq!(r.record.testbench, TestbenchSource::Provided);
        assert_eq!(r.record.required_stage, Stage::SimPassed);
        // the structural runner reports no pass marker
        assert_eq!(r.record.outcome, Outcome::Exhausted);
    }
}
