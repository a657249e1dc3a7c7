// SPDX-License-Identifier: Apache-2.0
//! Per-sub-module generation with header injection and combined lint.

use super::{dedupe_modules, extract_header, topo_order, DecompositionPlan, HierarchyError};
use crate::agents::{build_prompt, generate, AgentName, AgentProfiles, Backend, ErrorFeedback};
use crate::spec::Spec;
use crate::validation::{fix_hints, CategorizedError, ErrorCategory, LintMode, Validator};
use crate::verilog::find_modules;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Generation attempts per sub-module.
    pub max_iterations: usize,
    pub lint_mode: LintMode,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self { max_iterations: 5, lint_mode: LintMode::SystemVerilog }
    }
}

pub struct HierarchyEnv<'a> {
    pub backend: &'a dyn Backend,
    pub profiles: &'a AgentProfiles,
    pub validator: &'a Validator,
    pub options: HierarchyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmoduleResult {
    pub name: String,
    pub passed: bool,
    pub iterations: usize,
    /// Non-blank source lines of the kept definition.
    pub loc: usize,
    pub source: String,
    pub errors: Vec<CategorizedError>,
    pub agents: Vec<AgentName>,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalResult {
    pub order: Vec<String>,
    pub modules: Vec<SubmoduleResult>,
    pub combined_source: String,
    pub combined_passed: bool,
    pub combined_errors: Vec<CategorizedError>,
}

impl HierarchicalResult {
    pub fn passed_modules(&self) -> usize {
        self.modules.iter().filter(|m| m.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.combined_passed && self.passed_modules() == self.modules.len()
    }

    pub fn backend_calls(&self) -> usize {
        self.modules.iter().map(|m| m.iterations).sum()
    }

    pub fn total_loc(&self) -> usize {
        self.modules.iter().map(|m| m.loc).sum()
    }
}

/// Keeps only the definitions in `src` that are not already generated,
/// so dependency copies the model repeats do not shadow the real ones.
fn own_definitions(src: &str, generated: &[String]) -> String {
    let mods = find_modules(src);
    let kept: Vec<&str> = mods.iter().filter(|m| !generated.contains(&m.name)).map(|m| m.text(src)).collect();
    let mut s = kept.join("\n\n");
    s.push('\n');
    s
}

fn sub_spec(plan: &DecompositionPlan, name: &str, headers: &[(String, String)]) -> Result<Spec, HierarchyError> {
    let s = plan.get(name).ok_or_else(|| HierarchyError::InvalidPlan(format!("`{name}` missing from plan")))?;
    let mut desc = format!("Implement module `{}`. {}", s.name, s.description.trim());
    if !s.dependencies.is_empty() {
        desc.push_str(&format!("\nInstantiate these existing modules as needed: {}.", s.dependencies.join(", ")));
    }
    desc.push_str("\nSystemVerilog constructs are allowed. Do not redefine existing modules.");
    let mut spec = Spec::new(s.name.clone(), desc).map_err(|e| HierarchyError::InvalidPlan(e.to_string()))?;
    spec.interface_header = Some(s.header());
    if !headers.is_empty() {
        let ctx: Vec<&str> = headers.iter().map(|(_, h)| h.as_str()).collect();
        spec.context_rtl = Some(ctx.join("\n"));
    }
    Ok(spec)
}

/// Generates every sub-module in dependency order. Each prompt carries the
/// headers of the modules generated so far; each module is linted on its
/// own against those headers. A module that never passes is recorded and
/// the run continues. The concatenation is deduplicated and linted as a
/// whole at the end.
pub fn generate_hierarchical(plan: &DecompositionPlan, env: &HierarchyEnv<'_>) -> Result<HierarchicalResult, HierarchyError> {
    let order = topo_order(plan)?;
    let mut headers: Vec<(String, String)> = Vec::new();
    let mut generated: Vec<String> = Vec::new();
    let mut results = Vec::new();
    for name in &order {
        let spec = sub_spec(plan, name, &headers)?;
        let mut r = SubmoduleResult {
            name: name.clone(),
            passed: false,
            iterations: 0,
            loc: 0,
            source: String::new(),
            errors: Vec::new(),
            agents: Vec::new(),
            tokens_in: 0,
            tokens_out: 0,
        };
        let mut feedback: Option<ErrorFeedback> = None;
        for it in 0..env.options.max_iterations.max(1) {
            let agent = if it == 0 { AgentName::Genius } else { AgentName::Debug };
            let req = build_prompt(env.profiles, agent, &spec, "", feedback.as_ref());
            r.iterations += 1;
            r.agents.push(agent);
            let gen = match generate(env.backend, agent, &req) {
                Ok(g) => g,
                Err(e) => {
                    r.errors = vec![CategorizedError::new(ErrorCategory::Other, format!("backend: {e}"))];
                    continue;
                }
            };
            r.tokens_in += gen.tokens_in;
            r.tokens_out += gen.tokens_out;
            let src = own_definitions(&gen.source, &generated);
            let defined: Vec<String> = find_modules(&src).into_iter().map(|m| m.name).collect();
            r.source = src.clone();
            let errors = if !defined.contains(name) {
                vec![CategorizedError::new(ErrorCategory::Syntax, format!("module `{name}` not found in reply"))]
            } else {
                let deps: Vec<&str> =
                    headers.iter().filter(|(n, _)| !defined.contains(n)).map(|(_, h)| h.as_str()).collect();
                match env.validator.lint(&src, &deps, env.options.lint_mode) {
                    Ok(l) if l.passed => {
                        r.passed = true;
                        r.errors = l.errors;
                        break;
                    }
                    Ok(l) => l.errors,
                    Err(e) => vec![CategorizedError::new(ErrorCategory::Other, format!("lint: {e}"))],
                }
            };
            let hints = errors.iter().flat_map(|e| fix_hints(e.category, spec.category)).collect::<Vec<_>>();
            feedback = Some(ErrorFeedback { errors: errors.clone(), hints, previous_source: Some(src), sim_summary: None });
            r.errors = errors;
        }
        r.loc = r.source.lines().filter(|l| !l.trim().is_empty()).count();
        let header = extract_header(&r.source)
            .ok()
            .filter(|h| find_modules(h).iter().any(|m| &m.name == name))
            .unwrap_or_else(|| format!("{}\nendmodule\n", plan.get(name).map(|s| s.header()).unwrap_or_default()));
        for m in find_modules(&r.source) {
            generated.push(m.name);
        }
        if !generated.contains(name) {
            generated.push(name.clone());
        }
        headers.push((name.clone(), header));
        results.push(r);
    }
    let concat: Vec<&str> = results.iter().map(|r| r.source.as_str()).filter(|s| !s.trim().is_empty()).collect();
    let combined_source = dedupe_modules(&concat.join("\n"));
    let (combined_passed, combined_errors) = match env.validator.lint(&combined_source, &[], env.options.lint_mode) {
        Ok(l) => (l.passed, l.errors),
        Err(e) => (false, vec![CategorizedError::new(ErrorCategory::Other, format!("lint: {e}"))]),
    };
    Ok(HierarchicalResult { order, modules: results, combined_source, combined_passed, combined_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockBackend;
    use crate::hierarchy::{parse_plan, tests::soc_plan_json};
    use crate::validation::FixtureRunner;
    use std::sync::Arc;

    fn body(name: &str, deps: &[&str]) -> String {
        let insts: String = deps.iter().map(|d| format!("  {d} u_{d}(.clk(clk), .y());\n")).collect();
        format!("```verilog\nmodule {name} (\n    input clk,\n    output [7:0] y\n);\n{insts}  assign y = 8'd0;\nendmodule\n```")
    }

    fn script(order: &[&str]) -> Vec<String> {
        let plan = parse_plan(&soc_plan_json(), "soc").unwrap();
        order.iter().map(|n| body(n, &plan.get(n).unwrap().dependencies.iter().map(String::as_str).collect::<Vec<_>>())).collect()
    }

    const ORDER: [&str; 7] = ["alu", "decoder", "icache", "regfile", "pipeline", "uart", "soc_top"];

    #[test]
    fn seven_correct_modules() {
        let plan = parse_plan(&soc_plan_json(), "soc").unwrap();
        let backend = MockBackend::new(script(&ORDER));
        let validator = Validator::new(Arc::new(FixtureRunner::structural()));
        let profiles = AgentProfiles::seed();
        let env = HierarchyEnv { backend: &backend, profiles: &profiles, validator: &validator, options: HierarchyOptions::default() };
        let r = generate_hierarchical(&plan, &env).unwrap();
        assert_eq!(r.order, ORDER);
        assert_eq!(r.passed_modules(), 7);
        assert!(r.combined_passed, "{:?}", r.combined_errors);
        assert!(super::super::definition_counts(&r.combined_source).values().all(|c| *c == 1));
        // pipeline's prompt carries alu's header but soc_top's does not appear yet
        let reqs = backend.requests();
        assert!(reqs[4].user.contains("module alu"));
        assert!(!reqs[4].user.contains("module soc_top ("));
    }

    #[test]
    fn failing_module_is_isolated() {
        let plan = parse_plan(&soc_plan_json(), "soc").unwrap();
        let mut s = script(&ORDER);
        let bad = "module uart(input clk, output [7:0] y);\n  always @(posedge clk) begin\nendmodule".to_string();
        s.splice(5..6, std::iter::repeat_n(bad, 5));
        let backend = MockBackend::new(s);
        let validator = Validator::new(Arc::new(FixtureRunner::structural()));
        let profiles = AgentProfiles::seed();
        let env = HierarchyEnv { backend: &backend, profiles: &profiles, validator: &validator, options: HierarchyOptions::default() };
        let r = generate_hierarchical(&plan, &env).unwrap();
        let uart = r.modules.iter().find(|m| m.name == "uart").unwrap();
        assert!(!uart.passed);
        assert_eq!(uart.iterations, 5);
        assert_eq!(uart.agents[1], AgentName::Debug);
        assert_eq!(r.passed_modules(), 6);
        assert!(!r.combined_passed);
    }

    #[test]
    fn instantiating_a_later_module_is_caught() {
        let plan = parse_plan(&soc_plan_json(), "soc").unwrap();
        let mut s = script(&ORDER);
        // alu instantiates uart, which has not been generated yet
        s[0] = body("alu", &["uart"]);
        s.splice(1..1, std::iter::repeat_n(body("alu", &["uart"]), 4));
        let backend = MockBackend::new(s);
        let validator = Validator::new(Arc::new(FixtureRunner::structural()));
        let profiles = AgentProfiles::seed();
        let env = HierarchyEnv { backend: &backend, profiles: &profiles, validator: &validator, options: HierarchyOptions::default() };
        let r = generate_hierarchical(&plan, &env).unwrap();
        let alu = &r.modules[0];
        assert!(!alu.passed);
        assert!(alu.errors.iter().any(|e| e.category == ErrorCategory::UndeclaredSignal), "{:?}", alu.errors);
    }
}
