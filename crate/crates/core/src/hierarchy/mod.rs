// SPDX-License-Identifier: Apache-2.0
//! Decomposition of large designs into sub-modules generated leaves first.

mod generate;
mod source;

pub use generate::{generate_hierarchical, HierarchicalResult, HierarchyEnv, HierarchyOptions, SubmoduleResult};
pub use source::{dedupe_modules, definition_counts, extract_header};

use crate::agents::{Backend, BackendError, CompletionRequest};
use crate::spec::Spec;
use crate::text::is_identifier;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const MIN_SUBMODULES: usize = 4;
pub const MAX_SUBMODULES: usize = 8;
pub const DECOMPOSE_TEMPERATURE: f64 = 0.2;
/// One re-prompt after a malformed plan.
pub const DECOMPOSE_ATTEMPTS: usize = 2;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("decomposition malformed after {attempts} attempts: {reason}")]
    DecompositionMalformed { attempts: usize, reason: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot parse module source: {0}")]
    ParseFailure(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortDir {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub dir: PortDir,
    #[serde(default = "one")]
    pub width: u32,
}

fn one() -> u32 {
    1
}

impl PortDecl {
    pub fn declaration(&self) -> String {
        let dir = match self.dir {
            PortDir::Input => "input",
            PortDir::Output => "output",
            PortDir::Inout => "inout",
        };
        if self.width > 1 {
            format!("{dir} [{}:0] {}", self.width - 1, self.name)
        } else {
            format!("{dir} {}", self.name)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmoduleSpec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub interface: Vec<PortDecl>,
    #[serde(default)]
    pub dependencies: Vec<String>,
}

impl SubmoduleSpec {
    /// ANSI header built from the declared interface.
    pub fn header(&self) -> String {
        let ports: Vec<String> = self.interface.iter().map(|p| format!("    {}", p.declaration())).collect();
        if ports.is_empty() {
            format!("module {}();", self.name)
        } else {
            format!("module {} (\n{}\n);", self.name, ports.join(",\n"))
        }
    }
}

/// Validated plan. Build with [`DecompositionPlan::new`] or
/// [`parse_plan`]; JSON shape:
/// `{"submodules": [{"name", "description", "interface": [{"name", "dir", "width"}], "dependencies": []}], "top": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionPlan {
    pub submodules: Vec<SubmoduleSpec>,
    pub top: String,
}

#[derive(Deserialize)]
struct RawPlan {
    submodules: Vec<SubmoduleSpec>,
    #[serde(default)]
    top: Option<String>,
}

fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != *cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn find_cycle(subs: &[SubmoduleSpec]) -> Option<Vec<String>> {
    let deps: BTreeMap<&str, &[String]> = subs.iter().map(|s| (s.name.as_str(), s.dependencies.as_slice())).collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark: BTreeMap<&str, u8> = BTreeMap::new();
    fn visit<'a>(
        n: &'a str,
        deps: &BTreeMap<&'a str, &'a [String]>,
        mark: &mut BTreeMap<&'a str, u8>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match mark.get(n) {
            Some(2) => return None,
            Some(1) => {
                let at = stack.iter().position(|s| *s == n).unwrap_or(0);
                let mut cyc: Vec<String> = stack[at..].iter().map(|s| s.to_string()).collect();
                cyc.push(n.to_string());
                return Some(cyc);
            }
            _ => {}
        }
        mark.insert(n, 1);
        stack.push(n);
        for d in deps.get(n).copied().unwrap_or_default() {
            if let Some(c) = visit(d, deps, mark, stack) {
                return Some(c);
            }
        }
        stack.pop();
        mark.insert(n, 2);
        None
    }
    for s in subs {
        let mut stack = Vec::new();
        if let Some(c) = visit(&s.name, &deps, &mut mark, &mut stack) {
            return Some(c);
        }
    }
    None
}

impl DecompositionPlan {
    /// Checks names, cardinality, dependency references and acyclicity. With
    /// no `top`, picks the unique module nothing depends on, or among
    /// several the one closest in spelling to `spec_name`.
    pub fn new(submodules: Vec<SubmoduleSpec>, top: Option<String>, spec_name: &str) -> Result<Self, HierarchyError> {
        let n = submodules.len();
        if !(MIN_SUBMODULES..=MAX_SUBMODULES).contains(&n) {
            return Err(HierarchyError::InvalidPlan(format!("{n} sub-modules, expected {MIN_SUBMODULES} to {MAX_SUBMODULES}")));
        }
        let mut names = BTreeSet::new();
        for s in &submodules {
            if !is_identifier(&s.name) {
                return Err(HierarchyError::InvalidPlan(format!("`{}` is not a valid identifier", s.name)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(HierarchyError::InvalidPlan(format!("duplicate sub-module `{}`", s.name)));
            }
        }
        for s in &submodules {
            for d in &s.dependencies {
                if !names.contains(d.as_str()) {
                    return Err(HierarchyError::InvalidPlan(format!("`{}` depends on unknown `{d}`", s.name)));
                }
            }
        }
        if let Some(c) = find_cycle(&submodules) {
            return Err(HierarchyError::Cycle(c));
        }
        let depended: BTreeSet<&str> = submodules.iter().flat_map(|s| s.dependencies.iter().map(String::as_str)).collect();
        let top = match top {
            Some(t) => {
                if !names.contains(t.as_str()) {
                    return Err(HierarchyError::InvalidPlan(format!("top `{t}` is not a sub-module")));
                }
                if depended.contains(t.as_str()) {
                    return Err(HierarchyError::InvalidPlan(format!("top `{t}` is a dependency of another sub-module")));
                }
                t
            }
            None => names
                .iter()
                .filter(|n| !depended.contains(*n))
                .min_by_key(|n| (levenshtein(&n.to_ascii_lowercase(), &spec_name.to_ascii_lowercase()), n.to_string()))
                .map(|n| n.to_string())
                .expect("an acyclic plan has a module nothing depends on"),
        };
        Ok(Self { submodules, top })
    }

    pub fn get(&self, name: &str) -> Option<&SubmoduleSpec> {
        self.submodules.iter().find(|s| s.name == name)
    }
}

/// Pulls the JSON object out of a reply (fenced or bare) and validates it.
pub fn parse_plan(response: &str, spec_name: &str) -> Result<DecompositionPlan, HierarchyError> {
    let body = match response.find("```") {
        Some(i) => {
            let rest = &response[i + 3..];
            let rest = rest.find('\n').map_or(rest, |nl| &rest[nl + 1..]);
            rest.find("```").map_or(rest, |e| &rest[..e])
        }
        None => response,
    };
    let (s, e) = match (body.find('{'), body.rfind('}')) {
        (Some(s), Some(e)) if e > s => (s, e),
        _ => return Err(HierarchyError::InvalidPlan("no JSON object in reply".into())),
    };
    let raw: RawPlan =
        serde_json::from_str(&body[s..=e]).map_err(|err| HierarchyError::InvalidPlan(format!("bad JSON: {err}")))?;
    DecompositionPlan::new(raw.submodules, raw.top, spec_name)
}

/// Dependencies before dependents, ties by name, the top module last.
pub fn topo_order(plan: &DecompositionPlan) -> Result<Vec<String>, HierarchyError> {
    let mut remaining: BTreeMap<&str, BTreeSet<&str>> = plan
        .submodules
        .iter()
        .map(|s| (s.name.as_str(), s.dependencies.iter().map(String::as_str).collect()))
        .collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let ready = remaining
            .iter()
            .filter(|(n, d)| d.is_empty() && (**n != plan.top || remaining.len() == 1))
            .map(|(n, _)| *n)
            .next();
        let Some(n) = ready else {
            let subs: Vec<SubmoduleSpec> =
                plan.submodules.iter().filter(|s| remaining.contains_key(s.name.as_str())).cloned().collect();
            return Err(HierarchyError::Cycle(find_cycle(&subs).unwrap_or_default()));
        };
        remaining.remove(n);
        for d in remaining.values_mut() {
            d.remove(n);
        }
        order.push(n.to_string());
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub plan: DecompositionPlan,
    pub attempts: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

const PLANNER_SYSTEM: &str = "You are a hardware architect splitting a design into synthesizable Verilog sub-modules. Reply with one JSON object and nothing else.";

fn decompose_prompt(spec: &Spec) -> String {
    format!(
        "=== SPECIFICATION ===\n{}\n\n=== TASK ===\nSplit the design into {MIN_SUBMODULES} to {MAX_SUBMODULES} sub-modules. \
         Reply with JSON of the form\n\
         {{\"submodules\": [{{\"name\": \"...\", \"description\": \"...\", \
         \"interface\": [{{\"name\": \"clk\", \"dir\": \"input\", \"width\": 1}}], \"dependencies\": [\"...\"]}}], \"top\": \"...\"}}\n\
         Dependencies name other sub-modules that a module instantiates. The top module instantiates the others and nothing depends on it.\n",
        spec.description.trim_end()
    )
}

/// Asks `backend` for a plan at low temperature; one re-prompt quoting the
/// problem when the first reply is malformed.
pub fn decompose(spec: &Spec, backend: &dyn Backend, model: &str) -> Result<Decomposition, HierarchyError> {
    let mut req = CompletionRequest {
        model: model.to_string(),
        system: PLANNER_SYSTEM.to_string(),
        user: decompose_prompt(spec),
        temperature: DECOMPOSE_TEMPERATURE,
        max_tokens: 2048,
    };
    let (mut tin, mut tout) = (0, 0);
    let mut last = String::new();
    for attempt in 1..=DECOMPOSE_ATTEMPTS {
        let r = backend.complete(&req)?;
        tin += r.input_tokens;
        tout += r.output_tokens;
        match parse_plan(&r.text, &spec.name) {
            Ok(plan) => return Ok(Decomposition { plan, attempts: attempt, tokens_in: tin, tokens_out: tout }),
            Err(HierarchyError::Cycle(c)) if attempt == DECOMPOSE_ATTEMPTS => return Err(HierarchyError::Cycle(c)),
            Err(e) => {
                last = e.to_string();
                req.user = format!("{}\n=== PROBLEM WITH PREVIOUS REPLY ===\n{last}\n", decompose_prompt(spec));
            }
        }
    }
    Err(HierarchyError::DecompositionMalformed { attempts: DECOMPOSE_ATTEMPTS, reason: last })
}
