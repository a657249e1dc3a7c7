// SPDX-License-Identifier: Apache-2.0
//! Testbench generation, lexical compliance checks and the top-module
//! adapter.

use super::{extract_code, AgentName, AgentProfiles, Backend, BackendError, CompletionRequest, DEFAULT_MAX_TOKENS};
use crate::spec::Spec;
use crate::verilog::{self, Direction, ModuleSpan, Port};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::LazyLock;
use thiserror::Error;

pub const MAX_TESTBENCH_ATTEMPTS: usize = 3;
const MIN_SCENARIOS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplianceIssue {
    SystemVerilogKeyword(String),
    /// Clocked design but no `#5` toggle of the clock.
    NoClockToggle(String),
    /// Reset port never driven.
    NoResetDrive(String),
    TooFewScenarios(usize),
    NoStatusMarker,
    NoInstance(String),
}

impl std::fmt::Display for ComplianceIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SystemVerilogKeyword(k) => write!(f, "uses SystemVerilog keyword `{k}`; write Verilog-2001 only"),
            Self::NoClockToggle(c) => write!(f, "clock `{c}` must toggle every #5 (10ns period)"),
            Self::NoResetDrive(r) => write!(f, "reset `{r}` is never driven; add a reset sequence"),
            Self::TooFewScenarios(n) => write!(f, "found {n} labelled scenarios, need at least {MIN_SCENARIOS}"),
            Self::NoStatusMarker => f.write_str("no recognized status line ($display of Mismatches or tests passed)"),
            Self::NoInstance(m) => write!(f, "does not instantiate `{m}`"),
        }
    }
}

static SCENARIO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:scenario|test(?:\s*case)?)\s*[#:]?\s*(\d+)").unwrap());
static STATUS_FMT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Mismatches:\s*%0?d\s+in\s+%0?d\s+samples|%0?d\s*/\s*%0?d\s+tests\s+passed|STATUS:\s*(?:PASS|FAIL)").unwrap()
});

fn is_clock(name: &str) -> bool {
    matches!(name.to_ascii_lowercase().as_str(), "clk" | "clock" | "clk_i" | "i_clk" | "pclk" | "aclk" | "hclk")
}

fn is_reset(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    n == "reset" || n == "areset" || n.starts_with("rst") || n.ends_with("rst") || n.ends_with("rst_n") || n.contains("reset")
}

/// Lexical checks on a generated testbench against the module it drives.
pub fn check_testbench(tb: &str, module: &str, ports: &[Port]) -> Vec<ComplianceIssue> {
    let mut issues: Vec<ComplianceIssue> = verilog::systemverilog_keywords_used(tb)
        .into_iter()
        .map(|k| ComplianceIssue::SystemVerilogKeyword(k.to_string()))
        .collect();
    let clean = verilog::strip_comments(tb);
    if !Regex::new(&format!(r"\b{}\b", regex::escape(module))).unwrap().is_match(&clean) {
        issues.push(ComplianceIssue::NoInstance(module.to_string()));
    }
    for p in ports.iter().filter(|p| p.direction == Direction::Input) {
        let name = regex::escape(&p.name);
        if is_clock(&p.name) {
            let toggle = Regex::new(&format!(r"#\s*5(?:\.0+)?\s*(?:\w+\s*=\s*)?(?:~|!)\s*\w+|#\s*5(?:\.0+)?\s*\w+\s*=\s*(?:~|!)\s*{name}")).unwrap();
            if !toggle.is_match(&clean) {
                issues.push(ComplianceIssue::NoClockToggle(p.name.clone()));
            }
        } else if is_reset(&p.name) {
            let drive = Regex::new(&format!(r"\b\w*{name}\w*\s*<?=")).unwrap();
            if !drive.is_match(&clean) {
                issues.push(ComplianceIssue::NoResetDrive(p.name.clone()));
            }
        }
    }
    let labels: BTreeSet<&str> = SCENARIO.captures_iter(tb).map(|c| c.get(1).unwrap().as_str()).collect();
    if labels.len() < MIN_SCENARIOS {
        issues.push(ComplianceIssue::TooFewScenarios(labels.len()));
    }
    if !STATUS_FMT.is_match(tb) {
        issues.push(ComplianceIssue::NoStatusMarker);
    }
    issues
}

#[derive(Debug, Error)]
pub enum TestbenchError {
    #[error("interface header has no module")]
    NoHeader,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no testbench code in response")]
    Extraction,
    #[error("testbench still non-compliant after {attempts} attempts: {issues:?}")]
    NonCompliant { attempts: usize, issues: Vec<ComplianceIssue> },
}

/// Asks the testbench agent for a testbench, re-requesting with the list of
/// problems while it fails the lexical checks.
pub fn generate_testbench(
    backend: &dyn Backend,
    profiles: &AgentProfiles,
    spec: &Spec,
    module_header: &str,
) -> Result<String, TestbenchError> {
    let src = if module_header.contains("endmodule") { module_header.to_string() } else { format!("{module_header}\nendmodule") };
    let m = verilog::find_modules(&src).into_iter().next().ok_or(TestbenchError::NoHeader)?;
    let profile = profiles.get(AgentName::Testbench);
    let base = format!(
        "=== SPECIFICATION ===\n{}\n\n=== DESIGN UNDER TEST ===\n{}\n\n=== TASK ===\nWrite a testbench module named tb that instantiates {} as dut.",
        spec.description.trim_end(),
        module_header.trim(),
        m.name
    );
    let mut user = base.clone();
    let mut issues = Vec::new();
    for _ in 0..MAX_TESTBENCH_ATTEMPTS {
        let req = CompletionRequest {
            model: profile.model_id.clone(),
            system: profiles.system_prompt(AgentName::Testbench),
            user: user.clone(),
            temperature: profile.default_temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
        };
        let reply = backend.complete(&req)?;
        let tb = extract_code(&reply.text).map_err(|_| TestbenchError::Extraction)?;
        issues = check_testbench(&tb, &m.name, &m.ports);
        if issues.is_empty() {
            return Ok(tb);
        }
        let list: Vec<String> = issues.iter().map(|i| format!("- {i}")).collect();
        user = format!("{base}\n\n=== COMPLIANCE PROBLEMS IN PREVIOUS TESTBENCH ===\n{}", list.join("\n"));
    }
    Err(TestbenchError::NonCompliant { attempts: MAX_TESTBENCH_ATTEMPTS, issues })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdaptError {
    #[error("no module definition in generated source")]
    NoModule,
    #[error("ambiguous top module among {0:?}")]
    AmbiguousTop(Vec<String>),
    #[error("port mismatch: missing {missing:?}, extra {extra:?}")]
    PortMismatch { missing: Vec<String>, extra: Vec<String> },
}

/// Modules that no other module in `src` instantiates.
pub fn top_modules(src: &str) -> Vec<ModuleSpan> {
    let mods = verilog::find_modules(src);
    let used: BTreeSet<String> = mods.iter().flat_map(|m| verilog::instantiated_modules(src, m)).collect();
    mods.into_iter().filter(|m| !used.contains(&m.name)).collect()
}

fn matching_paren(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Port names the testbench connects by name on its `top` instance, or
/// `None` when there is no such instance or it connects positionally.
fn connected_ports(tb: &str, top: &str) -> Option<BTreeSet<String>> {
    let clean = verilog::strip_comments(tb);
    let inst = Regex::new(&format!(r"\b{}\s*(?:#\s*\()?", regex::escape(top))).unwrap();
    let m = inst.find_iter(&clean).find(|m| !clean[..m.start()].trim_end().ends_with("module"))?;
    let mut at = m.end();
    if clean[m.start()..m.end()].contains('#') {
        at = matching_paren(&clean, at - 1)? + 1;
    }
    let open = at + clean[at..].find('(')?;
    let close = matching_paren(&clean, open)?;
    let body = &clean[open + 1..close];
    let named = Regex::new(r"\.\s*([A-Za-z_]\w*)\s*\(").unwrap();
    let set: BTreeSet<String> = named.captures_iter(body).map(|c| c[1].to_string()).collect();
    (!set.is_empty()).then_some(set)
}

fn substitute_params(range: &str, params: &[(String, String)]) -> String {
    let mut out = range.to_string();
    for (name, value) in params {
        let re = Regex::new(&format!(r"\b{}\b", regex::escape(name))).unwrap();
        out = re.replace_all(&out, format!("({value})").as_str()).into_owned();
    }
    out
}

/// Wraps the generated top module in a module named `expected_top` that
/// forwards every port one-to-one. Ports the testbench connects by name must
/// all exist on the generated module and vice versa. Parameter overrides are
/// not forwarded; ranges use the parameter defaults.
pub fn adapt_testbench(module_source: &str, testbench_source: &str, expected_top: &str) -> Result<String, AdaptError> {
    let tops = top_modules(module_source);
    let top = match tops.as_slice() {
        [] => return Err(AdaptError::NoModule),
        [t] => t,
        many => {
            if let Some(t) = many.iter().find(|m| m.name == expected_top) {
                t
            } else {
                return Err(AdaptError::AmbiguousTop(many.iter().map(|m| m.name.clone()).collect()));
            }
        }
    };
    let have: BTreeSet<String> = top.ports.iter().map(|p| p.name.clone()).collect();
    if let Some(want) = connected_ports(testbench_source, expected_top) {
        let missing: Vec<String> = want.difference(&have).cloned().collect();
        let extra: Vec<String> = have.difference(&want).cloned().collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(AdaptError::PortMismatch { missing, extra });
        }
    }
    if top.name == expected_top {
        return Ok(module_source.to_string());
    }
    let decls: Vec<String> = top
        .ports
        .iter()
        .map(|p| {
            let mut s = String::from(p.direction.keyword());
            if p.signed {
                s.push_str(" signed");
            }
            if let Some(r) = &p.range {
                s.push(' ');
                s.push_str(&substitute_params(r, &top.parameters));
            }
            format!("    {s} {}", p.name)
        })
        .collect();
    let conns: Vec<String> = top.ports.iter().map(|p| format!("        .{0}({0})", p.name)).collect();
    Ok(format!(
        "{}\n\nmodule {expected_top}(\n{}\n);\n    {} u_{}(\n{}\n    );\nendmodule\n",
        module_source.trim_end(),
        decls.join(",\n"),
        top.name,
        top.name,
        conns.join(",\n")
    ))
}
