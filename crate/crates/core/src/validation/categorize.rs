// SPDX-License-Identifier: Apache-2.0
//! Maps compiler, linter and synthesizer messages to error categories.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::LazyLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    Syntax,
    PortMismatch,
    WidthMismatch,
    UndeclaredSignal,
    InferredLatch,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::Syntax,
        ErrorCategory::PortMismatch,
        ErrorCategory::WidthMismatch,
        ErrorCategory::UndeclaredSignal,
        ErrorCategory::InferredLatch,
        ErrorCategory::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Syntax => "syntax",
            ErrorCategory::PortMismatch => "port_mismatch",
            ErrorCategory::WidthMismatch => "width_mismatch",
            ErrorCategory::UndeclaredSignal => "undeclared_signal",
            ErrorCategory::InferredLatch => "inferred_latch",
            ErrorCategory::Other => "other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizedError {
    pub category: ErrorCategory,
    pub message: String,
    pub file: Option<String>,
    pub line: Option<u32>,
    /// Up to five source lines centred on `line`, each prefixed with its
    /// line number.
    #[serde(default)]
    pub context: Vec<String>,
}

impl CategorizedError {
    pub fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        Self { category, message: message.into(), file: None, line: None, context: Vec::new() }
    }
}

static LOCATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)([A-Za-z0-9_./\\-]+\.s?vh?):(\d+)(?::\d+)?:").unwrap());
static SUMMARY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(\d+ error(?:s|\(s\))? during|%Error: Exiting due to|I give up|Found and reported \d+ problems?\.?$|End of script)").unwrap()
});

/// Ordered message-shape table; the first match decides.
static TABLE: LazyLock<Vec<(Regex, ErrorCategory)>> = LazyLock::new(|| {
    let rows: &[(&str, ErrorCategory)] = &[
        (r"(?i)\bno latch inferred\b", ErrorCategory::Other),
        (r"(?i)latch inferred|%Warning-LATCH|\$_?DLATCH", ErrorCategory::InferredLatch),
        (r"(?i)syntax error|%Error-PARSE|unexpected token|malformed statement|invalid module item", ErrorCategory::Syntax),
        (r"(?i)(?:is not a port of|port .* not found|pin not found|%Error-PINNOTFOUND|wrong number of ports|too many ports|port .* is not declared|PINMISSING|missing port)", ErrorCategory::PortMismatch),
        (r"(?i)(?:expects \d+ bits?, got \d+|%Warning-WIDTH|width mismatch|operand widths?|truncat|padding \d+ high bits)", ErrorCategory::WidthMismatch),
        (r"(?i)(?:unable to bind|could not find variable|can't find definition|unknown module type|cannot find file containing module|not declared|undeclared|identifier .* not found|is not declared)", ErrorCategory::UndeclaredSignal),
    ];
    rows.iter().map(|(p, c)| (Regex::new(p).unwrap(), *c)).collect()
});

fn is_error_line(line: &str) -> bool {
    let lower = line.to_ascii_lowercase();
    lower.contains("error") && !lower.contains("0 errors")
}

/// Categorizes every error-like line of `tool_output`. Lines matching a
/// table shape are kept even when the tool reports them as warnings (width
/// and latch warnings matter for repair); other lines count only when they
/// mention "error". `source` supplies the context lines.
pub fn categorize_errors(tool_output: &str, source: Option<&str>) -> Vec<CategorizedError> {
    let src_lines: Vec<&str> = source.map(|s| s.lines().collect()).unwrap_or_default();
    let mut out: Vec<CategorizedError> = Vec::new();
    for raw in tool_output.lines() {
        let line = raw.trim();
        if line.is_empty() || SUMMARY.is_match(line) {
            continue;
        }
        let category = TABLE.iter().find(|(re, _)| re.is_match(line)).map(|(_, c)| *c);
        let category = match category {
            Some(ErrorCategory::Other) => continue, // explicit negative such as "No latch inferred"
            Some(c) => c,
            None if is_error_line(line) => ErrorCategory::Other,
            None => continue,
        };
        let (file, lineno) = LOCATION
            .captures(line)
            .map(|c| (Some(c[1].to_string()), c[2].parse::<u32>().ok()))
            .unwrap_or((None, None));
        let context = match lineno {
            Some(n) if !src_lines.is_empty() => context_lines(&src_lines, n),
            _ => Vec::new(),
        };
        let e = CategorizedError { category, message: line.to_string(), file, line: lineno, context };
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

/// Five lines centred on 1-based `line`, clipped at file edges.
pub fn context_lines(src_lines: &[&str], line: u32) -> Vec<String> {
    let n = line as usize;
    if n == 0 || n > src_lines.len() {
        return Vec::new();
    }
    let lo = n.saturating_sub(3);
    let hi = (n + 2).min(src_lines.len());
    (lo..hi).map(|i| format!("{:>4} | {}", i + 1, src_lines[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iverilog_shapes() {
        let log = "design.v:3: syntax error\n\
                   design.v:3: error: Invalid module item.\n\
                   design.v:7: error: Unable to bind wire/reg/memory `q' in `m'\n\
                   design.v:9: error: port ``z'' is not a port of u0.\n\
                   design.v:9: warning: Port 2 (b) of adder expects 4 bits, got 8.\n\
                   4 error(s) during elaboration.\n";
        let cats: Vec<_> = categorize_errors(log, None).iter().map(|e| (e.category, e.line)).collect();
        assert_eq!(
            cats,
            [
                (ErrorCategory::Syntax, Some(3)),
                (ErrorCategory::Syntax, Some(3)),
                (ErrorCategory::UndeclaredSignal, Some(7)),
                (ErrorCategory::PortMismatch, Some(9)),
                (ErrorCategory::WidthMismatch, Some(9)),
            ]
        );
    }

    #[test]
    fn verilator_and_yosys_shapes() {
        let log = "%Error: top.sv:12:5: syntax error, unexpected IDENTIFIER\n\
                   %Warning-WIDTH: top.sv:4:13: Operator ASSIGNW expects 4 bits on the Assign RHS, but Assign RHS's CONST generates 8 bits.\n\
                   %Error: top.sv:8:9: Can't find definition of variable: 'foo'\n\
                   %Error: Exiting due to 2 error(s)\n\
                   No latch inferred for signal `\\m.\\y' from process `\\m.$proc$m.v:3$1'.\n\
                   Latch inferred for signal `\\m.\\q' from process `\\m.$proc$m.v:5$2': $auto$proc_dlatch.cc:427:proc_dlatch$3\n";
        let cats: Vec<_> = categorize_errors(log, None).iter().map(|e| e.category).collect();
        assert_eq!(
            cats,
            [
                ErrorCategory::Syntax,
                ErrorCategory::WidthMismatch,
                ErrorCategory::UndeclaredSignal,
                ErrorCategory::InferredLatch
            ]
        );
    }

    #[test]
    fn context_is_centred() {
        let src = "l1\nl2\nl3\nl4\nl5\nl6\nl7\n";
        let e = &categorize_errors("a.v:4: syntax error", Some(src))[0];
        assert_eq!(e.context, ["   2 | l2", "   3 | l3", "   4 | l4", "   5 | l5", "   6 | l6"]);
        let e = &categorize_errors("a.v:1: syntax error", Some(src))[0];
        assert_eq!(e.context.len(), 3);
    }

    #[test]
    fn totality() {
        assert!(categorize_errors("", None).is_empty());
        assert!(categorize_errors("compiled fine\n0 errors", None).is_empty());
        let junk = String::from_utf8_lossy(&[0xff, 0xfe, b'e', b'r', b'r', b'o', b'r', 0x00]).into_owned();
        assert_eq!(categorize_errors(&junk, None)[0].category, ErrorCategory::Other);
    }
}
