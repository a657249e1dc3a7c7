// SPDX-License-Identifier: Apache-2.0
//! Pulls Verilog out of a model reply.

use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no module ... endmodule span in response")]
pub struct ExtractionFailed;

static MODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bmodule\b").unwrap());
static ENDMODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bendmodule\b").unwrap());

/// Fenced blocks as `(info string, body)`. An unterminated final fence runs
/// to the end of the text (truncated replies).
fn fenced_blocks(text: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let (info, body_start) = match after.find('\n') {
            Some(nl) => (after[..nl].trim(), nl + 1),
            None => break,
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push((info, &body[..close]));
                rest = &body[close + 3..];
            }
            None => {
                out.push((info, body));
                break;
            }
        }
    }
    out
}

fn has_module(s: &str) -> bool {
    MODULE.is_match(s) && ENDMODULE.is_match(s)
}

/// Code from a reply: every fenced block that holds a module, in order,
/// joined by newlines; failing that, the span from the first `module` to the
/// last `endmodule`.
pub fn extract_code(response: &str) -> Result<String, ExtractionFailed> {
    let blocks: Vec<&str> = fenced_blocks(response)
        .into_iter()
        .filter(|(_, body)| has_module(body))
        .map(|(_, body)| body.trim_end_matches('\n'))
        .collect();
    if !blocks.is_empty() {
        return Ok(blocks.join("\n"));
    }
    let start = MODULE.find(response).ok_or(ExtractionFailed)?.start();
    let end = ENDMODULE.find_iter(response).last().ok_or(ExtractionFailed)?.end();
    if end <= start {
        return Err(ExtractionFailed);
    }
    Ok(response[start..end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_inner_text() {
        let r = "Here it is:\n```verilog\nmodule m(input a, output y);\n  assign y = a;\nendmodule\n```\nDone.";
        assert_eq!(extract_code(r).unwrap(), "module m(input a, output y);\n  assign y = a;\nendmodule");
    }

    #[test]
    fn bare_module_span() {
        let r = "Sure. module m; endmodule That is all, the module is small.";
        assert_eq!(extract_code(r).unwrap(), "module m; endmodule");
    }

    #[test]
    fn two_blocks_concatenate() {
        let r = "```verilog\nmodule a; endmodule\n```\ntext\n```\nmodule b; endmodule\n```\n```bash\niverilog x.v\n```";
        assert_eq!(extract_code(r).unwrap(), "module a; endmodule\nmodule b; endmodule");
    }

    #[test]
    fn truncated_fence_and_failure() {
        assert_eq!(extract_code("```verilog\nmodule a; endmodule\n").unwrap(), "module a; endmodule");
        assert_eq!(extract_code("I cannot help with that."), Err(ExtractionFailed));
        assert_eq!(extract_code("endmodule then module"), Err(ExtractionFailed));
    }
}
