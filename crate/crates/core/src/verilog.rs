// SPDX-License-Identifier: Apache-2.0
//! A small structural scanner for Verilog / SystemVerilog source.
//!
//! This is not a parser. It finds `module ... endmodule` spans, port lists
//! (ANSI and non-ANSI), parameters and a few code metrics, which is all the
//! header extraction, deduplication, testbench adaptation and library indexing
//! need. Anything it cannot make sense of is left to the real lint tools.

use serde::{Deserialize, Serialize};
use std::fmt;

const RESERVED: &[&str] = &[
    "always", "and", "assign", "automatic", "begin", "buf", "bufif0", "bufif1", "case", "casex",
    "casez", "cell", "cmos", "config", "deassign", "default", "defparam", "design", "disable",
    "edge", "else", "end", "endcase", "endconfig", "endfunction", "endgenerate", "endmodule",
    "endprimitive", "endspecify", "endtable", "endtask", "event", "for", "force", "forever",
    "fork", "function", "generate", "genvar", "highz0", "highz1", "if", "ifnone", "incdir",
    "include", "initial", "inout", "input", "instance", "integer", "join", "large", "liblist",
    "library", "localparam", "macromodule", "medium", "module", "nand", "negedge", "nmos", "nor",
    "noshowcancelled", "not", "notif0", "notif1", "or", "output", "parameter", "pmos", "posedge",
    "primitive", "pull0", "pull1", "pulldown", "pullup", "pulsestyle_onevent",
    "pulsestyle_ondetect", "rcmos", "real", "realtime", "reg", "release", "repeat", "rnmos",
    "rpmos", "rtran", "rtranif0", "rtranif1", "scalared", "showcancelled", "signed", "small",
    "specify", "specparam", "strong0", "strong1", "supply0", "supply1", "table", "task", "time",
    "tran", "tranif0", "tranif1", "tri", "tri0", "tri1", "triand", "trior", "trireg", "unsigned",
    "use", "vectored", "wait", "wand", "weak0", "weak1", "while", "wire", "wor", "xnor", "xor",
];

/// Keywords that exist in SystemVerilog but not in Verilog-2001.
pub const SYSTEMVERILOG_ONLY: &[&str] = &[
    "logic", "bit", "byte", "shortint", "int", "longint", "always_ff", "always_comb",
    "always_latch", "unique", "priority", "typedef", "enum", "struct", "packed", "interface",
    "endinterface", "modport", "import", "package", "endpackage", "assert", "property",
    "final", "foreach", "return", "break", "continue", "void", "string", "class",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name) || SYSTEMVERILOG_ONLY.contains(&name)
}

/// Replaces `//` and `/* */` comments (and string contents) with spaces,
/// keeping newlines so byte offsets and line numbers stay valid.
pub fn strip_comments(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                out.push(b' ');
                i += 1;
            }
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            out.extend_from_slice(b"  ");
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                out.push(if bytes[i] == b'\n' { b'\n' } else { b' ' });
                i += 1;
            }
            if i < bytes.len() {
                out.extend_from_slice(b"  ");
                i += 2;
            }
        } else if b == b'"' {
            out.push(b'"');
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                if bytes[i] == b'\\' && i + 1 < bytes.len() {
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                out.push(b' ');
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'"' {
                out.push(b'"');
                i += 1;
            }
        } else {
            out.push(b);
            i += 1;
        }
    }
    // Only ASCII bytes were substituted for whole characters' worth of bytes
    // inside comments/strings; everything else is copied verbatim.
    String::from_utf8(out).unwrap_or_else(|e| {
        String::from_utf8_lossy(e.as_bytes()).into_owned()
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
    start: usize,
    end: usize,
}

fn tokenize(clean: &str) -> Vec<Token> {
    let bytes = clean.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if b.is_ascii_alphabetic() || b == b'_' || b == b'$' || b == b'`' {
            let s = i;
            i += 1;
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
            {
                i += 1;
            }
            toks.push(Token { text: clean[s..i].to_string(), start: s, end: i });
        } else if b == b'\\' {
            let s = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            toks.push(Token { text: clean[s..i].to_string(), start: s, end: i });
        } else if b.is_ascii_digit() || b == b'\'' {
            let s = i;
            i += 1;
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
            {
                i += 1;
            }
            toks.push(Token { text: clean[s..i].to_string(), start: s, end: i });
        } else if b == b'"' {
            let s = i;
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            toks.push(Token { text: clean[s..i].to_string(), start: s, end: i });
        } else {
            let len = clean[i..].chars().next().map_or(1, char::len_utf8);
            toks.push(Token { text: clean[i..i + len].to_string(), start: i, end: i + len });
            i += len;
        }
    }
    toks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "input" => Some(Self::Input),
            "output" => Some(Self::Output),
            "inout" => Some(Self::Inout),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Input => "input",
            Self::Output => "output",
            Self::Inout => "inout",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// One module port. `range` holds the packed range text (e.g. `[7:0]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<String>,
    /// `reg`, `wire`, `logic` ... when declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_type: Option<String>,
    #[serde(default)]
    pub signed: bool,
}

impl Port {
    /// Width in bits when the range is a constant `[msb:lsb]`.
    pub fn width(&self) -> Option<u32> {
        match &self.range {
            None => Some(1),
            Some(r) => {
                let inner = r.trim().trim_start_matches('[').trim_end_matches(']');
                let (a, b) = inner.split_once(':')?;
                let a: i64 = a.trim().parse().ok()?;
                let b: i64 = b.trim().parse().ok()?;
                Some((a - b).unsigned_abs() as u32 + 1)
            }
        }
    }

    /// ANSI declaration, e.g. `input wire [3:0] a`.
    pub fn declaration(&self) -> String {
        let mut s = String::from(self.direction.keyword());
        if let Some(t) = &self.net_type {
            s.push(' ');
            s.push_str(t);
        }
        if self.signed {
            s.push_str(" signed");
        }
        if let Some(r) = &self.range {
            s.push(' ');
            s.push_str(r);
        }
        s.push(' ');
        s.push_str(&self.name);
        s
    }
}

/// Location of one module definition inside a source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpan {
    pub name: String,
    /// Byte offset of the `module` keyword.
    pub start: usize,
    /// Byte offset just past the `;` closing the header.
    pub header_end: usize,
    /// Byte offset of the `endmodule` keyword.
    pub body_end: usize,
    /// Byte offset just past `endmodule`.
    pub end: usize,
    /// Header followed directly by `endmodule` with nothing in between.
    pub is_stub: bool,
    pub ansi: bool,
    pub ports: Vec<Port>,
    pub parameters: Vec<(String, String)>,
}

impl ModuleSpan {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn header_text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.header_end]
    }
}

fn matching_close(toks: &[Token], open_idx: usize, open: &str, close: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open_idx) {
        if t.text == open {
            depth += 1;
        } else if t.text == close {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

fn join_tokens(clean: &str, toks: &[Token]) -> String {
    match (toks.first(), toks.last()) {
        (Some(a), Some(b)) => clean[a.start..b.end].split_whitespace().collect::<Vec<_>>().join(" "),
        _ => String::new(),
    }
}

const NET_TYPES: &[&str] = &[
    "wire", "reg", "logic", "bit", "tri", "wand", "wor", "integer", "var", "supply0", "supply1",
];

/// Parses a comma-separated sequence of port declarations that start with a
/// direction keyword. Used for ANSI headers and non-ANSI body declarations.
fn parse_decl_list(clean: &str, toks: &[Token], ports: &mut Vec<Port>) {
    let mut dir: Option<Direction> = None;
    let mut net_type: Option<String> = None;
    let mut signed = false;
    let mut range: Option<String> = None;
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].text.as_str();
        if let Some(d) = Direction::from_keyword(t) {
            dir = Some(d);
            net_type = None;
            signed = false;
            range = None;
            i += 1;
        } else if NET_TYPES.contains(&t) {
            net_type = Some(t.to_string());
            i += 1;
        } else if t == "signed" {
            signed = true;
            i += 1;
        } else if t == "unsigned" {
            i += 1;
        } else if t == "[" {
            let close = matching_close(toks, i, "[", "]").unwrap_or(toks.len() - 1);
            let r = join_tokens(clean, &toks[i..=close]).replace(' ', "");
            // unpacked dimensions after a name are ignored
            if i == 0 || is_declarator_prefix(&toks[i - 1].text) {
                range = Some(r);
            }
            i = close + 1;
        } else if t == "," {
            i += 1;
        } else if t == "=" {
            // default value in a declaration; skip to next comma
            while i < toks.len() && toks[i].text != "," {
                i += 1;
            }
        } else if let Some(d) = dir {
            if t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '\\') {
                if !ports.iter().any(|p| p.name == t) {
                    ports.push(Port {
                        name: t.to_string(),
                        direction: d,
                        range: range.clone(),
                        net_type: net_type.clone(),
                        signed,
                    });
                }
            }
            i += 1;
        } else {
            i += 1;
        }
    }
}

fn is_declarator_prefix(t: &str) -> bool {
    Direction::from_keyword(t).is_some()
        || NET_TYPES.contains(&t)
        || t == "signed"
        || t == "unsigned"
        || t == ","
        || t == "("
}

fn parse_params(clean: &str, toks: &[Token]) -> Vec<(String, String)> {
    // toks: the contents of `#( ... )` or the tokens of a parameter statement.
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].text.as_str();
        match t {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "=" if depth == 0 => {
                let name = (0..i)
                    .rev()
                    .map(|j| toks[j].text.as_str())
                    .find(|s| s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_'))
                    .unwrap_or("")
                    .to_string();
                let mut j = i + 1;
                let mut d = 0i32;
                while j < toks.len() {
                    match toks[j].text.as_str() {
                        "(" | "[" | "{" => d += 1,
                        ")" | "]" | "}" => d -= 1,
                        "," | ";" if d == 0 => break,
                        _ => {}
                    }
                    j += 1;
                }
                let value = join_tokens(clean, &toks[i + 1..j]);
                if !name.is_empty() {
                    out.push((name, value));
                }
                i = j;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out
}

/// Finds every module definition in `src`.
pub fn find_modules(src: &str) -> Vec<ModuleSpan> {
    let clean = strip_comments(src);
    let toks = tokenize(&clean);
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i].text != "module" && toks[i].text != "macromodule" {
            i += 1;
            continue;
        }
        let start = toks[i].start;
        let Some(name_tok) = toks.get(i + 1) else { break };
        let name = name_tok.text.clone();
        let mut j = i + 2;
        let mut parameters = Vec::new();
        // optional `import pkg::*;` is rare in headers; ignore.
        if toks.get(j).map(|t| t.text.as_str()) == Some("#") {
            if toks.get(j + 1).map(|t| t.text.as_str()) == Some("(") {
                let close = matching_close(&toks, j + 1, "(", ")").unwrap_or(toks.len() - 1);
                parameters = parse_params(&clean, &toks[j + 2..close]);
                j = close + 1;
            }
        }
        let mut ports = Vec::new();
        let mut ansi = true;
        let mut port_names: Vec<String> = Vec::new();
        if toks.get(j).map(|t| t.text.as_str()) == Some("(") {
            let close = matching_close(&toks, j, "(", ")").unwrap_or(toks.len() - 1);
            let inner = &toks[j + 1..close];
            if inner.iter().any(|t| Direction::from_keyword(&t.text).is_some()) {
                parse_decl_list(&clean, inner, &mut ports);
            } else {
                ansi = inner.is_empty();
                let mut depth = 0;
                for t in inner {
                    match t.text.as_str() {
                        "[" | "{" | "(" => depth += 1,
                        "]" | "}" | ")" => depth -= 1,
                        "," | "." => {}
                        s if depth == 0
                            && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') =>
                        {
                            port_names.push(s.to_string());
                        }
                        _ => {}
                    }
                }
            }
            j = close + 1;
        }
        // header terminator
        while j < toks.len() && toks[j].text != ";" {
            j += 1;
        }
        let header_end = toks.get(j).map_or(clean.len(), |t| t.end);
        let body_start_tok = j + 1;
        let mut k = body_start_tok;
        while k < toks.len() && toks[k].text != "endmodule" {
            k += 1;
        }
        let (body_end, end) = toks
            .get(k)
            .map_or((clean.len(), clean.len()), |t| (t.start, t.end));
        let body = &toks[body_start_tok.min(k)..k];
        // body-level parameters and non-ANSI port declarations
        let mut s = 0;
        while s < body.len() {
            let mut e = s;
            while e < body.len() && body[e].text != ";" {
                e += 1;
            }
            let stmt = &body[s..e];
            if let Some(first) = stmt.first() {
                if first.text == "parameter" {
                    parameters.extend(parse_params(&clean, &stmt[1..]));
                } else if !ansi && Direction::from_keyword(&first.text).is_some() {
                    parse_decl_list(&clean, stmt, &mut ports);
                } else if !ansi && NET_TYPES.contains(&first.text.as_str()) {
                    // `reg [3:0] q;` after `output q;` refines the type
                    let mut tmp = Vec::new();
                    let mut fake = vec![Token { text: "output".into(), start: 0, end: 0 }];
                    fake.extend_from_slice(stmt);
                    parse_decl_list(&clean, &fake, &mut tmp);
                    for p in tmp {
                        if let Some(existing) = ports.iter_mut().find(|q| q.name == p.name) {
                            if existing.net_type.is_none() {
                                existing.net_type = p.net_type;
                            }
                            if existing.range.is_none() {
                                existing.range = p.range;
                            }
                        }
                    }
                }
            }
            s = e + 1;
        }
        if !ansi {
            // order ports by the header list
            ports.sort_by_key(|p| port_names.iter().position(|n| *n == p.name).unwrap_or(usize::MAX));
            for n in &port_names {
                if !ports.iter().any(|p| &p.name == n) {
                    ports.push(Port {
                        name: n.clone(),
                        direction: Direction::Inout,
                        range: None,
                        net_type: None,
                        signed: false,
                    });
                }
            }
        }
        out.push(ModuleSpan {
            name,
            start,
            header_end,
            body_end,
            end,
            is_stub: body.is_empty(),
            ansi,
            ports,
            parameters,
        });
        i = k + 1;
    }
    out
}

/// Names of modules instantiated inside `span` (`type [#(...)] inst (...)`).
pub fn instantiated_modules(src: &str, span: &ModuleSpan) -> Vec<String> {
    let clean = strip_comments(src);
    let toks = tokenize(&clean[span.header_end..span.body_end]);
    let mut out = Vec::new();
    let mut at_stmt_start = true;
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].text.as_str();
        if at_stmt_start
            && !is_reserved(t)
            && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        {
            let next = toks.get(i + 1).map(|t| t.text.as_str());
            let is_inst = match next {
                Some("#") => true,
                Some(n) => {
                    n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && toks.get(i + 2).map(|t| t.text.as_str()) == Some("(")
                }
                None => false,
            };
            if is_inst && !out.iter().any(|o: &String| o == t) {
                out.push(t.to_string());
            }
        }
        at_stmt_start = matches!(t, ";" | "begin" | "end" | "endgenerate" | "generate");
        i += 1;
    }
    out
}

/// Simple size and structure metrics used for state features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMetrics {
    pub lines: usize,
    pub always_blocks: usize,
    pub ports: usize,
}

pub fn code_metrics(src: &str) -> CodeMetrics {
    let clean = strip_comments(src);
    let toks = tokenize(&clean);
    CodeMetrics {
        lines: src.lines().filter(|l| !l.trim().is_empty()).count(),
        always_blocks: toks
            .iter()
            .filter(|t| matches!(t.text.as_str(), "always" | "always_ff" | "always_comb" | "always_latch"))
            .count(),
        ports: find_modules(src).iter().map(|m| m.ports.len()).sum(),
    }
}

/// SystemVerilog-only keywords that appear as tokens in `src`.
pub fn systemverilog_keywords_used(src: &str) -> Vec<&'static str> {
    let clean = strip_comments(src);
    let toks = tokenize(&clean);
    SYSTEMVERILOG_ONLY
        .iter()
        .copied()
        .filter(|kw| toks.iter().any(|t| t.text == *kw))
        .collect()
}

/// Parses the port list of an interface header such as
/// `module TopModule(input a, input b, output out);`.
pub fn header_ports(header: &str) -> Vec<Port> {
    let src = if header.contains("endmodule") {
        header.to_string()
    } else {
        format!("{header}\nendmodule\n")
    };
    find_modules(&src).into_iter().next().map(|m| m.ports).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ansi_ports() {
        let src = "module adder #(parameter W = 4) (input wire [W-1:0] a, b, output reg [W:0] y);\n\
                   always @* y = a + b;\nendmodule\n";
        let m = &find_modules(src)[0];
        assert_eq!(m.name, "adder");
        assert!(m.ansi);
        assert_eq!(m.parameters, vec![("W".to_string(), "4".to_string())]);
        let names: Vec<_> = m.ports.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "y"]);
        assert_eq!(m.ports[1].range.as_deref(), Some("[W-1:0]"));
        assert_eq!(m.ports[2].direction, Direction::Output);
        assert_eq!(m.ports[2].net_type.as_deref(), Some("reg"));
        assert!(!m.is_stub);
    }

    #[test]
    fn non_ansi_ports() {
        let src = "module m(clk, d, q);\n  input clk;\n  input [3:0] d;\n  output q;\n  reg [3:0] q;\n\
                   always @(posedge clk) q <= d;\nendmodule";
        let m = &find_modules(src)[0];
        assert!(!m.ansi);
        assert_eq!(m.ports.len(), 3);
        assert_eq!(m.ports[1].range.as_deref(), Some("[3:0]"));
        assert_eq!(m.ports[2].net_type.as_deref(), Some("reg"));
        assert_eq!(m.ports[2].range.as_deref(), Some("[3:0]"));
    }

    #[test]
    fn comments_do_not_confuse_the_scanner() {
        let src = "// module fake(input x);\n/* endmodule */ module real_one(input a); endmodule";
        let mods = find_modules(src);
        assert_eq!(mods.len(), 1);
        assert_eq!(mods[0].name, "real_one");
        assert!(mods[0].is_stub);
    }

    #[test]
    fn instantiations() {
        let src = "module top(input a, output y);\n wire t;\n inv u0(.a(a), .y(t));\n buf2 #(.N(2)) u1 (t, y);\nendmodule";
        let m = &find_modules(src)[0];
        assert_eq!(instantiated_modules(src, m), ["inv", "buf2"]);
    }

    #[test]
    fn metrics_and_sv_keywords() {
        let src = "module m(input logic clk, output logic q);\nalways_ff @(posedge clk) q <= ~q;\nendmodule\n";
        let cm = code_metrics(src);
        assert_eq!(cm.lines, 3);
        assert_eq!(cm.always_blocks, 1);
        assert_eq!(cm.ports, 2);
        assert_eq!(systemverilog_keywords_used(src), ["logic", "always_ff"]);
    }

    #[test]
    fn port_width() {
        let p = Port { name: "a".into(), direction: Direction::Input, range: Some("[7:0]".into()), net_type: None, signed: false };
        assert_eq!(p.width(), Some(8));
        assert_eq!(p.declaration(), "input [7:0] a");
    }
}
