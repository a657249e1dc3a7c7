// SPDX-License-Identifier: Apache-2.0
//! Header extraction and duplicate removal on combined sources.

use super::HierarchyError;
use crate::verilog::{find_modules, ModuleSpan};
use std::collections::BTreeMap;

fn header_of(src: &str, m: &ModuleSpan) -> String {
    if m.ansi || m.ports.is_empty() {
        return format!("{}\nendmodule\n", m.header_text(src).trim_end());
    }
    let mut h = format!("module {}", m.name);
    if !m.parameters.is_empty() {
        let ps: Vec<String> = m.parameters.iter().map(|(n, v)| format!("parameter {n} = {v}")).collect();
        h.push_str(&format!(" #({})", ps.join(", ")));
    }
    let ports: Vec<String> = m.ports.iter().map(|p| format!("    {}", p.declaration())).collect();
    h.push_str(&format!(" (\n{}\n);\nendmodule\n", ports.join(",\n")));
    h
}

/// Declaration-only copy of every module in `src`: the header through the
/// port list, then `endmodule`. Non-ANSI port lists are rewritten in ANSI
/// form from the body declarations.
pub fn extract_header(src: &str) -> Result<String, HierarchyError> {
    let mods = find_modules(src);
    if mods.is_empty() {
        return Err(HierarchyError::ParseFailure("no module definition found".into()));
    }
    Ok(mods.iter().map(|m| header_of(src, m)).collect::<Vec<_>>().join("\n"))
}

/// Keeps the first full definition of each module name. Later
/// redefinitions go, and so do stubs once a full body exists. Text outside
/// removed definitions is left untouched.
pub fn dedupe_modules(src: &str) -> String {
    let mods = find_modules(src);
    let mut keep: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, m) in mods.iter().enumerate() {
        match keep.get(m.name.as_str()) {
            Some(&k) if mods[k].is_stub && !m.is_stub => {
                keep.insert(&m.name, i);
            }
            Some(_) => {}
            None => {
                keep.insert(&m.name, i);
            }
        }
    }
    let mut out = String::with_capacity(src.len());
    let mut pos = 0;
    for (i, m) in mods.iter().enumerate() {
        if keep.get(m.name.as_str()) == Some(&i) {
            continue;
        }
        out.push_str(&src[pos..m.start]);
        pos = m.end;
        // swallow the rest of the line after `endmodule`
        if let Some(nl) = src[pos..].find('\n') {
            if src[pos..pos + nl].trim().is_empty() {
                pos += nl + 1;
            }
        }
    }
    out.push_str(&src[pos..]);
    out
}

/// Number of definitions per module name.
pub fn definition_counts(src: &str) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for span in find_modules(src) {
        *m.entry(span.name).or_insert(0) += 1;
    }
    m
}
