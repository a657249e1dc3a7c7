// SPDX-License-Identifier: Apache-2.0
//! Extraction of K-map grids and truth tables from specification text.
//!
//! K-map grids look like
//!
//! ```text
//!          ab
//!    cd   00  01  11  10
//!    00 |  1 | 1 | 0 | 1 |
//!    01 |  1 | 0 | 0 | 1 |
//!    11 |  0 | 1 | 1 | 1 |
//!    10 |  1 | 1 | 0 | 0 |
//! ```
//!
//! or carry a corner label `cd\ab` (rows before the backslash). A header
//! line holds `2^w` Gray-ordered column labels; each row line holds a row
//! label followed by one cell per column. Cells are `0`, `1`, or one of
//! `x d - ?` for don't-care.
//!
//! Variable order: the interface header's input order when it names every
//! variable; otherwise natural name order when the grid names its
//! variables; otherwise row variables then column variables, called
//! `a, b, c, ...`.

use super::{default_names, TruthFunction, Value, MAX_VARS};
use crate::verilog::{header_ports, Direction};
use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no {0} found in the specification text")]
    NotFound(&'static str),
    #[error("line {line}: {reason}: `{text}`")]
    Malformed { line: usize, text: String, reason: String },
    #[error("line {line}: row conflicts with an earlier row: `{text}`")]
    Conflict { line: usize, text: String },
    #[error("line {line}: non-binary input field: `{text}`")]
    NonBinaryInput { line: usize, text: String },
    #[error("{0} input variables exceed the supported maximum of {MAX_VARS}")]
    TooManyVars(usize),
}

fn clean_line(line: &str) -> &str {
    let t = line.trim();
    t.strip_prefix("//").unwrap_or(t).trim()
}

fn tokens(line: &str) -> Vec<&str> {
    clean_line(line)
        .split(|c: char| c.is_whitespace() || c == '|' || c == ',')
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_binary(t: &str) -> bool {
    !t.is_empty() && t.bytes().all(|b| b == b'0' || b == b'1')
}

fn bits_of(label: &str) -> Vec<bool> {
    label.bytes().map(|b| b == b'1').collect()
}

fn is_gray_sequence(labels: &[&str]) -> bool {
    let vals: Vec<u32> = labels.iter().map(|l| u32::from_str_radix(l, 2).unwrap_or(0)).collect();
    let mut sorted = vals.clone();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len() == vals.len() && vals.windows(2).all(|w| (w[0] ^ w[1]).count_ones() == 1)
}

/// Splits a group label such as `ab` or `x1x2` into `width` variable names.
fn group_vars(name: &str, width: usize) -> Option<Vec<String>> {
    static VAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z_][0-9]*").unwrap());
    let name = name.trim();
    if name.chars().count() == width && name.chars().all(|c| c.is_ascii_alphabetic()) {
        return Some(name.chars().map(|c| c.to_string()).collect());
    }
    let parts: Vec<String> = VAR.find_iter(name).map(|m| m.as_str().to_string()).collect();
    (parts.len() == width && parts.concat() == name).then_some(parts)
}

fn natural_key(name: &str) -> (String, u64) {
    let split = name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len());
    (name[..split].to_string(), name[split..].parse().unwrap_or(0))
}

fn header_inputs_outputs(header: Option<&str>) -> (Vec<String>, Vec<String>) {
    let ports = header.map(header_ports).unwrap_or_default();
    let pick = |d| ports.iter().filter(|p| p.direction == d).map(|p| p.name.clone()).collect();
    (pick(Direction::Input), pick(Direction::Output))
}

/// Chooses the minterm variable order; see the module docs.
fn variable_order(vars: &[String], named: bool, header_inputs: &[String]) -> Vec<String> {
    if header_inputs.len() == vars.len() && vars.iter().all(|v| header_inputs.contains(v)) {
        return header_inputs.to_vec();
    }
    let mut order = vars.to_vec();
    if named {
        order.sort_by_key(|v| natural_key(v));
    }
    order
}

struct Grid<'a> {
    header_line: usize,
    prefix: Vec<&'a str>,
    col_labels: Vec<&'a str>,
    rows: Vec<(usize, &'a str, Vec<&'a str>)>,
}

fn find_grid<'a>(lines: &[&'a str]) -> Option<Grid<'a>> {
    for (i, line) in lines.iter().enumerate() {
        let toks = tokens(line);
        let run = toks.iter().rev().take_while(|t| is_binary(t)).count();
        if run < 2 {
            continue;
        }
        let labels = &toks[toks.len() - run..];
        let w = labels[0].len();
        if labels.iter().any(|l| l.len() != w) {
            continue;
        }
        let prefix = toks[..toks.len() - run].to_vec();
        if prefix.len() > 2 {
            continue;
        }
        let mut rows = Vec::new();
        let mut row_width = None;
        for (j, row_line) in lines.iter().enumerate().skip(i + 1) {
            let rt = tokens(row_line);
            if rt.len() != run + 1 || !is_binary(rt[0]) || *row_width.get_or_insert(rt[0].len()) != rt[0].len() {
                break;
            }
            rows.push((j, rt[0], rt[1..].to_vec()));
        }
        if rows.len() >= 2 {
            return Some(Grid { header_line: i, prefix, col_labels: labels.to_vec(), rows });
        }
    }
    None
}

/// Parses the first K-map grid in `text`.
pub fn parse_kmap(text: &str, interface_header: Option<&str>) -> Result<TruthFunction, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let grid = find_grid(&lines).ok_or(ParseError::NotFound("K-map grid"))?;
    let malformed = |line: usize, reason: &str| ParseError::Malformed {
        line: line + 1,
        text: lines[line].trim().to_string(),
        reason: reason.to_string(),
    };

    let cols = grid.col_labels.len();
    let col_w = grid.col_labels[0].len();
    if !cols.is_power_of_two() || cols != 1 << col_w {
        return Err(malformed(grid.header_line, "column count is not 2^label width"));
    }
    if !is_gray_sequence(&grid.col_labels) {
        return Err(malformed(grid.header_line, "column labels are not a Gray sequence"));
    }
    let row_w = grid.rows[0].1.len();
    let row_labels: Vec<&str> = grid.rows.iter().map(|r| r.1).collect();
    let last_row = grid.rows.last().map_or(grid.header_line, |r| r.0);
    if !grid.rows.len().is_power_of_two() || grid.rows.len() != 1 << row_w {
        return Err(malformed(last_row, "row count is not 2^label width"));
    }
    if !is_gray_sequence(&row_labels) {
        return Err(malformed(grid.rows[0].0, "row labels are not a Gray sequence"));
    }
    let n = row_w + col_w;
    if n > MAX_VARS {
        return Err(ParseError::TooManyVars(n));
    }

    // variable group names
    let mut row_group: Option<&str> = None;
    let mut col_group: Option<&str> = None;
    if let [corner] = grid.prefix.as_slice() {
        if let Some((r, c)) = corner.split_once(['\\', '/']) {
            row_group = Some(r);
            col_group = Some(c);
        } else {
            row_group = Some(corner);
        }
    } else if let [r, c] = grid.prefix.as_slice() {
        row_group = Some(r);
        col_group = Some(c);
    }
    if col_group.is_none() {
        let prev = lines[..grid.header_line].iter().rev().find(|l| !clean_line(l).is_empty());
        if let Some(prev) = prev {
            if let [single] = tokens(prev).as_slice() {
                col_group = Some(single);
            }
        }
    }
    let row_vars = row_group.and_then(|g| group_vars(g, row_w));
    let col_vars = col_group.and_then(|g| group_vars(g, col_w));
    let named = row_vars.is_some() && col_vars.is_some();
    let (row_vars, col_vars) = match (row_vars, col_vars) {
        (Some(r), Some(c)) if r.iter().all(|v| !c.contains(v)) => (r, c),
        _ => {
            let d = default_names(n);
            (d[..row_w].to_vec(), d[row_w..].to_vec())
        }
    };
    let all: Vec<String> = row_vars.iter().chain(col_vars.iter()).cloned().collect();
    let (h_in, h_out) = header_inputs_outputs(interface_header);
    let order = variable_order(&all, named, &h_in);
    let pos = |v: &String| order.iter().position(|o| o == v).expect("variable in order");

    let mut values = vec![Value::DontCare; 1 << n];
    for (line, label, cells) in &grid.rows {
        let rbits = bits_of(label);
        for (c, cell) in cells.iter().enumerate() {
            let value = Value::from_symbol(cell)
                .ok_or_else(|| malformed(*line, &format!("unrecognized cell symbol `{cell}`")))?;
            let cbits = bits_of(grid.col_labels[c]);
            let mut m = 0usize;
            for (v, bit) in row_vars.iter().zip(&rbits).chain(col_vars.iter().zip(&cbits)) {
                if *bit {
                    m |= 1 << (n - 1 - pos(v));
                }
            }
            values[m] = value;
        }
    }
    let output = h_out.first().cloned().unwrap_or_else(|| "f".to_string());
    TruthFunction::new(order, output, values).map_err(|e| malformed(grid.header_line, &e.to_string()))
}

/// Renders `tf` as a K-map grid with a `rows\cols` corner label. Row
/// variables are the first `n / 2`. Requires at least two variables.
pub fn render_kmap(tf: &TruthFunction) -> String {
    let n = tf.num_vars();
    let row_w = n / 2;
    let col_w = n - row_w;
    let names = tf.var_names();
    let gray = |i: usize, w: usize| format!("{:0w$b}", i ^ (i >> 1), w = w);
    let mut out = format!(
        "{}\\{} {}\n",
        names[..row_w].concat(),
        names[row_w..].concat(),
        (0..1usize << col_w).map(|c| gray(c, col_w)).collect::<Vec<_>>().join(" ")
    );
    for r in 0..1usize << row_w {
        let rl = gray(r, row_w);
        let rv = r ^ (r >> 1);
        let cells: Vec<String> = (0..1usize << col_w)
            .map(|c| {
                let cv = c ^ (c >> 1);
                tf.value((rv << col_w) | cv).symbol().to_string()
            })
            .collect();
        out.push_str(&format!("{rl} | {} |\n", cells.join(" | ")));
    }
    out
}

fn is_value_token(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| matches!(c, '0' | '1' | 'x' | 'X' | 'd' | 'D' | '-' | '?'))
}

fn is_separator_line(line: &str) -> bool {
    let c = clean_line(line);
    !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | '|' | ':' | '+' | '=' | ' '))
        && c.contains("--")
}

fn is_name_token(t: &str) -> bool {
    t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '[' || c == ']')
}

const TIME_COLUMNS: &[&str] = &["time", "t", "cycle", "ns", "step", "sample", "clk", "clock"];

fn is_time_column(name: &str) -> bool {
    TIME_COLUMNS.contains(&name.to_ascii_lowercase().as_str())
}

/// Parses the first truth table and returns its first output.
pub fn parse_truth_table(text: &str, interface_header: Option<&str>) -> Result<TruthFunction, ParseError> {
    Ok(parse_truth_tables(text, interface_header)?.remove(0))
}

/// Parses the first truth table in `text`, one function per output column.
///
/// Rows may come in any order; absent rows become don't-cares; repeated
/// identical rows are accepted and conflicting ones rejected. Columns named
/// like a time axis (`time`, `t`, `cycle`, `clk` ...) are ignored, which is
/// how sampled timing-diagram tables are handled.
pub fn parse_truth_tables(text: &str, interface_header: Option<&str>) -> Result<Vec<TruthFunction>, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let (h_in, h_out) = header_inputs_outputs(interface_header);
    for (i, line) in lines.iter().enumerate() {
        let names = tokens(line);
        if names.len() < 2 || !names.iter().all(|t| is_name_token(t)) {
            continue;
        }
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
        for (j, row) in lines.iter().enumerate().skip(i + 1) {
            if is_separator_line(row) {
                continue;
            }
            let rt = tokens(row);
            let ok = rt.iter().zip(&names).all(|(t, n)| is_value_token(t) || is_time_column(n));
            if rt.len() != names.len() || !ok {
                break;
            }
            rows.push((j, rt));
        }
        if rows.is_empty() {
            continue;
        }
        return build_table(&lines, i, &names, &rows, &h_in, &h_out);
    }
    Err(ParseError::NotFound("truth table"))
}

fn build_table(
    lines: &[&str],
    header_idx: usize,
    names: &[&str],
    rows: &[(usize, Vec<&str>)],
    h_in: &[String],
    h_out: &[String],
) -> Result<Vec<TruthFunction>, ParseError> {
    let raw = clean_line(lines[header_idx]);
    // how many header columns are inputs
    let n_inputs = ["||", "->", "=>"]
        .iter()
        .find_map(|sep| raw.find(sep).map(|at| tokens(&raw[..at]).len()))
        .or_else(|| {
            let inner = raw.trim_matches('|');
            (inner.matches('|').count() == 1)
                .then(|| tokens(&inner[..inner.find('|').unwrap_or(0)]).len())
        })
        .filter(|&k| k > 0 && k < names.len())
        .or_else(|| {
            let outs = names.iter().filter(|n| h_out.iter().any(|o| o == *n)).count();
            (outs > 0 && names.iter().rev().take(outs).all(|n| h_out.iter().any(|o| o == n)))
                .then(|| names.len() - outs)
        })
        .unwrap_or(names.len() - 1);

    // expand packed input columns (e.g. header `abc`, rows `010`)
    let mut input_cols: Vec<(usize, Vec<String>)> = Vec::new();
    for (c, name) in names.iter().enumerate().take(n_inputs) {
        if is_time_column(name) {
            continue;
        }
        let width = rows[0].1[c].len();
        let vars = if width == 1 {
            vec![name.to_string()]
        } else {
            group_vars(name, width).unwrap_or_else(|| (0..width).map(|k| format!("{name}{}", width - 1 - k)).collect())
        };
        input_cols.push((c, vars));
    }
    let vars: Vec<String> = input_cols.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    let n = vars.len();
    if n == 0 {
        return Err(ParseError::NotFound("truth table inputs"));
    }
    if n > MAX_VARS {
        return Err(ParseError::TooManyVars(n));
    }
    let order = variable_order(&vars, false, h_in);
    let pos = |v: &String| order.iter().position(|o| o == v).expect("variable in order");
    let outputs: Vec<usize> = (n_inputs..names.len()).collect();

    let mut tables: Vec<Vec<Option<(Value, usize)>>> = vec![vec![None; 1 << n]; outputs.len()];
    for (line, row) in rows {
        let mut m = 0usize;
        for (c, cvars) in &input_cols {
            let field = row[*c];
            if !is_binary(field) || field.len() != cvars.len() {
                return Err(ParseError::NonBinaryInput { line: line + 1, text: lines[*line].trim().to_string() });
            }
            for (v, bit) in cvars.iter().zip(bits_of(field)) {
                if bit {
                    m |= 1 << (n - 1 - pos(v));
                }
            }
        }
        for (k, &c) in outputs.iter().enumerate() {
            let value = Value::from_symbol(row[c]).ok_or_else(|| ParseError::Malformed {
                line: line + 1,
                text: lines[*line].trim().to_string(),
                reason: format!("unrecognized output value `{}`", row[c]),
            })?;
            match tables[k][m] {
                Some((prev, _)) if prev != value => {
                    return Err(ParseError::Conflict { line: line + 1, text: lines[*line].trim().to_string() })
                }
                _ => tables[k][m] = Some((value, *line)),
            }
        }
    }
    outputs
        .iter()
        .zip(tables)
        .map(|(&c, table)| {
            let values = table.into_iter().map(|v| v.map_or(Value::DontCare, |(v, _)| v)).collect();
            TruthFunction::new(order.clone(), names[c], values).map_err(|e| ParseError::Malformed {
                line: header_idx + 1,
                text: lines[header_idx].trim().to_string(),
                reason: e.to_string(),
            })
        })
        .collect()
}
