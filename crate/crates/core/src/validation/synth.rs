// SPDX-License-Identifier: Apache-2.0
//! Synthesis report parsing.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthMetrics {
    pub cell_count: u64,
    pub wire_count: u64,
    pub latch_warnings: u32,
    /// Combinational loops reported by `check`.
    #[serde(default)]
    pub loop_warnings: u32,
}

static CELLS_OLD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*Number of cells:\s*(\d+)").unwrap());
static WIRES_OLD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*Number of wires:\s*(\d+)").unwrap());
static CELLS_NEW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*(\d+)\s+(?:[\d.]+\s+)?cells\s*$").unwrap());
static WIRES_NEW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*(\d+)\s+(?:[\d.]+\s+)?wires\s*$").unwrap());
static LATCH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*Latch inferred for signal|\$_DLATCH_[NP]_|\$dlatch\b").unwrap());
static LOOP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?mi)found (?:and reported )?(?:a )?(?:logic|combinational) loop|Warning: found logic loop").unwrap());

fn last(re: &Regex, text: &str) -> Option<u64> {
    re.captures_iter(text).last().and_then(|c| c[1].parse().ok())
}

/// Parses a `stat` report plus `check` output. The last stat block wins
/// (it describes the top after flattening). Accepts both the
/// `Number of cells: N` and the newer `N cells` layouts.
pub fn parse_synth_report(log: &str) -> SynthMetrics {
    let cell_count = last(&CELLS_OLD, log).or_else(|| last(&CELLS_NEW, log)).unwrap_or(0);
    let wire_count = last(&WIRES_OLD, log).or_else(|| last(&WIRES_NEW, log)).unwrap_or(0);
    let latch_warnings = log.lines().filter(|l| LATCH.is_match(l) && !l.contains("No latch inferred")).count() as u32;
    let loop_warnings = log.lines().filter(|l| LOOP.is_match(l)).count() as u32;
    SynthMetrics { cell_count, wire_count, latch_warnings, loop_warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn old_layout() {
        let log = "=== and2 ===\n\n   Number of wires:                  3\n   Number of wire bits:              3\n\
                   Number of cells:                  1\n     $_AND_                          1\n";
        let m = parse_synth_report(log);
        assert_eq!((m.cell_count, m.wire_count, m.latch_warnings), (1, 3, 0));
    }

    #[test]
    fn new_layout_and_latch() {
        let log = "Latch inferred for signal `\\m.\\q' from process `\\m.$proc$m.v:5$2'\n\
                   No latch inferred for signal `\\m.\\y'\n\
                   === m ===\n        3 wires\n        3 wire bits\n        1 cells\n        1   $_DLATCH_P_\n";
        let m = parse_synth_report(log);
        assert_eq!(m.cell_count, 1);
        assert_eq!(m.wire_count, 3);
        assert_eq!(m.latch_warnings, 2);
    }

    #[test]
    fn empty_module() {
        assert_eq!(parse_synth_report("Number of cells: 0\n").cell_count, 0);
        assert_eq!(parse_synth_report(""), SynthMetrics::default());
    }
}
