// SPDX-License-Identifier: Apache-2.0
//! Simulation status markers.
//!
//! Each marker must occupy a whole line (leading and trailing whitespace
//! allowed). The exact patterns, in priority order:
//!
//! ```text
//! Mismatches  ^\s*Mismatches:\s*(\d+)\s+in\s+(\d+)\s+samples\s*$     pass iff M = 0
//! Count       ^\s*(\d+)\s*/\s*(\d+)\s+tests\s+passed\s*$             pass iff K = N
//! Status      ^\s*STATUS:\s*(PASS|FAIL)\s*$                          pass iff PASS
//! ```
//!
//! A higher-priority marker anywhere in the output governs; within one kind
//! the last occurrence wins. Output with no marker is a failure.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

static MISMATCH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*Mismatches:\s*(\d+)\s+in\s+(\d+)\s+samples\s*$").unwrap());
static COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*/\s*(\d+)\s+tests\s+passed\s*$").unwrap());
static STATUS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*STATUS:\s*(PASS|FAIL)\s*$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marker {
    Mismatches,
    Count,
    Status,
}

/// What the scanner found in simulator output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerScan {
    pub marker: Option<Marker>,
    pub passed: bool,
    /// Failing samples or tests (`N - K` for count markers).
    pub mismatches: u64,
    /// Total samples or tests; 0 for status markers.
    pub samples: u64,
}

fn num(s: &str) -> u64 {
    s.parse().unwrap_or(u64::MAX)
}

/// Classifies one line; `None` for anything that is not a marker.
pub fn scan_line(line: &str) -> Option<MarkerScan> {
    let line = line.trim_end_matches('\r');
    if let Some(c) = MISMATCH.captures(line) {
        let (m, n) = (num(&c[1]), num(&c[2]));
        return Some(MarkerScan { marker: Some(Marker::Mismatches), passed: m == 0, mismatches: m, samples: n });
    }
    if let Some(c) = COUNT.captures(line) {
        let (k, n) = (num(&c[1]), num(&c[2]));
        return Some(MarkerScan {
            marker: Some(Marker::Count),
            passed: k == n,
            mismatches: n.saturating_sub(k),
            samples: n,
        });
    }
    STATUS.captures(line).map(|c| {
        let pass = &c[1] == "PASS";
        MarkerScan { marker: Some(Marker::Status), passed: pass, mismatches: u64::from(!pass), samples: 0 }
    })
}

/// Scans full simulator output. Total on any input.
pub fn scan_sim_output(output: &str) -> MarkerScan {
    let mut best: Option<MarkerScan> = None;
    for line in output.lines() {
        if let Some(s) = scan_line(line) {
            let rank = |m: &MarkerScan| m.marker.map_or(3, |k| k as u8);
            if best.is_none_or(|b| rank(&s) <= rank(&b)) {
                best = Some(s);
            }
        }
    }
    best.unwrap_or(MarkerScan { marker: None, passed: false, mismatches: 0, samples: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_formats() {
        let s = scan_sim_output("Mismatches: 0 in 439 samples\n");
        assert_eq!(s, MarkerScan { marker: Some(Marker::Mismatches), passed: true, mismatches: 0, samples: 439 });
        let s = scan_sim_output("Hint: Output 'out' has 2 mismatches.\nMismatches: 2 in 439 samples");
        assert!(!s.passed);
        assert_eq!(s.mismatches, 2);
        assert!(scan_sim_output("  5/5 tests passed  ").passed);
        assert!(!scan_sim_output("4/5 tests passed").passed);
        assert!(scan_sim_output("STATUS: PASS").passed);
        assert!(!scan_sim_output("STATUS: FAIL").passed);
    }

    #[test]
    fn priority_and_absence() {
        let s = scan_sim_output("STATUS: PASS\nMismatches: 3 in 10 samples\n");
        assert_eq!(s.marker, Some(Marker::Mismatches));
        assert!(!s.passed);
        let s = scan_sim_output("all good\n");
        assert_eq!(s.marker, None);
        assert!(!s.passed);
    }

    #[test]
    fn near_misses_are_not_markers() {
        for l in [
            "Mismatches: 0 in samples",
            "mismatches: 0 in 10 samples",
            "Total Mismatches: 0 in 10 samples",
            "STATUS: PASSED",
            "STATUS: pass",
            "5/5 test passed",
            "# 5/5 tests passed",
        ] {
            assert_eq!(scan_line(l), None, "{l}");
        }
    }
}
