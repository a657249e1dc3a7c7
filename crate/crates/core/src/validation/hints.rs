// SPDX-License-Identifier: Apache-2.0
//! Fix-hint lookup keyed by (design category, error category).

use super::ErrorCategory;
use crate::spec::DesignCategory;
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Deserialize)]
struct HintFile {
    hints: Vec<HintRow>,
}

#[derive(Deserialize)]
struct HintRow {
    design: DesignCategory,
    error: ErrorCategory,
    hints: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct HintDb {
    table: BTreeMap<(DesignCategory, ErrorCategory), Vec<String>>,
}

impl HintDb {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: HintFile = serde_json::from_str(text)?;
        let mut table: BTreeMap<_, Vec<String>> = BTreeMap::new();
        for row in file.hints {
            table.entry((row.design, row.error)).or_default().extend(row.hints);
        }
        Ok(Self { table })
    }

    pub fn seed() -> Self {
        Self::from_json(include_str!("../../data/fix_hints.json")).expect("bundled hint table parses")
    }

    /// Hints for the exact pair, else for `(unknown, error)`, else none.
    pub fn fix_hints(&self, error: ErrorCategory, design: DesignCategory) -> Vec<String> {
        self.table
            .get(&(design, error))
            .or_else(|| self.table.get(&(DesignCategory::Unknown, error)))
            .cloned()
            .unwrap_or_default()
    }
}

/// Lookup against the bundled table.
pub fn fix_hints(error: ErrorCategory, design: DesignCategory) -> Vec<String> {
    use std::sync::LazyLock;
    static DB: LazyLock<HintDb> = LazyLock::new(HintDb::seed);
    DB.fix_hints(error, design)
}
