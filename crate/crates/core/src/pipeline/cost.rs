// SPDX-License-Identifier: Apache-2.0
//! Token usage and dollar cost.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("unpriced model `{0}`")]
    UnpricedModel(String),
    #[error("price table: {0}")]
    Table(String),
}

/// Dollars per token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input: f64,
    pub output: f64,
}

/// Supplied by the user; nothing is built in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, ModelPrice>);

impl PriceTable {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let t: Self = serde_json::from_str(text).map_err(|e| CostError::Table(e.to_string()))?;
        if let Some((m, _)) = t.0.iter().find(|(_, p)| !(p.input >= 0.0 && p.output >= 0.0)) {
            return Err(CostError::Table(format!("negative or NaN price for `{m}`")));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Table(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn insert(&mut self, model: impl Into<String>, input: f64, output: f64) {
        self.0.insert(model.into(), ModelPrice { input, output });
    }
}

/// Calls and tokens attributed to one model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelUsage {
    pub calls: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

pub type Usage = BTreeMap<String, ModelUsage>;

pub fn usage_cost(usage: &Usage, table: &PriceTable) -> Result<f64, CostError> {
    let mut total = 0.0;
    for (model, u) in usage {
        if u.tokens_in == 0 && u.tokens_out == 0 {
            continue;
        }
        let p = table.0.get(model).ok_or_else(|| CostError::UnpricedModel(model.clone()))?;
        total += u.tokens_in as f64 * p.input + u.tokens_out as f64 * p.output;
    }
    Ok(total)
}

/// Cost of every call in the run; runs without calls cost nothing.
pub fn estimate_cost(record: &super::RunRecord, table: &PriceTable) -> Result<f64, CostError> {
    usage_cost(&record.usage, table)
}
