// SPDX-License-Identifier: Apache-2.0
//! Deterministic symbolic tier.
//!
//! K-maps and truth tables are pulled out of the specification text, reduced
//! to a minimal sum of products with Quine-McCluskey (or recognised as a
//! parity function), and emitted as a single-assignment Verilog-2001 module.
//! No model calls are made on this path.

mod emit;
mod parse;
mod qm;
mod xor;

pub use emit::{emit_module, emit_verilog, render_expression, EmitError, Realization};
pub use parse::{parse_kmap, parse_truth_table, parse_truth_tables, render_kmap, ParseError};
pub use qm::{prime_implicants, quine_mccluskey, quine_mccluskey_with, Implicant, QmOptions, SopExpression};
pub use xor::{detect_xor, XorForm};

use crate::spec::Spec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported input count; keeps exhaustive verification trivial.
pub const MAX_VARS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Zero,
    One,
    DontCare,
}

impl Value {
    pub fn from_symbol(s: &str) -> Option<Value> {
        match s {
            "0" => Some(Value::Zero),
            "1" => Some(Value::One),
            "x" | "X" | "d" | "D" | "-" | "?" => Some(Value::DontCare),
            _ => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Value::Zero => '0',
            Value::One => '1',
            Value::DontCare => 'x',
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TruthError {
    #[error("variable count {0} outside 1..={MAX_VARS}")]
    VarCount(usize),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("variable names must be distinct")]
    DuplicateNames,
}

/// A single-output boolean function over at most six inputs.
///
/// `var_names[0]` is the most significant bit of a minterm index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruthFunction {
    var_names: Vec<String>,
    output_name: String,
    values: Vec<Value>,
}

impl TruthFunction {
    pub fn new(
        var_names: Vec<String>,
        output_name: impl Into<String>,
        values: Vec<Value>,
    ) -> Result<Self, TruthError> {
        let n = var_names.len();
        if n == 0 || n > MAX_VARS {
            return Err(TruthError::VarCount(n));
        }
        if values.len() != 1 << n {
            return Err(TruthError::Length { expected: 1 << n, got: values.len() });
        }
        let mut sorted = var_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(TruthError::DuplicateNames);
        }
        Ok(Self { var_names, output_name: output_name.into(), values })
    }

    /// Function with default variable names `a, b, c, ...` and output `f`.
    pub fn from_minterms(num_vars: usize, ones: &[usize], dont_cares: &[usize]) -> Result<Self, TruthError> {
        if num_vars == 0 || num_vars > MAX_VARS {
            return Err(TruthError::VarCount(num_vars));
        }
        let mut values = vec![Value::Zero; 1 << num_vars];
        for &m in dont_cares {
            if let Some(v) = values.get_mut(m) {
                *v = Value::DontCare;
            }
        }
        for &m in ones {
            if let Some(v) = values.get_mut(m) {
                *v = Value::One;
            }
        }
        Self::new(default_names(num_vars), "f", values)
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn output_name(&self) -> &str {
        &self.output_name
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn value(&self, minterm: usize) -> Value {
        self.values[minterm]
    }

    pub fn with_output_name(mut self, name: impl Into<String>) -> Self {
        self.output_name = name.into();
        self
    }

    pub fn with_var_names(mut self, names: Vec<String>) -> Result<Self, TruthError> {
        Self::new(names, std::mem::take(&mut self.output_name), std::mem::take(&mut self.values))
    }

    pub fn minterms(&self, v: Value) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(move |(_, x)| **x == v).map(|(i, _)| i)
    }

    pub fn ones(&self) -> Vec<usize> {
        self.minterms(Value::One).collect()
    }

    pub fn dont_cares(&self) -> Vec<usize> {
        self.minterms(Value::DontCare).collect()
    }

    /// Bit of variable `var` (index into `var_names`) within `minterm`.
    pub fn bit(&self, minterm: usize, var: usize) -> bool {
        (minterm >> (self.num_vars() - 1 - var)) & 1 == 1
    }
}

pub(crate) fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

/// Result of running the symbolic tier end to end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicSolution {
    pub functions: Vec<(TruthFunction, Realization)>,
    pub source: String,
}

/// Picks the parity form when one exists, otherwise the minimal SOP.
pub fn realize(tf: &TruthFunction) -> Realization {
    match detect_xor(tf) {
        Some(x) => Realization::Parity(x),
        None => Realization::Sop(quine_mccluskey(tf)),
    }
}

/// Parses the K-map (preferred) or truth table(s) in the spec, minimizes
/// each output and emits one module. The grid is trusted over any prose.
pub fn solve_spec(spec: &Spec, module_name: &str) -> Result<SymbolicSolution, SolveError> {
    let header = spec.interface_header.as_deref();
    let functions = match parse_kmap(&spec.description, header) {
        Ok(tf) => vec![tf],
        Err(ParseError::NotFound(_)) => parse_truth_tables(&spec.description, header)?,
        Err(e) => return Err(e.into()),
    };
    let realized: Vec<(TruthFunction, Realization)> =
        functions.into_iter().map(|tf| {
            let r = realize(&tf);
            (tf, r)
        }).collect();
    let source = emit_module(&realized, module_name, header)?;
    Ok(SymbolicSolution { functions: realized, source })
}
