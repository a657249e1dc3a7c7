// SPDX-License-Identifier: Apache-2.0
use super::qm::{Constant, SopExpression};
use super::xor::XorForm;
use super::TruthFunction;
use crate::text::is_identifier;
use crate::verilog::{header_ports, Direction};
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmitError {
    #[error("`{0}` is not a valid Verilog identifier")]
    InvalidIdentifier(String),
    #[error("interface header does not declare `{0}`")]
    HeaderMismatch(String),
    #[error("no functions to emit")]
    Empty,
    #[error("outputs do not share one input variable list")]
    InconsistentInputs,
}

/// How one output is realised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Realization {
    Sop(SopExpression),
    Parity(XorForm),
}

impl Realization {
    pub fn eval(&self, tf: &TruthFunction, m: usize) -> bool {
        match self {
            Realization::Sop(e) => e.eval(m),
            Realization::Parity(x) => x.eval(tf, m),
        }
    }
}

/// Right-hand side of the continuous assignment for one output.
pub fn render_expression(tf: &TruthFunction, r: &Realization) -> String {
    let names = tf.var_names();
    match r {
        Realization::Parity(x) => {
            let body = x.vars.iter().map(|&v| names[v].as_str()).collect::<Vec<_>>().join(" ^ ");
            if x.invert {
                format!("~({body})")
            } else {
                body
            }
        }
        Realization::Sop(e) => match e.constant {
            Some(Constant::Zero) => "1'b0".to_string(),
            Some(Constant::One) => "1'b1".to_string(),
            None => {
                let multi = e.terms.len() > 1;
                e.terms
                    .iter()
                    .map(|t| {
                        let lits: Vec<String> = t
                            .literals(e.num_vars)
                            .into_iter()
                            .map(|(v, pos)| if pos { names[v].clone() } else { format!("~{}", names[v]) })
                            .collect();
                        if multi && lits.len() > 1 {
                            format!("({})", lits.join(" & "))
                        } else {
                            lits.join(" & ")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" | ")
            }
        },
    }
}

/// Single-output convenience wrapper around [`emit_module`].
pub fn emit_verilog(
    tf: &TruthFunction,
    expr: &SopExpression,
    xor: Option<&XorForm>,
    module_name: &str,
) -> Result<String, EmitError> {
    let r = match xor {
        Some(x) => Realization::Parity(x.clone()),
        None => Realization::Sop(expr.clone()),
    };
    emit_module(&[(tf.clone(), r)], module_name, None)
}

/// Emits one Verilog-2001 module with a continuous assignment per output.
/// When `interface_header` is given it is used verbatim and must declare
/// every input and output.
pub fn emit_module(
    outputs: &[(TruthFunction, Realization)],
    module_name: &str,
    interface_header: Option<&str>,
) -> Result<String, EmitError> {
    let (first, _) = outputs.first().ok_or(EmitError::Empty)?;
    let inputs = first.var_names();
    if outputs.iter().any(|(tf, _)| tf.var_names() != inputs) {
        return Err(EmitError::InconsistentInputs);
    }
    let mut out = String::new();
    match interface_header {
        Some(header) => {
            let ports = header_ports(header);
            let declared = |name: &str, dir: Direction| ports.iter().any(|p| p.name == name && p.direction == dir);
            for v in inputs {
                if !declared(v, Direction::Input) {
                    return Err(EmitError::HeaderMismatch(v.clone()));
                }
            }
            for (tf, _) in outputs {
                if !declared(tf.output_name(), Direction::Output) {
                    return Err(EmitError::HeaderMismatch(tf.output_name().to_string()));
                }
            }
            out.push_str(header.trim_end());
            out.push('\n');
        }
        None => {
            if !is_identifier(module_name) {
                return Err(EmitError::InvalidIdentifier(module_name.to_string()));
            }
            for name in inputs.iter().map(String::as_str).chain(outputs.iter().map(|(tf, _)| tf.output_name())) {
                if !is_identifier(name) {
                    return Err(EmitError::InvalidIdentifier(name.to_string()));
                }
            }
            let mut decls: Vec<String> = inputs.iter().map(|v| format!("    input {v}")).collect();
            decls.extend(outputs.iter().map(|(tf, _)| format!("    output {}", tf.output_name())));
            let _ = writeln!(out, "module {module_name} (\n{}\n);", decls.join(",\n"));
        }
    }
    for (tf, r) in outputs {
        let _ = writeln!(out, "    assign {} = {};", tf.output_name(), render_expression(tf, r));
    }
    out.push_str("endmodule\n");
    Ok(out)
}
