// SPDX-License-Identifier: Apache-2.0
//! RTL generation from natural-language specifications.

pub mod agents;
pub mod guidance;
pub mod hierarchy;
pub mod kmap;
pub mod knowledge;
pub mod nn;
pub mod orchestrator;
pub mod pipeline;
pub mod spec;
pub mod text;
pub mod validation;
pub mod verilog;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/routing.md")]
    pub struct Routing;
    #[doc = include_str!("../../../book/src/kmap.md")]
    pub struct Kmap;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    pub struct Retrieval;
    #[doc = include_str!("../../../book/src/agents.md")]
    pub struct Agents;
    #[doc = include_str!("../../../book/src/validation.md")]
    pub struct Validation;
    #[doc = include_str!("../../../book/src/orchestration.md")]
    pub struct Orchestration;
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    pub struct Hierarchy;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub struct Pipeline;
}
