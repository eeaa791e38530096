// SPDX-License-Identifier: Apache-2.0

//! Verilog frontend, hierarchy elaboration, and control/data flow graph
//! extraction for RTL dataset pipelines.
//!
//! The crate is organized as a pipeline of pure passes:
//!
//! * [`lexer`] / [`parser`] / [`emit`] — a synthesizable-subset Verilog
//!   frontend with lossless tokens, recoverable diagnostics, and a
//!   canonical source printer.
//! * [`classify`] — file classification (RTL / testbench / netlist).
//! * [`elab`] — parameter resolution, generate expansion, completeness
//!   checking, and hierarchy flattening into a single module.
//! * [`graph`] — data-flow and control-flow graph construction with node
//!   typing, temporal classification, and feedback-loop detection.
//! * [`textual`] — a byte-deterministic, line-oriented textual graph
//!   encoding and its parser.
//!
//! All values are immutable after construction and safe to share across
//! threads; parallelism is expected at file granularity in callers.

pub mod ast;
pub mod classify;
pub mod diag;
pub mod elab;
pub mod emit;
pub mod graph;
pub mod lexer;
pub mod parser;
pub mod textual;

pub use ast::{AstModule, Expression, ModuleItem, Port, Statement};
pub use classify::{classify_source, FileClass};
pub use diag::{Diagnostic, Severity};
pub use elab::{check_completeness, flatten, resolve_parameters, FlatDesign};
pub use graph::{
    build_cfg, build_dfg, dependency_closure, detect_feedback, FlowGraph, GraphKind,
};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_design, ParseOutcome};
pub use textual::{parse_textual_graph, textualize, TextualGraph};
