// SPDX-License-Identifier: Apache-2.0

//! Graph-enhanced instruction generation and dataset emission: assemble
//! the prompt (code plus DFG/CFG text in with-graph mode), collect the
//! completion into a record, write sorted JSONL atomically, and estimate
//! pass@k without bias.

use crate::gateway::{CompletionRequest, Gateway, GatewayError, Stage};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rtlgraph_core::elab::flatten;
use rtlgraph_core::graph::build_graphs;
use rtlgraph_core::parser::parse_design;
use rtlgraph_core::textual::textualize;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "with-graph")]
    WithGraph,
    #[serde(rename = "code-only")]
    CodeOnly,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::WithGraph => write!(f, "with-graph"),
            Mode::CodeOnly => write!(f, "code-only"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphStats {
    pub dfg_nodes: usize,
    pub dfg_edges: usize,
    pub cfg_nodes: usize,
    pub cfg_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rename {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: String,
    pub stars: u64,
    /// Keyword categories with at least one hit.
    pub keywords: Vec<String>,
    pub refinement_attempts: u32,
    pub refinement_status: String,
    pub graph: GraphStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub renames: Vec<Rename>,
    pub pipeline_version: String,
}

/// One instruction-tuning pair. Key order in the JSONL schema follows the
/// field order here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub mode: Mode,
    pub instruction: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfg: Option<String>,
    pub provenance: Provenance,
}

pub const PIPELINE_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("code contains no module")]
    NoModules,
    #[error("top module '{0}' not found")]
    UnknownTop(String),
    #[error("elaboration failed: {0}")]
    Elab(String),
    #[error("graph construction failed: {0}")]
    Graph(String),
    #[error("supplied graph text is stale (regeneration differs)")]
    GraphStale,
    #[error("instruction too short: {len} chars (floor {floor})")]
    EmptyInstruction { len: usize, floor: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Regenerated graph texts for a source, used for prompts and freshness.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTexts {
    pub top: String,
    pub dfg: String,
    pub cfg: String,
    pub renames: Vec<Rename>,
    pub stats: GraphStats,
}

/// Parse `code`, flatten `top`, build both graphs, and textualize them.
pub fn regenerate_graph_texts(code: &str, top: &str) -> Result<GraphTexts, GenError> {
    let outcome = parse_design(code).map_err(|e| GenError::Elab(e.to_string()))?;
    if outcome.modules.is_empty() {
        return Err(GenError::NoModules);
    }
    if outcome.module(top).is_none() {
        return Err(GenError::UnknownTop(top.to_string()));
    }
    let flat = flatten(&outcome.modules, top).map_err(|e| GenError::Elab(e.to_string()))?;
    let (dfg, cfg) = build_graphs(&flat).map_err(|e| GenError::Graph(e.to_string()))?;
    let dfg_text = textualize(&dfg);
    let cfg_text = textualize(&cfg);
    let mut renames: Vec<Rename> = dfg_text
        .renames
        .iter()
        .chain(cfg_text.renames.iter())
        .map(|(from, to)| Rename {
            from: from.clone(),
            to: to.clone(),
        })
        .collect();
    renames.sort();
    renames.dedup();
    Ok(GraphTexts {
        top: top.to_string(),
        dfg: dfg_text.text,
        cfg: cfg_text.text,
        renames,
        stats: GraphStats {
            dfg_nodes: dfg.nodes.len(),
            dfg_edges: dfg.edges.len(),
            cfg_nodes: cfg.nodes.len(),
            cfg_edges: cfg.edges.len(),
        },
    })
}

const INSTRUCT_SYSTEM: &str = "You are a hardware design expert who writes precise natural-\
language specifications for RTL modules.";

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub temperature: f64,
    pub max_tokens: u32,
    pub min_instruction_chars: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            temperature: 0.7,
            max_tokens: 1024,
            min_instruction_chars: 200,
        }
    }
}

/// Deterministic instruction prompt. With-graph mode interleaves, in fixed
/// order: preamble, fenced code, fenced DFG text, fenced CFG text, and the
/// writing directive; code-only mode omits both graph sections. In
/// with-graph mode the supplied texts are checked against a fresh
/// regeneration and `GraphStale` is returned on any difference.
pub fn build_instruction_prompt(
    code: &str,
    top: &str,
    dfg_text: Option<&str>,
    cfg_text: Option<&str>,
    mode: Mode,
    opts: &GenOptions,
    seed_tag: &str,
) -> Result<CompletionRequest, GenError> {
    let mut user = String::new();
    user.push_str(
        "Write a natural-language design instruction for the Verilog module below. The \
instruction must describe the module so completely that a competent engineer could \
reimplement it: ports and widths, parameters, every operation mode, branch conditions, \
clock and reset behavior, and how data moves from inputs to outputs. Encapsulate the \
complex control flows and data interactions precisely and concisely.\n",
    );
    user.push_str("\nCode:\n```verilog\n");
    user.push_str(code);
    if !code.ends_with('\n') {
        user.push('\n');
    }
    user.push_str("```\n");
    if mode == Mode::WithGraph {
        let fresh = regenerate_graph_texts(code, top)?;
        let (dfg, cfg) = match (dfg_text, cfg_text) {
            (Some(d), Some(c)) => (d, c),
            _ => return Err(GenError::GraphStale),
        };
        if fresh.dfg != dfg || fresh.cfg != cfg {
            return Err(GenError::GraphStale);
        }
        user.push_str("\nData flow graph:\n```\n");
        user.push_str(dfg);
        user.push_str("```\n");
        user.push_str("\nControl flow graph:\n```\n");
        user.push_str(cfg);
        user.push_str("```\n");
    }
    user.push_str(
        "\nWrite the instruction now, as prose (no code), starting directly with the design \
description.\n",
    );
    Ok(CompletionRequest {
        system: INSTRUCT_SYSTEM.to_string(),
        user,
        temperature: opts.temperature,
        max_tokens: opts.max_tokens,
        seed_tag: seed_tag.to_string(),
    })
}

/// Inputs assembled by earlier stages for one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSeed {
    pub code: String,
    pub top: String,
    pub dfg: String,
    pub cfg: String,
    pub renames: Vec<Rename>,
    pub origin: String,
    pub stars: u64,
    pub keywords: Vec<String>,
    pub refinement_attempts: u32,
    pub refinement_status: String,
    pub graph_stats: GraphStats,
}

/// Content-hash id; the mode participates so ablation pairs get distinct ids.
pub fn record_id(mode: Mode, code: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(mode.to_string().as_bytes());
    hasher.update(b"\n");
    hasher.update(code.as_bytes());
    let digest = hasher.finalize();
    digest.iter().fold(String::new(), |mut acc, b| {
        use std::fmt::Write as _;
        let _ = write!(acc, "{:02x}", b);
        acc
    })
}

/// Ask the backend for an instruction and assemble the dataset record.
pub fn generate_pair(
    seed: &RecordSeed,
    gateway: &Gateway,
    mode: Mode,
    opts: &GenOptions,
) -> Result<DatasetRecord, GenError> {
    let tag = format!("instruct:{}:{}", seed.top, mode);
    let request = build_instruction_prompt(
        &seed.code,
        &seed.top,
        Some(seed.dfg.as_str()),
        Some(seed.cfg.as_str()),
        mode,
        opts,
        &tag,
    )?;
    let result = gateway.complete(&request, Stage::Instruction)?;
    let instruction = normalize_whitespace(&result.text);
    let len = instruction.chars().count();
    if len < opts.min_instruction_chars {
        return Err(GenError::EmptyInstruction {
            len,
            floor: opts.min_instruction_chars,
        });
    }
    Ok(DatasetRecord {
        id: record_id(mode, &seed.code),
        mode,
        instruction,
        code: seed.code.clone(),
        dfg: (mode == Mode::WithGraph).then(|| seed.dfg.clone()),
        cfg: (mode == Mode::WithGraph).then(|| seed.cfg.clone()),
        provenance: Provenance {
            origin: seed.origin.clone(),
            stars: seed.stars,
            keywords: seed.keywords.clone(),
            refinement_attempts: seed.refinement_attempts,
            refinement_status: seed.refinement_status.clone(),
            graph: seed.graph_stats,
            renames: seed.renames.clone(),
            pipeline_version: PIPELINE_VERSION.to_string(),
        },
    })
}

fn normalize_whitespace(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_string()
}

/// Write records as JSONL (sorted by id, LF endings, stable key order)
/// through a temp file renamed into place. Returns the record count.
pub fn emit_jsonl(records: &[DatasetRecord], path: &Path) -> std::io::Result<usize> {
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    for r in &sorted {
        let line = serde_json::to_string(r)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        tmp.write_all(line.as_bytes())?;
        tmp.write_all(b"\n")?;
    }
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    Ok(sorted.len())
}

pub fn read_jsonl(path: &Path) -> std::io::Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {}", idx + 1, e),
            )
        })?;
        out.push(record);
    }
    Ok(out)
}

// ----------------------------------------------------------------------
// pass@k
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("need n >= 1")]
    ZeroAttempts,
    #[error("need c <= n")]
    TooManyCorrect,
    #[error("need 1 <= k <= n")]
    BadBudget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassAtK {
    pub n: u64,
    pub c: u64,
    pub k: u64,
    pub estimate: f64,
}

impl PassAtK {
    pub fn compute(n: u64, c: u64, k: u64) -> Result<Self, DomainError> {
        Ok(PassAtK {
            n,
            c,
            k,
            estimate: pass_at_k(n, c, k)?,
        })
    }
}

/// Unbiased estimator `1 - C(n-c, k) / C(n, k)`, computed with exact
/// integer arithmetic and converted to f64 once at the end.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, DomainError> {
    if n == 0 {
        return Err(DomainError::ZeroAttempts);
    }
    if c > n {
        return Err(DomainError::TooManyCorrect);
    }
    if k == 0 || k > n {
        return Err(DomainError::BadBudget);
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c,k)/C(n,k) = prod_{i=0..k-1} (n-c-i)/(n-i)
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= BigUint::from(n - c - i);
        den *= BigUint::from(n - i);
    }
    if num.is_zero() {
        return Ok(1.0);
    }
    // estimate = (den - num) / den, evaluated at 64 fractional bits
    let diff = &den - &num;
    let scaled = (diff << 64u32) / den;
    let value = scaled.to_f64().unwrap_or(0.0) / 2f64.powi(64);
    Ok(value)
}

/// Mean of per-problem estimates for rows of (n, c).
pub fn mean_pass_at_k(rows: &[(u64, u64)], k: u64) -> Result<f64, DomainError> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(n, c) in rows {
        total += pass_at_k(n, c, k)?;
    }
    Ok(total / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendPolicy, MockBackend, MockEntry};

    const ALU: &str = r#"module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp,
           output reg [7:0] Result, output Zero);
  always @(*) begin
    case (ALUOp)
      3'b000: Result = A + B;
      default: Result = 8'b0;
    endcase
  end
  assign Zero = (Result == 8'b0);
endmodule
"#;

    fn seed() -> RecordSeed {
        let g = regenerate_graph_texts(ALU, "alu").unwrap();
        RecordSeed {
            code: ALU.to_string(),
            top: "alu".to_string(),
            dfg: g.dfg,
            cfg: g.cfg,
            renames: g.renames,
            origin: "local".into(),
            stars: 0,
            keywords: vec!["Arith & Logic".into()],
            refinement_attempts: 0,
            refinement_status: "linted".into(),
            graph_stats: g.stats,
        }
    }

    fn long_instruction() -> String {
        "This module implements a compact arithmetic logic unit. It accepts two four-bit \
operands and a three-bit operation selector, produces an eight-bit result, and raises a \
zero flag whenever the computed result is exactly zero. Unrecognized selector values \
force the result to zero."
            .to_string()
    }

    #[test]
    fn with_graph_prompt_contains_both_headers() {
        let s = seed();
        let req = build_instruction_prompt(
            &s.code,
            &s.top,
            Some(&s.dfg),
            Some(&s.cfg),
            Mode::WithGraph,
            &GenOptions::default(),
            "t",
        )
        .unwrap();
        assert!(req.user.contains("DFG module=alu"));
        assert!(req.user.contains("CFG module=alu"));
        assert!(req.user.contains("```verilog"));
    }

    #[test]
    fn code_only_prompt_has_no_graph_headers() {
        let s = seed();
        let req = build_instruction_prompt(
            &s.code,
            &s.top,
            None,
            None,
            Mode::CodeOnly,
            &GenOptions::default(),
            "t",
        )
        .unwrap();
        assert!(!req.user.contains("DFG module="));
        assert!(!req.user.contains("CFG module="));
        assert!(req.user.contains("```verilog"));
    }

    #[test]
    fn prompt_is_deterministic() {
        let s = seed();
        let a = build_instruction_prompt(
            &s.code,
            &s.top,
            Some(&s.dfg),
            Some(&s.cfg),
            Mode::WithGraph,
            &GenOptions::default(),
            "t",
        )
        .unwrap();
        let b = build_instruction_prompt(
            &s.code,
            &s.top,
            Some(&s.dfg),
            Some(&s.cfg),
            Mode::WithGraph,
            &GenOptions::default(),
            "t",
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stale_graph_rejected() {
        let s = seed();
        let stale = s.dfg.replace("width=8", "width=9");
        let err = build_instruction_prompt(
            &s.code,
            &s.top,
            Some(&stale),
            Some(&s.cfg),
            Mode::WithGraph,
            &GenOptions::default(),
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, GenError::GraphStale));
    }

    fn gw(response: &str) -> Gateway {
        Gateway::new(
            Box::new(MockBackend::new(
                vec![MockEntry {
                    tag: "default".into(),
                    response: response.into(),
                    status_sequence: vec![],
                    truncated: false,
                }],
                false,
            )),
            BackendPolicy::default(),
        )
    }

    #[test]
    fn generate_pair_roundtrip() {
        let s = seed();
        let record = generate_pair(
            &s,
            &gw(&long_instruction()),
            Mode::WithGraph,
            &GenOptions::default(),
        )
        .unwrap();
        assert_eq!(record.mode, Mode::WithGraph);
        assert!(record.dfg.is_some() && record.cfg.is_some());
        assert_eq!(record.instruction, long_instruction());
    }

    #[test]
    fn empty_instruction_rejected() {
        let s = seed();
        let err = generate_pair(&s, &gw(""), Mode::CodeOnly, &GenOptions::default()).unwrap_err();
        assert!(matches!(err, GenError::EmptyInstruction { .. }));
    }

    #[test]
    fn ablation_ids_differ_by_mode() {
        let s = seed();
        let a = generate_pair(
            &s,
            &gw(&long_instruction()),
            Mode::WithGraph,
            &GenOptions::default(),
        )
        .unwrap();
        let b = generate_pair(
            &s,
            &gw(&long_instruction()),
            Mode::CodeOnly,
            &GenOptions::default(),
        )
        .unwrap();
        assert_eq!(a.code, b.code);
        assert_ne!(a.id, b.id);
        assert!(b.dfg.is_none() && b.cfg.is_none());
    }

    #[test]
    fn emit_jsonl_deterministic_and_parseable() {
        let s = seed();
        let a = generate_pair(
            &s,
            &gw(&long_instruction()),
            Mode::WithGraph,
            &GenOptions::default(),
        )
        .unwrap();
        let b = generate_pair(
            &s,
            &gw(&long_instruction()),
            Mode::CodeOnly,
            &GenOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("out1.jsonl");
        let p2 = dir.path().join("out2.jsonl");
        assert_eq!(emit_jsonl(&[a.clone(), b.clone()], &p1).unwrap(), 2);
        assert_eq!(emit_jsonl(&[b.clone(), a.clone()], &p2).unwrap(), 2);
        let t1 = std::fs::read_to_string(&p1).unwrap();
        let t2 = std::fs::read_to_string(&p2).unwrap();
        assert_eq!(t1, t2);
        let parsed = read_jsonl(&p1).unwrap();
        let mut expect = vec![a, b];
        expect.sort_by(|x, y| x.id.cmp(&y.id));
        assert_eq!(parsed, expect);
        // empty emission
        let p3 = dir.path().join("empty.jsonl");
        assert_eq!(emit_jsonl(&[], &p3).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&p3).unwrap(), "");
    }

    #[test]
    fn pass_at_k_boundaries() {
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        assert_eq!(pass_at_k(10, 10, 5).unwrap(), 1.0);
        assert_eq!(pass_at_k(7, 0, 7).unwrap(), 0.0);
        assert_eq!(pass_at_k(7, 1, 7).unwrap(), 1.0);
    }

    #[test]
    fn pass_at_k_reference_value() {
        let v = pass_at_k(10, 3, 5).unwrap();
        let expect = 1.0 - 21.0 / 252.0;
        assert!((v - expect).abs() < 1e-12, "{} vs {}", v, expect);
    }

    #[test]
    fn pass_at_k_domain_errors() {
        assert!(pass_at_k(0, 0, 1).is_err());
        assert!(pass_at_k(5, 6, 1).is_err());
        assert!(pass_at_k(5, 2, 0).is_err());
        assert!(pass_at_k(5, 2, 6).is_err());
    }

    #[test]
    fn pass_at_k_large_values_stay_exact() {
        // n beyond u128 factorial range still works via bigints
        let v = pass_at_k(500, 100, 50).unwrap();
        assert!(v > 0.0 && v < 1.0);
        let complement = 1.0 - v;
        // cross-check against the log-space computation
        let mut log_ratio = 0.0f64;
        for i in 0..50u64 {
            log_ratio += ((400 - i) as f64).ln() - ((500 - i) as f64).ln();
        }
        assert!((complement.ln() - log_ratio).abs() < 1e-9);
    }

    #[test]
    fn mean_pass_at_k_averages() {
        let rows = vec![(10, 0), (10, 10)];
        let v = mean_pass_at_k(&rows, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(mean_pass_at_k(&[], 1).unwrap(), 0.0);
    }
}
