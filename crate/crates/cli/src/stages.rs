// SPDX-License-Identifier: Apache-2.0

//! Stage execution with per-record persistence.
//!
//! Every stage reads the previous stage's JSONL artifact from the work
//! directory, processes only records missing from its own artifact
//! (reruns resume), and rewrites its artifact sorted by key through a
//! temp-file rename. With the mock backend the whole pipeline is
//! deterministic, so interrupted and uninterrupted runs converge to
//! byte-identical outputs.

use crate::config::{BackendKind, PipelineConfig};
use crate::logging::Logger;
use rayon::prelude::*;
use rtlgraph_core::elab::flatten;
use rtlgraph_core::emit::emit_source;
use rtlgraph_core::graph::{build_graphs, detect_feedback};
use rtlgraph_core::parser::parse_design;
use rtlgraph_core::textual::{parse_textual_graph, textualize};
use rtlgraph_pipeline::curator::{
    self, detect_tops, CorpusCandidate, FilterPolicy, KeywordTaxonomy, Manifest,
};
use rtlgraph_pipeline::gateway::{Gateway, GatewayError, HttpBackend, MockBackend};
use rtlgraph_pipeline::instructgen::{
    self, emit_jsonl, DatasetRecord, GenError, GenOptions, GraphStats, Mode, RecordSeed, Rename,
};
use rtlgraph_pipeline::refinery::{self, RefineConfig, RefineError, ValidationStatus};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum StageError {
    MissingPrerequisite { stage: &'static str, path: PathBuf },
    Io(std::io::Error),
    Curator(curator::CuratorError),
    Budget,
    Fatal(String),
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageError::MissingPrerequisite { stage, path } => write!(
                f,
                "stage '{}' prerequisite missing: {} (run the earlier stages first)",
                stage,
                path.display()
            ),
            StageError::Io(e) => write!(f, "io error: {}", e),
            StageError::Curator(e) => write!(f, "curation error: {}", e),
            StageError::Budget => write!(f, "token budget exhausted"),
            StageError::Fatal(m) => write!(f, "{}", m),
        }
    }
}

impl std::error::Error for StageError {}

impl From<std::io::Error> for StageError {
    fn from(e: std::io::Error) -> Self {
        StageError::Io(e)
    }
}

impl From<curator::CuratorError> for StageError {
    fn from(e: curator::CuratorError) -> Self {
        StageError::Curator(e)
    }
}

/// One persisted row: a key plus either a payload or a rejection reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row<T> {
    pub key: String,
    #[serde(flatten)]
    pub result: RowResult<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowResult<T> {
    Rejected { rejected: String },
    Ok { value: T },
}

impl<T> Row<T> {
    fn ok(key: String, value: T) -> Self {
        Row {
            key,
            result: RowResult::Ok { value },
        }
    }

    fn rejected(key: String, reason: String) -> Self {
        Row {
            key,
            result: RowResult::Rejected { rejected: reason },
        }
    }

    pub fn value(&self) -> Option<&T> {
        match &self.result {
            RowResult::Ok { value } => Some(value),
            RowResult::Rejected { .. } => None,
        }
    }

    pub fn rejection(&self) -> Option<&str> {
        match &self.result {
            RowResult::Rejected { rejected } => Some(rejected),
            RowResult::Ok { .. } => None,
        }
    }
}

// stage artifacts ------------------------------------------------------

/// One (file, top module) unit after parsing and flattening.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseUnit {
    pub path: String,
    pub origin: String,
    pub stars: u64,
    pub keywords: Vec<String>,
    pub top: String,
    /// Full original file source (the hierarchy the top needs).
    pub source: String,
    /// Canonical source of the flattened module (auditing and the
    /// external synthesis hook operate on this).
    pub flat_source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphUnit {
    #[serde(flatten)]
    pub parse: ParseUnit,
    pub dfg: String,
    pub cfg: String,
    pub renames: Vec<Rename>,
    pub stats: GraphStats,
    pub feedback_cycles: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineUnit {
    #[serde(flatten)]
    pub graph: GraphUnit,
    pub code: String,
    pub refinement_attempts: u32,
    pub refinement_status: String,
    pub residual_issues: usize,
}

// report ---------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub inputs: usize,
    pub processed: usize,
    pub resumed: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl StageReport {
    fn tally<T>(stage: &str, inputs: usize, processed: usize, rows: &[Row<T>]) -> Self {
        let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
        let mut accepted = 0;
        for r in rows {
            match &r.result {
                RowResult::Ok { .. } => accepted += 1,
                RowResult::Rejected { rejected: reason } => {
                    *rejected.entry(reason.clone()).or_insert(0) += 1;
                }
            }
        }
        StageReport {
            stage: stage.to_string(),
            inputs,
            processed,
            resumed: inputs.saturating_sub(processed),
            accepted,
            rejected,
        }
    }
}

// persistence helpers ----------------------------------------------------

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<Row<T>>, StageError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row<T> = serde_json::from_str(line).map_err(|e| {
            StageError::Fatal(format!("{} line {}: {}", path.display(), idx + 1, e))
        })?;
        out.push(row);
    }
    Ok(out)
}

fn write_rows<T: Serialize>(path: &Path, rows: &mut Vec<Row<T>>) -> Result<(), StageError> {
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_in(dir)?;
    for r in rows.iter() {
        let line = serde_json::to_string(r)
            .map_err(|e| StageError::Fatal(format!("serialize row: {}", e)))?;
        tmp.write_all(line.as_bytes())?;
        tmp.write_all(b"\n")?;
    }
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| StageError::Io(e.error))?;
    Ok(())
}

fn tempfile_in(dir: &Path) -> Result<tempfile::NamedTempFile, StageError> {
    tempfile::NamedTempFile::new_in(dir).map_err(StageError::Io)
}

fn artifact(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.work_dir.join(name)
}

fn require<T: DeserializeOwned>(
    cfg: &PipelineConfig,
    name: &str,
    stage: &'static str,
) -> Result<Vec<Row<T>>, StageError> {
    let path = artifact(cfg, name);
    if !path.exists() {
        return Err(StageError::MissingPrerequisite { stage, path });
    }
    read_rows(&path)
}

/// Run `work` only for keys missing from the existing artifact, merge, and
/// rewrite the artifact; returns all rows plus the freshly-processed count.
fn resume_stage<I, T>(
    cfg: &PipelineConfig,
    name: &str,
    inputs: Vec<(String, I)>,
    work: impl Fn(&I) -> Result<Row<T>, StageError> + Sync,
) -> Result<(Vec<Row<T>>, usize), StageError>
where
    I: Sync,
    T: Serialize + DeserializeOwned + Clone + Send,
{
    let path = artifact(cfg, name);
    let existing: Vec<Row<T>> = if path.exists() {
        read_rows(&path)?
    } else {
        Vec::new()
    };
    let have: std::collections::HashSet<&str> =
        existing.iter().map(|r| r.key.as_str()).collect();
    let pending: Vec<&(String, I)> = inputs
        .iter()
        .filter(|(k, _)| !have.contains(k.as_str()))
        .collect();
    let processed = pending.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| StageError::Fatal(e.to_string()))?;
    let fresh: Vec<Result<Row<T>, StageError>> =
        pool.install(|| pending.par_iter().map(|(_, input)| work(input)).collect());

    let mut rows = existing;
    for r in fresh {
        rows.push(r?);
    }
    // drop rows whose inputs disappeared (corpus shrank between runs)
    let valid: std::collections::HashSet<&str> =
        inputs.iter().map(|(k, _)| k.as_str()).collect();
    rows.retain(|r| valid.contains(r.key.as_str()));
    write_rows(&path, &mut rows)?;
    Ok((rows, processed))
}

// gateway construction ---------------------------------------------------

pub fn build_gateway(cfg: &PipelineConfig) -> Result<Gateway, StageError> {
    let backend: Box<dyn rtlgraph_pipeline::gateway::CompletionBackend> = match cfg.backend_kind {
        BackendKind::Mock => {
            let script = cfg
                .mock_script
                .as_ref()
                .expect("validated: mock backend has a script");
            let mut mock = MockBackend::from_script(script, cfg.mock_strict)?;
            if let Some(capture) = &cfg.capture_path {
                if let Some(dir) = capture.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                mock = mock.with_capture_file(capture)?;
            }
            Box::new(mock)
        }
        BackendKind::Http => Box::new(HttpBackend::new(
            cfg.endpoint.clone(),
            cfg.model.clone(),
            Some(cfg.credential_env.as_str()),
        )),
    };
    Ok(Gateway::new(backend, cfg.backend_policy()))
}

fn taxonomy(cfg: &PipelineConfig) -> Result<KeywordTaxonomy, StageError> {
    let mut tax = KeywordTaxonomy::default();
    if let Some(path) = &cfg.taxonomy {
        tax.extend_from_file(path)?;
    }
    Ok(tax)
}

fn filter_policy(cfg: &PipelineConfig) -> FilterPolicy {
    FilterPolicy {
        min_lines: cfg.min_lines,
        max_lines: cfg.max_lines,
        min_stars: cfg.min_stars,
        count_mode: cfg.count_mode,
        extensions: cfg.extensions.clone(),
    }
}

// stages -----------------------------------------------------------------

/// Scan, classify, filter, rank, dedup. The artifact holds every candidate
/// with its verdict; downstream stages use only the accepted ones.
pub fn run_curate(cfg: &PipelineConfig, log: &Logger) -> Result<StageReport, StageError> {
    let tax = taxonomy(cfg)?;
    let policy = filter_policy(cfg);
    let manifest = match &cfg.manifest {
        Some(p) => Some(Manifest::load(p)?),
        None => None,
    };
    let mut skipped = Vec::new();
    let mut candidates = curator::scan_corpus(
        &cfg.corpus_root,
        manifest.as_ref(),
        &tax,
        &policy,
        &mut skipped,
    )?;
    for (path, reason) in &skipped {
        log.event("curate.skip", &[("path", path.clone()), ("reason", reason.clone())]);
    }
    for c in candidates.iter_mut() {
        c.verdict = Some(curator::filter_candidate(c, &policy, &tax));
    }
    let ranked = curator::rank_and_dedup(&candidates);
    let ranked_paths: std::collections::HashSet<&str> =
        ranked.iter().map(|c| c.path.as_str()).collect();

    let mut rows: Vec<Row<CorpusCandidate>> = Vec::new();
    for c in candidates {
        let key = c.path.clone();
        match &c.verdict {
            // only the ranked copy of duplicate content survives
            Some(curator::Verdict::Accepted) if ranked_paths.contains(c.path.as_str()) => {
                rows.push(Row::ok(key, c));
            }
            Some(curator::Verdict::Accepted) => {
                rows.push(Row::rejected(key, "duplicate-content".into()));
            }
            Some(curator::Verdict::Rejected(reason)) => {
                rows.push(Row::rejected(key, reason.to_string()));
            }
            None => rows.push(Row::rejected(key, "unfiltered".into())),
        }
    }
    let inputs = rows.len();
    write_rows(&artifact(cfg, "curate.jsonl"), &mut rows)?;
    let report = StageReport::tally("curate", inputs, inputs, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Parse accepted candidates, flatten every top, and persist per-unit
/// sources. Diagnostics print as `path:line:col: severity: message`.
pub fn run_parse(cfg: &PipelineConfig, log: &Logger) -> Result<StageReport, StageError> {
    let candidates: Vec<Row<CorpusCandidate>> = require(cfg, "curate.jsonl", "parse")?;
    let mut inputs: Vec<(String, (CorpusCandidate, String))> = Vec::new();
    for row in &candidates {
        if let Some(c) = row.value() {
            for top in &c.tops {
                let key = unit_key_for(&c.source, top);
                inputs.push((key, (c.clone(), top.clone())));
            }
        }
    }
    let total = inputs.len();

    let (rows, processed) = resume_stage(cfg, "parse.jsonl", inputs, |(c, top)| {
        let key = unit_key_for(&c.source, top);
        let outcome = match parse_design(&c.source) {
            Ok(o) => o,
            Err(e) => {
                return Ok(Row::rejected(key, format!("lex-error: {}", e)));
            }
        };
        for d in &outcome.diagnostics {
            log.event("parse.diag", &[("msg", d.render(&c.path))]);
        }
        match flatten(&outcome.modules, top) {
            Ok(flat) => {
                for d in &flat.diagnostics {
                    log.event("parse.diag", &[("msg", d.render(&c.path))]);
                }
                Ok(Row::ok(
                    key,
                    ParseUnit {
                        path: c.path.clone(),
                        origin: c.origin.clone(),
                        stars: c.stars,
                        keywords: c
                            .keyword_profile
                            .iter()
                            .filter(|(_, hits)| **hits > 0)
                            .map(|(cat, _)| cat.clone())
                            .collect(),
                        top: top.clone(),
                        source: c.source.clone(),
                        flat_source: emit_source(&flat.module),
                    },
                ))
            }
            Err(e) => Ok(Row::rejected(key, format!("elab-error: {}", e))),
        }
    })?;
    let report = StageReport::tally("parse", total, processed, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Build DFG/CFG for every parse unit and persist the textual encodings.
pub fn run_graph(cfg: &PipelineConfig, log: &Logger) -> Result<StageReport, StageError> {
    let parsed: Vec<Row<ParseUnit>> = require(cfg, "parse.jsonl", "graph")?;
    let inputs: Vec<(String, ParseUnit)> = parsed
        .iter()
        .filter_map(|r| r.value().map(|v| (r.key.clone(), v.clone())))
        .collect();
    let total = inputs.len();
    let max_nodes = cfg.graph_max_nodes;

    let (rows, processed) = resume_stage(cfg, "graph.jsonl", inputs, |unit| {
        let key = unit_key(unit);
        match graph_texts(unit) {
            Ok((dfg_graph, dfg, cfg_text, renames, stats)) => {
                if stats.dfg_nodes > max_nodes || stats.cfg_nodes > max_nodes {
                    return Ok(Row::rejected(
                        key,
                        format!("graph-too-large: {} nodes", stats.dfg_nodes.max(stats.cfg_nodes)),
                    ));
                }
                let feedback = detect_feedback(&dfg_graph);
                Ok(Row::ok(
                    key,
                    GraphUnit {
                        parse: unit.clone(),
                        dfg,
                        cfg: cfg_text,
                        renames,
                        stats,
                        feedback_cycles: feedback.cycles.len(),
                    },
                ))
            }
            Err(e) => Ok(Row::rejected(key, e)),
        }
    })?;
    let report = StageReport::tally("graph", total, processed, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Stable per-unit key: content hash prefix of the source plus the top
/// module name. Shared by every stage so resume matching lines up.
pub fn unit_key_for(source: &str, top: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(16).fold(String::new(), |mut acc, b| {
        use std::fmt::Write as _;
        let _ = write!(acc, "{:02x}", b);
        acc
    });
    format!("{}:{}", hex, top)
}

fn unit_key(unit: &ParseUnit) -> String {
    unit_key_for(&unit.source, &unit.top)
}

type GraphTextsOut = (
    rtlgraph_core::graph::FlowGraph,
    String,
    String,
    Vec<Rename>,
    GraphStats,
);

fn graph_texts(unit: &ParseUnit) -> Result<GraphTextsOut, String> {
    let outcome = parse_design(&unit.source).map_err(|e| format!("lex-error: {}", e))?;
    let flat =
        flatten(&outcome.modules, &unit.top).map_err(|e| format!("elab-error: {}", e))?;
    let (dfg, cfg) = build_graphs(&flat).map_err(|e| format!("graph-error: {}", e))?;
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
    let stats = GraphStats {
        dfg_nodes: dfg.nodes.len(),
        dfg_edges: dfg.edges.len(),
        cfg_nodes: cfg.nodes.len(),
        cfg_edges: cfg.edges.len(),
    };
    Ok((dfg, dfg_text.text, cfg_text.text, renames, stats))
}

/// Verify the textual encodings parse back losslessly (and re-serialize to
/// the same bytes) before they are used in prompts.
pub fn run_textualize(cfg: &PipelineConfig, log: &Logger) -> Result<StageReport, StageError> {
    let graphs: Vec<Row<GraphUnit>> = require(cfg, "graph.jsonl", "textualize")?;
    let inputs: Vec<(String, GraphUnit)> = graphs
        .iter()
        .filter_map(|r| r.value().map(|v| (r.key.clone(), v.clone())))
        .collect();
    let total = inputs.len();

    let (rows, processed) = resume_stage(cfg, "textualize.jsonl", inputs, |unit| {
        let key = unit_key(&unit.parse);
        for (name, text) in [("dfg", &unit.dfg), ("cfg", &unit.cfg)] {
            match parse_textual_graph(text) {
                Ok(parsed) => {
                    let re = textualize(&parsed);
                    if re.text != *text {
                        return Ok(Row::rejected(
                            key,
                            format!("textual-roundtrip-mismatch: {}", name),
                        ));
                    }
                }
                Err(e) => {
                    return Ok(Row::rejected(key, format!("textual-parse: {}: {}", name, e)))
                }
            }
        }
        Ok(Row::ok(key, unit.clone()))
    })?;
    let report = StageReport::tally("textualize", total, processed, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Diagnose and (when needed) LLM-refine each unit, re-deriving graphs
/// when the code changed; units that do not reach `linted` are dropped.
pub fn run_refine(
    cfg: &PipelineConfig,
    gateway: &Gateway,
    log: &Logger,
) -> Result<StageReport, StageError> {
    let texts: Vec<Row<GraphUnit>> = require(cfg, "textualize.jsonl", "refine")?;
    let inputs: Vec<(String, GraphUnit)> = texts
        .iter()
        .filter_map(|r| r.value().map(|v| (r.key.clone(), v.clone())))
        .collect();
    let total = inputs.len();
    let refine_cfg = RefineConfig {
        max_attempts: cfg.refine_max_attempts,
        hard_fail: false,
        synthesis_cmd: cfg.synthesis_cmd.clone(),
        temperature: cfg.refine_temperature,
        max_tokens: cfg.refine_max_tokens,
    };

    let (rows, processed) = resume_stage(cfg, "refine.jsonl", inputs, |unit| {
        let key = unit_key(&unit.parse);
        let refined = match refinery::refine(&unit.parse.source, gateway, &refine_cfg) {
            Ok(r) => r,
            Err(RefineError::Gateway(GatewayError::BudgetExhausted)) => {
                return Err(StageError::Budget)
            }
            Err(e) => return Ok(Row::rejected(key, format!("refine-error: {}", e))),
        };
        if refined.status < ValidationStatus::Linted {
            return Ok(Row::rejected(
                key,
                format!("validation-gate: status {}", refined.status),
            ));
        }
        let mut out = RefineUnit {
            graph: unit.clone(),
            code: refined.refined.clone(),
            refinement_attempts: refined.attempts,
            refinement_status: refined.status.to_string(),
            residual_issues: refined.residual_issues.len(),
        };
        if refined.refined != unit.parse.source {
            // refreshed code needs refreshed graphs
            let outcome = match parse_design(&refined.refined) {
                Ok(o) => o,
                Err(e) => return Ok(Row::rejected(key, format!("refined-lex: {}", e))),
            };
            let tops = detect_tops(&outcome.modules);
            let top = if tops.iter().any(|t| t == &unit.parse.top) {
                unit.parse.top.clone()
            } else if tops.len() == 1 {
                tops[0].clone()
            } else {
                return Ok(Row::rejected(key, "refined-top-ambiguous".into()));
            };
            let mut refreshed = unit.parse.clone();
            refreshed.top = top;
            refreshed.source = refined.refined.clone();
            match graph_texts(&refreshed) {
                Ok((_, dfg, cfg_text, renames, stats)) => {
                    refreshed.flat_source = {
                        let o = parse_design(&refreshed.source).expect("just parsed");
                        match flatten(&o.modules, &refreshed.top) {
                            Ok(flat) => emit_source(&flat.module),
                            Err(e) => {
                                return Ok(Row::rejected(key, format!("refined-elab: {}", e)))
                            }
                        }
                    };
                    out.graph = GraphUnit {
                        parse: refreshed,
                        dfg,
                        cfg: cfg_text,
                        renames,
                        stats,
                        feedback_cycles: unit.feedback_cycles,
                    };
                }
                Err(e) => return Ok(Row::rejected(key, format!("refined-graph: {}", e))),
            }
        }
        Ok(Row::ok(key, out))
    })?;
    let report = StageReport::tally("refine", total, processed, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Generate instruction records for every refined unit in the configured
/// mode(s).
pub fn run_instruct(
    cfg: &PipelineConfig,
    gateway: &Gateway,
    log: &Logger,
) -> Result<StageReport, StageError> {
    let refined: Vec<Row<RefineUnit>> = require(cfg, "refine.jsonl", "instruct")?;
    let modes = cfg.mode.modes();
    let mut inputs: Vec<(String, (RefineUnit, Mode))> = Vec::new();
    for row in &refined {
        if let Some(unit) = row.value() {
            for mode in &modes {
                let key = format!("{}:{}", unit_key(&unit.graph.parse), mode);
                inputs.push((key, (unit.clone(), *mode)));
            }
        }
    }
    let total = inputs.len();
    let opts = GenOptions {
        temperature: cfg.instruct_temperature,
        max_tokens: cfg.instruct_max_tokens,
        min_instruction_chars: cfg.min_instruction_chars,
    };

    let (rows, processed) = resume_stage(cfg, "instruct.jsonl", inputs, |(unit, mode)| {
        let key = format!("{}:{}", unit_key(&unit.graph.parse), mode);
        let seed = RecordSeed {
            code: unit.code.clone(),
            top: unit.graph.parse.top.clone(),
            dfg: unit.graph.dfg.clone(),
            cfg: unit.graph.cfg.clone(),
            renames: unit.graph.renames.clone(),
            origin: unit.graph.parse.origin.clone(),
            stars: unit.graph.parse.stars,
            keywords: unit.graph.parse.keywords.clone(),
            refinement_attempts: unit.refinement_attempts,
            refinement_status: unit.refinement_status.clone(),
            graph_stats: unit.graph.stats,
        };
        match instructgen::generate_pair(&seed, gateway, *mode, &opts) {
            Ok(record) => Ok(Row::ok(key, record)),
            Err(GenError::Gateway(GatewayError::BudgetExhausted)) => Err(StageError::Budget),
            Err(e) => Ok(Row::rejected(key, format!("instruct-error: {}", e))),
        }
    })?;
    let report = StageReport::tally("instruct", total, processed, &rows);
    log_report(log, &report);
    Ok(report)
}

/// Collect accepted records from the instruct artifact into the final
/// dataset file.
pub fn run_emit(cfg: &PipelineConfig, log: &Logger) -> Result<usize, StageError> {
    let rows: Vec<Row<DatasetRecord>> = require(cfg, "instruct.jsonl", "emit")?;
    let records: Vec<DatasetRecord> = rows
        .iter()
        .filter_map(|r| r.value().cloned())
        .collect();
    let count = emit_jsonl(&records, &cfg.output)?;
    log.event(
        "emit.done",
        &[
            ("path", cfg.output.display().to_string()),
            ("records", count.to_string()),
        ],
    );
    Ok(count)
}

/// The full pipeline: curate, parse, graph, textualize, refine, instruct,
/// emit; returns the per-stage reports and the final record count.
pub fn run_all(
    cfg: &PipelineConfig,
    log: &Logger,
) -> Result<(Vec<StageReport>, usize), StageError> {
    let gateway = build_gateway(cfg)?;
    let mut reports = Vec::new();
    reports.push(run_curate(cfg, log)?);
    reports.push(run_parse(cfg, log)?);
    reports.push(run_graph(cfg, log)?);
    reports.push(run_textualize(cfg, log)?);
    reports.push(run_refine(cfg, &gateway, log)?);
    reports.push(run_instruct(cfg, &gateway, log)?);
    let count = run_emit(cfg, log)?;
    let cost = gateway.cost_report(cfg.price_per_1k_tokens);
    log.event(
        "cost.report",
        &[
            ("total_tokens", cost.total_tokens.to_string()),
            ("estimated_spend", format!("{:.4}", cost.estimated_spend)),
            (
                "refinement_requests",
                cost.refinement.requests.to_string(),
            ),
            (
                "instruction_requests",
                cost.instruction.requests.to_string(),
            ),
        ],
    );
    Ok((reports, count))
}

fn log_report(log: &Logger, report: &StageReport) {
    let rejects: Vec<String> = report
        .rejected
        .iter()
        .map(|(k, v)| format!("{}={}", k, v))
        .collect();
    log.event(
        "stage.done",
        &[
            ("stage", report.stage.clone()),
            ("inputs", report.inputs.to_string()),
            ("processed", report.processed.to_string()),
            ("resumed", report.resumed.to_string()),
            ("accepted", report.accepted.to_string()),
            ("rejected", rejects.join(",")),
        ],
    );
}

// stats ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub records: usize,
    pub by_mode: BTreeMap<String, usize>,
    pub keyword_histogram: BTreeMap<String, usize>,
    pub dfg_node_percentiles: [usize; 3],
    pub cfg_node_percentiles: [usize; 3],
}

/// Record counts by mode, keyword category histogram, and p50/p90/p99
/// graph sizes for an emitted dataset.
pub fn dataset_stats(path: &Path) -> Result<DatasetStats, StageError> {
    let records = instructgen::read_jsonl(path)?;
    let mut by_mode: BTreeMap<String, usize> = BTreeMap::new();
    let mut keyword_histogram: BTreeMap<String, usize> = BTreeMap::new();
    let mut dfg_sizes = Vec::new();
    let mut cfg_sizes = Vec::new();
    for r in &records {
        *by_mode.entry(r.mode.to_string()).or_insert(0) += 1;
        for k in &r.provenance.keywords {
            *keyword_histogram.entry(k.clone()).or_insert(0) += 1;
        }
        dfg_sizes.push(r.provenance.graph.dfg_nodes);
        cfg_sizes.push(r.provenance.graph.cfg_nodes);
    }
    Ok(DatasetStats {
        records: records.len(),
        by_mode,
        keyword_histogram,
        dfg_node_percentiles: percentiles(&mut dfg_sizes),
        cfg_node_percentiles: percentiles(&mut cfg_sizes),
    })
}

fn percentiles(values: &mut Vec<usize>) -> [usize; 3] {
    if values.is_empty() {
        return [0, 0, 0];
    }
    values.sort_unstable();
    let pick = |p: f64| {
        let idx = ((values.len() as f64 - 1.0) * p).round() as usize;
        values[idx]
    };
    [pick(0.50), pick(0.90), pick(0.99)]
}
