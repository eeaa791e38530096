// SPDX-License-Identifier: Apache-2.0

//! Dataset pipeline machinery on top of the RTL frontend: corpus curation,
//! a retrying LLM gateway with a deterministic mock, issue-driven code
//! refinement, and instruction dataset emission with a pass@k estimator.

pub mod curator;
pub mod gateway;
pub mod instructgen;
pub mod refinery;

pub use curator::{
    filter_candidate, keyword_profile, rank_and_dedup, scan_corpus, CorpusCandidate,
    FilterPolicy, KeywordTaxonomy, Manifest, Verdict,
};
pub use gateway::{
    cost_report, BackendPolicy, CompletionBackend, CompletionRequest, CompletionResult,
    CostLedger, CostReport, Gateway, GatewayError, HttpBackend, MockBackend, Stage,
};
pub use instructgen::{
    build_instruction_prompt, emit_jsonl, generate_pair, pass_at_k, DatasetRecord, GenOptions,
    Mode, PassAtK,
};
pub use refinery::{
    build_refinement_prompt, diagnose, external_synthesis_check, lint_synthesizable, refine,
    RefineConfig, RefinedModule, RefinementIssue, ValidationStatus,
};
