// SPDX-License-Identifier: Apache-2.0

//! Issue-driven code refinement: deterministic diagnosis (missing
//! dependencies, undefined symbols, syntax, lint), a fixed prompt template,
//! a bounded LLM repair loop, and an optional external synthesis gate.

use crate::gateway::{CompletionRequest, Gateway, GatewayError, Stage};
use rtlgraph_core::ast::*;
use rtlgraph_core::diag::{DiagKind, Severity};
use rtlgraph_core::elab::{check_completeness, resolve_parameters};
use rtlgraph_core::parser::parse_design;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum IssueKind {
    MissingDependency,
    UndefinedSymbol,
    Syntax,
    Lint,
}

impl std::fmt::Display for IssueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IssueKind::MissingDependency => write!(f, "missing-dependency"),
            IssueKind::UndefinedSymbol => write!(f, "undefined-symbol"),
            IssueKind::Syntax => write!(f, "syntax"),
            IssueKind::Lint => write!(f, "lint"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub struct RefinementIssue {
    pub kind: IssueKind,
    pub subject: String,
    pub detail: String,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub enum ValidationStatus {
    #[default]
    Failed,
    Parsed,
    Linted,
    SynthChecked,
}

impl std::fmt::Display for ValidationStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationStatus::Failed => write!(f, "failed"),
            ValidationStatus::Parsed => write!(f, "parsed"),
            ValidationStatus::Linted => write!(f, "linted"),
            ValidationStatus::SynthChecked => write!(f, "synth-checked"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedModule {
    pub original: String,
    pub refined: String,
    pub issues_addressed: Vec<RefinementIssue>,
    pub residual_issues: Vec<RefinementIssue>,
    pub status: ValidationStatus,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no fenced code block in model output")]
    ExtractionFailed,
    #[error("refinement failed with {} residual issues", residual.len())]
    RefinementFailed { residual: Vec<RefinementIssue> },
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub max_attempts: u32,
    /// Error out instead of returning the best attempt with residuals.
    pub hard_fail: bool,
    pub synthesis_cmd: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_attempts: 2,
            hard_fail: false,
            synthesis_cmd: None,
            temperature: 0.2,
            max_tokens: 4096,
        }
    }
}

// ----------------------------------------------------------------------
// diagnosis
// ----------------------------------------------------------------------

/// Deterministic analysis: parse diagnostics, unresolved identifiers,
/// missing instantiated modules, and lint errors. Empty means no
/// refinement is needed.
pub fn diagnose(source: &str) -> Vec<RefinementIssue> {
    let mut issues: BTreeSet<RefinementIssue> = BTreeSet::new();
    let outcome = match parse_design(source) {
        Ok(o) => o,
        Err(e) => {
            return vec![RefinementIssue {
                kind: IssueKind::Syntax,
                subject: format!("{}:{}", e.line, e.column),
                detail: e.message,
            }]
        }
    };
    if outcome.modules.is_empty() {
        issues.insert(RefinementIssue {
            kind: IssueKind::Syntax,
            subject: "file".into(),
            detail: "no module found".into(),
        });
    }
    for d in &outcome.diagnostics {
        if d.severity != Severity::Error {
            continue;
        }
        let subject = quoted_subject(&d.message).unwrap_or_else(|| format!("{}:{}", d.line, d.column));
        match d.kind {
            DiagKind::UnresolvedIdentifier => {
                issues.insert(RefinementIssue {
                    kind: IssueKind::UndefinedSymbol,
                    subject,
                    detail: d.message.clone(),
                });
            }
            DiagKind::Lex
            | DiagKind::Parse
            | DiagKind::UnsupportedConstruct
            | DiagKind::DuplicateName
            | DiagKind::MixedConnections => {
                issues.insert(RefinementIssue {
                    kind: IssueKind::Syntax,
                    subject,
                    detail: format!("{}:{}: {}", d.line, d.column, d.message),
                });
            }
            _ => {}
        }
    }
    for top in crate::curator::detect_tops(&outcome.modules) {
        if let Ok(missing) = check_completeness(&outcome.modules, &top) {
            for m in missing {
                issues.insert(RefinementIssue {
                    kind: IssueKind::MissingDependency,
                    subject: m.clone(),
                    detail: format!("module '{}' is instantiated but not defined", m),
                });
            }
        }
    }
    for module in &outcome.modules {
        for finding in lint_synthesizable(module) {
            if finding.severity == Severity::Error {
                issues.insert(RefinementIssue {
                    kind: IssueKind::Lint,
                    subject: finding.subject,
                    detail: finding.message,
                });
            }
        }
    }
    issues.into_iter().collect()
}

fn quoted_subject(message: &str) -> Option<String> {
    let start = message.find('\'')?;
    let rest = &message[start + 1..];
    let end = rest.find('\'')?;
    Some(rest[..end].to_string())
}

// ----------------------------------------------------------------------
// lint
// ----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintFinding {
    pub severity: Severity,
    pub code: &'static str,
    pub subject: String,
    pub message: String,
}

/// Structural synthesizability lint on one module. Errors: no behavioral
/// content, unassigned outputs, unread inputs, nets driven both from an
/// initial block and procedurally, multiply-driven nets. Warning:
/// blocking assigns to state in edge-triggered blocks.
pub fn lint_synthesizable(module: &AstModule) -> Vec<LintFinding> {
    // lint the elaborated view when parameters/generates resolve
    let resolved;
    let module = match resolve_parameters(module, &BTreeMap::new()) {
        Ok(m) => {
            resolved = m;
            &resolved
        }
        Err(_) => module,
    };

    let mut findings = Vec::new();

    let has_behavior = module.items.iter().any(|i| {
        matches!(
            i,
            ModuleItem::ContinuousAssign { .. }
                | ModuleItem::AlwaysBlock { .. }
                | ModuleItem::InitialBlock { .. }
                | ModuleItem::Instantiation(_)
                | ModuleItem::GenerateRegion(_)
        )
    });
    if !has_behavior {
        findings.push(LintFinding {
            severity: Severity::Error,
            code: "no-behavior",
            subject: module.name.clone(),
            message: format!(
                "module '{}' has no continuous assign, procedural block, or instance",
                module.name
            ),
        });
    }

    let mut assigned: HashSet<String> = HashSet::new();
    let mut read: HashSet<String> = HashSet::new();
    let mut continuous_full: BTreeMap<String, u32> = BTreeMap::new();
    let mut procedural_blocks: BTreeMap<String, u32> = BTreeMap::new();
    let mut initial_targets: HashSet<String> = HashSet::new();
    let mut procedural_targets: HashSet<String> = HashSet::new();

    for item in &module.items {
        match item {
            ModuleItem::ContinuousAssign { target, value } => {
                collect_assigned(target, &mut assigned);
                collect_read(value, &mut read);
                collect_lvalue_reads(target, &mut read);
                if let Expression::Ident(n) = target {
                    *continuous_full.entry(n.clone()).or_insert(0) += 1;
                }
            }
            ModuleItem::AlwaysBlock { sensitivity, body } => {
                let mut targets = HashSet::new();
                stmt_analysis(body, &mut targets, &mut read);
                for t in &targets {
                    *procedural_blocks.entry(t.clone()).or_insert(0) += 1;
                    procedural_targets.insert(t.clone());
                }
                assigned.extend(targets.iter().cloned());
                if let Sensitivity::Edges(events) = sensitivity {
                    for e in events {
                        read.insert(e.signal.clone());
                    }
                    let mut blocking = Vec::new();
                    collect_blocking_targets(body, &mut blocking);
                    for t in blocking {
                        findings.push(LintFinding {
                            severity: Severity::Warning,
                            code: "blocking-in-edge-block",
                            subject: t.clone(),
                            message: format!(
                                "'{}' uses a blocking assign in an edge-triggered block",
                                t
                            ),
                        });
                    }
                }
            }
            ModuleItem::InitialBlock { body } => {
                let mut targets = HashSet::new();
                stmt_analysis(body, &mut targets, &mut read);
                initial_targets.extend(targets.iter().cloned());
                assigned.extend(targets.iter().cloned());
            }
            ModuleItem::Instantiation(inst) => {
                // connection expressions may drive or read; count both ways
                let exprs: Vec<&Expression> = match &inst.ports {
                    Connections::Named(list) => list.iter().filter_map(|c| c.expr.as_ref()).collect(),
                    Connections::Positional(list) => list.iter().collect(),
                };
                for e in exprs {
                    collect_read(e, &mut read);
                    collect_assigned(e, &mut assigned);
                }
            }
            ModuleItem::GenerateRegion(_) => {}
        }
    }

    for p in &module.ports {
        match p.direction {
            PortDirection::Output => {
                if !assigned.contains(&p.name) {
                    findings.push(LintFinding {
                        severity: Severity::Error,
                        code: "unassigned-output",
                        subject: p.name.clone(),
                        message: format!("output '{}' is never assigned", p.name),
                    });
                }
            }
            PortDirection::Input => {
                if !read.contains(&p.name) {
                    findings.push(LintFinding {
                        severity: Severity::Error,
                        code: "unread-input",
                        subject: p.name.clone(),
                        message: format!("input '{}' is never read", p.name),
                    });
                }
            }
            PortDirection::Inout => {}
        }
    }

    for name in &initial_targets {
        if procedural_targets.contains(name) || continuous_full.contains_key(name) {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: "initial-conflict",
                subject: name.clone(),
                message: format!(
                    "'{}' is driven from an initial block and procedurally",
                    name
                ),
            });
        }
    }

    for (name, count) in &continuous_full {
        let procedural = procedural_blocks.get(name).copied().unwrap_or(0);
        if *count > 1 || (*count >= 1 && procedural > 0) {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: "multiply-driven",
                subject: name.clone(),
                message: format!("net '{}' has multiple drivers", name),
            });
        }
    }
    for (name, blocks) in &procedural_blocks {
        if *blocks > 1 {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: "multiply-driven",
                subject: name.clone(),
                message: format!("'{}' is assigned in multiple always blocks", name),
            });
        }
    }

    findings.sort_by(|a, b| (a.code, &a.subject).cmp(&(b.code, &b.subject)));
    findings.dedup();
    findings
}

fn collect_assigned(lvalue: &Expression, out: &mut HashSet<String>) {
    match lvalue {
        Expression::Ident(n) => {
            out.insert(n.clone());
        }
        Expression::BitSelect { base, .. }
        | Expression::PartSelect { base, .. }
        | Expression::IndexedPartSelect { base, .. } => {
            if let Some(n) = base.base_name() {
                out.insert(n.to_string());
            }
        }
        Expression::Concat(parts) => {
            for p in parts {
                collect_assigned(p, out);
            }
        }
        _ => {}
    }
}

fn collect_read(e: &Expression, out: &mut HashSet<String>) {
    let mut ids = Vec::new();
    e.collect_idents(&mut ids);
    out.extend(ids.into_iter().map(|s| s.to_string()));
}

/// Index expressions of an lvalue are reads even though the base is written.
fn collect_lvalue_reads(lvalue: &Expression, out: &mut HashSet<String>) {
    match lvalue {
        Expression::BitSelect { index, .. } => collect_read(index, out),
        Expression::PartSelect { msb, lsb, .. } => {
            collect_read(msb, out);
            collect_read(lsb, out);
        }
        Expression::IndexedPartSelect { start, width, .. } => {
            collect_read(start, out);
            collect_read(width, out);
        }
        Expression::Concat(parts) => {
            for p in parts {
                collect_lvalue_reads(p, out);
            }
        }
        _ => {}
    }
}

fn stmt_analysis(stmt: &Statement, targets: &mut HashSet<String>, read: &mut HashSet<String>) {
    match stmt {
        Statement::BlockingAssign { target, value }
        | Statement::NonblockingAssign { target, value } => {
            collect_assigned(target, targets);
            collect_lvalue_reads(target, read);
            collect_read(value, read);
        }
        Statement::If {
            cond,
            then_branch,
            else_branch,
        } => {
            collect_read(cond, read);
            stmt_analysis(then_branch, targets, read);
            if let Some(e) = else_branch {
                stmt_analysis(e, targets, read);
            }
        }
        Statement::Case {
            selector, arms, ..
        } => {
            collect_read(selector, read);
            for a in arms {
                for l in &a.labels {
                    collect_read(l, read);
                }
                stmt_analysis(&a.body, targets, read);
            }
        }
        Statement::Block { statements, .. } => {
            for s in statements {
                stmt_analysis(s, targets, read);
            }
        }
        Statement::ForLoop {
            init, cond, step, body, ..
        } => {
            collect_read(init, read);
            collect_read(cond, read);
            collect_read(step, read);
            stmt_analysis(body, targets, read);
        }
        Statement::Delay { stmt, .. } => {
            if let Some(s) = stmt {
                stmt_analysis(s, targets, read);
            }
        }
        Statement::SystemCall { args, .. } => {
            for a in args {
                collect_read(a, read);
            }
        }
        Statement::Empty => {}
    }
}

fn collect_blocking_targets(stmt: &Statement, out: &mut Vec<String>) {
    match stmt {
        Statement::BlockingAssign { target, .. } => {
            if let Some(n) = target.base_name() {
                out.push(n.to_string());
            }
        }
        Statement::If {
            then_branch,
            else_branch,
            ..
        } => {
            collect_blocking_targets(then_branch, out);
            if let Some(e) = else_branch {
                collect_blocking_targets(e, out);
            }
        }
        Statement::Case { arms, .. } => {
            for a in arms {
                collect_blocking_targets(&a.body, out);
            }
        }
        Statement::Block { statements, .. } => {
            for s in statements {
                collect_blocking_targets(s, out);
            }
        }
        Statement::ForLoop { body, .. } => collect_blocking_targets(body, out),
        _ => {}
    }
}

// ----------------------------------------------------------------------
// prompting and the repair loop
// ----------------------------------------------------------------------

const REFINE_SYSTEM: &str = "You are an expert RTL engineer. You rewrite Verilog modules so \
they are self-contained and synthesizable. Reply with Verilog code only, in a single fenced \
code block.";

/// Deterministic refinement prompt: the three repair directives in fixed
/// order, the issue list, then the source in a fenced block.
pub fn build_refinement_prompt(
    source: &str,
    issues: &[RefinementIssue],
    temperature: f64,
    max_tokens: u32,
    seed_tag: &str,
) -> CompletionRequest {
    let mut missing: Vec<&str> = issues
        .iter()
        .filter(|i| i.kind == IssueKind::MissingDependency)
        .map(|i| i.subject.as_str())
        .collect();
    missing.dedup();
    let mut undefined: Vec<&str> = issues
        .iter()
        .filter(|i| i.kind == IssueKind::UndefinedSymbol)
        .map(|i| i.subject.as_str())
        .collect();
    undefined.dedup();

    let mut user = String::new();
    user.push_str(
        "Rewrite the following Verilog so it parses and synthesizes as a self-contained design.\n",
    );
    user.push_str("Apply these steps in order:\n");
    user.push_str(&format!(
        "1. Remove external dependencies: embed the logic of missing submodules directly in the code{}.\n",
        format_name_list(&missing)
    ));
    user.push_str(&format!(
        "2. Define undefined symbols and initialize them with context-appropriate values{}.\n",
        format_name_list(&undefined)
    ));
    user.push_str(
        "3. Correct the syntax to plain synthesizable Verilog-2001: module/endmodule, wire/reg, \
assign, always blocks, if/else and case.\n",
    );
    user.push_str("\nIssues found:\n");
    for i in issues {
        user.push_str(&format!("- {}: {} ({})\n", i.kind, i.subject, i.detail));
    }
    user.push_str("\nSource:\n```verilog\n");
    user.push_str(source);
    if !source.ends_with('\n') {
        user.push('\n');
    }
    user.push_str("```\n\nReply with only the corrected Verilog source in one fenced code block.\n");

    CompletionRequest {
        system: REFINE_SYSTEM.to_string(),
        user,
        temperature,
        max_tokens,
        seed_tag: seed_tag.to_string(),
    }
}

fn format_name_list(names: &[&str]) -> String {
    if names.is_empty() {
        String::new()
    } else {
        format!(" ({})", names.join(", "))
    }
}

/// First fenced code block (``` with optional language tag).
pub fn extract_code_block(text: &str) -> Option<String> {
    let mut in_block = false;
    let mut body = String::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                return Some(body);
            }
            in_block = true;
            continue;
        }
        if in_block {
            body.push_str(line);
            body.push('\n');
        }
    }
    None
}

fn refine_tag(source: &str, attempt: u32) -> String {
    let name = parse_design(source)
        .ok()
        .and_then(|o| o.modules.first().map(|m| m.name.clone()))
        .unwrap_or_else(|| "unparsed".to_string());
    format!("refine:{}:{}", name, attempt)
}

/// Validation grade for a candidate source.
pub fn validate(source: &str, cfg: &RefineConfig) -> ValidationStatus {
    let outcome = match parse_design(source) {
        Ok(o) => o,
        Err(_) => return ValidationStatus::Failed,
    };
    if outcome.modules.is_empty() {
        return ValidationStatus::Failed;
    }
    let syntax_clean = !outcome.diagnostics.iter().any(|d| {
        d.severity == Severity::Error
            && matches!(
                d.kind,
                DiagKind::Lex
                    | DiagKind::Parse
                    | DiagKind::UnsupportedConstruct
                    | DiagKind::DuplicateName
                    | DiagKind::MixedConnections
            )
    });
    if !syntax_clean {
        return ValidationStatus::Failed;
    }
    if !diagnose(source).is_empty() {
        return ValidationStatus::Parsed;
    }
    match &cfg.synthesis_cmd {
        Some(cmd) => match external_synthesis_check(source, cmd) {
            Ok(SynthOutcome::Pass) => ValidationStatus::SynthChecked,
            Ok(SynthOutcome::Fail { .. }) => ValidationStatus::Parsed,
            Err(_) => ValidationStatus::Linted, // hook unavailable caps at linted
        },
        None => ValidationStatus::Linted,
    }
}

/// Diagnose, prompt, complete, extract, re-diagnose; stop when clean or
/// attempts are exhausted.
pub fn refine(
    source: &str,
    gateway: &Gateway,
    cfg: &RefineConfig,
) -> Result<RefinedModule, RefineError> {
    let mut current = source.to_string();
    let mut issues = diagnose(&current);
    let mut addressed: Vec<RefinementIssue> = Vec::new();
    let mut attempts = 0u32;

    while !issues.is_empty() && attempts < cfg.max_attempts {
        attempts += 1;
        let request = build_refinement_prompt(
            &current,
            &issues,
            cfg.temperature,
            cfg.max_tokens,
            &refine_tag(source, attempts),
        );
        let result = gateway.complete(&request, Stage::Refinement)?;
        let code = extract_code_block(&result.text).ok_or(RefineError::ExtractionFailed)?;
        addressed.extend(issues);
        current = code;
        issues = diagnose(&current);
    }

    let residual = issues;
    if cfg.hard_fail && !residual.is_empty() {
        return Err(RefineError::RefinementFailed { residual });
    }
    let status = validate(&current, cfg);
    Ok(RefinedModule {
        original: source.to_string(),
        refined: current,
        issues_addressed: addressed,
        residual_issues: residual,
        status,
        attempts,
    })
}

// ----------------------------------------------------------------------
// external synthesis hook
// ----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthOutcome {
    Pass,
    Fail { log: String },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthesis tool unavailable: {0}")]
    ToolUnavailable(String),
}

/// Run `<command> <file>` on the source in a temp file; pass iff exit 0.
pub fn external_synthesis_check(source: &str, command: &str) -> Result<SynthOutcome, SynthError> {
    let mut parts = command.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| SynthError::ToolUnavailable("empty command".into()))?;
    let args: Vec<&str> = parts.collect();

    let mut file = tempfile::Builder::new()
        .prefix("rtlgraph_synth_")
        .suffix(".v")
        .tempfile()
        .map_err(|e| SynthError::ToolUnavailable(e.to_string()))?;
    file.write_all(source.as_bytes())
        .map_err(|e| SynthError::ToolUnavailable(e.to_string()))?;
    file.flush()
        .map_err(|e| SynthError::ToolUnavailable(e.to_string()))?;

    let output = std::process::Command::new(program)
        .args(&args)
        .arg(file.path())
        .output()
        .map_err(|e| SynthError::ToolUnavailable(format!("{}: {}", program, e)))?;
    if output.status.success() {
        Ok(SynthOutcome::Pass)
    } else {
        let mut log = String::from_utf8_lossy(&output.stdout).to_string();
        log.push_str(&String::from_utf8_lossy(&output.stderr));
        Ok(SynthOutcome::Fail { log })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendPolicy, MockBackend, MockEntry};

    const CLEAN: &str = r#"
module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp,
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

    #[test]
    fn missing_dependency_diagnosed() {
        let src = "module top(input a, output y); fifo_ctrl u0 (.a(a), .y(y)); endmodule";
        let issues = diagnose(src);
        assert!(issues
            .iter()
            .any(|i| i.kind == IssueKind::MissingDependency && i.subject == "fifo_ctrl"));
    }

    #[test]
    fn undefined_symbol_diagnosed() {
        let src = "module m(output [31:0] y); assign y = BAUD_RATE; endmodule";
        let issues = diagnose(src);
        assert!(issues
            .iter()
            .any(|i| i.kind == IssueKind::UndefinedSymbol && i.subject == "BAUD_RATE"));
    }

    #[test]
    fn clean_module_diagnoses_empty() {
        assert!(diagnose(CLEAN).is_empty(), "{:?}", diagnose(CLEAN));
    }

    #[test]
    fn lint_unassigned_output() {
        let out = parse_design("module m(input a, output y); wire t; assign t = a; endmodule")
            .unwrap();
        let findings = lint_synthesizable(&out.modules[0]);
        assert!(findings
            .iter()
            .any(|f| f.code == "unassigned-output" && f.subject == "y"));
    }

    #[test]
    fn lint_alu_clean() {
        let out = parse_design(CLEAN).unwrap();
        let findings = lint_synthesizable(&out.modules[0]);
        assert!(
            findings.iter().all(|f| f.severity != Severity::Error),
            "{:?}",
            findings
        );
    }

    #[test]
    fn lint_multiply_driven() {
        let src = "module m(input a, input b, output y); assign y = a; assign y = b; endmodule";
        let out = parse_design(src).unwrap();
        let findings = lint_synthesizable(&out.modules[0]);
        assert!(findings.iter().any(|f| f.code == "multiply-driven"));
    }

    #[test]
    fn lint_blocking_in_edge_block_is_warning() {
        let src = "module m(input clk, input d, output reg q); always @(posedge clk) q = d; endmodule";
        let out = parse_design(src).unwrap();
        let findings = lint_synthesizable(&out.modules[0]);
        let f = findings
            .iter()
            .find(|f| f.code == "blocking-in-edge-block")
            .unwrap();
        assert_eq!(f.severity, Severity::Warning);
    }

    #[test]
    fn prompt_contains_directives_in_order() {
        let issues = vec![
            RefinementIssue {
                kind: IssueKind::MissingDependency,
                subject: "fifo_ctrl".into(),
                detail: "missing".into(),
            },
            RefinementIssue {
                kind: IssueKind::UndefinedSymbol,
                subject: "WIDTH".into(),
                detail: "undefined".into(),
            },
            RefinementIssue {
                kind: IssueKind::Syntax,
                subject: "1:1".into(),
                detail: "bad".into(),
            },
        ];
        let req = build_refinement_prompt("module x; endmodule", &issues, 0.2, 512, "t");
        let p1 = req.user.find("1. Remove external dependencies").unwrap();
        let p2 = req.user.find("2. Define undefined symbols").unwrap();
        let p3 = req.user.find("3. Correct the syntax").unwrap();
        let pi = req.user.find("Issues found:").unwrap();
        let ps = req.user.find("```verilog").unwrap();
        assert!(p1 < p2 && p2 < p3 && p3 < pi && pi < ps);
        assert!(req.user.contains("fifo_ctrl"));
        // determinism
        let again = build_refinement_prompt("module x; endmodule", &issues, 0.2, 512, "t");
        assert_eq!(req, again);
    }

    #[test]
    fn extract_first_fenced_block() {
        let text = "Sure!\n```verilog\nmodule m; endmodule\n```\nmore\n```\nother\n```";
        assert_eq!(
            extract_code_block(text).unwrap(),
            "module m; endmodule\n"
        );
        assert_eq!(extract_code_block("no fence here"), None);
    }

    fn gw(entries: Vec<MockEntry>) -> Gateway {
        Gateway::new(
            Box::new(MockBackend::new(entries, false)),
            BackendPolicy::default(),
        )
    }

    #[test]
    fn refine_happy_path() {
        let broken = "module m(output [31:0] y); assign y = BAUD_RATE; endmodule";
        let fixed = "module m(\n  output wire [31:0] y\n);\n  localparam BAUD_RATE = 9600;\n  assign y = BAUD_RATE;\nendmodule\n";
        let entries = vec![MockEntry {
            tag: "refine:m:1".into(),
            response: format!("```verilog\n{}```", fixed),
            status_sequence: vec![],
            truncated: false,
        }];
        let out = refine(broken, &gw(entries), &RefineConfig::default()).unwrap();
        assert_eq!(out.attempts, 1);
        assert!(out.residual_issues.is_empty());
        assert!(out.status >= ValidationStatus::Linted);
        assert!(!out.issues_addressed.is_empty());
    }

    #[test]
    fn refine_prose_without_fence_fails_extraction() {
        let broken = "module m(output y); assign y = MISSING; endmodule";
        let entries = vec![MockEntry {
            tag: "default".into(),
            response: "I think you should define MISSING.".into(),
            status_sequence: vec![],
            truncated: false,
        }];
        assert!(matches!(
            refine(broken, &gw(entries), &RefineConfig::default()),
            Err(RefineError::ExtractionFailed)
        ));
    }

    #[test]
    fn refine_exhausts_attempts_and_reports_residual() {
        let broken = "module m(output y); assign y = MISSING; endmodule";
        let entries = vec![MockEntry {
            tag: "default".into(),
            response: format!("```verilog\n{}\n```", broken),
            status_sequence: vec![],
            truncated: false,
        }];
        let cfg = RefineConfig {
            max_attempts: 2,
            ..Default::default()
        };
        let out = refine(broken, &gw(entries), &cfg).unwrap();
        assert_eq!(out.attempts, 2);
        assert!(!out.residual_issues.is_empty());
        assert!(out.status < ValidationStatus::Linted);

        let hard = RefineConfig {
            max_attempts: 2,
            hard_fail: true,
            ..Default::default()
        };
        assert!(matches!(
            refine(broken, &gw(vec![MockEntry {
                tag: "default".into(),
                response: format!("```verilog\n{}\n```", broken),
                status_sequence: vec![],
                truncated: false,
            }]), &hard),
            Err(RefineError::RefinementFailed { .. })
        ));
    }

    #[test]
    fn clean_source_passes_through() {
        let entries: Vec<MockEntry> = vec![];
        let out = refine(
            CLEAN,
            &gw(entries),
            &RefineConfig::default(),
        )
        .unwrap();
        assert_eq!(out.attempts, 0);
        assert_eq!(out.refined, CLEAN);
        assert_eq!(out.status, ValidationStatus::Linted);
    }

    #[test]
    fn synthesis_hook_exit_codes() {
        assert_eq!(
            external_synthesis_check("module m; endmodule", "true").unwrap(),
            SynthOutcome::Pass
        );
        match external_synthesis_check("module m; endmodule", "false").unwrap() {
            SynthOutcome::Fail { .. } => {}
            other => panic!("expected failure, got {:?}", other),
        }
        assert!(matches!(
            external_synthesis_check("x", "definitely_not_a_real_tool_zzz"),
            Err(SynthError::ToolUnavailable(_))
        ));
        assert!(matches!(
            external_synthesis_check("x", ""),
            Err(SynthError::ToolUnavailable(_))
        ));
    }

    #[test]
    fn synthesis_failure_log_captured() {
        let out = external_synthesis_check("whatever", "sh -c exit_1_with_noise").unwrap();
        // `sh -c exit_1_with_noise <file>` runs a missing command: nonzero + stderr
        match out {
            SynthOutcome::Fail { log } => assert!(!log.is_empty()),
            SynthOutcome::Pass => panic!("expected failure"),
        }
    }

    #[test]
    fn validate_grades() {
        assert_eq!(
            validate("not verilog (", &RefineConfig::default()),
            ValidationStatus::Failed
        );
        assert_eq!(
            validate(
                "module m(output y); assign y = MISSING; endmodule",
                &RefineConfig::default()
            ),
            ValidationStatus::Parsed
        );
        assert_eq!(
            validate(CLEAN, &RefineConfig::default()),
            ValidationStatus::Linted
        );
        let synth = RefineConfig {
            synthesis_cmd: Some("true".into()),
            ..Default::default()
        };
        assert_eq!(validate(CLEAN, &synth), ValidationStatus::SynthChecked);
        let broken_tool = RefineConfig {
            synthesis_cmd: Some("not_a_tool_zzz".into()),
            ..Default::default()
        };
        assert_eq!(validate(CLEAN, &broken_tool), ValidationStatus::Linted);
    }
}
