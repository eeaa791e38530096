// SPDX-License-Identifier: Apache-2.0

//! Corpus curation: scan a directory of Verilog sources, profile keyword
//! usage, classify files, check hierarchy completeness, apply the size and
//! class filters, rank by repository stars, and deduplicate exact copies.

use rtlgraph_core::classify::{classify_modules, ClassifyConfig, FileClass};
use rtlgraph_core::elab::check_completeness;
use rtlgraph_core::lexer::{tokenize, Token, TokenKind};
use rtlgraph_core::parser::parse_design;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    FileClass,
    LineCount,
    IncompleteHierarchy,
    NoStructuralKeywords,
    Stars,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::FileClass => write!(f, "file-class"),
            RejectReason::LineCount => write!(f, "line-count"),
            RejectReason::IncompleteHierarchy => write!(f, "incomplete-hierarchy"),
            RejectReason::NoStructuralKeywords => write!(f, "no-structural-keywords"),
            RejectReason::Stars => write!(f, "stars"),
        }
    }
}

/// One corpus file plus everything curation learned about it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusCandidate {
    /// Root-relative path with `/` separators.
    pub path: String,
    pub origin: String,
    pub stars: u64,
    pub line_count: usize,
    pub file_class: String,
    pub keyword_profile: BTreeMap<String, u64>,
    pub module_names: Vec<String>,
    /// Top modules (never instantiated by another module in the file).
    pub tops: Vec<String>,
    /// Instantiated-but-undefined module names across all tops.
    pub missing_modules: Vec<String>,
    pub verdict: Option<Verdict>,
    pub content_hash: String,
    /// Raw source; kept so later stages can run without re-reading files.
    pub source: String,
}

impl CorpusCandidate {
    pub fn file_class(&self) -> FileClass {
        match self.file_class.as_str() {
            "rtl" => FileClass::Rtl,
            "testbench" => FileClass::Testbench,
            "netlist" => FileClass::Netlist,
            _ => FileClass::Unknown,
        }
    }

    pub fn accepted(&self) -> bool {
        matches!(self.verdict, Some(Verdict::Accepted))
    }
}

#[derive(Debug, Error)]
pub enum CuratorError {
    #[error("corpus root '{0}' does not exist")]
    MissingRoot(String),
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy line {line}: {message}")]
    TaxonomyParse { line: usize, message: String },
}

// ----------------------------------------------------------------------
// keyword taxonomy
// ----------------------------------------------------------------------

/// A structural pattern matched on the token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructuralPattern {
    /// Normalized token sequence, whitespace-insensitive.
    Tokens(Vec<String>),
    /// `ident ident (` or `ident #(` heuristic.
    ModuleInstantiation,
    /// `.ident(` connection form.
    DotConnection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordTaxonomy {
    /// Category name -> structural patterns (token-aware).
    pub structural: Vec<(String, Vec<StructuralPattern>)>,
    /// Category name -> context keywords (case-insensitive substrings).
    pub context: Vec<(String, Vec<String>)>,
}

fn toks(pattern: &str) -> StructuralPattern {
    let tokens = tokenize(pattern)
        .expect("static pattern lexes")
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .map(|t| t.lexeme)
        .collect();
    StructuralPattern::Tokens(tokens)
}

impl Default for KeywordTaxonomy {
    fn default() -> Self {
        let structural = vec![
            (
                "Structural Constructs".to_string(),
                [
                    "module", "endmodule", "input", "output", "inout", "wire", "reg", "assign",
                    "generate", "endgenerate", "parameter", "localparam", "always @(*)", "begin",
                    "end",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "Sequential Logic".to_string(),
                [
                    "always",
                    "always @(posedge clk)",
                    "always @(negedge clk)",
                    "posedge",
                    "negedge",
                    "if",
                    "else",
                    "case",
                    "default",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "Combinational Logic".to_string(),
                [
                    "assign", "case", "casex", "casez", "and", "or", "not", "nand", "nor", "xor",
                    "xnor", "mux", "demux", "generate", "genvar",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "Memory and Storage".to_string(),
                [
                    "always @(posedge clk or negedge reset)",
                    "if (enable)",
                    "RAM",
                    "ROM",
                    "initial",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "Data Path".to_string(),
                [
                    "add", "sub", "mul", "div", "<<", ">>", "+", "-", "*", "/", "&", "|", "^",
                    "~",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "State Machines".to_string(),
                [
                    "always @(posedge clk)",
                    "case",
                    "endcase",
                    "default",
                    "parameter",
                    "localparam",
                    "idle",
                    "current",
                    "next",
                ]
                .iter()
                .map(|p| toks(p))
                .collect(),
            ),
            (
                "Hierarchy".to_string(),
                vec![
                    StructuralPattern::ModuleInstantiation,
                    StructuralPattern::DotConnection,
                ],
            ),
        ];
        let context = vec![
            (
                "Arith & Logic".to_string(),
                strs(&["adder", "subtractor", "multiplier", "divider", "alu"]),
            ),
            (
                "Sequential Logic".to_string(),
                strs(&["dff", "register", "shift_register", "counter"]),
            ),
            (
                "Memory".to_string(),
                strs(&["register_file", "register_bank", "fifo", "cache"]),
            ),
            (
                "Control Logic".to_string(),
                strs(&["encoder", "decoder", "arbiter", "bus_controller"]),
            ),
            (
                "Data Transfer".to_string(),
                strs(&[
                    "uart",
                    "spi",
                    "i2c",
                    "ethernet",
                    "input_buffer",
                    "output_buffer",
                    "parity",
                    "hamming",
                    "crc",
                ]),
            ),
            (
                "Signal Proc.".to_string(),
                strs(&["filter", "fft", "dft", "mac", "cordic"]),
            ),
            (
                "Interconnect".to_string(),
                strs(&["axi", "wishbone", "apb", "crossbar", "bus_switch", "bridge"]),
            ),
            (
                "Clock".to_string(),
                strs(&["pll", "clock_divider", "prescaler", "timer", "stopwatch"]),
            ),
        ];
        KeywordTaxonomy {
            structural,
            context,
        }
    }
}

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl KeywordTaxonomy {
    /// Append user extensions from an override file. Format: category
    /// headers `[structural: Name]` / `[context: Name]`, then one pattern
    /// per line; `#` starts a comment.
    pub fn extend_from_file(&mut self, path: &Path) -> Result<(), CuratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| CuratorError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.extend_from_str(&text)
    }

    pub fn extend_from_str(&mut self, text: &str) -> Result<(), CuratorError> {
        enum Section {
            Structural(usize),
            Context(usize),
        }
        let mut section: Option<Section> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let (kind, name) =
                    inner
                        .split_once(':')
                        .ok_or_else(|| CuratorError::TaxonomyParse {
                            line: idx + 1,
                            message: "expected [structural: Name] or [context: Name]".into(),
                        })?;
                let name = name.trim().to_string();
                match kind.trim() {
                    "structural" => {
                        let pos = self
                            .structural
                            .iter()
                            .position(|(n, _)| *n == name)
                            .unwrap_or_else(|| {
                                self.structural.push((name.clone(), Vec::new()));
                                self.structural.len() - 1
                            });
                        section = Some(Section::Structural(pos));
                    }
                    "context" => {
                        let pos = self
                            .context
                            .iter()
                            .position(|(n, _)| *n == name)
                            .unwrap_or_else(|| {
                                self.context.push((name.clone(), Vec::new()));
                                self.context.len() - 1
                            });
                        section = Some(Section::Context(pos));
                    }
                    other => {
                        return Err(CuratorError::TaxonomyParse {
                            line: idx + 1,
                            message: format!("unknown section kind '{}'", other),
                        })
                    }
                }
                continue;
            }
            match &section {
                Some(Section::Structural(pos)) => {
                    self.structural[*pos].1.push(toks(line));
                }
                Some(Section::Context(pos)) => {
                    self.context[*pos].1.push(line.to_ascii_lowercase());
                }
                None => {
                    return Err(CuratorError::TaxonomyParse {
                        line: idx + 1,
                        message: "pattern before any section header".into(),
                    })
                }
            }
        }
        Ok(())
    }
}

// ----------------------------------------------------------------------
// keyword profiling
// ----------------------------------------------------------------------

/// Count keyword hits per category. Structural patterns match the token
/// stream (so `reg` inside `register_file` does not count); context
/// keywords match case-insensitively as substrings of identifiers, module
/// names, the file name, and comments.
pub fn keyword_profile(
    source: &str,
    filename: Option<&str>,
    taxonomy: &KeywordTaxonomy,
) -> BTreeMap<String, u64> {
    let mut profile: BTreeMap<String, u64> = BTreeMap::new();
    for (cat, _) in &taxonomy.structural {
        profile.insert(cat.clone(), 0);
    }
    for (cat, _) in &taxonomy.context {
        profile.insert(cat.clone(), 0);
    }

    let tokens: Vec<Token> = match tokenize(source) {
        Ok(t) => t,
        Err(_) => Vec::new(),
    };
    let code: Vec<&Token> = tokens
        .iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect();
    let lexemes: Vec<&str> = code.iter().map(|t| t.lexeme.as_str()).collect();

    for (cat, patterns) in &taxonomy.structural {
        let mut count = 0u64;
        for p in patterns {
            count += match p {
                StructuralPattern::Tokens(seq) => count_subsequence(&lexemes, seq),
                StructuralPattern::ModuleInstantiation => count_instantiations(&code),
                StructuralPattern::DotConnection => count_dot_connections(&code),
            };
        }
        *profile.get_mut(cat).unwrap() += count;
    }

    // haystacks for context matching
    let mut haystacks: Vec<String> = Vec::new();
    for t in &tokens {
        match t.kind {
            TokenKind::Identifier => haystacks.push(t.lexeme.to_ascii_lowercase()),
            TokenKind::Comment => haystacks.push(t.lexeme.to_ascii_lowercase()),
            _ => {}
        }
    }
    for (i, t) in code.iter().enumerate() {
        if t.kind == TokenKind::Keyword && t.lexeme == "module" {
            if let Some(name) = code.get(i + 1) {
                haystacks.push(name.lexeme.to_ascii_lowercase());
            }
        }
    }
    if let Some(f) = filename {
        haystacks.push(f.to_ascii_lowercase());
    }
    for (cat, keywords) in &taxonomy.context {
        let mut count = 0u64;
        for kw in keywords {
            count += haystacks.iter().filter(|h| h.contains(kw.as_str())).count() as u64;
        }
        *profile.get_mut(cat).unwrap() += count;
    }

    profile
}

fn count_subsequence(haystack: &[&str], needle: &[String]) -> u64 {
    if needle.is_empty() || haystack.len() < needle.len() {
        return 0;
    }
    let mut count = 0;
    for start in 0..=(haystack.len() - needle.len()) {
        if needle
            .iter()
            .enumerate()
            .all(|(i, n)| haystack[start + i] == n.as_str())
        {
            count += 1;
        }
    }
    count
}

fn count_instantiations(code: &[&Token]) -> u64 {
    let mut count = 0;
    for w in code.windows(3) {
        let a = w[0];
        let b = w[1];
        let c = w[2];
        // `type_name instance_name (` or `type_name # (`
        if a.kind == TokenKind::Identifier
            && !a.lexeme.starts_with(['$', '`', '\\'])
            && ((b.kind == TokenKind::Identifier && c.lexeme == "(")
                || (b.lexeme == "#" && c.lexeme == "("))
        {
            count += 1;
        }
    }
    count
}

fn count_dot_connections(code: &[&Token]) -> u64 {
    let mut count = 0;
    for w in code.windows(3) {
        if w[0].lexeme == "." && w[1].kind == TokenKind::Identifier && w[2].lexeme == "(" {
            count += 1;
        }
    }
    count
}

/// Sum of structural-category hits.
pub fn structural_hits(profile: &BTreeMap<String, u64>, taxonomy: &KeywordTaxonomy) -> u64 {
    taxonomy
        .structural
        .iter()
        .filter_map(|(cat, _)| profile.get(cat))
        .sum()
}

// ----------------------------------------------------------------------
// line counting
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LineCountMode {
    /// Physical lines carrying at least one non-comment token.
    #[default]
    Logical,
    /// Raw non-blank lines.
    Raw,
}

pub fn count_lines(source: &str, mode: LineCountMode) -> usize {
    match mode {
        LineCountMode::Raw => source.lines().filter(|l| !l.trim().is_empty()).count(),
        LineCountMode::Logical => match tokenize(source) {
            Ok(tokens) => {
                let mut lines = std::collections::BTreeSet::new();
                for t in tokens {
                    if t.kind != TokenKind::Comment {
                        lines.insert(t.line);
                    }
                }
                lines.len()
            }
            // unlexable files fall back to the raw count
            Err(_) => source.lines().filter(|l| !l.trim().is_empty()).count(),
        },
    }
}

// ----------------------------------------------------------------------
// manifest
// ----------------------------------------------------------------------

/// `<repo-id>\t<stars>\t<path-prefix>` records; longest matching prefix
/// wins; `#` lines are comments.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, u64, String)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, CuratorError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (repo, stars, prefix) = match (parts.next(), parts.next(), parts.next()) {
                (Some(r), Some(s), Some(p)) => (r, s, p),
                _ => {
                    return Err(CuratorError::ManifestParse {
                        line: idx + 1,
                        message: "expected <repo-id>\\t<stars>\\t<path-prefix>".into(),
                    })
                }
            };
            let stars: u64 = stars.trim().parse().map_err(|_| CuratorError::ManifestParse {
                line: idx + 1,
                message: format!("bad star count '{}'", stars),
            })?;
            entries.push((repo.trim().to_string(), stars, prefix.trim().to_string()));
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CuratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| CuratorError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Longest-prefix lookup for a root-relative path.
    pub fn lookup(&self, rel_path: &str) -> (String, u64) {
        let mut best: Option<&(String, u64, String)> = None;
        for e in &self.entries {
            if rel_path.starts_with(e.2.as_str())
                && best.map(|b| e.2.len() > b.2.len()).unwrap_or(true)
            {
                best = Some(e);
            }
        }
        match best {
            Some((repo, stars, _)) => (repo.clone(), *stars),
            None => ("local".to_string(), 0),
        }
    }
}

// ----------------------------------------------------------------------
// scan / filter / rank
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub min_lines: usize,
    pub max_lines: usize,
    pub min_stars: u64,
    pub count_mode: LineCountMode,
    /// File extensions scanned (lowercase, no dot).
    pub extensions: Vec<String>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_lines: 100,
            max_lines: 300,
            min_stars: 0,
            count_mode: LineCountMode::Logical,
            extensions: vec!["v".to_string()],
        }
    }
}

/// Scan `root`, producing one candidate per matching file in lexicographic
/// path order. Unreadable files are skipped and reported in `skipped`.
pub fn scan_corpus(
    root: &Path,
    manifest: Option<&Manifest>,
    taxonomy: &KeywordTaxonomy,
    policy: &FilterPolicy,
    skipped: &mut Vec<(String, String)>,
) -> Result<Vec<CorpusCandidate>, CuratorError> {
    if !root.is_dir() {
        return Err(CuratorError::MissingRoot(root.display().to_string()));
    }
    let mut paths: Vec<std::path::PathBuf> = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| policy.extensions.iter().any(|x| x == &e.to_ascii_lowercase()))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();

    let mut out = Vec::new();
    for path in paths {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let source = match std::fs::read_to_string(&path) {
            Ok(s) => s,
            Err(e) => {
                skipped.push((rel, e.to_string()));
                continue;
            }
        };
        let (origin, stars) = manifest
            .map(|m| m.lookup(&rel))
            .unwrap_or(("local".to_string(), 0));
        out.push(candidate_from_source(
            &rel, &source, origin, stars, taxonomy, policy,
        ));
    }
    Ok(out)
}

/// Build a candidate (verdict unassigned) from in-memory source.
pub fn candidate_from_source(
    rel_path: &str,
    source: &str,
    origin: String,
    stars: u64,
    taxonomy: &KeywordTaxonomy,
    policy: &FilterPolicy,
) -> CorpusCandidate {
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    let content_hash = hex_digest(&hasher.finalize());

    let line_count = count_lines(source, policy.count_mode);
    let keyword_profile = keyword_profile(source, Some(rel_path), taxonomy);

    let (module_names, tops, missing, class) = match parse_design(source) {
        Ok(outcome) if !outcome.modules.is_empty() => {
            let names: Vec<String> = outcome.modules.iter().map(|m| m.name.clone()).collect();
            let tops = detect_tops(&outcome.modules);
            let mut missing = std::collections::BTreeSet::new();
            for t in &tops {
                if let Ok(miss) = check_completeness(&outcome.modules, t) {
                    missing.extend(miss);
                }
            }
            let class = classify_modules(
                &outcome.modules,
                Some(rel_path),
                &ClassifyConfig::default(),
            );
            (names, tops, missing.into_iter().collect(), class)
        }
        _ => (Vec::new(), Vec::new(), Vec::new(), FileClass::Unknown),
    };

    CorpusCandidate {
        path: rel_path.to_string(),
        origin,
        stars,
        line_count,
        file_class: class.to_string(),
        keyword_profile,
        module_names,
        tops,
        missing_modules: missing,
        verdict: None,
        content_hash,
        source: source.to_string(),
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{:02x}", b);
        acc
    })
}

/// Modules never instantiated by another module in the same file.
pub fn detect_tops(modules: &[rtlgraph_core::ast::AstModule]) -> Vec<String> {
    use std::collections::HashSet;
    let mut instantiated: HashSet<String> = HashSet::new();
    for m in modules {
        let mut names = Vec::new();
        collect_instances(&m.items, &mut names);
        instantiated.extend(names);
    }
    modules
        .iter()
        .map(|m| m.name.clone())
        .filter(|n| !instantiated.contains(n))
        .collect()
}

fn collect_instances(items: &[rtlgraph_core::ast::ModuleItem], out: &mut Vec<String>) {
    use rtlgraph_core::ast::{GenerateItem, ModuleItem};
    for item in items {
        match item {
            ModuleItem::Instantiation(i) => out.push(i.module.clone()),
            ModuleItem::GenerateRegion(gen) => {
                fn walk(items: &[GenerateItem], out: &mut Vec<String>) {
                    for g in items {
                        match g {
                            GenerateItem::Plain(item) =>

                                collect_instances(std::slice::from_ref(item), out),
                            GenerateItem::For(f) => walk(&f.body.items, out),
                            GenerateItem::If(i) => {
                                walk(&i.then_block.items, out);
                                if let Some(e) = &i.else_block {
                                    walk(&e.items, out);
                                }
                            }
                        }
                    }
                }
                walk(gen, out);
            }
            _ => {}
        }
    }
}

/// First failing gate in fixed order: file class, line bounds, hierarchy
/// completeness, structural keywords, then the optional star floor.
pub fn filter_candidate(
    candidate: &CorpusCandidate,
    policy: &FilterPolicy,
    taxonomy: &KeywordTaxonomy,
) -> Verdict {
    if candidate.file_class() != FileClass::Rtl {
        return Verdict::Rejected(RejectReason::FileClass);
    }
    if candidate.line_count < policy.min_lines || candidate.line_count > policy.max_lines {
        return Verdict::Rejected(RejectReason::LineCount);
    }
    if !candidate.missing_modules.is_empty() || candidate.tops.is_empty() {
        return Verdict::Rejected(RejectReason::IncompleteHierarchy);
    }
    if structural_hits(&candidate.keyword_profile, taxonomy) == 0 {
        return Verdict::Rejected(RejectReason::NoStructuralKeywords);
    }
    if candidate.stars < policy.min_stars {
        return Verdict::Rejected(RejectReason::Stars);
    }
    Verdict::Accepted
}

/// Accepted candidates sorted by (stars desc, path asc); exact-content
/// duplicates keep the highest-starred copy.
pub fn rank_and_dedup(candidates: &[CorpusCandidate]) -> Vec<CorpusCandidate> {
    let mut accepted: Vec<&CorpusCandidate> =
        candidates.iter().filter(|c| c.accepted()).collect();
    accepted.sort_by(|a, b| b.stars.cmp(&a.stars).then_with(|| a.path.cmp(&b.path)));
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for c in accepted {
        if seen.insert(c.content_hash.clone()) {
            out.push(c.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_policy() -> FilterPolicy {
        FilterPolicy::default()
    }

    #[test]
    fn register_file_does_not_hit_reg() {
        let src = "module register_file(input clk); reg [7:0] mem [0:15]; endmodule";
        let tax = KeywordTaxonomy::default();
        let profile = keyword_profile(src, None, &tax);
        // structural: module x1, endmodule x1, input x1, reg x1 -> 4 hits
        assert_eq!(profile["Structural Constructs"], 4);
        // context Memory via register_file (module name + identifier token)
        assert!(profile["Memory"] >= 1);
        // context Sequential Logic: "register" is a substring of register_file
        assert!(profile["Sequential Logic"] >= 1);
    }

    #[test]
    fn alu_profile() {
        let src = r#"
module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp, output reg [7:0] Result);
  always @(*) case (ALUOp)
    3'b000: Result = A + B;
    default: Result = 8'b0;
  endcase
endmodule
"#;
        let tax = KeywordTaxonomy::default();
        let profile = keyword_profile(src, Some("alu.v"), &tax);
        assert!(profile["Arith & Logic"] >= 1, "{:?}", profile);
        assert!(profile["Combinational Logic"] >= 1);
        assert!(profile["Data Path"] >= 1);
    }

    #[test]
    fn empty_file_all_zero() {
        let tax = KeywordTaxonomy::default();
        let profile = keyword_profile("", None, &tax);
        assert!(profile.values().all(|&v| v == 0));
    }

    #[test]
    fn multi_token_pattern_is_whitespace_insensitive() {
        let tax = KeywordTaxonomy::default();
        let a = keyword_profile("module m; always @(posedge clk) ; endmodule", None, &tax);
        let b = keyword_profile(
            "module m; always @( posedge\n  clk ) ; endmodule",
            None,
            &tax,
        );
        assert_eq!(a["Sequential Logic"], b["Sequential Logic"]);
        assert!(a["Sequential Logic"] >= 2); // `always` and `always @(posedge clk)` and `posedge`
    }

    #[test]
    fn line_count_strips_comments_and_blanks() {
        let src = "// header\n\nmodule m;\n/* block\n   comment */\nendmodule\n";
        assert_eq!(count_lines(src, LineCountMode::Logical), 2);
        assert_eq!(count_lines(src, LineCountMode::Raw), 5);
    }

    #[test]
    fn manifest_longest_prefix() {
        let m = Manifest::parse("repoA\t100\tcores/\nrepoB\t500\tcores/fast/\n").unwrap();
        assert_eq!(m.lookup("cores/slow/a.v"), ("repoA".into(), 100));
        assert_eq!(m.lookup("cores/fast/b.v"), ("repoB".into(), 500));
        assert_eq!(m.lookup("other/c.v"), ("local".into(), 0));
        assert!(Manifest::parse("bad line no tabs").is_err());
    }

    fn mk_candidate(lines: usize, class: &str) -> CorpusCandidate {
        let tax = KeywordTaxonomy::default();
        let mut profile = keyword_profile("module m; endmodule", None, &tax);
        profile.insert("Structural Constructs".into(), 2);
        CorpusCandidate {
            path: "x.v".into(),
            origin: "local".into(),
            stars: 0,
            line_count: lines,
            file_class: class.into(),
            keyword_profile: profile,
            module_names: vec!["m".into()],
            tops: vec!["m".into()],
            missing_modules: vec![],
            verdict: None,
            content_hash: "h".into(),
            source: String::new(),
        }
    }

    #[test]
    fn line_boundaries() {
        let tax = KeywordTaxonomy::default();
        let policy = default_policy();
        for (lines, expect) in [
            (99, Verdict::Rejected(RejectReason::LineCount)),
            (100, Verdict::Accepted),
            (300, Verdict::Accepted),
            (301, Verdict::Rejected(RejectReason::LineCount)),
        ] {
            let c = mk_candidate(lines, "rtl");
            assert_eq!(filter_candidate(&c, &policy, &tax), expect, "lines={}", lines);
        }
    }

    #[test]
    fn class_rejection_comes_first() {
        let tax = KeywordTaxonomy::default();
        let policy = default_policy();
        let c = mk_candidate(200, "testbench");
        assert_eq!(
            filter_candidate(&c, &policy, &tax),
            Verdict::Rejected(RejectReason::FileClass)
        );
    }

    #[test]
    fn incomplete_hierarchy_rejected() {
        let tax = KeywordTaxonomy::default();
        let policy = default_policy();
        let mut c = mk_candidate(200, "rtl");
        c.missing_modules = vec!["fifo_ctrl".into()];
        assert_eq!(
            filter_candidate(&c, &policy, &tax),
            Verdict::Rejected(RejectReason::IncompleteHierarchy)
        );
    }

    #[test]
    fn dedup_keeps_higher_stars() {
        let mut a = mk_candidate(150, "rtl");
        a.verdict = Some(Verdict::Accepted);
        a.stars = 50;
        a.path = "b.v".into();
        a.content_hash = "same".into();
        let mut b = a.clone();
        b.stars = 500;
        b.path = "a.v".into();
        let out = rank_and_dedup(&[a, b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].stars, 500);
    }

    #[test]
    fn tie_breaks_by_path() {
        let mut a = mk_candidate(150, "rtl");
        a.verdict = Some(Verdict::Accepted);
        a.stars = 10;
        a.path = "z.v".into();
        a.content_hash = "h1".into();
        let mut b = a.clone();
        b.path = "a.v".into();
        b.content_hash = "h2".into();
        let out = rank_and_dedup(&[a, b]);
        assert_eq!(out[0].path, "a.v");
        assert_eq!(out[1].path, "z.v");
    }

    #[test]
    fn empty_input_empty_output() {
        assert!(rank_and_dedup(&[]).is_empty());
    }

    #[test]
    fn taxonomy_extension_appends() {
        let mut tax = KeywordTaxonomy::default();
        let before = tax.context.iter().find(|(n, _)| n == "Clock").unwrap().1.len();
        tax.extend_from_str("[context: Clock]\nchronometer\n[structural: My Stuff]\nmystruct\n")
            .unwrap();
        let after = tax.context.iter().find(|(n, _)| n == "Clock").unwrap().1.len();
        assert_eq!(after, before + 1);
        assert!(tax.structural.iter().any(|(n, _)| n == "My Stuff"));
    }

    #[test]
    fn scan_corpus_deterministic_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.v"), "module b; endmodule").unwrap();
        std::fs::write(dir.path().join("a.v"), "module a; endmodule").unwrap();
        std::fs::write(dir.path().join("noise.txt"), "not verilog").unwrap();
        let tax = KeywordTaxonomy::default();
        let mut skipped = Vec::new();
        let out = scan_corpus(
            dir.path(),
            None,
            &tax,
            &FilterPolicy::default(),
            &mut skipped,
        )
        .unwrap();
        let paths: Vec<&str> = out.iter().map(|c| c.path.as_str()).collect();
        assert_eq!(paths, ["a.v", "b.v"]);
        assert!(skipped.is_empty());
        assert!(out.iter().all(|c| c.stars == 0));
    }

    #[test]
    fn detect_tops_multi() {
        let src = r#"
module leaf(input a, output y); assign y = a; endmodule
module mid(input a, output y); leaf u (.a(a), .y(y)); endmodule
module top1(input a, output y); mid u (.a(a), .y(y)); endmodule
module top2(input a, output y); leaf u (.a(a), .y(y)); endmodule
"#;
        let out = rtlgraph_core::parser::parse_design(src).unwrap();
        let tops = detect_tops(&out.modules);
        assert_eq!(tops, vec!["top1".to_string(), "top2".to_string()]);
    }
}
