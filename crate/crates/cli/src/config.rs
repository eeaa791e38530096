// SPDX-License-Identifier: Apache-2.0

//! Pipeline configuration: TOML file plus CLI flag overrides, validated
//! before any work starts.

use rtlgraph_pipeline::curator::LineCountMode;
use rtlgraph_pipeline::gateway::BackendPolicy;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    WithGraph,
    CodeOnly,
    Both,
}

impl RunMode {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "with-graph" => Ok(RunMode::WithGraph),
            "code-only" => Ok(RunMode::CodeOnly),
            "both" => Ok(RunMode::Both),
            other => Err(ConfigError::bad("instruct.mode", other)),
        }
    }

    pub fn modes(&self) -> Vec<rtlgraph_pipeline::instructgen::Mode> {
        use rtlgraph_pipeline::instructgen::Mode;
        match self {
            RunMode::WithGraph => vec![Mode::WithGraph],
            RunMode::CodeOnly => vec![Mode::CodeOnly],
            RunMode::Both => vec![Mode::WithGraph, Mode::CodeOnly],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn bad(key: &str, value: impl std::fmt::Display) -> Self {
        ConfigError {
            key: key.to_string(),
            message: format!("invalid value '{}'", value),
        }
    }

    fn missing(key: &str, why: &str) -> Self {
        ConfigError {
            key: key.to_string(),
            message: why.to_string(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config key '{}': {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Validated, fully-resolved pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus_root: PathBuf,
    pub manifest: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub min_lines: usize,
    pub max_lines: usize,
    pub min_stars: u64,
    pub count_mode: LineCountMode,
    pub extensions: Vec<String>,

    pub backend_kind: BackendKind,
    pub mock_script: Option<PathBuf>,
    pub mock_strict: bool,
    pub capture_path: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,

    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_concurrent: u32,
    pub requests_per_minute: u32,
    /// 0 means unlimited, matching the config-file contract.
    pub token_budget: u64,
    pub price_per_1k_tokens: f64,

    pub refine_max_attempts: u32,
    pub refine_temperature: f64,
    pub refine_max_tokens: u32,
    pub synthesis_cmd: Option<String>,

    pub graph_max_nodes: usize,

    pub instruct_temperature: f64,
    pub instruct_max_tokens: u32,
    pub min_instruction_chars: usize,
    pub mode: RunMode,

    pub output: PathBuf,
    pub work_dir: PathBuf,
    pub workers: usize,
    pub log_json: bool,
}

impl PipelineConfig {
    pub fn backend_policy(&self) -> BackendPolicy {
        BackendPolicy {
            max_retries: self.max_retries,
            backoff_base_ms: self.backoff_ms,
            max_concurrent: self.max_concurrent,
            requests_per_minute: self.requests_per_minute,
            token_budget: if self.token_budget == 0 {
                None
            } else {
                Some(self.token_budget)
            },
        }
    }
}

// raw TOML layers (everything optional; defaults applied after merge)

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    corpus: RawCorpus,
    #[serde(default)]
    backend: RawBackend,
    #[serde(default)]
    policy: RawPolicy,
    #[serde(default)]
    refine: RawRefine,
    #[serde(default)]
    graphs: RawGraphs,
    #[serde(default)]
    instruct: RawInstruct,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    root: Option<PathBuf>,
    manifest: Option<PathBuf>,
    taxonomy: Option<PathBuf>,
    min_lines: Option<usize>,
    max_lines: Option<usize>,
    min_stars: Option<u64>,
    count_mode: Option<String>,
    extensions: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    kind: Option<String>,
    script: Option<PathBuf>,
    strict: Option<bool>,
    capture: Option<PathBuf>,
    endpoint: Option<String>,
    model: Option<String>,
    credential_env: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    max_retries: Option<u32>,
    backoff_ms: Option<u64>,
    max_concurrent: Option<u32>,
    requests_per_minute: Option<u32>,
    token_budget: Option<u64>,
    price_per_1k_tokens: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRefine {
    max_attempts: Option<u32>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    synthesis_cmd: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraphs {
    max_nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstruct {
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    min_instruction_chars: Option<usize>,
    mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    work_dir: Option<PathBuf>,
    workers: Option<usize>,
    log_json: Option<bool>,
}

/// CLI flag overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub corpus_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub capture: Option<PathBuf>,
    pub backend_kind: Option<String>,
    pub mode: Option<String>,
    pub output: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub min_stars: Option<u64>,
    pub token_budget: Option<u64>,
    pub log_json: bool,
}

pub fn load(config_path: Option<&Path>, ov: &Overrides) -> Result<PipelineConfig, ConfigError> {
    let raw: RawConfig = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                key: "config".into(),
                message: format!("cannot read {}: {}", p.display(), e),
            })?;
            toml::from_str(&text).map_err(|e| ConfigError {
                key: "config".into(),
                message: e.to_string(),
            })?
        }
        None => RawConfig::default(),
    };

    let count_mode = match raw
        .corpus
        .count_mode
        .as_deref()
        .unwrap_or("logical")
    {
        "logical" => LineCountMode::Logical,
        "raw" => LineCountMode::Raw,
        other => return Err(ConfigError::bad("corpus.count_mode", other)),
    };

    let backend_kind = match ov
        .backend_kind
        .as_deref()
        .or(raw.backend.kind.as_deref())
        .unwrap_or("mock")
    {
        "mock" => BackendKind::Mock,
        "http" => BackendKind::Http,
        other => return Err(ConfigError::bad("backend.kind", other)),
    };

    let mode = RunMode::parse(
        ov.mode
            .as_deref()
            .or(raw.instruct.mode.as_deref())
            .unwrap_or("with-graph"),
    )?;

    let output = ov
        .output
        .clone()
        .or(raw.output.path)
        .unwrap_or_else(|| PathBuf::from("out/dataset.jsonl"));
    let work_dir = ov
        .work_dir
        .clone()
        .or(raw.output.work_dir)
        .unwrap_or_else(|| output.parent().unwrap_or(Path::new(".")).join("work"));

    let cfg = PipelineConfig {
        corpus_root: ov
            .corpus_root
            .clone()
            .or(raw.corpus.root)
            .unwrap_or_else(|| PathBuf::from(".")),
        manifest: ov.manifest.clone().or(raw.corpus.manifest),
        taxonomy: ov.taxonomy.clone().or(raw.corpus.taxonomy),
        min_lines: raw.corpus.min_lines.unwrap_or(100),
        max_lines: raw.corpus.max_lines.unwrap_or(300),
        min_stars: ov.min_stars.or(raw.corpus.min_stars).unwrap_or(0),
        count_mode,
        extensions: raw
            .corpus
            .extensions
            .unwrap_or_else(|| vec!["v".to_string()]),

        backend_kind,
        mock_script: ov.mock_script.clone().or(raw.backend.script),
        mock_strict: raw.backend.strict.unwrap_or(false),
        capture_path: ov.capture.clone().or(raw.backend.capture),
        endpoint: raw.backend.endpoint.unwrap_or_default(),
        model: raw.backend.model.unwrap_or_default(),
        credential_env: raw
            .backend
            .credential_env
            .unwrap_or_else(|| "RTLGRAPH_API_KEY".to_string()),

        max_retries: raw.policy.max_retries.unwrap_or(3),
        backoff_ms: raw.policy.backoff_ms.unwrap_or(250),
        max_concurrent: raw.policy.max_concurrent.unwrap_or(4),
        requests_per_minute: raw.policy.requests_per_minute.unwrap_or(0),
        token_budget: ov.token_budget.or(raw.policy.token_budget).unwrap_or(0),
        price_per_1k_tokens: raw.policy.price_per_1k_tokens.unwrap_or(0.0),

        refine_max_attempts: raw.refine.max_attempts.unwrap_or(2),
        refine_temperature: raw.refine.temperature.unwrap_or(0.2),
        refine_max_tokens: raw.refine.max_tokens.unwrap_or(4096),
        synthesis_cmd: raw.refine.synthesis_cmd.filter(|s| !s.trim().is_empty()),

        graph_max_nodes: raw.graphs.max_nodes.unwrap_or(500),

        instruct_temperature: raw.instruct.temperature.unwrap_or(0.7),
        instruct_max_tokens: raw.instruct.max_tokens.unwrap_or(1024),
        min_instruction_chars: raw.instruct.min_instruction_chars.unwrap_or(200),
        mode,

        output,
        work_dir,
        workers: ov.workers.or(raw.output.workers).unwrap_or(4),
        log_json: ov.log_json || raw.output.log_json.unwrap_or(false),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &PipelineConfig) -> Result<(), ConfigError> {
    if cfg.min_lines > cfg.max_lines {
        return Err(ConfigError::missing(
            "corpus.min_lines",
            "min_lines exceeds max_lines",
        ));
    }
    if cfg.workers == 0 {
        return Err(ConfigError::missing("output.workers", "must be at least 1"));
    }
    if !(0.0..=2.0).contains(&cfg.refine_temperature) {
        return Err(ConfigError::bad("refine.temperature", cfg.refine_temperature));
    }
    if !(0.0..=2.0).contains(&cfg.instruct_temperature) {
        return Err(ConfigError::bad(
            "instruct.temperature",
            cfg.instruct_temperature,
        ));
    }
    match cfg.backend_kind {
        BackendKind::Mock => {
            if cfg.mock_script.is_none() {
                return Err(ConfigError::missing(
                    "backend.script",
                    "mock backend needs a script file",
                ));
            }
        }
        BackendKind::Http => {
            if cfg.endpoint.is_empty() {
                return Err(ConfigError::missing(
                    "backend.endpoint",
                    "http backend needs an endpoint URL",
                ));
            }
            if cfg.model.is_empty() {
                return Err(ConfigError::missing(
                    "backend.model",
                    "http backend needs a model name",
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let ov = Overrides {
            mock_script: Some(PathBuf::from("script.jsonl")),
            ..Default::default()
        };
        let cfg = load(None, &ov).unwrap();
        assert_eq!(cfg.min_lines, 100);
        assert_eq!(cfg.max_lines, 300);
        assert_eq!(cfg.mode, RunMode::WithGraph);
        assert_eq!(cfg.graph_max_nodes, 500);
        assert_eq!(cfg.min_instruction_chars, 200);
        assert_eq!(cfg.credential_env, "RTLGRAPH_API_KEY");
    }

    #[test]
    fn mock_without_script_fails_fast() {
        let err = load(None, &Overrides::default()).unwrap_err();
        assert_eq!(err.key, "backend.script");
    }

    #[test]
    fn toml_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            r#"
[corpus]
root = "corpus"
min_lines = 10
max_lines = 50

[backend]
kind = "mock"
script = "mock.jsonl"

[instruct]
mode = "both"

[output]
path = "data/out.jsonl"
workers = 2
"#,
        )
        .unwrap();
        let cfg = load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.min_lines, 10);
        assert_eq!(cfg.mode, RunMode::Both);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.work_dir, PathBuf::from("data/work"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[corpus]\nnot_a_key = 1\n").unwrap();
        assert!(load(Some(&path), &Overrides::default()).is_err());
    }

    #[test]
    fn zero_budget_means_unlimited_in_config() {
        let ov = Overrides {
            mock_script: Some(PathBuf::from("s.jsonl")),
            token_budget: Some(0),
            ..Default::default()
        };
        let cfg = load(None, &ov).unwrap();
        assert_eq!(cfg.backend_policy().token_budget, None);
        let ov = Overrides {
            mock_script: Some(PathBuf::from("s.jsonl")),
            token_budget: Some(7),
            ..Default::default()
        };
        let cfg = load(None, &ov).unwrap();
        assert_eq!(cfg.backend_policy().token_budget, Some(7));
    }
}
