// SPDX-License-Identifier: Apache-2.0

//! Completion-backend abstraction: one gateway in front of either a real
//! OpenAI-compatible chat endpoint or a deterministic scripted mock, with
//! retry, rate limiting, concurrency capping, and cost accounting.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::io::Write as _;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Routes mock responses and shows up in logs; opaque otherwise.
    pub seed_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    Complete,
    Truncated,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub finish: FinishReason,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

/// Retry/limit/budget policy. `token_budget: None` means unlimited; a
/// budget of zero refuses every request before it reaches the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_concurrent: u32,
    pub requests_per_minute: u32,
    pub token_budget: Option<u64>,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        BackendPolicy {
            max_retries: 3,
            backoff_base_ms: 250,
            max_concurrent: 4,
            requests_per_minute: 0,
            token_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Refinement,
    Instruction,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Refinement => write!(f, "refinement"),
            Stage::Instruction => write!(f, "instruction"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("token budget exhausted")]
    BudgetExhausted,
    #[error("retries exhausted, last status {last_status}")]
    RetriesExhausted { last_status: u16 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Raw backend outcome before gateway bookkeeping.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub finish: FinishReason,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone)]
pub enum BackendFailure {
    /// HTTP 429/5xx/timeouts; retried with exponential backoff.
    Transient { status: u16, message: String },
    Auth(String),
    Malformed(String),
    Fatal(String),
}

pub trait CompletionBackend: Send + Sync {
    fn execute(&self, request: &CompletionRequest) -> Result<BackendResponse, BackendFailure>;
}

// ----------------------------------------------------------------------
// cost accounting
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTotals {
    pub requests: u64,
    pub retries: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl StageTotals {
    pub fn tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub refinement: StageTotals,
    pub instruction: StageTotals,
}

impl CostLedger {
    pub fn total_tokens(&self) -> u64 {
        self.refinement.tokens() + self.instruction.tokens()
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut StageTotals {
        match stage {
            Stage::Refinement => &mut self.refinement,
            Stage::Instruction => &mut self.instruction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub refinement: StageTotals,
    pub instruction: StageTotals,
    pub total_tokens: u64,
    /// tokens x unit price (price per single token).
    pub estimated_spend: f64,
}

impl std::fmt::Display for CostReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "refinement:  {} requests, {} prompt + {} completion tokens",
            self.refinement.requests,
            self.refinement.prompt_tokens,
            self.refinement.completion_tokens
        )?;
        writeln!(
            f,
            "instruction: {} requests, {} prompt + {} completion tokens",
            self.instruction.requests,
            self.instruction.prompt_tokens,
            self.instruction.completion_tokens
        )?;
        write!(
            f,
            "total: {} tokens, estimated spend {:.4}",
            self.total_tokens, self.estimated_spend
        )
    }
}

// ----------------------------------------------------------------------
// time source (injectable for tests)
// ----------------------------------------------------------------------

pub trait TimeSource: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, d: Duration);
}

struct RealTime;

impl TimeSource for RealTime {
    fn now(&self) -> Instant {
        Instant::now()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

// ----------------------------------------------------------------------
// gateway
// ----------------------------------------------------------------------

struct GatewayState {
    ledger: CostLedger,
    in_flight: u32,
    window: VecDeque<Instant>,
}

pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    policy: BackendPolicy,
    state: Mutex<GatewayState>,
    slot_free: Condvar,
    time: Box<dyn TimeSource>,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>, policy: BackendPolicy) -> Self {
        Gateway {
            backend,
            policy,
            state: Mutex::new(GatewayState {
                ledger: CostLedger::default(),
                in_flight: 0,
                window: VecDeque::new(),
            }),
            slot_free: Condvar::new(),
            time: Box::new(RealTime),
        }
    }

    pub fn with_time_source(mut self, time: Box<dyn TimeSource>) -> Self {
        self.time = time;
        self
    }

    pub fn ledger(&self) -> CostLedger {
        self.state.lock().unwrap().ledger
    }

    pub fn cost_report(&self, price_per_1k_tokens: f64) -> CostReport {
        cost_report(&self.ledger(), price_per_1k_tokens)
    }

    /// Issue one completion, honoring budget, rate, concurrency, and retry
    /// policy. The returned text is the backend's, with only trailing
    /// whitespace stripped.
    pub fn complete(
        &self,
        request: &CompletionRequest,
        stage: Stage,
    ) -> Result<CompletionResult, GatewayError> {
        if request.user.is_empty() {
            return Err(GatewayError::InvalidRequest("empty user text".into()));
        }
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} out of range",
                request.temperature
            )));
        }
        if request.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens is zero".into()));
        }

        // budget gate, before any backend traffic
        if let Some(budget) = self.policy.token_budget {
            let total = self.state.lock().unwrap().ledger.total_tokens();
            if total >= budget {
                return Err(GatewayError::BudgetExhausted);
            }
        }

        self.acquire_slot();
        let result = self.run_with_retries(request, stage);
        self.release_slot();
        result
    }

    fn acquire_slot(&self) {
        if self.policy.max_concurrent == 0 {
            return;
        }
        let mut state = self.state.lock().unwrap();
        while state.in_flight >= self.policy.max_concurrent {
            state = self.slot_free.wait(state).unwrap();
        }
        state.in_flight += 1;
    }

    fn release_slot(&self) {
        if self.policy.max_concurrent == 0 {
            return;
        }
        let mut state = self.state.lock().unwrap();
        state.in_flight -= 1;
        drop(state);
        self.slot_free.notify_one();
    }

    /// Current in-flight count (observable for concurrency tests).
    pub fn in_flight(&self) -> u32 {
        self.state.lock().unwrap().in_flight
    }

    fn wait_for_rate_slot(&self) {
        let rpm = self.policy.requests_per_minute;
        if rpm == 0 {
            return;
        }
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = self.time.now();
                while let Some(front) = state.window.front() {
                    if now.duration_since(*front) >= Duration::from_secs(60) {
                        state.window.pop_front();
                    } else {
                        break;
                    }
                }
                if (state.window.len() as u32) < rpm {
                    state.window.push_back(now);
                    None
                } else {
                    let front = *state.window.front().unwrap();
                    Some(Duration::from_secs(60).saturating_sub(now.duration_since(front)))
                }
            };
            match wait {
                None => return,
                Some(d) => self.time.sleep(d.max(Duration::from_millis(1))),
            }
        }
    }

    fn run_with_retries(
        &self,
        request: &CompletionRequest,
        stage: Stage,
    ) -> Result<CompletionResult, GatewayError> {
        let mut attempt: u32 = 0;
        loop {
            self.wait_for_rate_slot();
            let started = self.time.now();
            match self.backend.execute(request) {
                Ok(resp) => {
                    let latency_ms = self.time.now().duration_since(started).as_millis() as u64;
                    let mut state = self.state.lock().unwrap();
                    let totals = state.ledger.stage_mut(stage);
                    totals.requests += 1;
                    totals.retries += attempt as u64;
                    totals.prompt_tokens += resp.prompt_tokens;
                    totals.completion_tokens += resp.completion_tokens;
                    return Ok(CompletionResult {
                        text: resp.text.trim_end().to_string(),
                        finish: resp.finish,
                        prompt_tokens: resp.prompt_tokens,
                        completion_tokens: resp.completion_tokens,
                        latency_ms,
                    });
                }
                Err(BackendFailure::Transient { status, .. }) => {
                    if attempt >= self.policy.max_retries {
                        return Err(GatewayError::RetriesExhausted {
                            last_status: status,
                        });
                    }
                    let backoff = self
                        .policy
                        .backoff_base_ms
                        .saturating_mul(1u64 << attempt.min(16));
                    self.time.sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
                Err(BackendFailure::Auth(m)) => return Err(GatewayError::Auth(m)),
                Err(BackendFailure::Malformed(m)) => {
                    return Err(GatewayError::MalformedResponse(m))
                }
                Err(BackendFailure::Fatal(m)) => return Err(GatewayError::Backend(m)),
            }
        }
    }
}

/// Per-stage and grand totals; spend = tokens x unit price.
pub fn cost_report(ledger: &CostLedger, price_per_1k_tokens: f64) -> CostReport {
    let total_tokens = ledger.total_tokens();
    CostReport {
        refinement: ledger.refinement,
        instruction: ledger.instruction,
        total_tokens,
        estimated_spend: total_tokens as f64 * price_per_1k_tokens / 1000.0,
    }
}

/// Deterministic token estimate used by the mock backend and as a fallback
/// when a server omits usage numbers: one token per 4 characters.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

// ----------------------------------------------------------------------
// scripted mock backend
// ----------------------------------------------------------------------

/// One mock script record. JSONL file: one record per line; the record
/// with tag `default` answers unmatched tags unless `strict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEntry {
    pub tag: String,
    pub response: String,
    /// Statuses consumed per call before the response is served; 200 (or
    /// exhaustion) means success, 401/403 fail auth, others are transient.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub status_sequence: Vec<u16>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// Captured request written to the capture file as one JSON object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapturedRequest {
    pub tag: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub struct MockBackend {
    entries: HashMap<String, MockEntry>,
    default: Option<MockEntry>,
    strict: bool,
    statuses: Mutex<HashMap<String, VecDeque<u16>>>,
    captures: Mutex<Vec<CapturedRequest>>,
    capture_file: Mutex<Option<std::fs::File>>,
}

impl MockBackend {
    pub fn new(entries: Vec<MockEntry>, strict: bool) -> Self {
        let mut map = HashMap::new();
        let mut default = None;
        let mut statuses = HashMap::new();
        for e in entries {
            statuses.insert(e.tag.clone(), VecDeque::from(e.status_sequence.clone()));
            if e.tag == "default" {
                default = Some(e);
            } else {
                map.insert(e.tag.clone(), e);
            }
        }
        MockBackend {
            entries: map,
            default,
            strict,
            statuses: Mutex::new(statuses),
            captures: Mutex::new(Vec::new()),
            capture_file: Mutex::new(None),
        }
    }

    /// Load a JSONL script file.
    pub fn from_script(path: &std::path::Path, strict: bool) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: MockEntry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("mock script line {}: {}", idx + 1, e),
                )
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries, strict))
    }

    /// Also append every request to `path` as JSONL.
    pub fn with_capture_file(self, path: &std::path::Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        *self.capture_file.lock().unwrap() = Some(file);
        Ok(self)
    }

    pub fn captured(&self) -> Vec<CapturedRequest> {
        self.captures.lock().unwrap().clone()
    }
}

impl CompletionBackend for MockBackend {
    fn execute(&self, request: &CompletionRequest) -> Result<BackendResponse, BackendFailure> {
        let cap = CapturedRequest {
            tag: request.seed_tag.clone(),
            system: request.system.clone(),
            user: request.user.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        self.captures.lock().unwrap().push(cap.clone());
        if let Some(f) = self.capture_file.lock().unwrap().as_mut() {
            let line = serde_json::to_string(&cap).expect("capture serializes");
            let _ = writeln!(f, "{}", line);
        }

        let entry = match self.entries.get(&request.seed_tag) {
            Some(e) => e,
            None => match &self.default {
                Some(d) if !self.strict => d,
                _ => {
                    return Err(BackendFailure::Fatal(format!(
                        "mock has no entry for tag '{}'",
                        request.seed_tag
                    )))
                }
            },
        };

        let status = self
            .statuses
            .lock()
            .unwrap()
            .get_mut(&entry.tag)
            .and_then(|q| q.pop_front())
            .unwrap_or(200);
        match status {
            200 => {}
            401 | 403 => {
                return Err(BackendFailure::Auth(format!("mock auth failure {}", status)))
            }
            s => {
                return Err(BackendFailure::Transient {
                    status: s,
                    message: format!("mock transient {}", s),
                })
            }
        }

        let prompt_tokens = approx_tokens(&request.system) + approx_tokens(&request.user);
        let (finish, completion_tokens) = if entry.truncated {
            (FinishReason::Truncated, request.max_tokens as u64)
        } else {
            (FinishReason::Complete, approx_tokens(&entry.response))
        };
        Ok(BackendResponse {
            text: entry.response.clone(),
            finish,
            prompt_tokens,
            completion_tokens,
        })
    }
}

// ----------------------------------------------------------------------
// OpenAI-compatible HTTP backend
// ----------------------------------------------------------------------

pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    /// `endpoint` is the full chat-completions URL; the credential comes
    /// from the named environment variable (and never a CLI flag).
    pub fn new(endpoint: String, model: String, credential_env: Option<&str>) -> Self {
        let api_key = credential_env.and_then(|name| std::env::var(name).ok());
        HttpBackend {
            endpoint,
            model,
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn execute(&self, request: &CompletionRequest) -> Result<BackendResponse, BackendFailure> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &request.system,
                },
                ChatMessage {
                    role: "user",
                    content: &request.user,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                BackendFailure::Transient {
                    status: 0,
                    message: e.to_string(),
                }
            } else {
                BackendFailure::Fatal(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        match status {
            200 => {}
            401 | 403 => return Err(BackendFailure::Auth(format!("status {}: {}", status, text))),
            408 | 429 | 500..=599 => {
                return Err(BackendFailure::Transient {
                    status,
                    message: text,
                })
            }
            s => return Err(BackendFailure::Fatal(format!("status {}: {}", s, text))),
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendFailure::Malformed(format!("{} in: {}", e, truncate(&text))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendFailure::Malformed("no choices".into()))?;
        let finish = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Truncated,
            _ => FinishReason::Complete,
        };
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                approx_tokens(&request.system) + approx_tokens(&request.user),
                approx_tokens(&choice.message.content),
            ),
        };
        let completion_tokens = if finish == FinishReason::Truncated {
            request.max_tokens as u64
        } else {
            completion_tokens
        };
        Ok(BackendResponse {
            text: choice.message.content,
            finish,
            prompt_tokens,
            completion_tokens,
        })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn req(tag: &str) -> CompletionRequest {
        CompletionRequest {
            system: "sys".into(),
            user: "user text".into(),
            temperature: 0.2,
            max_tokens: 256,
            seed_tag: tag.into(),
        }
    }

    fn entry(tag: &str, response: &str) -> MockEntry {
        MockEntry {
            tag: tag.into(),
            response: response.into(),
            status_sequence: vec![],
            truncated: false,
        }
    }

    struct NoSleep;
    impl TimeSource for NoSleep {
        fn now(&self) -> Instant {
            Instant::now()
        }
        fn sleep(&self, _d: Duration) {}
    }

    #[test]
    fn scripted_response_round_trips() {
        let mock = MockBackend::new(vec![entry("refine-1", "fixed text")], true);
        let gw = Gateway::new(Box::new(mock), BackendPolicy::default());
        let out = gw.complete(&req("refine-1"), Stage::Refinement).unwrap();
        assert_eq!(out.text, "fixed text");
        assert_eq!(out.finish, FinishReason::Complete);
    }

    #[test]
    fn retries_on_429_then_succeeds() {
        let mut e = entry("x", "ok");
        e.status_sequence = vec![429, 429];
        let gw = Gateway::new(Box::new(MockBackend::new(vec![e], true)), BackendPolicy {
            max_retries: 3,
            backoff_base_ms: 1,
            ..Default::default()
        })
        .with_time_source(Box::new(NoSleep));
        let out = gw.complete(&req("x"), Stage::Refinement).unwrap();
        assert_eq!(out.text, "ok");
        assert_eq!(gw.ledger().refinement.retries, 2);
    }

    #[test]
    fn retries_exhausted_reports_last_status() {
        let mut e = entry("x", "never");
        e.status_sequence = vec![500, 500, 500, 500, 500];
        let gw = Gateway::new(Box::new(MockBackend::new(vec![e], true)), BackendPolicy {
            max_retries: 2,
            backoff_base_ms: 1,
            ..Default::default()
        })
        .with_time_source(Box::new(NoSleep));
        let err = gw.complete(&req("x"), Stage::Refinement).unwrap_err();
        assert_eq!(err, GatewayError::RetriesExhausted { last_status: 500 });
    }

    #[test]
    fn auth_failure_no_retry() {
        let mut e = entry("x", "never");
        e.status_sequence = vec![401];
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![e], true)),
            BackendPolicy::default(),
        );
        assert!(matches!(
            gw.complete(&req("x"), Stage::Refinement),
            Err(GatewayError::Auth(_))
        ));
        // no retries were recorded
        assert_eq!(gw.ledger().refinement.requests, 0);
    }

    #[test]
    fn zero_budget_refuses_before_any_call() {
        let mock = MockBackend::new(vec![entry("x", "ok")], true);
        let gw = Gateway::new(
            Box::new(mock),
            BackendPolicy {
                token_budget: Some(0),
                ..Default::default()
            },
        );
        assert_eq!(
            gw.complete(&req("x"), Stage::Refinement),
            Err(GatewayError::BudgetExhausted)
        );
        assert_eq!(gw.ledger().total_tokens(), 0);
    }

    #[test]
    fn budget_stops_after_exceeding() {
        let mock = MockBackend::new(vec![entry("default", "some response here")], false);
        let gw = Gateway::new(
            Box::new(mock),
            BackendPolicy {
                token_budget: Some(1),
                ..Default::default()
            },
        );
        assert!(gw.complete(&req("a"), Stage::Instruction).is_ok());
        assert_eq!(
            gw.complete(&req("b"), Stage::Instruction),
            Err(GatewayError::BudgetExhausted)
        );
    }

    #[test]
    fn strict_mock_rejects_unknown_tags() {
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![entry("known", "x")], true)),
            BackendPolicy::default(),
        );
        assert!(matches!(
            gw.complete(&req("unknown"), Stage::Refinement),
            Err(GatewayError::Backend(_))
        ));
    }

    #[test]
    fn default_entry_answers_unknown_tags() {
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![entry("default", "fallback")], false)),
            BackendPolicy::default(),
        );
        let out = gw.complete(&req("anything"), Stage::Instruction).unwrap();
        assert_eq!(out.text, "fallback");
    }

    #[test]
    fn ledger_totals_match_results() {
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![entry("default", "response body")], false)),
            BackendPolicy::default(),
        );
        let mut expect = 0;
        for i in 0..3 {
            let r = gw
                .complete(&req(&format!("t{}", i)), Stage::Instruction)
                .unwrap();
            expect += r.prompt_tokens + r.completion_tokens;
        }
        assert_eq!(gw.ledger().total_tokens(), expect);
    }

    #[test]
    fn cost_report_math() {
        let empty = cost_report(&CostLedger::default(), 5.0);
        assert_eq!(empty.total_tokens, 0);
        assert_eq!(empty.estimated_spend, 0.0);

        let mut ledger = CostLedger::default();
        ledger.refinement.requests = 2;
        ledger.refinement.prompt_tokens = 100;
        ledger.refinement.completion_tokens = 50;
        ledger.instruction.prompt_tokens = 100;
        ledger.instruction.completion_tokens = 50;
        let zero_price = cost_report(&ledger, 0.0);
        assert_eq!(zero_price.total_tokens, 300);
        assert_eq!(zero_price.estimated_spend, 0.0);
        let priced = cost_report(&ledger, 2.0);
        assert!((priced.estimated_spend - 0.6).abs() < 1e-12);
    }

    #[test]
    fn truncated_completion_tokens_equal_max() {
        let mut e = entry("t", "short");
        e.truncated = true;
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![e], true)),
            BackendPolicy::default(),
        );
        let out = gw.complete(&req("t"), Stage::Instruction).unwrap();
        assert_eq!(out.finish, FinishReason::Truncated);
        assert_eq!(out.completion_tokens, 256);
    }

    #[test]
    fn invalid_requests_rejected() {
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![entry("default", "x")], false)),
            BackendPolicy::default(),
        );
        let mut r = req("a");
        r.user = String::new();
        assert!(matches!(
            gw.complete(&r, Stage::Refinement),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut r = req("a");
        r.temperature = 3.0;
        assert!(matches!(
            gw.complete(&r, Stage::Refinement),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    /// Backend that records the maximum number of simultaneous executions.
    struct CountingBackend {
        current: AtomicU32,
        peak: AtomicU32,
    }

    impl CompletionBackend for CountingBackend {
        fn execute(&self, _r: &CompletionRequest) -> Result<BackendResponse, BackendFailure> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(BackendResponse {
                text: "ok".into(),
                finish: FinishReason::Complete,
                prompt_tokens: 1,
                completion_tokens: 1,
            })
        }
    }

    #[test]
    fn concurrency_cap_enforced() {
        let backend = Arc::new(CountingBackend {
            current: AtomicU32::new(0),
            peak: AtomicU32::new(0),
        });
        struct Shared(Arc<CountingBackend>);
        impl CompletionBackend for Shared {
            fn execute(
                &self,
                r: &CompletionRequest,
            ) -> Result<BackendResponse, BackendFailure> {
                self.0.execute(r)
            }
        }
        let gw = Arc::new(Gateway::new(
            Box::new(Shared(backend.clone())),
            BackendPolicy {
                max_concurrent: 2,
                ..Default::default()
            },
        ));
        let mut handles = Vec::new();
        for i in 0..8 {
            let gw = gw.clone();
            handles.push(std::thread::spawn(move || {
                gw.complete(&req(&format!("t{}", i)), Stage::Instruction)
                    .map(|_| ())
            }));
        }
        for h in handles {
            h.join().unwrap().unwrap();
        }
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gw.ledger().instruction.requests, 8);
    }

    #[test]
    fn rate_limiter_waits_when_window_full() {
        struct FakeClock {
            t: Mutex<Instant>,
            slept: Mutex<Vec<Duration>>,
        }
        impl TimeSource for FakeClock {
            fn now(&self) -> Instant {
                *self.t.lock().unwrap()
            }
            fn sleep(&self, d: Duration) {
                self.slept.lock().unwrap().push(d);
                let mut t = self.t.lock().unwrap();
                *t += d;
            }
        }
        let clock = Arc::new(FakeClock {
            t: Mutex::new(Instant::now()),
            slept: Mutex::new(Vec::new()),
        });
        struct ClockRef(Arc<FakeClock>);
        impl TimeSource for ClockRef {
            fn now(&self) -> Instant {
                self.0.now()
            }
            fn sleep(&self, d: Duration) {
                self.0.sleep(d)
            }
        }
        let gw = Gateway::new(
            Box::new(MockBackend::new(vec![entry("default", "x")], false)),
            BackendPolicy {
                requests_per_minute: 2,
                ..Default::default()
            },
        )
        .with_time_source(Box::new(ClockRef(clock.clone())));
        for i in 0..3 {
            gw.complete(&req(&format!("r{}", i)), Stage::Instruction)
                .unwrap();
        }
        // third request had to wait for the window
        let slept = clock.slept.lock().unwrap();
        assert!(
            slept.iter().any(|d| *d >= Duration::from_secs(59)),
            "{:?}",
            slept
        );
    }

    #[test]
    fn mock_captures_requests() {
        let mock = MockBackend::new(vec![entry("default", "x")], false);
        let dir = tempfile::tempdir().unwrap();
        let cap_path = dir.path().join("caps.jsonl");
        let mock = mock.with_capture_file(&cap_path).unwrap();
        let gw = Gateway::new(Box::new(mock), BackendPolicy::default());
        gw.complete(&req("one"), Stage::Refinement).unwrap();
        gw.complete(&req("two"), Stage::Instruction).unwrap();
        let text = std::fs::read_to_string(&cap_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: CapturedRequest = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first.tag, "one");
    }
}
