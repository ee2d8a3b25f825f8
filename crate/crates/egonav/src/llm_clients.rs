//! Remote chat-completion adapters for the pluggable expert roles.
//!
//! One generic blocking [`ChatClient`] speaks to any OpenAI-style chat
//! endpoint; four thin adapters map the [`MacroExpert`],
//! [`NarrationExpert`], [`Navigator`], and [`ExecutionExpert`] interfaces
//! onto it. Prompts are versioned text assets under `assets/prompts/`,
//! compiled in via `include_str!`.
//!
//! Nothing here is on the default evaluation path: scripted components
//! drive all offline runs, and the tests exercise these adapters only
//! against loopback fixtures, so building and testing needs no network
//! access.
//!
//! The API credential is read from the `EGONAV_API_KEY` environment
//! variable when the client is constructed — never at call time — and is
//! redacted from the request/response log lines emitted at debug level.

use crate::egoview::{MacroExpert, MacroJudgment};
use crate::error::ExpertError;
use crate::geometry::Pose2D;
use crate::imagination::{NarrationExpert, NarrationReport, RolloutFrame};
use crate::manager::{ExecutionExpert, Navigator, SelectionRecord, SubtaskPointer};
use crate::worldsim::{Episode, Subtask, WorldMap};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// Environment variable holding the API credential.
pub const API_KEY_VAR: &str = "EGONAV_API_KEY";

pub const MACRO_ADJUST_PROMPT: &str = include_str!("../assets/prompts/macro_adjust.txt");
pub const NARRATION_PROMPT: &str = include_str!("../assets/prompts/narration.txt");
pub const NAVIGATOR_PROMPT: &str = include_str!("../assets/prompts/navigator.txt");
pub const EXECUTION_PROMPT: &str = include_str!("../assets/prompts/execution.txt");

/// One chat-completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub endpoint: String,
    pub model_name: String,
    pub system_prompt: String,
    pub user_content: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    /// Request with the deterministic defaults: temperature 0, 512
    /// completion tokens.
    pub fn new(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        system_prompt: impl Into<String>,
        user_content: impl Into<String>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            system_prompt: system_prompt.into(),
            user_content: user_content.into(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ExpertError> {
        if self.endpoint.is_empty() {
            return Err(ExpertError::Config("endpoint must not be empty".to_string()));
        }
        if self.max_tokens == 0 {
            return Err(ExpertError::Config("max_tokens must be positive".to_string()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ExpertError::Config(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Token accounting as reported by the endpoint; zero when absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Successful chat completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: TokenUsage,
    /// Wall time across all attempts, milliseconds.
    pub latency_ms: u64,
    /// Retries spent before this reply (0 = first attempt succeeded).
    pub retries: u32,
}

/// Transport and retry settings for a [`ChatClient`].
#[derive(Debug, Clone)]
pub struct ChatClientConfig {
    /// Per-attempt timeout.
    pub timeout: Duration,
    /// Extra attempts after the first, spent on transport errors and 5xx
    /// statuses.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub retry_base: Duration,
    /// In-flight request cap shared by all clones of the client.
    pub max_concurrent: usize,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            max_retries: 2,
            retry_base: Duration::from_millis(500),
            max_concurrent: 4,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(limit: usize) -> Self {
        Self { permits: Mutex::new(limit), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.gate.permits.lock().unwrap_or_else(|e| e.into_inner());
        *permits += 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WirePayload<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: TokenUsage,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: String,
}

fn truncate_for_log(text: &str) -> String {
    if text.len() <= 512 {
        text.to_string()
    } else {
        let cut = (0..=512).rev().find(|&i| text.is_char_boundary(i)).unwrap_or(0);
        format!("{}…", &text[..cut])
    }
}

fn redact(secret: &str, text: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}

fn log_line(
    api_key: &str,
    request: &ChatRequest,
    status: u16,
    retries: u32,
    latency_ms: u64,
    reply_text: &str,
) -> String {
    serde_json::json!({
        "endpoint": redact(api_key, &request.endpoint),
        "model": request.model_name,
        "status": status,
        "retries": retries,
        "latency_ms": latency_ms,
        "request": redact(api_key, &truncate_for_log(&request.user_content)),
        "reply": redact(api_key, &truncate_for_log(reply_text)),
    })
    .to_string()
}

fn parse_reply_body(body: &str) -> Result<(String, TokenUsage), ExpertError> {
    let wire: WireReply = serde_json::from_str(body).map_err(|e| ExpertError::Parse {
        message: format!("malformed completion payload: {e}"),
        raw: body.to_string(),
    })?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| ExpertError::Parse {
        message: "no choices in completion payload".to_string(),
        raw: body.to_string(),
    })?;
    if choice.message.content.is_empty() {
        return Err(ExpertError::Parse {
            message: "empty completion text".to_string(),
            raw: body.to_string(),
        });
    }
    Ok((choice.message.content, wire.usage))
}

/// Blocking chat-completion client.
///
/// Clones share one connection pool and one concurrency gate, so the
/// intended wiring is a single client handed to every adapter. Requests
/// retry on transport errors and 5xx statuses with exponential backoff;
/// other statuses fail immediately.
#[derive(Clone)]
pub struct ChatClient {
    http: reqwest::blocking::Client,
    api_key: String,
    gate: Arc<Gate>,
    config: ChatClientConfig,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("api_key", &"[REDACTED]")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ChatClient {
    /// Reads the credential from [`API_KEY_VAR`] and builds the client.
    /// A missing credential fails here, not at call time.
    pub fn new(config: ChatClientConfig) -> Result<Self, ExpertError> {
        let api_key = std::env::var(API_KEY_VAR).map_err(|_| {
            ExpertError::Config(format!("missing credential: set {API_KEY_VAR}"))
        })?;
        if config.max_concurrent == 0 {
            return Err(ExpertError::Config("max_concurrent must be at least 1".to_string()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ExpertError::Config(format!("http client construction failed: {e}")))?;
        let gate = Arc::new(Gate::new(config.max_concurrent));
        Ok(Self { http, api_key, gate, config })
    }

    /// One blocking round-trip, including retries.
    pub fn chat_complete(&self, request: &ChatRequest) -> Result<ChatReply, ExpertError> {
        request.validate()?;
        let payload = WirePayload {
            model: &request.model_name,
            messages: [
                WireMessage { role: "system", content: &request.system_prompt },
                WireMessage { role: "user", content: &request.user_content },
            ],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut attempt: u32 = 0;
        loop {
            let outcome = self
                .http
                .post(&request.endpoint)
                .bearer_auth(&self.api_key)
                .json(&payload)
                .send();
            match outcome {
                Err(e) => {
                    if attempt >= self.config.max_retries {
                        let kind = if e.is_timeout() { "timed out" } else { "transport error" };
                        return Err(ExpertError::Unavailable(format!(
                            "{kind} after {attempt} retries: {e}"
                        )));
                    }
                }
                Ok(response) => {
                    let status = response.status().as_u16();
                    let body = response.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        let (text, usage) = parse_reply_body(&body)?;
                        let latency_ms = started.elapsed().as_millis() as u64;
                        log::debug!(
                            target: "egonav::llm_clients",
                            "{}",
                            log_line(&self.api_key, request, status, attempt, latency_ms, &text)
                        );
                        return Ok(ChatReply { text, usage, latency_ms, retries: attempt });
                    }
                    if !(500..600).contains(&status) || attempt >= self.config.max_retries {
                        log::debug!(
                            target: "egonav::llm_clients",
                            "{}",
                            log_line(&self.api_key, request, status, attempt, 0, &body)
                        );
                        return Err(ExpertError::Remote {
                            status,
                            message: truncate_for_log(&body),
                        });
                    }
                }
            }
            std::thread::sleep(self.config.retry_base * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

fn first_tagged_value<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    text.lines().find_map(|line| line.trim().strip_prefix(tag)).map(str::trim)
}

/// Extracts the candidate index from the first `CHOICE: <k>` line.
pub fn parse_choice(reply: &ChatReply, n_candidates: usize) -> Result<usize, ExpertError> {
    let value = first_tagged_value(&reply.text, "CHOICE:").ok_or_else(|| ExpertError::Parse {
        message: "no CHOICE line in reply".to_string(),
        raw: reply.text.clone(),
    })?;
    let k: usize = value.parse().map_err(|_| ExpertError::Parse {
        message: format!("CHOICE value {value:?} is not an index"),
        raw: reply.text.clone(),
    })?;
    if k >= n_candidates {
        return Err(ExpertError::Parse {
            message: format!("CHOICE {k} out of range for {n_candidates} candidates"),
            raw: reply.text.clone(),
        });
    }
    Ok(k)
}

/// Extracts the advancement count from the first `ADVANCE: <k>` line;
/// completing every remaining subtask at once is allowed, so the range is
/// inclusive.
pub fn parse_advance(reply: &ChatReply, remaining: usize) -> Result<usize, ExpertError> {
    let value = first_tagged_value(&reply.text, "ADVANCE:").ok_or_else(|| ExpertError::Parse {
        message: "no ADVANCE line in reply".to_string(),
        raw: reply.text.clone(),
    })?;
    let k: usize = value.parse().map_err(|_| ExpertError::Parse {
        message: format!("ADVANCE value {value:?} is not a count"),
        raw: reply.text.clone(),
    })?;
    if k > remaining {
        return Err(ExpertError::Parse {
            message: format!("ADVANCE {k} exceeds the {remaining} remaining subtasks"),
            raw: reply.text.clone(),
        });
    }
    Ok(k)
}

/// Endpoint and model naming for one remote role.
#[derive(Debug, Clone)]
pub struct RemoteRoleConfig {
    pub endpoint: String,
    pub model_name: String,
    pub max_tokens: u32,
}

impl RemoteRoleConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), model_name: model_name.into(), max_tokens: 512 }
    }
}

struct RoleClient {
    client: ChatClient,
    role: RemoteRoleConfig,
    system_prompt: &'static str,
}

impl RoleClient {
    fn complete(&self, user_content: String) -> Result<ChatReply, ExpertError> {
        self.client.chat_complete(&ChatRequest {
            endpoint: self.role.endpoint.clone(),
            model_name: self.role.model_name.clone(),
            system_prompt: self.system_prompt.to_string(),
            user_content,
            max_tokens: self.role.max_tokens,
            temperature: 0.0,
        })
    }
}

/// Remote initial-view judge; expects a one-word `ALIGNED`/`ROTATE` reply.
pub struct RemoteMacroExpert {
    role: RoleClient,
}

impl RemoteMacroExpert {
    pub fn new(client: ChatClient, role: RemoteRoleConfig) -> Self {
        Self { role: RoleClient { client, role, system_prompt: MACRO_ADJUST_PROMPT } }
    }
}

impl MacroExpert for RemoteMacroExpert {
    fn judge(&self, instruction: &str, landmark_summary: &str) -> Result<MacroJudgment, ExpertError> {
        let user = format!("instruction:\n{instruction}\n\nlandmarks in view:\n{landmark_summary}");
        let reply = self.role.complete(user)?;
        match reply.text.trim().split_whitespace().next() {
            Some("ALIGNED") => Ok(MacroJudgment::Aligned),
            Some("ROTATE") => Ok(MacroJudgment::Rotate),
            _ => Err(ExpertError::Parse {
                message: "expected ALIGNED or ROTATE".to_string(),
                raw: reply.text,
            }),
        }
    }
}

/// Remote rollout narrator; sends the frames as JSON and expects the
/// six-line report block.
pub struct RemoteNarrationExpert {
    role: RoleClient,
}

impl RemoteNarrationExpert {
    pub fn new(client: ChatClient, role: RemoteRoleConfig) -> Self {
        Self { role: RoleClient { client, role, system_prompt: NARRATION_PROMPT } }
    }
}

impl NarrationExpert for RemoteNarrationExpert {
    fn narrate(&self, frames: &[RolloutFrame]) -> Result<NarrationReport, ExpertError> {
        let user = serde_json::to_string(frames).map_err(|e| {
            ExpertError::Config(format!("frames not serializable: {e}"))
        })?;
        let reply = self.role.complete(user)?;
        NarrationReport::from_text(reply.text.trim())
    }
}

/// Remote candidate selector; sends the subtask plus one narration block
/// per candidate and expects a `CHOICE: <k>` line.
pub struct RemoteNavigator {
    role: RoleClient,
}

impl RemoteNavigator {
    pub fn new(client: ChatClient, role: RemoteRoleConfig) -> Self {
        Self { role: RoleClient { client, role, system_prompt: NAVIGATOR_PROMPT } }
    }
}

impl Navigator for RemoteNavigator {
    fn select(
        &self,
        _map: &WorldMap,
        _pose: &Pose2D,
        subtask: &Subtask,
        reports: &[NarrationReport],
    ) -> Result<SelectionRecord, ExpertError> {
        let mut user = format!("subtask: {}\n\n", subtask.text);
        for (i, report) in reports.iter().enumerate() {
            user.push_str(&format!("candidate {i}:\n{}\n", report.to_text()));
        }
        let reply = self.role.complete(user)?;
        let chosen_id = parse_choice(&reply, reports.len())?;
        Ok(SelectionRecord {
            candidate_reports: reports.to_vec(),
            scores: vec![0.0; reports.len()],
            chosen_id,
            rationale: reply.text,
        })
    }
}

/// Remote progress monitor; sends the before/after poses plus the
/// remaining subtasks and expects an `ADVANCE: <count>` line.
pub struct RemoteExecutionExpert {
    role: RoleClient,
}

impl RemoteExecutionExpert {
    pub fn new(client: ChatClient, role: RemoteRoleConfig) -> Self {
        Self { role: RoleClient { client, role, system_prompt: EXECUTION_PROMPT } }
    }
}

impl ExecutionExpert for RemoteExecutionExpert {
    fn assess(
        &self,
        episode: &Episode,
        before: &Pose2D,
        after: &Pose2D,
        ptr: &SubtaskPointer,
    ) -> Result<(SubtaskPointer, usize), ExpertError> {
        let remaining = &episode.subtasks[ptr.index()..];
        if remaining.is_empty() {
            return Ok((ptr.clone(), 0));
        }
        let mut user = format!(
            "pose before: x {:.3}, y {:.3}, yaw {:.3}\npose after: x {:.3}, y {:.3}, yaw {:.3}\n\nremaining subtasks:\n",
            before.x, before.y, before.yaw, after.x, after.y, after.yaw
        );
        for (i, subtask) in remaining.iter().enumerate() {
            user.push_str(&format!("{i}: {}\n", subtask.text));
        }
        let reply = self.role.complete(user)?;
        let count = parse_advance(&reply, remaining.len())?;
        Ok((ptr.advanced(count), count))
    }
}
