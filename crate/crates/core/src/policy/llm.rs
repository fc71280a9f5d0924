//! Chat-endpoint planner: one request, one repair round, then fallback.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::prompt::{build_prompt, repair_prompt, PlannerContext};
use crate::space::yaml::from_yaml;
use crate::space::{HyperConfig, SearchSpace};

pub const DEFAULT_LLM_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TIMEOUT_S: f64 = 60.0;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

const SYSTEM_PROMPT: &str = "You are an expert in physics-informed neural networks. \
    You answer with a single YAML configuration inside one fenced code block.";

/// Endpoint settings. Loaded from a YAML file or from `PINNTUNE_LLM_*`
/// environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSettings {
    /// Base URL up to and including `/v1`; `/chat/completions` is appended.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}
fn default_temperature() -> f64 {
    DEFAULT_LLM_TEMPERATURE
}
fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("{0} is not set")]
    Missing(&'static str),
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl EndpointSettings {
    pub fn from_env() -> Result<Self, SettingsError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Same as [`Self::from_env`] over an arbitrary variable source.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, SettingsError> {
        let url = get("PINNTUNE_LLM_URL").ok_or(SettingsError::Missing("PINNTUNE_LLM_URL"))?;
        let model = get("PINNTUNE_LLM_MODEL").ok_or(SettingsError::Missing("PINNTUNE_LLM_MODEL"))?;
        let api_key = get("PINNTUNE_LLM_API_KEY").or_else(|| get("OPENAI_API_KEY"));
        let num = |key: &'static str, default: f64| -> Result<f64, SettingsError> {
            match get(key) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| SettingsError::Invalid {
                    key,
                    message: format!("`{v}` is not a number"),
                }),
            }
        };
        let s = Self {
            url,
            model,
            api_key,
            timeout_s: num("PINNTUNE_LLM_TIMEOUT_S", DEFAULT_TIMEOUT_S)?,
            temperature: num("PINNTUNE_LLM_TEMPERATURE", DEFAULT_LLM_TEMPERATURE)?,
            max_in_flight: num("PINNTUNE_LLM_MAX_IN_FLIGHT", DEFAULT_MAX_IN_FLIGHT as f64)? as usize,
        };
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let file_err = |message: String| SettingsError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let s: Self = serde_yaml::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), SettingsError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(SettingsError::Invalid {
                key: "timeout_s",
                message: "must be positive".into(),
            });
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(SettingsError::Invalid {
                key: "temperature",
                message: "must be non-negative".into(),
            });
        }
        if self.max_in_flight == 0 {
            return Err(SettingsError::Invalid {
                key: "max_in_flight",
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// One chat-completion round trip; returns the assistant text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, settings: &EndpointSettings, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

/// Blocking HTTPS transport for OpenAI-compatible endpoints.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(settings: &EndpointSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_s)))
            .build()
            .into();
        Self { agent }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, settings: &EndpointSettings, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = json!({
            "model": settings.model,
            "temperature": settings.temperature,
            "messages": messages,
        });
        let mut req = self
            .agent
            .post(settings.completions_url())
            .header("Content-Type", "application/json");
        if let Some(key) = &settings.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| TransportError(e.to_string()))?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| TransportError(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError("reply has no choices[0].message.content".into()))
    }
}

impl<T: ChatTransport + ?Sized> ChatTransport for std::sync::Arc<T> {
    fn complete(&self, settings: &EndpointSettings, messages: &[ChatMessage]) -> Result<String, TransportError> {
        (**self).complete(settings, messages)
    }
}

/// Canned replies, consumed in order. Errors once exhausted.
#[derive(Default)]
pub struct ScriptedTransport {
    replies: Mutex<std::collections::VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::default(),
        }
    }

    /// Every message list sent so far.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatTransport for ScriptedTransport {
    fn complete(&self, _: &EndpointSettings, messages: &[ChatMessage]) -> Result<String, TransportError> {
        self.requests.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError("no scripted reply left".into())))
    }
}

/// The planner could not produce a valid configuration.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("planner fallback: {reason}")]
pub struct Fallback {
    pub reason: String,
}

/// Body of the first fenced block tagged `yaml`/`yml` (or untagged).
pub fn extract_yaml_block(reply: &str) -> Option<&str> {
    let mut rest = reply;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let line_end = after.find('\n')?;
        let tag = after[..line_end].trim();
        let body = &after[line_end + 1..];
        let end = body.find("```")?;
        if tag.is_empty() || tag.eq_ignore_ascii_case("yaml") || tag.eq_ignore_ascii_case("yml") {
            return Some(&body[..end]);
        }
        rest = &body[end + 3..];
    }
    None
}

fn parse_reply(reply: &str, space: &SearchSpace) -> Result<HyperConfig, String> {
    let block = extract_yaml_block(reply).ok_or("no fenced yaml block found")?;
    let config = from_yaml(block).map_err(|e| e.to_string())?;
    space
        .validate(&config)
        .map_err(|vs| vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))?;
    Ok(config)
}

struct Gate {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Serialize)]
struct LogLine<'a> {
    timestamp: String,
    model: &'a str,
    pde_id: &'a str,
    iteration: u32,
    attempt: u32,
    messages: &'a [ChatMessage],
    reply: Option<&'a str>,
    error: Option<&'a str>,
}

pub struct LlmPlanner {
    settings: EndpointSettings,
    transport: Box<dyn ChatTransport>,
    log_path: Option<PathBuf>,
    log_lock: Mutex<()>,
    gate: Gate,
}

impl LlmPlanner {
    pub fn new(settings: EndpointSettings, transport: Box<dyn ChatTransport>) -> Self {
        let gate = Gate {
            limit: settings.max_in_flight.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        };
        Self {
            settings,
            transport,
            log_path: None,
            log_lock: Mutex::new(()),
            gate,
        }
    }

    pub fn http(settings: EndpointSettings) -> Self {
        let t = HttpTransport::new(&settings);
        Self::new(settings, Box::new(t))
    }

    /// Append every request and reply to a JSONL file.
    pub fn with_prompts_log(mut self, path: impl Into<PathBuf>) -> Self {
        self.log_path = Some(path.into());
        self
    }

    pub fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    fn log(
        &self,
        ctx: &PlannerContext,
        attempt: u32,
        messages: &[ChatMessage],
        outcome: &Result<String, TransportError>,
    ) {
        let Some(path) = &self.log_path else { return };
        let (reply, error) = match outcome {
            Ok(r) => (Some(r.as_str()), None),
            Err(e) => (None, Some(e.0.as_str())),
        };
        let line = LogLine {
            timestamp: crate::db::now_rfc3339(),
            model: &self.settings.model,
            pde_id: &ctx.pde.id,
            iteration: ctx.iteration,
            attempt,
            messages,
            reply,
            error,
        };
        let _g = self.log_lock.lock().unwrap();
        let text = serde_json::to_string(&line).expect("log line serializes") + "\n";
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(text.as_bytes()));
        if let Err(e) = written {
            tracing::warn!(path = %path.display(), error = %e, "cannot write prompts log");
        }
    }

    fn call(&self, ctx: &PlannerContext, attempt: u32, messages: &[ChatMessage]) -> Result<String, Fallback> {
        let outcome = {
            let _slot = self.gate.enter();
            self.transport.complete(&self.settings, messages)
        };
        self.log(ctx, attempt, messages, &outcome);
        outcome.map_err(|e| Fallback {
            reason: format!("endpoint error: {}", e.0),
        })
    }

    /// Ask the endpoint for a configuration. Invalid replies get exactly one
    /// repair request citing the problems.
    pub fn propose(&self, ctx: &PlannerContext, space: &SearchSpace) -> Result<HyperConfig, Fallback> {
        let mut messages = vec![
            ChatMessage::new("system", SYSTEM_PROMPT),
            ChatMessage::new("user", build_prompt(ctx, space)),
        ];
        let reply = self.call(ctx, 0, &messages)?;
        let problems = match parse_reply(&reply, space) {
            Ok(c) => return Ok(c),
            Err(p) => p,
        };
        tracing::info!(pde = %ctx.pde.id, %problems, "planner reply rejected; requesting repair");
        messages.push(ChatMessage::new("assistant", reply));
        messages.push(ChatMessage::new("user", repair_prompt(&problems)));
        let reply = self.call(ctx, 1, &messages)?;
        parse_reply(&reply, space).map_err(|p| Fallback {
            reason: format!("invalid reply after repair: {p}"),
        })
    }
}

/// Free-function form of [`LlmPlanner::propose`].
pub fn llm_propose(planner: &LlmPlanner, ctx: &PlannerContext, space: &SearchSpace) -> Result<HyperConfig, Fallback> {
    planner.propose(ctx, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::policy::prompt::{CurveSummary, Feedback};
    use crate::space::yaml::to_yaml;
    use crate::tree::TreeState;

    fn settings() -> EndpointSettings {
        EndpointSettings {
            url: "http://127.0.0.1:9/v1".into(),
            model: "test-model".into(),
            api_key: None,
            timeout_s: 1.0,
            temperature: 0.7,
            max_in_flight: 2,
        }
    }

    fn ctx() -> PlannerContext {
        let fb = Feedback {
            mse: Some(0.01),
            diverged: false,
            curve: CurveSummary::from_losses(&[1.0]),
        };
        PlannerContext::new(
            catalog::get("poisson1d").unwrap().summary(),
            vec![],
            TreeState { path: vec![] },
            Some(fb),
            1,
            5,
        )
        .unwrap()
    }

    fn space() -> SearchSpace {
        SearchSpace::tree(false)
    }

    fn fenced(c: &HyperConfig) -> String {
        format!("Here you go:\n```yaml\n{}```\nGood luck.", to_yaml(c))
    }

    #[test]
    fn valid_reply_parses() {
        let c = space().random_sample(3);
        let planner = LlmPlanner::new(settings(), Box::new(ScriptedTransport::new([Ok(fenced(&c))])));
        assert_eq!(planner.propose(&ctx(), &space()), Ok(c));
    }

    #[test]
    fn width_30_gets_one_repair_then_fallback() {
        let mut bad = space().random_sample(4);
        bad.width = 30;
        let transport = std::sync::Arc::new(ScriptedTransport::new([Ok(fenced(&bad)), Ok(fenced(&bad))]));
        struct Shared(std::sync::Arc<ScriptedTransport>);
        impl ChatTransport for Shared {
            fn complete(&self, s: &EndpointSettings, m: &[ChatMessage]) -> Result<String, TransportError> {
                self.0.complete(s, m)
            }
        }
        let planner = LlmPlanner::new(settings(), Box::new(Shared(transport.clone())));
        let err = planner.propose(&ctx(), &space()).unwrap_err();
        assert!(err.reason.contains("width not in"));
        let reqs = transport.requests();
        assert_eq!(reqs.len(), 2);
        let repair = &reqs[1].last().unwrap().content;
        assert!(repair.contains("width not in {8,12,…,256}"));
    }

    #[test]
    fn repair_can_succeed() {
        let good = space().random_sample(5);
        let mut bad = good;
        bad.width = 30;
        let planner = LlmPlanner::new(
            settings(),
            Box::new(ScriptedTransport::new([Ok(fenced(&bad)), Ok(fenced(&good))])),
        );
        assert_eq!(planner.propose(&ctx(), &space()), Ok(good));
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let planner = LlmPlanner::http(settings());
        let start = std::time::Instant::now();
        assert!(planner.propose(&ctx(), &space()).is_err());
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn prompts_are_logged() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("prompts.jsonl");
        let planner = LlmPlanner::new(
            settings(),
            Box::new(ScriptedTransport::new([Ok("no yaml here".into())])),
        )
        .with_prompts_log(&log);
        assert!(planner.propose(&ctx(), &space()).is_err());
        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["reply"], "no yaml here");
        assert!(lines[1]["error"].is_string());
    }

    #[test]
    fn extracts_first_yaml_fence() {
        let text = "```python\nx = 1\n```\n```yaml\na: 1\n```\n```yaml\nb: 2\n```";
        assert_eq!(extract_yaml_block(text), Some("a: 1\n"));
        assert_eq!(extract_yaml_block("no fence"), None);
        assert_eq!(extract_yaml_block("```\nc: 3\n```"), Some("c: 3\n"));
    }

    #[test]
    fn settings_from_lookup() {
        let vars = std::collections::HashMap::from([
            ("PINNTUNE_LLM_URL", "https://example.invalid/v1/"),
            ("PINNTUNE_LLM_MODEL", "m"),
            ("PINNTUNE_LLM_TIMEOUT_S", "5"),
        ]);
        let s = EndpointSettings::from_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(s.completions_url(), "https://example.invalid/v1/chat/completions");
        assert_eq!(s.temperature, 0.7);
        assert_eq!(s.timeout_s, 5.0);
        assert!(matches!(
            EndpointSettings::from_lookup(|_| None),
            Err(SettingsError::Missing(_))
        ));
    }
}
