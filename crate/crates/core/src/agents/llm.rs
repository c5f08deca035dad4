//! HTTP client backend for an external language-model service.
//!
//! Each request is a JSON body `{"model", "task", "prompt"}`. The service
//! answers either with the reply object itself or with `{"content": "<json>"}`
//! wrapping it. Reaction replies follow `{"action", "text", "inclination"}`.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{build_profile, AgentError, AgentProfile, BehaviorContext, BehaviorPolicy, Reaction, MAX_INCLINATION};
use crate::dataset::{InteractionEvent, UserRecord};

/// Environment variable holding the service API key.
pub const API_KEY_ENV: &str = "KOLSIM_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: "gpt-4".into(),
            max_in_flight: 100,
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Prompt templates with `{profile}`, `{influencer_profile}`, `{history}` and
/// `{content}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub react: String,
    pub assess: String,
    pub profile: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            react: include_str!("../../templates/react.txt").into(),
            assess: include_str!("../../templates/assess.txt").into(),
            profile: include_str!("../../templates/profile.txt").into(),
        }
    }
}

impl Templates {
    /// Loads `react.txt`, `assess.txt` and `profile.txt` from `dir`, keeping
    /// the built-in text for any that are missing.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("react.txt", &mut t.react),
            ("assess.txt", &mut t.assess),
            ("profile.txt", &mut t.profile),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }
}

/// Substitutes `{name}` placeholders in one pass, so substituted values are
/// never rescanned.
pub(crate) fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in values {
            let key = format!("{{{name}}}");
            if tail.starts_with(&key) {
                out.push_str(value);
                rest = &tail[key.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Counting gate capping concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmPolicy {
    config: LlmConfig,
    templates: Templates,
    agent: ureq::Agent,
    api_key: Option<String>,
    gate: Gate,
    failures: AtomicU64,
}

impl std::fmt::Debug for LlmPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmPolicy")
            .field("config", &self.config)
            .field("parse_failures", &self.parse_failures())
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ReactReply {
    action: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    inclination: Option<Value>,
}

#[derive(Deserialize)]
struct ProfileReply {
    interest_tags: Vec<String>,
    persona_summary: String,
}

fn parse_inclination(v: &Value) -> Option<u8> {
    let x = v.as_f64()?;
    (x.fract() == 0.0).then(|| x.clamp(0.0, f64::from(MAX_INCLINATION)) as u8)
}

/// Unwraps `{"content": "<json>"}` envelopes.
fn unwrap_reply(body: &str) -> Option<Value> {
    let v: Value = serde_json::from_str(body.trim()).ok()?;
    match v.get("content").and_then(Value::as_str) {
        Some(inner) => serde_json::from_str(inner.trim()).ok(),
        None => Some(v),
    }
}

impl LlmPolicy {
    /// Reads the API key from the environment; requests are sent without
    /// authorization when it is unset.
    pub fn new(config: LlmConfig, templates: Templates) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, templates, api_key)
    }

    pub fn with_api_key(config: LlmConfig, templates: Templates, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self {
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                cap: config.max_in_flight.max(1),
            },
            config,
            templates,
            agent,
            api_key,
            failures: AtomicU64::new(0),
        }
    }

    fn send(&self, task: &str, prompt: String) -> Result<String, AgentError> {
        let body = json!({ "model": self.config.model, "task": task, "prompt": prompt });
        let attempts = self.config.max_retries + 1;
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let _slot = self.gate.acquire();
            let mut req = self.agent.post(&self.config.endpoint);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(&body) {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(text) => return Ok(text),
                    Err(e) => last = e.to_string(),
                },
                Err(e) => last = e.to_string(),
            }
        }
        Err(AgentError::BackendUnavailable {
            attempts,
            message: last,
        })
    }

    fn count_failure(&self) {
        self.failures.fetch_add(1, Ordering::Relaxed);
    }

    fn parse_reaction(&self, body: &str, target: &crate::ContentId) -> Reaction {
        let parsed = unwrap_reply(body).and_then(|v| serde_json::from_value::<ReactReply>(v).ok());
        let reaction = parsed.and_then(|r| match r.action.as_str() {
            "ignore" => Some(Reaction::ignore(target.clone())),
            "comment" if !r.text.trim().is_empty() => {
                let inc = r.inclination.as_ref().and_then(parse_inclination)?;
                Some(Reaction::comment(target.clone(), r.text, inc))
            }
            _ => None,
        });
        reaction.unwrap_or_else(|| {
            self.count_failure();
            Reaction::ignore(target.clone())
        })
    }
}

fn describe(profile: &AgentProfile) -> String {
    serde_json::to_string(profile).unwrap_or_default()
}

impl BehaviorPolicy for LlmPolicy {
    fn name(&self) -> &'static str {
        "llm"
    }

    /// Asks the service for tags and a persona; a malformed reply falls back
    /// to the deterministic profile.
    fn build_profile(&self, user: &UserRecord, history: &[&InteractionEvent]) -> AgentProfile {
        let base = build_profile(user, history.iter().copied());
        let lines: Vec<&str> = user
            .post_texts
            .iter()
            .map(String::as_str)
            .chain(history.iter().map(|e| e.text.as_str()))
            .collect();
        let prompt = fill(&self.templates.profile, &[("history", &lines.join("\n"))]);
        let Ok(body) = self.send("profile", prompt) else {
            return base;
        };
        match unwrap_reply(&body).and_then(|v| serde_json::from_value::<ProfileReply>(v).ok()) {
            Some(r) => {
                let mut tags: Vec<String> = Vec::new();
                for t in r.interest_tags.into_iter().map(|t| t.to_lowercase()) {
                    if !tags.contains(&t) && tags.len() < 10 {
                        tags.push(t);
                    }
                }
                AgentProfile {
                    interest_tags: tags,
                    persona_summary: r.persona_summary,
                    ..base
                }
            }
            None => {
                self.count_failure();
                base
            }
        }
    }

    fn predict_reaction(&self, ctx: &BehaviorContext, _seed: u64) -> Result<Vec<Reaction>, AgentError> {
        if ctx.visible_contents.is_empty() {
            return Err(AgentError::NoVisibleContent);
        }
        let profile = describe(&ctx.profile);
        let influencer = describe(&ctx.influencer_profile);
        let history = ctx
            .history
            .iter()
            .map(|h| format!("[{}] {}", h.timestamp_min, h.text))
            .collect::<Vec<_>>()
            .join("\n");
        ctx.visible_contents
            .iter()
            .map(|c| {
                let prompt = fill(
                    &self.templates.react,
                    &[
                        ("profile", &profile),
                        ("influencer_profile", &influencer),
                        ("history", &history),
                        ("content", &c.text),
                    ],
                );
                let body = self.send("react", prompt)?;
                Ok(self.parse_reaction(&body, &c.content_id))
            })
            .collect()
    }

    fn assess_inclination(&self, text: &str) -> Result<u8, AgentError> {
        if text.trim().is_empty() {
            return Err(AgentError::EmptyText);
        }
        let body = self.send("assess", fill(&self.templates.assess, &[("content", text)]))?;
        match unwrap_reply(&body).and_then(|v| v.get("inclination").and_then(parse_inclination)) {
            Some(i) => Ok(i),
            None => {
                self.count_failure();
                Ok(0)
            }
        }
    }

    fn parse_failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_substitutes_once() {
        let t = "a {content} b {history} {\"k\": 1}";
        assert_eq!(
            fill(t, &[("content", "{history}"), ("history", "H")]),
            "a {history} b H {\"k\": 1}"
        );
    }

    #[test]
    fn envelopes_are_unwrapped() {
        let inner = r#"{"action":"ignore","text":""}"#;
        let wrapped = json!({ "content": inner }).to_string();
        assert_eq!(unwrap_reply(&wrapped), unwrap_reply(inner));
        assert!(unwrap_reply("not json").is_none());
    }

    #[test]
    fn inclinations_are_clamped_integers() {
        assert_eq!(parse_inclination(&json!(7)), Some(5));
        assert_eq!(parse_inclination(&json!(-1)), Some(0));
        assert_eq!(parse_inclination(&json!(2.5)), None);
        assert_eq!(parse_inclination(&json!("3")), None);
    }

    #[test]
    fn builtin_templates_carry_their_placeholders() {
        let t = Templates::default();
        for p in ["{profile}", "{influencer_profile}", "{history}", "{content}"] {
            assert!(t.react.contains(p), "{p}");
        }
        assert!(t.assess.contains("{content}"));
        assert!(t.profile.contains("{history}"));
    }
}
