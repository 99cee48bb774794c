//! Completion clients: a chat-completion HTTP client with bounded retries
//! and rate limiting, and a transcript-replaying mock for offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const ENV_LLM_URL: &str = "SACKG_LLM_URL";
pub const ENV_LLM_KEY: &str = "SACKG_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("request rejected (status {status}): {message}")]
    Rejected { status: u16, message: String },

    #[error("malformed provider response: {0}")]
    BadResponse(String),

    #[error("no scripted response matches prompt starting {0:?}")]
    NoScript(String),

    #[error("scripted responses for matcher {0:?} are exhausted")]
    ScriptExhausted(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_id: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.1,
            max_output_tokens: 500,
            model_id: "gpt-3.5-turbo".to_string(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError>;
}

fn check_request(prompt: &str, params: &GenerationParams) -> Result<(), LlmError> {
    if prompt.trim().is_empty() {
        return Err(LlmError::InvalidRequest("empty prompt".into()));
    }
    params.validate()
}

fn excerpt(prompt: &str) -> String {
    prompt.chars().take(60).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub matcher: String,
    pub response: String,
}

/// Scripted responses keyed by substring matchers.
///
/// Responses sharing a matcher are replayed in file order. A prompt is
/// served by the first matcher (in order of first appearance) that occurs in
/// it and still has responses left.
#[derive(Debug)]
pub struct MockLlm {
    scripts: Vec<(String, Vec<String>)>,
    cursors: Mutex<Vec<usize>>,
    calls: Mutex<Vec<String>>,
}

impl MockLlm {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut order: Vec<(String, Vec<String>)> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for e in entries {
            let i = *slot.entry(e.matcher.clone()).or_insert_with(|| {
                order.push((e.matcher.clone(), Vec::new()));
                order.len() - 1
            });
            order[i].1.push(e.response);
        }
        let n = order.len();
        MockLlm {
            scripts: order,
            cursors: Mutex::new(vec![0; n]),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Parse a line-delimited `{matcher, response}` transcript.
    pub fn parse_transcript(content: &str, origin: &str) -> crate::Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| crate::Error::parse(origin, i + 1, e.to_string()))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::parse_transcript(&content, &path.display().to_string())
    }

    /// Prompts received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        check_request(prompt, params)?;
        let mut cursors = self.cursors.lock().unwrap();
        self.calls.lock().unwrap().push(prompt.to_string());
        let mut exhausted = None;
        for (i, (matcher, responses)) in self.scripts.iter().enumerate() {
            if !prompt.contains(matcher.as_str()) {
                continue;
            }
            if cursors[i] < responses.len() {
                let response = responses[cursors[i]].clone();
                cursors[i] += 1;
                return Ok(response);
            }
            exhausted.get_or_insert_with(|| matcher.clone());
        }
        Err(match exhausted {
            Some(m) => LlmError::ScriptExhausted(m),
            None => LlmError::NoScript(excerpt(prompt)),
        })
    }
}

/// Bounded retry with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Outcome of one HTTP attempt.
pub(crate) enum Attempt<T> {
    Done(T),
    Transient(String),
    Fatal(LlmError),
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }

    pub(crate) fn run<T>(&self, mut attempt: impl FnMut() -> Attempt<T>) -> Result<T, LlmError> {
        let mut last = String::new();
        for n in 0..=self.max_retries {
            if n > 0 {
                std::thread::sleep(self.delay_for(n - 1));
            }
            match attempt() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(msg) => {
                    log::debug!("transient failure (attempt {}): {msg}", n + 1);
                    last = msg;
                }
            }
        }
        Err(LlmError::Transport {
            attempts: self.max_retries + 1,
            message: last,
        })
    }
}

/// Client-side token bucket limiting requests per minute.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute,
            state: Mutex::new((per_minute as f64, Instant::now())),
        }
    }

    /// Block until a request slot is available.
    pub fn acquire(&self) {
        if self.per_minute == 0 {
            return;
        }
        let rate = self.per_minute as f64 / 60.0;
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * rate;
                state.0 = (state.0 + refill).min(self.per_minute as f64);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / rate)
            };
            std::thread::sleep(wait);
        }
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

/// POST a JSON body and classify the result for [`RetryPolicy::run`].
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Attempt<serde_json::Value> {
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = match req.send_json(body) {
        Ok(r) => r,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    let status = resp.status().as_u16();
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    match status {
        200..=299 => match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(LlmError::BadResponse(e.to_string())),
        },
        408 | 429 | 500..=599 => Attempt::Transient(format!("status {status}: {text}")),
        _ => Attempt::Fatal(LlmError::Rejected { status, message: text }),
    }
}

/// Chat-completion style HTTP client.
#[derive(Debug)]
pub struct RemoteLlm {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
}

impl RemoteLlm {
    /// `base_url` may be the API root or the full `/chat/completions` URL.
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        RemoteLlm {
            endpoint,
            api_key,
            agent: http_agent(Duration::from_secs(120)),
            retry: RetryPolicy::default(),
            limiter: None,
        }
    }

    pub fn from_env() -> crate::Result<Self> {
        let url = std::env::var(ENV_LLM_URL).map_err(|_| crate::Error::Config(format!("{ENV_LLM_URL} is not set")))?;
        Ok(Self::new(&url, std::env::var(ENV_LLM_KEY).ok()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = (requests_per_minute > 0).then(|| RateLimiter::new(requests_per_minute));
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl LlmClient for RemoteLlm {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        check_request(prompt, params)?;
        let body = serde_json::json!({
            "model": params.model_id,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = self.retry.run(|| {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)
        })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(m: &str, r: &str) -> TranscriptEntry {
        TranscriptEntry {
            matcher: m.into(),
            response: r.into(),
        }
    }

    #[test]
    fn mock_passthrough() {
        let mock = MockLlm::new([entry("rice", "(rice | type | cereal)")]);
        let out = mock
            .complete("tell me about rice", &GenerationParams::default())
            .unwrap();
        assert_eq!(out, "(rice | type | cereal)");
    }

    #[test]
    fn mock_replays_in_order() {
        let mock = MockLlm::new([entry("rice", "first"), entry("wheat", "w"), entry("rice", "second")]);
        let p = GenerationParams::default();
        assert_eq!(mock.complete("rice?", &p).unwrap(), "first");
        assert_eq!(mock.complete("rice again", &p).unwrap(), "second");
        assert_eq!(
            mock.complete("rice", &p).unwrap_err(),
            LlmError::ScriptExhausted("rice".into())
        );
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn mock_closed_world() {
        let mock = MockLlm::new([entry("rice", "x")]);
        let err = mock.complete("barley", &GenerationParams::default()).unwrap_err();
        assert_eq!(err, LlmError::NoScript("barley".into()));
    }

    #[test]
    fn mock_rejects_bad_requests() {
        let mock = MockLlm::new([entry("", "x")]);
        assert!(matches!(
            mock.complete("  ", &GenerationParams::default()),
            Err(LlmError::InvalidRequest(_))
        ));
        let hot = GenerationParams {
            temperature: 3.0,
            ..Default::default()
        };
        assert!(mock.complete("x", &hot).is_err());
    }

    #[test]
    fn transcript_parse() {
        let mock = MockLlm::parse_transcript(
            "{\"matcher\":\"a\",\"response\":\"1\"}\n\n{\"matcher\":\"a\",\"response\":\"2\"}\n",
            "t",
        )
        .unwrap();
        let p = GenerationParams::default();
        assert_eq!(mock.complete("a", &p).unwrap(), "1");
        assert_eq!(mock.complete("a", &p).unwrap(), "2");
        assert!(MockLlm::parse_transcript("not json", "t").is_err());
    }

    #[test]
    fn retry_bound_is_four_attempts() {
        let policy = RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(1),
        };
        let mut attempts = 0;
        let res: Result<(), _> = policy.run(|| {
            attempts += 1;
            Attempt::Transient("down".into())
        });
        assert_eq!(attempts, 4);
        assert_eq!(
            res.unwrap_err(),
            LlmError::Transport {
                attempts: 4,
                message: "down".into()
            }
        );
    }

    #[test]
    fn fatal_is_not_retried() {
        let policy = RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(1),
        };
        let mut attempts = 0;
        let res: Result<(), _> = policy.run(|| {
            attempts += 1;
            Attempt::Fatal(LlmError::Rejected {
                status: 401,
                message: "no".into(),
            })
        });
        assert_eq!(attempts, 1);
        assert!(matches!(res, Err(LlmError::Rejected { status: 401, .. })));
    }

    #[test]
    fn backoff_doubles_from_one_second() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_for(0), Duration::from_secs(1));
        assert_eq!(p.delay_for(1), Duration::from_secs(2));
        assert_eq!(p.delay_for(2), Duration::from_secs(4));
    }

    #[test]
    fn endpoint_normalization() {
        assert_eq!(
            RemoteLlm::new("http://h/v1/", None).endpoint(),
            "http://h/v1/chat/completions"
        );
        assert_eq!(
            RemoteLlm::new("http://h/v1/chat/completions", None).endpoint(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn rate_limiter_allows_burst() {
        let l = RateLimiter::new(600);
        let start = Instant::now();
        for _ in 0..5 {
            l.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(500));
    }
}
