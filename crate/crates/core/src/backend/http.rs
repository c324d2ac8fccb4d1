//! Live scoring against an OpenAI-compatible HTTP endpoint.
//!
//! Candidate scoring (the default) sends one `/completions` request per
//! candidate with `echo: true`, so the provider returns log-probabilities for
//! the prompt tokens. The candidate's score is the sum of the token
//! log-probabilities overlapping the candidate's characters. The prompt is
//! laid out as
//!
//! ```text
//! [System]
//! {system_text}
//!
//! [User]
//! {user_text}
//!
//! [Assistant]
//! {candidate}
//! ```
//!
//! The first-token fallback sends a single `/chat/completions` request with
//! `top_logprobs` and reads each candidate's first-token score. Multi-token
//! candidates ("10") collide with their first token ("1"), and candidates
//! absent from the top list get the lowest reported log-probability minus
//! ln 2, so the fallback is biased on 10-point scales.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::rate::{backoff, Clock, RateLimiter, SystemClock};
use super::{BackendError, ScoreRequest, ScoreResult, Scorer};

pub const API_KEY_ENV: &str = "PERSONA_SIM_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Failure to get any HTTP response at all.
#[derive(Debug, Clone)]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> Result<HttpResponse, TransportError>;
}

/// Blocking transport on `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> Result<HttpResponse, TransportError> {
        let mut request = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_json(body) {
            Ok(resp) => {
                let status = resp.status();
                let body = resp.into_string().map_err(|e| TransportError(e.to_string()))?;
                Ok(HttpResponse { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(HttpResponse {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model_id: String,
    pub rps: f64,
    /// Total attempts per request.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub first_token: bool,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_id: String::new(),
            rps: 2.0,
            max_retries: 3,
            initial_backoff: Duration::from_secs(1),
            first_token: false,
        }
    }
}

pub struct HttpScorer {
    settings: HttpSettings,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    limiter: RateLimiter,
}

impl HttpScorer {
    pub fn new(
        settings: HttpSettings,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let limiter = RateLimiter::new(settings.rps, clock);
        Self {
            settings,
            api_key,
            transport,
            limiter,
        }
    }

    /// Real transport and clock; the key comes from `PERSONA_SIM_API_KEY`.
    pub fn from_env(settings: HttpSettings) -> Result<Self, BackendError> {
        if settings.endpoint.is_empty() {
            return Err(BackendError::Config("backend.endpoint is required for the http backend".into()));
        }
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self::new(
            settings,
            api_key,
            Arc::new(UreqTransport::new(Duration::from_secs(60))),
            Arc::new(SystemClock::default()),
        ))
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.endpoint.trim_end_matches('/'), path)
    }

    /// Sends with pacing and retries; returns the parsed JSON body.
    fn call(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(path);
        let attempts = self.settings.max_retries.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                self.limiter
                    .clock()
                    .sleep(backoff(self.settings.initial_backoff, attempt - 1));
            }
            self.limiter.acquire();
            match self.transport.post_json(&url, self.api_key.as_deref(), body) {
                Err(TransportError(msg)) => last = msg,
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last = format!("HTTP {}: {}", resp.status, truncate(&resp.body));
                }
                Ok(resp) if resp.status >= 400 => {
                    if resp.body.to_ascii_lowercase().contains("logprob") {
                        return Err(refused(&resp.body));
                    }
                    return Err(BackendError::InvalidRequest(format!(
                        "HTTP {}: {}",
                        resp.status,
                        truncate(&resp.body)
                    )));
                }
                Ok(resp) => {
                    return serde_json::from_str(&resp.body)
                        .map_err(|e| BackendError::InvalidResponse(format!("body is not JSON: {e}")));
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }

    fn score_candidate(&self, req: &ScoreRequest, candidate: &str) -> Result<f64, BackendError> {
        let prefix = completion_prefix(req);
        let prompt = format!("{prefix}{candidate}");
        let mut body = json!({
            "model": req.model_id,
            "prompt": prompt,
            "max_tokens": 1,
            "echo": true,
            "logprobs": 0,
        });
        for (k, v) in &req.decode_params {
            body[k] = serde_json::from_str(v).unwrap_or(Value::String(v.clone()));
        }
        let resp = self.call("completions", &body)?;
        candidate_logprob(&resp, prefix.chars().count(), candidate.chars().count())
    }

    fn score_first_token(&self, req: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        let body = json!({
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.bundle.system_text},
                {"role": "user", "content": req.bundle.user_text},
            ],
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": 20,
        });
        let resp = self.call("chat/completions", &body)?;
        first_token_logprobs(&resp, &req.candidates)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

fn refused(body: &str) -> BackendError {
    BackendError::Config(format!(
        "provider does not return log-probabilities ({}); use backend.kind = \"mock\" or enable backend.first_token",
        truncate(body)
    ))
}

pub fn completion_prefix(req: &ScoreRequest) -> String {
    format!(
        "[System]\n{}\n\n[User]\n{}\n\n[Assistant]\n",
        req.bundle.system_text, req.bundle.user_text
    )
}

/// Sums echoed token log-probabilities overlapping `[start, start + len)`
/// (character offsets).
pub fn candidate_logprob(resp: &Value, start: usize, len: usize) -> Result<f64, BackendError> {
    let logprobs = resp
        .pointer("/choices/0/logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| refused("response has no logprobs"))?;
    let tokens = logprobs["tokens"].as_array();
    let values = logprobs["token_logprobs"].as_array();
    let offsets = logprobs["text_offset"].as_array();
    let (Some(tokens), Some(values), Some(offsets)) = (tokens, values, offsets) else {
        return Err(BackendError::InvalidResponse(
            "echo logprobs need tokens, token_logprobs and text_offset".into(),
        ));
    };
    let end = start + len;
    let mut total = 0.0;
    let mut used = 0;
    for ((token, value), offset) in tokens.iter().zip(values).zip(offsets) {
        let (Some(token), Some(offset)) = (token.as_str(), offset.as_u64()) else {
            continue;
        };
        let t0 = offset as usize;
        let t1 = t0 + token.chars().count();
        if t1 <= start || t0 >= end {
            continue;
        }
        let lp = value
            .as_f64()
            .ok_or_else(|| BackendError::InvalidResponse(format!("missing logprob for token {token:?}")))?;
        total += lp;
        used += 1;
    }
    if used == 0 {
        return Err(BackendError::InvalidResponse("no echoed token covers the candidate".into()));
    }
    Ok(total)
}

pub fn first_token_logprobs(resp: &Value, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
    let top = resp
        .pointer("/choices/0/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| refused("response has no top_logprobs"))?;
    let reported: Vec<(String, f64)> = top
        .iter()
        .filter_map(|e| Some((e["token"].as_str()?.trim().to_string(), e["logprob"].as_f64()?)))
        .collect();
    let floor = reported
        .iter()
        .map(|(_, l)| *l)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(BackendError::InvalidResponse("empty top_logprobs".into()));
    }
    let floor = floor - std::f64::consts::LN_2;
    Ok(candidates
        .iter()
        .map(|c| {
            let exact = reported.iter().find(|(t, _)| t == c);
            let prefix = reported.iter().find(|(t, _)| !t.is_empty() && c.starts_with(t.as_str()));
            exact.or(prefix).map_or(floor, |(_, l)| *l)
        })
        .collect())
}

impl Scorer for HttpScorer {
    fn backend_id(&self) -> String {
        format!("http:{}", self.settings.model_id)
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        req.validate()?;
        let logprobs = if self.settings.first_token {
            self.score_first_token(req)?
        } else {
            req.candidates
                .iter()
                .map(|c| self.score_candidate(req, c))
                .collect::<Result<Vec<_>, _>>()?
        };
        let res = ScoreResult {
            logprobs,
            backend_id: self.backend_id(),
            cached: false,
        };
        res.validate(req)?;
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::rate::FakeClock;
    use crate::backend::tests::request;
    use std::collections::VecDeque;
    use std::sync::Mutex;

    /// Replays scripted responses and records request bodies.
    struct Scripted {
        replies: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
        seen: Mutex<Vec<Value>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<HttpResponse, TransportError>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.into()),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, _url: &str, _key: Option<&str>, body: &Value) -> Result<HttpResponse, TransportError> {
            self.seen.lock().unwrap().push(body.clone());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
        }
    }

    fn ok(body: Value) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: body.to_string(),
        })
    }

    /// Echo response for `prompt` where the last `cand_len` chars score `lp`
    /// split over two tokens, plus one generated token.
    fn echo(prompt: &str, cand: &str, lp: f64) -> Value {
        let split = prompt.chars().count() - cand.chars().count();
        let head: String = prompt.chars().take(split).collect();
        let mut tokens = vec![head.clone()];
        let mut values = vec![Value::Null];
        let mut offsets = vec![0];
        let mut at = split;
        for ch in cand.chars() {
            tokens.push(ch.to_string());
            values.push(json!(lp / cand.chars().count() as f64));
            offsets.push(at);
            at += 1;
        }
        tokens.push("\n".into());
        values.push(json!(-0.5));
        offsets.push(at);
        json!({"choices": [{"logprobs": {"tokens": tokens, "token_logprobs": values, "text_offset": offsets}}]})
    }

    fn scorer(transport: Arc<Scripted>, first_token: bool) -> (HttpScorer, Arc<FakeClock>) {
        let clock = Arc::new(FakeClock::default());
        let settings = HttpSettings {
            endpoint: "https://llm.test/v1/".into(),
            model_id: "m".into(),
            rps: 4.0,
            first_token,
            ..HttpSettings::default()
        };
        (HttpScorer::new(settings, Some("k".into()), transport, clock.clone()), clock)
    }

    #[test]
    fn candidate_scoring_sums_candidate_tokens() {
        let req = request("sys");
        let prefix = completion_prefix(&req);
        let replies = req
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| ok(echo(&format!("{prefix}{c}"), c, -(i as f64) - 0.25)))
            .collect();
        let t = Scripted::new(replies);
        let (s, clock) = scorer(t.clone(), false);
        let res = s.score(&req).unwrap();
        assert_eq!(res.logprobs, vec![-0.25, -1.25, -2.25, -3.25]);
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen.len(), 4);
        assert_eq!(seen[0]["echo"], json!(true));
        assert!(seen[2]["prompt"].as_str().unwrap().ends_with("[Assistant]\n3"));
        // 4 requests at 4 rps: three paced waits of 250ms
        assert_eq!(clock.sleeps(), vec![Duration::from_millis(250); 3]);
    }

    #[test]
    fn multi_character_candidate() {
        let v = echo("abc10", "10", -3.0);
        assert_eq!(candidate_logprob(&v, 3, 2).unwrap(), -3.0);
    }

    #[test]
    fn retries_transient_failures_with_backoff() {
        let req = request("sys");
        let prefix = completion_prefix(&req);
        let mut replies = vec![
            Err(TransportError("reset".into())),
            Ok(HttpResponse {
                status: 503,
                body: "busy".into(),
            }),
        ];
        replies.extend(req.candidates.iter().map(|c| ok(echo(&format!("{prefix}{c}"), c, -1.0))));
        let (s, clock) = scorer(Scripted::new(replies), false);
        s.score(&req).unwrap();
        let sleeps = clock.sleeps();
        assert!(sleeps.contains(&Duration::from_secs(1)));
        assert!(sleeps.contains(&Duration::from_secs(2)));
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let replies = (0..5).map(|_| Err(TransportError("down".into()))).collect();
        let (s, _) = scorer(Scripted::new(replies), false);
        match s.score(&request("sys")) {
            Err(BackendError::Transport { attempts, message }) => {
                assert_eq!(attempts, 3);
                assert_eq!(message, "down");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refused_logprobs_is_configuration_error() {
        let replies = vec![Ok(HttpResponse {
            status: 400,
            body: "{\"error\":\"logprobs are not supported for this model\"}".into(),
        })];
        let (s, _) = scorer(Scripted::new(replies), false);
        let err = s.score(&request("sys")).unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
        assert!(err.to_string().contains("mock"));

        let missing = vec![ok(json!({"choices": [{"text": "1"}]}))];
        let (s, _) = scorer(Scripted::new(missing), false);
        assert!(matches!(s.score(&request("sys")), Err(BackendError::Config(_))));
    }

    #[test]
    fn first_token_fallback() {
        let body = json!({"choices": [{"logprobs": {"content": [{"token": "2", "top_logprobs": [
            {"token": "2", "logprob": -0.1},
            {"token": " 1", "logprob": -2.0},
            {"token": "3", "logprob": -4.0},
        ]}]}}]});
        let (s, _) = scorer(Scripted::new(vec![ok(body)]), true);
        let res = s.score(&request("sys")).unwrap();
        assert_eq!(res.logprobs[..3], [-2.0, -0.1, -4.0]);
        assert!((res.logprobs[3] - (-4.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }
}
