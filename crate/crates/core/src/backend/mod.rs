//! Language-model scoring backends.
//!
//! A backend receives a rendered prompt plus the admissible answer strings
//! and returns one log-probability per candidate. Three implementations ship:
//! [`http::HttpScorer`] (live endpoint), [`mock::MockScorer`] (deterministic
//! planted world) and [`cache::CachedScorer`] (persistent replay wrapper).

pub mod cache;
pub mod http;
pub mod mock;
pub mod rate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::QuestionSpec;
use crate::distribution::ResponseDistribution;
use crate::prompt::PromptBundle;

pub use cache::{CachedScorer, ResponseCache};
pub use http::HttpScorer;
pub use mock::{MeanRule, MockScorer, MockWorld};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider response: {0}")]
    InvalidResponse(String),
    #[error("response cache: {0}")]
    Cache(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub bundle: PromptBundle,
    pub candidates: Vec<String>,
    pub model_id: String,
    pub decode_params: BTreeMap<String, String>,
}

impl ScoreRequest {
    /// One candidate per admissible option, in scale order.
    pub fn for_bundle(bundle: PromptBundle, model_id: &str) -> Self {
        let candidates = bundle
            .admissible_options
            .iter()
            .map(|o| o.to_string())
            .collect();
        Self {
            bundle,
            candidates,
            model_id: model_id.to_string(),
            decode_params: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.candidates.is_empty() {
            return Err(BackendError::InvalidRequest("no candidates".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(BackendError::InvalidRequest(format!("duplicate candidate {dup:?}")));
        }
        Ok(())
    }

    /// Content hash over everything that determines the model's answer.
    pub fn cache_key(&self) -> String {
        fn field(h: &mut Sha256, bytes: &[u8]) {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        let mut h = Sha256::new();
        field(&mut h, b"persona-sim/score/v1");
        field(&mut h, self.model_id.as_bytes());
        field(&mut h, self.bundle.system_text.as_bytes());
        field(&mut h, self.bundle.user_text.as_bytes());
        h.update((self.candidates.len() as u64).to_le_bytes());
        for c in &self.candidates {
            field(&mut h, c.as_bytes());
        }
        h.update((self.decode_params.len() as u64).to_le_bytes());
        for (k, v) in &self.decode_params {
            field(&mut h, k.as_bytes());
            field(&mut h, v.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Short human-readable request summary stored next to the key.
    pub fn digest(&self) -> String {
        format!(
            "{}|{}|{}",
            self.model_id,
            self.bundle.question_id,
            self.candidates.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub logprobs: Vec<f64>,
    pub backend_id: String,
    pub cached: bool,
}

impl ScoreResult {
    pub fn validate(&self, req: &ScoreRequest) -> Result<(), BackendError> {
        if self.logprobs.len() != req.candidates.len() {
            return Err(BackendError::InvalidResponse(format!(
                "{} logprobs for {} candidates",
                self.logprobs.len(),
                req.candidates.len()
            )));
        }
        if let Some(bad) = self.logprobs.iter().find(|l| !l.is_finite()) {
            return Err(BackendError::InvalidResponse(format!("non-finite logprob {bad}")));
        }
        Ok(())
    }
}

/// A log-probability scorer. Implementations must be callable from many
/// threads at once.
pub trait Scorer: Send + Sync {
    fn backend_id(&self) -> String;

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError>;
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        (**self).score(req)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        (**self).score(req)
    }
}

/// Softmax of the candidate log-probabilities over the question's options.
pub fn to_distribution(res: &ScoreResult, q: &QuestionSpec) -> Result<ResponseDistribution, BackendError> {
    if res.logprobs.len() != q.n_options() {
        return Err(BackendError::InvalidResponse(format!(
            "{} logprobs for {} options of {}",
            res.logprobs.len(),
            q.n_options(),
            q.id
        )));
    }
    let max = res.logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = res.logprobs.iter().map(|l| (l - max).exp()).collect();
    ResponseDistribution::from_weights(q.id.clone(), q.options(), &weights)
        .map_err(|e| BackendError::InvalidResponse(e.to_string()))
}
