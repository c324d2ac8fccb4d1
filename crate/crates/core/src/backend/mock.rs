//! Deterministic stand-in for a language model.
//!
//! The mock plants a mean `μ` for every (persona, question) and emits
//! `logit_k = -γ·|r_k - μ|`. Larger `γ` concentrates mass around `μ`; `γ = 0`
//! is uniform.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{BackendError, ScoreRequest, ScoreResult, Scorer};
use crate::prompt::PersonaFacts;

type MeanFn = dyn Fn(&PersonaFacts, &str, i64, i64) -> f64 + Send + Sync;

/// How the planted mean is derived from the persona's visible answers.
#[derive(Clone)]
pub enum MeanRule {
    /// Always the scale midpoint.
    Midpoint,
    /// Average answer position across the visible profile, mapped onto the
    /// question scale; the midpoint when nothing is visible.
    ProfileAverage,
    /// Position of a single item's answer; the midpoint when it is hidden.
    SingleItem(String),
    /// Arbitrary rule: (facts, question id, scale_min, scale_max) -> mean.
    Custom(Arc<MeanFn>),
}

impl fmt::Debug for MeanRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Midpoint => f.write_str("Midpoint"),
            Self::ProfileAverage => f.write_str("ProfileAverage"),
            Self::SingleItem(id) => write!(f, "SingleItem({id})"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl FromStr for MeanRule {
    type Err = BackendError;

    /// `midpoint`, `profile` or `item:<question id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midpoint" => Ok(Self::Midpoint),
            "profile" => Ok(Self::ProfileAverage),
            _ => match s.strip_prefix("item:") {
                Some(id) if !id.is_empty() => Ok(Self::SingleItem(id.to_string())),
                _ => Err(BackendError::Config(format!(
                    "unknown mock.mean_rule {s:?} (expected midpoint, profile or item:<id>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockWorld {
    pub gamma: f64,
    pub rule: MeanRule,
    /// Shift of the planted position (in `[0, 1]` scale units) per country.
    pub country_offsets: BTreeMap<String, f64>,
}

impl MockWorld {
    pub fn new(gamma: f64, rule: MeanRule) -> Result<Self, BackendError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(BackendError::Config(format!("mock.gamma must be a finite non-negative number, got {gamma}")));
        }
        Ok(Self {
            gamma,
            rule,
            country_offsets: BTreeMap::new(),
        })
    }

    pub fn with_offset(mut self, country: &str, offset: f64) -> Self {
        self.country_offsets.insert(country.to_string(), offset);
        self
    }

    /// Planted mean, clamped to the scale.
    pub fn planted_mean(&self, facts: &PersonaFacts, question_id: &str, scale_min: i64, scale_max: i64) -> f64 {
        let lo = scale_min as f64;
        let range = (scale_max - scale_min) as f64;
        let offset = facts
            .country
            .as_ref()
            .and_then(|c| self.country_offsets.get(c))
            .copied()
            .unwrap_or(0.0);
        let at = |position: f64| lo + range * (position + offset);
        let mu = match &self.rule {
            MeanRule::Midpoint => at(0.5),
            MeanRule::ProfileAverage => {
                if facts.profile.is_empty() {
                    at(0.5)
                } else {
                    let sum: f64 = facts.profile.values().map(|&(_, p)| p).sum();
                    at(sum / facts.profile.len() as f64)
                }
            }
            MeanRule::SingleItem(id) => at(facts.profile.get(id).map_or(0.5, |&(_, p)| p)),
            MeanRule::Custom(f) => f(facts, question_id, scale_min, scale_max),
        };
        mu.clamp(lo, scale_max as f64)
    }
}

/// `logit_k = -γ·|r_k - μ|` for the request's candidates.
pub fn mock_score(world: &MockWorld, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
    req.validate()?;
    let options = &req.bundle.admissible_options;
    let (Some(&lo), Some(&hi)) = (options.first(), options.last()) else {
        return Err(BackendError::InvalidRequest("no admissible options".into()));
    };
    let mu = world.planted_mean(&req.bundle.facts, &req.bundle.question_id, lo, hi);
    let logprobs = req
        .candidates
        .iter()
        .map(|c| {
            let r: f64 = c
                .trim()
                .parse()
                .map_err(|_| BackendError::InvalidRequest(format!("non-numeric candidate {c:?}")))?;
            Ok(-world.gamma * (r - mu).abs())
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    Ok(ScoreResult {
        logprobs,
        backend_id: "mock".into(),
        cached: false,
    })
}

/// [`Scorer`] over a [`MockWorld`], counting calls.
#[derive(Debug)]
pub struct MockScorer {
    pub world: MockWorld,
    calls: AtomicUsize,
}

impl MockScorer {
    pub fn new(world: MockWorld) -> Self {
        Self {
            world,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Scorer for MockScorer {
    fn backend_id(&self) -> String {
        "mock".into()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        mock_score(&self.world, req)
    }
}
