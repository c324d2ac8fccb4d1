//! Dispersion calibration: temperature scaling, mean-preserving exponential
//! tilting, and leave-one-out temperature selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QuestionSpec;
use crate::distribution::ResponseDistribution;
use crate::evaluate::{mae, normalized_variance, wasserstein1d, EvalError};

/// Residual tolerance on the tilted mean.
pub const TILT_TOLERANCE: f64 = 1e-12;
pub const TILT_MAX_ITER: usize = 200;
const MAX_BRACKET_EXPANSIONS: usize = 1100;
/// Objectives closer than this count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("target mean {target} is outside the tilted support ({low}, {high}) for {question_id}")]
    Infeasible {
        question_id: String,
        target: f64,
        low: f64,
        high: f64,
    },
    #[error("root finding for {0} did not bracket a sign change")]
    NoBracket(String),
    #[error("leave-one-out fitting needs at least two questions, got {0}")]
    TooFewQuestions(usize),
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("unknown calibration criterion {0:?} (expected wasserstein or variance_gap)")]
    UnknownCriterion(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("calibrated distribution invalid: {0}")]
    Distribution(String),
}

fn check_temperature(t: f64) -> Result<(), CalibrateError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CalibrateError::BadTemperature(t))
    }
}

/// Log-weights `ln p_k / T` on the support, `-inf` off it.
fn tempered_logits(d: &ResponseDistribution, t: f64) -> Vec<f64> {
    d.probs
        .iter()
        .map(|&p| if p > 0.0 { p.ln() / t } else { f64::NEG_INFINITY })
        .collect()
}

fn normalize_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn rebuild(d: &ResponseDistribution, probs: Vec<f64>) -> Result<ResponseDistribution, CalibrateError> {
    ResponseDistribution::new(d.question_id.clone(), d.options.clone(), probs)
        .map_err(|e| CalibrateError::Distribution(e.to_string()))
}

/// `p_k^{1/T}`, renormalized. Zero entries stay zero.
pub fn temperature_scale(d: &ResponseDistribution, t: f64) -> Result<ResponseDistribution, CalibrateError> {
    check_temperature(t)?;
    if t == 1.0 {
        return Ok(d.clone());
    }
    rebuild(d, normalize_logits(&tempered_logits(d, t)))
}

/// `q(β) ∝ exp(base_k + β (r_k - m))` and its mean offset `Σ (r_k - m) q_k`.
fn tilted(base: &[f64], centered: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let logits: Vec<f64> = base.iter().zip(centered).map(|(b, r)| b + beta * r).collect();
    let q = normalize_logits(&logits);
    let residual = q.iter().zip(centered).map(|(q, r)| q * r).sum();
    (q, residual)
}

/// Tilts the temperature-scaled distribution back onto the original mean.
/// Returns the tilted distribution and `β`.
pub fn tilt_mean_preserving(d: &ResponseDistribution, t: f64) -> Result<(ResponseDistribution, f64), CalibrateError> {
    check_temperature(t)?;
    if d.is_point_mass() || t == 1.0 {
        return Ok((d.clone(), 0.0));
    }
    let target = d.mean();
    let support: Vec<f64> = d
        .options
        .iter()
        .zip(&d.probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&r, _)| r as f64)
        .collect();
    let (low, high) = (support[0], support[support.len() - 1]);
    if !(target > low && target < high) {
        return Err(CalibrateError::Infeasible {
            question_id: d.question_id.clone(),
            target,
            low,
            high,
        });
    }
    let base = tempered_logits(d, t);
    let centered: Vec<f64> = d.options.iter().map(|&r| r as f64 - target).collect();

    let (q0, f0) = tilted(&base, &centered, 0.0);
    if f0.abs() <= TILT_TOLERANCE {
        return Ok((rebuild(d, q0)?, 0.0));
    }
    // mean(q(β)) increases in β: search away from the sign of f(0)
    let direction = -f0.signum();
    let (mut inner, mut outer) = (0.0f64, direction);
    let mut expansions = 0;
    loop {
        let (_, f) = tilted(&base, &centered, outer);
        if f.signum() != f0.signum() || f == 0.0 {
            break;
        }
        inner = outer;
        outer *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS || !outer.is_finite() {
            return Err(CalibrateError::NoBracket(d.question_id.clone()));
        }
    }
    let (mut lo, mut hi) = if inner < outer { (inner, outer) } else { (outer, inner) };
    let mut best = (f64::INFINITY, 0.0, Vec::new());
    for _ in 0..TILT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let (q, f) = tilted(&base, &centered, mid);
        if f.abs() < best.0 {
            best = (f.abs(), mid, q);
        }
        if f.abs() <= TILT_TOLERANCE || mid == lo || mid == hi {
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, beta, q) = best;
    Ok((rebuild(d, q)?, beta))
}

/// 21 log-spaced temperatures from 0.25 to 16.
pub fn default_grid() -> Vec<f64> {
    let (lo, hi) = (0.25f64.ln(), 16f64.ln());
    (0..21).map(|i| (lo + (hi - lo) * i as f64 / 20.0).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Wasserstein,
    VarianceGap,
}

impl FromStr for Criterion {
    type Err = CalibrateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wasserstein" => Ok(Self::Wasserstein),
            "variance_gap" => Ok(Self::VarianceGap),
            _ => Err(CalibrateError::UnknownCriterion(s.to_string())),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Wasserstein => "wasserstein",
            Self::VarianceGap => "variance_gap",
        })
    }
}

impl Criterion {
    pub fn evaluate(self, pred: &ResponseDistribution, human: &ResponseDistribution) -> Result<f64, CalibrateError> {
        Ok(match self {
            Self::Wasserstein => wasserstein1d(pred, human)?,
            Self::VarianceGap => (normalized_variance(pred)? - normalized_variance(human)?).abs(),
        })
    }
}

/// A predicted and a human distribution for one (country, question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub question_id: String,
    pub country: String,
    pub prediction: ResponseDistribution,
    pub human: ResponseDistribution,
}

impl CalibrationCell {
    fn spec(&self) -> QuestionSpec {
        QuestionSpec::new(&self.question_id, "", self.prediction.scale_min(), self.prediction.scale_max(), &[])
    }

    fn mae_of(&self, d: &ResponseDistribution) -> Result<f64, CalibrateError> {
        Ok(mae(d.mean(), self.human.mean(), &self.spec())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fold {
    pub held_out: String,
    pub temperature: f64,
    /// Mean criterion on the training questions at the selected temperature.
    pub train_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationFit {
    pub per_question_t: BTreeMap<String, f64>,
    pub criterion: Criterion,
    pub folds: Vec<Fold>,
}

fn mean_criterion(cells: &[&CalibrationCell], t: f64, criterion: Criterion) -> Result<f64, CalibrateError> {
    let mut total = 0.0;
    for c in cells {
        let (q, _) = tilt_mean_preserving(&c.prediction, t)?;
        total += criterion.evaluate(&q, &c.human)?;
    }
    Ok(total / cells.len() as f64)
}

/// For every question, picks the grid temperature that minimizes the mean
/// criterion over all cells of the other questions. Ties go to the
/// temperature closest to 1.
pub fn fit_temperature_loo(cells: &[CalibrationCell], grid: &[f64], criterion: Criterion) -> Result<CalibrationFit, CalibrateError> {
    if grid.is_empty() {
        return Err(CalibrateError::EmptyGrid);
    }
    for &t in grid {
        check_temperature(t)?;
    }
    let questions: BTreeSet<&str> = cells.iter().map(|c| c.question_id.as_str()).collect();
    if questions.len() < 2 {
        return Err(CalibrateError::TooFewQuestions(questions.len()));
    }
    let folds = questions
        .par_iter()
        .map(|&held_out| {
            let train: Vec<&CalibrationCell> = cells.iter().filter(|c| c.question_id != held_out).collect();
            let mut best: Option<(f64, f64)> = None;
            for &t in grid {
                let obj = mean_criterion(&train, t, criterion)?;
                let better = match best {
                    None => true,
                    Some((bt, bo)) => obj < bo - TIE_TOLERANCE || (obj <= bo + TIE_TOLERANCE && (t - 1.0).abs() < (bt - 1.0).abs()),
                };
                if better {
                    best = Some((t, obj));
                }
            }
            let (temperature, train_objective) = best.expect("non-empty grid");
            Ok(Fold {
                held_out: held_out.to_string(),
                temperature,
                train_objective,
            })
        })
        .collect::<Result<Vec<_>, CalibrateError>>()?;
    Ok(CalibrationFit {
        per_question_t: folds.iter().map(|f| (f.held_out.clone(), f.temperature)).collect(),
        criterion,
        folds,
    })
}

/// Effect of the fitted temperature on one held-out cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibratedCell {
    pub question_id: String,
    pub country: String,
    pub temperature: f64,
    pub beta: f64,
    pub criterion_before: f64,
    pub criterion_after: f64,
    pub mae: f64,
}

/// Applies each question's out-of-sample temperature to its cells.
pub fn apply_fit(cells: &[CalibrationCell], fit: &CalibrationFit) -> Result<Vec<(CalibratedCell, ResponseDistribution)>, CalibrateError> {
    cells
        .iter()
        .filter_map(|c| fit.per_question_t.get(&c.question_id).map(|&t| (c, t)))
        .map(|(c, t)| {
            let (q, beta) = tilt_mean_preserving(&c.prediction, t)?;
            let row = CalibratedCell {
                question_id: c.question_id.clone(),
                country: c.country.clone(),
                temperature: t,
                beta,
                criterion_before: fit.criterion.evaluate(&c.prediction, &c.human)?,
                criterion_after: fit.criterion.evaluate(&q, &c.human)?,
                mae: c.mae_of(&q)?,
            };
            Ok((row, q))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMethod {
    Plain,
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    pub method: ScalingMethod,
    pub mae: f64,
    pub wasserstein: f64,
}

/// Mean MAE and Wasserstein over `cells` at every temperature, for plain
/// scaling and for mean-preserving tilting.
pub fn temperature_sweep(cells: &[CalibrationCell], ts: &[f64]) -> Result<Vec<TemperaturePoint>, CalibrateError> {
    for &t in ts {
        check_temperature(t)?;
    }
    let per_t = ts
        .par_iter()
        .map(|&t| {
            let mut acc = [(0.0, 0.0); 2];
            for c in cells {
                let plain = temperature_scale(&c.prediction, t)?;
                let (tilt, _) = tilt_mean_preserving(&c.prediction, t)?;
                for (slot, d) in acc.iter_mut().zip([&plain, &tilt]) {
                    slot.0 += c.mae_of(d)?;
                    slot.1 += wasserstein1d(d, &c.human)?;
                }
            }
            let n = cells.len().max(1) as f64;
            Ok([ScalingMethod::Plain, ScalingMethod::Tilted]
                .into_iter()
                .zip(acc)
                .map(|(method, (m, w))| TemperaturePoint {
                    temperature: t,
                    method,
                    mae: m / n,
                    wasserstein: w / n,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, CalibrateError>>()?;
    Ok(per_t.into_iter().flatten().collect())
}
