//! Prediction error and diversity metrics, significance tests, cultural-map
//! projection, and evaluation report tables.

mod map;
mod stats;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{HumanDistribution, QuestionSpec};
use crate::distribution::ResponseDistribution;

pub use map::{project_map, MapProjection};
pub use stats::{
    benjamini_hochberg, mann_whitney_u, wilcoxon_signed_rank, StatsError, MANN_WHITNEY_EXACT_MAX,
    WILCOXON_EXACT_MAX,
};

/// Slack allowed when checking that a mean lies on its scale.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question {0} has a degenerate scale")]
    DegenerateScale(String),
    #[error("mean {value} outside the scale [{min}, {max}] of question {question_id}")]
    MeanOutOfRange {
        question_id: String,
        value: f64,
        min: i64,
        max: i64,
    },
    #[error("distributions use different option grids ({0} vs {1})")]
    GridMismatch(String, String),
    #[error("empty human distribution for {question_id} in {country}")]
    EmptyHuman { question_id: String, country: String },
    #[error("no loading for map item {0}")]
    MissingLoading(String),
    #[error("cannot read map projection: {0}")]
    MapParse(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("report write failed: {0}")]
    Write(String),
}

/// `|pred - human| / (scale_max - scale_min)`.
pub fn mae(pred_mean: f64, human_mean: f64, q: &QuestionSpec) -> Result<f64, EvalError> {
    if q.scale_max <= q.scale_min {
        return Err(EvalError::DegenerateScale(q.id.clone()));
    }
    for value in [pred_mean, human_mean] {
        let ok = value.is_finite()
            && value >= q.scale_min as f64 - RANGE_SLACK
            && value <= q.scale_max as f64 + RANGE_SLACK;
        if !ok {
            return Err(EvalError::MeanOutOfRange {
                question_id: q.id.clone(),
                value,
                min: q.scale_min,
                max: q.scale_max,
            });
        }
    }
    Ok(((pred_mean - human_mean).abs() / q.range()).min(1.0))
}

fn max_variance(min: i64, max: i64) -> f64 {
    let half = (max - min) as f64 / 2.0;
    half * half
}

/// Variance divided by the largest variance attainable on the scale.
pub fn normalized_variance(d: &ResponseDistribution) -> Result<f64, EvalError> {
    let (min, max) = (d.scale_min(), d.scale_max());
    if max <= min {
        return Err(EvalError::DegenerateScale(d.question_id.clone()));
    }
    Ok((d.variance() / max_variance(min, max)).clamp(0.0, 1.0))
}

pub fn human_normalized_variance(h: &HumanDistribution) -> Result<f64, EvalError> {
    if h.n_valid == 0 {
        return Err(EvalError::EmptyHuman {
            question_id: h.question_id.clone(),
            country: h.country.clone(),
        });
    }
    normalized_variance(&h.to_distribution())
}

fn grid(d: &ResponseDistribution) -> String {
    format!("{}..={}", d.scale_min(), d.scale_max())
}

/// Order-1 Wasserstein distance on a unit-spaced integer grid.
pub fn wasserstein1d(p: &ResponseDistribution, h: &ResponseDistribution) -> Result<f64, EvalError> {
    if p.options != h.options {
        return Err(EvalError::GridMismatch(grid(p), grid(h)));
    }
    let (mut cp, mut ch, mut total) = (0.0, 0.0, 0.0);
    // the last CDF difference is always zero
    for k in 0..p.probs.len() - 1 {
        cp += p.probs[k];
        ch += h.probs[k];
        total += (cp - ch).abs();
    }
    Ok(total)
}

/// One (country, question, method) comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub country: String,
    pub question_id: String,
    pub method: String,
    pub model: String,
    pub mae: f64,
    pub pred_norm_variance: f64,
    pub human_norm_variance: f64,
    pub wasserstein: f64,
}

pub fn evaluate_cell(
    pred: &ResponseDistribution,
    human: &HumanDistribution,
    q: &QuestionSpec,
    method: &str,
    model: &str,
) -> Result<EvalCell, EvalError> {
    let human_d = human.to_distribution();
    Ok(EvalCell {
        country: human.country.clone(),
        question_id: q.id.clone(),
        method: method.to_string(),
        model: model.to_string(),
        mae: mae(pred.mean(), human.mean(), q)?,
        pred_norm_variance: normalized_variance(pred)?,
        human_norm_variance: human_normalized_variance(human)?,
        wasserstein: wasserstein1d(pred, &human_d)?,
    })
}

/// Mean metrics over a group of cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    /// `country` or `model`.
    pub group_kind: String,
    pub group: String,
    pub method: String,
    pub n_cells: usize,
    pub mae: f64,
    pub pred_norm_variance: f64,
    pub human_norm_variance: f64,
    pub wasserstein: f64,
}

fn aggregate_by(cells: &[EvalCell], kind: &str, key: impl Fn(&EvalCell) -> &str) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<&EvalCell>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((key(c).to_string(), c.method.clone()))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((group, method), members)| {
            let n = members.len() as f64;
            let avg = |f: fn(&EvalCell) -> f64| members.iter().map(|c| f(c)).sum::<f64>() / n;
            AggregateRow {
                group_kind: kind.to_string(),
                group,
                method,
                n_cells: members.len(),
                mae: avg(|c| c.mae),
                pred_norm_variance: avg(|c| c.pred_norm_variance),
                human_norm_variance: avg(|c| c.human_norm_variance),
                wasserstein: avg(|c| c.wasserstein),
            }
        })
        .collect()
}

/// Marginal rows per (country, method) followed by per (model, method).
pub fn aggregate_rows(cells: &[EvalCell]) -> Vec<AggregateRow> {
    let mut rows = aggregate_by(cells, "country", |c| &c.country);
    rows.extend(aggregate_by(cells, "model", |c| &c.model));
    rows
}

fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Write(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Write(e.to_string()))
}

pub fn write_cells_csv(cells: &[EvalCell], out: impl Write) -> Result<(), EvalError> {
    write_csv(cells, out)
}

pub fn write_aggregates_csv(rows: &[AggregateRow], out: impl Write) -> Result<(), EvalError> {
    write_csv(rows, out)
}

/// Paired comparison of two methods over matching (country, question) cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub method_a: String,
    pub method_b: String,
    pub n_pairs: usize,
    pub mean_mae_a: f64,
    pub mean_mae_b: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
}

/// Wilcoxon signed-rank tests on per-cell MAE for every method pair, with
/// Benjamini-Hochberg adjustment across pairs. Pairs the test rejects
/// (too few or all-tied differences) get `p = 1`.
pub fn method_significance(cells: &[EvalCell]) -> Result<Vec<SignificanceRow>, EvalError> {
    let mut by_method: BTreeMap<&str, BTreeMap<(&str, &str, &str), f64>> = BTreeMap::new();
    for c in cells {
        by_method
            .entry(c.method.as_str())
            .or_default()
            .insert((c.country.as_str(), c.question_id.as_str(), c.model.as_str()), c.mae);
    }
    let methods: Vec<&str> = by_method.keys().copied().collect();
    let mut rows = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            let (ma, mb) = (&by_method[a], &by_method[b]);
            let (xs, ys): (Vec<f64>, Vec<f64>) = ma
                .iter()
                .filter_map(|(k, &x)| mb.get(k).map(|&y| (x, y)))
                .unzip();
            let n = xs.len();
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            let p_value = match wilcoxon_signed_rank(&xs, &ys) {
                Ok(p) => p,
                Err(StatsError::AllTied | StatsError::TooFewPairs(_)) => 1.0,
                Err(e) => return Err(e.into()),
            };
            rows.push(SignificanceRow {
                method_a: a.to_string(),
                method_b: b.to_string(),
                n_pairs: n,
                mean_mae_a: mean(&xs),
                mean_mae_b: mean(&ys),
                p_value,
                p_adjusted: p_value,
            });
        }
    }
    let adjusted = benjamini_hochberg(&rows.iter().map(|r| r.p_value).collect::<Vec<_>>())?;
    for (r, p) in rows.iter_mut().zip(adjusted) {
        r.p_adjusted = p;
    }
    Ok(rows)
}

pub fn write_significance_csv(rows: &[SignificanceRow], out: impl Write) -> Result<(), EvalError> {
    write_csv(rows, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(min: i64, max: i64) -> QuestionSpec {
        QuestionSpec::new("Q", "?", min, max, &[])
    }

    fn dist(probs: &[f64]) -> ResponseDistribution {
        ResponseDistribution::new("Q", (1..=probs.len() as i64).collect(), probs.to_vec()).unwrap()
    }

    #[test]
    fn mae_examples() {
        assert!((mae(2.5, 3.0, &q(1, 4)).unwrap() - 0.5 / 3.0).abs() < 1e-12);
        assert_eq!(mae(2.0, 2.0, &q(1, 4)).unwrap(), 0.0);
        assert_eq!(mae(1.0, 10.0, &q(1, 10)).unwrap(), 1.0);
        assert!(matches!(mae(1.0, 1.0, &q(3, 3)), Err(EvalError::DegenerateScale(_))));
        assert!(matches!(mae(0.5, 1.0, &q(1, 4)), Err(EvalError::MeanOutOfRange { .. })));
    }

    #[test]
    fn normalized_variance_examples() {
        assert_eq!(normalized_variance(&ResponseDistribution::point_mass("Q", 1, 4, 3)).unwrap(), 0.0);
        assert!((normalized_variance(&dist(&[0.5, 0.0, 0.0, 0.5])).unwrap() - 1.0).abs() < 1e-12);
        let u = normalized_variance(&ResponseDistribution::uniform("Q", 1, 4)).unwrap();
        assert!((u - 1.25 / 2.25).abs() < 1e-12);
        assert!((u - 0.5556).abs() < 1e-4);
    }

    #[test]
    fn empty_human_is_an_error() {
        let h = HumanDistribution {
            question_id: "Q".into(),
            country: "GH".into(),
            scale_min: 1,
            scale_max: 4,
            counts: BTreeMap::new(),
            n_valid: 0,
            n_missing: 3,
        };
        assert!(matches!(human_normalized_variance(&h), Err(EvalError::EmptyHuman { .. })));
    }

    #[test]
    fn wasserstein_examples() {
        let a = dist(&[0.5, 0.5, 0.0]);
        assert_eq!(wasserstein1d(&a, &a).unwrap(), 0.0);
        let p1 = ResponseDistribution::point_mass("Q", 1, 3, 1);
        let p2 = ResponseDistribution::point_mass("Q", 1, 3, 2);
        assert_eq!(wasserstein1d(&p1, &p2).unwrap(), 1.0);
        assert!((wasserstein1d(&a, &dist(&[0.0, 0.5, 0.5])).unwrap() - 1.0).abs() < 1e-15);
        let other = ResponseDistribution::uniform("Q", 1, 4);
        assert!(matches!(wasserstein1d(&a, &other), Err(EvalError::GridMismatch(..))));
    }

    fn cell(country: &str, qid: &str, method: &str, mae: f64) -> EvalCell {
        EvalCell {
            country: country.into(),
            question_id: qid.into(),
            method: method.into(),
            model: "m".into(),
            mae,
            pred_norm_variance: 0.2,
            human_norm_variance: 0.4,
            wasserstein: 0.5,
        }
    }

    #[test]
    fn aggregates_and_significance() {
        let mut cells = Vec::new();
        for i in 0..8 {
            let qid = format!("Q{i}");
            cells.push(cell("GH", &qid, "country", 0.2 + i as f64 * 0.01));
            cells.push(cell("GH", &qid, "value", 0.1 + i as f64 * 0.001));
        }
        let rows = aggregate_rows(&cells);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].group_kind, "country");
        assert_eq!(rows[0].n_cells, 8);
        assert!((rows[1].mae - (0.1 + 0.0035)).abs() < 1e-12);

        let sig = method_significance(&cells).unwrap();
        assert_eq!(sig.len(), 1);
        assert_eq!(sig[0].n_pairs, 8);
        assert!((sig[0].p_value - 2.0 / 256.0).abs() < 1e-12);

        let mut buf = Vec::new();
        write_cells_csv(&cells[..1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("country,question_id,method,model,mae,"));
    }

    fn arb_dist(k: usize) -> impl Strategy<Value = ResponseDistribution> {
        proptest::collection::vec(0.0f64..1.0, k)
            .prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-6)
            .prop_map(move |w| ResponseDistribution::from_weights("Q", (1..=k as i64).collect(), &w).unwrap())
    }

    proptest! {
        #[test]
        fn mae_symmetric_and_translation_invariant(a in 1.0f64..7.0, b in 1.0f64..7.0, shift in -50i64..50) {
            let base = mae(a, b, &q(1, 7)).unwrap();
            prop_assert_eq!(base, mae(b, a, &q(1, 7)).unwrap());
            let moved = mae(a + shift as f64, b + shift as f64, &q(1 + shift, 7 + shift)).unwrap();
            prop_assert!((base - moved).abs() < 1e-12);
        }

        #[test]
        fn normalized_variance_in_unit_interval(d in arb_dist(10)) {
            let v = normalized_variance(&d).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn wasserstein_is_a_metric(a in arb_dist(5), b in arb_dist(5), c in arb_dist(5)) {
            let ab = wasserstein1d(&a, &b).unwrap();
            prop_assert!(wasserstein1d(&a, &a).unwrap() == 0.0);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein1d(&b, &a).unwrap()).abs() < 1e-15);
            let ac = wasserstein1d(&a, &c).unwrap();
            let cb = wasserstein1d(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
            if a.probs.iter().zip(&b.probs).any(|(x, y)| (x - y).abs() > 1e-9) {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
