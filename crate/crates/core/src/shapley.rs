//! Shapley attribution of population prediction error to persona items.
//!
//! The value of a coalition `S` is the mean MAE of the population whose
//! personas only show the items in `S`, so a negative Shapley value marks an
//! item that lowers error.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{QuestionSpec, SurveyDataset};
use crate::persona::{item_subset_population, Population};
use crate::simulate::{population_mae, SimContext, SimulateError};

/// Largest item count accepted by exact enumeration.
pub const EXACT_MAX_ITEMS: usize = 12;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("no items to attribute")]
    NoItems,
    #[error("exact Shapley values need at most {EXACT_MAX_ITEMS} items, got {0}; use permutation mode")]
    TooManyItems(usize),
    #[error("permutation mode needs at least one permutation")]
    NoPermutations,
    #[error("duplicate item {0}")]
    DuplicateItem(String),
    #[error("coalition value is not finite: {0}")]
    NonFinite(f64),
    #[error("unknown Shapley mode {0:?} (expected exact or permutation)")]
    UnknownMode(String),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Persona(#[from] crate::persona::PersonaError),
    #[error("report write failed: {0}")]
    Write(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapleyMode {
    #[default]
    Exact,
    Permutation,
}

impl FromStr for ShapleyMode {
    type Err = ShapleyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "permutation" => Ok(Self::Permutation),
            _ => Err(ShapleyError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for ShapleyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Permutation => "permutation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionValue {
    pub subset: BTreeSet<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapleyReport {
    pub items: Vec<String>,
    pub values: Vec<f64>,
    /// Standard error of each sampled value; `None` in exact mode.
    pub std_errors: Option<Vec<f64>>,
    pub mode: ShapleyMode,
    pub samples: Option<usize>,
    pub v_empty: f64,
    pub v_full: f64,
}

impl ShapleyReport {
    pub fn get(&self, item: &str) -> Option<f64> {
        self.items.iter().position(|i| i == item).map(|k| self.values[k])
    }
}

fn subset_of(items: &[String], mask: u64) -> BTreeSet<String> {
    items
        .iter()
        .enumerate()
        .filter(|(k, _)| mask & (1 << k) != 0)
        .map(|(_, i)| i.clone())
        .collect()
}

/// Shapley values of `items` under `value_fn`.
pub fn shapley_values<F>(
    items: &[String],
    value_fn: F,
    mode: ShapleyMode,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyReport, ShapleyError>
where
    F: Fn(&BTreeSet<String>) -> Result<f64, ShapleyError> + Sync,
{
    if items.is_empty() {
        return Err(ShapleyError::NoItems);
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.as_str())) {
        return Err(ShapleyError::DuplicateItem(dup.clone()));
    }
    let value = |s: &BTreeSet<String>| {
        let v = value_fn(s)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ShapleyError::NonFinite(v))
        }
    };
    let n = items.len();
    match mode {
        ShapleyMode::Exact => {
            if n > EXACT_MAX_ITEMS {
                return Err(ShapleyError::TooManyItems(n));
            }
            let v: Vec<f64> = (0..1u64 << n)
                .into_par_iter()
                .map(|mask| value(&subset_of(items, mask)))
                .collect::<Result<_, _>>()?;
            // weight(s) = s! (n - s - 1)! / n!
            let mut weight = vec![0.0; n];
            for (s, w) in weight.iter_mut().enumerate() {
                let mut x = 1.0 / n as f64;
                for j in 0..s {
                    x *= (s - j) as f64 / (n - 1 - j) as f64;
                }
                *w = x;
            }
            let values = (0..n)
                .map(|k| {
                    let bit = 1u64 << k;
                    (0..1u64 << n)
                        .filter(|m| m & bit == 0)
                        .map(|m| weight[m.count_ones() as usize] * (v[(m | bit) as usize] - v[m as usize]))
                        .sum()
                })
                .collect();
            Ok(ShapleyReport {
                items: items.to_vec(),
                values,
                std_errors: None,
                mode,
                samples: None,
                v_empty: v[0],
                v_full: v[(1usize << n) - 1],
            })
        }
        ShapleyMode::Permutation => {
            if n_permutations == 0 {
                return Err(ShapleyError::NoPermutations);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let orders: Vec<Vec<usize>> = (0..n_permutations)
                .map(|_| {
                    let mut o: Vec<usize> = (0..n).collect();
                    o.shuffle(&mut rng);
                    o
                })
                .collect();
            let marginals: Vec<Vec<f64>> = orders
                .par_iter()
                .map(|order| {
                    let mut contrib = vec![0.0; n];
                    let mut mask = 0u64;
                    let mut prev = value(&subset_of(items, 0))?;
                    for &k in order {
                        mask |= 1 << k;
                        let next = value(&subset_of(items, mask))?;
                        contrib[k] = next - prev;
                        prev = next;
                    }
                    Ok(contrib)
                })
                .collect::<Result<_, ShapleyError>>()?;
            let m = n_permutations as f64;
            let mut values = vec![0.0; n];
            let mut std_errors = vec![0.0; n];
            for k in 0..n {
                let mean = marginals.iter().map(|c| c[k]).sum::<f64>() / m;
                let var = if n_permutations > 1 {
                    marginals.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                values[k] = mean;
                std_errors[k] = (var / m).sqrt();
            }
            Ok(ShapleyReport {
                items: items.to_vec(),
                values,
                std_errors: Some(std_errors),
                mode,
                samples: Some(n_permutations),
                v_empty: value(&BTreeSet::new())?,
                v_full: value(&items.iter().cloned().collect())?,
            })
        }
    }
}

/// Memoized coalition values for one country's population.
pub struct CoalitionEvaluator<'a> {
    ds: &'a SurveyDataset,
    population: &'a Population,
    questions: &'a [QuestionSpec],
    ctx: SimContext<'a>,
    memo: Mutex<HashMap<BTreeSet<String>, f64>>,
    evaluations: AtomicUsize,
}

impl<'a> CoalitionEvaluator<'a> {
    /// `population` is the full-item population; coalitions reuse its respondents.
    pub fn new(ds: &'a SurveyDataset, population: &'a Population, questions: &'a [QuestionSpec], ctx: SimContext<'a>) -> Self {
        Self {
            ds,
            population,
            questions,
            ctx,
            memo: Mutex::new(HashMap::new()),
            evaluations: AtomicUsize::new(0),
        }
    }

    /// Mean MAE over the test questions for the population restricted to `subset`.
    pub fn coalition_value(&self, subset: &BTreeSet<String>) -> Result<CoalitionValue, ShapleyError> {
        if let Some(&value) = self.memo.lock().expect("memo lock").get(subset) {
            return Ok(CoalitionValue {
                subset: subset.clone(),
                value,
            });
        }
        let pop = item_subset_population(self.population, subset)?;
        let value = population_mae(self.ds, &pop, self.questions, &self.ctx)?;
        self.evaluations.fetch_add(1, Ordering::SeqCst);
        let value = *self
            .memo
            .lock()
            .expect("memo lock")
            .entry(subset.clone())
            .or_insert(value);
        Ok(CoalitionValue {
            subset: subset.clone(),
            value,
        })
    }

    /// Number of coalitions actually simulated.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    pub fn shapley(&self, mode: ShapleyMode, n_permutations: usize, seed: u64) -> Result<ShapleyReport, ShapleyError> {
        shapley_values(
            &self.population.settings.items,
            |s| self.coalition_value(s).map(|c| c.value),
            mode,
            n_permutations,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapleyRow {
    pub country: String,
    pub item: String,
    pub phi: f64,
    pub std_error: Option<f64>,
    pub method: ShapleyMode,
    pub samples: Option<usize>,
}

/// One row per (country, item) plus a per-country `mean` row.
pub fn report_rows(reports: &[(String, ShapleyReport)]) -> Vec<ShapleyRow> {
    let mut rows = Vec::new();
    for (country, r) in reports {
        for (k, item) in r.items.iter().enumerate() {
            rows.push(ShapleyRow {
                country: country.clone(),
                item: item.clone(),
                phi: r.values[k],
                std_error: r.std_errors.as_ref().map(|s| s[k]),
                method: r.mode,
                samples: r.samples,
            });
        }
        rows.push(ShapleyRow {
            country: country.clone(),
            item: "mean".into(),
            phi: r.values.iter().sum::<f64>() / r.values.len() as f64,
            std_error: None,
            method: r.mode,
            samples: r.samples,
        });
    }
    rows
}

pub fn write_rows_csv(rows: &[ShapleyRow], out: impl Write) -> Result<(), ShapleyError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| ShapleyError::Write(e.to_string()))?;
    }
    w.flush().map_err(|e| ShapleyError::Write(e.to_string()))
}
