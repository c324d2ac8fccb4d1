//! Long-format tables for external plotting.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};
use persona_sim::dataset::human_distribution;
use persona_sim::evaluate::{project_map, EvalCell, MapProjection};
use serde::Serialize;

use crate::commands::{load_dataset, read_csv, read_prediction_files, with_run, write_table, SampleSizeBand, TemperatureRow};
use crate::config::RunConfig;
use crate::run::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    MaeLines,
    VarianceBox,
    SampleSizeCurve,
    TemperatureCurves,
    MapPoints,
}

impl ExportKind {
    pub const ALL: [ExportKind; 5] = [
        Self::MaeLines,
        Self::VarianceBox,
        Self::SampleSizeCurve,
        Self::TemperatureCurves,
        Self::MapPoints,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MaeLines => "mae_lines",
            Self::VarianceBox => "variance_box",
            Self::SampleSizeCurve => "sample_size_curve",
            Self::TemperatureCurves => "temperature_curves",
            Self::MapPoints => "map_points",
        }
    }

    /// The report each kind reads.
    pub fn expected_input(self) -> &'static str {
        match self {
            Self::MaeLines | Self::VarianceBox => crate::commands::EVAL_CELLS,
            Self::SampleSizeCurve => crate::commands::SAMPLE_SIZE_BANDS,
            Self::TemperatureCurves => crate::commands::TEMPERATURE_SWEEP,
            Self::MapPoints => crate::commands::PREDICTIONS,
        }
    }
}

impl FromStr for ExportKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Self::ALL.iter().find(|k| k.name() == s) {
            Some(k) => Ok(*k),
            None => {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                bail!("unknown export kind {s:?} (expected one of {})", names.join(", "))
            }
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One plotted value: `series` is the line or box, `x` the position on the
/// horizontal axis, `metric` what `value` measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub series: String,
    pub model: String,
    pub x: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapPoint {
    pub series: String,
    pub model: String,
    pub country: String,
    pub traditional_secular: f64,
    pub survival_self_expression: f64,
}

fn read_cells(inputs: &[PathBuf]) -> Result<Vec<EvalCell>> {
    let mut cells = Vec::new();
    for p in inputs {
        cells.extend(read_csv::<EvalCell>(p)?);
    }
    Ok(cells)
}

/// Mean MAE per (method, model, country).
pub fn mae_lines(cells: &[EvalCell]) -> Vec<LongRow> {
    let mut groups: BTreeMap<(&str, &str, &str), (f64, usize)> = BTreeMap::new();
    for c in cells {
        let e = groups.entry((&c.method, &c.model, &c.country)).or_default();
        e.0 += c.mae;
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|((method, model, country), (sum, n))| LongRow {
            series: method.to_string(),
            model: model.to_string(),
            x: country.to_string(),
            metric: "mae".into(),
            value: sum / n as f64,
        })
        .collect()
}

/// Normalized variances per cell, plus one human row per (country, question).
pub fn variance_box(cells: &[EvalCell]) -> Vec<LongRow> {
    let mut rows: Vec<LongRow> = cells
        .iter()
        .map(|c| LongRow {
            series: c.method.clone(),
            model: c.model.clone(),
            x: c.country.clone(),
            metric: "normalized_variance".into(),
            value: c.pred_norm_variance,
        })
        .collect();
    let mut human: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for c in cells {
        human.insert((&c.country, &c.question_id), c.human_norm_variance);
    }
    rows.extend(human.into_iter().map(|((country, _), v)| LongRow {
        series: "human".into(),
        model: String::new(),
        x: country.to_string(),
        metric: "normalized_variance".into(),
        value: v,
    }));
    rows
}

pub fn sample_size_curve(bands: &[SampleSizeBand]) -> Vec<LongRow> {
    bands
        .iter()
        .flat_map(|b| {
            [("min", b.min), ("mean", b.mean), ("max", b.max)].map(|(metric, value)| LongRow {
                series: b.country.clone(),
                model: String::new(),
                x: b.n.to_string(),
                metric: format!("mae_{metric}"),
                value,
            })
        })
        .collect()
}

pub fn temperature_curves(rows: &[TemperatureRow]) -> Vec<LongRow> {
    rows.iter()
        .flat_map(|r| {
            [("mae", r.mae), ("wasserstein", r.wasserstein)].map(|(metric, value)| LongRow {
                series: format!("{}/{}", r.mode, r.method),
                model: r.model.clone(),
                x: r.temperature.to_string(),
                metric: metric.into(),
                value,
            })
        })
        .collect()
}

/// Projects every (mode, model, country) profile of predicted map items, and
/// the human profile of each country when the dataset is configured.
pub fn map_points(cfg: &RunConfig, predictions: &[PathBuf], run: &mut RunDir) -> Result<Vec<MapPoint>> {
    let proj = match &cfg.evaluation.map {
        Some(p) => {
            run.record_input(p)?;
            MapProjection::load(p)?
        }
        None => MapProjection::demo(),
    };
    let records = read_prediction_files(predictions, Some(run))?;
    let mut profiles: BTreeMap<(String, String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| proj.loadings.contains_key(&r.question_id)) {
        profiles
            .entry((r.mode.clone(), r.model.clone(), r.country.clone()))
            .or_default()
            .insert(r.question_id.clone(), r.expected_response);
    }
    if profiles.is_empty() {
        bail!("no predictions for any cultural-map item; simulate with evaluation.questions set to the map items");
    }
    let mut points = Vec::new();
    for ((mode, model, country), profile) in &profiles {
        if let Some(missing) = proj.loadings.keys().find(|k| !profile.contains_key(*k)) {
            bail!("{mode}/{model}/{country} lacks a prediction for map item {missing}");
        }
        let (x, y) = project_map(profile, &proj)?;
        points.push(MapPoint {
            series: mode.clone(),
            model: model.clone(),
            country: country.clone(),
            traditional_secular: x,
            survival_self_expression: y,
        });
    }
    if cfg.dataset.catalog.is_some() && cfg.dataset.respondents.is_some() {
        let ds = load_dataset(cfg, Some(run))?;
        let countries: std::collections::BTreeSet<&String> = profiles.keys().map(|(_, _, c)| c).collect();
        for country in countries {
            let mut profile = BTreeMap::new();
            for item in proj.loadings.keys() {
                profile.insert(item.clone(), human_distribution(&ds, item, country)?.mean());
            }
            let (x, y) = project_map(&profile, &proj)?;
            points.push(MapPoint {
                series: "human".into(),
                model: String::new(),
                country: country.clone(),
                traditional_secular: x,
                survival_self_expression: y,
            });
        }
    }
    Ok(points)
}

fn file_name(kind: ExportKind) -> String {
    format!("exports/{}.csv", kind.name())
}

pub fn cmd_export(cfg: &RunConfig, kind: ExportKind, inputs: &[PathBuf]) -> Result<PathBuf> {
    if inputs.is_empty() {
        bail!("export {kind} needs --input (a {} report)", kind.expected_input());
    }
    with_run("export", cfg, |run| {
        let rel = file_name(kind);
        let path = match kind {
            ExportKind::MapPoints => {
                let points = map_points(cfg, inputs, run)?;
                write_table(run, &rel, &points)?
            }
            _ => {
                for p in inputs {
                    run.record_input(p)?;
                }
                let rows = match kind {
                    ExportKind::MaeLines => mae_lines(&read_cells(inputs)?),
                    ExportKind::VarianceBox => variance_box(&read_cells(inputs)?),
                    ExportKind::SampleSizeCurve => sample_size_curve(&read_all(inputs)?),
                    ExportKind::TemperatureCurves => temperature_curves(&read_all(inputs)?),
                    ExportKind::MapPoints => unreachable!(),
                };
                write_table(run, &rel, &rows)?
            }
        };
        println!("wrote {}", path.display());
        Ok(())
    })
}

fn read_all<T: for<'de> serde::Deserialize<'de>>(inputs: &[PathBuf]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for p in inputs {
        out.extend(read_csv::<T>(p)?);
    }
    Ok(out)
}
