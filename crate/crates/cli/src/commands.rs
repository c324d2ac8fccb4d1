//! Pipeline stages behind the subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use persona_sim::backend::http::HttpSettings;
use persona_sim::backend::{BackendError, CachedScorer, HttpScorer, MockScorer, MockWorld, ResponseCache, ScoreRequest, ScoreResult, Scorer};
use persona_sim::calibrate::{apply_fit, fit_temperature_loo, temperature_sweep, CalibrationCell, CalibrationFit, ScalingMethod};
use persona_sim::dataset::{filter_questions, human_distribution, load_dataset_with_attributes, QuestionSpec, SurveyDataset};
use persona_sim::evaluate::{aggregate_rows, evaluate_cell, method_significance, write_aggregates_csv, write_cells_csv, write_significance_csv, EvalCell};
use persona_sim::persona::{sample_population, AttributeTemplate, DescriptorCatalog, PersonaMode, PersonaSettings};
use persona_sim::prompt::{GuidanceSet, PromptMode};
use persona_sim::shapley::{report_rows, write_rows_csv, CoalitionEvaluator};
use persona_sim::simulate::{
    persona_mode, population_for_mode, read_predictions, simulate_population, sweep_sample_size, write_predictions, PopulationSource, PredictionRecord, SimContext,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{BackendStats, RunDir};

pub const PREDICTIONS: &str = "predictions/predictions.jsonl";
pub const PREDICTION_SUMMARY: &str = "predictions/summary.csv";
pub const CALIBRATION_FIT: &str = "calibration/fit.json";
pub const CALIBRATION_CELLS: &str = "calibration/cells.csv";
pub const CALIBRATED_PREDICTIONS: &str = "calibration/predictions.jsonl";
pub const TEMPERATURE_SWEEP: &str = "calibration/temperature_sweep.csv";
pub const EVAL_CELLS: &str = "evaluation/cells.csv";
pub const EVAL_AGGREGATES: &str = "evaluation/aggregates.csv";
pub const EVAL_SIGNIFICANCE: &str = "evaluation/significance.csv";
pub const SAMPLE_SIZE_ROWS: &str = "evaluation/sample_size.csv";
pub const SAMPLE_SIZE_BANDS: &str = "evaluation/sample_size_bands.csv";
pub const SHAPLEY: &str = "shapley/shapley.csv";

/// Counts requests that reach the underlying backend.
pub struct Counting<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: Scorer> Counting<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<S: Scorer> Scorer for Counting<S> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(req)
    }
}

/// The configured scorer, optionally behind the response cache.
pub struct Backend {
    scorer: Arc<dyn Scorer>,
    counter: Arc<Counting<Arc<dyn Scorer>>>,
    cache: Option<Arc<ResponseCache>>,
}

impl Backend {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let base: Arc<dyn Scorer> = match cfg.backend.kind.as_str() {
            "mock" => {
                let mut world = MockWorld::new(cfg.mock.gamma, cfg.mean_rule()?)?;
                for (country, offset) in &cfg.mock.country_offsets {
                    world = world.with_offset(country, *offset);
                }
                Arc::new(MockScorer::new(world))
            }
            "http" => Arc::new(HttpScorer::from_env(HttpSettings {
                endpoint: cfg.backend.endpoint.clone(),
                model_id: cfg.backend.model_id.clone(),
                rps: cfg.backend.rps,
                max_retries: cfg.backend.max_retries,
                first_token: cfg.backend.first_token,
                ..HttpSettings::default()
            })?),
            other => bail!("unknown backend.kind {other:?}"),
        };
        let counter = Arc::new(Counting::new(base));
        let (scorer, cache): (Arc<dyn Scorer>, _) = match &cfg.backend.cache {
            Some(path) => {
                let cache = Arc::new(ResponseCache::open(path).with_context(|| format!("opening cache {}", path.display()))?);
                (Arc::new(CachedScorer::new(counter.clone(), cache.clone())), Some(cache))
            }
            None => (counter.clone(), None),
        };
        Ok(Self { scorer, counter, cache })
    }

    pub fn scorer(&self) -> &dyn Scorer {
        self.scorer.as_ref()
    }

    pub fn backend_calls(&self) -> usize {
        self.counter.calls()
    }

    pub fn stats(&self) -> BackendStats {
        BackendStats {
            backend_id: self.scorer.backend_id(),
            backend_calls: self.backend_calls(),
            cache_entries: self.cache.as_ref().map(|c| c.len()),
        }
    }
}

/// Everything loaded from disk before a stage runs.
pub struct Inputs {
    pub ds: SurveyDataset,
    pub catalog: DescriptorCatalog,
    pub guidance: GuidanceSet,
    pub mode: PromptMode,
    pub countries: Vec<String>,
    pub questions: Vec<QuestionSpec>,
    pub settings: PersonaSettings,
}

impl Inputs {
    pub fn context<'a>(&'a self, cfg: &'a RunConfig, backend: &'a Backend) -> Result<SimContext<'a>> {
        Ok(SimContext {
            guidance: self.guidance.get(&cfg.prompt.guidance)?,
            mode: self.mode,
            model_id: &cfg.backend.model_id,
            backend: backend.scorer(),
        })
    }

    pub fn source(&self) -> PopulationSource<'_> {
        PopulationSource {
            ds: &self.ds,
            catalog: &self.catalog,
            settings: &self.settings,
        }
    }

    pub fn require_persona_mode(&self, command: &str) -> Result<()> {
        if persona_mode(self.mode).is_none() {
            bail!("{command} needs a persona prompt mode (value, fewshot or sociodemographic), got {}", self.mode);
        }
        Ok(())
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| anyhow!("{key} is not set (config file or {flag})"))
}

pub fn load_dataset(cfg: &RunConfig, run: Option<&mut RunDir>) -> Result<SurveyDataset> {
    let catalog = required(&cfg.dataset.catalog, "dataset.catalog", "--catalog")?;
    let respondents = required(&cfg.dataset.respondents, "dataset.respondents", "--respondents")?;
    let ds = load_dataset_with_attributes(catalog, respondents, &cfg.dataset.attributes)?;
    if let Some(run) = run {
        run.record_input(catalog)?;
        run.record_input(respondents)?;
    }
    Ok(ds)
}

pub fn countries(cfg: &RunConfig, ds: &SurveyDataset) -> Vec<String> {
    if cfg.countries.is_empty() {
        ds.countries()
    } else {
        cfg.countries.clone()
    }
}

/// Evaluation questions: the configured list or every filtered non-persona
/// question, keeping only those that pass the missingness filter everywhere.
pub fn evaluation_questions(cfg: &RunConfig, ds: &SurveyDataset, countries: &[String]) -> Result<Vec<QuestionSpec>> {
    let kept: BTreeSet<String> = filter_questions(ds, countries, cfg.dataset.max_missing_fraction)?
        .into_iter()
        .collect();
    let wanted: Vec<&QuestionSpec> = if cfg.evaluation.questions.is_empty() {
        ds.questions
            .iter()
            .filter(|q| !cfg.persona.items.contains(&q.id))
            .collect()
    } else {
        cfg.evaluation
            .questions
            .iter()
            .map(|id| ds.question(id))
            .collect::<Result<_, _>>()?
    };
    let mut out = Vec::new();
    for q in wanted {
        if kept.contains(&q.id) {
            out.push(q.clone());
        } else {
            eprintln!("skipping {}: too many missing answers in at least one country", q.id);
        }
    }
    if out.is_empty() {
        bail!("no evaluation questions left after the missingness filter");
    }
    Ok(out)
}

pub fn load_inputs(cfg: &RunConfig, mut run: Option<&mut RunDir>) -> Result<Inputs> {
    let ds = load_dataset(cfg, run.as_deref_mut())?;
    let mode = cfg.prompt_mode()?;
    let catalog = match &cfg.persona.descriptors {
        Some(path) => {
            if let Some(run) = run.as_deref_mut() {
                run.record_input(path)?;
            }
            DescriptorCatalog::load(path)?
        }
        None => DescriptorCatalog::default(),
    };
    if mode == PromptMode::Value {
        catalog.check_coverage(&ds.questions, &cfg.persona.items)?;
    }
    let guidance = match &cfg.prompt.guidance_file {
        Some(path) => {
            if let Some(run) = run {
                run.record_input(path)?;
            }
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GuidanceSet::from_toml(&text)?
        }
        None => GuidanceSet::builtin(),
    };
    guidance.get(&cfg.prompt.guidance)?;
    let countries = countries(cfg, &ds);
    let questions = evaluation_questions(cfg, &ds, &countries)?;
    let settings = PersonaSettings {
        items: cfg.persona.items.clone(),
        mode: persona_mode(mode).unwrap_or(PersonaMode::Value),
        include_nationality: cfg.persona.include_nationality,
        attributes: AttributeTemplate::defaults(),
    };
    Ok(Inputs {
        ds,
        catalog,
        guidance,
        mode,
        countries,
        questions,
        settings,
    })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

pub fn read_prediction_files(paths: &[PathBuf], mut run: Option<&mut RunDir>) -> Result<Vec<PredictionRecord>> {
    if paths.is_empty() {
        bail!("no prediction dumps given (use --predictions)");
    }
    let mut out = Vec::new();
    for p in paths {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        out.extend(read_predictions(BufReader::new(f)).with_context(|| p.display().to_string())?);
        if let Some(run) = run.as_deref_mut() {
            run.record_input(p)?;
        }
    }
    Ok(out)
}

/// Runs `f` in a fresh run directory, finishing or aborting it.
pub(crate) fn with_run(command: &str, cfg: &RunConfig, f: impl FnOnce(&mut RunDir) -> Result<()>) -> Result<PathBuf> {
    let mut run = RunDir::create(command, cfg)?;
    match f(&mut run) {
        Ok(()) => run.finish(),
        Err(e) => {
            let root = run.abort(&e);
            Err(e.context(format!("{command} failed; partial run left in {}", root.display())))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CountrySummary {
    pub country: String,
    pub respondents: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub max_missing_fraction: f64,
    pub countries: Vec<CountrySummary>,
    pub questions: usize,
    pub kept: Vec<String>,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let ds = load_dataset(cfg, None)?;
    let countries = countries(cfg, &ds);
    let kept = filter_questions(&ds, &countries, cfg.dataset.max_missing_fraction)?;
    Ok(IngestSummary {
        max_missing_fraction: cfg.dataset.max_missing_fraction,
        countries: countries
            .iter()
            .map(|c| CountrySummary {
                country: c.clone(),
                respondents: ds.respondents_in(c).count(),
            })
            .collect(),
        questions: ds.questions.len(),
        kept,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSummaryRow {
    pub country: String,
    pub question_id: String,
    pub mode: String,
    pub model: String,
    pub n: usize,
    pub expected_response: f64,
    pub human_mean: f64,
    pub mae: f64,
}

pub fn simulate_records(cfg: &RunConfig, inputs: &Inputs, ctx: &SimContext<'_>) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for country in &inputs.countries {
        let pop = population_for_mode(
            &inputs.ds,
            country,
            &inputs.catalog,
            &inputs.settings,
            inputs.mode,
            cfg.persona.n,
            cfg.persona_seed(),
        )?;
        for q in &inputs.questions {
            let pred = simulate_population(&pop, q, ctx)?;
            records.push(PredictionRecord::new(&pred, &pop, inputs.mode, &cfg.backend.model_id));
        }
    }
    Ok(records)
}

fn summary_rows(inputs: &Inputs, records: &[PredictionRecord]) -> Result<Vec<PredictionSummaryRow>> {
    records
        .iter()
        .map(|r| {
            let q = inputs.ds.question(&r.question_id)?;
            let human = human_distribution(&inputs.ds, &r.question_id, &r.country)?;
            Ok(PredictionSummaryRow {
                country: r.country.clone(),
                question_id: r.question_id.clone(),
                mode: r.mode.clone(),
                model: r.model.clone(),
                n: r.n,
                expected_response: r.expected_response,
                human_mean: human.mean(),
                mae: persona_sim::evaluate::mae(r.expected_response, human.mean(), q)?,
            })
        })
        .collect()
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf> {
    with_run("simulate", cfg, |run| {
        let inputs = run.stage("load", |run| load_inputs(cfg, Some(run)))?;
        let backend = Backend::build(cfg)?;
        let ctx = inputs.context(cfg, &backend)?;
        let records = run.stage("simulate", |_| simulate_records(cfg, &inputs, &ctx))?;
        let mut dump = Vec::new();
        write_predictions(&records, &mut dump)?;
        run.write(PREDICTIONS, &dump)?;
        run.write(PREDICTION_SUMMARY, &csv_bytes(&summary_rows(&inputs, &records)?)?)?;
        run.set_backend(backend.stats());
        println!(
            "simulated {} cells ({} countries x {} questions), {} backend calls",
            records.len(),
            inputs.countries.len(),
            inputs.questions.len(),
            backend.backend_calls()
        );
        Ok(())
    })
}

type Group = (String, String);

/// Calibration cells grouped by (mode, model), each keeping its source record.
fn calibration_groups(ds: &SurveyDataset, records: &[PredictionRecord]) -> Result<BTreeMap<Group, Vec<(CalibrationCell, PredictionRecord)>>> {
    let mut groups: BTreeMap<Group, Vec<(CalibrationCell, PredictionRecord)>> = BTreeMap::new();
    for r in records {
        let human = human_distribution(ds, &r.question_id, &r.country)?;
        let cell = CalibrationCell {
            question_id: r.question_id.clone(),
            country: r.country.clone(),
            prediction: r.aggregate_distribution()?,
            human: human.to_distribution(),
        };
        groups
            .entry((r.mode.clone(), r.model.clone()))
            .or_default()
            .push((cell, r.clone()));
    }
    Ok(groups)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub mode: String,
    pub model: String,
    pub question_id: String,
    pub country: String,
    pub temperature: f64,
    pub beta: f64,
    pub criterion: String,
    pub criterion_before: f64,
    pub criterion_after: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GroupFit<'a> {
    mode: &'a str,
    model: &'a str,
    fit: &'a CalibrationFit,
}

pub fn cmd_calibrate(cfg: &RunConfig, predictions: &[PathBuf]) -> Result<PathBuf> {
    with_run("calibrate", cfg, |run| {
        let ds = load_dataset(cfg, Some(run))?;
        let records = read_prediction_files(predictions, Some(run))?;
        let criterion = cfg.criterion()?;
        let grid = cfg.grid();
        let groups = calibration_groups(&ds, &records)?;
        let (mut rows, mut calibrated, mut fits) = (Vec::new(), Vec::new(), Vec::new());
        run.stage("fit", |_| {
            for ((mode, model), members) in &groups {
                let cells: Vec<CalibrationCell> = members.iter().map(|(c, _)| c.clone()).collect();
                let fit = fit_temperature_loo(&cells, &grid, criterion).with_context(|| format!("calibrating {mode}/{model}"))?;
                for ((row, q), (_, rec)) in apply_fit(&cells, &fit)?.into_iter().zip(members) {
                    rows.push(CalibrationRow {
                        mode: mode.clone(),
                        model: model.clone(),
                        question_id: row.question_id,
                        country: row.country,
                        temperature: row.temperature,
                        beta: row.beta,
                        criterion: criterion.to_string(),
                        criterion_before: row.criterion_before,
                        criterion_after: row.criterion_after,
                        mae: row.mae,
                    });
                    calibrated.push(PredictionRecord {
                        mode: format!("{mode}+calibrated"),
                        aggregate: q.probs.clone(),
                        expected_response: q.mean(),
                        per_persona: Vec::new(),
                        ..rec.clone()
                    });
                }
                fits.push((mode.clone(), model.clone(), fit));
            }
            Ok(())
        })?;
        let fit_json: Vec<GroupFit> = fits
            .iter()
            .map(|(mode, model, fit)| GroupFit { mode, model, fit })
            .collect();
        run.write(CALIBRATION_FIT, &serde_json::to_vec_pretty(&fit_json)?)?;
        run.write(CALIBRATION_CELLS, &csv_bytes(&rows)?)?;
        let mut dump = Vec::new();
        write_predictions(&calibrated, &mut dump)?;
        run.write(CALIBRATED_PREDICTIONS, &dump)?;
        for (mode, model, fit) in &fits {
            let ts: Vec<String> = fit.per_question_t.iter().map(|(q, t)| format!("{q}={t:.3}")).collect();
            println!("{mode}/{model}: {}", ts.join(" "));
        }
        Ok(())
    })
}

pub fn evaluation_cells(ds: &SurveyDataset, records: &[PredictionRecord]) -> Result<Vec<EvalCell>> {
    let mut seen = BTreeSet::new();
    let mut cells = Vec::new();
    for r in records {
        if !seen.insert((r.country.clone(), r.question_id.clone(), r.mode.clone(), r.model.clone())) {
            bail!("duplicate prediction for {}/{} ({}, {})", r.country, r.question_id, r.mode, r.model);
        }
        let q = ds.question(&r.question_id)?;
        let human = human_distribution(ds, &r.question_id, &r.country)?;
        cells.push(evaluate_cell(&r.aggregate_distribution()?, &human, q, &r.mode, &r.model)?);
    }
    Ok(cells)
}

pub fn cmd_evaluate(cfg: &RunConfig, predictions: &[PathBuf]) -> Result<PathBuf> {
    with_run("evaluate", cfg, |run| {
        let ds = load_dataset(cfg, Some(run))?;
        let records = read_prediction_files(predictions, Some(run))?;
        let cells = run.stage("metrics", |_| evaluation_cells(&ds, &records))?;
        let aggregates = aggregate_rows(&cells);
        let significance = run.stage("significance", |_| Ok(method_significance(&cells)?))?;
        let mut buf = Vec::new();
        write_cells_csv(&cells, &mut buf)?;
        run.write(EVAL_CELLS, &buf)?;
        let mut buf = Vec::new();
        write_aggregates_csv(&aggregates, &mut buf)?;
        run.write(EVAL_AGGREGATES, &buf)?;
        let mut buf = Vec::new();
        write_significance_csv(&significance, &mut buf)?;
        run.write(EVAL_SIGNIFICANCE, &buf)?;
        for a in aggregates.iter().filter(|a| a.group_kind == "model") {
            println!(
                "{}/{}: mae {:.4}  var {:.4} (human {:.4})  w1 {:.4}  over {} cells",
                a.method, a.group, a.mae, a.pred_norm_variance, a.human_norm_variance, a.wasserstein, a.n_cells
            );
        }
        Ok(())
    })
}

pub fn cmd_shapley(cfg: &RunConfig) -> Result<PathBuf> {
    with_run("shapley", cfg, |run| {
        let inputs = run.stage("load", |run| load_inputs(cfg, Some(run)))?;
        inputs.require_persona_mode("shapley")?;
        let backend = Backend::build(cfg)?;
        let ctx = inputs.context(cfg, &backend)?;
        let mode = cfg.shapley_mode()?;
        let n = cfg.shapley.n.unwrap_or(cfg.persona.n);
        let mut reports = Vec::new();
        run.stage("shapley", |_| {
            for country in &inputs.countries {
                let pop = sample_population(&inputs.ds, country, &inputs.catalog, &inputs.settings, n, cfg.persona_seed())?;
                let eval = CoalitionEvaluator::new(&inputs.ds, &pop, &inputs.questions, ctx);
                let report = eval
                    .shapley(mode, cfg.shapley.n_permutations, cfg.seed)
                    .with_context(|| format!("shapley values for {country}"))?;
                println!(
                    "{country}: v(empty) {:.4} -> v(full) {:.4}, {} coalitions evaluated",
                    report.v_empty,
                    report.v_full,
                    eval.evaluations()
                );
                reports.push((country.clone(), report));
            }
            Ok(())
        })?;
        let mut buf = Vec::new();
        write_rows_csv(&report_rows(&reports), &mut buf)?;
        run.write(SHAPLEY, &buf)?;
        run.set_backend(backend.stats());
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub country: String,
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSizeBand {
    pub country: String,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub width: f64,
}

pub fn cmd_sweep_n(cfg: &RunConfig) -> Result<PathBuf> {
    with_run("sweep-n", cfg, |run| {
        let inputs = run.stage("load", |run| load_inputs(cfg, Some(run)))?;
        inputs.require_persona_mode("sweep-n")?;
        let backend = Backend::build(cfg)?;
        let ctx = inputs.context(cfg, &backend)?;
        let (mut rows, mut bands) = (Vec::new(), Vec::new());
        run.stage("sweep", |_| {
            for country in &inputs.countries {
                let table = sweep_sample_size(
                    inputs.source(),
                    country,
                    &inputs.questions,
                    &cfg.sweep.ns,
                    cfg.sweep.repeats,
                    cfg.persona_seed(),
                    &ctx,
                )?;
                rows.extend(table.rows.iter().map(|r| SampleSizeRow {
                    country: country.clone(),
                    n: r.n,
                    repeat: r.repeat,
                    seed: r.seed,
                    mae: r.mae,
                }));
                for b in &table.bands {
                    println!("{country} n={:<5} mae {:.4} [{:.4}, {:.4}]", b.n, b.mean, b.min, b.max);
                    bands.push(SampleSizeBand {
                        country: country.clone(),
                        n: b.n,
                        min: b.min,
                        max: b.max,
                        mean: b.mean,
                        width: b.width(),
                    });
                }
            }
            Ok(())
        })?;
        run.write(SAMPLE_SIZE_ROWS, &csv_bytes(&rows)?)?;
        run.write(SAMPLE_SIZE_BANDS, &csv_bytes(&bands)?)?;
        run.set_backend(backend.stats());
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub mode: String,
    pub model: String,
    pub temperature: f64,
    pub method: String,
    pub mae: f64,
    pub wasserstein: f64,
}

pub fn cmd_sweep_temperature(cfg: &RunConfig, predictions: &[PathBuf]) -> Result<PathBuf> {
    with_run("sweep-temperature", cfg, |run| {
        let ds = load_dataset(cfg, Some(run))?;
        let records = read_prediction_files(predictions, Some(run))?;
        let ts = cfg.temperatures();
        let mut rows = Vec::new();
        run.stage("sweep", |_| {
            for ((mode, model), members) in calibration_groups(&ds, &records)? {
                let cells: Vec<CalibrationCell> = members.into_iter().map(|(c, _)| c).collect();
                for p in temperature_sweep(&cells, &ts)? {
                    rows.push(TemperatureRow {
                        mode: mode.clone(),
                        model: model.clone(),
                        temperature: p.temperature,
                        method: match p.method {
                            ScalingMethod::Plain => "plain".into(),
                            ScalingMethod::Tilted => "tilted".into(),
                        },
                        mae: p.mae,
                        wasserstein: p.wasserstein,
                    });
                }
            }
            Ok(())
        })?;
        run.write(TEMPERATURE_SWEEP, &csv_bytes(&rows)?)?;
        println!("{} temperature points", rows.len());
        Ok(())
    })
}

pub(crate) fn write_table<T: Serialize>(run: &mut RunDir, rel: &str, rows: &[T]) -> Result<PathBuf> {
    run.write(rel, &csv_bytes(rows)?)
}
