//! Per-persona scoring and population aggregation.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{to_distribution, BackendError, ScoreRequest, Scorer};
use crate::dataset::{human_distribution, DatasetError, QuestionSpec, SurveyDataset};
use crate::distribution::ResponseDistribution;
use crate::evaluate::{mae, EvalError};
use crate::persona::{sample_population, DescriptorCatalog, Persona, PersonaError, PersonaMode, PersonaSettings, Population};
use crate::prompt::{render_prompt, GuidanceTemplate, PromptError, PromptMode};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("population for {0} is empty")]
    EmptyPopulation(String),
    #[error("persona {index} on question {question_id}: {source}")]
    Backend {
        index: usize,
        question_id: String,
        #[source]
        source: BackendError,
    },
    #[error("persona {index}: {source}")]
    Prompt {
        index: usize,
        #[source]
        source: PromptError,
    },
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sample sizes must be positive and ascending")]
    BadSampleSizes,
    #[error("aggregate for {0} is not a distribution: {1}")]
    Aggregate(String, String),
    #[error("prediction dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

/// `Σ r_k p_k`.
pub fn expected_response(d: &ResponseDistribution) -> f64 {
    d.mean()
}

/// Population-level prediction for one (country, question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPrediction {
    pub question_id: String,
    pub country: String,
    pub per_persona: Vec<ResponseDistribution>,
    pub aggregate: ResponseDistribution,
    pub expected_response: f64,
}

/// Everything besides the population needed to score a question.
#[derive(Clone, Copy)]
pub struct SimContext<'a> {
    pub guidance: &'a GuidanceTemplate,
    pub mode: PromptMode,
    pub model_id: &'a str,
    pub backend: &'a dyn Scorer,
}

/// Persona construction mode implied by a prompt mode, if it shows personas.
pub fn persona_mode(mode: PromptMode) -> Option<PersonaMode> {
    match mode {
        PromptMode::Value => Some(PersonaMode::Value),
        PromptMode::Fewshot => Some(PersonaMode::Fewshot),
        PromptMode::Sociodemographic => Some(PersonaMode::Sociodemographic),
        PromptMode::Default | PromptMode::Generic | PromptMode::Country => None,
    }
}

/// Samples the population a prompt mode needs: `n` personas for persona
/// modes, a single empty persona for the baselines.
pub fn population_for_mode(
    ds: &SurveyDataset,
    country: &str,
    catalog: &DescriptorCatalog,
    settings: &PersonaSettings,
    mode: PromptMode,
    n: usize,
    seed: u64,
) -> Result<Population, SimulateError> {
    match persona_mode(mode) {
        Some(pm) => {
            let mut settings = settings.clone();
            settings.mode = pm;
            Ok(sample_population(ds, country, catalog, &settings, n, seed)?)
        }
        None => Ok(Population::baseline(country)),
    }
}

/// Elementwise mean of distributions sharing one option grid, summed in order.
pub fn aggregate(per_persona: &[ResponseDistribution]) -> Result<ResponseDistribution, SimulateError> {
    let first = per_persona
        .first()
        .ok_or_else(|| SimulateError::EmptyPopulation(String::new()))?;
    let mut sums = vec![0.0; first.probs.len()];
    for d in per_persona {
        if d.options != first.options {
            return Err(SimulateError::Aggregate(d.question_id.clone(), "option grids differ".into()));
        }
        for (s, p) in sums.iter_mut().zip(&d.probs) {
            *s += p;
        }
    }
    let n = per_persona.len() as f64;
    let probs = sums.into_iter().map(|s| s / n).collect();
    ResponseDistribution::new(first.question_id.clone(), first.options.clone(), probs)
        .map_err(|e| SimulateError::Aggregate(first.question_id.clone(), e.to_string()))
}

/// Scores every persona on `q` and averages their distributions with
/// uniform weights. Any persona failure aborts the question.
pub fn simulate_population(pop: &Population, q: &QuestionSpec, ctx: &SimContext<'_>) -> Result<PopulationPrediction, SimulateError> {
    if pop.is_empty() {
        return Err(SimulateError::EmptyPopulation(pop.country.clone()));
    }
    let country = match ctx.mode {
        PromptMode::Default | PromptMode::Generic => None,
        _ => Some(pop.country.as_str()),
    };
    let per_persona = pop
        .personas
        .par_iter()
        .enumerate()
        .map(|(index, persona)| score_persona(index, persona, q, country, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(&per_persona)?;
    Ok(PopulationPrediction {
        question_id: q.id.clone(),
        country: pop.country.clone(),
        expected_response: expected_response(&aggregate),
        per_persona,
        aggregate,
    })
}

fn score_persona(
    index: usize,
    persona: &Persona,
    q: &QuestionSpec,
    country: Option<&str>,
    ctx: &SimContext<'_>,
) -> Result<ResponseDistribution, SimulateError> {
    let bundle = render_prompt(persona, q, ctx.guidance, ctx.mode, country)
        .map_err(|source| SimulateError::Prompt { index, source })?;
    let req = ScoreRequest::for_bundle(bundle, ctx.model_id);
    let backend_err = |source| SimulateError::Backend {
        index,
        question_id: q.id.clone(),
        source,
    };
    let res = ctx.backend.score(&req).map_err(backend_err)?;
    res.validate(&req).map_err(backend_err)?;
    to_distribution(&res, q).map_err(backend_err)
}

/// Mean MAE of a population over `questions`, against the human data of its country.
pub fn population_mae(
    ds: &SurveyDataset,
    pop: &Population,
    questions: &[QuestionSpec],
    ctx: &SimContext<'_>,
) -> Result<f64, SimulateError> {
    let mut total = 0.0;
    for q in questions {
        let pred = simulate_population(pop, q, ctx)?;
        let human = human_distribution(ds, &q.id, &pop.country)?;
        total += mae(pred.expected_response, human.mean(), q)?;
    }
    Ok(total / questions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub mae: f64,
}

/// Spread of MAE across repeats at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBand {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl SweepBand {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub bands: Vec<SweepBand>,
}

/// Population inputs shared by every sweep cell.
#[derive(Clone, Copy)]
pub struct PopulationSource<'a> {
    pub ds: &'a SurveyDataset,
    pub catalog: &'a DescriptorCatalog,
    pub settings: &'a PersonaSettings,
}

/// MAE as a function of population size. Repeat `i` samples with seed
/// `base_seed + i` at every `n`.
pub fn sweep_sample_size(
    src: PopulationSource<'_>,
    country: &str,
    questions: &[QuestionSpec],
    ns: &[usize],
    repeats: usize,
    base_seed: u64,
    ctx: &SimContext<'_>,
) -> Result<SweepTable, SimulateError> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimulateError::BadSampleSizes);
    }
    let mut table = SweepTable::default();
    for &n in ns {
        let mut maes = Vec::with_capacity(repeats);
        for repeat in 0..repeats {
            let seed = base_seed.wrapping_add(repeat as u64);
            let pop = population_for_mode(src.ds, country, src.catalog, src.settings, ctx.mode, n, seed)?;
            let value = population_mae(src.ds, &pop, questions, ctx)?;
            maes.push(value);
            table.rows.push(SweepRow { n, repeat, seed, mae: value });
        }
        if !maes.is_empty() {
            table.bands.push(SweepBand {
                n,
                min: maes.iter().copied().fold(f64::INFINITY, f64::min),
                max: maes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: maes.iter().sum::<f64>() / maes.len() as f64,
            });
        }
    }
    Ok(table)
}

/// SHA-256 over the rendered persona blocks, in population order.
pub fn persona_digest(pop: &Population) -> String {
    let mut h = Sha256::new();
    for p in &pop.personas {
        let text = p.render();
        h.update((text.len() as u64).to_le_bytes());
        h.update(text.as_bytes());
    }
    hex::encode(h.finalize())
}

/// One line of the prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub country: String,
    pub question_id: String,
    pub mode: String,
    pub model: String,
    pub n: usize,
    pub options: Vec<i64>,
    pub aggregate: Vec<f64>,
    pub expected_response: f64,
    pub per_persona: Vec<Vec<f64>>,
    pub persona_digest: String,
}

impl PredictionRecord {
    pub fn new(pred: &PopulationPrediction, pop: &Population, mode: PromptMode, model: &str) -> Self {
        Self {
            country: pred.country.clone(),
            question_id: pred.question_id.clone(),
            mode: mode.to_string(),
            model: model.to_string(),
            n: pred.per_persona.len(),
            options: pred.aggregate.options.clone(),
            aggregate: pred.aggregate.probs.clone(),
            expected_response: pred.expected_response,
            per_persona: pred.per_persona.iter().map(|d| d.probs.clone()).collect(),
            persona_digest: persona_digest(pop),
        }
    }

    pub fn aggregate_distribution(&self) -> Result<ResponseDistribution, SimulateError> {
        ResponseDistribution::new(self.question_id.clone(), self.options.clone(), self.aggregate.clone())
            .map_err(|e| SimulateError::Aggregate(self.question_id.clone(), e.to_string()))
    }
}

/// Writes records as JSON Lines.
pub fn write_predictions(records: &[PredictionRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions(input: impl BufRead) -> Result<Vec<PredictionRecord>, SimulateError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let dump_err = |message: String| SimulateError::Dump { line: i + 1, message };
        let line = line.map_err(|e| dump_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| dump_err(e.to_string()))?);
    }
    Ok(records)
}
