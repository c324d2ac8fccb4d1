//! Persona construction from individual survey answers, and seeded
//! population sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{line_col, QuestionSpec, Respondent, SurveyDataset};

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("cannot read descriptor catalog {path}: {message}")]
    Read { path: String, message: String },
    #[error("descriptor catalog {path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("descriptor for ({question_id}, {option}) is invalid: {reason}")]
    BadDescriptor {
        question_id: String,
        option: i64,
        reason: String,
    },
    #[error("descriptor catalog lacks entries: {}", missing.join(", "))]
    MissingDescriptors { missing: Vec<String> },
    #[error("respondent {0} answered none of the persona items")]
    EmptyPersona(String),
    #[error("country {0} has no eligible respondents")]
    NoEligibleRespondents(String),
    #[error("unknown persona item {0}")]
    UnknownItem(String),
    #[error("item {0} is not part of the population's item list")]
    NotASubset(String),
    #[error("unknown persona mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaMode {
    Value,
    Sociodemographic,
    Fewshot,
}

impl FromStr for PersonaMode {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "value" => Ok(Self::Value),
            "sociodemographic" => Ok(Self::Sociodemographic),
            "fewshot" => Ok(Self::Fewshot),
            other => Err(PersonaError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for PersonaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Value => "value",
            Self::Sociodemographic => "sociodemographic",
            Self::Fewshot => "fewshot",
        })
    }
}

/// Natural-language descriptors keyed by (question id, option).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorCatalog {
    pub entries: BTreeMap<(String, i64), String>,
    pub provenance: String,
}

#[derive(Deserialize, Serialize)]
struct CatalogFile {
    #[serde(default)]
    provenance: String,
    descriptors: BTreeMap<String, BTreeMap<String, String>>,
}

/// Leading-"You" check after trimming whitespace and opening quotes.
fn starts_with_you(text: &str) -> bool {
    text.trim_start_matches(|c: char| c.is_whitespace() || "\"'“‘".contains(c))
        .starts_with("You")
}

impl DescriptorCatalog {
    /// Parses the TOML catalog format:
    ///
    /// ```toml
    /// provenance = "hand-written, modular prompt variant"
    /// [descriptors.Q6]
    /// 1 = "You consider religion very important in your life."
    /// ```
    pub fn from_toml(text: &str, path: &str) -> Result<Self, PersonaError> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            PersonaError::Parse {
                path: path.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let mut entries = BTreeMap::new();
        for (qid, options) in file.descriptors {
            for (key, descriptor) in options {
                let option: i64 = key.trim().parse().map_err(|_| PersonaError::BadDescriptor {
                    question_id: qid.clone(),
                    option: i64::MIN,
                    reason: format!("option key {key:?} is not an integer"),
                })?;
                entries.insert((qid.clone(), option), descriptor);
            }
        }
        let catalog = Self {
            entries,
            provenance: file.provenance,
        };
        catalog.validate_text()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, PersonaError> {
        let text = std::fs::read_to_string(path).map_err(|e| PersonaError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        let mut descriptors: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for ((qid, option), text) in &self.entries {
            descriptors
                .entry(qid.clone())
                .or_default()
                .insert(option.to_string(), text.clone());
        }
        toml::to_string(&CatalogFile {
            provenance: self.provenance.clone(),
            descriptors,
        })
        .expect("catalog serializes")
    }

    pub fn insert(&mut self, question_id: &str, option: i64, text: &str) {
        self.entries
            .insert((question_id.to_string(), option), text.to_string());
    }

    pub fn get(&self, question_id: &str, option: i64) -> Option<&str> {
        self.entries
            .get(&(question_id.to_string(), option))
            .map(String::as_str)
    }

    fn validate_text(&self) -> Result<(), PersonaError> {
        for ((qid, option), text) in &self.entries {
            let reason = if text.trim().is_empty() {
                "empty text"
            } else if !starts_with_you(text) {
                "must begin with \"You\""
            } else {
                continue;
            };
            return Err(PersonaError::BadDescriptor {
                question_id: qid.clone(),
                option: *option,
                reason: reason.to_string(),
            });
        }
        Ok(())
    }

    /// Every admissible option of every item needs a descriptor.
    pub fn check_coverage(&self, questions: &[QuestionSpec], items: &[String]) -> Result<(), PersonaError> {
        let mut missing = Vec::new();
        for item in items {
            let q = questions
                .iter()
                .find(|q| &q.id == item)
                .ok_or_else(|| PersonaError::UnknownItem(item.clone()))?;
            for option in q.options() {
                if self.get(item, option).is_none() {
                    missing.push(format!("{item}={option}"));
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PersonaError::MissingDescriptors { missing })
        }
    }
}

/// How a sociodemographic attribute column becomes a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTemplate {
    pub column: String,
    /// Must contain `{value}`.
    pub template: String,
}

impl AttributeTemplate {
    pub fn new(column: &str, template: &str) -> Self {
        Self {
            column: column.to_string(),
            template: template.to_string(),
        }
    }

    pub fn defaults() -> Vec<Self> {
        vec![
            Self::new("age", "You are {value} years old."),
            Self::new("gender", "You are {value}."),
            Self::new("education", "Your highest completed level of education is {value}."),
        ]
    }
}

/// One answered persona item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaItem {
    pub question_id: String,
    pub answer: i64,
    /// Answer position mapped to `[0, 1]` on its scale.
    pub position: f64,
    /// Descriptor (value mode) or `Q: .. A: ..` line (fewshot mode).
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub mode: PersonaMode,
    pub items: Vec<PersonaItem>,
    pub attributes: Vec<String>,
    pub source_respondent: Option<String>,
    pub nationality: Option<String>,
}

impl Persona {
    /// A persona with nothing to say; prompts treat it as the country baseline.
    pub fn empty(mode: PersonaMode) -> Self {
        Self {
            mode,
            items: Vec::new(),
            attributes: Vec::new(),
            source_respondent: None,
            nationality: None,
        }
    }

    /// Descriptor lines shown to the model (excluding nationality).
    pub fn descriptors(&self) -> Vec<&str> {
        match self.mode {
            PersonaMode::Value | PersonaMode::Fewshot => {
                self.items.iter().map(|i| i.text.as_str()).collect()
            }
            PersonaMode::Sociodemographic => self.attributes.iter().map(String::as_str).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors().is_empty()
    }

    /// The persona block, one sentence per line; nationality first.
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        let nationality;
        if let Some(country) = &self.nationality {
            nationality = format!("You are from {country}.");
            lines.push(nationality.as_str());
        }
        lines.extend(self.descriptors());
        lines.join("\n")
    }

    /// Answers the model can see, keyed by question id.
    pub fn visible_profile(&self) -> BTreeMap<String, (i64, f64)> {
        match self.mode {
            PersonaMode::Sociodemographic => BTreeMap::new(),
            _ => self
                .items
                .iter()
                .map(|i| (i.question_id.clone(), (i.answer, i.position)))
                .collect(),
        }
    }
}

/// Settings shared by every persona in a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSettings {
    pub items: Vec<String>,
    pub mode: PersonaMode,
    pub include_nationality: bool,
    #[serde(default = "AttributeTemplate::defaults")]
    pub attributes: Vec<AttributeTemplate>,
}

impl PersonaSettings {
    pub fn value(items: &[&str]) -> Self {
        Self {
            items: items.iter().map(|s| s.to_string()).collect(),
            mode: PersonaMode::Value,
            include_nationality: false,
            attributes: AttributeTemplate::defaults(),
        }
    }
}

fn find_question<'a>(questions: &'a [QuestionSpec], id: &str) -> Result<&'a QuestionSpec, PersonaError> {
    questions
        .iter()
        .find(|q| q.id == id)
        .ok_or_else(|| PersonaError::UnknownItem(id.to_string()))
}

/// Builds one persona from a respondent's answers. Unanswered items are skipped.
pub fn build_persona(
    resp: &Respondent,
    questions: &[QuestionSpec],
    catalog: &DescriptorCatalog,
    settings: &PersonaSettings,
) -> Result<Persona, PersonaError> {
    let mut items = Vec::new();
    let mut attributes = Vec::new();
    match settings.mode {
        PersonaMode::Value | PersonaMode::Fewshot => {
            for item in &settings.items {
                let q = find_question(questions, item)?;
                let Some(answer) = resp.answer(item) else {
                    continue;
                };
                let text = if settings.mode == PersonaMode::Value {
                    catalog
                        .get(item, answer)
                        .ok_or_else(|| PersonaError::MissingDescriptors {
                            missing: vec![format!("{item}={answer}")],
                        })?
                        .to_string()
                } else {
                    format!("Q: {} A: {}", q.text, answer)
                };
                items.push(PersonaItem {
                    question_id: item.clone(),
                    answer,
                    position: q.position(answer),
                    text,
                });
            }
        }
        PersonaMode::Sociodemographic => {
            for attr in &settings.attributes {
                if let Some(value) = resp.attributes.get(&attr.column) {
                    attributes.push(attr.template.replace("{value}", value));
                }
            }
        }
    }
    if items.is_empty() && attributes.is_empty() && !(settings.mode == PersonaMode::Sociodemographic && settings.include_nationality) {
        return Err(PersonaError::EmptyPersona(resp.id.clone()));
    }
    Ok(Persona {
        mode: settings.mode,
        items,
        attributes,
        source_respondent: Some(resp.id.clone()),
        nationality: settings.include_nationality.then(|| resp.country.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub personas: Vec<Persona>,
    pub country: String,
    pub seed: u64,
    pub settings: PersonaSettings,
}

impl Population {
    pub fn len(&self) -> usize {
        self.personas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.personas.is_empty()
    }

    /// A single empty persona, used by the generic/country baselines.
    pub fn baseline(country: &str) -> Self {
        Self {
            personas: vec![Persona::empty(PersonaMode::Value)],
            country: country.to_string(),
            seed: 0,
            settings: PersonaSettings {
                items: Vec::new(),
                mode: PersonaMode::Value,
                include_nationality: false,
                attributes: Vec::new(),
            },
        }
    }
}

fn eligible(resp: &Respondent, settings: &PersonaSettings) -> bool {
    match settings.mode {
        PersonaMode::Sociodemographic => {
            settings.include_nationality
                || settings
                    .attributes
                    .iter()
                    .any(|a| resp.attributes.contains_key(&a.column))
        }
        _ => settings.items.iter().any(|i| resp.answer(i).is_some()),
    }
}

/// Samples `n` respondents of `country` uniformly with replacement.
pub fn sample_population(
    ds: &SurveyDataset,
    country: &str,
    catalog: &DescriptorCatalog,
    settings: &PersonaSettings,
    n: usize,
    seed: u64,
) -> Result<Population, PersonaError> {
    for item in &settings.items {
        find_question(&ds.questions, item)?;
    }
    let pool: Vec<&Respondent> = ds
        .respondents_in(country)
        .filter(|r| eligible(r, settings))
        .collect();
    let mut personas = Vec::with_capacity(n);
    if n > 0 {
        if pool.is_empty() {
            return Err(PersonaError::NoEligibleRespondents(country.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let resp = pool[rng.gen_range(0..pool.len())];
            personas.push(build_persona(resp, &ds.questions, catalog, settings)?);
        }
    }
    Ok(Population {
        personas,
        country: country.to_string(),
        seed,
        settings: settings.clone(),
    })
}

/// Restricts every persona to `item_subset`, keeping the same respondents.
pub fn item_subset_population(
    pop: &Population,
    item_subset: &BTreeSet<String>,
) -> Result<Population, PersonaError> {
    if let Some(extra) = item_subset.iter().find(|i| !pop.settings.items.contains(i)) {
        return Err(PersonaError::NotASubset(extra.clone()));
    }
    let personas = pop
        .personas
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.items.retain(|i| item_subset.contains(&i.question_id));
            p
        })
        .collect();
    let mut settings = pop.settings.clone();
    settings.items.retain(|i| item_subset.contains(i));
    Ok(Population {
        personas,
        country: pop.country.clone(),
        seed: pop.seed,
        settings,
    })
}
