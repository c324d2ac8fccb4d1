//! Prompt rendering for every prompting mode.
//!
//! A prompt is a system message (guidance, optionally followed by a persona
//! block) and a user message (the question, its scale, and the answer
//! instruction line).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QuestionSpec;
use crate::persona::Persona;

pub const DEFAULT_SYSTEM: &str = "You are a helpful assistant.";

/// Country-free guidance for the generic baseline.
pub const GENERIC_GUIDANCE: &str = "You are participating in a social science simulation. You will be given a survey question and must answer it as a typical human respondent would.";

pub const DEFAULT_GUIDANCE_KEY: &str = "social_science";

const BUILTIN_GUIDANCE: &str = include_str!("../data/guidance.toml");

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("guidance template {0} references {{country}} but no country was given")]
    MissingCountry(String),
    #[error("unresolved placeholder {token} in guidance template {key}")]
    UnresolvedPlaceholder { key: String, token: String },
    #[error("unknown guidance template {0}")]
    UnknownTemplate(String),
    #[error("guidance file: {0}")]
    Parse(String),
    #[error("guidance template {0} has an empty body")]
    EmptyBody(String),
    #[error("unknown prompt mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Default,
    Generic,
    Country,
    Sociodemographic,
    Value,
    Fewshot,
}

impl PromptMode {
    pub const ALL: [PromptMode; 6] = [
        Self::Default,
        Self::Generic,
        Self::Country,
        Self::Sociodemographic,
        Self::Value,
        Self::Fewshot,
    ];

    /// Modes whose prompts carry a persona block.
    pub fn uses_persona(self) -> bool {
        matches!(self, Self::Sociodemographic | Self::Value | Self::Fewshot)
    }
}

impl FromStr for PromptMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| PromptError::UnknownMode(s.to_string()))
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Default => "default",
            Self::Generic => "generic",
            Self::Country => "country",
            Self::Sociodemographic => "sociodemographic",
            Self::Value => "value",
            Self::Fewshot => "fewshot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTemplate {
    pub key: String,
    pub body: String,
}

impl GuidanceTemplate {
    pub fn references_country(&self) -> bool {
        self.body.contains("{country}")
    }

    /// Substitutes `{country}` and rejects any leftover `{...}` token.
    pub fn render(&self, country: Option<&str>) -> Result<String, PromptError> {
        let text = match (self.references_country(), country) {
            (false, _) => self.body.clone(),
            (true, Some(c)) => self.body.replace("{country}", c),
            (true, None) => return Err(PromptError::MissingCountry(self.key.clone())),
        };
        if let Some(token) = unresolved_token(&text) {
            return Err(PromptError::UnresolvedPlaceholder {
                key: self.key.clone(),
                token,
            });
        }
        Ok(text)
    }
}

fn unresolved_token(text: &str) -> Option<String> {
    let start = text.find('{')?;
    let end = text[start..].find('}')?;
    Some(text[start..start + end + 1].to_string())
}

#[derive(Deserialize)]
struct GuidanceFile {
    template: Vec<GuidanceTemplate>,
}

/// An ordered, keyed set of guidance templates.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSet {
    templates: Vec<GuidanceTemplate>,
}

impl GuidanceSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_GUIDANCE).expect("builtin guidance parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let file: GuidanceFile =
            toml::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        for t in &file.template {
            if t.body.trim().is_empty() {
                return Err(PromptError::EmptyBody(t.key.clone()));
            }
        }
        Ok(Self {
            templates: file.template,
        })
    }

    pub fn get(&self, key: &str) -> Result<&GuidanceTemplate, PromptError> {
        self.templates
            .iter()
            .find(|t| t.key == key)
            .ok_or_else(|| PromptError::UnknownTemplate(key.to_string()))
    }

    pub fn templates(&self) -> &[GuidanceTemplate] {
        &self.templates
    }
}

/// Structured persona data riding alongside the rendered text. Scoring
/// backends other than the mock ignore it, and it is not part of cache keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaFacts {
    /// Country named in the prompt, if any.
    pub country: Option<String>,
    /// Visible answers: question id -> (answer, position in [0, 1]).
    pub profile: BTreeMap<String, (i64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub question_id: String,
    pub admissible_options: Vec<i64>,
    #[serde(default)]
    pub facts: PersonaFacts,
}

/// `Question:\n{text}\n\nScale: 1=Label, 2=Label, ...`
pub fn render_question(q: &QuestionSpec) -> String {
    let scale: Vec<String> = q
        .options()
        .into_iter()
        .map(|k| match q.labels.get(&k) {
            Some(label) => format!("{k}={label}"),
            None => format!("{k}={k}"),
        })
        .collect();
    format!("Question:\n{}\n\nScale: {}", q.text, scale.join(", "))
}

pub fn answer_instruction(q: &QuestionSpec) -> String {
    format!(
        "Respond with ONLY the single integer ({}-{}):",
        q.scale_min, q.scale_max
    )
}

pub fn render_prompt(
    persona: &Persona,
    q: &QuestionSpec,
    guidance: &GuidanceTemplate,
    mode: PromptMode,
    country: Option<&str>,
) -> Result<PromptBundle, PromptError> {
    let mut facts = PersonaFacts::default();
    let show_persona = mode.uses_persona() && !persona.is_empty();
    let system_text = match mode {
        PromptMode::Default => DEFAULT_SYSTEM.to_string(),
        PromptMode::Generic => GENERIC_GUIDANCE.to_string(),
        _ => {
            let mut text = guidance.render(country)?;
            if guidance.references_country() {
                facts.country = country.map(String::from);
            }
            if show_persona {
                text.push_str("\n\nYour persona: ");
                text.push_str(&persona.render());
                if persona.nationality.is_some() {
                    facts.country = persona.nationality.clone();
                }
                facts.profile = persona.visible_profile();
            }
            text
        }
    };
    let user_text = format!("{}\n\n{}", render_question(q), answer_instruction(q));
    Ok(PromptBundle {
        system_text,
        user_text,
        question_id: q.id.clone(),
        admissible_options: q.options(),
        facts,
    })
}
