//! Survey data ingestion: question catalogs, respondent tables and the
//! per-country human response distributions used as ground truth.
//!
//! The question catalog is TOML with one `[[question]]` table per item:
//!
//! ```toml
//! [[question]]
//! id = "Q6"
//! text = "How important is Religion in your life?"
//! scale_min = 1
//! scale_max = 4
//! labels = ["Very important", "Rather important", "Not very important", "Not at all important"]
//! battery = "importance"
//! ```
//!
//! Items labelled only at their endpoints use `anchor_labels = [low, high]`
//! instead of `labels`.
//!
//! The respondent table is CSV. Column 1 is the respondent id, column 2 the
//! country code, and the rest are question ids (or declared attribute
//! columns). Empty cells and negative codes are missing answers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::ResponseDistribution;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid question {id}: {reason}")]
    InvalidQuestion { id: String, reason: String },
    #[error("duplicate question id {0}")]
    DuplicateQuestion(String),
    #[error("unknown column {0} (neither a catalog question nor a declared attribute)")]
    UnknownColumn(String),
    #[error("answers outside the question scale for respondents: {}", respondents.join(", "))]
    OutOfRange { respondents: Vec<String> },
    #[error("unknown country code {0}")]
    UnknownCountry(String),
    #[error("unknown question id {0}")]
    UnknownQuestion(String),
    #[error("no country given")]
    NoCountries,
    #[error("missing-fraction threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("question {question_id} has no valid answers in {country}")]
    EmptyDistribution { question_id: String, country: String },
}

/// One ordinal survey item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: String,
    pub text: String,
    pub scale_min: i64,
    pub scale_max: i64,
    /// Option labels; empty, complete, or endpoint anchors only.
    pub labels: BTreeMap<i64, String>,
    pub battery: Option<String>,
}

impl QuestionSpec {
    pub fn new(id: &str, text: &str, scale_min: i64, scale_max: i64, labels: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            text: text.to_string(),
            scale_min,
            scale_max,
            labels: (scale_min..)
                .zip(labels.iter().map(|s| s.to_string()))
                .collect(),
            battery: None,
        }
    }

    pub fn options(&self) -> Vec<i64> {
        (self.scale_min..=self.scale_max).collect()
    }

    pub fn n_options(&self) -> usize {
        (self.scale_max - self.scale_min + 1) as usize
    }

    pub fn range(&self) -> f64 {
        (self.scale_max - self.scale_min) as f64
    }

    pub fn midpoint(&self) -> f64 {
        (self.scale_min + self.scale_max) as f64 / 2.0
    }

    pub fn contains(&self, value: i64) -> bool {
        (self.scale_min..=self.scale_max).contains(&value)
    }

    /// Position of `value` on the scale, mapped to `[0, 1]`.
    pub fn position(&self, value: i64) -> f64 {
        (value - self.scale_min) as f64 / self.range()
    }

    pub fn has_anchor_labels_only(&self) -> bool {
        self.n_options() > 2
            && self.labels.len() == 2
            && self.labels.contains_key(&self.scale_min)
            && self.labels.contains_key(&self.scale_max)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidQuestion {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id"));
        }
        if self.scale_min >= self.scale_max {
            return Err(invalid("scale_min must be below scale_max"));
        }
        if self.labels.keys().any(|&k| !self.contains(k)) {
            return Err(invalid("label for an option outside the scale"));
        }
        let complete = self.labels.len() == self.n_options();
        if !(self.labels.is_empty() || complete || self.has_anchor_labels_only()) {
            return Err(invalid(
                "labels must cover every option, only the two endpoints, or nothing",
            ));
        }
        Ok(())
    }
}

/// One survey respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub country: String,
    /// Every catalog question has an entry; `None` marks a missing answer.
    pub answers: BTreeMap<String, Option<i64>>,
    /// Extra non-question columns (sociodemographic attributes).
    pub attributes: BTreeMap<String, String>,
}

impl Respondent {
    pub fn answer(&self, question_id: &str) -> Option<i64> {
        self.answers.get(question_id).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub questions: Vec<QuestionSpec>,
    pub respondents: Vec<Respondent>,
    pub attribute_columns: Vec<String>,
}

/// Tally of one question's answers within one country.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanDistribution {
    pub question_id: String,
    pub country: String,
    pub scale_min: i64,
    pub scale_max: i64,
    pub counts: BTreeMap<i64, u64>,
    pub n_valid: u64,
    pub n_missing: u64,
}

impl HumanDistribution {
    /// Empirical probability of every scale option.
    pub fn probs(&self) -> Vec<f64> {
        let n = self.n_valid as f64;
        (self.scale_min..=self.scale_max)
            .map(|o| self.counts.get(&o).copied().unwrap_or(0) as f64 / n)
            .collect()
    }

    pub fn to_distribution(&self) -> ResponseDistribution {
        ResponseDistribution {
            question_id: self.question_id.clone(),
            options: (self.scale_min..=self.scale_max).collect(),
            probs: self.probs(),
        }
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self
            .counts
            .iter()
            .map(|(&o, &c)| o as f64 * c as f64)
            .sum();
        total / self.n_valid as f64
    }

    pub fn missing_fraction(&self) -> f64 {
        let n = self.n_valid + self.n_missing;
        if n == 0 {
            return 0.0;
        }
        self.n_missing as f64 / n as f64
    }
}

#[derive(Deserialize, Serialize)]
struct CatalogFile {
    question: Vec<CatalogEntry>,
}

#[derive(Deserialize, Serialize)]
struct CatalogEntry {
    id: String,
    text: String,
    scale_min: i64,
    scale_max: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_labels: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    battery: Option<String>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Converts a byte offset into 1-based (line, column).
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses a question catalog from TOML text.
pub fn parse_catalog(text: &str, path: &Path) -> Result<Vec<QuestionSpec>, DatasetError> {
    let file: CatalogFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        DatasetError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut seen = BTreeSet::new();
    let mut questions = Vec::with_capacity(file.question.len());
    for entry in file.question {
        if !seen.insert(entry.id.clone()) {
            return Err(DatasetError::DuplicateQuestion(entry.id));
        }
        let mut labels: BTreeMap<i64, String> =
            (entry.scale_min..).zip(entry.labels.iter().cloned()).collect();
        if entry.labels.len() as i64 > entry.scale_max - entry.scale_min + 1 {
            return Err(DatasetError::InvalidQuestion {
                id: entry.id,
                reason: "more labels than scale options".into(),
            });
        }
        if let Some([low, high]) = entry.anchor_labels {
            if !labels.is_empty() {
                return Err(DatasetError::InvalidQuestion {
                    id: entry.id,
                    reason: "both labels and anchor_labels given".into(),
                });
            }
            labels.insert(entry.scale_min, low);
            labels.insert(entry.scale_max, high);
        }
        let q = QuestionSpec {
            id: entry.id,
            text: entry.text,
            scale_min: entry.scale_min,
            scale_max: entry.scale_max,
            labels,
            battery: entry.battery,
        };
        q.validate()?;
        questions.push(q);
    }
    Ok(questions)
}

/// Parses a respondent table from CSV text against a validated catalog.
pub fn parse_respondents(
    text: &str,
    path: &Path,
    questions: &[QuestionSpec],
    attribute_columns: &[String],
) -> Result<Vec<Respondent>, DatasetError> {
    let parse_err = |line: usize, column: usize, message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(r) => r.map_err(|e| csv_error(path, e))?,
    };
    if header.len() < 2 {
        return Err(parse_err(1, 1, "header needs id and country columns".into()));
    }
    let by_id: BTreeMap<&str, &QuestionSpec> =
        questions.iter().map(|q| (q.id.as_str(), q)).collect();

    enum Column<'a> {
        Question(&'a QuestionSpec),
        Attribute(String),
    }
    let mut columns = Vec::new();
    for name in header.iter().skip(2) {
        let name = name.trim();
        if let Some(q) = by_id.get(name) {
            columns.push(Column::Question(q));
        } else if attribute_columns.iter().any(|a| a == name) {
            columns.push(Column::Attribute(name.to_string()));
        } else {
            return Err(DatasetError::UnknownColumn(name.to_string()));
        }
    }

    let mut respondents = Vec::new();
    let mut out_of_range = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record[0].trim().to_string();
        let country = record[1].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, 1, "empty respondent id".into()));
        }
        if country.is_empty() {
            return Err(parse_err(line, 2, "empty country code".into()));
        }
        let mut answers: BTreeMap<String, Option<i64>> =
            questions.iter().map(|q| (q.id.clone(), None)).collect();
        let mut attributes = BTreeMap::new();
        let mut bad = false;
        for (i, column) in columns.iter().enumerate() {
            let cell = record[i + 2].trim();
            match column {
                Column::Attribute(name) => {
                    if !cell.is_empty() {
                        attributes.insert(name.clone(), cell.to_string());
                    }
                }
                Column::Question(q) => {
                    if cell.is_empty() {
                        continue;
                    }
                    let value: i64 = cell.parse().map_err(|_| {
                        parse_err(line, i + 3, format!("expected an integer answer, found {cell:?}"))
                    })?;
                    if value < 0 {
                        continue;
                    }
                    if !q.contains(value) {
                        bad = true;
                    }
                    answers.insert(q.id.clone(), Some(value));
                }
            }
        }
        if bad {
            out_of_range.push(id.clone());
        }
        respondents.push(Respondent {
            id,
            country,
            answers,
            attributes,
        });
    }
    if !out_of_range.is_empty() {
        return Err(DatasetError::OutOfRange {
            respondents: out_of_range,
        });
    }
    Ok(respondents)
}

fn csv_error(path: &Path, e: csv::Error) -> DatasetError {
    let (line, column) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (0, 0),
    };
    DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: e.to_string(),
    }
}

/// Loads and validates a dataset with no attribute columns.
pub fn load_dataset(
    question_catalog_path: &Path,
    respondent_table_path: &Path,
) -> Result<SurveyDataset, DatasetError> {
    load_dataset_with_attributes(question_catalog_path, respondent_table_path, &[])
}

pub fn load_dataset_with_attributes(
    question_catalog_path: &Path,
    respondent_table_path: &Path,
    attribute_columns: &[String],
) -> Result<SurveyDataset, DatasetError> {
    let questions = parse_catalog(&read(question_catalog_path)?, question_catalog_path)?;
    let respondents = parse_respondents(
        &read(respondent_table_path)?,
        respondent_table_path,
        &questions,
        attribute_columns,
    )?;
    Ok(SurveyDataset {
        questions,
        respondents,
        attribute_columns: attribute_columns.to_vec(),
    })
}

impl SurveyDataset {
    pub fn question(&self, id: &str) -> Result<&QuestionSpec, DatasetError> {
        self.questions
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| DatasetError::UnknownQuestion(id.to_string()))
    }

    /// Country codes present in the data, sorted.
    pub fn countries(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.respondents.iter().map(|r| r.country.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn respondents_in<'a>(&'a self, country: &'a str) -> impl Iterator<Item = &'a Respondent> + 'a {
        self.respondents.iter().filter(move |r| r.country == country)
    }

    fn require_country(&self, country: &str) -> Result<(), DatasetError> {
        if self.respondents.iter().any(|r| r.country == country) {
            Ok(())
        } else {
            Err(DatasetError::UnknownCountry(country.to_string()))
        }
    }

    /// Serializes the catalog back to TOML.
    pub fn catalog_to_toml(&self) -> String {
        let question = self
            .questions
            .iter()
            .map(|q| {
                let anchors = q.has_anchor_labels_only();
                CatalogEntry {
                    id: q.id.clone(),
                    text: q.text.clone(),
                    scale_min: q.scale_min,
                    scale_max: q.scale_max,
                    labels: if anchors {
                        Vec::new()
                    } else {
                        q.labels.values().cloned().collect()
                    },
                    anchor_labels: anchors
                        .then(|| [q.labels[&q.scale_min].clone(), q.labels[&q.scale_max].clone()]),
                    battery: q.battery.clone(),
                }
            })
            .collect();
        toml::to_string(&CatalogFile { question }).expect("catalog serializes")
    }

    /// Serializes respondents back to CSV, questions in catalog order followed
    /// by attribute columns.
    pub fn respondents_to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "country".to_string()];
        header.extend(self.questions.iter().map(|q| q.id.clone()));
        header.extend(self.attribute_columns.iter().cloned());
        writer.write_record(&header).expect("in-memory write");
        for r in &self.respondents {
            let mut row = vec![r.id.clone(), r.country.clone()];
            row.extend(
                self.questions
                    .iter()
                    .map(|q| r.answer(&q.id).map(|v| v.to_string()).unwrap_or_default()),
            );
            row.extend(
                self.attribute_columns
                    .iter()
                    .map(|a| r.attributes.get(a).cloned().unwrap_or_default()),
            );
            writer.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Question ids whose missing fraction is below `max_missing_fraction` in
/// every listed country. A threshold of 1 or more keeps everything.
pub fn filter_questions(
    ds: &SurveyDataset,
    countries: &[String],
    max_missing_fraction: f64,
) -> Result<Vec<String>, DatasetError> {
    if countries.is_empty() {
        return Err(DatasetError::NoCountries);
    }
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(DatasetError::BadThreshold(max_missing_fraction));
    }
    for c in countries {
        ds.require_country(c)?;
    }
    if max_missing_fraction >= 1.0 {
        return Ok(ds.questions.iter().map(|q| q.id.clone()).collect());
    }
    let kept = ds
        .questions
        .iter()
        .filter(|q| {
            countries.iter().all(|c| {
                let (mut missing, mut total) = (0usize, 0usize);
                for r in ds.respondents_in(c) {
                    total += 1;
                    if r.answer(&q.id).is_none() {
                        missing += 1;
                    }
                }
                (missing as f64 / total as f64) < max_missing_fraction
            })
        })
        .map(|q| q.id.clone())
        .collect();
    Ok(kept)
}

pub fn human_distribution(
    ds: &SurveyDataset,
    question_id: &str,
    country: &str,
) -> Result<HumanDistribution, DatasetError> {
    let q = ds.question(question_id)?;
    ds.require_country(country)?;
    let mut counts = BTreeMap::new();
    let (mut n_valid, mut n_missing) = (0u64, 0u64);
    for r in ds.respondents_in(country) {
        match r.answer(question_id) {
            Some(v) => {
                *counts.entry(v).or_insert(0u64) += 1;
                n_valid += 1;
            }
            None => n_missing += 1,
        }
    }
    if n_valid == 0 {
        return Err(DatasetError::EmptyDistribution {
            question_id: question_id.to_string(),
            country: country.to_string(),
        });
    }
    Ok(HumanDistribution {
        question_id: question_id.to_string(),
        country: country.to_string(),
        scale_min: q.scale_min,
        scale_max: q.scale_max,
        counts,
        n_valid,
        n_missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const CATALOG: &str = r#"
[[question]]
id = "Q1"
text = "How important is Family in your life?"
scale_min = 1
scale_max = 4
labels = ["Very important", "Rather important", "Not very important", "Not at all important"]
battery = "importance"

[[question]]
id = "Q48"
text = "How much freedom of choice and control do you feel you have over the way your life turns out?"
scale_min = 1
scale_max = 10
anchor_labels = ["No choice at all", "A great deal of choice"]
"#;

    fn catalog() -> Vec<QuestionSpec> {
        parse_catalog(CATALOG, Path::new("catalog.toml")).unwrap()
    }

    fn dataset(table: &str) -> Result<SurveyDataset, DatasetError> {
        let questions = catalog();
        let respondents = parse_respondents(table, Path::new("t.csv"), &questions, &[])?;
        Ok(SurveyDataset {
            questions,
            respondents,
            attribute_columns: vec![],
        })
    }

    #[test]
    fn catalog_family_item() {
        let qs = catalog();
        assert_eq!(qs[0].id, "Q1");
        assert_eq!((qs[0].scale_min, qs[0].scale_max), (1, 4));
        assert_eq!(qs[0].labels[&1], "Very important");
        assert!(qs[1].has_anchor_labels_only());
    }

    #[test]
    fn empty_table_is_valid() {
        let ds = dataset("").unwrap();
        assert!(ds.respondents.is_empty());
        let ds = dataset("id,country,Q1,Q48\n").unwrap();
        assert!(ds.respondents.is_empty());
    }

    #[test]
    fn out_of_range_answer_is_reported() {
        let err = dataset("id,country,Q1\nr1,GH,5\nr2,GH,1\nr3,GH,0\n").unwrap_err();
        match err {
            DatasetError::OutOfRange { respondents } => assert_eq!(respondents, vec!["r1", "r3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_cell_has_position() {
        let err = dataset("id,country,Q1,Q48\nr1,GH,1,2\nr2,GH,x,3\n").unwrap_err();
        match err {
            DatasetError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_catalog_has_position() {
        let err = parse_catalog("[[question]]\nid = \"Q1\"\nscale_min = \"one\"\n", Path::new("c"))
            .unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_rejected() {
        assert!(matches!(
            dataset("id,country,Q999\nr1,GH,1\n"),
            Err(DatasetError::UnknownColumn(c)) if c == "Q999"
        ));
    }

    #[test]
    fn negative_and_empty_are_missing() {
        let ds = dataset("id,country,Q1,Q48\nr1,GH,1,\nr2,GH,1,-2\nr3,GH,4,-1\nr4,GH,,3\n").unwrap();
        let h = human_distribution(&ds, "Q1", "GH").unwrap();
        assert_eq!(h.counts, BTreeMap::from([(1, 2), (4, 1)]));
        assert_eq!((h.n_valid, h.n_missing), (3, 1));
        let h48 = human_distribution(&ds, "Q48", "GH").unwrap();
        assert_eq!((h48.n_valid, h48.n_missing), (1, 3));
    }

    #[test]
    fn point_mass_tally() {
        let ds = dataset("id,country,Q1\na,GH,2\nb,GH,2\nc,GH,2\n").unwrap();
        let h = human_distribution(&ds, "Q1", "GH").unwrap();
        assert_eq!(h.probs(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_distribution_is_an_error() {
        let ds = dataset("id,country,Q1\na,GH,\n").unwrap();
        assert!(matches!(
            human_distribution(&ds, "Q1", "GH"),
            Err(DatasetError::EmptyDistribution { .. })
        ));
        assert!(matches!(
            human_distribution(&ds, "Q1", "XX"),
            Err(DatasetError::UnknownCountry(_))
        ));
    }

    #[test]
    fn planted_distribution_recovered() {
        let planted = [0.1, 0.4, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut table = String::from("id,country,Q1\n");
        for i in 0..1000 {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut v = 4;
            for (k, p) in planted.iter().enumerate() {
                acc += p;
                if u < acc {
                    v = k + 1;
                    break;
                }
            }
            table.push_str(&format!("r{i},MD,{v}\n"));
        }
        let ds = dataset(&table).unwrap();
        let h = human_distribution(&ds, "Q1", "MD").unwrap();
        for (p_hat, p) in h.probs().iter().zip(planted) {
            let se = (p * (1.0 - p) / 1000.0).sqrt();
            assert!((p_hat - p).abs() < 3.0 * se, "{p_hat} vs {p}");
        }
    }

    fn missing_table(missing_in_a: usize) -> String {
        let mut t = String::from("id,country,Q1,Q48\n");
        for i in 0..1000 {
            let q1 = if i < missing_in_a { "" } else { "1" };
            t.push_str(&format!("a{i},A,{q1},5\n"));
        }
        for i in 0..100 {
            t.push_str(&format!("b{i},B,2,5\n"));
        }
        t
    }

    #[test]
    fn filter_threshold_is_strict() {
        let cs = vec!["A".to_string(), "B".to_string()];
        let ds = dataset(&missing_table(200)).unwrap();
        assert_eq!(filter_questions(&ds, &cs, 0.20).unwrap(), vec!["Q48"]);
        let ds = dataset(&missing_table(199)).unwrap();
        assert_eq!(filter_questions(&ds, &cs, 0.20).unwrap(), vec!["Q1", "Q48"]);
        let ds = dataset(&missing_table(250)).unwrap();
        assert_eq!(filter_questions(&ds, &cs, 0.20).unwrap(), vec!["Q48"]);
        // vacuous threshold
        let ds = dataset(&missing_table(1000)).unwrap();
        assert_eq!(filter_questions(&ds, &cs, 1.0).unwrap(), vec!["Q1", "Q48"]);
    }

    #[test]
    fn filter_errors() {
        let ds = dataset(&missing_table(0)).unwrap();
        assert!(matches!(filter_questions(&ds, &[], 0.2), Err(DatasetError::NoCountries)));
        assert!(matches!(
            filter_questions(&ds, &["ZZ".into()], 0.2),
            Err(DatasetError::UnknownCountry(c)) if c == "ZZ"
        ));
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
