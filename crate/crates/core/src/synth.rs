//! Synthetic survey worlds for tests, demos and mock-backend experiments.
//!
//! Every respondent carries a latent position `z ∈ [0, 1]` drawn around a
//! country-specific mean. Each answer is `z` mapped onto the item's scale plus
//! a little rounding noise. A test question can mirror a persona item, in
//! which case it copies that item's answer exactly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{QuestionSpec, Respondent, SurveyDataset};
use crate::persona::DescriptorCatalog;

#[derive(Debug, Clone)]
pub struct SynthCountry {
    pub code: String,
    pub latent_mean: f64,
    pub respondents: usize,
}

impl SynthCountry {
    pub fn new(code: &str, latent_mean: f64, respondents: usize) -> Self {
        Self {
            code: code.to_string(),
            latent_mean,
            respondents,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub countries: Vec<SynthCountry>,
    /// Persona items as (id, scale_max); scales start at 1.
    pub items: Vec<(String, i64)>,
    /// Test questions as (id, scale_max, mirrored persona item).
    pub tests: Vec<(String, i64, Option<String>)>,
    /// Half-width of the uniform spread of `z` around the country mean.
    pub spread: f64,
    /// Probability that any single answer is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Ten 1-4 items `P1..P10`, and test questions `T1` (1-5) and `T2`
    /// (1-10, mirroring `P1`).
    pub fn standard(countries: Vec<SynthCountry>, seed: u64) -> Self {
        Self {
            countries,
            items: (1..=10).map(|i| (format!("P{i}"), 4)).collect(),
            tests: vec![("T1".into(), 5, None), ("T2".into(), 4, Some("P1".into()))],
            spread: 0.35,
            missing_rate: 0.0,
            seed,
        }
    }
}

fn answer_at(z: f64, scale_max: i64, jitter: f64) -> i64 {
    let raw = 1.0 + z * (scale_max - 1) as f64 + jitter;
    (raw.round() as i64).clamp(1, scale_max)
}

/// Builds the dataset described by `spec`.
pub fn generate(spec: &SynthSpec) -> SurveyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut questions: Vec<QuestionSpec> = spec
        .items
        .iter()
        .map(|(id, max)| QuestionSpec::new(id, &format!("Where do you stand on {id}?"), 1, *max, &[]))
        .collect();
    questions.extend(
        spec.tests
            .iter()
            .map(|(id, max, _)| QuestionSpec::new(id, &format!("Where do you stand on {id}?"), 1, *max, &[])),
    );
    let mut respondents = Vec::new();
    for country in &spec.countries {
        for i in 0..country.respondents {
            let z = (country.latent_mean + spec.spread * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0);
            let mut answers = BTreeMap::new();
            for (id, max) in &spec.items {
                let a = answer_at(z, *max, rng.gen::<f64>() - 0.5);
                let missing = rng.gen::<f64>() < spec.missing_rate;
                answers.insert(id.clone(), (!missing).then_some(a));
            }
            for (id, max, mirror) in &spec.tests {
                let a = match mirror {
                    Some(item) => answers.get(item).copied().flatten(),
                    None => {
                        let a = answer_at(z, *max, rng.gen::<f64>() - 0.5);
                        (rng.gen::<f64>() >= spec.missing_rate).then_some(a)
                    }
                };
                answers.insert(id.clone(), a.map(|a| a.clamp(1, *max)));
            }
            respondents.push(Respondent {
                id: format!("{}-{i:05}", country.code),
                country: country.code.clone(),
                answers,
                attributes: BTreeMap::new(),
            });
        }
    }
    SurveyDataset {
        questions,
        respondents,
        attribute_columns: Vec::new(),
    }
}

/// One "You ..." descriptor per (item, option).
pub fn descriptor_catalog(spec: &SynthSpec) -> DescriptorCatalog {
    let mut catalog = DescriptorCatalog {
        provenance: "synthetic template descriptors".into(),
        ..DescriptorCatalog::default()
    };
    for (id, max) in &spec.items {
        for o in 1..=*max {
            catalog.insert(id, o, &format!("You place yourself at {o} of {max} on {id}."));
        }
    }
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrored_answers_match_and_generation_is_seeded() {
        let spec = SynthSpec::standard(vec![SynthCountry::new("AA", 0.3, 50), SynthCountry::new("BB", 0.7, 40)], 4);
        let ds = generate(&spec);
        assert_eq!(ds.respondents.len(), 90);
        assert!(ds.respondents.iter().all(|r| r.answer("T2") == r.answer("P1")));
        assert_eq!(ds, generate(&spec));
        let catalog = descriptor_catalog(&spec);
        let ids: Vec<String> = spec.items.iter().map(|(i, _)| i.clone()).collect();
        catalog.check_coverage(&ds.questions, &ids).unwrap();
        let mean = |c: &str| {
            let v: Vec<f64> = ds.respondents_in(c).filter_map(|r| r.answer("P1")).map(|a| a as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean("AA") < mean("BB"));
    }
}
