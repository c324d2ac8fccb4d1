use std::collections::BTreeMap;

use persona_sim::dataset::{QuestionSpec, Respondent, SurveyDataset};
use persona_sim::persona::{sample_population, DescriptorCatalog, PersonaSettings};

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact multinomial test against equal cell probabilities: total mass of
/// outcomes no more likely than the observed one.
fn exact_uniform_multinomial_p(counts: [usize; 3]) -> f64 {
    let n: usize = counts.iter().sum();
    let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let ln_p = |a: usize, b: usize, c: usize| lf[n] - lf[a] - lf[b] - lf[c] - n as f64 * 3f64.ln();
    let observed = ln_p(counts[0], counts[1], counts[2]);
    let mut total = 0.0;
    for a in 0..=n {
        for b in 0..=n - a {
            let lp = ln_p(a, b, n - a - b);
            if lp <= observed + 1e-9 {
                total += lp.exp();
            }
        }
    }
    total
}

fn country(profiles: &[(i64, usize)]) -> (SurveyDataset, DescriptorCatalog) {
    let questions = vec![QuestionSpec::new("P", "Item?", 1, 4, &[])];
    let mut respondents = Vec::new();
    for &(answer, copies) in profiles {
        for k in 0..copies {
            respondents.push(Respondent {
                id: format!("r{answer}-{k}"),
                country: "AA".into(),
                answers: BTreeMap::from([("P".to_string(), Some(answer))]),
                attributes: BTreeMap::new(),
            });
        }
    }
    let mut catalog = DescriptorCatalog::default();
    for o in 1..=4 {
        catalog.insert("P", o, &format!("You answer {o}."));
    }
    let ds = SurveyDataset {
        questions,
        respondents,
        attribute_columns: vec![],
    };
    (ds, catalog)
}

#[test]
fn three_respondents_sample_uniformly() {
    let (ds, catalog) = country(&[(1, 1), (2, 1), (3, 1)]);
    let settings = PersonaSettings::value(&["P"]);
    let counts_for = |seed| {
        let pop = sample_population(&ds, "AA", &catalog, &settings, 100, seed).unwrap();
        let mut counts = [0usize; 3];
        for p in &pop.personas {
            counts[(p.items[0].answer - 1) as usize] += 1;
        }
        counts
    };
    assert!(exact_uniform_multinomial_p(counts_for(7)) > 0.01);
    // across many seeds the 1% test should reject rarely
    let rejections = (0..60).filter(|&s| exact_uniform_multinomial_p(counts_for(s)) <= 0.01).count();
    assert!(rejections <= 3, "{rejections} rejections in 60 seeds");
}

#[test]
fn large_sample_matches_profile_frequencies() {
    let (ds, catalog) = country(&[(1, 5), (2, 3), (4, 2)]);
    let settings = PersonaSettings::value(&["P"]);
    let pop = sample_population(&ds, "AA", &catalog, &settings, 10_000, 2024).unwrap();
    let mut observed: BTreeMap<i64, f64> = BTreeMap::new();
    for p in &pop.personas {
        *observed.entry(p.items[0].answer).or_default() += 1.0;
    }
    let expected = [(1, 0.5), (2, 0.3), (4, 0.2)];
    let chi2: f64 = expected
        .iter()
        .map(|&(a, share)| {
            let e = share * 10_000.0;
            (observed.get(&a).copied().unwrap_or(0.0) - e).powi(2) / e
        })
        .sum();
    // chi-square survival with 2 degrees of freedom
    let p = (-chi2 / 2.0).exp();
    assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
}

#[test]
fn oracle_sanity() {
    // the most likely outcome has p = 1; an extreme one is tiny
    assert!((exact_uniform_multinomial_p([34, 33, 33]) - 1.0).abs() < 1e-9);
    assert!(exact_uniform_multinomial_p([100, 0, 0]) < 1e-40);
}
