use std::collections::BTreeMap;
use std::sync::Arc;

use persona_sim::backend::{MeanRule, MockScorer, MockWorld};
use persona_sim::calibrate::{temperature_scale, temperature_sweep, tilt_mean_preserving, CalibrationCell, ScalingMethod};
use persona_sim::dataset::human_distribution;
use persona_sim::persona::{sample_population, PersonaSettings};
use persona_sim::prompt::{GuidanceSet, PromptMode};
use persona_sim::simulate::{simulate_population, SimContext};
use persona_sim::synth::{descriptor_catalog, generate, SynthCountry, SynthSpec};
use persona_sim::ResponseDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kl(x: &[f64], q: &[f64]) -> f64 {
    x.iter()
        .zip(q)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => a * (a / b).ln(),
        })
        .sum()
}

/// Mean-feasible 3-option distributions with mean `m` on {1,2,3}:
/// `c = a + m - 2`, `b = 1 - a - c`, for `a` on a uniform grid.
fn feasible_grid(m: f64, points: usize) -> (Vec<[f64; 3]>, f64) {
    let lo = (2.0 - m).max(0.0);
    let hi = ((3.0 - m) / 2.0).min(1.0);
    let h = (hi - lo) / (points - 1) as f64;
    let grid = (0..points)
        .map(|i| {
            let a = lo + h * i as f64;
            let c = (a + m - 2.0).max(0.0);
            [a, (1.0 - a - c).max(0.0), c]
        })
        .collect();
    (grid, h)
}

#[test]
fn tilt_is_kl_closest_on_feasible_segment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.02..1.0)).collect();
        let d = ResponseDistribution::from_weights("Q", vec![1, 2, 3], &w).unwrap();
        let t = 10f64.powf(rng.gen_range(-1.0..2.0));
        let reference = temperature_scale(&d, t).unwrap();
        let (q, _) = tilt_mean_preserving(&d, t).unwrap();
        let best = kl(&q.probs, &reference.probs);
        let (grid, h) = feasible_grid(d.mean(), 10_000);
        let (arg, min) = grid
            .iter()
            .enumerate()
            .map(|(i, x)| (i, kl(x, &reference.probs)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(min >= best - 1e-9, "case {case}: grid {min} beats tilt {best}");
        // the grid minimizer sits next to the tilted solution
        assert!((grid[arg][0] - q.probs[0]).abs() <= h + 1e-9, "case {case}");
    }
}

#[test]
fn sharpening_underdispersed_predictions_hurts() {
    let spec = SynthSpec::standard(vec![SynthCountry::new("AA", 0.35, 400)], 12);
    let ds = generate(&spec);
    let catalog = descriptor_catalog(&spec);
    let items: Vec<&str> = spec.items.iter().map(|(i, _)| i.as_str()).collect();
    let settings = PersonaSettings::value(&items);
    let guidance = GuidanceSet::builtin();
    // every persona is planted at the true country mean: right on average, too tight
    let truth: BTreeMap<String, f64> = ["T1", "T2"]
        .iter()
        .map(|id| (id.to_string(), human_distribution(&ds, id, "AA").unwrap().mean()))
        .collect();
    let rule = MeanRule::Custom(Arc::new(move |_, qid: &str, _, _| truth[qid]));
    let scorer = MockScorer::new(MockWorld::new(3.0, rule).unwrap());
    let ctx = SimContext {
        guidance: guidance.get("social_science").unwrap(),
        mode: PromptMode::Value,
        model_id: "mock",
        backend: &scorer,
    };
    let pop = sample_population(&ds, "AA", &catalog, &settings, 200, 4).unwrap();
    let cells: Vec<CalibrationCell> = ["T1", "T2"]
        .iter()
        .map(|id| {
            let q = ds.question(id).unwrap();
            let pred = simulate_population(&pop, q, &ctx).unwrap();
            let human = human_distribution(&ds, id, "AA").unwrap();
            CalibrationCell {
                question_id: id.to_string(),
                country: "AA".into(),
                prediction: pred.aggregate,
                human: human.to_distribution(),
            }
        })
        .collect();
    let points = temperature_sweep(&cells, &[0.3, 1.0, 1e6]).unwrap();
    let plain: Vec<_> = points.iter().filter(|p| p.method == ScalingMethod::Plain).collect();
    assert!(plain[0].mae >= plain[1].mae, "{:?}", plain);
    assert!(plain[0].wasserstein >= plain[1].wasserstein, "{:?}", plain);
    let pred_var: f64 = cells.iter().map(|c| c.prediction.variance()).sum();
    let human_var: f64 = cells.iter().map(|c| c.human.variance()).sum();
    assert!(pred_var < human_var);

    // the flat limit predicts the scale midpoint
    for c in &cells {
        let flat = temperature_scale(&c.prediction, 1e6).unwrap();
        let mid = (c.prediction.scale_min() + c.prediction.scale_max()) as f64 / 2.0;
        assert!((flat.mean() - mid).abs() < 1e-4);
    }
}
