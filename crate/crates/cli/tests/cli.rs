mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::{backend_calls, manifest, read, world};
use persona_sim::simulate::{read_predictions, PredictionRecord};
use persona_sim_cli::commands::{self, cmd_ingest};
use persona_sim_cli::export::{cmd_export, ExportKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_persona-sim"))
}

fn records(run: &Path) -> Vec<PredictionRecord> {
    read_predictions(&read(&run.join(commands::PREDICTIONS))[..]).unwrap()
}

#[test]
fn ingest_lists_filtered_questions_and_honours_override() {
    let w = world();
    common::write_world(w.dir.path(), 0.3);
    let cfg = w.config("");
    let summary = cmd_ingest(&cfg).unwrap();
    assert_eq!(summary.countries.len(), 2);
    assert_eq!(summary.countries[0].respondents, 120);
    assert!(summary.kept.is_empty(), "{:?}", summary.kept);

    let out = bin()
        .args(["--config", w.config_path().to_str().unwrap(), "ingest", "--max-missing", "1.0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("12 of 12 questions pass"), "{text}");
    assert!(text.contains("max missing fraction: 1"));
}

#[test]
fn missing_input_exits_nonzero_naming_the_path() {
    let w = world();
    w.write_config("");
    fs::remove_file(w.path("respondents.csv")).unwrap();
    let out = bin()
        .args(["--config", w.config_path().to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("respondents.csv"), "{err}");
}

#[test]
fn bad_config_value_exits_nonzero() {
    let w = world();
    w.write_config("[calibration]\ncriterion = \"kl\"\n");
    let out = bin()
        .args(["--config", w.config_path().to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kl"));
}

#[test]
fn simulate_is_deterministic_and_emits_per_persona_rows() {
    let w = world();
    let cfg = w.config("[evaluation]\nquestions = [\"T1\", \"T2\"]\n");
    let mut cfg = cfg;
    cfg.persona.n = 50;
    let a = commands::cmd_simulate(&cfg).unwrap();
    let b = commands::cmd_simulate(&cfg).unwrap();
    assert_ne!(a, b);
    assert_eq!(read(&a.join(commands::PREDICTIONS)), read(&b.join(commands::PREDICTIONS)));
    assert_eq!(read(&a.join(commands::PREDICTION_SUMMARY)), read(&b.join(commands::PREDICTION_SUMMARY)));
    let recs = records(&a);
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().all(|r| r.n == 50 && r.per_persona.len() == 50));
    assert_eq!(backend_calls(&a), 200);
    let m = manifest(&a);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["inputs"].as_object().unwrap().len(), 3);
    assert!(a.join("config.toml").exists());
}

#[test]
fn country_mode_scores_one_prompt_per_cell() {
    let w = world();
    let mut cfg = w.config("");
    cfg.prompt.mode = "country".into();
    let run = commands::cmd_simulate(&cfg).unwrap();
    let recs = records(&run);
    // T1 and T2 in two countries
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().all(|r| r.per_persona.len() == 1));
    assert_eq!(backend_calls(&run), 4);
    let digests: BTreeSet<&str> = recs.iter().map(|r| r.persona_digest.as_str()).collect();
    assert_eq!(digests.len(), 1, "every baseline population is the single empty persona");
}

#[test]
fn warm_cache_needs_no_backend_calls() {
    let w = world();
    let mut cfg = w.config("");
    cfg.backend.cache = Some(w.path("cache.jsonl"));
    let cold = commands::cmd_simulate(&cfg).unwrap();
    assert!(backend_calls(&cold) > 0);
    let warm = commands::cmd_simulate(&cfg).unwrap();
    assert_eq!(backend_calls(&warm), 0);
    assert_eq!(read(&cold.join(commands::PREDICTIONS)), read(&warm.join(commands::PREDICTIONS)));
}

fn run_dir_from_stdout(stdout: &[u8]) -> PathBuf {
    let text = String::from_utf8_lossy(stdout);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .unwrap_or_else(|| panic!("no run directory in {text}"));
    PathBuf::from(line)
}

#[test]
fn binary_flags_override_the_file() {
    let w = world();
    let cfg_path = w.write_config("");
    let out_dir = w.path("elsewhere");
    let out = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "--seed", "99", "--mode", "generic", "--out"])
        .arg(&out_dir)
        .arg("simulate")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = run_dir_from_stdout(&out.stdout);
    assert!(run.starts_with(&out_dir));
    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 99"));
    assert!(snapshot.contains("mode = \"generic\""));
}

#[test]
fn failed_stage_leaves_partial_manifest() {
    let w = world();
    let cfg = w.config("[evaluation]\nquestions = [\"T1\"]\n");
    let sim = commands::cmd_simulate(&cfg).unwrap();
    // one question cannot be split into leave-one-out folds
    let err = commands::cmd_calibrate(&cfg, &[sim.join(commands::PREDICTIONS)]).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("partial run left in"), "{msg}");
    let runs: Vec<PathBuf> = fs::read_dir(&cfg.out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("manifest.json.partial").exists())
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(!runs[0].join("manifest.json").exists());
}

#[test]
fn full_pipeline_produces_every_report() {
    let w = world();
    let cfg = w.config("");
    let value = commands::cmd_simulate(&cfg).unwrap();
    let mut country_cfg = cfg.clone();
    country_cfg.prompt.mode = "country".into();
    let country = commands::cmd_simulate(&country_cfg).unwrap();
    let dumps = vec![value.join(commands::PREDICTIONS), country.join(commands::PREDICTIONS)];

    let cal = commands::cmd_calibrate(&cfg, &dumps).unwrap();
    for f in [commands::CALIBRATION_FIT, commands::CALIBRATION_CELLS, commands::CALIBRATED_PREDICTIONS] {
        assert!(cal.join(f).exists(), "{f}");
    }
    let calibrated = read_predictions(&read(&cal.join(commands::CALIBRATED_PREDICTIONS))[..]).unwrap();
    assert_eq!(calibrated.len(), 8);
    let originals: Vec<PredictionRecord> = dumps.iter().flat_map(|d| read_predictions(&read(d)[..]).unwrap()).collect();
    for c in &calibrated {
        let base_mode = c.mode.trim_end_matches("+calibrated");
        let orig = originals
            .iter()
            .find(|o| o.mode == base_mode && o.question_id == c.question_id && o.country == c.country)
            .unwrap();
        assert!((orig.expected_response - c.expected_response).abs() < 1e-9);
    }

    let mut all = dumps.clone();
    all.push(cal.join(commands::CALIBRATED_PREDICTIONS));
    let eval = commands::cmd_evaluate(&cfg, &all).unwrap();
    let eval_again = commands::cmd_evaluate(&cfg, &all).unwrap();
    for f in [commands::EVAL_CELLS, commands::EVAL_AGGREGATES, commands::EVAL_SIGNIFICANCE] {
        assert_eq!(read(&eval.join(f)), read(&eval_again.join(f)), "{f}");
    }
    let sig = fs::read_to_string(eval.join(commands::EVAL_SIGNIFICANCE)).unwrap();
    assert_eq!(sig.lines().count(), 7, "header plus six method pairs:\n{sig}");

    let tsweep = commands::cmd_sweep_temperature(&cfg, &dumps[..1]).unwrap();
    let nsweep = commands::cmd_sweep_n(&cfg).unwrap();
    let shap = commands::cmd_shapley(&cfg).unwrap();
    let shap_text = fs::read_to_string(shap.join(commands::SHAPLEY)).unwrap();
    assert_eq!(shap_text.lines().count(), 1 + 2 * 11);
    assert!(shap_text.contains(",mean,"));

    let inputs = [
        (ExportKind::MaeLines, eval.join(commands::EVAL_CELLS)),
        (ExportKind::VarianceBox, eval.join(commands::EVAL_CELLS)),
        (ExportKind::SampleSizeCurve, nsweep.join(commands::SAMPLE_SIZE_BANDS)),
        (ExportKind::TemperatureCurves, tsweep.join(commands::TEMPERATURE_SWEEP)),
    ];
    for (kind, input) in inputs {
        let run = cmd_export(&cfg, kind, &[input]).unwrap();
        let text = fs::read_to_string(run.join(format!("exports/{kind}.csv"))).unwrap();
        assert!(text.starts_with("series,model,x,metric,value"), "{kind}: {text}");
        assert!(text.lines().count() > 1, "{kind}");
    }

    let map = w.path("map.toml");
    fs::write(&map, "offsets = [0.0, 0.0]\n[loadings]\nT1 = [1.0, 0.0]\nT2 = [0.0, 1.0]\n").unwrap();
    let mut map_cfg = cfg.clone();
    map_cfg.evaluation.map = Some(map);
    let run = cmd_export(&map_cfg, ExportKind::MapPoints, &dumps).unwrap();
    let text = fs::read_to_string(run.join("exports/map_points.csv")).unwrap();
    // two methods and the human profile, two countries each
    assert_eq!(text.lines().count(), 1 + 6, "{text}");
}

#[test]
fn export_without_map_items_fails() {
    let w = world();
    let cfg = w.config("");
    let sim = commands::cmd_simulate(&cfg).unwrap();
    let err = cmd_export(&cfg, ExportKind::MapPoints, &[sim.join(commands::PREDICTIONS)]).unwrap_err();
    assert!(format!("{err:#}").contains("cultural-map"));
}
