#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use persona_sim::synth::{descriptor_catalog, generate, SynthCountry, SynthSpec};
use persona_sim_cli::config::RunConfig;

pub struct World {
    pub dir: tempfile::TempDir,
}

impl World {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("run.toml")
    }

    pub fn write_config(&self, extra: &str) -> PathBuf {
        let path = self.config_path();
        fs::write(&path, format!("{BASE_CONFIG}\n{extra}")).unwrap();
        path
    }

    pub fn config(&self, extra: &str) -> RunConfig {
        let path = self.write_config(extra);
        let cfg = RunConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        cfg
    }
}

pub const BASE_CONFIG: &str = r#"
seed = 11
countries = ["AA", "BB"]

[dataset]
catalog = "catalog.toml"
respondents = "respondents.csv"

[persona]
items = ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10"]
n = 20
descriptors = "descriptors.toml"

[backend]
kind = "mock"
model_id = "mock-1"

[mock]
gamma = 2.0
mean_rule = "profile"

[sweep]
ns = [5, 20]
repeats = 3

[shapley]
mode = "permutation"
n_permutations = 40
n = 6
"#;

/// Two synthetic countries written to a temp dir as catalog, respondent table
/// and descriptor catalog.
pub fn world() -> World {
    let dir = tempfile::tempdir().unwrap();
    write_world(dir.path(), 0.0);
    World { dir }
}

pub fn write_world(dir: &Path, missing_rate: f64) {
    let mut spec = SynthSpec::standard(vec![SynthCountry::new("AA", 0.3, 120), SynthCountry::new("BB", 0.7, 120)], 5);
    spec.missing_rate = missing_rate;
    let ds = generate(&spec);
    fs::write(dir.join("catalog.toml"), ds.catalog_to_toml()).unwrap();
    fs::write(dir.join("respondents.csv"), ds.respondents_to_csv()).unwrap();
    fs::write(dir.join("descriptors.toml"), descriptor_catalog(&spec).to_toml()).unwrap();
}

pub fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn manifest(run: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(&run.join("manifest.json"))).unwrap()
}

pub fn backend_calls(run: &Path) -> u64 {
    manifest(run)["backend"]["backend_calls"].as_u64().unwrap()
}
