//! Writes a small synthetic survey world and a matching run config.
//!
//! ```text
//! cargo run -p persona-sim-core --example demo_data -- demo
//! ```

use std::fs;
use std::path::PathBuf;

use persona_sim::synth::{descriptor_catalog, generate, SynthCountry, SynthSpec};

const CONFIG: &str = r#"seed = 7
countries = ["AA", "BB", "CC"]

[dataset]
catalog = "catalog.toml"
respondents = "respondents.csv"

[persona]
items = ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10"]
n = 50
descriptors = "descriptors.toml"

[prompt]
mode = "value"

[backend]
kind = "mock"
model_id = "mock"
cache = "cache.jsonl"

[mock]
gamma = 2.0
mean_rule = "profile"

[shapley]
mode = "permutation"
n_permutations = 200
n = 20
"#;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    fs::create_dir_all(&dir)?;
    let mut spec = SynthSpec::standard(
        vec![
            SynthCountry::new("AA", 0.25, 400),
            SynthCountry::new("BB", 0.5, 400),
            SynthCountry::new("CC", 0.75, 400),
        ],
        2024,
    );
    spec.missing_rate = 0.03;
    let ds = generate(&spec);
    fs::write(dir.join("catalog.toml"), ds.catalog_to_toml())?;
    fs::write(dir.join("respondents.csv"), ds.respondents_to_csv())?;
    fs::write(dir.join("descriptors.toml"), descriptor_catalog(&spec).to_toml())?;
    fs::write(dir.join("run.toml"), CONFIG)?;
    println!("wrote demo world to {}", dir.display());
    Ok(())
}
