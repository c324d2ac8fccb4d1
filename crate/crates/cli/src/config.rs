//! Run configuration: one TOML file, flag overrides on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use persona_sim::backend::MeanRule;
use persona_sim::calibrate::Criterion;
use persona_sim::prompt::PromptMode;
use persona_sim::shapley::ShapleyMode;
use serde::{Deserialize, Serialize};

/// The ten cultural-map items, WVS wave 7 ids.
pub const DEFAULT_ITEMS: [&str; 10] = ["Q164", "Y003", "Q184", "Q254", "Q45", "Y002", "Q46", "Q182", "Q209", "Q57"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    /// Root directory for run outputs.
    pub out: PathBuf,
    /// Evaluation countries; empty means every country in the data.
    pub countries: Vec<String>,
    pub dataset: DatasetConfig,
    pub persona: PersonaConfig,
    pub prompt: PromptConfig,
    pub backend: BackendConfig,
    pub mock: MockConfig,
    pub calibration: CalibrationConfig,
    pub evaluation: EvaluationConfig,
    pub shapley: ShapleyConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out: PathBuf::from("runs"),
            countries: Vec::new(),
            dataset: DatasetConfig::default(),
            persona: PersonaConfig::default(),
            prompt: PromptConfig::default(),
            backend: BackendConfig::default(),
            mock: MockConfig::default(),
            calibration: CalibrationConfig::default(),
            evaluation: EvaluationConfig::default(),
            shapley: ShapleyConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub catalog: Option<PathBuf>,
    pub respondents: Option<PathBuf>,
    /// Extra respondent columns carried as attributes.
    pub attributes: Vec<String>,
    pub max_missing_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            respondents: None,
            attributes: Vec::new(),
            max_missing_fraction: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonaConfig {
    pub items: Vec<String>,
    pub include_nationality: bool,
    pub n: usize,
    /// Sampling seed; falls back to the run seed.
    pub seed: Option<u64>,
    pub descriptors: Option<PathBuf>,
}

impl Default for PersonaConfig {
    fn default() -> Self {
        Self {
            items: DEFAULT_ITEMS.iter().map(|s| s.to_string()).collect(),
            include_nationality: false,
            n: 100,
            seed: None,
            descriptors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// default, generic, country, value, fewshot or sociodemographic.
    pub mode: String,
    pub guidance: String,
    /// Replaces the built-in guidance set.
    pub guidance_file: Option<PathBuf>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            mode: "value".into(),
            guidance: persona_sim::prompt::DEFAULT_GUIDANCE_KEY.into(),
            guidance_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// `mock` or `http`.
    pub kind: String,
    pub endpoint: String,
    pub model_id: String,
    pub rps: f64,
    pub max_retries: u32,
    pub first_token: bool,
    /// Response cache file; no caching when unset.
    pub cache: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: "mock".into(),
            endpoint: String::new(),
            model_id: "mock".into(),
            rps: 2.0,
            max_retries: 3,
            first_token: false,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub gamma: f64,
    /// `midpoint`, `profile` or `item:<question id>`.
    pub mean_rule: String,
    pub country_offsets: BTreeMap<String, f64>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            mean_rule: "profile".into(),
            country_offsets: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Temperature grid; empty means 21 log-spaced points on [0.25, 16].
    pub grid: Vec<f64>,
    pub criterion: String,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            grid: Vec::new(),
            criterion: Criterion::default().to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Held-out questions; empty means every filtered non-persona question.
    pub questions: Vec<String>,
    /// Cultural-map loadings; the bundled demo loadings when unset.
    pub map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapleyConfig {
    pub mode: String,
    pub n_permutations: usize,
    /// Coalition population size; falls back to `persona.n`.
    pub n: Option<usize>,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            mode: ShapleyMode::default().to_string(),
            n_permutations: 2000,
            n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub repeats: usize,
    /// Temperatures for `sweep-temperature`; empty means the calibration grid.
    pub temperatures: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ns: vec![5, 20, 100, 500],
            repeats: 20,
            temperatures: Vec::new(),
        }
    }
}

/// Values given on the command line. `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub respondents: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub max_missing_fraction: Option<f64>,
    pub mode: Option<String>,
    pub n: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Defaults, then the file if given, then the flags.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.dataset.catalog.as_mut(),
            self.dataset.respondents.as_mut(),
            self.persona.descriptors.as_mut(),
            self.prompt.guidance_file.as_mut(),
            self.backend.cache.as_mut(),
            self.evaluation.map.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = &o.backend {
            self.backend.kind = b.clone();
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(p) = &o.catalog {
            self.dataset.catalog = Some(p.clone());
        }
        if let Some(p) = &o.respondents {
            self.dataset.respondents = Some(p.clone());
        }
        if let Some(p) = &o.descriptors {
            self.persona.descriptors = Some(p.clone());
        }
        if let Some(t) = o.max_missing_fraction {
            self.dataset.max_missing_fraction = t;
        }
        if let Some(m) = &o.mode {
            self.prompt.mode = m.clone();
        }
        if let Some(n) = o.n {
            self.persona.n = n;
        }
    }

    /// Checks every enum-like string and numeric range up front.
    pub fn validate(&self) -> Result<()> {
        self.prompt_mode()?;
        self.criterion()?;
        self.shapley_mode()?;
        match self.backend.kind.as_str() {
            "mock" => {
                self.mean_rule()?;
            }
            "http" => {
                if self.backend.endpoint.is_empty() {
                    bail!("backend.endpoint is required when backend.kind = \"http\"");
                }
            }
            other => bail!("unknown backend.kind {other:?} (expected mock or http)"),
        }
        if !(0.0..=1.0).contains(&self.dataset.max_missing_fraction) {
            bail!("dataset.max_missing_fraction must lie in [0, 1], got {}", self.dataset.max_missing_fraction);
        }
        if self.persona.n == 0 {
            bail!("persona.n must be positive");
        }
        if let Some(t) = self.calibration.grid.iter().chain(&self.sweep.temperatures).find(|t| !(t.is_finite() && **t > 0.0)) {
            bail!("temperatures must be finite and positive, got {t}");
        }
        if self.sweep.repeats == 0 {
            bail!("sweep.repeats must be positive");
        }
        Ok(())
    }

    pub fn prompt_mode(&self) -> Result<PromptMode> {
        self.prompt
            .mode
            .parse()
            .with_context(|| format!("prompt.mode = {:?}", self.prompt.mode))
    }

    pub fn criterion(&self) -> Result<Criterion> {
        Ok(self.calibration.criterion.parse()?)
    }

    pub fn shapley_mode(&self) -> Result<ShapleyMode> {
        Ok(self.shapley.mode.parse()?)
    }

    pub fn mean_rule(&self) -> Result<MeanRule> {
        Ok(self.mock.mean_rule.parse()?)
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.calibration.grid.is_empty() {
            persona_sim::calibrate::default_grid()
        } else {
            self.calibration.grid.clone()
        }
    }

    pub fn temperatures(&self) -> Vec<f64> {
        if self.sweep.temperatures.is_empty() {
            self.grid()
        } else {
            self.sweep.temperatures.clone()
        }
    }

    pub fn persona_seed(&self) -> u64 {
        self.persona.seed.unwrap_or(self.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
