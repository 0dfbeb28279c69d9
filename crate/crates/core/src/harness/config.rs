use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::derivation::{EdgeRank, SigmaThreshold};
use crate::error::{Error, Result};
use crate::search::SearchConfig;
use crate::searchspace::{Space, SupernetSpec};

/// Parameters of the synthetic residual task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// The task of run seed `s` is drawn from teacher seed `teacher_seed + s`.
    pub teacher_seed: u64,
    pub residual_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            n_train: 512,
            n_val: 512,
            teacher_seed: 100,
            residual_scale: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivationConfig {
    /// σ cut-off of the threshold derivation rule.
    pub sigma_threshold: f64,
    /// σ above which an op counts as dominant in reports.
    pub dominance_threshold: f64,
    pub edge_rank: EdgeRank,
    /// Skip cap M of the random sampler.
    pub skip_cap: usize,
    /// Parameter floor of the random sampler; none disables it.
    pub param_floor: Option<f64>,
}

impl Default for DerivationConfig {
    fn default() -> Self {
        Self {
            sigma_threshold: SigmaThreshold::CELL.value(),
            dominance_threshold: 0.75,
            edge_rank: EdgeRank::BestOp,
            skip_cap: 2,
            param_floor: None,
        }
    }
}

impl DerivationConfig {
    pub fn threshold(&self) -> Result<SigmaThreshold> {
        SigmaThreshold::new(self.sigma_threshold)
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// One experiment: what to search, on which data, and how to report it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub spec: SupernetSpec,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub derivation: DerivationConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a space.
    pub fn new(name: &str, spec: SupernetSpec, search: SearchConfig) -> Self {
        let mut derivation = DerivationConfig::default();
        if spec.space == Space::S2 {
            derivation.sigma_threshold = SigmaThreshold::CHAIN.value();
        }
        Self {
            name: name.to_string(),
            seeds: default_seeds(),
            output: default_output(),
            spec,
            search,
            data: DataConfig::default(),
            derivation,
        }
    }

    /// Parses a config file body. Keys left out take their defaults; the
    /// zero-one weight and σ threshold defaults follow the space.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg: Self = raw.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let given = |section: &str, key: &str| {
            raw.get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|t| t.contains_key(key))
        };
        if !given("search", "w01") {
            cfg.search.w01 = SearchConfig::default_w01(cfg.spec.space);
        }
        if !given("derivation", "sigma_threshold") && cfg.spec.space == Space::S2 {
            cfg.derivation.sigma_threshold = SigmaThreshold::CHAIN.value();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The effective config, every key spelled out.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("experiment name '{}' is not a plain name", self.name)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.spec.validate()?;
        self.search.validate()?;
        let d = &self.data;
        if !(d.residual_scale > 0.0 && d.residual_scale < 1.0) {
            return Err(Error::Config(format!(
                "residual_scale must lie in (0, 1), got {}",
                d.residual_scale
            )));
        }
        if d.n_train == 0 || d.n_val == 0 {
            return Err(Error::Config("n_train and n_val must be positive".into()));
        }
        self.derivation.threshold()?;
        if !(0.0..1.0).contains(&self.derivation.dominance_threshold) {
            return Err(Error::Config("dominance_threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Search config of one seed.
    pub fn search_for(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            seed,
            ..self.search.clone()
        }
    }
}
