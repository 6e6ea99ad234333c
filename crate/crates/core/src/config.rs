//! Run configuration: a JSON document whose only required key is
//! `iterations`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::SyntheticOracleConfig;
use crate::moea::VariationParams;
use crate::space::SearchSpaceConfig;
use crate::surrogate::{SurrogateKind, SvmHyperParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// A named preset (`"default"` or `"tiny"`) or an explicit space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceChoice {
    Named(String),
    Custom(SearchSpaceConfig),
}

impl Default for SpaceChoice {
    fn default() -> Self {
        SpaceChoice::Named("default".into())
    }
}

impl SpaceChoice {
    pub fn resolve(&self) -> Result<SearchSpaceConfig, ConfigError> {
        let space = match self {
            SpaceChoice::Named(name) => match name.as_str() {
                "default" | "mobilenet_v3" => SearchSpaceConfig::mobilenet_v3(),
                "tiny" => SearchSpaceConfig::tiny(),
                other => return Err(invalid("space", format!("unknown preset {other:?}"))),
            },
            SpaceChoice::Custom(cfg) => cfg.clone(),
        };
        space.validate().map_err(|e| invalid("space", e.to_string()))?;
        Ok(space)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationMode {
    /// Elites of population 1 join both populations; elites of population 2
    /// join population 2 only.
    #[default]
    OneWay,
    /// Both elite sets join both populations.
    Mutual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Synthetic(SyntheticOracleConfig),
    Tabular { path: PathBuf },
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        EvaluatorSpec::Synthetic(SyntheticOracleConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub hyper: SvmHyperParams,
    pub augment_swapped: bool,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Pairwise,
            hyper: SvmHyperParams::default(),
            augment_swapped: true,
        }
    }
}

/// Settings of the surrogate ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateEvalSpec {
    pub seeds: usize,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for SurrogateEvalSpec {
    fn default() -> Self {
        Self {
            seeds: 10,
            train_size: 300,
            test_size: 1000,
        }
    }
}

fn default_n1() -> usize {
    25
}
fn default_n2() -> usize {
    75
}
fn default_generations() -> usize {
    40
}
fn default_sub_pop_size() -> usize {
    60
}
fn default_k1() -> usize {
    4
}
fn default_k2() -> usize {
    6
}
fn default_pool_size() -> usize {
    5000
}
fn default_regions() -> usize {
    8
}
fn default_extreme() -> usize {
    2
}
fn default_max_parallel() -> usize {
    4
}
fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub space: SpaceChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n1")]
    pub n1: usize,
    #[serde(default = "default_n2")]
    pub n2: usize,
    pub iterations: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_sub_pop_size")]
    pub sub_pop_size: usize,
    #[serde(default = "default_k1")]
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_regions")]
    pub regions: usize,
    #[serde(default = "default_extreme")]
    pub extreme_per_side: usize,
    #[serde(default)]
    pub migration: MigrationMode,
    #[serde(default)]
    pub evaluator: EvaluatorSpec,
    #[serde(default)]
    pub variation: VariationParams,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub surrogate_eval: SurrogateEvalSpec,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// Histogram bins per axis for the entropy metric.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl RunConfig {
    /// Defaults everywhere, with the given iteration count.
    pub fn with_iterations(iterations: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "iterations": iterations }))
            .expect("defaults deserialize")
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.space.resolve()?;
        let positive = [
            ("n1", self.n1),
            ("n2", self.n2),
            ("sub_pop_size", self.sub_pop_size),
            ("k1", self.k1),
            ("k2", self.k2),
            ("pool_size", self.pool_size),
            ("extreme_per_side", self.extreme_per_side),
            ("max_parallel", self.max_parallel),
            ("bins", self.bins),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        if self.regions <= 2 * self.extreme_per_side {
            return Err(invalid(
                "regions",
                format!("must exceed 2 * extreme_per_side = {}", 2 * self.extreme_per_side),
            ));
        }
        if self.n1 + self.n2 > self.pool_size {
            return Err(invalid("pool_size", "must be at least n1 + n2"));
        }
        if self.k1.max(self.k2) > self.sub_pop_size {
            return Err(invalid("sub_pop_size", "must be at least max(k1, k2)"));
        }
        let v = &self.variation;
        if !(0.0..=1.0).contains(&v.crossover_prob) {
            return Err(invalid("variation", "crossover_prob must lie in [0, 1]"));
        }
        if !(v.eta_m >= 0.0 && v.eta_m.is_finite()) {
            return Err(invalid("variation", "eta_m must be a finite non-negative number"));
        }
        if let Some(p) = v.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("variation", "mutation_prob must lie in [0, 1]"));
            }
        }
        let h = &self.surrogate.hyper;
        if !(h.l2 > 0.0 && h.learning_rate > 0.0 && h.epochs > 0) {
            return Err(invalid("surrogate", "l2, learning_rate and epochs must be positive"));
        }
        if let EvaluatorSpec::Synthetic(oracle) = &self.evaluator {
            oracle.validate().map_err(|e| invalid("evaluator", e.to_string()))?;
        }
        let se = &self.surrogate_eval;
        if se.seeds == 0 || se.train_size < 2 || se.test_size < 2 {
            return Err(invalid(
                "surrogate_eval",
                "seeds must be positive and both splits hold at least 2 genomes",
            ));
        }
        Ok(())
    }

    pub fn resolved_space(&self) -> Result<SearchSpaceConfig, ConfigError> {
        self.space.resolve()
    }

    /// Real evaluations spent when no elite repeats an archived genome.
    pub fn evaluation_budget(&self) -> usize {
        self.n1 + self.n2 + self.iterations * (self.k1 + self.k2)
    }
}
