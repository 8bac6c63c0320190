//! Declarative experiment configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::harness::regret::Band;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hypbo,
    VanillaBo,
    RandomSearch,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hypbo => "hypbo",
            Method::VanillaBo => "vanilla_bo",
            Method::RandomSearch => "random_search",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypbo" => Ok(Method::Hypbo),
            "vanilla_bo" => Ok(Method::VanillaBo),
            "random_search" => Ok(Method::RandomSearch),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Exactly one of `key`, `oracle_csv` or `standin_rows` must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    /// Synthetic registry key such as `sphere:2`.
    pub key: Option<String>,
    /// HER measurements to fit the oracle on.
    pub oracle_csv: Option<PathBuf>,
    /// Fit the oracle on a generated stand-in dataset of this many rows.
    pub standin_rows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesesSection {
    /// Factory keys (`good`, `poor`, `good+poor`, `virtual_chemists`, ...) or
    /// paths to hypothesis TOML files.
    pub keys: Vec<String>,
    /// Side length of the good / weak / poor boxes.
    pub width: f64,
}

impl Default for HypothesesSection {
    fn default() -> Self {
        Self { keys: Vec::new(), width: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    pub list: Vec<Method>,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub band: Band,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
    #[serde(default)]
    pub engine: EngineConfig,
    pub methods: MethodsSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.objective.oracle_csv.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output.dir);
        for k in cfg.hypotheses.keys.iter_mut() {
            if k.ends_with(".toml") && Path::new(k.as_str()).is_relative() {
                *k = base.join(&*k).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.objective;
        let set = [o.key.is_some(), o.oracle_csv.is_some(), o.standin_rows.is_some()];
        if set.iter().filter(|b| **b).count() != 1 {
            return Err(Error::Config("[objective] needs exactly one of key, oracle_csv, standin_rows".into()));
        }
        if self.methods.trials == 0 {
            return Err(Error::Config("methods.trials must be at least 1".into()));
        }
        if self.methods.list.is_empty() {
            return Err(Error::Config("methods.list must name at least one method".into()));
        }
        let mut seen = self.methods.list.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.list.len() {
            return Err(Error::Config("methods.list contains duplicates".into()));
        }
        if !(self.hypotheses.width > 0.0) {
            return Err(Error::Config("hypotheses.width must be positive".into()));
        }
        self.engine.validate(0)
    }
}
