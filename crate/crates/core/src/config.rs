//! Serializable benchmark configuration.
//!
//! A [`BenchmarkConfig`] is the complete description of one benchmark
//! instantiation. Resolved configs carry every default explicitly, so a frozen
//! copy reproduces an experiment without the command line that produced it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::envs;
use crate::error::{Error, Result};
use crate::instance::Split;
use crate::space::SpaceSpec;

pub const FORMAT_VERSION: &str = "1";

/// Default number of instances per split in shipped sets.
pub const DEFAULT_INSTANCE_COUNT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    Sigmoid,
    Luby,
    Cmaes,
    Sgd,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 4] = [
        BenchmarkId::Sigmoid,
        BenchmarkId::Luby,
        BenchmarkId::Cmaes,
        BenchmarkId::Sgd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkId::Sigmoid => "sigmoid",
            BenchmarkId::Luby => "luby",
            BenchmarkId::Cmaes => "cmaes",
            BenchmarkId::Sgd => "sgd",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown benchmark `{s}` (expected sigmoid, luby, cmaes or sgd)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    /// Instance CSV file; relative paths resolve against the working directory.
    File { path: PathBuf },
    /// Seeded generator drawing `count` instances for `split` from `seed`.
    Generator { split: Split, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceOrder {
    /// File order, wrapping after the last instance.
    #[default]
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub format_version: String,
    pub benchmark_id: BenchmarkId,
    pub action_space: SpaceSpec,
    pub observation_space: SpaceSpec,
    pub episode_cutoff: usize,
    pub instance_source: InstanceSource,
    #[serde(default)]
    pub instance_order: InstanceOrder,
    pub seed: u64,
    pub reward_quality: u8,
    #[serde(default)]
    pub benchmark_params: BTreeMap<String, Value>,
}

impl BenchmarkConfig {
    /// Shipped default for `id`: training split, seed 0.
    pub fn default_for(id: BenchmarkId) -> Self {
        envs::default_config(id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(
                "format_version",
                format!("unsupported version `{}` (expected `{FORMAT_VERSION}`)", self.format_version),
            ));
        }
        if !(1..=5).contains(&self.reward_quality) {
            return Err(Error::config(
                "reward_quality",
                format!("{} is outside the 1-5 scale", self.reward_quality),
            ));
        }
        if self.episode_cutoff == 0 {
            return Err(Error::config("episode_cutoff", "must be positive"));
        }
        if let InstanceSource::Generator { count, .. } = self.instance_source {
            if count == 0 {
                return Err(Error::config("instance_source.count", "must be positive"));
            }
        }
        self.action_space
            .validate()
            .map_err(|e| Error::config("action_space", e.to_string()))?;
        self.observation_space
            .validate()
            .map_err(|e| Error::config("observation_space", e.to_string()))?;
        envs::validate_config(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_at(text, "<config>")
    }

    fn from_json_at(text: &str, origin: &str) -> Result<Self> {
        let config: BenchmarkConfig = serde_json::from_str(text).map_err(|e| json_error(e, origin))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_at(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn config_hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        let count = match self.instance_source {
            InstanceSource::Generator { count, .. } => count,
            InstanceSource::File { .. } => DEFAULT_INSTANCE_COUNT,
        };
        self.instance_source = InstanceSource::Generator { split, count };
        self
    }

    pub fn with_instance_source(mut self, source: InstanceSource) -> Self {
        self.instance_source = source;
        self
    }

    /// Overrides one benchmark parameter and re-derives the spaces it implies.
    pub fn with_param(mut self, key: &str, value: Value) -> Result<Self> {
        self.benchmark_params.insert(key.to_string(), value);
        envs::refresh_spaces(&mut self)?;
        self.validate()?;
        Ok(self)
    }

    /// Overrides the episode cutoff and re-derives the spaces it implies.
    pub fn with_cutoff(mut self, cutoff: usize) -> Result<Self> {
        self.episode_cutoff = cutoff;
        envs::refresh_spaces(&mut self)?;
        self.validate()?;
        Ok(self)
    }
}

fn json_error(e: serde_json::Error, origin: &str) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => {
            let msg = e.to_string();
            let field = backticked(&msg).unwrap_or_else(|| "<document>".to_string());
            Error::config(field, msg)
        }
        Category::Io => Error::io(origin, std::io::Error::other(e.to_string())),
        Category::Syntax | Category::Eof => Error::Parse {
            path: origin.to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        },
    }
}

/// First backtick-quoted token of a serde message, e.g. the name in "unknown field `x`".
fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = msg[start..].find('`')? + start;
    Some(msg[start..end].to_string())
}
