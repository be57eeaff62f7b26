//! Run configuration: a single human-editable JSON document with dotted-path
//! overrides and a content hash for run-directory addressing.

use crate::optimizer::{init_informative, init_uninformative, InformativeInit, OptimizerConfig};
use crate::policy::PolicyDistribution;
use crate::sim2d::{make_task, EnvConfig, Task};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status: 1 for config errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

/// Task by preset name or as an inline environment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSpec {
    Name(String),
    Inline(Box<EnvConfig>),
}

impl TaskSpec {
    pub fn resolve(&self) -> Result<EnvConfig, HarnessError> {
        match self {
            TaskSpec::Name(name) => {
                let task: Task = name
                    .parse()
                    .map_err(|e: String| HarnessError::Config(format!("task: {e}")))?;
                Ok(make_task(task))
            }
            TaskSpec::Inline(env) => Ok((**env).clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Uninformative,
    Informative {
        #[serde(default = "default_nu0")]
        nu0: f64,
        /// Per-axis base stiffness; None uses the critically damped
        /// settling rule.
        #[serde(default)]
        stiffness: Option<f64>,
    },
}

fn default_nu0() -> f64 {
    30.0
}

impl InitSpec {
    pub fn resolve(&self, env: &EnvConfig, k: usize) -> Result<PolicyDistribution, HarnessError> {
        match self {
            InitSpec::Uninformative => Ok(init_uninformative(2, k)),
            InitSpec::Informative { nu0, stiffness } => {
                let offset = env.initial_offset();
                let init = InformativeInit {
                    mass: env.mass,
                    horizon: env.horizon,
                    init_pos: vec![offset.x, offset.y],
                    nu0: *nu0,
                    stiffness: *stiffness,
                };
                init_informative(k, &init).map_err(|e| HarnessError::Config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub task: TaskSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Number of spring-damper mixture components.
    pub k: usize,
    pub init: InitSpec,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl RunConfig {
    pub fn from_value(value: serde_json::Value) -> Result<Self, HarnessError> {
        let schema = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| HarnessError::Config("missing field 'schema_version'".into()))?;
        if schema != SCHEMA_VERSION as u64 {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {schema}, expected {SCHEMA_VERSION}"
            )));
        }
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| HarnessError::Config(format!("invalid config: {e}")))?;
        cfg.optimizer
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.task
            .resolve()?
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            HarnessError::Config(format!("cannot parse config {}: {e}", path.display()))
        })?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        Self::from_value(value)
    }

    /// Content hash over everything that affects results (the output
    /// directory and the seed list are excluded; the seed is part of the run
    /// directory name instead).
    pub fn content_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("out_dir");
            obj.remove("seeds");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir
            .join(format!("run-{}-seed{}", self.content_hash(), seed))
    }
}

/// Applies one `dotted.path=value` override to a JSON document. The value is
/// parsed as JSON when possible and falls back to a plain string.
pub fn apply_override(value: &mut serde_json::Value, spec: &str) -> Result<(), HarnessError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override '{spec}' is not key=value")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(HarnessError::Config(format!("bad override path '{path}'")));
    }
    for segment in &segments[..segments.len() - 1] {
        cursor = cursor
            .as_object_mut()
            .ok_or_else(|| {
                HarnessError::Config(format!("override path '{path}' crosses a non-object"))
            })?
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let leaf = segments.last().expect("non-empty segments");
    cursor
        .as_object_mut()
        .ok_or_else(|| HarnessError::Config(format!("override path '{path}' crosses a non-object")))?
        .insert(leaf.to_string(), parsed);
    Ok(())
}
