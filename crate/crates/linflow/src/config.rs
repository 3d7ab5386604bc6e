//! Run configuration: one JSON document, defaults for every key, and dotted
//! `key=value` overrides applied on top.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use linflow_core::dataset::InstanceSpec;
use linflow_core::flows::IntegratorConfig;
use linflow_core::stability::StableSetParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    GradientOracle,
    AwCrosscheck,
    Balance,
    Rank,
    StableSet,
    SvOde,
    UvOde,
    LossEvolution,
    RateBounds,
    Landscape,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::GradientOracle,
        Check::AwCrosscheck,
        Check::Balance,
        Check::Rank,
        Check::StableSet,
        Check::SvOde,
        Check::UvOde,
        Check::LossEvolution,
        Check::RateBounds,
        Check::Landscape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::GradientOracle => "gradient-oracle",
            Check::AwCrosscheck => "aw-crosscheck",
            Check::Balance => "balance",
            Check::Rank => "rank",
            Check::StableSet => "stable-set",
            Check::SvOde => "sv-ode",
            Check::UvOde => "uv-ode",
            Check::LossEvolution => "loss-evolution",
            Check::RateBounds => "rate-bounds",
            Check::Landscape => "landscape",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Induced,
    Factor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandscapeInit {
    /// Balanced factorization of a rescaled instance initialization.
    Instance,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub flow: FlowKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub depth: usize,
    pub init: LandscapeInit,
    /// Replaces `instance.init_scale` for the landscape run.
    pub init_scale: f64,
    /// Replaces `instance.init_angle_deg` for the landscape run.
    pub init_angle_deg: f64,
    pub dt: f64,
    pub steps: usize,
    pub num_dirs: usize,
    pub direction_seed: u64,
    /// Classify the initialization without integrating.
    pub probe_only: bool,
}

/// Sample counts for `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub gradient_instances: usize,
    pub aw_pairs: usize,
    /// Seeded runs for the rank, stable-set and loss-evolution suites.
    pub runs: usize,
    /// Seeds for the rate-bound and landscape suites.
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: InstanceSpec,
    pub depth_list: Vec<usize>,
    /// Width of every hidden layer for factor-flow runs.
    pub hidden_width: usize,
    pub integrator: IntegratorConfig,
    pub stable_params: StableSetParams,
    pub checks: BTreeSet<Check>,
    pub output_dir: PathBuf,
    pub simulate: SimulateConfig,
    pub landscape: LandscapeConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            instance: InstanceSpec::default(),
            depth_list: vec![2, 3, 4, 6],
            hidden_width: 1,
            integrator: IntegratorConfig::default(),
            stable_params: StableSetParams::default(),
            checks: Check::ALL.into_iter().collect(),
            output_dir: PathBuf::from("out"),
            simulate: SimulateConfig {
                flow: FlowKind::Induced,
            },
            landscape: LandscapeConfig {
                depth: 3,
                init: LandscapeInit::Instance,
                init_scale: 1.5,
                init_angle_deg: 20.0,
                dt: 1e-3,
                steps: 5000,
                num_dirs: 64,
                direction_seed: 0,
                probe_only: false,
            },
            verify: VerifyConfig {
                gradient_instances: 20,
                aw_pairs: 100,
                runs: 20,
                seeds: 3,
            },
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional config file, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig> {
        let mut doc =
            serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| AppError::Parse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            merge(&mut doc, file, "")?;
        }
        for (key, value) in overrides {
            set_path(&mut doc, key, value.clone())?;
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_list.is_empty() || self.depth_list.contains(&0) {
            return Err(AppError::Config(
                "depth_list must be nonempty with every N >= 1".into(),
            ));
        }
        if self.hidden_width == 0 {
            return Err(AppError::Config("hidden_width must be at least 1".into()));
        }
        self.instance.validate()?;
        self.integrator.validate()?;
        let l = &self.landscape;
        if l.depth == 0 || l.steps == 0 || l.num_dirs == 0 || !(l.dt > 0.0) || !l.dt.is_finite() {
            return Err(AppError::Config(
                "landscape needs depth, steps, num_dirs >= 1 and dt > 0".into(),
            ));
        }
        if !(l.init_scale > 0.0) {
            return Err(AppError::Config(
                "landscape.init_scale must be positive".into(),
            ));
        }
        let v = &self.verify;
        if v.gradient_instances == 0 || v.aw_pairs == 0 || v.runs == 0 || v.seeds == 0 {
            return Err(AppError::Config(
                "verify sample counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Layer widths `(d_x, w, …, w, d_y)` for a factor-flow run of depth `n`.
    pub fn factor_dims(&self, n: usize) -> Vec<usize> {
        let mut dims = vec![self.hidden_width; n + 1];
        dims[0] = self.instance.d_x;
        dims[n] = self.instance.d_y;
        dims
    }
}

/// Parses `a.b.c=value`; the value is read as JSON, falling back to a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("expected key=value, got `{s}`")))?;
    if key.is_empty() {
        return Err(AppError::Config(format!("empty key in `{s}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Deep merge of `src` into `dst`. Every key in `src` must already exist.
fn merge(dst: &mut Value, src: Value, prefix: &str) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                let slot = d.get_mut(&k).ok_or_else(|| unknown_key(&path))?;
                merge(slot, v, &path)?;
            }
            Ok(())
        }
        (dst, src) => {
            *dst = src;
            Ok(())
        }
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m: &mut Map<String, Value>| m.get_mut(part))
            .ok_or_else(|| unknown_key(key))?;
    }
    *node = value;
    Ok(())
}

fn unknown_key(key: &str) -> AppError {
    AppError::Config(format!("unknown config key `{key}`"))
}
