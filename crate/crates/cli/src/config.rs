use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use wflab_core::bounds::Tolerance;
use wflab_core::model::HypothesisProbe;
use wflab_core::{ActionOptions, JumpKernel, Observable, RateToSetOptions, TargetSet, TiltPolicy};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem; always maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugate: Option<ConjugateBlock>,
}

/// The kernel inline, or a path to a kernel JSON file relative to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(JumpKernel),
    File(PathBuf),
}

fn default_horizon() -> f64 {
    1.0
}

fn action_defaults() -> ActionOptions {
    ActionOptions::default()
}

fn default_segments() -> usize {
    action_defaults().segments
}

fn default_restarts() -> usize {
    action_defaults().restarts
}

fn default_perturbation() -> f64 {
    action_defaults().perturbation
}

fn default_max_iter() -> usize {
    action_defaults().max_iter
}

fn default_grid() -> usize {
    RateToSetOptions::default().grid_per_axis
}

fn default_polish() -> usize {
    RateToSetOptions::default().polish_rounds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBlock {
    pub x: Vec<f64>,
    /// Fixed endpoint; exclusive with `target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSet>,
    #[serde(default = "default_segments", alias = "N")]
    pub segments: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grid")]
    pub grid_per_axis: usize,
    #[serde(default = "default_polish")]
    pub polish_rounds: usize,
}

impl ActionBlock {
    pub fn options(&self, seed: u64) -> RateToSetOptions {
        RateToSetOptions {
            action: ActionOptions {
                segments: self.segments,
                restarts: self.restarts,
                perturbation: self.perturbation,
                max_iter: self.max_iter,
                seed,
                horizon: self.horizon,
            },
            grid_per_axis: self.grid_per_axis,
            polish_rounds: self.polish_rounds,
        }
    }
}

fn default_sim_paths() -> usize {
    10_000
}

fn default_substep_factor() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub h: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub x0: Vec<f64>,
    #[serde(default = "default_sim_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    #[serde(default = "default_substep_factor")]
    pub substep_factor: f64,
    pub observable: Observable,
    /// Tilt covector; sampling is plain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<f64>>,
    /// Estimate the mean of the exponential martingale instead of the observable.
    #[serde(default)]
    pub martingale: bool,
    /// Number of leading paths written to trajectories.csv.
    #[serde(default)]
    pub dump_paths: usize,
}

fn default_verify_paths() -> usize {
    100_000
}

fn default_max_rel_stderr() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub x0: Vec<f64>,
    pub target: TargetSet,
    pub h_list: Vec<f64>,
    #[serde(default = "default_verify_paths")]
    pub paths: usize,
    #[serde(default)]
    pub tilt_policy: TiltPolicy,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default = "default_max_rel_stderr")]
    pub max_relative_stderr: f64,
    #[serde(default)]
    pub rate: RateToSetOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    pub radius: f64,
    #[serde(default)]
    pub probe: HypothesisProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub t: f64,
    pub h_list: Vec<f64>,
    pub radius: f64,
    /// Directions of norm `radius`; the signed coordinate axes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
}

fn default_minorant_radius() -> f64 {
    2.0
}

fn default_chi() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateBlock {
    pub x: Vec<f64>,
    /// Velocities at which `L`, the minorant and `L_1` are tabulated.
    #[serde(default)]
    pub alphas: Vec<Vec<f64>>,
    #[serde(default = "default_minorant_radius")]
    pub radius: f64,
    #[serde(default = "default_chi")]
    pub chi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rate,
    Simulate,
    VerifyLdp,
    CheckHypotheses,
    Bounds,
    Minorant,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Simulate => "simulate",
            Command::VerifyLdp => "verify-ldp",
            Command::CheckHypotheses => "check-hypotheses",
            Command::Bounds => "bounds",
            Command::Minorant => "minorant",
        }
    }

    /// Config block the subcommand reads.
    pub fn block(self) -> &'static str {
        match self {
            Command::Rate => "action",
            Command::Simulate => "simulate",
            Command::VerifyLdp => "verify",
            Command::CheckHypotheses => "check",
            Command::Bounds => "bounds",
            Command::Minorant => "conjugate",
        }
    }
}

const BLOCKS: [&str; 6] = ["action", "simulate", "verify", "check", "bounds", "conjugate"];

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        serde_json::from_value(v).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn present_blocks(&self) -> Vec<&'static str> {
        let present = [
            self.action.is_some(),
            self.simulate.is_some(),
            self.verify.is_some(),
            self.check.is_some(),
            self.bounds.is_some(),
            self.conjugate.is_some(),
        ];
        BLOCKS.iter().zip(present).filter(|(_, p)| *p).map(|(b, _)| *b).collect()
    }

    /// Schema version and the single command block matching `cmd`.
    pub fn validate_for(&self, cmd: Command) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let blocks = self.present_blocks();
        match blocks.as_slice() {
            [b] if *b == cmd.block() => Ok(()),
            [b] => Err(bad(format!("`{}` needs a `{}` block, found `{b}`", cmd.name(), cmd.block()))),
            [] => Err(bad(format!("no command block; `{}` needs `{}`", cmd.name(), cmd.block()))),
            many => Err(bad(format!("exactly one command block allowed, found {}", many.join(", ")))),
        }
    }

    /// Load and validate the kernel; file paths are relative to `base`.
    pub fn kernel(&self, base: &Path) -> Result<JumpKernel, ConfigError> {
        let kernel = match &self.model {
            ModelSource::Inline(k) => k.clone(),
            ModelSource::File(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| bad(format!("model file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| bad(format!("model file {}: {e}", path.display())))?
            }
        };
        kernel.validate().map_err(|e| bad(e.to_string()))?;
        Ok(kernel)
    }
}

/// Set a dotted key such as `verify.rate.action.segments`. The value is parsed
/// as JSON, and taken as a plain string if that fails. Numeric segments index
/// into arrays.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key, value)
}

pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("malformed override key {key:?}")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad(format!("{key}: {part:?} is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| bad(format!("{key}: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad(format!("{key}: {part:?} does not address an object or array"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Split `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(bad(format!("override {s:?} is not of the form key=value"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "schema_version": 1,
            "model": {"dim": 1, "atoms": [{"z": [1.0], "rate": {"type": "constant", "value": 1.0}}], "rate_bound": 1.0},
            "action": {"x": [0.0], "y": [1.0], "N": 20}
        })
    }

    #[test]
    fn defaults_and_alias() {
        let c = ExperimentConfig::from_value(minimal()).unwrap();
        let a = c.action.as_ref().unwrap();
        assert_eq!(a.segments, 20);
        assert_eq!(a.restarts, 8);
        assert_eq!(c.seed, 0);
        c.validate_for(Command::Rate).unwrap();
        assert!(c.validate_for(Command::Bounds).is_err());
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_value(minimal()).unwrap();
        let again = ExperimentConfig::from_value(c.to_value()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal();
        v["action"]["restart"] = json!(3);
        assert!(ExperimentConfig::from_value(v).is_err());
    }

    #[test]
    fn overrides() {
        let mut v = minimal();
        apply_override(&mut v, "action.restarts", "3").unwrap();
        apply_override(&mut v, "name", "sweep-a").unwrap();
        apply_override(&mut v, "action.x.0", "0.5").unwrap();
        assert_eq!(v["action"]["restarts"], json!(3));
        assert_eq!(v["name"], json!("sweep-a"));
        assert_eq!(v["action"]["x"], json!([0.5]));
        assert!(apply_override(&mut v, "action.x.4", "1").is_err());
        assert!(apply_override(&mut v, "action.N.inner", "1").is_err());
        assert!(parse_override("novalue").is_err());
        assert_eq!(parse_override("a.b=c=d").unwrap(), ("a.b".into(), "c=d".into()));
    }

    #[test]
    fn file_models_resolve_against_the_config_dir() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        std::fs::write(dir.join("k.json"), JumpKernel::unit_jump(1.0).to_json_string()).unwrap();
        let mut v = minimal();
        v["model"] = json!("k.json");
        let c = ExperimentConfig::from_value(v).unwrap();
        assert_eq!(c.kernel(dir).unwrap(), JumpKernel::unit_jump(1.0));
        assert!(c.kernel(Path::new("/nonexistent")).is_err());
    }
}
