//! Config-file schemas and the override/provenance machinery.
//!
//! Configs are JSON with explicit units: `snr_db` and `sigma2` are mutually
//! exclusive keys, and unknown keys are rejected so typos fail before any
//! computation runs.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;
use crq_core::fixed_point::RegParams;
use crq_core::sim::{sigma2_from_snr_db, ParamSelector, PrecoderBackend};

/// Regularization selection: `"squid"`, `"optimal"`, or an explicit pair.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Named(String),
    Pair(PairSpec),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub rho: f64,
    pub lambda: f64,
}

impl ParamSpec {
    pub fn to_selector(&self) -> Result<ParamSelector, CliError> {
        match self {
            ParamSpec::Named(s) if s == "squid" => Ok(ParamSelector::Squid),
            ParamSpec::Named(s) if s == "optimal" => Ok(ParamSelector::Optimal),
            ParamSpec::Named(s) => Err(CliError::Config(format!(
                "params: expected \"squid\", \"optimal\" or {{rho, lambda}}, got \"{s}\""
            ))),
            ParamSpec::Pair(p) => {
                Ok(ParamSelector::Explicit(RegParams { rho: p.rho, lambda: p.lambda }))
            }
        }
    }
}

/// One noise level, from whichever key the config supplied.
#[derive(Debug, Clone, Copy)]
pub struct NoisePoint {
    pub snr_db: f64,
    pub sigma2: f64,
}

pub fn noise_points(
    snr_db: &Option<Vec<f64>>,
    sigma2: &Option<Vec<f64>>,
) -> Result<Vec<NoisePoint>, CliError> {
    match (snr_db, sigma2) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "keys snr_db and sigma2 are mutually exclusive".into(),
        )),
        (Some(list), None) => Ok(list
            .iter()
            .map(|&db| NoisePoint { snr_db: db, sigma2: sigma2_from_snr_db(db) })
            .collect()),
        (None, Some(list)) => Ok(list
            .iter()
            .map(|&s2| NoisePoint { snr_db: -10.0 * s2.log10(), sigma2: s2 })
            .collect()),
        (None, None) => Err(CliError::Config("one of snr_db or sigma2 is required".into())),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub delta: f64,
    pub snr_db: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub params: ParamSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub delta: f64,
    pub snr_db: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub delta: f64,
    pub n: usize,
    pub snr_db: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub params: ParamSpec,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub backend: PrecoderBackend,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub delta: f64,
    pub snr_db: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_step: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    /// One curve per δ, as in the clustering figure.
    pub delta: Vec<f64>,
    pub n: usize,
    pub snr_db: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub params: ParamSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    pub epsilons: Option<Vec<f64>>,
}

fn default_instances() -> usize {
    8
}

/// Loads the config file, applies `--set key=value` overrides, and returns
/// the final value plus its provenance hash.
pub fn load_config(
    path: &std::path::Path,
    overrides: &[String],
) -> Result<(serde_json::Value, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("config root must be a JSON object".into()))?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got \"{ov}\"")))?;
        let parsed = serde_json::from_str::<serde_json::Value>(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        obj.insert(key.to_string(), parsed);
    }
    let canonical = serde_json::to_string(&value)
        .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
    let digest = Sha256::digest(canonical.as_bytes());
    let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect::<String>();
    Ok((value, hash))
}

/// Deserializes the final config value into a command schema, naming the
/// offending key on failure.
pub fn parse<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("config error: {e}")))
}
