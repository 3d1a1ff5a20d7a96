//! Run configuration: a TOML file with a strict schema (unknown keys are
//! rejected). Environment variables override secrets only: `BFKIT_API_KEY`
//! for `[endpoint]` and `BFKIT_ALIGNED_API_KEY` for `[aligned_endpoint]`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use bfkit_client::{EndpointConfig, RetryPolicy, SeedPolicy};
use bfkit_core::bf::Estimator;
use bfkit_core::trace::DecodingParams;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub endpoint: Option<EndpointSection>,
    pub aligned_endpoint: Option<EndpointSection>,
    #[serde(default)]
    pub decoding: DecodingSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub nudging: NudgingSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    /// Factor domains: factor name → allowed levels.
    #[serde(default)]
    pub factors: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key: Option<String>,
    /// When true, a missing api key (config and environment) is a config error.
    #[serde(default)]
    pub require_api_key: bool,
    #[serde(default = "default_top_k")]
    pub top_logprobs_k: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retry_attempts")]
    pub retry_max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub reports_scaled_logprobs: bool,
}

fn default_top_k() -> u32 {
    5
}
fn default_max_parallel() -> usize {
    4
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retry_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    100
}

impl EndpointSection {
    pub fn to_endpoint(&self, env_var: &str) -> Result<EndpointConfig, CliError> {
        let api_key = std::env::var(env_var).ok().or_else(|| self.api_key.clone());
        if self.require_api_key && api_key.is_none() {
            return Err(CliError::Config(format!(
                "endpoint {} requires an api key; set it in the config or via {env_var}",
                self.base_url
            )));
        }
        if self.max_parallel < 1 {
            return Err(CliError::Config("max_parallel must be >= 1".into()));
        }
        Ok(EndpointConfig {
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            api_key,
            top_logprobs_k: self.top_logprobs_k,
            max_parallel: self.max_parallel,
            timeout: Duration::from_millis(self.timeout_ms),
            retry: RetryPolicy {
                max_attempts: self.retry_max_attempts,
                backoff_base: Duration::from_millis(self.retry_backoff_ms),
            },
            reports_scaled_logprobs: self.reports_scaled_logprobs,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingSection {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_nucleus_p")]
    pub nucleus_p: f64,
    #[serde(default)]
    pub seed: i64,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_nucleus_p() -> f64 {
    0.9
}

impl Default for DecodingSection {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            nucleus_p: default_nucleus_p(),
            seed: 0,
        }
    }
}

impl DecodingSection {
    pub fn to_params(&self) -> Result<DecodingParams, CliError> {
        if !(self.temperature > 0.0) {
            return Err(CliError::Config(format!(
                "decoding.temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(CliError::Config(format!(
                "decoding.nucleus_p must be in (0, 1], got {}",
                self.nucleus_p
            )));
        }
        Ok(DecodingParams::new(self.temperature, self.nucleus_p, self.seed))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_sample_count")]
    pub sample_count_m: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// "none", "fixed", or "sequential" (seeds derive from decoding.seed).
    #[serde(default = "default_seed_policy")]
    pub seed_policy: String,
}

fn default_sample_count() -> u32 {
    50
}
fn default_max_tokens() -> u32 {
    256
}
fn default_seed_policy() -> String {
    "sequential".into()
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            sample_count_m: default_sample_count(),
            max_tokens: default_max_tokens(),
            seed_policy: default_seed_policy(),
        }
    }
}

impl SamplingSection {
    pub fn seed_policy(&self, base_seed: i64) -> Result<SeedPolicy, CliError> {
        match self.seed_policy.as_str() {
            "none" => Ok(SeedPolicy::None),
            "fixed" => Ok(SeedPolicy::Fixed(base_seed)),
            "sequential" => Ok(SeedPolicy::Sequential(base_seed)),
            other => Err(CliError::Config(format!(
                "sampling.seed_policy must be none|fixed|sequential, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NudgingSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_injected")]
    pub max_injected_per_event: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_gamma() -> f64 {
    0.4
}
fn default_max_injected() -> u32 {
    8
}

impl Default for NudgingSection {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            max_injected_per_event: default_max_injected(),
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_estimator")]
    pub kind: String,
}

fn default_estimator() -> String {
    "entropy".into()
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            kind: default_estimator(),
        }
    }
}

impl EstimatorSection {
    pub fn to_estimator(&self) -> Result<Estimator, CliError> {
        parse_estimator(&self.kind)
    }
}

pub fn parse_estimator(name: &str) -> Result<Estimator, CliError> {
    match name {
        "entropy" => Ok(Estimator::Entropy),
        "nll" => Ok(Estimator::Nll),
        other => Err(CliError::Config(format!(
            "estimator must be entropy|nll, got {other:?}"
        ))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Loads the config when a path is given, otherwise the defaults.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(path) => Self::load(path),
            None => Ok(Self::default()),
        }
    }

    /// Joins relative output paths onto the configured output directory.
    pub fn resolve_out(&self, out: &Path) -> PathBuf {
        if out.is_absolute() || self.output.dir == Path::new(".") {
            out.to_path_buf()
        } else {
            self.output.dir.join(out)
        }
    }

    /// Estimator choice: explicit flag wins over the config section.
    pub fn resolve_estimator(&self, flag: Option<&str>) -> Result<Estimator, CliError> {
        match flag {
            Some(name) => parse_estimator(name),
            None => self.estimator.to_estimator(),
        }
    }

    /// Seed: explicit flag wins over [run].seed.
    pub fn resolve_seed(&self, flag: Option<u64>) -> u64 {
        flag.unwrap_or(self.run.seed)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("invalid config {}: {e}", path.display()))
        })?;
        for (factor, levels) in &config.factors {
            if levels.is_empty() {
                return Err(CliError::Config(format!(
                    "factor {factor} declares no levels"
                )));
            }
        }
        Ok(config)
    }

    pub fn required_endpoint(&self) -> Result<&EndpointSection, CliError> {
        self.endpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no [endpoint] section".into()))
    }
}
