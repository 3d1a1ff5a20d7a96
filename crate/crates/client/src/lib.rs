//! Client for OpenAI-compatible `/v1/completions` endpoints that expose
//! per-token top-k logprobs.
//!
//! Three workloads are built on one wire layer:
//! - [`sample_completions`]: bounded-parallel sampling of M completions per
//!   prompt, assembled into canonical traces in sample-index order.
//! - [`resample_from_position`]: fork new continuations mid-generation,
//!   forcing the first resampled token to differ from the original.
//! - [`nudging_generate`]: a base model drafts token by token; whenever its
//!   top-1 probability falls below a threshold, an aligned model injects a
//!   word.
//!
//! Servers return token *strings*; stable integer token ids are assigned by
//! a per-run interner in a deterministic order, so identical server responses
//! always assemble into byte-identical traces.
//!
//! [`mock::MockServer`] provides an in-process HTTP server for offline tests;
//! canned responses can be loaded from JSON fixture files.

use std::time::Duration;

use thiserror::Error;

pub mod mock;
pub mod nudge;
pub mod resample;
pub mod sampler;
pub mod wire;

mod http;

pub use nudge::{nudging_generate, NudgeEvent, NudgeReport, NudgeSettings};
pub use resample::{resample_from_position, ForkOutcome, ForkReport, ForkSample, ForkSettings};
pub use sampler::{sample_completions, SampleDiagnostics, SampleFailure, SampleRun, SeedPolicy};

/// Retry behavior for one logical request.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Base delay; attempt k waits uniform(0, base·2^(k−1)) (full jitter).
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base: Duration::from_millis(100),
        }
    }
}

/// Connection details and capabilities of one completions endpoint.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<String>,
    /// Top-k alternatives requested per token (server-dependent ceiling).
    pub top_logprobs_k: u32,
    pub max_parallel: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Whether the server's reported logprobs already include temperature
    /// scaling; copied onto each step's `temperature_applied` flag.
    pub reports_scaled_logprobs: bool,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            top_logprobs_k: 5,
            max_parallel: 4,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
            reports_scaled_logprobs: false,
        }
    }

    fn validate(&self) -> Result<(), ClientError> {
        if self.max_parallel < 1 {
            return Err(ClientError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        if self.top_logprobs_k < 1 {
            return Err(ClientError::InvalidConfig(
                "top_logprobs_k must be >= 1".into(),
            ));
        }
        if self.retry.max_attempts < 1 {
            return Err(ClientError::InvalidConfig(
                "retry.max_attempts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("endpoint capability error: {0}")]
    Capability(String),

    #[error("invalid client config: {0}")]
    InvalidConfig(String),

    #[error("fork position {position} out of range for trace of length {len}")]
    ForkPositionOutOfRange { position: u32, len: usize },

    #[error("original trace unusable for forking: {0}")]
    InvalidOriginal(String),

    #[error("all {0} samples failed")]
    AllSamplesFailed(usize),
}

impl ClientError {
    /// True for failures that mean the endpoint cannot serve this workload
    /// at all (missing logprobs and the like), as opposed to transient
    /// transport trouble.
    pub fn is_capability(&self) -> bool {
        matches!(self, ClientError::Capability(_))
    }
}
