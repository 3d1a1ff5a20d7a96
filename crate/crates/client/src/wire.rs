//! Request/response types for the legacy completions wire format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ClientError;

/// POST body for `{base_url}/v1/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub n: u32,
    /// Number of top alternatives to return per token.
    pub logprobs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub model: String,
    pub choices: Vec<CompletionChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionChoice {
    #[serde(default)]
    pub index: u32,
    #[serde(default)]
    pub text: String,
    pub logprobs: Option<LogprobPayload>,
    #[serde(default)]
    pub finish_reason: Option<String>,
}

/// Per-token logprob arrays as emitted by OpenAI-compatible servers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogprobPayload {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<Option<f64>>,
    /// One map token-text → logprob per position.
    #[serde(default)]
    pub top_logprobs: Vec<BTreeMap<String, f64>>,
}

/// Loads a canned [`CompletionResponse`] from a JSON fixture file.
pub fn load_response_fixture(path: &Path) -> Result<CompletionResponse, ClientError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ClientError::InvalidConfig(format!("cannot read fixture {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        ClientError::InvalidConfig(format!("malformed fixture {}: {e}", path.display()))
    })
}

/// Convenience constructor for one response step in tests and mock servers.
#[derive(Debug, Clone)]
pub struct MockStep {
    pub token: String,
    pub logprob: f64,
    /// Alternatives (token text → logprob); the chosen token may be omitted
    /// and is merged in during assembly.
    pub top: Vec<(String, f64)>,
}

impl MockStep {
    pub fn new(token: impl Into<String>, logprob: f64, top: &[(&str, f64)]) -> Self {
        Self {
            token: token.into(),
            logprob,
            top: top.iter().map(|(t, lp)| (t.to_string(), *lp)).collect(),
        }
    }
}

/// Builds a single-choice response from per-step token/logprob specs.
pub fn response_from_steps(steps: &[MockStep], finish_reason: &str) -> CompletionResponse {
    let tokens: Vec<String> = steps.iter().map(|s| s.token.clone()).collect();
    let token_logprobs: Vec<Option<f64>> = steps.iter().map(|s| Some(s.logprob)).collect();
    let top_logprobs: Vec<BTreeMap<String, f64>> = steps
        .iter()
        .map(|s| {
            let mut map: BTreeMap<String, f64> =
                s.top.iter().map(|(t, lp)| (t.clone(), *lp)).collect();
            map.entry(s.token.clone()).or_insert(s.logprob);
            map
        })
        .collect();
    CompletionResponse {
        id: "mock".into(),
        model: "mock-model".into(),
        choices: vec![CompletionChoice {
            index: 0,
            text: tokens.concat(),
            logprobs: Some(LogprobPayload {
                tokens,
                token_logprobs,
                top_logprobs,
            }),
            finish_reason: Some(finish_reason.to_string()),
        }],
    }
}
