//! Mid-generation resampling: fork new continuations from an intermediate
//! position of an existing trace, forcing a different first token.

use serde::Serialize;

use bfkit_core::trace::{DecodingParams, PromptCase, SequenceTrace};

use crate::http::{build_client, post_completion};
use crate::sampler::{build_steps, first_choice, map_finish_reason, payload_of, TokenInterner};
use crate::wire::CompletionRequest;
use crate::{ClientError, EndpointConfig};

#[derive(Debug, Clone)]
pub struct ForkSettings {
    /// Force the first resampled token to differ from the original token at
    /// fork_position + 1 (rejection sampling with bounded retries).
    pub constrained: bool,
    pub max_fork_attempts: u32,
    pub max_tokens: u32,
}

impl Default for ForkSettings {
    fn default() -> Self {
        Self {
            constrained: true,
            max_fork_attempts: 5,
            max_tokens: 64,
        }
    }
}

/// Outcome for one forked sample.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ForkOutcome {
    /// Continuation trace; positions restart at fork_position + 1.
    Forked { trace: SequenceTrace },
    /// Every attempt reproduced the original token (its probability is ≈ 1).
    ForcedForkFailed { attempts: u32 },
    /// Transport-level failure after retries.
    Failed { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct ForkSample {
    pub sample_index: u32,
    #[serde(flatten)]
    pub outcome: ForkOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForkReport {
    pub prompt_id: String,
    pub fork_position: u32,
    /// Token text the fork had to avoid (the original at fork_position + 1).
    pub original_next_token: String,
    pub samples: Vec<ForkSample>,
}

impl ForkReport {
    pub fn forked_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| matches!(s.outcome, ForkOutcome::Forked { .. }))
            .count()
    }
}

fn prefix_text(original: &SequenceTrace, fork_position: u32) -> Result<String, ClientError> {
    let mut text = String::new();
    for step in &original.steps[..fork_position as usize] {
        let cand = step.chosen_candidate().ok_or_else(|| {
            ClientError::InvalidOriginal(format!(
                "degraded step at position {} inside the fork prefix",
                step.position
            ))
        })?;
        text.push_str(&cand.token_text);
    }
    Ok(text)
}

/// Forks `m` continuations at `fork_position`: the new prompt is the original
/// prompt plus the detokenized prefix y₁..fork_position, and (when
/// constrained) the first resampled token must differ from the original token
/// at fork_position + 1. Returned traces restart positions at
/// fork_position + 1, so they are reported in fork reports rather than the
/// plain trace interchange.
pub fn resample_from_position(
    endpoint: &EndpointConfig,
    prompt: &PromptCase,
    original: &SequenceTrace,
    fork_position: u32,
    params: &DecodingParams,
    m: u32,
    settings: &ForkSettings,
) -> Result<ForkReport, ClientError> {
    endpoint.validate()?;
    if fork_position < 1 || (fork_position as usize) >= original.steps.len() {
        return Err(ClientError::ForkPositionOutOfRange {
            position: fork_position,
            len: original.steps.len(),
        });
    }
    let prefix = prefix_text(original, fork_position)?;
    let original_next = original.steps[fork_position as usize]
        .chosen_candidate()
        .ok_or_else(|| {
            ClientError::InvalidOriginal(format!(
                "degraded step at fork position {}",
                fork_position + 1
            ))
        })?
        .token_text
        .clone();

    let client = build_client(endpoint)?;
    let forked_prompt = format!("{}{}", prompt.prompt_text, prefix);
    let mut samples = Vec::with_capacity(m as usize);
    let mut interner = TokenInterner::default();
    for index in 0..m {
        let mut outcome = None;
        let mut attempts_used = 0;
        for attempt in 0..settings.max_fork_attempts {
            attempts_used = attempt + 1;
            let request = CompletionRequest {
                model: endpoint.model_name.clone(),
                prompt: forked_prompt.clone(),
                max_tokens: settings.max_tokens,
                temperature: params.temperature,
                top_p: params.nucleus_p,
                n: 1,
                logprobs: endpoint.top_logprobs_k,
                // Vary the seed across samples and attempts so seeded servers
                // actually produce alternatives.
                seed: Some(params.seed + index as i64 * 131 + attempt as i64),
            };
            match post_completion(&client, endpoint, &request) {
                Ok((response, _)) => {
                    let choice = first_choice(&response)?;
                    let payload = payload_of(choice)?;
                    if payload.tokens.is_empty() {
                        return Err(ClientError::Capability("empty token stream".into()));
                    }
                    if settings.constrained && payload.tokens[0] == original_next {
                        continue; // rejected, try again
                    }
                    let steps = build_steps(
                        payload,
                        endpoint,
                        &mut interner,
                        fork_position + 1,
                        None,
                    )?;
                    outcome = Some(ForkOutcome::Forked {
                        trace: SequenceTrace {
                            prompt_id: original.prompt_id.clone(),
                            sample_index: index,
                            finish_reason: map_finish_reason(choice.finish_reason.as_deref()),
                            decoding: params.clone(),
                            steps,
                            extra: Default::default(),
                        },
                    });
                    break;
                }
                Err((_, error)) => {
                    if error.is_capability() {
                        return Err(error);
                    }
                    outcome = Some(ForkOutcome::Failed {
                        message: error.to_string(),
                    });
                    break;
                }
            }
        }
        samples.push(ForkSample {
            sample_index: index,
            outcome: outcome.unwrap_or(ForkOutcome::ForcedForkFailed {
                attempts: attempts_used,
            }),
        });
    }
    Ok(ForkReport {
        prompt_id: original.prompt_id.clone(),
        fork_position,
        original_next_token: original_next,
        samples,
    })
}
