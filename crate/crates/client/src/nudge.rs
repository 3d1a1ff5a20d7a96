//! Nudging orchestration: a base model drafts token by token; when its top-1
//! probability falls below a threshold, an aligned model injects a word.
//!
//! "One word" is approximated tokenizer-agnostically: tokens up to (not
//! including) the next whitespace-initial token, hard-capped per event.

use serde::Serialize;

use bfkit_core::trace::{DecodingParams, FinishReason, PromptCase, SequenceTrace, TokenStep};

use crate::http::{build_client, post_completion};
use crate::sampler::{build_steps, first_choice, payload_of, TokenInterner};
use crate::wire::CompletionRequest;
use crate::{ClientError, EndpointConfig};

#[derive(Debug, Clone)]
pub struct NudgeSettings {
    /// Nudge whenever the base model's top-1 probability drops below this.
    /// The default of 0.4 is a toolkit choice, not a published value.
    pub gamma: f64,
    pub max_tokens: u32,
    /// Hard cap on injected tokens per event.
    pub max_injected_per_event: u32,
}

impl Default for NudgeSettings {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            max_tokens: 256,
            max_injected_per_event: 8,
        }
    }
}

/// One switch to the aligned model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NudgeEvent {
    /// Position of the first injected token.
    pub position: u32,
    /// Base model's top-1 probability that triggered the event (< gamma).
    pub base_top1_prob: f64,
    pub injected_text: String,
    pub injected_token_count: u32,
}

/// Merged generation plus nudge accounting.
#[derive(Debug, Clone, Serialize)]
pub struct NudgeReport {
    pub trace: SequenceTrace,
    pub events: Vec<NudgeEvent>,
    /// Injected tokens / total tokens.
    pub nudging_ratio: f64,
}

impl NudgeReport {
    pub fn injected_tokens(&self) -> u32 {
        self.events.iter().map(|e| e.injected_token_count).sum()
    }
}

/// Number of leading tokens forming "one word": the first token always
/// belongs, subsequent tokens stop at the first whitespace-initial one.
fn word_token_count(tokens: &[String], cap: usize) -> usize {
    let mut take = 1usize;
    while take < tokens.len().min(cap) {
        if tokens[take].starts_with(|c: char| c.is_whitespace()) {
            break;
        }
        take += 1;
    }
    take.min(cap.max(1))
}

fn top1_probability(payload: &crate::wire::LogprobPayload, chosen_logprob: f64) -> f64 {
    let best = payload
        .top_logprobs
        .first()
        .map(|m| m.values().copied().fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::NEG_INFINITY)
        .max(chosen_logprob);
    best.exp().min(1.0)
}

/// Drafts with `base` and injects words from `aligned` whenever the base
/// model's top-1 probability is below `settings.gamma`. Terminates on a stop
/// finish or at `settings.max_tokens` tokens.
pub fn nudging_generate(
    base: &EndpointConfig,
    aligned: &EndpointConfig,
    prompt: &PromptCase,
    params: &DecodingParams,
    settings: &NudgeSettings,
) -> Result<NudgeReport, ClientError> {
    base.validate()?;
    aligned.validate()?;
    if !(settings.gamma > 0.0 && settings.gamma < 1.0) {
        return Err(ClientError::InvalidConfig(format!(
            "nudge gamma must be in (0, 1), got {}",
            settings.gamma
        )));
    }
    if settings.max_tokens == 0 {
        return Err(ClientError::InvalidConfig("max_tokens must be >= 1".into()));
    }

    let base_client = build_client(base)?;
    let aligned_client = build_client(aligned)?;
    let mut interner = TokenInterner::default();
    let mut steps: Vec<TokenStep> = Vec::new();
    let mut events: Vec<NudgeEvent> = Vec::new();
    let mut generated = String::new();
    let mut finish = FinishReason::LengthLimit;

    while (steps.len() as u32) < settings.max_tokens {
        let position = steps.len() as u32 + 1;
        let request = CompletionRequest {
            model: base.model_name.clone(),
            prompt: format!("{}{}", prompt.prompt_text, generated),
            max_tokens: 1,
            temperature: params.temperature,
            top_p: params.nucleus_p,
            n: 1,
            logprobs: base.top_logprobs_k,
            seed: Some(params.seed + position as i64),
        };
        let (response, _) = post_completion(&base_client, base, &request)
            .map_err(|(_, e)| e)?;
        let choice = first_choice(&response)?;
        let payload = payload_of(choice)?;
        if payload.tokens.is_empty() {
            finish = FinishReason::StopToken;
            break;
        }
        let chosen_logprob = payload.token_logprobs[0].ok_or_else(|| {
            ClientError::Capability("missing logprob on drafted token".into())
        })?;
        let top1 = top1_probability(payload, chosen_logprob);

        if top1 >= settings.gamma {
            let mut drafted = build_steps(payload, base, &mut interner, position, Some(1))?;
            generated.push_str(&payload.tokens[0]);
            steps.append(&mut drafted);
            if choice.finish_reason.as_deref() == Some("stop") {
                finish = FinishReason::StopToken;
                break;
            }
            continue;
        }

        // Nudge: ask the aligned model for one word.
        let budget = (settings.max_tokens - steps.len() as u32)
            .min(settings.max_injected_per_event)
            .max(1);
        let request = CompletionRequest {
            model: aligned.model_name.clone(),
            prompt: format!("{}{}", prompt.prompt_text, generated),
            max_tokens: settings.max_injected_per_event.max(1),
            temperature: params.temperature,
            top_p: params.nucleus_p,
            n: 1,
            logprobs: aligned.top_logprobs_k,
            seed: Some(params.seed + position as i64),
        };
        let (response, _) = post_completion(&aligned_client, aligned, &request)
            .map_err(|(_, e)| e)?;
        let choice = first_choice(&response)?;
        let payload = payload_of(choice)?;
        if payload.tokens.is_empty() {
            finish = FinishReason::StopToken;
            break;
        }
        let take = word_token_count(&payload.tokens, budget as usize);
        let mut injected = build_steps(payload, aligned, &mut interner, position, Some(take))?;
        let injected_text: String = payload.tokens[..take].concat();
        generated.push_str(&injected_text);
        events.push(NudgeEvent {
            position,
            base_top1_prob: top1,
            injected_text,
            injected_token_count: take as u32,
        });
        steps.append(&mut injected);
        if choice.finish_reason.as_deref() == Some("stop") && take == payload.tokens.len() {
            finish = FinishReason::StopToken;
            break;
        }
    }

    let total = steps.len() as u32;
    let injected: u32 = events.iter().map(|e| e.injected_token_count).sum();
    let trace = SequenceTrace {
        prompt_id: prompt.prompt_id.clone(),
        sample_index: 0,
        finish_reason: finish,
        decoding: params.clone(),
        steps,
        extra: Default::default(),
    };
    Ok(NudgeReport {
        trace,
        events,
        nudging_ratio: if total == 0 {
            0.0
        } else {
            injected as f64 / total as f64
        },
    })
}
