//! Bounded-parallel completion sampling and trace assembly.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::mpsc;

use serde::Serialize;

use bfkit_core::trace::{
    CandidateLogprob, DecodingParams, FinishReason, PromptCase, SequenceTrace, TokenStep,
};

use crate::http::{build_client, post_completion};
use crate::wire::{CompletionRequest, CompletionResponse, LogprobPayload};
use crate::{ClientError, EndpointConfig};

/// How per-sample seeds are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// No seed field sent.
    None,
    /// Every sample carries the same seed.
    Fixed(i64),
    /// Sample i carries base + i.
    Sequential(i64),
}

impl SeedPolicy {
    pub(crate) fn seed_for(&self, sample_index: u32) -> Option<i64> {
        match self {
            SeedPolicy::None => None,
            SeedPolicy::Fixed(seed) => Some(*seed),
            SeedPolicy::Sequential(base) => Some(base + sample_index as i64),
        }
    }
}

/// One sample that failed after exhausting retries.
#[derive(Debug, Clone, Serialize)]
pub struct SampleFailure {
    pub sample_index: u32,
    pub attempts: u32,
    pub message: String,
    /// True when the failure was transport-level (connection refused,
    /// timeout, 5xx) rather than a payload/capability problem.
    pub transport: bool,
}

/// Per-sample request accounting.
#[derive(Debug, Clone, Serialize)]
pub struct SampleDiagnostics {
    pub sample_index: u32,
    pub attempts: u32,
}

/// Result of sampling M completions: traces in sample-index order plus an
/// error manifest for any failed samples.
#[derive(Debug, Default)]
pub struct SampleRun {
    pub traces: Vec<SequenceTrace>,
    pub failures: Vec<SampleFailure>,
    pub diagnostics: Vec<SampleDiagnostics>,
}

impl SampleRun {
    pub fn all_failures_transport(&self) -> bool {
        !self.failures.is_empty() && self.failures.iter().all(|f| f.transport)
    }
}

/// Assigns stable token ids to token strings in first-intern order.
///
/// Server payloads identify tokens by text only; ids exist so traces satisfy
/// the id-based trace model. Interning order is deterministic — candidates
/// are visited sorted by (logprob desc, text asc) — so identical responses
/// always produce identical ids.
#[derive(Debug, Default)]
pub struct TokenInterner {
    ids: BTreeMap<String, u32>,
}

impl TokenInterner {
    pub fn intern(&mut self, text: &str) -> u32 {
        if let Some(id) = self.ids.get(text) {
            return *id;
        }
        let id = self.ids.len() as u32;
        self.ids.insert(text.to_string(), id);
        id
    }
}

pub(crate) fn map_finish_reason(reason: Option<&str>) -> FinishReason {
    match reason {
        Some("stop") | Some("stop_sequence") | Some("eos_token") => FinishReason::StopToken,
        Some("length") => FinishReason::LengthLimit,
        _ => FinishReason::Error,
    }
}

/// Builds token steps from a logprob payload, starting at `first_position`.
/// `take` limits how many leading tokens are consumed (None takes all).
pub(crate) fn build_steps(
    payload: &LogprobPayload,
    endpoint: &EndpointConfig,
    interner: &mut TokenInterner,
    first_position: u32,
    take: Option<usize>,
) -> Result<Vec<TokenStep>, ClientError> {
    let count = take.unwrap_or(payload.tokens.len()).min(payload.tokens.len());
    let mut steps = Vec::with_capacity(count);
    for (offset, token) in payload.tokens.iter().take(count).enumerate() {
        let chosen_logprob = payload
            .token_logprobs
            .get(offset)
            .copied()
            .flatten()
            .ok_or_else(|| {
                ClientError::Capability(format!(
                    "server did not report a logprob for token {offset}"
                ))
            })?;
        let mut entries: BTreeMap<&str, f64> = payload
            .top_logprobs
            .get(offset)
            .map(|m| m.iter().map(|(t, lp)| (t.as_str(), *lp)).collect())
            .unwrap_or_default();
        entries.entry(token.as_str()).or_insert(chosen_logprob);

        for (text, lp) in &entries {
            if *lp > 1e-6 {
                return Err(ClientError::Capability(format!(
                    "server returned positive logprob {lp} for token {text:?}"
                )));
            }
        }
        // Deterministic intern order: by logprob descending, then text.
        let mut ordered: Vec<(&str, f64)> = entries.into_iter().collect();
        ordered.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(b.0))
        });
        let mut candidates: Vec<CandidateLogprob> = ordered
            .into_iter()
            .map(|(text, lp)| CandidateLogprob::new(interner.intern(text), text, lp.min(0.0)))
            .collect();
        candidates.sort_by(|a, b| {
            b.logprob_raw
                .partial_cmp(&a.logprob_raw)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.token_id.cmp(&b.token_id))
        });
        let coverage: f64 = candidates.iter().map(|c| c.logprob_raw.exp()).sum();
        steps.push(TokenStep {
            position: first_position + offset as u32,
            chosen_token_id: interner.intern(token),
            temperature_applied: endpoint.reports_scaled_logprobs,
            coverage_mass: coverage.min(1.0),
            candidates,
            extra: Default::default(),
        });
    }
    Ok(steps)
}

pub(crate) fn first_choice(response: &CompletionResponse) -> Result<&crate::wire::CompletionChoice, ClientError> {
    response
        .choices
        .first()
        .ok_or_else(|| ClientError::Capability("response carries no choices".into()))
}

pub(crate) fn payload_of(choice: &crate::wire::CompletionChoice) -> Result<&LogprobPayload, ClientError> {
    choice.logprobs.as_ref().ok_or_else(|| {
        ClientError::Capability("server did not return per-token logprobs".into())
    })
}

fn assemble_trace(
    response: &CompletionResponse,
    endpoint: &EndpointConfig,
    params: &DecodingParams,
    prompt_id: &str,
    sample_index: u32,
    interner: &mut TokenInterner,
) -> Result<SequenceTrace, ClientError> {
    let choice = first_choice(response)?;
    let payload = payload_of(choice)?;
    if payload.tokens.is_empty() {
        return Err(ClientError::Capability("empty token stream".into()));
    }
    let steps = build_steps(payload, endpoint, interner, 1, None)?;
    Ok(SequenceTrace {
        prompt_id: prompt_id.to_string(),
        sample_index,
        finish_reason: map_finish_reason(choice.finish_reason.as_deref()),
        decoding: params.clone(),
        steps,
        extra: Default::default(),
    })
}

/// Samples `m` completions for one prompt with at most
/// `endpoint.max_parallel` requests in flight. Traces come back in
/// sample-index order regardless of completion order; failed samples are
/// reported in the error manifest instead of aborting the run. A server that
/// cannot produce logprobs at all is a capability error.
pub fn sample_completions(
    endpoint: &EndpointConfig,
    prompt: &PromptCase,
    params: &DecodingParams,
    m: u32,
    seed_policy: SeedPolicy,
    max_tokens: u32,
) -> Result<SampleRun, ClientError> {
    endpoint.validate()?;
    if m == 0 {
        return Ok(SampleRun::default());
    }
    let client = build_client(endpoint)?;
    let next = AtomicU32::new(0);
    let (tx, rx) = mpsc::channel();
    let workers = endpoint.max_parallel.min(m as usize);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let client = &client;
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= m {
                    break;
                }
                let request = CompletionRequest {
                    model: endpoint.model_name.clone(),
                    prompt: prompt.prompt_text.clone(),
                    max_tokens,
                    temperature: params.temperature,
                    top_p: params.nucleus_p,
                    n: 1,
                    logprobs: endpoint.top_logprobs_k,
                    seed: seed_policy.seed_for(index),
                };
                let outcome = post_completion(client, endpoint, &request);
                tx.send((index, outcome)).expect("collector alive");
            });
        }
        drop(tx);
    });

    let mut slots: Vec<Option<Result<(CompletionResponse, u32), (u32, ClientError)>>> =
        (0..m).map(|_| None).collect();
    for (index, outcome) in rx {
        slots[index as usize] = Some(outcome);
    }

    let mut run = SampleRun::default();
    let mut interner = TokenInterner::default();
    for (index, slot) in slots.into_iter().enumerate() {
        let index = index as u32;
        match slot.expect("every sample produced an outcome") {
            Ok((response, attempts)) => {
                // Payload defects are capability problems: they fail the call.
                let trace = assemble_trace(
                    &response,
                    endpoint,
                    params,
                    &prompt.prompt_id,
                    index,
                    &mut interner,
                )?;
                run.traces.push(trace);
                run.diagnostics.push(SampleDiagnostics {
                    sample_index: index,
                    attempts,
                });
            }
            Err((attempts, error)) => {
                if error.is_capability() {
                    return Err(error);
                }
                run.failures.push(SampleFailure {
                    sample_index: index,
                    attempts,
                    transport: matches!(
                        error,
                        ClientError::Http(_) | ClientError::Status { status: 500.., .. }
                    ),
                    message: error.to_string(),
                });
            }
        }
    }
    if run.traces.is_empty() && !run.failures.is_empty() && !run.all_failures_transport() {
        return Err(ClientError::AllSamplesFailed(m as usize));
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{response_from_steps, MockStep};

    fn endpoint() -> EndpointConfig {
        EndpointConfig::new("http://unused", "m")
    }

    #[test]
    fn interner_assigns_stable_ids() {
        let mut interner = TokenInterner::default();
        assert_eq!(interner.intern(" a"), 0);
        assert_eq!(interner.intern(" b"), 1);
        assert_eq!(interner.intern(" a"), 0);
    }

    #[test]
    fn build_steps_sorts_and_merges_chosen() {
        let resp = response_from_steps(
            &[MockStep::new(" b", -1.2, &[(" a", -0.5), (" c", -2.0)])],
            "stop",
        );
        let payload = resp.choices[0].logprobs.as_ref().unwrap();
        let mut interner = TokenInterner::default();
        let steps = build_steps(payload, &endpoint(), &mut interner, 1, None).unwrap();
        assert_eq!(steps.len(), 1);
        let step = &steps[0];
        assert_eq!(step.candidates.len(), 3);
        // Sorted by logprob descending: " a" (-0.5), " b" (-1.2), " c" (-2.0).
        assert_eq!(step.candidates[0].token_text, " a");
        assert_eq!(step.candidates[1].token_text, " b");
        assert_eq!(step.chosen_token_id, step.candidates[1].token_id);
        assert!(!step.is_degraded());
    }

    #[test]
    fn build_steps_rejects_positive_logprobs() {
        let resp = response_from_steps(&[MockStep::new(" a", 0.2, &[])], "stop");
        let payload = resp.choices[0].logprobs.as_ref().unwrap();
        let mut interner = TokenInterner::default();
        let err = build_steps(payload, &endpoint(), &mut interner, 1, None).unwrap_err();
        assert!(err.is_capability());
    }

    #[test]
    fn seed_policy_derivations() {
        assert_eq!(SeedPolicy::None.seed_for(3), None);
        assert_eq!(SeedPolicy::Fixed(7).seed_for(3), Some(7));
        assert_eq!(SeedPolicy::Sequential(10).seed_for(3), Some(13));
    }

    #[test]
    fn finish_reason_mapping() {
        assert_eq!(map_finish_reason(Some("stop")), FinishReason::StopToken);
        assert_eq!(map_finish_reason(Some("length")), FinishReason::LengthLimit);
        assert_eq!(map_finish_reason(Some("weird")), FinishReason::Error);
        assert_eq!(map_finish_reason(None), FinishReason::Error);
    }
}
