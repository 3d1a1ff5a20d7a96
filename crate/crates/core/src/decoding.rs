//! Reconstructs the truncated, renormalized sampling distribution from raw
//! candidate logprobs and computes token-wise conditional entropy.
//!
//! The pipeline mirrors how common inference servers compose sampling:
//! temperature scaling first, then nucleus (top-p) truncation, then
//! renormalization over the kept support. Entropy is computed over the
//! renormalized top-k support; callers are expected to report
//! `coverage_mass` alongside any estimate built from partial snapshots.

use serde::Serialize;
use thiserror::Error;

use crate::stats::log_sum_exp;
use crate::trace::{CandidateLogprob, DecodingParams, TokenStep};

#[derive(Debug, Error)]
pub enum DecodingError {
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),

    #[error("nucleus p must be in (0, 1], got {0}")]
    NucleusPOutOfRange(f64),

    #[error("empty candidate list")]
    EmptyCandidates,
}

/// The renormalized distribution a sampler actually drew from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedDistribution {
    /// (token_id, probability), descending by probability, ties by ascending id.
    /// Probabilities sum to 1 within 1e-9.
    pub support: Vec<(u32, f64)>,
    pub source_params: DecodingParams,
    /// Mass of the kept support under the pre-truncation distribution.
    pub pre_truncation_mass: f64,
}

impl TruncatedDistribution {
    pub fn prob_of(&self, token_id: u32) -> Option<f64> {
        self.support
            .iter()
            .find(|(id, _)| *id == token_id)
            .map(|(_, p)| *p)
    }
}

/// Why a step cannot contribute a (distribution, chosen-logprob) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradedReason {
    /// The recorded chosen token is absent from the candidate snapshot.
    ChosenMissingFromCandidates,
    /// The chosen token fell outside the reconstructed nucleus support.
    ChosenOutsideNucleus,
}

/// Result of pushing one recorded step through the sampling pipeline.
#[derive(Debug, Clone)]
pub enum StepEval {
    Ok {
        dist: TruncatedDistribution,
        /// log P̃(chosen token), ≤ 0.
        chosen_logprob: f64,
        /// Entropy of the truncated distribution in nats.
        entropy: f64,
    },
    Degraded(DegradedReason),
}

fn sort_descending(candidates: &mut [CandidateLogprob]) {
    candidates.sort_by(|a, b| {
        b.logprob_raw
            .partial_cmp(&a.logprob_raw)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.token_id.cmp(&b.token_id))
    });
}

/// Rescales candidate logprobs by 1/T and renormalizes over the given support.
///
/// T=1 reduces to plain renormalization, preserving relative probabilities.
pub fn apply_temperature(
    candidates: &[CandidateLogprob],
    temperature: f64,
) -> Result<Vec<CandidateLogprob>, DecodingError> {
    if !(temperature > 0.0) {
        return Err(DecodingError::NonPositiveTemperature(temperature));
    }
    if candidates.is_empty() {
        return Err(DecodingError::EmptyCandidates);
    }
    let scaled: Vec<f64> = candidates
        .iter()
        .map(|c| c.logprob_raw / temperature)
        .collect();
    let norm = log_sum_exp(&scaled);
    let mut out: Vec<CandidateLogprob> = candidates
        .iter()
        .zip(&scaled)
        .map(|(c, lp)| {
            let mut c = c.clone();
            c.logprob_raw = (lp - norm).min(0.0);
            c
        })
        .collect();
    sort_descending(&mut out);
    Ok(out)
}

/// Keeps the shortest descending-probability prefix whose cumulative
/// pre-truncation probability reaches `p`, then renormalizes it to sum to 1.
///
/// When the snapshot's total mass never reaches `p` (partial top-k coverage),
/// the full snapshot is kept. Ties at the boundary are resolved by ascending
/// token_id so the cut is deterministic.
pub fn nucleus_truncate(
    candidates: &[CandidateLogprob],
    nucleus_p: f64,
) -> Result<TruncatedDistribution, DecodingError> {
    if candidates.is_empty() {
        return Err(DecodingError::EmptyCandidates);
    }
    if !(nucleus_p > 0.0 && nucleus_p <= 1.0) {
        return Err(DecodingError::NucleusPOutOfRange(nucleus_p));
    }
    let mut sorted = candidates.to_vec();
    sort_descending(&mut sorted);

    let mut cum = 0.0;
    let mut cut = sorted.len();
    for (i, cand) in sorted.iter().enumerate() {
        cum += cand.logprob_raw.exp();
        if cum >= nucleus_p - 1e-12 {
            cut = i + 1;
            break;
        }
    }
    let kept = &sorted[..cut];
    let mass: f64 = kept.iter().map(|c| c.logprob_raw.exp()).sum();
    let support = kept
        .iter()
        .map(|c| (c.token_id, c.logprob_raw.exp() / mass))
        .collect();
    Ok(TruncatedDistribution {
        support,
        source_params: DecodingParams::new(1.0, nucleus_p, 0),
        pre_truncation_mass: mass,
    })
}

/// Shannon entropy in nats with the 0·log 0 = 0 convention.
pub fn entropy_nats<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// −Σ p log p over the truncated support, in nats.
pub fn truncated_entropy(dist: &TruncatedDistribution) -> f64 {
    entropy_nats(dist.support.iter().map(|(_, p)| *p))
}

/// Full per-step pipeline: optional temperature scaling, nucleus truncation,
/// then the chosen token's truncated logprob and the step entropy.
///
/// Scaling is skipped when the producer declared `temperature_applied` or the
/// requested temperature is 1. A chosen token missing from the candidates or
/// falling outside the nucleus yields a degraded marker, not an error.
pub fn step_pipeline(
    step: &TokenStep,
    params: &DecodingParams,
) -> Result<StepEval, DecodingError> {
    if !(params.temperature > 0.0) {
        return Err(DecodingError::NonPositiveTemperature(params.temperature));
    }
    if !(params.nucleus_p > 0.0 && params.nucleus_p <= 1.0) {
        return Err(DecodingError::NucleusPOutOfRange(params.nucleus_p));
    }
    if step.chosen_candidate().is_none() {
        return Ok(StepEval::Degraded(DegradedReason::ChosenMissingFromCandidates));
    }
    let scaled;
    let working: &[CandidateLogprob] =
        if step.temperature_applied || params.temperature == 1.0 {
            &step.candidates
        } else {
            scaled = apply_temperature(&step.candidates, params.temperature)?;
            &scaled
        };
    let mut dist = nucleus_truncate(working, params.nucleus_p)?;
    dist.source_params = params.clone();
    let entropy = truncated_entropy(&dist);
    match dist.prob_of(step.chosen_token_id) {
        Some(p) => Ok(StepEval::Ok {
            chosen_logprob: p.ln().min(0.0),
            entropy,
            dist,
        }),
        None => Ok(StepEval::Degraded(DegradedReason::ChosenOutsideNucleus)),
    }
}
