//! Branching Factor estimators, task-level aggregation, positional
//! trajectories, and EMA smoothing.
//!
//! The entropy estimator averages length-normalized per-token entropy per
//! trace, then exponentiates the mean across traces (geometric-mean
//! semantics). The NLL estimator exponentiates the mean length-averaged
//! negative log-likelihood of the sampled sequences, which concentrates on
//! the entropy rate for long outputs and needs only sequence logprobs.
//!
//! Both estimators are deterministic: traces are reduced in
//! (prompt_id, sample_index) order regardless of input order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoding::{step_pipeline, DecodingError, StepEval};
use crate::stats::{mean, population_std};
use crate::trace::{DecodingParams, PromptCase, SequenceTrace};

/// Smoothing factor used for trajectory plots.
pub const DEFAULT_EMA_ALPHA: f64 = 0.1;
/// Trajectory window width in output tokens.
pub const DEFAULT_WINDOW_LEN: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Entropy,
    Nll,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Entropy => f.write_str("entropy"),
            Self::Nll => f.write_str("nll"),
        }
    }
}

/// How per-trace values are folded into a single BF.
///
/// `ExpOfMean` is the canonical definition (the 1/M sum sits inside the
/// exp, giving geometric-mean semantics); `MeanOfExp` is exposed for
/// sensitivity analysis only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    ExpOfMean,
    MeanOfExp,
}

/// Instance- or task-level BF with provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BfEstimate {
    /// exp of the mean per-sequence value; ≥ 1 for nonnegative entropies.
    pub value: f64,
    pub estimator: Estimator,
    pub n_sequences: usize,
    pub mean_seq_length: f64,
    /// Length-averaged entropy (or NLL) per trace, in nats.
    pub per_sequence_values: Vec<f64>,
    /// Mean coverage_mass over contributing steps.
    pub coverage_summary: f64,
    /// Fraction of input steps excluded as degraded.
    pub degraded_step_ratio: f64,
}

/// Windowed BF at an output-position bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    /// 1-based output position where the window starts.
    pub window_start: u32,
    pub window_len: u32,
    pub bf_raw: f64,
    pub bf_ema: f64,
    /// Steps pooled across traces in this window.
    pub n_steps: usize,
}

/// One point of the NLL dispersion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub checkpoint: usize,
    pub n_traces: usize,
    pub n_excluded: usize,
    /// Population std of the length-averaged NLL over traces.
    pub nll_std: f64,
    /// Mean |NLL̄ − H̄| over traces, both truncated to the checkpoint.
    pub mean_abs_gap: f64,
}

#[derive(Debug, Error)]
pub enum BfError {
    #[error("no traces given")]
    EmptyInput,

    #[error("all {n_traces} traces degraded ({n_degraded_steps} degraded steps); cannot estimate")]
    AllTracesDegraded {
        n_traces: usize,
        n_degraded_steps: usize,
    },

    #[error("degraded step in trace {prompt_id}[{sample_index}] at position {position}; NLL estimator requires complete traces")]
    DegradedStep {
        prompt_id: String,
        sample_index: u32,
        position: u32,
    },

    #[error(transparent)]
    Decoding(#[from] DecodingError),

    #[error("weights must be nonnegative, got {0}")]
    NegativeWeight(f64),

    #[error("weights must sum to 1 ± 1e-9, got {0}")]
    WeightSum(f64),

    #[error("weight given for unknown prompt_id {0}")]
    UnknownPromptId(String),

    #[error("ema alpha must be in (0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("window length must be ≥ 1")]
    InvalidWindow,

    #[error("checkpoints must be ascending and nonempty")]
    InvalidCheckpoints,

    #[error("no trace reaches checkpoint {0}")]
    CheckpointUnreachable(usize),
}

fn sorted_refs(traces: &[SequenceTrace]) -> Vec<&SequenceTrace> {
    let mut refs: Vec<&SequenceTrace> = traces.iter().collect();
    refs.sort_by(|a, b| {
        a.prompt_id
            .cmp(&b.prompt_id)
            .then(a.sample_index.cmp(&b.sample_index))
    });
    refs
}

struct EvaluatedTrace<'a> {
    trace: &'a SequenceTrace,
    /// (entropy, chosen_logprob, coverage_mass) per non-degraded step.
    steps: Vec<(f64, f64, f64)>,
    /// Positions of non-degraded steps, parallel to `steps`.
    positions: Vec<u32>,
    degraded: Vec<u32>,
}

fn evaluate<'a>(
    traces: &'a [SequenceTrace],
    params: &DecodingParams,
) -> Result<Vec<EvaluatedTrace<'a>>, BfError> {
    if traces.is_empty() {
        return Err(BfError::EmptyInput);
    }
    let mut out = Vec::with_capacity(traces.len());
    for trace in sorted_refs(traces) {
        let mut steps = Vec::with_capacity(trace.steps.len());
        let mut positions = Vec::with_capacity(trace.steps.len());
        let mut degraded = Vec::new();
        for step in &trace.steps {
            match step_pipeline(step, params)? {
                StepEval::Ok {
                    chosen_logprob,
                    entropy,
                    ..
                } => {
                    steps.push((entropy, chosen_logprob, step.coverage_mass));
                    positions.push(step.position);
                }
                StepEval::Degraded(_) => degraded.push(step.position),
            }
        }
        out.push(EvaluatedTrace {
            trace,
            steps,
            positions,
            degraded,
        });
    }
    Ok(out)
}

fn finish_estimate(
    estimator: Estimator,
    aggregation: Aggregation,
    per_sequence_values: Vec<f64>,
    lengths: Vec<usize>,
    coverages: Vec<f64>,
    degraded_steps: usize,
    total_steps: usize,
) -> BfEstimate {
    let value = match aggregation {
        Aggregation::ExpOfMean => mean(&per_sequence_values).exp(),
        Aggregation::MeanOfExp => mean(
            &per_sequence_values
                .iter()
                .map(|v| v.exp())
                .collect::<Vec<_>>(),
        ),
    };
    BfEstimate {
        value,
        estimator,
        n_sequences: per_sequence_values.len(),
        mean_seq_length: mean(&lengths.iter().map(|&l| l as f64).collect::<Vec<_>>()),
        per_sequence_values,
        coverage_summary: mean(&coverages),
        degraded_step_ratio: if total_steps == 0 {
            0.0
        } else {
            degraded_steps as f64 / total_steps as f64
        },
    }
}

/// Entropy-based BF: exp of the mean (over traces) of each trace's mean
/// per-token entropy. Degraded steps are excluded; traces with no usable
/// step are dropped and counted in `degraded_step_ratio`.
pub fn bf_entropy(
    traces: &[SequenceTrace],
    params: &DecodingParams,
) -> Result<BfEstimate, BfError> {
    bf_entropy_aggregated(traces, params, Aggregation::ExpOfMean)
}

/// Entropy-based BF with an explicit aggregation mode (sensitivity analysis).
pub fn bf_entropy_aggregated(
    traces: &[SequenceTrace],
    params: &DecodingParams,
    aggregation: Aggregation,
) -> Result<BfEstimate, BfError> {
    let evaluated = evaluate(traces, params)?;
    let mut per_sequence = Vec::new();
    let mut lengths = Vec::new();
    let mut coverages = Vec::new();
    let mut degraded = 0usize;
    let mut total = 0usize;
    for ev in &evaluated {
        degraded += ev.degraded.len();
        total += ev.trace.steps.len();
        if ev.steps.is_empty() {
            continue;
        }
        let entropies: Vec<f64> = ev.steps.iter().map(|(h, _, _)| *h).collect();
        per_sequence.push(mean(&entropies));
        lengths.push(ev.trace.steps.len());
        coverages.extend(ev.steps.iter().map(|(_, _, c)| *c));
    }
    if per_sequence.is_empty() {
        return Err(BfError::AllTracesDegraded {
            n_traces: traces.len(),
            n_degraded_steps: degraded,
        });
    }
    Ok(finish_estimate(
        Estimator::Entropy,
        aggregation,
        per_sequence,
        lengths,
        coverages,
        degraded,
        total,
    ))
}

/// NLL-based BF per the AEP route: exp of the mean (over traces) of each
/// trace's length-averaged negative log-likelihood under the truncated
/// distribution. Any degraded step invalidates the whole estimate.
pub fn bf_nll(traces: &[SequenceTrace], params: &DecodingParams) -> Result<BfEstimate, BfError> {
    let evaluated = evaluate(traces, params)?;
    let mut per_sequence = Vec::new();
    let mut lengths = Vec::new();
    let mut coverages = Vec::new();
    for ev in &evaluated {
        if let Some(&position) = ev.degraded.first() {
            return Err(BfError::DegradedStep {
                prompt_id: ev.trace.prompt_id.clone(),
                sample_index: ev.trace.sample_index,
                position,
            });
        }
        if ev.steps.is_empty() {
            continue;
        }
        let nll = -mean(&ev.steps.iter().map(|(_, lp, _)| *lp).collect::<Vec<_>>());
        per_sequence.push(nll);
        lengths.push(ev.trace.steps.len());
        coverages.extend(ev.steps.iter().map(|(_, _, c)| *c));
    }
    if per_sequence.is_empty() {
        return Err(BfError::EmptyInput);
    }
    Ok(finish_estimate(
        Estimator::Nll,
        Aggregation::ExpOfMean,
        per_sequence,
        lengths,
        coverages,
        0,
        0,
    ))
}

/// Task-level BF: weighted arithmetic mean of instance BF values.
/// Weights default to uniform; when given they must be nonnegative, sum to
/// 1 ± 1e-9, and reference known prompt_ids (missing instances get weight 0).
pub fn bf_task(
    instances: &[(PromptCase, BfEstimate)],
    weights: Option<&std::collections::BTreeMap<String, f64>>,
) -> Result<f64, BfError> {
    if instances.is_empty() {
        return Err(BfError::EmptyInput);
    }
    match weights {
        None => Ok(mean(
            &instances.iter().map(|(_, e)| e.value).collect::<Vec<_>>(),
        )),
        Some(w) => {
            let known: std::collections::BTreeSet<&str> =
                instances.iter().map(|(c, _)| c.prompt_id.as_str()).collect();
            let mut sum = 0.0;
            for (id, weight) in w {
                if *weight < 0.0 {
                    return Err(BfError::NegativeWeight(*weight));
                }
                if !known.contains(id.as_str()) {
                    return Err(BfError::UnknownPromptId(id.clone()));
                }
                sum += weight;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(BfError::WeightSum(sum));
            }
            Ok(instances
                .iter()
                .map(|(c, e)| w.get(&c.prompt_id).copied().unwrap_or(0.0) * e.value)
                .sum())
        }
    }
}

/// Exponential moving average: s₁ = x₁, sₜ = α·xₜ + (1−α)·sₜ₋₁.
pub fn ema(series: &[f64], alpha: f64) -> Result<Vec<f64>, BfError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(BfError::InvalidAlpha(alpha));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut state = f64::NAN;
    for (i, &x) in series.iter().enumerate() {
        state = if i == 0 { x } else { alpha * x + (1.0 - alpha) * state };
        out.push(state);
    }
    Ok(out)
}

/// Windowed BF over fixed-width position buckets, pooled across traces.
///
/// Windows align to position 1; the final partial window is kept; windows
/// that no trace covers are omitted. `bf_ema` smooths the raw series with
/// the given alpha.
pub fn bf_trajectory(
    traces: &[SequenceTrace],
    params: &DecodingParams,
    window_len: u32,
    estimator: Estimator,
    alpha: f64,
) -> Result<Vec<TrajectoryPoint>, BfError> {
    if window_len < 1 {
        return Err(BfError::InvalidWindow);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(BfError::InvalidAlpha(alpha));
    }
    let evaluated = evaluate(traces, params)?;
    // window index -> pooled per-step values
    let mut windows: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
    for ev in &evaluated {
        for ((entropy, logprob, _), position) in ev.steps.iter().zip(&ev.positions) {
            let w = (position - 1) / window_len;
            let value = match estimator {
                Estimator::Entropy => *entropy,
                Estimator::Nll => -logprob,
            };
            windows.entry(w).or_default().push(value);
        }
    }
    let raw: Vec<(u32, f64, usize)> = windows
        .iter()
        .map(|(w, values)| (w * window_len + 1, mean(values).exp(), values.len()))
        .collect();
    let smoothed = ema(&raw.iter().map(|(_, bf, _)| *bf).collect::<Vec<_>>(), alpha)?;
    Ok(raw
        .into_iter()
        .zip(smoothed)
        .map(|((window_start, bf_raw, n_steps), bf_ema)| TrajectoryPoint {
            window_start,
            window_len,
            bf_raw,
            bf_ema,
            n_steps,
        })
        .collect())
}

/// Std of length-averaged NLL and its gap to length-averaged entropy at each
/// sequence-length checkpoint. Traces shorter than a checkpoint (or degraded
/// within its prefix) are excluded there and counted.
pub fn nll_dispersion_curve(
    traces: &[SequenceTrace],
    params: &DecodingParams,
    checkpoints: &[usize],
) -> Result<Vec<DispersionPoint>, BfError> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BfError::InvalidCheckpoints);
    }
    let evaluated = evaluate(traces, params)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &checkpoint in checkpoints {
        let mut nlls = Vec::new();
        let mut gaps = Vec::new();
        let mut excluded = 0usize;
        for ev in &evaluated {
            // A usable prefix has `checkpoint` contiguous non-degraded steps.
            let usable = ev.trace.steps.len() >= checkpoint
                && ev.degraded.iter().all(|&p| p as usize > checkpoint)
                && ev.positions.len() >= checkpoint;
            if !usable {
                excluded += 1;
                continue;
            }
            let prefix = &ev.steps[..checkpoint];
            let nll = -mean(&prefix.iter().map(|(_, lp, _)| *lp).collect::<Vec<_>>());
            let ent = mean(&prefix.iter().map(|(h, _, _)| *h).collect::<Vec<_>>());
            nlls.push(nll);
            gaps.push((nll - ent).abs());
        }
        if nlls.is_empty() {
            return Err(BfError::CheckpointUnreachable(checkpoint));
        }
        out.push(DispersionPoint {
            checkpoint,
            n_traces: nlls.len(),
            n_excluded: excluded,
            nll_std: population_std(&nlls),
            mean_abs_gap: mean(&gaps),
        });
    }
    Ok(out)
}
