//! Branching-factor (BF) estimation for autoregressive text generators.
//!
//! The toolkit reconstructs the truncated sampling distribution a generator
//! actually drew from (temperature scaling followed by nucleus truncation),
//! computes token-wise conditional entropies over it, and aggregates them
//! into the branching factor: the exponentiated length-averaged entropy,
//! i.e. the effective number of plausible next tokens per step.
//!
//! Two estimators are provided. The entropy estimator exponentiates the mean
//! per-token entropy across sampled sequences; the NLL estimator exploits the
//! asymptotic equipartition property and exponentiates the mean length-averaged
//! negative log-likelihood of the samples themselves, which needs only sequence
//! logprobs and stays reliable for long outputs.
//!
//! Modules:
//! - [`trace`]: canonical data model and the JSONL trace interchange format.
//! - [`decoding`]: truncated-distribution reconstruction and step entropy.
//! - [`bf`]: BF estimators, task aggregation, positional trajectories, EMA.
//! - [`synth`]: synthetic token processes with known entropy rates, used as
//!   ground-truth oracles for estimator recovery and concentration checks.
//! - [`analysis`]: Pareto factor attribution, majority-vote bootstrap variance,
//!   lexical diversity, Min-K% and correlation diagnostics.

pub mod analysis;
pub mod bf;
pub mod decoding;
pub mod stats;
pub mod synth;
pub mod trace;

pub use bf::{BfEstimate, Estimator, TrajectoryPoint};
pub use decoding::TruncatedDistribution;
pub use synth::{AepReport, SyntheticProcess};
pub use trace::{
    CandidateLogprob, DecodingParams, FinishReason, PromptCase, RunManifest, SequenceTrace,
    TokenStep,
};
