//! Shared fixtures for the estimator benchmarks.

use bfkit_core::synth::{ProcessKind, SyntheticProcess};
use bfkit_core::trace::SequenceTrace;

/// A six-sided die with unequal faces: log-prob varies, so the estimator
/// paths do real work.
pub fn loaded_die() -> SyntheticProcess {
    SyntheticProcess::new(ProcessKind::IidCategorical {
        probs: vec![0.4, 0.25, 0.15, 0.1, 0.06, 0.04],
    })
    .expect("valid distribution")
}

pub fn oracle_traces(n: usize, m: usize) -> Vec<SequenceTrace> {
    loaded_die().sample_traces(n, m, 0)
}
