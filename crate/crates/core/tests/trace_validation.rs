//! Validation completeness: mutating any single field out of range must
//! produce a nonempty violation list.

use bfkit_core::trace::{
    validate_trace, CandidateLogprob, DecodingParams, FinishReason, SequenceTrace, TokenStep,
};

fn valid_trace() -> SequenceTrace {
    let step = |position: u32| {
        let candidates = vec![
            CandidateLogprob::new(0, "a", 0.6f64.ln()),
            CandidateLogprob::new(1, "b", 0.4f64.ln()),
        ];
        TokenStep {
            position,
            chosen_token_id: 0,
            temperature_applied: false,
            coverage_mass: 1.0,
            candidates,
            extra: Default::default(),
        }
    };
    SequenceTrace {
        prompt_id: "p".into(),
        sample_index: 0,
        finish_reason: FinishReason::StopToken,
        decoding: DecodingParams::new(0.7, 0.9, 1),
        steps: vec![step(1), step(2), step(3)],
        extra: Default::default(),
    }
}

#[test]
fn baseline_is_valid() {
    assert!(validate_trace(&valid_trace()).is_empty());
}

#[test]
fn every_single_field_mutation_is_caught() {
    let mutations: Vec<(&str, Box<dyn Fn(&mut SequenceTrace)>)> = vec![
        ("positive logprob", Box::new(|t| t.steps[1].candidates[0].logprob_raw = 0.1)),
        ("unsorted candidates", Box::new(|t| t.steps[0].candidates.swap(0, 1))),
        ("duplicate token ids", Box::new(|t| t.steps[2].candidates[1].token_id = 0)),
        ("empty candidates", Box::new(|t| t.steps[0].candidates.clear())),
        ("coverage zero", Box::new(|t| t.steps[1].coverage_mass = 0.0)),
        ("coverage above one", Box::new(|t| t.steps[1].coverage_mass = 1.1)),
        ("coverage negative", Box::new(|t| t.steps[1].coverage_mass = -0.2)),
        ("first position not one", Box::new(|t| t.steps[0].position = 2)),
        ("position gap", Box::new(|t| t.steps[2].position = 5)),
        ("position repeat", Box::new(|t| t.steps[2].position = 2)),
        ("no steps", Box::new(|t| t.steps.clear())),
        ("chosen missing", Box::new(|t| t.steps[0].chosen_token_id = 99)),
        ("zero temperature", Box::new(|t| t.decoding.temperature = 0.0)),
        ("negative temperature", Box::new(|t| t.decoding.temperature = -1.0)),
        ("nucleus p zero", Box::new(|t| t.decoding.nucleus_p = 0.0)),
        ("nucleus p above one", Box::new(|t| t.decoding.nucleus_p = 1.5)),
    ];
    for (name, mutate) in mutations {
        let mut trace = valid_trace();
        mutate(&mut trace);
        assert!(
            !validate_trace(&trace).is_empty(),
            "mutation not caught: {name}"
        );
    }
}

#[test]
fn tie_order_by_ascending_token_id_is_enforced() {
    let mut trace = valid_trace();
    // Equal logprobs, descending ids: violates the tie rule.
    trace.steps[0].candidates[0].logprob_raw = 0.5f64.ln();
    trace.steps[0].candidates[1].logprob_raw = 0.5f64.ln();
    trace.steps[0].candidates[0].token_id = 3;
    trace.steps[0].candidates[1].token_id = 1;
    trace.steps[0].chosen_token_id = 3;
    assert!(!validate_trace(&trace).is_empty());
    // Ascending ids on the tie is fine.
    trace.steps[0].candidates[0].token_id = 1;
    trace.steps[0].candidates[1].token_id = 3;
    trace.steps[0].chosen_token_id = 1;
    assert!(validate_trace(&trace).is_empty());
}
