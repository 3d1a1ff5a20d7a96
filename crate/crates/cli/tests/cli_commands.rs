//! Command-level tests: file formats, flag defaults, and the exit-code
//! scheme, driven through the compiled binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Output;
use std::sync::Arc;

use bfkit_client::mock::{MockReply, MockServer};
use bfkit_client::wire::{response_from_steps, MockStep};
use bfkit_core::synth::SyntheticProcess;
use bfkit_core::trace::{
    write_traces, CandidateLogprob, DecodingParams, FinishReason, RunManifest, SequenceTrace,
    TokenStep,
};

fn bfkit(args: &[&str], dir: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_bfkit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_oracle_traces(path: &Path, sides: usize, n: usize, m: usize, prompt_id: &str) {
    let process = SyntheticProcess::fair_die(sides).unwrap();
    let traces = process.sample_traces_labeled(n, m, 0, prompt_id);
    let manifest = RunManifest {
        model_name: "oracle".into(),
        endpoint: None,
        sample_count_m: m as u32,
        decoding: DecodingParams::new(1.0, 1.0, 0),
        factor_domains: BTreeMap::new(),
        created_at: "2026-01-01T00:00:00Z".into(),
        extra: Default::default(),
    };
    let mut buf = Vec::new();
    write_traces(&traces, &manifest, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

#[test]
fn diversity_matches_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("texts.txt"), "a b a b\n").unwrap();
    let out = bfkit(&["diversity", "--texts", "texts.txt", "-n", "1"], dir.path());
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("distinct-1 = 0.5"), "{}", stdout(&out));

    let out = bfkit(&["diversity", "--texts", "texts.txt", "-n", "2"], dir.path());
    assert!(stdout(&out).contains("distinct-2 = 0.6666666666666666"));
}

#[test]
fn mink_defaults_to_k20_in_header() {
    let dir = tempfile::tempdir().unwrap();
    write_oracle_traces(&dir.path().join("t.jsonl"), 6, 20, 3, "p0");
    let out = bfkit(
        &["mink", "--traces", "t.jsonl", "--out", "mink.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("mink.csv")).unwrap();
    assert!(csv.starts_with("# k=20\n"), "{csv}");
    assert_eq!(csv.lines().count(), 2 + 3); // comment + header + 3 traces
}

#[test]
fn bf_on_fair_die_traces_recovers_six() {
    let dir = tempfile::tempdir().unwrap();
    write_oracle_traces(&dir.path().join("t.jsonl"), 6, 120, 10, "p0");
    let out = bfkit(
        &["bf", "--traces", "t.jsonl", "--out", "bf.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bf.csv")).unwrap();
    let all_row = csv
        .lines()
        .find(|l| l.starts_with("ALL,"))
        .expect("task-level row");
    let bf: f64 = all_row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((bf - 6.0).abs() < 0.2, "task bf = {bf}");
}

fn write_cases(path: &Path, entries: &[(&str, &str)]) {
    let lines: Vec<String> = entries
        .iter()
        .map(|(id, at)| {
            format!(
                "{{\"prompt_id\":\"{id}\",\"prompt_text\":\"Q\",\"task\":\"synthetic\",\"factors\":{{\"AT\":\"{at}\"}}}}"
            )
        })
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn bf_grouping_by_factor_emits_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    // Two prompts with different branching: die-8 (base) and die-2 (instruct).
    let base = SyntheticProcess::fair_die(8)
        .unwrap()
        .sample_traces_labeled(30, 4, 0, "p-base");
    let instruct = SyntheticProcess::fair_die(2)
        .unwrap()
        .sample_traces_labeled(30, 4, 1, "p-instruct");
    let mut traces = base;
    traces.extend(instruct);
    let manifest = RunManifest {
        model_name: "oracle".into(),
        endpoint: None,
        sample_count_m: 4,
        decoding: DecodingParams::new(1.0, 1.0, 0),
        factor_domains: BTreeMap::from([(
            "AT".to_string(),
            vec!["base".to_string(), "instruct".to_string()],
        )]),
        created_at: "2026-01-01T00:00:00Z".into(),
        extra: Default::default(),
    };
    let mut buf = Vec::new();
    write_traces(&traces, &manifest, &mut buf).unwrap();
    std::fs::write(dir.path().join("t.jsonl"), buf).unwrap();
    write_cases(
        &dir.path().join("cases.jsonl"),
        &[("p-base", "base"), ("p-instruct", "instruct")],
    );

    let out = bfkit(
        &[
            "bf",
            "--traces",
            "t.jsonl",
            "--cases",
            "cases.jsonl",
            "--group-by",
            "AT",
            "--out",
            "bf.csv",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bf.csv")).unwrap();
    let data_rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(data_rows.len(), 2, "{csv}");
    assert!(data_rows.iter().any(|r| r.contains("base")));
    assert!(data_rows.iter().any(|r| r.contains("instruct")));
}

fn degraded_trace_file(path: &Path) {
    // Chosen token absent from candidates: degraded for the NLL estimator.
    let step = TokenStep {
        position: 1,
        chosen_token_id: 99,
        temperature_applied: true,
        coverage_mass: 1.0,
        candidates: vec![
            CandidateLogprob::new(0, "a", 0.5f64.ln()),
            CandidateLogprob::new(1, "b", 0.5f64.ln()),
        ],
        extra: Default::default(),
    };
    let trace = SequenceTrace {
        prompt_id: "p0".into(),
        sample_index: 0,
        finish_reason: FinishReason::StopToken,
        decoding: DecodingParams::new(1.0, 1.0, 0),
        steps: vec![step],
        extra: Default::default(),
    };
    let manifest = RunManifest {
        model_name: "m".into(),
        endpoint: None,
        sample_count_m: 1,
        decoding: DecodingParams::new(1.0, 1.0, 0),
        factor_domains: BTreeMap::new(),
        created_at: "2026-01-01T00:00:00Z".into(),
        extra: Default::default(),
    };
    let mut buf = Vec::new();
    write_traces(&[trace], &manifest, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

#[test]
fn bf_nll_on_degraded_file_exits_four_with_counts() {
    let dir = tempfile::tempdir().unwrap();
    degraded_trace_file(&dir.path().join("t.jsonl"));
    let out = bfkit(
        &["bf", "--traces", "t.jsonl", "--estimator", "nll"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 4);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degraded"), "{stderr}");
    assert!(stderr.contains("1 degraded steps"), "{stderr}");
}

#[test]
fn trajectory_defaults_echoed_in_header_and_no_plot_skips_svg() {
    let dir = tempfile::tempdir().unwrap();
    write_oracle_traces(&dir.path().join("t.jsonl"), 3, 23, 4, "p0");
    let out = bfkit(
        &[
            "trajectory",
            "--traces",
            "t.jsonl",
            "--out",
            "traj.csv",
            "--no-plot",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(
        csv.starts_with("# window=5 alpha=0.1 estimator=entropy\n"),
        "{csv}"
    );
    assert!(!dir.path().join("traj.svg").exists());
    // Constant-entropy oracle: flat line at 3.
    for line in csv.lines().skip(2) {
        let bf_raw: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((bf_raw - 3.0).abs() < 1e-9);
    }

    let out = bfkit(
        &["trajectory", "--traces", "t.jsonl", "--out", "traj2.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    assert!(dir.path().join("traj2.svg").exists());
}

#[test]
fn trajectory_rejects_bad_window_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    write_oracle_traces(&dir.path().join("t.jsonl"), 3, 10, 2, "p0");
    let out = bfkit(
        &["trajectory", "--traces", "t.jsonl", "--window", "0"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    let out = bfkit(
        &["trajectory", "--traces", "t.jsonl", "--alpha", "1.5"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn pareto_table_from_alignment_example() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("table.csv"),
        "AT,S,bf\nbase,small,12\nbase,large,12\ninstruct,small,1.2\ninstruct,large,1.2\n",
    )
    .unwrap();
    let out = bfkit(
        &["pareto", "--table", "table.csv", "--out", "pareto.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let at_row = lines.next().unwrap();
    assert!(at_row.starts_with("AT,"), "{csv}");
    let raw: f64 = at_row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((raw - 10.8).abs() < 1e-9);
    let s_row = lines.next().unwrap();
    assert!(s_row.starts_with("S,0,0"), "{csv}");
    assert!(stdout(&out).contains("dominant factor AT"));
}

#[test]
fn majority_defaults_echoed_and_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("votes.json"),
        r#"[{"instance_id":"i1","gold":"A","answers":["A","A","B"]},
            {"instance_id":"i2","gold":"C","answers":["C"]}]"#,
    )
    .unwrap();
    let run = |out: &str| {
        bfkit(
            &[
                "majority",
                "--votes",
                "votes.json",
                "--ks",
                "1,3,8,16",
                "--out",
                out,
            ],
            dir.path(),
        )
    };
    let out = run("m1.csv");
    assert_eq!(exit_code(&out), 0);
    let csv1 = std::fs::read(dir.path().join("m1.csv")).unwrap();
    assert!(String::from_utf8_lossy(&csv1)
        .starts_with("# trials=100 samples_per_trial=64 seed=0\n"));
    let out = run("m2.csv");
    assert_eq!(exit_code(&out), 0);
    let csv2 = std::fs::read(dir.path().join("m2.csv")).unwrap();
    assert_eq!(csv1, csv2, "same seed must be byte-identical");
}

#[test]
fn majority_constant_pools_have_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("votes.json"),
        r#"[{"instance_id":"i1","gold":"A","answers":["A"]}]"#,
    )
    .unwrap();
    let out = bfkit(
        &["majority", "--votes", "votes.json", "--out", "m.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    for line in csv.lines().skip(2) {
        assert!(line.ends_with(",1,0"), "{line}");
    }
}

#[test]
fn aep_verify_bad_epsilon_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("process.json"),
        r#"{"kind":"iid_categorical","probs":[0.5,0.5]}"#,
    )
    .unwrap();
    let out = bfkit(
        &[
            "aep-verify",
            "--process",
            "process.json",
            "--epsilon",
            "1.5",
            "--samples",
            "10",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn aep_verify_writes_report_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("process.json"),
        r#"{"kind":"iid_categorical","probs":[0.7,0.2,0.1]}"#,
    )
    .unwrap();
    let out = bfkit(
        &[
            "aep-verify",
            "--process",
            "process.json",
            "--checkpoints",
            "50,200",
            "--samples",
            "200",
            "--out",
            "aep.json",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("aep.json")).unwrap())
            .unwrap();
    assert_eq!(report["checkpoints"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("aep.svg").exists());
}

fn endpoint_config(dir: &Path, url: &str, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        format!(
            "[endpoint]\nbase_url = \"{url}\"\nmodel_name = \"mock-model\"\nretry_max_attempts = 2\nretry_backoff_ms = 1\ntimeout_ms = 2000\n{extra}\n[sampling]\nsample_count_m = 3\nmax_tokens = 8\n"
        ),
    )
    .unwrap();
    path
}

fn prompts_file(dir: &Path) -> PathBuf {
    let path = dir.join("prompts.jsonl");
    std::fs::write(
        &path,
        "{\"prompt_id\":\"p0\",\"prompt_text\":\"Count:\",\"task\":\"t\"}\n",
    )
    .unwrap();
    path
}

#[test]
fn sample_writes_m_traces_from_mock_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let response = response_from_steps(
        &[
            MockStep::new(" one", -0.2, &[(" two", -1.8)]),
            MockStep::new(" two", -0.4, &[(" three", -1.2)]),
        ],
        "stop",
    );
    let server = MockServer::with_fixed_response(response).unwrap();
    endpoint_config(dir.path(), &server.url(), "");
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "sample",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
            "--out",
            "traces.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4); // manifest + 3 traces
    assert!(stdout(&out).contains("3 traces"));
}

#[test]
fn sample_missing_required_api_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    endpoint_config(dir.path(), "http://127.0.0.1:9", "require_api_key = true\n");
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "sample",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("api key"));
}

#[test]
fn sample_unreachable_endpoint_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // Nothing listens on this port.
    endpoint_config(dir.path(), "http://127.0.0.1:1", "");
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "sample",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sample_unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("config.toml"),
        "[endpoint]\nbase_url = \"http://x\"\nmodel_name = \"m\"\nbogus_key = 1\n",
    )
    .unwrap();
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "sample",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn resample_emits_one_group_per_position() {
    let dir = tempfile::tempdir().unwrap();
    // Original traces: 6 steps each.
    let response = response_from_steps(
        &(0..6)
            .map(|i| MockStep::new(format!(" t{i}"), -0.3, &[(" alt", -1.5)]))
            .collect::<Vec<_>>(),
        "stop",
    );
    let server = MockServer::with_fixed_response(response).unwrap();
    endpoint_config(dir.path(), &server.url(), "");
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "sample",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
            "--out",
            "traces.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);

    // Fork server returns a different token stream.
    let fork_response = response_from_steps(
        &[MockStep::new(" fork", -0.6, &[(" other", -1.0)])],
        "stop",
    );
    let fork_server = MockServer::with_fixed_response(fork_response).unwrap();
    endpoint_config(dir.path(), &fork_server.url(), "");
    let out = bfkit(
        &[
            "resample",
            "--config",
            "config.toml",
            "--traces",
            "traces.jsonl",
            "--prompts",
            "prompts.jsonl",
            "--positions",
            "2,4",
            "--samples",
            "2",
            "--out",
            "resample.json",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resample.json")).unwrap())
            .unwrap();
    let groups = report.as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["fork_position"], 2);
    assert_eq!(groups[1]["fork_position"], 4);
    assert_eq!(groups[0]["forked"], 2);
    assert!(dir.path().join("resample.svg").exists());
}

#[test]
fn nudge_writes_reports_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let base_server = MockServer::start(Arc::new(|_req, _hit| {
        MockReply::Json(response_from_steps(
            &[MockStep::new(" a", 0.3f64.ln(), &[(" b", 0.25f64.ln())])],
            "length",
        ))
    }))
    .unwrap();
    let aligned_server = MockServer::start(Arc::new(|_req, _hit| {
        MockReply::Json(response_from_steps(
            &[MockStep::new(" Sure", -0.1, &[]), MockStep::new(" then", -0.2, &[])],
            "length",
        ))
    }))
    .unwrap();
    std::fs::write(
        dir.path().join("config.toml"),
        format!(
            "[endpoint]\nbase_url = \"{}\"\nmodel_name = \"base\"\nretry_backoff_ms = 1\n\n[aligned_endpoint]\nbase_url = \"{}\"\nmodel_name = \"aligned\"\nretry_backoff_ms = 1\n\n[nudging]\ngamma = 0.4\nmax_tokens = 6\n",
            base_server.url(),
            aligned_server.url()
        ),
    )
    .unwrap();
    prompts_file(dir.path());
    let out = bfkit(
        &[
            "nudge",
            "--config",
            "config.toml",
            "--prompts",
            "prompts.jsonl",
            "--out",
            "nudge.json",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("nudge.json")).unwrap())
            .unwrap();
    let prompt_report = &report.as_array().unwrap()[0];
    // Base top-1 is 0.3 < 0.4: every step comes from the aligned model.
    assert_eq!(prompt_report["nudging_ratio"], 1.0);
    assert!(dir.path().join("nudge.svg").exists());
}

#[test]
fn correlate_groups_by_task_and_model() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("metrics.csv"),
        "task,model,bf,distinct\nmmlu,m1,1,2\nmmlu,m1,2,4\nmmlu,m1,3,6\nnews,m1,1,3\nnews,m1,2,2\nnews,m1,3,1\n",
    )
    .unwrap();
    let out = bfkit(
        &[
            "correlate",
            "--input",
            "metrics.csv",
            "--x-col",
            "bf",
            "--y-col",
            "distinct",
            "--out",
            "corr.csv",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("corr.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("mmlu,m1,bf:distinct,1,1"), "{csv}");
    assert!(rows[1].starts_with("news,m1,bf:distinct,-1,-1"), "{csv}");
    assert!(dir.path().join("corr.svg").exists());
}

#[test]
fn correlate_all_degenerate_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("metrics.csv"),
        "bf,distinct\n1,1\n1,2\n1,3\n",
    )
    .unwrap();
    let out = bfkit(
        &[
            "correlate",
            "--input",
            "metrics.csv",
            "--x-col",
            "bf",
            "--y-col",
            "distinct",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 4);
}
