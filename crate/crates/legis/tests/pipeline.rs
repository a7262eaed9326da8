mod common;

use legis::pipeline::{verify_run, PipelineError};
use legis_core::pipeline::{PipelineRun, RunOptions, RunState};
use legis_core::report::{ReviewOverride, UNKNOWN_STATUS};
use legis_core::trace::TraceKind;
use legis_core::BillId;
use serde_json::{json, Value};

fn batch() -> RunOptions {
    RunOptions {
        no_review: true,
        ..RunOptions::default()
    }
}

fn kinds(app: &legis::app::App, run_id: &str, kind: TraceKind) -> Vec<Value> {
    app.trace
        .read_events(run_id)
        .unwrap()
        .into_iter()
        .filter(|e| e.kind == kind)
        .map(|e| e.payload)
        .collect()
}

fn score(run: &PipelineRun) -> f64 {
    run.result.as_ref().expect("finalized").score
}

#[test]
fn each_run_has_three_step_boundaries() {
    let app = common::replay(&[116], None);
    let run = app.engine.run_congress(116, batch()).unwrap();
    assert_eq!(run.state, RunState::Finalized);
    assert_eq!(score(&run), 0.4);
    let steps: Vec<Value> = kinds(&app, &run.run_id, TraceKind::StepBoundary)
        .into_iter()
        .map(|p| p["step"].clone())
        .collect();
    assert_eq!(steps, vec![json!(1), json!(2), json!(3)]);
    assert_eq!(verify_run(&app.trace, &run).unwrap().score, 0.4);
}

#[test]
fn interrupted_runs_resume_to_the_uninterrupted_result() {
    let reference = common::replay(&[115], None).engine.run_congress(115, batch()).unwrap();
    for stop in [RunState::Step1, RunState::Step2, RunState::Step3] {
        let dir = tempfile::tempdir().unwrap();
        let run_id = {
            let app = common::replay(&[115], Some(dir.path()));
            let run = app.engine.create_run(115, batch()).unwrap();
            let partial = app.engine.execute_until(&run.run_id, Some(stop)).unwrap();
            assert_eq!(partial.state, stop);
            run.run_id
        };
        // A fresh process over the same data directory.
        let app = common::replay(&[115], Some(dir.path()));
        let run = app.engine.execute(&run_id).unwrap();
        assert_eq!(run.state, RunState::Finalized, "stopped at {stop}");
        assert_eq!(run.cluster_reports, reference.cluster_reports);
        assert_eq!(score(&run), score(&reference));
        assert_eq!(kinds(&app, &run_id, TraceKind::StepBoundary).len(), 3);
        verify_run(&app.trace, &run).unwrap();
    }
}

#[test]
fn review_overrides_apply_and_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let run_id = {
        let app = common::replay(&[113], Some(dir.path()));
        let run = app.engine.run_congress(113, RunOptions::default()).unwrap();
        assert_eq!(run.state, RunState::AwaitingReview);
        assert!(run.result.is_none());
        assert_eq!(run.current_gridlock().unwrap().score, 0.5);

        let enacted: Vec<BillId> = run
            .cluster_reports
            .iter()
            .find(|r| r.cluster_name == "Immigration Reform")
            .unwrap()
            .bills
            .iter()
            .filter(|b| b.enacted)
            .map(|b| b.bill_id)
            .collect();
        assert_eq!(enacted.len(), 1);
        let mut change = ReviewOverride::default();
        change.bill_overrides.insert(enacted[0], false);
        let (report, run) = app
            .engine
            .review_override(&run.run_id, "Immigration Reform", &change, "reviewer-1")
            .unwrap();
        assert_eq!(report.enacted_bills, 0);
        assert_eq!(report.total_bills_found, 99);
        assert_eq!(run.current_gridlock().unwrap().score, 0.625);
        run.run_id
    };
    let app = common::replay(&[113], Some(dir.path()));
    let run = app.runs.get(&run_id).unwrap();
    assert_eq!(run.current_gridlock().unwrap().score, 0.625);
    let overrides = kinds(&app, &run_id, TraceKind::Override);
    assert_eq!(overrides.len(), 1);
    assert_eq!(overrides[0]["actor"], "reviewer-1");
    assert!(overrides[0]["timestamp"].as_str().is_some_and(|t| t.ends_with('Z')));

    let run = app.engine.finalize(&run_id).unwrap();
    assert_eq!(score(&run), 0.625);
    assert_eq!(verify_run(&app.trace, &run).unwrap().score, 0.625);

    // Review stays open after finalizing, and the stored result follows it.
    let change = ReviewOverride {
        threshold: Some(0.59),
        ..ReviewOverride::default()
    };
    let (report, run) = app.engine.review_override(&run_id, "Tax and Economic Policy", &change, "reviewer-2").unwrap();
    assert_eq!(report.total_bills_found, 0);
    assert_eq!(score(&run), 0.75);
    assert_eq!(verify_run(&app.trace, &run).unwrap().score, 0.75);
    assert!(matches!(app.engine.finalize(&run_id), Err(PipelineError::Conflict(_))));
}

#[test]
fn invalid_reviews_leave_no_trace() {
    let app = common::replay(&[113], None);
    let run = app.engine.run_congress(113, RunOptions::default()).unwrap();
    let before = app.trace.read_events(&run.run_id).unwrap().len();
    let bad = ReviewOverride {
        threshold: Some(1.5),
        ..ReviewOverride::default()
    };
    let err = app.engine.review_override(&run.run_id, "Immigration Reform", &bad, "r").unwrap_err();
    assert!(matches!(err, PipelineError::Invalid { field: "threshold", .. }));
    let mut unknown = ReviewOverride::default();
    unknown.bill_overrides.insert(BillId::parse("113-hr-99999").unwrap(), true);
    let err = app.engine.review_override(&run.run_id, "Immigration Reform", &unknown, "r").unwrap_err();
    assert!(matches!(err, PipelineError::Invalid { field: "bill_overrides", .. }));
    let err = app.engine.review_override(&run.run_id, "No Such Cluster", &bad, "r").unwrap_err();
    assert!(matches!(err, PipelineError::NotFound { .. }));
    assert_eq!(app.trace.read_events(&run.run_id).unwrap().len(), before);
}

#[test]
fn missing_status_becomes_unknown_with_a_warning() {
    let app = common::replay(&[117], None);
    let run = app.engine.run_congress(117, batch()).unwrap();
    assert_eq!(score(&run), 0.7);
    assert_eq!(run.warnings.len(), 1, "{:?}", run.warnings);
    assert!(run.warnings[0].contains("status unknown"));
    let unknown: Vec<_> = run
        .cluster_reports
        .iter()
        .flat_map(|r| &r.bills)
        .filter(|b| b.status == UNKNOWN_STATUS)
        .collect();
    assert_eq!(unknown.len(), 1);
    assert!(!unknown[0].enacted);
    verify_run(&app.trace, &run).unwrap();
}

const CLUSTERS_TWO: &str = r#"{"clusters":[{"name":"Immigration Reform","articles":["a"],"article_count":3,"summary":"s","query":"immigration reform pathway citizenship border security executive action"},{"name":"Unsearchable","articles":["b"],"article_count":2,"summary":"s","query":"a query nobody recorded"}]}"#;

fn text_step(text: &str) -> String {
    json!({"kind": "text", "text": text}).to_string() + "\n"
}

#[test]
fn step1_is_reprompted_once() {
    let app = common::replay(&[113], None);
    let script = text_step("Here are the clusters: immigration and more.") + &text_step(CLUSTERS_TWO);
    let engine = common::scripted_engine(&app, &script);
    let run = engine.run_congress(113, batch()).unwrap();
    assert_eq!(run.state, RunState::Finalized);
    let errors = kinds(&app, &run.run_id, TraceKind::Error);
    assert_eq!(errors[0]["source"], "step1_validation");

    // The unrecorded query fails both search attempts, so that cluster is
    // errored and left out of the score.
    assert_eq!(errors[1]["source"], "step2");
    assert_eq!(errors[1]["cluster"], "Unsearchable");
    let r = run.result.as_ref().unwrap();
    assert_eq!((r.gridlocked_clusters, r.total_clusters()), (0, 1));
    assert!(run.warnings.iter().any(|w| w.contains("Unsearchable")));
    let attempts = kinds(&app, &run.run_id, TraceKind::ToolCall)
        .iter()
        .filter(|c| c["call_id"].as_str().is_some_and(|id| id.starts_with("step2-2-")))
        .count();
    assert_eq!(attempts, 2);
    verify_run(&app.trace, &run).unwrap();
}

#[test]
fn step1_fails_the_run_after_a_second_bad_answer() {
    let app = common::replay(&[113], None);
    let script = text_step("no json here") + &text_step(r#"{"clusters": []}"#);
    let engine = common::scripted_engine(&app, &script);
    let run = engine.run_congress(113, batch()).unwrap();
    assert_eq!(run.state, RunState::Failed);
    assert!(run.error.as_deref().unwrap().contains("rejected twice"));
    assert!(run.result.is_none());
}

#[test]
fn provider_failure_in_step1_fails_the_run() {
    let app = common::replay(&[113], None);
    let engine = common::scripted_engine(&app, "");
    let run = engine.run_congress(113, batch()).unwrap();
    assert_eq!(run.state, RunState::Failed);
    let errors = kinds(&app, &run.run_id, TraceKind::Error);
    assert_eq!(errors.last().unwrap()["source"], "step1");
    assert!(run.error.as_deref().unwrap().contains("provider"));
}

#[test]
fn agent_checks_match_direct_checks() {
    let app = common::replay(&[118], None);
    let direct = app.engine.run_congress(118, batch()).unwrap();
    let mut script = common::agent_script(118);
    for report in &direct.cluster_reports {
        for b in &report.bills {
            let call = json!({"kind": "tool_calls", "calls": [{
                "call_id": format!("chk-{}", b.bill_id),
                "tool_name": "get_bill_status",
                "arguments": {"bill_id": b.bill_id.render()},
            }]});
            script.push_str(&format!("{call}\n"));
            script.push_str(&text_step(&format!("{} status: {}", b.bill_id, b.status)));
        }
    }
    let engine = common::scripted_engine(&app, &script);
    let options = RunOptions {
        agent_checks: true,
        ..batch()
    };
    let run = engine.run_congress(118, options).unwrap();
    assert_eq!(run.state, RunState::Finalized, "{:?}", run.error);
    assert_eq!(run.cluster_reports, direct.cluster_reports);
    assert_eq!(score(&run), 0.5);
    let requests = kinds(&app, &run.run_id, TraceKind::LlmRequest).len();
    assert!(requests > 2 * direct.cluster_reports.iter().map(|r| r.bills.len()).sum::<usize>());
    verify_run(&app.trace, &run).unwrap();
}

#[test]
fn series_continues_past_a_failed_congress() {
    let app = common::replay(&[117, 118], None);
    let entries = app.engine.run_series(117, 119, &batch());
    let scores: Vec<Option<f64>> = entries.iter().map(|e| e.score).collect();
    assert_eq!(scores, vec![Some(0.7), Some(0.5), None]);
    assert!(entries[2].error.as_deref().unwrap().contains("119"));
    assert_eq!(app.engine.stored_series(113, 119), vec![(117, 0.7), (118, 0.5)]);
}

#[test]
fn create_run_validates_options() {
    let app = common::replay(&[113], None);
    let bad = |o: RunOptions, c: u32| app.engine.create_run(c, o).unwrap_err();
    assert!(matches!(bad(batch(), 0), PipelineError::Invalid { field: "congress", .. }));
    let o = RunOptions {
        threshold: -1.5,
        ..batch()
    };
    assert!(matches!(bad(o, 113), PipelineError::Invalid { field: "threshold", .. }));
    let o = RunOptions { top_k: 0, ..batch() };
    assert!(matches!(bad(o, 113), PipelineError::Invalid { field: "top_k", .. }));
    assert!(matches!(app.engine.execute("missing"), Err(PipelineError::NotFound { .. })));
}
