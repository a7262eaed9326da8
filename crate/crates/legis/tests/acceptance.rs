//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line on
//! stderr (bypassing the test harness capture) and fails when its criterion does.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use legis::ingest;
use legis::relational::{RelationalError, RelationalStore};
use legis::trace_store::{parse_events, rederive_gridlock, verify_scope, TraceStore};
use legis::vector_store::VectorStore;
use legis_core::agent::{run_turn, Conversation, OutcomeKind, ScriptedProvider, TurnConfig};
use legis_core::pipeline::{PipelineRun, RunOptions, RunState};
use legis_core::report::{compute_gridlock, BillMatch, ClusterReport, ClusterWork, PolicyCluster, ReviewOverride};
use legis_core::embed::Embedder;
use legis_core::search::{MetadataFilter, SearchParams};
use legis_core::trace::TraceKind;
use legis_core::{BillId, Collection, EmbeddedDocument};
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng};
use serde_json::{json, Value};

fn criterion(n: u32, what: &str, budget: Option<Duration>, f: impl FnOnce()) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let in_time = budget.map_or(true, |b| elapsed < b);
    let verdict = if outcome.is_ok() && in_time { "PASS" } else { "FAIL" };
    let budget_note = budget.map(|b| format!(", budget {b:?}")).unwrap_or_default();
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} ({what}; {elapsed:.2?}{budget_note})");
    if let Err(e) = outcome {
        resume_unwind(e);
    }
    assert!(in_time, "criterion {n} took {elapsed:?}, over its budget");
}

fn cluster(name: &str) -> PolicyCluster {
    PolicyCluster {
        name: name.into(),
        article_refs: vec!["article".into()],
        article_count: 1,
        summary: "summary".into(),
        query: format!("{name} query"),
    }
}

fn report_with(name: &str, enacted: bool) -> ClusterReport {
    let mut b = BillMatch::new(BillId::parse("116-hr-1").unwrap(), "t", "s", 0.5);
    b.enacted = enacted;
    b.status = if enacted { "Became Public Law" } else { "Not Enacted" }.into();
    ClusterWork::new(cluster(name), 0.4, vec![b]).report()
}

/// Whether `s` is the double nearest to `y / z`: its residual `s*z - y` is no
/// larger than either neighbour's. `mul_add` keeps the residual exact.
fn is_nearest_quotient(s: f64, y: u32, z: u32) -> bool {
    let (y, z) = (f64::from(y), f64::from(z));
    let residual = |x: f64| x.mul_add(z, -y).abs();
    residual(s) <= residual(s.next_up()) && residual(s) <= residual(s.next_down())
}

#[test]
fn criterion_1_gridlock_formula() {
    criterion(1, "Y/Z over cluster reports", Some(Duration::from_secs(1)), || {
        let reports: Vec<ClusterReport> = (0..10).map(|i| report_with(&format!("c{i}"), i < 6)).collect();
        let r = compute_gridlock(116, reports, "run", "trace").unwrap();
        assert_eq!(r.gridlocked_clusters, 4);
        assert_eq!(r.total_clusters(), 10);
        assert_eq!(r.score, 0.40);

        let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(256));
        runner
            .run(&(1u32..=50).prop_flat_map(|z| (0..=z, Just(z))), |(y, z)| {
                let reports: Vec<ClusterReport> = (0..z).map(|i| report_with(&format!("c{i}"), i >= y)).collect();
                let r = compute_gridlock(113, reports, "run", "trace").unwrap();
                prop_assert_eq!(r.gridlocked_clusters, y);
                prop_assert!(is_nearest_quotient(r.score, y, z), "{} is not {}/{}", r.score, y, z);
                prop_assert!((0.0..=1.0).contains(&r.score));
                Ok(())
            })
            .unwrap();
        for z in 1..=50u32 {
            for y in 0..=z {
                let reports: Vec<ClusterReport> = (0..z).map(|i| report_with(&format!("c{i}"), i >= y)).collect();
                assert!(is_nearest_quotient(compute_gridlock(113, reports, "r", "t").unwrap().score, y, z));
            }
        }
    });
}

#[test]
fn criterion_2_series_replay() {
    criterion(2, "series 113-118 from fixtures", Some(Duration::from_secs(30)), || {
        let data = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_legis"))
            .arg("--data-dir")
            .arg(data.path())
            .args(["series", "--from", "113", "--to", "118", "--out", "csv", "--cassettes"])
            .arg(common::fixtures())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = String::from_utf8(out.stdout).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("congress,score"));
        let rows: Vec<(u32, f64)> = lines
            .map(|l| {
                let (c, s) = l.split_once(',').unwrap();
                (c.parse().unwrap(), s.parse().unwrap())
            })
            .collect();
        assert_eq!(
            rows,
            vec![(113, 0.5), (114, 0.1), (115, 0.375), (116, 0.4), (117, 0.7), (118, 0.5)]
        );
    });
}

#[test]
fn criterion_3_cluster_report_schema() {
    criterion(3, "113th immigration report fields and values", None, || {
        let app = common::replay(&[113], None);
        let run = app.engine.run_congress(113, RunOptions::default()).unwrap();
        let report = run
            .cluster_reports
            .iter()
            .find(|r| r.cluster_name == "Immigration Reform")
            .unwrap();
        let text = serde_json::to_string(report).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let expected: BTreeSet<&str> = [
            "cluster_name",
            "query",
            "threshold",
            "total_bills_found",
            "enacted_bills",
            "has_enacted_legislation",
            "enactment_rate",
            "bills",
        ]
        .into();
        assert_eq!(keys.iter().copied().collect::<BTreeSet<_>>(), expected);
        let bill_keys: BTreeSet<&str> = ["bill_id", "title", "summary", "bill_type", "bill_number", "score", "enacted", "status"].into();
        for b in v["bills"].as_array().unwrap() {
            assert_eq!(b.as_object().unwrap().keys().map(String::as_str).collect::<BTreeSet<_>>(), bill_keys);
        }
        assert_eq!(v["query"], "immigration reform pathway citizenship border security executive action");
        assert_eq!(v["total_bills_found"], 100);
        assert_eq!(v["enacted_bills"], 1);
        assert_eq!(v["has_enacted_legislation"], true);
        assert_eq!(v["enactment_rate"].as_f64().unwrap().to_bits(), 0.01f64.to_bits());
        assert_eq!(v["threshold"].as_f64().unwrap().to_bits(), 0.4f64.to_bits());

        let back: ClusterReport = serde_json::from_str(&text).unwrap();
        let top = &back.bills[0];
        assert_eq!(top.bill_id.render(), "113-s-1");
        assert_eq!(top.title, "Immigration Reform that Works for America's Future Act");
        assert!(top.summary.starts_with("<p>Immigration Reform"));
        assert_eq!((v["bills"][0]["bill_type"].as_str(), v["bills"][0]["bill_number"].as_str()), (Some("s"), Some("1")));
        assert!((top.score - 0.585201323).abs() <= 1e-9, "{}", top.score);
        assert!(!top.enacted);
        assert_eq!(top.status, "Not Enacted");
        back.validate().unwrap();
    });
}

fn oracle_cosine(a: &[f64], b: &[f32]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| f64::from(*y) * f64::from(*y)).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

#[test]
fn criterion_4_vector_search_oracle() {
    criterion(4, "200 random corpora against an exhaustive scan", Some(Duration::from_secs(10)), || {
        let mut rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
        let mut compared = 0usize;
        for corpus in 0..200 {
            let dim = rng.random_range(1..=64usize);
            let n = if corpus < 4 { 1000 } else { rng.random_range(0..=1000usize) };
            let store = VectorStore::in_memory(dim);
            let mut docs: Vec<(String, Vec<f32>)> = Vec::with_capacity(n);
            for _ in 0..n {
                // Repeat an earlier vector now and then so ties must be broken by doc_id.
                let v: Vec<f32> = if !docs.is_empty() && rng.random_range(0..10) == 0 {
                    docs[rng.random_range(0..docs.len())].1.clone()
                } else {
                    loop {
                        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                        if v.iter().any(|x| *x != 0.0) {
                            break v;
                        }
                    }
                };
                let id = format!("doc-{:04}", rng.random_range(0..100_000u32));
                if docs.iter().any(|(d, _)| d == &id) {
                    continue;
                }
                let mut metadata = BTreeMap::new();
                metadata.insert("year".to_string(), "2014".to_string());
                store
                    .upsert(EmbeddedDocument {
                        doc_id: id.clone(),
                        collection: Collection::Articles,
                        text: String::new(),
                        vector: v.clone(),
                        metadata,
                    })
                    .unwrap();
                docs.push((id, v));
            }
            let query: Vec<f64> = match docs.first() {
                // Some queries equal a stored vector exactly.
                Some((_, v)) if corpus % 5 == 0 => v.iter().map(|x| f64::from(*x)).collect(),
                _ => (0..dim).map(|_| rng.random_range(-1.0f64..1.0)).collect(),
            };
            let mut scored: Vec<(f64, &str)> = docs
                .iter()
                .filter_map(|(id, v)| oracle_cosine(&query, v).map(|s| (s, id.as_str())))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            for top_k in [1usize, 10, 200] {
                for tau in [-1.0, 0.0, 0.4, 0.9] {
                    let expected: Vec<&str> = scored.iter().filter(|(s, _)| *s >= tau).take(top_k).map(|(_, id)| *id).collect();
                    let got = store
                        .search(Collection::Articles, &query, SearchParams::new(top_k, tau), &MetadataFilter::none())
                        .unwrap();
                    let ids: Vec<&str> = got.iter().map(|h| h.doc_id.as_str()).collect();
                    assert_eq!(ids, expected, "corpus {corpus} dim {dim} top_k {top_k} tau {tau}");
                    for (h, (s, _)) in got.iter().zip(&scored) {
                        assert!((h.score - s).abs() < 1e-9 || got.len() != expected.len());
                    }
                    compared += 1;
                }
            }
        }
        assert_eq!(compared, 200 * 12);
    });
}

fn tool_events(trace: &TraceStore, scope: &str) -> (Vec<Value>, Vec<Value>) {
    let events = trace.read_events(scope).unwrap();
    let pick = |k: TraceKind| events.iter().filter(|e| e.kind == k).map(|e| e.payload.clone()).collect::<Vec<_>>();
    (pick(TraceKind::ToolCall), pick(TraceKind::ToolResult))
}

#[test]
fn criterion_5_iteration_cap() {
    criterion(5, "adversarial provider stops at five iterations", None, || {
        let app = common::replay(&[113], None);
        let step = json!({"kind": "tool_calls", "calls": [{"call_id": "x", "tool_name": "get_bill_status", "arguments": {"bill_id": "113-s-1"}}]});
        let script: String = (0..50).map(|_| format!("{step}\n")).collect();
        let provider = ScriptedProvider::from_jsonl(&script).unwrap();
        let trace = TraceStore::in_memory();
        trace.create_scope("adversarial").unwrap();
        let mut conv = Conversation::new("adversarial", "system");
        let outcome = run_turn(&mut conv, "loop forever", &app.registry, &provider, TurnConfig::default(), &trace).unwrap();
        assert_eq!(outcome.kind, OutcomeKind::IterationLimit);
        assert_eq!(outcome.iterations_used, 5);
        assert_eq!(outcome.tool_calls_made.len(), 5);
        let (calls, results) = tool_events(&trace, "adversarial");
        assert_eq!(calls.len(), 5);
        assert_eq!(results.len(), 5);
    });
}

#[test]
fn criterion_6_self_correction() {
    criterion(6, "malformed call, then corrected call, then answer", None, || {
        let app = common::replay(&[113], None);
        let script = [
            json!({"kind": "tool_calls", "calls": [{"call_id": "c1", "tool_name": "get_bill_status", "arguments": {"bill": "S. 1"}}]}),
            json!({"kind": "tool_calls", "calls": [{"call_id": "c2", "tool_name": "get_bill_status", "arguments": {"bill_id": "113-s-1"}}]}),
            json!({"kind": "text", "text": "S. 1 of the 113th Congress did not become law."}),
        ]
        .iter()
        .map(|s| format!("{s}\n"))
        .collect::<String>();
        let provider = ScriptedProvider::from_jsonl(&script).unwrap();
        let trace = TraceStore::in_memory();
        trace.create_scope("selfcorrect").unwrap();
        let mut conv = Conversation::new("selfcorrect", "system");
        let outcome = run_turn(&mut conv, "Was S. 1 enacted?", &app.registry, &provider, TurnConfig::default(), &trace).unwrap();
        assert_eq!(outcome.kind, OutcomeKind::Answered);
        let (calls, results) = tool_events(&trace, "selfcorrect");
        assert_eq!(calls.len(), 2);
        assert_eq!(results.len(), 2);
        let errors = results.iter().filter(|r| r["outcome"] == "error").count();
        assert_eq!(errors, 1);
        assert_eq!(results[0]["outcome"], "error");
        assert_eq!(results[1]["payload"]["status"], "Not Enacted");
    });
}

/// Gridlock recomputed from exported JSONL alone, without the library's
/// re-derivation: clusters from the step-1 boundary, candidates from retrieval
/// events, statuses from status tool results, then reviewer overrides in order.
fn oracle_from_jsonl(jsonl: &str) -> (u32, u32) {
    let events: Vec<Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut clusters: Vec<String> = Vec::new();
    let mut hits: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut errored: BTreeSet<String> = BTreeSet::new();
    let mut enacted: HashMap<String, bool> = HashMap::new();
    let mut threshold: HashMap<String, f64> = HashMap::new();
    let mut excluded: HashMap<String, BTreeSet<String>> = HashMap::new();
    for e in &events {
        let p = &e["payload"];
        match e["kind"].as_str().unwrap() {
            "step_boundary" if p["step"] == 1 => {
                clusters = p["clusters"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_string()).collect();
            }
            "retrieval" => {
                let name = p["cluster"].as_str().unwrap().to_string();
                threshold.insert(name.clone(), p["threshold"].as_f64().unwrap());
                hits.insert(
                    name,
                    p["hits"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|h| (h["bill_id"].as_str().unwrap().to_string(), h["score"].as_f64().unwrap()))
                        .collect(),
                );
            }
            "error" if p["source"] == "step2" => {
                errored.insert(p["cluster"].as_str().unwrap().to_string());
            }
            "tool_result" if p["tool_name"] == "get_bill_status" && p["outcome"] == "ok" => {
                enacted.insert(p["payload"]["bill_id"].as_str().unwrap().to_string(), p["payload"]["enacted"].as_bool().unwrap());
            }
            "override" => {
                let name = p["cluster"].as_str().unwrap().to_string();
                if let Some(t) = p["threshold"].as_f64() {
                    threshold.insert(name.clone(), t);
                }
                if let Some(o) = p["bill_overrides"].as_object() {
                    let set = excluded.entry(name).or_default();
                    for (id, include) in o {
                        if include.as_bool().unwrap() {
                            set.remove(id);
                        } else {
                            set.insert(id.clone());
                        }
                    }
                }
            }
            _ => {}
        }
    }
    let counted: Vec<&String> = clusters.iter().filter(|c| !errored.contains(*c)).collect();
    let gridlocked = counted
        .iter()
        .filter(|c| {
            let t = threshold[**c];
            let none = BTreeSet::new();
            let ex = excluded.get(**c).unwrap_or(&none);
            !hits[**c]
                .iter()
                .any(|(id, s)| *s >= t && !ex.contains(id) && enacted.get(id).copied().unwrap_or(false))
        })
        .count();
    (gridlocked as u32, counted.len() as u32)
}

fn check_run(trace: &TraceStore, run: &PipelineRun) {
    let jsonl = trace.export_jsonl(&run.run_id).unwrap();
    let events = parse_events(&run.run_id, &jsonl).unwrap();
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>(), "seq gap in {}", run.run_id);
    let calls = events.iter().filter(|e| e.kind == TraceKind::ToolCall).count();
    let results = events.iter().filter(|e| e.kind == TraceKind::ToolResult).count();
    assert_eq!(calls, results);
    verify_scope(&run.run_id, &events).unwrap();

    let stored = run.result.as_ref().expect("finalized run");
    let derived = rederive_gridlock(&events).unwrap();
    assert_eq!(derived.score, stored.score);
    assert_eq!(derived.gridlocked_clusters, stored.gridlocked_clusters);
    // The trace carries ids, scores and statuses, not bill text.
    let shape = |reports: &[ClusterReport]| {
        reports
            .iter()
            .map(|r| {
                let bills: Vec<_> = r.bills.iter().map(|b| (b.bill_id, b.score.to_bits(), b.enacted, b.status.clone())).collect();
                (r.cluster_name.clone(), r.threshold.to_bits(), r.total_bills_found, r.enacted_bills, bills)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(shape(&derived.cluster_reports), shape(&stored.cluster_reports));
    let (y, z) = oracle_from_jsonl(&jsonl);
    assert_eq!((y, z), (stored.gridlocked_clusters, stored.total_clusters()));
    assert_eq!(f64::from(y) / f64::from(z), stored.score);
}

#[test]
fn criterion_7_trace_rederivation() {
    criterion(7, "scores recomputed from exported traces", None, || {
        let app = common::replay(&[113, 114, 115, 116, 117, 118], None);
        let batch = RunOptions {
            no_review: true,
            ..RunOptions::default()
        };
        let mut runs = Vec::new();
        for congress in 113..=118 {
            runs.push(app.engine.run_congress(congress, batch.clone()).unwrap());
        }
        // A reviewed run: overrides must be replayed from the trace too.
        let reviewed = app.engine.run_congress(113, RunOptions::default()).unwrap();
        let immigration = reviewed.cluster_reports.iter().find(|r| r.cluster_name == "Immigration Reform").unwrap();
        let enacted = immigration.bills.iter().find(|b| b.enacted).unwrap().bill_id;
        let mut change = ReviewOverride::default();
        change.bill_overrides.insert(enacted, false);
        app.engine.review_override(&reviewed.run_id, &immigration.cluster_name, &change, "acceptance").unwrap();
        let raise = ReviewOverride {
            threshold: Some(0.59),
            ..ReviewOverride::default()
        };
        app.engine.review_override(&reviewed.run_id, "Tax and Economic Policy", &raise, "acceptance").unwrap();
        runs.push(app.engine.finalize(&reviewed.run_id).unwrap());

        for run in &runs {
            assert_eq!(run.state, RunState::Finalized);
            check_run(&app.trace, run);
        }
        assert_eq!(runs.last().unwrap().result.as_ref().unwrap().score, 0.75);
    });
}

fn gridlock_of(works: &[ClusterWork]) -> f64 {
    compute_gridlock(113, works.iter().map(ClusterWork::report).collect(), "r", "t").unwrap().score
}

fn arb_work(index: usize) -> impl Strategy<Value = ClusterWork> {
    proptest::collection::vec((0.4f64..=1.0, any::<bool>()), 0..12).prop_map(move |bills| {
        let candidates = bills
            .into_iter()
            .enumerate()
            .map(|(i, (score, enacted))| {
                let mut b = BillMatch::new(BillId::parse(&format!("113-hr-{}", index * 100 + i + 1)).unwrap(), "t", "s", score);
                b.enacted = enacted;
                b.status = if enacted { "Became Public Law" } else { "Not Enacted" }.into();
                b
            })
            .collect();
        ClusterWork::new(cluster(&format!("c{index}")), 0.4, candidates)
    })
}

fn arb_works() -> impl Strategy<Value = Vec<ClusterWork>> {
    (1usize..8).prop_flat_map(|n| (0..n).map(arb_work).collect::<Vec<_>>())
}

#[test]
fn criterion_8_review_monotonicity() {
    criterion(8, "stricter review never lowers gridlock", None, || {
        let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(512));
        let strategy = (arb_works(), any::<prop::sample::Index>(), 0.0f64..0.7, 0.4f64..=1.0, proptest::collection::vec(any::<bool>(), 12));
        runner
            .run(&strategy, |(works, pick, raise_by, start, exclude_mask)| {
                let i = pick.index(works.len());
                let mut base = works.clone();
                base[i]
                    .apply(&ReviewOverride {
                        threshold: Some(start),
                        ..ReviewOverride::default()
                    })
                    .unwrap();
                let before = gridlock_of(&base);

                let mut stricter = base.clone();
                let raised = (start + raise_by).min(1.0);
                stricter[i]
                    .apply(&ReviewOverride {
                        threshold: Some(raised),
                        ..ReviewOverride::default()
                    })
                    .unwrap();
                prop_assert!(gridlock_of(&stricter) >= before);
                // Lowering back is the reverse move.
                prop_assert!(gridlock_of(&base) <= gridlock_of(&stricter));

                let mut exclusions = ReviewOverride::default();
                for (b, ex) in base[i].candidates.iter().zip(&exclude_mask) {
                    if *ex {
                        exclusions.bill_overrides.insert(b.bill_id, false);
                    }
                }
                let mut fewer = base.clone();
                fewer[i].apply(&exclusions).unwrap();
                let after_exclude = gridlock_of(&fewer);
                prop_assert!(after_exclude >= before);

                let mut inclusions = ReviewOverride::default();
                for id in exclusions.bill_overrides.keys() {
                    inclusions.bill_overrides.insert(*id, true);
                }
                let mut restored = fewer.clone();
                restored[i].apply(&inclusions).unwrap();
                prop_assert!(gridlock_of(&restored) <= after_exclude);
                prop_assert_eq!(gridlock_of(&restored), before);
                Ok(())
            })
            .unwrap();
    });
}

/// Rows of a CSV file as header-keyed maps.
fn csv_rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn num(s: &str) -> Option<f64> {
    match s.trim() {
        "" | "NA" => None,
        v => Some(v.parse().unwrap()),
    }
}

#[test]
fn criterion_9_relational_fidelity() {
    criterion(9, "lookups against CSV scans, idempotent ingestion", None, || {
        let root = common::fixtures();
        let rel = RelationalStore::in_memory();
        let mut quiet = |_| {};
        let load = |rel: &RelationalStore, quiet: &mut dyn FnMut(Value)| {
            ingest::ingest_tables(rel, &root.join("tables"), quiet).unwrap();
            for c in 113..=118 {
                ingest::ingest_bill_status(rel, &common::congress_dir(c).join("bill_status.csv"), quiet).unwrap();
            }
        };
        load(&rel, &mut quiet);

        let committees = csv_rows(&root.join("tables/committee_assignments.csv"));
        let scores = csv_rows(&root.join("tables/member_scores.csv"));
        let rolls = csv_rows(&root.join("tables/roll_calls.csv"));
        let mut statuses = Vec::new();
        for c in 113..=118 {
            statuses.extend(csv_rows(&common::congress_dir(c).join("bill_status.csv")));
        }
        let members: Vec<String> = scores.iter().map(|r| r["bioguide_id"].clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let mut rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
        let mut hits = [0usize; 5];
        for probe in 0..500 {
            let congress = rng.random_range(112..=119u32);
            let member = if rng.random_range(0..10) == 0 {
                "Z999999".to_string()
            } else {
                members[rng.random_range(0..members.len())].clone()
            };
            match probe % 5 {
                0 => {
                    let id = if rng.random_range(0..5) == 0 {
                        format!("{congress}-hr-{}", rng.random_range(1..10_000))
                    } else {
                        statuses[rng.random_range(0..statuses.len())]["bill_id"].clone()
                    };
                    let bill = BillId::parse(&id).unwrap();
                    let expected = statuses.iter().rev().find(|r| r["bill_id"] == id).map(|r| {
                        let enacted = r["status"] == "BECAME_PUBLIC_LAW";
                        (enacted, if enacted { "Became Public Law" } else { "Not Enacted" })
                    });
                    match (rel.get_bill_status(&bill), expected) {
                        (Ok(s), Some((e, text))) => {
                            assert_eq!((s.enacted, s.status.as_str()), (e, text));
                            hits[0] += 1;
                        }
                        (Err(RelationalError::NotFound { .. }), None) => {}
                        (got, want) => panic!("bill {id}: {got:?} vs {want:?}"),
                    }
                }
                1 => {
                    let mut expected: Vec<(String, bool)> = committees
                        .iter()
                        .filter(|r| r["bioguide_id"] == member && r["congress"] == congress.to_string())
                        .map(|r| (r["committee_name"].clone(), r["is_chair"] == "1"))
                        .collect();
                    expected.sort();
                    let got: Vec<(String, bool)> = rel
                        .get_committee_assignments(&member, congress)
                        .unwrap()
                        .into_iter()
                        .map(|a| (a.committee_name, a.is_chair))
                        .collect();
                    hits[1] += usize::from(!got.is_empty());
                    assert_eq!(got, expected, "{member} {congress}");
                }
                2 | 3 => {
                    let row = scores.iter().find(|r| r["bioguide_id"] == member && r["congress"] == congress.to_string());
                    if probe % 5 == 2 {
                        let expected = row.and_then(|r| num(&r["les"]));
                        match (rel.get_les(&member, congress), expected) {
                            (Ok(v), Some(e)) => {
                                assert_eq!(v, e);
                                hits[2] += 1;
                            }
                            (Err(RelationalError::NotFound { .. }), None) => {}
                            (got, want) => panic!("LES {member} {congress}: {got:?} vs {want:?}"),
                        }
                    } else {
                        let expected = row
                            .map(|r| (num(&r["nominate_dim1"]), num(&r["nominate_dim2"])))
                            .filter(|(a, b)| a.is_some() || b.is_some());
                        match (rel.get_nominate_score(&member, congress), expected) {
                            (Ok(v), Some((d1, d2))) => {
                                assert_eq!((v.dim1, v.dim2), (d1, d2));
                                hits[3] += 1;
                            }
                            (Err(RelationalError::NotFound { .. }), None) => {}
                            (got, want) => panic!("NOMINATE {member} {congress}: {got:?} vs {want:?}"),
                        }
                    }
                }
                _ => {
                    let id = if rng.random_range(0..4) == 0 {
                        format!("{congress}-s-{}", rng.random_range(1..50))
                    } else {
                        rolls[rng.random_range(0..rolls.len())]["bill_id"].clone()
                    };
                    let mut expected: Vec<(u32, u32, u32, String)> = rolls
                        .iter()
                        .filter(|r| r["bill_id"] == id)
                        .map(|r| (r["roll_number"].parse().unwrap(), r["yea"].parse().unwrap(), r["nay"].parse().unwrap(), r["result"].clone()))
                        .collect();
                    expected.sort();
                    let got: Vec<(u32, u32, u32, String)> = rel
                        .get_roll_call_summary(&BillId::parse(&id).unwrap())
                        .unwrap()
                        .into_iter()
                        .map(|r| (r.roll_number, r.yea, r.nay, r.result))
                        .collect();
                    hits[4] += usize::from(!got.is_empty());
                    assert_eq!(got, expected, "{id}");
                }
            }
        }
        assert!(hits.iter().all(|h| *h > 20), "too few positive probes: {hits:?}");

        // Reloading changes nothing.
        let counts = |rel: &RelationalStore| {
            legis::relational::Table::ALL.map(|t| rel.count(t).unwrap())
        };
        let before = counts(&rel);
        load(&rel, &mut quiet);
        assert_eq!(counts(&rel), before);

        let embedder = Arc::new({
            let mut e = legis::providers::RecordedEmbedder::new(32);
            e.load(&common::congress_dir(116).join("embeddings.jsonl")).unwrap();
            e
        });
        let store = VectorStore::in_memory(32);
        let bills = common::congress_dir(116).join("bills.jsonl");
        ingest::ingest_bill_summaries(&store, embedder.as_ref(), &bills, None, 16, &mut quiet).unwrap();
        let n = store.len(Collection::Bills);
        let first_line = std::fs::read_to_string(common::congress_dir(116).join("embeddings.jsonl")).unwrap();
        let first: Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
        let probe = embedder.embed(&[first["text"].as_str().unwrap().to_string()]).unwrap().remove(0);
        let search = |store: &VectorStore| {
            store
                .search(Collection::Bills, &probe, SearchParams::new(50, 0.0), &MetadataFilter::none())
                .unwrap()
                .into_iter()
                .map(|h| (h.doc_id, h.score.to_bits()))
                .collect::<Vec<_>>()
        };
        let before = search(&store);
        ingest::ingest_bill_summaries(&store, embedder.as_ref(), &bills, None, 16, &mut quiet).unwrap();
        assert_eq!(store.len(Collection::Bills), n);
        assert_eq!(search(&store), before);
    });
}
