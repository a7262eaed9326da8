//! Bulk loaders for the vector and relational stores.
//!
//! Progress is reported through a callback as JSON objects with an `"event"`
//! field (`batch`, `skip`, `unknown_marker`, `done`); the CLI prints them one per
//! line.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use legis_core::embed::{EmbedError, Embedder};
use legis_core::{BillId, Collection, EmbeddedDocument};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::apis::{ApiError, ArchiveArticle, ArchiveClient};
use crate::relational::{RelationalError, RelationalStore, Row, Table};
use crate::vector_store::{StoreError, VectorStore};

pub const DEFAULT_BATCH_SIZE: usize = 64;

pub const ENACTED_STATUS: &str = "Became Public Law";
pub const NOT_ENACTED_STATUS: &str = "Not Enacted";

pub type Progress<'a> = &'a mut dyn FnMut(Value);

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding batch {batch} failed: {source}")]
    Embed {
        batch: usize,
        #[source]
        source: EmbedError,
    },
    #[error("embedder returned {got} vectors for {expected} texts")]
    EmbedCount { expected: usize, got: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error("archive {year}-{month:02}: {source}")]
    Archive {
        year: u32,
        month: u32,
        #[source]
        source: ApiError,
    },
    #[error("batch size must be positive")]
    BatchSize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Documents now present for the ingested records.
    pub embedded: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub batches: usize,
}

/// Strips markup tags and collapses runs of whitespace.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_tag = false;
    for c in raw.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if in_tag => {}
            _ => out.push(c),
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One record of a bill-summary bulk file (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillSummaryRecord {
    pub bill_id: String,
    pub title: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub introduced_date: Option<String>,
}

struct Pending {
    doc: EmbeddedDocument,
    embed_text: String,
}

/// Embeds `pending` in batches of `batch` and upserts the results.
fn embed_and_store(
    store: &VectorStore,
    embedder: &dyn Embedder,
    pending: Vec<Pending>,
    batch: usize,
    collection: Collection,
    report: &mut IngestReport,
    progress: Progress<'_>,
) -> Result<(), IngestError> {
    let total = pending.len().div_ceil(batch);
    for (i, chunk) in pending.chunks(batch).enumerate() {
        let texts: Vec<String> = chunk.iter().map(|p| p.embed_text.clone()).collect();
        let vectors = embedder
            .embed(&texts)
            .map_err(|source| IngestError::Embed { batch: i + 1, source })?;
        report.batches += 1;
        if vectors.len() != chunk.len() {
            return Err(IngestError::EmbedCount {
                expected: chunk.len(),
                got: vectors.len(),
            });
        }
        let docs: Vec<EmbeddedDocument> = chunk
            .iter()
            .zip(vectors)
            .map(|(p, v)| EmbeddedDocument {
                vector: v.iter().map(|x| *x as f32).collect(),
                ..p.doc.clone()
            })
            .filter(|d| store.get(collection, &d.doc_id).as_ref() != Some(d))
            .collect();
        store.upsert_many(docs)?;
        report.embedded += chunk.len();
        progress(json!({
            "event": "batch",
            "collection": collection.as_str(),
            "batch": i + 1,
            "of": total,
            "embedded": report.embedded,
        }));
    }
    Ok(())
}

fn done(progress: Progress<'_>, collection: &str, report: &IngestReport) {
    progress(json!({
        "event": "done",
        "collection": collection,
        "embedded": report.embedded,
        "skipped": report.skipped,
        "duplicates": report.duplicates,
        "batches": report.batches,
    }));
}

/// Loads bill summaries from a JSON-lines file into the `bills` collection.
///
/// The normalized summary is embedded; the stored text keeps the source
/// markup. Records outside `congresses` are ignored, unparsable ones skipped.
pub fn ingest_bill_summaries(
    store: &VectorStore,
    embedder: &dyn Embedder,
    source: &Path,
    congresses: Option<RangeInclusive<u32>>,
    batch: usize,
    progress: Progress<'_>,
) -> Result<IngestReport, IngestError> {
    if batch == 0 {
        return Err(IngestError::BatchSize);
    }
    let file = std::fs::File::open(source).map_err(|e| IngestError::Read {
        path: source.to_path_buf(),
        source: e,
    })?;
    let mut report = IngestReport::default();
    let mut pending: BTreeMap<String, Pending> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Read {
            path: source.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut skip = |reason: String| {
            report.skipped += 1;
            progress(json!({"event": "skip", "line": i + 1, "reason": reason}));
        };
        let rec: BillSummaryRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                skip(e.to_string());
                continue;
            }
        };
        let id = match BillId::parse(&rec.bill_id) {
            Ok(id) => id,
            Err(e) => {
                skip(format!("bill_id {:?}: {e}", rec.bill_id));
                continue;
            }
        };
        if congresses.as_ref().is_some_and(|r| !r.contains(&id.congress)) {
            continue;
        }
        let embed_text = normalize_text(&rec.summary);
        if embed_text.is_empty() {
            skip(format!("bill {} has an empty summary", rec.bill_id));
            continue;
        }
        let doc_id = id.render();
        let mut metadata = BTreeMap::new();
        metadata.insert("congress".into(), id.congress.to_string());
        metadata.insert("bill_id".into(), doc_id.clone());
        metadata.insert("title".into(), rec.title.clone());
        if let Some(d) = &rec.introduced_date {
            metadata.insert("introduced_date".into(), d.clone());
        }
        let doc = EmbeddedDocument {
            doc_id: doc_id.clone(),
            collection: Collection::Bills,
            text: rec.summary,
            vector: Vec::new(),
            metadata,
        };
        if pending.insert(doc_id, Pending { doc, embed_text }).is_some() {
            report.duplicates += 1;
        }
    }
    embed_and_store(
        store,
        embedder,
        pending.into_values().collect(),
        batch,
        Collection::Bills,
        &mut report,
        progress,
    )?;
    done(progress, "bills", &report);
    Ok(report)
}

/// Stable article doc_id: the first 16 bytes of SHA-256 over the url, in hex.
pub fn article_doc_id(url: &str) -> String {
    hex::encode(&Sha256::digest(url.trim().as_bytes())[..16])
}

/// Embeds archive articles ("headline + abstract"), one document per url.
pub fn ingest_article_records(
    store: &VectorStore,
    embedder: &dyn Embedder,
    months: Vec<((u32, u32), Vec<ArchiveArticle>)>,
    batch: usize,
    progress: Progress<'_>,
) -> Result<IngestReport, IngestError> {
    if batch == 0 {
        return Err(IngestError::BatchSize);
    }
    let mut report = IngestReport::default();
    let mut pending: Vec<Pending> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for ((year, month), articles) in months {
        for a in articles {
            let text = normalize_text(&format!("{} {}", a.headline, a.abstract_text));
            if a.url.trim().is_empty() || text.is_empty() {
                report.skipped += 1;
                progress(json!({"event": "skip", "url": a.url, "reason": "missing url or text"}));
                continue;
            }
            let doc_id = article_doc_id(&a.url);
            if !seen.insert(doc_id.clone()) {
                report.duplicates += 1;
                continue;
            }
            let mut metadata = BTreeMap::new();
            metadata.insert("year".into(), year.to_string());
            metadata.insert("month".into(), month.to_string());
            metadata.insert("url".into(), a.url.clone());
            metadata.insert("headline".into(), a.headline.clone());
            if !a.pub_date.is_empty() {
                metadata.insert("pub_date".into(), a.pub_date.clone());
            }
            pending.push(Pending {
                doc: EmbeddedDocument {
                    doc_id,
                    collection: Collection::Articles,
                    text: text.clone(),
                    vector: Vec::new(),
                    metadata,
                },
                embed_text: text,
            });
        }
    }
    embed_and_store(store, embedder, pending, batch, Collection::Articles, &mut report, progress)?;
    done(progress, "articles", &report);
    Ok(report)
}

/// Every (year, month) from `from` through `to` inclusive.
pub fn month_range(from: (u32, u32), to: (u32, u32)) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let (mut y, mut m) = from;
    while (y, m) <= to {
        out.push((y, m));
        if m == 12 {
            y += 1;
            m = 1;
        } else {
            m += 1;
        }
    }
    out
}

/// Fetches each month from the archive client, then embeds the articles.
pub fn ingest_articles(
    store: &VectorStore,
    embedder: &dyn Embedder,
    client: &ArchiveClient,
    months: &[(u32, u32)],
    batch: usize,
    progress: Progress<'_>,
) -> Result<IngestReport, IngestError> {
    let mut fetched = Vec::with_capacity(months.len());
    for &(year, month) in months {
        let got = client
            .fetch_article_archive(year, month)
            .map_err(|source| IngestError::Archive { year, month, source })?;
        progress(json!({"event": "fetched", "year": year, "month": month, "articles": got.value.len()}));
        fetched.push(((year, month), got.value));
    }
    ingest_article_records(store, embedder, fetched, batch, progress)
}

/// Maps a bulk bill-status marker to `(enacted, status_text)`.
///
/// | marker | enacted | status |
/// |---|---|---|
/// | `ENACTED`, `BECAME_PUBLIC_LAW`, `PUBLIC_LAW`, `VETO_OVERRIDDEN` | yes | Became Public Law |
/// | `BECAME_PRIVATE_LAW`, `PRIVATE_LAW` | yes | Became Private Law |
/// | `INTRODUCED`, `REFERRED`, `REPORTED`, `PASSED_HOUSE`, `PASSED_SENATE`, `PASSED_BOTH`, `RESOLVING_DIFFERENCES`, `TO_PRESIDENT`, `VETOED`, `POCKET_VETOED`, `FAILED` | no | Not Enacted |
///
/// Markers are matched case-insensitively with `-` and spaces read as `_`.
pub fn map_status_marker(marker: &str) -> Option<(bool, &'static str)> {
    let m = marker.trim().to_ascii_uppercase().replace(['-', ' '], "_");
    match m.as_str() {
        "ENACTED" | "BECAME_PUBLIC_LAW" | "PUBLIC_LAW" | "VETO_OVERRIDDEN" => Some((true, ENACTED_STATUS)),
        "BECAME_PRIVATE_LAW" | "PRIVATE_LAW" => Some((true, "Became Private Law")),
        "INTRODUCED" | "REFERRED" | "REPORTED" | "PASSED_HOUSE" | "PASSED_SENATE" | "PASSED_BOTH"
        | "RESOLVING_DIFFERENCES" | "TO_PRESIDENT" | "VETOED" | "POCKET_VETOED" | "FAILED" => {
            Some((false, NOT_ENACTED_STATUS))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatusReport {
    pub rows: usize,
    pub enacted: usize,
    pub unknown_markers: usize,
    pub skipped: usize,
}

/// Loads a `bill_id,status` marker CSV into `bill_status`, replacing rows for
/// the same bills.
pub fn ingest_bill_status(rel: &RelationalStore, source: &Path, progress: Progress<'_>) -> Result<StatusReport, IngestError> {
    let text = std::fs::read_to_string(source).map_err(|e| IngestError::Read {
        path: source.to_path_buf(),
        source: e,
    })?;
    let mut report = StatusReport::default();
    let mut rows = Vec::new();
    if !text.trim().is_empty() {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = match rec {
                Ok(r) if r.len() >= 2 => r,
                Ok(_) => {
                    report.skipped += 1;
                    progress(json!({"event": "skip", "line": line, "reason": "expected bill_id,status"}));
                    continue;
                }
                Err(e) => {
                    report.skipped += 1;
                    progress(json!({"event": "skip", "line": line, "reason": e.to_string()}));
                    continue;
                }
            };
            let bill_id = match BillId::parse(&rec[0]) {
                Ok(id) => id,
                Err(e) => {
                    report.skipped += 1;
                    progress(json!({"event": "skip", "line": line, "reason": e.to_string()}));
                    continue;
                }
            };
            let (enacted, status) = map_status_marker(&rec[1]).unwrap_or_else(|| {
                report.unknown_markers += 1;
                progress(json!({"event": "unknown_marker", "line": line, "marker": &rec[1]}));
                (false, NOT_ENACTED_STATUS)
            });
            report.enacted += usize::from(enacted);
            rows.push(Row::BillStatus {
                bill_id,
                enacted,
                status_text: status.into(),
            });
        }
    }
    report.rows = rel.merge_rows(Table::BillStatus, &rows)?;
    progress(json!({"event": "done", "table": "bill_status", "rows": report.rows, "enacted": report.enacted,
                    "unknown_markers": report.unknown_markers, "skipped": report.skipped}));
    Ok(report)
}

/// Loads every `<table>.csv` found in `dir` (member tables and normalized
/// bill status), replacing each table's contents.
pub fn ingest_tables(rel: &RelationalStore, dir: &Path, progress: Progress<'_>) -> Result<BTreeMap<String, usize>, IngestError> {
    let mut counts = BTreeMap::new();
    for table in Table::ALL {
        let path = dir.join(format!("{}.csv", table.name()));
        if !path.exists() {
            continue;
        }
        let n = rel.ingest_table(&path, table)?;
        progress(json!({"event": "done", "table": table.name(), "rows": n}));
        counts.insert(table.name().to_string(), n);
    }
    Ok(counts)
}
