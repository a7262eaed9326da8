//! Cluster reports, review overrides and the gridlock score.
//!
//! A [`ClusterWork`] holds everything retrieved for one policy cluster: the
//! candidate bills returned by the search, the reviewer's threshold and
//! include/exclude overrides. The published [`ClusterReport`] is always derived
//! from it, so aggregates can never drift from the bill list they summarise.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{BillId, BillType};

/// Status text used when a bill's enactment could not be determined.
pub const UNKNOWN_STATUS: &str = "unknown";

/// One salient policy issue as produced by cluster identification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCluster {
    pub name: String,
    /// Article references (ids or representative snippets); may be a sample.
    #[serde(rename = "articles")]
    pub article_refs: Vec<String>,
    pub article_count: u32,
    pub summary: String,
    pub query: String,
}

impl PolicyCluster {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("cluster name must be non-empty".into());
        }
        if self.query.trim().is_empty() {
            return Err(format!("cluster {:?}: query must be non-empty", self.name));
        }
        if self.article_count == 0 {
            return Err(format!("cluster {:?}: article_count must be positive", self.name));
        }
        if (self.article_count as usize) < self.article_refs.len() {
            return Err(format!(
                "cluster {:?}: article_count {} is less than the {} articles listed",
                self.name,
                self.article_count,
                self.article_refs.len()
            ));
        }
        Ok(())
    }
}

/// A bill retrieved for a cluster, with its enactment status and review flag.
#[derive(Debug, Clone, PartialEq)]
pub struct BillMatch {
    pub bill_id: BillId,
    pub title: String,
    pub summary: String,
    pub score: f64,
    pub enacted: bool,
    pub status: String,
    /// Reviewer override; excluded bills stay listed but do not count.
    pub included: bool,
}

impl BillMatch {
    pub fn new(bill_id: BillId, title: impl Into<String>, summary: impl Into<String>, score: f64) -> Self {
        BillMatch {
            bill_id,
            title: title.into(),
            summary: summary.into(),
            score,
            enacted: false,
            status: String::new(),
            included: true,
        }
    }
}

#[derive(Serialize)]
struct BillMatchOut<'a> {
    bill_id: &'a BillId,
    title: &'a str,
    summary: &'a str,
    bill_type: BillType,
    bill_number: String,
    score: f64,
    enacted: bool,
    status: &'a str,
    #[serde(skip_serializing_if = "is_true")]
    included: bool,
}

fn is_true(b: &bool) -> bool {
    *b
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct BillMatchIn {
    bill_id: BillId,
    title: String,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    bill_type: Option<BillType>,
    #[serde(default)]
    bill_number: Option<serde_json::Value>,
    score: f64,
    enacted: bool,
    #[serde(default)]
    status: String,
    #[serde(default = "default_true")]
    included: bool,
}

impl Serialize for BillMatch {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        BillMatchOut {
            bill_id: &self.bill_id,
            title: &self.title,
            summary: &self.summary,
            bill_type: self.bill_id.bill_type,
            bill_number: self.bill_id.bill_number.to_string(),
            score: self.score,
            enacted: self.enacted,
            status: &self.status,
            included: self.included,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BillMatch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = BillMatchIn::deserialize(deserializer)?;
        if let Some(t) = raw.bill_type {
            if t != raw.bill_id.bill_type {
                return Err(D::Error::custom("bill_type disagrees with bill_id"));
            }
        }
        if let Some(n) = &raw.bill_number {
            let number = match n {
                serde_json::Value::String(s) => s.parse::<u32>().ok(),
                serde_json::Value::Number(n) => n.as_u64().and_then(|v| u32::try_from(v).ok()),
                _ => None,
            };
            if number != Some(raw.bill_id.bill_number) {
                return Err(D::Error::custom("bill_number disagrees with bill_id"));
            }
        }
        if !(-1.0..=1.0).contains(&raw.score) {
            return Err(D::Error::custom("score outside [-1, 1]"));
        }
        Ok(BillMatch {
            bill_id: raw.bill_id,
            title: raw.title,
            summary: raw.summary,
            score: raw.score,
            enacted: raw.enacted,
            status: raw.status,
            included: raw.included,
        })
    }
}

/// Bill-matching and enactment summary for one cluster. Field names and order
/// form the published report format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterReport {
    pub cluster_name: String,
    pub query: String,
    pub threshold: f64,
    pub total_bills_found: u32,
    pub enacted_bills: u32,
    pub has_enacted_legislation: bool,
    pub enactment_rate: f64,
    pub bills: Vec<BillMatch>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("bills are not ordered by (score desc, bill_id asc) at index {0}")]
    Unordered(usize),
    #[error("bill {bill_id} scores {score}, below threshold {threshold}")]
    BelowThreshold { bill_id: BillId, score: f64, threshold: f64 },
    #[error("aggregate {field} is {found}, expected {expected}")]
    Aggregate {
        field: &'static str,
        found: String,
        expected: String,
    },
}

impl ClusterReport {
    /// Re-checks every report invariant from the bill list alone.
    pub fn validate(&self) -> Result<(), ReportError> {
        for (i, pair) in self.bills.windows(2).enumerate() {
            if bill_order(&pair[0], &pair[1]) != core::cmp::Ordering::Less {
                return Err(ReportError::Unordered(i + 1));
            }
        }
        if let Some(b) = self.bills.iter().find(|b| b.score < self.threshold) {
            return Err(ReportError::BelowThreshold {
                bill_id: b.bill_id,
                score: b.score,
                threshold: self.threshold,
            });
        }
        let (total, enacted) = aggregate(&self.bills);
        let checks: [(&'static str, String, String); 4] = [
            ("total_bills_found", self.total_bills_found.to_string(), total.to_string()),
            ("enacted_bills", self.enacted_bills.to_string(), enacted.to_string()),
            (
                "has_enacted_legislation",
                self.has_enacted_legislation.to_string(),
                (enacted > 0).to_string(),
            ),
            (
                "enactment_rate",
                format!("{:?}", self.enactment_rate),
                format!("{:?}", rate(enacted, total)),
            ),
        ];
        for (field, found, expected) in checks {
            if found != expected {
                return Err(ReportError::Aggregate { field, found, expected });
            }
        }
        Ok(())
    }

    pub fn is_gridlocked(&self) -> bool {
        !self.has_enacted_legislation
    }
}

/// Ranking order for bills: score descending, then canonical id ascending.
pub fn bill_order(a: &BillMatch, b: &BillMatch) -> core::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.bill_id.cmp(&b.bill_id))
}

/// `(included bills, included and enacted bills)`.
fn aggregate(bills: &[BillMatch]) -> (u32, u32) {
    bills.iter().filter(|b| b.included).fold((0, 0), |(t, e), b| (t + 1, e + u32::from(b.enacted)))
}

fn rate(enacted: u32, total: u32) -> f64 {
    if total == 0 {
        0.0
    } else {
        f64::from(enacted) / f64::from(total)
    }
}

/// Reviewer changes to one cluster.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bill_overrides: BTreeMap<BillId, bool>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReviewError {
    #[error("threshold {0} outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("bill {0} is not among this cluster's candidates")]
    UnknownBill(BillId),
}

/// Retrieval results plus review state for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterWork {
    pub cluster: PolicyCluster,
    /// Threshold the search ran with; candidates all score at least this.
    pub search_threshold: f64,
    /// Threshold currently applied to the report.
    pub threshold: f64,
    /// Every retrieved bill in rank order.
    pub candidates: Vec<BillMatch>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<BillId, bool>,
    #[serde(default)]
    pub statuses_checked: bool,
    /// Set when retrieval failed persistently; errored clusters do not count
    /// towards the gridlock score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ClusterWork {
    pub fn new(cluster: PolicyCluster, threshold: f64, mut candidates: Vec<BillMatch>) -> Self {
        candidates.sort_by(bill_order);
        ClusterWork {
            cluster,
            search_threshold: threshold,
            threshold,
            candidates,
            overrides: BTreeMap::new(),
            statuses_checked: false,
            error: None,
        }
    }

    pub fn errored(cluster: PolicyCluster, threshold: f64, error: impl Into<String>) -> Self {
        let mut w = Self::new(cluster, threshold, Vec::new());
        w.error = Some(error.into());
        w
    }

    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }

    /// Bills at or above the current threshold, with overrides applied.
    pub fn visible_bills(&self) -> Vec<BillMatch> {
        self.candidates
            .iter()
            .filter(|b| b.score >= self.threshold)
            .map(|b| {
                let mut b = b.clone();
                b.included = self.overrides.get(&b.bill_id).copied().unwrap_or(true);
                b
            })
            .collect()
    }

    pub fn report(&self) -> ClusterReport {
        let bills = self.visible_bills();
        let (total, enacted) = aggregate(&bills);
        ClusterReport {
            cluster_name: self.cluster.name.clone(),
            query: self.cluster.query.clone(),
            threshold: self.threshold,
            total_bills_found: total,
            enacted_bills: enacted,
            has_enacted_legislation: enacted > 0,
            enactment_rate: rate(enacted, total),
            bills,
        }
    }

    /// Records an enactment lookup for `bill_id` on every matching candidate.
    pub fn set_status(&mut self, bill_id: &BillId, enacted: bool, status: &str) {
        for b in self.candidates.iter_mut().filter(|b| &b.bill_id == bill_id) {
            b.enacted = enacted;
            b.status = status.into();
        }
    }

    /// Bills whose status step 3 must look up: those currently included.
    pub fn bills_to_check(&self) -> Vec<BillId> {
        self.visible_bills().into_iter().filter(|b| b.included).map(|b| b.bill_id).collect()
    }

    pub fn apply(&mut self, review: &ReviewOverride) -> Result<(), ReviewError> {
        if let Some(t) = review.threshold {
            if !(-1.0..=1.0).contains(&t) {
                return Err(ReviewError::InvalidThreshold(t));
            }
        }
        if let Some(unknown) = review
            .bill_overrides
            .keys()
            .find(|id| !self.candidates.iter().any(|b| &b.bill_id == *id))
        {
            return Err(ReviewError::UnknownBill(*unknown));
        }
        if let Some(t) = review.threshold {
            self.threshold = t;
        }
        for (id, include) in &review.bill_overrides {
            if *include {
                self.overrides.remove(id);
            } else {
                self.overrides.insert(*id, false);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridlockError {
    #[error("gridlock is undefined without at least one cluster report")]
    NoClusters,
}

/// The gridlock score for one Congress with the reports it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridlockResult {
    pub congress: u32,
    pub cluster_reports: Vec<ClusterReport>,
    /// Clusters without enacted legislation.
    pub gridlocked_clusters: u32,
    /// `gridlocked_clusters / cluster_reports.len()`, in `[0, 1]`.
    pub score: f64,
    pub run_id: String,
    pub trace_ref: String,
}

impl GridlockResult {
    pub fn total_clusters(&self) -> u32 {
        self.cluster_reports.len() as u32
    }

    /// Score as a percentage, for display.
    pub fn percent(&self) -> f64 {
        self.score * 100.0
    }

    /// Checks `score == Y / Z` against the stored reports.
    pub fn is_consistent(&self) -> bool {
        match gridlock_ratio(&self.cluster_reports) {
            Ok((y, z)) => y == self.gridlocked_clusters && self.score == ratio_to_score(y, z),
            Err(_) => false,
        }
    }
}

/// `(Y, Z)`: clusters without enacted legislation, and all clusters.
pub fn gridlock_ratio(reports: &[ClusterReport]) -> Result<(u32, u32), GridlockError> {
    if reports.is_empty() {
        return Err(GridlockError::NoClusters);
    }
    let y = reports.iter().filter(|r| r.is_gridlocked()).count() as u32;
    Ok((y, reports.len() as u32))
}

/// `Y / Z` as the correctly rounded `f64` quotient.
pub fn ratio_to_score(y: u32, z: u32) -> f64 {
    f64::from(y) / f64::from(z)
}

pub fn compute_gridlock(
    congress: u32,
    reports: Vec<ClusterReport>,
    run_id: impl Into<String>,
    trace_ref: impl Into<String>,
) -> Result<GridlockResult, GridlockError> {
    let (y, z) = gridlock_ratio(&reports)?;
    Ok(GridlockResult {
        congress,
        cluster_reports: reports,
        gridlocked_clusters: y,
        score: ratio_to_score(y, z),
        run_id: run_id.into(),
        trace_ref: trace_ref.into(),
    })
}
