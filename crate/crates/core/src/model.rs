//! Legislative domain records shared by the stores, tools and pipeline.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The eight standard measure types. Anything else is rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BillType {
    Hr,
    S,
    Hjres,
    Sjres,
    Hconres,
    Sconres,
    Hres,
    Sres,
}

impl BillType {
    pub const ALL: [BillType; 8] = [
        BillType::Hr,
        BillType::S,
        BillType::Hjres,
        BillType::Sjres,
        BillType::Hconres,
        BillType::Sconres,
        BillType::Hres,
        BillType::Sres,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BillType::Hr => "hr",
            BillType::S => "s",
            BillType::Hjres => "hjres",
            BillType::Sjres => "sjres",
            BillType::Hconres => "hconres",
            BillType::Sconres => "sconres",
            BillType::Hres => "hres",
            BillType::Sres => "sres",
        }
    }

    /// Case-insensitive token lookup. Dotted forms such as `H.R.` are accepted.
    pub fn from_token(token: &str) -> Option<BillType> {
        let folded: String = token
            .chars()
            .filter(|c| *c != '.' && !c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect();
        BillType::ALL.into_iter().find(|t| t.as_str() == folded)
    }
}

impl fmt::Display for BillType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which part of a bill id failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BillIdSegment {
    Congress,
    BillType,
    BillNumber,
}

impl fmt::Display for BillIdSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BillIdSegment::Congress => "congress",
            BillIdSegment::BillType => "bill_type",
            BillIdSegment::BillNumber => "bill_number",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BillIdError {
    #[error("bill id is empty")]
    Empty,
    #[error("bill id {input:?} has {found} segments, expected congress-type-number")]
    SegmentCount { input: String, found: usize },
    #[error("bill id {input:?}: invalid {segment} segment {value:?}")]
    InvalidSegment {
        input: String,
        segment: BillIdSegment,
        value: String,
    },
}

impl BillIdError {
    /// The offending segment, when the failure is attributable to one.
    pub fn segment(&self) -> Option<BillIdSegment> {
        match self {
            BillIdError::InvalidSegment { segment, .. } => Some(*segment),
            BillIdError::SegmentCount { found, .. } if *found < 3 => Some(match found {
                0 | 1 => BillIdSegment::BillType,
                _ => BillIdSegment::BillNumber,
            }),
            _ => None,
        }
    }
}

/// Canonical bill identifier, rendered as `{congress}-{type}-{number}`.
///
/// Ordering is congress, then type, then number; this is the tie-break order used
/// wherever bills with equal similarity scores have to be ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BillId {
    pub congress: u32,
    pub bill_type: BillType,
    pub bill_number: u32,
}

impl BillId {
    pub fn new(congress: u32, bill_type: BillType, bill_number: u32) -> Result<Self, BillIdError> {
        let id = BillId {
            congress,
            bill_type,
            bill_number,
        };
        if congress == 0 {
            return Err(BillIdError::InvalidSegment {
                input: id.to_string(),
                segment: BillIdSegment::Congress,
                value: "0".into(),
            });
        }
        if bill_number == 0 {
            return Err(BillIdError::InvalidSegment {
                input: id.to_string(),
                segment: BillIdSegment::BillNumber,
                value: "0".into(),
            });
        }
        Ok(id)
    }

    pub fn parse(text: &str) -> Result<Self, BillIdError> {
        parse_bill_id(text)
    }

    pub fn render(&self) -> String {
        render_bill_id(self)
    }
}

/// Parses `"113-s-1"` style identifiers. The type token is case-folded.
pub fn parse_bill_id(text: &str) -> Result<BillId, BillIdError> {
    let input = text.trim();
    if input.is_empty() {
        return Err(BillIdError::Empty);
    }
    let parts: Vec<&str> = input.split('-').collect();
    if parts.len() != 3 {
        return Err(BillIdError::SegmentCount {
            input: input.into(),
            found: parts.len(),
        });
    }
    let invalid = |segment, value: &str| BillIdError::InvalidSegment {
        input: input.into(),
        segment,
        value: value.into(),
    };
    let congress = parse_positive(parts[0]).ok_or_else(|| invalid(BillIdSegment::Congress, parts[0]))?;
    let bill_type = BillType::from_token(parts[1]).ok_or_else(|| invalid(BillIdSegment::BillType, parts[1]))?;
    let bill_number = parse_positive(parts[2]).ok_or_else(|| invalid(BillIdSegment::BillNumber, parts[2]))?;
    Ok(BillId {
        congress,
        bill_type,
        bill_number,
    })
}

pub fn render_bill_id(id: &BillId) -> String {
    format!("{}-{}-{}", id.congress, id.bill_type, id.bill_number)
}

fn parse_positive(text: &str) -> Option<u32> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse::<u32>().ok().filter(|n| *n > 0)
}

impl fmt::Display for BillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.congress, self.bill_type, self.bill_number)
    }
}

impl FromStr for BillId {
    type Err = BillIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bill_id(s)
    }
}

impl Serialize for BillId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BillId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_bill_id(&text).map_err(serde::de::Error::custom)
    }
}

/// Metadata for one piece of legislation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillRecord {
    pub id: BillId,
    pub title: String,
    #[serde(default)]
    pub summary: String,
    /// ISO-8601 calendar date (`YYYY-MM-DD`).
    pub introduced_date: String,
    #[serde(default)]
    pub sponsor_bioguide_ids: Vec<String>,
    pub enacted: bool,
    #[serde(default)]
    pub status_text: String,
}

impl BillRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if !is_iso_date(&self.introduced_date) {
            return Err(RecordError::new("introduced_date", "expected YYYY-MM-DD"));
        }
        if self.enacted && self.status_text.trim().is_empty() {
            return Err(RecordError::new("status_text", "enacted bills need a status"));
        }
        Ok(())
    }
}

/// Checks `YYYY-MM-DD` shape and month/day ranges (no calendar arithmetic).
pub fn is_iso_date(text: &str) -> bool {
    let b = text.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: core::ops::Range<usize>| b[r.clone()].iter().all(u8::is_ascii_digit).then(|| &text[r]);
    let (Some(_), Some(m), Some(d)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let (m, d): (u32, u32) = (m.parse().unwrap_or(0), d.parse().unwrap_or(0));
    (1..=12).contains(&m) && (1..=31).contains(&d)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct RecordError {
    pub field: &'static str,
    pub reason: String,
}

impl RecordError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        RecordError {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chamber {
    House,
    Senate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub congress: u32,
    pub party: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub bioguide_id: String,
    pub name: String,
    /// Two-letter postal code.
    pub state: String,
    pub chamber: Chamber,
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leadership: Vec<String>,
}

impl MemberRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.bioguide_id.trim().is_empty() {
            return Err(RecordError::new("bioguide_id", "must be non-empty"));
        }
        if self.terms.is_empty() {
            return Err(RecordError::new("terms", "must be non-empty"));
        }
        if self.state.len() != 2 || !self.state.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(RecordError::new("state", "expected a two-letter code"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberScores {
    pub bioguide_id: String,
    pub congress: u32,
    pub les: Option<f64>,
    pub nominate_dim1: Option<f64>,
    pub nominate_dim2: Option<f64>,
}

impl MemberScores {
    pub fn validate(&self) -> Result<(), RecordError> {
        if let Some(les) = self.les {
            if !(les >= 0.0) {
                return Err(RecordError::new("les", "must be non-negative"));
            }
        }
        for (field, dim) in [("nominate_dim1", self.nominate_dim1), ("nominate_dim2", self.nominate_dim2)] {
            if let Some(v) = dim {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(RecordError::new(field, "must lie in [-1, 1]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeAssignment {
    pub bioguide_id: String,
    pub congress: u32,
    pub committee_name: String,
    pub is_chair: bool,
}

impl CommitteeAssignment {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.committee_name.trim().is_empty() {
            return Err(RecordError::new("committee_name", "must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollCallSummary {
    pub bill_id: BillId,
    pub roll_number: u32,
    pub yea: u32,
    pub nay: u32,
    pub result: String,
}

impl RollCallSummary {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.roll_number == 0 {
            return Err(RecordError::new("roll_number", "must be positive"));
        }
        if self.yea + self.nay == 0 {
            return Err(RecordError::new("yea", "yea + nay must be positive"));
        }
        Ok(())
    }
}

/// Vector collections known to the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collection {
    Articles,
    Bills,
}

impl Collection {
    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Articles => "articles",
            Collection::Bills => "bills",
        }
    }

    /// Metadata keys every document in this collection must carry.
    pub fn required_metadata(self) -> &'static [&'static str] {
        match self {
            Collection::Articles => &["year"],
            Collection::Bills => &["congress", "bill_id"],
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Collection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "articles" => Ok(Collection::Articles),
            "bills" => Ok(Collection::Bills),
            other => Err(format!("unknown collection {other:?}")),
        }
    }
}

/// A summary text with its embedding; the unit of semantic search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDocument {
    pub doc_id: String,
    pub collection: Collection,
    pub text: String,
    pub vector: Vec<f32>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}
