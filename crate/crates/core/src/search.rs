//! Exact cosine-similarity search over an in-memory collection.
//!
//! Vectors are kept as `f32`; every dot product and norm is accumulated in `f64`.
//! Results are ordered by score descending with `doc_id` ascending as the tie-break,
//! so two searches over the same data always agree on order.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{Collection, EmbeddedDocument};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("document {doc_id:?} belongs to {found}, not {expected}")]
    WrongCollection {
        doc_id: String,
        expected: Collection,
        found: Collection,
    },
    #[error("document {doc_id:?} is missing metadata key {key:?}")]
    MissingMetadata { doc_id: String, key: &'static str },
    #[error("doc_id must be non-empty")]
    EmptyDocId,
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("threshold {0} outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("vector contains a non-finite component")]
    NonFinite,
}

fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    libm::sqrt(v.iter().map(|x| (*x).into() * (*x).into()).sum())
}

fn dot<A: Copy + Into<f64>, B: Copy + Into<f64>>(a: &[A], b: &[B]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x).into() * (*y).into()).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<A, B>(a: &[A], b: &[B]) -> Result<f64, SearchError>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(SearchError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SearchError::ZeroNorm);
    }
    Ok(clamp_unit(dot(a, b) / (na * nb)))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// One metadata predicate. A filter is the conjunction of its conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Condition {
    Equals { key: String, value: String },
    /// Inclusive integer range; documents whose value does not parse never match.
    IntRange { key: String, min: i64, max: i64 },
}

impl Condition {
    pub fn equals(key: impl Into<String>, value: impl ToString) -> Self {
        Condition::Equals {
            key: key.into(),
            value: value.to_string(),
        }
    }

    pub fn int_range(key: impl Into<String>, min: i64, max: i64) -> Self {
        Condition::IntRange {
            key: key.into(),
            min,
            max,
        }
    }

    pub fn matches(&self, metadata: &BTreeMap<String, String>) -> bool {
        match self {
            Condition::Equals { key, value } => metadata.get(key) == Some(value),
            Condition::IntRange { key, min, max } => metadata
                .get(key)
                .and_then(|v| v.trim().parse::<i64>().ok())
                .is_some_and(|v| (*min..=*max).contains(&v)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataFilter {
    pub conditions: Vec<Condition>,
}

impl MetadataFilter {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, condition: Condition) -> Self {
        self.conditions.push(condition);
        self
    }

    pub fn matches(&self, metadata: &BTreeMap<String, String>) -> bool {
        self.conditions.iter().all(|c| c.matches(metadata))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
    pub metadata: BTreeMap<String, String>,
    pub text: String,
}

/// Orders hits by score descending, then doc_id ascending.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, PartialEq)]
struct Stored {
    text: String,
    metadata: BTreeMap<String, String>,
    vector: Vec<f32>,
    norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub top_k: usize,
    pub threshold: f64,
}

impl SearchParams {
    pub fn new(top_k: usize, threshold: f64) -> Self {
        SearchParams { top_k, threshold }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.top_k == 0 {
            return Err(SearchError::InvalidTopK);
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(SearchError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// All documents of one collection, sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCollection {
    name: Collection,
    dimension: usize,
    docs: BTreeMap<String, Stored>,
}

impl VectorCollection {
    pub fn new(name: Collection, dimension: usize) -> Self {
        assert!(dimension > 0, "collection dimension must be positive");
        VectorCollection {
            name,
            dimension,
            docs: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> Collection {
        self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }

    /// Checks a document against this collection without inserting it.
    pub fn check(&self, doc: &EmbeddedDocument) -> Result<(), SearchError> {
        if doc.doc_id.is_empty() {
            return Err(SearchError::EmptyDocId);
        }
        if doc.collection != self.name {
            return Err(SearchError::WrongCollection {
                doc_id: doc.doc_id.clone(),
                expected: self.name,
                found: doc.collection,
            });
        }
        self.check_vector(&doc.vector)?;
        for key in self.name.required_metadata() {
            if !doc.metadata.contains_key(*key) {
                return Err(SearchError::MissingMetadata {
                    doc_id: doc.doc_id.clone(),
                    key,
                });
            }
        }
        Ok(())
    }

    fn check_vector<T: Copy + Into<f64>>(&self, vector: &[T]) -> Result<f64, SearchError> {
        if vector.len() != self.dimension {
            return Err(SearchError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|x| !(*x).into().is_finite()) {
            return Err(SearchError::NonFinite);
        }
        let n = norm(vector);
        if n == 0.0 {
            return Err(SearchError::ZeroNorm);
        }
        Ok(n)
    }

    /// Inserts or replaces by `doc_id`.
    pub fn upsert(&mut self, doc: EmbeddedDocument) -> Result<(), SearchError> {
        self.check(&doc)?;
        let norm = norm(&doc.vector);
        self.docs.insert(
            doc.doc_id,
            Stored {
                text: doc.text,
                metadata: doc.metadata,
                vector: doc.vector,
                norm,
            },
        );
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<EmbeddedDocument> {
        self.docs.get(doc_id).map(|s| EmbeddedDocument {
            doc_id: doc_id.into(),
            collection: self.name,
            text: s.text.clone(),
            vector: s.vector.clone(),
            metadata: s.metadata.clone(),
        })
    }

    /// Documents in `doc_id` order.
    pub fn documents(&self) -> impl Iterator<Item = EmbeddedDocument> + '_ {
        self.docs.keys().filter_map(|id| self.get(id))
    }

    /// Exhaustive scan: every document matching `filter` with score `>= threshold`,
    /// ranked, then truncated to `top_k`.
    pub fn search<Q: Copy + Into<f64>>(
        &self,
        query: &[Q],
        params: SearchParams,
        filter: &MetadataFilter,
    ) -> Result<Vec<SearchHit>, SearchError> {
        params.validate()?;
        let query_norm = self.check_vector(query)?;
        let mut scored: Vec<(f64, &String, &Stored)> = self
            .docs
            .iter()
            .filter(|(_, s)| filter.matches(&s.metadata))
            .map(|(id, s)| (clamp_unit(dot(query, &s.vector) / (query_norm * s.norm)), id, s))
            .filter(|(score, _, _)| *score >= params.threshold)
            .collect();
        scored.sort_by(|a, b| rank_order(a.0, a.1, b.0, b.1));
        scored.truncate(params.top_k);
        Ok(scored
            .into_iter()
            .map(|(score, id, s)| SearchHit {
                doc_id: id.clone(),
                score,
                metadata: s.metadata.clone(),
                text: s.text.clone(),
            })
            .collect())
    }
}
