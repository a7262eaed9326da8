//! Domain model, retrieval math, agent loop and gridlock accounting for the
//! legislative research assistant. No I/O; storage, HTTP and the CLI live in the
//! `legis` crate.

#![no_std]

extern crate alloc;

pub mod agent;
pub mod embed;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod search;
pub mod trace;

pub use embed::{Embedder, EmbedError, Embedding, HashEmbedder};
pub use model::{BillId, BillIdError, BillRecord, BillType, Collection, EmbeddedDocument};
pub use pipeline::{parse_cluster_response, PipelineRun, RunState};
pub use report::{compute_gridlock, BillMatch, ClusterReport, ClusterWork, GridlockResult, PolicyCluster, ReviewOverride};
pub use search::{cosine_similarity, MetadataFilter, SearchHit, SearchParams, VectorCollection};
pub use trace::{TraceKind, TraceSink};
