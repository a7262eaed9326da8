//! Storage, external clients, pipeline orchestration and the HTTP service for
//! the legislative research assistant.

pub mod apis;
pub mod app;
pub mod http;
pub mod ingest;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub mod relational;
pub mod server;
pub mod tools;
pub mod trace_store;
pub mod vector_store;
