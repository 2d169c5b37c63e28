//! Claim clarification toolkit: corpus ingest, the model gateway, the
//! resolution pipeline, the run store, and the CLI and HTTP surfaces.

pub mod gateway;
pub mod ingest;
pub mod store;
pub mod pipeline;
pub mod server;
pub mod cli;
