//! Blob-sharing simulator for EIP-4844 rollup data availability.

pub mod codec;
pub mod config;
pub mod fee;
pub mod ingest;
pub mod metrics;
pub mod money;
pub mod pipeline;
pub mod reconstruct;
pub mod sim;
pub mod synth;
