//! Grounded memory service.
//!
//! Everything in `groundmem-core` that needs the outside world: snapshot
//! files, the markdown vault, caption fixtures, HTTP chat and embedding
//! clients, service configuration, the axum API and the CLI.

pub mod cli;
pub mod config;
pub mod fixture;
pub mod live;
pub mod service;
pub mod snapshot;
pub mod time;
pub mod vault;

pub use groundmem_core as core;
