//! Grounded memory engine core.
//!
//! Annotated captions (`[person_1:Agent] lies on [sofa_1:Object]`) are parsed
//! into entity mentions, stored as image notes in a typed property graph with
//! temporal `HAS_PREVIOUS` chains and `HAS_ELEMENT` entity links, embedded for
//! cosine search, and queried through three retrieval tools: semantic search,
//! personalized PageRank expansion, and a read-only graph query language.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network, or the clock lives in the `groundmem` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod agent;
pub mod caption;
pub mod embedding;
pub mod expansion;
pub mod graph;
pub mod hash;
pub mod memory;
pub mod perception;
pub mod providers;
pub mod query;

pub use caption::{parse_caption, strip_annotations, CaptionError, Mention, ParsedCaption};
pub use embedding::{cosine, stub_embed, Embedding, SearchHit, VectorIndex};
pub use graph::{EdgeKind, EntityNode, EntityType, GraphError, GraphStats, MemoryGraph, MemoryNote, NoteId, NoteKind, Timestamp};
pub use memory::{IngestError, IngestItem, IngestOutcome, Memory};
