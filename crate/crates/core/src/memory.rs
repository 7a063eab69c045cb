//! Graph plus vector index, and the four-step caption ingestion.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::caption::{self, CaptionError};
use crate::embedding::{chunk_text, IndexEntry, IndexError, VectorIndex, DEFAULT_CHUNK_CHARS};
use crate::graph::{EmbeddedChunk, GraphError, MemoryGraph, NoteId, Timestamp};
use crate::providers::{EmbedRequest, EmbeddingProvider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ItemKind {
    #[default]
    Image,
    /// Background note about the first entity it mentions.
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestItem {
    pub caption: String,
    pub data_files: Vec<String>,
    pub created_at: Timestamp,
    pub kind: ItemKind,
}

impl IngestItem {
    pub fn image(caption: impl Into<String>, created_at: Timestamp) -> Self {
        Self { caption: caption.into(), data_files: Vec::new(), created_at, kind: ItemKind::Image }
    }

    pub fn background(caption: impl Into<String>, created_at: Timestamp) -> Self {
        Self { caption: caption.into(), data_files: Vec::new(), created_at, kind: ItemKind::Background }
    }

    pub fn with_files(mut self, files: Vec<String>) -> Self {
        self.data_files = files;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub note_id: NoteId,
    pub entities_created: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("malformed caption: {0}")]
    MalformedCaption(#[from] CaptionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("embedding failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// The knowledge base: a memory graph whose notes carry chunk embeddings,
/// and an exhaustive vector index over those chunks.
#[derive(Debug, Clone)]
pub struct Memory {
    graph: MemoryGraph,
    index: VectorIndex,
    chunk_chars: usize,
    embed_model: String,
}

impl Default for Memory {
    fn default() -> Self {
        Self::new()
    }
}

impl Memory {
    pub fn new() -> Self {
        Self {
            graph: MemoryGraph::new(),
            index: VectorIndex::new(),
            chunk_chars: DEFAULT_CHUNK_CHARS,
            embed_model: "stub".to_string(),
        }
    }

    pub fn with_chunk_chars(mut self, chunk_chars: usize) -> Self {
        self.chunk_chars = chunk_chars;
        self
    }

    pub fn with_embed_model(mut self, model: impl Into<String>) -> Self {
        self.embed_model = model.into();
        self
    }

    /// Wraps a loaded graph, rebuilding the index from stored note chunks.
    pub fn from_graph(graph: MemoryGraph) -> Result<Self, IndexError> {
        let mut index = VectorIndex::new();
        for note in graph.notes() {
            for (ordinal, chunk) in note.chunks.iter().enumerate() {
                index.insert(IndexEntry {
                    note_id: note.id.clone(),
                    chunk_ordinal: ordinal,
                    text: chunk.text.clone(),
                    vector: chunk.vector.clone(),
                })?;
            }
        }
        Ok(Self { graph, index, ..Self::new() })
    }

    pub fn embed_model(&self) -> &str {
        &self.embed_model
    }

    pub fn graph(&self) -> &MemoryGraph {
        &self.graph
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn into_graph(self) -> MemoryGraph {
        self.graph
    }

    pub fn begin_stream(&mut self) {
        self.graph.begin_stream();
    }

    /// Ingests one caption. Either every step succeeds or nothing changes:
    ///
    /// 1. extract entity mentions and their types from the caption,
    /// 2. chunk and embed the plain caption,
    /// 3. create the note (images are chained to the previous image),
    /// 4. create or reuse entity nodes and link them to the note.
    pub fn ingest(&mut self, item: IngestItem, embedder: &dyn EmbeddingProvider) -> Result<IngestOutcome, IngestError> {
        let parsed = caption::parse_caption(&item.caption)?;
        self.graph.check_mentions(&parsed)?;
        if item.kind == ItemKind::Background && parsed.mentions.is_empty() {
            return Err(GraphError::NoSubject.into());
        }

        let chunks = chunk_text(&parsed.plain, self.chunk_chars);
        let request = EmbedRequest { model: self.embed_model.clone(), inputs: chunks.clone() };
        let response = embedder.embed(&request)?;
        response.validate(&request)?;
        for v in &response.vectors {
            self.index.check(v)?;
        }

        let note_id = match item.kind {
            ItemKind::Image => self.graph.insert_image(&parsed, item.data_files, item.created_at),
            ItemKind::Background => self.graph.insert_background(&parsed, item.data_files, item.created_at)?,
        };
        let embedded: Vec<EmbeddedChunk> = chunks
            .into_iter()
            .zip(response.vectors)
            .map(|(text, vector)| EmbeddedChunk { text, vector })
            .collect();
        for (ordinal, chunk) in embedded.iter().enumerate() {
            self.index
                .insert(IndexEntry {
                    note_id: note_id.clone(),
                    chunk_ordinal: ordinal,
                    text: chunk.text.clone(),
                    vector: chunk.vector.clone(),
                })
                .expect("vectors validated before insertion");
        }
        self.graph.set_chunks(note_id.as_str(), embedded).expect("note was just inserted");

        let mut entities_created = 0;
        for (label, entity_type) in parsed.distinct_mentions() {
            if self.graph.entity(label).is_none() {
                entities_created += 1;
            }
            self.graph
                .upsert_entity_mention(note_id.as_str(), label, entity_type)
                .expect("mentions checked before insertion");
        }
        Ok(IngestOutcome { note_id, entities_created })
    }
}
