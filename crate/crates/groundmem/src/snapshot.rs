//! Single-file JSON snapshots of a [`MemoryGraph`].
//!
//! The document is `{version, checksum, nodes, edges}`. `checksum` is the
//! graph fingerprint in hex, recomputed on load, so a snapshot that parses
//! but was edited or truncated mid-value is still rejected.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use groundmem_core::embedding::Embedding;
use groundmem_core::graph::{EmbeddedChunk, Node};
use groundmem_core::{EdgeKind, EntityNode, EntityType, MemoryGraph, MemoryNote, NoteId, NoteKind, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt snapshot {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    checksum: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", deny_unknown_fields)]
enum NodeRecord {
    Note {
        id: NoteId,
        kind: String,
        caption: String,
        plain_caption: String,
        data_files: Vec<String>,
        created_at: Timestamp,
        sequence_index: Option<u64>,
        chunks: Vec<ChunkRecord>,
    },
    Entity {
        label: String,
        entity_type: EntityType,
        first_seen: NoteId,
        mention_count: u64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChunkRecord {
    text: String,
    vector: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    source: String,
    kind: EdgeKind,
    target: String,
}

fn to_record(node: &Node) -> NodeRecord {
    match node {
        Node::Note(n) => NodeRecord::Note {
            id: n.id.clone(),
            kind: n.kind.name().to_string(),
            caption: n.caption.clone(),
            plain_caption: n.plain_caption.clone(),
            data_files: n.data_files.clone(),
            created_at: n.created_at,
            sequence_index: n.sequence_index,
            chunks: n
                .chunks
                .iter()
                .map(|c| ChunkRecord { text: c.text.clone(), vector: c.vector.as_slice().to_vec() })
                .collect(),
        },
        Node::Entity(e) => NodeRecord::Entity {
            label: e.label.clone(),
            entity_type: e.entity_type,
            first_seen: e.first_seen.clone(),
            mention_count: e.mention_count,
        },
    }
}

fn from_record(record: NodeRecord) -> Result<Node, String> {
    Ok(match record {
        NodeRecord::Note { id, kind, caption, plain_caption, data_files, created_at, sequence_index, chunks } => {
            let kind = NoteKind::from_name(&kind).ok_or_else(|| format!("unknown note kind `{kind}`"))?;
            Node::Note(MemoryNote {
                id,
                kind,
                caption,
                plain_caption,
                data_files,
                created_at,
                sequence_index,
                chunks: chunks
                    .into_iter()
                    .map(|c| EmbeddedChunk { text: c.text, vector: Embedding::new(c.vector) })
                    .collect(),
            })
        }
        NodeRecord::Entity { label, entity_type, first_seen, mention_count } => {
            Node::Entity(EntityNode { label, entity_type, first_seen, mention_count })
        }
    })
}

pub fn to_json(graph: &MemoryGraph) -> String {
    let doc = Document {
        version: SNAPSHOT_VERSION,
        checksum: format!("{:016x}", graph.fingerprint()),
        nodes: graph.nodes().iter().map(to_record).collect(),
        edges: graph
            .edge_triples()
            .map(|(s, kind, t)| EdgeRecord { source: s.to_string(), kind, target: t.to_string() })
            .collect(),
    };
    serde_json::to_string(&doc).expect("snapshot documents always serialize")
}

/// Parses a snapshot document. `path` only labels errors.
pub fn from_json(text: &str, path: &Path) -> Result<MemoryGraph, SnapshotError> {
    let corrupt = |reason: String| SnapshotError::Corrupt { path: path.to_path_buf(), reason };
    let doc: Document = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if doc.version != SNAPSHOT_VERSION {
        return Err(corrupt(format!("unsupported version {}", doc.version)));
    }
    let nodes = doc.nodes.into_iter().map(from_record).collect::<Result<Vec<_>, _>>().map_err(corrupt)?;
    let edges = doc.edges.into_iter().map(|e| (e.source, e.kind, e.target)).collect();
    let graph = MemoryGraph::from_parts(nodes, edges).map_err(|e| corrupt(e.to_string()))?;
    let actual = format!("{:016x}", graph.fingerprint());
    if actual != doc.checksum {
        return Err(corrupt(format!("checksum mismatch: recorded {}, computed {actual}", doc.checksum)));
    }
    Ok(graph)
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a half-written snapshot.
pub fn save_snapshot(graph: &MemoryGraph, path: &Path) -> Result<(), SnapshotError> {
    let io = |source| SnapshotError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(to_json(graph).as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn load_snapshot(path: &Path) -> Result<MemoryGraph, SnapshotError> {
    let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?;
    from_json(&text, path)
}
