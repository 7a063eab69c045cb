//! Markdown vault: one `<note_id>.md` per memory note.
//!
//! ```text
//! ---
//! id: "img_00003"
//! type: "image"
//! created_at: "2024-01-01T00:00:13Z"
//! data_files: ["frames/000040.jpg"]
//! entities: ["person_1:Agent", "sofa_1:Object"]
//! caption: "[person_1:Agent] sits on the [sofa_1:Object]"
//! ordinal: 3
//! sequence_index: 3
//! previous: "img_00002"
//! ---
//! person_1 sits on the sofa_1
//! ```
//!
//! Every front-matter value is JSON. The body is the plain caption. Import
//! replays the annotated captions in `ordinal` order through ingestion, so
//! ids, entities and chains come back exactly as exported.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use groundmem_core::memory::ItemKind;
use groundmem_core::providers::EmbeddingProvider;
use groundmem_core::{IngestError, IngestItem, Memory, MemoryGraph, NoteKind};
use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::time::{parse_rfc3339, to_rfc3339};

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultNote {
    pub id: String,
    pub kind: NoteKind,
    pub created_at: String,
    pub data_files: Vec<String>,
    /// `label:Type` in linking order.
    pub entities: Vec<String>,
    pub caption: String,
    pub ordinal: u64,
    pub sequence_index: Option<u64>,
    pub previous: Option<String>,
    pub body: String,
}

impl VaultNote {
    pub fn render(&self) -> String {
        let json = |v: Value| v.to_string();
        let mut out = String::from("---\n");
        out += &format!("id: {}\n", json(self.id.clone().into()));
        out += &format!("type: {}\n", json(self.kind.name().into()));
        out += &format!("created_at: {}\n", json(self.created_at.clone().into()));
        out += &format!("data_files: {}\n", json(self.data_files.clone().into()));
        out += &format!("entities: {}\n", json(self.entities.clone().into()));
        out += &format!("caption: {}\n", json(self.caption.clone().into()));
        out += &format!("ordinal: {}\n", self.ordinal);
        if let Some(s) = self.sequence_index {
            out += &format!("sequence_index: {s}\n");
            out += &format!("previous: {}\n", json(self.previous.clone().into()));
        }
        out += "---\n";
        out += &self.body;
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some("---") {
            return Err("missing opening `---`".into());
        }
        let mut fields: BTreeMap<&str, Value> = BTreeMap::new();
        let mut closed = false;
        for line in lines.by_ref() {
            if line.trim_end() == "---" {
                closed = true;
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| format!("front matter line without `:`: {line}"))?;
            let value: Value =
                serde_json::from_str(value.trim()).map_err(|e| format!("front matter `{}`: {e}", key.trim()))?;
            fields.insert(key.trim(), value);
        }
        if !closed {
            return Err("missing closing `---`".into());
        }
        let body = lines.collect::<Vec<_>>().join("\n");

        fn take<T: DeserializeOwned>(fields: &mut BTreeMap<&str, Value>, key: &str) -> Result<T, String> {
            let v = fields.remove(key).ok_or_else(|| format!("front matter is missing `{key}`"))?;
            serde_json::from_value(v).map_err(|e| format!("front matter `{key}`: {e}"))
        }
        fn take_optional<T: DeserializeOwned>(fields: &mut BTreeMap<&str, Value>, key: &str) -> Result<Option<T>, String> {
            match fields.remove(key) {
                Some(v) => serde_json::from_value(v).map_err(|e| format!("front matter `{key}`: {e}")),
                None => Ok(None),
            }
        }
        let kind_name: String = take(&mut fields, "type")?;
        let kind = NoteKind::from_name(&kind_name).ok_or_else(|| format!("unknown note type `{kind_name}`"))?;
        let created_at: String = take(&mut fields, "created_at")?;
        if parse_rfc3339(&created_at).is_none() {
            return Err(format!("created_at `{created_at}` is not RFC 3339"));
        }
        let sequence_index: Option<u64> = take_optional(&mut fields, "sequence_index")?;
        let previous: Option<String> = take_optional(&mut fields, "previous")?;
        Ok(Self {
            id: take(&mut fields, "id")?,
            kind,
            created_at,
            data_files: take(&mut fields, "data_files")?,
            entities: take(&mut fields, "entities")?,
            caption: take(&mut fields, "caption")?,
            ordinal: take(&mut fields, "ordinal")?,
            sequence_index,
            previous,
            body,
        })
    }
}

fn entity_list(graph: &MemoryGraph, note: &str) -> Vec<String> {
    graph.entities_of(note).iter().map(|e| format!("{}:{}", e.label, e.entity_type.name())).collect()
}

/// Vault view of every memory note, in graph order.
pub fn vault_notes(graph: &MemoryGraph) -> Vec<VaultNote> {
    graph
        .notes()
        .enumerate()
        .map(|(ordinal, n)| VaultNote {
            id: n.id.to_string(),
            kind: n.kind,
            created_at: to_rfc3339(n.created_at),
            data_files: n.data_files.clone(),
            entities: entity_list(graph, n.id.as_str()),
            caption: n.caption.clone(),
            ordinal: ordinal as u64,
            sequence_index: n.sequence_index,
            previous: graph.previous_image(n.id.as_str()).map(|p| p.id.to_string()),
            body: n.plain_caption.clone(),
        })
        .collect()
}

/// Writes one file per note and returns how many were written.
pub fn export_vault(graph: &MemoryGraph, dir: &Path) -> Result<usize, VaultError> {
    fs::create_dir_all(dir).map_err(|source| VaultError::Io { path: dir.to_path_buf(), source })?;
    let notes = vault_notes(graph);
    for n in &notes {
        let path = dir.join(format!("{}.md", n.id));
        fs::write(&path, n.render()).map_err(|source| VaultError::Io { path, source })?;
    }
    Ok(notes.len())
}

/// Every `.md` file in `dir`, sorted by ordinal.
pub fn read_vault(dir: &Path) -> Result<Vec<(PathBuf, VaultNote)>, VaultError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| VaultError::Io { path, source }
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("md") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let note = VaultNote::parse(&text).map_err(|message| VaultError::Format { path: path.clone(), message })?;
        out.push((path, note));
    }
    out.sort_by_key(|(_, n)| n.ordinal);
    Ok(out)
}

/// Rebuilds a memory by replaying the vault's captions. Chunk embeddings are
/// recomputed with `embedder`.
pub fn import_vault(dir: &Path, embedder: &dyn EmbeddingProvider) -> Result<Memory, VaultError> {
    let mut memory = Memory::new();
    let mut last_image: Option<String> = None;
    for (path, note) in read_vault(dir)? {
        let bad = |message: String| VaultError::Format { path: path.clone(), message };
        let kind = match note.kind {
            NoteKind::Image => {
                if note.previous.is_none() {
                    memory.begin_stream();
                } else if note.previous != last_image {
                    return Err(bad(format!(
                        "previous is {:?} but the preceding image is {:?}",
                        note.previous, last_image
                    )));
                }
                ItemKind::Image
            }
            NoteKind::About(_) => ItemKind::Background,
        };
        let item = IngestItem {
            caption: note.caption.clone(),
            data_files: note.data_files.clone(),
            created_at: parse_rfc3339(&note.created_at).expect("checked while parsing"),
            kind,
        };
        let outcome = memory.ingest(item, embedder).map_err(|source| VaultError::Ingest { path: path.clone(), source })?;
        if outcome.note_id.as_str() != note.id {
            return Err(bad(format!("note re-imported as `{}`, expected `{}`", outcome.note_id, note.id)));
        }
        let entities = entity_list(memory.graph(), &note.id);
        if entities != note.entities {
            return Err(bad(format!("front matter lists {:?} but the caption yields {:?}", note.entities, entities)));
        }
        if memory.graph().note(&note.id).map(|n| n.kind) != Some(note.kind) {
            return Err(bad(format!("type `{}` does not match the caption's subject", note.kind.name())));
        }
        if note.kind == NoteKind::Image {
            last_image = Some(note.id.clone());
        }
    }
    Ok(memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use groundmem_core::providers::StubEmbedder;
    use groundmem_core::Timestamp;

    fn memory() -> Memory {
        let mut m = Memory::new();
        let items = [
            IngestItem::image("[person_1:Agent] sits on the [sofa_1:Object]", Timestamp(1_704_067_203)),
            IngestItem::background("[person_1:Agent] prefers \"green\" tea", Timestamp(1_704_067_204)),
            IngestItem::image("[person_1:Agent] [reads_1:Action] a book", Timestamp(1_704_067_206))
                .with_files(vec!["frames/20.jpg".into()]),
        ];
        for item in items {
            m.ingest(item, &StubEmbedder).unwrap();
        }
        m.begin_stream();
        m.ingest(IngestItem::image("an empty room", Timestamp(1_704_070_000)), &StubEmbedder).unwrap();
        m
    }

    #[test]
    fn render_parse_round_trip() {
        for n in vault_notes(memory().graph()) {
            assert_eq!(VaultNote::parse(&n.render()).unwrap(), n);
        }
    }

    #[test]
    fn rendered_front_matter() {
        let notes = vault_notes(memory().graph());
        let text = notes[2].render();
        assert!(text.starts_with("---\nid: \"img_00001\"\ntype: \"image\"\ncreated_at: \"2024-01-01T00:00:06Z\"\n"), "{text}");
        assert!(text.contains("entities: [\"person_1:Agent\",\"reads_1:Action\"]\n"));
        assert!(text.contains("previous: \"img_00000\"\n"));
        assert!(text.ends_with("---\nperson_1 reads_1 a book\n"));
        assert!(notes[1].render().contains("type: \"agent\"\n"));
    }

    #[test]
    fn export_import_reproduces_graph() {
        let m = memory();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(export_vault(m.graph(), dir.path()).unwrap(), 4);
        let back = import_vault(dir.path(), &StubEmbedder).unwrap();
        assert_eq!(back.graph().fingerprint(), m.graph().fingerprint());
        assert_eq!(back.graph().stats().chain_count, 2);
    }

    #[test]
    fn empty_graph_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(export_vault(&MemoryGraph::new(), dir.path()).unwrap(), 0);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn inconsistent_entities_rejected() {
        let dir = tempfile::tempdir().unwrap();
        export_vault(memory().graph(), dir.path()).unwrap();
        let path = dir.path().join("img_00000.md");
        let text = fs::read_to_string(&path).unwrap().replace("\"sofa_1:Object\"", "\"chair_1:Object\"");
        fs::write(&path, text).unwrap();
        let err = import_vault(dir.path(), &StubEmbedder).unwrap_err();
        assert!(err.to_string().contains("chair_1"), "{err}");
    }

    #[test]
    fn malformed_front_matter() {
        assert!(VaultNote::parse("no front matter").is_err());
        assert!(VaultNote::parse("---\nid: \"x\"\n").unwrap_err().contains("closing"));
        assert!(VaultNote::parse("---\nid: x\n---\n").unwrap_err().contains("`id`"));
        let missing = "---\nid: \"x\"\ntype: \"image\"\ncreated_at: \"2024-01-01T00:00:00Z\"\n---\n";
        assert!(VaultNote::parse(missing).unwrap_err().contains("data_files"));
    }
}
