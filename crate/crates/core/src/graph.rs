//! Embedded property graph of memory notes and entities.
//!
//! Two node families live in the graph. Memory notes are either image notes
//! (one per captioned frame) or background notes about an entity. Entity
//! nodes are the disambiguated agents, objects and actions the notes mention.
//! Image notes are chained newest-to-oldest with `HAS_PREVIOUS`; notes point at
//! the entities they mention with `HAS_ELEMENT`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::caption::{self, CaptionError, ParsedCaption};
use crate::embedding::Embedding;
use crate::hash::Fnv1a;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct NoteId(String);

impl NoteId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn for_image(sequence_index: u64) -> Self {
        Self(format!("img_{sequence_index:05}"))
    }

    pub fn for_background(ordinal: u64) -> Self {
        Self(format!("note_{ordinal:05}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NoteId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EntityType {
    Agent,
    Object,
    Action,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Agent, EntityType::Object, EntityType::Action];

    pub fn name(self) -> &'static str {
        match self {
            EntityType::Agent => "Agent",
            EntityType::Object => "Object",
            EntityType::Action => "Action",
        }
    }

    /// Case-sensitive: only `Agent`, `Object` and `Action` are accepted.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "Agent" => Some(EntityType::Agent),
            "Object" => Some(EntityType::Object),
            "Action" => Some(EntityType::Action),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a memory note describes: a captioned frame, or background knowledge
/// about an entity of the given type (e.g. a person's preferences).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoteKind {
    Image,
    About(EntityType),
}

impl NoteKind {
    pub fn name(self) -> &'static str {
        match self {
            NoteKind::Image => "image",
            NoteKind::About(EntityType::Agent) => "agent",
            NoteKind::About(EntityType::Object) => "object",
            NoteKind::About(EntityType::Action) => "action",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "image" => Some(NoteKind::Image),
            "agent" => Some(NoteKind::About(EntityType::Agent)),
            "object" => Some(NoteKind::About(EntityType::Object)),
            "action" => Some(NoteKind::About(EntityType::Action)),
            _ => None,
        }
    }
}

/// UTC seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct Timestamp(pub i64);

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChunk {
    pub text: String,
    pub vector: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryNote {
    pub id: NoteId,
    pub kind: NoteKind,
    /// Annotated caption text.
    pub caption: String,
    pub plain_caption: String,
    pub data_files: Vec<String>,
    pub created_at: Timestamp,
    /// Position in the image stream; `None` for background notes.
    pub sequence_index: Option<u64>,
    pub chunks: Vec<EmbeddedChunk>,
}

impl MemoryNote {
    pub fn is_image(&self) -> bool {
        self.kind == NoteKind::Image
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityNode {
    pub label: String,
    pub entity_type: EntityType,
    pub first_seen: NoteId,
    pub mention_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Note(MemoryNote),
    Entity(EntityNode),
}

impl Node {
    pub fn id(&self) -> &str {
        match self {
            Node::Note(n) => n.id.as_str(),
            Node::Entity(e) => &e.label,
        }
    }

    pub fn as_note(&self) -> Option<&MemoryNote> {
        match self {
            Node::Note(n) => Some(n),
            Node::Entity(_) => None,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityNode> {
        match self {
            Node::Entity(e) => Some(e),
            Node::Note(_) => None,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Node::Note(n) if n.is_image())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EdgeKind {
    #[cfg_attr(feature = "serde", serde(rename = "HAS_PREVIOUS"))]
    HasPrevious,
    #[cfg_attr(feature = "serde", serde(rename = "HAS_ELEMENT"))]
    HasElement,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::HasPrevious, EdgeKind::HasElement];

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::HasPrevious => "HAS_PREVIOUS",
            EdgeKind::HasElement => "HAS_ELEMENT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "HAS_PREVIOUS" => Some(EdgeKind::HasPrevious),
            "HAS_ELEMENT" => Some(EdgeKind::HasElement),
            _ => None,
        }
    }
}

/// Edge between node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: usize,
    pub kind: EdgeKind,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("identifier must not be empty")]
    EmptyId,
    #[error("malformed caption: {0}")]
    MalformedCaption(#[from] CaptionError),
    #[error("unknown note `{0}`")]
    UnknownNote(String),
    #[error("entity `{label}` is a {existing}, cannot re-use it as a {requested}")]
    TypeConflict { label: String, existing: EntityType, requested: EntityType },
    #[error("invalid entity label `{0}`")]
    InvalidLabel(String),
    #[error("background note mentions no entity to be about")]
    NoSubject,
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntityCounts {
    #[cfg_attr(feature = "serde", serde(rename = "Agent"))]
    pub agent: usize,
    #[cfg_attr(feature = "serde", serde(rename = "Object"))]
    pub object: usize,
    #[cfg_attr(feature = "serde", serde(rename = "Action"))]
    pub action: usize,
}

impl EntityCounts {
    pub fn get(&self, t: EntityType) -> usize {
        match t {
            EntityType::Agent => self.agent,
            EntityType::Object => self.object,
            EntityType::Action => self.action,
        }
    }

    fn bump(&mut self, t: EntityType) {
        match t {
            EntityType::Agent => self.agent += 1,
            EntityType::Object => self.object += 1,
            EntityType::Action => self.action += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeCounts {
    #[cfg_attr(feature = "serde", serde(rename = "HAS_PREVIOUS"))]
    pub has_previous: usize,
    #[cfg_attr(feature = "serde", serde(rename = "HAS_ELEMENT"))]
    pub has_element: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphStats {
    pub image_count: usize,
    /// All memory notes, images included.
    pub note_count: usize,
    pub entity_counts_by_type: EntityCounts,
    pub edge_counts_by_kind: EdgeCounts,
    /// Number of disjoint `HAS_PREVIOUS` chains (single images count as one).
    pub chain_count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MemoryGraph {
    nodes: Vec<Node>,
    by_id: BTreeMap<String, usize>,
    edges: Vec<Edge>,
    edge_set: BTreeSet<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    stream_tail: Option<usize>,
    next_image_seq: u64,
    next_note_seq: u64,
}

impl MemoryGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn note(&self, id: &str) -> Option<&MemoryNote> {
        self.get(id).and_then(Node::as_note)
    }

    pub fn entity(&self, label: &str) -> Option<&EntityNode> {
        self.get(label).and_then(Node::as_entity)
    }

    pub fn notes(&self) -> impl Iterator<Item = &MemoryNote> {
        self.nodes.iter().filter_map(Node::as_note)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.iter().filter_map(Node::as_entity)
    }

    pub fn out_edges(&self, idx: usize) -> impl Iterator<Item = &Edge> {
        self.out_adj[idx].iter().map(|&e| &self.edges[e])
    }

    pub fn in_edges(&self, idx: usize) -> impl Iterator<Item = &Edge> {
        self.in_adj[idx].iter().map(|&e| &self.edges[e])
    }

    pub fn has_edge(&self, source: usize, kind: EdgeKind, target: usize) -> bool {
        self.edge_set.contains(&Edge { source, kind, target })
    }

    /// Ends the current image stream; the next image starts a new chain.
    pub fn begin_stream(&mut self) {
        self.stream_tail = None;
    }

    /// Appends an image note to the current stream and links it to the
    /// previous image. Entity mentions are linked separately.
    pub fn add_image_note(
        &mut self,
        caption: &str,
        data_files: Vec<String>,
        created_at: Timestamp,
    ) -> Result<NoteId, GraphError> {
        let parsed = caption::parse_caption(caption)?;
        Ok(self.insert_image(&parsed, data_files, created_at))
    }

    pub(crate) fn insert_image(&mut self, parsed: &ParsedCaption, data_files: Vec<String>, created_at: Timestamp) -> NoteId {
        let seq = self.next_image_seq;
        let id = NoteId::for_image(seq);
        let idx = self.push_node(Node::Note(MemoryNote {
            id: id.clone(),
            kind: NoteKind::Image,
            caption: parsed.raw.clone(),
            plain_caption: parsed.plain.clone(),
            data_files,
            created_at,
            sequence_index: Some(seq),
            chunks: Vec::new(),
        }));
        self.next_image_seq += 1;
        if let Some(prev) = self.stream_tail {
            self.push_edge(Edge { source: idx, kind: EdgeKind::HasPrevious, target: prev });
        }
        self.stream_tail = Some(idx);
        id
    }

    /// Adds a background note about the entity mentioned first in `caption`.
    pub fn add_background_note(
        &mut self,
        caption: &str,
        data_files: Vec<String>,
        created_at: Timestamp,
    ) -> Result<NoteId, GraphError> {
        let parsed = caption::parse_caption(caption)?;
        self.insert_background(&parsed, data_files, created_at)
    }

    pub(crate) fn insert_background(
        &mut self,
        parsed: &ParsedCaption,
        data_files: Vec<String>,
        created_at: Timestamp,
    ) -> Result<NoteId, GraphError> {
        let subject = parsed.mentions.first().ok_or(GraphError::NoSubject)?.entity_type;
        let mut ordinal = self.next_note_seq;
        while self.by_id.contains_key(NoteId::for_background(ordinal).as_str()) {
            ordinal += 1;
        }
        let id = NoteId::for_background(ordinal);
        self.push_node(Node::Note(MemoryNote {
            id: id.clone(),
            kind: NoteKind::About(subject),
            caption: parsed.raw.clone(),
            plain_caption: parsed.plain.clone(),
            data_files,
            created_at,
            sequence_index: None,
            chunks: Vec::new(),
        }));
        self.next_note_seq = ordinal + 1;
        Ok(id)
    }

    /// Fails if any mention would re-type an existing entity or if the caption
    /// itself uses one label with two types.
    pub fn check_mentions(&self, parsed: &ParsedCaption) -> Result<(), GraphError> {
        let mut seen: BTreeMap<&str, EntityType> = BTreeMap::new();
        for m in &parsed.mentions {
            let existing = match self.get(&m.label) {
                Some(Node::Entity(e)) => Some(e.entity_type),
                Some(Node::Note(_)) => return Err(GraphError::DuplicateId(m.label.clone())),
                None => seen.get(m.label.as_str()).copied(),
            };
            if let Some(existing) = existing {
                if existing != m.entity_type {
                    return Err(GraphError::TypeConflict {
                        label: m.label.clone(),
                        existing,
                        requested: m.entity_type,
                    });
                }
            }
            seen.insert(&m.label, m.entity_type);
        }
        Ok(())
    }

    /// Links a note to an entity, creating the entity on first mention.
    /// Idempotent per `(note, label)`.
    pub fn upsert_entity_mention(
        &mut self,
        note: &str,
        label: &str,
        entity_type: EntityType,
    ) -> Result<String, GraphError> {
        let note_idx = match self.index_of(note) {
            Some(i) if self.nodes[i].as_note().is_some() => i,
            _ => return Err(GraphError::UnknownNote(note.to_string())),
        };
        if !caption::is_valid_label(label) {
            return Err(GraphError::InvalidLabel(label.to_string()));
        }
        let entity_idx = match self.index_of(label) {
            Some(i) => match &self.nodes[i] {
                Node::Entity(e) if e.entity_type == entity_type => i,
                Node::Entity(e) => {
                    return Err(GraphError::TypeConflict {
                        label: label.to_string(),
                        existing: e.entity_type,
                        requested: entity_type,
                    })
                }
                Node::Note(_) => return Err(GraphError::DuplicateId(label.to_string())),
            },
            None => {
                let first_seen = self.nodes[note_idx].as_note().expect("checked above").id.clone();
                self.push_node(Node::Entity(EntityNode {
                    label: label.to_string(),
                    entity_type,
                    first_seen,
                    mention_count: 0,
                }))
            }
        };
        if self.push_edge(Edge { source: note_idx, kind: EdgeKind::HasElement, target: entity_idx }) {
            if let Node::Entity(e) = &mut self.nodes[entity_idx] {
                e.mention_count += 1;
            }
        }
        Ok(label.to_string())
    }

    pub fn set_chunks(&mut self, note: &str, chunks: Vec<EmbeddedChunk>) -> Result<(), GraphError> {
        let idx = self.index_of(note).ok_or_else(|| GraphError::UnknownNote(note.to_string()))?;
        match &mut self.nodes[idx] {
            Node::Note(n) => {
                n.chunks = chunks;
                Ok(())
            }
            Node::Entity(_) => Err(GraphError::UnknownNote(note.to_string())),
        }
    }

    /// Image linked from `note` via `HAS_PREVIOUS`.
    pub fn previous_image(&self, note: &str) -> Option<&MemoryNote> {
        let idx = self.index_of(note)?;
        self.out_edges(idx)
            .find(|e| e.kind == EdgeKind::HasPrevious)
            .and_then(|e| self.nodes[e.target].as_note())
    }

    /// Image whose `HAS_PREVIOUS` points at `note`.
    pub fn next_image(&self, note: &str) -> Option<&MemoryNote> {
        let idx = self.index_of(note)?;
        self.in_edges(idx)
            .find(|e| e.kind == EdgeKind::HasPrevious)
            .and_then(|e| self.nodes[e.source].as_note())
    }

    /// Entities a note mentions, in linking order.
    pub fn entities_of(&self, note: &str) -> Vec<&EntityNode> {
        let Some(idx) = self.index_of(note) else {
            return Vec::new();
        };
        self.out_edges(idx)
            .filter(|e| e.kind == EdgeKind::HasElement)
            .filter_map(|e| self.nodes[e.target].as_entity())
            .collect()
    }

    pub fn stats(&self) -> GraphStats {
        let mut stats = GraphStats::default();
        for node in &self.nodes {
            match node {
                Node::Note(n) => {
                    stats.note_count += 1;
                    if n.is_image() {
                        stats.image_count += 1;
                    }
                }
                Node::Entity(e) => stats.entity_counts_by_type.bump(e.entity_type),
            }
        }
        for e in &self.edges {
            match e.kind {
                EdgeKind::HasPrevious => stats.edge_counts_by_kind.has_previous += 1,
                EdgeKind::HasElement => stats.edge_counts_by_kind.has_element += 1,
            }
        }
        stats.chain_count = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_image())
            .filter(|&i| !self.in_edges(i).any(|e| e.kind == EdgeKind::HasPrevious))
            .count();
        stats
    }

    /// Full scan of the structural invariants.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let violation = |msg: String| Err(GraphError::InvariantViolation(msg));
        let mut seen = BTreeSet::new();
        let mut prev_out = alloc::vec![0usize; self.nodes.len()];
        let mut prev_in = alloc::vec![0usize; self.nodes.len()];
        let mut element_in = alloc::vec![0u64; self.nodes.len()];
        for e in &self.edges {
            if e.source >= self.nodes.len() || e.target >= self.nodes.len() {
                return violation(format!("edge endpoint out of range: {e:?}"));
            }
            if e.source == e.target {
                return violation(format!("self-loop on `{}`", self.nodes[e.source].id()));
            }
            if !seen.insert(*e) {
                return violation(format!("duplicate edge {e:?}"));
            }
            let (src, dst) = (&self.nodes[e.source], &self.nodes[e.target]);
            match e.kind {
                EdgeKind::HasPrevious => {
                    if !src.is_image() || !dst.is_image() {
                        return violation(format!("HAS_PREVIOUS {} -> {} not between images", src.id(), dst.id()));
                    }
                    prev_out[e.source] += 1;
                    prev_in[e.target] += 1;
                }
                EdgeKind::HasElement => {
                    if src.as_note().is_none() || dst.as_entity().is_none() {
                        return violation(format!("HAS_ELEMENT {} -> {} not note to entity", src.id(), dst.id()));
                    }
                    element_in[e.target] += 1;
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if prev_out[i] > 1 || prev_in[i] > 1 {
                return violation(format!("`{}` has HAS_PREVIOUS degree > 1", node.id()));
            }
            if let Node::Entity(e) = node {
                if e.mention_count != element_in[i] {
                    return violation(format!(
                        "`{}` mention_count {} but {} HAS_ELEMENT edges",
                        e.label, e.mention_count, element_in[i]
                    ));
                }
            }
            if let Node::Note(n) = node {
                if n.is_image() != n.sequence_index.is_some() {
                    return violation(format!("`{}` sequence_index does not match its kind", n.id));
                }
            }
        }
        // Chains must be simple paths with strictly increasing sequence indices.
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::HasPrevious) {
            let newer = self.nodes[e.source].as_note().and_then(|n| n.sequence_index);
            let older = self.nodes[e.target].as_note().and_then(|n| n.sequence_index);
            if newer <= older {
                return violation(format!(
                    "sequence_index not increasing along `{}` -> `{}`",
                    self.nodes[e.source].id(),
                    self.nodes[e.target].id()
                ));
            }
        }
        Ok(())
    }

    /// Stable hash of every node attribute and edge, in insertion order.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write_u64(self.nodes.len() as u64);
        for node in &self.nodes {
            match node {
                Node::Note(n) => {
                    h.write(b"N");
                    h.write_str(n.id.as_str());
                    h.write_str(n.kind.name());
                    h.write_str(&n.caption);
                    h.write_str(&n.plain_caption);
                    h.write_u64(n.data_files.len() as u64);
                    for f in &n.data_files {
                        h.write_str(f);
                    }
                    h.write(&n.created_at.0.to_le_bytes());
                    h.write_u64(n.sequence_index.map_or(u64::MAX, |s| s));
                    h.write_u64(n.chunks.len() as u64);
                    for c in &n.chunks {
                        h.write_str(&c.text);
                        for v in c.vector.as_slice() {
                            h.write_u64(v.to_bits());
                        }
                    }
                }
                Node::Entity(e) => {
                    h.write(b"E");
                    h.write_str(&e.label);
                    h.write_str(e.entity_type.name());
                    h.write_str(e.first_seen.as_str());
                    h.write_u64(e.mention_count);
                }
            }
        }
        h.write_u64(self.edges.len() as u64);
        for e in &self.edges {
            h.write_u64(e.source as u64);
            h.write_str(e.kind.name());
            h.write_u64(e.target as u64);
        }
        h.finish()
    }

    /// Rebuilds a graph from persisted nodes and id-addressed edges, checking
    /// every invariant.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<(String, EdgeKind, String)>) -> Result<Self, GraphError> {
        let mut graph = MemoryGraph::new();
        for node in nodes {
            if node.id().is_empty() {
                return Err(GraphError::EmptyId);
            }
            if graph.by_id.contains_key(node.id()) {
                return Err(GraphError::DuplicateId(node.id().to_string()));
            }
            if let Node::Note(n) = &node {
                match n.sequence_index {
                    Some(s) => graph.next_image_seq = graph.next_image_seq.max(s + 1),
                    None => graph.next_note_seq += 1,
                }
            }
            graph.push_node(node);
        }
        for (source, kind, target) in edges {
            let s = graph.index_of(&source).ok_or_else(|| GraphError::UnknownNote(source.clone()))?;
            let t = graph.index_of(&target).ok_or_else(|| GraphError::UnknownNote(target.clone()))?;
            let edge = Edge { source: s, kind, target: t };
            if graph.edge_set.contains(&edge) {
                return Err(GraphError::InvariantViolation(format!("duplicate edge {source} {} {target}", kind.name())));
            }
            graph.push_edge(edge);
        }
        graph.check_invariants()?;
        Ok(graph)
    }

    /// Edges addressed by node id, in insertion order.
    pub fn edge_triples(&self) -> impl Iterator<Item = (&str, EdgeKind, &str)> {
        self.edges
            .iter()
            .map(|e| (self.nodes[e.source].id(), e.kind, self.nodes[e.target].id()))
    }

    fn push_node(&mut self, node: Node) -> usize {
        let idx = self.nodes.len();
        self.by_id.insert(node.id().to_string(), idx);
        self.nodes.push(node);
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        idx
    }

    /// Returns false when the edge already existed.
    fn push_edge(&mut self, edge: Edge) -> bool {
        if !self.edge_set.insert(edge) {
            return false;
        }
        let e = self.edges.len();
        self.edges.push(edge);
        self.out_adj[edge.source].push(e);
        self.in_adj[edge.target].push(e);
        true
    }
}

/// Graph equality: same node set with equal attributes and the same edge
/// multiset. Insertion order and stream state are ignored.
impl PartialEq for MemoryGraph {
    fn eq(&self, other: &Self) -> bool {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        let nodes_match = self.nodes.iter().all(|n| other.get(n.id()) == Some(n));
        let mut ours: Vec<_> = self.edge_triples().collect();
        let mut theirs: Vec<_> = other.edge_triples().collect();
        ours.sort();
        theirs.sort();
        nodes_match && ours == theirs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ts(s: i64) -> Timestamp {
        Timestamp(s)
    }

    #[test]
    fn first_note_has_index_zero_and_no_edges() {
        let mut g = MemoryGraph::new();
        let id = g.add_image_note("[person_1:Agent] sits", vec![], ts(0)).unwrap();
        assert_eq!(id.as_str(), "img_00000");
        assert_eq!(g.note("img_00000").unwrap().sequence_index, Some(0));
        assert!(g.edges().is_empty());
    }

    #[test]
    fn three_captions_form_one_chain() {
        let mut g = MemoryGraph::new();
        for i in 0..3 {
            g.add_image_note("a frame", vec![], ts(i)).unwrap();
        }
        let s = g.stats();
        assert_eq!(s.image_count, 3);
        assert_eq!(s.edge_counts_by_kind.has_previous, 2);
        assert_eq!(s.chain_count, 1);
        assert_eq!(g.previous_image("img_00001").unwrap().id.as_str(), "img_00000");
        assert_eq!(g.next_image("img_00001").unwrap().id.as_str(), "img_00002");
        g.check_invariants().unwrap();
    }

    #[test]
    fn malformed_caption_inserts_nothing() {
        let mut g = MemoryGraph::new();
        let err = g.add_image_note("[x_1:Gadget]", vec![], ts(0)).unwrap_err();
        assert!(matches!(err, GraphError::MalformedCaption(CaptionError::UnknownEntityType { .. })));
        assert!(g.is_empty());
    }

    #[test]
    fn upsert_creates_then_is_idempotent() {
        let mut g = MemoryGraph::new();
        let img = g.add_image_note("x", vec![], ts(0)).unwrap();
        g.upsert_entity_mention(img.as_str(), "person_1", EntityType::Agent).unwrap();
        assert_eq!(g.entities().count(), 1);
        assert_eq!(g.edges().len(), 1);
        let before = g.fingerprint();
        g.upsert_entity_mention(img.as_str(), "person_1", EntityType::Agent).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.entity("person_1").unwrap().mention_count, 1);
        assert_eq!(g.fingerprint(), before);
    }

    #[test]
    fn upsert_errors() {
        let mut g = MemoryGraph::new();
        let img = g.add_image_note("x", vec![], ts(0)).unwrap();
        g.upsert_entity_mention(img.as_str(), "sofa_1", EntityType::Object).unwrap();
        assert_eq!(
            g.upsert_entity_mention(img.as_str(), "sofa_1", EntityType::Agent),
            Err(GraphError::TypeConflict {
                label: "sofa_1".into(),
                existing: EntityType::Object,
                requested: EntityType::Agent
            })
        );
        assert_eq!(
            g.upsert_entity_mention("img_00099", "sofa_1", EntityType::Object),
            Err(GraphError::UnknownNote("img_00099".into()))
        );
        // entities are not notes
        assert!(matches!(
            g.upsert_entity_mention("sofa_1", "cup_1", EntityType::Object),
            Err(GraphError::UnknownNote(_))
        ));
    }

    #[test]
    fn check_mentions_catches_intra_caption_conflict() {
        let g = MemoryGraph::new();
        let p = caption::parse_caption("[a_1:Agent] and [a_1:Object]").unwrap();
        assert!(matches!(g.check_mentions(&p), Err(GraphError::TypeConflict { .. })));
    }

    #[test]
    fn streams_are_disjoint_chains() {
        let mut g = MemoryGraph::new();
        g.add_image_note("a", vec![], ts(0)).unwrap();
        g.add_image_note("b", vec![], ts(1)).unwrap();
        g.begin_stream();
        let c = g.add_image_note("c", vec![], ts(2)).unwrap();
        assert_eq!(c.as_str(), "img_00002");
        let s = g.stats();
        assert_eq!(s.chain_count, 2);
        assert_eq!(s.edge_counts_by_kind.has_previous, 1);
        g.check_invariants().unwrap();
    }

    #[test]
    fn background_note_takes_first_mention_as_subject() {
        let mut g = MemoryGraph::new();
        let id = g.add_background_note("[person_1:Agent] prefers tea", vec![], ts(0)).unwrap();
        assert_eq!(id.as_str(), "note_00000");
        assert_eq!(g.note(id.as_str()).unwrap().kind, NoteKind::About(EntityType::Agent));
        assert_eq!(g.add_background_note("nothing", vec![], ts(0)), Err(GraphError::NoSubject));
    }

    #[test]
    fn from_parts_round_trip_and_rejects_bad_edges() {
        let mut g = MemoryGraph::new();
        let a = g.add_image_note("[person_1:Agent] a", vec!["f0.jpg".into()], ts(5)).unwrap();
        g.upsert_entity_mention(a.as_str(), "person_1", EntityType::Agent).unwrap();
        g.add_image_note("b", vec![], ts(6)).unwrap();
        let nodes = g.nodes().to_vec();
        let edges: Vec<_> = g.edge_triples().map(|(s, k, t)| (s.into(), k, t.into())).collect();
        let back = MemoryGraph::from_parts(nodes.clone(), edges).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.fingerprint(), g.fingerprint());

        let bad = vec![("person_1".to_string(), EdgeKind::HasElement, "img_00000".to_string())];
        assert!(matches!(MemoryGraph::from_parts(nodes, bad), Err(GraphError::InvariantViolation(_))));
    }

    #[test]
    fn note_kind_names_round_trip() {
        for k in [NoteKind::Image, NoteKind::About(EntityType::Agent), NoteKind::About(EntityType::Object), NoteKind::About(EntityType::Action)] {
            assert_eq!(NoteKind::from_name(k.name()), Some(k));
        }
    }
}
