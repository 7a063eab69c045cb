//! Question answering over a [`Memory`]: three retrieval tools, a router
//! that picks among them, a reranker, and answer synthesis with sources.

mod rerank;
mod router;
mod text2query;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use rerank::{
    apply_relevance, parse_rerank_reply, rerank_overlap, rerank_prompt, rerank_with_provider, token_overlap, BLEND_MARGIN,
    RELEVANCE_THRESHOLD,
};
pub use router::{parse_route_reply, route_heuristic, route_with_provider, routing_prompt, RouteDecision, RouteSource};
pub use text2query::{extract_query_text, generate_query, template_fallback, GenerateError, Generated, QueryAttempt, SCHEMA_PROMPT};

use crate::embedding::IndexError;
use crate::expansion::{expand, ExpansionError, ExpansionParams};
use crate::graph::NoteId;
use crate::memory::Memory;
use crate::providers::{
    ChatMessage, ChatProvider, ChatRequest, EmbedRequest, EmbeddingProvider, ProviderError, CONTEXT_MARKER, TABLE_MARKER,
};
use crate::query::{evaluate, QueryError, ResultTable};

/// Tool descriptions shown to the routing provider and published as docs.
pub const TOOL_DESCRIPTIONS_JSON: &str = include_str!("tools.json");

/// Answer text when no tool produced any context.
pub const NO_CONTEXT_ANSWER: &str = "I don't have enough in memory to answer that.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ToolName {
    SemanticSearch,
    GraphExpansion,
    StructuredQuery,
}

impl ToolName {
    pub const ALL: [ToolName; 3] = [ToolName::SemanticSearch, ToolName::GraphExpansion, ToolName::StructuredQuery];

    /// Snake-case name used in prompts and tool descriptions.
    pub fn name(self) -> &'static str {
        match self {
            ToolName::SemanticSearch => "semantic_search",
            ToolName::GraphExpansion => "graph_expansion",
            ToolName::StructuredQuery => "structured_query",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ToolName::SemanticSearch => "SemanticSearch",
            ToolName::GraphExpansion => "GraphExpansion",
            ToolName::StructuredQuery => "StructuredQuery",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s || t.title() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ContextNote {
    pub note_id: NoteId,
    pub text: String,
    /// Cosine similarity for search hits, rank for expanded notes.
    pub score: f64,
    /// Reranker relevance, when the note went through the reranker.
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ToolResult {
    pub tool: ToolName,
    pub context_notes: Vec<ContextNote>,
    pub table: Option<ResultTable>,
    pub generated_query: Option<String>,
    /// Warnings, rejected query attempts, and fallbacks taken.
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

impl ToolResult {
    fn empty(tool: ToolName) -> Self {
        Self { tool, context_notes: Vec::new(), table: None, generated_query: None, diagnostics: Vec::new(), error: None }
    }

    fn failed(tool: ToolName, error: &AgentError) -> Self {
        Self { error: Some(error.to_string()), ..Self::empty(tool) }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Answer {
    pub text: String,
    pub sources: Vec<NoteId>,
    pub trace: Vec<ToolResult>,
    pub routed_by: RouteSource,
    /// True when no tool found anything and the provider was not asked.
    pub no_context: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no valid query could be generated ({} attempt(s) rejected)", attempts.len())]
    UnparseableQuery { attempts: Vec<QueryAttempt> },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl From<GenerateError> for AgentError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Provider(p) => AgentError::Provider(p),
            GenerateError::Unparseable { attempts } => AgentError::UnparseableQuery { attempts },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouterMode {
    /// Ask the chat provider, falling back to the heuristic.
    Provider,
    #[default]
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RerankMode {
    Provider,
    #[default]
    Overlap,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub k: usize,
    pub expansion: ExpansionParams,
    pub max_context_notes: usize,
    pub max_context_chars: usize,
    pub chat_model: String,
    pub router: RouterMode,
    pub rerank: RerankMode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k: 5,
            expansion: ExpansionParams::default(),
            max_context_notes: 12,
            max_context_chars: 4000,
            chat_model: "stub".into(),
            router: RouterMode::Heuristic,
            rerank: RerankMode::Overlap,
        }
    }
}

/// Answers questions against a memory it only ever reads.
pub struct Agent<'a> {
    pub memory: &'a Memory,
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub config: AgentConfig,
}

impl<'a> Agent<'a> {
    pub fn new(memory: &'a Memory, chat: &'a dyn ChatProvider, embedder: &'a dyn EmbeddingProvider) -> Self {
        Self { memory, chat, embedder, config: AgentConfig::default() }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn route(&self, question: &str) -> RouteDecision {
        match self.config.router {
            RouterMode::Heuristic => {
                RouteDecision { tools: route_heuristic(question), source: RouteSource::Heuristic, fallback_reason: None }
            }
            RouterMode::Provider => route_with_provider(question, self.chat, &self.config.chat_model),
        }
    }

    fn note_text(&self, id: &NoteId) -> String {
        self.memory.graph().note(id.as_str()).map(|n| n.plain_caption.clone()).unwrap_or_default()
    }

    /// Top-`k` notes by embedding similarity, before reranking.
    pub fn semantic_hits(&self, question: &str, k: usize) -> Result<Vec<ContextNote>, AgentError> {
        if self.memory.index().is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let request = EmbedRequest { model: self.memory.embed_model().to_string(), inputs: vec![question.to_string()] };
        let response = self.embedder.embed(&request)?;
        response.validate(&request)?;
        let vector = response.vectors.into_iter().next().expect("validated: one vector per input");
        let hits = self.memory.index().search_top_k(&vector, k)?;
        Ok(hits
            .into_iter()
            .map(|h| ContextNote { text: self.note_text(&h.note_id), note_id: h.note_id, score: h.score, relevance: None })
            .collect())
    }

    pub fn rerank(&self, question: &str, notes: Vec<ContextNote>) -> (Vec<ContextNote>, Option<String>) {
        match self.config.rerank {
            RerankMode::Off => (notes, None),
            RerankMode::Overlap => (rerank_overlap(question, notes), None),
            RerankMode::Provider => rerank_with_provider(question, notes, self.chat, &self.config.chat_model),
        }
    }

    pub fn tool_semantic_search(&self, question: &str, k: usize) -> Result<ToolResult, AgentError> {
        let hits = self.semantic_hits(question, k)?;
        let (notes, problem) = self.rerank(question, hits);
        let mut result = ToolResult::empty(ToolName::SemanticSearch);
        result.context_notes = notes;
        result.diagnostics.extend(problem);
        Ok(result)
    }

    /// Semantic results as seeds, then the notes that rank highest around
    /// them in the graph.
    pub fn tool_graph_expansion(&self, question: &str, k: usize) -> Result<ToolResult, AgentError> {
        let mut result = self.tool_semantic_search(question, k)?;
        result.tool = ToolName::GraphExpansion;
        if result.context_notes.is_empty() {
            return Ok(result);
        }
        let seeds: Vec<NoteId> = result.context_notes.iter().map(|n| n.note_id.clone()).collect();
        for n in expand(self.memory.graph(), &seeds, &self.config.expansion)? {
            if !n.is_seed {
                let text = self.note_text(&n.note_id);
                result.context_notes.push(ContextNote { note_id: n.note_id, text, score: n.score, relevance: None });
            }
        }
        Ok(result)
    }

    pub fn tool_structured(&self, question: &str) -> Result<ToolResult, AgentError> {
        let generated = generate_query(question, self.chat, &self.config.chat_model)?;
        let evaluation = evaluate(&generated.query, self.memory.graph())?;
        let mut result = ToolResult::empty(ToolName::StructuredQuery);
        for a in &generated.attempts {
            if let Some(e) = &a.error {
                result.diagnostics.push(format!("rejected query `{}`: {e}", a.text));
            }
        }
        if generated.used_fallback {
            result.diagnostics.push(String::from("used count template"));
        }
        result.diagnostics.extend(evaluation.warnings);
        result.generated_query = Some(generated.text);
        result.table = Some(evaluation.table);
        Ok(result)
    }

    pub fn run_tool(&self, tool: ToolName, question: &str) -> Result<ToolResult, AgentError> {
        match tool {
            ToolName::SemanticSearch => self.tool_semantic_search(question, self.config.k),
            ToolName::GraphExpansion => self.tool_graph_expansion(question, self.config.k),
            ToolName::StructuredQuery => self.tool_structured(question),
        }
    }

    /// Notes from all tool results, deduplicated and cut to the budget in
    /// descending score order.
    pub fn select_context(&self, trace: &[ToolResult]) -> Vec<ContextNote> {
        let mut all: Vec<ContextNote> = Vec::new();
        for r in trace {
            for n in &r.context_notes {
                if !all.iter().any(|m| m.note_id == n.note_id) {
                    all.push(n.clone());
                }
            }
        }
        all.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut chosen = Vec::new();
        let mut chars = 0;
        for mut n in all {
            if chosen.len() >= self.config.max_context_notes {
                break;
            }
            let len = n.text.chars().count();
            if chars + len > self.config.max_context_chars {
                if chosen.is_empty() {
                    n.text = n.text.chars().take(self.config.max_context_chars).collect();
                    chosen.push(n);
                }
                break;
            }
            chars += len;
            chosen.push(n);
        }
        chosen
    }

    pub fn answer_prompt(question: &str, notes: &[ContextNote], trace: &[ToolResult]) -> String {
        let mut p = format!("TASK: answer\nQuestion: {question}\n");
        if !notes.is_empty() {
            p.push_str(&format!("\n{CONTEXT_MARKER}\n"));
            for n in notes {
                p.push_str(&format!("[{}] {}\n", n.note_id, n.text));
            }
        }
        for r in trace {
            if let (Some(table), Some(q)) = (&r.table, &r.generated_query) {
                p.push_str(&format!("\n{TABLE_MARKER}\n{table}\nQuery: {q}\n"));
            }
        }
        p
    }

    pub fn answer_question(&self, question: &str) -> Result<Answer, AgentError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(AgentError::EmptyQuestion);
        }
        let decision = self.route(question);
        let mut trace = Vec::new();
        for tool in &decision.tools {
            let mut result = match self.run_tool(*tool, question) {
                Ok(r) => r,
                Err(e) => ToolResult::failed(*tool, &e),
            };
            if let Some(reason) = &decision.fallback_reason {
                if trace.is_empty() {
                    result.diagnostics.insert(0, format!("heuristic routing: {reason}"));
                }
            }
            trace.push(result);
        }

        let notes = self.select_context(&trace);
        let has_table = trace.iter().any(|r| r.table.is_some());
        if notes.is_empty() && !has_table {
            return Ok(Answer {
                text: NO_CONTEXT_ANSWER.into(),
                sources: Vec::new(),
                trace,
                routed_by: decision.source,
                no_context: true,
            });
        }

        let request = ChatRequest {
            model: self.config.chat_model.clone(),
            messages: vec![
                ChatMessage::system(
                    "Answer the question using only the context provided. Cite note ids in square brackets. \
                     If the context is insufficient, say so.",
                ),
                ChatMessage::user(Self::answer_prompt(question, &notes, &trace)),
            ],
            temperature: 0.2,
        };
        let response = self.chat.chat(&request)?;
        Ok(Answer {
            text: response.content.trim().to_string(),
            sources: notes.into_iter().map(|n| n.note_id).collect(),
            trace,
            routed_by: decision.source,
            no_context: false,
        })
    }
}
