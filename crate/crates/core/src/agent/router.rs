use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ToolName, TOOL_DESCRIPTIONS_JSON};
use crate::embedding::tokenize;
use crate::providers::{ChatMessage, ChatProvider, ChatRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum RouteSource {
    Provider,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteDecision {
    pub tools: Vec<ToolName>,
    pub source: RouteSource,
    /// Why the provider route was not used, if it was attempted.
    pub fallback_reason: Option<String>,
}

fn has_phrase(tokens: &[String], phrase: &[&str]) -> bool {
    tokens.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

/// Keyword routing. Always returns at least one tool.
///
/// Counting cues select `StructuredQuery`, background cues select
/// `GraphExpansion`, and a question with neither gets `SemanticSearch`.
pub fn route_heuristic(question: &str) -> Vec<ToolName> {
    let tokens = tokenize(question);
    let mut tools = Vec::new();
    let counting = has_phrase(&tokens, &["how", "many"])
        || has_phrase(&tokens, &["number", "of"])
        || tokens.iter().any(|t| t == "count");
    if counting {
        tools.push(ToolName::StructuredQuery);
    }
    let about_someone = tokens.iter().position(|t| t == "about").is_some_and(|i| i + 1 < tokens.len());
    let background = about_someone
        || tokens.iter().any(|t| t.starts_with("prefer") || t == "usually" || t == "background");
    if background {
        tools.push(ToolName::GraphExpansion);
    }
    if tools.is_empty() {
        tools.push(ToolName::SemanticSearch);
    }
    tools
}

pub fn routing_prompt(question: &str) -> String {
    format!(
        "TASK: route\nTools:\n{TOOL_DESCRIPTIONS_JSON}\nQuestion: {question}\n\
         Reply with the names of the tools to use, in order, separated by commas."
    )
}

/// Tool names mentioned in a routing reply, in order of appearance.
pub fn parse_route_reply(reply: &str) -> Vec<ToolName> {
    let lower = reply.to_lowercase();
    let mut found: Vec<(usize, ToolName)> = Vec::new();
    for tool in ToolName::ALL {
        let needles = [tool.name(), tool.title()];
        let pos = needles.iter().filter_map(|n| lower.find(&n.to_lowercase())).min();
        if let Some(p) = pos {
            found.push((p, tool));
        }
    }
    found.sort();
    found.into_iter().map(|(_, t)| t).collect()
}

/// Asks the provider to pick tools; any failure falls back to the heuristic.
pub fn route_with_provider(question: &str, chat: &dyn ChatProvider, model: &str) -> RouteDecision {
    let request = ChatRequest::structured(
        model,
        vec![
            ChatMessage::system("You select retrieval tools for questions about a personal memory of captioned images."),
            ChatMessage::user(routing_prompt(question)),
        ],
    );
    let reason = match chat.chat(&request) {
        Ok(resp) => {
            let tools = parse_route_reply(&resp.content);
            if !tools.is_empty() {
                return RouteDecision { tools, source: RouteSource::Provider, fallback_reason: None };
            }
            format!("unrecognized routing reply: {}", resp.content.trim())
        }
        Err(e) => format!("routing provider failed: {e}"),
    };
    RouteDecision { tools: route_heuristic(question), source: RouteSource::Heuristic, fallback_reason: Some(reason) }
}
