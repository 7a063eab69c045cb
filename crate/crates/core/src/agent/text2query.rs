use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::embedding::tokenize;
use crate::providers::{ChatMessage, ChatProvider, ChatRequest, ProviderError};
use crate::query::{parse_query, Query};

pub const SCHEMA_PROMPT: &str = "\
You translate questions about a memory of captioned images into one read-only graph query.
Node labels: Image (a captioned frame), MemoryNote (any note, including background notes), Agent, Object, Action.
Relationships: (newer:Image)-[:HAS_PREVIOUS]->(older:Image) and (note)-[:HAS_ELEMENT]->(entity).
Note properties: id, kind, caption, raw_caption, created_at, sequence_index.
Entity properties: id, label, type, first_seen, mention_count.
Grammar: MATCH <patterns> [WHERE a.x = 'v' AND b.y <> 3] RETURN [DISTINCT] <items> [ORDER BY <item> [DESC]] [LIMIT n].
Items may be variables, properties, count(x), count(DISTINCT x), or count(*), each with an optional AS alias.
Never write CREATE, DELETE, SET, MERGE, or REMOVE.
Examples:
How many images are there? => MATCH (i:Image) RETURN count(i)
How many people are there? => MATCH (a:Agent) RETURN count(DISTINCT a)
Which objects appear with person_1? => MATCH (a:Agent {label: 'person_1'})<-[:HAS_ELEMENT]-(i:Image)-[:HAS_ELEMENT]->(o:Object) RETURN DISTINCT o.label
Reply with the query only.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAttempt {
    pub text: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub query: Query,
    pub text: String,
    pub attempts: Vec<QueryAttempt>,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no parseable query after {} attempt(s)", attempts.len())]
    Unparseable { attempts: Vec<QueryAttempt> },
}

/// Pulls the query out of a reply, dropping code fences and a language tag.
pub fn extract_query_text(reply: &str) -> String {
    let trimmed = reply.trim();
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let first_line = &after[..body_start];
        let body = if first_line.trim().chars().all(|c| c.is_ascii_alphabetic()) { &after[body_start..] } else { after };
        let end = body.find("```").unwrap_or(body.len());
        return body[..end].trim().to_string();
    }
    trimmed.to_string()
}

/// Canned count query for "how many <images|people|persons|objects|actions>".
pub fn template_fallback(question: &str) -> Option<&'static str> {
    let tokens = tokenize(question);
    let at = tokens.windows(2).position(|w| w[0] == "how" && w[1] == "many")?;
    tokens[at + 2..].iter().take(3).find_map(|t| match t.as_str() {
        "images" | "image" | "pictures" | "frames" => Some("MATCH (i:Image) RETURN count(i)"),
        "people" | "persons" | "person" => Some("MATCH (a:Agent) RETURN count(DISTINCT a)"),
        "objects" | "object" => Some("MATCH (o:Object) RETURN count(DISTINCT o)"),
        "actions" | "action" => Some("MATCH (x:Action) RETURN count(DISTINCT x)"),
        _ => None,
    })
}

fn ask(chat: &dyn ChatProvider, model: &str, user: String) -> Result<String, ProviderError> {
    let request = ChatRequest::structured(model, vec![ChatMessage::system(SCHEMA_PROMPT), ChatMessage::user(user)]);
    Ok(chat.chat(&request)?.content)
}

/// Provider translation validated by parsing, one corrective retry carrying
/// the parse error, then the count template.
pub fn generate_query(question: &str, chat: &dyn ChatProvider, model: &str) -> Result<Generated, GenerateError> {
    let mut attempts: Vec<QueryAttempt> = Vec::new();
    let mut prompt = format!("TASK: text2query\nQuestion: {question}");
    for round in 0..2 {
        let reply = ask(chat, model, prompt.clone())?;
        let text = extract_query_text(&reply);
        match parse_query(&text) {
            Ok(query) => {
                attempts.push(QueryAttempt { text: text.clone(), error: None });
                return Ok(Generated { query, text, attempts, used_fallback: false });
            }
            Err(e) => {
                let error = e.to_string();
                if round == 0 {
                    prompt = format!(
                        "TASK: text2query\nQuestion: {question}\nYour previous query was:\n{text}\n\
                         It was rejected: {error}\nReply with a corrected query only."
                    );
                }
                attempts.push(QueryAttempt { text, error: Some(error) });
            }
        }
    }
    match template_fallback(question) {
        Some(text) => {
            let query = parse_query(text).expect("templates parse");
            Ok(Generated { query, text: text.to_string(), attempts, used_fallback: true })
        }
        None => Err(GenerateError::Unparseable { attempts }),
    }
}
