//! JSON-lines caption fixtures.
//!
//! One object per line: `{"anchor_index": 10, "caption": "..."}` with optional
//! `data_files`, `created_at` (RFC 3339) and `kind` (`image` or `background`).
//! Blank lines are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use groundmem_core::memory::ItemKind;
use groundmem_core::perception::{PerceptionParams, ReplayCaptioner};
use groundmem_core::{IngestItem, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{parse_rfc3339, to_rfc3339, FIXTURE_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Image,
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_index: Option<usize>,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RecordKind>,
}

impl FixtureRecord {
    pub fn image(anchor_index: usize, caption: impl Into<String>) -> Self {
        Self { anchor_index: Some(anchor_index), caption: caption.into(), data_files: vec![], created_at: None, kind: None }
    }

    /// `created_at` if given, else the fixture epoch plus the anchor frame's
    /// offset at the sampling rate.
    pub fn timestamp(&self, params: &PerceptionParams) -> Result<Timestamp, String> {
        if let Some(s) = &self.created_at {
            return parse_rfc3339(s).ok_or_else(|| format!("created_at `{s}` is not RFC 3339"));
        }
        let offset = self.anchor_index.map_or(0, |a| params.frame_offset_secs(a));
        Ok(Timestamp(FIXTURE_EPOCH.0 + offset))
    }

    pub fn to_item(&self, params: &PerceptionParams) -> Result<IngestItem, String> {
        let kind = match self.kind {
            Some(RecordKind::Background) => ItemKind::Background,
            _ => ItemKind::Image,
        };
        Ok(IngestItem {
            caption: self.caption.clone(),
            data_files: self.data_files.clone(),
            created_at: self.timestamp(params)?,
            kind,
        })
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
}

pub fn parse_fixture(text: &str, path: &Path) -> Result<Vec<FixtureRecord>, FixtureError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: FixtureRecord = serde_json::from_str(line).map_err(|e| FixtureError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_fixture(path: &Path) -> Result<Vec<FixtureRecord>, FixtureError> {
    let text = fs::read_to_string(path).map_err(|source| FixtureError::Io { path: path.to_path_buf(), source })?;
    parse_fixture(&text, path)
}

pub fn to_jsonl(records: &[FixtureRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

/// Image records with an anchor, for driving perception from a recording.
pub fn replay_captioner(records: &[FixtureRecord]) -> ReplayCaptioner {
    ReplayCaptioner::new(
        records
            .iter()
            .filter(|r| r.kind != Some(RecordKind::Background))
            .filter_map(|r| Some((r.anchor_index?, r.caption.clone()))),
    )
}

/// Record for a captioned window, timestamped from its anchor frame.
pub fn record_for_window(anchor: usize, caption: String, data_files: Vec<String>, params: &PerceptionParams) -> FixtureRecord {
    let created_at = to_rfc3339(Timestamp(FIXTURE_EPOCH.0 + params.frame_offset_secs(anchor)));
    FixtureRecord { anchor_index: Some(anchor), caption, data_files, created_at: Some(created_at), kind: None }
}
