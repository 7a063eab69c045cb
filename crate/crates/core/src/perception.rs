//! Frame sampling and overlapping captioning windows.
//!
//! Frames are extracted at `sample_rate_hz`, every `every_nth` extracted
//! frame is kept, and the kept frames are grouped into windows of
//! `window_size` that share their boundary frame with the neighbouring
//! window. A captioner describes each window and its caption is attached to
//! the window's last frame.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use thiserror::Error;

use crate::caption::{self, CaptionError};
use crate::providers::{ProviderError, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionParams {
    pub sample_rate_hz: f64,
    pub every_nth: usize,
    pub window_size: usize,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self { sample_rate_hz: 3.0, every_nth: 5, window_size: 3 }
    }
}

impl PerceptionParams {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(PerceptionError::InvalidParams("sample_rate_hz must be positive"));
        }
        if self.every_nth == 0 {
            return Err(PerceptionError::InvalidParams("every_nth must be at least 1"));
        }
        if self.window_size < 2 {
            return Err(PerceptionError::InvalidWindowSize(self.window_size));
        }
        Ok(())
    }

    /// Seconds from stream start to the given extracted frame, floored.
    pub fn frame_offset_secs(&self, frame_index: usize) -> i64 {
        libm::floor(frame_index as f64 / self.sample_rate_hz) as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub frame_indices: Vec<usize>,
}

impl Window {
    /// The frame the window's caption is attached to.
    pub fn anchor(&self) -> usize {
        *self.frame_indices.last().expect("windows are never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("window size must be at least 2, got {0}")]
    InvalidWindowSize(usize),
    #[error("invalid perception parameters: {0}")]
    InvalidParams(&'static str),
    #[error("captioner failed on window {window} after {attempts} attempt(s): {reason}")]
    CaptionerFailure { window: usize, attempts: u32, reason: String },
    #[error("caption for window {window} is malformed: {source}")]
    MalformedCaption { window: usize, source: CaptionError },
}

/// Indices `0, n, 2n, ...` below `frame_count`.
pub fn sample_frames(frame_count: usize, every_nth: usize) -> Vec<usize> {
    (0..frame_count).step_by(every_nth.max(1)).collect()
}

/// Groups sampled indices into windows whose last index starts the next
/// window. A shorter trailing window covers any remainder.
pub fn make_windows(sampled: &[usize], window_size: usize) -> Result<Vec<Window>, PerceptionError> {
    if window_size < 2 {
        return Err(PerceptionError::InvalidWindowSize(window_size));
    }
    let mut windows = Vec::new();
    if sampled.is_empty() {
        return Ok(windows);
    }
    if sampled.len() == 1 {
        windows.push(Window { frame_indices: sampled.to_vec() });
        return Ok(windows);
    }
    let step = window_size - 1;
    let mut start = 0;
    while start + 1 < sampled.len() {
        let end = (start + window_size).min(sampled.len());
        windows.push(Window { frame_indices: sampled[start..end].to_vec() });
        start += step;
    }
    Ok(windows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionedWindow {
    pub window_index: usize,
    pub anchor: usize,
    pub caption: String,
}

/// Describes a window of frames. `prior_labels` holds every entity label
/// already in use so the captioner can keep identities stable.
pub trait Captioner {
    fn caption(&mut self, window: &Window, frames: &[&str], prior_labels: &[String]) -> Result<String, ProviderError>;
}

/// Replays recorded captions keyed by anchor frame index.
#[derive(Debug, Clone, Default)]
pub struct ReplayCaptioner {
    captions: alloc::collections::BTreeMap<usize, String>,
}

impl ReplayCaptioner {
    pub fn new(records: impl IntoIterator<Item = (usize, String)>) -> Self {
        Self { captions: records.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    /// Recorded anchors in ascending order.
    pub fn anchors(&self) -> impl Iterator<Item = usize> + '_ {
        self.captions.keys().copied()
    }

    pub fn caption_for(&self, anchor: usize) -> Option<&str> {
        self.captions.get(&anchor).map(String::as_str)
    }
}

impl Captioner for ReplayCaptioner {
    fn caption(&mut self, window: &Window, _frames: &[&str], _prior_labels: &[String]) -> Result<String, ProviderError> {
        let anchor = window.anchor();
        self.captions
            .get(&anchor)
            .cloned()
            .ok_or_else(|| ProviderError::MalformedResponse(alloc::format!("no recorded caption for frame {anchor}")))
    }
}

/// Captions every window in order, threading entity labels forward.
///
/// `frame_refs[i]` names extracted frame `i`. Failed captioner calls are
/// retried per `retry`, calling `sleep` between attempts.
pub fn run_perception(
    frame_refs: &[&str],
    params: &PerceptionParams,
    captioner: &mut dyn Captioner,
    retry: &RetryPolicy,
    sleep: &mut dyn FnMut(Duration),
) -> Result<Vec<CaptionedWindow>, PerceptionError> {
    params.validate()?;
    let sampled = sample_frames(frame_refs.len(), params.every_nth);
    let windows = make_windows(&sampled, params.window_size)?;
    let mut labels: Vec<String> = Vec::new();
    let mut out = Vec::with_capacity(windows.len());

    for (window_index, window) in windows.iter().enumerate() {
        let frames: Vec<&str> = window.frame_indices.iter().map(|&i| frame_refs[i]).collect();
        let mut attempt = 0;
        let caption = loop {
            attempt += 1;
            let wait = retry.delay_before(attempt);
            if !wait.is_zero() {
                sleep(wait);
            }
            match captioner.caption(window, &frames, &labels) {
                Ok(c) => break c,
                Err(e) if attempt >= retry.max_attempts.max(1) => {
                    return Err(PerceptionError::CaptionerFailure {
                        window: window_index,
                        attempts: attempt,
                        reason: e.to_string(),
                    })
                }
                Err(_) => continue,
            }
        };
        let parsed = caption::parse_caption(&caption)
            .map_err(|source| PerceptionError::MalformedCaption { window: window_index, source })?;
        for m in &parsed.mentions {
            if !labels.contains(&m.label) {
                labels.push(m.label.clone());
            }
        }
        out.push(CaptionedWindow { window_index, anchor: window.anchor(), caption });
    }
    Ok(out)
}
