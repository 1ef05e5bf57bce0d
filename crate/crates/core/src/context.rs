//! Sentence segmentation and target-masked context windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Post;
use crate::matcher::Mention;
use crate::text::fold_case;

/// Reserved token that replaces the target medication surface.
pub const PLACEHOLDER: &str = "<MEDICATION>";
pub const DEFAULT_WINDOW_CHARS: usize = 1000;

/// Words that do not end a sentence when followed by a period.
pub const ABBREVIATIONS: &[&str] = &[
    "approx", "dept", "dr", "e.g", "fig", "i.e", "jr", "mr", "mrs", "ms", "mt", "prof", "sr", "st", "vs",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("mention {mention_id} span {start}..{end} is out of bounds for its field")]
    SpanOutOfBounds { mention_id: String, start: usize, end: usize },
    #[error("mention {mention_id} belongs to post {post_id}, not {given}")]
    WrongPost { mention_id: String, post_id: String, given: String },
    #[error("source text around mention {0} already contains the placeholder token")]
    PlaceholderCollision(String),
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

fn abbreviation_before(text: &str, dot: usize) -> bool {
    let head = &text[..dot];
    let word_start = head
        .char_indices()
        .rev()
        .take_while(|&(_, c)| c.is_alphabetic() || c == '.')
        .last()
        .map_or(dot, |(i, _)| i);
    let word = fold_case(head[word_start..].trim_start_matches('.'));
    ABBREVIATIONS.contains(&word.as_str())
}

/// Rule-based sentence spans that tile `text`.
///
/// Sentences end at `.`, `!`, `?` or a newline. A period does not end a
/// sentence when it is directly followed by an alphanumeric character
/// (decimals such as `2.5`) or follows an entry of [`ABBREVIATIONS`].
pub fn segment_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let terminal = is_terminator(c)
            && !(c == '.'
                && (chars.get(i + 1).is_some_and(|n| n.1.is_alphanumeric()) || abbreviation_before(text, pos)));
        if !terminal {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        spans.push((start, end));
        start = end;
        i = j;
    }
    if start < text.len() {
        match spans.last_mut() {
            Some(last) if text[start..].trim().is_empty() => last.1 = text.len(),
            _ => spans.push((start, text.len())),
        }
    }
    spans
}

/// Index of the sentence containing byte `offset`.
pub fn sentence_index_at(spans: &[(usize, usize)], offset: usize) -> usize {
    spans.partition_point(|&(_, end)| end <= offset).min(spans.len().saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub mention_id: String,
    pub masked_text: String,
    /// Byte range of the source field covered by the window.
    pub window_start: usize,
    pub window_end: usize,
    /// Byte offset of the placeholder inside `masked_text`.
    pub placeholder_offset: usize,
}

impl ContextWindow {
    /// Puts `surface` back in place of the placeholder.
    pub fn unmask(&self, surface: &str) -> String {
        let mut s = String::with_capacity(self.masked_text.len() + surface.len());
        s.push_str(&self.masked_text[..self.placeholder_offset]);
        s.push_str(surface);
        s.push_str(&self.masked_text[self.placeholder_offset + PLACEHOLDER.len()..]);
        s
    }
}

/// Record written to the windows file; the classifier input contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub mention_id: String,
    pub masked_text: String,
}

impl From<&ContextWindow> for WindowRecord {
    fn from(w: &ContextWindow) -> Self {
        WindowRecord { mention_id: w.mention_id.clone(), masked_text: w.masked_text.clone() }
    }
}

/// Byte offset reached by moving `n` chars left of `from`.
fn back_chars(text: &str, from: usize, n: usize) -> usize {
    if n == 0 {
        return from;
    }
    text[..from].char_indices().rev().nth(n - 1).map_or(0, |(i, _)| i)
}

fn forward_chars(text: &str, from: usize, n: usize) -> usize {
    text[from..].char_indices().nth(n).map_or(text.len(), |(i, _)| from + i)
}

/// Masks the target mention and keeps up to `max_chars` source characters
/// centred on it. Budget left unused at one field edge goes to the other side.
pub fn extract_window(post: &Post, mention: &Mention, max_chars: usize) -> Result<ContextWindow, ContextError> {
    if mention.post_id != post.post_id {
        return Err(ContextError::WrongPost {
            mention_id: mention.mention_id.clone(),
            post_id: mention.post_id.clone(),
            given: post.post_id.clone(),
        });
    }
    let text = mention.field.text(post);
    let (s, e) = (mention.start, mention.end);
    if s >= e || e > text.len() || !text.is_char_boundary(s) || !text.is_char_boundary(e) {
        return Err(ContextError::SpanOutOfBounds { mention_id: mention.mention_id.clone(), start: s, end: e });
    }
    let target_chars = text[s..e].chars().count();
    let left_avail = text[..s].chars().count();
    let right_avail = text[e..].chars().count();
    let budget = max_chars.saturating_sub(target_chars);
    let left = left_avail.min((budget / 2).max(budget.saturating_sub(right_avail)));
    let right = right_avail.min(budget - left);
    let window_start = back_chars(text, s, left);
    let window_end = forward_chars(text, e, right);

    let mut masked_text = String::with_capacity(window_end - window_start + PLACEHOLDER.len());
    masked_text.push_str(&text[window_start..s]);
    masked_text.push_str(PLACEHOLDER);
    masked_text.push_str(&text[e..window_end]);
    if masked_text.matches(PLACEHOLDER).count() != 1 {
        return Err(ContextError::PlaceholderCollision(mention.mention_id.clone()));
    }
    Ok(ContextWindow {
        mention_id: mention.mention_id.clone(),
        masked_text,
        window_start,
        window_end,
        placeholder_offset: s - window_start,
    })
}
