//! Whole-token lexicon matching and generic-name normalization.
//!
//! A surface matches when its case-folded form occurs in the folded field
//! text, starts at a token start, ends at a token end, and does not cross a
//! sentence boundary. Overlapping candidates are resolved longest first,
//! leftmost on ties.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::context::{sentence_index_at, segment_sentences};
use crate::corpus::Post;
use crate::lexicon::Lexicon;
use crate::text::{fold_char, tokenize};

pub use crate::text::{Token, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Body,
}

impl Field {
    pub fn text<'a>(&self, post: &'a Post) -> &'a str {
        match self {
            Field::Title => &post.title,
            Field::Body => &post.body,
        }
    }
}

/// One normalized medication occurrence, carrying the post metadata that the
/// mentions file exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub post_id: String,
    pub subreddit: String,
    pub author: String,
    pub created_utc: i64,
    pub generic_name: String,
    pub therapy_class: String,
    pub surface: String,
    pub field: Field,
    pub start: usize,
    pub end: usize,
    pub sentence_index: usize,
}

/// A resolved hit inside one field: byte span plus entity index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanMatch<'l> {
    pub start: usize,
    pub end: usize,
    pub generic_name: &'l str,
    pub therapy_class: &'l str,
}

/// Longest-first, leftmost-tie greedy selection of non-overlapping spans.
/// Candidates are `(start, end, char_len, payload)`.
pub fn resolve_overlaps<T: Copy>(mut candidates: Vec<(usize, usize, usize, T)>) -> Vec<(usize, usize, T)> {
    candidates.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut taken: Vec<(usize, usize, T)> = Vec::new();
    for (s, e, _, payload) in candidates {
        if taken.iter().all(|&(ts, te, _)| e <= ts || s >= te) {
            taken.push((s, e, payload));
        }
    }
    taken.sort_by_key(|t| t.0);
    taken
}

/// All resolved lexicon hits in one piece of text.
pub fn match_text<'l>(text: &str, lexicon: &'l Lexicon) -> Vec<SpanMatch<'l>> {
    let mut folded = String::with_capacity(text.len());
    // folded byte offset -> original byte offset, at char boundaries
    let mut to_orig = Vec::with_capacity(text.len() + 1);
    let mut char_count_at = Vec::with_capacity(text.len() + 1);
    for (n, (pos, c)) in text.char_indices().enumerate() {
        let f = fold_char(c);
        let flen = f.len_utf8();
        for _ in 0..flen {
            to_orig.push(pos);
            char_count_at.push(n);
        }
        folded.push(f);
    }
    to_orig.push(text.len());
    char_count_at.push(text.chars().count());

    let tokens = tokenize(text);
    let starts: HashSet<usize> = tokens.tokens.iter().map(|t| t.start).collect();
    let ends: HashSet<usize> = tokens.tokens.iter().map(|t| t.end).collect();
    let sentences = segment_sentences(text);

    let mut candidates = Vec::new();
    for m in lexicon.automaton().find_overlapping_iter(&folded) {
        let (s, e) = (to_orig[m.start()], to_orig[m.end()]);
        if !starts.contains(&s) || !ends.contains(&e) {
            continue;
        }
        if sentence_index_at(&sentences, s) != sentence_index_at(&sentences, e - 1) {
            continue;
        }
        let char_len = char_count_at[m.end()] - char_count_at[m.start()];
        candidates.push((s, e, char_len, m.pattern().as_usize()));
    }
    resolve_overlaps(candidates)
        .into_iter()
        .map(|(start, end, pattern)| {
            let entity = lexicon.pattern_entity(pattern);
            SpanMatch { start, end, generic_name: &entity.generic_name, therapy_class: &entity.therapy_class }
        })
        .collect()
}

/// Mentions in a post's title then body, in text order.
pub fn match_mentions(post: &Post, lexicon: &Lexicon) -> Vec<Mention> {
    let mut mentions = Vec::new();
    let mut sentence_base = 0;
    for field in [Field::Title, Field::Body] {
        let text = field.text(post);
        let sentences = segment_sentences(text);
        for hit in match_text(text, lexicon) {
            mentions.push(Mention {
                mention_id: format!("{}:{:04}", post.post_id, mentions.len()),
                post_id: post.post_id.clone(),
                subreddit: post.subreddit.clone(),
                author: post.author_id.clone(),
                created_utc: post.created_at,
                generic_name: hit.generic_name.to_owned(),
                therapy_class: hit.therapy_class.to_owned(),
                surface: text[hit.start..hit.end].to_owned(),
                field,
                start: hit.start,
                end: hit.end,
                sentence_index: sentence_base + sentence_index_at(&sentences, hit.start),
            });
        }
        sentence_base += sentences.len();
    }
    mentions
}

/// Matches every post; output is ordered by post id, then field and offset.
pub fn match_corpus(posts: &[Post], lexicon: &Lexicon) -> Vec<Mention> {
    let mut order: Vec<&Post> = posts.iter().collect();
    order.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    order.into_iter().flat_map(|p| match_mentions(p, lexicon)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityFrequency {
    pub generic_name: String,
    pub therapy_class: String,
    pub mentions: usize,
    pub subscribers: usize,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    /// Distinct authors with at least one mention.
    pub mentioning_subscribers: usize,
    /// Ordered by mentions descending, then generic name.
    pub rows: Vec<EntityFrequency>,
}

pub fn mention_frequencies(mentions: &[Mention]) -> FrequencyTable {
    let mut per_entity: BTreeMap<&str, (&str, usize, HashSet<&str>)> = BTreeMap::new();
    let mut authors = HashSet::new();
    for m in mentions {
        let slot = per_entity.entry(&m.generic_name).or_insert((&m.therapy_class, 0, HashSet::new()));
        slot.1 += 1;
        slot.2.insert(&m.author);
        authors.insert(m.author.as_str());
    }
    let total = authors.len();
    let mut rows: Vec<EntityFrequency> = per_entity
        .into_iter()
        .map(|(name, (class, n, who))| EntityFrequency {
            generic_name: name.to_owned(),
            therapy_class: class.to_owned(),
            mentions: n,
            subscribers: who.len(),
            reach: who.len() as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.mentions.cmp(&a.mentions).then_with(|| a.generic_name.cmp(&b.generic_name)));
    FrequencyTable { mentioning_subscribers: total, rows }
}

pub fn write_mentions<W: Write>(out: W, mentions: &[Mention]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    for m in mentions {
        w.serialize(m)?;
    }
    if mentions.is_empty() {
        w.write_record([
            "mention_id", "post_id", "subreddit", "author", "created_utc", "generic_name", "therapy_class", "surface",
            "field", "start", "end", "sentence_index",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mentions<R: Read>(input: R) -> csv::Result<Vec<Mention>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(input)
        .deserialize()
        .collect()
}
