//! Medication mention mining and target-level sentiment analysis for
//! social-media posts about treatment-resistant depression.
//!
//! Stages: [`corpus`] ingest and keyword filtering, [`lexicon`] and
//! [`matcher`] for normalized mentions, [`context`] for masked windows,
//! [`sentiment`] for labels and evaluation, [`stats`] for inference and
//! [`report`] for the final tables.

pub mod context;
pub mod corpus;
pub mod lexicon;
pub mod matcher;
pub mod report;
pub mod sentiment;
pub mod stats;
pub mod text;

/// Reference lexicon shipped with the crate.
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.jsonl");
pub const BUNDLED_TAXONOMY: &str = include_str!("../data/taxonomy.json");
pub const BUNDLED_KEYWORDS: &str = include_str!("../data/keywords.tsv");
pub const BUNDLED_POSITIVE_CUES: &str = include_str!("../data/positive_cues.txt");
pub const BUNDLED_NEGATIVE_CUES: &str = include_str!("../data/negative_cues.txt");

/// Compiles the bundled lexicon against the bundled taxonomy.
pub fn bundled_lexicon() -> lexicon::Result<lexicon::Lexicon> {
    let taxonomy = lexicon::ClassTaxonomy::from_json(BUNDLED_TAXONOMY)?;
    lexicon::compile_lexicon(BUNDLED_LEXICON, &taxonomy)
}
