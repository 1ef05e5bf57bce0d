//! Case folding, tokenization and whole-token phrase search.
//!
//! Every offset in this crate is a UTF-8 byte offset into the original
//! string. Case folding maps each `char` to exactly one `char`, so folded
//! and original text share char indices and token boundaries.

use serde::Serialize;

/// Characters that join two alphanumeric runs into one token when they sit
/// between alphanumerics (`amphetamine-dextroamphetamine`, `nothing's`).
pub fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// One-to-one case fold of a single character.
pub fn fold_char(c: char) -> char {
    if c == '\u{2019}' {
        return '\'';
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold_case(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

/// Folds case, trims, and collapses every internal whitespace run to one space.
pub fn normalize_phrase(text: &str) -> String {
    fold_case(text).split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream<'a> {
    pub tokens: Vec<Token<'a>>,
}

impl<'a> TokenStream<'a> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&'a str> {
        self.tokens.iter().map(|t| t.text).collect()
    }
}

/// Splits `text` into maximal alphanumeric runs. A joiner character is kept
/// inside a token only when both of its neighbours are alphanumeric.
pub fn tokenize(text: &str) -> TokenStream<'_> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if is_joiner(c) && chars.get(j + 1).is_some_and(|n| n.1.is_alphanumeric()) {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        tokens.push(Token { text: &text[start..end], start, end });
        i = j;
    }
    TokenStream { tokens }
}

/// A phrase stored as its folded token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPhrase {
    pub phrase: String,
    pub tokens: Vec<String>,
}

impl TokenPhrase {
    pub fn new(phrase: &str) -> Self {
        let phrase = normalize_phrase(phrase);
        let tokens = tokenize(&phrase).texts().into_iter().map(str::to_owned).collect();
        TokenPhrase { phrase, tokens }
    }
}

/// Folded text plus its tokens, for repeated whole-token phrase lookups.
pub struct TokenizedText {
    folded: String,
    spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    pub fn new(text: &str) -> Self {
        Self::from_folded(fold_case(text))
    }

    pub fn from_folded(folded: String) -> Self {
        let spans = tokenize(&folded).tokens.iter().map(|t| (t.start, t.end)).collect();
        TokenizedText { folded, spans }
    }

    fn token(&self, i: usize) -> &str {
        let (s, e) = self.spans[i];
        &self.folded[s..e]
    }

    /// Whether tokens `i` and `i + 1` are separated by whitespace only.
    fn adjacent(&self, i: usize) -> bool {
        let gap = &self.folded[self.spans[i].1..self.spans[i + 1].0];
        !gap.is_empty() && gap.chars().all(|c| c.is_whitespace() && c != '\n' && c != '\r')
    }

    fn matches_at(&self, i: usize, phrase: &TokenPhrase) -> bool {
        let n = phrase.tokens.len();
        if n == 0 || i + n > self.spans.len() {
            return false;
        }
        (0..n).all(|k| self.token(i + k) == phrase.tokens[k] && (k + 1 == n || self.adjacent(i + k)))
    }

    pub fn count(&self, phrase: &TokenPhrase) -> usize {
        (0..self.spans.len()).filter(|&i| self.matches_at(i, phrase)).count()
    }

    pub fn contains(&self, phrase: &TokenPhrase) -> bool {
        (0..self.spans.len()).any(|i| self.matches_at(i, phrase))
    }
}
