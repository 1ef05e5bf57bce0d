//! Post ingestion, TRD keyword filtering and cohort-level descriptive statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::matcher::Mention;
use crate::text::{fold_case, TokenPhrase, TokenizedText};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum CorpusError {
    #[error("duplicate post id {0:?}")]
    DuplicateId(String),
    #[error("line {line_no}: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("mention references unknown post {0:?}")]
    DanglingMention(String),
    #[error("keyword file line {line}: {reason}")]
    KeywordFormat { line: usize, reason: String },
    #[error("keyword lexicon is empty")]
    NoKeywords,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    #[serde(rename = "id")]
    pub post_id: String,
    pub subreddit: String,
    #[serde(rename = "author")]
    pub author_id: String,
    #[serde(rename = "created_utc")]
    pub created_at: i64,
    pub title: String,
    #[serde(rename = "selftext")]
    pub body: String,
}

impl Post {
    pub fn year(&self) -> i32 {
        utc_year(self.created_at)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("post serializes")
    }
}

pub fn utc_year(ts: i64) -> i32 {
    DateTime::<Utc>::from_timestamp(ts, 0).map_or(1970, |d| d.year())
}

fn utc_date(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0).map_or_else(String::new, |d| d.format("%Y-%m-%d").to_string())
}

/// Valid `created_utc` window, inclusive, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectionWindow {
    pub start: i64,
    pub end: i64,
}

impl CollectionWindow {
    /// From 2010-01-01 to the end of `end_date`.
    pub fn ending(end_date: NaiveDate) -> Self {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let end = end_date.and_hms_opt(23, 59, 59).unwrap();
        CollectionWindow { start: start.and_utc().timestamp(), end: end.and_utc().timestamp() }
    }

    pub fn end_date(&self) -> NaiveDate {
        DateTime::<Utc>::from_timestamp(self.end, 0).unwrap().date_naive()
    }

    /// A collection that stops before Dec 31 leaves its final year partial.
    pub fn partial_year(&self) -> Option<i32> {
        let end = self.end_date();
        (end.month() != 12 || end.day() != 31).then(|| end.year())
    }
}

impl Default for CollectionWindow {
    fn default() -> Self {
        CollectionWindow::ending(NaiveDate::from_ymd_opt(2025, 7, 31).unwrap())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub lines_read: usize,
    pub blank_lines: usize,
    pub posts_ingested: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub errors: Vec<IngestIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestIssue {
    pub line_no: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub posts: Vec<Post>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for p in &self.posts {
            writeln!(out, "{}", p.to_json_line())?;
        }
        Ok(())
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str, required: bool) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None if !required => Ok(String::new()),
        Some(Value::Null) | None => Err(format!("missing {key}")),
        Some(other) => Err(format!("{key} is not a string: {other}")),
    }
}

fn parse_post(line: &str, window: &CollectionWindow) -> Result<Post, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not an object")?;
    let post_id = string_field(obj, "id", true)?;
    if post_id.trim().is_empty() {
        return Err("missing id".into());
    }
    let created_at = match obj.get("created_utc") {
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| format!("created_utc is not whole seconds: {n}"))?,
        Some(Value::String(s)) => s.trim().parse::<i64>().map_err(|_| format!("created_utc unparsable: {s:?}"))?,
        _ => return Err("missing created_utc".into()),
    };
    if created_at < window.start || created_at > window.end {
        return Err(format!("created_utc {created_at} outside collection window"));
    }
    let title = string_field(obj, "title", false)?;
    let body = string_field(obj, "selftext", false)?;
    if title.is_empty() && body.is_empty() {
        return Err("title and selftext both empty".into());
    }
    Ok(Post {
        post_id,
        subreddit: string_field(obj, "subreddit", true)?,
        author_id: string_field(obj, "author", true)?,
        created_at,
        title,
        body,
    })
}

/// Reads line-delimited posts; bad lines are reported, never fatal.
pub fn ingest<R: BufRead>(reader: R, window: &CollectionWindow) -> std::io::Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        report.lines_read += 1;
        if line.trim().is_empty() {
            report.blank_lines += 1;
            continue;
        }
        match parse_post(&line, window) {
            Ok(post) => {
                if !seen.insert(post.post_id.clone()) {
                    report.duplicates += 1;
                    report.errors.push(IngestIssue {
                        line_no,
                        error: CorpusError::DuplicateId(post.post_id).to_string(),
                    });
                } else {
                    posts.push(post);
                }
            }
            Err(reason) => {
                report.malformed += 1;
                report
                    .errors
                    .push(IngestIssue { line_no, error: CorpusError::MalformedRecord { line_no, reason }.to_string() });
            }
        }
    }
    report.posts_ingested = posts.len();
    Ok((Corpus { posts }, report))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyword {
    pub category: String,
    pub phrase: TokenPhrase,
}

/// TRD keyword phrases; hyphens are treated as spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordLexicon {
    pub phrases: Vec<Keyword>,
}

fn keyword_normal_form(text: &str) -> String {
    fold_case(text).replace('-', " ")
}

impl KeywordLexicon {
    pub fn new<'a, I: IntoIterator<Item = (&'a str, &'a str)>>(entries: I) -> Result<Self, CorpusError> {
        let mut phrases: Vec<Keyword> = Vec::new();
        for (category, phrase) in entries {
            let phrase = TokenPhrase::new(&keyword_normal_form(phrase));
            if phrase.tokens.is_empty() || phrases.iter().any(|k| k.phrase == phrase) {
                continue;
            }
            phrases.push(Keyword { category: category.trim().to_owned(), phrase });
        }
        if phrases.is_empty() {
            return Err(CorpusError::NoKeywords);
        }
        Ok(KeywordLexicon { phrases })
    }

    /// Parses `category<TAB>phrase` lines; `#` starts a comment line.
    pub fn parse(source: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (cat, phrase) = line
                .split_once('\t')
                .ok_or(CorpusError::KeywordFormat { line: i + 1, reason: "expected category<TAB>phrase".into() })?;
            entries.push((cat, phrase));
        }
        Self::new(entries)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrdPost {
    pub post: Post,
    pub matched_keywords: Vec<String>,
}

/// Keeps posts whose title or body contains a keyword as a whole-token sequence.
pub fn filter_trd(corpus: &Corpus, keywords: &KeywordLexicon) -> Vec<TrdPost> {
    corpus
        .posts
        .iter()
        .filter_map(|post| {
            let title = TokenizedText::from_folded(keyword_normal_form(&post.title));
            let body = TokenizedText::from_folded(keyword_normal_form(&post.body));
            let matched: Vec<String> = keywords
                .phrases
                .iter()
                .filter(|k| title.contains(&k.phrase) || body.contains(&k.phrase))
                .map(|k| k.phrase.phrase.clone())
                .collect();
            (!matched.is_empty()).then(|| TrdPost { post: post.clone(), matched_keywords: matched })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
}

impl Distribution {
    pub fn of(values: &[usize]) -> Self {
        if values.is_empty() {
            return Distribution { mean: 0.0, median: 0.0, min: 0, max: 0 };
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
        Distribution {
            mean: v.iter().sum::<usize>() as f64 / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortStats {
    pub post_count: usize,
    pub subscriber_count: usize,
    pub subreddit_count: usize,
    pub first_post: String,
    pub last_post: String,
    pub posts_with_mentions: usize,
    pub posts_without_mentions: usize,
    pub total_mentions: usize,
    pub entities_observed: usize,
    pub mentions_per_post: Distribution,
    pub distinct_medications_per_post: Distribution,
    pub subscribers_with_one_post: usize,
    pub subscribers_with_5_plus_posts: usize,
    pub subscribers_with_10_plus_posts: usize,
}

/// Table-1 style cohort summary. Per-post means use every post as denominator.
pub fn cohort_stats(corpus: &Corpus, mentions: &[Mention]) -> Result<CohortStats, CorpusError> {
    let mut per_post: HashMap<&str, (usize, BTreeSet<&str>)> =
        corpus.posts.iter().map(|p| (p.post_id.as_str(), (0, BTreeSet::new()))).collect();
    for m in mentions {
        let slot = per_post
            .get_mut(m.post_id.as_str())
            .ok_or_else(|| CorpusError::DanglingMention(m.post_id.clone()))?;
        slot.0 += 1;
        slot.1.insert(m.generic_name.as_str());
    }
    let counts: Vec<usize> = per_post.values().map(|v| v.0).collect();
    let distinct: Vec<usize> = per_post.values().map(|v| v.1.len()).collect();
    let mut posts_by_author: HashMap<&str, usize> = HashMap::new();
    for p in &corpus.posts {
        *posts_by_author.entry(p.author_id.as_str()).or_default() += 1;
    }
    let subreddits: HashSet<&str> = corpus.posts.iter().map(|p| p.subreddit.as_str()).collect();
    let entities: HashSet<&str> = mentions.iter().map(|m| m.generic_name.as_str()).collect();
    let first = corpus.posts.iter().map(|p| p.created_at).min();
    let last = corpus.posts.iter().map(|p| p.created_at).max();
    let with = counts.iter().filter(|&&c| c > 0).count();
    Ok(CohortStats {
        post_count: corpus.len(),
        subscriber_count: posts_by_author.len(),
        subreddit_count: subreddits.len(),
        first_post: first.map(utc_date).unwrap_or_default(),
        last_post: last.map(utc_date).unwrap_or_default(),
        posts_with_mentions: with,
        posts_without_mentions: corpus.len() - with,
        total_mentions: mentions.len(),
        entities_observed: entities.len(),
        mentions_per_post: Distribution::of(&counts),
        distinct_medications_per_post: Distribution::of(&distinct),
        subscribers_with_one_post: posts_by_author.values().filter(|&&n| n == 1).count(),
        subscribers_with_5_plus_posts: posts_by_author.values().filter(|&&n| n >= 5).count(),
        subscribers_with_10_plus_posts: posts_by_author.values().filter(|&&n| n >= 10).count(),
    })
}

/// Number of subscribers by how many distinct medications they mentioned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubscriberHistogram {
    pub subscribers: usize,
    pub buckets: BTreeMap<usize, usize>,
}

impl SubscriberHistogram {
    pub fn share(&self, distinct_medications: usize) -> f64 {
        if self.subscribers == 0 {
            return 0.0;
        }
        self.buckets.get(&distinct_medications).copied().unwrap_or(0) as f64 * 100.0 / self.subscribers as f64
    }
}

pub fn subscriber_medication_distribution(mentions: &[Mention]) -> SubscriberHistogram {
    let mut per_author: HashMap<&str, HashSet<&str>> = HashMap::new();
    for m in mentions {
        per_author.entry(m.author.as_str()).or_default().insert(m.generic_name.as_str());
    }
    let mut buckets = BTreeMap::new();
    for meds in per_author.values() {
        *buckets.entry(meds.len()).or_default() += 1;
    }
    SubscriberHistogram { subscribers: per_author.len(), buckets }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearShare {
    pub year: i32,
    pub posts: usize,
    pub share: f64,
    pub partial: bool,
}

/// Per-year share of distinct posts, in percent.
pub fn annual_share(posts: &[Post], partial_year: Option<i32>) -> Vec<YearShare> {
    let mut ids_by_year: BTreeMap<i32, HashSet<&str>> = BTreeMap::new();
    for p in posts {
        ids_by_year.entry(p.year()).or_default().insert(p.post_id.as_str());
    }
    let total: usize = ids_by_year.values().map(HashSet::len).sum();
    ids_by_year
        .into_iter()
        .map(|(year, ids)| YearShare {
            year,
            posts: ids.len(),
            share: ids.len() as f64 * 100.0 / total as f64,
            partial: partial_year == Some(year),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::Field;

    pub(crate) fn post(id: &str, author: &str, ts: i64, body: &str) -> Post {
        Post {
            post_id: id.into(),
            subreddit: "depression".into(),
            author_id: author.into(),
            created_at: ts,
            title: String::new(),
            body: body.into(),
        }
    }

    fn mention(post_id: &str, author: &str, generic: &str) -> Mention {
        Mention {
            mention_id: format!("{post_id}:0"),
            post_id: post_id.into(),
            subreddit: "depression".into(),
            author: author.into(),
            created_utc: 1_600_000_000,
            generic_name: generic.into(),
            therapy_class: "X".into(),
            surface: generic.into(),
            field: Field::Body,
            start: 0,
            end: generic.len(),
            sentence_index: 0,
        }
    }

    const TS: i64 = 1_600_000_000;

    fn line(id: &str) -> String {
        format!(r#"{{"id":"{id}","subreddit":"depression","author":"a","created_utc":{TS},"title":"t","selftext":"b"}}"#)
    }

    #[test]
    fn ingest_counts_and_reports() {
        let input = format!("{}\n{}\n{}\n", line("a"), line("b"), line("c"));
        let (c, r) = ingest(input.as_bytes(), &CollectionWindow::default()).unwrap();
        assert_eq!((c.len(), r.errors.len()), (3, 0));

        let bad = format!(
            "{}\n{}\n{}\n",
            line("a"),
            r#"{"subreddit":"x","author":"a","created_utc":1600000000,"title":"t"}"#,
            line("c")
        );
        let (c, r) = ingest(bad.as_bytes(), &CollectionWindow::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(r.malformed, 1);
        assert!(r.errors[0].error.contains("line 2") && r.errors[0].error.contains("missing id"));

        let dup = format!("{}\n{}\n", line("a"), line("a"));
        let (c, r) = ingest(dup.as_bytes(), &CollectionWindow::default()).unwrap();
        assert_eq!((c.len(), r.duplicates), (1, 1));
        assert_eq!(r.errors[0].error, CorpusError::DuplicateId("a".into()).to_string());
    }

    #[test]
    fn ingest_rejects_out_of_window_and_empty() {
        let early = r#"{"id":"x","subreddit":"s","author":"a","created_utc":1000,"title":"t","selftext":""}"#;
        let empty = r#"{"id":"y","subreddit":"s","author":"a","created_utc":1600000000,"title":"","selftext":""}"#;
        let float = r#"{"id":"z","subreddit":"s","author":"a","created_utc":1600000000.0,"title":"t","selftext":null}"#;
        let (c, r) = ingest(format!("{early}\n{empty}\n\n{float}").as_bytes(), &CollectionWindow::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((r.malformed, r.blank_lines), (2, 1));
    }

    fn keywords() -> KeywordLexicon {
        KeywordLexicon::parse(
            "core\ttreatment-resistant depression\nabbr\tTRD\ncolloquial\ttried everything\n",
        )
        .unwrap()
    }

    #[test]
    fn filter_examples() {
        let corpus = Corpus {
            posts: vec![
                post("1", "a", TS, "I have treatment resistant depression"),
                post("2", "a", TS, "the trdX protocol"),
                post("3", "a", TS, "tried everything, nothing helps"),
                post("4", "a", TS, "My TRD is bad"),
            ],
        };
        let kept: Vec<_> = filter_trd(&corpus, &keywords()).into_iter().map(|p| p.post.post_id).collect();
        assert_eq!(kept, vec!["1", "3", "4"]);
    }

    #[test]
    fn cohort_means_use_all_posts() {
        let corpus = Corpus { posts: vec![post("p1", "a", TS, "x"), post("p2", "b", TS, "y")] };
        let ms = vec![mention("p1", "a", "k"), mention("p1", "a", "k"), mention("p1", "a", "e"), mention("p2", "b", "k")];
        let s = cohort_stats(&corpus, &ms).unwrap();
        assert_eq!(s.mentions_per_post, Distribution { mean: 2.0, median: 2.0, min: 1, max: 3 });
        assert_eq!(s.distinct_medications_per_post.mean, 1.5);

        let s = cohort_stats(&corpus, &[]).unwrap();
        assert_eq!((s.mentions_per_post.mean, s.posts_with_mentions), (0.0, 0));

        let err = cohort_stats(&corpus, &[mention("zz", "a", "k")]).unwrap_err();
        assert_eq!(err, CorpusError::DanglingMention("zz".into()));
    }

    #[test]
    fn subscriber_histogram() {
        let h = subscriber_medication_distribution(&[mention("1", "a", "k"), mention("2", "a", "k"), mention("3", "a", "k")]);
        assert_eq!(h.buckets, BTreeMap::from([(1, 1)]));
        let h = subscriber_medication_distribution(&[mention("1", "a", "x"), mention("1", "a", "y"), mention("2", "b", "x")]);
        assert_eq!(h.buckets, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(h.share(2), 50.0);
    }

    #[test]
    fn annual_share_examples() {
        let y2020 = 1_600_000_000;
        let y2021 = 1_620_000_000;
        let one = annual_share(&[post("a", "a", y2020, "x")], None);
        assert_eq!(one[0].share, 100.0);
        let posts = vec![post("a", "a", y2020, "x"), post("b", "a", y2021, "x"), post("c", "a", y2021, "x"), post("d", "a", y2021, "x")];
        let s = annual_share(&posts, Some(2021));
        assert_eq!((s[0].year, s[0].share, s[0].partial), (2020, 25.0, false));
        assert_eq!((s[1].year, s[1].share, s[1].partial), (2021, 75.0, true));
    }

    #[test]
    fn default_window_flags_2025() {
        assert_eq!(CollectionWindow::default().partial_year(), Some(2025));
        let full = CollectionWindow::ending(NaiveDate::from_ymd_opt(2024, 12, 31).unwrap());
        assert_eq!(full.partial_year(), None);
    }
}
