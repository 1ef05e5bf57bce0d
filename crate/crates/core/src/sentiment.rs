//! Sentiment label schema, prediction exchange, the rule-based reference
//! classifier, augmentation bookkeeping and classifier evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{segment_sentences, sentence_index_at, ContextWindow, WindowRecord, PLACEHOLDER};
use crate::matcher::Mention;
use crate::text::{TokenPhrase, TokenizedText};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("line {line}: unknown mention id {mention_id:?}")]
    UnknownMentionId { line: usize, mention_id: String },
    #[error("line {line}: duplicate prediction for {mention_id:?}")]
    DuplicatePrediction { line: usize, mention_id: String },
    #[error("line {line}: invalid label {label:?}")]
    InvalidLabel { line: usize, label: String },
    #[error("line {line}: confidence {confidence} outside [0, 1]")]
    InvalidConfidence { line: usize, confidence: f64 },
    #[error("line {line}: {reason}")]
    MalformedPrediction { line: usize, reason: String },
    #[error("neutral instances are not augmented")]
    NeutralNotAugmented,
    #[error("target span {start}..{end} is not inside the instance text")]
    BadTargetSpan { start: usize, end: usize },
    #[error("gold has {gold} labels, predictions {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("confidence level {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("cannot sample {requested} items from {population}")]
    SampleTooLarge { requested: usize, population: usize },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [SentimentLabel::Negative, SentimentLabel::Neutral, SentimentLabel::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            "positive" => Ok(SentimentLabel::Positive),
            other => Err(other.to_owned()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    External,
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMention {
    pub mention_id: String,
    pub label: SentimentLabel,
    pub confidence: f64,
    pub source: LabelSource,
}

/// One line of a predictions (or gold) file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mention_id: String,
    pub label: SentimentLabel,
    pub confidence: f64,
}

impl From<&LabeledMention> for PredictionRecord {
    fn from(l: &LabeledMention) -> Self {
        PredictionRecord { mention_id: l.mention_id.clone(), label: l.label, confidence: l.confidence }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletenessReport {
    pub mentions: usize,
    pub predictions: usize,
    pub joined: usize,
    /// Mentions without a prediction, in mention order.
    pub missing: Vec<String>,
}

#[derive(Deserialize)]
struct RawPrediction {
    mention_id: Option<String>,
    label: Option<serde_json::Value>,
    confidence: Option<f64>,
}

fn parse_prediction(line_no: usize, line: &str) -> Result<PredictionRecord, SentimentError> {
    let raw: RawPrediction = serde_json::from_str(line)
        .map_err(|e| SentimentError::MalformedPrediction { line: line_no, reason: e.to_string() })?;
    let mention_id = raw
        .mention_id
        .ok_or(SentimentError::MalformedPrediction { line: line_no, reason: "missing mention_id".into() })?;
    let label = match raw.label {
        Some(serde_json::Value::String(s)) => {
            s.parse().map_err(|l| SentimentError::InvalidLabel { line: line_no, label: l })?
        }
        other => {
            return Err(SentimentError::InvalidLabel {
                line: line_no,
                label: other.map_or_else(String::new, |v| v.to_string()),
            })
        }
    };
    let confidence = raw.confidence.unwrap_or(f64::NAN);
    if !(0.0..=1.0).contains(&confidence) {
        return Err(SentimentError::InvalidConfidence { line: line_no, confidence });
    }
    Ok(PredictionRecord { mention_id, label, confidence })
}

/// Reads line-delimited predictions without joining them to mentions.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, SentimentError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SentimentError::Io(e.to_string()))?;
        if !line.trim().is_empty() {
            out.push(parse_prediction(i + 1, &line)?);
        }
    }
    Ok(out)
}

/// Joins a predictions file to the mention set. Missing predictions are
/// reported; every other defect is an error.
pub fn ingest_predictions<R: BufRead>(
    reader: R,
    mentions: &[Mention],
    source: LabelSource,
) -> Result<(Vec<LabeledMention>, CompletenessReport), SentimentError> {
    let known: HashSet<&str> = mentions.iter().map(|m| m.mention_id.as_str()).collect();
    let mut by_id: HashMap<String, PredictionRecord> = HashMap::new();
    let mut count = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SentimentError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_prediction(i + 1, &line)?;
        if !known.contains(rec.mention_id.as_str()) {
            return Err(SentimentError::UnknownMentionId { line: i + 1, mention_id: rec.mention_id });
        }
        if by_id.contains_key(&rec.mention_id) {
            return Err(SentimentError::DuplicatePrediction { line: i + 1, mention_id: rec.mention_id });
        }
        count += 1;
        by_id.insert(rec.mention_id.clone(), rec);
    }
    let mut labeled = Vec::with_capacity(by_id.len());
    let mut missing = Vec::new();
    for m in mentions {
        match by_id.remove(&m.mention_id) {
            Some(p) => labeled.push(LabeledMention {
                mention_id: p.mention_id,
                label: p.label,
                confidence: p.confidence,
                source,
            }),
            None => missing.push(m.mention_id.clone()),
        }
    }
    let report = CompletenessReport { mentions: mentions.len(), predictions: count, joined: labeled.len(), missing };
    Ok((labeled, report))
}

pub fn write_labeled<W: Write>(out: W, labeled: &[LabeledMention]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    if labeled.is_empty() {
        w.write_record(["mention_id", "label", "confidence", "source"])?;
    }
    for l in labeled {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled<R: Read>(input: R) -> csv::Result<Vec<LabeledMention>> {
    csv::ReaderBuilder::new().delimiter(b'\t').from_reader(input).deserialize().collect()
}

/// Pairs each labeled mention with its mention record, in mention order.
pub fn join_labels<'a>(mentions: &'a [Mention], labeled: &[LabeledMention]) -> Vec<(&'a Mention, SentimentLabel)> {
    let labels: HashMap<&str, SentimentLabel> = labeled.iter().map(|l| (l.mention_id.as_str(), l.label)).collect();
    mentions
        .iter()
        .filter_map(|m| labels.get(m.mention_id.as_str()).map(|&l| (m, l)))
        .collect()
}

/// Positive and negative cue phrases for the rule classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueLists {
    pub positive: Vec<TokenPhrase>,
    pub negative: Vec<TokenPhrase>,
}

impl CueLists {
    fn parse_list(source: &str) -> Vec<TokenPhrase> {
        source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(TokenPhrase::new)
            .filter(|p| !p.tokens.is_empty())
            .collect()
    }

    /// One phrase per line; `#` starts a comment line.
    pub fn parse(positive: &str, negative: &str) -> Self {
        CueLists { positive: Self::parse_list(positive), negative: Self::parse_list(negative) }
    }
}

/// Deterministic cue-counting classifier used for offline runs and tests.
pub fn rule_classify(window: &ContextWindow, cues: &CueLists) -> LabeledMention {
    classify_text(&window.mention_id, &window.masked_text, cues)
}

pub fn classify_record(window: &WindowRecord, cues: &CueLists) -> LabeledMention {
    classify_text(&window.mention_id, &window.masked_text, cues)
}

/// Cues are counted only in the sentence that holds the placeholder.
fn classify_text(mention_id: &str, text: &str, cues: &CueLists) -> LabeledMention {
    let text = match text.find(PLACEHOLDER) {
        Some(at) => {
            let spans = segment_sentences(text);
            let (s, e) = spans[sentence_index_at(&spans, at)];
            &text[s..e]
        }
        None => text,
    };
    let text = TokenizedText::new(text);
    let pos: usize = cues.positive.iter().map(|c| text.count(c)).sum();
    let neg: usize = cues.negative.iter().map(|c| text.count(c)).sum();
    let total = pos + neg;
    let (label, confidence) = if total == 0 {
        (SentimentLabel::Neutral, 0.5)
    } else {
        let label = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => SentimentLabel::Positive,
            std::cmp::Ordering::Less => SentimentLabel::Negative,
            std::cmp::Ordering::Equal => SentimentLabel::Neutral,
        };
        (label, pos.abs_diff(neg) as f64 / total as f64)
    };
    LabeledMention { mention_id: mention_id.to_owned(), label, confidence, source: LabelSource::Rule }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSetSummary {
    pub negative: u64,
    pub neutral: u64,
    pub positive: u64,
}

impl TrainSetSummary {
    pub fn total(&self) -> u64 {
        self.negative + self.neutral + self.positive
    }
}

pub const SYNTHETIC_PER_INSTANCE: u64 = 5;

/// Expected label counts after adding `k` synthetic posts per non-neutral instance.
pub fn validate_augmentation(original: TrainSetSummary, synthetic_per_instance: u64) -> TrainSetSummary {
    TrainSetSummary {
        negative: original.negative * (1 + synthetic_per_instance),
        neutral: original.neutral,
        positive: original.positive * (1 + synthetic_per_instance),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationInstance {
    pub text: String,
    pub target_start: usize,
    pub target_end: usize,
    pub label: SentimentLabel,
}

pub const AUGMENTATION_PROMPT_TEMPLATE: &str = "\
You are generating synthetic social media posts to train a classifier that detects sentiment toward a specific medication.

Original post:
[text]

Target therapy: {{target}}
Sentiment toward the target therapy: {{sentiment}}

Write 5 new posts in the style of Reddit and Twitter users. Every new post must
(i) mention the same target therapy, {{target}}, and
(ii) express the same {{sentiment}} sentiment toward {{target}},
while keeping other therapies neutral.
Output exactly 5 posts, one per line, with no numbering and no explanations.

[tweet]
[tweet]
[tweet]
[tweet]
[tweet]
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AugmentationPrompt {
    pub target: String,
    pub label: SentimentLabel,
    pub variants_requested: u64,
    pub prompt: String,
}

pub fn build_augmentation_prompt(instance: &AugmentationInstance) -> Result<AugmentationPrompt, SentimentError> {
    if instance.label == SentimentLabel::Neutral {
        return Err(SentimentError::NeutralNotAugmented);
    }
    let target = instance
        .text
        .get(instance.target_start..instance.target_end)
        .filter(|t| !t.is_empty())
        .ok_or(SentimentError::BadTargetSpan { start: instance.target_start, end: instance.target_end })?;
    let prompt = AUGMENTATION_PROMPT_TEMPLATE
        .replace("{{target}}", target)
        .replace("{{sentiment}}", instance.label.as_str())
        .replacen("[text]", &instance.text, 1);
    Ok(AugmentationPrompt {
        target: target.to_owned(),
        label: instance.label,
        variants_requested: SYNTHETIC_PER_INSTANCE,
        prompt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub micro_f1: f64,
    pub micro_f1_ci: (f64, f64),
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub macro_f1: f64,
    pub negative: ClassScores,
    pub neutral: ClassScores,
    pub positive: ClassScores,
    /// `confusion[gold][predicted]` in canonical label order.
    pub confusion: [[usize; 3]; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_scores(confusion: &[[usize; 3]; 3], k: usize) -> ClassScores {
    let tp = confusion[k][k];
    let predicted: usize = (0..3).map(|g| confusion[g][k]).sum();
    let support: usize = confusion[k].iter().sum();
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, support);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassScores { precision, recall, f1, support }
}

fn accuracy(gold: &[SentimentLabel], predicted: &[SentimentLabel], idx: &[usize]) -> f64 {
    idx.iter().filter(|&&i| gold[i] == predicted[i]).count() as f64 / idx.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// RNG for bootstrap resample `b`; independent of evaluation order.
pub fn resample_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

pub fn evaluate(
    gold: &[SentimentLabel],
    predicted: &[SentimentLabel],
    bootstrap_resamples: usize,
    ci_level: f64,
    seed: u64,
) -> Result<EvalReport, SentimentError> {
    if gold.len() != predicted.len() {
        return Err(SentimentError::LengthMismatch { gold: gold.len(), predicted: predicted.len() });
    }
    if gold.is_empty() {
        return Err(SentimentError::EmptyInput);
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(SentimentError::InvalidLevel(ci_level));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (g, p) in gold.iter().zip(predicted) {
        confusion[g.index()][p.index()] += 1;
    }
    let [negative, neutral, positive] = [0, 1, 2].map(|k| class_scores(&confusion, k));
    let n = gold.len();
    let all: Vec<usize> = (0..n).collect();
    let micro_f1 = accuracy(gold, predicted, &all);

    let mut stats: Vec<f64> = (0..bootstrap_resamples as u64)
        .map(|b| {
            let mut rng = resample_rng(seed, b);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            accuracy(gold, predicted, &idx)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - ci_level;
    let micro_f1_ci = if stats.is_empty() {
        (micro_f1, micro_f1)
    } else {
        (quantile(&stats, alpha / 2.0), quantile(&stats, 1.0 - alpha / 2.0))
    };
    Ok(EvalReport {
        n,
        micro_f1,
        micro_f1_ci,
        ci_level,
        bootstrap_resamples,
        seed,
        macro_f1: (negative.f1 + neutral.f1 + positive.f1) / 3.0,
        negative,
        neutral,
        positive,
        confusion,
    })
}

/// Aligns gold and predicted records by mention id (gold order).
pub fn align_by_id(
    gold: &[PredictionRecord],
    predicted: &[PredictionRecord],
) -> Result<(Vec<SentimentLabel>, Vec<SentimentLabel>), SentimentError> {
    let pred: BTreeMap<&str, SentimentLabel> = predicted.iter().map(|p| (p.mention_id.as_str(), p.label)).collect();
    if pred.len() != gold.len() {
        return Err(SentimentError::LengthMismatch { gold: gold.len(), predicted: predicted.len() });
    }
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    for rec in gold {
        let label = pred
            .get(rec.mention_id.as_str())
            .ok_or(SentimentError::LengthMismatch { gold: gold.len(), predicted: predicted.len() })?;
        g.push(rec.label);
        p.push(*label);
    }
    Ok((g, p))
}

/// Uniform sample of `n` indices out of `population`, without replacement.
/// A forward partial Fisher-Yates shuffle driven by a seeded ChaCha8 stream.
pub fn sample_indices(population: usize, n: usize, seed: u64) -> Result<Vec<usize>, SentimentError> {
    if n > population {
        return Err(SentimentError::SampleTooLarge { requested: n, population });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..population).collect();
    for i in 0..n {
        let j = rng.gen_range(i..population);
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub mention_id: String,
    pub masked_text: String,
    pub label: SentimentLabel,
    pub confidence: f64,
}

/// Review sheet for a manual spot-check. The population is ordered by mention
/// id before sampling so the sheet depends only on the inputs and seed.
pub fn sample_for_review(
    labeled: &[LabeledMention],
    windows: &[WindowRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<ReviewRow>, SentimentError> {
    let text: HashMap<&str, &str> = windows.iter().map(|w| (w.mention_id.as_str(), w.masked_text.as_str())).collect();
    let mut population: Vec<&LabeledMention> = labeled.iter().collect();
    population.sort_by(|a, b| a.mention_id.cmp(&b.mention_id));
    Ok(sample_indices(population.len(), n, seed)?
        .into_iter()
        .map(|i| {
            let l = population[i];
            ReviewRow {
                mention_id: l.mention_id.clone(),
                masked_text: text.get(l.mention_id.as_str()).copied().unwrap_or_default().to_owned(),
                label: l.label,
                confidence: l.confidence,
            }
        })
        .collect())
}
