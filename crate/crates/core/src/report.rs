//! Assembles the stage outputs into plot-ready tables and a summary file.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{annual_share, cohort_stats, utc_year, CohortStats, Corpus, YearShare};
use crate::lexicon::ClassTaxonomy;
use crate::matcher::{mention_frequencies, FrequencyTable, Mention};
use crate::sentiment::{join_labels, LabeledMention, SentimentLabel};
use crate::stats::{
    contingency_analysis, pairwise_class_tests, run_asymmetry_battery, sentiment_profile, AsymmetryBattery,
    ContingencyResult, GroupKey, PairwiseResult, SentimentCounts, SentimentProfile,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("reconciliation failed for {table}: expected {expected}, got {actual}")]
    Reconciliation { table: String, expected: usize, actual: usize },
    #[error("{0}")]
    Input(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassYearShare {
    pub year: i32,
    pub therapy_class: String,
    pub mentions: usize,
    /// Percent of all mentions in that year.
    pub share: f64,
}

/// Class composition per year; years without mentions do not appear.
pub fn class_year_composition<'a, I>(mentions: I) -> Vec<ClassYearShare>
where
    I: IntoIterator<Item = &'a Mention>,
{
    let mut counts: BTreeMap<i32, BTreeMap<&str, usize>> = BTreeMap::new();
    for m in mentions {
        *counts.entry(utc_year(m.created_utc)).or_default().entry(m.therapy_class.as_str()).or_default() += 1;
    }
    let mut out = Vec::new();
    for (year, classes) in counts {
        let total: usize = classes.values().sum();
        for (class, n) in classes {
            out.push(ClassYearShare {
                year,
                therapy_class: class.to_owned(),
                mentions: n,
                share: n as f64 * 100.0 / total as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassTable {
    /// Row labels in taxonomy order; classes without labeled mentions are left out.
    pub classes: Vec<String>,
    pub counts: Vec<SentimentCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub cohort: CohortStats,
    pub frequencies: FrequencyTable,
    pub labeled_mentions: usize,
    pub global_sentiment: SentimentCounts,
    pub entity_profiles: Vec<SentimentProfile>,
    pub class_profiles: Vec<SentimentProfile>,
    pub subreddit_profiles: Vec<SentimentProfile>,
    pub year_profiles: Vec<SentimentProfile>,
    pub battery: AsymmetryBattery,
    pub configured_entities: usize,
    pub class_table: ClassTable,
    pub contingency: Option<ContingencyResult>,
    /// Why the contingency analysis was skipped, when it was.
    pub contingency_note: Option<String>,
    pub pairwise: Vec<PairwiseResult>,
    pub annual: Vec<YearShare>,
    pub class_year: Vec<ClassYearShare>,
}

fn reconcile(table: &str, expected: usize, actual: usize) -> Result<(), ReportError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ReportError::Reconciliation { table: table.to_owned(), expected, actual })
    }
}

fn profile_total(profiles: &[SentimentProfile]) -> usize {
    profiles.iter().map(|p| p.counts.total() as usize).sum()
}

pub fn build_report(
    corpus: &Corpus,
    mentions: &[Mention],
    labeled: &[LabeledMention],
    taxonomy: &ClassTaxonomy,
    partial_year: Option<i32>,
) -> Result<ReportBundle, ReportError> {
    let ids: HashSet<&str> = mentions.iter().map(|m| m.mention_id.as_str()).collect();
    reconcile("mention ids", mentions.len(), ids.len())?;
    if let Some(l) = labeled.iter().find(|l| !ids.contains(l.mention_id.as_str())) {
        return Err(ReportError::Input(format!("label for unknown mention {}", l.mention_id)));
    }
    let cohort = cohort_stats(corpus, mentions).map_err(|e| ReportError::Input(e.to_string()))?;
    reconcile("cohort", mentions.len(), cohort.total_mentions)?;

    let frequencies = mention_frequencies(mentions);
    reconcile("frequencies", mentions.len(), frequencies.rows.iter().map(|r| r.mentions).sum())?;

    let joined = join_labels(mentions, labeled);
    reconcile("labels", labeled.len(), joined.len())?;
    let global_sentiment = SentimentCounts::from_labels(joined.iter().map(|(_, l)| *l));
    let profile = |key| sentiment_profile(joined.iter().map(|(m, l)| (*m, *l)), key);
    let entity_profiles = profile(GroupKey::Entity);
    let class_profiles = profile(GroupKey::Class);
    let subreddit_profiles = profile(GroupKey::Subreddit);
    let year_profiles = profile(GroupKey::Year);
    for (name, p) in [
        ("entity profiles", &entity_profiles),
        ("class profiles", &class_profiles),
        ("subreddit profiles", &subreddit_profiles),
        ("year profiles", &year_profiles),
    ] {
        reconcile(name, joined.len(), profile_total(p))?;
    }

    let mut by_entity: Vec<&SentimentProfile> = entity_profiles.iter().collect();
    by_entity.sort_by(|a, b| a.group.cmp(&b.group));
    let battery = run_asymmetry_battery(
        by_entity.iter().map(|p| (p.group.as_str(), p.counts.positive, p.counts.negative)),
    );
    let tested: u64 = battery.tested.iter().map(|r| r.non_neutral).sum();
    reconcile(
        "asymmetry battery",
        (global_sentiment.positive + global_sentiment.negative) as usize,
        tested as usize,
    )?;

    let class_table = class_table(&class_profiles, taxonomy);
    let rows: Vec<Vec<u64>> = class_table.counts.iter().map(SentimentCounts::as_row).collect();
    let (contingency, contingency_note) = match contingency_analysis(&rows) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let pairwise = if rows.len() >= 2 {
        pairwise_class_tests(&rows, &class_table.classes).map_err(|e| ReportError::Input(e.to_string()))?
    } else {
        Vec::new()
    };

    let annual = annual_share(&corpus.posts, partial_year);
    reconcile("annual series", corpus.len(), annual.iter().map(|y| y.posts).sum())?;
    let class_year = class_year_composition(mentions);
    reconcile("class by year", mentions.len(), class_year.iter().map(|c| c.mentions).sum())?;

    Ok(ReportBundle {
        cohort,
        frequencies,
        labeled_mentions: joined.len(),
        global_sentiment,
        entity_profiles,
        class_profiles,
        subreddit_profiles,
        year_profiles,
        battery,
        configured_entities: taxonomy.configured_entities(),
        class_table,
        contingency,
        contingency_note,
        pairwise,
        annual,
        class_year,
    })
}

fn class_table(profiles: &[SentimentProfile], taxonomy: &ClassTaxonomy) -> ClassTable {
    let mut rows: Vec<&SentimentProfile> = profiles.iter().collect();
    rows.sort_by_key(|p| (taxonomy.class_index(&p.group).unwrap_or(usize::MAX), p.group.clone()));
    ClassTable {
        classes: rows.iter().map(|p| p.group.clone()).collect(),
        counts: rows.iter().map(|p| p.counts).collect(),
    }
}

pub fn fmt_pct(share: f64) -> String {
    format!("{:.1}", share * 100.0)
}

pub fn fmt_prop(x: f64) -> String {
    format!("{x:.3}")
}

/// Scientific notation with three significant digits.
pub fn fmt_p(p: f64) -> String {
    format!("{p:.2e}")
}

fn tsv(path: &Path) -> Result<csv::Writer<fs::File>, ReportError> {
    Ok(csv::WriterBuilder::new().delimiter(b'\t').from_path(path)?)
}

fn write_profiles(path: &Path, profiles: &[SentimentProfile]) -> Result<(), ReportError> {
    let mut w = tsv(path)?;
    w.write_record(["group", "negative", "neutral", "positive", "total", "negative_pct", "neutral_pct", "positive_pct"])?;
    for p in profiles {
        w.write_record([
            p.group.clone(),
            p.counts.negative.to_string(),
            p.counts.neutral.to_string(),
            p.counts.positive.to_string(),
            p.counts.total().to_string(),
            fmt_pct(p.negative_share),
            fmt_pct(p.neutral_share),
            fmt_pct(p.positive_share),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_asymmetry<W: Write>(out: W, battery: &AsymmetryBattery) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["medication", "positive", "negative", "non_neutral", "p_hat", "ci_lower", "ci_upper", "p_raw", "p_fdr"])?;
    for r in &battery.tested {
        w.write_record([
            r.entity.clone(),
            r.positive.to_string(),
            r.negative.to_string(),
            r.non_neutral.to_string(),
            fmt_prop(r.p_hat),
            fmt_prop(r.ci_lower),
            fmt_prop(r.ci_upper),
            fmt_p(r.p_raw),
            r.p_fdr.map(fmt_p).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_default()
}

#[derive(Serialize)]
struct Summary<'a> {
    cohort: &'a CohortStats,
    mentioning_subscribers: usize,
    configured_entities: usize,
    entities_observed: usize,
    labeled_mentions: usize,
    global_sentiment: &'a SentimentCounts,
    global_sentiment_pct: Option<[String; 3]>,
    asymmetry_tested: usize,
    asymmetry_ineligible: &'a [String],
    contingency: Option<ContingencySummary>,
    contingency_note: &'a Option<String>,
    pairwise_tested: usize,
    pairwise_untested: usize,
}

#[derive(Serialize)]
struct ContingencySummary {
    rows: usize,
    chi2: f64,
    df: usize,
    p: String,
    cramers_v: String,
}

/// Writes every table plus `summary.json` into `dir`. Output is a pure
/// function of the bundle.
pub fn write_bundle(bundle: &ReportBundle, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;

    let mut w = tsv(&dir.join("frequencies.tsv"))?;
    w.write_record(["rank", "generic_name", "therapy_class", "mentions", "subscribers", "reach_pct"])?;
    for (i, r) in bundle.frequencies.rows.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.generic_name.clone(),
            r.therapy_class.clone(),
            r.mentions.to_string(),
            r.subscribers.to_string(),
            fmt_pct(r.reach),
        ])?;
    }
    w.flush()?;

    write_profiles(&dir.join("profiles_entity.tsv"), &bundle.entity_profiles)?;
    write_profiles(&dir.join("profiles_class.tsv"), &bundle.class_profiles)?;
    write_profiles(&dir.join("profiles_subreddit.tsv"), &bundle.subreddit_profiles)?;
    write_profiles(&dir.join("profiles_year.tsv"), &bundle.year_profiles)?;
    write_asymmetry(fs::File::create(dir.join("asymmetry.tsv"))?, &bundle.battery)?;

    let mut w = tsv(&dir.join("contingency.tsv"))?;
    w.write_record([
        "therapy_class", "negative", "neutral", "positive", "resid_negative", "resid_neutral", "resid_positive",
    ])?;
    for (i, (class, c)) in bundle.class_table.classes.iter().zip(&bundle.class_table.counts).enumerate() {
        let resid = |j: usize| bundle.contingency.as_ref().map(|r| format!("{:.3}", r.residuals[i][j])).unwrap_or_default();
        w.write_record([
            class.clone(),
            c.negative.to_string(),
            c.neutral.to_string(),
            c.positive.to_string(),
            resid(0),
            resid(1),
            resid(2),
        ])?;
    }
    w.flush()?;

    let mut w = tsv(&dir.join("pairwise.tsv"))?;
    w.write_record(["class_a", "class_b", "chi2", "df", "p_raw", "p_fdr", "untested_reason"])?;
    for r in &bundle.pairwise {
        w.write_record([
            r.row_a.clone(),
            r.row_b.clone(),
            r.chi2.map(|x| format!("{x:.3}")).unwrap_or_default(),
            r.df.to_string(),
            opt(r.p_raw, fmt_p),
            opt(r.p_fdr, fmt_p),
            r.untested_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = tsv(&dir.join("annual.tsv"))?;
    w.write_record(["year", "posts", "share_pct", "partial"])?;
    for y in &bundle.annual {
        w.write_record([y.year.to_string(), y.posts.to_string(), format!("{:.1}", y.share), y.partial.to_string()])?;
    }
    w.flush()?;

    let mut w = tsv(&dir.join("class_year.tsv"))?;
    w.write_record(["year", "therapy_class", "mentions", "share_pct"])?;
    for c in &bundle.class_year {
        w.write_record([c.year.to_string(), c.therapy_class.clone(), c.mentions.to_string(), format!("{:.1}", c.share)])?;
    }
    w.flush()?;

    let summary = Summary {
        cohort: &bundle.cohort,
        mentioning_subscribers: bundle.frequencies.mentioning_subscribers,
        configured_entities: bundle.configured_entities,
        entities_observed: bundle.frequencies.rows.len(),
        labeled_mentions: bundle.labeled_mentions,
        global_sentiment: &bundle.global_sentiment,
        global_sentiment_pct: bundle
            .global_sentiment
            .proportions()
            .ok()
            .map(|(a, b, c)| [fmt_pct(a), fmt_pct(b), fmt_pct(c)]),
        asymmetry_tested: bundle.battery.tested.len(),
        asymmetry_ineligible: &bundle.battery.ineligible,
        contingency: bundle.contingency.as_ref().map(|c| ContingencySummary {
            rows: c.table.len(),
            chi2: c.chi2,
            df: c.df,
            p: fmt_p(c.p),
            cramers_v: fmt_prop(c.cramers_v),
        }),
        contingency_note: &bundle.contingency_note,
        pairwise_tested: bundle.pairwise.iter().filter(|p| p.p_raw.is_some()).count(),
        pairwise_untested: bundle.pairwise.iter().filter(|p| p.p_raw.is_none()).count(),
    };
    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Label counts for the global profile; convenient for callers that only hold labels.
pub fn global_counts(labels: &[SentimentLabel]) -> SentimentCounts {
    SentimentCounts::from_labels(labels.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Post;
    use crate::matcher::Field;
    use crate::sentiment::LabelSource;

    const Y2020: i64 = 1_590_000_000;
    const Y2021: i64 = 1_620_000_000;

    fn mention(id: &str, post: &str, generic: &str, class: &str, ts: i64) -> Mention {
        Mention {
            mention_id: id.into(),
            post_id: post.into(),
            subreddit: "depression".into(),
            author: format!("a-{post}"),
            created_utc: ts,
            generic_name: generic.into(),
            therapy_class: class.into(),
            surface: generic.into(),
            field: Field::Body,
            start: 0,
            end: generic.len(),
            sentence_index: 0,
        }
    }

    #[test]
    fn class_year_shares() {
        let mut ms = Vec::new();
        for i in 0..3 {
            ms.push(mention(&format!("m{i}"), "p", "x", "A", Y2020));
        }
        for i in 3..10 {
            ms.push(mention(&format!("m{i}"), "p", "y", "B", Y2020));
        }
        ms.push(mention("m10", "q", "y", "B", Y2021));
        let c = class_year_composition(&ms);
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].year, c[0].share), (2020, 30.0));
        assert_eq!((c[1].therapy_class.as_str(), c[1].share), ("B", 70.0));
        assert_eq!((c[2].year, c[2].share), (2021, 100.0));
        assert!(class_year_composition(&[]).is_empty());
    }

    fn post(id: &str, ts: i64) -> Post {
        Post {
            post_id: id.into(),
            subreddit: "depression".into(),
            author_id: format!("a-{id}"),
            created_at: ts,
            title: String::new(),
            body: String::new(),
        }
    }

    fn taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::from_json(r#"{"classes":["A","B"],"assignments":{"x":"A","y":"B"}}"#).unwrap()
    }

    #[test]
    fn empty_labels_keep_cohort() {
        let corpus = Corpus { posts: vec![post("p", Y2020), post("q", Y2021)] };
        let ms = vec![mention("m0", "p", "x", "A", Y2020), mention("m1", "q", "y", "B", Y2021)];
        let b = build_report(&corpus, &ms, &[], &taxonomy(), None).unwrap();
        assert_eq!(b.cohort.post_count, 2);
        assert_eq!(b.global_sentiment.total(), 0);
        assert!(b.entity_profiles.is_empty() && b.battery.tested.is_empty());
        assert!(b.contingency.is_none() && b.contingency_note.is_some());
    }

    #[test]
    fn profile_order_and_unknown_label() {
        let corpus = Corpus { posts: vec![post("p", Y2020)] };
        let ms = vec![
            mention("m0", "p", "x", "A", Y2020),
            mention("m1", "p", "y", "B", Y2020),
            mention("m2", "p", "y", "B", Y2020),
        ];
        let lab = |id: &str, label| LabeledMention { mention_id: id.into(), label, confidence: 1.0, source: LabelSource::Rule };
        let labels = vec![
            lab("m0", SentimentLabel::Positive),
            lab("m1", SentimentLabel::Positive),
            lab("m2", SentimentLabel::Negative),
        ];
        let b = build_report(&corpus, &ms, &labels, &taxonomy(), None).unwrap();
        assert_eq!(b.entity_profiles[0].group, "x");
        assert_eq!(b.battery.tested.len(), 2);

        let bad = vec![lab("zz", SentimentLabel::Neutral)];
        assert!(matches!(build_report(&corpus, &ms, &bad, &taxonomy(), None), Err(ReportError::Input(_))));
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_p(2.0 * 0.5f64.powi(10)), "1.95e-3");
        assert_eq!(fmt_prop(0.80269), "0.803");
        assert_eq!(fmt_pct(0.14786), "14.8");
    }
}
