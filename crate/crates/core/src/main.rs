use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use medsent::context::{extract_window, ContextWindow, WindowRecord, DEFAULT_WINDOW_CHARS};
use medsent::corpus::{filter_trd, ingest, CollectionWindow, Corpus, KeywordLexicon};
use medsent::lexicon::{
    append_audit_log, build_variant_prompt, compile_lexicon, generate_misspelling_variants, merge_candidates,
    ClassTaxonomy, Lexicon, ReviewDecision,
};
use medsent::matcher::{match_corpus, read_mentions, write_mentions, Mention};
use medsent::report::{build_report, write_asymmetry, write_bundle};
use medsent::sentiment::{
    align_by_id, build_augmentation_prompt, classify_record, evaluate, ingest_predictions, join_labels,
    read_labeled, read_predictions, sample_for_review, write_labeled, AugmentationInstance, CueLists, LabelSource,
    PredictionRecord,
};
use medsent::stats::{run_asymmetry_battery, sentiment_profile, GroupKey};

/// Medication mention mining and target-level sentiment statistics.
#[derive(Parser)]
#[command(name = "medsent", version)]
struct Cli {
    /// Seed for every random choice (bootstrap, review sampling).
    #[arg(long, global = true, default_value_t = 20_250_731)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw posts and write a clean corpus plus an ingest report.
    Ingest {
        /// Raw posts, one JSON object per line.
        #[arg(long)]
        input: PathBuf,
        /// Clean corpus output (JSON lines).
        #[arg(long)]
        output: PathBuf,
        /// Ingest report output (JSON).
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Keep posts that contain at least one TRD keyword phrase.
    Filter {
        /// Clean corpus (JSON lines).
        #[arg(long)]
        input: PathBuf,
        /// Keyword file (category<TAB>phrase); the bundled list when omitted.
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Filtered corpus output (JSON lines).
        #[arg(long)]
        output: PathBuf,
    },
    /// Find and normalize medication mentions.
    Match {
        /// Corpus (JSON lines).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        lexicon: LexiconArgs,
        /// Mentions output (TSV).
        #[arg(long)]
        output: PathBuf,
    },
    /// Extract masked context windows around each mention.
    Window {
        /// Corpus the mentions were found in (JSON lines).
        #[arg(long)]
        posts: PathBuf,
        /// Mentions (TSV).
        #[arg(long)]
        mentions: PathBuf,
        /// Character budget per window.
        #[arg(long, default_value_t = DEFAULT_WINDOW_CHARS)]
        max_chars: usize,
        /// Windows output (JSON lines).
        #[arg(long)]
        output: PathBuf,
    },
    /// Label windows with the cue-counting reference classifier.
    ClassifyRule {
        /// Windows (JSON lines).
        #[arg(long)]
        windows: PathBuf,
        /// Positive cue list; the bundled list when omitted.
        #[arg(long)]
        positive_cues: Option<PathBuf>,
        /// Negative cue list; the bundled list when omitted.
        #[arg(long)]
        negative_cues: Option<PathBuf>,
        /// Predictions output (JSON lines).
        #[arg(long)]
        output: PathBuf,
    },
    /// Join a predictions file to the mention set.
    IngestPredictions {
        /// Mentions (TSV).
        #[arg(long)]
        mentions: PathBuf,
        /// Predictions (JSON lines).
        #[arg(long)]
        predictions: PathBuf,
        /// Where the predictions came from.
        #[arg(long, value_enum, default_value_t = SourceArg::External)]
        source: SourceArg,
        /// Labeled mentions output (TSV).
        #[arg(long)]
        output: PathBuf,
        /// Completeness report output (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score predictions against gold labels with a bootstrap CI.
    Evaluate {
        /// Gold labels (JSON lines, predictions format).
        #[arg(long)]
        gold: PathBuf,
        /// Predicted labels (JSON lines).
        #[arg(long)]
        predicted: PathBuf,
        /// Bootstrap resamples.
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        /// Confidence level of the bootstrap interval.
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        /// Report output (JSON); stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact binomial asymmetry tests with BH-FDR.
    Stats {
        /// Count pairs (TSV: medication, positive, negative) instead of labeled data.
        #[arg(long, conflicts_with_all = ["mentions", "labeled"])]
        pairs: Option<PathBuf>,
        /// Mentions (TSV).
        #[arg(long, requires = "labeled")]
        mentions: Option<PathBuf>,
        /// Labeled mentions (TSV).
        #[arg(long, requires = "mentions")]
        labeled: Option<PathBuf>,
        /// Table output (TSV); stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the full report bundle.
    Report {
        /// Corpus (JSON lines).
        #[arg(long)]
        posts: PathBuf,
        /// Mentions (TSV).
        #[arg(long)]
        mentions: PathBuf,
        /// Labeled mentions (TSV); sentiment sections stay empty when omitted.
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// Taxonomy (JSON); the bundled taxonomy when omitted.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
        /// Output directory.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Draw a reproducible spot-check sample of labeled mentions.
    SampleReview {
        /// Labeled mentions (TSV).
        #[arg(long)]
        labeled: PathBuf,
        /// Windows (JSON lines).
        #[arg(long)]
        windows: PathBuf,
        /// Sample size.
        #[arg(long)]
        n: usize,
        /// Review sheet output (TSV).
        #[arg(long)]
        output: PathBuf,
    },
    /// Validate and normalize a lexicon; prints its statistics.
    LexiconCompile {
        #[command(flatten)]
        lexicon: LexiconArgs,
        /// Normalized lexicon output (JSON lines).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Propose misspelling variants from a corpus vocabulary and merge reviewed ones.
    LexiconVariants {
        /// Generic name to expand.
        #[arg(long)]
        generic: String,
        /// Vocabulary, one token or phrase per line.
        #[arg(long)]
        vocab: PathBuf,
        /// Maximum edit distance.
        #[arg(long, default_value_t = 2)]
        max_distance: usize,
        /// Review decisions (TSV: candidate, accept|reject). Without it only candidates are listed.
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[command(flatten)]
        lexicon: LexiconArgs,
        /// Merged lexicon output (JSON lines).
        #[arg(long, requires = "decisions")]
        output: Option<PathBuf>,
        /// Audit log to append to.
        #[arg(long, requires = "decisions")]
        audit_log: Option<PathBuf>,
        /// Timestamp recorded in the audit log; current UTC time when omitted.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Render generation prompts.
    #[command(subcommand)]
    Prompts(PromptCommand),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Filter { .. } => "filter",
            Command::Match { .. } => "match",
            Command::Window { .. } => "window",
            Command::ClassifyRule { .. } => "classify-rule",
            Command::IngestPredictions { .. } => "ingest-predictions",
            Command::Evaluate { .. } => "evaluate",
            Command::Stats { .. } => "stats",
            Command::Report { .. } => "report",
            Command::SampleReview { .. } => "sample-review",
            Command::LexiconCompile { .. } => "lexicon-compile",
            Command::LexiconVariants { .. } => "lexicon-variants",
            Command::Prompts(_) => "prompts",
        }
    }
}

#[derive(Subcommand)]
enum PromptCommand {
    /// Variant-discovery prompt for one therapy.
    Variant {
        /// Generic name.
        #[arg(long)]
        generic: String,
        /// Usage examples, one per line.
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Augmentation prompts for labeled training instances.
    Augmentation {
        /// Instances (JSON lines: text, target_start, target_end, label).
        #[arg(long)]
        instances: PathBuf,
        /// Prompts output (JSON lines).
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct WindowArgs {
    /// Last collection day (YYYY-MM-DD).
    #[arg(long, default_value = "2025-07-31")]
    end_date: NaiveDate,
}

#[derive(Args)]
struct LexiconArgs {
    /// Lexicon (JSON lines); the bundled lexicon when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Taxonomy (JSON); the bundled taxonomy when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    External,
    Rule,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn or_bundled(path: &Option<PathBuf>, bundled: &str) -> Result<String> {
    path.as_deref().map_or_else(|| Ok(bundled.to_owned()), read_text)
}

fn load_taxonomy(path: &Option<PathBuf>) -> Result<ClassTaxonomy> {
    Ok(ClassTaxonomy::from_json(&or_bundled(path, medsent::BUNDLED_TAXONOMY)?)?)
}

fn load_lexicon(args: &LexiconArgs) -> Result<Lexicon> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    Ok(compile_lexicon(&or_bundled(&args.lexicon, medsent::BUNDLED_LEXICON)?, &taxonomy)?)
}

/// Reads an already-clean corpus; any rejected line is an error here.
fn load_corpus(path: &Path) -> Result<Corpus> {
    let window = CollectionWindow { start: i64::MIN, end: i64::MAX };
    let (corpus, report) = ingest(open(path)?, &window)?;
    if let Some(issue) = report.errors.first() {
        bail!("{}: line {}: {}", path.display(), issue.line_no, issue.error);
    }
    Ok(corpus)
}

fn load_mentions(path: &Path) -> Result<Vec<Mention>> {
    read_mentions(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
        }
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { input, output, report, window } => {
            let (corpus, rep) = ingest(open(&input)?, &CollectionWindow::ending(window.end_date))?;
            let mut w = create(&output)?;
            corpus.write_jsonl(&mut w)?;
            w.flush()?;
            write_json(Some(&report), &rep)?;
        }
        Command::Filter { input, keywords, output } => {
            let corpus = load_corpus(&input)?;
            let keywords = KeywordLexicon::parse(&or_bundled(&keywords, medsent::BUNDLED_KEYWORDS)?)?;
            let kept = Corpus { posts: filter_trd(&corpus, &keywords).into_iter().map(|t| t.post).collect() };
            let mut w = create(&output)?;
            kept.write_jsonl(&mut w)?;
            w.flush()?;
        }
        Command::Match { input, lexicon, output } => {
            let lexicon = load_lexicon(&lexicon)?;
            let corpus = load_corpus(&input)?;
            write_mentions(create(&output)?, &match_corpus(&corpus.posts, &lexicon))?;
        }
        Command::Window { posts, mentions, max_chars, output } => {
            let corpus = load_corpus(&posts)?;
            let by_id: BTreeMap<&str, _> = corpus.posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
            let windows = load_mentions(&mentions)?
                .iter()
                .map(|m| {
                    let post = by_id.get(m.post_id.as_str()).with_context(|| format!("no post {}", m.post_id))?;
                    Ok(extract_window(post, m, max_chars)?)
                })
                .collect::<Result<Vec<ContextWindow>>>()?;
            write_jsonl(&output, &windows)?;
        }
        Command::ClassifyRule { windows, positive_cues, negative_cues, output } => {
            let cues = CueLists::parse(
                &or_bundled(&positive_cues, medsent::BUNDLED_POSITIVE_CUES)?,
                &or_bundled(&negative_cues, medsent::BUNDLED_NEGATIVE_CUES)?,
            );
            let preds: Vec<PredictionRecord> = read_jsonl::<WindowRecord>(&windows)?
                .iter()
                .map(|w| PredictionRecord::from(&classify_record(w, &cues)))
                .collect();
            write_jsonl(&output, &preds)?;
        }
        Command::IngestPredictions { mentions, predictions, source, output, report } => {
            let mentions = load_mentions(&mentions)?;
            let source = match source {
                SourceArg::External => LabelSource::External,
                SourceArg::Rule => LabelSource::Rule,
            };
            let (labeled, rep) = ingest_predictions(open(&predictions)?, &mentions, source)?;
            write_labeled(create(&output)?, &labeled)?;
            if let Some(path) = report {
                write_json(Some(&path), &rep)?;
            }
        }
        Command::Evaluate { gold, predicted, resamples, ci_level, output } => {
            let gold = read_predictions(open(&gold)?)?;
            let predicted = read_predictions(open(&predicted)?)?;
            let (g, p) = align_by_id(&gold, &predicted)?;
            write_json(output.as_deref(), &evaluate(&g, &p, resamples, ci_level, seed)?)?;
        }
        Command::Stats { pairs, mentions, labeled, output } => {
            let counts: Vec<(String, u64, u64)> = match (pairs, mentions, labeled) {
                (Some(pairs), _, _) => read_pairs(&pairs)?,
                (None, Some(m), Some(l)) => {
                    let mentions = load_mentions(&m)?;
                    let labeled = read_labeled(open(&l)?)?;
                    let mut profiles = sentiment_profile(join_labels(&mentions, &labeled), GroupKey::Entity);
                    profiles.sort_by(|a, b| a.group.cmp(&b.group));
                    profiles.into_iter().map(|p| (p.group, p.counts.positive, p.counts.negative)).collect()
                }
                _ => bail!("stats needs --pairs or both --mentions and --labeled"),
            };
            let battery = run_asymmetry_battery(counts.iter().map(|(e, x, y)| (e.as_str(), *x, *y)));
            match output {
                Some(path) => write_asymmetry(create(&path)?, &battery)?,
                None => write_asymmetry(io::stdout().lock(), &battery)?,
            }
        }
        Command::Report { posts, mentions, labeled, taxonomy, window, output_dir } => {
            let corpus = load_corpus(&posts)?;
            let mentions = load_mentions(&mentions)?;
            let labeled = match labeled {
                Some(path) => read_labeled(open(&path)?)?,
                None => Vec::new(),
            };
            let taxonomy = load_taxonomy(&taxonomy)?;
            let partial = CollectionWindow::ending(window.end_date).partial_year();
            let bundle = build_report(&corpus, &mentions, &labeled, &taxonomy, partial)?;
            write_bundle(&bundle, &output_dir)?;
        }
        Command::SampleReview { labeled, windows, n, output } => {
            let labeled = read_labeled(open(&labeled)?)?;
            let windows: Vec<WindowRecord> = read_jsonl(&windows)?;
            let rows = sample_for_review(&labeled, &windows, n, seed)?;
            let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(create(&output)?);
            if rows.is_empty() {
                w.write_record(["mention_id", "masked_text", "label", "confidence"])?;
            }
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Command::LexiconCompile { lexicon, output } => {
            let lexicon = load_lexicon(&lexicon)?;
            if let Some(path) = output {
                let mut w = create(&path)?;
                w.write_all(lexicon.to_jsonl().as_bytes())?;
                w.flush()?;
            }
            write_json(None, &lexicon.stats())?;
        }
        Command::LexiconVariants {
            generic,
            vocab,
            max_distance,
            decisions,
            lexicon,
            output,
            audit_log,
            timestamp,
        } => {
            let lex = load_lexicon(&lexicon)?;
            let vocab = read_text(&vocab)?;
            let candidates = generate_misspelling_variants(&generic, vocab.lines(), max_distance);
            let Some(decisions) = decisions else {
                let mut out = io::stdout().lock();
                for c in &candidates {
                    writeln!(out, "{c}")?;
                }
                return Ok(());
            };
            let decisions = read_decisions(&decisions)?;
            let timestamp = timestamp.unwrap_or_else(|| chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string());
            let (merged, audit) = merge_candidates(&lex, &generic, &candidates, &decisions, &timestamp)?;
            if let Some(path) = audit_log {
                let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
                append_audit_log(&mut f, &audit)?;
            }
            if let Some(path) = output {
                let mut w = create(&path)?;
                w.write_all(merged.to_jsonl().as_bytes())?;
                w.flush()?;
            }
        }
        Command::Prompts(PromptCommand::Variant { generic, examples }) => {
            let examples: Vec<String> = match examples {
                Some(p) => read_text(&p)?.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect(),
                None => Vec::new(),
            };
            write_json(None, &build_variant_prompt(&generic, &examples))?;
        }
        Command::Prompts(PromptCommand::Augmentation { instances, output }) => {
            let prompts = read_jsonl::<AugmentationInstance>(&instances)?
                .iter()
                .map(build_augmentation_prompt)
                .collect::<Result<Vec<_>, _>>()?;
            write_jsonl(&output, &prompts)?;
        }
    }
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(String, u64, u64)>> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let (name, x, y): (String, u64, u64) = rec.with_context(|| format!("reading {}", path.display()))?;
        out.push((name, x, y));
    }
    Ok(out)
}

fn read_decisions(path: &Path) -> Result<BTreeMap<String, ReviewDecision>> {
    let mut out = BTreeMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (cand, decision) = line
            .split_once('\t')
            .with_context(|| format!("{}: line {}: expected candidate<TAB>decision", path.display(), i + 1))?;
        let decision = match decision.trim() {
            "accept" => ReviewDecision::Accept,
            "reject" => ReviewDecision::Reject,
            other => bail!("{}: line {}: unknown decision {other:?}", path.display(), i + 1),
        };
        out.insert(cand.trim().to_owned(), decision);
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}"), "command": command });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
