//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use medsent::context::segment_sentences;
use medsent::corpus::Post;
use medsent::lexicon::{compile_lexicon, ClassTaxonomy, Lexicon};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn fixture(name: &str) -> PathBuf {
    data_dir().join("fixtures").join(name)
}

pub fn taxonomy() -> ClassTaxonomy {
    ClassTaxonomy::from_json(medsent::BUNDLED_TAXONOMY).unwrap()
}

/// The first `n` entities of the bundled lexicon.
pub fn sub_lexicon(n: usize) -> Lexicon {
    let src: String = medsent::BUNDLED_LEXICON.lines().take(n).map(|l| format!("{l}\n")).collect();
    compile_lexicon(&src, &taxonomy()).unwrap()
}

pub fn post(id: &str, title: &str, body: &str) -> Post {
    Post {
        post_id: id.into(),
        subreddit: "TRD".into(),
        author_id: format!("u-{id}"),
        created_at: 1_650_000_000,
        title: title.into(),
        body: body.into(),
    }
}

const FILLER: &[&str] = &[
    "the", "my", "doctor", "said", "week", "dose", "mg", "and", "then", "nothing", "help", "it's", "I", "was",
    "side", "effects", "tried", "café", "naïve", "İstanbul", "ﬁne", "ß", "x2", "50mg", "e.g.", "Dr.", "2.5",
    "re-started", "o’clock", "(", ")", "\"quoted\"", "/", ":", "-", "'", "’", "…", "😀",
];

const SEPARATORS: &[&str] = &[" ", " ", " ", "  ", ". ", "! ", "? ", "\n", ", ", "-", "'", "’", "/", "", " - "];

fn mutate_case(rng: &mut ChaCha8Rng, s: &str) -> String {
    match rng.gen_range(0..4) {
        0 => s.to_owned(),
        1 => s.to_uppercase(),
        2 => {
            let mut c = s.chars();
            c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
        }
        _ => s.chars().map(|c| if rng.gen_bool(0.5) { c.to_ascii_uppercase() } else { c }).collect(),
    }
}

/// Random post text up to `max_chars` characters built from lexicon surfaces,
/// surfaces glued inside longer tokens, filler words and punctuation.
pub fn fuzz_text(rng: &mut ChaCha8Rng, surfaces: &[String], max_chars: usize) -> String {
    let target = rng.gen_range(0..=max_chars);
    let mut out = String::new();
    loop {
        let piece = match rng.gen_range(0..10) {
            0..=3 => {
                let s = surfaces.choose(rng).unwrap();
                mutate_case(rng, s)
            }
            4 => {
                let s = surfaces.choose(rng).unwrap();
                match rng.gen_range(0..4) {
                    0 => format!("x{s}"),
                    1 => format!("{s}s"),
                    2 => format!("{s}-ish"),
                    _ => format!("un{s}9"),
                }
            }
            _ => FILLER.choose(rng).unwrap().to_string(),
        };
        let sep = *SEPARATORS.choose(rng).unwrap();
        if out.chars().count() + piece.chars().count() + sep.chars().count() > target {
            break;
        }
        out.push_str(&piece);
        out.push_str(sep);
    }
    out
}

pub fn fuzz_posts(seed: u64, count: usize, lexicon: &Lexicon, max_chars: usize) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces: Vec<String> = lexicon.surface_index().map(|(s, _)| s.to_owned()).collect();
    (0..count)
        .map(|i| {
            let title_len = rng.gen_range(0..=80);
            let title = fuzz_text(&mut rng, &surfaces, title_len);
            let body = fuzz_text(&mut rng, &surfaces, max_chars - title.chars().count());
            post(&format!("p{i:04}"), &title, &body)
        })
        .collect()
}

fn oracle_fold(c: char) -> char {
    if c == '’' {
        return '\'';
    }
    let lower: Vec<char> = c.to_lowercase().collect();
    if lower.len() == 1 {
        lower[0]
    } else {
        c
    }
}

fn is_join(c: char) -> bool {
    c == '-' || c == '\'' || c == '’'
}

/// Whether char index `i` begins a token: alphanumeric and not glued to a
/// preceding alphanumeric, directly or through a joiner.
fn token_start(chars: &[char], i: usize) -> bool {
    if i >= chars.len() || !chars[i].is_alphanumeric() {
        return false;
    }
    if i == 0 {
        return true;
    }
    let p = chars[i - 1];
    if p.is_alphanumeric() {
        return false;
    }
    !(is_join(p) && i >= 2 && chars[i - 2].is_alphanumeric())
}

/// Whether char index `i` is one past a token end.
fn token_end(chars: &[char], i: usize) -> bool {
    if i == 0 || !chars[i - 1].is_alphanumeric() {
        return false;
    }
    match chars.get(i) {
        None => true,
        Some(c) if c.is_alphanumeric() => false,
        Some(&c) => !(is_join(c) && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())),
    }
}

/// Brute-force scanner: every char offset against every surface, whole-token
/// and same-sentence checks, then greedy longest-first, leftmost selection.
/// Returns `(start_byte, end_byte, generic_name)` in text order.
pub fn oracle_matches(text: &str, lexicon: &Lexicon) -> Vec<(usize, usize, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mut byte_at: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    byte_at.push(text.len());
    let sentences = segment_sentences(text);
    let sentence_of = |b: usize| sentences.iter().position(|&(s, e)| s <= b && b < e).unwrap();
    let folded: Vec<char> = chars.iter().map(|&c| oracle_fold(c)).collect();
    let surfaces: Vec<(Vec<char>, String)> = lexicon
        .surface_index()
        .map(|(s, e)| (s.chars().collect(), e.generic_name.clone()))
        .collect();

    let mut cands: Vec<(usize, usize, usize, String)> = Vec::new();
    for i in 0..chars.len() {
        if !token_start(&chars, i) {
            continue;
        }
        for (sc, name) in &surfaces {
            let j = i + sc.len();
            if j > chars.len() || folded[i..j] != sc[..] || !token_end(&chars, j) {
                continue;
            }
            if sentence_of(byte_at[i]) != sentence_of(byte_at[j] - 1) {
                continue;
            }
            cands.push((i, j, sc.len(), name.clone()));
        }
    }
    let mut chosen: Vec<(usize, usize, String)> = Vec::new();
    while !cands.is_empty() {
        let best = (0..cands.len())
            .max_by(|&a, &b| cands[a].2.cmp(&cands[b].2).then(cands[b].0.cmp(&cands[a].0)))
            .unwrap();
        let (s, e, _, name) = cands.swap_remove(best);
        chosen.push((s, e, name));
        cands.retain(|c| c.1 <= s || c.0 >= e);
    }
    chosen.sort();
    chosen.into_iter().map(|(s, e, n)| (byte_at[s], byte_at[e], n)).collect()
}

/// Two-sided minimum-likelihood binomial p with p0 = 1/2 from exact integer
/// pmf numerators `C(n, k)`.
pub fn brute_binomial_p(x: u64, n: u64) -> f64 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    let obs = row[x as usize];
    let tail: u128 = row.iter().filter(|&&c| c <= obs).sum();
    (tail as f64 / 2f64.powi(n as i32)).min(1.0)
}

/// Textbook Pearson chi-square with the tail from `statrs`.
pub fn textbook_chi_square(table: &[Vec<u64>]) -> (f64, usize, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let r = table.len();
    let c = table[0].len();
    let n: f64 = table.iter().flatten().map(|&x| x as f64).sum();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let ri: f64 = table[i].iter().map(|&x| x as f64).sum();
            let cj: f64 = table.iter().map(|row| row[j] as f64).sum();
            let e = ri * cj / n;
            stat += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let df = (r - 1) * (c - 1);
    let p = ChiSquared::new(df as f64).unwrap().sf(stat);
    (stat, df, p)
}

/// Step-up BH straight from the definition: adj(i) = min over ranks j >= rank(i)
/// of m p_(j) / j, capped at 1.
pub fn bh_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = vec![0.0; m];
    for (rank, &(_, idx)) in sorted.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, &(pj, _)) in sorted.iter().enumerate().skip(rank) {
            best = best.min((pj * m as f64 / (j + 1) as f64).max(pj));
        }
        out[idx] = best.min(1.0);
    }
    out
}

/// (medication, positive, negative, p_hat, ci_lower, ci_upper) as published.
pub const PUBLISHED_ASYMMETRY: &[(&str, u64, u64, f64, f64, f64)] = &[
    ("lisdexamfetamine", 179, 44, 0.803, 0.744, 0.853),
    ("sertraline", 52, 174, 0.230, 0.177, 0.291),
    ("venlafaxine", 46, 158, 0.225, 0.170, 0.289),
    ("mirtazapine", 49, 147, 0.250, 0.191, 0.317),
    ("pregabalin", 97, 28, 0.776, 0.693, 0.846),
    ("citalopram", 11, 47, 0.190, 0.099, 0.314),
    ("rtms", 97, 175, 0.357, 0.300, 0.417),
    ("ketamine", 496, 370, 0.573, 0.539, 0.606),
    ("fluoxetine", 55, 109, 0.335, 0.264, 0.413),
    ("bupropion", 127, 201, 0.387, 0.334, 0.442),
    ("ect", 132, 204, 0.393, 0.340, 0.447),
    ("vilazodone", 7, 30, 0.189, 0.080, 0.352),
    ("esketamine", 197, 131, 0.601, 0.545, 0.654),
    ("amphetamine-dextroamphetamine", 169, 110, 0.606, 0.546, 0.663),
    ("aripiprazole", 79, 127, 0.383, 0.317, 0.454),
    ("nefazodone", 10, 0, 1.000, 0.692, 1.000),
    ("phenelzine", 100, 62, 0.617, 0.538, 0.692),
    ("fluvoxamine", 4, 17, 0.190, 0.054, 0.419),
    ("quetiapine", 43, 73, 0.371, 0.283, 0.465),
    ("paroxetine", 13, 31, 0.295, 0.168, 0.452),
];

/// Runs the whole CLI pipeline on the bundled fixture and returns every
/// file of the report bundle keyed by name.
pub fn run_pipeline(dir: &Path, seed: u64) -> BTreeMap<String, Vec<u8>> {
    let bin = env!("CARGO_BIN_EXE_medsent");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let posts = fixture("posts.jsonl").to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["ingest".into(), "--input".into(), posts, "--output".into(), p("corpus.jsonl"), "--report".into(), p("ingest.json")],
        vec!["filter".into(), "--input".into(), p("corpus.jsonl"), "--output".into(), p("trd.jsonl")],
        vec!["match".into(), "--input".into(), p("trd.jsonl"), "--output".into(), p("mentions.tsv")],
        vec!["window".into(), "--posts".into(), p("trd.jsonl"), "--mentions".into(), p("mentions.tsv"), "--output".into(), p("windows.jsonl")],
        vec!["classify-rule".into(), "--windows".into(), p("windows.jsonl"), "--output".into(), p("predictions.jsonl")],
        vec![
            "ingest-predictions".into(), "--mentions".into(), p("mentions.tsv"), "--predictions".into(), p("predictions.jsonl"),
            "--source".into(), "rule".into(), "--output".into(), p("labeled.tsv"), "--report".into(), p("completeness.json"),
        ],
        vec![
            "evaluate".into(), "--gold".into(), fixture("gold.jsonl").to_string_lossy().into_owned(), "--predicted".into(),
            fixture("predictions.jsonl").to_string_lossy().into_owned(), "--output".into(), p("report/evaluation.json"),
        ],
        vec![
            "sample-review".into(), "--labeled".into(), p("labeled.tsv"), "--windows".into(), p("windows.jsonl"), "--n".into(),
            "5".into(), "--output".into(), p("report/review.tsv"),
        ],
        vec![
            "report".into(), "--posts".into(), p("trd.jsonl"), "--mentions".into(), p("mentions.tsv"), "--labeled".into(),
            p("labeled.tsv"), "--output-dir".into(), p("report"),
        ],
    ];
    for args in steps {
        let out = std::process::Command::new(bin)
            .args(&args)
            .args(["--seed", &seed.to_string()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir.join("report")).unwrap() {
        let entry = entry.unwrap();
        files.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).unwrap());
    }
    for name in ["mentions.tsv", "windows.jsonl", "predictions.jsonl", "labeled.tsv"] {
        files.insert(name.to_owned(), std::fs::read(dir.join(name)).unwrap());
    }
    files
}

/// Synthetic cohort of 5,059 posts carrying 23,399 lexicon mentions in
/// total; 981 posts fall in 2024.
pub fn engineered_cohort() -> Vec<Post> {
    let mut counts = vec![4usize; 5059];
    counts[0] = 142;
    for c in counts.iter_mut().skip(1).take(500) {
        *c = 0;
    }
    let mut remaining = 23_399 - counts.iter().sum::<usize>();
    for c in counts.iter_mut().skip(501) {
        if remaining == 0 {
            break;
        }
        let add = remaining.min(3);
        *c += add;
        remaining -= add;
    }
    let surfaces = ["ketamine", "Zoloft", "rTMS", "lithium", "Spravato", "wellbutrin xl"];
    const Y2023: i64 = 1_680_000_000;
    const Y2024: i64 = 1_710_000_000;
    counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let body = if k == 0 {
                "Nothing specific to report today.".to_owned()
            } else {
                (0..k).map(|j| format!("Day {j} on {}.", surfaces[(i + j) % surfaces.len()])).collect::<Vec<_>>().join(" ")
            };
            let mut p = post(&format!("c{i:05}"), "", &body);
            p.author_id = format!("u{}", i % 2700);
            p.created_at = if i % 5059 < 981 { Y2024 } else { Y2023 };
            p
        })
        .collect()
}
