//! Therapy lexicon: every surface form maps to exactly one generic-name entity.
//!
//! Lexicon files are JSON lines, one record per entity:
//!
//! ```text
//! {"generic_name": "ketamine", "therapy_class": "NMDA / rapid-acting", "variants": ["ketamin", "ket"]}
//! ```
//!
//! `therapy_class` may be omitted, in which case the taxonomy assignment is
//! used. `is_neuromodulation` is optional and defaults to `false`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_phrase;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("ambiguous surface {surface:?} claimed by {entity_a} and {entity_b}")]
    AmbiguousSurface { surface: String, entity_a: String, entity_b: String },
    #[error("entity {0:?} has no variants")]
    EmptyEntity(String),
    #[error("taxonomy has no class assignment for {0:?}")]
    MissingClass(String),
    #[error("entity {entity:?} declares class {declared:?} but taxonomy assigns {assigned:?}")]
    ClassMismatch { entity: String, declared: String, assigned: String },
    #[error("class {class:?} assigned to {entity:?} is not in the taxonomy")]
    UnknownClass { entity: String, class: String },
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("entity {0:?} defined twice")]
    DuplicateEntity(String),
    #[error("surface {0:?} must start and end with an alphanumeric character")]
    UnmatchableSurface(String),
    #[error("no review decision for candidate {0:?}")]
    MissingDecision(String),
    #[error("lexicon has no entities")]
    NoEntities,
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("taxonomy: {0}")]
    Taxonomy(String),
}

pub type Result<T> = std::result::Result<T, LexiconError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    pub classes: Vec<String>,
    pub assignments: BTreeMap<String, String>,
}

impl ClassTaxonomy {
    pub fn from_json(source: &str) -> Result<Self> {
        let raw: ClassTaxonomy =
            serde_json::from_str(source).map_err(|e| LexiconError::Taxonomy(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for c in &raw.classes {
            if c.trim().is_empty() || !seen.insert(c.as_str()) {
                return Err(LexiconError::Taxonomy(format!("empty or duplicate class {c:?}")));
            }
        }
        let assignments = raw
            .assignments
            .into_iter()
            .map(|(g, c)| (normalize_phrase(&g), c))
            .collect::<BTreeMap<_, _>>();
        for (entity, class) in &assignments {
            if !seen.contains(class.as_str()) {
                return Err(LexiconError::UnknownClass { entity: entity.clone(), class: class.clone() });
            }
        }
        Ok(ClassTaxonomy { classes: raw.classes, assignments })
    }

    pub fn class_of(&self, generic_name: &str) -> Option<&str> {
        self.assignments.get(generic_name).map(String::as_str)
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Number of entities configured in the taxonomy, observed in text or not.
    pub fn configured_entities(&self) -> usize {
        self.assignments.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MedicationEntity {
    pub generic_name: String,
    pub therapy_class: String,
    pub variants: BTreeSet<String>,
    pub is_neuromodulation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconStats {
    pub entity_count: usize,
    pub variant_count: usize,
    pub median_variants: f64,
    pub min_variants: usize,
    pub max_variants: usize,
    pub configured_entities: usize,
}

#[derive(Debug, Deserialize)]
struct LexiconRecord {
    generic_name: String,
    #[serde(default)]
    therapy_class: Option<String>,
    variants: Vec<String>,
    #[serde(default)]
    is_neuromodulation: bool,
}

#[derive(Serialize)]
struct LexiconRecordOut<'a> {
    generic_name: &'a str,
    therapy_class: &'a str,
    variants: &'a BTreeSet<String>,
    is_neuromodulation: bool,
}

/// Compiled, immutable lexicon with its surface automaton.
#[derive(Clone)]
pub struct Lexicon {
    entities: Vec<MedicationEntity>,
    surface_index: BTreeMap<String, usize>,
    taxonomy: ClassTaxonomy,
    surfaces: Vec<String>,
    automaton: AhoCorasick,
}

impl fmt::Debug for Lexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lexicon")
            .field("entities", &self.entities.len())
            .field("surfaces", &self.surface_index.len())
            .finish()
    }
}

fn surface_is_matchable(s: &str) -> bool {
    let ok = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    ok(s.chars().next()) && ok(s.chars().last())
}

impl Lexicon {
    fn build(mut entities: Vec<MedicationEntity>, taxonomy: ClassTaxonomy) -> Result<Self> {
        if entities.is_empty() {
            return Err(LexiconError::NoEntities);
        }
        entities.sort_by(|a, b| a.generic_name.cmp(&b.generic_name));
        let mut surface_index: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, entity) in entities.iter().enumerate() {
            for surface in &entity.variants {
                if !surface_is_matchable(surface) {
                    return Err(LexiconError::UnmatchableSurface(surface.clone()));
                }
                if let Some(&other) = surface_index.get(surface) {
                    return Err(LexiconError::AmbiguousSurface {
                        surface: surface.clone(),
                        entity_a: entities[other].generic_name.clone(),
                        entity_b: entity.generic_name.clone(),
                    });
                }
                surface_index.insert(surface.clone(), idx);
            }
        }
        let surfaces: Vec<String> = surface_index.keys().cloned().collect();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&surfaces)
            .expect("lexicon automaton");
        Ok(Lexicon { entities, surface_index, taxonomy, surfaces, automaton })
    }

    pub fn entities(&self) -> &[MedicationEntity] {
        &self.entities
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }

    pub fn entity(&self, generic_name: &str) -> Option<&MedicationEntity> {
        self.entities
            .binary_search_by(|e| e.generic_name.as_str().cmp(generic_name))
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn surface_index(&self) -> impl Iterator<Item = (&str, &MedicationEntity)> {
        self.surface_index.iter().map(|(s, &i)| (s.as_str(), &self.entities[i]))
    }

    /// Maps a surface form (any casing) to its entity.
    pub fn normalize(&self, surface: &str) -> Option<&MedicationEntity> {
        self.surface_index.get(&normalize_phrase(surface)).map(|&i| &self.entities[i])
    }

    pub(crate) fn automaton(&self) -> &AhoCorasick {
        &self.automaton
    }

    pub(crate) fn pattern_entity(&self, pattern: usize) -> &MedicationEntity {
        &self.entities[self.surface_index[&self.surfaces[pattern]]]
    }

    pub fn stats(&self) -> LexiconStats {
        let mut sizes: Vec<usize> = self.entities.iter().map(|e| e.variants.len()).collect();
        sizes.sort_unstable();
        let n = sizes.len();
        let median = if n % 2 == 1 {
            sizes[n / 2] as f64
        } else {
            (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0
        };
        LexiconStats {
            entity_count: n,
            variant_count: self.surface_index.len(),
            median_variants: median,
            min_variants: sizes[0],
            max_variants: sizes[n - 1],
            configured_entities: self.taxonomy.configured_entities(),
        }
    }

    /// Serializes to the lexicon file format; variants include the generic name.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            let rec = LexiconRecordOut {
                generic_name: &e.generic_name,
                therapy_class: &e.therapy_class,
                variants: &e.variants,
                is_neuromodulation: e.is_neuromodulation,
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable record"));
            out.push('\n');
        }
        out
    }
}

/// Parses and validates a lexicon file against a class taxonomy.
pub fn compile_lexicon(source: &str, taxonomy: &ClassTaxonomy) -> Result<Lexicon> {
    let mut entities = Vec::new();
    let mut names = BTreeSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: LexiconRecord = serde_json::from_str(line)
            .map_err(|e| LexiconError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        let generic_name = normalize_phrase(&rec.generic_name);
        if generic_name.is_empty() {
            return Err(LexiconError::MalformedRecord { line: i + 1, reason: "empty generic_name".into() });
        }
        if !names.insert(generic_name.clone()) {
            return Err(LexiconError::DuplicateEntity(generic_name));
        }
        let mut variants: BTreeSet<String> = rec
            .variants
            .iter()
            .map(|v| normalize_phrase(v))
            .filter(|v| !v.is_empty())
            .collect();
        if variants.is_empty() {
            return Err(LexiconError::EmptyEntity(generic_name));
        }
        variants.insert(generic_name.clone());
        let assigned = taxonomy
            .class_of(&generic_name)
            .ok_or_else(|| LexiconError::MissingClass(generic_name.clone()))?
            .to_owned();
        if let Some(declared) = rec.therapy_class {
            if declared != assigned {
                return Err(LexiconError::ClassMismatch { entity: generic_name, declared, assigned });
            }
        }
        entities.push(MedicationEntity {
            generic_name,
            therapy_class: assigned,
            variants,
            is_neuromodulation: rec.is_neuromodulation,
        });
    }
    Lexicon::build(entities, taxonomy.clone())
}

/// Levenshtein distance over chars, giving up once every cell of a row exceeds `bound`.
pub fn bounded_levenshtein(a: &str, b: &str, bound: usize) -> Option<usize> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len().abs_diff(b.len()) > bound {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        if cur.iter().all(|&d| d > bound) {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Some(prev[b.len()]).filter(|&d| d <= bound)
}

/// Corpus tokens within `max_edit_distance` of `generic_name`, excluding the
/// name itself, in lexicographic order.
pub fn generate_misspelling_variants<'a, I>(
    generic_name: &str,
    corpus_vocabulary: I,
    max_edit_distance: usize,
) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let target = normalize_phrase(generic_name);
    let found: BTreeSet<String> = corpus_vocabulary
        .into_iter()
        .map(normalize_phrase)
        .filter(|t| !t.is_empty() && *t != target)
        .filter(|t| bounded_levenshtein(&target, t, max_edit_distance).is_some())
        .collect();
    found.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewDecision {
    Accept,
    Reject,
}

impl fmt::Display for ReviewDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewDecision::Accept => "accept",
            ReviewDecision::Reject => "reject",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub timestamp: String,
    pub entity: String,
    pub candidate: String,
    pub decision: ReviewDecision,
}

impl AuditEntry {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.timestamp, self.entity, self.candidate, self.decision)
    }
}

pub fn append_audit_log<W: Write>(out: &mut W, entries: &[AuditEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(out, "{}", e.to_line())?;
    }
    Ok(())
}

/// Applies manual review decisions for one entity's candidates.
///
/// Returns the re-validated lexicon and one audit entry per candidate.
pub fn merge_candidates(
    lexicon: &Lexicon,
    entity: &str,
    candidates: &[String],
    review_decisions: &BTreeMap<String, ReviewDecision>,
    timestamp: &str,
) -> Result<(Lexicon, Vec<AuditEntry>)> {
    let entity = normalize_phrase(entity);
    let idx = lexicon
        .entities
        .iter()
        .position(|e| e.generic_name == entity)
        .ok_or_else(|| LexiconError::UnknownEntity(entity.clone()))?;
    let mut entities = lexicon.entities.clone();
    let mut audit = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let decision = review_decisions
            .get(candidate)
            .copied()
            .ok_or_else(|| LexiconError::MissingDecision(candidate.clone()))?;
        let surface = normalize_phrase(candidate);
        if decision == ReviewDecision::Accept && !surface.is_empty() {
            entities[idx].variants.insert(surface);
        }
        audit.push(AuditEntry {
            timestamp: timestamp.to_owned(),
            entity: entity.clone(),
            candidate: candidate.clone(),
            decision,
        });
    }
    let merged = Lexicon::build(entities, lexicon.taxonomy.clone())?;
    Ok((merged, audit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

pub const VARIANT_DECODING: DecodingParams = DecodingParams { temperature: 0.2, top_p: 0.9, max_new_tokens: 220 };

pub const VARIANT_PROMPT_TEMPLATE: &str = "\
You are helping build a lexicon of medication names as they are written in social media posts.

Therapy: {{therapy}}

Examples of how people write about medications on Reddit and Twitter:
{{example}}

List the spelling variants, common misspellings, abbreviations, brand names, and colloquial names that people use for {{therapy}}.
Only list strings that refer to {{therapy}} and to no other medication.
Output one candidate per line in the format below, with no numbering and no explanations.

[variant]
[variant]
[variant]
";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantPrompt {
    pub therapy: String,
    pub prompt: String,
    pub decoding: DecodingParams,
}

pub fn build_variant_prompt(generic_name: &str, usage_examples: &[String]) -> VariantPrompt {
    let examples: String = usage_examples.iter().map(|e| format!("- {}\n", e.trim())).collect();
    let prompt = VARIANT_PROMPT_TEMPLATE
        .replace("{{therapy}}", generic_name)
        .replace("{{example}}\n", &examples);
    VariantPrompt { therapy: generic_name.to_owned(), prompt, decoding: VARIANT_DECODING }
}
