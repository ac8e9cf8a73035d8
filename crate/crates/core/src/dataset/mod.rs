//! Positive hyponym/hypernym pairs from feature norms, the two matched
//! counterfactual sets, sentence instantiation and the TSV exchange format.

mod norms;
mod pattern;
mod tsv;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{LexicalDatabase, SynsetId};

pub use norms::{load_feature_norms, normalize_concept, normalize_feature, NormsFormat};
pub use pattern::{
    indefinite_article, instantiate_pattern, pattern, pluralize, Pattern, PATTERNS,
};
pub use tsv::{export_tsv, import_tsv, parse_tsv, to_tsv_string, HEADER};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("feature norms file {0} is empty")]
    EmptyNorms(PathBuf),
    #[error("{path}: column {column:?} not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: {message}")]
    Norms {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Tsv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("filler {0:?} is not a single token")]
    MultiWordFiller(String),
    #[error("refusing to write an empty dataset to {0}")]
    EmptyExport(PathBuf),
}

/// Which of the three matched sets a pair or sentence belongs to. The
/// discriminant is the class index used by the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetLabel {
    Positive = 0,
    Negative = 1,
    Sister = 2,
}

impl SetLabel {
    pub const ALL: [SetLabel; 3] = [SetLabel::Positive, SetLabel::Negative, SetLabel::Sister];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SetLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SetLabel::Positive => "positive",
            SetLabel::Negative => "negative",
            SetLabel::Sister => "sister",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            SetLabel::Positive => "positive.tsv",
            SetLabel::Negative => "negative.tsv",
            SetLabel::Sister => "sisters.tsv",
        }
    }
}

impl fmt::Display for SetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(SetLabel::Positive),
            "negative" | "neg" => Ok(SetLabel::Negative),
            "sister" | "sisters" | "sis" => Ok(SetLabel::Sister),
            other => Err(format!("unknown set label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormTriple {
    pub concept: String,
    pub feature: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NounPair {
    pub hyponym_raw: String,
    /// True hypernym for positives, the matched non-hypernym otherwise.
    pub hypernym_raw: String,
    pub set_label: SetLabel,
    /// `(hyponym, hypernym)` of the positive pair a counterfactual came from.
    pub origin: Option<(String, String)>,
    /// Synset the counterfactual filler was drawn from.
    pub filler_synset: Option<SynsetId>,
}

impl NounPair {
    pub fn positive(hyponym: impl Into<String>, hypernym: impl Into<String>) -> Self {
        NounPair {
            hyponym_raw: hyponym.into(),
            hypernym_raw: hypernym.into(),
            set_label: SetLabel::Positive,
            origin: None,
            filler_synset: None,
        }
    }

    fn counterfactual(from: &NounPair, filler: String, synset: SynsetId, label: SetLabel) -> Self {
        NounPair {
            hyponym_raw: from.hyponym_raw.clone(),
            hypernym_raw: filler,
            set_label: label,
            origin: Some((from.hyponym_raw.clone(), from.hypernym_raw.clone())),
            filler_synset: Some(synset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSentence {
    pub id: u64,
    pub pattern: u8,
    pub text: String,
    pub hyponym: String,
    pub hypernym: String,
    pub hyponym_raw: String,
    pub hypernym_raw: String,
    pub set_label: SetLabel,
}

const SUPERORDINATE: &str = "superordinate";

/// One positive pair per superordinate triple, deduplicated in input order.
pub fn extract_positive_pairs(norms: &[NormTriple]) -> Vec<NounPair> {
    let mut seen = HashSet::new();
    norms
        .iter()
        .filter(|t| t.relation.trim().eq_ignore_ascii_case(SUPERORDINATE))
        .map(|t| (normalize_concept(&t.concept), normalize_feature(&t.feature)))
        .filter(|(hypo, hyper)| !hypo.is_empty() && !hyper.is_empty() && hypo != hyper)
        .filter(|key| seen.insert(key.clone()))
        .map(|(hypo, hyper)| NounPair::positive(hypo, hyper))
        .collect()
}

fn lemma_key(word: &str) -> String {
    word.trim().to_lowercase().replace(' ', "_")
}

/// Synset pairs `(hypo, hyper)` containing the two lemmas where `hyper` is a
/// direct or inherited hypernym of `hypo`.
pub fn map_to_synsets(pair: &NounPair, db: &LexicalDatabase) -> Vec<(SynsetId, SynsetId)> {
    let hypo_key = lemma_key(&pair.hyponym_raw);
    let hyper_key = lemma_key(&pair.hypernym_raw);
    let hypers = db.synsets_of(&hyper_key);
    if hypers.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for hypo in db.synsets_of(&hypo_key) {
        let closure = db
            .hypernym_closure(&hypo.id)
            .expect("ids come from the database");
        for hyper in &hypers {
            if closure.contains(&hyper.id) {
                out.push((hypo.id.clone(), hyper.id.clone()));
            }
        }
    }
    out
}

/// Union of the hypernym closures of every synset of `lemma`.
pub fn closure_of_lemma(db: &LexicalDatabase, lemma: &str) -> HashSet<SynsetId> {
    db.synsets_of(&lemma_key(lemma))
        .iter()
        .flat_map(|s| db.hypernym_closure(&s.id).expect("ids come from the database"))
        .collect()
}

fn pick_filler(
    db: &LexicalDatabase,
    candidates: BTreeSet<SynsetId>,
    pair: &NounPair,
) -> Option<(String, SynsetId)> {
    if candidates.is_empty() {
        return None;
    }
    let candidates: Vec<SynsetId> = candidates.into_iter().collect();
    let hypo = lemma_key(&pair.hyponym_raw);
    let hyper = lemma_key(&pair.hypernym_raw);
    db.most_frequent_lemma_where(&candidates, |l| l != hypo && l != hyper)
        .expect("candidate ids come from the database")
}

/// Counterfactual at the hypernym's level of abstraction: the most frequent
/// lemma among sisters of the hypernym synsets that are not hypernyms of the
/// hyponym.
pub fn build_negative_pair(pair: &NounPair, db: &LexicalDatabase) -> Option<NounPair> {
    debug_assert_eq!(pair.set_label, SetLabel::Positive);
    let mapping = map_to_synsets(pair, db);
    if mapping.is_empty() {
        return None;
    }
    let hypo_key = lemma_key(&pair.hyponym_raw);
    let blocked = closure_of_lemma(db, &pair.hyponym_raw);
    let mut candidates = BTreeSet::new();
    let hyper_synsets: BTreeSet<&SynsetId> = mapping.iter().map(|(_, h)| h).collect();
    for hyper in hyper_synsets {
        for sister in db.sister_terms(hyper).expect("ids come from the database") {
            let synset = db.get(&sister).expect("sister ids resolve");
            if !blocked.contains(&sister) && !synset.has_lemma(&hypo_key) {
                candidates.insert(sister);
            }
        }
    }
    let (filler, synset) = pick_filler(db, candidates, pair)?;
    Some(NounPair::counterfactual(pair, filler, synset, SetLabel::Negative))
}

/// Counterfactual matched on similarity: the most frequent lemma among sister
/// synsets of the hyponym.
pub fn build_sister_pair(pair: &NounPair, db: &LexicalDatabase) -> Option<NounPair> {
    debug_assert_eq!(pair.set_label, SetLabel::Positive);
    let mapping = map_to_synsets(pair, db);
    if mapping.is_empty() {
        return None;
    }
    let hypo_key = lemma_key(&pair.hyponym_raw);
    let hyper_key = lemma_key(&pair.hypernym_raw);
    let mut candidates = BTreeSet::new();
    let hypo_synsets: BTreeSet<&SynsetId> = mapping.iter().map(|(h, _)| h).collect();
    for hypo in hypo_synsets {
        for sister in db.sister_terms(hypo).expect("ids come from the database") {
            let synset = db.get(&sister).expect("sister ids resolve");
            if !synset.has_lemma(&hypo_key) && !synset.has_lemma(&hyper_key) {
                candidates.insert(sister);
            }
        }
    }
    let (filler, synset) = pick_filler(db, candidates, pair)?;
    Some(NounPair::counterfactual(pair, filler, synset, SetLabel::Sister))
}

/// Why a positive pair did not make it into the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NotInLexicon,
    NoNegative,
    NoSister,
    MultiWord,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NotInLexicon => "not_in_lexicon",
            DropReason::NoNegative => "no_negative",
            DropReason::NoSister => "no_sister",
            DropReason::MultiWord => "multi_word",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub norm_rows: usize,
    pub positive_pairs: usize,
    pub kept_pairs: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub examples_per_set: usize,
    pub lexicon_version: String,
}

/// Three aligned sentence sets: row `i` of each set shares pattern and
/// hyponym.
#[derive(Debug, Clone, Default)]
pub struct DatasetBuild {
    pub positive: Vec<ExampleSentence>,
    pub negative: Vec<ExampleSentence>,
    pub sister: Vec<ExampleSentence>,
    /// Kept `[positive, negative, sister]` pairs in output order.
    pub pairs: Vec<[NounPair; 3]>,
    pub report: BuildReport,
}

impl DatasetBuild {
    pub fn set(&self, label: SetLabel) -> &[ExampleSentence] {
        match label {
            SetLabel::Positive => &self.positive,
            SetLabel::Negative => &self.negative,
            SetLabel::Sister => &self.sister,
        }
    }

    /// Writes `positive.tsv`, `negative.tsv` and `sisters.tsv` into `dir`.
    pub fn write_tsv(&self, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir.as_ref()).map_err(|source| DatasetError::Io {
            path: dir.as_ref().to_path_buf(),
            source,
        })?;
        for label in SetLabel::ALL {
            export_tsv(self.set(label), dir.as_ref().join(label.file_name()))?;
        }
        Ok(())
    }
}

fn triple_for(pair: &NounPair, db: &LexicalDatabase) -> Result<[NounPair; 3], DropReason> {
    if map_to_synsets(pair, db).is_empty() {
        return Err(DropReason::NotInLexicon);
    }
    let negative = build_negative_pair(pair, db).ok_or(DropReason::NoNegative)?;
    let sister = build_sister_pair(pair, db).ok_or(DropReason::NoSister)?;
    let triple = [pair.clone(), negative, sister];
    let single = |w: &str| !w.is_empty() && !w.contains(|c: char| c.is_whitespace() || c == '_');
    if triple
        .iter()
        .any(|p| !single(&p.hyponym_raw) || !single(&p.hypernym_raw))
    {
        return Err(DropReason::MultiWord);
    }
    Ok(triple)
}

/// Builds the three aligned sets: every positive pair that has both
/// counterfactuals is instantiated with all five patterns in every set.
/// Ids run consecutively over positive, then negative, then sister rows.
pub fn build_all(norms: &[NormTriple], db: &LexicalDatabase) -> DatasetBuild {
    let positives = extract_positive_pairs(norms);
    let outcomes: Vec<Result<[NounPair; 3], DropReason>> =
        positives.par_iter().map(|p| triple_for(p, db)).collect();

    let mut report = BuildReport {
        norm_rows: norms.len(),
        positive_pairs: positives.len(),
        lexicon_version: db.version().to_string(),
        ..BuildReport::default()
    };
    let mut pairs = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(triple) => pairs.push(triple),
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }

    let per_set = (pairs.len() * PATTERNS.len()) as u64;
    let mut build = DatasetBuild::default();
    for (row, (triple, pattern)) in pairs
        .iter()
        .flat_map(|t| PATTERNS.iter().map(move |p| (t, p)))
        .enumerate()
    {
        for (k, pair) in triple.iter().enumerate() {
            let id = k as u64 * per_set + row as u64;
            let ex = pattern
                .instantiate(pair, id)
                .expect("multi-word pairs were dropped above");
            match pair.set_label {
                SetLabel::Positive => build.positive.push(ex),
                SetLabel::Negative => build.negative.push(ex),
                SetLabel::Sister => build.sister.push(ex),
            }
        }
    }
    report.kept_pairs = pairs.len();
    report.examples_per_set = build.positive.len();
    build.pairs = pairs;
    build.report = report;
    build
}
