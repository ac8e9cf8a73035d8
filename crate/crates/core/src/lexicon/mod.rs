//! In-memory noun taxonomy with the queries needed to build counterfactual
//! noun pairs: lemma lookup, hypernym closure, sister terms and
//! frequency-ranked lemma selection.
//!
//! Two on-disk layouts are supported: a WordNet dictionary directory
//! (`data.noun` plus the optional `index.sense` for tag counts) and a
//! small tab-separated fixture format used by tests:
//!
//! ```text
//! synset_id <TAB> parent_ids(comma-sep) <TAB> lemma:count(comma-sep)
//! ```

mod fixture;
mod wordnet;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("hypernym cycle detected through synset {0}")]
    Cycle(SynsetId),
    #[error("unknown synset id {0}")]
    UnknownSynset(SynsetId),
    #[error("candidate list is empty")]
    EmptyCandidates,
}

/// Opaque synset identifier (the byte offset for WordNet dictionaries).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Self {
        SynsetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SynsetId {
    fn from(s: &str) -> Self {
        SynsetId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lemma {
    pub form: String,
    /// Sense-tagged corpus frequency; 0 when the database has none.
    pub count: u32,
}

impl Lemma {
    pub fn new(form: impl Into<String>, count: u32) -> Self {
        Lemma {
            form: form.into(),
            count,
        }
    }

    /// Lemmas written with `_` or a space span several words.
    pub fn is_multiword(&self) -> bool {
        self.form.contains(['_', ' '])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    pub pos: char,
    pub lemmas: Vec<Lemma>,
    /// Direct hypernyms.
    pub parents: Vec<SynsetId>,
}

impl Synset {
    pub fn has_lemma(&self, lemma: &str) -> bool {
        self.lemmas.iter().any(|l| l.form.eq_ignore_ascii_case(lemma))
    }
}

/// Immutable noun taxonomy. Safe to share across threads once loaded.
#[derive(Debug, Clone, Default)]
pub struct LexicalDatabase {
    synsets: Vec<Synset>,
    by_id: HashMap<SynsetId, usize>,
    lemma_index: HashMap<String, Vec<usize>>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    version: String,
}

impl LexicalDatabase {
    /// Builds the database from synsets in database order, validating ids,
    /// parent links and acyclicity.
    pub fn from_synsets(
        synsets: Vec<Synset>,
        version: impl Into<String>,
    ) -> Result<Self, LexiconError> {
        let mut by_id = HashMap::with_capacity(synsets.len());
        for (i, s) in synsets.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(LexiconError::Malformed {
                    path: PathBuf::new(),
                    line: i + 1,
                    message: format!("duplicate synset id {}", s.id),
                });
            }
        }

        let mut parents = Vec::with_capacity(synsets.len());
        let mut children = vec![Vec::new(); synsets.len()];
        for (i, s) in synsets.iter().enumerate() {
            let mut ps: Vec<usize> = Vec::with_capacity(s.parents.len());
            for p in &s.parents {
                if *p == s.id {
                    return Err(LexiconError::Cycle(s.id.clone()));
                }
                let j = *by_id
                    .get(p)
                    .ok_or_else(|| LexiconError::UnknownSynset(p.clone()))?;
                if !ps.contains(&j) {
                    ps.push(j);
                    children[j].push(i);
                }
            }
            parents.push(ps);
        }

        let mut lemma_index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, s) in synsets.iter().enumerate() {
            for l in &s.lemmas {
                let entry = lemma_index.entry(l.form.to_lowercase()).or_default();
                if entry.last() != Some(&i) {
                    entry.push(i);
                }
            }
        }

        let ids: Vec<SynsetId> = synsets.iter().map(|s| s.id.clone()).collect();
        let mut synsets = synsets;
        for (s, ps) in synsets.iter_mut().zip(&parents) {
            s.parents = ps.iter().map(|&j| ids[j].clone()).collect();
        }

        let db = LexicalDatabase {
            synsets,
            by_id,
            lemma_index,
            parents,
            children,
            version: version.into(),
        };
        db.check_acyclic()?;
        Ok(db)
    }

    /// Iterative three-colour DFS over parent links.
    fn check_acyclic(&self) -> Result<(), LexiconError> {
        const WHITE: u8 = 0;
        const GREY: u8 = 1;
        const BLACK: u8 = 2;
        let mut colour = vec![WHITE; self.synsets.len()];
        for root in 0..self.synsets.len() {
            if colour[root] != WHITE {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            colour[root] = GREY;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&p) = self.parents[node].get(*next) {
                    *next += 1;
                    match colour[p] {
                        WHITE => {
                            colour[p] = GREY;
                            stack.push((p, 0));
                        }
                        GREY => return Err(LexiconError::Cycle(self.synsets[p].id.clone())),
                        _ => {}
                    }
                } else {
                    colour[node] = BLACK;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    /// Version string recorded in output metadata.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn synsets(&self) -> &[Synset] {
        &self.synsets
    }

    pub fn lemma_count(&self) -> usize {
        self.lemma_index.len()
    }

    pub fn get(&self, id: &SynsetId) -> Option<&Synset> {
        self.by_id.get(id).map(|&i| &self.synsets[i])
    }

    fn index_of(&self, id: &SynsetId) -> Result<usize, LexiconError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| LexiconError::UnknownSynset(id.clone()))
    }

    /// All synsets containing `lemma`, in database order.
    pub fn synsets_of(&self, lemma: &str) -> Vec<&Synset> {
        let key = lemma.to_lowercase();
        self.lemma_index
            .get(&key)
            .map(|ix| ix.iter().map(|&i| &self.synsets[i]).collect())
            .unwrap_or_default()
    }

    /// Transitive closure over parent links, excluding `id` itself.
    pub fn hypernym_closure(&self, id: &SynsetId) -> Result<HashSet<SynsetId>, LexiconError> {
        let start = self.index_of(id)?;
        let mut seen = vec![false; self.synsets.len()];
        let mut stack: Vec<usize> = self.parents[start].clone();
        let mut out = HashSet::new();
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            out.insert(self.synsets[i].id.clone());
            stack.extend(self.parents[i].iter().copied().filter(|&p| !seen[p]));
        }
        Ok(out)
    }

    /// Synsets sharing at least one direct parent with `id`, sorted by id.
    pub fn sister_terms(&self, id: &SynsetId) -> Result<Vec<SynsetId>, LexiconError> {
        let start = self.index_of(id)?;
        let sisters: BTreeSet<&SynsetId> = self.parents[start]
            .iter()
            .flat_map(|&p| self.children[p].iter())
            .filter(|&&c| c != start)
            .map(|&c| &self.synsets[c].id)
            .collect();
        Ok(sisters.into_iter().cloned().collect())
    }

    /// The highest-count single-word lemma over all candidate synsets.
    ///
    /// Ties go to the lexicographically smallest lemma, then the smallest
    /// synset id.
    pub fn most_frequent_lemma(
        &self,
        candidates: &[SynsetId],
    ) -> Result<Option<(String, SynsetId)>, LexiconError> {
        self.most_frequent_lemma_where(candidates, |_| true)
    }

    /// As [`most_frequent_lemma`](Self::most_frequent_lemma), skipping
    /// lemmas rejected by `accept`. Returns `None` when nothing qualifies.
    pub fn most_frequent_lemma_where(
        &self,
        candidates: &[SynsetId],
        accept: impl Fn(&str) -> bool,
    ) -> Result<Option<(String, SynsetId)>, LexiconError> {
        if candidates.is_empty() {
            return Err(LexiconError::EmptyCandidates);
        }
        let mut best: Option<(u32, String, &SynsetId)> = None;
        for id in candidates {
            let synset = &self.synsets[self.index_of(id)?];
            for lemma in synset.lemmas.iter().filter(|l| !l.is_multiword()) {
                let form = lemma.form.to_lowercase();
                if !accept(&form) {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((count, best_form, best_id)) => {
                        (lemma.count, std::cmp::Reverse(&form), std::cmp::Reverse(id))
                            > (*count, std::cmp::Reverse(best_form), std::cmp::Reverse(*best_id))
                    }
                };
                if better {
                    best = Some((lemma.count, form, id));
                }
            }
        }
        Ok(best.map(|(_, form, id)| (form, id.clone())))
    }
}

/// Loads a lexical database from a WordNet dictionary directory or a
/// fixture TSV file.
pub fn load_wordnet(path: impl AsRef<Path>) -> Result<LexicalDatabase, LexiconError> {
    let path = path.as_ref();
    if path.is_dir() {
        wordnet::load_dict(path)
    } else {
        fixture::load_fixture(path)
    }
}

pub use fixture::parse_fixture;

#[cfg(test)]
mod tests {
    use super::*;

    fn syn(id: &str, parents: &[&str], lemmas: &[(&str, u32)]) -> Synset {
        Synset {
            id: id.into(),
            pos: 'n',
            lemmas: lemmas.iter().map(|&(f, c)| Lemma::new(f, c)).collect(),
            parents: parents.iter().map(|&p| p.into()).collect(),
        }
    }

    fn chain() -> LexicalDatabase {
        LexicalDatabase::from_synsets(
            vec![
                syn("c", &[], &[("entity", 3)]),
                syn("b", &["c"], &[("animal", 5)]),
                syn("a", &["b"], &[("dog", 7)]),
                syn("d", &["b"], &[("cat", 2), ("true_cat", 9)]),
            ],
            "test",
        )
        .unwrap()
    }

    #[test]
    fn closure_of_chain() {
        let db = chain();
        let c = db.hypernym_closure(&"a".into()).unwrap();
        assert_eq!(c, ["b", "c"].iter().map(|&s| SynsetId::from(s)).collect());
        assert!(db.hypernym_closure(&"c".into()).unwrap().is_empty());
    }

    #[test]
    fn unknown_id_is_an_error() {
        let db = chain();
        assert!(matches!(
            db.hypernym_closure(&"zz".into()),
            Err(LexiconError::UnknownSynset(_))
        ));
        assert!(db.sister_terms(&"zz".into()).is_err());
    }

    #[test]
    fn sisters_share_parent() {
        let db = chain();
        assert_eq!(db.sister_terms(&"a".into()).unwrap(), vec![SynsetId::from("d")]);
        assert_eq!(db.sister_terms(&"d".into()).unwrap(), vec![SynsetId::from("a")]);
        assert!(db.sister_terms(&"c".into()).unwrap().is_empty());
    }

    #[test]
    fn most_frequent_skips_multiword() {
        let db = chain();
        let (lemma, id) = db.most_frequent_lemma(&["d".into()]).unwrap().unwrap();
        assert_eq!((lemma.as_str(), id.as_str()), ("cat", "d"));
    }

    #[test]
    fn most_frequent_picks_highest_count() {
        let db = LexicalDatabase::from_synsets(
            vec![syn("p", &[], &[("person", 500), ("individual", 40)])],
            "t",
        )
        .unwrap();
        let got = db.most_frequent_lemma(&["p".into()]).unwrap().unwrap();
        assert_eq!(got, ("person".to_string(), SynsetId::from("p")));
    }

    #[test]
    fn most_frequent_tie_is_lexicographic() {
        let db = LexicalDatabase::from_synsets(
            vec![
                syn("s2", &[], &[("banana", 4)]),
                syn("s1", &[], &[("apple", 4)]),
                syn("s3", &[], &[("apple", 4)]),
            ],
            "t",
        )
        .unwrap();
        let ids: Vec<SynsetId> = vec!["s2".into(), "s3".into(), "s1".into()];
        let got = db.most_frequent_lemma(&ids).unwrap().unwrap();
        assert_eq!(got, ("apple".to_string(), SynsetId::from("s1")));
        // determinism
        assert_eq!(db.most_frequent_lemma(&ids).unwrap().unwrap(), got);
    }

    #[test]
    fn most_frequent_single_lemma_and_empty() {
        let db = chain();
        let got = db.most_frequent_lemma(&["c".into()]).unwrap().unwrap();
        assert_eq!(got.0, "entity");
        assert!(matches!(
            db.most_frequent_lemma(&[]),
            Err(LexiconError::EmptyCandidates)
        ));
    }

    #[test]
    fn self_parent_is_cycle() {
        let err = LexicalDatabase::from_synsets(vec![syn("x", &["x"], &[("x", 0)])], "t")
            .unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn longer_cycle_detected() {
        let err = LexicalDatabase::from_synsets(
            vec![
                syn("a", &["c"], &[("a", 0)]),
                syn("b", &["a"], &[("b", 0)]),
                syn("c", &["b"], &[("c", 0)]),
            ],
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, LexiconError::Cycle(_)));
    }

    #[test]
    fn duplicate_parents_collapse() {
        let db = LexicalDatabase::from_synsets(
            vec![syn("r", &[], &[("r", 0)]), syn("a", &["r", "r"], &[("a", 0)])],
            "t",
        )
        .unwrap();
        assert_eq!(db.get(&"a".into()).unwrap().parents.len(), 1);
    }
}
