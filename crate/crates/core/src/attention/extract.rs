use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    extract_matrix, tokenize_and_locate, AttentionError, Direction, MatrixStoreWriter,
    ModelBackend, Rejection, TokenizedExample,
};
use crate::dataset::{pattern, ExampleSentence, SetLabel, PATTERNS};

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub overwrite: bool,
    /// Examples sent to the backend per call.
    pub chunk_size: usize,
    /// Allowed deviation of a row sum from one.
    pub stochastic_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            overwrite: false,
            chunk_size: 64,
            stochastic_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PatternCounts {
    pub pattern: u8,
    /// Rows kept in every set (the same number for each set).
    pub accepted: usize,
    /// Rows of this pattern dropped, per set in label order.
    pub rejected: usize,
    /// Acceptance per set before intersecting across sets.
    pub accepted_before_intersection: BTreeMap<SetLabel, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionReport {
    pub backend: String,
    pub labels: Vec<SetLabel>,
    pub patterns: Vec<PatternCounts>,
    pub rejection_reasons: BTreeMap<String, usize>,
    pub matrices_written: usize,
}

impl ExtractionReport {
    pub fn accepted_counts(&self) -> Vec<(u8, usize)> {
        self.patterns.iter().map(|p| (p.pattern, p.accepted)).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pattern\taccepted\trejected");
        for l in &self.labels {
            out.push_str(&format!("\taccepted_{l}"));
        }
        out.push('\n');
        for p in &self.patterns {
            out.push_str(&format!("{}\t{}\t{}", p.pattern, p.accepted, p.rejected));
            for l in &self.labels {
                let n = p.accepted_before_intersection.get(l).copied().unwrap_or(0);
                out.push_str(&format!("\t{n}"));
            }
            out.push('\n');
        }
        out
    }
}

type Located = Result<TokenizedExample, Rejection>;

/// Groups examples by set, preserving order, and checks that the groups are
/// row-aligned.
fn aligned_groups(
    examples: &[ExampleSentence],
) -> Result<BTreeMap<SetLabel, Vec<&ExampleSentence>>, AttentionError> {
    let mut groups: BTreeMap<SetLabel, Vec<&ExampleSentence>> = BTreeMap::new();
    for ex in examples {
        groups.entry(ex.set_label).or_default().push(ex);
    }
    let mut iter = groups.values();
    if let Some(first) = iter.next() {
        for other in iter {
            if other.len() != first.len() {
                return Err(AttentionError::Unaligned(format!(
                    "set sizes differ ({} vs {})",
                    first.len(),
                    other.len()
                )));
            }
            if let Some(i) = (0..first.len()).find(|&i| first[i].pattern != other[i].pattern) {
                return Err(AttentionError::Unaligned(format!("pattern mismatch at row {i}")));
            }
        }
    }
    Ok(groups)
}

/// Tokenizes, filters split-token rows (intersected across sets), queries
/// the backend and writes forward, backward and average matrices for every
/// kept example.
pub fn batch_extract(
    examples: &[ExampleSentence],
    backend: &dyn ModelBackend,
    store_dir: impl AsRef<Path>,
    options: &ExtractOptions,
) -> Result<ExtractionReport, AttentionError> {
    let groups = aligned_groups(examples)?;
    for ex in examples {
        if pattern(ex.pattern).is_none() {
            return Err(AttentionError::Unaligned(format!(
                "example {} has unknown pattern {}",
                ex.id, ex.pattern
            )));
        }
    }
    let mut writer = MatrixStoreWriter::create(store_dir, options.overwrite)?;

    let tokenizer = backend.tokenizer();
    let located: BTreeMap<SetLabel, Vec<Located>> = groups
        .iter()
        .map(|(&label, rows)| {
            let res = rows
                .par_iter()
                .map(|ex| tokenize_and_locate(ex, pattern(ex.pattern).expect("checked"), tokenizer))
                .collect();
            (label, res)
        })
        .collect();

    let rows = groups.values().next().map_or(0, Vec::len);
    let keep: Vec<bool> = (0..rows)
        .map(|i| located.values().all(|v| v[i].is_ok()))
        .collect();

    let mut report = ExtractionReport {
        backend: backend.identity(),
        labels: groups.keys().copied().collect(),
        ..Default::default()
    };
    for p in &PATTERNS {
        let mut counts = PatternCounts {
            pattern: p.id,
            ..Default::default()
        };
        if let Some(first) = groups.values().next() {
            for (i, ex) in first.iter().enumerate() {
                if ex.pattern != p.id {
                    continue;
                }
                if keep[i] {
                    counts.accepted += 1;
                } else {
                    counts.rejected += 1;
                }
            }
        }
        for (label, results) in &located {
            let group = &groups[label];
            let n = results
                .iter()
                .zip(group)
                .filter(|(r, ex)| ex.pattern == p.id && r.is_ok())
                .count();
            counts.accepted_before_intersection.insert(*label, n);
        }
        report.patterns.push(counts);
    }
    for results in located.values() {
        for r in results.iter().filter_map(|r| r.as_ref().err()) {
            *report
                .rejection_reasons
                .entry(r.reason().to_string())
                .or_default() += 1;
        }
    }

    let work: Vec<(SetLabel, &ExampleSentence, &TokenizedExample)> = groups
        .iter()
        .flat_map(|(label, rows)| {
            let located = &located[label];
            rows.iter()
                .zip(located)
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(move |((ex, loc), _)| (*label, *ex, loc.as_ref().expect("kept rows located")))
        })
        .collect();

    for chunk in work.chunks(options.chunk_size.max(1)) {
        let tokens: Vec<Vec<String>> = chunk.iter().map(|(_, _, t)| t.tokens.clone()).collect();
        let tensors = match backend.attentions_batch(&tokens) {
            Ok(t) => t,
            Err(e) => {
                writer.abort(&e.to_string())?;
                return Err(e);
            }
        };
        for ((label, ex, tok), tensor) in chunk.iter().zip(&tensors) {
            let checked = if (tensor.layers(), tensor.heads()) != (backend.layers(), backend.heads()) {
                Err(AttentionError::Shape(format!(
                    "backend declared {}x{} but returned {}x{}",
                    backend.layers(),
                    backend.heads(),
                    tensor.layers(),
                    tensor.heads()
                )))
            } else {
                tensor.check_row_stochastic(options.stochastic_tol)
            };
            if let Err(e) = checked {
                writer.abort(&e.to_string())?;
                return Err(e);
            }
            for direction in Direction::ALL {
                let m = extract_matrix(tensor, tok, direction)?;
                writer.append(*label, ex.pattern, &m)?;
            }
        }
    }
    report.matrices_written = writer.finish()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{AttentionTensor, MatrixStore, StubBackend, Tokenizer};
    use crate::dataset::NounPair;

    fn set(label: SetLabel, pairs: &[(&str, &str)], start: u64) -> Vec<ExampleSentence> {
        let mut out = Vec::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            let mut pair = NounPair::positive(*a, *b);
            pair.set_label = label;
            out.push(pattern(1).unwrap().instantiate(&pair, start + i as u64).unwrap());
        }
        out
    }

    #[test]
    fn empty_input_gives_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let report =
            batch_extract(&[], &StubBackend::new(0), dir.path(), &ExtractOptions::default()).unwrap();
        assert_eq!(report.matrices_written, 0);
        assert!(report.patterns.iter().all(|p| p.accepted == 0 && p.rejected == 0));
        assert!(MatrixStore::open(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn intersection_across_sets() {
        let pos = set(SetLabel::Positive, &[("clock", "watch"), ("harmonica", "instrument"), ("cat", "pet")], 0);
        // row 2 filler splits only in the negative set
        let neg = set(SetLabel::Negative, &[("clock", "dog"), ("harmonica", "dog"), ("cat", "gopher")], 3);
        let all: Vec<ExampleSentence> = pos.into_iter().chain(neg).collect();
        let dir = tempfile::tempdir().unwrap();
        let backend = StubBackend::with_shape(1, 2, 2);
        let report = batch_extract(&all, &backend, dir.path(), &ExtractOptions::default()).unwrap();
        let p1 = &report.patterns[0];
        assert_eq!((p1.accepted, p1.rejected), (1, 2));
        assert_eq!(p1.accepted_before_intersection[&SetLabel::Positive], 2);
        assert_eq!(p1.accepted_before_intersection[&SetLabel::Negative], 1);
        assert_eq!(report.matrices_written, 2 * 3);
        let store = MatrixStore::open(dir.path()).unwrap();
        let ids: Vec<u64> = store.records().iter().map(|r| r.example_id).collect();
        assert_eq!(ids, vec![0, 0, 0, 3, 3, 3]);
    }

    #[test]
    fn unaligned_sets_rejected() {
        let pos = set(SetLabel::Positive, &[("clock", "watch"), ("cat", "pet")], 0);
        let neg = set(SetLabel::Negative, &[("clock", "dog")], 2);
        let all: Vec<ExampleSentence> = pos.into_iter().chain(neg).collect();
        let dir = tempfile::tempdir().unwrap();
        let err = batch_extract(&all, &StubBackend::new(0), dir.path(), &ExtractOptions::default())
            .unwrap_err();
        assert!(matches!(err, AttentionError::Unaligned(_)));
    }

    struct Failing(StubBackend);

    impl ModelBackend for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn layers(&self) -> usize {
            2
        }
        fn heads(&self) -> usize {
            2
        }
        fn tokenizer(&self) -> &dyn Tokenizer {
            self.0.tokenizer()
        }
        fn attentions(&self, _: &[String]) -> Result<AttentionTensor<f32>, AttentionError> {
            Err(AttentionError::Backend("boom".into()))
        }
    }

    #[test]
    fn backend_failure_marks_partial() {
        let dir = tempfile::tempdir().unwrap();
        let pos = set(SetLabel::Positive, &[("clock", "watch")], 0);
        let err = batch_extract(&pos, &Failing(StubBackend::new(0)), dir.path(), &ExtractOptions::default())
            .unwrap_err();
        assert!(matches!(err, AttentionError::Backend(_)));
        assert!(MatrixStore::open(dir.path()).unwrap().is_partial());
    }
}
