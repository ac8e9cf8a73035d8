use std::collections::{BTreeSet, HashSet, VecDeque};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taxoprobe::analysis::{average_matrix, layer_skewness, mean_matrix, skewness, LayerChoice};
use taxoprobe::attention::{
    extract_matrix, AttentionMatrix, Direction, MatrixStore, MatrixStoreWriter, ModelBackend,
    StubBackend, TokenizedExample,
};
use taxoprobe::dataset::SetLabel;
use taxoprobe::lexicon::{Lemma, LexicalDatabase, Synset, SynsetId};

/// Random DAG: node `i` may only point at nodes with a smaller index.
fn dag() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..40).prop_flat_map(|n| {
        (0..n)
            .map(|i| {
                if i == 0 {
                    Just(Vec::new()).boxed()
                } else {
                    prop::collection::btree_set(0..i, 0..4.min(i) + 1)
                        .prop_map(|s| s.into_iter().collect())
                        .boxed()
                }
            })
            .collect::<Vec<_>>()
    })
}

fn build(parents: &[Vec<usize>]) -> LexicalDatabase {
    let synsets = parents
        .iter()
        .enumerate()
        .map(|(i, ps)| Synset {
            id: SynsetId::new(format!("s{i}")),
            pos: 'n',
            lemmas: vec![Lemma::new(format!("w{i}"), i as u32)],
            parents: ps.iter().map(|p| SynsetId::new(format!("s{p}"))).collect(),
        })
        .collect();
    LexicalDatabase::from_synsets(synsets, "generated").unwrap()
}

/// Breadth-first reachability over the raw parent lists.
fn bfs_ancestors(parents: &[Vec<usize>], start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = parents[start].iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        if seen.insert(n) {
            queue.extend(parents[n].iter().copied());
        }
    }
    seen
}

fn ids(set: impl IntoIterator<Item = usize>) -> HashSet<SynsetId> {
    set.into_iter().map(|i| SynsetId::new(format!("s{i}"))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closure_equals_bfs_reachability(parents in dag()) {
        let db = build(&parents);
        for i in 0..parents.len() {
            let got = db.hypernym_closure(&SynsetId::new(format!("s{i}"))).unwrap();
            prop_assert_eq!(got, ids(bfs_ancestors(&parents, i)));
        }
    }

    #[test]
    fn sister_relation_is_symmetric_and_irreflexive(parents in dag()) {
        let db = build(&parents);
        for i in 0..parents.len() {
            let me = SynsetId::new(format!("s{i}"));
            let sisters = db.sister_terms(&me).unwrap();
            prop_assert!(!sisters.contains(&me));
            for s in &sisters {
                prop_assert!(db.sister_terms(s).unwrap().contains(&me));
            }
            let expected: BTreeSet<usize> = (0..parents.len())
                .filter(|&j| j != i && parents[j].iter().any(|p| parents[i].contains(p)))
                .collect();
            prop_assert_eq!(sisters.into_iter().collect::<HashSet<_>>(), ids(expected));
        }
    }

    #[test]
    fn mean_is_permutation_invariant(seed in any::<u64>(), n in 1usize..40) {
        let mut ms = stub_matrices(seed, n);
        let a = mean_matrix(&ms, Direction::Forward).unwrap();
        ms.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = mean_matrix(&ms, Direction::Forward).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-7);
        }
    }

    #[test]
    fn skewness_is_affine_invariant(
        sample in prop::collection::vec(0.0f64..1.0, 3..60),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let moved: Vec<f64> = sample.iter().map(|x| a * x + b).collect();
        match (skewness(&sample), skewness(&moved)) {
            (Some(g), Some(h)) => prop_assert!((g - h).abs() <= 1e-9 * g.abs().max(1.0), "{} vs {}", g, h),
            (None, None) => {}
            (g, h) => {
                // only near-degenerate samples may flip between defined and
                // undefined
                let spread = sample.iter().cloned().fold(f64::MIN, f64::max)
                    - sample.iter().cloned().fold(f64::MAX, f64::min);
                prop_assert!(spread < 1e-9, "{:?} vs {:?}", g, h);
            }
        }
    }

    #[test]
    fn skewness_matches_moment_formula(sample in prop::collection::vec(-1.0f64..1.0, 3..60)) {
        let g = skewness(&sample).unwrap();
        prop_assert!((g - moment_oracle(&sample)).abs() <= 1e-9);
    }
}

/// `m3 / m2^1.5` from raw power sums: m2 = E[x^2] - mu^2,
/// m3 = E[x^3] - 3 mu E[x^2] + 2 mu^3.
fn moment_oracle(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let s1: f64 = x.iter().sum::<f64>() / n;
    let s2: f64 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let s3: f64 = x.iter().map(|v| v * v * v).sum::<f64>() / n;
    let m2 = s2 - s1 * s1;
    let m3 = s3 - 3.0 * s1 * s2 + 2.0 * s1.powi(3);
    m3 / m2.powf(1.5)
}

#[test]
fn skewness_known_values() {
    assert!(skewness(&[0.2f64, 0.5, 0.8]).unwrap().abs() < 1e-12);
    let g = skewness(&[0.0f64, 0.0, 1.0]).unwrap();
    // frozen from the raw-moment oracle
    assert!((g - moment_oracle(&[0.0, 0.0, 1.0])).abs() < 1e-12);
    assert!((g - 0.707_106_781_186_547_5).abs() < 1e-9);
    assert_eq!(skewness(&[0.4f64; 5]), None);
}

fn stub_matrices(seed: u64, n: usize) -> Vec<AttentionMatrix<f32>> {
    let backend = StubBackend::with_shape(seed, 12, 12);
    (0..n)
        .map(|i| {
            let tokens: Vec<String> = ["[CLS]", "w", "are", "x", ".", "[SEP]"]
                .iter()
                .map(|s| s.to_string())
                .chain(std::iter::once(format!("t{i}")))
                .collect();
            let tensor = backend.attentions(&tokens).unwrap();
            let tok = TokenizedExample {
                example_id: i as u64,
                tokens,
                source_pos: 1,
                target_pos: 3,
            };
            extract_matrix(&tensor, &tok, Direction::Forward).unwrap()
        })
        .collect()
}

#[test]
fn store_average_matches_accumulate_divide() {
    let matrices = stub_matrices(42, 100);
    let dir = tempfile::tempdir().unwrap();
    let mut w = MatrixStoreWriter::create(dir.path(), false).unwrap();
    for m in &matrices {
        w.append(SetLabel::Positive, 1, m).unwrap();
    }
    w.finish().unwrap();
    let store = MatrixStore::open(dir.path()).unwrap();

    let (mean, count) =
        average_matrix::<f64>(&store, Some(SetLabel::Positive), None, Direction::Forward).unwrap();
    assert_eq!(count, 100);
    for l in 0..12 {
        for h in 0..12 {
            let mut total = 0.0f64;
            for m in &matrices {
                total += m.get(l, h) as f64;
            }
            assert!((mean.get(l, h) - total / 100.0).abs() <= 1e-7);
        }
    }
    assert!(average_matrix::<f64>(&store, Some(SetLabel::Sister), None, Direction::Forward).is_err());

    let report = layer_skewness(&store, Some(SetLabel::Positive), Some(1), Direction::Forward, LayerChoice::Last)
        .unwrap();
    assert_eq!((report.layer, report.count, report.values.len()), (11, 100, 12));
    for (h, v) in report.values.iter().enumerate() {
        let sample: Vec<f64> = matrices.iter().map(|m| m.get(11, h) as f64).collect();
        assert!((v.unwrap() - moment_oracle(&sample)).abs() <= 1e-9);
    }
}
