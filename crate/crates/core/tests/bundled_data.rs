//! Checks against the real lexicon and vocabulary under `data/`. Each test
//! prints a note and returns early when its files are not present.

use std::path::PathBuf;

use taxoprobe::attention::{tokenize_and_locate, Rejection, Tokenizer, WordPieceTokenizer};
use taxoprobe::dataset::{build_negative_pair, build_sister_pair, pattern, NounPair, SetLabel};
use taxoprobe::lexicon::load_wordnet;

fn data_path(env: &str, default: &str) -> Option<PathBuf> {
    let p = std::env::var_os(env)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(default));
    if p.exists() {
        Some(p)
    } else {
        eprintln!("skipping: {} not found", p.display());
        None
    }
}

#[test]
fn wordnet_counterfactuals_for_raven() {
    let Some(dir) = data_path("TAXOPROBE_WORDNET", "wordnet-3.1") else {
        return;
    };
    let db = load_wordnet(&dir).unwrap();
    assert!(db.len() > 80_000, "{} noun synsets", db.len());
    assert!(db.version().contains("3."), "{}", db.version());

    let neg = build_negative_pair(&NounPair::positive("raven", "animal"), &db).unwrap();
    assert_eq!(neg.hypernym_raw, "person");
    assert_eq!(neg.set_label, SetLabel::Negative);

    let sis = build_sister_pair(&NounPair::positive("raven", "bird"), &db).unwrap();
    assert_eq!(sis.hypernym_raw, "crow");
    assert_eq!(sis.set_label, SetLabel::Sister);
}

#[test]
fn real_vocabulary_split_rules() {
    let Some(vocab) = data_path("TAXOPROBE_VOCAB", "bert-base-uncased/vocab.txt") else {
        return;
    };
    let tok = WordPieceTokenizer::from_vocab_file(&vocab, true).unwrap();
    assert_eq!(tok.vocab_size(), 30522);

    let harmonica = pattern(1)
        .unwrap()
        .instantiate(&NounPair::positive("harmonica", "instrument"), 0)
        .unwrap();
    assert!(tok.tokenize(&harmonica.text).contains(&"##s".to_string()));
    let err = tokenize_and_locate(&harmonica, pattern(1).unwrap(), &tok).unwrap_err();
    assert!(matches!(err, Rejection::SplitToken { .. }));
    assert_eq!(err.reason(), "split-token");

    // reference sentences whose focus words are whole vocabulary entries
    let cases = [
        (2u8, "hammer", "tool", (2usize, 5usize)),
        (3, "hawk", "predator", (3, 6)),
        (4, "pear", "fruit", (2, 8)),
        (1, "dog", "animal", (1, 3)),
        (5, "dog", "animal", (3, 9)),
    ];
    for (p, hypo, hyper, expected) in cases {
        let ex = pattern(p).unwrap().instantiate(&NounPair::positive(hypo, hyper), 0).unwrap();
        let located = tokenize_and_locate(&ex, pattern(p).unwrap(), &tok).unwrap();
        assert_eq!((located.source_pos, located.target_pos), expected, "pattern {p}: {}", ex.text);
    }
    // the full vocabulary splits these plurals, so the examples are dropped
    for (p, hypo, hyper) in [(1u8, "alligator", "reptile"), (5, "cherry", "fruit")] {
        let ex = pattern(p).unwrap().instantiate(&NounPair::positive(hypo, hyper), 0).unwrap();
        let err = tokenize_and_locate(&ex, pattern(p).unwrap(), &tok).unwrap_err();
        assert_eq!(err.reason(), "split-token", "{}", ex.text);
    }
}
