#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su", "do", "fa"];

/// Distinct pronounceable pseudo-word for `n`.
pub fn word(n: usize) -> String {
    let mut w = String::from("b");
    let mut k = n;
    for _ in 0..3 {
        w.push_str(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    w
}

/// Two-level synthetic taxonomy: `categories` groups under a root, each
/// with `members` single-word leaves, plus a matching feature-norms table
/// with one superordinate row per leaf. Returns (lexicon path, norms path).
pub fn synthetic_inputs(dir: &Path, categories: usize, members: usize) -> (PathBuf, PathBuf) {
    let mut lex = String::from("# synthetic taxonomy\nroot\t\tentity:100\n");
    let mut norms = String::from("concept\tfeature\trelation\n");
    for c in 0..categories {
        let cat = word(10_000 + c);
        writeln!(lex, "c{c}\troot\t{cat}:{}", 50 + c).unwrap();
        for m in 0..members {
            let leaf = word(c * members + m);
            writeln!(lex, "c{c}m{m}\tc{c}\t{leaf}:{}", 1 + (m * 7 + c) % 13).unwrap();
            writeln!(norms, "{leaf}\ta_{cat}\tsuperordinate").unwrap();
            // a non-taxonomic feature row that must be ignored
            writeln!(norms, "{leaf}\thas_legs\tvisual-form_and_surface").unwrap();
        }
    }
    let lex_path = dir.join("taxonomy.tsv");
    let norms_path = dir.join("norms.tsv");
    fs::write(&lex_path, lex).unwrap();
    fs::write(&norms_path, norms).unwrap();
    (lex_path, norms_path)
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taxoprobe"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}
