use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Lemma, LexicalDatabase, LexiconError, Synset, SynsetId};

pub(super) fn load_fixture(path: &Path) -> Result<LexicalDatabase, LexiconError> {
    let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_fixture(&text, path)
}

/// Parses the tab-separated fixture layout. Blank lines and lines starting
/// with `#` are ignored. The version string is a digest of the content.
pub fn parse_fixture(text: &str, path: &Path) -> Result<LexicalDatabase, LexiconError> {
    let malformed = |line: usize, message: String| LexiconError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut synsets = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 3 {
            return Err(malformed(
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0].trim();
        if id.is_empty() {
            return Err(malformed(line_no, "empty synset id".into()));
        }
        let parents = split_list(cols[1]).map(SynsetId::from).collect();
        let mut lemmas = Vec::new();
        for item in split_list(cols[2]) {
            let (form, count) = match item.rsplit_once(':') {
                Some((form, count)) => {
                    let count = count
                        .parse::<u32>()
                        .map_err(|_| malformed(line_no, format!("bad lemma count in {item:?}")))?;
                    (form, count)
                }
                None => (item, 0),
            };
            if form.is_empty() {
                return Err(malformed(line_no, "empty lemma".into()));
            }
            lemmas.push(Lemma::new(form, count));
        }
        if lemmas.is_empty() {
            return Err(malformed(line_no, "synset without lemmas".into()));
        }
        synsets.push(Synset {
            id: id.into(),
            pos: 'n',
            lemmas,
            parents,
        });
    }

    let digest = Sha256::digest(text.as_bytes());
    let version = format!(
        "fixture:{}",
        digest[..6].iter().map(|b| format!("{b:02x}")).collect::<String>()
    );
    LexicalDatabase::from_synsets(synsets, version).map_err(|e| match e {
        LexiconError::Malformed { line, message, .. } => malformed(line, message),
        other => other,
    })
}

fn split_list(col: &str) -> impl Iterator<Item = &str> {
    col.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = "\
entity\t\tentity:10
animal\tentity\tanimal:50,beast:3
bird\tanimal\tbird:40,fowl:1
raven\tbird\traven:2
crow\tbird\tcrow:8,bird:0
";

    #[test]
    fn five_synset_fixture() {
        let db = parse_fixture(FIVE, Path::new("five.tsv")).unwrap();
        assert_eq!(db.len(), 5);
        // entity animal beast bird fowl raven crow
        assert_eq!(db.lemma_count(), 7);
        let birds: Vec<_> = db.synsets_of("bird").iter().map(|s| s.id.clone()).collect();
        assert_eq!(birds, vec![SynsetId::from("bird"), SynsetId::from("crow")]);
        assert!(db.synsets_of("zzqx").is_empty());
        assert!(db.version().starts_with("fixture:"));
    }

    #[test]
    fn empty_file_is_valid() {
        let db = parse_fixture("", Path::new("empty.tsv")).unwrap();
        assert!(db.is_empty());
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_fixture("a\t\ta:1\nb\tonly-two-cols\n", Path::new("bad.tsv")).unwrap_err();
        match err {
            LexiconError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let err = parse_fixture("a\t\ta:x\n", Path::new("bad.tsv")).unwrap_err();
        assert!(err.to_string().contains("bad.tsv:1"));
    }

    #[test]
    fn self_loop_is_cycle() {
        let err = parse_fixture("x\tx\tx:1\n", Path::new("loop.tsv")).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn missing_count_is_zero() {
        let db = parse_fixture("x\t\tthing\n", Path::new("c.tsv")).unwrap();
        assert_eq!(db.synsets()[0].lemmas[0].count, 0);
    }
}
