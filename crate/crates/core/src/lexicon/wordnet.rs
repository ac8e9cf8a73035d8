use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Lemma, LexicalDatabase, LexiconError, Synset, SynsetId};

const DATA_FILE: &str = "data.noun";
const SENSE_FILE: &str = "index.sense";
const HYPERNYM: &str = "@";

pub(super) fn load_dict(dir: &Path) -> Result<LexicalDatabase, LexiconError> {
    let counts = read_tag_counts(&dir.join(SENSE_FILE))?;
    let data_path = dir.join(DATA_FILE);
    let file = File::open(&data_path).map_err(|source| LexiconError::Io {
        path: data_path.clone(),
        source,
    })?;

    let mut version = None;
    let mut synsets = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LexiconError::Io {
            path: data_path.clone(),
            source,
        })?;
        let line_no = n + 1;
        if line.starts_with("  ") {
            if version.is_none() {
                version = header_version(&line);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let synset = parse_data_line(&line, &counts).map_err(|message| LexiconError::Malformed {
            path: data_path.clone(),
            line: line_no,
            message,
        })?;
        synsets.push(synset);
    }

    let version = version.unwrap_or_else(|| "WordNet (unknown version)".to_string());
    LexicalDatabase::from_synsets(synsets, version).map_err(|e| match e {
        LexiconError::Malformed { line, message, .. } => LexiconError::Malformed {
            path: data_path.clone(),
            line,
            message,
        },
        other => other,
    })
}

/// Picks "WordNet 3.1" out of the license banner.
fn header_version(line: &str) -> Option<String> {
    let mut words = line.split_whitespace();
    while let Some(w) = words.next() {
        if w == "WordNet" {
            if let Some(v) = words.next() {
                if v.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                    return Some(format!("WordNet {v}"));
                }
            }
        }
    }
    None
}

type TagCounts = HashMap<(String, String), u32>;

/// `index.sense` lines: `lemma%ss_type:lex_filenum:lex_id:head:head_id offset sense_no tag_cnt`.
/// A missing file means every count is zero.
fn read_tag_counts(path: &Path) -> Result<TagCounts, LexiconError> {
    let mut counts = TagCounts::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(counts),
        Err(source) => {
            return Err(LexiconError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cols = line.split_whitespace();
        let (Some(key), Some(offset), Some(_), Some(cnt)) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(LexiconError::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                message: "expected 4 columns".into(),
            });
        };
        let Some((lemma, rest)) = key.split_once('%') else {
            continue;
        };
        if !rest.starts_with('1') {
            continue;
        }
        let cnt: u32 = cnt.parse().map_err(|_| LexiconError::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("bad tag count {cnt:?}"),
        })?;
        *counts
            .entry((lemma.to_lowercase(), offset.to_string()))
            .or_default() += cnt;
    }
    Ok(counts)
}

fn parse_data_line(line: &str, counts: &TagCounts) -> Result<Synset, String> {
    let body = line.split_once(" | ").map_or(line, |(b, _)| b);
    let fields: Vec<&str> = body.split_whitespace().collect();
    let field = |i: usize| {
        fields
            .get(i)
            .copied()
            .ok_or_else(|| format!("truncated record (field {i})"))
    };

    let offset = field(0)?;
    let pos = field(2)?
        .chars()
        .next()
        .ok_or_else(|| "empty ss_type".to_string())?;
    let w_cnt = usize::from_str_radix(field(3)?, 16).map_err(|_| "bad w_cnt".to_string())?;
    let mut lemmas = Vec::with_capacity(w_cnt);
    for k in 0..w_cnt {
        let form = field(4 + 2 * k)?;
        let count = counts
            .get(&(form.to_lowercase(), offset.to_string()))
            .copied()
            .unwrap_or(0);
        lemmas.push(Lemma::new(form, count));
    }
    if lemmas.is_empty() {
        return Err("synset without lemmas".into());
    }

    let mut i = 4 + 2 * w_cnt;
    let p_cnt: usize = field(i)?.parse().map_err(|_| "bad p_cnt".to_string())?;
    i += 1;
    let mut parents: Vec<SynsetId> = Vec::new();
    for _ in 0..p_cnt {
        let (symbol, target, target_pos) = (field(i)?, field(i + 1)?, field(i + 2)?);
        field(i + 3)?;
        i += 4;
        if symbol == HYPERNYM && target_pos == "n" {
            let id = SynsetId::from(target);
            if !parents.contains(&id) {
                parents.push(id);
            }
        }
    }

    Ok(Synset {
        id: offset.into(),
        pos,
        lemmas,
        parents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_data_line() {
        let line = "00005930 03 n 02 dwarf 0 Dwarf 1 002 @ 00004475 n 0000 ~ 00000001 n 0000 | a plant  ";
        let mut counts = TagCounts::new();
        counts.insert(("dwarf".into(), "00005930".into()), 4);
        let s = parse_data_line(line, &counts).unwrap();
        assert_eq!(s.id.as_str(), "00005930");
        assert_eq!(s.lemmas.len(), 2);
        assert_eq!(s.lemmas[0].count, 4);
        assert_eq!(s.lemmas[1].count, 4);
        assert_eq!(s.parents, vec![SynsetId::from("00004475")]);
    }

    #[test]
    fn truncated_line_is_error() {
        assert!(parse_data_line("00005930 03 n 02 dwarf", &TagCounts::new()).is_err());
    }

    #[test]
    fn version_from_banner() {
        assert_eq!(
            header_version("  14 WordNet 3.1 Copyright 2011 by Princeton University."),
            Some("WordNet 3.1".into())
        );
        assert_eq!(header_version("  1 This software"), None);
    }

    #[test]
    fn dict_directory_round() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(DATA_FILE),
            "  1 WordNet 9.9 Copyright\n\
             00000001 03 n 01 entity 0 000 | root\n\
             00000002 03 n 01 bird 0 001 @ 00000001 n 0000 | x\n\
             00000003 03 n 02 raven 0 Corvus_corax 0 002 @ 00000002 n 0000 @i 00000001 n 0000 | y\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join(SENSE_FILE),
            "bird%1:05:00:: 00000002 1 12\nraven%1:05:00:: 00000003 1 2\nraven%2:34:00:: 01199186 3 9\n",
        )
        .unwrap();
        let db = load_dict(dir.path()).unwrap();
        assert_eq!(db.len(), 3);
        assert_eq!(db.version(), "WordNet 9.9");
        let raven = db.get(&"00000003".into()).unwrap();
        assert_eq!(raven.parents, vec![SynsetId::from("00000002")]);
        assert_eq!(raven.lemmas[0].count, 2);
        assert_eq!(db.synsets_of("bird")[0].lemmas[0].count, 12);
    }
}
