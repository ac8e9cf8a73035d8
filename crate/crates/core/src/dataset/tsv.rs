use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DatasetError, ExampleSentence, SetLabel};

pub const HEADER: [&str; 7] = [
    "id",
    "pattern",
    "text",
    "hyponym",
    "hypernym",
    "hyponym_raw",
    "hypernym_raw",
];

/// Serializes examples as LF-terminated, unquoted TSV.
pub fn to_tsv_string(examples: &[ExampleSentence]) -> Result<String, DatasetError> {
    let mut out = HEADER.join("\t");
    out.push('\n');
    for ex in examples {
        let pattern = ex.pattern.to_string();
        let id = ex.id.to_string();
        let fields = [
            id.as_str(),
            pattern.as_str(),
            &ex.text,
            &ex.hyponym,
            &ex.hypernym,
            &ex.hyponym_raw,
            &ex.hypernym_raw,
        ];
        if let Some(bad) = fields.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
            return Err(DatasetError::Tsv {
                path: PathBuf::new(),
                line: 0,
                message: format!("field {bad:?} of example {} contains a tab or newline", ex.id),
            });
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

pub fn export_tsv(examples: &[ExampleSentence], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    if examples.is_empty() {
        return Err(DatasetError::EmptyExport(path.to_path_buf()));
    }
    let body = to_tsv_string(examples)?;
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(body.as_bytes()).map_err(io_err)?;
    Ok(())
}

/// Reads a file written by [`export_tsv`]. The set label is not stored in
/// the file, so the caller supplies it.
pub fn import_tsv(path: impl AsRef<Path>, label: SetLabel) -> Result<Vec<ExampleSentence>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tsv(&text, label).map_err(|e| match e {
        DatasetError::Tsv { line, message, .. } => DatasetError::Tsv {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_tsv(text: &str, label: SetLabel) -> Result<Vec<ExampleSentence>, DatasetError> {
    let err = |line: usize, message: String| DatasetError::Tsv {
        path: PathBuf::new(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').eq(HEADER.iter().copied()) => {}
        Some((_, h)) => return Err(err(1, format!("unexpected header {h:?}"))),
        None => return Err(err(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != HEADER.len() {
            return Err(err(
                line_no,
                format!("expected {} columns, found {}", HEADER.len(), cols.len()),
            ));
        }
        out.push(ExampleSentence {
            id: cols[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad id {:?}", cols[0])))?,
            pattern: cols[1]
                .parse()
                .map_err(|_| err(line_no, format!("bad pattern {:?}", cols[1])))?,
            text: cols[2].to_string(),
            hyponym: cols[3].to_string(),
            hypernym: cols[4].to_string(),
            hyponym_raw: cols[5].to_string(),
            hypernym_raw: cols[6].to_string(),
            set_label: label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{pattern, NounPair};

    fn sample() -> ExampleSentence {
        pattern(1)
            .unwrap()
            .instantiate(&NounPair::positive("alligator", "reptile"), 3)
            .unwrap()
    }

    #[test]
    fn single_example_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("positive.tsv");
        export_tsv(&[sample()], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "id\tpattern\ttext\thyponym\thypernym\thyponym_raw\thypernym_raw\n\
             3\t1\talligators are reptiles.\talligators\treptiles\talligator\treptile\n"
        );
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        export_tsv(&[sample()], &a).unwrap();
        let back = import_tsv(&a, SetLabel::Positive).unwrap();
        assert_eq!(back, vec![sample()]);
        export_tsv(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn empty_export_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_tsv(&[], dir.path().join("x.tsv")),
            Err(DatasetError::EmptyExport(_))
        ));
    }

    #[test]
    fn unwritable_path() {
        let err = export_tsv(&[sample()], "/nonexistent-dir/x/positive.tsv").unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }

    #[test]
    fn bad_header() {
        assert!(parse_tsv("id\ttext\n", SetLabel::Sister).is_err());
        assert!(parse_tsv("", SetLabel::Sister).is_err());
    }
}
