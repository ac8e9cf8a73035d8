use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, NormTriple};

/// Column layout of a feature-norms file. Header names match
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormsFormat {
    pub delimiter: char,
    pub concept_column: String,
    pub feature_column: String,
    pub relation_column: String,
}

impl Default for NormsFormat {
    fn default() -> Self {
        NormsFormat {
            delimiter: '\t',
            concept_column: "concept".into(),
            feature_column: "feature".into(),
            relation_column: "relation".into(),
        }
    }
}

impl NormsFormat {
    /// Layout of the McRae `CONCS_FEATS_concstats_brm` release, where the
    /// taxonomic label sits in the Wu & Barsalou column.
    pub fn mcrae() -> Self {
        NormsFormat {
            delimiter: '\t',
            concept_column: "Concept".into(),
            feature_column: "Feature".into(),
            relation_column: "WB_Label".into(),
        }
    }
}

pub fn load_feature_norms(
    path: impl AsRef<Path>,
    format: &NormsFormat,
) -> Result<Vec<NormTriple>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let delimiter = u8::try_from(format.delimiter).map_err(|_| DatasetError::Norms {
        path: path.to_path_buf(),
        row: 0,
        message: format!("delimiter {:?} is not a single byte", format.delimiter),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .quoting(delimiter != b'\t')
        .from_reader(file);

    let norms_err = |row: usize, message: String| DatasetError::Norms {
        path: path.to_path_buf(),
        row,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| norms_err(1, e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(DatasetError::EmptyNorms(path.to_path_buf()));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| DatasetError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (ci, fi, ri) = (
        column(&format.concept_column)?,
        column(&format.feature_column)?,
        column(&format.relation_column)?,
    );

    let mut out = Vec::new();
    for (n, record) in reader.records().enumerate() {
        // header is row 1
        let row = n + 2;
        let record = record.map_err(|e| norms_err(row, e.to_string()))?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let get = |i: usize, name: &str| {
            record
                .get(i)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| norms_err(row, format!("missing {name} value")))
        };
        out.push(NormTriple {
            concept: get(ci, &format.concept_column)?,
            feature: get(fi, &format.feature_column)?,
            relation: get(ri, &format.relation_column)?,
        });
    }
    Ok(out)
}

/// Base form of a norms concept: lowercase, sense tag such as `_(animal)`
/// removed, underscores as spaces.
pub fn normalize_concept(concept: &str) -> String {
    let c = concept.trim().to_lowercase();
    let c = match c.find("_(") {
        Some(i) if c.ends_with(')') => &c[..i],
        _ => c.as_str(),
    };
    c.replace('_', " ").trim().to_string()
}

/// Base form of a norms feature: lowercase, leading article removed,
/// underscores as spaces.
pub fn normalize_feature(feature: &str) -> String {
    let f = feature.trim().to_lowercase().replace('_', " ");
    let f = ["a ", "an ", "the "]
        .iter()
        .find_map(|a| f.strip_prefix(a))
        .unwrap_or(&f);
    f.trim().to_string()
}
