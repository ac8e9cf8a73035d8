//! Averaged attention heatmaps and per-head skewness statistics.

mod render;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{AttentionError, AttentionMatrix, Direction, MatrixStore};
use crate::dataset::SetLabel;
use crate::Scalar;

pub use render::{
    render_grid, render_heatmap, render_panel_grid, shared_scale, ColorScale, HeatmapSidecar,
    HeatmapSpec, Palette, CELL_PIXELS,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no matrices match {0}")]
    EmptySelection(String),
    #[error("matrices in the selection have different shapes")]
    Shape,
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] AttentionError),
}

/// Human-readable description of a store selection.
pub fn describe_selection(dataset: Option<SetLabel>, pattern: Option<u8>, direction: Direction) -> String {
    format!(
        "set={} pattern={} direction={direction}",
        dataset.map_or("all".to_string(), |d| d.to_string()),
        pattern.map_or("all".to_string(), |p| p.to_string())
    )
}

/// Elementwise mean of equally shaped matrices, accumulated in `f64`.
pub fn mean_matrix<T: Scalar>(
    matrices: &[AttentionMatrix<T>],
    direction: Direction,
) -> Result<AttentionMatrix<T>, AnalysisError> {
    let first = matrices
        .first()
        .ok_or_else(|| AnalysisError::EmptySelection("an empty list".into()))?;
    let (layers, heads) = (first.layers(), first.heads());
    let mut acc = vec![0f64; layers * heads];
    for m in matrices {
        if (m.layers(), m.heads()) != (layers, heads) {
            return Err(AnalysisError::Shape);
        }
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v.to_f64_lossy();
        }
    }
    let n = matrices.len() as f64;
    let values = acc.into_iter().map(|a| T::of(a / n)).collect();
    Ok(AttentionMatrix::new(layers, heads, values, direction, 0)?)
}

/// Mean matrix over a store selection and the number of matrices averaged.
pub fn average_matrix<T: Scalar>(
    store: &MatrixStore,
    dataset: Option<SetLabel>,
    pattern: Option<u8>,
    direction: Direction,
) -> Result<(AttentionMatrix<T>, usize), AnalysisError> {
    let selected: Vec<AttentionMatrix<T>> = store
        .select(dataset, pattern, direction)?
        .into_iter()
        .map(|(_, m)| m.cast::<T>())
        .collect();
    if selected.is_empty() {
        return Err(AnalysisError::EmptySelection(describe_selection(dataset, pattern, direction)));
    }
    let mean = mean_matrix(&selected, direction)?;
    Ok((mean, selected.len()))
}

/// Biased Fisher-Pearson skewness `g1 = m3 / m2^(3/2)` with central moments
/// `m_k = mean((x - mean)^k)`. `None` when the sample is empty or has
/// (numerically) zero variance.
pub fn skewness<T: Scalar>(sample: &[T]) -> Option<T> {
    if sample.is_empty() {
        return None;
    }
    let n = T::of(sample.len() as f64);
    let mean = sample.iter().fold(T::zero(), |a, &x| a + x) / n;
    let (mut m2, mut m3) = (T::zero(), T::zero());
    for &x in sample {
        let d = x - mean;
        m2 = m2 + d * d;
        m3 = m3 + d * d * d;
    }
    m2 = m2 / n;
    m3 = m3 / n;
    let scale = sample.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let floor = T::epsilon() * T::of(64.0) * scale;
    if !(m2 > floor * floor) {
        return None;
    }
    Some(m3 / m2.powf(T::of(1.5)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerChoice {
    First,
    Last,
}

impl LayerChoice {
    pub const ALL: [LayerChoice; 2] = [LayerChoice::First, LayerChoice::Last];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerChoice::First => "first",
            LayerChoice::Last => "last",
        }
    }

    pub fn resolve(self, layers: usize) -> usize {
        match self {
            LayerChoice::First => 0,
            LayerChoice::Last => layers.saturating_sub(1),
        }
    }
}

impl fmt::Display for LayerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "first" => Ok(LayerChoice::First),
            "last" => Ok(LayerChoice::Last),
            other => Err(format!("unknown layer choice {other:?} (expected first or last)")),
        }
    }
}

/// Per-head skewness of one layer, taken over the selected examples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewnessReport {
    pub dataset: Option<SetLabel>,
    pub pattern: Option<u8>,
    pub direction: Direction,
    pub which: LayerChoice,
    pub layer: usize,
    /// Number of examples in the sample.
    pub count: usize,
    /// One entry per head; `None` for zero-variance heads.
    pub values: Vec<Option<f64>>,
    pub estimator: &'static str,
}

pub const SKEWNESS_ESTIMATOR: &str = "biased Fisher-Pearson g1 = m3 / m2^1.5 over examples";

/// Skewness of each head of the first or last layer across the selected
/// matrices.
pub fn layer_skewness_of<T: Scalar>(
    matrices: &[AttentionMatrix<T>],
    which: LayerChoice,
) -> Result<(usize, Vec<Option<f64>>), AnalysisError> {
    let first = matrices
        .first()
        .ok_or_else(|| AnalysisError::EmptySelection("an empty list".into()))?;
    let (layers, heads) = (first.layers(), first.heads());
    if matrices.iter().any(|m| (m.layers(), m.heads()) != (layers, heads)) {
        return Err(AnalysisError::Shape);
    }
    let layer = which.resolve(layers);
    let values = (0..heads)
        .map(|h| {
            let sample: Vec<f64> = matrices.iter().map(|m| m.get(layer, h).to_f64_lossy()).collect();
            skewness(&sample)
        })
        .collect();
    Ok((layer, values))
}

pub fn layer_skewness(
    store: &MatrixStore,
    dataset: Option<SetLabel>,
    pattern: Option<u8>,
    direction: Direction,
    which: LayerChoice,
) -> Result<SkewnessReport, AnalysisError> {
    let selected: Vec<AttentionMatrix<f32>> = store
        .select(dataset, pattern, direction)?
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    if selected.is_empty() {
        return Err(AnalysisError::EmptySelection(describe_selection(dataset, pattern, direction)));
    }
    let (layer, values) = layer_skewness_of(&selected, which)?;
    Ok(SkewnessReport {
        dataset,
        pattern,
        direction,
        which,
        layer,
        count: selected.len(),
        values,
        estimator: SKEWNESS_ESTIMATOR,
    })
}

/// Long-format table: one row per (report, head); undefined values as `NA`.
pub fn skewness_tsv(reports: &[SkewnessReport]) -> String {
    let mut out = String::from("set\tpattern\tdirection\tlayer_choice\tlayer\thead\tskewness\tcount\n");
    for r in reports {
        for (h, v) in r.values.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.dataset.map_or("all".to_string(), |d| d.to_string()),
                r.pattern.map_or("all".to_string(), |p| p.to_string()),
                r.direction,
                r.which,
                r.layer,
                h,
                v.map_or("NA".to_string(), |x| format!("{x:.9}")),
                r.count
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> AttentionMatrix<f64> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        AttentionMatrix::from_rows(&rows, Direction::Forward, 0).unwrap()
    }

    #[test]
    fn mean_of_two_permutation_matrices() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let b = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let mean = mean_matrix(&[a.clone(), b], Direction::Forward).unwrap();
        assert_eq!(mean.values(), &[0.5; 4]);
        assert_eq!(mean_matrix(&[a.clone()], Direction::Forward).unwrap().values(), a.values());
        assert!(mean_matrix::<f64>(&[], Direction::Forward).is_err());
        let odd = m(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(mean_matrix(&[a, odd], Direction::Forward), Err(AnalysisError::Shape)));
    }

    #[test]
    fn skewness_examples() {
        assert!(skewness(&[0.2f64, 0.5, 0.8]).unwrap().abs() < 1e-12);
        assert!((skewness(&[0.0, 0.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(skewness(&[0.1, 0.1, 0.1]), None);
        assert_eq!(skewness::<f64>(&[]), None);
        assert!(skewness(&[0.0f32, 0.0, 1.0]).is_some());
    }

    #[test]
    fn layer_choice_resolves() {
        assert_eq!(LayerChoice::First.resolve(12), 0);
        assert_eq!(LayerChoice::Last.resolve(12), 11);
        assert_eq!("LAST".parse::<LayerChoice>().unwrap(), LayerChoice::Last);
        assert!("middle".parse::<LayerChoice>().is_err());
    }

    #[test]
    fn per_head_skewness_and_table() {
        let ms = vec![
            m(&[&[0.0, 0.3], &[0.2, 0.3]]),
            m(&[&[0.0, 0.3], &[0.5, 0.3]]),
            m(&[&[1.0, 0.3], &[0.8, 0.3]]),
        ];
        let (layer, v) = layer_skewness_of(&ms, LayerChoice::First).unwrap();
        assert_eq!(layer, 0);
        assert!((v[0].unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(v[1], None);
        let (layer, v) = layer_skewness_of(&ms, LayerChoice::Last).unwrap();
        assert_eq!(layer, 1);
        assert!(v[0].unwrap().abs() < 1e-12);
        let report = SkewnessReport {
            dataset: Some(SetLabel::Positive),
            pattern: Some(1),
            direction: Direction::Forward,
            which: LayerChoice::Last,
            layer,
            count: 3,
            values: v,
            estimator: SKEWNESS_ESTIMATOR,
        };
        let tsv = skewness_tsv(&[report]);
        assert_eq!(tsv.lines().count(), 3);
        assert!(tsv.lines().nth(2).unwrap().ends_with("\tNA\t3"));
    }
}
