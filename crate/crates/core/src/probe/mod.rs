//! Linear probe over flattened attention matrices: feature extraction,
//! L2-regularized multinomial logistic regression, evaluation and the four
//! set-separability experiments.

pub mod lbfgs;
mod logreg;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{AttentionError, AttentionMatrix, Direction, MatrixStore};
use crate::dataset::SetLabel;
use crate::Scalar;

pub use logreg::{train, train_with_trace, ProbeModel, SoftmaxObjective};
pub use split::{stratified_folds, stratified_split};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("training data contains only the {0} class")]
    SingleClass(SetLabel),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no training data")]
    Empty,
    #[error("empty test set")]
    EmptyTest,
    #[error("matrix store has no {0} matrices for the requested direction")]
    MissingSet(SetLabel),
    #[error("invalid probe configuration: {0}")]
    InvalidConfig(String),
    #[error("optimizer produced non-finite parameters")]
    NonFinite,
    #[error(transparent)]
    Store(#[from] AttentionError),
}

/// One labeled probe input: a layer x head matrix flattened layer-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub label: SetLabel,
    pub example_id: u64,
}

/// `v[l * H + h] = matrix[l][h]`.
pub fn flatten<T: Scalar>(matrix: &AttentionMatrix<T>, label: SetLabel) -> FeatureVector<T> {
    FeatureVector {
        values: matrix.values().to_vec(),
        label,
        example_id: matrix.example_id,
    }
}

/// Inverse of [`flatten`].
pub fn reshape<T: Scalar>(
    vector: &FeatureVector<T>,
    layers: usize,
    heads: usize,
    direction: Direction,
) -> Result<AttentionMatrix<T>, ProbeError> {
    if vector.values.len() != layers * heads {
        return Err(ProbeError::Dimension {
            expected: layers * heads,
            found: vector.values.len(),
        });
    }
    Ok(AttentionMatrix::new(
        layers,
        heads,
        vector.values.clone(),
        direction,
        vector.example_id,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest gradient component.
    pub tolerance: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub direction: Direction,
    /// Restrict to one pattern; all patterns are pooled when unset.
    pub pattern: Option<u8>,
    /// Also report stratified k-fold cross-validated accuracy.
    pub cv_folds: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c: 1.0,
            max_iterations: 1000,
            tolerance: 1e-4,
            train_fraction: 0.8,
            seed: 0,
            direction: Direction::Forward,
            pattern: None,
            cv_folds: None,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ProbeError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ProbeError::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(ProbeError::InvalidConfig("tolerance must be non-negative".into()));
        }
        if matches!(self.cv_folds, Some(k) if k < 2) {
            return Err(ProbeError::InvalidConfig("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Outcome of one classification experiment. Confusion rows are true
/// classes, columns predicted classes, both in `classes` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub experiment: String,
    pub classes: Vec<SetLabel>,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    /// Mean accuracy over stratified folds, when requested.
    pub cv_accuracy: Option<f64>,
}

/// Predicts every test row and tabulates accuracy, confusion matrix and
/// per-class precision/recall (0 where undefined).
pub fn evaluate<T: Scalar>(
    model: &ProbeModel<T>,
    test: &[FeatureVector<T>],
) -> Result<ProbeResult, ProbeError> {
    if test.is_empty() {
        return Err(ProbeError::EmptyTest);
    }
    let classes = model.classes().to_vec();
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for row in test {
        let truth = classes.iter().position(|&c| c == row.label).ok_or_else(|| {
            ProbeError::InvalidConfig(format!("test label {} unknown to the model", row.label))
        })?;
        let predicted = model.predict_index(&row.values)?;
        confusion[truth][predicted] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = (0..k)
        .map(|j| ratio(confusion[j][j], (0..k).map(|i| confusion[i][j]).sum()))
        .collect();
    let recall = (0..k)
        .map(|i| ratio(confusion[i][i], confusion[i].iter().sum()))
        .collect();
    Ok(ProbeResult {
        experiment: String::new(),
        classes,
        accuracy: correct as f64 / test.len() as f64,
        confusion,
        precision,
        recall,
        n_train: 0,
        n_test: test.len(),
        seed: 0,
        converged: model.converged,
        iterations: model.iterations,
        cv_accuracy: None,
    })
}

/// The four experiments, in table order.
pub const EXPERIMENTS: [(&str, &[SetLabel]); 4] = [
    ("All three", &[SetLabel::Positive, SetLabel::Negative, SetLabel::Sister]),
    ("Pos. vs. Neg.", &[SetLabel::Positive, SetLabel::Negative]),
    ("Pos. vs. Sisters", &[SetLabel::Positive, SetLabel::Sister]),
    ("Neg. vs. Sisters", &[SetLabel::Negative, SetLabel::Sister]),
];

fn pick<T: Clone>(rows: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

/// Trains on a stratified split of `data` and evaluates on the held-out part.
pub fn run_experiment<T: Scalar>(
    name: &str,
    data: &[FeatureVector<T>],
    config: &ProbeConfig,
) -> Result<ProbeResult, ProbeError> {
    config.validate()?;
    let keys: Vec<(SetLabel, u64)> = data.iter().map(|f| (f.label, f.example_id)).collect();
    let (train_idx, test_idx) = stratified_split(&keys, config.train_fraction, config.seed);
    let model = train(&pick(data, &train_idx), config)?;
    let mut result = evaluate(&model, &pick(data, &test_idx))?;
    result.experiment = name.to_string();
    result.n_train = train_idx.len();
    result.seed = config.seed;
    if let Some(k) = config.cv_folds {
        let folds = stratified_folds(&keys, k, config.seed);
        let mut correct = 0.0;
        let mut total = 0usize;
        for fold in &folds {
            if fold.is_empty() {
                continue;
            }
            let held: std::collections::HashSet<usize> = fold.iter().copied().collect();
            let rest: Vec<usize> = (0..data.len()).filter(|i| !held.contains(i)).collect();
            let m = train(&pick(data, &rest), config)?;
            let r = evaluate(&m, &pick(data, fold))?;
            correct += r.accuracy * r.n_test as f64;
            total += r.n_test;
        }
        result.cv_accuracy = Some(correct / total as f64);
    }
    Ok(result)
}

/// Feature vectors for one set from the store, in store order.
pub fn load_features(
    store: &MatrixStore,
    label: SetLabel,
    config: &ProbeConfig,
) -> Result<Vec<FeatureVector<f64>>, ProbeError> {
    let rows = store.select(Some(label), config.pattern, config.direction)?;
    Ok(rows
        .into_iter()
        .map(|(_, m)| flatten(&m.cast::<f64>(), label))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub direction: Direction,
    pub pattern: Option<u8>,
    pub seed: u64,
    pub results: Vec<ProbeResult>,
}

impl ExperimentReport {
    fn has_cv(&self) -> bool {
        self.results.iter().any(|r| r.cv_accuracy.is_some())
    }

    /// `experiment, accuracy, n_train, n_test, seed`, plus the
    /// cross-validated accuracy when it was computed.
    pub fn to_tsv(&self) -> String {
        let cv = self.has_cv();
        let mut out = String::from("experiment\taccuracy\tn_train\tn_test\tseed");
        if cv {
            out.push_str("\tcv_accuracy");
        }
        out.push('\n');
        for r in &self.results {
            out.push_str(&format!(
                "{}\t{:.6}\t{}\t{}\t{}",
                r.experiment, r.accuracy, r.n_train, r.n_test, r.seed
            ));
            if cv {
                out.push_str(&format!("\t{:.6}", r.cv_accuracy.unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }

    /// Plain-text accuracy table.
    pub fn to_table(&self) -> String {
        let cv = self.has_cv();
        let mut out = format!(
            "Accuracy for predicting the test sets ({} attention{})\n",
            self.direction,
            self.pattern.map_or(String::new(), |p| format!(", pattern {p}"))
        );
        out.push_str(&format!("{:<18}{:>10}", "Experiment", "Accuracy"));
        if cv {
            out.push_str(&format!("{:>10}", "CV"));
        }
        out.push_str(&format!("{:>9}{:>8}\n", "Train", "Test"));
        for r in &self.results {
            out.push_str(&format!("{:<18}{:>10.2}", r.experiment, r.accuracy));
            if cv {
                out.push_str(&format!("{:>10.2}", r.cv_accuracy.unwrap_or(f64::NAN)));
            }
            out.push_str(&format!("{:>9}{:>8}\n", r.n_train, r.n_test));
        }
        out
    }
}

/// Runs the four experiments over the store with one shared split seed.
pub fn run_experiments(
    store: &MatrixStore,
    config: &ProbeConfig,
) -> Result<ExperimentReport, ProbeError> {
    config.validate()?;
    let mut per_set = Vec::new();
    for label in SetLabel::ALL {
        let rows = load_features(store, label, config)?;
        if rows.is_empty() {
            return Err(ProbeError::MissingSet(label));
        }
        per_set.push(rows);
    }
    let mut results = Vec::new();
    for (name, labels) in EXPERIMENTS {
        let data: Vec<FeatureVector<f64>> = labels
            .iter()
            .flat_map(|l| per_set[l.index()].iter().cloned())
            .collect();
        results.push(run_experiment(name, &data, config)?);
    }
    Ok(ExperimentReport {
        direction: config.direction,
        pattern: config.pattern,
        seed: config.seed,
        results,
    })
}
