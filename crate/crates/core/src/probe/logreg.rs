use rayon::prelude::*;
use serde::Serialize;

use super::lbfgs::{minimize, Differentiable, LbfgsOptions};
use super::{FeatureVector, ProbeConfig, ProbeError};
use crate::dataset::SetLabel;
use crate::Scalar;

const ROWS_PER_TASK: usize = 256;

/// L2-regularized multinomial cross-entropy over a fixed design matrix.
///
/// Parameters are laid out as the `classes x features` weight matrix
/// (row-major) followed by one bias per class. The objective is
/// `0.5 * |W|^2 + C * sum_i CE(softmax(W x_i + b), y_i)`; the bias is not
/// penalized.
pub struct SoftmaxObjective<'a, T> {
    rows: &'a [Vec<T>],
    targets: &'a [usize],
    classes: usize,
    features: usize,
    c: T,
}

impl<'a, T: Scalar> SoftmaxObjective<'a, T> {
    pub fn new(
        rows: &'a [Vec<T>],
        targets: &'a [usize],
        classes: usize,
        c: T,
    ) -> Result<Self, ProbeError> {
        if rows.len() != targets.len() {
            return Err(ProbeError::Dimension {
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let features = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != features) {
            return Err(ProbeError::Dimension {
                expected: features,
                found: r.len(),
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
            return Err(ProbeError::InvalidConfig(format!(
                "target {t} out of range for {classes} classes"
            )));
        }
        Ok(SoftmaxObjective {
            rows,
            targets,
            classes,
            features,
            c,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Data term and its gradient for a block of rows.
    fn block(&self, params: &[T], start: usize, end: usize) -> (T, Vec<T>) {
        let (k, d) = (self.classes, self.features);
        let (w, b) = params.split_at(k * d);
        let mut loss = T::zero();
        let mut grad = vec![T::zero(); params.len()];
        let mut z = vec![T::zero(); k];
        for (x, &y) in self.rows[start..end].iter().zip(&self.targets[start..end]) {
            logits_into(w, b, x, &mut z);
            let m = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let zy = z[y];
            let mut sum = T::zero();
            for v in z.iter_mut() {
                *v = (*v - m).exp();
                sum = sum + *v;
            }
            loss = loss + sum.ln() + m - zy;
            for (class, &e) in z.iter().enumerate() {
                let p = e / sum;
                let r = if class == y { p - T::one() } else { p };
                let gw = &mut grad[class * d..(class + 1) * d];
                for (g, &xi) in gw.iter_mut().zip(x) {
                    *g = *g + r * xi;
                }
                grad[k * d + class] = grad[k * d + class] + r;
            }
        }
        (loss, grad)
    }
}

fn logits_into<T: Scalar>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let d = x.len();
    for (class, o) in out.iter_mut().enumerate() {
        let row = &w[class * d..(class + 1) * d];
        *o = row.iter().zip(x).fold(b[class], |acc, (&wi, &xi)| acc + wi * xi);
    }
}

impl<T: Scalar> Differentiable<T> for SoftmaxObjective<'_, T> {
    fn dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn evaluate(&self, params: &[T]) -> (T, Vec<T>) {
        let n = self.rows.len();
        // fixed blocks summed in order keep the result independent of
        // thread scheduling
        let starts: Vec<usize> = (0..n).step_by(ROWS_PER_TASK).collect();
        let partials: Vec<(T, Vec<T>)> = starts
            .par_iter()
            .map(|&s| self.block(params, s, (s + ROWS_PER_TASK).min(n)))
            .collect();
        let kd = self.classes * self.features;
        let mut value = T::zero();
        let mut grad = vec![T::zero(); params.len()];
        for (loss, g) in partials {
            value = value + loss;
            for (a, b) in grad.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        value = value * self.c;
        for g in grad.iter_mut() {
            *g = *g * self.c;
        }
        let half = T::of(0.5);
        for (g, &w) in grad[..kd].iter_mut().zip(&params[..kd]) {
            value = value + half * w * w;
            *g = *g + w;
        }
        (value, grad)
    }
}

/// Trained linear softmax classifier over a fixed, ordered set of labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeModel<T> {
    classes: Vec<SetLabel>,
    features: usize,
    weights: Vec<T>,
    bias: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: T,
}

impl<T: Scalar> ProbeModel<T> {
    pub fn from_parts(
        classes: Vec<SetLabel>,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, ProbeError> {
        let k = classes.len();
        if k == 0 || bias.len() != k || weights.len() % k != 0 {
            return Err(ProbeError::Dimension {
                expected: k,
                found: bias.len(),
            });
        }
        Ok(ProbeModel {
            features: weights.len() / k,
            classes,
            weights,
            bias,
            iterations: 0,
            converged: true,
            objective: T::zero(),
        })
    }

    /// Labels in class-index order.
    pub fn classes(&self) -> &[SetLabel] {
        &self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// `classes x features`, row-major.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight_norm(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w * w).sqrt()
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>, ProbeError> {
        if x.len() != self.features {
            return Err(ProbeError::Dimension {
                expected: self.features,
                found: x.len(),
            });
        }
        let mut z = vec![T::zero(); self.classes.len()];
        logits_into(&self.weights, &self.bias, x, &mut z);
        Ok(z)
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn predict_index(&self, x: &[T]) -> Result<usize, ProbeError> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[T]) -> Result<SetLabel, ProbeError> {
        Ok(self.classes[self.predict_index(x)?])
    }
}

pub(crate) fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn canonical_order<T: Scalar>(data: &[FeatureVector<T>]) -> Vec<&FeatureVector<T>> {
    let mut rows: Vec<&FeatureVector<T>> = data.iter().collect();
    rows.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.example_id.cmp(&b.example_id))
            .then_with(|| {
                let ka = a.values.iter().map(|v| v.to_f64_lossy().to_bits());
                let kb = b.values.iter().map(|v| v.to_f64_lossy().to_bits());
                ka.cmp(kb)
            })
    });
    rows
}

/// Fits the probe. Rows are put in a canonical order first, so the result
/// does not depend on the order of `data`.
pub fn train<T: Scalar>(
    data: &[FeatureVector<T>],
    config: &ProbeConfig,
) -> Result<ProbeModel<T>, ProbeError> {
    train_with_trace(data, config).map(|(m, _)| m)
}

/// Like [`train`], also returning the objective after every iteration.
pub fn train_with_trace<T: Scalar>(
    data: &[FeatureVector<T>],
    config: &ProbeConfig,
) -> Result<(ProbeModel<T>, Vec<T>), ProbeError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mut classes: Vec<SetLabel> = data.iter().map(|f| f.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ProbeError::SingleClass(classes[0]));
    }
    let ordered = canonical_order(data);
    let rows: Vec<Vec<T>> = ordered.iter().map(|f| f.values.clone()).collect();
    let targets: Vec<usize> = ordered
        .iter()
        .map(|f| classes.binary_search(&f.label).expect("label collected"))
        .collect();
    let objective = SoftmaxObjective::new(&rows, &targets, classes.len(), T::of(config.c))?;
    let options = LbfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.tolerance,
        ..LbfgsOptions::default()
    };
    let result = minimize(&objective, vec![T::zero(); objective.dim()], &options);
    let kd = classes.len() * objective.features();
    let mut params = result.x;
    let bias = params.split_off(kd);
    if params.iter().chain(&bias).any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    let model = ProbeModel {
        features: objective.features(),
        classes,
        weights: params,
        bias,
        iterations: result.iterations,
        converged: result.converged,
        objective: result.value,
    };
    Ok((model, result.history))
}
