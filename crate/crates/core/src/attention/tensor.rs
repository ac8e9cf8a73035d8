use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AttentionError, TokenizedExample};
use crate::Scalar;

/// Which attention weight between the two focus tokens a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Query at the hyponym, key at the hypernym.
    Forward,
    /// Query at the hypernym, key at the hyponym.
    Backward,
    /// Elementwise mean of forward and backward.
    Average,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Forward, Direction::Backward, Direction::Average];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Average => "average",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "forward" | "f" => Ok(Direction::Forward),
            "backward" | "b" => Ok(Direction::Backward),
            "average" | "a" | "avg" => Ok(Direction::Average),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Full self-attention of one sequence: `a[l][h][i][j]` is the weight from
/// query position `i` to key position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor<T> {
    layers: usize,
    heads: usize,
    seq_len: usize,
    values: Vec<T>,
}

impl<T: Scalar> AttentionTensor<T> {
    pub fn new(
        layers: usize,
        heads: usize,
        seq_len: usize,
        values: Vec<T>,
    ) -> Result<Self, AttentionError> {
        let expected = layers * heads * seq_len * seq_len;
        if values.len() != expected {
            return Err(AttentionError::Shape(format!(
                "{} values for a {layers}x{heads}x{seq_len}x{seq_len} tensor",
                values.len()
            )));
        }
        Ok(AttentionTensor {
            layers,
            heads,
            seq_len,
            values,
        })
    }

    /// Every row equal to `1/seq_len`.
    pub fn uniform(layers: usize, heads: usize, seq_len: usize) -> Self {
        let v = T::one() / T::of(seq_len as f64);
        AttentionTensor {
            layers,
            heads,
            seq_len,
            values: vec![v; layers * heads * seq_len * seq_len],
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn offset(&self, l: usize, h: usize, i: usize) -> usize {
        ((l * self.heads + h) * self.seq_len + i) * self.seq_len
    }

    pub fn get(&self, l: usize, h: usize, i: usize, j: usize) -> T {
        self.values[self.offset(l, h, i) + j]
    }

    pub fn set(&mut self, l: usize, h: usize, i: usize, j: usize, v: T) {
        let o = self.offset(l, h, i);
        self.values[o + j] = v;
    }

    pub fn row(&self, l: usize, h: usize, i: usize) -> &[T] {
        let o = self.offset(l, h, i);
        &self.values[o..o + self.seq_len]
    }

    /// Checks that entries lie in [0, 1] and every row sums to one.
    pub fn check_row_stochastic(&self, tol: f64) -> Result<(), AttentionError> {
        for l in 0..self.layers {
            for h in 0..self.heads {
                for i in 0..self.seq_len {
                    let row = self.row(l, h, i);
                    let mut sum = 0.0f64;
                    for &v in row {
                        let v = v.to_f64_lossy();
                        if !(0.0..=1.0 + tol).contains(&v) {
                            return Err(AttentionError::NotStochastic(format!(
                                "entry {v} at layer {l} head {h} row {i}"
                            )));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > tol {
                        return Err(AttentionError::NotStochastic(format!(
                            "row sum {sum} at layer {l} head {h} row {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Layers x heads grid of the attention between the two focus tokens of
/// one example, stored layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix<T> {
    layers: usize,
    heads: usize,
    values: Vec<T>,
    pub direction: Direction,
    pub example_id: u64,
}

impl<T: Scalar> AttentionMatrix<T> {
    pub fn new(
        layers: usize,
        heads: usize,
        values: Vec<T>,
        direction: Direction,
        example_id: u64,
    ) -> Result<Self, AttentionError> {
        if values.len() != layers * heads {
            return Err(AttentionError::Shape(format!(
                "{} values for a {layers}x{heads} matrix",
                values.len()
            )));
        }
        Ok(AttentionMatrix {
            layers,
            heads,
            values,
            direction,
            example_id,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], direction: Direction, example_id: u64) -> Result<Self, AttentionError> {
        let heads = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != heads) {
            return Err(AttentionError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), heads, rows.concat(), direction, example_id)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn get(&self, layer: usize, head: usize) -> T {
        self.values[layer * self.heads + head]
    }

    /// Layer-major values, `v[l * heads + h]`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.values.chunks(self.heads.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn cast<U: Scalar>(&self) -> AttentionMatrix<U> {
        AttentionMatrix {
            layers: self.layers,
            heads: self.heads,
            values: self
                .values
                .iter()
                .map(|v| U::of(v.to_f64_lossy()))
                .collect(),
            direction: self.direction,
            example_id: self.example_id,
        }
    }
}

/// Reads the focus-token attention out of a full tensor.
pub fn extract_matrix<T: Scalar>(
    tensor: &AttentionTensor<T>,
    tok: &TokenizedExample,
    direction: Direction,
) -> Result<AttentionMatrix<T>, AttentionError> {
    let s = tensor.seq_len();
    let (src, tgt) = (tok.source_pos, tok.target_pos);
    if src >= s || tgt >= s {
        return Err(AttentionError::PositionOutOfRange {
            position: src.max(tgt),
            seq_len: s,
        });
    }
    let half = T::of(0.5);
    let mut values = Vec::with_capacity(tensor.layers() * tensor.heads());
    for l in 0..tensor.layers() {
        for h in 0..tensor.heads() {
            let fwd = tensor.get(l, h, src, tgt);
            let bwd = tensor.get(l, h, tgt, src);
            values.push(match direction {
                Direction::Forward => fwd,
                Direction::Backward => bwd,
                Direction::Average => (fwd + bwd) * half,
            });
        }
    }
    AttentionMatrix::new(tensor.layers(), tensor.heads(), values, direction, tok.example_id)
}
