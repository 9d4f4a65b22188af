//! Shared domain types: dense matrices, feature and probability matrices,
//! cluster state, label vectors and loss records.
//!
//! Everything here is an immutable value object once constructed. The
//! constructors enforce the invariants; algorithms elsewhere in the crate
//! may rely on them without re-checking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on each row sum of a [`ProbabilityMatrix`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("shape mismatch: {what}")]
    Shape { what: String },
    #[error("alpha must be positive and finite (got {0})")]
    Alpha(f64),
    #[error("at least two clusters are required (got {0})")]
    TooFewClusters(usize),
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = ModelError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(ModelError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ModelError::Shape {
                    what: format!("row {i} has {} entries, expected {cols}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, zero-column matrices yield empty rows instead
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|idx| (idx / self.cols.max(1), idx % self.cols.max(1)))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, ModelError> {
        if self.cols != other.rows {
            return Err(ModelError::Shape {
                what: format!(
                    "cannot multiply {}x{} by {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

/// N×D matrix of extracted feature vectors. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct FeatureMatrix(Matrix);

impl TryFrom<Matrix> for FeatureMatrix {
    type Error = ModelError;

    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        FeatureMatrix::new(m)
    }
}

impl From<FeatureMatrix> for Matrix {
    fn from(f: FeatureMatrix) -> Self {
        f.0
    }
}

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self, ModelError> {
        if m.rows == 0 || m.cols == 0 {
            return Err(ModelError::Empty {
                rows: m.rows,
                cols: m.cols,
            });
        }
        if let Some((row, col)) = m.first_non_finite() {
            return Err(ModelError::NonFinite { row, col });
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ModelError> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n_samples(&self) -> usize {
        self.0.rows
    }

    pub fn n_features(&self) -> usize {
        self.0.cols
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

/// N×K row-stochastic matrix.
///
/// Holds soft assignments, sharpened targets, transformed-sample predictions
/// and temporally ensembled predictions alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct ProbabilityMatrix(Matrix);

impl TryFrom<Matrix> for ProbabilityMatrix {
    type Error = ModelError;

    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        ProbabilityMatrix::new(m)
    }
}

impl From<ProbabilityMatrix> for Matrix {
    fn from(p: ProbabilityMatrix) -> Self {
        p.0
    }
}

impl ProbabilityMatrix {
    pub fn new(m: Matrix) -> Result<Self, ModelError> {
        validate_probability_matrix(&m)?;
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ModelError> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Wraps a matrix produced by an in-crate normalization routine. Callers
    /// guarantee row-stochasticity up to rounding unless inputs were
    /// non-finite, which training detects through the loss.
    pub(crate) fn from_normalized(m: Matrix) -> Self {
        Self(m)
    }

    pub fn n_samples(&self) -> usize {
        self.0.rows
    }

    pub fn n_clusters(&self) -> usize {
        self.0.cols
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.0.get(i, k)
    }

    /// Index of the largest entry per row; ties go to the lowest index.
    pub fn argmax(&self) -> LabelVector {
        let labels = self
            .0
            .iter_rows()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        LabelVector::new(labels)
    }
}

/// Checks that `m` is non-negative with every row summing to one within
/// [`ROW_SUM_TOLERANCE`]. Reports the first offending row.
pub fn validate_probability_matrix(m: &Matrix) -> Result<(), ModelError> {
    if m.rows == 0 || m.cols == 0 {
        return Err(ModelError::Empty {
            rows: m.rows,
            cols: m.cols,
        });
    }
    for (row, values) in m.iter_rows().enumerate() {
        for (col, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { row, col });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeEntry { row, col, value });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(ModelError::RowSum { row, sum });
        }
    }
    Ok(())
}

/// Cluster centers, the trainable linear projection and the Student's t
/// degrees of freedom.
///
/// Embedded points are `z = x · projection_weights − projection_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClusterState")]
pub struct ClusterState {
    centers: Matrix,
    projection_weights: Matrix,
    projection_offset: Vec<f64>,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawClusterState {
    centers: Matrix,
    projection_weights: Matrix,
    projection_offset: Vec<f64>,
    alpha: f64,
}

impl TryFrom<RawClusterState> for ClusterState {
    type Error = ModelError;

    fn try_from(raw: RawClusterState) -> Result<Self, Self::Error> {
        ClusterState::new(
            raw.centers,
            raw.projection_weights,
            raw.projection_offset,
            raw.alpha,
        )
    }
}

impl ClusterState {
    pub fn new(
        centers: Matrix,
        projection_weights: Matrix,
        projection_offset: Vec<f64>,
        alpha: f64,
    ) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::Alpha(alpha));
        }
        if centers.rows() < 2 {
            return Err(ModelError::TooFewClusters(centers.rows()));
        }
        let embed = centers.cols();
        if projection_weights.cols() != embed || projection_offset.len() != embed {
            return Err(ModelError::Shape {
                what: format!(
                    "centers are {}-dimensional but projection maps to {} with offset length {}",
                    embed,
                    projection_weights.cols(),
                    projection_offset.len()
                ),
            });
        }
        if projection_weights.rows() == 0 || embed == 0 {
            return Err(ModelError::Empty {
                rows: projection_weights.rows(),
                cols: embed,
            });
        }
        for m in [&centers, &projection_weights] {
            if let Some((row, col)) = m.first_non_finite() {
                return Err(ModelError::NonFinite { row, col });
            }
        }
        if let Some(col) = projection_offset.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row: 0, col });
        }
        Ok(Self {
            centers,
            projection_weights,
            projection_offset,
            alpha,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.projection_weights.rows()
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn projection_weights(&self) -> &Matrix {
        &self.projection_weights
    }

    pub fn projection_offset(&self) -> &[f64] {
        &self.projection_offset
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Mutable access for optimizers; shapes cannot change through these.
    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (
            self.centers.as_mut_slice(),
            self.projection_weights.as_mut_slice(),
            &mut self.projection_offset,
        )
    }

    /// Maps features into the embedded space.
    pub fn project(&self, x: &FeatureMatrix) -> Result<Matrix, ModelError> {
        if x.n_features() != self.input_dim() {
            return Err(ModelError::Shape {
                what: format!(
                    "features have {} columns, projection expects {}",
                    x.n_features(),
                    self.input_dim()
                ),
            });
        }
        let mut z = x.matrix().matmul(&self.projection_weights)?;
        for r in 0..z.rows() {
            for (v, o) in z.row_mut(r).iter_mut().zip(&self.projection_offset) {
                *v -= o;
            }
        }
        Ok(z)
    }
}

/// Per-sample non-negative integer ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of label slots, `max + 1`; zero when empty.
    pub fn label_bound(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Number of distinct ids present.
    pub fn distinct(&self) -> usize {
        let mut seen = vec![false; self.label_bound()];
        self.0.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    /// Renames ids to `0..distinct` in order of first appearance of each
    /// sorted id value, so `[7, 3, 7]` becomes `[1, 0, 1]`.
    pub fn remap_contiguous(&self) -> LabelVector {
        let mut ids: Vec<usize> = self.0.clone();
        ids.sort_unstable();
        ids.dedup();
        let labels = self
            .0
            .iter()
            .map(|l| ids.binary_search(l).expect("id present"))
            .collect();
        LabelVector(labels)
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// One epoch's loss decomposition: KL term, weighted consistency term and
/// the ramp weight in effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub omega: f64,
}

impl LossBreakdown {
    pub fn new(l1: f64, l2: f64, omega: f64) -> Self {
        let l2 = if omega == 0.0 { 0.0 } else { l2 };
        Self {
            l1,
            l2,
            total: l1 + l2,
            omega,
        }
    }
}
