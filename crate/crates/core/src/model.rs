//! Core domain types: datasets, partitions, fitted piecewise models, and the
//! error metrics every estimator reports.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::linalg::dense::dot;

/// Relative ridge applied to every Gram matrix, per column: `λ_j = RIDGE_REL · mean_i x_ij²`.
pub const RIDGE_REL: f64 = 1e-10;

/// Fixed-design regression data, rows sorted by the partition coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
    partition_col: usize,
    ridge: Vec<f64>,
}

impl DataSet {
    /// Builds a dataset from a row-major `n × d` feature buffer.
    ///
    /// Rows must already be sorted by `partition_col`; use [`DataSet::from_unsorted`]
    /// when they are not.
    pub fn new(x: Vec<f64>, d: usize, y: Vec<f64>, partition_col: usize) -> Result<Self> {
        Self::validate_shape(&x, d, &y, partition_col)?;
        let n = y.len();
        for i in 1..n {
            if x[i * d + partition_col] < x[(i - 1) * d + partition_col] {
                return Err(Error::InvalidData(format!(
                    "rows are not sorted by column {partition_col} (row {i})"
                )));
            }
        }
        let ridge = column_ridge(&x, n, d);
        Ok(Self {
            x,
            y,
            n,
            d,
            partition_col,
            ridge,
        })
    }

    /// Sorts rows stably by `partition_col` and returns the dataset together with
    /// `order`, where `order[i]` is the original index of sorted row `i`.
    pub fn from_unsorted(
        x: Vec<f64>,
        d: usize,
        y: Vec<f64>,
        partition_col: usize,
    ) -> Result<(Self, Vec<usize>)> {
        Self::validate_shape(&x, d, &y, partition_col)?;
        let n = y.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a * d + partition_col].total_cmp(&x[b * d + partition_col]));
        let mut xs = Vec::with_capacity(x.len());
        let mut ys = Vec::with_capacity(n);
        for &i in &order {
            xs.extend_from_slice(&x[i * d..(i + 1) * d]);
            ys.push(y[i]);
        }
        Ok((Self::new(xs, d, ys, partition_col)?, order))
    }

    /// Convenience constructor from per-row vectors.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, partition_col: usize) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(structural("rows have differing lengths"));
        }
        Self::new(rows.concat(), d, y, partition_col)
    }

    fn validate_shape(x: &[f64], d: usize, y: &[f64], partition_col: usize) -> Result<()> {
        let n = y.len();
        if n == 0 || d == 0 {
            return Err(structural("dataset needs n >= 1 and d >= 1"));
        }
        if x.len() != n * d {
            return Err(structural(format!(
                "feature buffer has {} entries, expected {n}x{d}",
                x.len()
            )));
        }
        if partition_col >= d {
            return Err(Error::Parameter(format!(
                "partition column {partition_col} out of range for d={d}"
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite response at row {i}"
            )));
        }
        for (i, row) in x.chunks_exact(d).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite feature in row {i}")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidData(format!("row {i} is the zero vector")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn partition_col(&self) -> usize {
        self.partition_col
    }

    /// Feature row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Value of the partition coordinate on row `i`.
    pub fn coord(&self, i: usize) -> f64 {
        self.x[i * self.d + self.partition_col]
    }

    /// Diagonal ridge used by every least-squares solve on this dataset.
    pub fn ridge(&self) -> &[f64] {
        &self.ridge
    }

    /// Same design, different responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n {
            return Err(structural("response length does not match n"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite response".into()));
        }
        Ok(Self { y, ..self.clone() })
    }
}

fn column_ridge(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut sums = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    sums.into_iter()
        .map(|s| {
            let mean = s / n as f64;
            if mean > 0.0 {
                RIDGE_REL * mean
            } else {
                RIDGE_REL
            }
        })
        .collect()
}

/// Ordered cover of `0..n` by non-empty half-open index intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    bounds: Vec<usize>,
}

impl Partition {
    /// `bounds` must read `0 = b0 < b1 < ... < bm = n` with `m >= 1`.
    pub fn new(bounds: Vec<usize>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(structural("a partition needs at least one interval"));
        }
        if bounds[0] != 0 {
            return Err(structural("partition must start at index 0"));
        }
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(structural("partition bounds must be strictly increasing"));
        }
        Ok(Self { bounds })
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![0, n])
    }

    /// One interval per point.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..=n).collect())
    }

    /// Interior cut points `b1..b_{m-1}` together with the outer bounds.
    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn interior_cuts(&self) -> &[usize] {
        &self.bounds[1..self.bounds.len() - 1]
    }

    pub fn piece_count(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn n(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn interval(&self, piece: usize) -> Range<usize> {
        self.bounds[piece]..self.bounds[piece + 1]
    }

    pub fn intervals(&self) -> impl ExactSizeIterator<Item = Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }

    /// Index of the interval containing row `i`.
    pub fn piece_of(&self, i: usize) -> Option<usize> {
        if i >= self.n() {
            return None;
        }
        Some(self.bounds.partition_point(|&b| b <= i) - 1)
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;

    fn try_from(bounds: Vec<usize>) -> Result<Self> {
        Self::new(bounds)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.bounds
    }
}

/// A partition plus one coefficient vector per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearModel {
    partition: Partition,
    thetas: Vec<Vec<f64>>,
}

impl PiecewiseLinearModel {
    pub fn new(partition: Partition, thetas: Vec<Vec<f64>>) -> Result<Self> {
        if thetas.len() != partition.piece_count() {
            return Err(structural(format!(
                "{} coefficient vectors for {} pieces",
                thetas.len(),
                partition.piece_count()
            )));
        }
        if let Some(first) = thetas.first() {
            if thetas.iter().any(|t| t.len() != first.len()) {
                return Err(structural("coefficient vectors differ in dimension"));
            }
        }
        Ok(Self { partition, thetas })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn piece_count(&self) -> usize {
        self.partition.piece_count()
    }

    /// Fitted values `⟨θ_piece(i), x_i⟩` for every row of `dataset`.
    pub fn predict(&self, dataset: &DataSet) -> Result<Vec<f64>> {
        if self.partition.n() != dataset.n() {
            return Err(structural(format!(
                "model covers {} rows, dataset has {}",
                self.partition.n(),
                dataset.n()
            )));
        }
        if self.thetas[0].len() != dataset.d() {
            return Err(structural("coefficient dimension does not match d"));
        }
        let mut out = Vec::with_capacity(dataset.n());
        for (range, theta) in self.partition.intervals().zip(&self.thetas) {
            out.extend(range.map(|i| dot(theta, dataset.row(i))));
        }
        Ok(out)
    }
}

/// Output of one estimator run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: PiecewiseLinearModel,
    /// Per-piece residual sum of squares against the responses.
    pub piece_sse: Vec<f64>,
    /// Total residual sum of squares against the responses.
    pub sse: f64,
    /// Mean squared error against known ground truth, synthetic runs only.
    pub mse_vs_truth: Option<f64>,
    /// Seconds spent inside the fit.
    pub wall_time: f64,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub(crate) fn new(model: PiecewiseLinearModel, dataset: &DataSet, wall_time: f64) -> Self {
        let pred = model
            .predict(dataset)
            .expect("estimators build models matching their dataset");
        let piece_sse: Vec<f64> = model
            .partition()
            .intervals()
            .map(|r| squared_distance(&pred[r.clone()], &dataset.y()[r]))
            .collect();
        let sse = squared_distance(&pred, dataset.y());
        Self {
            model,
            piece_sse,
            sse,
            mse_vs_truth: None,
            wall_time,
            warnings: Vec::new(),
        }
    }

    /// Records the MSE of the fitted values against `truth`.
    pub fn score_against(&mut self, dataset: &DataSet, truth: &[f64]) -> Result<f64> {
        let mse = mse(&self.model.predict(dataset)?, truth)?;
        self.mse_vs_truth = Some(mse);
        Ok(mse)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (p, t)| {
        let r = t - p;
        acc + r * r
    })
}

/// `(1/n) Σ (truth_i − predicted_i)²`.
pub fn mse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(structural(format!(
            "length mismatch: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(structural("mse of empty vectors"));
    }
    Ok(squared_distance(predicted, truth) / predicted.len() as f64)
}

/// Total squared residual of `model` against the responses of `dataset`.
pub fn sse_against_responses(model: &PiecewiseLinearModel, dataset: &DataSet) -> Result<f64> {
    Ok(squared_distance(&model.predict(dataset)?, dataset.y()))
}

pub fn predict(model: &PiecewiseLinearModel, dataset: &DataSet) -> Result<Vec<f64>> {
    model.predict(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize, v: f64) -> DataSet {
        DataSet::new(vec![v; n], 1, vec![0.0; n], 0).unwrap()
    }

    #[test]
    fn predict_constant_and_piecewise() {
        let m = PiecewiseLinearModel::new(Partition::single(3).unwrap(), vec![vec![2.0]]).unwrap();
        assert_eq!(m.predict(&ones(3, 1.0)).unwrap(), vec![2.0, 2.0, 2.0]);

        let m = PiecewiseLinearModel::new(
            Partition::new(vec![0, 2, 4]).unwrap(),
            vec![vec![0.0], vec![1.0]],
        )
        .unwrap();
        assert_eq!(m.predict(&ones(4, 3.0)).unwrap(), vec![0.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn predict_affine_line() {
        let ds = DataSet::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]],
            vec![0.0; 3],
            1,
        )
        .unwrap();
        let m =
            PiecewiseLinearModel::new(Partition::single(3).unwrap(), vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(m.predict(&ds).unwrap(), vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn predict_size_mismatch() {
        let m = PiecewiseLinearModel::new(Partition::single(2).unwrap(), vec![vec![1.0]]).unwrap();
        assert!(matches!(
            m.predict(&ones(3, 1.0)),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0; 4], &[2.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(mse(&[0.0], &[0.0, 1.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn sse_examples() {
        let ds = DataSet::new(vec![1.0, 1.0], 1, vec![1.0, 1.0], 0).unwrap();
        let zero =
            PiecewiseLinearModel::new(Partition::single(2).unwrap(), vec![vec![0.0]]).unwrap();
        assert_eq!(sse_against_responses(&zero, &ds).unwrap(), 2.0);
        let perfect =
            PiecewiseLinearModel::new(Partition::single(2).unwrap(), vec![vec![1.0]]).unwrap();
        assert_eq!(sse_against_responses(&perfect, &ds).unwrap(), 0.0);
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0]).is_err());
        assert!(Partition::new(vec![1, 3]).is_err());
        assert!(Partition::new(vec![0, 2, 2, 4]).is_err());
        let p = Partition::new(vec![0, 2, 5, 6]).unwrap();
        assert_eq!(p.piece_count(), 3);
        assert_eq!(p.interior_cuts(), &[2, 5]);
        assert_eq!(p.piece_of(0), Some(0));
        assert_eq!(p.piece_of(2), Some(1));
        assert_eq!(p.piece_of(5), Some(2));
        assert_eq!(p.piece_of(6), None);
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        assert!(matches!(
            DataSet::new(vec![1.0, 0.0], 1, vec![1.0, 2.0], 0),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(
            DataSet::new(vec![1.0, f64::NAN], 1, vec![1.0, 2.0], 0),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(
            DataSet::new(vec![2.0, 1.0], 1, vec![1.0, 2.0], 0),
            Err(Error::InvalidData(_))
        ));
        assert!(DataSet::new(vec![1.0], 1, vec![1.0], 1).is_err());
    }

    #[test]
    fn unsorted_rows_are_sorted_stably() {
        let (ds, order) =
            DataSet::from_unsorted(vec![3.0, 1.0, 2.0, 1.0], 1, vec![30.0, 10.0, 20.0, 11.0], 0)
                .unwrap();
        assert_eq!(order, vec![1, 3, 2, 0]);
        assert_eq!(ds.y(), &[10.0, 11.0, 20.0, 30.0]);
    }
}
