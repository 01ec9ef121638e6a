//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segfit::DataSet;

pub fn design(ds: &DataSet, r: Range<usize>) -> (DMatrix<f64>, DVector<f64>) {
    let d = ds.d();
    let x = DMatrix::from_fn(r.len(), d, |i, j| ds.row(r.start + i)[j]);
    let y = DVector::from_iterator(r.len(), ds.y()[r].iter().copied());
    (x, y)
}

/// Minimum-norm least-squares residual on `r`, through an SVD.
pub fn segment_sse(ds: &DataSet, r: Range<usize>) -> f64 {
    let (x, y) = design(ds, r);
    let svd = x.clone().svd(true, true);
    let theta = svd.solve(&y, 1e-12).expect("svd solve");
    (y - x * theta).norm_squared()
}

/// All `r`-subsets of `items`, in lexicographic order.
pub fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for (i, &v) in items.iter().enumerate() {
            cur.push(v);
            go(&items[i + 1..], r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, r, &mut Vec::new(), &mut out);
    out
}

fn partition_sse(ds: &DataSet, cuts: &[usize]) -> f64 {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cuts);
    bounds.push(ds.n());
    bounds.windows(2).map(|w| segment_sse(ds, w[0]..w[1])).sum()
}

/// Smallest SSE over every placement of `pieces − 1` cuts drawn from `allowed`.
pub fn best_restricted_sse(ds: &DataSet, allowed: &[usize], pieces: usize) -> f64 {
    combinations(allowed, pieces - 1)
        .iter()
        .map(|cuts| partition_sse(ds, cuts))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest SSE over every `k`-piece partition.
pub fn best_partition_sse(ds: &DataSet, k: usize) -> f64 {
    let all: Vec<usize> = (1..ds.n()).collect();
    best_restricted_sse(ds, &all, k)
}

/// Rows `(1, t)` (or `(1)` for `d = 1`) with sorted uniform `t` and a noisy
/// step response.
pub fn small_dataset(seed: u64, n: usize, d: usize) -> DataSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    t.sort_by(f64::total_cmp);
    let jump = rng.random_range(1..n.max(2));
    let rows: Vec<Vec<f64>> = t
        .iter()
        .map(|&v| if d == 1 { vec![1.0] } else { vec![1.0, v] })
        .collect();
    let y = t
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let level = if i < jump { 0.5 } else { -1.0 };
            level + 2.0 * v + rng.random_range(-0.5..0.5)
        })
        .collect();
    DataSet::from_rows(&rows, y, d - 1).unwrap()
}

/// Gaussian rows, sorted by column 0, with Gaussian responses.
pub fn gaussian_dataset(seed: u64, n: usize, d: usize) -> DataSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    DataSet::from_rows(&rows, y, 0).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
