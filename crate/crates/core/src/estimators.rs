//! Exact dynamic program over all `k`-piece index partitions, and the
//! restricted variant that only cuts at a given set of breakpoints.
//!
//! Both fill `A(i, j)`, the best SSE of a `j`-piece fit to the first `i`
//! points, with `A(i, j) = min_{i' < i} err(i', i) + A(i', j − 1)`.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{parameter, Error, Result};
use crate::linalg::{
    self, build_error_table_with_cap, least_squares, SegmentStats, DEFAULT_TABLE_CAP,
};
use crate::model::{DataSet, FitReport, Partition, PiecewiseLinearModel};

/// Where the exact DP reads interval errors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpMode {
    /// Recompute each start's error sweep on the fly, `O(n)` error memory.
    #[default]
    Streaming,
    /// Materialize the full `O(n²)` error table first; falls back to
    /// streaming above the table cap.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpOptions {
    pub mode: DpMode,
    pub table_cap: usize,
    /// Starts whose sweeps are computed together in streaming mode.
    pub block: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            mode: DpMode::Streaming,
            table_cap: DEFAULT_TABLE_CAP,
            block: 64,
        }
    }
}

/// Filled DP table: `best(i, j)` and the predecessor that achieved it.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    rows: usize,
    pieces: usize,
    // layer-major: entry (i, j) lives at j * rows + i
    best: Vec<f64>,
    back: Vec<usize>,
}

impl DpTable {
    fn new(points: usize, pieces: usize) -> Self {
        let rows = points + 1;
        let mut best = vec![f64::INFINITY; rows * (pieces + 1)];
        best[0] = 0.0;
        Self {
            rows,
            pieces,
            best,
            back: vec![0; rows * (pieces + 1)],
        }
    }

    /// Best SSE of a `j`-piece fit to the first `i` points (`∞` when `i < j`).
    pub fn best(&self, i: usize, j: usize) -> f64 {
        self.best[j * self.rows + i]
    }

    /// Start of the last piece in the optimal `j`-piece fit of the first `i` points.
    pub fn predecessor(&self, i: usize, j: usize) -> usize {
        self.back[j * self.rows + i]
    }

    pub fn max_pieces(&self) -> usize {
        self.pieces
    }

    /// Relaxes every cell reachable from start `a` given `errs[m] = err(a, a+m+1)`.
    /// Ties keep the earlier (smaller) start.
    fn relax(&mut self, a: usize, errs: &[f64]) {
        let rows = self.rows;
        for j in 1..=self.pieces {
            let prev = self.best[(j - 1) * rows + a];
            if !prev.is_finite() {
                continue;
            }
            let layer = j * rows;
            let best = &mut self.best[layer + a + 1..layer + a + 1 + errs.len()];
            let back = &mut self.back[layer + a + 1..layer + a + 1 + errs.len()];
            for ((cell, pred), e) in best.iter_mut().zip(back.iter_mut()).zip(errs) {
                let cand = prev + e;
                if cand < *cell {
                    *cell = cand;
                    *pred = a;
                }
            }
        }
    }

    /// Cut points `0 = b0 < ... < b_pieces = points` of the optimal fit.
    fn bounds(&self, points: usize, pieces: usize) -> Vec<usize> {
        let mut bounds = vec![points];
        let mut i = points;
        for j in (1..=pieces).rev() {
            i = self.predecessor(i, j);
            bounds.push(i);
        }
        bounds.reverse();
        debug_assert_eq!(bounds[0], 0);
        bounds
    }
}

fn check_pieces(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(parameter("k must be at least 1"));
    }
    if k > n {
        return Err(parameter(format!("k={k} exceeds n={n}")));
    }
    Ok(())
}

/// Fills the exact DP table for up to `k` pieces.
pub fn exact_dp_table(dataset: &DataSet, k: usize, options: &DpOptions) -> Result<DpTable> {
    let n = dataset.n();
    check_pieces(n, k)?;
    let mut table = DpTable::new(n, k);

    if options.mode == DpMode::Table && n <= options.table_cap {
        let errs = build_error_table_with_cap(dataset, options.table_cap)?;
        for a in 0..n {
            table.relax(a, errs.row(a));
        }
        return Ok(table);
    }

    let block = options.block.max(1);
    let mut buffers: Vec<Vec<f64>> = (0..block.min(n)).map(|_| vec![0.0; n]).collect();
    for block_start in (0..n).step_by(block) {
        let block_end = (block_start + block).min(n);
        buffers[..block_end - block_start]
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(off, buf)| {
                let a = block_start + off;
                linalg::sweep_errors(dataset, a, &mut buf[..n - a])
            })?;
        for (off, buf) in buffers[..block_end - block_start].iter().enumerate() {
            let a = block_start + off;
            table.relax(a, &buf[..n - a]);
        }
    }
    Ok(table)
}

/// Per-interval least-squares refit of a partition.
pub fn refit(dataset: &DataSet, partition: Partition) -> Result<PiecewiseLinearModel> {
    let thetas = partition
        .intervals()
        .map(|r| least_squares(dataset, r).map(|f| f.theta))
        .collect::<Result<Vec<_>>>()?;
    PiecewiseLinearModel::new(partition, thetas)
}

/// The least-squares `k`-piecewise linear fit over all index partitions.
pub fn fit_exact_dp(dataset: &DataSet, k: usize) -> Result<FitReport> {
    fit_exact_dp_with(dataset, k, &DpOptions::default())
}

pub fn fit_exact_dp_with(dataset: &DataSet, k: usize, options: &DpOptions) -> Result<FitReport> {
    let started = Instant::now();
    let table = exact_dp_table(dataset, k, options)?;
    let partition = Partition::new(table.bounds(dataset.n(), k))?;
    let model = refit(dataset, partition)?;
    let mut report = FitReport::new(model, dataset, started.elapsed().as_secs_f64());
    if options.mode == DpMode::Table && dataset.n() > options.table_cap {
        report.warnings.push(format!(
            "n={} exceeds the error-table cap {}; used streaming sweeps",
            dataset.n(),
            options.table_cap
        ));
    }
    Ok(report)
}

/// Optimal `pieces`-piece fit whose interior cuts all lie in `allowed`.
///
/// `allowed` must be strictly increasing within `1..n`. Segment fits are
/// assembled from per-block statistics and solved directly, since candidate
/// segments grow by whole blocks rather than single rows.
pub fn fit_restricted_dp(dataset: &DataSet, allowed: &[usize], pieces: usize) -> Result<FitReport> {
    let started = Instant::now();
    let n = dataset.n();
    if allowed.windows(2).any(|w| w[0] >= w[1]) {
        return Err(parameter("allowed breakpoints must be strictly increasing"));
    }
    if allowed.first().is_some_and(|&b| b == 0) || allowed.last().is_some_and(|&b| b >= n) {
        return Err(parameter(format!("allowed breakpoints must lie in 1..{n}")));
    }
    let blocks = allowed.len() + 1;
    if pieces == 0 || pieces > blocks {
        return Err(Error::Parameter(format!(
            "{pieces} pieces requested but only {blocks} are attainable"
        )));
    }

    let mut cuts = Vec::with_capacity(blocks + 1);
    cuts.push(0);
    cuts.extend_from_slice(allowed);
    cuts.push(n);
    let block_stats: Vec<SegmentStats> = cuts
        .windows(2)
        .map(|w| SegmentStats::from_range(dataset, w[0]..w[1]))
        .collect();

    let ridge = dataset.ridge();
    let mut table = DpTable::new(blocks, pieces);
    let mut errs = vec![0.0; blocks];
    for p in 0..blocks {
        let mut acc = SegmentStats::empty(dataset.d());
        for q in p..blocks {
            acc.absorb(&block_stats[q]);
            let theta = acc.solve(ridge)?;
            errs[q - p] = acc.closed_form_sse(&theta);
        }
        table.relax(p, &errs[..blocks - p]);
    }

    let bounds = table
        .bounds(blocks, pieces)
        .into_iter()
        .map(|b| cuts[b])
        .collect();
    let model = refit(dataset, Partition::new(bounds)?)?;
    Ok(FitReport::new(
        model,
        dataset,
        started.elapsed().as_secs_f64(),
    ))
}
