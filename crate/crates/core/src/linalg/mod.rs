//! Dense least-squares kernels: direct ridge-stabilized solves, the
//! Sherman-Morrison interval sweep, and the triangular interval-error table
//! behind the exact dynamic program.

pub mod dense;
mod gram;

use std::ops::Range;

use rayon::prelude::*;

use gram::ridge_penalty;
pub use gram::{GramState, SegmentStats, SINGULAR_DENOMINATOR};

use crate::error::{structural, Error, Result};
use crate::model::DataSet;
use dense::{add_outer, dot, Cholesky};

/// Largest `n` for which [`build_error_table`] materializes the `O(n²)` table.
pub const DEFAULT_TABLE_CAP: usize = 20_000;

/// A sweep keeps solving directly until the smallest squared Cholesky pivot
/// reaches this fraction of the largest Gram diagonal.
const SEED_PIVOT_RATIO: f64 = 1e-8;

fn direct_phase_cap(d: usize) -> usize {
    (4 * d).max(64)
}

/// Least-squares coefficients and residual sum of squares on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub theta: Vec<f64>,
    pub sse: f64,
}

/// Refinement steps applied on top of the ridge-stabilized solve.
const REFINE_STEPS: usize = 3;

/// Direct least-squares fit on `interval`: Cholesky solve of the
/// ridge-stabilized normal equations, SSE summed from explicit residuals.
///
/// A few steps of iterative refinement against the unregularized equations,
/// `θ += (XᵀX + Λ)⁻¹ Xᵀ(y − Xθ)`, remove most of the ridge bias on
/// nearly singular intervals; a step is kept only if it lowers the SSE.
pub fn least_squares(dataset: &DataSet, interval: Range<usize>) -> Result<LeastSquaresFit> {
    check_interval(dataset, &interval)?;
    let stats = SegmentStats::from_range(dataset, interval.clone());
    let factor = stats.factor(dataset.ridge())?;
    let mut theta = factor.solve(&stats.xty);
    let mut sse = residual_sse(dataset, interval.clone(), &theta);
    let d = dataset.d();
    for _ in 0..REFINE_STEPS {
        let mut g = vec![0.0; d];
        for i in interval.clone() {
            let x = dataset.row(i);
            let r = dataset.y()[i] - dot(&theta, x);
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += xj * r;
            }
        }
        let step = factor.solve(&g);
        let next: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
        let next_sse = residual_sse(dataset, interval.clone(), &next);
        if !(next_sse < sse) {
            break;
        }
        theta = next;
        sse = next_sse;
    }
    Ok(LeastSquaresFit { theta, sse })
}

pub(crate) fn check_interval(dataset: &DataSet, interval: &Range<usize>) -> Result<()> {
    if interval.start >= interval.end {
        return Err(structural(format!("empty interval {interval:?}")));
    }
    if interval.end > dataset.n() {
        return Err(structural(format!(
            "interval {interval:?} exceeds n={}",
            dataset.n()
        )));
    }
    Ok(())
}

/// `Σ_{i ∈ interval} (y_i − ⟨θ, x_i⟩)²`.
pub fn residual_sse(dataset: &DataSet, interval: Range<usize>, theta: &[f64]) -> f64 {
    let y = dataset.y();
    interval.fold(0.0, |acc, i| {
        let r = y[i] - dot(theta, dataset.row(i));
        acc + r * r
    })
}

/// Errors `err(start, b)` for every `b` in `start+1..=n`, written to
/// `out[b - start - 1]`.
///
/// Short or ill-conditioned prefixes are solved directly; once the interval
/// Gram matrix is numerically full rank the sweep switches to one
/// Sherman-Morrison update per row.
pub(crate) fn sweep_errors(dataset: &DataSet, start: usize, out: &mut [f64]) -> Result<()> {
    let n = dataset.n();
    let d = dataset.d();
    debug_assert_eq!(out.len(), n - start);
    let ridge = dataset.ridge();
    let cap = direct_phase_cap(d);

    let mut gram = vec![0.0; d * d];
    for (j, l) in ridge.iter().enumerate() {
        gram[j * d + j] = *l;
    }
    let mut xty = vec![0.0; d];
    let mut yty = 0.0;
    let mut state: Option<GramState> = None;

    for end in start..n {
        let (x, y) = (dataset.row(end), dataset.y()[end]);
        if let Some(s) = state.as_mut() {
            match s.absorb(x, y) {
                Ok(()) => {
                    out[end - start] = s.error();
                    continue;
                }
                Err(Error::SingularUpdate(_)) => {
                    let stats = SegmentStats::from_range(dataset, start..end + 1);
                    let factor = stats.factor(ridge)?;
                    let theta = factor.solve(&stats.xty);
                    let sse = residual_sse(dataset, start..end + 1, &theta);
                    let objective = sse + ridge_penalty(ridge, &theta);
                    out[end - start] = sse;
                    *s = GramState::seeded(
                        ridge,
                        &factor,
                        stats.xty,
                        stats.yty,
                        stats.count,
                        theta,
                        objective,
                    );
                    continue;
                }
                Err(e) => return Err(e),
            }
        }

        add_outer(&mut gram, x);
        for (b, xi) in xty.iter_mut().zip(x) {
            *b += xi * y;
        }
        yty += y * y;
        let count = end - start + 1;
        let factor = Cholesky::factor(&gram, d)?;
        let theta = factor.solve(&xty);
        let sse = residual_sse(dataset, start..end + 1, &theta);
        let objective = sse + ridge_penalty(ridge, &theta);
        out[end - start] = sse;

        let max_diag = (0..d).map(|j| gram[j * d + j]).fold(0.0, f64::max);
        if count >= d && (factor.min_pivot() >= SEED_PIVOT_RATIO * max_diag || count >= cap) {
            state = Some(GramState::seeded(
                ridge,
                &factor,
                xty.clone(),
                yty,
                count,
                theta,
                objective,
            ));
        }
    }
    Ok(())
}

/// Triangular store of `err(a, b)`, the least-squares SSE on `[a, b)`, for all
/// `0 <= a < b <= n`. One row per start.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalErrorTable {
    n: usize,
    offsets: Vec<usize>,
    errs: Vec<f64>,
}

impl IntervalErrorTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `err(a, b)`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        assert!(a < b && b <= self.n, "interval [{a}, {b}) out of range");
        self.errs[self.offsets[a] + (b - a - 1)]
    }

    /// Errors for `[a, a+1), [a, a+2), ..., [a, n)`.
    pub fn row(&self, a: usize) -> &[f64] {
        &self.errs[self.offsets[a]..self.offsets[a] + (self.n - a)]
    }
}

/// Builds the full error table with the default cap.
pub fn build_error_table(dataset: &DataSet) -> Result<IntervalErrorTable> {
    build_error_table_with_cap(dataset, DEFAULT_TABLE_CAP)
}

/// Builds the full error table: one independent sweep per start, `O(n²d²)`
/// time and `O(n²)` memory.
pub fn build_error_table_with_cap(dataset: &DataSet, cap: usize) -> Result<IntervalErrorTable> {
    let n = dataset.n();
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }
    let mut offsets = Vec::with_capacity(n);
    let mut total = 0;
    for a in 0..n {
        offsets.push(total);
        total += n - a;
    }
    let mut errs = vec![0.0; total];
    let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
    let mut rest = errs.as_mut_slice();
    for a in 0..n {
        let (head, tail) = rest.split_at_mut(n - a);
        rows.push((a, head));
        rest = tail;
    }
    rows.into_par_iter()
        .try_for_each(|(a, row)| sweep_errors(dataset, a, row))?;
    Ok(IntervalErrorTable { n, offsets, errs })
}
