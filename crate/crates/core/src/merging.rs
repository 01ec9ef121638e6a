//! Fast estimators built on iterative greedy merging of neighbouring
//! intervals, and the postprocessing step that compresses their output.
//!
//! Every iteration pairs intervals `(I1, I2), (I3, I4), ...`, scores each
//! candidate union by a merge criterion, keeps the highest-scoring pairs
//! split and merges the rest.

use std::cmp::Ordering;
use std::ops::Range;
use std::time::Instant;

use crate::error::{parameter, Error, Result};
use crate::estimators::{fit_restricted_dp, refit};
use crate::linalg::{residual_sse, SegmentStats};
use crate::model::{DataSet, FitReport, Partition};

/// Ceiling that ignores round-off just above an integer, so `(1 + 1/τ)k`
/// with e.g. `τ = 1/3` lands on the intended integer.
fn ceil_count(x: f64) -> usize {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize
}

/// Parameters of GreedyMerging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    /// Target number of pieces.
    pub k: usize,
    /// Trades output size against accuracy; larger keeps fewer candidates.
    pub tau: f64,
    /// Additive slack on the stopping threshold.
    pub gamma: f64,
    /// Noise variance `s² = E[ε²]` used by the merge criterion.
    pub noise_var: f64,
}

impl MergeConfig {
    pub fn new(k: usize, tau: f64, gamma: f64, noise_var: f64) -> Result<Self> {
        let cfg = Self {
            k,
            tau,
            gamma,
            noise_var,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A configuration that stops at no more than `pieces` output intervals
    /// while keeping `⌈pieces/2⌉ − 1` candidates per iteration.
    ///
    /// Expressed as `k = 1`, `τ = 1/(h − 1)`, `γ = pieces − 2h` with
    /// `h = ⌈pieces/2⌉ − 1`, so the threshold is `2h + γ = pieces`.
    pub fn for_output_pieces(pieces: usize, noise_var: f64) -> Result<Self> {
        if pieces < 5 {
            return Err(parameter(format!(
                "a target of {pieces} output pieces is too small; need at least 5"
            )));
        }
        let keep = pieces.div_ceil(2) - 1;
        Self::new(
            1,
            1.0 / (keep - 1) as f64,
            (pieces - 2 * keep) as f64,
            noise_var,
        )
    }

    /// Candidates kept unmerged per iteration, `⌈(1 + 1/τ)k⌉`.
    pub fn keep_count(&self) -> usize {
        ceil_count((1.0 + 1.0 / self.tau) * self.k as f64)
    }

    /// The loop runs while more than `⌈(2 + 2/τ)k + γ⌉` intervals remain.
    pub fn stop_threshold(&self) -> usize {
        ceil_count((2.0 + 2.0 / self.tau) * self.k as f64 + self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(parameter("k must be at least 1"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(parameter("tau must be positive and finite"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(parameter("gamma must be non-negative and finite"));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(parameter("noise variance must be non-negative and finite"));
        }
        let (keep, stop) = (self.keep_count(), self.stop_threshold());
        // each iteration must merge at least one pair while above the threshold
        if stop < 2 * keep + 1 {
            return Err(Error::Parameter(format!(
                "stopping threshold {stop} leaves no room to merge while keeping {keep} \
                 candidates; increase gamma"
            )));
        }
        Ok(())
    }
}

/// Adjacent intervals `left`, `right` (indices into the current partition)
/// and the criterion value of merging them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub left: usize,
    pub right: usize,
    pub merged_interval: Range<usize>,
    pub error: f64,
}

/// Consecutive pairs of a partition plus the unpaired last interval, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
    pub carryover: Option<usize>,
}

/// Pairs intervals `(0, 1), (2, 3), ...`; an odd last interval carries over.
pub fn pair_candidates(partition: &Partition) -> Pairing {
    pair_count(partition.piece_count())
}

fn pair_count(m: usize) -> Pairing {
    Pairing {
        pairs: (0..m / 2).map(|u| (2 * u, 2 * u + 1)).collect(),
        carryover: (m % 2 == 1).then_some(m - 1),
    }
}

/// Indices into the candidate list, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub kept: Vec<usize>,
    pub merged: Vec<usize>,
}

fn by_error_then_start(a: &CandidatePair, b: &CandidatePair) -> Ordering {
    b.error
        .total_cmp(&a.error)
        .then(a.merged_interval.start.cmp(&b.merged_interval.start))
}

/// Splits candidates into the `count` with the largest error (ties go to
/// the smaller start index) and the rest.
pub fn select_top_errors(candidates: &[CandidatePair], count: usize) -> Selection {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    if count >= candidates.len() {
        return Selection {
            kept: order,
            merged: Vec::new(),
        };
    }
    if count > 0 {
        order.select_nth_unstable_by(count - 1, |&a, &b| {
            by_error_then_start(&candidates[a], &candidates[b])
        });
    }
    let (kept, merged) = order.split_at_mut(count);
    kept.sort_unstable();
    merged.sort_unstable();
    Selection {
        kept: kept.to_vec(),
        merged: merged.to_vec(),
    }
}

/// Heuristic `s²` estimate: half the mean squared first difference of `y`.
pub fn estimate_noise_var(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let sum = y.windows(2).fold(0.0, |acc, w| {
        let diff = w[1] - w[0];
        acc + diff * diff
    });
    sum / (2.0 * (y.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy)]
enum Criterion {
    /// `‖y − Xθ‖² − s²|I|`
    NoiseCorrected(f64),
    /// `‖y − Xθ‖² / |I|`
    Average,
}

impl Criterion {
    fn score(self, sse: f64, len: usize) -> f64 {
        match self {
            Criterion::NoiseCorrected(s2) => sse - s2 * len as f64,
            Criterion::Average => sse / len as f64,
        }
    }
}

/// Current intervals with their sufficient statistics.
struct WorkingPartition {
    intervals: Vec<Range<usize>>,
    stats: Vec<SegmentStats>,
}

impl WorkingPartition {
    fn singletons(dataset: &DataSet) -> Self {
        let n = dataset.n();
        Self {
            intervals: (0..n).map(|i| i..i + 1).collect(),
            stats: (0..n)
                .map(|i| SegmentStats::from_range(dataset, i..i + 1))
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.intervals.len()
    }

    /// Scores every pair and returns the candidates with their merged statistics.
    fn score(
        &self,
        dataset: &DataSet,
        criterion: Criterion,
    ) -> Result<(Vec<CandidatePair>, Vec<SegmentStats>, Option<usize>)> {
        let pairing = pair_count(self.len());
        let mut candidates = Vec::with_capacity(pairing.pairs.len());
        let mut merged_stats = Vec::with_capacity(pairing.pairs.len());
        for &(left, right) in &pairing.pairs {
            let merged_interval = self.intervals[left].start..self.intervals[right].end;
            let stats = self.stats[left].merged(&self.stats[right]);
            let theta = stats.solve(dataset.ridge())?;
            let sse = residual_sse(dataset, merged_interval.clone(), &theta);
            let error = criterion.score(sse, merged_interval.len());
            candidates.push(CandidatePair {
                left,
                right,
                merged_interval,
                error,
            });
            merged_stats.push(stats);
        }
        Ok((candidates, merged_stats, pairing.carryover))
    }

    /// Rebuilds the partition: candidates flagged in `merge` become one interval.
    fn apply(
        self,
        candidates: Vec<CandidatePair>,
        merged_stats: Vec<SegmentStats>,
        merge: &[bool],
        carryover: Option<usize>,
    ) -> Self {
        let mut intervals = Vec::with_capacity(self.len());
        let mut stats = Vec::with_capacity(self.len());
        let mut old_stats: Vec<Option<SegmentStats>> = self.stats.into_iter().map(Some).collect();
        for ((cand, ms), &m) in candidates.into_iter().zip(merged_stats).zip(merge) {
            if m {
                intervals.push(cand.merged_interval);
                stats.push(ms);
            } else {
                for idx in [cand.left, cand.right] {
                    intervals.push(self.intervals[idx].clone());
                    stats.push(old_stats[idx].take().expect("each interval is used once"));
                }
            }
        }
        if let Some(c) = carryover {
            intervals.push(self.intervals[c].clone());
            stats.push(old_stats[c].take().expect("carryover is unpaired"));
        }
        let next = Self { intervals, stats };
        debug_assert!(next.check_cover(), "merge step broke the partition");
        next
    }

    fn check_cover(&self) -> bool {
        self.intervals.first().is_some_and(|r| r.start == 0)
            && self.intervals.iter().all(|r| r.start < r.end)
            && self.intervals.windows(2).all(|w| w[0].end == w[1].start)
    }

    fn into_partition(self) -> Result<Partition> {
        let mut bounds = Vec::with_capacity(self.len() + 1);
        bounds.push(0);
        bounds.extend(self.intervals.iter().map(|r| r.end));
        Partition::new(bounds)
    }
}

/// Partition found by GreedyMerging plus the number of merge iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub partition: Partition,
    pub iterations: usize,
}

/// GreedyMerging without the final refit.
pub fn greedy_merge_partition(dataset: &DataSet, config: &MergeConfig) -> Result<MergeOutcome> {
    config.validate()?;
    let keep = config.keep_count();
    let stop = config.stop_threshold();
    let criterion = Criterion::NoiseCorrected(config.noise_var);

    let mut work = WorkingPartition::singletons(dataset);
    let mut iterations = 0;
    while work.len() > stop {
        let (candidates, merged_stats, carryover) = work.score(dataset, criterion)?;
        let selection = select_top_errors(&candidates, keep);
        let mut merge = vec![false; candidates.len()];
        for &u in &selection.merged {
            merge[u] = true;
        }
        work = work.apply(candidates, merged_stats, &merge, carryover);
        iterations += 1;
    }
    Ok(MergeOutcome {
        partition: work.into_partition()?,
        iterations,
    })
}

/// GreedyMerging: at most `⌈(2 + 2/τ)k + γ⌉` pieces, each refit by least squares.
pub fn greedy_merge(dataset: &DataSet, config: &MergeConfig) -> Result<FitReport> {
    let started = Instant::now();
    let outcome = greedy_merge_partition(dataset, config)?;
    let model = refit(dataset, outcome.partition)?;
    Ok(FitReport::new(
        model,
        dataset,
        started.elapsed().as_secs_f64(),
    ))
}

fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

/// Piece bound of BucketGreedyMerge, `(2(k + 1) + γ)·⌈log₂ n⌉`.
pub fn bucket_piece_bound(n: usize, k: usize, gamma: f64) -> f64 {
    (2.0 * (k as f64 + 1.0) + gamma) * ceil_log2(n) as f64
}

/// Bucket index of a candidate of length `len`: `⌊log₂ len⌋`.
fn bucket_of(len: usize) -> usize {
    (usize::BITS - 1 - len.leading_zeros()) as usize
}

/// BucketGreedyMerge without the final refit.
pub fn bucket_merge_partition(dataset: &DataSet, k: usize, gamma: f64) -> Result<MergeOutcome> {
    let n = dataset.n();
    if n < 2 {
        return Err(parameter("bucket merging needs n >= 2"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(parameter("gamma must be non-negative and finite"));
    }
    // with γ⌈log₂ n⌉ >= 1 every iteration above the bound has a pair to merge
    if gamma * (ceil_log2(n) as f64) < 1.0 {
        return Err(Error::Parameter(format!(
            "gamma={gamma} is too small for n={n}; need gamma * ceil(log2 n) >= 1"
        )));
    }
    let bound = bucket_piece_bound(n, k, gamma);
    let keep = k + 1;

    let mut work = WorkingPartition::singletons(dataset);
    let mut iterations = 0;
    while work.len() as f64 > bound {
        let (candidates, merged_stats, carryover) = work.score(dataset, Criterion::Average)?;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); bucket_of(n) + 1];
        for (u, c) in candidates.iter().enumerate() {
            buckets[bucket_of(c.merged_interval.len())].push(u);
        }
        let mut merge = vec![false; candidates.len()];
        for members in buckets.iter().filter(|b| !b.is_empty()) {
            let subset: Vec<CandidatePair> =
                members.iter().map(|&u| candidates[u].clone()).collect();
            for local in select_top_errors(&subset, keep).merged {
                merge[members[local]] = true;
            }
        }
        work = work.apply(candidates, merged_stats, &merge, carryover);
        iterations += 1;
    }
    Ok(MergeOutcome {
        partition: work.into_partition()?,
        iterations,
    })
}

/// BucketGreedyMerge: variance-free merging, `O(k log n)` pieces.
pub fn bucket_greedy_merge(dataset: &DataSet, k: usize, gamma: f64) -> Result<FitReport> {
    let started = Instant::now();
    let outcome = bucket_merge_partition(dataset, k, gamma)?;
    let model = refit(dataset, outcome.partition)?;
    Ok(FitReport::new(
        model,
        dataset,
        started.elapsed().as_secs_f64(),
    ))
}

/// Compresses `coarse` to the best `2k + 1`-piece fit cutting only at
/// `coarse`'s breakpoints. A coarse partition with fewer pieces is refit
/// unchanged and flagged in the report's warnings.
pub fn postprocess(dataset: &DataSet, coarse: &Partition, k: usize) -> Result<FitReport> {
    let started = Instant::now();
    if coarse.n() != dataset.n() {
        return Err(Error::Structural(format!(
            "coarse partition covers {} rows, dataset has {}",
            coarse.n(),
            dataset.n()
        )));
    }
    let target = 2 * k + 1;
    if coarse.piece_count() <= target {
        let model = refit(dataset, coarse.clone())?;
        let mut report = FitReport::new(model, dataset, started.elapsed().as_secs_f64());
        if coarse.piece_count() < target {
            report.warnings.push(format!(
                "coarse partition has {} pieces, fewer than 2k+1={target}; returned unchanged",
                coarse.piece_count()
            ));
        }
        return Ok(report);
    }
    let mut report = fit_restricted_dp(dataset, coarse.interior_cuts(), target)?;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// BucketGreedyMerge followed by postprocessing to `2k + 1` pieces.
pub fn bucket_greedy_merge_postprocessed(
    dataset: &DataSet,
    k: usize,
    gamma: f64,
) -> Result<FitReport> {
    let started = Instant::now();
    let coarse = bucket_merge_partition(dataset, k, gamma)?.partition;
    let mut report = postprocess(dataset, &coarse, k)?;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}
