//! Sweeps over sample sizes that fit every estimator on the same synthetic
//! instances and summarize accuracy and wall time against the exact DP.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::estimators::fit_exact_dp;
use crate::merging::{
    bucket_greedy_merge, bucket_greedy_merge_postprocessed, greedy_merge, MergeConfig,
};
use crate::model::{DataSet, FitReport};
use crate::synth::{generate, ScenarioSpec};

/// Largest n at which the exact DP baseline runs by default.
pub const DEFAULT_DP_CAP: usize = 10_000;

/// Timings below this are clamped so ratios and logarithms stay finite.
const MIN_TIME: f64 = 1e-9;

/// Something the sweep can fit and time.
pub trait Estimator: Sync {
    fn label(&self) -> String;

    /// Requested output pieces, for estimators that take one.
    fn pieces_setting(&self, k: usize) -> Option<usize>;

    /// Whether this is the reference that ratios are taken against.
    fn is_baseline(&self) -> bool {
        false
    }

    fn fit(&self, dataset: &DataSet, scenario: &ScenarioSpec) -> Result<FitReport>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    ExactDp,
    /// GreedyMerging targeting `multiplier · k` output pieces.
    Merging {
        multiplier: usize,
    },
    Bucket,
    BucketPost,
}

impl Algorithm {
    /// The six estimators of the accuracy and runtime figures.
    pub fn all() -> Vec<Algorithm> {
        vec![
            Algorithm::ExactDp,
            Algorithm::Merging { multiplier: 1 },
            Algorithm::Merging { multiplier: 2 },
            Algorithm::Merging { multiplier: 4 },
            Algorithm::Bucket,
            Algorithm::BucketPost,
        ]
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "dp" | "exact_dp" | "exactdp" => Algorithm::ExactDp,
            "bucket" => Algorithm::Bucket,
            "bucket_post" => Algorithm::BucketPost,
            other => {
                let rest = other
                    .strip_prefix("merging_")
                    .or_else(|| other.strip_prefix("greedy_"))
                    .ok_or_else(|| parameter(format!("unknown algorithm '{s}'")))?;
                let multiplier = match rest {
                    "k" => 1,
                    _ => rest
                        .strip_suffix('k')
                        .and_then(|m| m.parse().ok())
                        .filter(|&m: &usize| m > 0)
                        .ok_or_else(|| parameter(format!("unknown algorithm '{s}'")))?,
                };
                Algorithm::Merging { multiplier }
            }
        })
    }
}

impl Estimator for Algorithm {
    fn label(&self) -> String {
        match self {
            Algorithm::ExactDp => "exact_dp".into(),
            Algorithm::Merging { multiplier: 1 } => "merging_k".into(),
            Algorithm::Merging { multiplier } => format!("merging_{multiplier}k"),
            Algorithm::Bucket => "bucket".into(),
            Algorithm::BucketPost => "bucket_post".into(),
        }
    }

    fn pieces_setting(&self, k: usize) -> Option<usize> {
        match self {
            Algorithm::Merging { multiplier } => Some(multiplier * k),
            _ => None,
        }
    }

    fn is_baseline(&self) -> bool {
        matches!(self, Algorithm::ExactDp)
    }

    fn fit(&self, dataset: &DataSet, scenario: &ScenarioSpec) -> Result<FitReport> {
        let k = scenario.k;
        let s2 = scenario.noise_sigma * scenario.noise_sigma;
        match self {
            Algorithm::ExactDp => fit_exact_dp(dataset, k),
            Algorithm::Merging { multiplier } => {
                // the smallest target the piece-count mapping supports is 5
                let cfg = MergeConfig::for_output_pieces((multiplier * k).max(5), s2)?;
                greedy_merge(dataset, &cfg)
            }
            Algorithm::Bucket => bucket_greedy_merge(dataset, k, 1.0),
            Algorithm::BucketPost => bucket_greedy_merge_postprocessed(dataset, k, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Baseline estimators are skipped above this n.
    pub dp_cap: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dp_cap: DEFAULT_DP_CAP,
        }
    }
}

/// One (n, estimator) cell of a sweep. Skipped cells carry `trials = 0` and
/// NaN statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub algorithm: String,
    pub pieces_setting: Option<usize>,
    pub mse_mean: f64,
    pub mse_median: f64,
    pub mse_ratio: Option<f64>,
    pub time_mean: f64,
    pub time_median: f64,
    /// Baseline time over this estimator's time.
    pub time_ratio: Option<f64>,
    pub trials: usize,
    pub skipped: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Fits every estimator on `trials` instances per n. Trial `t` uses seed
/// `template.seed + t`, so all estimators see the same data.
pub fn run_sweep<E: Estimator>(
    template: &ScenarioSpec,
    n_values: &[usize],
    estimators: &[E],
    trials: usize,
    options: &SweepOptions,
) -> Result<Vec<BenchRecord>> {
    if trials == 0 {
        return Err(parameter("trials must be at least 1"));
    }
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(parameter(
            "n values must be non-empty and strictly ascending",
        ));
    }
    // one untimed fit per estimator at the smallest n keeps thread-pool start-up
    // and first-touch allocation out of the first timed cell
    let warmup = generate(&template.with_n(n_values[0]))?;
    for est in estimators {
        if !(est.is_baseline() && n_values[0] > options.dp_cap) {
            est.fit(&warmup.dataset, &template.with_n(n_values[0]))?;
        }
    }
    let mut records = Vec::new();
    for &n in n_values {
        let instances = (0..trials as u64)
            .map(|t| generate(&template.with_n(n).with_seed(template.seed.wrapping_add(t))))
            .collect::<Result<Vec<_>>>()?;
        let first = records.len();
        for est in estimators {
            let label = est.label();
            let pieces_setting = est.pieces_setting(template.k);
            if est.is_baseline() && n > options.dp_cap {
                records.push(BenchRecord {
                    n,
                    algorithm: label,
                    pieces_setting,
                    mse_mean: f64::NAN,
                    mse_median: f64::NAN,
                    mse_ratio: None,
                    time_mean: f64::NAN,
                    time_median: f64::NAN,
                    time_ratio: None,
                    trials: 0,
                    skipped: true,
                });
                continue;
            }
            let mut mses = Vec::with_capacity(trials);
            let mut times = Vec::with_capacity(trials);
            for inst in &instances {
                let spec = template.with_n(n);
                let start = Instant::now();
                let report = est.fit(&inst.dataset, &spec)?;
                times.push(start.elapsed().as_secs_f64().max(MIN_TIME));
                let pred = report.model.predict(&inst.dataset)?;
                mses.push(crate::model::mse(&pred, &inst.truth_values)?);
            }
            records.push(BenchRecord {
                n,
                algorithm: label,
                pieces_setting,
                mse_mean: mean(&mses),
                mse_median: median(&mses),
                mse_ratio: None,
                time_mean: mean(&times),
                time_median: median(&times),
                time_ratio: None,
                trials,
                skipped: false,
            });
        }
        let baseline = estimators
            .iter()
            .position(|e| e.is_baseline())
            .map(|i| records[first + i].clone())
            .filter(|b| !b.skipped);
        if let Some(base) = baseline {
            for r in &mut records[first..] {
                if r.skipped {
                    continue;
                }
                r.mse_ratio = if base.mse_mean > 0.0 {
                    Some(r.mse_mean / base.mse_mean)
                } else if r.mse_mean == 0.0 {
                    Some(1.0)
                } else {
                    None
                };
                r.time_ratio = Some(base.time_mean / r.time_mean);
            }
        }
    }
    Ok(records)
}

/// Slope of `log(time_mean)` against `log(n)` by ordinary least squares.
///
/// Needs at least three distinct n values spanning a factor of 8 or more.
pub fn fit_runtime_slope(records: &[BenchRecord]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.skipped && r.time_mean > 0.0)
        .map(|r| ((r.n as f64).ln(), r.time_mean.ln()))
        .collect();
    if let Some(r) = records.iter().find(|r| r.algorithm != records[0].algorithm) {
        return Err(parameter(format!(
            "records mix algorithms '{}' and '{}'",
            records[0].algorithm, r.algorithm
        )));
    }
    let mut ns: Vec<usize> = records.iter().filter(|r| !r.skipped).map(|r| r.n).collect();
    ns.dedup();
    if ns.len() < 3 {
        return Err(parameter(format!(
            "need at least 3 n values, got {}",
            ns.len()
        )));
    }
    let (lo, hi) = (ns.iter().min().unwrap(), ns.iter().max().unwrap());
    if *hi < 8 * lo {
        return Err(parameter(format!(
            "n values span {lo}..{hi}, need a factor of 8"
        )));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "nan".into(),
    }
}

pub const PLOT_HEADER: &str = "n mse_mean mse_ratio time_mean time_ratio trials";

/// Plot-data text for one estimator. With `timing` off the time columns are
/// written as `nan`, which makes the file a pure function of seeds and flags.
pub fn plot_data(records: &[&BenchRecord], timing: bool) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for r in records.iter().filter(|r| !r.skipped) {
        let t = |v: Option<f64>| cell(v.filter(|_| timing));
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            r.n,
            cell(Some(r.mse_mean)),
            cell(r.mse_ratio),
            t(Some(r.time_mean)),
            t(r.time_ratio),
            r.trials
        );
    }
    out
}

/// Writes `<label>.dat` per estimator into `dir` and returns the paths in
/// first-seen order.
pub fn write_plot_data(records: &[BenchRecord], dir: &Path, timing: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.algorithm.as_str()) {
            labels.push(&r.algorithm);
        }
    }
    let mut paths = Vec::new();
    for label in labels {
        let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.algorithm == label).collect();
        let path = dir.join(format!("{label}.dat"));
        fs::write(&path, plot_data(&rows, timing))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Human-readable table of a sweep.
pub fn summary_table(records: &[BenchRecord]) -> String {
    let mut out = format!(
        "{:>7} {:<12} {:>12} {:>12} {:>9} {:>11} {:>10}\n",
        "n", "algorithm", "mse_mean", "mse_median", "mse_ratio", "time_mean", "speedup"
    );
    for r in records {
        if r.skipped {
            let _ = writeln!(out, "{:>7} {:<12} skipped (above DP cap)", r.n, r.algorithm);
            continue;
        }
        let _ = writeln!(
            out,
            "{:>7} {:<12} {:>12.5e} {:>12.5e} {:>9} {:>10.4}s {:>10}",
            r.n,
            r.algorithm,
            r.mse_mean,
            r.mse_median,
            r.mse_ratio.map_or("-".into(), |v| format!("{v:.3}")),
            r.time_mean,
            r.time_ratio.map_or("-".into(), |v| format!("{v:.1}x")),
        );
    }
    out
}
