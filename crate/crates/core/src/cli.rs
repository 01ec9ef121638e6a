//! The `segfit` command line: `fit`, `synth` and `bench`.
//!
//! Exit codes: 0 success, 2 unreadable or unwritable files, 3 invalid flags
//! or parameters, 4 invalid numeric data.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{
    fit_runtime_slope, run_sweep, summary_table, write_plot_data, Algorithm, Estimator,
    SweepOptions,
};
use crate::error::{Error, Result};
use crate::estimators::fit_exact_dp;
use crate::merging::{
    bucket_greedy_merge, bucket_greedy_merge_postprocessed, estimate_noise_var, greedy_merge,
    MergeConfig,
};
use crate::model::{DataSet, FitReport, Partition, PiecewiseLinearModel};
use crate::synth::{generate, index_series, ScenarioKind, ScenarioSpec};

pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "segfit",
    version,
    about = "Piecewise linear least-squares regression"
)]
struct Cli {
    /// Worker threads for parallel sweeps (default: available cores).
    #[arg(long, global = true, env = "SEGFIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a piecewise linear model to a CSV file.
    Fit(FitArgs),
    /// Write a synthetic dataset and its noise-free truth.
    Synth(SynthArgs),
    /// Run an accuracy and runtime sweep and write plot data.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Dp,
    Greedy,
    Bucket,
    BucketPost,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Dp => "dp",
            Algo::Greedy => "greedy",
            Algo::Bucket => "bucket",
            Algo::BucketPost => "bucket-post",
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV; all columns numeric.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "dp")]
    algo: Algo,
    /// Target number of pieces.
    #[arg(long)]
    k: usize,
    /// GreedyMerging trade-off parameter.
    #[arg(long)]
    tau: Option<f64>,
    /// Slack on the stopping threshold (greedy, bucket, bucket-post).
    #[arg(long)]
    gamma: Option<f64>,
    /// Noise variance for GreedyMerging.
    #[arg(long)]
    noise_var: Option<f64>,
    /// Estimate the noise variance from first differences of y.
    #[arg(long)]
    estimate_noise: bool,
    /// Feature column (0-based, after removing y) that orders the data.
    #[arg(long, default_value_t = 0)]
    partition_col: usize,
    /// Response column (0-based); defaults to the last column.
    #[arg(long)]
    y_col: Option<usize>,
    /// The first line is a header.
    #[arg(long)]
    header: bool,
    /// Use (1, t) with t the row number as features.
    #[arg(long)]
    time_index: bool,
    /// Where to write the model document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write fitted values, in input row order.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Constant,
    Linear,
    Poly,
    Misspecified,
    Series,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "constant")]
    kind: Kind,
    /// True number of pieces (regimes for `series`).
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Feature dimension for linear and misspecified scenarios.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Polynomial degree for `poly`.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean square of the misspecification offset.
    #[arg(long, default_value_t = 0.0)]
    budget: f64,
}

impl ScenarioArgs {
    fn spec(&self, n: usize) -> Result<ScenarioSpec> {
        let (kind, d) = match self.kind {
            Kind::Constant => (ScenarioKind::PiecewiseConstant, 1),
            Kind::Linear => (ScenarioKind::PiecewiseLinear, self.d),
            Kind::Poly => (ScenarioKind::PiecewisePolynomial, self.degree),
            Kind::Misspecified => (ScenarioKind::Misspecified, self.d),
            Kind::Series => {
                return Err(Error::Parameter(
                    "series is not a benchmark scenario".into(),
                ))
            }
        };
        let spec = ScenarioSpec {
            misspec_budget: self.budget,
            ..ScenarioSpec::new(kind, self.k, n, d, self.sigma, self.seed)
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Dataset CSV: feature columns, then y.
    #[arg(long)]
    out: PathBuf,
    /// Noise-free values, one per row.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated ascending sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200, 500, 1000, 2000, 5000, 10000])]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Comma-separated estimators: dp, merging-k, merging-2k, merging-4k, bucket, bucket-post.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// The exact DP is skipped above this n.
    #[arg(long, default_value_t = crate::bench::DEFAULT_DP_CAP)]
    dp_cap: usize,
    /// Write time columns as nan so output depends only on seeds and flags.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure of a CLI command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            Error::Parameter(_) | Error::Capacity { .. } => EXIT_USAGE,
            Error::Structural(_)
            | Error::InvalidData(_)
            | Error::SingularUpdate(_)
            | Error::NotPositiveDefinite => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Echo of the flags that shaped a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub noise_var: Option<f64>,
    pub noise_estimated: bool,
    pub time_index: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceDocument {
    /// First row (0-based, in sorted order).
    pub start: usize,
    /// One past the last row.
    pub end: usize,
    pub coord_min: f64,
    pub coord_max: f64,
    pub theta: Vec<f64>,
    pub sse: f64,
}

/// Serialized fit. Contains no timing, so it is a pure function of the input
/// and the flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub algorithm: String,
    pub config: FitConfig,
    pub n: usize,
    pub d: usize,
    pub partition_col: usize,
    /// Interior cuts as row indices: a new piece starts at each.
    pub breakpoints: Vec<usize>,
    /// Partition coordinate of the first row of each piece after a cut.
    pub breakpoint_coords: Vec<f64>,
    pub pieces: Vec<PieceDocument>,
    pub total_sse: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ModelDocument {
    pub fn from_fit(
        algorithm: &str,
        config: FitConfig,
        dataset: &DataSet,
        report: &FitReport,
    ) -> Self {
        let partition = report.model.partition();
        let breakpoints = partition.interior_cuts().to_vec();
        let breakpoint_coords = breakpoints.iter().map(|&c| dataset.coord(c)).collect();
        let pieces = partition
            .intervals()
            .zip(report.model.thetas())
            .zip(&report.piece_sse)
            .map(|((r, theta), &sse)| PieceDocument {
                start: r.start,
                end: r.end,
                coord_min: dataset.coord(r.start),
                coord_max: dataset.coord(r.end - 1),
                theta: theta.clone(),
                sse,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            algorithm: algorithm.to_string(),
            config,
            n: dataset.n(),
            d: dataset.d(),
            partition_col: dataset.partition_col(),
            breakpoints,
            breakpoint_coords,
            pieces,
            total_sse: report.sse,
            warnings: report.warnings.clone(),
        }
    }

    pub fn to_model(&self) -> Result<PiecewiseLinearModel> {
        let mut bounds = vec![0];
        bounds.extend(self.pieces.iter().map(|p| p.end));
        if self.pieces.first().map(|p| p.start) != Some(0)
            || self.pieces.windows(2).any(|w| w[0].end != w[1].start)
        {
            return Err(Error::Structural("pieces do not tile the rows".into()));
        }
        PiecewiseLinearModel::new(
            Partition::new(bounds)?,
            self.pieces.iter().map(|p| p.theta.clone()).collect(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Structural(format!("model document: {e}")))
    }
}

/// A CSV table of numbers.
struct Table {
    rows: Vec<Vec<f64>>,
    width: usize,
}

fn read_table(path: &Path, header: bool) -> Result<Table, CliError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_error(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| {
                    io_error(
                        path,
                        format!("row {}, column {j}: '{field}' is not a number", i + 1),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 {
        return Err(io_error(path, "no data rows"));
    }
    if let Some((i, row)) = rows
        .iter()
        .enumerate()
        .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
    {
        let j = row.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(CliError {
            code: EXIT_DATA,
            message: format!(
                "{}: row {}, column {j} is not finite",
                path.display(),
                i + 1
            ),
        });
    }
    Ok(Table { rows, width })
}

/// Splits a table into features and responses and sorts by the partition
/// column. Returns the dataset and the original index of each sorted row.
fn build_dataset(table: &Table, args: &FitArgs) -> Result<(DataSet, Vec<usize>), CliError> {
    let y_col = args.y_col.unwrap_or(table.width - 1);
    if y_col >= table.width {
        return Err(usage(format!(
            "--y-col {y_col} out of range for {} columns",
            table.width
        )));
    }
    let y: Vec<f64> = table.rows.iter().map(|r| r[y_col]).collect();
    let (x, d) = if args.time_index {
        let x = (0..table.rows.len())
            .flat_map(|t| [1.0, t as f64])
            .collect();
        (x, 2)
    } else {
        if table.width < 2 {
            return Err(usage(
                "need at least one feature column besides y (or --time-index)",
            ));
        }
        let x = table
            .rows
            .iter()
            .flat_map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != y_col)
                    .map(|(_, v)| *v)
            })
            .collect();
        (x, table.width - 1)
    };
    let partition_col = if args.time_index {
        1
    } else {
        args.partition_col
    };
    if partition_col >= d {
        return Err(usage(format!(
            "--partition-col {partition_col} out of range for d={d}"
        )));
    }
    Ok(DataSet::from_unsorted(x, d, y, partition_col)?)
}

fn check_fit_flags(args: &FitArgs) -> Result<(), CliError> {
    let greedy = args.algo == Algo::Greedy;
    if !greedy && (args.tau.is_some() || args.noise_var.is_some() || args.estimate_noise) {
        return Err(usage(
            "--tau, --noise-var and --estimate-noise apply to --algo greedy only",
        ));
    }
    if args.algo == Algo::Dp && args.gamma.is_some() {
        return Err(usage("--gamma does not apply to --algo dp"));
    }
    if greedy && args.noise_var.is_some() == args.estimate_noise {
        return Err(usage(
            "--algo greedy needs exactly one of --noise-var or --estimate-noise",
        ));
    }
    if args.time_index && args.partition_col != 0 {
        return Err(usage(
            "--partition-col cannot be combined with --time-index",
        ));
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_fit_flags(args)?;
    let table = read_table(&args.input, args.header)?;
    let (dataset, order) = build_dataset(&table, args)?;

    let mut config = FitConfig {
        k: args.k,
        tau: None,
        gamma: None,
        noise_var: None,
        noise_estimated: args.estimate_noise,
        time_index: args.time_index,
    };
    let report = match args.algo {
        Algo::Dp => fit_exact_dp(&dataset, args.k)?,
        Algo::Greedy => {
            let s2 = match args.noise_var {
                Some(v) => v,
                None => estimate_noise_var(dataset.y()),
            };
            let cfg = MergeConfig::new(
                args.k,
                args.tau.unwrap_or(1.0),
                args.gamma.unwrap_or(1.0),
                s2,
            )?;
            config.tau = Some(cfg.tau);
            config.gamma = Some(cfg.gamma);
            config.noise_var = Some(cfg.noise_var);
            greedy_merge(&dataset, &cfg)?
        }
        Algo::Bucket | Algo::BucketPost => {
            let gamma = args.gamma.unwrap_or(1.0);
            config.gamma = Some(gamma);
            if args.algo == Algo::Bucket {
                bucket_greedy_merge(&dataset, args.k, gamma)?
            } else {
                bucket_greedy_merge_postprocessed(&dataset, args.k, gamma)?
            }
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    let doc = ModelDocument::from_fit(args.algo.name(), config, &dataset, &report);
    if let Some(path) = &args.out {
        std::fs::write(path, doc.to_json()).map_err(|e| io_error(path, e))?;
    }
    if let Some(path) = &args.predictions {
        let fitted = report.model.predict(&dataset)?;
        let mut original = vec![0.0; fitted.len()];
        for (sorted, &orig) in order.iter().enumerate() {
            original[orig] = fitted[sorted];
        }
        let mut text = String::from("prediction\n");
        for v in original {
            text.push_str(&format!("{v}\n"));
        }
        std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    }

    let lines = format!(
        "algorithm={}\nn={}\nd={}\npieces={}\nsse={}\nwall_time={:.6}\n",
        args.algo.name(),
        dataset.n(),
        dataset.d(),
        report.model.piece_count(),
        report.sse,
        report.wall_time
    );
    out.write_all(lines.as_bytes())
        .map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.scenario.kind == Kind::Series {
        if args.truth.is_some() {
            return Err(usage("--truth is not available for --kind series"));
        }
        if args.n == 0 || args.scenario.k == 0 {
            return Err(usage("--n and --k must be positive"));
        }
        let series = index_series(args.n, args.scenario.k, args.scenario.seed);
        let header = vec!["t".to_string(), "y".to_string()];
        return write_csv(
            &args.out,
            &header,
            series
                .into_iter()
                .enumerate()
                .map(|(t, v)| vec![t as f64, v]),
        );
    }
    let spec = args.scenario.spec(args.n)?;
    let inst = generate(&spec)?;
    let ds = &inst.dataset;
    let mut header: Vec<String> = (0..ds.d()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    write_csv(
        &args.out,
        &header,
        (0..ds.n()).map(|i| {
            let mut row = ds.row(i).to_vec();
            row.push(ds.y()[i]);
            row
        }),
    )?;
    if let Some(path) = &args.truth {
        write_csv(
            path,
            &["truth".to_string()],
            inst.truth_values.iter().map(|&v| vec![v]),
        )?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let algos: Vec<Algorithm> = match &args.algos {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<Algorithm>())
            .collect::<Result<_>>()?,
        None => Algorithm::all(),
    };
    if algos.is_empty() {
        return Err(usage("--algos is empty"));
    }
    let first_n = *args
        .n_values
        .first()
        .ok_or_else(|| usage("--n-values is empty"))?;
    let template = args.scenario.spec(first_n)?;
    let records = run_sweep(
        &template,
        &args.n_values,
        &algos,
        args.trials,
        &SweepOptions {
            dp_cap: args.dp_cap,
        },
    )?;
    write_plot_data(&records, &args.out_dir, !args.no_timing)?;

    let mut text = summary_table(&records);
    if !args.no_timing {
        for a in &algos {
            let label = a.label();
            let own: Vec<_> = records
                .iter()
                .filter(|r| r.algorithm == label)
                .cloned()
                .collect();
            if let Ok(slope) = fit_runtime_slope(&own) {
                text.push_str(&format!("runtime slope {label}: {slope:.3}\n"));
            }
        }
    }
    out.write_all(text.as_bytes())
        .map_err(|e| io_error(Path::new("<stdout>"), e))
}

/// Runs the command line and returns the process exit code. Normal output goes
/// to `out`, diagnostics to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, out),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_for(ds: &DataSet, report: &FitReport) -> ModelDocument {
        let config = FitConfig {
            k: 2,
            tau: None,
            gamma: None,
            noise_var: None,
            noise_estimated: false,
            time_index: false,
        };
        ModelDocument::from_fit("dp", config, ds, report)
    }

    #[test]
    fn document_round_trip_predicts_identically() {
        let inst = generate(&ScenarioSpec::new(
            ScenarioKind::PiecewiseLinear,
            3,
            90,
            2,
            0.7,
            5,
        ))
        .unwrap();
        let report = fit_exact_dp(&inst.dataset, 3).unwrap();
        let doc = doc_for(&inst.dataset, &report);
        let parsed = ModelDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(parsed, doc);
        let a = report.model.predict(&inst.dataset).unwrap();
        let b = parsed.to_model().unwrap().predict(&inst.dataset).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn document_rejects_gaps() {
        let ds = DataSet::new(vec![1.0; 4], 1, vec![1.0, 1.0, 5.0, 5.0], 0).unwrap();
        let mut doc = doc_for(&ds, &fit_exact_dp(&ds, 2).unwrap());
        doc.pieces[1].start = 3;
        assert!(doc.to_model().is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Io("x".into())).code, EXIT_IO);
        assert_eq!(
            CliError::from(Error::Parameter("x".into())).code,
            EXIT_USAGE
        );
        assert_eq!(
            CliError::from(Error::InvalidData("x".into())).code,
            EXIT_DATA
        );
    }

    #[test]
    fn bad_flags_exit_three() {
        let mut sink = Vec::new();
        assert_eq!(run(["segfit", "fit", "--bogus"], &mut sink), EXIT_USAGE);
        assert_eq!(
            run(
                ["segfit", "fit", "x.csv", "--k", "2", "--algo", "greedy"],
                &mut sink
            ),
            EXIT_USAGE
        );
    }
}
