//! Synthetic ground truths for the experiment protocols: piecewise constant
//! and piecewise linear functions under Gaussian noise, piecewise polynomials
//! through a Vandermonde embedding, and a misspecified variant with a
//! controlled approximation error.
//!
//! All randomness comes from a seeded ChaCha8 stream, so an instance is a
//! pure function of its [`ScenarioSpec`].

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Result};
use crate::model::{DataSet, Partition, PiecewiseLinearModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PiecewiseConstant,
    PiecewiseLinear,
    PiecewisePolynomial,
    Misspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// True number of pieces.
    pub k: usize,
    pub n: usize,
    /// Feature dimension; the polynomial degree for `PiecewisePolynomial`,
    /// ignored for `PiecewiseConstant`.
    pub d: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Mean square of the misspecification offset (`Misspecified` only).
    pub misspec_budget: f64,
}

impl ScenarioSpec {
    pub fn new(
        kind: ScenarioKind,
        k: usize,
        n: usize,
        d: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            k,
            n,
            d,
            noise_sigma,
            seed,
            misspec_budget: 0.0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(parameter(format!(
                "need n >= k >= 1 (n={}, k={})",
                self.n, self.k
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(parameter("noise sigma must be non-negative and finite"));
        }
        if matches!(
            self.kind,
            ScenarioKind::PiecewiseLinear | ScenarioKind::Misspecified
        ) && self.d == 0
        {
            return Err(parameter("piecewise linear scenarios need d >= 1"));
        }
        if !(self.misspec_budget >= 0.0) || !self.misspec_budget.is_finite() {
            return Err(parameter(
                "misspecification budget must be non-negative and finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub dataset: DataSet,
    /// Noise-free values `f(x_i)`, including any misspecification offset.
    pub truth_values: Vec<f64>,
    /// The piecewise linear part of the truth.
    pub truth_model: PiecewiseLinearModel,
    /// Mean square of the misspecification offset, an upper bound on `OPT_k`.
    pub opt_k: f64,
}

/// Equal-length segments, remainder appended to the last one.
pub fn segment_bounds(n: usize, k: usize) -> Vec<usize> {
    let len = n / k;
    let mut bounds: Vec<usize> = (0..k).map(|l| l * len).collect();
    bounds.push(n);
    bounds
}

fn sort_rows_by_first_column(x: &mut Vec<f64>, d: usize) {
    let mut rows: Vec<&[f64]> = x.chunks_exact(d).collect();
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    *x = rows.concat();
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Deterministic instance for `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k) = (spec.n, spec.k);
    let partition = Partition::new(segment_bounds(n, k))?;

    let (x, d, partition_col, thetas) = match spec.kind {
        ScenarioKind::PiecewiseConstant => {
            let thetas = (0..k)
                .map(|_| vec![rng.random_range(1..=10u32) as f64])
                .collect();
            (vec![1.0; n], 1, 0, thetas)
        }
        ScenarioKind::PiecewiseLinear | ScenarioKind::Misspecified => {
            let d = spec.d;
            let thetas = (0..k).map(|_| uniform_vec(&mut rng, d)).collect();
            let mut x: Vec<f64> = (0..n * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            sort_rows_by_first_column(&mut x, d);
            (x, d, 0, thetas)
        }
        ScenarioKind::PiecewisePolynomial => {
            let degree = spec.d;
            let thetas = (0..k).map(|_| uniform_vec(&mut rng, degree + 1)).collect();
            let mut t = uniform_vec(&mut rng, n);
            t.sort_by(f64::total_cmp);
            let col = usize::from(degree > 0);
            (vandermonde_rows(&t, degree), degree + 1, col, thetas)
        }
    };

    let truth_model = PiecewiseLinearModel::new(partition, thetas)?;
    let design = DataSet::new(x, d, vec![0.0; n], partition_col)?;
    let mut truth_values = truth_model.predict(&design)?;

    let mut opt_k = 0.0;
    if spec.kind == ScenarioKind::Misspecified && spec.misspec_budget > 0.0 {
        let offsets = smooth_offsets(n, spec.misspec_budget);
        opt_k = offsets.iter().map(|v| v * v).sum::<f64>() / n as f64;
        for (t, o) in truth_values.iter_mut().zip(&offsets) {
            *t += o;
        }
    }

    let y: Vec<f64> = truth_values
        .iter()
        .map(|f| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            f + spec.noise_sigma * eps
        })
        .collect();
    Ok(SyntheticInstance {
        dataset: design.with_responses(y)?,
        truth_values,
        truth_model,
        opt_k,
    })
}

/// A low-frequency sinusoid over the index (1.5 periods), scaled so that its
/// mean square equals `budget`.
fn smooth_offsets(n: usize, budget: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| (3.0 * PI * (i as f64 + 0.5) / n as f64 + 0.3).sin())
        .collect();
    let ms = raw.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = (budget / ms).sqrt();
    raw.into_iter().map(|v| v * scale).collect()
}

/// Row-major Vandermonde rows `(1, x, x², ..., x^degree)`.
pub fn vandermonde_rows(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * (degree + 1));
    for &v in x {
        let mut p = 1.0;
        for _ in 0..=degree {
            out.push(p);
            p *= v;
        }
    }
    out
}

/// Embeds scalar inputs for piecewise-polynomial regression; rows are sorted
/// by `x`, which becomes the partition coordinate (column 1, or 0 for
/// degree 0). Also returns the sort order, as [`DataSet::from_unsorted`].
pub fn vandermonde_embed(x: &[f64], y: Vec<f64>, degree: usize) -> Result<(DataSet, Vec<usize>)> {
    DataSet::from_unsorted(
        vandermonde_rows(x, degree),
        degree + 1,
        y,
        usize::from(degree > 0),
    )
}

/// An index-ordered price-like series: a geometric random walk whose drift
/// switches between a handful of regimes. Used as a stand-in for a daily
/// stock index when no real series is at hand.
pub fn index_series(n: usize, regimes: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regimes = regimes.clamp(1, n.max(1));
    let drifts: Vec<f64> = (0..regimes)
        .map(|_| rng.random_range(-0.003..=0.003))
        .collect();
    let bounds = segment_bounds(n.max(regimes), regimes);
    let mut level = 10_000.0f64.ln();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let regime = bounds
            .partition_point(|&b| b <= i)
            .saturating_sub(1)
            .min(regimes - 1);
        let z: f64 = StandardNormal.sample(&mut rng);
        level += drifts[regime] + 0.01 * z;
        out.push(level.exp());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ScenarioKind) -> ScenarioSpec {
        ScenarioSpec::new(kind, 4, 103, 3, 1.0, 11)
    }

    #[test]
    fn zero_noise_means_y_is_truth() {
        for kind in [
            ScenarioKind::PiecewiseConstant,
            ScenarioKind::PiecewiseLinear,
            ScenarioKind::PiecewisePolynomial,
        ] {
            let inst = generate(&ScenarioSpec {
                noise_sigma: 0.0,
                ..spec(kind)
            })
            .unwrap();
            assert_eq!(inst.dataset.y(), &inst.truth_values[..]);
        }
    }

    #[test]
    fn piecewise_constant_protocol() {
        let s = ScenarioSpec::new(ScenarioKind::PiecewiseConstant, 10, 10_000, 1, 1.0, 3);
        let inst = generate(&s).unwrap();
        let p = inst.truth_model.partition();
        assert_eq!(p.piece_count(), 10);
        assert!(p.intervals().all(|r| r.len() == 1000));
        for theta in inst.truth_model.thetas() {
            let v = theta[0];
            assert!(v.fract() == 0.0 && (1.0..=10.0).contains(&v));
        }
        assert!(inst.dataset.features().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn remainder_goes_to_last_segment() {
        assert_eq!(segment_bounds(103, 4), vec![0, 25, 50, 75, 103]);
    }

    #[test]
    fn same_seed_same_instance() {
        for kind in [
            ScenarioKind::PiecewiseConstant,
            ScenarioKind::PiecewiseLinear,
            ScenarioKind::PiecewisePolynomial,
            ScenarioKind::Misspecified,
        ] {
            let s = ScenarioSpec {
                misspec_budget: 0.1,
                ..spec(kind)
            };
            assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
            assert_ne!(generate(&s).unwrap(), generate(&s.with_seed(12)).unwrap());
        }
    }

    #[test]
    fn linear_scenario_coefficients_in_range() {
        let inst = generate(&spec(ScenarioKind::PiecewiseLinear)).unwrap();
        assert_eq!(inst.dataset.d(), 3);
        for t in inst.truth_model.thetas() {
            assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn misspecified_offsets_hit_budget() {
        let s = ScenarioSpec {
            misspec_budget: 0.05,
            ..spec(ScenarioKind::Misspecified)
        };
        let inst = generate(&s).unwrap();
        let base = inst.truth_model.predict(&inst.dataset).unwrap();
        let ms: f64 = inst
            .truth_values
            .iter()
            .zip(&base)
            .map(|(t, b)| (t - b) * (t - b))
            .sum::<f64>()
            / s.n as f64;
        assert!((ms - 0.05).abs() < 1e-9);
        assert!((inst.opt_k - 0.05).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&ScenarioSpec {
            k: 0,
            ..spec(ScenarioKind::PiecewiseLinear)
        })
        .is_err());
        assert!(generate(&ScenarioSpec {
            n: 2,
            ..spec(ScenarioKind::PiecewiseLinear)
        })
        .is_err());
        assert!(generate(&ScenarioSpec {
            noise_sigma: -1.0,
            ..spec(ScenarioKind::PiecewiseLinear)
        })
        .is_err());
        assert!(generate(&ScenarioSpec {
            d: 0,
            ..spec(ScenarioKind::PiecewiseLinear)
        })
        .is_err());
    }

    #[test]
    fn vandermonde_rows_examples() {
        assert_eq!(vandermonde_rows(&[2.0], 2), vec![1.0, 2.0, 4.0]);
        assert_eq!(vandermonde_rows(&[0.0, 1.0], 1), vec![1.0, 0.0, 1.0, 1.0]);
        let (ds, order) = vandermonde_embed(&[1.0, 0.0], vec![5.0, 6.0], 1).unwrap();
        assert_eq!(ds.partition_col(), 1);
        assert_eq!(order, vec![1, 0]);
        assert_eq!(ds.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn index_series_is_positive_and_deterministic() {
        let a = index_series(500, 5, 1);
        assert_eq!(a, index_series(500, 5, 1));
        assert!(a.iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}
