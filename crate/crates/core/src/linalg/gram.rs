use std::ops::Range;

use super::dense::{add_outer, dot, mat_vec_into, Cholesky};
use crate::error::{Error, Result};
use crate::model::DataSet;

/// Denominators `1 + xᵀ P x` at or below this are treated as singular.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Incremental least-squares state for a growing interval.
///
/// Holds `P = (XᵀX + Λ)⁻¹` for a diagonal ridge `Λ`, updated one row at a
/// time with the Sherman-Morrison identity
/// `(M + xxᵀ)⁻¹ = M⁻¹ − M⁻¹xxᵀM⁻¹ / (1 + xᵀM⁻¹x)`, plus the running
/// coefficients and the residual objective, all in `O(d²)` per row.
#[derive(Debug, Clone)]
pub struct GramState {
    ridge: Vec<f64>,
    gram_inv: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    count: usize,
    theta: Vec<f64>,
    objective: f64,
    scratch: Vec<f64>,
}

impl GramState {
    /// Empty interval: `P = Λ⁻¹`. Every ridge entry must be positive.
    pub fn new(ridge: &[f64]) -> Result<Self> {
        let d = ridge.len();
        if d == 0 {
            return Err(Error::Structural(
                "ridge must have at least one entry".into(),
            ));
        }
        if ridge.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Parameter(
                "ridge entries must be positive and finite".into(),
            ));
        }
        let mut gram_inv = vec![0.0; d * d];
        for (j, l) in ridge.iter().enumerate() {
            gram_inv[j * d + j] = 1.0 / l;
        }
        Ok(Self {
            ridge: ridge.to_vec(),
            gram_inv,
            xty: vec![0.0; d],
            yty: 0.0,
            count: 0,
            theta: vec![0.0; d],
            objective: 0.0,
            scratch: vec![0.0; d],
        })
    }

    /// State for an interval whose Gram matrix (ridge included) has been
    /// factorized directly.
    pub(crate) fn seeded(
        ridge: &[f64],
        factor: &Cholesky,
        xty: Vec<f64>,
        yty: f64,
        count: usize,
        theta: Vec<f64>,
        objective: f64,
    ) -> Self {
        Self {
            ridge: ridge.to_vec(),
            gram_inv: factor.inverse(),
            scratch: vec![0.0; xty.len()],
            xty,
            yty,
            count,
            theta,
            objective,
        }
    }

    /// State for the rows summarized by `stats`, factorized directly.
    pub fn from_stats(ridge: &[f64], stats: &SegmentStats) -> Result<Self> {
        if ridge.len() != stats.xty.len() {
            return Err(Error::Structural(
                "ridge and statistics differ in dimension".into(),
            ));
        }
        let factor = stats.factor(ridge)?;
        let theta = factor.solve(&stats.xty);
        // J = yᵀy − bᵀθ at the regularized optimum
        let objective = (stats.yty - dot(&stats.xty, &theta)).max(0.0);
        Ok(Self::seeded(
            ridge,
            &factor,
            stats.xty.clone(),
            stats.yty,
            stats.count,
            theta,
            objective,
        ))
    }

    pub fn dim(&self) -> usize {
        self.ridge.len()
    }

    pub fn ridge(&self) -> &[f64] {
        &self.ridge
    }

    pub fn gram_inv(&self) -> &[f64] {
        &self.gram_inv
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Current ridge-regularized least-squares coefficients `P · Xᵀy`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Absorbs one row. On a singular update the state is left untouched.
    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Structural(format!(
                "row has {} entries, expected {d}",
                x.len()
            )));
        }
        // u = P x, accumulated column by column (P is symmetric)
        let u = &mut self.scratch;
        u.iter_mut().for_each(|v| *v = 0.0);
        for (xj, row) in x.iter().zip(self.gram_inv.chunks_exact(d)) {
            if *xj != 0.0 {
                for (ui, pji) in u.iter_mut().zip(row) {
                    *ui += xj * pji;
                }
            }
        }
        let denom = 1.0 + dot(x, u);
        if !(denom > SINGULAR_DENOMINATOR) || !denom.is_finite() {
            return Err(Error::SingularUpdate(denom));
        }
        let resid = y - dot(x, &self.theta);
        let gain = resid / denom;
        for (t, ui) in self.theta.iter_mut().zip(u.iter()) {
            *t += ui * gain;
        }
        self.objective += resid * gain;
        // P -= u uᵀ / denom; (u_i u_j) is formed before scaling so P stays exactly symmetric
        let inv = denom.recip();
        let u = &self.scratch;
        for (ui, row) in u.iter().zip(self.gram_inv.chunks_exact_mut(d)) {
            for (p, uj) in row.iter_mut().zip(u) {
                *p -= (ui * uj) * inv;
            }
        }
        for (b, xi) in self.xty.iter_mut().zip(x) {
            *b += xi * y;
        }
        self.yty += y * y;
        self.count += 1;
        Ok(())
    }

    /// Residual sum of squares `‖y − Xθ‖²` of the current coefficients.
    ///
    /// The regularized objective `J = yᵀy − (Xᵀy)ᵀ P (Xᵀy)` is tracked through
    /// the recursion `J += e² / (1 + xᵀPx)`, which only adds non-negative
    /// terms; the residual is then `J − θᵀΛθ`.
    pub fn error(&self) -> f64 {
        (self.objective - ridge_penalty(&self.ridge, &self.theta)).max(0.0)
    }

    /// Regularized objective `yᵀy − (Xᵀy)ᵀ P (Xᵀy)` evaluated directly, clamped at zero.
    pub fn closed_form_error(&self) -> f64 {
        let d = self.dim();
        let mut pb = vec![0.0; d];
        mat_vec_into(&self.gram_inv, &self.xty, &mut pb);
        (self.yty - dot(&self.xty, &pb)).max(0.0)
    }
}

impl PartialEq for GramState {
    fn eq(&self, other: &Self) -> bool {
        self.ridge == other.ridge
            && self.gram_inv == other.gram_inv
            && self.xty == other.xty
            && self.yty == other.yty
            && self.count == other.count
            && self.theta == other.theta
            && self.objective == other.objective
    }
}

/// `θᵀΛθ` for a diagonal ridge.
pub(crate) fn ridge_penalty(ridge: &[f64], theta: &[f64]) -> f64 {
    ridge
        .iter()
        .zip(theta)
        .fold(0.0, |acc, (l, t)| acc + l * t * t)
}

/// Sufficient statistics of an index interval: `XᵀX` (no ridge), `Xᵀy`, `yᵀy`.
///
/// Adjacent intervals combine by addition, which is how merging and the
/// restricted DP assemble candidate fits without touching the rows again.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    pub count: usize,
    pub gram: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl SegmentStats {
    pub fn empty(d: usize) -> Self {
        Self {
            count: 0,
            gram: vec![0.0; d * d],
            xty: vec![0.0; d],
            yty: 0.0,
        }
    }

    pub fn from_range(dataset: &DataSet, range: Range<usize>) -> Self {
        let mut s = Self::empty(dataset.d());
        for i in range {
            s.push(dataset.row(i), dataset.y()[i]);
        }
        s
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        add_outer(&mut self.gram, x);
        for (b, xi) in self.xty.iter_mut().zip(x) {
            *b += xi * y;
        }
        self.yty += y * y;
        self.count += 1;
    }

    pub fn absorb(&mut self, other: &SegmentStats) {
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            *a += b;
        }
        self.yty += other.yty;
        self.count += other.count;
    }

    pub fn merged(&self, other: &SegmentStats) -> Self {
        let mut s = self.clone();
        s.absorb(other);
        s
    }

    /// Factorizes `XᵀX + Λ`.
    pub fn factor(&self, ridge: &[f64]) -> Result<Cholesky> {
        let d = self.xty.len();
        let mut g = self.gram.clone();
        for (j, l) in ridge.iter().enumerate() {
            g[j * d + j] += l;
        }
        Cholesky::factor(&g, d)
    }

    /// Ridge-regularized least-squares coefficients.
    pub fn solve(&self, ridge: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor(ridge)?.solve(&self.xty))
    }

    /// `‖y − Xθ‖²` expanded as `yᵀy − 2θᵀXᵀy + θᵀXᵀXθ`, clamped at zero.
    pub fn closed_form_sse(&self, theta: &[f64]) -> f64 {
        let d = theta.len();
        let mut g_theta = vec![0.0; d];
        mat_vec_into(&self.gram, theta, &mut g_theta);
        (self.yty - 2.0 * dot(theta, &self.xty) + dot(theta, &g_theta)).max(0.0)
    }
}
