//! Small dense kernels on row-major `d × d` buffers. Dimensions here are the
//! feature count, so everything is written as plain loops.

use crate::error::{Error, Result};

/// Left-to-right dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `out = m · v` for a row-major square `m`.
#[inline]
pub fn mat_vec_into(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o = dot(row, v);
    }
}

/// Adds `x xᵀ` to the symmetric matrix `m`.
#[inline]
pub fn add_outer(m: &mut [f64], x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &mut m[i * d..(i + 1) * d];
        for (r, xj) in row.iter_mut().zip(x) {
            *r += xi * xj;
        }
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    d: usize,
}

impl Cholesky {
    pub fn factor(a: &[f64], d: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), d * d);
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a[j * d + j];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut s = a[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { l, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Smallest squared pivot, i.e. the smallest `L_jj²`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.d)
            .map(|j| self.l[j * self.d + j].powi(2))
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `A z = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut z = b.to_vec();
        for i in 0..d {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * d + k] * z[k];
            }
            z[i] = s / self.l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in i + 1..d {
                s -= self.l[k * d + i] * z[k];
            }
            z[i] = s / self.l[i * d + i];
        }
        z
    }

    /// Full symmetric inverse `A⁻¹`.
    pub fn inverse(&self) -> Vec<f64> {
        let d = self.d;
        let mut inv = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..d {
                inv[i * d + j] = col[i];
            }
        }
        // exact symmetry
        for i in 0..d {
            for j in i + 1..d {
                let v = 0.5 * (inv[i * d + j] + inv[j * d + i]);
                inv[i * d + j] = v;
                inv[j * d + i] = v;
            }
        }
        inv
    }
}
