//! Row-major dense matrices and a Cholesky-based SPD solver.

use crate::error::Error;
use crate::Result;

/// Dense real matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Build from explicit row-major data. Fails on length mismatch or
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "Mat::from_vec: {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Mat::from_vec: non-finite entry".into()));
        }
        Ok(Mat { rows, cols, data })
    }

    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build entrywise from a closure.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` copied out.
    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Flat row-major view.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Flat mutable row-major view.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    /// `A B`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    /// `Aᵀ`.
    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Gram matrix `Aᵀ A`.
    pub fn gram(&self) -> Mat {
        self.transpose().matmul(self)
    }

    /// Largest eigenvalue of a symmetric PSD matrix via power iteration.
    /// Deterministic: starts from the all-ones vector.
    pub fn lambda_max_spd(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lam = 0.0;
        for _ in 0..200 {
            let w = self.matvec(&v);
            let nw = norm2(&w);
            if nw == 0.0 {
                return 0.0;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / nw;
            }
            lam = nw;
        }
        lam
    }

    fn symmetry_defect(&self) -> f64 {
        let mut num = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                num = num.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        // normalize by the matrix scale, not the off-diagonal alone,
        // which can be numerically zero for near-diagonal matrices
        let den = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Symmetry is checked to 1e-10 relative; a non-positive pivot reports
/// `Error::NotSpd` instead of propagating NaNs.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    if a.rows() != a.cols() {
        return Err(Error::Dim(format!(
            "cholesky: matrix is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.symmetry_defect() > 1e-10 {
        return Err(Error::NotSpd(format!(
            "symmetry defect {:.3e} exceeds 1e-10",
            a.symmetry_defect()
        )));
    }
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::NotSpd(format!("pivot {s:.3e} at row {i}")));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Dim(format!(
            "solve_spd: A is {}x{}, b has length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let l = cholesky(a)?;
    Ok(solve_with_factor(&l, b))
}

/// Solve using a precomputed lower Cholesky factor.
pub fn solve_with_factor(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // backward: Lᵀ x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Log-density of a multivariate normal with SPD covariance.
pub fn gaussian_logpdf(y: &[f64], mean: &[f64], cov: &Mat) -> Result<f64> {
    let n = y.len();
    if mean.len() != n || cov.rows() != n || cov.cols() != n {
        return Err(Error::Dim("gaussian_logpdf: inconsistent dimensions".into()));
    }
    let l = cholesky(cov)?;
    let d: Vec<f64> = y.iter().zip(mean).map(|(a, b)| a - b).collect();
    // quadratic form dᵀ Σ⁻¹ d = ‖L⁻¹ d‖²
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = d[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    let quad = dot(&z, &z);
    let logdet: f64 = (0..n).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
}
