//! Dense Cholesky kernels and the bordered SPD inverse used by the rank-1 updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot must exceed this times the largest diagonal entry.
pub const PIVOT_TOL: f64 = 1e-10;

/// Relative Schur complement tolerance used by [`border_partition`].
pub const SCHUR_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L * L^T = M`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

impl CholeskyFactor {
    /// The factor of a 0x0 matrix.
    pub fn empty() -> Self {
        Self { l: DMatrix::zeros(0, 0) }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Smallest diagonal entry of `L`, squared; the smallest pivot of the factorization.
    pub fn min_pivot(&self) -> f64 {
        self.l.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    /// Solves `M X = rhs` column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "factor is {n}x{n}, right-hand side has {} rows",
                rhs.nrows()
            )));
        }
        let mut x = rhs.clone();
        for col in 0..x.ncols() {
            // forward: L y = b
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
            // backward: L^T x = y
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in i + 1..n {
                    s -= self.l[(k, i)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let x = self.solve(&m)?;
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.dim(), self.dim()))
            .expect("identity has matching dimension")
    }
}

/// Unpivoted dense Cholesky factorization of a symmetric matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] at the first pivot that is not larger than
/// `PIVOT_TOL` times the largest diagonal entry of `m`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let threshold = PIVOT_TOL * max_diag;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor { l })
}

pub fn spd_solve(factor: &CholeskyFactor, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    factor.solve(rhs)
}

/// The partition `[[W, w], [w^T, w0]]` of a bordered SPD matrix together with
/// `W^{-1} w` and the Schur complement `C = w0 - w^T W^{-1} w`.
#[derive(Clone, Debug)]
pub struct BlockSpdPartition {
    pub w_factor: CholeskyFactor,
    pub w: DVector<f64>,
    pub w0: f64,
    pub winv_w: DVector<f64>,
    pub schur: f64,
}

impl BlockSpdPartition {
    /// Inverse of the bordered matrix assembled block-wise from the matrix inversion lemma.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.w.len();
        let winv = self.w_factor.inverse();
        let cinv = 1.0 / self.schur;
        let mut out = DMatrix::zeros(n + 1, n + 1);
        let top = &winv + &self.winv_w * self.winv_w.transpose() * cinv;
        out.view_mut((0, 0), (n, n)).copy_from(&top);
        for i in 0..n {
            out[(i, n)] = -self.winv_w[i] * cinv;
            out[(n, i)] = -self.winv_w[i] * cinv;
        }
        out[(n, n)] = cinv;
        out
    }
}

/// Borders the factored block `W` with column `w` and corner `w0`.
pub fn border_partition(
    w_factor: &CholeskyFactor,
    w: &DVector<f64>,
    w0: f64,
) -> Result<BlockSpdPartition> {
    if w.len() != w_factor.dim() {
        return Err(Error::DimensionMismatch(format!(
            "border column has length {}, block is {}x{}",
            w.len(),
            w_factor.dim(),
            w_factor.dim()
        )));
    }
    let winv_w = w_factor.solve_vec(w)?;
    let schur = w0 - w.dot(&winv_w);
    if !(schur > SCHUR_TOL * w0.abs()) || !schur.is_finite() {
        return Err(Error::SchurNotPositive { schur });
    }
    Ok(BlockSpdPartition {
        w_factor: w_factor.clone(),
        w: w.clone(),
        w0,
        winv_w,
        schur,
    })
}

/// Maximum absolute entry.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Infinity norm of a matrix (maximum absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
