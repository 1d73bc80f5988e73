//! Mode bookkeeping, the symplectic form and covariance-matrix validity.
//!
//! Quadratures are ordered mode by mode, `(x_1, p_1, ..., x_n, p_n)`.
//! Covariances use the anticommutator convention, so the vacuum has
//! covariance equal to the identity and a state is physical when
//! `sigma + i*Omega >= 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default absolute tolerance on eigenvalues used by physicality checks.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeLayout {
    n_modes: usize,
}

impl ModeLayout {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("a layout needs at least one mode".into()));
        }
        Ok(Self { n_modes })
    }

    /// Layout matching a phase-space dimension `2n`.
    pub fn from_dim(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Dimension(format!("phase-space dimension must be even and positive, got {dim}")));
        }
        Self::new(dim / 2)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }
}

/// Block-diagonal symplectic form with `[[0, 1], [-1, 0]]` blocks.
pub fn omega(layout: ModeLayout) -> DMatrix<f64> {
    let dim = layout.dim();
    let mut om = DMatrix::zeros(dim, dim);
    for j in 0..layout.n_modes() {
        om[(2 * j, 2 * j + 1)] = 1.0;
        om[(2 * j + 1, 2 * j)] = -1.0;
    }
    om
}

/// Permutation matrix `P` with `P * r` reordering interleaved quadratures
/// `(x_1, p_1, ..., x_n, p_n)` into blocks `(x_1, ..., x_n, p_1, ..., p_n)`.
/// Covariances transform as `P * sigma * P^T`.
pub fn interleaved_to_blocked(layout: ModeLayout) -> DMatrix<f64> {
    let n = layout.n_modes();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        p[(j, 2 * j)] = 1.0;
        p[(n + j, 2 * j + 1)] = 1.0;
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Zero mean, identity covariance. For a quantum layout this is the vacuum.
    pub fn vacuum(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysReport {
    pub min_eig: f64,
    pub is_physical: bool,
}

/// Replace `m` by its symmetric part in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Smallest eigenvalue of the Hermitian matrix `sigma + i*Omega`.
pub fn heisenberg_min_eig(sigma: &DMatrix<f64>) -> Result<f64> {
    check_square(sigma, "covariance")?;
    let layout = ModeLayout::from_dim(sigma.nrows())?;
    let mut s = sigma.clone();
    symmetrize(&mut s);
    let om = omega(layout);
    let herm = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| Complex64::new(s[(i, j)], om[(i, j)]));
    let eig = SymmetricEigen::new(herm);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eig(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m, "covariance")?;
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Uncertainty-principle check `sigma + i*Omega >= -tol`.
pub fn check_physical(sigma: &DMatrix<f64>, tol: f64) -> Result<PhysReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {tol}")));
    }
    let min_eig = heisenberg_min_eig(sigma)?;
    Ok(PhysReport { min_eig, is_physical: min_eig >= -tol })
}

/// Positive-semidefiniteness check used for classical covariances, which
/// have no Heisenberg floor.
pub fn check_psd(sigma: &DMatrix<f64>, tol: f64) -> Result<PhysReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {tol}")));
    }
    let min_eig = min_symmetric_eig(sigma)?;
    Ok(PhysReport { min_eig, is_physical: min_eig >= -tol })
}

/// Thermal covariance `(1 + 2 n_th) * I` with `n_th` mean excitations per mode.
pub fn thermal_covariance(layout: ModeLayout, n_th: f64) -> Result<DMatrix<f64>> {
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(Error::InvalidParameter(format!("thermal occupation must be finite and non-negative, got {n_th}")));
    }
    let d = layout.dim();
    Ok(DMatrix::identity(d, d) * (1.0 + 2.0 * n_th))
}

/// Phase-space rotation `[[cos, sin], [-sin, cos]]`.
pub fn rotation(phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// Direct sum of square blocks.
pub fn direct_sum(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((off, off), (n, n)).copy_from(b);
        off += n;
    }
    out
}
