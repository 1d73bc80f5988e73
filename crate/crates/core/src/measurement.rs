//! General-dyne measurements on the output bath modes.
//!
//! A single-mode projective measurement is described by the covariance
//! `sigma_m(s, phi) = R(phi) diag(s, 1/s) R(phi)^T` of the state it projects
//! onto. Homodyne detection is the `s -> 0` limit and an unmonitored mode is
//! the `eta -> 0` limit of an inefficient detector. Both limits make
//! `sigma_b + sigma_m` infinite along some directions, so they are carried as
//! tags and resolved analytically in [`whiten`] instead of being
//! approximated by huge finite numbers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::symplectic::{direct_sum, rotation, symmetrize};

/// Eigenvalues of the finite part above `1/LIMIT_EPS` times the bath scale
/// are treated as infinite.
pub const LIMIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DyneKind {
    /// Projection onto a squeezed vacuum with squeezing `s` at angle `phi`.
    General { s: f64, phi: f64 },
    /// The `s -> 0` limit of [`DyneKind::General`].
    Homodyne { phi: f64 },
    /// The `eta -> 0` limit: the bath mode is traced out.
    Unmonitored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMeasurement {
    pub kind: DyneKind,
    pub efficiency: f64,
}

impl ModeMeasurement {
    /// Finite part of the 2x2 measurement covariance together with an
    /// orthonormal basis of the directions on which it stays finite.
    fn finite_part(&self) -> (DMatrix<f64>, Vec<DVector<f64>>) {
        let eta = self.efficiency;
        let noise = (1.0 - eta) / eta;
        match self.kind {
            DyneKind::General { s, phi } => {
                let r = rotation(phi);
                let proj = &r * DMatrix::from_diagonal(&DVector::from_vec(vec![s, 1.0 / s])) * r.transpose();
                let sigma = proj / eta + DMatrix::identity(2, 2) * noise;
                let basis = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
                (sigma, basis)
            }
            DyneKind::Homodyne { phi } => {
                let r = rotation(phi);
                let v0: DVector<f64> = r.column(0).into_owned();
                let sigma = &v0 * v0.transpose() * noise;
                (sigma, vec![v0])
            }
            DyneKind::Unmonitored => (DMatrix::zeros(2, 2), Vec::new()),
        }
    }
}

/// Local Gaussian measurement over a set of bath modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralDyne {
    modes: Vec<ModeMeasurement>,
}

/// Limit-sense `(sigma_b + sigma_m)^{-1}` and its symmetric square root.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    pub inv: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl GeneralDyne {
    pub fn modes(&self) -> &[ModeMeasurement] {
        &self.modes
    }

    pub fn n_bath_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn is_unmonitored(&self) -> bool {
        self.modes.iter().all(|m| m.kind == DyneKind::Unmonitored)
    }

    /// Number of bath quadrature directions on which the measurement is
    /// infinitely noisy (homodyne anti-squeezed quadratures and every
    /// quadrature of unmonitored modes).
    pub fn limit_rank(&self) -> usize {
        self.modes
            .iter()
            .map(|m| match m.kind {
                DyneKind::General { .. } => 0,
                DyneKind::Homodyne { .. } => 1,
                DyneKind::Unmonitored => 2,
            })
            .sum()
    }

    /// The measurement covariance when no limit tags are present.
    pub fn sigma_m(&self) -> Option<DMatrix<f64>> {
        if self.limit_rank() > 0 {
            return None;
        }
        let blocks: Vec<_> = self.modes.iter().map(|m| m.finite_part().0).collect();
        Some(direct_sum(&blocks))
    }
}

pub fn general_dyne(s: f64, phi: f64) -> Result<GeneralDyne> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("squeezing s must be positive and finite, got {s}")));
    }
    if !phi.is_finite() {
        return Err(Error::InvalidParameter(format!("angle must be finite, got {phi}")));
    }
    Ok(GeneralDyne { modes: vec![ModeMeasurement { kind: DyneKind::General { s, phi }, efficiency: 1.0 }] })
}

/// Projection onto coherent states, `sigma_m = I`.
pub fn heterodyne() -> GeneralDyne {
    general_dyne(1.0, 0.0).expect("s = 1 is valid")
}

pub fn homodyne(phi: f64) -> GeneralDyne {
    GeneralDyne { modes: vec![ModeMeasurement { kind: DyneKind::Homodyne { phi }, efficiency: 1.0 }] }
}

pub fn unmonitored() -> GeneralDyne {
    GeneralDyne { modes: vec![ModeMeasurement { kind: DyneKind::Unmonitored, efficiency: 1.0 }] }
}

/// Dual noisy map `sigma_m -> sigma_m / eta + (1 - eta)/eta * I` on every
/// monitored mode. Successive maps compose multiplicatively in `eta`.
pub fn apply_inefficiency(m: &GeneralDyne, eta: f64) -> Result<GeneralDyne> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "efficiency must lie in (0, 1], got {eta}; use an unmonitored mode for eta = 0"
        )));
    }
    let modes =
        m.modes.iter().map(|mode| ModeMeasurement { kind: mode.kind, efficiency: mode.efficiency * eta }).collect();
    Ok(GeneralDyne { modes })
}

/// Direct sum of local measurements, in bath-mode order.
pub fn compose(parts: &[GeneralDyne]) -> Result<GeneralDyne> {
    if parts.is_empty() {
        return Err(Error::Dimension("compose needs at least one measurement".into()));
    }
    Ok(GeneralDyne { modes: parts.iter().flat_map(|p| p.modes.iter().copied()).collect() })
}

/// `(sigma_b + sigma_m)^{-1}` and `(sigma_b + sigma_m)^{-1/2}` in the limit
/// sense: the inverse is restricted to the subspace where the measurement
/// covariance stays finite, so limit directions map exactly to zero.
pub fn whiten(sigma_b: &DMatrix<f64>, m: &GeneralDyne) -> Result<Whitening> {
    let dim = m.dim();
    if sigma_b.nrows() != dim || sigma_b.ncols() != dim {
        return Err(Error::Dimension(format!(
            "bath covariance is {}x{} but the measurement covers {} bath modes",
            sigma_b.nrows(),
            sigma_b.ncols(),
            m.n_bath_modes()
        )));
    }

    let mut blocks = Vec::with_capacity(m.modes.len());
    let mut basis_cols: Vec<DVector<f64>> = Vec::new();
    for (j, mode) in m.modes.iter().enumerate() {
        let (finite, local_basis) = mode.finite_part();
        blocks.push(finite);
        for v in local_basis {
            let mut col = DVector::zeros(dim);
            col.rows_mut(2 * j, 2).copy_from(&v);
            basis_cols.push(col);
        }
    }

    let k = basis_cols.len();
    if k == 0 {
        return Ok(Whitening { inv: DMatrix::zeros(dim, dim), inv_sqrt: DMatrix::zeros(dim, dim) });
    }

    let u = DMatrix::from_columns(&basis_cols);
    let mut total = sigma_b + direct_sum(&blocks);
    symmetrize(&mut total);
    let mut restricted = u.transpose() * &total * &u;
    symmetrize(&mut restricted);

    let bath_scale = SymmetricEigen::new(sigma_b.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(restricted);
    let max_eig = eig.eigenvalues.amax();
    let mut inv_diag = DVector::zeros(k);
    let mut inv_sqrt_diag = DVector::zeros(k);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !(lambda > 1e-14 * max_eig) {
            return Err(Error::Singular(format!("sigma_b + sigma_m has eigenvalue {lambda:e} on a finite direction")));
        }
        if lambda * LIMIT_EPS > bath_scale {
            continue;
        }
        inv_diag[i] = 1.0 / lambda;
        inv_sqrt_diag[i] = 1.0 / lambda.sqrt();
    }

    let q = &u * &eig.eigenvectors;
    let mut inv = &q * DMatrix::from_diagonal(&inv_diag) * q.transpose();
    let mut inv_sqrt = &q * DMatrix::from_diagonal(&inv_sqrt_diag) * q.transpose();
    symmetrize(&mut inv);
    symmetrize(&mut inv_sqrt);
    Ok(Whitening { inv, inv_sqrt })
}
