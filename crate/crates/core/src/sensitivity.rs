//! Propagation of first derivatives with respect to a single parameter that
//! enters the drift and/or the linear drive.
//!
//! ```text
//! d(dsigma)/dt = dA sigma + sigma dA^T + A dsigma + dsigma A^T - dK K^T - K dK^T,   dK = dsigma B
//! d(dR)        = [dA R + (A - K B^T) dR + du] dt + c dK dw
//! ```
//!
//! The homogeneous part of the second line is integrated with a classical
//! RK4 propagator built from the half-step covariance path; the terms that
//! depend on the realisation (`dA R` and the noise) are added explicitly.
//! When `dA = 0` these vanish identically and the sensitivity is the same
//! deterministic curve for every record.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::dynamics::{CovariancePath, LinearModel, MatrixPath};
use crate::error::{Error, Result};
use crate::symplectic::{symmetrize, GaussianState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference { h: f64 },
}

/// A model together with the derivatives of its drift and drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamModel {
    pub name: String,
    pub model: LinearModel,
    pub d_drift: DMatrix<f64>,
    pub d_drive: DVector<f64>,
    pub source: DerivativeSource,
    /// Parameter-independent initial state.
    pub initial: GaussianState,
}

impl ParamModel {
    pub fn new(
        name: impl Into<String>,
        model: LinearModel,
        d_drift: DMatrix<f64>,
        d_drive: DVector<f64>,
        source: DerivativeSource,
        initial: GaussianState,
    ) -> Result<Self> {
        let dim = model.dim();
        if d_drift.shape() != (dim, dim) || d_drive.len() != dim {
            return Err(Error::Dimension(format!("parameter derivatives must be {dim}x{dim} and length {dim}")));
        }
        if initial.dim() != dim || initial.cov.shape() != (dim, dim) {
            return Err(Error::Dimension("initial state does not match the model dimension".into()));
        }
        if let DerivativeSource::FiniteDifference { h } = source {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
            }
        }
        Ok(Self { name: name.into(), model, d_drift, d_drive, source, initial })
    }

    /// Builds the model at `theta` and differentiates `build` numerically.
    pub fn from_builder(
        name: impl Into<String>,
        build: impl Fn(f64) -> Result<LinearModel>,
        theta: f64,
        h: f64,
        initial: GaussianState,
    ) -> Result<Self> {
        let model = build(theta)?;
        let (d_drift, d_drive) = finite_difference_derivatives(&build, theta, h)?;
        Self::new(name, model, d_drift, d_drive, DerivativeSource::FiniteDifference { h }, initial)
    }

    /// True when the parameter only enters the drive, which makes the
    /// covariance parameter independent and the sensitivity deterministic.
    pub fn is_drive_only(&self) -> bool {
        self.d_drift.iter().all(|&v| v == 0.0)
    }
}

/// Central differences `(A(θ+h) - A(θ-h)) / 2h`, `(u(θ+h) - u(θ-h)) / 2h`.
pub fn finite_difference_derivatives(
    build: impl Fn(f64) -> Result<LinearModel>,
    theta: f64,
    h: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    if h < 1e-12 * theta.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step {h:e} is below round-off at parameter value {theta}"
        )));
    }
    let plus = build(theta + h)?;
    let minus = build(theta - h)?;
    let width = (theta + h) - (theta - h);
    let d_drift = (&plus.matrices.drift - &minus.matrices.drift) / width;
    let d_drive = (&plus.drive - &minus.drive) / width;
    Ok((d_drift, d_drive))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityState {
    pub d_mean: DVector<f64>,
    pub d_cov: DMatrix<f64>,
}

fn dsigma_rhs(
    model: &LinearModel,
    d_drift: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    dsigma: &DMatrix<f64>,
) -> DMatrix<f64> {
    let m = &model.matrices;
    let a = &m.drift;
    let k = sigma * &m.readout + &m.correlation;
    let dk = dsigma * &m.readout;
    let dkkt = &dk * k.transpose();
    d_drift * sigma + sigma * d_drift.transpose() + a * dsigma + dsigma * a.transpose() - &dkkt - dkkt.transpose()
}

fn riccati_rhs(model: &LinearModel, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let m = &model.matrices;
    let k = sigma * &m.readout + &m.correlation;
    &m.drift * sigma + sigma * m.drift.transpose() + &m.diffusion - &k * k.transpose()
}

/// Covariance derivative `dsigma` on the outer grid, starting from zero.
///
/// Integrated jointly with the Riccati equation by RK4 at half the outer
/// step, restarting every half step from the stored covariance.
pub fn evolve_dsigma(pm: &ParamModel, path: &CovariancePath) -> Result<Vec<DMatrix<f64>>> {
    let model = &pm.model;
    let dim = model.dim();
    let grid = path.grid();
    let h = 0.5 * grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    let mut ds = DMatrix::zeros(dim, dim);
    out.push(ds.clone());
    if pm.is_drive_only() {
        out.resize(grid.n_steps() + 1, ds);
        return Ok(out);
    }
    let da = &pm.d_drift;
    for j in 0..2 * grid.n_steps() {
        let s = path.sigma_half(j).into_owned();
        let k1s = riccati_rhs(model, &s);
        let k1d = dsigma_rhs(model, da, &s, &ds);
        let s2 = &s + &k1s * (0.5 * h);
        let d2 = &ds + &k1d * (0.5 * h);
        let k2s = riccati_rhs(model, &s2);
        let k2d = dsigma_rhs(model, da, &s2, &d2);
        let s3 = &s + &k2s * (0.5 * h);
        let d3 = &ds + &k2d * (0.5 * h);
        let k3s = riccati_rhs(model, &s3);
        let k3d = dsigma_rhs(model, da, &s3, &d3);
        let s4 = &s + &k3s * h;
        let d4 = &ds + &k3d * h;
        let k4d = dsigma_rhs(model, da, &s4, &d4);
        ds += (k1d + (k2d + k3d) * 2.0 + k4d) * (h / 6.0);
        symmetrize(&mut ds);
        if ds.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariance derivative", t: (j + 1) as f64 * h });
        }
        if j % 2 == 1 {
            out.push(ds.clone());
        }
    }
    Ok(out)
}

/// Precomputed per-step operators for the mean sensitivity:
/// `dR_{k+1} = Phi_k dR_k + psi_k + dt dA R_k + c dK_k dw_k`.
#[derive(Debug, Clone)]
pub struct SensitivityPlan {
    dt: f64,
    scale: f64,
    drive_only: bool,
    d_drift: DMatrix<f64>,
    phi: MatrixPath,
    psi: MatrixPath,
    d_gain: MatrixPath,
    d_cov: Vec<DMatrix<f64>>,
}

impl SensitivityPlan {
    pub fn new(pm: &ParamModel, path: &CovariancePath) -> Result<Self> {
        let model = &pm.model;
        let dim = model.dim();
        let grid = path.grid();
        let n = grid.n_steps();
        let dt = grid.dt();
        let bt = model.matrices.readout.transpose();
        let d_cov = evolve_dsigma(pm, path)?;

        // Filter matrix M = A - K B^T at every half step.
        let filter = |j: usize| -> DMatrix<f64> { &model.matrices.drift - path.gain_half(j) * &bt };
        let mut phi = MatrixPath::with_capacity(dim, dim, n);
        let mut psi = MatrixPath::with_capacity(dim, 1, n);
        let mut d_gain = MatrixPath::with_capacity(dim, model.noise_dim(), n + 1);

        // Apply one RK4 step of X' = M(t) X + U to X = [I | 0], U = [0 | du];
        // the result is [Phi | psi].
        let mut x0 = DMatrix::zeros(dim, dim + 1);
        x0.view_mut((0, 0), (dim, dim)).fill_with_identity();
        let mut u = DMatrix::zeros(dim, dim + 1);
        u.set_column(dim, &pm.d_drive);
        let mut m_next = filter(0);
        for k in 0..n {
            let m0 = m_next;
            let mh = filter(2 * k + 1);
            m_next = filter(2 * k + 2);
            let k1 = &m0 * &x0 + &u;
            let k2 = &mh * (&x0 + &k1 * (0.5 * dt)) + &u;
            let k3 = &mh * (&x0 + &k2 * (0.5 * dt)) + &u;
            let k4 = &m_next * (&x0 + &k3 * dt) + &u;
            let step = &x0 + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
            phi.push(&step.columns(0, dim).into_owned());
            psi.push(&step.columns(dim, 1).into_owned());
        }
        for ds in &d_cov {
            d_gain.push(&(ds * &model.matrices.readout));
        }
        Ok(Self {
            dt,
            scale: model.regime.innovation_scale(),
            drive_only: pm.is_drive_only(),
            d_drift: pm.d_drift.clone(),
            phi,
            psi,
            d_gain,
            d_cov,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.phi.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.drive_only
    }

    pub fn d_cov(&self, k: usize) -> &DMatrix<f64> {
        &self.d_cov[k]
    }

    pub fn d_gain(&self, k: usize) -> DMatrixView<'_, f64> {
        self.d_gain.get(k)
    }

    /// Advances `d_mean` from `t_k` to `t_{k+1}` in place, given the
    /// conditional mean `mean` at `t_k` and the increment `dw` of that step.
    /// `tmp` is scratch of the state dimension.
    pub fn step(
        &self,
        k: usize,
        mean: &DVector<f64>,
        d_mean: &mut DVector<f64>,
        dw: &DVector<f64>,
        tmp: &mut DVector<f64>,
    ) {
        tmp.copy_from(&self.psi.get(k).column(0));
        tmp.gemv(1.0, &self.phi.get(k), d_mean, 1.0);
        if !self.drive_only {
            tmp.gemv(self.dt, &self.d_drift, mean, 1.0);
            tmp.gemv(self.scale, &self.d_gain.get(k), dw, 1.0);
        }
        std::mem::swap(tmp, d_mean);
    }
}

/// Mean sensitivity for a drive-only parameter, where it does not depend
/// on the measurement record.
pub fn deterministic_sensitivity(pm: &ParamModel, path: &CovariancePath) -> Result<Vec<DVector<f64>>> {
    deterministic_sensitivity_from(pm, path, &DVector::zeros(pm.model.dim()))
}

/// As [`deterministic_sensitivity`], continuing from a known `d_mean0`
/// (e.g. the end of an earlier segment whose final covariance seeds `path`).
pub fn deterministic_sensitivity_from(
    pm: &ParamModel,
    path: &CovariancePath,
    d_mean0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if d_mean0.len() != pm.model.dim() {
        return Err(Error::Dimension("initial sensitivity has the wrong length".into()));
    }
    if !pm.is_drive_only() {
        return Err(Error::InvalidParameter(format!(
            "parameter '{}' enters the drift; its sensitivity is record dependent",
            pm.name
        )));
    }
    let plan = SensitivityPlan::new(pm, path)?;
    deterministic_from_plan(&plan, d_mean0.clone(), pm.model.noise_dim())
}

pub(crate) fn deterministic_from_plan(
    plan: &SensitivityPlan,
    d0: DVector<f64>,
    noise_dim: usize,
) -> Result<Vec<DVector<f64>>> {
    let dim = d0.len();
    let mut d = d0;
    let mut tmp = DVector::zeros(dim);
    let zero_mean = DVector::zeros(dim);
    let zero_dw = DVector::zeros(noise_dim);
    let mut out = Vec::with_capacity(plan.n_steps() + 1);
    out.push(d.clone());
    for k in 0..plan.n_steps() {
        plan.step(k, &zero_mean, &mut d, &zero_dw, &mut tmp);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "mean sensitivity", t: (k + 1) as f64 * plan.dt });
        }
        out.push(d.clone());
    }
    Ok(out)
}
