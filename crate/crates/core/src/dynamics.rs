//! First- and second-moment dynamics of a linear Gaussian system under
//! continuous general-dyne monitoring.
//!
//! With drift `A`, diffusion `D`, readout `B` and noise correlation `N`, the
//! conditional state obeys
//!
//! ```text
//! dR     = (A R + u) dt + c K dw,          K = sigma B + N
//! dsigma = (A sigma + sigma A^T + D - K K^T) dt
//! dy     = B^T R dt + c dw
//! ```
//!
//! where `c = 1/sqrt(2)` for quantum covariances (vacuum = identity) and
//! `c = 1` for the classical Kalman-Bucy filter. Equivalently, for a fixed
//! record, `dR = (A - K B^T) R dt + u dt + K dy`.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::measurement::{whiten, GeneralDyne};
use crate::noise::NoiseSource;
use crate::symplectic::{
    check_physical, heisenberg_min_eig, min_symmetric_eig, omega, symmetrize, GaussianState, ModeLayout,
    PHYSICALITY_TOL,
};

/// Physical description of a monitored open system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub layout: ModeLayout,
    /// Quadratic Hamiltonian matrix `H_s`, `H = r^T H_s r / 2 - r^T Omega u`.
    pub hamiltonian: DMatrix<f64>,
    /// Linear drive `u`.
    pub drive: DVector<f64>,
    /// System-bath coupling `C` (2n x 2m).
    pub coupling: DMatrix<f64>,
    /// Bath covariance `sigma_b` (2m x 2m).
    pub bath_cov: DMatrix<f64>,
    pub measurement: GeneralDyne,
}

impl SystemModel {
    pub fn new(
        hamiltonian: DMatrix<f64>,
        drive: DVector<f64>,
        coupling: DMatrix<f64>,
        bath_cov: DMatrix<f64>,
        measurement: GeneralDyne,
    ) -> Result<Self> {
        let layout = ModeLayout::from_dim(hamiltonian.nrows())?;
        let dim = layout.dim();
        let bath_dim = measurement.dim();
        if hamiltonian.ncols() != dim {
            return Err(Error::Dimension("Hamiltonian matrix must be square".into()));
        }
        let scale = hamiltonian.amax().max(1.0);
        if (&hamiltonian - hamiltonian.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("Hamiltonian matrix must be symmetric".into()));
        }
        if drive.len() != dim {
            return Err(Error::Dimension(format!(
                "drive has length {} but the system dimension is {dim}",
                drive.len()
            )));
        }
        if coupling.nrows() != dim || coupling.ncols() != bath_dim {
            return Err(Error::Dimension(format!(
                "coupling is {}x{}, expected {dim}x{bath_dim}",
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        if bath_cov.nrows() != bath_dim || bath_cov.ncols() != bath_dim {
            return Err(Error::Dimension(format!(
                "bath covariance is {}x{}, expected {bath_dim}x{bath_dim}",
                bath_cov.nrows(),
                bath_cov.ncols()
            )));
        }
        let report = check_physical(&bath_cov, PHYSICALITY_TOL)?;
        if !report.is_physical {
            return Err(Error::InvalidParameter(format!(
                "bath covariance violates the uncertainty principle (min eigenvalue {:e})",
                report.min_eig
            )));
        }
        Ok(Self { layout, hamiltonian, drive, coupling, bath_cov, measurement })
    }

    pub fn linear_model(&self) -> Result<LinearModel> {
        LinearModel::new(Regime::Quantum, build_matrices(self)?, self.drive.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynMatrices {
    /// Drift `A`.
    pub drift: DMatrix<f64>,
    /// Diffusion `D`.
    pub diffusion: DMatrix<f64>,
    /// Readout `B`; the record is `dy = B^T R dt + noise`.
    pub readout: DMatrix<f64>,
    /// Correlation `N` between process and measurement noise.
    pub correlation: DMatrix<f64>,
}

/// `A = Omega H_s + Omega C Omega C^T / 2`, `D = Omega C sigma_b C^T Omega^T`,
/// `B = C Omega^T W`, `N = Omega C sigma_b W` with `W = (sigma_b + sigma_m)^{-1/2}`.
pub fn build_matrices(model: &SystemModel) -> Result<DynMatrices> {
    let om = omega(model.layout);
    let bath_layout = ModeLayout::new(model.measurement.n_bath_modes())?;
    let om_b = omega(bath_layout);
    let c = &model.coupling;
    let om_c = &om * c;

    let drift = &om * &model.hamiltonian + &om_c * &om_b * c.transpose() * 0.5;
    let mut diffusion = &om_c * &model.bath_cov * om_c.transpose();
    symmetrize(&mut diffusion);

    let w = whiten(&model.bath_cov, &model.measurement)?.inv_sqrt;
    let readout = c * om_b.transpose() * &w;
    let correlation = &om_c * &model.bath_cov * &w;
    Ok(DynMatrices { drift, diffusion, readout, correlation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Quantum covariances: vacuum = identity, innovations scaled by `1/sqrt(2)`.
    Quantum,
    /// Classical Kalman-Bucy filter: unit innovation scale, no Heisenberg floor.
    Classical,
}

impl Regime {
    pub fn innovation_scale(self) -> f64 {
        match self {
            Regime::Quantum => std::f64::consts::FRAC_1_SQRT_2,
            Regime::Classical => 1.0,
        }
    }

    /// Factor in `dF = w (dR)^T B B^T (dR) dt`; equals `1 / innovation_scale^2`.
    pub fn fisher_weight(self) -> f64 {
        match self {
            Regime::Quantum => 2.0,
            Regime::Classical => 1.0,
        }
    }

    /// Smallest eigenvalue governing validity: of `sigma + i Omega` for
    /// quantum states, of `sigma` itself for classical ones.
    pub fn validity_eig(self, sigma: &DMatrix<f64>) -> Result<f64> {
        match self {
            Regime::Quantum => heisenberg_min_eig(sigma),
            Regime::Classical => min_symmetric_eig(sigma),
        }
    }
}

/// Moment-level model consumed by the integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub regime: Regime,
    pub matrices: DynMatrices,
    pub drive: DVector<f64>,
}

impl LinearModel {
    pub fn new(regime: Regime, matrices: DynMatrices, drive: DVector<f64>) -> Result<Self> {
        let dim = matrices.drift.nrows();
        let k = matrices.readout.ncols();
        let ok = matrices.drift.ncols() == dim
            && matrices.diffusion.shape() == (dim, dim)
            && matrices.readout.nrows() == dim
            && matrices.correlation.shape() == (dim, k)
            && drive.len() == dim;
        if !ok || dim == 0 {
            return Err(Error::Dimension("inconsistent drift/diffusion/readout/correlation/drive shapes".into()));
        }
        if regime == Regime::Quantum && !dim.is_multiple_of(2) {
            return Err(Error::Dimension(format!("quantum model needs an even dimension, got {dim}")));
        }
        let scale = matrices.diffusion.amax().max(1.0);
        if (&matrices.diffusion - matrices.diffusion.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("diffusion matrix must be symmetric".into()));
        }
        if min_symmetric_eig(&matrices.diffusion)? < -1e-12 * scale {
            return Err(Error::InvalidParameter("diffusion matrix must be positive semidefinite".into()));
        }
        Ok(Self { regime, matrices, drive })
    }

    pub fn dim(&self) -> usize {
        self.drive.len()
    }

    /// Number of record channels (columns of `B`).
    pub fn noise_dim(&self) -> usize {
        self.matrices.readout.ncols()
    }

    pub fn with_drive(&self, drive: DVector<f64>) -> Result<Self> {
        Self::new(self.regime, self.matrices.clone(), drive)
    }

    /// Copy of the model with every record channel switched off.
    pub fn unmonitored(&self) -> Self {
        let mut m = self.clone();
        m.matrices.readout.fill(0.0);
        m.matrices.correlation.fill(0.0);
        m
    }
}

/// Default integration step: `1e-3` over the fastest rate among the drift
/// eigenvalue magnitudes and `extra_rates`.
pub fn default_step(drift: &DMatrix<f64>, extra_rates: &[f64]) -> f64 {
    let eig_rate = drift.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rate = extra_rates.iter().copied().map(f64::abs).fold(eig_rate, f64::max);
    if rate > 0.0 && rate.is_finite() {
        1e-3 / rate
    } else {
        1e-3
    }
}

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// `t_max` is rounded to the nearest multiple of `dt`.
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive and finite, got {dt}")));
        }
        if !(t_max >= dt) || !t_max.is_finite() {
            return Err(Error::InvalidParameter(format!("t_max must be finite and at least dt, got {t_max}")));
        }
        let n_steps = (t_max / dt).round() as usize;
        Self::from_steps(dt, n_steps)
    }

    pub fn from_steps(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || n_steps == 0 {
            return Err(Error::InvalidParameter(format!("invalid grid: dt = {dt}, {n_steps} steps")));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Same horizon with `factor` times more steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self { dt: self.dt / factor as f64, n_steps: self.n_steps * factor }
    }
}

/// Sequence of equally shaped matrices in one flat column-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixPath {
    pub fn with_capacity(rows: usize, cols: usize, n: usize) -> Self {
        Self { rows, cols, data: Vec::with_capacity(rows * cols * n) }
    }

    pub fn push(&mut self, m: &DMatrix<f64>) {
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        self.data.extend_from_slice(m.as_slice());
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.rows * self.cols).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> DMatrixView<'_, f64> {
        let stride = self.rows * self.cols;
        DMatrixView::from_slice(&self.data[i * stride..(i + 1) * stride], self.rows, self.cols)
    }

    pub fn to_matrix(&self, i: usize) -> DMatrix<f64> {
        self.get(i).into_owned()
    }

    pub fn iter(&self) -> impl Iterator<Item = DMatrixView<'_, f64>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

fn riccati_rhs(m: &DynMatrices, sigma: &DMatrix<f64>, conditional: bool) -> DMatrix<f64> {
    let a = &m.drift;
    let mut out = a * sigma + sigma * a.transpose() + &m.diffusion;
    if conditional {
        let k = sigma * &m.readout + &m.correlation;
        out -= &k * k.transpose();
    }
    out
}

fn rk4_covariance_step(m: &DynMatrices, sigma: &DMatrix<f64>, h: f64, conditional: bool) -> DMatrix<f64> {
    let k1 = riccati_rhs(m, sigma, conditional);
    let k2 = riccati_rhs(m, &(sigma + &k1 * (0.5 * h)), conditional);
    let k3 = riccati_rhs(m, &(sigma + &k2 * (0.5 * h)), conditional);
    let k4 = riccati_rhs(m, &(sigma + &k3 * h), conditional);
    let mut next = sigma + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    symmetrize(&mut next);
    next
}

/// Conditional covariance and gain `K = sigma B + N`, sampled every half
/// step so that fourth-order schemes on the outer grid can read midpoint
/// values directly.
#[derive(Debug, Clone)]
pub struct CovariancePath {
    grid: TimeGrid,
    regime: Regime,
    sigma: MatrixPath,
    gain: MatrixPath,
    min_eig: f64,
}

impl CovariancePath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Covariance at `t_k`.
    pub fn sigma(&self, k: usize) -> DMatrixView<'_, f64> {
        self.sigma.get(2 * k)
    }

    /// Covariance at `j * dt / 2`.
    pub fn sigma_half(&self, j: usize) -> DMatrixView<'_, f64> {
        self.sigma.get(j)
    }

    /// Gain `sigma B + N` at `t_k`.
    pub fn gain(&self, k: usize) -> DMatrixView<'_, f64> {
        self.gain.get(2 * k)
    }

    pub fn gain_half(&self, j: usize) -> DMatrixView<'_, f64> {
        self.gain.get(j)
    }

    /// Smallest validity eigenvalue seen along the path (see [`Regime::validity_eig`]).
    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    pub fn final_sigma(&self) -> DMatrix<f64> {
        self.sigma(self.grid.n_steps()).into_owned()
    }
}

fn integrate_covariance(
    model: &LinearModel,
    sigma0: &DMatrix<f64>,
    grid: &TimeGrid,
    conditional: bool,
    tol: f64,
) -> Result<CovariancePath> {
    let dim = model.dim();
    if sigma0.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "initial covariance is {}x{}, expected {dim}x{dim}",
            sigma0.nrows(),
            sigma0.ncols()
        )));
    }
    let m = &model.matrices;
    let n_half = 2 * grid.n_steps();
    let h = 0.5 * grid.dt();
    let mut sigma_path = MatrixPath::with_capacity(dim, dim, n_half + 1);
    let mut gain_path = MatrixPath::with_capacity(dim, model.noise_dim(), n_half + 1);

    let mut sigma = sigma0.clone();
    symmetrize(&mut sigma);
    let mut min_eig = f64::INFINITY;
    for j in 0..=n_half {
        let t = j as f64 * h;
        if j > 0 {
            sigma = rk4_covariance_step(m, &sigma, h, conditional);
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariance", t });
        }
        let e = model.regime.validity_eig(&sigma)?;
        if e < -tol {
            return Err(Error::Unphysical { t, min_eig: e, tol });
        }
        min_eig = min_eig.min(e);
        let gain =
            if conditional { &sigma * &m.readout + &m.correlation } else { DMatrix::zeros(dim, model.noise_dim()) };
        sigma_path.push(&sigma);
        gain_path.push(&gain);
    }
    Ok(CovariancePath { grid: *grid, regime: model.regime, sigma: sigma_path, gain: gain_path, min_eig })
}

/// Riccati evolution `dsigma/dt = A sigma + sigma A^T + D - K K^T` by
/// fixed-step RK4 with symmetrization after each step.
pub fn evolve_conditional_covariance(
    model: &LinearModel,
    sigma0: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<CovariancePath> {
    evolve_conditional_covariance_with_tol(model, sigma0, grid, PHYSICALITY_TOL)
}

pub fn evolve_conditional_covariance_with_tol(
    model: &LinearModel,
    sigma0: &DMatrix<f64>,
    grid: &TimeGrid,
    tol: f64,
) -> Result<CovariancePath> {
    integrate_covariance(model, sigma0, grid, true, tol)
}

/// Unconditional moments `dR/dt = A R + u`, `dsigma/dt = A sigma + sigma A^T + D`.
pub fn evolve_unconditional(
    model: &LinearModel,
    state0: &GaussianState,
    grid: &TimeGrid,
) -> Result<Vec<GaussianState>> {
    let cov = integrate_covariance(model, &state0.cov, grid, false, PHYSICALITY_TOL)?;
    let a = &model.matrices.drift;
    let u = &model.drive;
    let f = |r: &DVector<f64>| a * r + u;
    let dt = grid.dt();
    let mut r = state0.mean.clone();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    for k in 0..=grid.n_steps() {
        if k > 0 {
            let k1 = f(&r);
            let k2 = f(&(&r + &k1 * (0.5 * dt)));
            let k3 = f(&(&r + &k2 * (0.5 * dt)));
            let k4 = f(&(&r + &k3 * dt));
            r += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "first moments", t: grid.time(k) });
            }
        }
        out.push(GaussianState { mean: r.clone(), cov: cov.sigma(k).into_owned() });
    }
    Ok(out)
}

/// One Euler-Maruyama step `R += (A R + u) dt + c K dw` in place.
#[inline]
pub(crate) fn advance_mean(
    model: &LinearModel,
    gain: &DMatrixView<'_, f64>,
    r: &mut DVector<f64>,
    dw: &DVector<f64>,
    dt: f64,
    tmp: &mut DVector<f64>,
) {
    tmp.copy_from(&model.drive);
    tmp.gemv(1.0, &model.matrices.drift, r, 1.0);
    r.axpy(dt, tmp, 1.0);
    r.gemv(model.regime.innovation_scale(), gain, dw, 1.0);
}

/// Conditional first moments along one realisation together with the
/// innovations that drove it (`increments[k]` acts on `[t_k, t_{k+1}]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub means: Vec<DVector<f64>>,
    pub increments: Vec<DVector<f64>>,
}

pub fn sample_trajectory(
    model: &LinearModel,
    path: &CovariancePath,
    mean0: &DVector<f64>,
    noise: &mut impl NoiseSource,
) -> Result<Trajectory> {
    if mean0.len() != model.dim() {
        return Err(Error::Dimension("initial mean has the wrong length".into()));
    }
    let grid = *path.grid();
    let dt = grid.dt();
    let mut r = mean0.clone();
    let mut tmp = DVector::zeros(model.dim());
    let mut dw = DVector::zeros(model.noise_dim());
    let mut means = Vec::with_capacity(grid.n_steps() + 1);
    let mut increments = Vec::with_capacity(grid.n_steps());
    means.push(r.clone());
    for k in 0..grid.n_steps() {
        noise.fill(&mut dw, dt);
        advance_mean(model, &path.gain(k), &mut r, &dw, dt, &mut tmp);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "first moments", t: grid.time(k + 1) });
        }
        means.push(r.clone());
        increments.push(dw.clone());
    }
    Ok(Trajectory { grid, means, increments })
}

/// Measurement record `dy_k = B^T R_k dt + c dw_k`.
pub fn emit_record(model: &LinearModel, traj: &Trajectory) -> Vec<DVector<f64>> {
    let bt = model.matrices.readout.transpose();
    let c = model.regime.innovation_scale();
    let dt = traj.grid.dt();
    traj.increments.iter().zip(&traj.means).map(|(dw, r)| &bt * r * dt + dw * c).collect()
}

/// Runs the filter on a fixed record: `R += ((A - K B^T) R + u) dt + K dy`.
pub fn filter_record(
    model: &LinearModel,
    path: &CovariancePath,
    mean0: &DVector<f64>,
    record: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let grid = path.grid();
    if record.len() > grid.n_steps() {
        return Err(Error::Dimension(format!(
            "record has {} increments but the grid only {} steps",
            record.len(),
            grid.n_steps()
        )));
    }
    let dt = grid.dt();
    let a = &model.matrices.drift;
    let bt = model.matrices.readout.transpose();
    let mut r = mean0.clone();
    let mut out = Vec::with_capacity(record.len() + 1);
    out.push(r.clone());
    for (k, dy) in record.iter().enumerate() {
        let gain = path.gain(k);
        let innovation_drift = gain * (&bt * &r);
        let next = &r + (a * &r - innovation_drift + &model.drive) * dt + gain * dy;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "filtered first moments", t: grid.time(k + 1) });
        }
        r = next;
        out.push(r.clone());
    }
    Ok(out)
}
