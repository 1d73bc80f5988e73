//! Reference computations that share no numerical code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use gaussian_fisher::dynamics::LinearModel;

/// Nanosphere closed forms, written out independently of the library.
pub fn nano_sigma_xx(eta_kappa: f64, t: f64) -> f64 {
    1.0 / (1.0 + 2.0 * eta_kappa * t)
}

pub fn nano_sigma_pp(kappa: f64, t: f64) -> f64 {
    1.0 + 2.0 * kappa * t
}

pub fn nano_dx(eta_kappa: f64, t: f64) -> f64 {
    -(1.0 + eta_kappa * t) * t / (1.0 + 2.0 * eta_kappa * t)
}

pub fn nano_fisher(eta_kappa: f64, t: f64) -> f64 {
    2.0 * t.powi(3) * eta_kappa * (2.0 + eta_kappa * t) / (3.0 * (1.0 + 2.0 * eta_kappa * t))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Discretised hidden-state model equivalent to the monitored system.
///
/// Quantum covariances are twice the classical ones, so the hidden state
/// starts from `N(R0, sigma0 / 2)`, the process noise over a step is
/// `N(0, D dt / 2)`, the readout noise `N(0, dt / 2)` and their
/// cross-covariance `N dt / 2`.
#[derive(Clone)]
pub struct DiscreteModel {
    pub a: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub u: DVector<f64>,
    pub mean0: DVector<f64>,
    pub cov0: DMatrix<f64>,
    pub dt: f64,
    pub steps: usize,
}

impl DiscreteModel {
    pub fn from_linear(
        model: &LinearModel,
        mean0: &DVector<f64>,
        sigma0: &DMatrix<f64>,
        dt: f64,
        steps: usize,
    ) -> Self {
        let m = &model.matrices;
        Self {
            a: m.drift.clone(),
            d: m.diffusion.clone(),
            b: m.readout.clone(),
            n: m.correlation.clone(),
            u: model.drive.clone(),
            mean0: mean0.clone(),
            cov0: sigma0 * 0.5,
            dt,
            steps,
        }
    }

    /// Draws one record `y_k = B^T x_k dt + nu_k`, `k = 0..steps`.
    pub fn simulate(&self, rng: &mut ChaCha20Rng) -> Vec<DVector<f64>> {
        let dim = self.a.nrows();
        let k = self.b.ncols();
        let dt = self.dt;
        let normal = |rng: &mut ChaCha20Rng, n: usize| DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let transition = DMatrix::identity(dim, dim) + &self.a * dt;
        let residual = sqrt_psd(&(&self.d - &self.n * self.n.transpose()));
        let half = (0.5 * dt).sqrt();
        let mut x = &self.mean0 + sqrt_psd(&self.cov0) * normal(rng, dim);
        let mut ys = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            let nu = normal(rng, k) * half;
            let xi = &self.n * &nu + &residual * normal(rng, dim) * half;
            ys.push(self.b.transpose() * &x * dt + &nu);
            x = &transition * &x + &self.u * dt + xi;
        }
        ys
    }

    /// Exact Gaussian log-likelihood of a record (Kalman filter with
    /// correlated process and measurement noise).
    pub fn log_likelihood(&self, ys: &[DVector<f64>]) -> f64 {
        let dim = self.a.nrows();
        let k = self.b.ncols();
        let dt = self.dt;
        let transition = DMatrix::identity(dim, dim) + &self.a * dt;
        let q = &self.d * (0.5 * dt);
        let cross = &self.n * (0.5 * dt);
        let r = DMatrix::identity(k, k) * (0.5 * dt);
        let h = self.b.transpose() * dt;
        let mut m = self.mean0.clone();
        let mut p = self.cov0.clone();
        let mut ll = 0.0;
        for y in ys {
            let e = y - &h * &m;
            let s = &h * &p * h.transpose() + &r;
            let chol = s.clone().cholesky().expect("innovation covariance is positive definite");
            let s_inv_e = chol.solve(&e);
            let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            ll -= 0.5 * (e.dot(&s_inv_e) + log_det + k as f64 * (2.0 * std::f64::consts::PI).ln());
            let c = &transition * &p * h.transpose() + &cross;
            let g = chol.solve(&c.transpose()).transpose();
            m = &transition * &m + &self.u * dt + &g * &e;
            p = &transition * &p * transition.transpose() + &q - &g * &s * g.transpose();
            p = 0.5 * (&p + p.transpose());
        }
        ll
    }
}

pub struct OracleEstimate {
    pub fisher: f64,
    pub stderr: f64,
    pub mean_score: f64,
    pub mean_score_stderr: f64,
}

/// Fisher information as the variance of the finite-difference score of
/// the exact discrete likelihood, over `n_records` records drawn at `theta`.
pub fn bayesian_fisher(
    build: impl Fn(f64) -> DiscreteModel,
    theta: f64,
    h: f64,
    n_records: usize,
    seed: u64,
) -> OracleEstimate {
    let truth = build(theta);
    let plus = build(theta + h);
    let minus = build(theta - h);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let ys = truth.simulate(&mut rng);
        scores.push((plus.log_likelihood(&ys) - minus.log_likelihood(&ys)) / (2.0 * h));
    }
    let n = n_records as f64;
    let sq: Vec<f64> = scores.iter().map(|s| s * s).collect();
    let mean_sq = sq.iter().sum::<f64>() / n;
    let var_sq = sq.iter().map(|v| (v - mean_sq).powi(2)).sum::<f64>() / (n - 1.0);
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    OracleEstimate {
        fisher: mean_sq,
        stderr: (var_sq / n).sqrt(),
        mean_score: mean,
        mean_score_stderr: (var / n).sqrt(),
    }
}

/// Expected Fisher information from second moments, for a parameter in
/// the drift (zero-mean start, no drive).
///
/// `z = (R, dR)` obeys `dz = M z dt + G dw` with
/// `M = [[A, 0], [dA, A - K B^T]]`, `G = c [K; dsigma B]`, so
/// `P = E[z z^T]` satisfies `P' = M P + P M^T + G G^T` and
/// `dF/dt = w tr(B B^T P_22)`. The covariance and its derivative are
/// integrated alongside, all with an explicit midpoint rule on a fine grid.
pub fn moment_fisher(
    model: &LinearModel,
    d_drift: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    t_max: f64,
    steps: usize,
) -> f64 {
    let m = &model.matrices;
    let n = m.drift.nrows();
    let c = model.regime.innovation_scale();
    let w = model.regime.fisher_weight();
    let bbt = &m.readout * m.readout.transpose();
    // state: (sigma, dsigma, P)
    let rhs = |s: &DMatrix<f64>, ds: &DMatrix<f64>, p: &DMatrix<f64>| {
        let a = &m.drift;
        let k = s * &m.readout + &m.correlation;
        let dk = ds * &m.readout;
        let s_dot = a * s + s * a.transpose() + &m.diffusion - &k * k.transpose();
        let ds_dot = d_drift * s + s * d_drift.transpose() + a * ds + ds * a.transpose()
            - &dk * k.transpose()
            - &k * dk.transpose();
        let mut mm = DMatrix::zeros(2 * n, 2 * n);
        mm.view_mut((0, 0), (n, n)).copy_from(a);
        mm.view_mut((n, 0), (n, n)).copy_from(d_drift);
        mm.view_mut((n, n), (n, n)).copy_from(&(a - &k * m.readout.transpose()));
        let mut g = DMatrix::zeros(2 * n, m.readout.ncols());
        let cols = g.ncols();
        g.view_mut((0, 0), (n, cols)).copy_from(&(&k * c));
        g.view_mut((n, 0), (n, cols)).copy_from(&(&dk * c));
        let p_dot = &mm * p + p * mm.transpose() + &g * g.transpose();
        (s_dot, ds_dot, p_dot)
    };
    let rate = |p: &DMatrix<f64>| w * (&bbt * p.view((n, n), (n, n))).trace();
    let h = t_max / steps as f64;
    let mut s = sigma0.clone();
    let mut ds = DMatrix::zeros(n, n);
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    let mut f = 0.0;
    for _ in 0..steps {
        let (a1, b1, c1) = rhs(&s, &ds, &p);
        let (sm, dsm, pm) = (&s + &a1 * (0.5 * h), &ds + &b1 * (0.5 * h), &p + &c1 * (0.5 * h));
        let (a2, b2, c2) = rhs(&sm, &dsm, &pm);
        let p_next = &p + &c2 * h;
        f += h * (rate(&p) + 4.0 * rate(&pm) + rate(&p_next)) / 6.0;
        s += a2 * h;
        ds += b2 * h;
        p = p_next;
    }
    f
}

/// Least-squares line through `(x, y)`; returns the relative L2 residual
/// `|y - fit| / |y|`.
pub fn linear_fit_residual(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let res: f64 = x.iter().zip(y).map(|(a, b)| (b - (icpt + slope * a)).powi(2)).sum();
    let norm: f64 = y.iter().map(|b| b * b).sum();
    (res / norm).sqrt()
}
