//! Fisher information of continuously monitored records.
//!
//! Along one trajectory the information gained in `[t, t + dt]` is
//! `dF = w |B^T dR|^2 dt` with `w = 2` for quantum covariances and `w = 1`
//! for the classical filter; the total information is the ensemble mean of
//! the left-endpoint integral of `dF`. The score of the record,
//! `dS = dw^T B^T dR / c`, gives an independent estimate `F = E[S^2]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{LinearModel, SystemModel};
use crate::error::{Error, Result};
use crate::measurement::whiten;
use crate::symplectic::{omega, ModeLayout};

/// Trajectories per reduction chunk. Chunk boundaries depend only on the
/// trajectory index, which keeps ensemble sums independent of scheduling.
pub const CHUNK: usize = 32;

/// Fisher information `dmu^T Sigma^+ dmu` of a Gaussian location family.
/// Errors when `dmu` has weight on the kernel of `Sigma`.
pub fn gaussian_fi(d_mean: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = d_mean.len();
    if sigma.shape() != (n, n) {
        return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
    }
    let scale = sigma.amax();
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidParameter("covariance must be symmetric".into()));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let cutoff = 1e-12 * scale;
    let norm = d_mean.norm();
    let mut f = 0.0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let c = eig.eigenvectors.column(i).dot(d_mean);
        if lambda > cutoff {
            f += c * c / lambda;
        } else if lambda < -cutoff {
            return Err(Error::InvalidParameter("covariance is not positive semidefinite".into()));
        } else if c.abs() > 1e-12 * norm.max(1.0) {
            return Err(Error::Singular("mean derivative lies outside the range of the covariance".into()));
        }
    }
    Ok(f)
}

/// `w |B^T dR|^2 dt`.
pub fn fi_increment(d_mean: &DVector<f64>, model: &LinearModel, dt: f64) -> f64 {
    let v = model.matrices.readout.tr_mul(d_mean);
    model.regime.fisher_weight() * v.norm_squared() * dt
}

/// Same quantity written through the coupling, `2 dR^T C Omega^T (sigma_b + sigma_m)^{-1} Omega C^T dR dt`.
pub fn fi_increment_from_coupling(d_mean: &DVector<f64>, system: &SystemModel, dt: f64) -> Result<f64> {
    let inv = whiten(&system.bath_cov, &system.measurement)?.inv;
    let om_b = omega(ModeLayout::new(system.measurement.n_bath_modes())?);
    let v = om_b * system.coupling.tr_mul(d_mean);
    Ok(2.0 * v.dot(&(&inv * &v)) * dt)
}

/// Classical filter increment `|B^T dx|^2 dt`.
pub fn classical_fi_increment(d_estimate: &DVector<f64>, readout: &DMatrix<f64>, dt: f64) -> f64 {
    readout.tr_mul(d_estimate).norm_squared() * dt
}

/// Score increment `dw^T B^T dR / c`.
pub fn score_increment(d_mean: &DVector<f64>, model: &LinearModel, dw: &DVector<f64>) -> f64 {
    model.matrices.readout.tr_mul(d_mean).dot(dw) / model.regime.innovation_scale()
}

/// Variance bound `1 / (M F)`; infinite when `F = 0`.
pub fn crb_bound(fisher: f64, repetitions: u64) -> Result<f64> {
    if !(fisher >= 0.0) || !fisher.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Fisher information must be finite and non-negative, got {fisher}"
        )));
    }
    if repetitions == 0 {
        return Err(Error::InvalidParameter("at least one repetition is required".into()));
    }
    if fisher == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (repetitions as f64 * fisher))
}

/// Left-endpoint running sum: `F_0 = 0`, `F_{k+1} = F_k + dF_k`.
pub fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Neumaier) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-time-point power sums of a scalar across trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    pub count: usize,
    sums: Vec<[Neumaier; 4]>,
}

impl PowerSums {
    pub fn new(n_points: usize) -> Self {
        Self { count: 0, sums: vec![[Neumaier::default(); 4]; n_points] }
    }

    pub fn n_points(&self) -> usize {
        self.sums.len()
    }

    /// Adds `x`, `x^2`, `x^4` at point `i`; call [`PowerSums::finish_sample`] after each trajectory.
    pub fn add(&mut self, i: usize, x: f64) {
        let x2 = x * x;
        let s = &mut self.sums[i];
        s[0].add(x);
        s[1].add(x2);
        s[2].add(x2 * x);
        s[3].add(x2 * x2);
    }

    pub fn finish_sample(&mut self) {
        self.count += 1;
    }

    pub fn merge(&mut self, other: &PowerSums) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }

    /// Mean and standard error of the mean of `x` at point `i`.
    pub fn mean_stderr(&self, i: usize) -> (f64, f64) {
        let n = self.count as f64;
        let s = &self.sums[i];
        mean_and_stderr(n, s[0].value(), s[1].value())
    }

    /// Mean and standard error of the mean of `x^2` at point `i`.
    pub fn square_mean_stderr(&self, i: usize) -> (f64, f64) {
        let n = self.count as f64;
        let s = &self.sums[i];
        mean_and_stderr(n, s[1].value(), s[3].value())
    }
}

fn mean_and_stderr(n: f64, sum: f64, sum_sq: f64) -> (f64, f64) {
    let mean = sum / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Reduces per-chunk partial sums pairwise in index order.
pub fn pairwise_merge(mut parts: Vec<PowerSums>) -> Option<PowerSums> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.merge(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Ensemble-averaged Fisher information on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherAccumulator {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
}

impl FisherAccumulator {
    pub fn from_sums(times: Vec<f64>, sums: &PowerSums) -> Self {
        let (mean, stderr) = (0..sums.n_points()).map(|i| sums.mean_stderr(i)).unzip();
        Self { times, mean, stderr, n_traj: sums.count }
    }

    /// A single record-independent curve (zero standard error).
    pub fn deterministic(times: Vec<f64>, fisher: Vec<f64>, n_traj: usize) -> Self {
        let stderr = vec![0.0; fisher.len()];
        Self { times, mean: fisher, stderr, n_traj }
    }

    pub fn final_value(&self) -> (f64, f64) {
        (*self.mean.last().unwrap_or(&0.0), *self.stderr.last().unwrap_or(&0.0))
    }

    /// Index of the output time closest to `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        self.times.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map(|(i, _)| i)
    }
}

/// Mean and standard error of per-trajectory cumulative Fisher curves.
pub fn ensemble_fi(times: &[f64], paths: &[Vec<f64>]) -> Result<FisherAccumulator> {
    if paths.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "at least 2 trajectories are needed for a standard error, got {}",
            paths.len()
        )));
    }
    if paths.iter().any(|p| p.len() != times.len()) {
        return Err(Error::Dimension("every trajectory must be sampled on the same grid".into()));
    }
    let parts = paths
        .chunks(CHUNK)
        .map(|chunk| {
            let mut s = PowerSums::new(times.len());
            for p in chunk {
                for (i, &f) in p.iter().enumerate() {
                    s.add(i, f);
                }
                s.finish_sample();
            }
            s
        })
        .collect();
    let sums = pairwise_merge(parts).expect("non-empty ensemble");
    Ok(FisherAccumulator::from_sums(times.to_vec(), &sums))
}

/// Score-variance estimate of the Fisher information.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEstimate {
    pub times: Vec<f64>,
    /// Ensemble mean of the score (zero in expectation).
    pub mean_score: Vec<f64>,
    pub mean_score_stderr: Vec<f64>,
    /// Ensemble mean of the squared score.
    pub fisher: Vec<f64>,
    pub fisher_stderr: Vec<f64>,
    pub n_traj: usize,
}

impl ScoreEstimate {
    pub fn from_sums(times: Vec<f64>, sums: &PowerSums) -> Self {
        let (mean_score, mean_score_stderr) = (0..sums.n_points()).map(|i| sums.mean_stderr(i)).unzip();
        let (fisher, fisher_stderr) = (0..sums.n_points()).map(|i| sums.square_mean_stderr(i)).unzip();
        Self { times, mean_score, mean_score_stderr, fisher, fisher_stderr, n_traj: sums.count }
    }
}

/// Fisher information as the variance of per-trajectory score paths.
pub fn score_oracle(times: &[f64], scores: &[Vec<f64>]) -> Result<ScoreEstimate> {
    if scores.len() < 2 {
        return Err(Error::InvalidParameter("at least 2 trajectories are needed".into()));
    }
    if scores.iter().any(|p| p.len() != times.len()) {
        return Err(Error::Dimension("every score path must be sampled on the same grid".into()));
    }
    let parts = scores
        .chunks(CHUNK)
        .map(|chunk| {
            let mut s = PowerSums::new(times.len());
            for p in chunk {
                for (i, &x) in p.iter().enumerate() {
                    s.add(i, x);
                }
                s.finish_sample();
            }
            s
        })
        .collect();
    let sums = pairwise_merge(parts).expect("non-empty ensemble");
    Ok(ScoreEstimate::from_sums(times.to_vec(), &sums))
}
