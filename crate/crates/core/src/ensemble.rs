//! Monte Carlo driver: simulates conditional trajectories in parallel and
//! reduces their Fisher information (and optionally score) curves.
//!
//! Trajectory `i` always uses noise stream `(seed, i)` and always lands in
//! reduction chunk `i / CHUNK`, so results do not depend on the number of
//! worker threads.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dynamics::{advance_mean, evolve_conditional_covariance, CovariancePath, TimeGrid};
use crate::error::{Error, Result};
use crate::fisher::{pairwise_merge, FisherAccumulator, PowerSums, ScoreEstimate, CHUNK};
use crate::noise::{CoarsenedNoise, NoiseSource, NoiseStream};
use crate::sensitivity::{deterministic_from_plan, ParamModel, SensitivityPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Report every `output_every`-th grid point (the final point is always reported).
    pub output_every: usize,
    /// Also accumulate the score-variance estimate.
    pub score: bool,
    /// Build each increment from this many finer draws of the same stream,
    /// so a run at `dt` shares its Brownian paths with a run at `dt / noise_substeps`.
    pub noise_substeps: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_traj: 1000, seed: 0, workers: None, output_every: 1, score: false, noise_substeps: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub fisher: FisherAccumulator,
    pub score: Option<ScoreEstimate>,
    /// Smallest validity eigenvalue met by the conditional covariance.
    pub min_eig: f64,
    /// True when the sensitivity was record independent and no sampling was needed for `fisher`.
    pub deterministic: bool,
}

/// Indices of the grid points that are reported.
pub fn output_indices(n_steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut idx: Vec<usize> = (0..=n_steps).step_by(every).collect();
    if idx.last() != Some(&n_steps) {
        idx.push(n_steps);
    }
    idx
}

/// Everything needed to simulate trajectories of one parameter model.
pub struct Simulator<'a> {
    pm: &'a ParamModel,
    path: CovariancePath,
    plan: SensitivityPlan,
}

/// Cumulative Fisher information and score of one trajectory at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFisher {
    pub fisher: Vec<f64>,
    pub score: Vec<f64>,
    pub d_means: Vec<DVector<f64>>,
}

impl<'a> Simulator<'a> {
    pub fn new(pm: &'a ParamModel, grid: &TimeGrid) -> Result<Self> {
        let path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, grid)?;
        let plan = SensitivityPlan::new(pm, &path)?;
        Ok(Self { pm, path, plan })
    }

    pub fn path(&self) -> &CovariancePath {
        &self.path
    }

    pub fn plan(&self) -> &SensitivityPlan {
        &self.plan
    }

    /// Record-independent cumulative Fisher curve; only valid for drive-only parameters.
    pub fn deterministic_fisher(&self) -> Result<Vec<f64>> {
        if !self.plan.is_deterministic() {
            return Err(Error::InvalidParameter(
                "parameter enters the drift; Fisher information must be sampled".into(),
            ));
        }
        let model = &self.pm.model;
        let d = deterministic_from_plan(&self.plan, DVector::zeros(model.dim()), model.noise_dim())?;
        let dt = self.path.grid().dt();
        let w = model.regime.fisher_weight();
        let bt = model.matrices.readout.transpose();
        let mut out = Vec::with_capacity(d.len());
        let mut acc = 0.0;
        out.push(acc);
        for dr in &d[..d.len() - 1] {
            acc += w * (&bt * dr).norm_squared() * dt;
            out.push(acc);
        }
        Ok(out)
    }

    /// Runs one trajectory, calling `visit(k, F_k, S_k)` at every grid point.
    fn simulate(
        &self,
        noise: &mut impl NoiseSource,
        mut visit: impl FnMut(usize, f64, f64, &DVector<f64>),
    ) -> Result<()> {
        let model = &self.pm.model;
        let grid = self.path.grid();
        let dt = grid.dt();
        let w = model.regime.fisher_weight();
        let inv_c = 1.0 / model.regime.innovation_scale();
        let b = &model.matrices.readout;

        let mut r = self.pm.initial.mean.clone();
        let mut dr = DVector::zeros(model.dim());
        let mut tmp = DVector::zeros(model.dim());
        let mut bt_dr = DVector::zeros(model.noise_dim());
        let mut dw = DVector::zeros(model.noise_dim());
        let (mut f, mut s) = (0.0, 0.0);
        for k in 0..grid.n_steps() {
            visit(k, f, s, &dr);
            bt_dr.gemv_tr(1.0, b, &dr, 0.0);
            noise.fill(&mut dw, dt);
            f += w * bt_dr.norm_squared() * dt;
            s += inv_c * bt_dr.dot(&dw);
            self.plan.step(k, &r, &mut dr, &dw, &mut tmp);
            advance_mean(model, &self.path.gain(k), &mut r, &dw, dt, &mut tmp);
            if !f.is_finite() || r.iter().chain(dr.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "trajectory", t: grid.time(k + 1) });
            }
        }
        visit(grid.n_steps(), f, s, &dr);
        Ok(())
    }

    /// Full per-step curves of one trajectory.
    pub fn trajectory(&self, noise: &mut impl NoiseSource) -> Result<TrajectoryFisher> {
        let n = self.path.grid().n_steps() + 1;
        let mut out = TrajectoryFisher {
            fisher: Vec::with_capacity(n),
            score: Vec::with_capacity(n),
            d_means: Vec::with_capacity(n),
        };
        self.simulate(noise, |_, f, s, dr| {
            out.fisher.push(f);
            out.score.push(s);
            out.d_means.push(dr.clone());
        })?;
        Ok(out)
    }

    fn run_chunk(
        &self,
        range: std::ops::Range<usize>,
        cfg: &EnsembleConfig,
        outputs: &[usize],
    ) -> Result<(PowerSums, PowerSums)> {
        let mut fs = PowerSums::new(outputs.len());
        let mut ss = PowerSums::new(if cfg.score { outputs.len() } else { 0 });
        for i in range {
            let stream = NoiseStream::new(cfg.seed, i as u64);
            let mut slot = 0;
            let visit = |k: usize, f: f64, s: f64, _: &DVector<f64>| {
                if slot < outputs.len() && outputs[slot] == k {
                    fs.add(slot, f);
                    if cfg.score {
                        ss.add(slot, s);
                    }
                    slot += 1;
                }
            };
            if cfg.noise_substeps > 1 {
                self.simulate(&mut CoarsenedNoise::new(stream, cfg.noise_substeps), visit)?;
            } else {
                self.simulate(&mut { stream }, visit)?;
            }
            fs.finish_sample();
            ss.finish_sample();
        }
        Ok((fs, ss))
    }

    pub fn run(&self, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
        let grid = self.path.grid();
        let outputs = output_indices(grid.n_steps(), cfg.output_every);
        let times: Vec<f64> = outputs.iter().map(|&k| grid.time(k)).collect();
        let deterministic = self.plan.is_deterministic();
        if cfg.n_traj < 1 || (!deterministic && cfg.n_traj < 2) || (cfg.score && cfg.n_traj < 2) {
            return Err(Error::InvalidParameter(format!(
                "{} trajectories requested; sampled estimates need at least 2",
                cfg.n_traj
            )));
        }

        let det_fisher = if deterministic {
            let full = self.deterministic_fisher()?;
            Some(FisherAccumulator::deterministic(
                times.clone(),
                outputs.iter().map(|&k| full[k]).collect(),
                cfg.n_traj,
            ))
        } else {
            None
        };

        let mut score = None;
        let mut sampled = None;
        if !deterministic || cfg.score {
            let chunks: Vec<_> =
                (0..cfg.n_traj).step_by(CHUNK).map(|start| start..(start + CHUNK).min(cfg.n_traj)).collect();
            let work = || -> Result<Vec<(PowerSums, PowerSums)>> {
                chunks.par_iter().map(|r| self.run_chunk(r.clone(), cfg, &outputs)).collect()
            };
            let parts = match cfg.workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
                    .install(work)?,
                None => work()?,
            };
            let (fparts, sparts): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
            let fsum = pairwise_merge(fparts).expect("at least one chunk");
            sampled = Some(FisherAccumulator::from_sums(times.clone(), &fsum));
            if cfg.score {
                let ssum = pairwise_merge(sparts).expect("at least one chunk");
                score = Some(ScoreEstimate::from_sums(times.clone(), &ssum));
            }
        }

        Ok(EnsembleResult {
            fisher: det_fisher.or(sampled).expect("one of the two estimates is computed"),
            score,
            min_eig: self.path.min_eig(),
            deterministic,
        })
    }
}

/// Convenience wrapper: build a [`Simulator`] and run the ensemble.
pub fn run_ensemble(pm: &ParamModel, grid: &TimeGrid, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    Simulator::new(pm, grid)?.run(cfg)
}
