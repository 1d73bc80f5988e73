//! Wiener-increment sources.
//!
//! Every trajectory owns an independent ChaCha stream selected by
//! `(seed, trajectory_index)`. ChaCha is counter based, so a stream's output
//! does not depend on which worker thread draws it or in which order the
//! trajectories are scheduled.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait NoiseSource {
    /// Overwrite `dw` with independent `N(0, dt)` increments.
    fn fill(&mut self, dw: &mut DVector<f64>, dt: f64);
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Self { rng }
    }
}

impl NoiseSource for NoiseStream {
    fn fill(&mut self, dw: &mut DVector<f64>, dt: f64) {
        let scale = dt.sqrt();
        for v in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = scale * z;
        }
    }
}

/// Deterministic zero increments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, dw: &mut DVector<f64>, _dt: f64) {
        dw.fill(0.0);
    }
}

/// Builds each increment as the sum of `factor` finer increments drawn from
/// `inner`, so a run at step `dt` sees the same Brownian path as a run at
/// `dt / factor` fed directly from `inner`.
#[derive(Debug, Clone)]
pub struct CoarsenedNoise<S> {
    inner: S,
    factor: usize,
    buf: DVector<f64>,
}

impl<S: NoiseSource> CoarsenedNoise<S> {
    pub fn new(inner: S, factor: usize) -> Self {
        Self { inner, factor: factor.max(1), buf: DVector::zeros(0) }
    }
}

impl<S: NoiseSource> NoiseSource for CoarsenedNoise<S> {
    fn fill(&mut self, dw: &mut DVector<f64>, dt: f64) {
        if self.buf.len() != dw.len() {
            self.buf = DVector::zeros(dw.len());
        }
        dw.fill(0.0);
        let fine = dt / self.factor as f64;
        for _ in 0..self.factor {
            self.inner.fill(&mut self.buf, fine);
            *dw += &self.buf;
        }
    }
}

/// Replays a fixed list of increments, then zeros.
#[derive(Debug, Clone)]
pub struct Replay {
    increments: Vec<DVector<f64>>,
    next: usize,
}

impl Replay {
    pub fn new(increments: Vec<DVector<f64>>) -> Self {
        Self { increments, next: 0 }
    }
}

impl NoiseSource for Replay {
    fn fill(&mut self, dw: &mut DVector<f64>, _dt: f64) {
        match self.increments.get(self.next) {
            Some(v) => dw.copy_from(v),
            None => dw.fill(0.0),
        }
        self.next += 1;
    }
}
