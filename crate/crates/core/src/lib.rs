//! Fisher information and Cramér-Rao bounds for parameters of linear
//! Gaussian quantum systems under continuous general-dyne monitoring.
//!
//! The pipeline is: describe a [`dynamics::SystemModel`] (Hamiltonian,
//! bath coupling, measurement), reduce it to drift/diffusion/readout
//! matrices, integrate the conditional covariance once, then sample
//! conditional trajectories together with the parameter sensitivity of the
//! filtered mean and accumulate the information they carry.
//!
//! ```
//! use gaussian_fisher::scenarios::make_nanosphere;
//! use gaussian_fisher::dynamics::TimeGrid;
//! use gaussian_fisher::ensemble::{run_ensemble, EnsembleConfig};
//!
//! let (pm, exact) = make_nanosphere(0.0, 1.0, 1.0).unwrap();
//! let grid = TimeGrid::new(1e-4, 1.0).unwrap();
//! let res = run_ensemble(&pm, &grid, &EnsembleConfig { n_traj: 1, ..Default::default() }).unwrap();
//! let (f, _) = res.fisher.final_value();
//! assert!((f / exact.fisher(1.0) - 1.0).abs() < 1e-3);
//! ```
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fisher;
pub mod measurement;
pub mod noise;
pub mod runner;
pub mod scenarios;
pub mod sensitivity;
pub mod symplectic;
pub mod table;

pub use error::{Error, Result};
