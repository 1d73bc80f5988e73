mod common;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use gaussian_fisher::dynamics::{
    emit_record, evolve_conditional_covariance, evolve_unconditional, filter_record, sample_trajectory, TimeGrid,
};
use gaussian_fisher::ensemble::{EnsembleConfig, Simulator};
use gaussian_fisher::measurement::{heterodyne, homodyne};
use gaussian_fisher::noise::NoiseStream;
use gaussian_fisher::scenarios::{make_amplifier, make_classical_demo, make_nanosphere, make_optomech, OptomechParams};
use gaussian_fisher::sensitivity::{deterministic_sensitivity, deterministic_sensitivity_from, ParamModel};
use gaussian_fisher::symplectic::GaussianState;

fn final_sigma(pm: &ParamModel, dt: f64, t: f64) -> DMatrix<f64> {
    let grid = TimeGrid::new(dt, t).unwrap();
    evolve_conditional_covariance(&pm.model, &pm.initial.cov, &grid).unwrap().final_sigma()
}

#[test]
fn riccati_solver_is_fourth_order() {
    let pm = make_optomech(&OptomechParams::default()).unwrap();
    let (a, b, c) = (final_sigma(&pm, 0.04, 4.0), final_sigma(&pm, 0.02, 4.0), final_sigma(&pm, 0.01, 4.0));
    let ratio = (&a - &b).amax() / (&b - &c).amax();
    let order = ratio.log2();
    assert!((order - 4.0).abs() < 0.3, "observed order {order}");
}

#[test]
fn vanishing_efficiency_recovers_unconditional_covariance() {
    let pm = make_optomech(&OptomechParams::default()).unwrap();
    let grid = TimeGrid::new(1e-3, 5.0).unwrap();
    let uncond = evolve_unconditional(&pm.model, &pm.initial, &grid).unwrap();
    let silent = evolve_conditional_covariance(&pm.model.unmonitored(), &pm.initial.cov, &grid).unwrap();
    for k in (0..=grid.n_steps()).step_by(250) {
        assert!((silent.sigma(k) - &uncond[k].cov).amax() < 1e-12);
    }
    let faint = make_optomech(&OptomechParams { eta: 1e-9, ..Default::default() }).unwrap();
    let cond = evolve_conditional_covariance(&faint.model, &faint.initial.cov, &grid).unwrap();
    assert!((cond.final_sigma() - &uncond.last().unwrap().cov).amax() < 1e-6);
}

#[test]
fn conditional_means_average_to_unconditional_mean() {
    let pm = make_optomech(&OptomechParams { lambda: 0.3, ..Default::default() }).unwrap();
    let grid = TimeGrid::new(1e-2, 5.0).unwrap();
    let path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &grid).unwrap();
    let uncond = evolve_unconditional(&pm.model, &pm.initial, &grid).unwrap();
    let n = 2000;
    let dim = pm.model.dim();
    let mut sum = DVector::zeros(dim);
    let mut sq = DVector::zeros(dim);
    let mut record_sum = DVector::zeros(pm.model.noise_dim());
    for i in 0..n {
        let traj = sample_trajectory(&pm.model, &path, &pm.initial.mean, &mut NoiseStream::new(3, i)).unwrap();
        let r = traj.means.last().unwrap();
        sum += r;
        sq += r.component_mul(r);
        for dy in emit_record(&pm.model, &traj) {
            record_sum += dy;
        }
    }
    let nf = n as f64;
    let mean = &sum / nf;
    let target = &uncond.last().unwrap().mean;
    for j in 0..dim {
        let se = ((sq[j] / nf - mean[j] * mean[j]) / nf).sqrt();
        assert!((mean[j] - target[j]).abs() < 4.0 * se + 1e-3, "component {j}: {} vs {}", mean[j], target[j]);
    }
    // E[y(T)] = B^T integral of E[R]
    let bt = pm.model.matrices.readout.transpose();
    let mut expected = DVector::zeros(pm.model.noise_dim());
    for s in &uncond[..grid.n_steps()] {
        expected += &bt * &s.mean * grid.dt();
    }
    let got = record_sum / nf;
    assert!((got - expected).amax() < 0.1);
}

#[test]
fn positive_innovation_raises_position_estimate() {
    let (pm, _) = make_nanosphere(0.0, 1.0, 1.0).unwrap();
    let grid = TimeGrid::new(1e-3, 0.01).unwrap();
    let path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &grid).unwrap();
    let mut record = vec![DVector::zeros(pm.model.noise_dim()); grid.n_steps()];
    record[0][0] = 0.05;
    let means = filter_record(&pm.model, &path, &pm.initial.mean, &record).unwrap();
    assert!(means[1][0] > 0.0);
    assert_eq!(means[1][1], 0.0);
}

#[test]
fn monitored_position_variance_decreases() {
    let (pm, _) = make_nanosphere(0.0, 1.0, 0.5).unwrap();
    let grid = TimeGrid::new(1e-3, 10.0).unwrap();
    let path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &grid).unwrap();
    for k in 0..grid.n_steps() {
        assert!(path.sigma(k + 1)[(0, 0)] < path.sigma(k)[(0, 0)]);
    }
}

#[test]
fn sensitivity_restarts_continue_the_full_run() {
    let (pm, _) = make_nanosphere(0.0, 1.0, 0.7).unwrap();
    let dt = 1e-3;
    let full_grid = TimeGrid::new(dt, 4.0).unwrap();
    let full_path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &full_grid).unwrap();
    let full = deterministic_sensitivity(&pm, &full_path).unwrap();

    let half = TimeGrid::new(dt, 2.0).unwrap();
    let first_path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &half).unwrap();
    let first = deterministic_sensitivity(&pm, &first_path).unwrap();
    let second_path = evolve_conditional_covariance(&pm.model, &first_path.final_sigma(), &half).unwrap();
    let second = deterministic_sensitivity_from(&pm, &second_path, first.last().unwrap()).unwrap();
    let joined = second.last().unwrap();
    assert!((joined - full.last().unwrap()).amax() < 1e-12 * full.last().unwrap().amax());
}

#[test]
fn standard_error_shrinks_with_sample_size() {
    let pm = make_amplifier(-0.2, 1.0, homodyne(0.0)).unwrap();
    let grid = TimeGrid::new(1e-2, 2.0).unwrap();
    let sim = Simulator::new(&pm, &grid).unwrap();
    let se = |n| {
        sim.run(&EnsembleConfig { n_traj: n, seed: 5, output_every: 200, ..Default::default() })
            .unwrap()
            .fisher
            .final_value()
            .1
    };
    let ratio = se(1000) / se(2000);
    assert!((ratio - 2f64.sqrt()).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn stepped_sensitivity_matches_deterministic_one_for_drive_parameters() {
    let pm = make_optomech(&OptomechParams::default()).unwrap();
    let grid = TimeGrid::new(1e-2, 5.0).unwrap();
    let sim = Simulator::new(&pm, &grid).unwrap();
    let det = deterministic_sensitivity(&pm, sim.path()).unwrap();
    for i in 0..100 {
        let t = sim.trajectory(&mut NoiseStream::new(17, i)).unwrap();
        assert_eq!(t.d_means, det);
    }
}

#[test]
fn ensemble_agrees_with_second_moment_integration() {
    for (label, meas) in [("homodyne", homodyne(0.0)), ("heterodyne", heterodyne())] {
        let pm = make_amplifier(-0.2, 1.0, meas).unwrap();
        let grid = TimeGrid::new(1e-3, 2.0).unwrap();
        let res = Simulator::new(&pm, &grid)
            .unwrap()
            .run(&EnsembleConfig { n_traj: 4000, seed: 21, output_every: 2000, ..Default::default() })
            .unwrap();
        let (f, se) = res.fisher.final_value();
        let exact = moment_fisher(&pm.model, &pm.d_drift, &pm.initial.cov, 2.0, 20_000);
        assert!((f - exact).abs() < 4.0 * se + 2e-3 * exact, "{label}: {f} +/- {se} vs {exact}");
    }
}

#[test]
fn deterministic_fisher_matches_closed_form_at_moderate_step() {
    let (pm, _) = make_nanosphere(0.0, 1.0, 1.0).unwrap();
    let grid = TimeGrid::new(1e-4, 2.0).unwrap();
    let f = Simulator::new(&pm, &grid).unwrap().deterministic_fisher().unwrap();
    assert!(rel_err(*f.last().unwrap(), nano_fisher(1.0, 2.0)) < 1e-3);
}

#[test]
fn score_variance_matches_fisher_on_every_scenario() {
    let models: Vec<(&str, ParamModel, f64)> = vec![
        ("amplifier", make_amplifier(-0.2, 1.0, heterodyne()).unwrap(), 1.0),
        ("optomech", make_optomech(&OptomechParams { phi: FRAC_PI_2, ..Default::default() }).unwrap(), 5.0),
        ("nanosphere", make_nanosphere(0.0, 1.0, 1.0).unwrap().0, 1.0),
        ("classical-nanosphere", make_classical_demo(0.0, 1.0, 1.0).unwrap(), 1.0),
    ];
    for (label, pm, t_max) in models {
        let grid = TimeGrid::new(1e-2, t_max).unwrap();
        let res = Simulator::new(&pm, &grid)
            .unwrap()
            .run(&EnsembleConfig { n_traj: 4000, seed: 8, output_every: 1_000_000, score: true, ..Default::default() })
            .unwrap();
        let (f, fse) = res.fisher.final_value();
        let s = res.score.unwrap();
        let (sf, sse) = (*s.fisher.last().unwrap(), *s.fisher_stderr.last().unwrap());
        let tol = 4.0 * (fse * fse + sse * sse).sqrt();
        assert!((f - sf).abs() < tol, "{label}: ensemble {f} +/- {fse}, score {sf} +/- {sse}");
        let (m, mse) = (*s.mean_score.last().unwrap(), *s.mean_score_stderr.last().unwrap());
        assert!(m.abs() < 4.0 * mse, "{label}: mean score {m} +/- {mse}");
    }
}

#[test]
fn vacuum_start_is_the_default_initial_state() {
    let pm = make_amplifier(0.1, 1.0, heterodyne()).unwrap();
    assert_eq!(pm.initial, GaussianState::vacuum(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monitored_amplifier_stays_physical(chi in -0.45f64..0.45, kappa in 0.2f64..3.0, phi in 0.0f64..3.2, eta in 0.05f64..1.0) {
        let meas = gaussian_fisher::measurement::apply_inefficiency(&homodyne(phi), eta).unwrap();
        let pm = make_amplifier(chi, kappa, meas).unwrap();
        let grid = TimeGrid::new(1e-3 / kappa, 3.0 / kappa).unwrap();
        let path = evolve_conditional_covariance(&pm.model, &pm.initial.cov, &grid).unwrap();
        prop_assert!(path.min_eig() >= -1e-9);
        let ds = gaussian_fisher::sensitivity::evolve_dsigma(&pm, &path).unwrap();
        for d in &ds {
            prop_assert!((d - d.transpose()).amax() <= 1e-12 * (1.0 + d.amax()));
        }
    }

    #[test]
    fn fisher_information_never_decreases(chi in -0.4f64..0.4, seed in 0u64..1000) {
        let pm = make_amplifier(chi, 1.0, heterodyne()).unwrap();
        let grid = TimeGrid::new(1e-2, 2.0).unwrap();
        let t = Simulator::new(&pm, &grid).unwrap().trajectory(&mut NoiseStream::new(seed, 0)).unwrap();
        prop_assert!(t.fisher.windows(2).all(|w| w[1] >= w[0]));
    }
}
