//! Executes a [`RunConfig`] and produces a [`ResultTable`].

use nalgebra::DMatrix;

use crate::config::{Mode, ResolvedScenario, RunConfig};
use crate::dynamics::{emit_record, evolve_conditional_covariance, evolve_unconditional, sample_trajectory, TimeGrid};
use crate::ensemble::{output_indices, EnsembleConfig, Simulator};
use crate::error::{Error, Result};
use crate::noise::{CoarsenedNoise, NoiseStream};
use crate::table::ResultTable;

/// Sign and quadrature conventions, echoed into every output file.
pub const CONVENTION: &str = "vacuum covariance = identity; record dy = +B^T R dt + dw/sqrt(2); \
gain K = sigma B + N; filter drift A - K B^T; B = C Omega^T W, N = Omega C sigma_b W, W = (sigma_b + sigma_m)^(-1/2); \
homodyne(phi) measures cos(phi) x - sin(phi) p; dF = 2 |B^T dR|^2 dt (classical: |B^T dR|^2 dt)";

pub fn run(config: &RunConfig, workers: Option<usize>) -> Result<ResultTable> {
    let resolved = config.resolve()?;
    let every = config.grid.output_every.unwrap_or(1);
    let grid = resolved.grid;
    run_resolved(config, &resolved, &grid, workers, 1, every)
}

fn upper_triangle_names(prefix: &str, dim: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            out.push(format!("{prefix}_{i}_{j}"));
        }
    }
    out
}

fn push_upper_triangle(row: &mut Vec<f64>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            row.push(m[(i, j)]);
        }
    }
}

fn base_table(
    config: &RunConfig,
    resolved: &ResolvedScenario,
    grid: &TimeGrid,
    every: usize,
    columns: Vec<String>,
) -> Result<ResultTable> {
    let mut echo = config.clone();
    echo.output = None;
    let echo =
        serde_json::to_string(&echo).map_err(|e| Error::Config(format!("cannot serialise configuration: {e}")))?;
    let pm = &resolved.pm;
    let mut t = ResultTable { columns, ..Default::default() };
    t.push_meta("program", concat!("gaussian-fisher ", env!("CARGO_PKG_VERSION")));
    t.push_meta("scenario", &config.scenario);
    t.push_meta("parameter", &pm.name);
    t.push_meta("mode", config.mode.as_str());
    t.push_meta("regime", format!("{:?}", pm.model.regime).to_lowercase());
    t.push_meta("convention", CONVENTION);
    t.push_meta("dt", grid.dt());
    t.push_meta("t_max", grid.t_max());
    t.push_meta("n_steps", grid.n_steps());
    t.push_meta("output_every", every);
    t.push_meta("config", echo);
    for (k, v) in &resolved.notes {
        t.push_meta(k.clone(), v);
    }
    Ok(t)
}

fn run_resolved(
    config: &RunConfig,
    resolved: &ResolvedScenario,
    grid: &TimeGrid,
    workers: Option<usize>,
    substeps: usize,
    every: usize,
) -> Result<ResultTable> {
    let pm = &resolved.pm;
    let model = &pm.model;
    let dim = model.dim();
    let outputs = output_indices(grid.n_steps(), every);
    match config.mode {
        Mode::Fisher => {
            let sim = Simulator::new(pm, grid)?;
            let cfg = EnsembleConfig {
                n_traj: config.ensemble.n_traj,
                seed: config.ensemble.seed,
                workers,
                output_every: every,
                score: config.ensemble.score_oracle,
                noise_substeps: substeps,
            };
            let res = sim.run(&cfg)?;
            let mut columns: Vec<String> = ["t", "F", "F_stderr", "n_traj"].iter().map(|s| s.to_string()).collect();
            if res.score.is_some() {
                columns.extend(["F_score".to_string(), "F_score_stderr".to_string()]);
            }
            if resolved.closed_forms.is_some() {
                columns.push("F_closed_form".to_string());
            }
            let mut table = base_table(config, resolved, grid, every, columns)?;
            table.push_meta("n_traj", config.ensemble.n_traj);
            table.push_meta("seed", config.ensemble.seed);
            table.push_meta("deterministic", res.deterministic);
            table.push_meta("min_eig", res.min_eig);
            let f = &res.fisher;
            for i in 0..f.times.len() {
                let mut row = vec![f.times[i], f.mean[i], f.stderr[i], f.n_traj as f64];
                if let Some(s) = &res.score {
                    row.extend([s.fisher[i], s.fisher_stderr[i]]);
                }
                if let Some(cf) = &resolved.closed_forms {
                    row.push(cf.fisher(f.times[i]));
                }
                table.push_row(row)?;
            }
            Ok(table)
        }
        Mode::Unconditional => {
            let states = evolve_unconditional(model, &pm.initial, grid)?;
            let mut columns = vec!["t".to_string()];
            columns.extend((0..dim).map(|i| format!("r_{i}")));
            columns.extend(upper_triangle_names("sigma", dim));
            let mut table = base_table(config, resolved, grid, every, columns)?;
            for &k in &outputs {
                let mut row = vec![grid.time(k)];
                row.extend(states[k].mean.iter());
                push_upper_triangle(&mut row, &states[k].cov);
                table.push_row(row)?;
            }
            Ok(table)
        }
        Mode::ConditionalCovariance => {
            let path = evolve_conditional_covariance(model, &pm.initial.cov, grid)?;
            let mut columns = vec!["t".to_string()];
            columns.extend(upper_triangle_names("sigma", dim));
            columns.push("min_eig".to_string());
            let mut table = base_table(config, resolved, grid, every, columns)?;
            table.push_meta("min_eig", path.min_eig());
            for &k in &outputs {
                let sigma = path.sigma(k).into_owned();
                let mut row = vec![grid.time(k)];
                push_upper_triangle(&mut row, &sigma);
                row.push(model.regime.validity_eig(&sigma)?);
                table.push_row(row)?;
            }
            Ok(table)
        }
        Mode::Record => {
            let path = evolve_conditional_covariance(model, &pm.initial.cov, grid)?;
            let stream = NoiseStream::new(config.ensemble.seed, 0);
            let traj = if substeps > 1 {
                sample_trajectory(model, &path, &pm.initial.mean, &mut CoarsenedNoise::new(stream, substeps))?
            } else {
                sample_trajectory(model, &path, &pm.initial.mean, &mut { stream })?
            };
            let record = emit_record(model, &traj);
            let k_dim = model.noise_dim();
            let mut columns = vec!["t".to_string()];
            columns.extend((0..dim).map(|i| format!("r_{i}")));
            columns.extend((0..k_dim).map(|j| format!("dy_{j}")));
            let mut table = base_table(config, resolved, grid, every, columns)?;
            table.push_meta("seed", config.ensemble.seed);
            table.push_meta("record_note", "dy_j is the record increment accumulated until the next row");
            for w in outputs.windows(2) {
                let (k, next) = (w[0], w[1]);
                let mut row = vec![grid.time(k)];
                row.extend(traj.means[k].iter());
                let mut dy = vec![0.0; k_dim];
                for inc in &record[k..next] {
                    for (acc, v) in dy.iter_mut().zip(inc.iter()) {
                        *acc += v;
                    }
                }
                row.extend(dy);
                table.push_row(row)?;
            }
            Ok(table)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub coarse: ResultTable,
    pub fine: ResultTable,
    pub max_rel_dev: f64,
    pub worst_column: String,
    pub worst_t: f64,
    /// Side-by-side comparison of the two runs.
    pub table: ResultTable,
}

fn compared_columns(t: &ResultTable) -> Vec<usize> {
    t.columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !matches!(c.as_str(), "t" | "n_traj" | "F_closed_form" | "min_eig") && !c.ends_with("_stderr"))
        .map(|(i, _)| i)
        .collect()
}

/// Runs the configuration at `dt` and `dt / 2` on shared Brownian paths
/// and reports the largest relative deviation between the two.
pub fn convergence(config: &RunConfig, workers: Option<usize>) -> Result<ConvergenceReport> {
    let resolved = config.resolve()?;
    let every = config.grid.output_every.unwrap_or(1);
    let coarse_grid = resolved.grid;
    let fine_grid = coarse_grid.refined(2);
    let coarse = run_resolved(config, &resolved, &coarse_grid, workers, 2, every)?;
    let fine = run_resolved(config, &resolved, &fine_grid, workers, 1, 2 * every)?;
    if coarse.rows.len() != fine.rows.len() {
        return Err(Error::Dimension("coarse and fine runs report different numbers of rows".into()));
    }
    let cols = compared_columns(&coarse);
    let primary = cols.first().copied();
    let mut columns = vec!["t".to_string()];
    if let Some(p) = primary {
        columns.push(format!("{}_dt", coarse.columns[p]));
        columns.push(format!("{}_dt_half", coarse.columns[p]));
    }
    columns.push("max_rel_dev".to_string());
    let mut table = ResultTable { columns, ..Default::default() };
    let (mut max_rel_dev, mut worst_column, mut worst_t) = (0.0f64, String::new(), 0.0);
    for (a, b) in coarse.rows.iter().zip(&fine.rows) {
        let t = a[0];
        let mut row_max = 0.0f64;
        for &c in &cols {
            let scale = a[c].abs().max(b[c].abs());
            let dev = if scale > 0.0 { (a[c] - b[c]).abs() / scale } else { 0.0 };
            if dev > row_max {
                row_max = dev;
            }
            if dev > max_rel_dev {
                max_rel_dev = dev;
                worst_column = coarse.columns[c].clone();
                worst_t = t;
            }
        }
        let mut row = vec![t];
        if let Some(p) = primary {
            row.extend([a[p], b[p]]);
        }
        row.push(row_max);
        table.push_row(row)?;
    }
    table.metadata = coarse.metadata.clone();
    table.push_meta("fine_dt", fine_grid.dt());
    table.push_meta("max_rel_dev", max_rel_dev);
    table.push_meta("worst_column", &worst_column);
    table.push_meta("worst_t", worst_t);
    Ok(ConvergenceReport { dt: coarse_grid.dt(), coarse, fine, max_rel_dev, worst_column, worst_t, table })
}
