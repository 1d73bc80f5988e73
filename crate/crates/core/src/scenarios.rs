//! Built-in systems: a degenerate parametric amplifier, a driven cavity
//! optomechanical system, a monitored levitated nanosphere (with closed-form
//! solutions) and its classical Kalman-filter twin.
//!
//! Rates are expressed in units of a reference rate (`kappa` for the
//! amplifier and nanosphere, `omega_m` for the optomechanical system).

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynMatrices, LinearModel, Regime, SystemModel};
use crate::error::{Error, Result};
use crate::measurement::{apply_inefficiency, compose, homodyne, unmonitored, GeneralDyne};
use crate::sensitivity::{DerivativeSource, ParamModel};
use crate::symplectic::{direct_sum, omega, thermal_covariance, GaussianState, ModeLayout};

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

/// Degenerate parametric amplifier `H_s = [[0, -chi], [-chi, 0]]`, `C = sqrt(kappa) Omega`, vacuum bath.
pub fn amplifier_system(chi: f64, kappa: f64, measurement: GeneralDyne) -> Result<SystemModel> {
    require_finite("chi", chi)?;
    require_positive("kappa", kappa)?;
    let h = DMatrix::from_row_slice(2, 2, &[0.0, -chi, -chi, 0.0]);
    let c = omega(ModeLayout::new(1)?) * kappa.sqrt();
    SystemModel::new(h, DVector::zeros(2), c, DMatrix::identity(2, 2), measurement)
}

/// Amplifier with the squeezing strength `chi` as the estimated parameter.
pub fn make_amplifier(chi: f64, kappa: f64, measurement: GeneralDyne) -> Result<ParamModel> {
    let model = amplifier_system(chi, kappa, measurement)?.linear_model()?;
    let d_drift = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
    ParamModel::new("chi", model, d_drift, DVector::zeros(2), DerivativeSource::Analytic, GaussianState::vacuum(2))
}

/// Cavity optomechanics in the linearised regime with a force `lambda` on
/// the mirror. Quadratures are ordered `(x_c, p_c, x_m, p_m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptomechParams {
    pub omega_m: f64,
    /// Cavity detuning.
    pub delta: f64,
    /// Linearised optomechanical coupling.
    pub g: f64,
    /// Mechanical damping.
    pub gamma: f64,
    /// Mean thermal occupation of the mechanical bath.
    pub n_th: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Detection efficiency of the cavity output.
    pub eta: f64,
    /// Homodyne angle of the cavity output.
    pub phi: f64,
    pub lambda: f64,
}

impl Default for OptomechParams {
    /// `g = omega_m / 2`, `gamma = omega_m / 3`, perfect detection at
    /// `phi = pi/2`; resonant driving and a zero-temperature bath are assumptions.
    fn default() -> Self {
        Self {
            omega_m: 1.0,
            delta: 0.0,
            g: 0.5,
            gamma: 1.0 / 3.0,
            n_th: 0.0,
            kappa: 0.1,
            eta: 1.0,
            phi: std::f64::consts::FRAC_PI_2,
            lambda: 0.0,
        }
    }
}

impl OptomechParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("omega_m", self.omega_m)?;
        require_positive("kappa", self.kappa)?;
        require_positive("gamma", self.gamma)?;
        for (name, v) in [("delta", self.delta), ("g", self.g), ("phi", self.phi), ("lambda", self.lambda)] {
            require_finite(name, v)?;
        }
        if !(self.n_th >= 0.0) || !self.n_th.is_finite() {
            return Err(Error::InvalidParameter(format!("n_th must be non-negative, got {}", self.n_th)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

pub fn optomech_system(p: &OptomechParams) -> Result<SystemModel> {
    p.validate()?;
    let mut h = DMatrix::from_diagonal(&DVector::from_vec(vec![-p.delta, -p.delta, p.omega_m, p.omega_m]));
    h[(0, 2)] = p.g;
    h[(2, 0)] = p.g;
    let om = omega(ModeLayout::new(1)?);
    let coupling = direct_sum(&[&om * -p.kappa.sqrt(), &om * p.gamma.sqrt()]);
    let bath = direct_sum(&[DMatrix::identity(2, 2), thermal_covariance(ModeLayout::new(1)?, p.n_th)?]);
    let meas = compose(&[apply_inefficiency(&homodyne(p.phi), p.eta)?, unmonitored()])?;
    let drive = DVector::from_vec(vec![0.0, 0.0, 0.0, -p.lambda]);
    SystemModel::new(h, drive, coupling, bath, meas)
}

/// Optomechanical system with the force `lambda` as the estimated parameter.
pub fn make_optomech(p: &OptomechParams) -> Result<ParamModel> {
    let model = optomech_system(p)?.linear_model()?;
    let d_drive = DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0]);
    ParamModel::new(
        "lambda",
        model,
        DMatrix::zeros(4, 4),
        d_drive,
        DerivativeSource::Analytic,
        GaussianState::vacuum(4),
    )
}

/// Exact solutions of the monitored free-particle model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NanosphereClosedForms {
    pub kappa: f64,
    pub eta: f64,
}

impl NanosphereClosedForms {
    /// Diagonal of the conditional covariance, `(1/(1 + 2 eta kappa t), 1 + 2 kappa t)`.
    pub fn sigma(&self, t: f64) -> (f64, f64) {
        (1.0 / (1.0 + 2.0 * self.eta * self.kappa * t), 1.0 + 2.0 * self.kappa * t)
    }

    /// Position sensitivity `-(1 + eta kappa t) t / (1 + 2 eta kappa t)`.
    pub fn d_position(&self, t: f64) -> f64 {
        let a = self.eta * self.kappa * t;
        -(1.0 + a) * t / (1.0 + 2.0 * a)
    }

    /// Information rate `dF/dt`.
    pub fn fisher_rate(&self, t: f64) -> f64 {
        let a = self.eta * self.kappa * t;
        4.0 * t * t * self.eta * self.kappa * (1.0 + a).powi(2) / (1.0 + 2.0 * a).powi(2)
    }

    /// Accumulated information, growing as `t^3` at long times.
    pub fn fisher(&self, t: f64) -> f64 {
        let a = self.eta * self.kappa * t;
        2.0 * t.powi(3) * self.eta * self.kappa * (2.0 + a) / (3.0 * (1.0 + 2.0 * a))
    }
}

/// Monitored free particle: `C = [[0, sqrt(2 kappa)], [0, 0]]`, vacuum bath,
/// homodyne of the position with efficiency `eta`, force `lambda`.
pub fn nanosphere_system(lambda: f64, kappa: f64, eta: f64) -> Result<SystemModel> {
    require_finite("lambda", lambda)?;
    require_positive("kappa", kappa)?;
    let meas = apply_inefficiency(&homodyne(0.0), eta)?;
    let c = DMatrix::from_row_slice(2, 2, &[0.0, (2.0 * kappa).sqrt(), 0.0, 0.0]);
    SystemModel::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![-lambda, 0.0]), c, DMatrix::identity(2, 2), meas)
}

pub fn make_nanosphere(lambda: f64, kappa: f64, eta: f64) -> Result<(ParamModel, NanosphereClosedForms)> {
    let model = nanosphere_system(lambda, kappa, eta)?.linear_model()?;
    let pm = ParamModel::new(
        "lambda",
        model,
        DMatrix::zeros(2, 2),
        DVector::from_vec(vec![-1.0, 0.0]),
        DerivativeSource::Analytic,
        GaussianState::vacuum(2),
    )?;
    Ok((pm, NanosphereClosedForms { kappa, eta }))
}

/// One-dimensional Kalman-Bucy tracking of a constant force: the position
/// block of the nanosphere seen as a classical filter
/// (`A = 0`, `D = 0`, `B = sqrt(2 eta kappa)`, `u = -lambda`, unit prior variance).
pub fn make_classical_demo(lambda: f64, kappa: f64, eta: f64) -> Result<ParamModel> {
    require_finite("lambda", lambda)?;
    require_positive("kappa", kappa)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    let m = DynMatrices {
        drift: DMatrix::zeros(1, 1),
        diffusion: DMatrix::zeros(1, 1),
        readout: DMatrix::from_element(1, 1, (2.0 * eta * kappa).sqrt()),
        correlation: DMatrix::zeros(1, 1),
    };
    let model = LinearModel::new(Regime::Classical, m, DVector::from_element(1, -lambda))?;
    ParamModel::new(
        "lambda",
        model,
        DMatrix::zeros(1, 1),
        DVector::from_element(1, -1.0),
        DerivativeSource::Analytic,
        GaussianState::vacuum(1),
    )
}

/// Registry entry used by the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub parameter: &'static str,
    pub reference_rate: &'static str,
    /// Accepted parameter keys with their defaults.
    pub params: &'static [(&'static str, f64)],
    pub measurements: &'static str,
    pub description: &'static str,
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "amplifier",
        parameter: "chi",
        reference_rate: "kappa",
        params: &[("chi", -0.2), ("kappa", 1.0)],
        measurements: "homodyne, heterodyne, general_dyne",
        description: "degenerate parametric amplifier, squeezing strength estimated",
    },
    ScenarioInfo {
        name: "optomech",
        parameter: "lambda",
        reference_rate: "omega_m",
        params: &[
            ("omega_m", 1.0),
            ("delta", 0.0),
            ("g", 0.5),
            ("gamma", 1.0 / 3.0),
            ("n_th", 0.0),
            ("kappa", 0.1),
            ("lambda", 0.0),
        ],
        measurements: "homodyne (cavity output; mechanical bath unmonitored)",
        description: "linearised cavity optomechanics, force on the mirror estimated",
    },
    ScenarioInfo {
        name: "nanosphere",
        parameter: "lambda",
        reference_rate: "kappa",
        params: &[("kappa", 1.0), ("lambda", 0.0)],
        measurements: "homodyne (position, phi = 0)",
        description: "monitored levitated nanosphere, constant force estimated; closed forms available",
    },
    ScenarioInfo {
        name: "classical-nanosphere",
        parameter: "lambda",
        reference_rate: "kappa",
        params: &[("kappa", 1.0), ("lambda", 0.0)],
        measurements: "homodyne (position, phi = 0)",
        description: "classical Kalman-Bucy counterpart of the nanosphere position readout",
    },
];

pub fn scenario_info(name: &str) -> Option<&'static ScenarioInfo> {
    SCENARIOS.iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_matrices;
    use crate::measurement::heterodyne;
    use crate::symplectic::check_physical;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn amplifier_matrices() {
        let (chi, kappa) = (0.3, 2.0);
        let pm = make_amplifier(chi, kappa, heterodyne()).unwrap();
        assert!((&pm.model.matrices.drift - diag(&[-chi - kappa / 2.0, chi - kappa / 2.0])).amax() < 1e-15);
        assert!((&pm.model.matrices.diffusion - diag(&[kappa, kappa])).amax() < 1e-15);
        let damped = make_amplifier(0.0, kappa, heterodyne()).unwrap();
        assert!((&damped.model.matrices.drift + DMatrix::identity(2, 2) * (kappa / 2.0)).amax() < 1e-15);
        assert!(make_amplifier(0.1, 0.0, heterodyne()).is_err());
    }

    #[test]
    fn optomech_matrices() {
        let p = OptomechParams { delta: 0.3, n_th: 0.0, ..Default::default() };
        let pm = make_optomech(&p).unwrap();
        let a = &pm.model.matrices.drift;
        assert_eq!(a[(1, 2)], -p.g);
        assert_eq!(a[(3, 0)], -p.g);
        // cavity block: rotation at delta damped at kappa/2
        assert!((a[(0, 0)] + p.kappa / 2.0).abs() < 1e-15);
        assert!((a[(0, 1)] + p.delta).abs() < 1e-15);
        assert!((a[(2, 3)] - p.omega_m).abs() < 1e-15);
        assert!((a[(3, 3)] + p.gamma / 2.0).abs() < 1e-15);
        let d = &pm.model.matrices.diffusion;
        let mech = d.view((2, 2), (2, 2));
        assert!((mech - DMatrix::identity(2, 2) * p.gamma).amax() < 1e-15);
        assert!((d.view((0, 0), (2, 2)) - DMatrix::identity(2, 2) * p.kappa).amax() < 1e-15);
        assert_eq!(pm.d_drive, DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0]));
        assert!(pm.is_drive_only());
    }

    #[test]
    fn optomech_readout_only_sees_the_cavity() {
        for phi in [0.0, std::f64::consts::FRAC_PI_2] {
            let p = OptomechParams { phi, eta: 0.6, ..Default::default() };
            let sys = optomech_system(&p).unwrap();
            let m = build_matrices(&sys).unwrap();
            assert_eq!(m.readout.view((2, 0), (2, 4)).amax(), 0.0);
            assert!(m.readout.columns(2, 2).amax() == 0.0);
            // rank one with B = -N on the cavity block for a pure-bath homodyne
            let b = m.readout.view((0, 0), (2, 2)).into_owned();
            let n = m.correlation.view((0, 0), (2, 2)).into_owned();
            assert!(b.determinant().abs() < 1e-14);
            assert!((b + n).amax() < 1e-14);
            let bb = &m.readout * m.readout.transpose();
            let expected = p.kappa * p.eta;
            assert!((bb.trace() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn optomech_thermal_bath() {
        let p = OptomechParams { n_th: 2.0, ..Default::default() };
        let sys = optomech_system(&p).unwrap();
        assert_eq!(sys.bath_cov[(2, 2)], 5.0);
        assert!(check_physical(&sys.bath_cov, 1e-12).unwrap().is_physical);
        assert!(optomech_system(&OptomechParams { n_th: -1.0, ..Default::default() }).is_err());
        assert!(optomech_system(&OptomechParams { eta: 1.5, ..Default::default() }).is_err());
    }

    #[test]
    fn nanosphere_matrices() {
        let (kappa, eta) = (0.8, 0.4);
        let (pm, _) = make_nanosphere(0.0, kappa, eta).unwrap();
        let m = &pm.model.matrices;
        assert!(m.drift.amax() < 1e-15);
        assert!((&m.diffusion - diag(&[0.0, 2.0 * kappa])).amax() < 1e-15);
        assert!(m.correlation.amax() < 1e-15);
        let bb = &m.readout * m.readout.transpose();
        assert!((bb - diag(&[2.0 * eta * kappa, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn closed_forms_are_self_consistent() {
        let cf = NanosphereClosedForms { kappa: 1.3, eta: 0.6 };
        let h = 1e-5;
        for t in [0.1, 1.0, 7.0] {
            let numeric = (cf.fisher(t + h) - cf.fisher(t - h)) / (2.0 * h);
            assert!((numeric / cf.fisher_rate(t) - 1.0).abs() < 1e-8);
            let d = cf.d_position(t);
            assert!((cf.fisher_rate(t) - 2.0 * 2.0 * cf.eta * cf.kappa * d * d).abs() < 1e-10 * cf.fisher_rate(t));
        }
        assert_eq!(cf.fisher(0.0), 0.0);
        assert_eq!(cf.sigma(0.0), (1.0, 1.0));
    }

    #[test]
    fn registry_lists_every_scenario() {
        let names: Vec<_> = SCENARIOS.iter().map(|s| s.name).collect();
        assert_eq!(names, ["amplifier", "optomech", "nanosphere", "classical-nanosphere"]);
        assert!(scenario_info("optomech").is_some());
        assert!(scenario_info("nope").is_none());
    }

    #[test]
    fn classical_demo_shape() {
        let pm = make_classical_demo(0.0, 1.0, 1.0).unwrap();
        assert_eq!(pm.model.regime, Regime::Classical);
        assert_eq!(pm.model.dim(), 1);
        assert!((pm.model.matrices.readout[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert!(make_classical_demo(0.0, 1.0, 0.0).is_err());
    }
}
