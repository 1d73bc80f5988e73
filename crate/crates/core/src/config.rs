//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_step, TimeGrid};
use crate::error::{Error, Result};
use crate::measurement::{apply_inefficiency, general_dyne, heterodyne, homodyne, GeneralDyne};
use crate::scenarios::{
    make_amplifier, make_classical_demo, make_nanosphere, make_optomech, scenario_info, NanosphereClosedForms,
    OptomechParams, ScenarioInfo,
};
use crate::sensitivity::ParamModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementConfig>,
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Homodyne,
    Heterodyne,
    GeneralDyne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub kind: MeasurementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Squeezing of the general-dyne measurement state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default = "one")]
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Defaults to `1e-3` over the fastest rate of the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also report the score-variance estimate of the Fisher information.
    #[serde(default)]
    pub score_oracle: bool,
}

fn default_n_traj() -> usize {
    1000
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self { n_traj: default_n_traj(), seed: 0, score_oracle: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Fisher,
    Unconditional,
    ConditionalCovariance,
    Record,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fisher => "fisher",
            Mode::Unconditional => "unconditional",
            Mode::ConditionalCovariance => "conditional-covariance",
            Mode::Record => "record",
        }
    }
}

/// Parses and validates a configuration; schema errors name the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn info(&self) -> Result<&'static ScenarioInfo> {
        scenario_info(&self.scenario)
            .ok_or_else(|| config_err(format!("scenario: unknown scenario '{}'", self.scenario)))
    }

    /// Checks everything that can be checked without building the model.
    pub fn validate(&self) -> Result<()> {
        let info = self.info()?;
        for (k, v) in &self.params {
            if !info.params.iter().any(|(name, _)| name == k) {
                let known: Vec<_> = info.params.iter().map(|(n, _)| *n).collect();
                return Err(config_err(format!(
                    "params.{k}: unknown parameter for scenario '{}' (expected one of {})",
                    self.scenario,
                    known.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(config_err(format!("params.{k}: must be finite")));
            }
        }
        if let Some(dt) = self.grid.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(config_err(format!("grid.dt: must be positive, got {dt}")));
            }
            if !(self.grid.t_max >= dt) {
                return Err(config_err(format!("grid.t_max: must be at least dt = {dt}, got {}", self.grid.t_max)));
            }
        }
        if !(self.grid.t_max > 0.0) || !self.grid.t_max.is_finite() {
            return Err(config_err(format!("grid.t_max: must be positive, got {}", self.grid.t_max)));
        }
        if self.grid.output_every == Some(0) {
            return Err(config_err("grid.output_every: must be at least 1"));
        }
        if self.ensemble.n_traj < 1 {
            return Err(config_err("ensemble.n_traj: must be at least 1"));
        }
        if let Some(m) = &self.measurement {
            if !(m.eta > 0.0 && m.eta <= 1.0) {
                return Err(config_err(format!("measurement.eta: must lie in (0, 1], got {}", m.eta)));
            }
            if let Some(phi) = m.phi {
                if !phi.is_finite() {
                    return Err(config_err("measurement.phi: must be finite"));
                }
            }
            match m.kind {
                MeasurementKind::GeneralDyne => match m.s {
                    Some(s) if s > 0.0 && s.is_finite() => {}
                    Some(s) => return Err(config_err(format!("measurement.s: must be positive, got {s}"))),
                    None => return Err(config_err("measurement.s: required for general_dyne")),
                },
                _ if m.s.is_some() => return Err(config_err("measurement.s: only valid for general_dyne")),
                _ => {}
            }
            if self.scenario != "amplifier" && m.kind != MeasurementKind::Homodyne {
                return Err(config_err(format!(
                    "measurement.kind: scenario '{}' supports {}",
                    self.scenario, info.measurements
                )));
            }
            if matches!(self.scenario.as_str(), "nanosphere" | "classical-nanosphere") && m.phi.unwrap_or(0.0) != 0.0 {
                return Err(config_err("measurement.phi: the nanosphere model reads out position (phi = 0)"));
            }
        }
        Ok(())
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or_else(|| {
            self.info().ok().and_then(|i| i.params.iter().find(|(k, _)| *k == key)).map(|(_, v)| *v).unwrap_or(0.0)
        })
    }

    pub fn eta(&self) -> f64 {
        self.measurement.as_ref().map_or(1.0, |m| m.eta)
    }

    fn phi_or(&self, default: f64) -> f64 {
        self.measurement.as_ref().and_then(|m| m.phi).unwrap_or(default)
    }

    /// Measurement of the amplifier output; heterodyne when unspecified.
    fn amplifier_measurement(&self) -> Result<GeneralDyne> {
        let Some(m) = &self.measurement else {
            return Ok(heterodyne());
        };
        let base = match m.kind {
            MeasurementKind::Homodyne => homodyne(m.phi.unwrap_or(0.0)),
            MeasurementKind::Heterodyne => heterodyne(),
            MeasurementKind::GeneralDyne => general_dyne(m.s.unwrap_or(1.0), m.phi.unwrap_or(0.0))?,
        };
        if m.eta < 1.0 {
            apply_inefficiency(&base, m.eta)
        } else {
            Ok(base)
        }
    }

    /// Builds the model named by the configuration.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.validate()?;
        let mut notes = Vec::new();
        let (pm, rates, closed_forms) = match self.scenario.as_str() {
            "amplifier" => {
                let kappa = self.param("kappa");
                (make_amplifier(self.param("chi"), kappa, self.amplifier_measurement()?)?, vec![kappa], None)
            }
            "optomech" => {
                let p = OptomechParams {
                    omega_m: self.param("omega_m"),
                    delta: self.param("delta"),
                    g: self.param("g"),
                    gamma: self.param("gamma"),
                    n_th: self.param("n_th"),
                    kappa: self.param("kappa"),
                    eta: self.eta(),
                    phi: self.phi_or(std::f64::consts::FRAC_PI_2),
                    lambda: self.param("lambda"),
                };
                for key in ["delta", "n_th"] {
                    if !self.params.contains_key(key) {
                        notes.push((
                            format!("assumed_{key}"),
                            "0 (not stated for the reference setup; override in params)".to_string(),
                        ));
                    }
                }
                (make_optomech(&p)?, vec![p.kappa, p.gamma, p.omega_m], None)
            }
            "nanosphere" => {
                let kappa = self.param("kappa");
                let (pm, cf) = make_nanosphere(self.param("lambda"), kappa, self.eta())?;
                (pm, vec![kappa], Some(cf))
            }
            "classical-nanosphere" => {
                let kappa = self.param("kappa");
                (make_classical_demo(self.param("lambda"), kappa, self.eta())?, vec![kappa], None)
            }
            other => return Err(config_err(format!("scenario: unknown scenario '{other}'"))),
        };
        let dt = match self.grid.dt {
            Some(dt) => dt,
            None => default_step(&pm.model.matrices.drift, &rates),
        };
        let grid = TimeGrid::new(dt, self.grid.t_max).map_err(|e| config_err(format!("grid: {e}")))?;
        Ok(ResolvedScenario { pm, grid, closed_forms, notes })
    }
}

pub struct ResolvedScenario {
    pub pm: ParamModel,
    pub grid: TimeGrid,
    pub closed_forms: Option<NanosphereClosedForms>,
    /// Extra metadata about assumed defaults.
    pub notes: Vec<(String, String)>,
}
