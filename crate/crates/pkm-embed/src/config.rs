//! Run configuration: a JSON document, optionally overridden by CLI flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use pkm_core::irsbot2::{build_model, ExperimentKind, IrsbotParams, ProximalMode, TrajectorySpec};
use pkm_core::solver::{IkSettings, SolverKind, WarmStart};
use pkm_core::{MetricWeights, PkmModel};
use serde::{Deserialize, Serialize};

use crate::model_file::ModelFile;
use crate::CliError;

pub const BUILTIN_MODEL: &str = "irsbot2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    IkNested,
    IkCompound,
    Invdyn,
    Singularity,
}

impl Experiment {
    pub const NAMES: [&'static str; 4] = ["ik_nested", "ik_compound", "invdyn", "singularity"];

    pub fn kind(self) -> ExperimentKind {
        match self {
            Experiment::IkNested => ExperimentKind::IkNested,
            Experiment::IkCompound => ExperimentKind::IkCompound,
            Experiment::Invdyn => ExperimentKind::InvDyn,
            Experiment::Singularity => ExperimentKind::Singularity,
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            CliError::Config(format!("unknown experiment '{s}' (expected one of {})", Experiment::NAMES.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Analytic,
    CutJoint,
}

impl FromStr for Mode {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "cut_joint" => Ok(Mode::CutJoint),
            _ => Err(CliError::Config(format!("unknown proximal mode '{s}' (expected analytic or cut_joint)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Nested,
    Compound,
}

impl FromStr for Scheme {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "nested" => Ok(Scheme::Nested),
            "compound" => Ok(Scheme::Compound),
            _ => Err(CliError::Config(format!("unknown solver '{s}' (expected nested or compound)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartConfig {
    Previous,
    #[default]
    Extrapolate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub duration: f64,
    /// Horizontal and vertical travel; the experiment's default path when absent.
    pub dx: Option<f64>,
    pub dz: Option<f64>,
    pub nu: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { dt: 1e-3, duration: 1.0, dx: None, dz: None, nu: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Weights of the rotational and translational parts of the twist norm.
    pub alpha: f64,
    pub beta: f64,
    pub warm_start: WarmStartConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = IkSettings::default();
        Self {
            epsilon: s.epsilon,
            epsilon1: s.epsilon1,
            epsilon2: s.epsilon2,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            alpha: s.metric.alpha,
            beta: s.metric.beta,
            warm_start: WarmStartConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Number of random states per finite-difference suite.
    pub states: usize,
    pub seed: u64,
    /// Suites to run; all when empty.
    pub suites: Vec<String>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { states: 100, seed: 7, suites: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `irsbot2` or the path of a JSON model file.
    pub model: String,
    /// Proximal loop closure of the built-in model.
    pub mode: Mode,
    pub experiment: Experiment,
    /// IK scheme; implied by the `ik_*` experiments.
    pub solver: Option<Scheme>,
    pub trajectory: TrajectoryConfig,
    pub settings: SolverConfig,
    pub out: PathBuf,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: BUILTIN_MODEL.into(),
            mode: Mode::default(),
            experiment: Experiment::IkNested,
            solver: None,
            trajectory: TrajectoryConfig::default(),
            settings: SolverConfig::default(),
            out: PathBuf::from("."),
            validate: ValidateConfig::default(),
        }
    }
}

/// Everything a run needs, checked and built.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub model: PkmModel,
    pub kind: ExperimentKind,
    pub solver: SolverKind,
    pub spec: TrajectorySpec,
    pub settings: IkSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ik_settings(&self) -> Result<IkSettings, CliError> {
        let s = &self.settings;
        let metric = MetricWeights::new(s.alpha, s.beta).map_err(|e| CliError::Config(e.to_string()))?;
        let warm_start = match s.warm_start {
            WarmStartConfig::Previous => WarmStart::Previous,
            WarmStartConfig::Extrapolate => WarmStart::Extrapolate,
        };
        let out = IkSettings {
            epsilon: s.epsilon,
            epsilon1: s.epsilon1,
            epsilon2: s.epsilon2,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            metric,
            warm_start,
        };
        out.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(out)
    }

    pub fn solver_kind(&self) -> Result<SolverKind, CliError> {
        let implied = match self.experiment {
            Experiment::IkNested => Some(Scheme::Nested),
            Experiment::IkCompound => Some(Scheme::Compound),
            _ => None,
        };
        let scheme = match (implied, self.solver) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(format!("solver {b:?} contradicts experiment {:?}", self.experiment)));
            }
            (Some(a), _) => a,
            (None, s) => s.unwrap_or(Scheme::Nested),
        };
        Ok(match scheme {
            Scheme::Nested => SolverKind::Nested,
            Scheme::Compound => SolverKind::Compound,
        })
    }

    pub fn build_model(&self) -> Result<PkmModel, CliError> {
        if self.model == BUILTIN_MODEL {
            let mode = match self.mode {
                Mode::Analytic => ProximalMode::Analytic,
                Mode::CutJoint => ProximalMode::CutJoint,
            };
            build_model(&IrsbotParams::default(), mode).map_err(|e| CliError::Model(e.to_string()))
        } else {
            ModelFile::load(Path::new(&self.model))?.to_model()
        }
    }

    /// Platform path starting at the model's reference position.
    pub fn trajectory(&self, model: &PkmModel) -> Result<TrajectorySpec, CliError> {
        self.trajectory_from(model.platform_ref.translation)
    }

    fn trajectory_from(&self, r0: Vector3<f64>) -> Result<TrajectorySpec, CliError> {
        let t = &self.trajectory;
        let base = if self.experiment == Experiment::Singularity {
            TrajectorySpec { r0, ..TrajectorySpec::singular(&IrsbotParams::default()) }
        } else {
            TrajectorySpec { r0, ..TrajectorySpec::nominal(&IrsbotParams::default()) }
        };
        let spec = TrajectorySpec {
            dx: t.dx.unwrap_or(base.dx),
            dz: t.dz.unwrap_or(base.dz),
            nu: t.nu,
            duration: t.duration,
            dt: t.dt,
            ..base
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Checks the settings before building the model, so that configuration
    /// errors take precedence over model errors.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let settings = self.ik_settings()?;
        let solver = self.solver_kind()?;
        self.trajectory_from(Vector3::zeros())?;
        let model = self.build_model()?;
        if model.task_dof() != 2 {
            return Err(CliError::Model(format!("the platform path needs 2 task coordinates, the model has {}", model.task_dof())));
        }
        let spec = self.trajectory(&model)?;
        Ok(Resolved { model, kind: self.experiment.kind(), solver, spec, settings })
    }
}
