//! Experiment spec files: one JSON object whose `kind` selects the command.

use std::path::{Path, PathBuf};

use advlq::experiments::{linspace, CartpoleSimSpec};
use advlq::hard_synthesis::SynthMode;
use advlq::plant::{mat_rows, rows_mat, Controller, PlantSpec};
use advlq::sim::CartpoleChannels;
use advlq::systems::{Builtin, Problem, Setting};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Command kinds, in the spelling used by `kind` and by the subcommands.
pub const KINDS: [&str; 7] = [
    "synth",
    "evaluate",
    "tradeoff",
    "envelope",
    "bounds_scalar_filter",
    "cartpole_tradeoff",
    "cartpole_sim",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub experiment: Experiment,
    /// Relative bisection tolerance of the hard synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Synth(SynthParams),
    Evaluate(EvaluateParams),
    Tradeoff(TradeoffParams),
    Envelope(EnvelopeParams),
    BoundsScalarFilter(ScalarBoundsParams),
    CartpoleTradeoff(CartpoleTradeoffParams),
    CartpoleSim(CartpoleSimParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Synth(_) => "synth",
            Experiment::Evaluate(_) => "evaluate",
            Experiment::Tradeoff(_) => "tradeoff",
            Experiment::Envelope(_) => "envelope",
            Experiment::BoundsScalarFilter(_) => "bounds_scalar_filter",
            Experiment::CartpoleTradeoff(_) => "cartpole_tradeoff",
            Experiment::CartpoleSim(_) => "cartpole_sim",
        }
    }
}

/// Where a plant comes from: a builtin descriptor, a plant JSON file, or
/// the plant JSON inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantRef {
    Builtin { builtin: Builtin },
    File { file: PathBuf },
    Inline(PlantSpec),
}

impl PlantRef {
    /// Files are inlined so the resolved spec no longer depends on paths.
    pub fn resolve(self, base: &Path) -> Result<PlantRef, CliError> {
        match self {
            PlantRef::File { file } => {
                let path = base.join(file);
                let text = read(&path)?;
                let spec: PlantSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
                Ok(PlantRef::Inline(spec))
            }
            other => Ok(other),
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        match self {
            PlantRef::Builtin { builtin } => Ok(builtin.build()?),
            PlantRef::Inline(spec) => {
                let (plant, weights) = spec.build()?;
                let mode = SynthMode::detect(&plant);
                Ok(Problem {
                    plant,
                    weights,
                    mode,
                })
            }
            PlantRef::File { file } => Err(CliError::Parse(format!(
                "unresolved plant file {}",
                file.display()
            ))),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.1;

fn default_plant() -> PlantRef {
    PlantRef::Builtin {
        builtin: Builtin::Integrator {
            rho: 0.5,
            setting: Setting::OutputFeedback,
        },
    }
}

/// Explicit values or `{"linspace": [lo, hi, n]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace { linspace: (f64, f64, usize) },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linspace {
                linspace: (lo, hi, n),
            } => {
                if *n == 0 {
                    vec![]
                } else {
                    linspace(*lo, *hi, *n)
                }
            }
        }
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        let v = self.values();
        if v.is_empty() {
            return Err(CliError::Parse(format!("grid {name} is empty")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Parse(format!(
                "grid {name} has a non-finite entry"
            )));
        }
        Ok(())
    }
}

/// Controller file: row-major matrices like the plant schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ControllerSpec {
    pub A_K: Vec<Vec<f64>>,
    pub B_K: Vec<Vec<f64>>,
    pub C_K: Vec<Vec<f64>>,
    pub D_K: Vec<Vec<f64>>,
}

impl ControllerSpec {
    pub fn from_controller(k: &Controller) -> Self {
        ControllerSpec {
            A_K: mat_rows(&k.a_k),
            B_K: mat_rows(&k.b_k),
            C_K: mat_rows(&k.c_k),
            D_K: mat_rows(&k.d_k),
        }
    }

    pub fn build(&self) -> Result<Controller, CliError> {
        let d_k = rows_mat(&self.D_K, 0)?;
        let a_k = rows_mat(&self.A_K, 0)?;
        Ok(Controller {
            b_k: rows_mat(&self.B_K, d_k.ncols())?,
            c_k: rows_mat(&self.C_K, a_k.nrows())?,
            a_k,
            d_k,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerRef {
    File { file: PathBuf },
    Inline(ControllerSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    #[serde(default = "default_plant")]
    pub plant: PlantRef,
    /// Hard budget; `0` gives the nominal design. Defaults to
    /// [`DEFAULT_EPSILON`] when `gamma` is absent too.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Soft level, used instead of `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateParams {
    #[serde(default = "default_plant")]
    pub plant: PlantRef,
    pub controller: ControllerRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn all_settings() -> Vec<Setting> {
    Setting::ALL.to_vec()
}
fn default_rhos() -> Grid {
    Grid::Values(vec![0.15, 0.5, 1.0])
}
fn tradeoff_eps() -> Grid {
    Grid::Linspace {
        linspace: (0.0, 0.1, 11),
    }
}
fn point_one() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffParams {
    /// A single plant instead of the integrator family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantRef>,
    #[serde(default = "all_settings")]
    pub settings: Vec<Setting>,
    #[serde(default = "default_rhos")]
    pub rhos: Grid,
    #[serde(default = "tradeoff_eps")]
    pub eps: Grid,
    /// Budget at which every design's AC is evaluated.
    #[serde(default = "point_one")]
    pub eval_eps: f64,
}

fn envelope_rhos() -> Grid {
    Grid::Linspace {
        linspace: (0.15, 1.0, 18),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    #[serde(default = "all_settings")]
    pub settings: Vec<Setting>,
    #[serde(default = "envelope_rhos")]
    pub rhos: Grid,
    #[serde(default = "point_one")]
    pub eps: f64,
}

fn scalar_a() -> f64 {
    0.9
}
fn scalar_gamma() -> f64 {
    4.0
}
fn scalar_cs() -> Grid {
    Grid::Linspace {
        linspace: (0.3, 1.0, 8),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarBoundsParams {
    #[serde(default = "scalar_a")]
    pub a: f64,
    #[serde(default = "scalar_gamma")]
    pub gamma: f64,
    #[serde(default = "scalar_cs")]
    pub cs: Grid,
}

fn fixation_points() -> Grid {
    Grid::Values(vec![0.85, 0.9, 0.95])
}
fn cartpole_dt() -> f64 {
    0.04
}
fn one() -> f64 {
    1.0
}
fn cartpole_eps() -> Grid {
    Grid::Linspace {
        linspace: (0.0, 0.125, 6),
    }
}
fn cartpole_eval_eps() -> f64 {
    0.125
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartpoleTradeoffParams {
    #[serde(default = "fixation_points")]
    pub l0s: Grid,
    #[serde(default = "cartpole_dt")]
    pub dt: f64,
    /// Design measurement-noise standard deviation.
    #[serde(default = "one")]
    pub meas_std: f64,
    #[serde(default = "cartpole_eps")]
    pub eps: Grid,
    #[serde(default = "cartpole_eval_eps")]
    pub eval_eps: f64,
}

fn sim_default() -> CartpoleSimSpec {
    CartpoleSimSpec::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartpoleSimParams {
    #[serde(default = "fixation_points")]
    pub l0s: Grid,
    #[serde(default = "cartpole_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub meas_std: f64,
    #[serde(default = "sim_eps")]
    pub eps: f64,
    #[serde(default = "sim_channels")]
    pub channels: CartpoleChannels,
    #[serde(default = "sim_duration")]
    pub duration: f64,
    #[serde(default = "sim_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub x0: [f64; 4],
}

fn sim_eps() -> f64 {
    sim_default().eps
}
fn sim_channels() -> CartpoleChannels {
    sim_default().channels
}
fn sim_duration() -> f64 {
    sim_default().duration
}
fn sim_noise_std() -> f64 {
    sim_default().noise_std
}

impl CartpoleSimParams {
    pub fn to_core(&self, seed: u64) -> CartpoleSimSpec {
        CartpoleSimSpec {
            l0s: self.l0s.values(),
            dt: self.dt,
            meas_std: self.meas_std,
            eps: self.eps,
            channels: self.channels,
            duration: self.duration,
            noise_std: self.noise_std,
            seed,
            x0: self.x0,
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Loads `--spec` for subcommand `kind` (defaults when absent) and inlines
/// every referenced file, so the result is self-contained.
pub fn load(kind: &str, path: Option<&Path>) -> Result<ExperimentSpec, CliError> {
    let (mut value, base) = match path {
        Some(p) => {
            let text = read(p)?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (v, base)
        }
        None => (Value::Object(Default::default()), PathBuf::new()),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Parse("the spec must be a JSON object".into()))?;
    match obj.get("kind") {
        None => {
            obj.insert("kind".into(), Value::String(kind.into()));
        }
        Some(Value::String(k)) if k == kind => {}
        Some(other) => {
            return Err(CliError::Parse(format!(
                "spec kind {other} does not match the {kind} command"
            )))
        }
    }
    let spec: ExperimentSpec =
        serde_json::from_value(value).map_err(|e| CliError::Parse(format!("spec: {e}")))?;
    resolve(spec, &base)
}

fn resolve(mut spec: ExperimentSpec, base: &Path) -> Result<ExperimentSpec, CliError> {
    match &mut spec.experiment {
        Experiment::Synth(p) => {
            p.plant = p.plant.clone().resolve(base)?;
            match (p.epsilon, p.gamma) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Parse(
                        "synth takes epsilon or gamma, not both".into(),
                    ))
                }
                (None, None) => p.epsilon = Some(DEFAULT_EPSILON),
                _ => {}
            }
        }
        Experiment::Evaluate(p) => {
            p.plant = p.plant.clone().resolve(base)?;
            if let ControllerRef::File { file } = &p.controller {
                let path = base.join(file);
                let text = read(&path)?;
                let k: ControllerSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
                p.controller = ControllerRef::Inline(k);
            }
        }
        Experiment::Tradeoff(p) => {
            if let Some(pl) = p.plant.take() {
                p.plant = Some(pl.resolve(base)?);
            } else {
                p.rhos.check("rhos")?;
                if p.settings.is_empty() {
                    return Err(CliError::Parse("settings is empty".into()));
                }
            }
            p.eps.check("eps")?;
        }
        Experiment::Envelope(p) => {
            p.rhos.check("rhos")?;
            if p.settings.is_empty() {
                return Err(CliError::Parse("settings is empty".into()));
            }
        }
        Experiment::BoundsScalarFilter(p) => p.cs.check("cs")?,
        Experiment::CartpoleTradeoff(p) => {
            p.l0s.check("l0s")?;
            p.eps.check("eps")?;
        }
        Experiment::CartpoleSim(p) => p.l0s.check("l0s")?,
    }
    Ok(spec)
}
