//! Builtin plants used by the experiments and the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{error_plant, scalar_plant};
use crate::hard_synthesis::SynthMode;
use crate::matops::{eye, from_rows, hstack, zeros};
use crate::plant::{lq_plant, LqWeights, Plant, PlantSpec};
use crate::sim::{linearize_cartpole, CartpoleChannels, CartpoleParams};

/// Control or estimation task posed on a plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    StateFeedback,
    Prediction,
    OutputFeedback,
}

impl Setting {
    pub const ALL: [Setting; 3] = [
        Setting::StateFeedback,
        Setting::Prediction,
        Setting::OutputFeedback,
    ];

    pub fn mode(self) -> SynthMode {
        match self {
            Setting::StateFeedback => SynthMode::StateFeedback,
            Setting::Prediction => SynthMode::Filter,
            Setting::OutputFeedback => SynthMode::OutputFeedback,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::StateFeedback => "state_feedback",
            Setting::Prediction => "prediction",
            Setting::OutputFeedback => "output_feedback",
        }
    }
}

/// A plant ready for synthesis: for [`Setting::Prediction`] it is already
/// the estimation-error plant.
#[derive(Debug, Clone)]
pub struct Problem {
    pub plant: Plant,
    pub weights: LqWeights,
    pub mode: SynthMode,
}

/// Integrator `x⁺ = [[1, ρ], [0, 1]] x + [0; 1] u + w + δ`. With full
/// state feedback the state is measured; otherwise `y = x₁ + v + δ_y`.
pub fn integrator(setting: Setting, rho: f64) -> Result<Problem> {
    if !rho.is_finite() {
        return Err(Error::Domain(format!("rho must be finite, got {rho}")));
    }
    let a = from_rows(&[&[1.0, rho], &[0.0, 1.0]]);
    let b2 = from_rows(&[&[0.0], &[1.0]]);
    let w = LqWeights::identity(2, 1);
    let plant = match setting {
        Setting::StateFeedback => {
            lq_plant(a, eye(2), eye(2), b2, &w, eye(2), zeros(2, 2), zeros(2, 2))?
        }
        Setting::Prediction | Setting::OutputFeedback => {
            let b = hstack(&[&eye(2), &zeros(2, 1)]);
            let d = from_rows(&[&[0.0, 0.0, 1.0]]);
            lq_plant(
                a,
                b.clone(),
                b,
                b2,
                &w,
                from_rows(&[&[1.0, 0.0]]),
                d.clone(),
                d,
            )?
        }
    };
    let plant = match setting {
        Setting::Prediction => error_plant(&plant)?,
        _ => plant,
    };
    Ok(Problem {
        plant,
        weights: w,
        mode: setting.mode(),
    })
}

/// Linearized cartpole with output feedback through the camera.
pub fn cartpole(
    params: &CartpoleParams,
    dt: f64,
    channels: CartpoleChannels,
    meas_std: f64,
) -> Result<Problem> {
    let (plant, weights) = linearize_cartpole(params, dt, channels, meas_std)?;
    Ok(Problem {
        plant,
        weights,
        mode: SynthMode::OutputFeedback,
    })
}

/// Scalar predictor plant `x⁺ = a x + w + δ₁`, `y = c x + v + δ₂`, as an
/// error plant.
pub fn scalar(a: f64, c: f64) -> Result<Problem> {
    Ok(Problem {
        plant: error_plant(&scalar_plant(a, c)?)?,
        weights: LqWeights::identity(1, 1),
        mode: SynthMode::Filter,
    })
}

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 3] = ["integrator", "cartpole", "scalar"];

/// Builtin plant descriptor as it appears in experiment specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Builtin {
    Integrator {
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_setting")]
        setting: Setting,
    },
    Cartpole {
        #[serde(default = "default_l0")]
        l0: f64,
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default)]
        channels: CartpoleChannels,
        #[serde(default = "one")]
        meas_std: f64,
    },
    Scalar {
        a: f64,
        c: f64,
    },
}

fn default_rho() -> f64 {
    0.5
}
fn default_setting() -> Setting {
    Setting::OutputFeedback
}
fn default_l0() -> f64 {
    0.9
}
fn default_dt() -> f64 {
    0.04
}
fn one() -> f64 {
    1.0
}

impl Builtin {
    pub fn build(&self) -> Result<Problem> {
        match self {
            Builtin::Integrator { rho, setting } => integrator(*setting, *rho),
            Builtin::Cartpole {
                l0,
                dt,
                channels,
                meas_std,
            } => cartpole(&CartpoleParams::standard(*l0), *dt, *channels, *meas_std),
            Builtin::Scalar { a, c } => scalar(*a, *c),
        }
    }
}

/// Plant spec of a builtin with default parameters.
pub fn builtin(name: &str) -> Result<PlantSpec> {
    let b = match name {
        "integrator" => Builtin::Integrator {
            rho: default_rho(),
            setting: default_setting(),
        },
        "cartpole" => Builtin::Cartpole {
            l0: default_l0(),
            dt: default_dt(),
            channels: CartpoleChannels::Input,
            meas_std: 1.0,
        },
        "scalar" => Builtin::Scalar { a: 0.9, c: 1.0 },
        other => {
            return Err(Error::Domain(format!(
                "unknown builtin {other:?}; expected one of {BUILTINS:?}"
            )))
        }
    };
    let p = b.build()?;
    Ok(PlantSpec::from_plant(&p.plant, &p.weights))
}
