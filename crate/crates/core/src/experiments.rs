//! Sweeps behind the tradeoff experiments: tradeoff curves, envelopes, the
//! scalar filtering bounds and the cartpole runs.

use serde::{Deserialize, Serialize};

use crate::bounds::{scalar_lower_bound, scalar_upper_bound};
use crate::error::{Error, Result};
use crate::evaluate::{adversarial_cost, nominal_cost};
use crate::hard_synthesis::{nominal_controller, synth_hard, HardOptions};
use crate::par::{self, Exec};
use crate::plant::Controller;
use crate::sim::{
    rollout_nonlinear_cartpole, CartpoleChannels, CartpoleParams, RolloutConfig, Trace,
};
use crate::systems::{self, Problem, Setting};

/// Tolerance of the `ε → γ` bisection inside the adversarial cost.
pub const EVAL_REL_TOL: f64 = 1e-7;

/// Controller designed for budget `ε`; `ε = 0` gives the nominal design.
pub fn design(pb: &Problem, epsilon: f64, opts: &HardOptions) -> Result<(Controller, Option<f64>)> {
    if epsilon == 0.0 {
        return Ok((nominal_controller(&pb.plant, &pb.weights, pb.mode)?, None));
    }
    let r = synth_hard(&pb.plant, &pb.weights, pb.mode, epsilon, opts)?;
    Ok((r.k, Some(r.gamma_star)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub design_eps: f64,
    pub gamma_star: Option<f64>,
    pub nc: Option<f64>,
    pub ac: Option<f64>,
    pub error: Option<String>,
}

fn tradeoff_row(pb: &Problem, eps: f64, eval_eps: f64, opts: &HardOptions) -> TradeoffRow {
    let run = || -> Result<(Option<f64>, f64, f64)> {
        let (k, g) = design(pb, eps, opts)?;
        let nc = nominal_cost(&pb.plant, &k)?;
        let ac = adversarial_cost(&pb.plant, &k, eval_eps, EVAL_REL_TOL)?.ac;
        Ok((g, nc, ac))
    };
    match run() {
        Ok((g, nc, ac)) => TradeoffRow {
            design_eps: eps,
            gamma_star: g,
            nc: Some(nc),
            ac: Some(ac),
            error: None,
        },
        Err(e) => {
            log::warn!("tradeoff row at ε = {eps} failed: {e}");
            TradeoffRow {
                design_eps: eps,
                gamma_star: None,
                nc: None,
                ac: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// `(NC, AC at eval_eps)` of controllers designed over `eps_grid`. Failed
/// rows carry the error and the sweep continues.
pub fn tradeoff_curve(
    pb: &Problem,
    eps_grid: &[f64],
    eval_eps: f64,
    opts: &HardOptions,
    exec: Exec,
) -> Result<Vec<TradeoffRow>> {
    if eps_grid.is_empty() {
        return Err(Error::Domain("the ε grid is empty".into()));
    }
    if eps_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain(
            "ε grid entries must be finite and nonnegative".into(),
        ));
    }
    Ok(par::map(exec, eps_grid, |&e| {
        tradeoff_row(pb, e, eval_eps, opts)
    }))
}

/// `NC(last) − NC(first)` of a curve, `None` if either end failed.
pub fn nc_width(rows: &[TradeoffRow]) -> Option<f64> {
    Some(rows.last()?.nc? - rows.first()?.nc?)
}

/// Rows whose NC drops or AC rises by more than `slack` (relative) along ε.
pub fn monotonicity_violations(rows: &[TradeoffRow], slack: f64) -> Vec<String> {
    let mut out = vec![];
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if let (Some(n0), Some(n1)) = (a.nc, b.nc) {
            if n1 < n0 - slack * n0.abs().max(1.0) {
                out.push(format!(
                    "NC drops from {n0} to {n1} between ε = {} and {}",
                    a.design_eps, b.design_eps
                ));
            }
        }
        if let (Some(a0), Some(a1)) = (a.ac, b.ac) {
            if a1 > a0 + slack * a0.abs().max(1.0) {
                out.push(format!(
                    "AC rises from {a0} to {a1} between ε = {} and {}",
                    a.design_eps, b.design_eps
                ));
            }
        }
    }
    out
}

/// Evenly spaced grid `[0, max]` with `n ≥ 2` points.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub setting: Setting,
    pub rho: f64,
    pub eval_eps: f64,
    pub rows: Vec<TradeoffRow>,
}

/// Integrator tradeoff curves for every `(setting, ρ)` pair.
pub fn integrator_tradeoffs(
    settings: &[Setting],
    rhos: &[f64],
    eps_grid: &[f64],
    eval_eps: f64,
    opts: &HardOptions,
    exec: Exec,
) -> Result<Vec<TradeoffCurve>> {
    let jobs: Vec<(Setting, f64)> = settings
        .iter()
        .flat_map(|s| rhos.iter().map(move |r| (*s, *r)))
        .collect();
    par::map(exec, &jobs, |&(setting, rho)| -> Result<TradeoffCurve> {
        let pb = systems::integrator(setting, rho)?;
        Ok(TradeoffCurve {
            setting,
            rho,
            eval_eps,
            rows: tradeoff_curve(&pb, eps_grid, eval_eps, opts, exec)?,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub setting: Setting,
    pub rho: f64,
    pub nominal: TradeoffRow,
    pub robust: TradeoffRow,
}

impl EnvelopeRow {
    /// `NC(K_ε) − NC(K_0)`.
    pub fn nc_gap(&self) -> Option<f64> {
        Some(self.robust.nc? - self.nominal.nc?)
    }
}

/// Nominal and `ε`-robust designs evaluated at `ε` across `rhos`.
pub fn envelope(
    setting: Setting,
    rhos: &[f64],
    eps: f64,
    opts: &HardOptions,
    exec: Exec,
) -> Result<Vec<EnvelopeRow>> {
    if rhos.is_empty() {
        return Err(Error::Domain("the ρ grid is empty".into()));
    }
    par::map(exec, rhos, |&rho| -> Result<EnvelopeRow> {
        let pb = systems::integrator(setting, rho)?;
        Ok(EnvelopeRow {
            setting,
            rho,
            nominal: tradeoff_row(&pb, 0.0, eps, opts),
            robust: tradeoff_row(&pb, eps, eps, opts),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarBoundRow {
    pub a: f64,
    pub c: f64,
    pub gamma: f64,
    pub true_gap: Option<f64>,
    /// Zero when the bound's inner term is negative.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub lower_precondition_ok: bool,
    pub upper_precondition_ok: bool,
    pub detail: String,
}

fn scalar_row(a: f64, c: f64, gamma: f64) -> ScalarBoundRow {
    let mut row = ScalarBoundRow {
        a,
        c,
        gamma,
        true_gap: None,
        lower: None,
        upper: None,
        lower_precondition_ok: false,
        upper_precondition_ok: false,
        detail: String::new(),
    };
    let mut notes = vec![];
    match scalar_lower_bound(a, c, gamma, None) {
        Ok(r) => {
            row.true_gap = r.true_gap;
            row.lower = Some(r.value);
            row.lower_precondition_ok = r.precondition_ok;
            if !r.precondition_ok {
                notes.push(format!("lower: {}", r.precondition_detail));
            }
        }
        Err(e) => notes.push(format!("lower: {e}")),
    }
    match scalar_upper_bound(a, c, gamma, None) {
        Ok(r) => {
            row.true_gap = row.true_gap.or(r.true_gap);
            row.upper = Some(r.value);
            row.upper_precondition_ok = r.precondition_ok;
            if !r.precondition_ok {
                notes.push(format!("upper: {}", r.precondition_detail));
            }
        }
        Err(e) => notes.push(format!("upper: {e}")),
    }
    row.detail = notes.join(" | ");
    row
}

/// One row of scalar predictor bounds per `c`.
pub fn scalar_filter_bounds(
    a: f64,
    gamma: f64,
    cs: &[f64],
    exec: Exec,
) -> Result<Vec<ScalarBoundRow>> {
    if cs.is_empty() {
        return Err(Error::Domain("the c grid is empty".into()));
    }
    Ok(par::map(exec, cs, |&c| scalar_row(a, c, gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartpoleCurve {
    pub l0: f64,
    pub eval_eps: f64,
    pub rows: Vec<TradeoffRow>,
}

/// Linearized cartpole tradeoff curves per fixation point.
pub fn cartpole_tradeoffs(
    l0s: &[f64],
    dt: f64,
    meas_std: f64,
    eps_grid: &[f64],
    eval_eps: f64,
    opts: &HardOptions,
    exec: Exec,
) -> Result<Vec<CartpoleCurve>> {
    if l0s.is_empty() {
        return Err(Error::Domain("the ℓ₀ grid is empty".into()));
    }
    par::map(exec, l0s, |&l0| -> Result<CartpoleCurve> {
        let pb = systems::cartpole(
            &CartpoleParams::standard(l0),
            dt,
            CartpoleChannels::Input,
            meas_std,
        )?;
        Ok(CartpoleCurve {
            l0,
            eval_eps,
            rows: tradeoff_curve(&pb, eps_grid, eval_eps, opts, exec)?,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartpoleSimSpec {
    pub l0s: Vec<f64>,
    pub dt: f64,
    pub meas_std: f64,
    /// Budget of the robust controller.
    pub eps: f64,
    pub channels: CartpoleChannels,
    /// Simulated seconds.
    pub duration: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub x0: [f64; 4],
}

impl Default for CartpoleSimSpec {
    fn default() -> Self {
        CartpoleSimSpec {
            l0s: vec![0.85, 0.9, 0.95],
            dt: 0.04,
            meas_std: 1.0,
            eps: 0.015,
            channels: CartpoleChannels::Widened,
            duration: 20.0,
            noise_std: 0.002,
            seed: 0,
            x0: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartpoleRun {
    pub l0: f64,
    /// `"lqg"` or `"adv"`.
    pub controller: String,
    pub gamma_star: Option<f64>,
    pub trace: Option<Trace>,
    pub error: Option<String>,
}

impl CartpoleRun {
    pub fn final_cost(&self) -> Option<f64> {
        self.trace.as_ref().map(Trace::final_running_avg)
    }
}

/// Nonlinear runs of the LQG and the `ε`-robust controller per `ℓ₀`, both
/// driven by the same noise sequence.
pub fn cartpole_sim(
    spec: &CartpoleSimSpec,
    opts: &HardOptions,
    exec: Exec,
) -> Result<Vec<CartpoleRun>> {
    if spec.l0s.is_empty() {
        return Err(Error::Domain("the ℓ₀ grid is empty".into()));
    }
    let horizon = (spec.duration / spec.dt).round() as usize;
    let cfg = RolloutConfig {
        seed: spec.seed,
        horizon,
        dt: spec.dt,
        noise_std: vec![spec.noise_std],
        x0: Some(spec.x0.to_vec()),
        ..Default::default()
    };
    let jobs: Vec<(f64, bool)> = spec
        .l0s
        .iter()
        .flat_map(|l| [(*l, false), (*l, true)])
        .collect();
    par::map(exec, &jobs, |&(l0, robust)| -> Result<CartpoleRun> {
        let pr = CartpoleParams::standard(l0);
        let pb = systems::cartpole(&pr, spec.dt, spec.channels, spec.meas_std)?;
        let name = if robust { "adv" } else { "lqg" }.to_string();
        let designed = design(&pb, if robust { spec.eps } else { 0.0 }, opts);
        let (k, g) = match designed {
            Ok(v) => v,
            Err(e) => {
                return Ok(CartpoleRun {
                    l0,
                    controller: name,
                    gamma_star: None,
                    trace: None,
                    error: Some(e.to_string()),
                })
            }
        };
        Ok(match rollout_nonlinear_cartpole(&pr, &k, &cfg) {
            Ok(tr) => CartpoleRun {
                l0,
                controller: name,
                gamma_star: g,
                trace: Some(tr),
                error: None,
            },
            Err(e) => CartpoleRun {
                l0,
                controller: name,
                gamma_star: g,
                trace: None,
                error: Some(e.to_string()),
            },
        })
    })
    .into_iter()
    .collect()
}
