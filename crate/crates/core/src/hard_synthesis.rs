//! Hard-budget synthesis: the optimal adversary's power on a fixed loop,
//! the bisection over `γ` that meets a power budget `ε`, and the resulting
//! adversarial cost `tr(J_γ) + γ²ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate;
use crate::filtering;
use crate::matops::{self, eye, solve_spd, symmetrize, trace, Mat};
use crate::of_synthesis::{self, LnOptions};
use crate::plant::{close_loop, ClosedLoop, Controller, LqWeights, Plant};
use crate::sf_synthesis::{self, solve_soft_sf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvPowerResult {
    pub gamma: f64,
    pub power: f64,
    pub p_gamma: Mat,
    pub phi: Mat,
    pub gamma_x: Mat,
    pub gamma_w: Mat,
    pub sigma_gamma: Mat,
    /// Worst-case feedback `δ = K_x x + K_w w` with `K = Φ⁻¹Γ`.
    pub k_x: Mat,
    pub k_w: Mat,
}

impl AdvPowerResult {
    /// Power from the stored `Φ`, `Γ` and `Σ`, independent of `k_x`, `k_w`.
    pub fn recompute_power(&self) -> Result<f64> {
        if self.phi.nrows() == 0 {
            return Ok(0.0);
        }
        let kx = solve_spd(&self.phi, &self.gamma_x)?;
        let kw = solve_spd(&self.phi, &self.gamma_w)?;
        Ok(trace(&(kw.transpose() * &kw)) + trace(&(kx.transpose() * &kx * &self.sigma_gamma)))
    }
}

/// Optimal adversary against the closed loop `cl` at price `γ`.
pub fn adv_power(cl: &ClosedLoop, gamma: f64) -> Result<AdvPowerResult> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let nd = cl.n_delta();
    let (a, b0, b1, c, d0, d1) = (
        &cl.a_cl, &cl.b0_cl, &cl.b1_cl, &cl.c_cl, &cl.d0_cl, &cl.d1_cl,
    );
    let q = c.transpose() * c;
    let r = d1.transpose() * d1 - eye(nd) * (gamma * gamma);
    let s = c.transpose() * d1;
    let p = matops::dare_generalized(a, b1, &q, &r, &s).map_err(|e| match e {
        Error::InfeasibleGamma { detail, .. } => Error::InfeasibleGamma { gamma, detail },
        Error::NoSolution { residual } => Error::InfeasibleGamma {
            gamma,
            detail: format!("bounded-real equation has no solution (residual {residual:.2e})"),
        },
        other => other,
    })?;
    let phi = symmetrize(&(-r - b1.transpose() * &p * b1));
    let gx = d1.transpose() * c + b1.transpose() * &p * a;
    let gw = d1.transpose() * d0 + b1.transpose() * &p * b0;
    let (kx, kw) = if nd == 0 {
        (Mat::zeros(0, a.nrows()), Mat::zeros(0, b0.ncols()))
    } else {
        let not_pd = || Error::InfeasibleGamma {
            gamma,
            detail: "Φ is not positive definite".into(),
        };
        (
            solve_spd(&phi, &gx).map_err(|_| not_pd())?,
            solve_spd(&phi, &gw).map_err(|_| not_pd())?,
        )
    };
    let abar = a + b1 * &kx;
    let bbar = b0 + b1 * &kw;
    let sigma = matops::stationary_cov(&abar, &(&bbar * bbar.transpose()))?;
    let power = trace(&(kw.transpose() * &kw)) + trace(&(kx.transpose() * &kx * &sigma));
    Ok(AdvPowerResult {
        gamma,
        power,
        p_gamma: p,
        phi,
        gamma_x: gx,
        gamma_w: gw,
        sigma_gamma: sigma,
        k_x: kx,
        k_w: kw,
    })
}

/// `J_γ = D₀ᵀD₀ + B₀ᵀP_γB₀ + Γ_wᵀΦ⁻¹Γ_w` from an adversary solution.
pub fn soft_trace_from(cl: &ClosedLoop, adv: &AdvPowerResult) -> f64 {
    let j0 = cl.d0_cl.transpose() * &cl.d0_cl + cl.b0_cl.transpose() * &adv.p_gamma * &cl.b0_cl;
    trace(&j0) + trace(&(adv.gamma_w.transpose() * &adv.k_w))
}

/// `tr(J_γ)`: the soft-penalized objective of the loop with the adversary
/// best-responding at price `γ`.
pub fn soft_trace_value(cl: &ClosedLoop, gamma: f64) -> Result<f64> {
    let adv = adv_power(cl, gamma)?;
    Ok(soft_trace_from(cl, &adv))
}

/// Which synthesis route a plant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// `u = F x` from the game Riccati equation.
    StateFeedback,
    /// Dynamic controller from the alternating `(L, N)` solver.
    OutputFeedback,
    /// Static predictor gain on the error plant (see [`filtering::error_plant`]).
    Filter,
}

impl SynthMode {
    /// State feedback when the plant measures its full state, else output feedback.
    pub fn detect(p: &Plant) -> Self {
        if p.is_state_feedback() {
            SynthMode::StateFeedback
        } else {
            SynthMode::OutputFeedback
        }
    }
}

#[derive(Debug, Clone)]
pub struct SoftController {
    pub gamma: f64,
    pub k: Controller,
    pub converged: bool,
    pub iterations: usize,
}

/// Soft-constrained controller at `γ` for the chosen route.
pub fn synth_soft(
    p: &Plant,
    weights: &LqWeights,
    mode: SynthMode,
    gamma: f64,
    opts: &LnOptions,
) -> Result<SoftController> {
    match mode {
        SynthMode::StateFeedback => {
            let g = solve_soft_sf(p, weights, gamma)?;
            Ok(SoftController {
                gamma,
                k: Controller::static_gain(g.f_gamma),
                converged: true,
                iterations: 0,
            })
        }
        SynthMode::OutputFeedback => {
            let s = of_synthesis::solve_soft_of(p, weights, gamma, opts)?;
            Ok(SoftController {
                gamma,
                k: s.k,
                converged: s.converged,
                iterations: s.iterations,
            })
        }
        SynthMode::Filter => {
            let f = filtering::robust_filter(p, gamma, opts)?;
            Ok(SoftController {
                gamma,
                k: Controller::static_gain(f.l_gamma),
                converged: f.converged,
                iterations: f.iterations,
            })
        }
    }
}

/// The `γ → ∞` member of each family: LQR, LQG or the Kalman predictor.
pub fn nominal_controller(p: &Plant, weights: &LqWeights, mode: SynthMode) -> Result<Controller> {
    match mode {
        SynthMode::StateFeedback => Ok(Controller::static_gain(sf_synthesis::lqr(p, weights)?.1)),
        SynthMode::OutputFeedback => of_synthesis::lqg_controller(p, weights),
        SynthMode::Filter => Ok(Controller::static_gain(filtering::kalman_gain(p)?.l)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardSynthesisResult {
    pub k: Controller,
    pub gamma_star: f64,
    pub epsilon: f64,
    pub ac_value: f64,
    pub closed_loop: ClosedLoop,
    pub soft_trace: f64,
    pub power: f64,
    /// Final bracket `[γ_LB, γ*]`.
    pub gamma_lb: f64,
    pub bisection_steps: usize,
    /// Midpoints rejected because the inner solver did not converge.
    pub nonconverged_midpoints: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct HardOptions {
    /// Explicit `(γ_LB, γ_UB)`; found automatically when absent.
    pub bracket: Option<(f64, f64)>,
    /// Bracket width at which the bisection stops, relative to `γ_UB`.
    pub rel_tol: f64,
    pub ln: LnOptions,
}

impl Default for HardOptions {
    fn default() -> Self {
        HardOptions {
            bracket: None,
            rel_tol: 1e-6,
            ln: LnOptions::default(),
        }
    }
}

/// Smallest `γ` the automatic predictor bracket will probe.
pub const FILTER_GAMMA_FLOOR: f64 = 1e-2;

/// Outcome of trying one `γ` inside the bisection.
enum Probe {
    /// Synthesis failed, did not converge, or the adversary is unbounded.
    Low {
        nonconverged: bool,
    },
    Feasible(Box<(SoftController, ClosedLoop, AdvPowerResult)>),
}

fn probe(
    p: &Plant,
    weights: &LqWeights,
    mode: SynthMode,
    gamma: f64,
    opts: &LnOptions,
) -> Result<Probe> {
    let soft = match synth_soft(p, weights, mode, gamma, opts) {
        Ok(s) => s,
        Err(e) if e.is_infeasible() => {
            return Ok(Probe::Low {
                nonconverged: false,
            })
        }
        Err(e) => return Err(e),
    };
    if !soft.converged {
        return Ok(Probe::Low { nonconverged: true });
    }
    let cl = close_loop(p, &soft.k)?;
    match adv_power(&cl, gamma) {
        Ok(adv) => Ok(Probe::Feasible(Box::new((soft, cl, adv)))),
        Err(e) if e.is_infeasible() || matches!(e, Error::Instability { .. }) => Ok(Probe::Low {
            nonconverged: false,
        }),
        Err(e) => Err(e),
    }
}

/// Automatic bracket anchored at the H∞ norm of the nominal loop. Above
/// it the game is typically solvable and probes are cheap, while every
/// infeasible probe costs a full continuation, so the search halves down
/// from the anchor instead of doubling up from `floor`. Predictors need an
/// explicit floor because the state-feedback game has no solution on the
/// error plant (`R = 0`).
fn anchored_bracket(
    p: &Plant,
    weights: &LqWeights,
    mode: SynthMode,
    epsilon: f64,
    ln: &LnOptions,
    above: &dyn Fn(&Probe) -> bool,
) -> Result<(f64, f64, Probe)> {
    let floor = match mode {
        SynthMode::Filter => FILTER_GAMMA_FLOOR,
        _ => 1.01 * sf_synthesis::gamma_inf(p, weights, 1e-6)?,
    };
    let nominal = close_loop(p, &nominal_controller(p, weights, mode)?)?;
    let anchor = (1.01 * evaluate::hinf_norm(&nominal, 1e-6)?).max(2.0 * floor);
    let first = probe(p, weights, mode, anchor, ln)?;
    if above(&first) {
        let (mut ub, mut best) = (anchor, first);
        loop {
            let lb = (0.5 * ub).max(floor);
            let pr = probe(p, weights, mode, lb, ln)?;
            if !above(&pr) {
                return Ok((lb, ub, best));
            }
            if lb == floor {
                return Err(Error::Bracket(format!(
                    "adversary power stays below ε = {epsilon} down to γ = {floor}"
                )));
            }
            ub = lb;
            best = pr;
        }
    }
    let mut lb = anchor;
    let mut ub = 2.0 * anchor;
    loop {
        let pr = probe(p, weights, mode, ub, ln)?;
        if above(&pr) {
            return Ok((lb, ub, pr));
        }
        lb = ub;
        ub *= 2.0;
        if ub > 1e8 {
            return Err(Error::Bracket("power stays above ε up to γ = 1e8".into()));
        }
    }
}

/// Smallest `γ` whose controller keeps the optimal adversary's power
/// below `ε`, found by bisection on `γ` with re-synthesis at every midpoint.
pub fn synth_hard(
    p: &Plant,
    weights: &LqWeights,
    mode: SynthMode,
    epsilon: f64,
    opts: &HardOptions,
) -> Result<HardSynthesisResult> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut nonconverged = 0;
    let above = |probe: &Probe| matches!(probe, Probe::Feasible(b) if b.2.power < epsilon);

    let (mut lb, mut ub, mut best) = match opts.bracket {
        Some((lb, ub)) => {
            if !(lb > 0.0 && lb < ub) {
                return Err(Error::Bracket(format!(
                    "need 0 < γ_LB < γ_UB, got ({lb}, {ub})"
                )));
            }
            if above(&probe(p, weights, mode, lb, &opts.ln)?) {
                return Err(Error::Bracket(format!(
                    "adversary power at γ_LB = {lb} is already below ε"
                )));
            }
            let hi = probe(p, weights, mode, ub, &opts.ln)?;
            if !above(&hi) {
                return Err(Error::Bracket(format!(
                    "adversary power at γ_UB = {ub} is not below ε"
                )));
            }
            (lb, ub, hi)
        }
        None => match mode {
            SynthMode::StateFeedback => {
                let mut lb = 1.01 * sf_synthesis::gamma_inf(p, weights, 1e-6)?;
                let mut ub = 2.0 * lb;
                loop {
                    let pr = probe(p, weights, mode, ub, &opts.ln)?;
                    if above(&pr) {
                        break (lb, ub, pr);
                    }
                    lb = ub;
                    ub *= 2.0;
                    if ub > 1e8 {
                        return Err(Error::Bracket("power stays above ε up to γ = 1e8".into()));
                    }
                }
            }
            _ => anchored_bracket(p, weights, mode, epsilon, &opts.ln, &above)?,
        },
    };
    let tol = opts.rel_tol * ub;
    let mut steps = 0;
    while ub - lb > tol {
        steps += 1;
        let mid = 0.5 * (lb + ub);
        let pr = probe(p, weights, mode, mid, &opts.ln)?;
        if let Probe::Low { nonconverged: true } = pr {
            nonconverged += 1;
        }
        if above(&pr) {
            ub = mid;
            best = pr;
        } else {
            lb = mid;
        }
    }
    if nonconverged > 0 {
        log::info!("{nonconverged} bisection midpoints rejected for non-convergence");
    }
    let Probe::Feasible(b) = best else {
        unreachable!("upper end of the bracket is always feasible")
    };
    let (soft, cl, adv) = *b;
    let soft_trace = soft_trace_from(&cl, &adv);
    Ok(HardSynthesisResult {
        k: soft.k,
        gamma_star: ub,
        epsilon,
        ac_value: soft_trace + ub * ub * epsilon,
        closed_loop: cl,
        soft_trace,
        power: adv.power,
        gamma_lb: lb,
        bisection_steps: steps,
        nonconverged_midpoints: nonconverged,
        inner_converged: soft.converged,
    })
}
