//! Cost functionals of a closed loop: nominal cost, adversarial cost under a
//! power budget, the soft-penalized objective, the H∞ norm of the
//! adversary channel, and a finite-horizon dynamic-programming oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_synthesis::{adv_power, soft_trace_from, soft_trace_value};
use crate::matops::{self, eye, norm2, sigma_max, solve_spd, symmetrize, trace, Mat};
use crate::plant::{close_loop, ClosedLoop, Controller, LqWeights, Plant};
use crate::sf_synthesis::m_of;

/// `tr(C Σ Cᵀ + D₀D₀ᵀ)` with `Σ` the stationary state covariance under `w`.
pub fn nominal_cost_cl(cl: &ClosedLoop) -> Result<f64> {
    let rho = matops::spectral_radius(&cl.a_cl)?;
    if rho >= 1.0 {
        return Err(Error::Instability { rho });
    }
    let sigma = matops::stationary_cov(&cl.a_cl, &(&cl.b0_cl * cl.b0_cl.transpose()))?;
    Ok(trace(&(&cl.c_cl * sigma * cl.c_cl.transpose()))
        + trace(&(&cl.d0_cl * cl.d0_cl.transpose())))
}

pub fn nominal_cost(p: &Plant, k: &Controller) -> Result<f64> {
    nominal_cost_cl(&close_loop(p, k)?)
}

pub fn soft_objective(p: &Plant, k: &Controller, gamma: f64) -> Result<f64> {
    soft_trace_value(&close_loop(p, k)?, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialCost {
    pub ac: f64,
    /// Price at which the optimal adversary spends exactly the budget.
    pub gamma: f64,
    pub power: f64,
}

fn adversary_inactive(cl: &ClosedLoop) -> bool {
    cl.n_delta() == 0 || (cl.b1_cl.amax() == 0.0 && cl.d1_cl.amax() == 0.0)
}

/// Adversarial cost of a fixed loop: bisection on `γ` until the optimal
/// adversary's power equals `ε`, then `tr(J_γ) + γ²ε`. The controller is
/// never re-synthesized. `rel_tol` is the final bracket width relative to
/// its upper end.
pub fn adversarial_cost_cl(cl: &ClosedLoop, epsilon: f64, rel_tol: f64) -> Result<AdversarialCost> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let nc = nominal_cost_cl(cl)?;
    if epsilon == 0.0 || adversary_inactive(cl) {
        return Ok(AdversarialCost {
            ac: nc,
            gamma: f64::INFINITY,
            power: 0.0,
        });
    }
    let norm = hinf_norm(cl, 1e-10)?;
    let power_at = |g: f64| adv_power(cl, g).map(|r| r.power);
    // Lower end: approach the norm until the adversary overspends.
    let mut lb = None;
    for k in 1..=12 {
        let g = norm * (1.0 + 10f64.powi(-k));
        match power_at(g) {
            Ok(pw) if pw > epsilon => {
                lb = Some(g);
                break;
            }
            Ok(_) => {}
            Err(e) if e.is_infeasible() => {
                lb = Some(g);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let Some(mut lb) = lb else {
        // The budget cannot be spent above the norm; the dual optimum sits at
        // the boundary.
        let g = norm * (1.0 + 1e-12);
        let r = adv_power(cl, g)?;
        log::warn!("adversary power stays below ε down to the H∞ norm {norm:.6}");
        return Ok(AdversarialCost {
            ac: soft_trace_from(cl, &r) + g * g * epsilon,
            gamma: g,
            power: r.power,
        });
    };
    let mut ub = 2.0 * lb;
    while power_at(ub)? >= epsilon {
        lb = ub;
        ub *= 2.0;
        if ub > 1e12 {
            return Err(Error::Search(
                "adversary power does not drop below ε".into(),
            ));
        }
    }
    while ub - lb > rel_tol * ub {
        let mid = 0.5 * (lb + ub);
        match power_at(mid) {
            Ok(pw) if pw < epsilon => ub = mid,
            Ok(_) => lb = mid,
            Err(e) if e.is_infeasible() => lb = mid,
            Err(e) => return Err(e),
        }
    }
    let r = adv_power(cl, ub)?;
    Ok(AdversarialCost {
        ac: soft_trace_from(cl, &r) + ub * ub * epsilon,
        gamma: ub,
        power: r.power,
    })
}

pub fn adversarial_cost(
    p: &Plant,
    k: &Controller,
    epsilon: f64,
    rel_tol: f64,
) -> Result<AdversarialCost> {
    adversarial_cost_cl(&close_loop(p, k)?, epsilon, rel_tol)
}

const BOUNDED_REAL_MAX_ITER: usize = 2000;

/// Whether `γ` exceeds the H∞ norm of `(A, B, C, D)`: the bounded-real
/// Riccati equation has a stabilizing solution with `γ²I − DᵀD − BᵀPB ≻ 0`.
/// Just below the norm doubling breaks down and value iteration needs
/// about `1/√(γ* − γ)` steps to expose the violation, so the fallback is
/// capped and a stalled solve counts as infeasible.
pub fn bounded_real_feasible(a: &Mat, b: &Mat, c: &Mat, d: &Mat, gamma: f64) -> bool {
    if gamma <= sigma_max(d) {
        return false;
    }
    let nd = b.ncols();
    let q = c.transpose() * c;
    let r = d.transpose() * d - eye(nd) * (gamma * gamma);
    let s = c.transpose() * d;
    let opts = matops::RiccatiOpts {
        max_iter: BOUNDED_REAL_MAX_ITER,
        ..Default::default()
    };
    match matops::dare_cross(a, b, &q, &r, &s, nd, &opts) {
        Ok(p) => matops::pd_check(&symmetrize(&(-r - b.transpose() * &p * b)), 0.0),
        Err(_) => false,
    }
}

/// H∞ norm of `(A, B, C, D)` to absolute bracket width `tol · (1 + norm)`.
pub fn hinf_norm_ss(a: &Mat, b: &Mat, c: &Mat, d: &Mat, tol: f64) -> Result<f64> {
    let rho = matops::spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Instability { rho });
    }
    let dn = sigma_max(d);
    if b.ncols() == 0 || b.amax() == 0.0 || c.amax() == 0.0 || a.nrows() == 0 {
        return Ok(dn);
    }
    let mut lo = dn;
    let mut hi = dn + 2.0 * norm2(c) * norm2(b) / (1.0 - rho);
    // The coarse bound assumes ‖Aᵏ‖ ≤ ρᵏ, which fails for non-normal A.
    while !bounded_real_feasible(a, b, c, d, hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Search("H∞ upper bracket exceeded 1e12".into()));
        }
    }
    while hi - lo > tol * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if bounded_real_feasible(a, b, c, d, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// H∞ norm of the `δ → z` channel of a closed loop.
pub fn hinf_norm(cl: &ClosedLoop, tol: f64) -> Result<f64> {
    hinf_norm_ss(&cl.a_cl, &cl.b1_cl, &cl.c_cl, &cl.d1_cl, tol)
}

/// Soft objective `lim E[‖z‖² − γ²‖δ‖²]` when the adversary plays the fixed
/// policy `δ = E x + Δ w` on the closed-loop state.
pub fn fixed_policy_objective(cl: &ClosedLoop, e: &Mat, delta: &Mat, gamma: f64) -> Result<f64> {
    let a = &cl.a_cl + &cl.b1_cl * e;
    let b = &cl.b0_cl + &cl.b1_cl * delta;
    let cz = &cl.c_cl + &cl.d1_cl * e;
    let dz = &cl.d0_cl + &cl.d1_cl * delta;
    let sigma = matops::stationary_cov(&a, &(&b * b.transpose()))?;
    let g2 = gamma * gamma;
    Ok(
        trace(&(sigma * (cz.transpose() * &cz - e.transpose() * e * g2)))
            + trace(&(dz.transpose() * &dz - delta.transpose() * delta * g2)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub nc: f64,
    pub ac: Option<AdversarialCost>,
    /// H∞ norm of the adversary channel.
    pub rc_gamma: Option<f64>,
}

pub fn cost_report(p: &Plant, k: &Controller, epsilon: Option<f64>) -> Result<CostReport> {
    let cl = close_loop(p, k)?;
    let nc = nominal_cost_cl(&cl)?;
    let ac = epsilon
        .map(|e| adversarial_cost_cl(&cl, e, 1e-9))
        .transpose()?;
    let rc = if adversary_inactive(&cl) {
        None
    } else {
        Some(hinf_norm(&cl, 1e-9)?)
    };
    Ok(CostReport {
        nc,
        ac,
        rc_gamma: rc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpOracle {
    pub value_per_step: f64,
    /// `gains[τ]` is the controller gain applied at step `τ`.
    pub gains: Vec<Mat>,
}

/// Backward recursion of the finite-horizon game with terminal cost
/// `P_T = Q`: `M = P + PB₁(γ²I − B₁ᵀPB₁)⁻¹B₁ᵀP`,
/// `F = −(R + B₂ᵀMB₂)⁻¹B₂ᵀMA`, `P⁻ = Q + FᵀRF + (A + B₂F)ᵀM(A + B₂F)` and
/// `q⁻ = q + tr(MB₀B₀ᵀ)`. Returns `q₀/T` and the time-varying gains.
pub fn dp_oracle_sf(
    p: &Plant,
    weights: &LqWeights,
    gamma: f64,
    horizon: usize,
) -> Result<DpOracle> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if !p.is_state_feedback() {
        return Err(Error::Domain(
            "dynamic-programming oracle needs a state-feedback plant".into(),
        ));
    }
    let (a, b2) = (&p.a, &p.b2);
    let w = &p.b0 * p.b0.transpose();
    let mut pm = weights.q.clone();
    let mut q = 0.0;
    let mut gains = vec![Mat::zeros(0, 0); horizon];
    for tau in (0..horizon).rev() {
        let m = m_of(&p.b1, &pm, gamma)?;
        let s = symmetrize(&(&weights.r + b2.transpose() * &m * b2));
        let f = -solve_spd(&s, &(b2.transpose() * &m * a))?;
        let acl = a + b2 * &f;
        pm = symmetrize(
            &(&weights.q + f.transpose() * &weights.r * &f + acl.transpose() * &m * &acl),
        );
        q += trace(&(m * &w));
        gains[tau] = f;
    }
    Ok(DpOracle {
        value_per_step: q / horizon as f64,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{from_rows, scalar, zeros};
    use crate::of_synthesis::lqg_controller;
    use crate::plant::lq_plant;
    use crate::sf_synthesis::{lqr, solve_soft_sf};

    fn integrator(rho: f64) -> (Plant, LqWeights) {
        let w = LqWeights::identity(2, 1);
        let p = lq_plant(
            from_rows(&[&[1.0, rho], &[0.0, 1.0]]),
            eye(2),
            eye(2),
            from_rows(&[&[0.0], &[1.0]]),
            &w,
            eye(2),
            zeros(2, 2),
            zeros(2, 2),
        )
        .unwrap();
        (p, w)
    }

    fn lag(a: f64) -> ClosedLoop {
        ClosedLoop {
            a_cl: scalar(a),
            b0_cl: scalar(1.0),
            b1_cl: scalar(1.0),
            c_cl: scalar(1.0),
            d0_cl: zeros(1, 1),
            d1_cl: zeros(1, 1),
        }
    }

    /// Frequency-grid estimate of the peak gain.
    fn grid_norm(a: &Mat, b: &Mat, c: &Mat, d: &Mat, points: usize) -> f64 {
        use nalgebra::Complex;
        let n = a.nrows();
        let ac = a.map(|x| Complex::new(x, 0.0));
        let bc = b.map(|x| Complex::new(x, 0.0));
        let cc = c.map(|x| Complex::new(x, 0.0));
        let dc = d.map(|x| Complex::new(x, 0.0));
        (0..=points)
            .map(|i| {
                let w = std::f64::consts::PI * i as f64 / points as f64;
                let z = Complex::new(w.cos(), w.sin());
                let m = nalgebra::DMatrix::<Complex<f64>>::identity(n, n) * z - &ac;
                let t = &cc * m.try_inverse().unwrap() * &bc + &dc;
                t.singular_values().max()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn nominal_cost_trivial_cases() {
        let mut cl = lag(0.5);
        assert!((nominal_cost_cl(&cl).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        cl.c_cl = zeros(1, 1);
        assert_eq!(nominal_cost_cl(&cl).unwrap(), 0.0);
        cl.a_cl = scalar(1.2);
        assert!(matches!(
            nominal_cost_cl(&cl),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn hinf_norm_trivial_cases() {
        let d = from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let n = hinf_norm_ss(&zeros(1, 1), &zeros(1, 2), &zeros(2, 1), &d, 1e-12).unwrap();
        assert!((n - 3.0).abs() < 1e-12);
        let n = hinf_norm(&lag(0.5), 1e-10).unwrap();
        assert!((n - 2.0).abs() < 1e-8, "{n}");
    }

    #[test]
    fn hinf_norm_matches_frequency_grid() {
        let (p, w) = integrator(0.5);
        let (_, f) = lqr(&p, &w).unwrap();
        let cl = close_loop(&p, &Controller::static_gain(f)).unwrap();
        let n = hinf_norm(&cl, 1e-10).unwrap();
        let g = grid_norm(&cl.a_cl, &cl.b1_cl, &cl.c_cl, &cl.d1_cl, 10_000);
        assert!(g <= n * (1.0 + 1e-8));
        assert!((n - g) / n < 1e-5, "{n} vs grid {g}");
    }

    #[test]
    fn adversarial_cost_limits_and_order() {
        let (p, w) = integrator(0.5);
        let k = lqg_controller(&p, &w).unwrap();
        let nc = nominal_cost(&p, &k).unwrap();
        let tiny = adversarial_cost(&p, &k, 1e-9, 1e-10).unwrap();
        assert!(
            tiny.ac >= nc && (tiny.ac - nc) / nc < 1e-3,
            "{} vs {nc}",
            tiny.ac
        );
        let acs: Vec<f64> = [0.01, 0.05, 0.1]
            .iter()
            .map(|&e| adversarial_cost(&p, &k, e, 1e-10).unwrap().ac)
            .collect();
        assert!(
            nc <= acs[0] && acs[0] <= acs[1] && acs[1] <= acs[2],
            "{acs:?}"
        );
    }

    #[test]
    fn adversarial_cost_is_dual_minimum() {
        // tr(J_γ) + γ²ε is minimized where the power equals ε.
        let cl = lag(0.5);
        let r = adversarial_cost_cl(&cl, 0.1, 1e-12).unwrap();
        assert!((r.power - 0.1).abs() < 1e-6);
        for g in [r.gamma * 0.98, r.gamma * 1.02, r.gamma * 1.5] {
            let v = soft_trace_value(&cl, g).unwrap() + g * g * 0.1;
            assert!(v >= r.ac - 1e-9, "γ {g}: {v} < {}", r.ac);
        }
    }

    #[test]
    fn fixed_policy_matches_best_response() {
        let (p, w) = integrator(0.5);
        let g = solve_soft_sf(&p, &w, 4.0).unwrap();
        let cl = close_loop(&p, &Controller::static_gain(g.f_gamma.clone())).unwrap();
        let v = fixed_policy_objective(&cl, &g.e_gamma, &g.delta_gamma, 4.0).unwrap();
        assert!(
            (v - g.objective).abs() < 1e-8 * g.objective,
            "{v} vs {}",
            g.objective
        );
    }

    #[test]
    fn dp_single_step() {
        let (p, w) = integrator(0.5);
        let o = dp_oracle_sf(&p, &w, 4.0, 1).unwrap();
        let m = m_of(&p.b1, &w.q, 4.0).unwrap();
        assert!((o.value_per_step - trace(&(m * &p.b0 * p.b0.transpose()))).abs() < 1e-12);
    }

    #[test]
    fn dp_converges_to_stationary_game() {
        let (p, w) = integrator(0.5);
        let g = solve_soft_sf(&p, &w, 4.0).unwrap();
        let o = dp_oracle_sf(&p, &w, 4.0, 2000).unwrap();
        assert!((o.value_per_step - g.objective).abs() / g.objective < 0.01);
        let o = dp_oracle_sf(&p, &w, 4.0, 500).unwrap();
        assert!((&o.gains[0] - &g.f_gamma).amax() < 1e-6);
    }

    #[test]
    fn dp_large_gamma_is_lqr_recursion() {
        let (p, w) = integrator(0.5);
        let o = dp_oracle_sf(&p, &w, 1e6, 400).unwrap();
        let (_, f) = lqr(&p, &w).unwrap();
        assert!((&o.gains[0] - f).amax() < 1e-6);
    }

    #[test]
    fn dp_flags_infeasible_gamma() {
        let (p, w) = integrator(0.5);
        assert!(dp_oracle_sf(&p, &w, 1.0, 50).unwrap_err().is_infeasible());
    }
}
