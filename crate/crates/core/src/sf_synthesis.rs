//! Soft-constrained state feedback: the game Riccati solution `P_γ`, the
//! controller/adversary gains and the feasibility boundary `γ∞`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, block_diag, eye, hstack, solve_spd, symmetrize, trace, Mat};
use crate::plant::{LqWeights, Plant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfGainSet {
    pub gamma: f64,
    pub p_gamma: Mat,
    pub m_gamma: Mat,
    pub f_gamma: Mat,
    pub e_gamma: Mat,
    pub delta_gamma: Mat,
    pub psi: Mat,
    /// `tr(M_γ B₀B₀ᵀ)`, the soft objective under the saddle point.
    pub objective: f64,
}

/// Static adversary `δ_t = E x_t + Δ w_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryPolicy {
    pub e: Mat,
    pub delta: Mat,
}

/// `γ²I − B₁ᵀPB₁`, the maximizer's curvature.
pub fn adversary_curvature(b1: &Mat, p: &Mat, gamma: f64) -> Mat {
    symmetrize(&(eye(b1.ncols()) * (gamma * gamma) - b1.transpose() * p * b1))
}

/// `M = P + PB₁(γ²I − B₁ᵀPB₁)⁻¹B₁ᵀP`.
pub fn m_of(b1: &Mat, p: &Mat, gamma: f64) -> Result<Mat> {
    if b1.ncols() == 0 {
        return Ok(p.clone());
    }
    let phi = adversary_curvature(b1, p, gamma);
    let pb1 = p * b1;
    let x = solve_spd(&phi, &pb1.transpose()).map_err(|_| Error::InfeasibleGamma {
        gamma,
        detail: "γ²I − B₁ᵀPB₁ is not positive definite".into(),
    })?;
    Ok(symmetrize(&(p + &pb1 * x)))
}

/// Solves the game Riccati equation at level `γ` and forms every gain.
/// Only `A, B₀, B₁, B₂` of the plant are used; the measurement channel is
/// ignored, so this is also the first step of output-feedback synthesis.
pub fn solve_soft_sf(p: &Plant, weights: &LqWeights, gamma: f64) -> Result<SfGainSet> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    p.validate()?;
    let (nd, nu) = (p.n_delta(), p.n_u());
    if weights.q.nrows() != p.n_x() || weights.r.nrows() != nu {
        return Err(Error::Dimension("weights do not match plant".into()));
    }
    let b = hstack(&[&p.b1, &p.b2]);
    let r_block = block_diag(&(-eye(nd) * (gamma * gamma)), &weights.r);
    let p_gamma =
        matops::dare_indefinite(&p.a, &b, &weights.q, &r_block, nd).map_err(|e| match e {
            Error::InfeasibleGamma { detail, .. } => Error::InfeasibleGamma { gamma, detail },
            other => other,
        })?;
    let m_gamma = m_of(&p.b1, &p_gamma, gamma)?;
    let s = symmetrize(&(&weights.r + p.b2.transpose() * &m_gamma * &p.b2));
    let f_gamma = -solve_spd(&s, &(p.b2.transpose() * &m_gamma * &p.a))?;
    let phi = adversary_curvature(&p.b1, &p_gamma, gamma);
    let (e_gamma, delta_gamma) = if nd == 0 {
        (Mat::zeros(0, p.n_x()), Mat::zeros(0, p.n_w()))
    } else {
        let b1tp = p.b1.transpose() * &p_gamma;
        (
            solve_spd(&phi, &(&b1tp * (&p.a + &p.b2 * &f_gamma)))?,
            solve_spd(&phi, &(&b1tp * &p.b0))?,
        )
    };
    let psi = symmetrize(&(b.transpose() * &p_gamma * &b + r_block));
    let objective = trace(&(&m_gamma * &p.b0 * p.b0.transpose()));
    Ok(SfGainSet {
        gamma,
        p_gamma,
        m_gamma,
        f_gamma,
        e_gamma,
        delta_gamma,
        psi,
        objective,
    })
}

pub fn is_feasible_sf(p: &Plant, weights: &LqWeights, gamma: f64) -> bool {
    solve_soft_sf(p, weights, gamma).is_ok()
}

/// Smallest feasible `γ` by bisection. The lower end starts at 1e-6 and the
/// upper end doubles from 1 until feasible (capped at 1e8).
pub fn gamma_inf(p: &Plant, weights: &LqWeights, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    bisect_feasibility(|g| is_feasible_sf(p, weights, g), tol)
}

/// Shared feasibility bisection: returns the bracket midpoint once the
/// bracket `[infeasible, feasible]` is narrower than `tol`.
pub fn bisect_feasibility(feasible: impl Fn(f64) -> bool, tol: f64) -> Result<f64> {
    let mut lo = 1e-6;
    if feasible(lo) {
        return Ok(lo);
    }
    let mut hi = 1.0;
    while !feasible(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Search("no feasible gamma below 1e8".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn adversary_policy_sf(g: &SfGainSet) -> AdversaryPolicy {
    AdversaryPolicy {
        e: g.e_gamma.clone(),
        delta: g.delta_gamma.clone(),
    }
}

/// LQR solution `(P⋆, F⋆)` of the nominal problem.
pub fn lqr(p: &Plant, weights: &LqWeights) -> Result<(Mat, Mat)> {
    let ps = matops::dare(&p.a, &p.b2, &weights.q, &weights.r)?;
    let s = symmetrize(&(&weights.r + p.b2.transpose() * &ps * &p.b2));
    let f = -solve_spd(&s, &(p.b2.transpose() * &ps * &p.a))?;
    Ok((ps, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{from_rows, scalar, zeros};
    use crate::plant::lq_plant;

    pub(crate) fn integrator(rho: f64) -> (Plant, LqWeights) {
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

    fn scalar_zero_a() -> (Plant, LqWeights) {
        let w = LqWeights::identity(1, 1);
        let p = lq_plant(
            scalar(0.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            &w,
            scalar(1.0),
            zeros(1, 1),
            zeros(1, 1),
        )
        .unwrap();
        (p, w)
    }

    #[test]
    fn large_gamma_recovers_lqr() {
        let (p, w) = integrator(0.5);
        let g = solve_soft_sf(&p, &w, 1e6).unwrap();
        let (_, f) = lqr(&p, &w).unwrap();
        assert!((&g.f_gamma - f).norm() <= 1e-4);
        assert!(g.delta_gamma.norm() < 1e-10);
    }

    #[test]
    fn zero_dynamics_closed_form() {
        let (p, w) = scalar_zero_a();
        let g = solve_soft_sf(&p, &w, 2.0).unwrap();
        assert!((g.p_gamma[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(g.e_gamma[(0, 0)].abs() < 1e-12);
        assert!(g.f_gamma[(0, 0)].abs() < 1e-12);
        assert!((g.delta_gamma[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        // M = 1 + 1/(4-1)
        assert!((g.objective - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gains_match_psi_inverse() {
        let (p, w) = integrator(0.5);
        let g = solve_soft_sf(&p, &w, 4.0).unwrap();
        let b = hstack(&[&p.b1, &p.b2]);
        let ef = -matops::solve(&g.psi, &(b.transpose() * &g.p_gamma * &p.a)).unwrap();
        let stacked = crate::matops::vstack(&[&g.e_gamma, &g.f_gamma]);
        assert!((ef - stacked).amax() < 1e-9);
        let acl = &p.a + &p.b2 * &g.f_gamma;
        assert!(matops::spectral_radius(&acl).unwrap() < 1.0);
        let acl2 = &acl + &p.b1 * &g.e_gamma;
        assert!(matops::spectral_radius(&acl2).unwrap() < 1.0);
    }

    #[test]
    fn gamma_inf_scalar_zero_dynamics() {
        let (p, w) = scalar_zero_a();
        let gi = gamma_inf(&p, &w, 1e-6).unwrap();
        assert!((gi - 1.0).abs() < 1e-5, "{gi}");
        assert!(is_feasible_sf(&p, &w, gi + 1e-6));
        assert!(!is_feasible_sf(&p, &w, gi - 1e-6));
    }

    #[test]
    fn gamma_inf_bracket_contract() {
        let (p, w) = integrator(0.5);
        let tol = 1e-6;
        let gi = gamma_inf(&p, &w, tol).unwrap();
        assert!(is_feasible_sf(&p, &w, gi + tol));
        assert!(!is_feasible_sf(&p, &w, gi - tol));
    }

    #[test]
    fn infeasible_below_boundary() {
        let (p, w) = scalar_zero_a();
        assert!(solve_soft_sf(&p, &w, 0.9).unwrap_err().is_infeasible());
    }
}
