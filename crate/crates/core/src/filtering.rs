//! State prediction as control of the estimation-error dynamics: Kalman
//! predictor, adversarially robust predictor and the scalar closed form.
//!
//! With `e = x − x̂` and the correction `u = L (y − C₂x̂)` the error obeys
//! `e⁺ = A e + B₀ w + B₁ δ + u` with innovation `C₂ e + D₂₀ w + D₂₁ δ`, so
//! the predictor is a static output-feedback gain on that plant with
//! `z = e`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, eye, solve_right, zeros, Mat, RiccatiOpts};
use crate::of_synthesis::{solve_ln_at, InitPath, LnOptions, LnProblem};
use crate::plant::{detectable, Plant};

/// Error-dynamics plant: `B₂ = I`, `C₁ = I`, `D₁₂ = 0`, zero feedthrough
/// from the disturbances to `z`, measurement channel unchanged.
pub fn error_plant(p: &Plant) -> Result<Plant> {
    p.validate()?;
    let n = p.n_x();
    let e = Plant {
        a: p.a.clone(),
        b0: p.b0.clone(),
        b1: p.b1.clone(),
        b2: eye(n),
        c1: eye(n),
        c2: p.c2.clone(),
        d10: zeros(n, p.n_w()),
        d11: zeros(n, p.n_delta()),
        d12: zeros(n, n),
        d20: p.d20.clone(),
        d21: p.d21.clone(),
    };
    e.validate()?;
    Ok(e)
}

/// `D₂₁ = 0`: the adversary does not corrupt the measurement and the `L`
/// step has a Kalman-form minimizer.
pub fn closed_form_eligible(p: &Plant) -> bool {
    p.d21.amax() == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanGain {
    pub l: Mat,
    /// Steady-state prediction error covariance `Σ⋆`.
    pub sigma: Mat,
}

/// Steady-state Kalman predictor `L⋆ = −(AΣ⋆C₂ᵀ + B₀D₂₀ᵀ)(C₂Σ⋆C₂ᵀ + D₂₀D₂₀ᵀ)⁻¹`.
pub fn kalman_gain(p: &Plant) -> Result<KalmanGain> {
    p.validate()?;
    if !detectable(&p.a, &p.c2)? {
        return Err(Error::Assumption("(A, C₂) is not detectable".into()));
    }
    let v = &p.d20 * p.d20.transpose();
    if !matops::pd_check(&v, 0.0) {
        return Err(Error::Assumption("D₂₀D₂₀ᵀ is singular".into()));
    }
    let w = &p.b0 * p.b0.transpose();
    let s = &p.b0 * p.d20.transpose();
    let sigma = matops::dare_cross(
        &p.a.transpose(),
        &p.c2.transpose(),
        &w,
        &v,
        &s,
        0,
        &RiccatiOpts::default(),
    )?;
    let den = &p.c2 * &sigma * p.c2.transpose() + &v;
    let l = -solve_right(&(&p.a * &sigma * p.c2.transpose() + s), &den)?;
    Ok(KalmanGain { l, sigma })
}

/// Alternating-solver problem of the predictor at level `γ`.
pub fn filter_problem(p: &Plant, gamma: f64) -> LnProblem {
    let n = p.n_x();
    LnProblem {
        a: p.a.clone(),
        b0: p.b0.clone(),
        b1: p.b1.clone(),
        c1: eye(n),
        d10: zeros(n, p.n_w()),
        d11: zeros(n, p.n_delta()),
        c2: p.c2.clone(),
        d20: p.d20.clone(),
        d21: p.d21.clone(),
        scale: gamma * gamma,
        with_n: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LStep {
    /// Closed form when eligible, generic otherwise.
    Auto,
    Generic,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterGainSet {
    pub gamma: f64,
    pub l_gamma: Mat,
    pub y_gamma: Mat,
    pub sigma_gamma: Mat,
    pub phi: Mat,
    pub iterations: usize,
    pub converged: bool,
    pub last_gap: f64,
    pub init: InitPath,
}

pub fn robust_filter(p: &Plant, gamma: f64, opts: &LnOptions) -> Result<FilterGainSet> {
    robust_filter_with(p, gamma, opts, LStep::Auto)
}

pub fn robust_filter_with(
    p: &Plant,
    gamma: f64,
    opts: &LnOptions,
    step: LStep,
) -> Result<FilterGainSet> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    p.validate()?;
    let closed = match step {
        LStep::Auto => closed_form_eligible(p),
        LStep::Generic => false,
        LStep::ClosedForm => {
            if !closed_form_eligible(p) {
                return Err(Error::Domain("closed-form L step needs D₂₁ = 0".into()));
            }
            true
        }
    };
    let opts = LnOptions {
        closed_form_l: closed,
        ..*opts
    };
    let build = |g: f64| Ok(filter_problem(p, g));
    let (_, sol, init) = solve_ln_at(gamma, &build, &opts).map_err(|e| match e {
        Error::InfeasibleGamma { detail, .. } => Error::InfeasibleGamma { gamma, detail },
        other => other,
    })?;
    Ok(FilterGainSet {
        gamma,
        l_gamma: sol.l,
        y_gamma: sol.y,
        sigma_gamma: sol.sigma,
        phi: sol.phi,
        iterations: sol.iterations,
        converged: sol.converged,
        last_gap: sol.last_gap,
        init,
    })
}

/// Nominal error covariance `Σ_L` of the predictor with gain `l`.
pub fn filter_nominal_cov(p: &Plant, l: &Mat) -> Result<Mat> {
    let acl = &p.a + l * &p.c2;
    let bcl = &p.b0 + l * &p.d20;
    matops::stationary_cov(&acl, &(&bcl * bcl.transpose()))
}

/// Excess nominal cost of `l` over the Kalman gain, computed directly and
/// through `tr(dlyap(A + LC₂, I)(L − L⋆)(D₂₀D₂₀ᵀ + C₂Σ⋆C₂ᵀ)(L − L⋆)ᵀ)`.
pub fn nominal_gap_identity(p: &Plant, l: &Mat) -> Result<(f64, f64)> {
    let k = kalman_gain(p)?;
    let direct = matops::trace(&filter_nominal_cov(p, l)?) - matops::trace(&k.sigma);
    let acl = &p.a + l * &p.c2;
    let g = matops::dlyap(&acl, &eye(p.n_x()))?;
    let dl = l - &k.l;
    let v = &p.d20 * p.d20.transpose() + &p.c2 * &k.sigma * p.c2.transpose();
    let identity = matops::trace(&(g * &dl * v * dl.transpose()));
    Ok((direct, identity))
}

// ---------------------------------------------------------------------------
// Scalar predictor: A = a, B₀ = B₁ = [1 0], C₂ = c, D₂₀ = D₂₁ = [0 1]

pub fn scalar_plant(a: f64, c: f64) -> Result<Plant> {
    let row = |x: f64, y: f64| Mat::from_row_slice(1, 2, &[x, y]);
    let p = Plant {
        a: matops::scalar(a),
        b0: row(1.0, 0.0),
        b1: row(1.0, 0.0),
        b2: matops::scalar(1.0),
        c1: matops::scalar(1.0),
        c2: matops::scalar(c),
        d10: zeros(1, 2),
        d11: zeros(1, 2),
        d12: zeros(1, 1),
        d20: row(0.0, 1.0),
        d21: row(0.0, 1.0),
    };
    p.validate()?;
    Ok(p)
}

/// Scalar Kalman predictor `(Σ⋆, L⋆)` for unit process and measurement noise.
pub fn scalar_kalman(a: f64, c: f64) -> Result<(f64, f64)> {
    if c == 0.0 {
        if a.abs() >= 1.0 {
            return Err(Error::Assumption(
                "c = 0 with |a| ≥ 1 is not detectable".into(),
            ));
        }
        return Ok((1.0 / (1.0 - a * a), 0.0));
    }
    // c²Σ² + (1 − a² − c²)Σ − 1 = 0, positive root.
    let b = 1.0 - a * a - c * c;
    let sigma = (-b + (b * b + 4.0 * c * c).sqrt()) / (2.0 * c * c);
    Ok((sigma, -a * sigma * c / (c * c * sigma + 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFilterSolution {
    pub a: f64,
    pub c: f64,
    pub gamma: f64,
    pub l_gamma: f64,
    pub sigma_gamma: f64,
    pub y_gamma: f64,
    pub sigma_star: f64,
    pub l_star: f64,
    /// `L_γ − L(Σ_γ)` where `L(Σ) = −aΣc/(c²Σ + 1)`.
    pub xi: f64,
    pub xi_bound: f64,
    /// Whether `γ² ≥ max{2ΣY(a² − c²), 32Σ²Ya²c², Y/2}` holds, under which
    /// `|ξ| ≤ xi_bound`.
    pub xi_condition: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual of the stationarity condition
/// `γ²(L(1 + c²Σ) + acΣ) + ((a² − c²)L + ac(L² − 1))ΣY`.
pub fn scalar_stationarity(a: f64, c: f64, gamma: f64, l: f64, sigma: f64, y: f64) -> f64 {
    let g2 = gamma * gamma;
    g2 * (l * (1.0 + c * c * sigma) + a * c * sigma)
        + ((a * a - c * c) * l + a * c * (l * l - 1.0)) * sigma * y
}

/// Roots of the stationarity condition in `L` for fixed `(Σ, Y)`.
fn stationarity_roots(a: f64, c: f64, gamma: f64, sigma: f64, y: f64) -> Vec<f64> {
    let g2 = gamma * gamma;
    let qa = a * c * sigma * y;
    let qb = g2 * (1.0 + c * c * sigma) + (a * a - c * c) * sigma * y;
    let qc = a * c * sigma * (g2 - y);
    if qa.abs() <= 1e-300 {
        return if qb == 0.0 { vec![] } else { vec![-qc / qb] };
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    // Cancellation-free pair.
    let s = -0.5 * (qb + qb.signum() * disc.sqrt());
    let mut r = vec![s / qa];
    if s != 0.0 {
        r.push(qc / s);
    }
    r
}

fn pick_root(a: f64, c: f64, roots: &[f64]) -> Result<f64> {
    roots
        .iter()
        .copied()
        .filter(|l| (a + l * c).abs() < 1.0)
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
        .ok_or_else(|| Error::WrongRoot(format!("no root with |a + Lc| < 1 among {roots:?}")))
}

/// Scalar robust predictor by alternating the `(Y, Σ)` equations with the
/// explicit stabilizing root for `L`.
pub fn scalar_filter_solution(
    a: f64,
    c: f64,
    gamma: f64,
    k_iters: usize,
    tol: f64,
) -> Result<ScalarFilterSolution> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let (sigma_star, l_star) = scalar_kalman(a, c)?;
    let p = scalar_plant(a, c)?;
    let prob = filter_problem(&p, gamma);
    let eval = |l: f64| -> Result<(f64, f64)> {
        let t = prob.tilde(&matops::scalar(l), &zeros(1, 1));
        let y = prob.y_step(&t)?;
        let s = prob.sigma_step(&t, &y)?;
        Ok((y[(0, 0)], s[(0, 0)]))
    };
    // The Kalman gain can leave the adversary unpriced at small γ; the
    // generic solver then supplies a feasible start.
    let (mut l, (mut y, mut sigma)) = match eval(l_star) {
        Ok(ys) => (l_star, ys),
        Err(e) if e.is_infeasible() => {
            let l0 = robust_filter(&p, gamma, &LnOptions::default())?.l_gamma[(0, 0)];
            (l0, eval(l0)?)
        }
        Err(e) => return Err(e),
    };
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..k_iters {
        iterations = it + 1;
        let l_new = pick_root(a, c, &stationarity_roots(a, c, gamma, sigma, y))?;
        let gap = (l_new - l).abs();
        l = l_new;
        (y, sigma) = eval(l)?;
        if gap <= tol * (1.0 + l.abs()) {
            converged = true;
            break;
        }
    }
    let xi = l + a * sigma * c / (c * c * sigma + 1.0);
    let g2 = gamma * gamma;
    let xi_condition = g2
        >= (2.0 * sigma * y * (a * a - c * c))
            .max(32.0 * sigma * sigma * y * a * a * c * c)
            .max(y / 2.0);
    let xi_bound = 64.0
        * a.abs()
        * c.abs()
        * (sigma * y / g2)
        * (sigma * (a * a - c * c).abs() + 1.0 + (a * c * sigma).powi(2));
    Ok(ScalarFilterSolution {
        a,
        c,
        gamma,
        l_gamma: l,
        sigma_gamma: sigma,
        y_gamma: y,
        sigma_star,
        l_star,
        xi,
        xi_bound,
        xi_condition,
        iterations,
        converged,
    })
}

/// Nominal error variance `(1 + L²)/(1 − (a + Lc)²)` of a scalar predictor.
pub fn scalar_nominal_var(a: f64, c: f64, l: f64) -> Result<f64> {
    let at = a + l * c;
    if at.abs() >= 1.0 {
        return Err(Error::Instability { rho: at.abs() });
    }
    Ok((1.0 + l * l) / (1.0 - at * at))
}
