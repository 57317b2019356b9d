//! Soft-constrained output feedback. The state-feedback game solution is
//! folded into a transformed plant `Ĝ`, after which an estimator pair
//! `(L, N)` is found by alternating a Riccati solve, a Lyapunov solve and a
//! convex minimization.
//!
//! The alternating core ([`LnProblem`]) is written once for any plant of the
//! shape `[C₁ D₁₁ D₁₀; A B₁ B₀]` with measurement `[C₂ D₂₁ D₂₀]` and
//! adversary price `s` (`Φ = sI − D̃₁₁ᵀD̃₁₁ − B̃₁ᵀYB̃₁`). Output feedback uses
//! `s = 1` on `Ĝ`; the filter uses `s = γ²` on the error plant without `N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{
    self, block_diag, chol, eye, fro, hstack, inv, is_finite, solve_right, solve_spd, symmetrize,
    trace, vstack, zeros, Mat, RiccatiOpts,
};
use crate::plant::{Controller, LqWeights, Plant};
use crate::sf_synthesis::{solve_soft_sf, SfGainSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiFactorization {
    pub t11: Mat,
    pub t21: Mat,
    pub t22: Mat,
}

impl PsiFactorization {
    /// The block triangular factor `T = [T₁₁ 0; T₂₁ T₂₂]`.
    pub fn t(&self) -> Mat {
        let (nd, nu) = (self.t11.nrows(), self.t22.nrows());
        vstack(&[
            &hstack(&[&self.t11, &zeros(nd, nu)]),
            &hstack(&[&self.t21, &self.t22]),
        ])
    }

    /// `Tᵀ diag(−I, I) T`.
    pub fn reconstruct(&self) -> Mat {
        let t = self.t();
        let (nd, nu) = (self.t11.nrows(), self.t22.nrows());
        let s = block_diag(&(-eye(nd)), &eye(nu));
        t.transpose() * s * t
    }
}

/// Factors `Ψ = Tᵀ diag(−I, I) T` by Cholesky on `Ψ₂₂` and on the Schur
/// complement `T₂₁ᵀT₂₁ − Ψ₁₁`. Both diagonal factors come out upper
/// triangular.
pub fn factor_psi(psi: &Mat, n_delta: usize, n_u: usize) -> Result<PsiFactorization> {
    let n = n_delta + n_u;
    if psi.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "psi is {:?}, expected {n}x{n}",
            psi.shape()
        )));
    }
    let psi = symmetrize(psi);
    let p22 = psi.view((n_delta, n_delta), (n_u, n_u)).into_owned();
    let p21 = psi.view((n_delta, 0), (n_u, n_delta)).into_owned();
    let p11 = psi.view((0, 0), (n_delta, n_delta)).into_owned();
    let l22 =
        chol(&p22).map_err(|_| Error::Factorization("Ψ₂₂ is not positive definite".into()))?;
    let t22 = l22.transpose();
    // T₂₁ = T₂₂⁻ᵀΨ₂₁ = L₂₂⁻¹Ψ₂₁.
    let t21 = l22
        .solve_lower_triangular(&p21)
        .ok_or_else(|| Error::Factorization("singular Ψ₂₂ factor".into()))?;
    let schur = symmetrize(&(t21.transpose() * &t21 - p11));
    let t11 = if n_delta == 0 {
        zeros(0, 0)
    } else {
        chol(&schur)
            .map_err(|_| Error::Factorization("T₂₁ᵀT₂₁ − Ψ₁₁ is not positive definite".into()))?
            .transpose()
    };
    Ok(PsiFactorization { t11, t21, t22 })
}

/// The transformed plant in which the state-feedback saddle point has been
/// absorbed. `D̂₁₂ = I` and `D̂₁₀ = 0`.
pub fn build_g_hat(p: &Plant, g: &SfGainSet, f: &PsiFactorization) -> Result<Plant> {
    let t11_inv = inv(&f.t11)?;
    let t22_inv = inv(&f.t22)?;
    let nu = p.n_u();
    let gh = Plant {
        a: &p.a + &p.b1 * &g.e_gamma,
        b0: &p.b0 + &p.b1 * &g.delta_gamma,
        b1: &p.b1 * &t11_inv,
        b2: &p.b2 * &t22_inv,
        c1: -(&f.t22 * &g.f_gamma),
        c2: &p.c2 + &p.d21 * &g.e_gamma,
        d10: zeros(nu, p.n_w()),
        d11: &f.t21 * &t11_inv,
        d12: eye(nu),
        d20: &p.d20 + &p.d21 * &g.delta_gamma,
        d21: &p.d21 * &t11_inv,
    };
    gh.validate()?;
    Ok(gh)
}

// ---------------------------------------------------------------------------
// Alternating (L, N) core

/// Estimator-synthesis problem `G(K) = G₀ + K H`, `K = [N; L]`.
#[derive(Debug, Clone)]
pub struct LnProblem {
    pub a: Mat,
    pub b0: Mat,
    pub b1: Mat,
    pub c1: Mat,
    pub d10: Mat,
    pub d11: Mat,
    pub c2: Mat,
    pub d20: Mat,
    pub d21: Mat,
    /// Adversary price in `Φ = sI − …`.
    pub scale: f64,
    /// When false, `N` is pinned to zero.
    pub with_n: bool,
}

/// Tilde-system for a given `(L, N)`.
#[derive(Debug, Clone)]
pub struct Tilde {
    pub a: Mat,
    pub b0: Mat,
    pub b1: Mat,
    pub c1: Mat,
    pub d10: Mat,
    pub d11: Mat,
}

#[derive(Debug, Clone, Copy)]
pub struct LnOptions {
    pub k_iters: usize,
    /// Outer convergence: `max(‖ΔL‖, ‖ΔN‖) ≤ tol (1 + ‖L‖ + ‖N‖)`.
    pub tol: f64,
    /// Inner stop: gradient norm relative to `1 + |f|`.
    pub inner_tol: f64,
    pub inner_iters: usize,
    /// Use the Kalman-form minimizer for the `L` step when `N` is absent
    /// and the adversary does not enter the measurement (`D₂₁ = 0`).
    pub closed_form_l: bool,
}

impl Default for LnOptions {
    fn default() -> Self {
        LnOptions {
            k_iters: 200,
            tol: 1e-8,
            inner_tol: 1e-11,
            inner_iters: 100,
            closed_form_l: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LnSolution {
    pub l: Mat,
    pub n: Mat,
    pub y: Mat,
    pub sigma: Mat,
    pub phi: Mat,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_gap: f64,
}

impl LnProblem {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_z(&self) -> usize {
        self.c1.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.c2.nrows()
    }
    pub fn n_delta(&self) -> usize {
        self.b1.ncols()
    }
    pub fn n_w(&self) -> usize {
        self.b0.ncols()
    }

    fn g0(&self) -> Mat {
        vstack(&[
            &hstack(&[&self.c1, &self.d11, &self.d10]),
            &hstack(&[&self.a, &self.b1, &self.b0]),
        ])
    }

    fn h(&self) -> Mat {
        hstack(&[&self.c2, &self.d21, &self.d20])
    }

    fn stack_k(&self, l: &Mat, n: &Mat) -> Mat {
        vstack(&[n, l])
    }

    fn split_k(&self, k: &Mat) -> (Mat, Mat) {
        let nz = self.n_z();
        let n = k.rows(0, nz).into_owned();
        let l = k.rows(nz, self.n_x()).into_owned();
        (l, n)
    }

    pub fn tilde(&self, l: &Mat, n: &Mat) -> Tilde {
        Tilde {
            a: &self.a + l * &self.c2,
            b0: &self.b0 + l * &self.d20,
            b1: &self.b1 + l * &self.d21,
            c1: &self.c1 + n * &self.c2,
            d10: &self.d10 + n * &self.d20,
            d11: &self.d11 + n * &self.d21,
        }
    }

    pub fn phi(&self, t: &Tilde, y: &Mat) -> Mat {
        symmetrize(
            &(eye(self.n_delta()) * self.scale
                - t.d11.transpose() * &t.d11
                - t.b1.transpose() * y * &t.b1),
        )
    }

    /// Riccati step: `Y = C̃₁ᵀC̃₁ + ÃᵀYÃ + (D̃₁₁ᵀC̃₁ + B̃₁ᵀYÃ)ᵀΦ⁻¹(·)`.
    pub fn y_step(&self, t: &Tilde) -> Result<Mat> {
        let q = t.c1.transpose() * &t.c1;
        if self.n_delta() == 0 {
            return matops::dlyap(&t.a, &q);
        }
        let r = t.d11.transpose() * &t.d11 - eye(self.n_delta()) * self.scale;
        let s = t.c1.transpose() * &t.d11;
        matops::dare_generalized(&t.a, &t.b1, &q, &r, &s)
    }

    /// Worst-case feedback `δ = Φ⁻¹(Γ_x x + Γ_w w)` of the tilde system.
    fn adversary(&self, t: &Tilde, y: &Mat) -> Result<(Mat, Mat, Mat)> {
        let phi = self.phi(t, y);
        let nd = self.n_delta();
        if nd == 0 {
            return Ok((phi, zeros(0, self.n_x()), zeros(0, self.n_w())));
        }
        let gx = t.d11.transpose() * &t.c1 + t.b1.transpose() * y * &t.a;
        let gw = t.d11.transpose() * &t.d10 + t.b1.transpose() * y * &t.b0;
        let kx = solve_spd(&phi, &gx).map_err(|_| boundary_err(self.scale))?;
        let kw = solve_spd(&phi, &gw).map_err(|_| boundary_err(self.scale))?;
        Ok((phi, kx, kw))
    }

    /// Lyapunov step on the adversary-closed tilde system.
    pub fn sigma_step(&self, t: &Tilde, y: &Mat) -> Result<Mat> {
        let (_, kx, kw) = self.adversary(t, y)?;
        let abar = &t.a + &t.b1 * kx;
        let bbar = &t.b0 + &t.b1 * kw;
        matops::stationary_cov(&abar, &(&bbar * bbar.transpose()))
    }

    /// Trace objective with `(Y, Σ)` frozen; `Err(Boundary)` when `Φ ⊁ 0`.
    pub fn objective(&self, l: &Mat, n: &Mat, y: &Mat, sigma: &Mat) -> Result<f64> {
        Ok(self.objective_and_grad(l, n, y, sigma, false)?.0)
    }

    /// Objective and its gradient with respect to the stacked `[N; L]`.
    /// The gradient uses the envelope theorem: the inner maximizer is held
    /// fixed at its optimum.
    fn objective_and_grad(
        &self,
        l: &Mat,
        n: &Mat,
        y: &Mat,
        sigma: &Mat,
        want_grad: bool,
    ) -> Result<(f64, Mat)> {
        let (nx, nd, nw, nz) = (self.n_x(), self.n_delta(), self.n_w(), self.n_z());
        let k = self.stack_k(l, n);
        let h = self.h();
        let g = self.g0() + &k * &h;
        let w = block_diag(&eye(nz), y);
        let gs = hstack(&[
            &g.columns(0, nx).into_owned(),
            &g.columns(nx + nd, nw).into_owned(),
        ]);
        let gr = g.columns(nx, nd).into_owned();
        let xi = block_diag(sigma, &eye(nw));
        let wgs = &w * &gs;
        let mut val = trace(&(&xi * gs.transpose() * &wgs));
        let mut rstar = zeros(nd, nx + nw);
        if nd > 0 {
            let phi = symmetrize(&(eye(nd) * self.scale - gr.transpose() * &w * &gr));
            let c = gr.transpose() * &wgs;
            rstar = solve_spd(&phi, &c).map_err(|_| Error::Boundary)?;
            if !matops::pd_check(&phi, 1e-14) {
                return Err(Error::Boundary);
            }
            val += trace(&(&xi * c.transpose() * &rstar));
        }
        if !val.is_finite() {
            return Err(Error::Boundary);
        }
        if !want_grad {
            return Ok((val, Mat::zeros(0, 0)));
        }
        let j = vstack(&[
            &hstack(&[&eye(nx), &zeros(nx, nw)]),
            &rstar,
            &hstack(&[&zeros(nw, nx), &eye(nw)]),
        ]);
        let grad = (&w * &g * &j * &xi * j.transpose() * h.transpose()) * 2.0;
        Ok((val, grad))
    }

    /// Packs the free variables: `[N; L]` or just `L`.
    fn pack(&self, l: &Mat, n: &Mat) -> Vec<f64> {
        let m = if self.with_n {
            self.stack_k(l, n)
        } else {
            l.clone()
        };
        m.iter().copied().collect()
    }

    fn unpack(&self, v: &[f64]) -> (Mat, Mat) {
        let ny = self.n_y();
        if self.with_n {
            let k = Mat::from_column_slice(self.n_z() + self.n_x(), ny, v);
            self.split_k(&k)
        } else {
            (
                Mat::from_column_slice(self.n_x(), ny, v),
                zeros(self.n_z(), ny),
            )
        }
    }

    fn grad_vec(&self, v: &[f64], y: &Mat, sigma: &Mat) -> Result<(f64, Vec<f64>)> {
        let (l, n) = self.unpack(v);
        let (f, g) = self.objective_and_grad(&l, &n, y, sigma, true)?;
        let g = if self.with_n {
            g
        } else {
            g.rows(self.n_z(), self.n_x()).into_owned()
        };
        Ok((f, g.iter().copied().collect()))
    }

    /// Analytic gradient (public for checks).
    pub fn gradient(&self, l: &Mat, n: &Mat, y: &Mat, sigma: &Mat) -> Result<Mat> {
        let (_, g) = self.objective_and_grad(l, n, y, sigma, true)?;
        Ok(if self.with_n {
            g
        } else {
            g.rows(self.n_z(), self.n_x()).into_owned()
        })
    }

    /// Minimizes the frozen-`(Y, Σ)` objective over `(L, N)` by damped
    /// Newton steps with a finite-difference Hessian of the analytic gradient.
    pub fn min_ln_step(
        &self,
        y: &Mat,
        sigma: &Mat,
        l0: &Mat,
        n0: &Mat,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Mat, Mat)> {
        let mut v = self.pack(l0, n0);
        let (mut f, mut g) = self.grad_vec(&v, y, sigma)?;
        let dim = v.len();
        for _ in 0..max_iter {
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm <= tol * (1.0 + f.abs()) {
                break;
            }
            let hess = self.fd_hessian(&v, y, sigma);
            let gv = nalgebra::DVector::from_column_slice(&g);
            let mut dir = newton_direction(hess, &gv, dim);
            let mut slope = gv.dot(&dir);
            if !(slope < 0.0) {
                dir = -gv.clone();
                slope = -gnorm * gnorm;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = v.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                if let Ok((fc, gc)) = self.grad_vec(&cand, y, sigma) {
                    if fc <= f + 1e-4 * t * slope {
                        v = cand;
                        f = fc;
                        g = gc;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // Objective is flat to machine precision along the descent
                // direction; the current point is as good as we can certify.
                break;
            }
        }
        Ok(self.unpack(&v))
    }

    fn fd_hessian(&self, v: &[f64], y: &Mat, sigma: &Mat) -> Mat {
        let dim = v.len();
        let mut h = Mat::zeros(dim, dim);
        for i in 0..dim {
            let step = 1e-5 * (1.0 + v[i].abs());
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[i] += step;
            vm[i] -= step;
            match (self.grad_vec(&vp, y, sigma), self.grad_vec(&vm, y, sigma)) {
                (Ok((_, gp)), Ok((_, gm))) => {
                    for j in 0..dim {
                        h[(j, i)] = (gp[j] - gm[j]) / (2.0 * step);
                    }
                }
                _ => {
                    // Too close to the boundary for a central difference; fall
                    // back to the identity in this column.
                    h[(i, i)] = 1.0;
                }
            }
        }
        symmetrize(&h)
    }

    pub fn closed_form_eligible(&self) -> bool {
        !self.with_n && self.d21.amax() == 0.0
    }

    /// Exact `L` minimizer when `closed_form_eligible`:
    /// `L = −(AΣC₂ᵀ + B₀D₂₀ᵀ)(C₂ΣC₂ᵀ + D₂₀D₂₀ᵀ)⁻¹`.
    pub fn closed_form_l(&self, sigma: &Mat) -> Result<Mat> {
        let den = &self.c2 * sigma * self.c2.transpose() + &self.d20 * self.d20.transpose();
        let num = &self.a * sigma * self.c2.transpose() + &self.b0 * self.d20.transpose();
        Ok(-solve_right(&num, &den)?)
    }

    /// Kalman predictor gain of `(A, C₂, B₀B₀ᵀ, D₂₀D₂₀ᵀ)` with cross term
    /// `B₀D₂₀ᵀ`, the default starting point. A tiny ridge keeps the
    /// measurement covariance invertible.
    pub fn kalman_init(&self) -> Result<Mat> {
        Ok(self.kalman_init_with(false)?.0)
    }

    /// Kalman predictor gain and the matching least-squares output
    /// feedthrough `N`. With `with_adversary` the adversary channel is
    /// treated as extra unit-intensity noise, which lands closer to the
    /// robust solution when the plain Kalman start is outside the feasible
    /// region.
    pub fn kalman_init_with(&self, with_adversary: bool) -> Result<(Mat, Mat)> {
        let ny = self.n_y();
        let (b, d, e) = if with_adversary {
            (
                hstack(&[&self.b0, &self.b1]),
                hstack(&[&self.d20, &self.d21]),
                hstack(&[&self.d10, &self.d11]),
            )
        } else {
            (self.b0.clone(), self.d20.clone(), self.d10.clone())
        };
        let mut v = &d * d.transpose();
        if !matops::pd_check(&v, 1e-12) {
            v += eye(ny) * 1e-8;
        }
        let w = &b * b.transpose();
        let s = &b * d.transpose();
        let sig = matops::dare_cross(
            &self.a.transpose(),
            &self.c2.transpose(),
            &w,
            &v,
            &s,
            0,
            &RiccatiOpts::default(),
        )?;
        let den = &self.c2 * &sig * self.c2.transpose() + &v;
        let l = -solve_right(&(&self.a * &sig * self.c2.transpose() + s), &den)?;
        let n = if self.with_n {
            -solve_right(
                &(&self.c1 * &sig * self.c2.transpose() + &e * d.transpose()),
                &den,
            )?
        } else {
            zeros(self.n_z(), ny)
        };
        Ok((l, n))
    }

    /// Algorithm-1 alternation from `(l0, n0)`.
    pub fn solve(&self, l0: Mat, n0: Mat, opts: &LnOptions) -> Result<LnSolution> {
        let mut l = l0;
        let mut n = n0;
        let mut best: Option<(f64, Mat, Mat)> = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut last_gap = f64::INFINITY;
        for it in 0..opts.k_iters {
            iterations = it + 1;
            let t = self.tilde(&l, &n);
            let y = self.y_step(&t).map_err(|e| infeasible(self.scale, e))?;
            let sigma = self
                .sigma_step(&t, &y)
                .map_err(|e| infeasible(self.scale, e))?;
            let (l_new, n_new) = if opts.closed_form_l && self.closed_form_eligible() {
                (self.closed_form_l(&sigma)?, n.clone())
            } else {
                self.min_ln_step(&y, &sigma, &l, &n, opts.inner_tol, opts.inner_iters)?
            };
            let gap = fro(&(&l_new - &l)).max(fro(&(&n_new - &n)));
            let scale = 1.0 + fro(&l_new) + fro(&n_new);
            l = l_new;
            n = n_new;
            last_gap = gap;
            if best.as_ref().is_none_or(|(bg, _, _)| gap < *bg) {
                best = Some((gap, l.clone(), n.clone()));
            }
            if gap <= opts.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            if let Some((g, bl, bn)) = best {
                l = bl;
                n = bn;
                last_gap = g;
            }
            log::warn!(
                "alternating solver stopped after {iterations} iterations, gap {last_gap:.3e}"
            );
        }
        let t = self.tilde(&l, &n);
        let y = self.y_step(&t).map_err(|e| infeasible(self.scale, e))?;
        let sigma = self
            .sigma_step(&t, &y)
            .map_err(|e| infeasible(self.scale, e))?;
        let phi = self.phi(&t, &y);
        let objective = self.objective(&l, &n, &y, &sigma)?;
        Ok(LnSolution {
            l,
            n,
            y,
            sigma,
            phi,
            objective,
            iterations,
            converged,
            last_gap,
        })
    }

    /// Relative residuals of the Riccati and Lyapunov equations and the
    /// gradient norm of the minimization, at a candidate solution.
    pub fn residuals(&self, s: &LnSolution) -> Result<[f64; 3]> {
        let t = self.tilde(&s.l, &s.n);
        let q = t.c1.transpose() * &t.c1;
        let y_res = if self.n_delta() == 0 {
            matops::dlyap_residual(&t.a, &q, &s.y) / (1.0 + fro(&s.y))
        } else {
            let r = t.d11.transpose() * &t.d11 - eye(self.n_delta()) * self.scale;
            let sc = t.c1.transpose() * &t.d11;
            matops::dare_cross_residual(&t.a, &t.b1, &q, &r, &sc, &s.y)
        };
        let (_, kx, kw) = self.adversary(&t, &s.y)?;
        let abar = &t.a + &t.b1 * kx;
        let bbar = &t.b0 + &t.b1 * kw;
        let lhs = &abar * &s.sigma * abar.transpose() + &bbar * bbar.transpose();
        let s_res = fro(&(lhs - &s.sigma)) / (1.0 + fro(&s.sigma));
        let g = self.gradient(&s.l, &s.n, &s.y, &s.sigma)?;
        let g_res = fro(&g) / (1.0 + s.objective.abs());
        Ok([y_res, s_res, g_res])
    }
}

fn newton_direction(hess: Mat, g: &nalgebra::DVector<f64>, dim: usize) -> nalgebra::DVector<f64> {
    let scale = hess.amax().max(1e-300);
    let mut lambda = 0.0;
    for _ in 0..30 {
        let h = &hess + Mat::identity(dim, dim) * lambda;
        if let Some(c) = h.clone().cholesky() {
            let d = -c.solve(g);
            if d.iter().all(|x| x.is_finite()) {
                return d;
            }
        }
        lambda = if lambda == 0.0 {
            1e-10 * scale
        } else {
            lambda * 10.0
        };
    }
    -g.clone()
}

fn boundary_err(scale: f64) -> Error {
    Error::InfeasibleGamma {
        gamma: scale.sqrt(),
        detail: "Φ lost positive definiteness".into(),
    }
}

fn infeasible(scale: f64, e: Error) -> Error {
    match e {
        Error::InfeasibleGamma { detail, .. } => Error::InfeasibleGamma {
            gamma: scale.sqrt(),
            detail,
        },
        Error::NoSolution { residual } => Error::InfeasibleGamma {
            gamma: scale.sqrt(),
            detail: format!("no stabilizing Riccati solution (residual {residual:.2e})"),
        },
        Error::Instability { rho } => Error::InfeasibleGamma {
            gamma: scale.sqrt(),
            detail: format!("adversary-closed loop unstable (rho {rho:.4})"),
        },
        other => other,
    }
}

/// How the returned fixed point was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitPath {
    /// Plain Kalman gain, `N = 0`.
    Kalman,
    /// Kalman gain with the adversary channel counted as noise.
    AugmentedKalman,
    /// Warm-started descent from a feasible larger `γ`.
    Continuation,
}

/// Runs the alternation at level `gamma`, falling back to an augmented
/// start and then to continuation from larger `γ` when the default start is
/// infeasible. `build` produces the problem at a given level.
pub fn solve_ln_at(
    gamma: f64,
    build: &dyn Fn(f64) -> Result<LnProblem>,
    opts: &LnOptions,
) -> Result<(LnProblem, LnSolution, InitPath)> {
    let prob = build(gamma)?;
    let l0 = prob.kalman_init()?;
    let n0 = zeros(prob.n_z(), prob.n_y());
    let first_err = match prob.solve(l0, n0, opts) {
        Ok(sol) => return Ok((prob, sol, InitPath::Kalman)),
        Err(e) if e.is_infeasible() => e,
        Err(e) => return Err(e),
    };
    if let Ok((l0, n0)) = prob.kalman_init_with(true) {
        if let Ok(sol) = prob.solve(l0, n0, opts) {
            return Ok((prob, sol, InitPath::AugmentedKalman));
        }
    }
    // Continuation: find a feasible level above, then walk down.
    let mut hi = gamma;
    let mut warm = None;
    for _ in 0..30 {
        hi *= 2.0;
        if hi > 1e8 {
            break;
        }
        let Ok(ph) = build(hi) else { continue };
        let Ok((l0, n0)) = ph.kalman_init_with(true) else {
            continue;
        };
        if let Ok(sol) = ph.solve(l0, n0, opts) {
            warm = Some((sol.l, sol.n));
            break;
        }
    }
    let Some((mut l, mut n)) = warm else {
        return Err(first_err);
    };
    let mut level = hi;
    let mut ratio = (gamma / hi).powf(1.0 / 8.0);
    let mut budget = 64;
    while budget > 0 {
        budget -= 1;
        let next = (level * ratio).max(gamma);
        let attempt = build(next).and_then(|pn| {
            let sol = pn.solve(l.clone(), n.clone(), opts)?;
            Ok((pn, sol))
        });
        match attempt {
            // A stalled alternation near the feasibility edge is a poor warm
            // start; shrink the step as for an infeasible level.
            Ok((_, sol)) if !sol.converged && next > gamma => {
                ratio = ratio.sqrt();
                if ratio > 1.0 - 1e-3 {
                    return Err(first_err);
                }
            }
            Ok((pn, sol)) => {
                if next <= gamma {
                    return Ok((pn, sol, InitPath::Continuation));
                }
                l = sol.l;
                n = sol.n;
                level = next;
            }
            Err(e) if e.is_infeasible() => {
                ratio = ratio.sqrt();
                if ratio > 1.0 - 1e-3 {
                    return Err(first_err);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_err)
}

// ---------------------------------------------------------------------------
// Output-feedback synthesis

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfSolution {
    pub gamma: f64,
    pub l_gamma: Mat,
    pub n_gamma: Mat,
    pub y_gamma: Mat,
    pub sigma_gamma: Mat,
    pub phi: Mat,
    pub g_hat: Plant,
    pub factor: PsiFactorization,
    pub k: Controller,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_gap: f64,
    pub init: InitPath,
}

pub fn ln_problem_for(g_hat: &Plant) -> LnProblem {
    LnProblem {
        a: g_hat.a.clone(),
        b0: g_hat.b0.clone(),
        b1: g_hat.b1.clone(),
        c1: g_hat.c1.clone(),
        d10: g_hat.d10.clone(),
        d11: g_hat.d11.clone(),
        c2: g_hat.c2.clone(),
        d20: g_hat.d20.clone(),
        d21: g_hat.d21.clone(),
        scale: 1.0,
        with_n: true,
    }
}

/// Controller realization from `Ĝ` and the estimator pair.
pub fn assemble_controller(
    g_hat: &Plant,
    f: &PsiFactorization,
    l: &Mat,
    n: &Mat,
) -> Result<Controller> {
    let t22_inv = inv(&f.t22)?;
    let c_tilde = &g_hat.c1 + n * &g_hat.c2;
    Ok(Controller {
        a_k: &g_hat.a - &g_hat.b2 * &c_tilde + l * &g_hat.c2,
        b_k: l - &g_hat.b2 * n,
        c_k: &t22_inv * &c_tilde,
        d_k: &t22_inv * n,
    })
}

pub fn solve_soft_of(
    p: &Plant,
    weights: &LqWeights,
    gamma: f64,
    opts: &LnOptions,
) -> Result<OfSolution> {
    let build = |g: f64| -> Result<LnProblem> {
        let (gh, _) = g_hat_at(p, weights, g)?;
        Ok(ln_problem_for(&gh))
    };
    let (g_hat, factor) = g_hat_at(p, weights, gamma)?;
    let (_, sol, init) = solve_ln_at(gamma, &build, opts).map_err(|e| match e {
        Error::InfeasibleGamma { detail, .. } => Error::InfeasibleGamma { gamma, detail },
        other => other,
    })?;
    if !matops::pd_check(&sol.phi, 0.0) {
        return Err(Error::InfeasibleGamma {
            gamma,
            detail: "Φ is not positive definite at the returned iterate".into(),
        });
    }
    let k = assemble_controller(&g_hat, &factor, &sol.l, &sol.n)?;
    if !is_finite(&k.a_k) || !is_finite(&k.b_k) || !is_finite(&k.c_k) || !is_finite(&k.d_k) {
        return Err(Error::NonFinite("assembled controller".into()));
    }
    Ok(OfSolution {
        gamma,
        l_gamma: sol.l,
        n_gamma: sol.n,
        y_gamma: sol.y,
        sigma_gamma: sol.sigma,
        phi: sol.phi,
        g_hat,
        factor,
        k,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        last_gap: sol.last_gap,
        init,
    })
}

/// Preprocessing shared by the alternation: game solution, `Ψ` factor and `Ĝ` at `γ`.
pub fn g_hat_at(p: &Plant, weights: &LqWeights, gamma: f64) -> Result<(Plant, PsiFactorization)> {
    let sf = solve_soft_sf(p, weights, gamma)?;
    let factor = factor_psi(&sf.psi, p.n_delta(), p.n_u()).map_err(|e| Error::InfeasibleGamma {
        gamma,
        detail: e.to_string(),
    })?;
    Ok((build_g_hat(p, &sf, &factor)?, factor))
}

/// LQG controller `u = F⋆x̂`, with `x̂` the one-step predictor driven by the
/// Kalman gain of `(A, C₂, B₀B₀ᵀ, D₂₀D₂₀ᵀ)`.
pub fn lqg_controller(p: &Plant, weights: &LqWeights) -> Result<Controller> {
    let (_, f) = crate::sf_synthesis::lqr(p, weights)?;
    if p.is_state_feedback() {
        return Ok(Controller::static_gain(f));
    }
    let v = &p.d20 * p.d20.transpose();
    let sigma = matops::dare(
        &p.a.transpose(),
        &p.c2.transpose(),
        &(&p.b0 * p.b0.transpose()),
        &v,
    )?;
    // Filter gain on the current measurement; the controller state is the
    // one-step prediction x̂ and u = F x̂_{t|t}.
    let l = solve_right(
        &(&sigma * p.c2.transpose()),
        &(&p.c2 * &sigma * p.c2.transpose() + v),
    )?;
    let upd = eye(p.n_x()) - &l * &p.c2;
    let acl = &p.a + &p.b2 * &f;
    Ok(Controller {
        a_k: &acl * &upd,
        b_k: &acl * &l,
        c_k: &f * upd,
        d_k: f * l,
    })
}

/// Checks that `Ψ` reconstructs from the factor to a relative tolerance.
pub fn psi_reconstruction_error(psi: &Mat, f: &PsiFactorization) -> f64 {
    fro(&(f.reconstruct() - psi)) / (1.0 + fro(psi))
}
