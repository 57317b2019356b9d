//! Dense matrix helpers plus the Lyapunov and Riccati solvers everything else
//! is built on.
//!
//! Conventions: `dlyap(a, q)` solves `AᵀPA − P + Q = 0`; the covariance form
//! `Σ = AΣAᵀ + W` is [`stationary_cov`]. Riccati solvers return the
//! stabilizing solution of `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, where the
//! leading `n_adv` columns of `B` may belong to a maximizing player whose
//! block of `R` is negative definite.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const PSD_TOL: f64 = 1e-9;
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub spectral_radius: f64,
    /// Eigenvalue attaining the spectral radius, as (re, im).
    pub max_abs_eigenvalue_location: (f64, f64),
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Builds a matrix from row slices. Panics on ragged input (test/builtin use).
pub fn from_rows(rows: &[&[f64]]) -> Mat {
    let r = rows.len();
    let c = if r == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn is_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn fro(a: &Mat) -> f64 {
    a.norm()
}

/// Spectral norm (largest singular value).
pub fn norm2(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Smallest singular value (0 for empty or wide-rank-deficient input).
pub fn sigma_min(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sv = a.clone().singular_values();
    if a.nrows() != a.ncols() {
        // Thin SVD returns min(m, n) values; a non-square matrix still has a
        // well-defined smallest of those.
        return sv.min();
    }
    sv.min()
}

pub fn sigma_max(a: &Mat) -> f64 {
    norm2(a)
}

fn check_square(a: &Mat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    check_square(a, "eigenvalue input")?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("eigenvalue input".into()));
    }
    Ok(a.clone().complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_info(a: &Mat) -> Result<SpectralInfo> {
    let ev = eigenvalues(a)?;
    let mut best = (0.0, (0.0, 0.0));
    for z in ev {
        let m = z.norm();
        if m > best.0 {
            best = (m, (z.re, z.im));
        }
    }
    Ok(SpectralInfo {
        spectral_radius: best.0,
        max_abs_eigenvalue_location: best.1,
    })
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(spectral_info(a)?.spectral_radius)
}

/// Solves `a x = b` by LU; errors when `a` is numerically singular.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    check_square(a, "solve lhs")?;
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(is_finite)
        .ok_or_else(|| Error::NotPd("singular linear system".into()))
}

/// Solves `x a = b`.
pub fn solve_right(b: &Mat, a: &Mat) -> Result<Mat> {
    Ok(solve(&a.transpose(), &b.transpose())?.transpose())
}

pub fn inv(a: &Mat) -> Result<Mat> {
    solve(a, &eye(a.nrows()))
}

/// Lower-triangular Cholesky factor `L` with `a = LLᵀ`.
pub fn chol(a: &Mat) -> Result<Mat> {
    check_square(a, "cholesky input")?;
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    nalgebra::Cholesky::new(symmetrize(a))
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPd("cholesky failed".into()))
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let c =
        nalgebra::Cholesky::new(symmetrize(a)).ok_or_else(|| Error::NotPd("spd solve".into()))?;
    Ok(c.solve(b))
}

pub fn min_eig_sym(a: &Mat) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().min()
}

pub fn max_eig_sym(a: &Mat) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().max()
}

/// Minimum eigenvalue ≥ −tol·‖a‖.
pub fn psd_check(a: &Mat, tol: f64) -> bool {
    if a.is_empty() {
        return true;
    }
    let scale = norm2(a);
    min_eig_sym(a) >= -tol * scale
}

/// Strict positive definiteness with a relative margin.
pub fn pd_check(a: &Mat, tol: f64) -> bool {
    if a.is_empty() {
        return true;
    }
    let scale = norm2(a).max(f64::MIN_POSITIVE);
    min_eig_sym(a) > tol * scale
}

/// Number of singular values above `tol·σ_max`.
pub fn rank_tol(a: &Mat, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Principal square root of a PSD matrix; eigenvalues in `[−tol·‖a‖, 0)` are clamped to 0.
pub fn sqrtm_psd(a: &Mat) -> Result<Mat> {
    check_square(a, "sqrtm input")?;
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let s = symmetrize(a);
    let scale = norm2(&s);
    let eig = s.symmetric_eigen();
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v < -PSD_TOL * scale {
            return Err(Error::NotPd(
                "matrix square root of indefinite matrix".into(),
            ));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * Mat::from_diagonal(&d) * q.transpose())))
}

pub fn trace(a: &Mat) -> f64 {
    a.trace()
}

// ---------------------------------------------------------------------------
// Lyapunov equations

/// Solves `AᵀPA − P + Q = 0` for stable `a`.
pub fn dlyap(a: &Mat, q: &Mat) -> Result<Mat> {
    check_square(a, "dlyap A")?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("dlyap Q must be {n}x{n}")));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Instability { rho });
    }
    // vec(AᵀPA) = (Aᵀ ⊗ Aᵀ) vec(P) in column-major vectorization.
    let at = a.transpose();
    let k = at.kronecker(&at);
    let lhs = Mat::identity(n * n, n * n) - k;
    let rhs = Mat::from_column_slice(n * n, 1, q.as_slice());
    let lu = lhs.lu();
    let mut x = lu.solve(&rhs).ok_or(Error::Instability { rho })?;
    // One step of iterative refinement.
    let p0 = Mat::from_column_slice(n, n, x.as_slice());
    let r = lyap_residual_raw(a, q, &p0);
    if let Some(dx) = lu.solve(&Mat::from_column_slice(n * n, 1, r.as_slice())) {
        x += dx;
    }
    let p = symmetrize(&Mat::from_column_slice(n, n, x.as_slice()));
    if !is_finite(&p) {
        return Err(Error::NonFinite("dlyap solution".into()));
    }
    Ok(p)
}

fn lyap_residual_raw(a: &Mat, q: &Mat, p: &Mat) -> Mat {
    a.transpose() * p * a - p + q
}

/// Relative residual ‖AᵀPA − P + Q‖_F / (1 + ‖P‖_F).
pub fn dlyap_residual(a: &Mat, q: &Mat, p: &Mat) -> f64 {
    fro(&lyap_residual_raw(a, q, p)) / (1.0 + fro(p))
}

/// Stationary covariance `Σ = AΣAᵀ + W` of `x⁺ = Ax + noise` with covariance `W`.
pub fn stationary_cov(a: &Mat, w: &Mat) -> Result<Mat> {
    dlyap(&a.transpose(), w)
}

/// `W_∞(A, B) = Σ_t AᵗBBᵀ(Aᵗ)ᵀ`.
pub fn gramian_inf(a: &Mat, b: &Mat) -> Result<Mat> {
    stationary_cov(a, &(b * b.transpose()))
}

// ---------------------------------------------------------------------------
// Riccati equations

#[derive(Debug, Clone, Copy)]
pub struct RiccatiOpts {
    /// Successive-iterate gap tolerance, relative to 1 + ‖P‖_F.
    pub tol: f64,
    /// Residual acceptance threshold, relative to 1 + ‖P‖_F.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Try structure-preserving doubling before plain value iteration.
    pub doubling: bool,
}

impl Default for RiccatiOpts {
    fn default() -> Self {
        RiccatiOpts {
            tol: 1e-12,
            residual_tol: 1e-8,
            max_iter: 100_000,
            doubling: true,
        }
    }
}

enum Doubling {
    Converged(Mat),
    Infeasible,
    Failed,
}

/// Split game Riccati problem: the first `n_adv` inputs maximize.
struct Game<'a> {
    a: &'a Mat,
    b: &'a Mat,
    q: &'a Mat,
    r: &'a Mat,
    n_adv: usize,
}

impl Game<'_> {
    fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        check_square(self.a, "riccati A")?;
        if self.b.nrows() != n {
            return Err(Error::Dimension("riccati B rows must match A".into()));
        }
        if self.q.shape() != (n, n) {
            return Err(Error::Dimension("riccati Q shape".into()));
        }
        let m = self.b.ncols();
        if self.r.shape() != (m, m) {
            return Err(Error::Dimension("riccati R shape".into()));
        }
        if self.n_adv > m {
            return Err(Error::Dimension("n_adv exceeds input count".into()));
        }
        let k = self.n_adv;
        let off = self.r.view((k, 0), (m - k, k));
        if off.iter().any(|x| x.abs() > 0.0) {
            return Err(Error::Dimension(
                "R must be block diagonal between the two players".into(),
            ));
        }
        for (name, x) in [("A", self.a), ("B", self.b), ("Q", self.q), ("R", self.r)] {
            if !is_finite(x) {
                return Err(Error::NonFinite(format!("riccati {name}")));
            }
        }
        Ok(())
    }

    fn b1(&self) -> Mat {
        self.b.columns(0, self.n_adv).into_owned()
    }
    fn b2(&self) -> Mat {
        self.b
            .columns(self.n_adv, self.b.ncols() - self.n_adv)
            .into_owned()
    }
    fn r1(&self) -> Mat {
        self.r.view((0, 0), (self.n_adv, self.n_adv)).into_owned()
    }
    fn r2(&self) -> Mat {
        let k = self.n_adv;
        let m = self.b.ncols() - k;
        self.r.view((k, k), (m, m)).into_owned()
    }

    /// Maximizer's certificate `−(R₁ + B₁ᵀPB₁) ≻ 0`.
    fn certificate(&self, p: &Mat) -> bool {
        if self.n_adv == 0 {
            return true;
        }
        let b1 = self.b1();
        let phi = -(self.r1() + b1.transpose() * p * &b1);
        chol(&phi).is_ok() && pd_check(&phi, 1e-14)
    }

    /// One dynamic-programming step: eliminate the maximizer, then the minimizer.
    fn step(&self, p: &Mat) -> Option<Mat> {
        let m_mat = if self.n_adv > 0 {
            let b1 = self.b1();
            let phi = -(self.r1() + b1.transpose() * p * &b1);
            let pb1 = p * &b1;
            let x = solve_spd(&phi, &pb1.transpose()).ok()?;
            symmetrize(&(p + &pb1 * x))
        } else {
            p.clone()
        };
        let a = self.a;
        let mut next = self.q + a.transpose() * &m_mat * a;
        if self.b.ncols() > self.n_adv {
            let b2 = self.b2();
            let s = self.r2() + b2.transpose() * &m_mat * &b2;
            let bma = b2.transpose() * &m_mat * a;
            let x = solve_spd(&s, &bma).ok()?;
            next -= bma.transpose() * x;
        }
        let next = symmetrize(&next);
        is_finite(&next).then_some(next)
    }

    fn residual(&self, p: &Mat) -> f64 {
        let a = self.a;
        let b = self.b;
        let s = self.r + b.transpose() * p * b;
        let bpa = b.transpose() * p * a;
        let rhs = match solve(&s, &bpa) {
            Ok(x) => self.q + a.transpose() * p * a - bpa.transpose() * x,
            Err(_) => return f64::INFINITY,
        };
        fro(&(rhs - p)) / (1.0 + fro(p))
    }

    fn closed_loop(&self, p: &Mat) -> Result<Mat> {
        let b = self.b;
        let s = self.r + b.transpose() * p * b;
        let k = solve(&s, &(b.transpose() * p * self.a))?;
        Ok(self.a - b * k)
    }

    fn accept(&self, p: &Mat, opts: &RiccatiOpts) -> bool {
        is_finite(p)
            && psd_check(p, PSD_TOL)
            && self.certificate(p)
            && self.residual(p) <= opts.residual_tol
            && self
                .closed_loop(p)
                .and_then(|acl| spectral_radius(&acl))
                .map(|r| r < 1.0)
                .unwrap_or(false)
    }

    /// Structure-preserving doubling. `H_k` equals the value-iteration iterate
    /// `P_{2^k - 1}`, so a certificate failure on `H_k` proves infeasibility.
    fn doubling(&self, opts: &RiccatiOpts) -> Doubling {
        match self.doubling_inner(opts) {
            Ok(Some(h)) => Doubling::Converged(h),
            Ok(None) => Doubling::Failed,
            Err(()) => Doubling::Infeasible,
        }
    }

    fn doubling_inner(&self, opts: &RiccatiOpts) -> std::result::Result<Option<Mat>, ()> {
        let n = self.a.nrows();
        let Ok(rinv_bt) = solve(self.r, &self.b.transpose()) else {
            return Ok(None);
        };
        let mut g = symmetrize(&(self.b * rinv_bt));
        let mut h = self.q.clone();
        let mut ak = self.a.clone();
        let id = eye(n);
        for _ in 0..64 {
            if !self.certificate(&h) {
                return Err(());
            }
            let w = &id + &g * &h;
            let lu = w.lu();
            let Some(wa) = lu.solve(&ak) else {
                return Ok(None);
            };
            let Some(wg) = lu.solve(&g) else {
                return Ok(None);
            };
            let h_next = symmetrize(&(&h + ak.transpose() * &h * &wa));
            let g_next = symmetrize(&(&g + &ak * wg * ak.transpose()));
            let a_next = &ak * wa;
            if !is_finite(&h_next) || !is_finite(&g_next) || !is_finite(&a_next) {
                return Ok(None);
            }
            let gap = fro(&(&h_next - &h));
            h = h_next;
            g = g_next;
            ak = a_next;
            if gap <= opts.tol * (1.0 + fro(&h)) {
                return Ok(Some(h));
            }
        }
        Ok(None)
    }

    /// Reference semantics: value iteration from `P₀ = Q` with the certificate
    /// checked at every iterate.
    fn value_iteration(&self, gamma_hint: f64, opts: &RiccatiOpts) -> Result<Mat> {
        let mut p = self.q.clone();
        let mut gap = f64::INFINITY;
        for _ in 0..opts.max_iter {
            if !self.certificate(&p) {
                return Err(Error::InfeasibleGamma {
                    gamma: gamma_hint,
                    detail: "certificate violated during value iteration".into(),
                });
            }
            let next = self.step(&p).ok_or(Error::NoSolution {
                residual: self.residual(&p),
            })?;
            gap = fro(&(&next - &p));
            p = next;
            if gap <= opts.tol * (1.0 + fro(&p)) {
                if !self.certificate(&p) {
                    return Err(Error::InfeasibleGamma {
                        gamma: gamma_hint,
                        detail: "certificate violated at the fixed point".into(),
                    });
                }
                let res = self.residual(&p);
                if res > opts.residual_tol || !psd_check(&p, PSD_TOL) {
                    return Err(Error::NoSolution { residual: res });
                }
                return Ok(p);
            }
        }
        Err(Error::Divergence {
            iters: opts.max_iter,
            gap,
        })
    }

    fn solve(&self, gamma_hint: f64, opts: &RiccatiOpts) -> Result<Mat> {
        self.check()?;
        let n = self.a.nrows();
        if n == 0 {
            return Ok(Mat::zeros(0, 0));
        }
        if self.b.ncols() == 0 {
            return dlyap(self.a, self.q);
        }
        if opts.doubling {
            match self.doubling(opts) {
                Doubling::Converged(p) if self.accept(&p, opts) => return Ok(p),
                Doubling::Infeasible => {
                    return Err(Error::InfeasibleGamma {
                        gamma: gamma_hint,
                        detail: "certificate violated on a doubling iterate".into(),
                    })
                }
                _ => {}
            }
        }
        let p = self.value_iteration(gamma_hint, opts)?;
        let rho = self
            .closed_loop(&p)
            .and_then(|acl| spectral_radius(&acl))
            .unwrap_or(f64::INFINITY);
        if rho >= 1.0 {
            return Err(Error::NoSolution {
                residual: self.residual(&p),
            });
        }
        Ok(p)
    }
}

/// Standard DARE `P = Q + AᵀPA − AᵀPB(BᵀPB + R)⁻¹BᵀPA` with `R ≻ 0`.
pub fn dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    dare_with(a, b, q, r, &RiccatiOpts::default())
}

pub fn dare_with(a: &Mat, b: &Mat, q: &Mat, r: &Mat, opts: &RiccatiOpts) -> Result<Mat> {
    if !pd_check(r, 0.0) && r.nrows() > 0 {
        return Err(Error::NotPd("dare R".into()));
    }
    Game {
        a,
        b,
        q,
        r,
        n_adv: 0,
    }
    .solve(f64::INFINITY, opts)
}

/// Indefinite (game) DARE. The first `n_adv` columns of `b` are the
/// maximizing player; `r` must be block diagonal with a negative definite
/// leading block. Fails with [`Error::InfeasibleGamma`] when
/// `R₁ + B₁ᵀP_kB₁ ≺ 0` is violated at any value-iteration iterate.
pub fn dare_indefinite(a: &Mat, b: &Mat, q: &Mat, r: &Mat, n_adv: usize) -> Result<Mat> {
    dare_indefinite_with(a, b, q, r, n_adv, &RiccatiOpts::default())
}

pub fn dare_indefinite_with(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    n_adv: usize,
    opts: &RiccatiOpts,
) -> Result<Mat> {
    let game = Game { a, b, q, r, n_adv };
    game.check()?;
    let gamma_hint = if n_adv > 0 {
        (-max_eig_sym(&game.r1())).max(0.0).sqrt()
    } else {
        f64::INFINITY
    };
    game.solve(gamma_hint, opts)
}

/// Generalized DARE with cross term,
/// `P = Q + AᵀPA − (AᵀPB + S)(BᵀPB + R)⁻¹(BᵀPA + Sᵀ)`,
/// where every column of `b` maximizes (so `BᵀPB + R ≺ 0` is the certificate).
/// With `R = D₁ᵀD₁ − γ²I` this is the bounded-real equation of a closed loop.
pub fn dare_generalized(a: &Mat, b: &Mat, q: &Mat, r: &Mat, s: &Mat) -> Result<Mat> {
    dare_cross(a, b, q, r, s, b.ncols(), &RiccatiOpts::default())
}

/// Cross-term Riccati equation with an arbitrary player split, solved by
/// removing `S` through `Ā = A − BR⁻¹Sᵀ`, `Q̄ = Q − SR⁻¹Sᵀ`.
pub fn dare_cross(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    s: &Mat,
    n_adv: usize,
    opts: &RiccatiOpts,
) -> Result<Mat> {
    if s.shape() != (a.nrows(), b.ncols()) {
        return Err(Error::Dimension("cross term S shape".into()));
    }
    if b.ncols() == 0 {
        return dlyap(a, q);
    }
    let gamma_hint = if n_adv > 0 {
        let r1 = r.view((0, 0), (n_adv, n_adv)).into_owned();
        (-max_eig_sym(&r1)).max(0.0).sqrt()
    } else {
        f64::INFINITY
    };
    let rinv_st = solve(r, &s.transpose()).map_err(|_| Error::InfeasibleGamma {
        gamma: gamma_hint,
        detail: "singular R in cross-term elimination".into(),
    })?;
    let a_bar = a - b * &rinv_st;
    let q_bar = symmetrize(&(q - s * &rinv_st));
    dare_indefinite_with(&a_bar, b, &q_bar, r, n_adv, opts)
}

/// Relative residual of the cross-term Riccati equation in standard sign.
pub fn dare_cross_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, s: &Mat, p: &Mat) -> f64 {
    let g = a.transpose() * p * b + s;
    let h = b.transpose() * p * b + r;
    match solve(&h, &g.transpose()) {
        Ok(x) => fro(&(q + a.transpose() * p * a - &g * x - p)) / (1.0 + fro(p)),
        Err(_) => f64::INFINITY,
    }
}

pub fn dare_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> f64 {
    dare_cross_residual(a, b, q, r, &Mat::zeros(a.nrows(), b.ncols()), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator(rho: f64) -> (Mat, Mat) {
        (
            from_rows(&[&[1.0, rho], &[0.0, 1.0]]),
            from_rows(&[&[0.0], &[1.0]]),
        )
    }

    #[test]
    fn spectral_radius_trivial_cases() {
        assert_eq!(spectral_radius(&zeros(2, 2)).unwrap(), 0.0);
        assert!((spectral_radius(&eye(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!(spectral_radius(&from_rows(&[&[0.0, 3.0], &[0.0, 0.0]])).unwrap() < 1e-12);
        assert!(matches!(
            spectral_radius(&zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn spectral_radius_complex_pair() {
        let a = from_rows(&[&[0.0, -0.8], &[0.8, 0.0]]);
        let info = spectral_info(&a).unwrap();
        assert!((info.spectral_radius - 0.8).abs() < 1e-12);
        assert!((info.max_abs_eigenvalue_location.1.abs() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn dlyap_closed_forms() {
        let q = from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let p = dlyap(&zeros(2, 2), &q).unwrap();
        assert!((p - &q).norm() < 1e-14);
        let p = dlyap(&scalar(0.5), &scalar(1.0)).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            dlyap(&scalar(1.0), &scalar(1.0)),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn dlyap_matches_truncated_series() {
        let a = from_rows(&[&[0.5, 0.3, 0.0], &[-0.2, 0.4, 0.1], &[0.0, 0.25, -0.6]]);
        let q = from_rows(&[&[1.0, 0.2, 0.0], &[0.2, 2.0, 0.1], &[0.0, 0.1, 0.5]]);
        let mut series = Mat::zeros(3, 3);
        let mut ak = eye(3);
        for _ in 0..400 {
            series += ak.transpose() * &q * &ak;
            ak = &ak * &a;
        }
        let p = dlyap(&a, &q).unwrap();
        assert!((p - series).norm() < 1e-12);
    }

    #[test]
    fn dare_golden_ratio() {
        let p = dare(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((p[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dare_without_inputs_is_dlyap() {
        let a = from_rows(&[&[0.5, 0.1], &[0.0, 0.3]]);
        let p = dare(&a, &zeros(2, 0), &eye(2), &zeros(0, 0)).unwrap();
        assert!((p - dlyap(&a, &eye(2)).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn dare_integrator_matches_value_iteration() {
        let (a, b) = integrator(0.5);
        let q = eye(2);
        let r = scalar(1.0);
        let mut p = q.clone();
        for _ in 0..5000 {
            let s = &r + b.transpose() * &p * &b;
            let k = s.clone().try_inverse().unwrap() * b.transpose() * &p * &a;
            p = &q + a.transpose() * &p * &a - a.transpose() * &p * &b * k;
        }
        let sol = dare(&a, &b, &q, &r).unwrap();
        assert!((&sol - &p).norm() < 1e-10);
        assert!(dare_residual(&a, &b, &q, &r, &sol) < 1e-12);
    }

    #[test]
    fn dare_unstabilizable_fails() {
        let r = dare(&scalar(2.0), &scalar(0.0), &scalar(1.0), &scalar(1.0));
        assert!(r.is_err());
    }

    #[test]
    fn indefinite_scalar_a_zero() {
        // A = 0 forces P = Q; feasible iff 1 < γ².
        let b = from_rows(&[&[1.0, 1.0]]);
        for gamma in [1.5, 3.0, 10.0] {
            let r = Mat::from_diagonal(&Vector::from_vec(vec![-gamma * gamma, 1.0]));
            let p = dare_indefinite(&scalar(0.0), &b, &scalar(1.0), &r, 1).unwrap();
            assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        }
        let r = Mat::from_diagonal(&Vector::from_vec(vec![-0.81, 1.0]));
        let e = dare_indefinite(&scalar(0.0), &b, &scalar(1.0), &r, 1).unwrap_err();
        assert!(e.is_infeasible());
    }

    #[test]
    fn indefinite_large_gamma_matches_dare() {
        let (a, b2) = integrator(0.5);
        let b = hstack(&[&eye(2), &b2]);
        let g = 1e6;
        let r = Mat::from_diagonal(&Vector::from_vec(vec![-g * g, -g * g, 1.0]));
        let p = dare_indefinite(&a, &b, &eye(2), &r, 2).unwrap();
        let p0 = dare(&a, &b2, &eye(2), &scalar(1.0)).unwrap();
        assert!((&p - &p0).norm() / p0.norm() < 1e-4);
    }

    #[test]
    fn doubling_and_value_iteration_agree() {
        let (a, b2) = integrator(0.5);
        let b = hstack(&[&eye(2), &b2]);
        let g: f64 = 4.0;
        let r = Mat::from_diagonal(&Vector::from_vec(vec![-g * g, -g * g, 1.0]));
        let fast = dare_indefinite(&a, &b, &eye(2), &r, 2).unwrap();
        let opts = RiccatiOpts {
            doubling: false,
            ..Default::default()
        };
        let slow = dare_indefinite_with(&a, &b, &eye(2), &r, 2, &opts).unwrap();
        assert!((&fast - &slow).norm() < 1e-9 * (1.0 + slow.norm()));
    }

    #[test]
    fn generalized_zero_cross_term_reduces() {
        let a = from_rows(&[&[0.6, 0.2], &[-0.1, 0.5]]);
        let b = from_rows(&[&[1.0], &[0.5]]);
        let q = eye(2);
        let r = scalar(-9.0);
        let p1 = dare_generalized(&a, &b, &q, &r, &zeros(2, 1)).unwrap();
        let p2 = dare_indefinite(&a, &b, &q, &r, 1).unwrap();
        assert!((&p1 - &p2).norm() < 1e-10);
        let p3 = dare_generalized(&a, &zeros(2, 0), &q, &zeros(0, 0), &zeros(2, 0)).unwrap();
        assert!((p3 - dlyap(&a, &q).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn chol_psd_rank() {
        assert_eq!(chol(&eye(3)).unwrap(), eye(3));
        assert!(psd_check(&from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]), 1e-12));
        assert!(!psd_check(&from_rows(&[&[1.0, 0.0], &[0.0, -0.1]]), 1e-12));
        assert_eq!(rank_tol(&from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-10), 1);
        assert!(matches!(chol(&scalar(-1.0)), Err(Error::NotPd(_))));
    }

    #[test]
    fn sqrtm_roundtrip() {
        let q = from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let s = sqrtm_psd(&q).unwrap();
        assert!((&s * &s - q).norm() < 1e-13);
    }
}
