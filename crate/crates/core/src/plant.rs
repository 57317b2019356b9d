//! Generalized LTI plant, state-space controllers and the lower LFT that
//! closes the loop between them.
//!
//! ```text
//! x⁺ = A x + B₀ w + B₁ δ + B₂ u
//! z  = C₁ x + D₁₀ w + D₁₁ δ + D₁₂ u
//! y  = C₂ x + D₂₀ w + D₂₁ δ
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, eye, hstack, is_finite, vstack, zeros, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub a: Mat,
    pub b0: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d10: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d20: Mat,
    pub d21: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqWeights {
    pub q: Mat,
    pub r: Mat,
}

impl LqWeights {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        if q.nrows() != q.ncols() || r.nrows() != r.ncols() {
            return Err(Error::Dimension("weights must be square".into()));
        }
        if !is_finite(&q) || !is_finite(&r) {
            return Err(Error::NonFinite("weights".into()));
        }
        if (&q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
            return Err(Error::Domain("Q must be symmetric".into()));
        }
        if (&r - r.transpose()).norm() > 1e-12 * (1.0 + r.norm()) {
            return Err(Error::Domain("R must be symmetric".into()));
        }
        if !matops::psd_check(&q, matops::PSD_TOL) {
            return Err(Error::NotPd("Q is not positive semidefinite".into()));
        }
        if !matops::pd_check(&r, 0.0) {
            return Err(Error::NotPd("R is not positive definite".into()));
        }
        Ok(LqWeights { q, r })
    }

    pub fn identity(n_x: usize, n_u: usize) -> Self {
        LqWeights {
            q: eye(n_x),
            r: eye(n_u),
        }
    }
}

/// State-space controller `ξ⁺ = A_K ξ + B_K y`, `u = C_K ξ + D_K y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub a_k: Mat,
    pub b_k: Mat,
    pub c_k: Mat,
    pub d_k: Mat,
}

impl Controller {
    /// Static gain `u = D y`, realized with zero states.
    pub fn static_gain(d: Mat) -> Self {
        let (n_u, n_y) = d.shape();
        Controller {
            a_k: zeros(0, 0),
            b_k: zeros(0, n_y),
            c_k: zeros(n_u, 0),
            d_k: d,
        }
    }

    pub fn n_states(&self) -> usize {
        self.a_k.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.d_k.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.d_k.ncols()
    }
}

/// Closed loop `F_l(G, K)` on the stacked state `[x; ξ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoop {
    pub a_cl: Mat,
    pub b0_cl: Mat,
    pub b1_cl: Mat,
    pub c_cl: Mat,
    pub d0_cl: Mat,
    pub d1_cl: Mat,
}

impl ClosedLoop {
    pub fn n_states(&self) -> usize {
        self.a_cl.nrows()
    }
    pub fn n_delta(&self) -> usize {
        self.b1_cl.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub stabilizable: bool,
    pub detectable: bool,
    pub cost_detectable: bool,
    pub r_pd: bool,
    pub noise_full_rank: bool,
    pub measurement_noise_full_rank: bool,
    pub noise_orthogonal: bool,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.stabilizable
            && self.detectable
            && self.cost_detectable
            && self.r_pd
            && self.noise_full_rank
            && self.measurement_noise_full_rank
            && self.noise_orthogonal
    }

    /// The subset that matters when the state is measured directly.
    pub fn state_feedback_ok(&self) -> bool {
        self.stabilizable && self.cost_detectable && self.r_pd
    }
}

fn finite(name: &str, m: &Mat) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

impl Plant {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.b0.ncols()
    }
    pub fn n_delta(&self) -> usize {
        self.b1.ncols()
    }
    pub fn n_u(&self) -> usize {
        self.b2.ncols()
    }
    pub fn n_z(&self) -> usize {
        self.c1.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.c2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_x();
        let (nw, nd, nu, nz, ny) = (
            self.n_w(),
            self.n_delta(),
            self.n_u(),
            self.n_z(),
            self.n_y(),
        );
        let expect = [
            ("A", &self.a, (n, n)),
            ("B0", &self.b0, (n, nw)),
            ("B1", &self.b1, (n, nd)),
            ("B2", &self.b2, (n, nu)),
            ("C1", &self.c1, (nz, n)),
            ("C2", &self.c2, (ny, n)),
            ("D10", &self.d10, (nz, nw)),
            ("D11", &self.d11, (nz, nd)),
            ("D12", &self.d12, (nz, nu)),
            ("D20", &self.d20, (ny, nw)),
            ("D21", &self.d21, (ny, nd)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            finite(name, m)?;
        }
        Ok(())
    }

    /// `Q = C₁ᵀC₁`, `R = D₁₂ᵀD₁₂` (exact for plants built by [`lq_plant`]).
    pub fn q(&self) -> Mat {
        self.c1.transpose() * &self.c1
    }
    pub fn r(&self) -> Mat {
        self.d12.transpose() * &self.d12
    }

    /// `C₂ = I`, `D₂₀ = 0`, `D₂₁ = 0`.
    pub fn is_state_feedback(&self) -> bool {
        self.n_y() == self.n_x()
            && (&self.c2 - eye(self.n_x())).amax() == 0.0
            && self.d20.amax() == 0.0
            && self.d21.amax() == 0.0
    }

    /// Replaces the measurement channel.
    pub fn with_measurement(&self, c2: Mat, d20: Mat, d21: Mat) -> Result<Plant> {
        let p = Plant {
            c2,
            d20,
            d21,
            ..self.clone()
        };
        p.validate()?;
        Ok(p)
    }
}

/// Builds the LQ plant with `C₁ = [Q^½; 0]`, `D₁₂ = [0; R^½]`.
#[allow(clippy::too_many_arguments)]
pub fn lq_plant(
    a: Mat,
    b0: Mat,
    b1: Mat,
    b2: Mat,
    weights: &LqWeights,
    c2: Mat,
    d20: Mat,
    d21: Mat,
) -> Result<Plant> {
    let n = a.nrows();
    let nu = b2.ncols();
    let w = LqWeights::new(weights.q.clone(), weights.r.clone())?;
    if w.q.nrows() != n || w.r.nrows() != nu {
        return Err(Error::Dimension("weights do not match plant".into()));
    }
    let qh = matops::sqrtm_psd(&w.q)?;
    let rh = matops::sqrtm_psd(&w.r)?;
    let c1 = vstack(&[&qh, &zeros(nu, n)]);
    let d12 = vstack(&[&zeros(n, nu), &rh]);
    let nz = n + nu;
    let p = Plant {
        d10: zeros(nz, b0.ncols()),
        d11: zeros(nz, b1.ncols()),
        a,
        b0,
        b1,
        b2,
        c1,
        c2,
        d12,
        d20,
        d21,
    };
    p.validate()?;
    Ok(p)
}

/// PBH test: every eigenvalue with |λ| ≥ 1 − 1e-9 must satisfy
/// rank [λI − A, B] = n.
pub fn stabilizable(a: &Mat, b: &Mat) -> Result<bool> {
    let n = a.nrows();
    if n == 0 {
        return Ok(true);
    }
    let ev = matops::eigenvalues(a)?;
    for lam in ev {
        if lam.norm() < 1.0 - 1e-9 {
            continue;
        }
        // Real embedding of the complex matrix [λI − A, B].
        let re = Mat::identity(n, n) * lam.re - a;
        let im = Mat::identity(n, n) * lam.im;
        let top = hstack(&[&re, b, &(-&im), &zeros(n, b.ncols())]);
        let bot = hstack(&[&im, &zeros(n, b.ncols()), &re, b]);
        let m = vstack(&[&top, &bot]);
        // Complex rank n corresponds to real rank 2n.
        if matops::rank_tol(&m, matops::RANK_TOL) < 2 * n {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn detectable(a: &Mat, c: &Mat) -> Result<bool> {
    stabilizable(&a.transpose(), &c.transpose())
}

pub fn check_assumptions(p: &Plant, weights: &LqWeights) -> Result<AssumptionReport> {
    p.validate()?;
    let qh = matops::sqrtm_psd(&weights.q).unwrap_or_else(|_| weights.q.clone());
    let cross = &p.b0 * p.d20.transpose();
    Ok(AssumptionReport {
        stabilizable: stabilizable(&p.a, &p.b2)?,
        detectable: detectable(&p.a, &p.c2)?,
        cost_detectable: detectable(&p.a, &qh)?,
        r_pd: matops::pd_check(&weights.r, 0.0),
        noise_full_rank: matops::pd_check(&(&p.b0 * p.b0.transpose()), 1e-12),
        measurement_noise_full_rank: matops::pd_check(&(&p.d20 * p.d20.transpose()), 1e-12),
        noise_orthogonal: cross.amax() <= 1e-12 * (1.0 + p.b0.norm() * p.d20.norm()),
    })
}

/// Lower LFT `F_l(G, K)`.
pub fn close_loop(p: &Plant, k: &Controller) -> Result<ClosedLoop> {
    p.validate()?;
    if k.n_u() != p.n_u() || k.n_y() != p.n_y() {
        return Err(Error::Dimension(format!(
            "controller is {}x{} (u x y), plant needs {}x{}",
            k.n_u(),
            k.n_y(),
            p.n_u(),
            p.n_y()
        )));
    }
    let nk = k.n_states();
    if k.a_k.shape() != (nk, nk) || k.b_k.shape() != (nk, p.n_y()) || k.c_k.shape() != (p.n_u(), nk)
    {
        return Err(Error::Dimension(
            "controller realization is inconsistent".into(),
        ));
    }
    let b2dk = &p.b2 * &k.d_k;
    let d12dk = &p.d12 * &k.d_k;
    let a_cl = vstack(&[
        &hstack(&[&(&p.a + &b2dk * &p.c2), &(&p.b2 * &k.c_k)]),
        &hstack(&[&(&k.b_k * &p.c2), &k.a_k]),
    ]);
    let b0_cl = vstack(&[&(&p.b0 + &b2dk * &p.d20), &(&k.b_k * &p.d20)]);
    let b1_cl = vstack(&[&(&p.b1 + &b2dk * &p.d21), &(&k.b_k * &p.d21)]);
    let c_cl = hstack(&[&(&p.c1 + &d12dk * &p.c2), &(&p.d12 * &k.c_k)]);
    let d0_cl = &p.d10 + &d12dk * &p.d20;
    let d1_cl = &p.d11 + &d12dk * &p.d21;
    Ok(ClosedLoop {
        a_cl,
        b0_cl,
        b1_cl,
        c_cl,
        d0_cl,
        d1_cl,
    })
}

pub fn internally_stable(p: &Plant, k: &Controller) -> Result<bool> {
    let cl = close_loop(p, k)?;
    Ok(matops::spectral_radius(&cl.a_cl)? < 1.0)
}

/// Plant/weights exchange format: row-major nested arrays under the keys
/// `A, B0, B1, B2, C2, D20, D21, Q, R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PlantSpec {
    pub A: Vec<Vec<f64>>,
    pub B0: Vec<Vec<f64>>,
    pub B1: Vec<Vec<f64>>,
    pub B2: Vec<Vec<f64>>,
    pub C2: Vec<Vec<f64>>,
    pub D20: Vec<Vec<f64>>,
    pub D21: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub R: Vec<Vec<f64>>,
}

fn to_mat(name: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(zeros(0, cols_if_empty));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Dimension(format!("{name} has ragged rows")));
    }
    Ok(Mat::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

/// Nested row-major representation; `0×n` matrices serialize as `[]`.
pub fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parses a nested row-major array; `[]` becomes a `0×cols` matrix.
pub fn rows_mat(rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Mat> {
    to_mat("matrix", rows, cols_if_empty)
}

impl PlantSpec {
    pub fn from_plant(p: &Plant, w: &LqWeights) -> Self {
        PlantSpec {
            A: mat_rows(&p.a),
            B0: mat_rows(&p.b0),
            B1: mat_rows(&p.b1),
            B2: mat_rows(&p.b2),
            C2: mat_rows(&p.c2),
            D20: mat_rows(&p.d20),
            D21: mat_rows(&p.d21),
            Q: mat_rows(&w.q),
            R: mat_rows(&w.r),
        }
    }

    pub fn build(&self) -> Result<(Plant, LqWeights)> {
        let a = to_mat("A", &self.A, 0)?;
        let n = a.nrows();
        let b0 = to_mat("B0", &self.B0, 0)?;
        let b1 = to_mat("B1", &self.B1, 0)?;
        let b2 = to_mat("B2", &self.B2, 0)?;
        let c2 = to_mat("C2", &self.C2, n)?;
        let d20 = to_mat("D20", &self.D20, b0.ncols())?;
        let d21 = to_mat("D21", &self.D21, b1.ncols())?;
        let w = LqWeights::new(to_mat("Q", &self.Q, 0)?, to_mat("R", &self.R, 0)?)?;
        let p = lq_plant(a, b0, b1, b2, &w, c2, d20, d21)?;
        Ok((p, w))
    }
}
