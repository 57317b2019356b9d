//! Seeded closed-loop rollouts and the nonlinear cartpole environment.
//!
//! Noise is drawn from `ChaCha20Rng::seed_from_u64(seed)` through
//! `rand_distr::StandardNormal`, so a `(config, seed)` pair reproduces a
//! trace bit for bit within this implementation.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_synthesis::adv_power;
use crate::matops::{self, eye, hstack, zeros, Mat};
use crate::plant::{close_loop, lq_plant, Controller, LqWeights, Plant};

/// Identifier written into trace metadata.
pub const RNG_ID: &str =
    "chacha20(rand_chacha 0.9, seed_from_u64) + StandardNormal(rand_distr 0.5, ziggurat)";

/// States beyond this norm abort the rollout.
pub const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryPolicy {
    #[default]
    None,
    /// Worst-case LTI adversary at soft level `γ` on the closed loop.
    OptimalLti { gamma: f64 },
    /// `δ = K_x [x; ξ] + K_w w`.
    Custom { k_x: Mat, k_w: Mat },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub seed: u64,
    pub horizon: usize,
    /// Controller sample time; only the continuous cartpole reads it.
    pub dt: f64,
    /// Per-channel standard deviation of `w`; a single entry is broadcast.
    pub noise_std: Vec<f64>,
    pub adversary: AdversaryPolicy,
    /// Initial plant state; zero when absent.
    pub x0: Option<Vec<f64>>,
    /// Euler substeps per controller step for the continuous cartpole.
    pub substeps: usize,
    /// Keep per-step signals. Costs are always kept.
    pub record_signals: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            seed: 0,
            horizon: 1000,
            dt: 0.04,
            noise_std: vec![1.0],
            adversary: AdversaryPolicy::None,
            x0: None,
            substeps: 1,
            record_signals: true,
        }
    }
}

impl RolloutConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if self
            .noise_std
            .iter()
            .any(|s| !(*s >= 0.0) || !s.is_finite())
        {
            return Err(Error::Domain(
                "noise_std entries must be finite and nonnegative".into(),
            ));
        }
        if self.substeps == 0 {
            return Err(Error::Domain("substeps must be at least 1".into()));
        }
        Ok(())
    }

    fn stds(&self, n_w: usize) -> Result<Vec<f64>> {
        match self.noise_std.len() {
            0 => Ok(vec![0.0; n_w]),
            1 => Ok(vec![self.noise_std[0]; n_w]),
            k if k == n_w => Ok(self.noise_std.clone()),
            k => Err(Error::Dimension(format!(
                "noise_std has {k} entries, plant has {n_w} noise channels"
            ))),
        }
    }
}

/// Per-step record of a rollout. Signal vectors are empty when the config
/// did not ask for them; otherwise every vector has `horizon` entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub cost: Vec<f64>,
    pub running_avg: Vec<f64>,
    /// Time-average of `‖δ_t‖²`.
    pub mean_delta_power: f64,
}

impl Trace {
    fn with_capacity(n: usize, signals: bool) -> Self {
        let s = if signals { n } else { 0 };
        Trace {
            states: Vec::with_capacity(s),
            inputs: Vec::with_capacity(s),
            disturbances: Vec::with_capacity(s),
            cost: Vec::with_capacity(n),
            running_avg: Vec::with_capacity(n),
            mean_delta_power: 0.0,
        }
    }

    fn push_cost(&mut self, c: f64) {
        let n = self.cost.len() as f64;
        let prev = self.running_avg.last().copied().unwrap_or(0.0);
        self.cost.push(c);
        self.running_avg.push(prev + (c - prev) / (n + 1.0));
    }

    pub fn final_running_avg(&self) -> f64 {
        self.running_avg.last().copied().unwrap_or(f64::NAN)
    }

    /// CSV header `t, x0.., u0.., delta0.., cost, running_avg`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        let width = |v: &Vec<Vec<f64>>| v.first().map_or(0, Vec::len);
        h.extend((0..width(&self.states)).map(|i| format!("x{i}")));
        h.extend((0..width(&self.inputs)).map(|i| format!("u{i}")));
        h.extend((0..width(&self.disturbances)).map(|i| format!("delta{i}")));
        h.push("cost".into());
        h.push("running_avg".into());
        h
    }

    /// One row per step in [`Trace::csv_header`] order; `dt` scales `t`.
    pub fn csv_rows(&self, dt: f64) -> Vec<Vec<f64>> {
        (0..self.cost.len())
            .map(|t| {
                let mut r = vec![t as f64 * dt];
                for sig in [&self.states, &self.inputs, &self.disturbances] {
                    if let Some(v) = sig.get(t) {
                        r.extend_from_slice(v);
                    }
                }
                r.push(self.cost[t]);
                r.push(self.running_avg[t]);
                r
            })
            .collect()
    }
}

fn draw(rng: &mut ChaCha20Rng, stds: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        stds.len(),
        stds.iter().map(|s| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        }),
    )
}

fn initial_state(cfg: &RolloutConfig, n: usize) -> Result<DVector<f64>> {
    match &cfg.x0 {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::Dimension(format!(
            "x0 has {} entries, plant has {n} states",
            v.len()
        ))),
    }
}

/// Simulates the plant in feedback with `k`, with Gaussian `w` and the
/// configured adversary. The per-step cost is `‖z_t‖²`.
pub fn rollout_linear(p: &Plant, k: &Controller, cfg: &RolloutConfig) -> Result<Trace> {
    cfg.validate()?;
    let cl = close_loop(p, k)?;
    let (nx, nk, nw, nd) = (p.n_x(), k.n_states(), p.n_w(), p.n_delta());
    let (k_x, k_w) = match &cfg.adversary {
        AdversaryPolicy::None => (zeros(nd, nx + nk), zeros(nd, nw)),
        AdversaryPolicy::OptimalLti { gamma } => {
            let adv = adv_power(&cl, *gamma)?;
            (adv.k_x, adv.k_w)
        }
        AdversaryPolicy::Custom { k_x, k_w } => {
            if k_x.shape() != (nd, nx + nk) || k_w.shape() != (nd, nw) {
                return Err(Error::Dimension(
                    "custom adversary gains do not match the closed loop".into(),
                ));
            }
            (k_x.clone(), k_w.clone())
        }
    };
    let stds = cfg.stds(nw)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut x = initial_state(cfg, nx)?;
    let mut xi = DVector::zeros(nk);
    let mut tr = Trace::with_capacity(cfg.horizon, cfg.record_signals);
    let mut delta_pow = 0.0;
    for t in 0..cfg.horizon {
        let w = draw(&mut rng, &stds);
        let joint = DVector::from_iterator(nx + nk, x.iter().chain(xi.iter()).copied());
        let delta = &k_x * &joint + &k_w * &w;
        let y = &p.c2 * &x + &p.d20 * &w + &p.d21 * &delta;
        let u = &k.c_k * &xi + &k.d_k * &y;
        let z = &p.c1 * &x + &p.d10 * &w + &p.d11 * &delta + &p.d12 * &u;
        if cfg.record_signals {
            tr.states.push(x.iter().copied().collect());
            tr.inputs.push(u.iter().copied().collect());
            tr.disturbances.push(delta.iter().copied().collect());
        }
        tr.push_cost(z.norm_squared());
        delta_pow += delta.norm_squared();
        x = &p.a * &x + &p.b0 * &w + &p.b1 * &delta + &p.b2 * &u;
        xi = &k.a_k * &xi + &k.b_k * &y;
        if !(x.norm() <= DIVERGENCE_NORM && xi.norm() <= DIVERGENCE_NORM) {
            return Err(Error::SimDivergence { step: t + 1 });
        }
    }
    tr.mean_delta_power = delta_pow / cfg.horizon as f64;
    Ok(tr)
}

/// Cart with an inverted pole. `g` follows the sign convention of the
/// published parameter set (negative), and the model places the unstable
/// equilibrium at `θ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub m_cart: f64,
    pub m_pole: f64,
    pub l_pole: f64,
    pub g: f64,
    pub d_h: f64,
    pub d_theta: f64,
    /// Fixation point observed by the camera, measured along the pole.
    pub l0: f64,
}

impl CartpoleParams {
    pub fn standard(l0: f64) -> Self {
        CartpoleParams {
            m_cart: 1.0,
            m_pole: 0.1,
            l_pole: 1.0,
            g: -10.0,
            d_h: 0.2,
            d_theta: 0.2,
            l0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_cart > 0.0 && self.m_pole > 0.0) {
            return Err(Error::Domain("masses must be positive".into()));
        }
        if !(self.l0 > 0.0 && self.l0 < self.l_pole) {
            return Err(Error::Domain(format!(
                "fixation point {} must lie strictly inside (0, {})",
                self.l0, self.l_pole
            )));
        }
        if !self.g.is_finite() || !self.d_h.is_finite() || !self.d_theta.is_finite() {
            return Err(Error::Domain("non-finite cartpole parameter".into()));
        }
        Ok(())
    }

    /// Gravity magnitude pulling the pole away from upright.
    fn g_up(&self) -> f64 {
        -self.g
    }

    /// Kinetic plus potential energy; conserved when undamped and unforced.
    pub fn energy(&self, s: &[f64; 4]) -> f64 {
        let [_, th, hd, thd] = *s;
        let (mc, m, l) = (self.m_cart, self.m_pole, self.l_pole);
        0.5 * (mc + m) * hd * hd
            + m * l * hd * thd * th.cos()
            + 0.5 * m * l * l * thd * thd
            + m * self.g_up() * l * th.cos()
    }

    /// Camera reading `h + ℓ₀ sin θ`.
    pub fn measure(&self, s: &[f64; 4]) -> f64 {
        s[0] + self.l0 * s[1].sin()
    }
}

/// Accelerations `(ḧ, θ̈)` at state `(h, θ, ḣ, θ̇)` under force `f`.
pub fn cartpole_accel(pr: &CartpoleParams, s: &[f64; 4], f: f64) -> Result<(f64, f64)> {
    let [_, th, hd, thd] = *s;
    let (mc, m, l) = (pr.m_cart, pr.m_pole, pr.l_pole);
    let (st, ct) = th.sin_cos();
    // Unknowns are the damped accelerations ḧ + d_h ḣ and θ̈ + d_θ θ̇.
    let (m11, m12, m21, m22) = (mc + m, m * l * ct, ct, l);
    let r1 = f + m * l * thd * thd * st;
    let r2 = pr.g_up() * st;
    let det = m11 * m22 - m12 * m21;
    if det.abs() < 1e-12 * (m11 * m22).abs() || !det.is_finite() {
        return Err(Error::Integration {
            step: 0,
            detail: format!("singular mass matrix at θ = {th}"),
        });
    }
    let a_h = (m22 * r1 - m12 * r2) / det;
    let a_t = (m11 * r2 - m21 * r1) / det;
    Ok((a_h - pr.d_h * hd, a_t - pr.d_theta * thd))
}

/// One explicit Euler step with force `u + w + δ` held over `dt`.
pub fn cartpole_step(
    pr: &CartpoleParams,
    s: &[f64; 4],
    u: f64,
    w: f64,
    delta: f64,
    dt: f64,
) -> Result<[f64; 4]> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if s[1].abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Integration {
            step: 0,
            detail: format!("pole angle {} left the observable range", s[1]),
        });
    }
    let (hdd, thdd) = cartpole_accel(pr, s, u + w + delta)?;
    Ok([
        s[0] + dt * s[2],
        s[1] + dt * s[3],
        s[2] + dt * hdd,
        s[3] + dt * thdd,
    ])
}

/// Continuous-time Jacobians `(A_c, B_c)` at the upright equilibrium.
pub fn cartpole_jacobian(pr: &CartpoleParams) -> (Mat, Mat) {
    let (mc, m, l, g) = (pr.m_cart, pr.m_pole, pr.l_pole, pr.g_up());
    // Linearized mass matrix [[M + m, mℓ], [1, ℓ]] has determinant Mℓ.
    let det = mc * l;
    // Columns: θ and force; the damping terms enter additively.
    let dh_dth = -m * l * g / det;
    let dt_dth = (mc + m) * g / det;
    let dh_df = l / det;
    let dt_df = -1.0 / det;
    let a = matops::from_rows(&[
        &[0.0, 0.0, 1.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[0.0, dh_dth, -pr.d_h, 0.0],
        &[0.0, dt_dth, 0.0, -pr.d_theta],
    ]);
    let b = matops::from_rows(&[&[0.0], &[0.0], &[dh_df], &[dt_df]]);
    (a, b)
}

/// Where the adversary enters the linearized cartpole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CartpoleChannels {
    /// Alongside the input, like the noise.
    #[default]
    Input,
    /// Every state and the measurement through identity maps.
    Widened,
}

/// Euler-discretized linearization with `Q = I`, `R = 1`. The noise is
/// `w = (w_u, v)`: input noise through `B` and measurement noise of
/// standard deviation `meas_std`.
pub fn linearize_cartpole(
    pr: &CartpoleParams,
    dt: f64,
    channels: CartpoleChannels,
    meas_std: f64,
) -> Result<(Plant, LqWeights)> {
    pr.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let (ac, bc) = cartpole_jacobian(pr);
    let a = eye(4) + ac * dt;
    let b = bc * dt;
    let b0 = hstack(&[&b, &zeros(4, 1)]);
    let d20 = matops::from_rows(&[&[0.0, meas_std]]);
    let c2 = matops::from_rows(&[&[1.0, pr.l0, 0.0, 0.0]]);
    let (b1, d21) = match channels {
        CartpoleChannels::Input => (b.clone(), zeros(1, 1)),
        CartpoleChannels::Widened => (
            hstack(&[&eye(4), &zeros(4, 1)]),
            matops::from_rows(&[&[0.0, 0.0, 0.0, 0.0, 1.0]]),
        ),
    };
    let w = LqWeights::identity(4, 1);
    let p = lq_plant(a, b0, b1, b, &w, c2, d20, d21)?;
    Ok((p, w))
}

/// Runs the continuous cartpole under a discrete controller with
/// zero-order hold. Only input noise acts; the camera is noiseless. The
/// per-step cost is `‖x‖² + u²`.
pub fn rollout_nonlinear_cartpole(
    pr: &CartpoleParams,
    k: &Controller,
    cfg: &RolloutConfig,
) -> Result<Trace> {
    cfg.validate()?;
    pr.validate()?;
    if cfg.adversary != AdversaryPolicy::None {
        return Err(Error::Domain(
            "the nonlinear cartpole rollout takes no adversary".into(),
        ));
    }
    if k.n_u() != 1 || k.n_y() != 1 {
        return Err(Error::Dimension(
            "cartpole controllers map one measurement to one input".into(),
        ));
    }
    let std = cfg.stds(1)?[0];
    let x0 = initial_state(cfg, 4)?;
    let mut s = [x0[0], x0[1], x0[2], x0[3]];
    let mut xi = DVector::zeros(k.n_states());
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let h = cfg.dt / cfg.substeps as f64;
    let mut tr = Trace::with_capacity(cfg.horizon, cfg.record_signals);
    for t in 0..cfg.horizon {
        let y = DVector::from_element(1, pr.measure(&s));
        let u = (&k.c_k * &xi + &k.d_k * &y)[0];
        let z: f64 = StandardNormal.sample(&mut rng);
        let w = std * z;
        if cfg.record_signals {
            tr.states.push(s.to_vec());
            tr.inputs.push(vec![u]);
            tr.disturbances.push(vec![]);
        }
        tr.push_cost(s.iter().map(|v| v * v).sum::<f64>() + u * u);
        for _ in 0..cfg.substeps {
            s = cartpole_step(pr, &s, u, w, 0.0, h).map_err(|e| match e {
                Error::Integration { detail, .. } => Error::Integration { step: t, detail },
                e => e,
            })?;
        }
        xi = &k.a_k * &xi + &k.b_k * &y;
        if !(s.iter().all(|v| v.abs() <= DIVERGENCE_NORM) && xi.norm() <= DIVERGENCE_NORM) {
            return Err(Error::SimDivergence { step: t + 1 });
        }
    }
    Ok(tr)
}

/// Finite-difference Jacobian of the continuous cartpole vector field.
pub fn cartpole_jacobian_fd(pr: &CartpoleParams, eps: f64) -> Result<(Mat, Mat)> {
    let field = |s: &[f64; 4], f: f64| -> Result<[f64; 4]> {
        let (hdd, thdd) = cartpole_accel(pr, s, f)?;
        Ok([s[2], s[3], hdd, thdd])
    };
    let mut a = zeros(4, 4);
    for j in 0..4 {
        let mut sp = [0.0; 4];
        let mut sm = [0.0; 4];
        sp[j] = eps;
        sm[j] = -eps;
        let (fp, fm) = (field(&sp, 0.0)?, field(&sm, 0.0)?);
        for i in 0..4 {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    let (fp, fm) = (field(&[0.0; 4], eps)?, field(&[0.0; 4], -eps)?);
    let b = Mat::from_fn(4, 1, |i, _| (fp[i] - fm[i]) / (2.0 * eps));
    Ok((a, b))
}

/// Solves for the damped accelerations directly from the 2x2 system; used
/// as a cross-check of the closed-form elimination.
#[cfg(test)]
fn cartpole_accel_matrix(pr: &CartpoleParams, s: &[f64; 4], f: f64) -> Result<(f64, f64)> {
    let [_, th, hd, thd] = *s;
    let (mc, m, l) = (pr.m_cart, pr.m_pole, pr.l_pole);
    let mm = matops::from_rows(&[&[mc + m, m * l * th.cos()], &[th.cos(), l]]);
    let rhs = matops::from_rows(&[&[f + m * l * thd * thd * th.sin()], &[pr.g_up() * th.sin()]]);
    let x = matops::solve(&mm, &rhs)?;
    Ok((x[(0, 0)] - pr.d_h * hd, x[(1, 0)] - pr.d_theta * thd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::nominal_cost;
    use crate::hard_synthesis::{nominal_controller, SynthMode};
    use crate::matops::{from_rows, scalar};

    fn integrator_of() -> (Plant, LqWeights) {
        let w = LqWeights::identity(2, 1);
        let b = hstack(&[&eye(2), &zeros(2, 1)]);
        let p = lq_plant(
            from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]),
            b.clone(),
            b,
            from_rows(&[&[0.0], &[1.0]]),
            &w,
            from_rows(&[&[1.0, 0.0]]),
            from_rows(&[&[0.0, 0.0, 1.0]]),
            from_rows(&[&[0.0, 0.0, 1.0]]),
        )
        .unwrap();
        (p, w)
    }

    #[test]
    fn quiet_rollout_is_zero() {
        let (p, w) = integrator_of();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let cfg = RolloutConfig {
            noise_std: vec![0.0],
            horizon: 50,
            ..Default::default()
        };
        let tr = rollout_linear(&p, &k, &cfg).unwrap();
        assert_eq!(tr.cost.len(), 50);
        assert!(tr.states.iter().flatten().all(|v| *v == 0.0));
        assert!(tr.cost.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn running_avg_is_prefix_mean_and_seeded() {
        let (p, w) = integrator_of();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let cfg = RolloutConfig {
            seed: 7,
            horizon: 300,
            ..Default::default()
        };
        let a = rollout_linear(&p, &k, &cfg).unwrap();
        let b = rollout_linear(&p, &k, &cfg).unwrap();
        assert_eq!(a, b);
        let mut s = 0.0;
        for (t, c) in a.cost.iter().enumerate() {
            s += c;
            assert!((a.running_avg[t] - s / (t + 1) as f64).abs() < 1e-9 * (1.0 + s));
        }
        let c = rollout_linear(&p, &k, &RolloutConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.cost, c.cost);
    }

    #[test]
    fn long_run_matches_nominal_cost() {
        let (p, w) = integrator_of();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let nc = nominal_cost(&p, &k).unwrap();
        let cfg = RolloutConfig {
            seed: 3,
            horizon: 400_000,
            record_signals: false,
            ..Default::default()
        };
        let tr = rollout_linear(&p, &k, &cfg).unwrap();
        assert!(
            (tr.final_running_avg() / nc - 1.0).abs() < 0.02,
            "{} vs {nc}",
            tr.final_running_avg()
        );
    }

    #[test]
    fn unstable_loop_diverges_with_step() {
        let w = LqWeights::identity(1, 1);
        let p = lq_plant(
            scalar(2.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            &w,
            scalar(1.0),
            zeros(1, 1),
            zeros(1, 1),
        )
        .unwrap();
        let cfg = RolloutConfig {
            horizon: 1000,
            ..Default::default()
        };
        let e = rollout_linear(&p, &Controller::static_gain(zeros(1, 1)), &cfg).unwrap_err();
        assert!(matches!(e, Error::SimDivergence { step } if step > 10 && step < 100));
    }

    #[test]
    fn custom_adversary_shape_checked() {
        let (p, w) = integrator_of();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let cfg = RolloutConfig {
            adversary: AdversaryPolicy::Custom {
                k_x: zeros(3, 1),
                k_w: zeros(3, 3),
            },
            ..Default::default()
        };
        assert!(matches!(
            rollout_linear(&p, &k, &cfg),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn upright_is_a_fixed_point_and_unstable() {
        let pr = CartpoleParams::standard(0.9);
        let s = cartpole_step(&pr, &[0.0; 4], 0.0, 0.0, 0.0, 0.04).unwrap();
        assert_eq!(s, [0.0; 4]);
        let mut s = [0.0, 0.01, 0.0, 0.0];
        for _ in 0..20 {
            s = cartpole_step(&pr, &s, 0.0, 0.0, 0.0, 0.01).unwrap();
        }
        assert!(s[1] > 0.01);
    }

    #[test]
    fn accel_elimination_matches_linear_solve() {
        let pr = CartpoleParams::standard(0.9);
        for s in [[0.1, 0.3, -0.2, 0.5], [0.0, -1.2, 1.0, -2.0]] {
            let a = cartpole_accel(&pr, &s, 0.7).unwrap();
            let b = cartpole_accel_matrix(&pr, &s, 0.7).unwrap();
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let pr = CartpoleParams::standard(0.9);
        let (a, b) = cartpole_jacobian(&pr);
        let (af, bf) = cartpole_jacobian_fd(&pr, 1e-6).unwrap();
        assert!((a - af).amax() < 1e-6);
        assert!((b - bf).amax() < 1e-6);
    }

    #[test]
    fn linearization_regression_and_limits() {
        let pr = CartpoleParams::standard(0.9);
        let (p, _) = linearize_cartpole(&pr, 0.04, CartpoleChannels::Input, 1.0).unwrap();
        // Hand-evaluated: g = 10, M = 1, m = 0.1, ℓ = 1.
        let expected = from_rows(&[
            &[1.0, 0.0, 0.04, 0.0],
            &[0.0, 1.0, 0.0, 0.04],
            &[0.0, -0.04, 1.0 - 0.008, 0.0],
            &[0.0, 0.44, 0.0, 1.0 - 0.008],
        ]);
        assert!((&p.a - expected).amax() < 1e-14);
        assert!((&p.b2 - from_rows(&[&[0.0], &[0.0], &[0.04], &[-0.04]])).amax() < 1e-14);
        assert_eq!(p.c2, from_rows(&[&[1.0, 0.9, 0.0, 0.0]]));
        let (q, _) = linearize_cartpole(
            &CartpoleParams::standard(0.5),
            0.04,
            CartpoleChannels::Input,
            1.0,
        )
        .unwrap();
        assert_eq!(p.a, q.a);
        let (t, _) = linearize_cartpole(&pr, 1e-10, CartpoleChannels::Input, 1.0).unwrap();
        assert!((t.a - eye(4)).amax() < 1e-8);
        let (wide, _) = linearize_cartpole(&pr, 0.04, CartpoleChannels::Widened, 1.0).unwrap();
        assert_eq!(wide.n_delta(), 5);
        assert!(linearize_cartpole(
            &CartpoleParams::standard(1.0),
            0.04,
            CartpoleChannels::Input,
            1.0
        )
        .is_err());
    }

    #[test]
    fn energy_drift_is_first_order() {
        let mut pr = CartpoleParams::standard(0.9);
        pr.d_h = 0.0;
        pr.d_theta = 0.0;
        let drift = |dt: f64| {
            let mut s = [0.0, 0.2, 0.1, 0.0];
            let e0 = pr.energy(&s);
            for _ in 0..(0.3 / dt).round() as usize {
                s = cartpole_step(&pr, &s, 0.0, 0.0, 0.0, dt).unwrap();
            }
            (pr.energy(&s) - e0).abs() / e0.abs()
        };
        let (d1, d2) = (drift(1e-3), drift(5e-4));
        assert!(d1 < 1e-2, "{d1}");
        assert!((d1 / d2 - 2.0).abs() < 0.2, "{}", d1 / d2);
    }

    #[test]
    fn nonlinear_and_linearized_agree_near_upright() {
        let pr = CartpoleParams::standard(0.9);
        let (p, w) = linearize_cartpole(&pr, 0.04, CartpoleChannels::Input, 1.0).unwrap();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let cfg = RolloutConfig {
            horizon: 100,
            noise_std: vec![0.0],
            x0: Some(vec![0.0, 0.01, 0.0, 0.0]),
            ..Default::default()
        };
        let nl = rollout_nonlinear_cartpole(&pr, &k, &cfg).unwrap();
        let lin = rollout_linear(&p, &k, &cfg).unwrap();
        for t in 1..100 {
            let a: f64 = nl.states[t].iter().map(|v| v * v).sum::<f64>().sqrt();
            let b: f64 = lin.states[t].iter().map(|v| v * v).sum::<f64>().sqrt();
            if b > 1e-6 {
                assert!(a / b <= 2.0 && b / a <= 2.0, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lqg_stabilizes_nonlinear_cartpole() {
        let pr = CartpoleParams::standard(0.9);
        let (p, w) = linearize_cartpole(&pr, 0.04, CartpoleChannels::Input, 1.0).unwrap();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let cfg = RolloutConfig {
            horizon: 500,
            noise_std: vec![0.0],
            x0: Some(vec![0.0, 0.05, 0.0, 0.0]),
            ..Default::default()
        };
        let tr = rollout_nonlinear_cartpole(&pr, &k, &cfg).unwrap();
        let last = tr.states.last().unwrap();
        assert!(last.iter().all(|v| v.abs() < 1e-3), "{last:?}");
        assert!(tr.cost[499] < tr.cost[0]);
    }

    #[test]
    fn trace_csv_layout() {
        let (p, w) = integrator_of();
        let k = nominal_controller(&p, &w, SynthMode::OutputFeedback).unwrap();
        let tr = rollout_linear(
            &p,
            &k,
            &RolloutConfig {
                horizon: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let h = tr.csv_header();
        assert_eq!(
            h,
            [
                "t",
                "x0",
                "x1",
                "u0",
                "delta0",
                "delta1",
                "delta2",
                "cost",
                "running_avg"
            ]
        );
        assert!(tr.csv_rows(0.5).iter().all(|r| r.len() == h.len()));
    }
}
