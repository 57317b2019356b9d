//! Cross-checks between synthesis, evaluation and simulation.

mod common;

use advlq::evaluate::{nominal_cost, soft_objective};
use advlq::filtering::{filter_nominal_cov, robust_filter};
use advlq::hard_synthesis::{adv_power, soft_trace_value, synth_hard, HardOptions};
use advlq::matops::{from_rows, spectral_radius, trace, zeros, Mat};
use advlq::of_synthesis::{lqg_controller, solve_soft_of, LnOptions};
use advlq::plant::{close_loop, Controller};
use advlq::sf_synthesis::solve_soft_sf;
use advlq::sim::{rollout_linear, RolloutConfig};
use advlq::systems::{integrator, Setting};
use common::{randn, random_plant, rng};
use nalgebra::{Complex, DMatrix};

type CMat = DMatrix<Complex<f64>>;

fn cx(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

/// `C (zI − A)⁻¹ B + D` at a point of the unit circle.
fn tf(a: &Mat, b: &Mat, c: &Mat, d: &Mat, z: Complex<f64>) -> CMat {
    let n = a.nrows();
    if n == 0 {
        return cx(d);
    }
    let zi = CMat::identity(n, n) * z - cx(a);
    let x = zi.lu().solve(&cx(b)).unwrap();
    cx(c) * x + cx(d)
}

#[test]
fn closed_loop_matches_symbolic_lft() {
    for seed in 0..4 {
        let (p, _) = random_plant(seed);
        let mut r = rng(seed ^ 9);
        let nk = 2;
        let k = Controller {
            a_k: randn(&mut r, nk, nk) * 0.3,
            b_k: randn(&mut r, nk, p.n_y()),
            c_k: randn(&mut r, p.n_u(), nk),
            d_k: randn(&mut r, p.n_u(), p.n_y()) * 0.5,
        };
        let cl = close_loop(&p, &k).unwrap();
        for i in 0..20 {
            let w = 0.1 + 3.0 * i as f64 / 20.0;
            let z = Complex::from_polar(1.0, w);
            let g11 = tf(&p.a, &p.b1, &p.c1, &p.d11, z);
            let g12 = tf(&p.a, &p.b2, &p.c1, &p.d12, z);
            let g21 = tf(&p.a, &p.b1, &p.c2, &p.d21, z);
            let g22 = tf(&p.a, &p.b2, &p.c2, &zeros(p.n_y(), p.n_u()), z);
            let kz = tf(&k.a_k, &k.b_k, &k.c_k, &k.d_k, z);
            let ny = p.n_y();
            let loop_inv = (CMat::identity(ny, ny) - &g22 * &kz)
                .lu()
                .try_inverse()
                .unwrap();
            let want = g11 + g12 * &kz * loop_inv * g21;
            let got = tf(&cl.a_cl, &cl.b1_cl, &cl.c_cl, &cl.d1_cl, z);
            assert!(
                (&got - &want).norm() <= 1e-10 * (1.0 + want.norm()),
                "seed {seed}, ω {w}"
            );
        }
    }
}

#[test]
fn robust_output_feedback_beats_lqg_on_its_own_objective() {
    for rho in [0.15, 0.5, 1.0] {
        let pb = integrator(Setting::OutputFeedback, rho).unwrap();
        let lqg = lqg_controller(&pb.plant, &pb.weights).unwrap();
        for gamma in [12.0, 20.0, 50.0] {
            let s = solve_soft_of(&pb.plant, &pb.weights, gamma, &LnOptions::default()).unwrap();
            assert!(s.converged);
            let cl = close_loop(&pb.plant, &s.k).unwrap();
            let adv = adv_power(&cl, gamma).unwrap();
            let joint = &cl.a_cl + &cl.b1_cl * &adv.k_x;
            assert!(spectral_radius(&joint).unwrap() < 1.0);
            if let Ok(j_lqg) = soft_objective(&pb.plant, &lqg, gamma) {
                let j = soft_objective(&pb.plant, &s.k, gamma).unwrap();
                assert!(
                    j <= j_lqg + 1e-8 * j_lqg.abs(),
                    "ρ {rho} γ {gamma}: {j} > {j_lqg}"
                );
            }
        }
    }
}

/// Batch means of the per-step cost of a long rollout.
fn monte_carlo(p: &advlq::plant::Plant, k: &Controller, seed: u64) -> (f64, f64) {
    let batches = 50;
    let per = 4000;
    let cfg = RolloutConfig {
        seed,
        horizon: batches * per,
        record_signals: false,
        ..Default::default()
    };
    let tr = rollout_linear(p, k, &cfg).unwrap();
    let means: Vec<f64> = tr
        .cost
        .chunks(per)
        .skip(1)
        .map(|c| c.iter().sum::<f64>() / per as f64)
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (m, (var / means.len() as f64).sqrt())
}

#[test]
fn nominal_cost_matches_monte_carlo() {
    for (i, rho) in [0.15, 0.5, 1.0].into_iter().enumerate() {
        let pb = integrator(Setting::OutputFeedback, rho).unwrap();
        for k in [
            lqg_controller(&pb.plant, &pb.weights).unwrap(),
            solve_soft_of(&pb.plant, &pb.weights, 20.0, &LnOptions::default())
                .unwrap()
                .k,
        ] {
            let nc = nominal_cost(&pb.plant, &k).unwrap();
            let (m, se) = monte_carlo(&pb.plant, &k, 11 + i as u64);
            assert!((m - nc).abs() <= 3.0 * se, "ρ {rho}: MC {m} ± {se} vs {nc}");
        }
    }
}

#[test]
fn robust_predictor_error_grows_as_gamma_shrinks() {
    let pb = integrator(Setting::Prediction, 0.5).unwrap();
    let mut prev = f64::INFINITY;
    for gamma in [6.0, 7.0, 8.0, 10.0, 14.0, 20.0, 40.0, 100.0] {
        let f = robust_filter(&pb.plant, gamma, &LnOptions::default()).unwrap();
        let err = trace(&filter_nominal_cov(&pb.plant, &f.l_gamma).unwrap());
        assert!(err <= prev + 1e-9, "γ {gamma}: {err} > {prev}");
        prev = err;
    }
}

#[test]
fn hard_gamma_minimizes_the_dual() {
    let pb = integrator(Setting::StateFeedback, 0.5).unwrap();
    let eps = 0.1;
    let r = synth_hard(
        &pb.plant,
        &pb.weights,
        pb.mode,
        eps,
        &HardOptions::default(),
    )
    .unwrap();
    let at_star =
        soft_trace_value(&r.closed_loop, r.gamma_star).unwrap() + r.gamma_star.powi(2) * eps;
    for i in 0..=20 {
        let g = r.gamma_star * (1.0 + 0.05 * (i as f64 - 5.0) / 5.0);
        let Ok(sol) = solve_soft_sf(&pb.plant, &pb.weights, g) else {
            continue;
        };
        let cl = close_loop(&pb.plant, &Controller::static_gain(sol.f_gamma)).unwrap();
        let Ok(t) = soft_trace_value(&cl, g) else {
            continue;
        };
        assert!(at_star <= t + g * g * eps + 1e-6, "γ {g}");
    }
}

#[test]
fn scalar_setup_has_expected_shape() {
    let pb = advlq::systems::scalar(0.9, 0.5).unwrap();
    assert_eq!(pb.plant.a, from_rows(&[&[0.9]]));
    assert_eq!(pb.plant.c2, from_rows(&[&[0.5]]));
}
