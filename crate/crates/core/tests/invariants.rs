//! Property tests over seeded random systems.

mod common;

use advlq::bounds::{gramian_ell, recompute, sf_lower_bound, sf_upper_bound};
use advlq::evaluate::{adversarial_cost, hinf_norm, nominal_cost};
use advlq::filtering::{kalman_gain, nominal_gap_identity};
use advlq::hard_synthesis::adv_power;
use advlq::matops::{
    self, block_diag, dare, dare_indefinite, dare_residual, dlyap, dlyap_residual, eye, fro,
    hstack, min_eig_sym, psd_check, sigma_min, spectral_radius, Mat,
};
use advlq::of_synthesis::{factor_psi, psi_reconstruction_error};
use advlq::plant::{check_assumptions, close_loop, Controller, Plant};
use advlq::sf_synthesis::{gamma_inf, m_of, solve_soft_sf};
use advlq::sim::{rollout_linear, AdversaryPolicy, RolloutConfig};
use common::{
    direction, randn, random_dynamics, random_plant, rel, rng, stabilizable_pair, state_feedback,
};
use proptest::prelude::*;
use rand::Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn riccati_and_lyapunov_residuals(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=3) {
        let (a, b) = stabilizable_pair(seed, n, m);
        let p = dare(&a, &b, &eye(n), &eye(m)).unwrap();
        prop_assert!(dare_residual(&a, &b, &eye(n), &eye(m), &p) <= 1e-8);
        prop_assert!(psd_check(&p, 1e-9));
        let stable = &a * (0.95 / spectral_radius(&a).unwrap().max(1e-3));
        let q = randn(&mut rng(seed ^ 1), n, n);
        let q = &q * q.transpose();
        let x = dlyap(&stable, &q).unwrap();
        prop_assert!(dlyap_residual(&stable, &q, &x) <= 1e-8);
    }

    #[test]
    fn huge_gamma_game_matches_dare(seed in any::<u64>(), n in 1usize..=5) {
        let (a, b2) = stabilizable_pair(seed, n, 1);
        let b1 = randn(&mut rng(seed ^ 2), n, 1);
        let r = block_diag(&(-eye(1) * 1e12), &eye(1));
        let pg = dare_indefinite(&a, &hstack(&[&b1, &b2]), &eye(n), &r, 1).unwrap();
        let p = dare(&a, &b2, &eye(n), &eye(1)).unwrap();
        prop_assert!(fro(&(&pg - &p)) <= 1e-4 * fro(&p));
    }

    #[test]
    fn solvers_are_deterministic(seed in any::<u64>(), n in 1usize..=4) {
        let (a, b) = stabilizable_pair(seed, n, 1);
        let p1 = dare(&a, &b, &eye(n), &eye(1)).unwrap();
        let p2 = dare(&a, &b, &eye(n), &eye(1)).unwrap();
        prop_assert_eq!(p1, p2);
        let (pl, w) = random_plant(seed);
        let sf = state_feedback(pl);
        let g = 2.0 * gamma_inf(&sf, &w, 1e-6).unwrap();
        prop_assert_eq!(solve_soft_sf(&sf, &w, g).unwrap(), solve_soft_sf(&sf, &w, g).unwrap());
    }

    #[test]
    fn game_solution_structure(seed in any::<u64>(), u in 0.01f64..2.0, v in 0.01f64..3.0) {
        let (pl, w) = random_plant(seed);
        let p = state_feedback(pl);
        let gi = gamma_inf(&p, &w, 1e-9).unwrap();
        let g2 = gi * (1.01 + u);
        let g1 = g2 * (1.0 + v);
        let s2 = solve_soft_sf(&p, &w, g2).unwrap();
        let s1 = solve_soft_sf(&p, &w, g1).unwrap();
        prop_assert!(min_eig_sym(&(&s2.p_gamma - &s1.p_gamma)) >= -1e-8);
        prop_assert!(s1.objective <= s2.objective + 1e-8 * s2.objective);
        for s in [&s1, &s2] {
            let m = m_of(&p.b1, &s.p_gamma, s.gamma).unwrap();
            prop_assert!(fro(&(m - &s.m_gamma)) <= 1e-9 * (1.0 + fro(&s.m_gamma)));
            let acl = &p.a + &p.b2 * &s.f_gamma;
            prop_assert!(spectral_radius(&acl).unwrap() < 1.0);
            prop_assert!(spectral_radius(&(acl + &p.b1 * &s.e_gamma)).unwrap() < 1.0);
            let f = factor_psi(&s.psi, p.n_delta(), p.n_u()).unwrap();
            prop_assert!(psi_reconstruction_error(&s.psi, &f) <= 1e-9);
        }
    }

    #[test]
    fn assumptions_invariant_under_rotation(seed in any::<u64>()) {
        let (p, w) = random_plant(seed);
        let t = randn(&mut rng(seed ^ 3), p.n_x(), p.n_x()).qr().q();
        let rotated = Plant {
            a: t.transpose() * &p.a * &t,
            b0: t.transpose() * &p.b0,
            b1: t.transpose() * &p.b1,
            b2: t.transpose() * &p.b2,
            c1: &p.c1 * &t,
            c2: &p.c2 * &t,
            ..p.clone()
        };
        let w_rot = advlq::plant::LqWeights::new(
            matops::symmetrize(&(t.transpose() * &w.q * &t)),
            w.r.clone(),
        ).unwrap();
        prop_assert_eq!(check_assumptions(&p, &w).unwrap(), check_assumptions(&rotated, &w_rot).unwrap());
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn adversary_power_on_a_fixed_loop(seed in any::<u64>()) {
        let (pl, w) = random_plant(seed);
        let p = state_feedback(pl);
        let g = 2.0 * gamma_inf(&p, &w, 1e-6).unwrap();
        let k = Controller::static_gain(solve_soft_sf(&p, &w, g).unwrap().f_gamma);
        let cl = close_loop(&p, &k).unwrap();
        let h = hinf_norm(&cl, 1e-10).unwrap();
        prop_assert!(adv_power(&cl, 0.99 * h).unwrap_err().is_infeasible());
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let gamma = h * 1.01 * 100f64.powf(i as f64 / 19.0);
            let r = adv_power(&cl, gamma).unwrap();
            prop_assert!(r.power <= prev);
            prop_assert!((r.recompute_power().unwrap() - r.power).abs() <= 1e-10 * (1.0 + r.power));
            prev = r.power;
        }
        let nc = nominal_cost(&p, &k).unwrap();
        let ac = adversarial_cost(&p, &k, 0.05, 1e-8).unwrap();
        prop_assert!(ac.ac >= nc);
    }

    #[test]
    fn kalman_gain_is_optimal(seed in any::<u64>()) {
        let (p, _) = random_plant(seed);
        let k = kalman_gain(&p).unwrap();
        let mut r = rng(seed ^ 4);
        let mut tried = 0;
        while tried < 50 {
            let scale = 0.5 * r.random::<f64>();
            let l = &k.l + direction(&mut r, k.l.nrows(), k.l.ncols(), scale.max(1e-6));
            if spectral_radius(&(&p.a + &l * &p.c2)).unwrap() >= 0.999 {
                continue;
            }
            tried += 1;
            let (direct, identity) = nominal_gap_identity(&p, &l).unwrap();
            prop_assert!(direct >= -1e-10);
            prop_assert!((direct - identity).abs() <= 1e-8 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn gramians_grow_and_reports_recompute(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let a = random_dynamics(&mut r, n, 0.2, 0.95);
        let b = randn(&mut r, n, 1);
        let mut prev = 0.0;
        for ell in 1..=8 {
            let s = sigma_min(&gramian_ell(&a, &b, ell));
            prop_assert!(s >= prev - 1e-12 * (1.0 + s));
            prev = s;
        }
        let (pl, w) = random_plant(seed);
        let p = state_feedback(pl);
        let g = 3.0 * gamma_inf(&p, &w, 1e-6).unwrap();
        let up = sf_upper_bound(&p, &w, g, p.n_x(), None).unwrap();
        prop_assert!((recompute(&up).unwrap() - up.value).abs() <= 1e-12 * (1.0 + up.value.abs()));
        let lo = sf_lower_bound(&p, &w, g).unwrap();
        prop_assert!((recompute(&lo).unwrap() - lo.value).abs() <= 1e-12 * (1.0 + lo.value.abs()));
        prop_assert!(up.sandwich_ok(1e-9) && lo.sandwich_ok(1e-9));
    }

    #[test]
    fn upper_bound_scales_with_noise_power(seed in any::<u64>()) {
        let (pl, w) = random_plant(seed);
        let p = state_feedback(pl);
        let g = 3.0 * gamma_inf(&p, &w, 1e-6).unwrap();
        let loud = Plant { b0: &p.b0 * 2.0, ..p.clone() };
        let one = sf_upper_bound(&p, &w, g, p.n_x(), None).unwrap().value;
        let two = sf_upper_bound(&loud, &w, g, p.n_x(), None).unwrap().value;
        prop_assert!(rel(two, 4.0 * one) <= 1e-9);
    }

    #[test]
    fn rollouts_are_bit_reproducible(seed in any::<u64>()) {
        let (pl, w) = random_plant(seed);
        let p = state_feedback(pl);
        let g = 2.0 * gamma_inf(&p, &w, 1e-6).unwrap();
        let k = Controller::static_gain(solve_soft_sf(&p, &w, g).unwrap().f_gamma);
        let cfg = RolloutConfig {
            seed,
            horizon: 200,
            adversary: AdversaryPolicy::OptimalLti { gamma: g },
            ..Default::default()
        };
        prop_assert_eq!(rollout_linear(&p, &k, &cfg).unwrap(), rollout_linear(&p, &k, &cfg).unwrap());
    }
}

#[test]
fn random_plants_are_well_posed() {
    for seed in 0..20 {
        let (p, w) = random_plant(seed);
        p.validate().unwrap();
        assert!(check_assumptions(&p, &w).unwrap().stabilizable);
        let m: Mat = &p.c1.transpose() * &p.d12;
        assert!(m.amax() == 0.0);
    }
}
