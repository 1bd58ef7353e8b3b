mod common;

use common::max_abs;
use extphase::dynamics::{uniform_grid, IntegratorPolicy, Oscillator};
use extphase::invariants::{
    ermakov_residual, invariant_drift_report, lewis_invariant, solve_coupled, solve_ermakov,
    ErmakovConfig, InvariantError,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn invariant_is_conserved_under_damping(
        m in 0.5f64..2.0, w in 0.5f64..3.0, eta in 0.0f64..1.0, nu in 0.2f64..3.0,
        rho0 in 0.5f64..2.0, rho_dot0 in -0.5f64..0.5, s in prop::array::uniform4(-1.0f64..1.0),
    ) {
        prop_assume!(max_abs(&s) > 0.1);
        let osc = Oscillator::caldirola_kanai(m, w, eta).unwrap();
        let cfg = ErmakovConfig::new(nu, rho0, rho_dot0).unwrap();
        let grid = uniform_grid(0.0, 10.0, 400);
        let (traj, sol) = solve_coupled(&osc, &cfg, &s, &grid, &IntegratorPolicy::default()).unwrap();
        let inv = lewis_invariant(&traj, &sol, &osc, nu).unwrap();
        prop_assert!(inv.iter().all(|&i| i >= 0.0));
        let report = invariant_drift_report(&grid, &inv);
        prop_assert!(report.relative && report.max_drift < 1e-6, "drift {:e}", report.max_drift);
    }

    #[test]
    fn equilibrium_invariant_is_proportional_to_energy(
        m in 0.5f64..2.0, w in 0.5f64..3.0, rho0 in 0.5f64..2.0, s in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let osc = Oscillator::caldirola_kanai(m, w, 0.0).unwrap();
        let cfg = ErmakovConfig::equilibrium(&osc, 0.0, rho0).unwrap();
        let grid = uniform_grid(0.0, 10.0, 100);
        let (traj, sol) = solve_coupled(&osc, &cfg, &s, &grid, &IntegratorPolicy::default()).unwrap();
        let inv = lewis_invariant(&traj, &sol, &osc, cfg.nu).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let st = traj.state(k);
            let e = osc.energy(t, &[st[0], st[1], st[2], st[3]]).unwrap();
            let expected = cfg.nu / w * e;
            prop_assert!((inv[k] - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn auxiliary_equation_residual_is_small(
        w in 0.5f64..3.0, eta in 0.0f64..1.0, nu in 0.2f64..3.0, spread in 0.7f64..1.5,
    ) {
        let osc = Oscillator::caldirola_kanai(1.0, w, eta).unwrap();
        // Start within a factor 1.5 of the equilibrium radius.
        let rho0 = spread * (nu / w).sqrt();
        let cfg = ErmakovConfig::new(nu, rho0, 0.1).unwrap();
        let sol = solve_ermakov(&osc, &cfg, &uniform_grid(0.0, 10.0, 4000), &IntegratorPolicy::default()).unwrap();
        let r = ermakov_residual(&sol, &osc, nu).unwrap();
        prop_assert!(r < 1e-6, "residual {r:e}");
    }
}

#[test]
fn constant_ansatz_is_reproduced() {
    for (m, w, nu) in [(1.0, 2.0, 2.0), (1.5, 0.7, 0.4), (0.6, 2.5, 3.0)] {
        let osc = Oscillator::caldirola_kanai(m, w, 0.0).unwrap();
        let rho: f64 = (nu / (m * w)).sqrt();
        let cfg = ErmakovConfig::new(nu, rho, 0.0).unwrap();
        let sol = solve_ermakov(
            &osc,
            &cfg,
            &uniform_grid(0.0, 10.0, 100),
            &IntegratorPolicy::default(),
        )
        .unwrap();
        assert!(sol.rho.iter().all(|r| (r - rho).abs() < 1e-10));
    }
}

#[test]
fn periodic_solution_converges_under_step_halving() {
    let osc = Oscillator::caldirola_kanai(1.0, 2.0, 0.0).unwrap();
    let cfg = ErmakovConfig::new(2.0, 2.0, 0.0).unwrap();
    let grid = uniform_grid(0.0, 10.0, 100);
    let coarse = solve_ermakov(&osc, &cfg, &grid, &IntegratorPolicy::rk4(2e-3)).unwrap();
    let fine = solve_ermakov(&osc, &cfg, &grid, &IntegratorPolicy::rk4(1e-3)).unwrap();
    let diff = coarse
        .rho
        .iter()
        .zip(&fine.rho)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-8, "{diff:e}");
    // rho'^2/2 + 2 rho^2 + 2/rho^2 = 8.5 keeps rho within [1/2, 2].
    for (r, rd) in fine.rho.iter().zip(&fine.rho_dot) {
        assert!(*r >= 0.5 - 1e-9 && *r <= 2.0 + 1e-9);
        assert!((rd * rd / 2.0 + 2.0 * r * r + 2.0 / (r * r) - 8.5).abs() < 1e-9);
    }
    assert!(fine.rho.iter().any(|&r| r < 0.51));
}

#[test]
fn zero_strength_reduces_to_linear_motion() {
    // rho'' + eta rho' + w^2 rho = 0 is the oscillator with x = rho, p = m rho' / f.
    let (m, w, eta) = (1.2, 1.0, 0.4);
    let osc = Oscillator::caldirola_kanai(m, w, eta).unwrap();
    let grid = uniform_grid(0.0, 1.0, 50);
    let sol = solve_ermakov(
        &osc,
        &ErmakovConfig::new(0.0, 1.0, 0.3).unwrap(),
        &grid,
        &IntegratorPolicy::default(),
    )
    .unwrap();
    let traj = osc
        .integrate_original(
            &[1.0, 0.0, m * 0.3, 0.0],
            &grid,
            &IntegratorPolicy::default(),
        )
        .unwrap();
    let x = traj.series("x1").unwrap();
    assert!(sol.rho.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn interpolated_auxiliary_matches_coupled_run() {
    let osc = Oscillator::caldirola_kanai(1.0, 1.5, 0.5).unwrap();
    let cfg = ErmakovConfig::equilibrium(&osc, 0.0, 1.0).unwrap();
    let s = [0.3, -0.4, 0.2, 0.5];
    let grid = uniform_grid(0.0, 10.0, 500);
    let (traj, sol) = solve_coupled(&osc, &cfg, &s, &grid, &IntegratorPolicy::default()).unwrap();
    let separate = solve_ermakov(
        &osc,
        &cfg,
        &uniform_grid(0.0, 10.0, 2000),
        &IntegratorPolicy::default(),
    )
    .unwrap();
    let a = lewis_invariant(&traj, &sol, &osc, cfg.nu).unwrap();
    let b = lewis_invariant(&traj, &separate, &osc, cfg.nu).unwrap();
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| (x - y).abs() < 1e-6 * x.abs().max(1.0)));
    assert!(invariant_drift_report(&grid, &a).max_drift < 1e-7);
}

#[test]
fn collapse_reports_last_valid_time() {
    let osc = Oscillator::caldirola_kanai(1.0, 1.0, 0.0).unwrap();
    let err = solve_ermakov(
        &osc,
        &ErmakovConfig::new(0.0, 1.0, 0.0).unwrap(),
        &uniform_grid(0.0, 4.0, 40),
        &IntegratorPolicy::default(),
    )
    .unwrap_err();
    match err {
        InvariantError::Collapse { last_valid, .. } => {
            assert!(last_valid > 1.4 && last_valid < std::f64::consts::FRAC_PI_2)
        }
        other => panic!("expected collapse, got {other}"),
    }
}
