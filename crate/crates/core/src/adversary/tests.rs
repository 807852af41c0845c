use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fe::{build_mesh, LoadCase};
use crate::uncertainty::Weighting;

fn model(nx: usize, ny: usize) -> FeModel {
    let mesh = build_mesh(nx, ny, 2.0, 1.0).unwrap();
    let load = LoadCase::cantilever(&mesh, 1.9, 2.0, 0.3, [0.0, -1.0]).unwrap();
    FeModel::new(mesh, 0.3, load).unwrap()
}

fn design(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.3..1.0)).collect()
}

fn params(e_d: f64) -> MaterialParams {
    MaterialParams {
        e_d,
        ..MaterialParams::default()
    }
}

fn assert_kkt(sol: &InnerSolution, cfg: &BarrierConfig) {
    let r = sol.residuals;
    assert_eq!(sol.status, InnerStatus::Converged);
    assert!(r.stationarity <= cfg.tol, "stationarity {:e}", r.stationarity);
    assert!(r.state <= cfg.constr_viol_tol, "state {:e}", r.state);
    assert!(r.feasibility <= cfg.constr_viol_tol, "feasibility {:e}", r.feasibility);
    assert!(r.complementarity <= cfg.compl_inf_tol);
    assert!(sol.delta.iter().all(|&d| d > 0.0 && d < 1.0));
}

fn all_sets() -> Vec<UncertaintySet> {
    vec![
        UncertaintySet::Linear { budget: 0.1 },
        UncertaintySet::RhoWeighted { budget: 0.05 },
        UncertaintySet::AvgQuad {
            mean: 0.4,
            dispersion: 0.02,
            anchor: 0.4,
            weighting: Weighting::Plain,
        },
        UncertaintySet::AvgQuad {
            mean: 0.2,
            dispersion: 0.12,
            anchor: 0.4,
            weighting: Weighting::Rho,
        },
    ]
}

#[test]
fn converged_solutions_satisfy_kkt() {
    let m = model(8, 4);
    let rho = design(32, 1);
    for e_d in [0.7, 0.01] {
        for set in all_sets() {
            let adv = Adversary::new(&m, params(e_d), set);
            let sol = adv.solve(&rho, None).unwrap();
            assert_kkt(&sol, &adv.config);
            assert!(sol.newton_iterations < 200);
            if let Some(h) = set.budget_value(&adv.context(&rho).unwrap(), &sol.delta).unwrap().ineq {
                assert!(h < 0.0);
            }
        }
    }
}

#[test]
fn primal_residual_matches_at_mild_contrast() {
    let m = model(6, 3);
    let rho = design(18, 2);
    let adv = Adversary::new(&m, params(0.7), UncertaintySet::RhoWeighted { budget: 0.1 });
    let sol = adv.solve(&rho, None).unwrap();
    let r = adv
        .kkt_residual(&rho, &sol.delta, &sol.u, sol.lambda, sol.mu)
        .unwrap();
    // the two forms differ by (δz − μ)/δ, bounded by the complementarity gap
    let gap = sol.residuals.complementarity / sol.min_box_distance;
    assert!(r.max_norm() <= sol.residuals.stationarity_raw + gap + 1e-12, "{:e}", r.max_norm());
    assert!(r.max_norm() <= 1e-6);
}

#[test]
fn equilibrium_displacement_has_zero_state_residual() {
    let m = model(5, 3);
    let rho = design(15, 3);
    let p = params(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let delta: Vec<f64> = (0..15).map(|_| rng.gen_range(0.05..0.95)).collect();
    let moduli: Vec<f64> = (0..15)
        .map(|e| crate::material::effective_modulus(rho[e], delta[e], &p, MaterialLaw::Inverse))
        .collect();
    let u = m.solve_state(&m.assemble(&moduli).unwrap()).unwrap();
    let adv = Adversary::new(&m, p, UncertaintySet::Linear { budget: 0.3 });
    let r = adv.kkt_residual(&rho, &delta, &u, 0.0, 1e-3).unwrap();
    assert!(r.r_u.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn boundary_degradation_is_a_domain_error() {
    let m = model(2, 1);
    let adv = Adversary::new(&m, params(0.5), UncertaintySet::Linear { budget: 0.3 });
    let u = vec![0.0; m.mesh().n_dofs()];
    assert!(matches!(
        adv.kkt_residual(&[1.0, 1.0], &[0.0, 0.6], &u, 0.0, 1e-3),
        Err(Error::BarrierDomain { element: 0, .. })
    ));
}

/// Two elements share the budget, so the feasible set is a segment
/// parameterized by `t = δ_1`. The reduced barrier objective is concave
/// in `t`; bisection on its derivative (with a fresh state solve at every
/// point) is an independent oracle for the Newton solution.
#[test]
fn two_element_bisection_oracle() {
    let mesh = build_mesh(2, 1, 2.0, 1.0).unwrap();
    let load = LoadCase::cantilever(&mesh, 1.5, 2.0, 0.3, [0.0, -1.0]).unwrap();
    let m = FeModel::new(mesh, 0.3, load).unwrap();
    let p = params(0.2);
    let budget = 0.35;
    let rho = [0.9, 0.6];
    let cfg = BarrierConfig {
        mu_target: 1e-4,
        ..BarrierConfig::default()
    };
    let adv = Adversary::new(&m, p, UncertaintySet::Linear { budget }).with_config(cfg);
    let sol = adv.solve(&rho, None).unwrap();

    let mu = cfg.mu_target;
    let kh = m.element_stiffness().matrix;
    let slope = |t: f64| -> f64 {
        let d = [t, 2.0 * budget - t];
        let moduli: Vec<f64> = (0..2)
            .map(|e| crate::material::effective_modulus(rho[e], d[e], &p, MaterialLaw::Inverse))
            .collect();
        let u = m.solve_state(&m.assemble(&moduli).unwrap()).unwrap();
        let part = |e: usize| {
            let ue = m.element_displacement(e, &u);
            let (_, e1, _) = young_derivs(d[e], MaterialLaw::Inverse, &p);
            -p.simp(rho[e]) * e1 * ue.dot(&(kh * ue)) + mu * (1.0 / d[e] - 1.0 / (1.0 - d[e]))
        };
        part(0) - part(1)
    };
    let (mut a, mut b) = (1e-9, 2.0 * budget - 1e-9);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if slope(c) > 0.0 {
            a = c;
        } else {
            b = c;
        }
    }
    let t = 0.5 * (a + b);
    assert!((sol.delta[0] - t).abs() < 1e-9, "{} vs {t}", sol.delta[0]);
}

#[test]
fn zero_budget_returns_nominal() {
    let m = model(6, 3);
    let rho = design(18, 5);
    let p = params(0.01);
    let adv = Adversary::new(&m, p, UncertaintySet::Linear { budget: 0.0 });
    let sol = adv.solve(&rho, None).unwrap();
    assert_eq!(sol.status, InnerStatus::Trivial);
    let moduli: Vec<f64> = rho.iter().map(|r| p.simp(*r)).collect();
    let nominal = m.compliance_for(&moduli).unwrap();
    assert!((sol.compliance - nominal).abs() <= 1e-12 * nominal);
}

#[test]
fn tiny_budget_approaches_nominal() {
    let m = model(6, 3);
    let rho = design(18, 6);
    let p = params(0.5);
    let moduli: Vec<f64> = rho.iter().map(|r| p.simp(*r)).collect();
    let nominal = m.compliance_for(&moduli).unwrap();
    let sol = Adversary::new(&m, p, UncertaintySet::Linear { budget: 1e-6 })
        .solve(&rho, None)
        .unwrap();
    assert!(sol.compliance >= nominal);
    assert!((sol.compliance - nominal) / nominal < 1e-4);
}

#[test]
fn beats_random_feasible_fields() {
    let m = model(8, 4);
    let rho = design(32, 7);
    for set in all_sets() {
        let adv = Adversary::new(&m, params(0.1), set);
        let sol = adv.solve(&rho, None).unwrap();
        let ctx = adv.context(&rho).unwrap();
        let slack = 2.0 * 32.0 * adv.config.mu_target;
        for seed in 0..200 {
            let d = set.sample_feasible(&ctx, seed).unwrap();
            let c = adv.compliance_at(&rho, &d).unwrap();
            assert!(sol.compliance >= c - 1e-6 - slack, "{set:?}: {c} > {}", sol.compliance);
        }
    }
}

#[test]
fn warm_start_is_immediate() {
    let m = model(8, 4);
    let rho = design(32, 8);
    for set in all_sets() {
        let adv = Adversary::new(&m, params(0.05), set);
        let sol = adv.solve(&rho, None).unwrap();
        let again = adv.solve(&rho, Some(&sol)).unwrap();
        assert!(again.newton_iterations <= 3, "{set:?}: {}", again.newton_iterations);
        assert!((again.compliance - sol.compliance).abs() <= 1e-9 * sol.compliance);
    }
}

#[test]
fn worst_case_is_monotone_in_budget() {
    let m = model(8, 4);
    let rho = design(32, 9);
    let mut last = 0.0;
    let mut warm: Option<InnerSolution> = None;
    for d in [0.01, 0.02, 0.05, 0.1, 0.2, 0.4] {
        let adv = Adversary::new(&m, params(0.05), UncertaintySet::Linear { budget: d });
        let sol = adv.solve(&rho, warm.as_ref()).unwrap();
        assert!(sol.compliance > last);
        last = sol.compliance;
        warm = Some(sol);
    }
}

#[test]
fn budget_active_and_duals_consistent() {
    let m = model(6, 3);
    let rho = design(18, 10);
    let adv = Adversary::new(&m, params(0.01), UncertaintySet::RhoWeighted { budget: 0.02 });
    let sol = adv.solve(&rho, None).unwrap();
    let ctx = adv.context(&rho).unwrap();
    let g = adv.set.budget_value(&ctx, &sol.delta).unwrap();
    assert!(g.eq.abs() <= 1e-10);
    for e in 0..18 {
        assert!((sol.delta[e] * sol.z_lower[e] - sol.mu).abs() <= 1e-4);
        assert!(((1.0 - sol.delta[e]) * sol.z_upper[e] - sol.mu).abs() <= 1e-4);
    }
    assert!(sol.lambda > 0.0);
}

#[test]
fn tikhonov_small_eps_matches_plain_solve() {
    let m = model(8, 4);
    let rho = design(32, 11);
    let p = params(0.1);
    let set = UncertaintySet::Linear { budget: 0.1 };
    let cfg = BarrierConfig::default();
    let plain = solve_worst_case(&m, &rho, &set, &p, &cfg, None).unwrap();
    let reg = solve_worst_case_tikhonov(&m, &rho, &set, &p, 1e-8, &cfg).unwrap();
    assert_kkt(&reg, &BarrierConfig { mu_target: TIKHONOV_MU_FLOOR, ..cfg });
    assert!((reg.compliance - plain.compliance).abs() <= 1e-5 * plain.compliance);
}

#[test]
fn tikhonov_large_eps_shrinks_to_minimum_norm() {
    let m = model(6, 3);
    let rho = design(18, 12);
    let set = UncertaintySet::Linear { budget: 0.2 };
    let sol = solve_worst_case_tikhonov(&m, &rho, &set, &params(0.5), 1e9, &BarrierConfig::default()).unwrap();
    assert!(sol.delta.iter().all(|d| (d - 0.2).abs() < 1e-5));
}

#[test]
fn continuation_collapses_for_mild_contrast() {
    let m = model(6, 3);
    let rho = design(18, 13);
    let adv = Adversary::new(&m, params(0.99), UncertaintySet::Linear { budget: 0.2 });
    let res = ramp_continuation(&adv, &rho, 2, None).unwrap();
    assert_eq!(res.stages.len(), 2);
    assert!(res.lower_bound <= res.upper_bound);
    assert!((res.upper_bound - res.lower_bound) / res.upper_bound < 0.01);
}

#[test]
fn continuation_bounds_are_ordered() {
    let m = model(8, 4);
    let rho = design(32, 14);
    let adv = Adversary::new(&m, params(0.01), UncertaintySet::RhoWeighted { budget: 0.01 });
    let res = ramp_continuation(&adv, &rho, 10, None).unwrap();
    assert_eq!(res.stages.len(), 10);
    assert_eq!(res.stages[9].q, 0.0);
    assert!(res.lower_bound <= res.upper_bound);
    for w in res.stages.windows(2) {
        assert!(w[1].q < w[0].q);
    }
}

#[test]
fn probe_is_semidefinite_and_identity_holds() {
    let m = model(6, 3);
    let rho = design(18, 15);
    let p = params(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let delta: Vec<f64> = (0..18).map(|_| rng.gen_range(0.01..0.99)).collect();
    let u: Vec<f64> = (0..m.mesh().n_dofs()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let r = concavity_probe(&m, &rho, &delta, &u, &p, MaterialLaw::Inverse, 0.0, 500, 1).unwrap();
    assert!(r.max_form <= 1e-8);
    assert!(r.identity_error.unwrap() <= 1e-10);
    let r = concavity_probe(&m, &rho, &delta, &u, &p, MaterialLaw::Inverse, 1e-3, 500, 2).unwrap();
    assert!(r.max_delta_only <= -1e-3 * (1.0 - 1e-6));
    assert!(r.max_form < 0.0);
}

#[test]
fn linear_law_is_not_concave() {
    let m = model(2, 1);
    let rho = vec![1.0; 2];
    let p = params(0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let delta: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..0.8)).collect();
    let moduli: Vec<f64> = delta.iter().map(|&d| crate::material::young(d, MaterialLaw::Ramp(0.0), &p)).collect();
    let u = m.solve_state(&m.assemble(&moduli).unwrap()).unwrap();
    let r = concavity_probe(&m, &rho, &delta, &u, &p, MaterialLaw::Ramp(0.0), 0.0, 20000, 3).unwrap();
    assert!(r.max_form > 0.0);
    assert!(r.identity_error.is_none());
}
