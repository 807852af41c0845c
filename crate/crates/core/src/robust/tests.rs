use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fe::{build_mesh, LoadCase};
use crate::filter::build_filter;
use crate::uncertainty::Weighting;

fn problem(nx: usize, ny: usize, radius: f64, set: UncertaintySet) -> RobustProblem {
    let mesh = build_mesh(nx, ny, 2.0, 1.0).unwrap();
    let load = LoadCase::cantilever(&mesh, 1.9, 2.0, 0.3, [0.0, -1.0]).unwrap();
    let filter = build_filter(&mesh, radius).unwrap();
    RobustProblem {
        model: FeModel::new(mesh, 0.3, load).unwrap(),
        filter,
        params: MaterialParams::default(),
        set,
        volume_fraction: 0.5,
        rho_min: 0.01,
        barrier: BarrierConfig::default(),
        outer: OuterSettings {
            max_iter: 60,
            ..OuterSettings::default()
        },
        tikhonov: 0.0,
    }
}

fn random_design(pb: &RobustProblem, seed: u64) -> DesignField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = (0..pb.filter.len()).map(|_| rng.gen_range(0.2..1.0)).collect();
    DesignField::new(&pb.filter, rho, pb.rho_min, pb.volume_fraction).unwrap()
}

#[test]
fn full_volume_gives_solid_design() {
    let mut pb = problem(12, 6, 0.3, UncertaintySet::Linear { budget: 0.0 });
    pb.volume_fraction = 1.0;
    let nom = nominal_solve(&pb).unwrap();
    assert!(nom.converged);
    assert!(nom.design.rho.iter().all(|&r| r == 1.0));
}

#[test]
fn nominal_beats_uniform_and_uses_all_material() {
    let pb = problem(24, 12, 0.15, UncertaintySet::Linear { budget: 0.0 });
    let nom = nominal_solve(&pb).unwrap();
    let uniform = DesignField::uniform(&pb.filter, pb.rho_min, 0.5).unwrap();
    let (c_uniform, _) = nominal_compliance(&pb, &uniform.rho_tilde).unwrap();
    assert!(nom.compliance < c_uniform, "{} vs {c_uniform}", nom.compliance);
    let vol = nom.design.volume(&pb.shares());
    assert!((vol - 0.5).abs() < 1e-6, "{vol}");
    for rec in &nom.history {
        assert!(rec.volume <= 0.5 + 1e-9);
    }
}

#[test]
fn zero_budget_gradient_is_simp_sensitivity() {
    let pb = problem(8, 4, 0.3, UncertaintySet::RhoWeighted { budget: 0.0 });
    let d = random_design(&pb, 1);
    let adv = pb.adversary();
    let inner = adv.solve(&d.rho_tilde, None).unwrap();
    let g = marginal_gradient_filtered(&adv, &d.rho_tilde, &inner).unwrap();
    let (_, simp) = nominal_compliance(&pb, &d.rho_tilde).unwrap();
    for (a, b) in g.iter().zip(&simp) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
    }
}

#[test]
fn linear_set_gradient_is_nonpositive() {
    let pb = problem(8, 4, 0.3, UncertaintySet::Linear { budget: 0.05 });
    let d = random_design(&pb, 2);
    let adv = pb.adversary();
    let inner = adv.solve(&d.rho_tilde, None).unwrap();
    let g = marginal_gradient(&adv, &pb.filter, &d, &inner).unwrap();
    assert!(g.iter().all(|&x| x <= 0.0));
}

#[test]
fn stale_inner_solution_is_rejected() {
    let pb = problem(8, 4, 0.3, UncertaintySet::Linear { budget: 0.05 });
    let d = random_design(&pb, 3);
    let other = random_design(&pb, 4);
    let adv = pb.adversary();
    let inner = adv.solve(&d.rho_tilde, None).unwrap();
    let err = marginal_gradient(&adv, &pb.filter, &other, &inner).unwrap_err();
    assert!(matches!(err, Error::StaleInnerSolution(_)));
}

fn finite_difference_check(set: UncertaintySet, seed: u64) {
    let mut pb = problem(8, 4, 0.3, set);
    pb.barrier.mu_target = 1e-9;
    let d = random_design(&pb, seed);
    finite_difference_at(&pb, &d, seed);
}

fn finite_difference_at(pb: &RobustProblem, d: &DesignField, seed: u64) {
    let set = pb.set;
    let adv = pb.adversary();
    let inner = adv.solve(&d.rho_tilde, None).unwrap();
    let g = marginal_gradient(&adv, &pb.filter, d, &inner).unwrap();
    let value = |rho: &[f64]| -> f64 {
        let rt = filtered(&pb.filter, rho, pb.rho_min).unwrap();
        adv.solve(&rt, Some(&inner)).unwrap().objective
    };
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for _ in 0..6 {
        let k = rng.gen_range(0..d.rho.len());
        let mut plus = d.rho.clone();
        let mut minus = d.rho.clone();
        plus[k] += h;
        minus[k] -= h;
        let fd = (value(&plus) - value(&minus)) / (2.0 * h);
        let rel = (fd - g[k]).abs() / g[k].abs();
        assert!(rel <= 1e-3, "{set:?} component {k}: fd {fd} analytic {}", g[k]);
    }
}

#[test]
fn marginal_gradient_matches_finite_differences_rho_weighted() {
    finite_difference_check(UncertaintySet::RhoWeighted { budget: 0.02 }, 5);
}

// Both multipliers enter: the mean row and the dispersion bound depend on
// ρ̃ through the weights. The bound is set a little above the smallest
// attainable dispersion so that it is active.
#[test]
fn marginal_gradient_matches_finite_differences_dispersion() {
    let probe = UncertaintySet::AvgQuad {
        mean: 0.05,
        dispersion: 1.0,
        anchor: 0.1,
        weighting: Weighting::Rho,
    };
    let mut pb = problem(8, 4, 0.3, probe);
    pb.barrier.mu_target = 1e-9;
    let d = random_design(&pb, 6);
    let adv = pb.adversary();
    let ctx = adv.context(&d.rho_tilde).unwrap();
    let floor = probe.budget_value(&ctx, &probe.canonical_point(&ctx).unwrap()).unwrap().ineq.unwrap() + 1.0;
    pb.set = UncertaintySet::AvgQuad {
        mean: 0.05,
        dispersion: floor + 0.002,
        anchor: 0.1,
        weighting: Weighting::Rho,
    };
    let inner = pb.adversary().solve(&d.rho_tilde, None).unwrap();
    assert!(inner.nu > 1e-6, "bound inactive: nu = {}", inner.nu);
    finite_difference_at(&pb, &d, 6);
}

#[test]
fn zero_budget_robust_run_is_nominal() {
    let pb = problem(12, 6, 0.3, UncertaintySet::RhoWeighted { budget: 0.0 });
    let run = optimize(&pb).unwrap();
    assert_eq!(run.design, run.nominal.design);
    assert!((run.inner.compliance - run.nominal.compliance).abs() <= 1e-12 * run.nominal.compliance);
}

#[test]
fn robust_loop_improves_worst_case() {
    let mut pb = problem(16, 8, 0.3, UncertaintySet::RhoWeighted { budget: 0.01 });
    pb.params.e_d = 0.1;
    pb.outer.max_iter = 40;
    let mut seen = 0;
    let run = optimize_with(&pb, None, |rec, design| {
        seen += 1;
        assert!(design.volume(&pb.shares()) <= pb.volume_fraction + 1e-9);
        assert!(rec.newton_iterations > 0);
    })
    .unwrap();
    assert_eq!(seen, run.history.len());
    let first = run.history[0].objective;
    assert!(run.inner.compliance <= first, "{} > {first}", run.inner.compliance);

    let report = evaluate_report(&pb, &run.nominal.design, &run.design, Some(&run.inner), None).unwrap();
    let row = report.row;
    assert!(row.wc_topo_worst_delta < row.nom_topo_worst_delta);
    assert!(row.wc_topo_reference_delta >= -1e-9);
    assert!(report.robust_worst.compliance >= report.robust_reference);
}

#[test]
fn identical_topologies_have_zero_first_column() {
    let pb = problem(8, 4, 0.3, UncertaintySet::Linear { budget: 0.03 });
    let d = random_design(&pb, 9);
    let rep = evaluate_report(&pb, &d, &d, None, Some(3)).unwrap();
    assert_eq!(rep.row.wc_topo_reference_delta, 0.0);
    assert_eq!(rep.row.nom_topo_worst_delta, rep.row.wc_topo_worst_delta);
    let [nom, wc] = rep.row.continuation.unwrap();
    for c in [nom, wc] {
        assert!(c.contin <= c.inverse + 1e-9);
        assert!(c.contin >= 0.0);
    }
}
