use proptest::prelude::*;

use robtop::config::{Preset, RunConfig};
use robtop::export::{decode_pgm, encode_pgm};
use robtop::fe::build_mesh;
use robtop::filter::build_filter;
use robtop::material::{young, young_inverse, young_ramp, MaterialLaw, MaterialParams};
use robtop::robust::{mma_step, LinearConstraint, MmaSettings, MmaState};
use robtop::uncertainty::{BudgetContext, UncertaintySet, Weighting};

fn params(e_d: f64) -> MaterialParams {
    MaterialParams {
        e_d,
        ..MaterialParams::default()
    }
}

proptest! {
    #[test]
    fn ramp_at_inverse_parameter_is_inverse(e_d in 0.001f64..0.99, d in 0.0f64..=1.0) {
        let p = params(e_d);
        let a = young_ramp(d, p.q_inverse(), &p).unwrap();
        let b = young_inverse(d, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * b);
    }

    #[test]
    fn moduli_decrease_between_endpoints(e_d in 0.001f64..0.99, q in 0.0f64..50.0, d0 in 0.0f64..1.0, d1 in 0.0f64..1.0) {
        let p = params(e_d);
        let (lo, hi) = if d0 < d1 { (d0, d1) } else { (d1, d0) };
        for law in [MaterialLaw::Inverse, MaterialLaw::Ramp(q)] {
            let (a, b) = (young(lo, law, &p), young(hi, law, &p));
            prop_assert!(a >= b);
            prop_assert!(b >= e_d * (1.0 - 1e-15) && a <= 1.0 + 1e-15);
        }
    }

    // Lower q means a stiffer interpolation at every interior point.
    #[test]
    fn ramp_is_monotone_in_q(e_d in 0.001f64..0.99, q0 in 0.0f64..20.0, dq in 0.0f64..20.0, d in 0.0f64..1.0) {
        let p = params(e_d);
        prop_assert!(young_ramp(d, q0, &p).unwrap() >= young_ramp(d, q0 + dq, &p).unwrap() * (1.0 - 1e-15));
    }

    #[test]
    fn filter_preserves_constants_and_bounds(
        nx in 1usize..12,
        ny in 1usize..8,
        radius in 0.05f64..0.8,
        c in 0.01f64..1.0,
        seed in any::<u64>(),
    ) {
        let mesh = build_mesh(nx, ny, 2.0, 1.0).unwrap();
        let f = build_filter(&mesh, radius).unwrap();
        for v in f.apply(&vec![c; nx * ny]).unwrap() {
            prop_assert!((v - c).abs() <= 1e-14);
        }
        let x: Vec<f64> = (0..nx * ny).map(|k| ((seed.wrapping_add(k as u64 * 2654435761)) % 1000) as f64 / 999.0).collect();
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for v in f.apply(&x).unwrap() {
            prop_assert!(v >= lo - 1e-14 && v <= hi + 1e-14);
        }
    }

    #[test]
    fn filter_transpose_is_adjoint(
        nx in 1usize..10,
        ny in 1usize..6,
        radius in 0.05f64..0.8,
        x in prop::collection::vec(-1.0f64..1.0, 60),
        y in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let n = nx * ny;
        let mesh = build_mesh(nx, ny, 2.0, 1.0).unwrap();
        let f = build_filter(&mesh, radius).unwrap();
        let fx = f.apply(&x[..n]).unwrap();
        let fty = f.chain_transpose(&y[..n]).unwrap();
        let a: f64 = fx.iter().zip(&y[..n]).map(|(p, q)| p * q).sum();
        let b: f64 = x[..n].iter().zip(&fty).map(|(p, q)| p * q).sum();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn sampled_fields_are_feasible(
        rho in prop::collection::vec(0.05f64..1.0, 24),
        budget in 0.01f64..0.3,
        seed in any::<u64>(),
        weighted in any::<bool>(),
    ) {
        let ctx = BudgetContext::uniform(rho, 4.0).unwrap();
        let set = if weighted {
            UncertaintySet::RhoWeighted { budget: budget * 0.001 }
        } else {
            UncertaintySet::Linear { budget }
        };
        let d = set.sample_feasible(&ctx, seed).unwrap();
        prop_assert!(d.iter().all(|&x| x > 0.0 && x < 1.0));
        let v = set.budget_value(&ctx, &d).unwrap();
        prop_assert!(v.eq.abs() <= 1e-12 * set.target().max(1.0));
    }

    #[test]
    fn projection_lands_on_the_budget(
        delta in prop::collection::vec(0.001f64..0.999, 16),
        budget in 0.05f64..0.6,
        anchor in 0.0f64..1.0,
    ) {
        let ctx = BudgetContext::uniform(vec![1.0; 16], 4.0).unwrap();
        for set in [
            UncertaintySet::Linear { budget },
            UncertaintySet::AvgQuad { mean: budget, dispersion: 1.0, anchor, weighting: Weighting::Plain },
        ] {
            let d = set.project_interior(&ctx, &delta).unwrap();
            prop_assert!(d.iter().all(|&x| x > 0.0 && x < 1.0));
            prop_assert!(set.budget_value(&ctx, &d).unwrap().eq.abs() <= 1e-12);
        }
    }

    #[test]
    fn mma_respects_bounds_and_volume(
        x in prop::collection::vec(0.05f64..1.0, 20),
        df in prop::collection::vec(-5.0f64..0.0, 20),
    ) {
        let target: f64 = x.iter().sum::<f64>() / 20.0 + 0.01;
        let xmin = vec![0.01; 20];
        let xmax = vec![1.0; 20];
        let grad = vec![1.0 / 20.0; 20];
        let mut state = MmaState::new(20, MmaSettings::default());
        let mut cur = x;
        for _ in 0..4 {
            let value = cur.iter().sum::<f64>() / 20.0 - target;
            let next = mma_step(&mut state, &cur, &df, LinearConstraint { value, gradient: &grad }, &xmin, &xmax).unwrap();
            for (a, b) in next.iter().zip(&cur) {
                prop_assert!((0.01..=1.0).contains(a));
                prop_assert!((a - b).abs() <= MmaSettings::default().move_limit + 1e-12);
            }
            prop_assert!(next.iter().sum::<f64>() / 20.0 <= target + 1e-9);
            cur = next;
        }
    }

    #[test]
    fn pgm_round_trip(nx in 1usize..20, ny in 1usize..20, seed in any::<u64>()) {
        let values: Vec<f64> = (0..nx * ny).map(|k| ((seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15)) % 10_000) as f64 / 9_999.0).collect();
        let (a, b, back) = decode_pgm(&encode_pgm(nx, ny, &values).unwrap()).unwrap();
        prop_assert_eq!((a, b), (nx, ny));
        for (v, w) in values.iter().zip(&back) {
            prop_assert!((v - w).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn config_echo_parses_back(
        nx in 2usize..400,
        vf in 0.05f64..1.0,
        e_d in 0.001f64..0.99,
        budget in 0.0f64..0.5,
        steps in prop::option::of(2usize..30),
    ) {
        let mut cfg = RunConfig::preset(Preset::Cantilever);
        cfg.set("nx", &nx.to_string()).unwrap();
        cfg.set("volume_fraction", &vf.to_string()).unwrap();
        cfg.set("e_d", &e_d.to_string()).unwrap();
        cfg.set("budget", &budget.to_string()).unwrap();
        cfg.continuation = steps;
        let again = RunConfig::parse(&cfg.to_text(), None).unwrap();
        prop_assert_eq!(again.to_text(), cfg.to_text());
    }
}
