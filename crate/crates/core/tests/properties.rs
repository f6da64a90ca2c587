use approx::assert_relative_eq;
use proptest::prelude::*;
use untangled_core::density::{clusters, ParticleEnsemble};
use untangled_core::field::{SpatialDomain, TimeGrid, VelocityField};
use untangled_core::filippov::{filippov_envelope, membership, EnvelopeParams};
use untangled_core::funnel::{inclusion_residual, integrate_branching, restrict, splice, FunnelParams};
use untangled_core::galerkin::{assemble_system, discrete_inf_sup, FnCoefficients, TestSpace, TrialBasis};
use untangled_core::transport::{solve_characteristic_ode, PulledBackProblem};

fn line(lo: f64, hi: f64) -> SpatialDomain {
    SpatialDomain::interval(lo, hi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_velocity_lies_in_its_envelope(a in -2.0f64..2.0, x in -0.9f64..0.9, t in 0.0f64..1.0) {
        let field = VelocityField::from_registry("linear", &[a], a.abs(), line(-1.0, 1.0)).unwrap();
        let env = filippov_envelope(&field, t, &[x], &EnvelopeParams::defaults(&field, 3)).unwrap();
        let b = field.eval(t, &[x]).unwrap();
        prop_assert!(membership(&env, &b, 1e-12));
        prop_assert!(env.support_at(&[1.0]).unwrap() >= b[0]);
        prop_assert!(env.support_at(&[-1.0]).unwrap() >= -b[0]);
    }

    #[test]
    fn constant_decay_matches_exponential(c in 0.0f64..3.0, u0 in -2.0f64..2.0, n in 4usize..200) {
        let g = TimeGrid::uniform(0.0, 1.0, n).unwrap();
        let p = PulledBackProblem::from_time_functions(g, 1, |_| c, |_| 0.0, u0).unwrap();
        let s = solve_characteristic_ode(&p).unwrap();
        for (k, t) in s.grid.nodes().iter().enumerate() {
            assert_relative_eq!(s.u_row(0)[k], u0 * (-c * t).exp(), epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn optimal_pairing_has_unit_inf_sup(c in 0.0f64..3.0, cells in 1usize..40, horizon in 0.2f64..3.0) {
        let space = TestSpace::uniform(horizon, cells).unwrap();
        let data = FnCoefficients { c: move |_: usize, _: f64| c, f: |_: usize, _: f64| 1.0, u0: vec![0.0], weights: None };
        let sys = assemble_system(&space, &data, 2).unwrap();
        assert_relative_eq!(discrete_inf_sup(&sys, TrialBasis::Optimal).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn restrict_then_splice_is_identity(v in -1.0f64..1.0, x in -0.5f64..0.5, cut in 0usize..16) {
        let field = VelocityField::from_registry("constant", &[v], 1.0, line(-3.0, 3.0)).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 16).unwrap();
        let params = FunnelParams::defaults(&field, &grid, 1);
        let f = integrate_branching(&field, &params, &grid, 0.0, &[x]).unwrap();
        prop_assert_eq!(f.len(), 1);
        let g = &f.members[0];
        let s = grid.nodes()[cut];
        prop_assert_eq!(&splice(g, &restrict(g, s).unwrap(), s, 1e-12).unwrap(), g);
        prop_assert!(inclusion_residual(g, &field, &params.envelope).unwrap() <= 1e-12);
        assert_relative_eq!(g.end_point()[0], x + v, epsilon = 1e-12);
    }

    #[test]
    fn clusters_partition_particles(pts in prop::collection::vec(-1.0f64..1.0, 1..60), tol in 0.0f64..0.2) {
        let rows: Vec<[f64; 1]> = pts.iter().map(|p| [*p]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
        let groups = clusters(&refs, tol);
        let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
        for g in &groups {
            let mut v: Vec<f64> = g.iter().map(|&i| pts[i]).collect();
            v.sort_by(f64::total_cmp);
            prop_assert!(v.windows(2).all(|w| w[1] - w[0] <= tol));
        }
    }

    #[test]
    fn uniform_ensemble_carries_lebesgue_mass(lo in -2.0f64..0.0, len in 0.1f64..3.0, n in 1usize..500) {
        let e = ParticleEnsemble::uniform(&[lo], &[lo + len], n).unwrap();
        prop_assert_eq!(e.len(), n);
        assert_relative_eq!(e.weight_sum(), len, max_relative = 1e-12);
        prop_assert!((0..n).all(|i| e.point(i)[0] > lo && e.point(i)[0] < lo + len));
    }
}
