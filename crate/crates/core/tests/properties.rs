use degcarl::carleman::{build_weights, carleman_sides, case_family, check_weight_invariants};
use degcarl::coefficients::{
    estimate_exponent, make_constant_coefficient, make_power_coefficient, BoundaryKind,
    CoefficientFn,
};
use degcarl::evolution::{
    contraction_report, energy_series, solve_adjoint, solve_forward, worst_energy_decrease,
    ProblemSpec, Scheme,
};
use degcarl::grid::{build_grid, discrete_green_check};
use degcarl::hardy::{admissible_lambda_range, LambdaRange};
use degcarl::observability::observation_ratio;
use degcarl::report::fmt_g;
use degcarl::testfns;
use proptest::prelude::*;

fn power(k: f64) -> CoefficientFn {
    make_power_coefficient(k, 0.5, 1.0).unwrap()
}

fn spec(
    k1: f64,
    k2: f64,
    lambda: f64,
    bc: BoundaryKind,
    cells: usize,
    steps: usize,
) -> ProblemSpec {
    ProblemSpec {
        a: power(k1),
        b: power(k2),
        lambda,
        horizon: 1.0,
        bc,
        omega: (0.3, 0.7),
        cells,
        steps,
        scheme: Scheme::ImplicitEuler,
        pin_x0: None,
    }
}

fn bc() -> impl Strategy<Value = BoundaryKind> {
    prop_oneof![Just(BoundaryKind::Dirichlet), Just(BoundaryKind::Neumann)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn green_identity_holds(k1 in 0.1f64..1.9, k2 in 0.1f64..1.9, bc in bc(), half in 8usize..100, seed in any::<u64>()) {
        let cells = 2 * half;
        let sp = spec(k1, k2, -1.0, bc, cells, cells);
        let (grid, asm) = sp.assembly().unwrap();
        let mut rng = testfns::rng(seed);
        let mut u = testfns::random_mixed(&grid, bc, &mut rng, 0);
        let mut v = testfns::random_mixed(&grid, bc, &mut rng, 1);
        asm.project(&mut u);
        asm.project(&mut v);
        prop_assert!(discrete_green_check(&u, &v, &asm).unwrap().relative() <= 1e-12);
    }

    #[test]
    fn exponent_is_recovered(k in 0.05f64..1.95, scale in 0.01f64..100.0) {
        let grid = build_grid(200, Some(0.5)).unwrap();
        let f = make_power_coefficient(k, 0.5, scale).unwrap();
        prop_assert!((estimate_exponent(&f, grid.nodes()).unwrap() - k).abs() <= 1e-8);
    }

    #[test]
    fn degenerate_weights_are_valid(k1 in 0.05f64..1.95, k2 in 0.05f64..1.95, d1 in 0.1f64..5.0, rate in 0.1f64..5.0) {
        let sp = spec(k1, k2, -1.0, BoundaryKind::Dirichlet, 64, 32);
        let w = build_weights(&sp, d1, rate, 1.01).unwrap();
        prop_assert!(check_weight_invariants(&w).is_ok());
        prop_assert!(w.max_spatial() < 0.0);
    }

    #[test]
    fn lambda_range_rules(cstar in 1e-3f64..10.0, lambda in -50.0f64..50.0) {
        let r: LambdaRange = admissible_lambda_range(cstar, BoundaryKind::Dirichlet, None);
        prop_assert_eq!(r.contains(lambda), lambda != 0.0 && lambda < 1.0 / cstar);
        prop_assert!(!r.contains(0.0));
        prop_assert!(r.well_posed(0.0));
        let n = admissible_lambda_range(cstar, BoundaryKind::Neumann, None);
        prop_assert_eq!(n.contains(lambda), lambda < 0.0);
    }

    #[test]
    fn float_format_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_g(x).parse::<f64>().unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn carleman_sides_are_quadratic(scale in 0.01f64..100.0, s in 1.0f64..50.0, seed in any::<u64>()) {
        let sp = spec(0.25, 0.25, -1.0, BoundaryKind::Dirichlet, 40, 40);
        let w = build_weights(&sp, 1.0, 1.0, 1.01).unwrap();
        let case = &case_family(&sp, 1, seed).unwrap()[0];
        let base = carleman_sides(&case.v, &case.h, s, &w, &sp).unwrap();
        let scaled = carleman_sides(&case.v.scale(scale), &case.h.scale(scale), s, &w, &sp).unwrap();
        let shift = 2.0 * scale.ln();
        prop_assert!((scaled.log_lhs - base.log_lhs - shift).abs() <= 1e-9 * (1.0 + base.log_lhs.abs()));
        prop_assert!((scaled.log_rhs - base.log_rhs - shift).abs() <= 1e-9 * (1.0 + base.log_rhs.abs()));
        prop_assert!((scaled.ratio() - base.ratio()).abs() <= 1e-9 * base.ratio().abs());
    }

    #[test]
    fn observation_ratio_is_scale_free(scale in 1e-3f64..1e3, seed in any::<u64>()) {
        let sp = spec(0.25, 0.25, -1.0, BoundaryKind::Dirichlet, 40, 40);
        let grid = sp.grid().unwrap();
        let vt = testfns::random_smooth(&grid, sp.bc, &mut testfns::rng(seed));
        let r1 = observation_ratio(&vt, &sp).unwrap();
        let scaled: Vec<f64> = vt.iter().map(|v| v * scale).collect();
        let r2 = observation_ratio(&scaled, &sp).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-10 * r1);
    }

    #[test]
    fn adjoint_energy_never_decreases(k1 in 0.1f64..1.9, k2 in 0.1f64..1.9, lambda in -20.0f64..-0.01, bc in bc(), seed in any::<u64>()) {
        let sp = spec(k1, k2, lambda, bc, 60, 60);
        let (grid, asm) = sp.assembly().unwrap();
        let mut vt = testfns::random_mixed(&grid, bc, &mut testfns::rng(seed), 0);
        asm.project(&mut vt);
        let v = solve_adjoint(&vt, None, &sp).unwrap();
        prop_assert!(worst_energy_decrease(&energy_series(&v, &sp).unwrap()) <= 1e-8);
    }

    #[test]
    fn forward_flow_contracts(k1 in 0.1f64..1.9, k2 in 0.1f64..1.9, lambda in -20.0f64..-0.01, seed in any::<u64>()) {
        let sp = spec(k1, k2, lambda, BoundaryKind::Dirichlet, 60, 60);
        let (grid, asm) = sp.assembly().unwrap();
        let mut u0 = testfns::random_smooth(&grid, sp.bc, &mut testfns::rng(seed));
        asm.project(&mut u0);
        let u = solve_forward(&u0, None, &sp).unwrap();
        prop_assert!(contraction_report(&u, &sp).unwrap() <= 1e-12);
    }
}

#[test]
fn constant_coefficient_is_not_degenerate() {
    let f = make_constant_coefficient(3.0).unwrap();
    assert!(!f.is_degenerate());
}
