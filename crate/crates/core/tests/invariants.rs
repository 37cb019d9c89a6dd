//! Property tests for the structural invariants of each module.

use std::sync::Arc;

use hlab_core::cat0::{distance, TargetPoint, TargetSpace};
use hlab_core::cc_metric::{cc_distance, cc_norm, geodesic_point, solve_endpoint};
use hlab_core::domain::DomainBox;
use hlab_core::energy::{energy_functional, interpolation_inequality_check, SmoothMap};
use hlab_core::heisenberg::{dilate, flow_step, inverse, multiply, Generator, GroupPoint};
use hlab_core::lab::{lemma53_experiment, lemma53_pair, unit_box};
use hlab_core::solver::{discrete_energy, relax_sweep, solve_dirichlet, GridMap, Lattice, SolverConfig};
use proptest::prelude::*;

fn arb_point(n: usize, half: f64) -> impl Strategy<Value = GroupPoint> {
    prop::collection::vec(-half..half, 2 * n + 1).prop_map(|c| GroupPoint::from_slice(&c).unwrap())
}

fn arb_h1(half: f64) -> impl Strategy<Value = GroupPoint> {
    arb_point(1, half)
}

fn small_lattice() -> Arc<Lattice> {
    let b = DomainBox::new(vec![-0.5, -0.5, -0.125], vec![0.5, 0.5, 0.125]).unwrap();
    Arc::new(Lattice::new(b, 0.25).unwrap())
}

/// Boundary data `c0 + c1 x + c2 y + c3 t + c4 sin(c5 x y)`.
fn scalar_data(c: [f64; 6]) -> impl Fn(&GroupPoint) -> f64 + Send + Sync + Copy {
    move |p| c[0] + c[1] * p.x()[0] + c[2] * p.y()[0] + c[3] * p.t() + c[4] * (c[5] * p.x()[0] * p.y()[0]).sin()
}

/// Sector data on Spider(3): the sector of `(x, y)` rotated by `rot` picks the leg.
fn spider_data(rot: f64, scale: f64, legs: usize) -> impl Fn(&GroupPoint) -> TargetPoint + Send + Sync + Copy {
    move |p| {
        let th = (p.y()[0].atan2(p.x()[0]) + rot).rem_euclid(std::f64::consts::TAU);
        let leg = ((th / std::f64::consts::TAU * legs as f64) as usize).min(legs - 1) + 1;
        TargetPoint::spider(leg, scale * (0.2 + p.x()[0].hypot(p.y()[0]) + p.t().abs())).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn group_axioms(
        (p, q, r) in (1usize..=3).prop_flat_map(|n| (arb_point(n, 2.0), arb_point(n, 2.0), arb_point(n, 2.0))),
    ) {
        let n = p.n();
        let (p, q, r) = (&p, &q, &r);
        let e = GroupPoint::identity(n);
        prop_assert!(multiply(&multiply(p, q), r).max_abs_diff(&multiply(p, &multiply(q, r))) <= 1e-13);
        prop_assert!(multiply(p, &e).max_abs_diff(p) == 0.0);
        prop_assert!(multiply(p, &inverse(p)).max_abs_diff(&e) <= 1e-13);
    }

    #[test]
    fn dilation_is_a_homomorphism(p in arb_h1(2.0), q in arb_h1(2.0), eps in 0.05f64..4.0) {
        let lhs = dilate(eps, &multiply(&p, &q)).unwrap();
        let rhs = multiply(&dilate(eps, &p).unwrap(), &dilate(eps, &q).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-13 * (1.0 + eps * eps));
    }

    #[test]
    fn commutator_of_flow_steps_is_central(p in arb_h1(1.0), h in 0.01f64..0.5) {
        let (x, y) = (Generator::x(0), Generator::y(1, 0));
        let mut q = p.clone();
        for (g, s) in [(x, h), (y, h), (x, -h), (y, -h)] {
            q = flow_step(&q, g, s);
        }
        let shift = GroupPoint::h1(p.x()[0], p.y()[0], p.t() + h * h);
        prop_assert!(q.max_abs_diff(&shift) <= 1e-15);
    }

    #[test]
    fn distance_is_left_invariant_and_homogeneous(
        p in arb_h1(1.0), q in arb_h1(1.0), w in arb_h1(1.0), eps in 0.1f64..3.0,
    ) {
        let d = cc_distance(&p, &q);
        prop_assert!((cc_distance(&multiply(&w, &p), &multiply(&w, &q)) - d).abs() <= 1e-9);
        let de = cc_distance(&dilate(eps, &p).unwrap(), &dilate(eps, &q).unwrap());
        prop_assert!((de - eps * d).abs() <= 1e-9);
    }

    #[test]
    fn triangle_inequality(p in arb_h1(1.0), q in arb_h1(1.0), z in arb_h1(1.0)) {
        prop_assert!(cc_distance(&p, &z) + cc_distance(&z, &q) - cc_distance(&p, &q) >= -1e-9);
    }

    #[test]
    fn endpoint_round_trip_and_horizontal_bound(w in arb_h1(1.5)) {
        prop_assume!(!w.is_identity());
        let g = solve_endpoint(&w).unwrap();
        prop_assert!(geodesic_point(&g, 1.0).max_abs_diff(&w) <= 1e-8);
        prop_assert!(cc_norm(&w) >= w.horizontal_norm_sq().sqrt() * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweeps_never_raise_the_energy(rot in 0.0f64..6.3, scale in 0.1f64..3.0) {
        let lat = small_lattice();
        let space = TargetSpace::spider(3).unwrap();
        let mut u = GridMap::from_fn(Arc::clone(&lat), space, spider_data(rot, scale, 3)).unwrap();
        let mut e = discrete_energy(&u);
        for _ in 0..30 {
            relax_sweep(&mut u);
            let next = discrete_energy(&u);
            prop_assert!(next <= e * (1.0 + 1e-12), "{next} > {e}");
            e = next;
        }
    }

    #[test]
    fn maximum_principle(c in prop::array::uniform6(-2.0f64..2.0)) {
        let lat = small_lattice();
        let phi = scalar_data(c);
        let b = GridMap::from_real(Arc::clone(&lat), phi).unwrap();
        let sol = solve_dirichlet(&b, &SolverConfig::default()).unwrap().map;
        let bvals: Vec<f64> = (0..lat.len()).filter(|&i| lat.is_boundary(i)).map(|i| b.real(i).unwrap()).collect();
        let (lo, hi) = bvals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), v| (a.min(*v), z.max(*v)));
        for &i in lat.interior() {
            let v = sol.real(i as usize).unwrap();
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn spider_solution_stays_in_the_convex_hull(rot in 0.0f64..6.3, scale in 0.1f64..3.0, legs in 1usize..=3) {
        let lat = small_lattice();
        let space = TargetSpace::spider(3).unwrap();
        let b = GridMap::from_fn(Arc::clone(&lat), space, spider_data(rot, scale, legs)).unwrap();
        let sol = solve_dirichlet(&b, &SolverConfig::default()).unwrap().map;
        let mut reach = [0.0f64; 4];
        let mut floor = f64::INFINITY;
        for i in (0..lat.len()).filter(|&i| lat.is_boundary(i)) {
            if let TargetPoint::Spider { leg, radius } = b.get(i) {
                reach[leg] = reach[leg].max(radius);
                floor = floor.min(radius);
            }
        }
        let used = reach[1..].iter().filter(|r| **r > 0.0).count();
        for &i in lat.interior() {
            match sol.get(i as usize) {
                TargetPoint::Spider { leg, radius } => {
                    prop_assert!(radius <= reach[leg] + 1e-12, "leg {leg} radius {radius} beyond {}", reach[leg]);
                    if used == 1 {
                        prop_assert!(radius >= floor - 1e-12);
                    }
                }
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }

    #[test]
    fn solver_is_deterministic(rot in 0.0f64..6.3, seed in any::<u64>()) {
        let lat = small_lattice();
        let space = TargetSpace::spider(3).unwrap();
        let b = GridMap::from_fn(Arc::clone(&lat), space, spider_data(rot, 1.0, 3)).unwrap();
        let cfg = SolverConfig { seed, ..Default::default() };
        let a = solve_dirichlet(&b, &cfg).unwrap();
        let c = solve_dirichlet(&b, &cfg).unwrap();
        prop_assert_eq!(a.energy_trace, c.energy_trace);
        for i in 0..lat.len() {
            prop_assert_eq!(a.map.get(i), c.map.get(i));
        }
    }

    #[test]
    fn map_level_interpolation_holds(rot in 0.0f64..6.3, scale in 0.1f64..3.0, e0 in 0.0f64..0.2, seed in any::<u64>()) {
        let space = TargetSpace::spider(3).unwrap();
        let u0 = SmoothMap::new(space, unit_box(), spider_data(rot, scale, 3));
        let u1 = SmoothMap::new(space, unit_box(), spider_data(rot + 1.0, 1.0, 2));
        let eta = move |p: &GroupPoint| e0 + 0.2 * (0.5 + 0.5 * (3.0 * p.x()[0] + p.t()).sin());
        let r = interpolation_inequality_check(&u0, &u1, &eta, 0.1, 300, seed).unwrap();
        prop_assert!(r.min_slack_combined >= -1e-10, "{r:?}");
    }
}

#[test]
fn real_energy_is_quadratic_in_scaling() {
    let ladder = [0.1, 0.05];
    let psi = |p: &GroupPoint| {
        let r2 = p.x()[0].powi(2) + p.y()[0].powi(2) + 4.0 * p.t().powi(2);
        (1.0 - 25.0 * r2).max(0.0).powi(2)
    };
    let u = SmoothMap::real(unit_box(), |p| p.x()[0].sin() + p.t());
    let v = SmoothMap::real(unit_box(), |p| 3.0 * (p.x()[0].sin() + p.t()));
    let a = energy_functional(&u, &psi, &ladder, 200, 50, 9).unwrap();
    let b = energy_functional(&v, &psi, &ladder, 200, 50, 9).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y.value - 9.0 * x.value).abs() <= 1e-12 * y.value.abs());
    }
}

#[test]
fn experiments_repeat_bitwise() {
    let (eta, f) = lemma53_pair("mixed").unwrap();
    let p = GroupPoint::h1(0.1, 0.2, -0.1);
    let a = lemma53_experiment(&eta, &f, &p, &[0.2, 0.1], 3000, 5).unwrap();
    let b = lemma53_experiment(&eta, &f, &p, &[0.2, 0.1], 3000, 5).unwrap();
    assert_eq!(a, b);
    let space = TargetSpace::spider(3).unwrap();
    let q = TargetPoint::spider(2, 0.5).unwrap();
    assert_eq!(distance(&space, &q, &TargetPoint::hub()).unwrap(), 0.5);
}
