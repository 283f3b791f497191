//! Property tests for the structural invariants of each module.

use std::f64::consts::PI;
use std::sync::Arc;

use pinning_lab::diagnostics::{deviation_report, energy_density, rate_fit, weighted_energy};
use pinning_lab::fields::{
    gradient, laplacian, masked_norms, ComplexField, Grid2D, RegionMask, ScalarField,
};
use pinning_lab::glsolver::{initial_data, run, DtPolicy, SolverConfig, VortexSpec};
use pinning_lab::odelaw;
use pinning_lab::pinning::{
    critical_point_at, epsilon0, estimate_theta, PinningProfile, Shape, SmoothFunction,
};
use pinning_lab::vortex::{boundary_winding, detect_vortices, plaquette_winding};
use proptest::prelude::*;

const N: usize = 17;

fn grid() -> Grid2D {
    Grid2D::unit_square(N).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

fn interior_point() -> impl Strategy<Value = [f64; 2]> {
    (0.2..0.8f64, 0.2..0.8f64).prop_map(|(x, y)| [x, y])
}

fn quadratic(center: [f64; 2], lambda: f64, offset: f64, grid: Grid2D) -> PinningProfile {
    let w: Arc<dyn SmoothFunction> = Arc::new(Shape::Quadratic {
        center,
        lambda,
        offset,
    });
    PinningProfile::with_constants(w, 0.0, 1.0, grid).unwrap()
}

/// Largest absolute phase step along the edges of the plaquette at `(i, j)`.
fn max_phase_step(v: &ComplexField, i: usize, j: usize) -> f64 {
    let corners = [v.get(i, j), v.get(i + 1, j), v.get(i + 1, j + 1), v.get(i, j + 1)];
    (0..4)
        .map(|k| {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]).abs()
        })
        .fold(0.0, f64::max)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_linear(
        f in values(2 * N * N),
        g in values(2 * N * N),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let n = N * N;
        let f = ComplexField::new(grid(), f[..n].to_vec(), f[n..].to_vec()).unwrap();
        let g = ComplexField::new(grid(), g[..n].to_vec(), g[n..].to_vec()).unwrap();
        let lhs = laplacian(&f.lin_comb(alpha, &g, beta).unwrap()).unwrap();
        let rhs = laplacian(&f).unwrap().lin_comb(alpha, &laplacian(&g).unwrap(), beta).unwrap();
        let scale = (N * N) as f64;
        prop_assert!(lhs.max_distance(&rhs).unwrap() <= 1e-13 * scale * 16.0);
    }

    #[test]
    fn gradient_is_linear(
        f in values(N * N),
        g in values(N * N),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let f = ScalarField::new(grid(), f).unwrap();
        let g = ScalarField::new(grid(), g).unwrap();
        let (cx, cy) = gradient(&f.lin_comb(alpha, &g, beta).unwrap()).unwrap();
        let (fx, fy) = gradient(&f).unwrap();
        let (gx, gy) = gradient(&g).unwrap();
        for (c, (a, b)) in [(cx, (fx, gx)), (cy, (fy, gy))] {
            let expect = a.lin_comb(alpha, &b, beta).unwrap();
            for (u, v) in c.values().iter().zip(expect.values()) {
                prop_assert!((u - v).abs() <= 1e-12 * (N as f64));
            }
        }
    }

    #[test]
    fn full_mask_l2_is_bounded_by_sup(f in prop::collection::vec(0.0..5.0f64, N * N)) {
        let f = ScalarField::new(grid(), f).unwrap();
        let (sup, l2) = masked_norms(&f, &RegionMask::full(grid())).unwrap();
        let h = grid().h();
        let area = h * h * (N * N) as f64;
        prop_assert!(l2 <= sup * area.sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn ball_exclusion_matches_distance_rule(c in interior_point(), delta in 0.01..0.4f64) {
        let g = grid();
        let mask = RegionMask::excluding_balls(g, &[c], delta);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                prop_assert_eq!(mask.is_included(i, j), dist(g.coords(i, j), c) >= delta);
            }
        }
    }

    #[test]
    fn both_density_models_share_omega(
        c in interior_point(),
        amp in 0.0..2.0f64,
        width in 0.5..10.0f64,
    ) {
        let a: Arc<dyn SmoothFunction> = Arc::new(Shape::GaussianBump {
            center: c,
            offset: 1.0,
            amplitude: amp,
            width,
        });
        let p = PinningProfile::from_density(a.clone(), grid()).unwrap();
        let q = PinningProfile::thin_film(a, grid()).unwrap();
        prop_assert_eq!(p.omega_field().values(), q.omega_field().values());
    }

    #[test]
    fn epsilon0_ignores_omega_offset(
        shift in -5.0..5.0f64,
        coef_a in -2.0..2.0f64,
        coef_b in 0.1..4.0f64,
    ) {
        let build = |offset: f64| {
            let w: Arc<dyn SmoothFunction> = Arc::new(Shape::Quadratic {
                center: [0.5, 0.5],
                lambda: 1.0,
                offset,
            });
            PinningProfile::with_constants(w, coef_a, coef_b, grid()).unwrap()
        };
        prop_assert_eq!(epsilon0(&build(0.0)), epsilon0(&build(shift)));
    }

    #[test]
    fn theta_matches_isotropic_quadratic(lambda in 0.1..10.0f64, seed in 0u64..1000) {
        let p = quadratic([0.5, 0.5], lambda, 0.0, grid());
        let cp = critical_point_at(&p, [0.5, 0.5]);
        let (theta1, _) = estimate_theta(&p, &cp, 0.2, 512, seed).unwrap();
        let exact = 2.0 * lambda.sqrt();
        prop_assert!((theta1 - exact).abs() <= 0.01 * exact);
    }

    #[test]
    fn detection_ignores_global_phase(
        b in interior_point(),
        degree in prop_oneof![Just(1), Just(-1), Just(2)],
        angle in -3.0..3.0f64,
    ) {
        let g = Grid2D::unit_square(41).unwrap();
        let v = initial_data(&VortexSpec::single(b, degree), 0.05, g).unwrap().v;
        let a = detect_vortices(&v, 0.0).unwrap();
        let r = detect_vortices(&v.rotate(angle), 0.0).unwrap();
        prop_assert_eq!(a.observations.len(), r.observations.len());
        for (x, y) in a.observations.iter().zip(&r.observations) {
            prop_assert_eq!(x.degree, y.degree);
            prop_assert!(dist(x.position, y.position) <= 1e-9);
        }
    }

    #[test]
    fn winding_is_additive_under_products(
        b1 in interior_point(),
        b2 in interior_point(),
        d1 in -2i32..=2,
        d2 in -2i32..=2,
    ) {
        let g = Grid2D::unit_square(25).unwrap();
        let v1 = initial_data(&VortexSpec::single(b1, d1), 0.05, g).unwrap().v;
        let v2 = initial_data(&VortexSpec::single(b2, d2), 0.05, g).unwrap().v;
        let prod = v1.mul(&v2).unwrap();
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let resolved = max_phase_step(&v1, i, j) + max_phase_step(&v2, i, j) < PI;
                if let (true, Ok(w1), Ok(w2)) =
                    (resolved, plaquette_winding(&v1, i, j), plaquette_winding(&v2, i, j))
                {
                    prop_assert_eq!(plaquette_winding(&prod, i, j).unwrap(), w1 + w2);
                }
            }
        }
    }

    #[test]
    fn detected_degrees_sum_to_boundary_winding(
        centers in prop::collection::vec(interior_point(), 1..4),
        degrees in prop::collection::vec(prop_oneof![Just(1), Just(-1)], 3),
    ) {
        let g = Grid2D::unit_square(49).unwrap();
        let mut kept: Vec<[f64; 2]> = Vec::new();
        for c in centers {
            if kept.iter().all(|&k| dist(k, c) > 0.1) {
                kept.push(c);
            }
        }
        let spec = VortexSpec::new(kept.clone(), degrees[..kept.len()].to_vec()).unwrap();
        let v = initial_data(&spec, 0.04, g).unwrap().v;
        let det = detect_vortices(&v, 0.0).unwrap();
        prop_assume!(det.skipped == 0);
        prop_assert_eq!(det.total_degree(), boundary_winding(&v).unwrap());
    }

    #[test]
    fn ode_descends_omega(b in interior_point(), lambda in 0.2..4.0f64) {
        let p = quadratic([0.45, 0.55], lambda, 0.0, grid());
        let traj = &odelaw::integrate(&p, &[b], 1.0, 1e-2).unwrap()[0];
        for w in traj.points.windows(2) {
            prop_assert!(p.omega(w[1]) <= p.omega(w[0]) + 1e-10);
        }
    }

    #[test]
    fn ode_is_translation_equivariant(
        b in (0.3..0.7f64, 0.3..0.7f64),
        s in (-0.2..0.2f64, -0.2..0.2f64),
    ) {
        let big = Grid2D::square(33, [-1.0, -1.0], 3.0).unwrap();
        let c = [0.5, 0.5];
        let shifted = [c[0] + s.0, c[1] + s.1];
        let p = quadratic(c, 1.0, 0.0, big);
        let q = quadratic(shifted, 1.0, 0.0, big);
        let y = &odelaw::integrate(&p, &[[b.0, b.1]], 1.0, 1e-2).unwrap()[0];
        let z = &odelaw::integrate(&q, &[[b.0 + s.0, b.1 + s.1]], 1.0, 1e-2).unwrap()[0];
        for (u, v) in y.points.iter().zip(&z.points) {
            prop_assert!(dist([u[0] + s.0, u[1] + s.1], *v) <= 1e-12);
        }
    }

    #[test]
    fn energy_density_is_nonnegative(f in values(2 * N * N), eps in 0.02..0.5f64) {
        let n = N * N;
        let v = ComplexField::new(grid(), f[..n].to_vec(), f[n..].to_vec()).unwrap();
        let p = quadratic([0.5, 0.5], 1.0, 0.1, grid());
        let e = energy_density(&v, &p, eps).unwrap();
        prop_assert!(e.values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn weighted_energy_grows_with_sigma(
        b in interior_point(),
        s1 in 0.02..0.2f64,
        ds in 0.0..0.2f64,
    ) {
        let g = Grid2D::unit_square(33).unwrap();
        let v = initial_data(&VortexSpec::single(b, 1), 0.05, g).unwrap().v;
        let p = quadratic([0.5, 0.5], 1.0, 0.1, g);
        let small = weighted_energy(&v, &p, 0.05, &[b], s1, 0.0).unwrap();
        let large = weighted_energy(&v, &p, 0.05, &[b], s1 + ds, 0.0).unwrap();
        prop_assert!(large.total_weighted >= small.total_weighted * (1.0 - 1e-12));
    }

    #[test]
    fn sup_deviation_shrinks_with_delta(
        b in interior_point(),
        d1 in 0.01..0.12f64,
        dd in 0.0..0.12f64,
    ) {
        let g = Grid2D::unit_square(33).unwrap();
        let v = initial_data(&VortexSpec::single(b, 1), 0.05, g).unwrap().v;
        let small = deviation_report(&v, &[b], 0.05, d1, 0.0).unwrap();
        let large = deviation_report(&v, &[b], 0.05, d1 + dd, 0.0).unwrap();
        prop_assert!(large.sup_dev <= small.sup_dev);
        prop_assert!(small.sup_dev >= 0.0 && small.l2_dev >= 0.0 && small.h1_dev >= 0.0);
    }

    #[test]
    fn rate_fit_recovers_power_laws(
        c in 0.01..100.0f64,
        slope in -3.0..3.0f64,
        eps in prop::collection::btree_set(1u32..200, 3..8),
    ) {
        let pairs: Vec<(f64, f64)> = eps
            .into_iter()
            .map(|e| {
                let e = e as f64 * 1e-3;
                (e, c * e.powf(slope))
            })
            .collect();
        let fit = rate_fit(&pairs).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-12);
        prop_assert!((fit.intercept - c.ln()).abs() <= 1e-10);
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let big = Grid2D::square(33, [-2.0, -2.0], 4.0).unwrap();
    let w: Arc<dyn SmoothFunction> = Arc::new(Shape::DoubleWell {
        center: [0.0, 0.0],
        well: 0.8,
        offset: 0.0,
    });
    let p = PinningProfile::with_constants(w, 0.0, 1.0, big).unwrap();
    let start = [[0.3, 0.4]];
    let end = |dt: f64| odelaw::integrate(&p, &start, 1.0, dt).unwrap()[0].last_point();
    let oracle = end(1e-6);
    let err = |dt: f64| dist(end(dt), oracle);
    for dt in [0.1, 0.05] {
        assert!(err(dt) / err(dt / 2.0) >= 8.0, "dt = {dt}");
    }
}

#[test]
fn solver_is_deterministic_and_keeps_boundary() {
    let g = Grid2D::unit_square(33).unwrap();
    let p = Arc::new(quadratic([0.5, 0.5], 2.0, 0.0, g));
    let cfg = SolverConfig::new(p, 0.08, 0.05, DtPolicy::Strang)
        .unwrap()
        .with_snapshot_every(0.01)
        .unwrap();
    let spec = VortexSpec::single([0.62, 0.47], 1);
    let a = run(&cfg, &spec).unwrap();
    let b = run(&cfg, &spec).unwrap();
    let trace = initial_data(&spec, 0.08, g).unwrap().g;
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(x.v.re(), y.v.re());
        assert_eq!(x.v.im(), y.v.im());
        for (&k, &w) in trace.nodes().iter().zip(trace.values()) {
            assert_eq!([x.v.re()[k], x.v.im()[k]], w);
        }
    }
}
