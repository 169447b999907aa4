use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srstab::nonsmooth::{
    box_counting_dimension, cluster_hj_residuals, estimate_cut_and_conjugate, estimate_singular_set,
    limiting_subdifferential, upper_lower_paraboloid_probe, PROBE_COUNT, PROBE_RADIUS,
};
use srstab::oracle::fd_gradient;
use srstab::shooting::{gradient_from_shooting, Gradient, ShootingConfig, WarmShooter};
use srstab::{builtin_system, ChartBox, Point};

#[test]
fn martinet_clusters_satisfy_hamilton_jacobi() {
    let sys = builtin_system("martinet").unwrap();
    let mut s = WarmShooter::new(sys.clone(), ShootingConfig::for_system(&sys));
    let est = limiting_subdifferential(&mut s, &Point(vec![1.0, 0.0, 0.0]), PROBE_RADIUS, PROBE_COUNT, 4).unwrap();
    assert!(!est.clusters.is_empty());
    for r in cluster_hj_residuals(&sys, &est).unwrap() {
        assert!(r <= 1e-3, "{r}");
    }
}

#[test]
fn euclidean_points_are_differentiable() {
    let sys = builtin_system("euclidean-2").unwrap();
    let mut s = WarmShooter::new(sys.clone(), ShootingConfig::for_system(&sys));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let x = Point(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        if x.norm() < 0.1 {
            continue;
        }
        let est = limiting_subdifferential(&mut s, &x, PROBE_RADIUS, PROBE_COUNT, 1).unwrap();
        assert!(est.differentiable, "{x:?}");
        let fd = fd_gradient(&mut s, &x, 1e-4).unwrap();
        assert!(est.clusters[0].zeta.distance(&fd) < 1e-4);
    }
}

#[test]
fn gradient_is_continuous_away_from_the_axis() {
    let sys = builtin_system("heisenberg").unwrap();
    let grad = |x: &Point| match gradient_from_shooting(&sys, x).unwrap() {
        Gradient::Unique(z) => z,
        other => panic!("{x:?} should be regular, got {other:?}"),
    };
    for x in [[0.5, 0.2, 0.1], [-0.3, 0.7, -0.4], [0.9, -0.6, 0.3]] {
        let x = Point(x.to_vec());
        let z = grad(&x);
        for k in 0..3 {
            let shifted = |h: f64| {
                let mut y = x.clone();
                y[k] += h;
                grad(&y).distance(&z)
            };
            // a locally Lipschitz gradient: ten times closer, ten times smaller
            let (far, near) = (shifted(1e-3), shifted(1e-4));
            assert!(far <= 0.1, "{x:?} axis {k}: {far}");
            assert!(near <= 0.2 * far + 1e-6, "{x:?} axis {k}: {near} vs {far}");
        }
    }
}

#[test]
fn paraboloids_on_and_off_the_axis() {
    let sys = builtin_system("heisenberg").unwrap();
    let mut s = WarmShooter::new(sys.clone(), ShootingConfig::for_system(&sys));
    // regular point: its gradient gives both paraboloids for a generous σ
    let x = Point(vec![0.8, 0.1, 0.1]);
    let Gradient::Unique(z) = gradient_from_shooting(&sys, &x).unwrap() else {
        panic!()
    };
    let p = upper_lower_paraboloid_probe(&mut s, &x, &z, 0.05, 50.0, 2).unwrap();
    assert!(p.upper && p.lower);
    // on the axis a single cluster's covector cannot sit under V
    let x = Point(vec![0.0, 0.0, 0.5]);
    let Gradient::Set(zs) = gradient_from_shooting(&sys, &x).unwrap() else {
        panic!()
    };
    let p = upper_lower_paraboloid_probe(&mut s, &x, &zs[0], 0.05, 1.0, 2).unwrap();
    assert!(!p.lower);
}

#[test]
fn heisenberg_loci_on_a_coarse_grid() {
    let sys = builtin_system("heisenberg").unwrap();
    let h = 0.25;
    let loci = estimate_cut_and_conjugate(&sys, &ChartBox::cube(3, 1.0), h).unwrap();
    assert!(!loci.singular.points.is_empty());
    for p in &loci.singular.points {
        assert!(p[0].hypot(p[1]) <= 2.0 * h, "{p:?}");
    }
    assert!(loci.inclusion_holds);
    let dim = box_counting_dimension(&loci.singular.points, &[2.0 * h, 4.0 * h, 8.0 * h]);
    assert!(dim <= 2.3);
}

#[test]
fn martinet_singular_set_snapshot() {
    let sys = builtin_system("martinet").unwrap();
    let s = estimate_singular_set(&sys, &ChartBox::cube(3, 1.0), 0.25).unwrap();
    assert_eq!(s.points.len(), MARTINET_SINGULAR_POINTS);
    // every flagged node sits on the Martinet surface
    assert!(s.points.iter().all(|p| p[1] == 0.0), "{:?}", s.points);
}

const MARTINET_SINGULAR_POINTS: usize = 8;
