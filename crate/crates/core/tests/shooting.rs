use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srstab::extremal::{integrate_extremal, path_energy_and_length};
use srstab::oracle::fd_gradient;
use srstab::shooting::{gradient_from_shooting, shoot, value_function, Gradient, ShootingConfig, WarmShooter};
use srstab::{builtin_system, Point};

#[test]
fn euclidean_minimizers_are_unique() {
    let sys = builtin_system("euclidean-3").unwrap();
    let mut shooter = WarmShooter::new(sys.clone(), ShootingConfig::for_system(&sys));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = Point((0..3).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let set = shooter.solve(&x).unwrap();
        assert_eq!(set.multiplicity, 1, "{x:?}");
        assert!((set.value - x.norm().powi(2)).abs() < 1e-6);
    }
}

#[test]
fn candidate_cost_is_twice_the_hamiltonian_and_the_path_energy() {
    let sys = builtin_system("heisenberg").unwrap();
    let config = ShootingConfig::for_system(&sys);
    for x in [[0.6, 0.2, 0.3], [-0.4, 0.9, -0.5], [1.0, 0.0, 0.0]] {
        let set = shoot(&sys, &Point(x.to_vec()), config.starts, 4).unwrap();
        for c in &set.candidates {
            let h = sys.frame.hamiltonian(&sys.base, &c.p0).unwrap();
            assert!((c.cost - 2.0 * h).abs() <= 1e-12 * (1.0 + c.cost));
            let e = integrate_extremal(&sys.frame, &sys.base, &c.p0, 1.0, 1000).unwrap();
            let (energy, _) = path_energy_and_length(&sys.frame, &e);
            assert!((c.cost - energy).abs() <= 1e-6, "{x:?}: {} vs {energy}", c.cost);
        }
    }
}

#[test]
fn sub_arcs_of_minimizers_are_minimizers() {
    let sys = builtin_system("heisenberg").unwrap();
    let config = ShootingConfig::for_system(&sys);
    let target = Point(vec![0.8, 0.3, 0.2]);
    let set = shoot(&sys, &target, config.starts, 9).unwrap();
    assert_eq!(set.multiplicity, 1);
    let p0 = &set.selected().p0;
    let e = integrate_extremal(&sys.frame, &sys.base, p0, 1.0, 1000).unwrap();
    for (t, k) in [(0.3, 300), (0.6, 600), (0.9, 900)] {
        let s = &e.states[k];
        let sub = shoot(&sys, &s.x, config.starts, 9).unwrap();
        assert_eq!(sub.multiplicity, 1, "t = {t}");
        // ζ(γ(t)) = 2 t p(t)
        let zeta = sub.selected().zeta();
        for (z, p) in zeta.iter().zip(s.p.iter()) {
            assert!((z - 2.0 * t * p).abs() < 1e-4, "t = {t}: {z} vs {}", 2.0 * t * p);
        }
    }
}

#[test]
fn heisenberg_gradient_matches_finite_differences() {
    let sys = builtin_system("heisenberg").unwrap();
    let x = Point(vec![1.0, 0.0, 0.0]);
    let Gradient::Unique(zeta) = gradient_from_shooting(&sys, &x).unwrap() else {
        panic!("(1, 0, 0) should be a differentiability point");
    };
    let mut v = |y: &Point| value_function(&sys, y);
    let fd = fd_gradient(&mut v, &x, 1e-4).unwrap();
    assert!(zeta.distance(&fd) < 1e-4, "{zeta:?} vs {fd:?}");
}

#[test]
fn conjugate_minimizers_sit_on_the_axis() {
    let sys = builtin_system("heisenberg").unwrap();
    let config = ShootingConfig::for_system(&sys);
    for z in [0.2, -0.4, 0.7] {
        let set = shoot(&sys, &Point(vec![0.0, 0.0, z]), 64, 3).unwrap();
        assert!(set.selected().is_conjugate(config.conjugate_threshold));
        assert!(set.multiplicity >= 2);
        // every co-optimal cluster has the same cost
        for c in set.optimal() {
            assert!((c.cost - set.value).abs() <= 1e-5 * set.value);
        }
    }
}

#[test]
fn euclidean_examples() {
    let sys = builtin_system("euclidean-2").unwrap();
    assert!((value_function(&sys, &Point(vec![3.0, 4.0])).unwrap() - 25.0).abs() < 1e-8);
    assert_eq!(value_function(&sys, &sys.base).unwrap(), 0.0);
    let set = shoot(&sys, &Point(vec![1.0, 1.0]), 32, 0).unwrap();
    assert_eq!(set.multiplicity, 1);
    assert!(set.selected().p0.distance(&srstab::CoVector(vec![1.0, 1.0])) < 1e-6);
    let Gradient::Unique(zeta) = gradient_from_shooting(&sys, &Point(vec![1.0, 2.0])).unwrap() else {
        panic!("Euclidean targets are regular");
    };
    assert!(zeta.distance(&srstab::CoVector(vec![2.0, 4.0])) < 1e-6);
}
