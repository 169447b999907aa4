use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srstab::chart::BUILTIN_NAMES;
use srstab::extremal::{exp_map, integrate_extremal};
use srstab::{builtin_system, CoVector, Point};

fn point_and_covector(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-2.5f64..2.5, n),
        prop::collection::vec(-5.0f64..5.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hamiltonian_is_quadratic_in_p(sys in 0..BUILTIN_NAMES.len(), (x, p) in point_and_covector(3)) {
        let s = builtin_system(BUILTIN_NAMES[sys]).unwrap();
        let n = s.dim();
        let (x, p) = (Point(x[..n].to_vec()), CoVector(p[..n].to_vec()));
        let h = s.frame.hamiltonian(&x, &p).unwrap();
        for lambda in [-2.0, -1.0, 0.5, 3.0] {
            let hl = s.frame.hamiltonian(&x, &p.scaled(lambda)).unwrap();
            prop_assert!((hl - lambda * lambda * h).abs() <= 1e-12 * (1.0 + hl.abs()));
        }
    }

    #[test]
    fn hamiltonian_is_half_the_control_norm(sys in 0..BUILTIN_NAMES.len(), (x, p) in point_and_covector(3)) {
        let s = builtin_system(BUILTIN_NAMES[sys]).unwrap();
        let n = s.dim();
        let (x, p) = (Point(x[..n].to_vec()), CoVector(p[..n].to_vec()));
        let u = s.frame.normal_control(&x, &p).unwrap();
        let h = s.frame.hamiltonian(&x, &p).unwrap();
        prop_assert!((h - 0.5 * u.iter().map(|v| v * v).sum::<f64>()).abs() <= 1e-12 * (1.0 + h));
    }

    #[test]
    fn euclidean_exp_is_translation(p in prop::collection::vec(-3.0f64..3.0, 2)) {
        let s = builtin_system("euclidean-2").unwrap();
        let x = exp_map(&s.frame, &s.base, &CoVector(p.clone())).unwrap();
        prop_assert!((x[0] - p[0]).abs() < 1e-12 && (x[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_extremals_scale(p in prop::collection::vec(-2.0f64..2.0, 3), t in 0.1f64..0.9) {
        // exp(t p0) is the time-t point of the extremal from p0
        let s = builtin_system("heisenberg").unwrap();
        let p0 = CoVector(p);
        let a = integrate_extremal(&s.frame, &s.base, &p0, t, 400).unwrap();
        let b = integrate_extremal(&s.frame, &s.base, &p0.scaled(t), 1.0, 400).unwrap();
        prop_assert!(a.endpoint().x.distance(&b.endpoint().x) < 1e-9);
    }
}

#[test]
fn martinet_and_heisenberg_bracket_generate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut next = || rng.gen_range(-3.0..3.0);
    for name in ["heisenberg", "martinet"] {
        let s = builtin_system(name).unwrap();
        for _ in 0..100 {
            let x = [next(), next(), next()];
            assert_eq!(s.frame.bracket_rank(&x, 2, 1e-8), 3, "{name} at {x:?}");
        }
    }
}
