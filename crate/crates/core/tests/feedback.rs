use srstab::feedback::{decay_check, martinet_modified_system, repulsion_check, FeedbackConfig, FeedbackField};
use srstab::nonsmooth::{LocusEstimate, LocusKind};
use srstab::shooting::{shoot, ShootingConfig};
use srstab::{builtin_system, Point};

fn coarse() -> FeedbackConfig {
    FeedbackConfig {
        dt: 1e-2,
        fine_dt: 1e-3,
        early_time: 0.1,
        ..FeedbackConfig::default()
    }
}

fn axis_cloud(h: f64) -> LocusEstimate {
    LocusEstimate {
        kind: LocusKind::SingularSet,
        points: (-10..=10)
            .filter(|k| *k != 0)
            .map(|k| Point(vec![0.0, 0.0, k as f64 * h]))
            .collect(),
        detection_radius: h,
    }
}

#[test]
fn euclidean_feedback_is_minus_the_offset() {
    let fb = FeedbackField::without_singular_set(builtin_system("euclidean-3").unwrap());
    let x = Point(vec![0.3, -1.2, 2.0]);
    let u = fb.feedback_control(&x).unwrap();
    let v = fb.feedback_vector(&x).unwrap();
    for k in 0..3 {
        assert!((u[k] - x[k]).abs() < 1e-8);
        assert!((v[k] + x[k]).abs() < 1e-8);
    }
}

#[test]
fn feedback_vanishes_at_the_base() {
    for name in ["euclidean-2", "heisenberg"] {
        let sys = builtin_system(name).unwrap();
        let fb = FeedbackField::without_singular_set(sys.clone());
        assert!(fb.feedback_control(&sys.base).unwrap().iter().all(|u| *u == 0.0));
        assert!(fb.feedback_vector(&sys.base).unwrap().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn martinet_feedback_is_the_terminal_control() {
    let sys = builtin_system("martinet").unwrap();
    let x = Point(vec![1.0, 0.0, 0.0]);
    let fb = FeedbackField::without_singular_set(sys.clone());
    let u = fb.feedback_control(&x).unwrap();
    let set = shoot(&sys, &x, ShootingConfig::for_system(&sys).starts, 0).unwrap();
    let terminal = sys.frame.normal_control(&x, &set.selected().terminal_p).unwrap();
    for (a, b) in u.iter().zip(&terminal) {
        assert!((a - b).abs() < 1e-6, "{u:?} vs {terminal:?}");
    }
    // along the x1-line the terminal control is (1, 0)
    assert!((u[0] - 1.0).abs() < 1e-6 && u[1].abs() < 1e-6);
}

#[test]
fn heisenberg_feedback_is_horizontal() {
    let sys = builtin_system("heisenberg").unwrap();
    let fb = FeedbackField::without_singular_set(sys.clone());
    let x = Point(vec![1.0, 0.0, 0.0]);
    let v = fb.feedback_vector(&x).unwrap();
    // residual of the least-squares projection onto span{f1, f2}
    let f = sys.frame.eval(&x).unwrap();
    let gram = [
        [dot(&f[0], &f[0]), dot(&f[0], &f[1])],
        [dot(&f[1], &f[0]), dot(&f[1], &f[1])],
    ];
    let rhs = [dot(&f[0], &v), dot(&f[1], &v)];
    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    let a = (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det;
    let b = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
    let residual = (0..3)
        .map(|k| (v[k] - a * f[0][k] - b * f[1][k]).abs())
        .fold(0.0, f64::max);
    assert!(residual <= 1e-10, "residual {residual:e}");
    // and points back along the segment to x̄
    assert!((v[0] + 1.0).abs() < 1e-6);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn euclidean_closed_loop_is_exponential() {
    let fb = FeedbackField::without_singular_set(builtin_system("euclidean-2").unwrap());
    let traj = fb.integrate_closed_loop(&Point(vec![1.0, 0.0]), 3.0).unwrap();
    assert!(decay_check(&traj) <= 1e-5);
    let last = traj.points.last().unwrap();
    assert!((traj.times.last().unwrap() - 3.0).abs() < 1e-9);
    assert!((last[0] - (-3.0f64).exp()).abs() < 1e-6 && last[1].abs() < 1e-12);
    let rep = repulsion_check(&traj, &fb.singular, 0.1);
    assert!(rep.passed && rep.min_distance > 0.0);
}

#[test]
fn closed_loop_from_the_base_stays_put() {
    let sys = builtin_system("heisenberg").unwrap();
    let fb = FeedbackField::without_singular_set(sys.clone()).with_config(coarse());
    let traj = fb.integrate_closed_loop(&sys.base, 1.0).unwrap();
    assert!(traj.points.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    assert_eq!(decay_check(&traj), 0.0);
}

#[test]
fn heisenberg_trajectory_leaves_the_axis() {
    let sys = builtin_system("heisenberg").unwrap();
    let fb = FeedbackField::new(sys, axis_cloud(0.1)).with_config(coarse());
    let traj = fb.integrate_closed_loop(&Point(vec![0.0, 0.0, 0.5]), 6.0).unwrap();
    let off_axis = traj
        .times
        .iter()
        .zip(&traj.points)
        .filter(|(t, _)| **t >= 0.05)
        .map(|(_, x)| x[0].hypot(x[1]))
        .fold(f64::INFINITY, f64::min);
    assert!(off_axis > 0.0);
    assert!(decay_check(&traj) <= 1e-2);
    assert!(traj.final_value() <= 1e-4 * traj.initial_value());
    assert!(repulsion_check(&traj, &fb.singular, 0.05).min_distance > 0.0);
}

#[test]
fn heisenberg_random_seeds_decay() {
    let sys = builtin_system("heisenberg").unwrap();
    let fb = FeedbackField::new(sys, axis_cloud(0.1)).with_config(coarse());
    for x0 in [[0.7, -0.2, 0.4], [-0.5, 0.6, -0.8], [0.1, 0.9, 0.05]] {
        let traj = fb.integrate_closed_loop(&Point(x0.to_vec()), 6.0).unwrap();
        assert!(decay_check(&traj) <= 1e-2, "{x0:?}");
        // V never increases beyond the integration error
        for w in traj.values.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "{x0:?}");
        }
    }
}

#[test]
fn modified_martinet_leaves_the_surface() {
    let sys = martinet_modified_system(&builtin_system("martinet").unwrap()).unwrap();
    let fb = FeedbackField::without_singular_set(sys).with_config(coarse());
    let traj = fb.integrate_closed_loop(&Point(vec![1.0, 0.0, 0.2]), 6.0).unwrap();
    for (t, x) in traj.times.iter().zip(&traj.points) {
        if *t > 0.0 && *t <= 0.05 {
            assert!(x[1].abs() > 0.0, "stuck on x2 = 0 at t = {t}");
        }
    }
    assert!(decay_check(&traj) <= 1e-2);
    assert!(traj.final_value() <= 1e-4 * traj.initial_value());
}

#[test]
fn modified_construction_needs_martinet() {
    assert!(martinet_modified_system(&builtin_system("heisenberg").unwrap()).is_err());
}
