//! Closed-form distances used as calibration references.

use std::f64::consts::PI;

/// Sub-Riemannian distance from the origin in the Heisenberg group with
/// frame `∂x − (y/2)∂z, ∂y + (x/2)∂z`.
///
/// A minimizer projects to a circular arc over the chord `(0,0) → (x,y)`
/// that encloses area `|z|`; with central angle `φ`,
/// `|z| / r² = (φ − sin φ) / (8 sin²(φ/2))` and `d = r φ / (2 sin(φ/2))`.
pub fn heisenberg_distance(x: f64, y: f64, z: f64) -> f64 {
    let r2 = x * x + y * y;
    let az = z.abs();
    if az == 0.0 {
        return r2.sqrt();
    }
    if r2 == 0.0 {
        return (4.0 * PI * az).sqrt();
    }
    let target = az / r2;
    let ratio = |phi: f64| {
        let s = (0.5 * phi).sin();
        (phi - phi.sin()) / (8.0 * s * s)
    };
    // ratio is increasing on (0, 2π), from 0 to ∞
    let (mut lo, mut hi) = (0.0, 2.0 * PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid < 1e-300 || ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    r2.sqrt() * phi / (2.0 * (0.5 * phi).sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits() {
        assert!((heisenberg_distance(3.0, 4.0, 0.0) - 5.0).abs() < 1e-15);
        assert!((heisenberg_distance(0.0, 0.0, 0.25) - PI.sqrt()).abs() < 1e-14);
        // small area: nearly the chord
        assert!((heisenberg_distance(1.0, 0.0, 1e-9) - 1.0).abs() < 1e-6);
        // near the axis the value approaches the axis value
        let d = heisenberg_distance(1e-6, 0.0, 0.5);
        assert!((d - (2.0 * PI).sqrt()).abs() < 1e-4, "{d}");
        assert_eq!(heisenberg_distance(0.3, 0.2, 0.1), heisenberg_distance(-0.2, 0.3, -0.1));
    }

    #[test]
    fn semicircle() {
        // semicircle of radius ½ over the unit chord: area π/8, length π/2
        let d = heisenberg_distance(1.0, 0.0, PI / 8.0);
        assert!((d - PI / 2.0).abs() < 1e-12, "{d}");
    }
}
