// Small dense helpers for the inner loops, where nalgebra's heap matrices
// would dominate the cost.

/// Determinant of a row-major `n×n` matrix by partial-pivot elimination.
pub(crate) fn det(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))
            .unwrap();
        if m[piv * n + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..n {
                m.swap(c * n + k, piv * n + k);
            }
            d = -d;
        }
        let p = m[c * n + c];
        d *= p;
        for r in c + 1..n {
            let f = m[r * n + c] / p;
            if f != 0.0 {
                for k in c..n {
                    m[r * n + k] -= f * m[c * n + k];
                }
            }
        }
    }
    d
}

/// `det(A) / Π ‖column‖`, in `[-1, 1]` by Hadamard's inequality.
pub(crate) fn normalized_det(a: &[f64], n: usize) -> f64 {
    let mut scale = 1.0;
    for c in 0..n {
        let s: f64 = (0..n).map(|r| a[r * n + c] * a[r * n + c]).sum::<f64>().sqrt();
        if s == 0.0 {
            return 0.0;
        }
        scale *= s;
    }
    det(a, n) / scale
}

/// Solves `A x = b` in place (row-major `A`, destroyed). Returns `false` on
/// an exactly singular pivot.
pub(crate) fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
            .unwrap();
        if a[piv * n + c] == 0.0 {
            return false;
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            b.swap(c, piv);
        }
        let p = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / p;
            if f != 0.0 {
                for k in c..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c * n + k] * b[k]).sum();
        b[c] = (b[c] - s) / a[c * n + c];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_solve() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        assert!((det(&a, 3) - 18.0).abs() < 1e-12);
        let mut m = a;
        let mut b = [1.0, 2.0, 3.0];
        assert!(solve_in_place(&mut m, &mut b, 3));
        let r: Vec<f64> = (0..3).map(|i| (0..3).map(|k| a[i * 3 + k] * b[k]).sum()).collect();
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12 && (r[2] - 3.0).abs() < 1e-12);
        assert_eq!(normalized_det(&[1.0, 0.0, 0.0, 0.0], 2), 0.0);
        assert!((normalized_det(&[0.0, 1.0, 1.0, 0.0], 2) + 1.0).abs() < 1e-15);
    }
}
