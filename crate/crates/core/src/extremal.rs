//! Normal extremals: the Hamiltonian system of `H(x,p) = ½ Σ ⟨p, f_i(x)⟩²`,
//! its linearization, and the exponential map built on top of it.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chart::{CoVector, Frame, Point};
use crate::error::{Error, Result};
use crate::linalg::normalized_det;

/// Default number of fixed steps over a unit time interval.
pub const DEFAULT_STEPS: usize = 1000;

/// Hadamard-normalized determinants below this are treated as sign-less.
pub(crate) const DET_NOISE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalState {
    pub x: Point,
    pub p: CoVector,
}

/// A time-sampled normal extremal.
#[derive(Clone, Debug, Serialize)]
pub struct Extremal {
    pub times: Vec<f64>,
    pub states: Vec<ExtremalState>,
    pub energy0: f64,
}

impl Extremal {
    pub fn endpoint(&self) -> &ExtremalState {
        self.states.last().expect("extremal has at least one state")
    }

    /// `max_k |H(ψ(t_k)) − H(ψ(0))|`.
    pub fn max_energy_drift(&self, frame: &Frame) -> f64 {
        self.states
            .iter()
            .map(|s| (raw_hamiltonian(frame, &s.x, &s.p) - self.energy0).abs())
            .fold(0.0, f64::max)
    }
}

/// Extremal state together with `∂(x(t), p(t))/∂p_0`.
#[derive(Clone, Debug)]
pub struct VariationalState {
    pub state: ExtremalState,
    /// `2n × n`; equals `[0; I]` at `t = 0`.
    pub sensitivity: DMatrix<f64>,
}

/// Scratch space for evaluating the Hamiltonian vector field.
pub(crate) struct Flow<'a> {
    frame: &'a Frame,
    n: usize,
    m: usize,
    f: Vec<f64>,
    d: Vec<f64>,
    w: Vec<f64>,
    u: Vec<f64>,
    hc: Vec<f64>,
    a: Vec<f64>,
}

impl<'a> Flow<'a> {
    pub(crate) fn new(frame: &'a Frame) -> Self {
        let n = frame.dim();
        let m = frame.rank();
        Self {
            frame,
            n,
            m,
            f: vec![0.0; m * n],
            d: vec![0.0; m * n * n],
            w: vec![0.0; m * n],
            u: vec![0.0; m],
            hc: vec![0.0; n * n],
            a: vec![0.0; 4 * n * n],
        }
    }

    /// `y = [x, p]` or `[x, p, S]` with `S` the row-major `2n×n` sensitivity.
    pub(crate) fn rhs(&mut self, y: &[f64], dy: &mut [f64], variational: bool) {
        let (n, m) = (self.n, self.m);
        let (x, rest) = y.split_at(n);
        let p = &rest[..n];
        self.frame.fields_into(x, &mut self.f);
        self.frame.jacobians_into(x, &mut self.d);
        for i in 0..m {
            self.u[i] = (0..n).map(|j| p[j] * self.f[i * n + j]).sum();
            for k in 0..n {
                self.w[i * n + k] = (0..n).map(|j| p[j] * self.d[(i * n + j) * n + k]).sum();
            }
        }
        for j in 0..n {
            dy[j] = (0..m).map(|i| self.u[i] * self.f[i * n + j]).sum();
            dy[n + j] = -(0..m).map(|i| self.u[i] * self.w[i * n + j]).sum::<f64>();
        }
        if !variational {
            return;
        }
        // A = ∂F/∂(x, p), row-major 2n × 2n
        let nn = 2 * n;
        self.a.fill(0.0);
        for i in 0..m {
            let ui = self.u[i];
            for r in 0..n {
                for c in 0..n {
                    let fir = self.f[i * n + r];
                    let fic = self.f[i * n + c];
                    // ∂ẋ_r/∂x_c
                    self.a[r * nn + c] += self.w[i * n + c] * fir + ui * self.d[(i * n + r) * n + c];
                    // ∂ẋ_r/∂p_c
                    self.a[r * nn + n + c] += fic * fir;
                    // ∂ṗ_r/∂p_c
                    self.a[(n + r) * nn + n + c] -= fic * self.w[i * n + r] + ui * self.d[(i * n + c) * n + r];
                }
            }
            self.frame.contracted_hessian_into(x, p, i, &mut self.hc);
            for r in 0..n {
                for c in 0..n {
                    // ∂ṗ_r/∂x_c
                    self.a[(n + r) * nn + c] -= self.w[i * n + c] * self.w[i * n + r] + ui * self.hc[r * n + c];
                }
            }
        }
        let s = &y[nn..];
        let ds = &mut dy[nn..];
        for r in 0..nn {
            for c in 0..n {
                ds[r * n + c] = (0..nn).map(|k| self.a[r * nn + k] * s[k * n + c]).sum();
            }
        }
    }
}

/// Fixed-step classical RK4 from `t = 0` to `t_end`. `observe(k, t_k, y_k)`
/// sees every grid state including the initial one.
pub(crate) fn integrate<F>(
    frame: &Frame,
    mut y: Vec<f64>,
    t_end: f64,
    steps: usize,
    variational: bool,
    mut observe: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, f64, &[f64]),
{
    let n = frame.dim();
    let len = y.len();
    let mut flow = Flow::new(frame);
    let h = t_end / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    );
    observe(0, 0.0, &y);
    for step in 0..steps {
        flow.rhs(&y, &mut k1, variational);
        for j in 0..len {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        flow.rhs(&tmp, &mut k2, variational);
        for j in 0..len {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        flow.rhs(&tmp, &mut k3, variational);
        for j in 0..len {
            tmp[j] = y[j] + h * k3[j];
        }
        flow.rhs(&tmp, &mut k4, variational);
        for j in 0..len {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = h * (step + 1) as f64;
        if !frame.chart().contains(&y[..n]) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Escape { time: t });
        }
        observe(step + 1, t, &y);
    }
    Ok(y)
}

pub(crate) fn initial_variational(x0: &[f64], p0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut y = Vec::with_capacity(2 * n + 2 * n * n);
    y.extend_from_slice(x0);
    y.extend_from_slice(p0);
    y.extend(std::iter::repeat_n(0.0, 2 * n * n));
    for k in 0..n {
        y[2 * n + (n + k) * n + k] = 1.0;
    }
    y
}

pub(crate) fn raw_hamiltonian(frame: &Frame, x: &[f64], p: &[f64]) -> f64 {
    let n = frame.dim();
    let mut f = vec![0.0; frame.rank() * n];
    frame.fields_into(x, &mut f);
    0.5 * f
        .chunks(n)
        .map(|fi| {
            let u: f64 = fi.iter().zip(p).map(|(a, b)| a * b).sum();
            u * u
        })
        .sum::<f64>()
}

fn check_dims(frame: &Frame, x: &[f64], p: &[f64]) -> Result<()> {
    if x.len() != frame.dim() || p.len() != frame.dim() {
        return Err(Error::Config(format!(
            "state dimension mismatch: frame has n = {}, got x:{} p:{}",
            frame.dim(),
            x.len(),
            p.len()
        )));
    }
    frame.check_domain(x)
}

/// `(ẋ, ṗ) = (Σ u_i f_i(x), −Σ u_i df_i(x)ᵀ p)` with `u_i = ⟨p, f_i(x)⟩`.
pub fn hamiltonian_rhs(frame: &Frame, s: &ExtremalState) -> Result<ExtremalState> {
    check_dims(frame, &s.x, &s.p)?;
    let n = frame.dim();
    let mut y = s.x.0.clone();
    y.extend_from_slice(&s.p);
    let mut dy = vec![0.0; 2 * n];
    Flow::new(frame).rhs(&y, &mut dy, false);
    Ok(ExtremalState {
        x: Point(dy[..n].to_vec()),
        p: CoVector(dy[n..].to_vec()),
    })
}

/// Integrates the extremal from `(x0, p0)` over `[0, t]` with `steps` RK4 steps.
pub fn integrate_extremal(frame: &Frame, x0: &Point, p0: &CoVector, t: f64, steps: usize) -> Result<Extremal> {
    check_dims(frame, x0, p0)?;
    if !(t > 0.0) || steps == 0 {
        return Err(Error::Config(format!(
            "need t > 0 and steps >= 1 (t = {t}, steps = {steps})"
        )));
    }
    let n = frame.dim();
    let mut y = x0.0.clone();
    y.extend_from_slice(p0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    integrate(frame, y, t, steps, false, |_, tk, yk| {
        times.push(tk);
        states.push(ExtremalState {
            x: Point(yk[..n].to_vec()),
            p: CoVector(yk[n..2 * n].to_vec()),
        });
    })?;
    Ok(Extremal {
        times,
        states,
        energy0: raw_hamiltonian(frame, x0, p0),
    })
}

/// Integrates the extremal together with its sensitivity to `p0`.
pub fn integrate_variational(
    frame: &Frame,
    x0: &Point,
    p0: &CoVector,
    t: f64,
    steps: usize,
) -> Result<VariationalState> {
    check_dims(frame, x0, p0)?;
    let n = frame.dim();
    let y = integrate(frame, initial_variational(x0, p0), t, steps.max(1), true, |_, _, _| {})?;
    Ok(VariationalState {
        state: ExtremalState {
            x: Point(y[..n].to_vec()),
            p: CoVector(y[n..2 * n].to_vec()),
        },
        sensitivity: DMatrix::from_row_slice(2 * n, n, &y[2 * n..]),
    })
}

/// `exp_{x̄}(p0)`: projection at time 1 of the extremal from `(x̄, p0)`.
pub fn exp_map(frame: &Frame, xbar: &Point, p0: &CoVector) -> Result<Point> {
    exp_map_with_steps(frame, xbar, p0, DEFAULT_STEPS)
}

pub fn exp_map_with_steps(frame: &Frame, xbar: &Point, p0: &CoVector, steps: usize) -> Result<Point> {
    Ok(integrate_extremal(frame, xbar, p0, 1.0, steps)?.endpoint().x.clone())
}

/// Differential of `p ↦ π(ψ_t(p))` at `p0`.
#[derive(Clone, Debug)]
pub struct ExpDifferential {
    pub matrix: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl ExpDifferential {
    fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let sv = matrix.singular_values();
        let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
        Self {
            matrix,
            sigma_min,
            sigma_max,
        }
    }

    /// `σ_min / σ_max`, zero for the zero matrix.
    pub fn relative_sigma(&self) -> f64 {
        if self.sigma_max > 0.0 {
            self.sigma_min / self.sigma_max
        } else {
            0.0
        }
    }
}

pub fn exp_differential(frame: &Frame, xbar: &Point, p0: &CoVector, t: f64) -> Result<ExpDifferential> {
    exp_differential_with_steps(frame, xbar, p0, t, DEFAULT_STEPS)
}

pub fn exp_differential_with_steps(
    frame: &Frame,
    xbar: &Point,
    p0: &CoVector,
    t: f64,
    steps: usize,
) -> Result<ExpDifferential> {
    if !(t > 0.0) {
        return Err(Error::Config(format!("exp differential needs t > 0, got {t}")));
    }
    let n = frame.dim();
    let v = integrate_variational(frame, xbar, p0, t, steps)?;
    Ok(ExpDifferential::from_matrix(v.sensitivity.rows(0, n).into_owned()))
}

/// Endpoint, terminal covector and `d exp` of one shooting evaluation.
#[derive(Clone, Debug)]
pub struct ExpEvaluation {
    pub endpoint: Vec<f64>,
    pub terminal_p: Vec<f64>,
    /// Row-major `n × n` block `∂x(1)/∂p0`.
    pub jacobian: Vec<f64>,
    /// No reliable sign change of `det ∂x(t)/∂p0` on the open interval `(0, 1)`.
    pub conjugate_free: bool,
}

pub(crate) fn evaluate_exp(frame: &Frame, xbar: &[f64], p0: &[f64], steps: usize) -> Result<ExpEvaluation> {
    let n = frame.dim();
    let mut block = vec![0.0; n * n];
    let mut first_sign = 0.0f64;
    let mut flipped = false;
    let y = integrate(frame, initial_variational(xbar, p0), 1.0, steps, true, |k, _, yk| {
        if k == 0 || k >= steps {
            return;
        }
        block.copy_from_slice(&yk[2 * n..2 * n + n * n]);
        let r = normalized_det(&block, n);
        if r.abs() > DET_NOISE {
            if first_sign == 0.0 {
                first_sign = r.signum();
            } else if r.signum() != first_sign {
                flipped = true;
            }
        }
    })?;
    Ok(ExpEvaluation {
        endpoint: y[..n].to_vec(),
        terminal_p: y[n..2 * n].to_vec(),
        jacobian: y[2 * n..2 * n + n * n].to_vec(),
        conjugate_free: !flipped,
    })
}

/// Energy `J = ∫ Σ u_i² dt` and length `L = ∫ |u| dt`, trapezoid rule on the grid.
pub fn path_energy_and_length(frame: &Frame, e: &Extremal) -> (f64, f64) {
    let n = frame.dim();
    let mut f = vec![0.0; frame.rank() * n];
    let speeds: Vec<f64> = e
        .states
        .iter()
        .map(|s| {
            frame.fields_into(&s.x, &mut f);
            f.chunks(n)
                .map(|fi| {
                    let u = s.p.pair(fi);
                    u * u
                })
                .sum::<f64>()
        })
        .collect();
    let mut energy = 0.0;
    let mut length = 0.0;
    for k in 1..e.times.len() {
        let dt = e.times[k] - e.times[k - 1];
        energy += 0.5 * dt * (speeds[k] + speeds[k - 1]);
        length += 0.5 * dt * (speeds[k].sqrt() + speeds[k - 1].sqrt());
    }
    (energy, length)
}

/// Independent estimate of `d_SR(x̄, ·)²` with an error bound on the value.
pub trait SquaredDistanceOracle {
    fn squared_distance(&mut self, target: &Point) -> Result<(f64, f64)>;
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimalityReport {
    /// Energy of the extremal arc reparametrized to unit time, `L²`.
    pub extremal_cost: f64,
    pub oracle_value: f64,
    pub oracle_error: f64,
    pub pass: bool,
}

/// Compares the extremal arc on `[0, eps]` with an oracle's estimate of the
/// squared distance to its endpoint.
pub fn local_optimality_check(
    frame: &Frame,
    xbar: &Point,
    p0: &CoVector,
    eps: f64,
    oracle: &mut dyn SquaredDistanceOracle,
) -> Result<OptimalityReport> {
    if raw_hamiltonian(frame, xbar, p0) == 0.0 {
        return Err(Error::Config("local optimality check needs H(x̄, p0) ≠ 0".into()));
    }
    let steps = ((DEFAULT_STEPS as f64) * eps.max(1.0)).ceil() as usize;
    let e = integrate_extremal(frame, xbar, p0, eps, steps)?;
    let (_, length) = path_energy_and_length(frame, &e);
    let extremal_cost = length * length;
    let (oracle_value, oracle_error) = oracle.squared_distance(&e.endpoint().x)?;
    Ok(OptimalityReport {
        extremal_cost,
        oracle_value,
        oracle_error,
        pass: extremal_cost <= oracle_value + oracle_error + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::builtin_system;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heis() -> crate::SubRiemannianSystem {
        builtin_system("heisenberg").unwrap()
    }

    #[test]
    fn rhs_examples() {
        let e = builtin_system("euclidean-2").unwrap();
        let d = hamiltonian_rhs(
            &e.frame,
            &ExtremalState {
                x: Point::zeros(2),
                p: CoVector::from([1.0, 2.0]),
            },
        )
        .unwrap();
        assert_eq!(d.x.0, vec![1.0, 2.0]);
        assert_eq!(d.p.0, vec![0.0, 0.0]);

        let m = builtin_system("martinet").unwrap();
        let d = hamiltonian_rhs(
            &m.frame,
            &ExtremalState {
                x: Point::from([0.7, 0.0, 0.0]),
                p: CoVector::from([1.0, 0.0, 5.0]),
            },
        )
        .unwrap();
        assert_eq!(d.x.0, vec![1.0, 0.0, 0.0]);
        assert_eq!(d.p.0, vec![0.0, 0.0, 0.0]);

        let d = hamiltonian_rhs(
            &heis().frame,
            &ExtremalState {
                x: Point::from([0.3, 0.2, 0.1]),
                p: CoVector::zeros(3),
            },
        )
        .unwrap();
        assert!(d.x.iter().chain(d.p.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn straight_lines() {
        let e = builtin_system("euclidean-2").unwrap();
        let ex = integrate_extremal(&e.frame, &Point::zeros(2), &CoVector::from([1.0, 0.0]), 1.0, 100).unwrap();
        let end = ex.endpoint();
        assert!((end.x[0] - 1.0).abs() < 1e-14 && end.x[1].abs() < 1e-14);
        assert_eq!(end.p.0, vec![1.0, 0.0]);

        let m = builtin_system("martinet").unwrap();
        let x1 = exp_map(&m.frame, &Point::zeros(3), &CoVector::from([1.0, 0.0, 0.0])).unwrap();
        assert!((x1[0] - 1.0).abs() < 1e-12 && x1[1].abs() < 1e-14 && x1[2].abs() < 1e-14);

        let p0 = CoVector::from([0.4, -2.0]);
        let x = exp_map(&e.frame, &Point::zeros(2), &p0).unwrap();
        assert!(x.distance(&Point(p0.0.clone())) < 1e-13);
        assert_eq!(
            exp_map(&heis().frame, &Point::zeros(3), &CoVector::zeros(3)).unwrap().0,
            vec![0.0; 3]
        );
    }

    /// Richardson oracle: RK4 at N and 10N steps, extrapolated with factor 10⁴.
    #[test]
    fn heisenberg_vertical_endpoint_matches_richardson() {
        let f = heis().frame;
        let p0 = CoVector::from([1.0, 0.0, 2.0 * std::f64::consts::PI]);
        let coarse = exp_map_with_steps(&f, &Point::zeros(3), &p0, 100).unwrap();
        let fine = exp_map_with_steps(&f, &Point::zeros(3), &p0, 1000).unwrap();
        let z_star: Vec<f64> = (0..3).map(|k| fine[k] + (fine[k] - coarse[k]) / (1e4 - 1.0)).collect();
        // frozen from the extrapolation: (0, 0, 1/(4π))
        assert!(z_star[0].abs() < 1e-10 && z_star[1].abs() < 1e-10);
        assert!((z_star[2] - 0.079_577_471_545_947_67).abs() < 1e-10, "{z_star:?}");
        let x = exp_map(&f, &Point::zeros(3), &p0).unwrap();
        assert!(x.distance(&Point(z_star)) < 1e-9);
    }

    #[test]
    fn variational_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["euclidean-3", "heisenberg", "martinet", "martinet-modified"] {
            let s = builtin_system(name).unwrap();
            for _ in 0..20 {
                let p0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let p0 = CoVector(p0);
                let d = exp_differential(&s.frame, &s.base, &p0, 1.0).unwrap();
                for c in 0..3 {
                    let mut pp = p0.clone();
                    let mut pm = p0.clone();
                    pp[c] += 1e-5;
                    pm[c] -= 1e-5;
                    let xp = exp_map(&s.frame, &s.base, &pp).unwrap();
                    let xm = exp_map(&s.frame, &s.base, &pm).unwrap();
                    for r in 0..3 {
                        let fd = (xp[r] - xm[r]) / 2e-5;
                        assert!(
                            (fd - d.matrix[(r, c)]).abs() < 1e-4,
                            "{name} {r},{c}: {fd} vs {}",
                            d.matrix[(r, c)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn exp_differential_examples() {
        let e = builtin_system("euclidean-2").unwrap();
        let d = exp_differential(&e.frame, &e.base, &CoVector::from([2.0, -1.0]), 1.0).unwrap();
        assert!((d.sigma_min - 1.0).abs() < 1e-12 && (d.sigma_max - 1.0).abs() < 1e-12);

        let f = heis().frame;
        let p0 = CoVector::from([0.6, 0.8, 1.0]);
        let small = exp_differential(&f, &Point::zeros(3), &p0, 1e-3).unwrap().sigma_min;
        let larger = exp_differential(&f, &Point::zeros(3), &p0, 1e-2).unwrap().sigma_min;
        assert!(small < larger && small < 1e-6);

        let p0 = CoVector::from([1.0, 0.0, 2.0 * std::f64::consts::PI]);
        let d = exp_differential(&f, &Point::zeros(3), &p0, 1.0).unwrap();
        assert!(d.sigma_min <= 1e-3 * d.sigma_max, "{} {}", d.sigma_min, d.sigma_max);
    }

    #[test]
    fn energy_and_length() {
        let e = builtin_system("euclidean-2").unwrap();
        let ex = integrate_extremal(&e.frame, &e.base, &CoVector::from([3.0, 4.0]), 1.0, 1000).unwrap();
        let (j, l) = path_energy_and_length(&e.frame, &ex);
        assert!((j - 25.0).abs() < 1e-12 && (l - 5.0).abs() < 1e-12);
        let ex = integrate_extremal(&e.frame, &e.base, &CoVector::zeros(2), 1.0, 10).unwrap();
        assert_eq!(path_energy_and_length(&e.frame, &ex), (0.0, 0.0));

        let f = heis().frame;
        let p0 = CoVector::from([1.0, 0.0, 2.0 * std::f64::consts::PI]);
        let ex = integrate_extremal(&f, &Point::zeros(3), &p0, 1.0, 1000).unwrap();
        let (j, l) = path_energy_and_length(&f, &ex);
        assert!((j - 1.0).abs() < 1e-8 && (l - 1.0).abs() < 1e-8);
        assert!(ex.max_energy_drift(&f) < 1e-10);
    }

    #[test]
    fn escape_is_reported() {
        let e = builtin_system("euclidean-2").unwrap();
        let err = integrate_extremal(&e.frame, &e.base, &CoVector::from([40.0, 0.0]), 1.0, 100).unwrap_err();
        match err {
            Error::Escape { time } => assert!(time > 0.245 && time < 0.265, "{time}"),
            other => panic!("{other:?}"),
        }
        assert!(integrate_extremal(&e.frame, &e.base, &CoVector::zeros(2), 0.0, 10).is_err());
    }

    #[test]
    fn conjugate_flag_tracks_sign_change() {
        let f = heis().frame;
        let two_pi = 2.0 * std::f64::consts::PI;
        let before = evaluate_exp(&f, &[0.0; 3], &[1.0, 0.0, 0.9 * two_pi], 400).unwrap();
        let after = evaluate_exp(&f, &[0.0; 3], &[1.0, 0.0, 1.3 * two_pi], 400).unwrap();
        assert!(before.conjugate_free);
        assert!(!after.conjugate_free);
    }

    struct Exact;
    impl SquaredDistanceOracle for Exact {
        fn squared_distance(&mut self, target: &Point) -> Result<(f64, f64)> {
            Ok((target.norm().powi(2), 1e-9))
        }
    }

    #[test]
    fn local_optimality_on_euclidean() {
        let e = builtin_system("euclidean-2").unwrap();
        let r = local_optimality_check(&e.frame, &e.base, &CoVector::from([0.3, -0.4]), 0.1, &mut Exact).unwrap();
        assert!(r.pass);
        assert!((r.extremal_cost - r.oracle_value).abs() < 1e-10);
        assert!(local_optimality_check(&e.frame, &e.base, &CoVector::zeros(2), 0.1, &mut Exact).is_err());
    }
}
