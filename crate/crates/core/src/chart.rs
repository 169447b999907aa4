//! Distributions and metrics on a single global chart, presented as an
//! orthonormal frame of vector fields.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central-difference step used whenever a derivative is not supplied.
pub const FD_STEP: f64 = 1e-5;

macro_rules! coord_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn norm(&self) -> f64 {
                norm(&self.0)
            }

            pub fn scaled(&self, s: f64) -> Self {
                Self(self.0.iter().map(|v| v * s).collect())
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(v: [f64; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

coord_newtype!(
    /// Chart coordinates of a point.
    Point
);
coord_newtype!(
    /// Covector components in the chart's dual basis.
    CoVector
);

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        dist(&self.0, &other.0)
    }
}

impl CoVector {
    /// Dual pairing with a tangent vector.
    pub fn pair(&self, v: &[f64]) -> f64 {
        dot(&self.0, v)
    }

    pub fn distance(&self, other: &CoVector) -> f64 {
        dist(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Axis-aligned box `[lo_k, hi_k]` in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config(
                "chart box bounds must be non-empty and of equal length".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config(format!("empty or non-finite chart box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v > *a && *v < *b)
    }

    pub fn contains_box(&self, other: &ChartBox) -> bool {
        other.dim() == self.dim() && (0..self.dim()).all(|k| other.lo[k] >= self.lo[k] && other.hi[k] <= self.hi[k])
    }

    pub fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        Point(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(a, b)| rng.gen_range(*a..*b))
                .collect(),
        )
    }
}

/// Smooth vector fields `f_1..f_m` on an open subset of `R^n`.
///
/// Layouts are row-major: `fields[i*n + j] = f_i^j(x)`,
/// `jacobians[(i*n + j)*n + k] = ∂f_i^j/∂x_k`.
pub trait VectorFields: Send + Sync {
    fn dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn fields(&self, x: &[f64], out: &mut [f64]);

    fn jacobians(&self, x: &[f64], out: &mut [f64]) {
        fd_jacobians(self, x, out);
    }

    /// `out[k*n + l] = Σ_j p_j ∂²f_i^j/∂x_k∂x_l` for field `i`.
    fn contracted_hessian(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        fd_contracted_hessian(self, x, p, i, out);
    }
}

fn fd_jacobians<F: VectorFields + ?Sized>(f: &F, x: &[f64], out: &mut [f64]) {
    let (n, m) = (f.dim(), f.rank());
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m * n];
    let mut fm = vec![0.0; m * n];
    for k in 0..n {
        xp[k] = x[k] + FD_STEP;
        f.fields(&xp, &mut fp);
        xp[k] = x[k] - FD_STEP;
        f.fields(&xp, &mut fm);
        xp[k] = x[k];
        for ij in 0..m * n {
            out[ij * n + k] = (fp[ij] - fm[ij]) / (2.0 * FD_STEP);
        }
    }
}

fn fd_contracted_hessian<F: VectorFields + ?Sized>(f: &F, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
    let (n, m) = (f.dim(), f.rank());
    let mut xp = x.to_vec();
    let mut jp = vec![0.0; m * n * n];
    let mut jm = vec![0.0; m * n * n];
    for l in 0..n {
        xp[l] = x[l] + FD_STEP;
        f.jacobians(&xp, &mut jp);
        xp[l] = x[l] - FD_STEP;
        f.jacobians(&xp, &mut jm);
        xp[l] = x[l];
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let idx = (i * n + j) * n + k;
                acc += p[j] * (jp[idx] - jm[idx]);
            }
            out[k * n + l] = acc / (2.0 * FD_STEP);
        }
    }
}

/// Coordinate fields `∂/∂x_1 .. ∂/∂x_n`.
#[derive(Clone, Debug)]
pub struct EuclideanFields {
    pub n: usize,
}

impl VectorFields for EuclideanFields {
    fn dim(&self) -> usize {
        self.n
    }
    fn rank(&self) -> usize {
        self.n
    }
    fn fields(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.n {
            out[i * self.n + i] = 1.0;
        }
    }
    fn jacobians(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn contracted_hessian(&self, _x: &[f64], _p: &[f64], _i: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `f_1 = ∂x − (y/2)∂z`, `f_2 = ∂y + (x/2)∂z`; `[f_1, f_2] = ∂z`.
#[derive(Clone, Debug)]
pub struct HeisenbergFields;

impl VectorFields for HeisenbergFields {
    fn dim(&self) -> usize {
        3
    }
    fn rank(&self) -> usize {
        2
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[1.0, 0.0, -0.5 * x[1], 0.0, 1.0, 0.5 * x[0]]);
    }
    fn jacobians(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        // ∂f_1^z/∂y = -1/2, ∂f_2^z/∂x = 1/2
        out[(2) * 3 + 1] = -0.5;
        out[(3 + 2) * 3] = 0.5;
    }
    fn contracted_hessian(&self, _x: &[f64], _p: &[f64], _i: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `f_1 = ∂x_1 + x_2² ∂x_3`, `f_2 = ∂x_2`; the Martinet surface is `x_2 = 0`.
#[derive(Clone, Debug)]
pub struct MartinetFields;

impl VectorFields for MartinetFields {
    fn dim(&self) -> usize {
        3
    }
    fn rank(&self) -> usize {
        2
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[1.0, 0.0, x[1] * x[1], 0.0, 1.0, 0.0]);
    }
    fn jacobians(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[2 * 3 + 1] = 2.0 * x[1];
    }
    fn contracted_hessian(&self, _x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        if i == 0 {
            out[3 + 1] = 2.0 * p[2];
        }
    }
}

/// Martinet frame with the first field multiplied by `β(x) = x_2²`, which
/// vanishes exactly on the Martinet surface: `g_1 = x_2²(∂x_1 + x_2²∂x_3)`,
/// `f_2 = ∂x_2`. On `x_2 = 0` the span collapses to `span{∂x_2}`, which is
/// transversal to the surface.
#[derive(Clone, Debug)]
pub struct MartinetModifiedFields;

impl VectorFields for MartinetModifiedFields {
    fn dim(&self) -> usize {
        3
    }
    fn rank(&self) -> usize {
        2
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        let b = x[1] * x[1];
        out.copy_from_slice(&[b, 0.0, b * b, 0.0, 1.0, 0.0]);
    }
    fn jacobians(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let y = x[1];
        out[1] = 2.0 * y; // ∂g_1^1/∂x_2
        out[2 * 3 + 1] = 4.0 * y * y * y; // ∂g_1^3/∂x_2
    }
    fn contracted_hessian(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        if i == 0 {
            let y = x[1];
            out[3 + 1] = 2.0 * p[0] + 12.0 * y * y * p[2];
        }
    }
}

/// A monomial term `coef · Π x_k^{powers_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Polynomial in the chart coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(x)
                    .fold(t.coef, |acc, (e, v)| acc * v.powi(*e as i32))
            })
            .sum()
    }

    pub fn derivative(&self, k: usize) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .filter(|t| t.powers[k] > 0)
                .map(|t| {
                    let mut powers = t.powers.clone();
                    powers[k] -= 1;
                    Monomial {
                        coef: t.coef * t.powers[k] as f64,
                        powers,
                    }
                })
                .collect(),
        )
    }
}

/// User frame whose components are polynomials, differentiated exactly.
#[derive(Clone, Debug)]
pub struct PolynomialFields {
    n: usize,
    m: usize,
    comps: Vec<Polynomial>,
    first: Vec<Polynomial>,
    second: Vec<Polynomial>,
}

impl PolynomialFields {
    /// `comps[i][j]` is the `j`-th component of `f_i`.
    pub fn new(n: usize, comps: Vec<Vec<Polynomial>>) -> Result<Self> {
        let m = comps.len();
        if m == 0 || comps.iter().any(|c| c.len() != n) {
            return Err(Error::Config(format!(
                "polynomial frame must have {n} components per field"
            )));
        }
        for t in comps.iter().flatten().flat_map(|p| p.0.iter()) {
            if t.powers.len() != n || !t.coef.is_finite() {
                return Err(Error::Config("malformed polynomial term".into()));
            }
        }
        let comps: Vec<Polynomial> = comps.into_iter().flatten().collect();
        let first: Vec<Polynomial> = comps
            .iter()
            .flat_map(|p| (0..n).map(move |k| p.derivative(k)))
            .collect();
        let second: Vec<Polynomial> = first
            .iter()
            .flat_map(|p| (0..n).map(move |l| p.derivative(l)))
            .collect();
        Ok(Self {
            n,
            m,
            comps,
            first,
            second,
        })
    }
}

impl VectorFields for PolynomialFields {
    fn dim(&self) -> usize {
        self.n
    }
    fn rank(&self) -> usize {
        self.m
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.comps) {
            *o = p.eval(x);
        }
    }
    fn jacobians(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.first) {
            *o = p.eval(x);
        }
    }
    fn contracted_hessian(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            for l in 0..n {
                out[k * n + l] = (0..n)
                    .map(|j| p[j] * self.second[((i * n + j) * n + k) * n + l].eval(x))
                    .sum();
            }
        }
    }
}

/// Vector fields given as a closure; derivatives by central differences.
pub struct FnFields<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnFields<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F> VectorFields for FnFields<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn rank(&self) -> usize {
        self.m
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// An orthonormal frame on a chart box. Immutable and cheap to clone.
#[derive(Clone)]
pub struct Frame {
    fields: Arc<dyn VectorFields>,
    chart: ChartBox,
    allows_rank_drop: bool,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("dim", &self.dim())
            .field("rank", &self.rank())
            .field("chart", &self.chart)
            .finish()
    }
}

impl Frame {
    pub fn new(fields: Arc<dyn VectorFields>, chart: ChartBox) -> Result<Self> {
        if chart.dim() != fields.dim() {
            return Err(Error::Config("chart box and frame dimensions differ".into()));
        }
        if fields.rank() == 0 || fields.rank() > fields.dim() {
            return Err(Error::Config(format!(
                "frame rank {} must lie in 1..={}",
                fields.rank(),
                fields.dim()
            )));
        }
        Ok(Self {
            fields,
            chart,
            allows_rank_drop: false,
        })
    }

    /// Marks a frame whose fields may become dependent on a thin set
    /// (the β-scaled Martinet frame).
    pub fn with_rank_drop(mut self) -> Self {
        self.allows_rank_drop = true;
        self
    }

    pub fn allows_rank_drop(&self) -> bool {
        self.allows_rank_drop
    }

    pub fn dim(&self) -> usize {
        self.fields.dim()
    }

    pub fn rank(&self) -> usize {
        self.fields.rank()
    }

    pub fn chart(&self) -> &ChartBox {
        &self.chart
    }

    pub fn with_chart(mut self, chart: ChartBox) -> Result<Self> {
        if chart.dim() != self.dim() {
            return Err(Error::Config("chart box dimension mismatch".into()));
        }
        self.chart = chart;
        Ok(self)
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if self.chart.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }

    /// Raw field evaluation without the domain check.
    pub fn fields_into(&self, x: &[f64], out: &mut [f64]) {
        self.fields.fields(x, out)
    }

    pub fn jacobians_into(&self, x: &[f64], out: &mut [f64]) {
        self.fields.jacobians(x, out)
    }

    pub fn contracted_hessian_into(&self, x: &[f64], p: &[f64], i: usize, out: &mut [f64]) {
        self.fields.contracted_hessian(x, p, i, out)
    }

    /// `[f_1(x), …, f_m(x)]`.
    pub fn eval(&self, x: &Point) -> Result<Vec<Vec<f64>>> {
        self.check_domain(x)?;
        let n = self.dim();
        let mut buf = vec![0.0; self.rank() * n];
        self.fields.fields(x, &mut buf);
        Ok(buf.chunks(n).map(<[f64]>::to_vec).collect())
    }

    /// Jacobian matrices `df_i(x)`, row `j` column `k` = `∂f_i^j/∂x_k`.
    pub fn jacobians(&self, x: &Point) -> Result<Vec<DMatrix<f64>>> {
        self.check_domain(x)?;
        let n = self.dim();
        let mut buf = vec![0.0; self.rank() * n * n];
        self.fields.jacobians(x, &mut buf);
        Ok(buf.chunks(n * n).map(|c| DMatrix::from_row_slice(n, n, c)).collect())
    }

    /// Normal control `u_i = ⟨p, f_i(x)⟩`.
    pub fn normal_control(&self, x: &Point, p: &CoVector) -> Result<Vec<f64>> {
        Ok(self.eval(x)?.iter().map(|f| p.pair(f)).collect())
    }

    /// `H(x, p) = ½ Σ ⟨p, f_i(x)⟩²`.
    pub fn hamiltonian(&self, x: &Point, p: &CoVector) -> Result<f64> {
        Ok(0.5 * self.normal_control(x, p)?.iter().map(|u| u * u).sum::<f64>())
    }

    /// `Σ u_i f_i(x)` for an `m`-vector of controls.
    pub fn combine(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut f = vec![0.0; self.rank() * n];
        self.fields.fields(x, &mut f);
        let mut out = vec![0.0; n];
        for (i, ui) in u.iter().enumerate() {
            for j in 0..n {
                out[j] += ui * f[i * n + j];
            }
        }
        out
    }

    /// Lie bracket `[f_i, f_j](x) = Df_j f_i − Df_i f_j`.
    pub fn bracket(&self, i: usize, j: usize, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let m = self.rank();
        let mut f = vec![0.0; m * n];
        let mut d = vec![0.0; m * n * n];
        self.fields.fields(x, &mut f);
        self.fields.jacobians(x, &mut d);
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|k| d[(j * n + a) * n + k] * f[i * n + k] - d[(i * n + a) * n + k] * f[j * n + k])
                    .sum()
            })
            .collect()
    }

    /// `[f_k, [f_i, f_j]](x)`, with the inner bracket differentiated numerically.
    pub fn bracket2(&self, k: usize, i: usize, j: usize, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let m = self.rank();
        let mut f = vec![0.0; m * n];
        let mut d = vec![0.0; m * n * n];
        self.fields.fields(x, &mut f);
        self.fields.jacobians(x, &mut d);
        let inner = self.bracket(i, j, x);
        // D[f_i,f_j] · f_k by a directional central difference
        let fk = &f[k * n..(k + 1) * n];
        let xp: Vec<f64> = x.iter().zip(fk).map(|(a, b)| a + FD_STEP * b).collect();
        let xm: Vec<f64> = x.iter().zip(fk).map(|(a, b)| a - FD_STEP * b).collect();
        let bp = self.bracket(i, j, &xp);
        let bm = self.bracket(i, j, &xm);
        (0..n)
            .map(|a| {
                let dir = (bp[a] - bm[a]) / (2.0 * FD_STEP);
                let back: f64 = (0..n).map(|c| d[(k * n + a) * n + c] * inner[c]).sum();
                dir - back
            })
            .collect()
    }

    /// Rank of `span{f_i, [f_i,f_j], [f_k,[f_i,f_j]]}` (brackets up to length `depth`, 1..=3).
    pub fn bracket_rank(&self, x: &[f64], depth: usize, tol: f64) -> usize {
        let n = self.dim();
        let m = self.rank();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut f = vec![0.0; m * n];
        self.fields.fields(x, &mut f);
        cols.extend(f.chunks(n).map(<[f64]>::to_vec));
        if depth >= 2 {
            for i in 0..m {
                for j in i + 1..m {
                    cols.push(self.bracket(i, j, x));
                    if depth >= 3 {
                        for k in 0..m {
                            cols.push(self.bracket2(k, i, j, x));
                        }
                    }
                }
            }
        }
        numerical_rank(&cols, n, tol)
    }

    /// Checks linear independence on sampled chart points and the analytic
    /// Jacobians against central differences (relative tolerance 1e-6).
    pub fn validate(&self, samples: usize, seed: u64) -> Result<()> {
        let n = self.dim();
        let m = self.rank();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jac = vec![0.0; m * n * n];
        let mut fdj = vec![0.0; m * n * n];
        let mut f = vec![0.0; m * n];
        for _ in 0..samples {
            let x = self.chart.sample(&mut rng);
            self.fields.fields(&x, &mut f);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("non-finite field value at {:?}", x.0)));
            }
            if !self.allows_rank_drop {
                let cols: Vec<Vec<f64>> = f.chunks(n).map(<[f64]>::to_vec).collect();
                if numerical_rank(&cols, n, 1e-10) < m {
                    return Err(Error::Config(format!("frame fields dependent at {:?}", x.0)));
                }
            }
            self.fields.jacobians(&x, &mut jac);
            fd_jacobians(self.fields.as_ref(), &x, &mut fdj);
            for (a, b) in jac.iter().zip(&fdj) {
                if (a - b).abs() > 1e-6 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Config(format!(
                        "analytic Jacobian disagrees with finite differences at {:?}",
                        x.0
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn numerical_rank(cols: &[Vec<f64>], n: usize, tol: f64) -> usize {
    if cols.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * smax.max(1.0)).count()
}

/// A distribution with metric, presented by an orthonormal frame, and the
/// point `x̄` to be stabilized.
#[derive(Clone, Debug)]
pub struct SubRiemannianSystem {
    pub name: String,
    pub frame: Frame,
    pub base: Point,
}

impl SubRiemannianSystem {
    pub fn new(name: impl Into<String>, frame: Frame, base: Point) -> Result<Self> {
        if base.dim() != frame.dim() {
            return Err(Error::Config("base point dimension mismatch".into()));
        }
        if !frame.chart().contains_interior(&base) {
            return Err(Error::Config(format!("base {:?} not in chart interior", base.0)));
        }
        Ok(Self {
            name: name.into(),
            frame,
            base,
        })
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn rank(&self) -> usize {
        self.frame.rank()
    }
}

pub const DEFAULT_CHART_HALF_WIDTH: f64 = 3.0;
/// Euclidean charts are wider so that closed-form targets such as `(3, 4)` fit.
pub const EUCLIDEAN_CHART_HALF_WIDTH: f64 = 10.0;

/// Names accepted by [`builtin_system`] (plus any `euclidean-<n>`).
pub const BUILTIN_NAMES: &[&str] = &[
    "euclidean-2",
    "euclidean-3",
    "heisenberg",
    "martinet",
    "martinet-modified",
];

/// Built-in systems based at the origin, on `[-3, 3]^n` (`[-10, 10]^n` for
/// the Euclidean ones).
pub fn builtin_system(name: &str) -> Result<SubRiemannianSystem> {
    let (fields, rank_drop): (Arc<dyn VectorFields>, bool) = match name {
        "heisenberg" => (Arc::new(HeisenbergFields), false),
        "martinet" => (Arc::new(MartinetFields), false),
        "martinet-modified" => (Arc::new(MartinetModifiedFields), true),
        _ => match name.strip_prefix("euclidean-").map(str::parse::<usize>) {
            Some(Ok(n)) if n >= 1 => (Arc::new(EuclideanFields { n }), false),
            _ => return Err(Error::Config(format!("unknown system '{name}'"))),
        },
    };
    let n = fields.dim();
    let half = if name.starts_with("euclidean-") {
        EUCLIDEAN_CHART_HALF_WIDTH
    } else {
        DEFAULT_CHART_HALF_WIDTH
    };
    let mut frame = Frame::new(fields, ChartBox::cube(n, half))?;
    if rank_drop {
        frame = frame.with_rank_drop();
    }
    SubRiemannianSystem::new(name, frame, Point::zeros(n))
}

/// JSON system definition.
///
/// `fields[i][j]` is the polynomial table of component `j` of `f_i`; each
/// row is `[coef, e_1, …, e_n]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SystemDefinition {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    #[serde(default)]
    pub chart_box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub fields: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl SystemDefinition {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<SubRiemannianSystem> {
        let mut sys = match &self.fields {
            None => builtin_system(&self.name)?,
            Some(tables) => {
                let n = self
                    .dim
                    .ok_or_else(|| Error::Config("user frame requires 'dim'".into()))?;
                let comps = tables
                    .iter()
                    .map(|field| {
                        field
                            .iter()
                            .map(|rows| {
                                rows.iter()
                                    .map(|row| {
                                        if row.len() != n + 1 {
                                            return Err(Error::Config(format!(
                                                "polynomial row needs {} entries, got {}",
                                                n + 1,
                                                row.len()
                                            )));
                                        }
                                        let powers = row[1..]
                                            .iter()
                                            .map(|e| {
                                                if *e >= 0.0 && e.fract() == 0.0 {
                                                    Ok(*e as u32)
                                                } else {
                                                    Err(Error::Config(format!("bad exponent {e}")))
                                                }
                                            })
                                            .collect::<Result<Vec<u32>>>()?;
                                        Ok(Monomial { coef: row[0], powers })
                                    })
                                    .collect::<Result<Vec<_>>>()
                                    .map(Polynomial)
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let poly = PolynomialFields::new(n, comps)?;
                let frame = Frame::new(Arc::new(poly), ChartBox::cube(n, DEFAULT_CHART_HALF_WIDTH))?;
                SubRiemannianSystem::new(self.name.clone(), frame, Point::zeros(n))?
            }
        };
        if let Some(d) = self.dim {
            if d != sys.dim() {
                return Err(Error::Config(format!(
                    "dim {d} does not match frame dimension {}",
                    sys.dim()
                )));
            }
        }
        if let Some(r) = self.rank {
            if r != sys.rank() {
                return Err(Error::Config(format!(
                    "rank {r} does not match frame rank {}",
                    sys.rank()
                )));
            }
        }
        if let Some(b) = &self.chart_box {
            let chart = ChartBox::new(b.iter().map(|r| r[0]).collect(), b.iter().map(|r| r[1]).collect())?;
            sys.frame = sys.frame.with_chart(chart)?;
        }
        let base = self.base.clone().map(Point).unwrap_or_else(|| sys.base.clone());
        SubRiemannianSystem::new(sys.name, sys.frame, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_frame_examples() {
        let e = builtin_system("euclidean-2").unwrap();
        assert_eq!(
            e.frame.eval(&Point::from([5.0, 7.0])).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let fe = e.frame.eval(&Point::from([5.0, 17.0])).unwrap_err();
        assert!(matches!(fe, Error::Domain { .. }));

        let m = builtin_system("martinet").unwrap();
        assert_eq!(
            m.frame.eval(&Point::from([0.0, 1.0, 0.0])).unwrap(),
            vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]
        );
        let h = builtin_system("heisenberg").unwrap();
        assert_eq!(
            h.frame.eval(&Point::zeros(3)).unwrap(),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]
        );
    }

    #[test]
    fn hamiltonian_and_controls() {
        let e = builtin_system("euclidean-2").unwrap();
        let p = CoVector::from([3.0, 4.0]);
        assert_eq!(e.frame.hamiltonian(&Point::zeros(2), &p).unwrap(), 12.5);
        assert_eq!(e.frame.normal_control(&Point::zeros(2), &p).unwrap(), vec![3.0, 4.0]);

        let m = builtin_system("martinet").unwrap();
        let h = m
            .frame
            .hamiltonian(&Point::from([0.0, 1.0, 0.0]), &CoVector::from([1.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(h, 2.0);
        let u = m
            .frame
            .normal_control(&Point::zeros(3), &CoVector::from([0.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(u, vec![0.0, 0.0]);

        let hz = builtin_system("heisenberg").unwrap();
        let u = hz
            .frame
            .normal_control(&Point::zeros(3), &CoVector::from([0.3, -1.2, 7.0]))
            .unwrap();
        assert_eq!(u, vec![0.3, -1.2]);
        assert_eq!(
            hz.frame
                .hamiltonian(&Point::from([0.5, 0.5, 0.5]), &CoVector::zeros(3))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn heisenberg_bracket_is_vertical() {
        let h = builtin_system("heisenberg").unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [-2.5, 0.3, 2.9]] {
            let b = h.frame.bracket(0, 1, &x);
            assert!((b[0]).abs() < 1e-12 && (b[1]).abs() < 1e-12);
            assert!((b[2] - 1.0).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn martinet_rank_drops_on_surface() {
        let m = builtin_system("martinet").unwrap();
        assert_eq!(m.frame.bracket_rank(&[0.4, 0.0, -1.0], 2, 1e-8), 2);
        assert_eq!(m.frame.bracket_rank(&[0.4, 0.3, -1.0], 2, 1e-8), 3);
        assert_eq!(m.frame.bracket_rank(&[0.4, 0.0, -1.0], 3, 1e-6), 3);
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            builtin_system(name).unwrap().frame.validate(50, 7).unwrap();
        }
        assert!(matches!(builtin_system("grushin"), Err(Error::Config(_))));
        assert!(matches!(builtin_system("euclidean-0"), Err(Error::Config(_))));
    }

    #[test]
    fn modified_martinet_collapses_on_surface() {
        let s = builtin_system("martinet-modified").unwrap();
        let f = s.frame.eval(&Point::from([0.0, 0.5, 0.0])).unwrap();
        assert_eq!(f, vec![vec![0.25, 0.0, 0.0625], vec![0.0, 1.0, 0.0]]);
        let f = s.frame.eval(&Point::from([1.0, 0.0, 0.2])).unwrap();
        assert_eq!(f[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn polynomial_definition_matches_heisenberg() {
        let json = r#"{
            "name": "heis-poly", "dim": 3, "rank": 2, "base": [0.1, 0, 0],
            "chart_box": [[-2,2],[-2,2],[-2,2]],
            "fields": [
                [[[1,0,0,0]], [], [[-0.5,0,1,0]]],
                [[], [[1,0,0,0]], [[0.5,1,0,0]]]
            ]
        }"#;
        let sys = SystemDefinition::from_json(json).unwrap().build().unwrap();
        sys.frame.validate(30, 1).unwrap();
        let h = builtin_system("heisenberg").unwrap();
        let x = Point::from([0.7, -1.1, 0.4]);
        assert_eq!(sys.frame.eval(&x).unwrap(), h.frame.eval(&x).unwrap());
        let p = CoVector::from([0.2, 0.9, -1.5]);
        let mut a = vec![0.0; 9];
        let mut b = vec![0.0; 9];
        for i in 0..2 {
            sys.frame.contracted_hessian_into(&x, &p, i, &mut a);
            h.frame.contracted_hessian_into(&x, &p, i, &mut b);
            assert_eq!(a, b);
        }
        assert_eq!(sys.base.0, vec![0.1, 0.0, 0.0]);
    }

    #[test]
    fn definition_errors() {
        assert!(SystemDefinition::from_json(r#"{"name":"heisenberg","dim":2}"#)
            .unwrap()
            .build()
            .is_err());
        assert!(SystemDefinition::from_json(r#"{"name":"heisenberg","base":[9,0,0]}"#)
            .unwrap()
            .build()
            .is_err());
        assert!(
            SystemDefinition::from_json(r#"{"name":"x","dim":2,"fields":[[[[1,0]],[]]]}"#)
                .unwrap()
                .build()
                .is_err()
        );
    }

    #[test]
    fn fd_fallback_matches_analytic() {
        let fnf = FnFields::new(3, 2, |x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[1.0, 0.0, x[1] * x[1], 0.0, 1.0, 0.0]);
        });
        let frame = Frame::new(Arc::new(fnf), ChartBox::cube(3, 3.0)).unwrap();
        frame.validate(20, 3).unwrap();
        let mut h = vec![0.0; 9];
        frame.contracted_hessian_into(&[0.1, 0.4, 0.0], &[0.0, 0.0, 2.0], 0, &mut h);
        assert!((h[4] - 4.0).abs() < 1e-4);
    }
}
