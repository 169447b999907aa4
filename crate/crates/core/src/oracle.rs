//! Brute-force distance estimates, independent of the Hamiltonian route.
//!
//! A [`ReachGraph`] explores the box with single-field moves of length `h`
//! (midpoint steps along `±f_i`). Lattice cells index the search, but each
//! cell keeps the continuous state that first reached it, so the slow
//! bracket directions are not rounded away. Graph paths are then polished by
//! direct transcription: piecewise-constant controls, endpoint constraint,
//! SQP with damped BFGS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::{dist, ChartBox, CoVector, Frame, Point, SubRiemannianSystem};
use crate::error::{Error, Result};
use crate::extremal::SquaredDistanceOracle;

/// Anything that can evaluate a value function at a point.
pub trait ValueSampler {
    fn value(&mut self, x: &Point) -> Result<f64>;
}

impl<F: FnMut(&Point) -> Result<f64>> ValueSampler for F {
    fn value(&mut self, x: &Point) -> Result<f64> {
        self(x)
    }
}

const UNREACHED: u32 = u32::MAX;

/// Reachability graph of single-field moves, searched from the base point.
#[derive(Clone, Debug)]
pub struct ReachGraph {
    pub h: f64,
    pub bounds: ChartBox,
    frame: Frame,
    base: Vec<f64>,
    shape: Vec<usize>,
    hops: Vec<u32>,
    states: Vec<f64>,
    parent: Vec<u32>,
    /// `2·field + (sign < 0)` of the move into each node.
    moves: Vec<u8>,
}

/// Midpoint step of signed length `s` along `f_i`.
pub fn field_step(frame: &Frame, x: &[f64], i: usize, s: f64) -> Vec<f64> {
    let n = frame.dim();
    let mut f = vec![0.0; frame.rank() * n];
    frame.fields_into(x, &mut f);
    let mid: Vec<f64> = (0..n).map(|j| x[j] + 0.5 * s * f[i * n + j]).collect();
    frame.fields_into(&mid, &mut f);
    (0..n).map(|j| x[j] + s * f[i * n + j]).collect()
}

/// Builds the lattice over `bounds` with spacing `h` and runs the search.
pub fn build_graph(system: &SubRiemannianSystem, h: f64, bounds: &ChartBox) -> Result<ReachGraph> {
    let frame = &system.frame;
    let n = system.dim();
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config("grid spacing must be positive".into()));
    }
    if bounds.dim() != n || bounds.lo.iter().zip(&bounds.hi).any(|(a, b)| !(a < b)) {
        return Err(Error::Config("empty graph box".into()));
    }
    if !frame.chart().contains_box(bounds) {
        return Err(Error::Config("graph box exceeds the chart box".into()));
    }
    if !bounds.contains(&system.base) {
        return Err(Error::Config("graph box must contain the base point".into()));
    }
    let shape: Vec<usize> = (0..n)
        .map(|k| ((bounds.hi[k] - bounds.lo[k]) / h + 1e-9).floor() as usize + 1)
        .collect();
    let total: usize = shape.iter().product();
    if total >= UNREACHED as usize {
        return Err(Error::Config("graph too large".into()));
    }
    let mut g = ReachGraph {
        h,
        bounds: bounds.clone(),
        frame: frame.clone(),
        base: system.base.0.clone(),
        shape,
        hops: vec![UNREACHED; total],
        states: vec![0.0; total * n],
        parent: vec![UNREACHED; total],
        moves: vec![0; total],
    };
    g.search();
    Ok(g)
}

impl ReachGraph {
    pub fn node_count(&self) -> usize {
        self.hops.len()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn reached_count(&self) -> usize {
        self.hops.iter().filter(|&&k| k != UNREACHED).count()
    }

    /// Lattice node nearest to `x`, if inside the box.
    pub fn snap(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.dim() {
            let r = ((x[k] - self.bounds.lo[k]) / self.h).round();
            if !(r >= 0.0 && r < self.shape[k] as f64) {
                return None;
            }
            idx += r as usize * stride;
            stride *= self.shape[k];
        }
        Some(idx)
    }

    pub fn lattice_point(&self, node: usize) -> Point {
        let mut rem = node;
        Point(
            (0..self.dim())
                .map(|k| {
                    let i = rem % self.shape[k];
                    rem /= self.shape[k];
                    self.bounds.lo[k] + i as f64 * self.h
                })
                .collect(),
        )
    }

    /// Lattice neighbours from the node's own lattice point: one snapped
    /// `±h` midpoint step per field, each of cost `h`.
    pub fn lattice_edges(&self, node: usize) -> Vec<(usize, f64)> {
        let x = self.lattice_point(node);
        let mut out = Vec::new();
        for i in 0..self.frame.rank() {
            for s in [self.h, -self.h] {
                let y = field_step(&self.frame, &x, i, s);
                if let Some(t) = self.snap(&y) {
                    if t != node {
                        out.push((t, self.h));
                    }
                }
            }
        }
        out
    }

    /// Continuous state stored at a reached node.
    pub fn state(&self, node: usize) -> Option<&[f64]> {
        let n = self.dim();
        (self.hops[node] != UNREACHED).then(|| &self.states[node * n..(node + 1) * n])
    }

    /// Graph path length to a node.
    pub fn length(&self, node: usize) -> Option<f64> {
        (self.hops[node] != UNREACHED).then(|| self.hops[node] as f64 * self.h)
    }

    // All edges cost h, so Dijkstra reduces to a layered breadth-first sweep.
    // Within a layer the arrival closest to the cell centre wins.
    fn search(&mut self) {
        let n = self.dim();
        let m = self.frame.rank();
        let Some(start) = self.snap(&self.base) else { return };
        self.hops[start] = 0;
        self.states[start * n..(start + 1) * n].copy_from_slice(&self.base);
        let mut frontier = vec![start];
        let mut layer = 0u32;
        while !frontier.is_empty() {
            layer += 1;
            let mut next: Vec<usize> = Vec::new();
            for &node in &frontier {
                let x = self.states[node * n..(node + 1) * n].to_vec();
                for i in 0..m {
                    for (sign, s) in [(0u8, self.h), (1u8, -self.h)] {
                        let y = field_step(&self.frame, &x, i, s);
                        if !y.iter().all(|v| v.is_finite()) {
                            continue;
                        }
                        let Some(t) = self.snap(&y) else { continue };
                        let off = dist(&y, &self.lattice_point(t));
                        if self.hops[t] == UNREACHED {
                            self.hops[t] = layer;
                            next.push(t);
                        } else if self.hops[t] != layer {
                            continue;
                        } else {
                            let old = dist(&self.states[t * n..(t + 1) * n], &self.lattice_point(t));
                            if off >= old {
                                continue;
                            }
                        }
                        self.states[t * n..(t + 1) * n].copy_from_slice(&y);
                        self.parent[t] = node as u32;
                        self.moves[t] = 2 * i as u8 + sign;
                    }
                }
            }
            frontier = next;
        }
    }

    /// Moves `(field, ±1)` from the base to `node`.
    pub fn path_moves(&self, node: usize) -> Option<Vec<(usize, f64)>> {
        self.hops.get(node).filter(|&&k| k != UNREACHED)?;
        let mut out = Vec::new();
        let mut cur = node;
        while self.parent[cur] != UNREACHED {
            let mv = self.moves[cur];
            out.push(((mv / 2) as usize, if mv.is_multiple_of(2) { 1.0 } else { -1.0 }));
            cur = self.parent[cur] as usize;
        }
        out.reverse();
        Some(out)
    }

    /// Raw graph estimate `d̂` at the node containing `target`.
    pub fn raw_distance(&self, target: &Point) -> Result<f64> {
        let node = self.snap(target).ok_or_else(|| Error::Domain {
            point: target.0.clone(),
        })?;
        self.length(node).ok_or_else(|| Error::Connectivity {
            target: target.0.clone(),
        })
    }

    /// Reached nodes in the `3^n` neighbourhood of `node`, nearest stored
    /// state to `target` first.
    fn nearby(&self, node: usize, target: &[f64]) -> Vec<usize> {
        let n = self.dim();
        let centre = self.lattice_point(node);
        let mut out = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let p: Vec<f64> = (0..n)
                .map(|k| {
                    let d = (c % 3) as f64 - 1.0;
                    c /= 3;
                    centre[k] + d * self.h
                })
                .collect();
            if let Some(t) = self.snap(&p) {
                if self.hops[t] != UNREACHED && !out.contains(&t) {
                    out.push(t);
                }
            }
        }
        out.sort_by(|&a, &b| {
            let da = dist(self.state(a).unwrap(), target) + self.length(a).unwrap();
            let db = dist(self.state(b).unwrap(), target) + self.length(b).unwrap();
            da.total_cmp(&db)
        });
        out
    }
}

/// Piecewise-constant control transcription of the fixed-endpoint energy
/// problem `min ∫|u|² dt`, `ẋ = Σ u_i f_i(x)`, `x(0) = x̄`, `x(1) = target`.
struct Transcription<'a> {
    frame: &'a Frame,
    x0: &'a [f64],
    target: &'a [f64],
    segments: usize,
    substeps: usize,
}

impl Transcription<'_> {
    fn segment(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let dt = 1.0 / (self.segments * self.substeps) as f64;
        let rhs = |y: &[f64]| self.frame.combine(y, u);
        let mut y = x.to_vec();
        for _ in 0..self.substeps {
            let k1 = rhs(&y);
            let t: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
            let k2 = rhs(&t);
            let t: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
            let k3 = rhs(&t);
            let t: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
            let k4 = rhs(&t);
            for j in 0..y.len() {
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        y
    }

    fn forward(&self, u: &[f64]) -> Option<Vec<Vec<f64>>> {
        let m = self.frame.rank();
        let mut xs = Vec::with_capacity(self.segments + 1);
        xs.push(self.x0.to_vec());
        for k in 0..self.segments {
            let next = self.segment(&xs[k], &u[k * m..(k + 1) * m]);
            if !next.iter().all(|v| v.is_finite()) || !self.frame.chart().contains(&next) {
                return None;
            }
            xs.push(next);
        }
        Some(xs)
    }

    fn endpoint(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.forward(u).map(|mut xs| xs.pop().unwrap())
    }

    /// Endpoint and its `n × Nm` Jacobian from finite-difference segment
    /// sensitivities chained backwards.
    fn linearize(&self, u: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let n = self.frame.dim();
        let m = self.frame.rank();
        let xs = self.forward(u)?;
        let mut g = DMatrix::zeros(n, self.segments * m);
        let mut acc = DMatrix::<f64>::identity(n, n);
        for k in (0..self.segments).rev() {
            let uk = &u[k * m..(k + 1) * m];
            let xk = &xs[k];
            let mut b = DMatrix::zeros(n, m);
            for i in 0..m {
                let e = 1e-6 * (1.0 + uk[i].abs());
                let mut up = uk.to_vec();
                up[i] += e;
                let plus = self.segment(xk, &up);
                up[i] -= 2.0 * e;
                let minus = self.segment(xk, &up);
                for j in 0..n {
                    b[(j, i)] = (plus[j] - minus[j]) / (2.0 * e);
                }
            }
            g.columns_mut(k * m, m).copy_from(&(&acc * &b));
            if k > 0 {
                let mut phi = DMatrix::zeros(n, n);
                for c in 0..n {
                    let e = 1e-6 * (1.0 + xk[c].abs());
                    let mut xp = xk.clone();
                    xp[c] += e;
                    let plus = self.segment(&xp, uk);
                    xp[c] -= 2.0 * e;
                    let minus = self.segment(&xp, uk);
                    for j in 0..n {
                        phi[(j, c)] = (plus[j] - minus[j]) / (2.0 * e);
                    }
                }
                acc = &acc * &phi;
            }
        }
        Some((xs[self.segments].clone(), g))
    }

    /// SQP from `u`; returns the energy of the feasible polished control.
    fn solve(&self, mut u: Vec<f64>, max_iter: usize) -> Option<f64> {
        let n = self.frame.dim();
        let nv = u.len();
        let w = 1.0 / self.segments as f64;
        let energy = |u: &[f64]| w * u.iter().map(|v| v * v).sum::<f64>();
        let l1 = |e: &[f64]| e.iter().zip(self.target).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let mut bmat = DMatrix::<f64>::identity(nv, nv) * (2.0 * w);
        let (mut end, mut gmat) = self.linearize(&u)?;
        let mut mu = 0.0f64;
        let scale = 1.0 + self.target.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..max_iter {
            let c = DVector::from_iterator(n, end.iter().zip(self.target).map(|(a, b)| a - b));
            let grad = DVector::from_iterator(nv, u.iter().map(|v| 2.0 * w * v));
            let chol = match bmat.clone().cholesky() {
                Some(ch) => ch,
                None => {
                    bmat = DMatrix::identity(nv, nv) * (2.0 * w);
                    bmat.clone().cholesky()?
                }
            };
            let hg = chol.solve(&grad);
            let hgt = chol.solve(&gmat.transpose());
            let mmat = &gmat * &hgt;
            let rhs = &c - &gmat * &hg;
            let lambda = mmat.lu().solve(&rhs)?;
            let delta = -(&hg + &hgt * &lambda);
            let cinf = c.amax();
            if cinf < 1e-12 * scale && delta.amax() < 1e-10 {
                break;
            }
            mu = mu.max(2.0 * lambda.amax());
            let merit0 = energy(&u) + mu * l1(&end);
            let slope = grad.dot(&delta) - mu * c.abs().sum();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a + alpha * d).collect();
                if let Some(e) = self.endpoint(&trial) {
                    let merit = energy(&trial) + mu * l1(&e);
                    if merit <= merit0 + 1e-4 * alpha * slope.min(0.0) {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(trial) = accepted else { break };
            let (end2, g2) = self.linearize(&trial)?;
            let s = DVector::from_iterator(nv, trial.iter().zip(&u).map(|(a, b)| a - b));
            let y = &s * (2.0 * w) + (&g2 - &gmat).transpose() * &lambda;
            let bs = &bmat * &s;
            let sbs = s.dot(&bs);
            let sy = s.dot(&y);
            if sbs > 1e-300 {
                let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
                let r = &y * theta + &bs * (1.0 - theta);
                let sr = s.dot(&r);
                if sr > 1e-300 {
                    bmat += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
                }
            }
            u = trial;
            end = end2;
            gmat = g2;
        }
        // Slow near-degenerate problems stop short of feasibility; finish
        // with minimum-norm Gauss–Newton steps so the result is still the
        // energy of an admissible control.
        for _ in 0..RESTORATION_STEPS {
            let c = DVector::from_iterator(n, end.iter().zip(self.target).map(|(a, b)| a - b));
            if c.amax() <= 1e-9 * scale {
                break;
            }
            let lambda = (&gmat * gmat.transpose()).lu().solve(&c)?;
            let delta = gmat.transpose() * lambda;
            u.iter_mut().zip(delta.iter()).for_each(|(a, d)| *a -= d);
            (end, gmat) = self.linearize(&u)?;
        }
        let cinf = end
            .iter()
            .zip(self.target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        (cinf <= 1e-9 * scale).then(|| energy(&u))
    }
}

const RESTORATION_STEPS: usize = 20;

/// Resamples a unit-speed move sequence onto `segments` equal time slots of
/// `[0, 1]`, preserving the path's total length.
fn resample_moves(moves: &[(usize, f64)], m: usize, segments: usize, length: f64) -> Vec<f64> {
    let k = moves.len().max(1) as f64;
    let mut u = vec![0.0; segments * m];
    for (idx, &(i, s)) in moves.iter().enumerate() {
        let (a, b) = (idx as f64 / k, (idx + 1) as f64 / k);
        let first = (a * segments as f64).floor() as usize;
        let last = ((b * segments as f64).ceil() as usize).min(segments);
        for seg in first..last {
            let (sa, sb) = (seg as f64 / segments as f64, (seg + 1) as f64 / segments as f64);
            let overlap = (b.min(sb) - a.max(sa)).max(0.0) * segments as f64;
            u[seg * m + i] += s * length * overlap;
        }
    }
    u
}

/// Default `c` in `error_bound = c·√h`, from a Heisenberg calibration at
/// `h = 0.05` against closed-form distances.
pub const DEFAULT_ERROR_CONSTANT: f64 = 0.025;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Piecewise-constant control slots in the transcription.
    pub segments: usize,
    /// Graph paths tried per target (target cell and neighbours).
    pub candidates: usize,
    pub max_iterations: usize,
    pub error_constant: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            segments: 64,
            candidates: 3,
            max_iterations: 150,
            error_constant: DEFAULT_ERROR_CONSTANT,
        }
    }
}

/// Graph search plus transcription polishing, with a calibrated error bound.
#[derive(Clone, Debug)]
pub struct ValueOracle {
    pub graph: ReachGraph,
    pub config: OracleConfig,
}

impl ValueOracle {
    pub fn new(system: &SubRiemannianSystem, h: f64, bounds: &ChartBox) -> Result<Self> {
        Ok(Self {
            graph: build_graph(system, h, bounds)?,
            config: OracleConfig::default(),
        })
    }

    pub fn with_config(mut self, config: OracleConfig) -> Self {
        self.config = config;
        self
    }

    pub fn error_bound(&self) -> f64 {
        self.config.error_constant * self.graph.h.sqrt()
    }

    /// `(d̂, error_bound)`.
    pub fn distance(&self, target: &Point) -> Result<(f64, f64)> {
        let g = &self.graph;
        let node = g.snap(target).ok_or_else(|| Error::Domain {
            point: target.0.clone(),
        })?;
        if g.base.iter().zip(target.iter()).all(|(a, b)| a == b) {
            return Ok((0.0, self.error_bound()));
        }
        let near = g.nearby(node, target);
        // an unreached cell borrows its nearest reached neighbour's path
        let raw = match (g.length(node), near.first()) {
            (Some(l), _) => l,
            (None, Some(&c)) => g.length(c).unwrap_or(0.0) + g.h,
            (None, None) => {
                return Err(Error::Connectivity {
                    target: target.0.clone(),
                })
            }
        };
        let tr = Transcription {
            frame: &g.frame,
            x0: &g.base,
            target,
            segments: self.config.segments,
            substeps: 2,
        };
        let mut best = f64::INFINITY;
        for cand in near.into_iter().take(self.config.candidates) {
            let moves = g.path_moves(cand).unwrap_or_default();
            let length = g.length(cand).unwrap_or(0.0).max(g.h);
            let u0 = if moves.is_empty() {
                let d: Vec<f64> = target.iter().zip(&g.base).map(|(a, b)| a - b).collect();
                // straight start in the first fields' directions
                let mut u = vec![0.0; self.config.segments * g.frame.rank()];
                for k in 0..self.config.segments {
                    for i in 0..g.frame.rank().min(d.len()) {
                        u[k * g.frame.rank() + i] = d[i];
                    }
                }
                u
            } else {
                resample_moves(&moves, g.frame.rank(), self.config.segments, length)
            };
            if let Some(j) = tr.solve(u0, self.config.max_iterations) {
                best = best.min(j);
            }
        }
        let d = if best.is_finite() { best.sqrt() } else { raw };
        Ok((d, self.error_bound()))
    }

    /// `d̂²`.
    pub fn value(&self, target: &Point) -> Result<f64> {
        Ok(self.distance(target)?.0.powi(2))
    }

    /// Refits `c = 2 · max |d̂ − d| / √h` on reference distances.
    pub fn calibrate(&mut self, references: &[(Point, f64)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, d) in references {
            let (dh, _) = self.distance(x)?;
            worst = worst.max((dh - d).abs());
        }
        self.config.error_constant = 2.0 * worst / self.graph.h.sqrt();
        Ok(self.config.error_constant)
    }

    /// Raw graph values on every reached node.
    pub fn value_grid(&self) -> ValueGrid {
        let g = &self.graph;
        let mut points = Vec::new();
        let mut values = Vec::new();
        for node in 0..g.node_count() {
            if let Some(l) = g.length(node) {
                points.push(g.lattice_point(node));
                values.push(l * l);
            }
        }
        ValueGrid {
            h: g.h,
            points,
            values,
            provenance: Provenance::Oracle,
            error_bound: self.error_bound(),
        }
    }
}

impl SquaredDistanceOracle for ValueOracle {
    fn squared_distance(&mut self, target: &Point) -> Result<(f64, f64)> {
        let (d, e) = self.distance(target)?;
        // bound on d² from the bound on d
        Ok((d * d, e * (2.0 * d + e)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Oracle,
    Shooting,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Oracle => "oracle",
            Provenance::Shooting => "shooting",
        }
    }
}

/// Sampled value function on lattice nodes.
#[derive(Clone, Debug, Serialize)]
pub struct ValueGrid {
    pub h: f64,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    pub error_bound: f64,
}

/// `r(x) = −½V(x) + H(x, ½∇̂V(x))` with a central-difference gradient.
pub fn hj_residual<S: ValueSampler + ?Sized>(
    system: &SubRiemannianSystem,
    v: &mut S,
    x: &Point,
    fd_step: f64,
) -> Result<f64> {
    let n = system.dim();
    let v0 = v.value(x)?;
    let grad = fd_gradient(v, x, fd_step)?;
    let half = CoVector((0..n).map(|k| 0.5 * grad[k]).collect());
    Ok(-0.5 * v0 + system.frame.hamiltonian(x, &half)?)
}

/// Central-difference gradient of a sampled function.
pub fn fd_gradient<S: ValueSampler + ?Sized>(v: &mut S, x: &Point, step: f64) -> Result<CoVector> {
    let n = x.dim();
    let mut g = vec![0.0; n];
    for k in 0..n {
        let mut y = x.clone();
        y[k] += step;
        let plus = v.value(&y)?;
        y[k] -= 2.0 * step;
        let minus = v.value(&y)?;
        g[k] = (plus - minus) / (2.0 * step);
    }
    Ok(CoVector(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::builtin_system;
    use crate::reference::heisenberg_distance;

    #[test]
    fn euclidean_lattice() {
        let e = builtin_system("euclidean-2").unwrap();
        let g = build_graph(&e, 0.5, &ChartBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(g.node_count(), 9);
        let centre = g.snap(&[0.5, 0.5]).unwrap();
        let mut nb: Vec<Point> = g
            .lattice_edges(centre)
            .into_iter()
            .map(|(t, _)| g.lattice_point(t))
            .collect();
        nb.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_eq!(nb.len(), 4);
        assert_eq!(g.reached_count(), 9);
        assert_eq!(g.raw_distance(&Point::from([1.0, 1.0])).unwrap(), 2.0);
    }

    #[test]
    fn field_steps() {
        let m = builtin_system("martinet").unwrap();
        let y = field_step(&m.frame, &[0.0, 0.5, 0.0], 0, 0.25);
        assert!((y[2] - 0.0625).abs() < 1e-15);
        let h = builtin_system("heisenberg").unwrap();
        let y = field_step(&h.frame, &[0.0, 1.0, 0.0], 0, 0.25);
        assert!((y[2] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn euclidean_oracle_is_exact_after_polishing() {
        let e = builtin_system("euclidean-2").unwrap();
        let o = ValueOracle::new(&e, 0.25, &ChartBox::cube(2, 5.0)).unwrap();
        let (d, _) = o.distance(&Point::from([3.0, 4.0])).unwrap();
        assert!((d - 5.0).abs() < 1e-8, "{d}");
        assert_eq!(o.distance(&Point::zeros(2)).unwrap().0, 0.0);
        let (d, _) = o.distance(&Point::from([1.0, 0.1])).unwrap();
        assert!((d - 1.01f64.sqrt()).abs() < 1e-8, "{d}");
    }

    #[test]
    fn heisenberg_oracle_close_to_closed_form() {
        let h = builtin_system("heisenberg").unwrap();
        let b = ChartBox::new(vec![-1.5, -1.5, -1.0], vec![1.5, 1.5, 1.0]).unwrap();
        let o = ValueOracle::new(&h, 0.1, &b).unwrap();
        for x in [[0.0, 0.0, 0.25], [0.5, -0.3, 0.2], [0.8, 0.1, -0.05]] {
            let (d, _) = o.distance(&Point::from(x)).unwrap();
            let exact = heisenberg_distance(x[0], x[1], x[2]);
            assert!(d >= exact - 1e-9 && d - exact < 5e-3, "{x:?}: {d} vs {exact}");
        }
    }

    #[test]
    fn connectivity_error() {
        let e = builtin_system("euclidean-2").unwrap();
        let g = build_graph(&e, 0.5, &ChartBox::cube(2, 1.0)).unwrap();
        assert!(g.raw_distance(&Point::from([5.0, 0.0])).is_err());
        let m = builtin_system("heisenberg").unwrap();
        // the z direction is never reached from a purely horizontal box slab
        let b = ChartBox::new(vec![-0.2, -0.2, -1.0], vec![0.2, 0.2, 1.0]).unwrap();
        let g = build_graph(&m, 0.1, &b).unwrap();
        assert!(matches!(
            g.raw_distance(&Point::from([0.0, 0.0, 0.9])),
            Err(Error::Connectivity { .. })
        ));
    }

    #[test]
    fn hj_residual_on_quadratic() {
        let e = builtin_system("euclidean-3").unwrap();
        let mut v = |x: &Point| Ok(x.norm().powi(2));
        let r = hj_residual(&e, &mut v, &Point::from([0.3, -1.0, 2.0]), 1e-3).unwrap();
        assert!(r.abs() < 1e-9, "{r}");
    }
}
