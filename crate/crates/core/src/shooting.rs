//! Inverting the exponential map: multi-start damped least squares on
//! `exp_{x̄}(p0) = x`, giving minimizing covectors, `V = d²`, multiplicities
//! and conjugate-point flags.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chart::{norm, CoVector, Point, SubRiemannianSystem};
use crate::error::{Error, Result};
use crate::extremal::{evaluate_exp, initial_variational, integrate, raw_hamiltonian, ExpEvaluation, DET_NOISE};
use crate::linalg::{normalized_det, solve_in_place};

#[derive(Clone, Debug, Serialize)]
pub struct ShootingConfig {
    pub starts: usize,
    pub seed: u64,
    /// RK4 steps over `[0, 1]` per exponential-map evaluation.
    pub steps: usize,
    pub max_iterations: usize,
    /// Terminal residual accepted as a hit.
    pub feasibility_tol: f64,
    pub cluster_radius: f64,
    /// Relative cost tolerance for calling two clusters co-optimal.
    pub cost_tol: f64,
    /// `σ_min < threshold · σ_max` declares `d exp` singular.
    pub conjugate_threshold: f64,
    /// Start radii, multiplied by `radius_scale`.
    pub start_radii: Vec<f64>,
    pub radius_scale: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            steps: 200,
            max_iterations: 200,
            feasibility_tol: 1e-6,
            cluster_radius: 1e-3,
            cost_tol: 1e-6,
            conjugate_threshold: 1e-6,
            start_radii: vec![0.5, 1.0, 2.0, 4.0],
            radius_scale: 2.0,
        }
    }
}

/// Start scale and count for frames that lose rank: covectors must grow
/// large to steer through the degenerate locus, and the cost landscape has
/// many local minima.
pub const RANK_DROP_RADIUS_SCALE: f64 = 8.0;
pub const RANK_DROP_STARTS: usize = 128;

impl ShootingConfig {
    /// Defaults, with wider starts when the frame may drop rank.
    pub fn for_system(system: &SubRiemannianSystem) -> Self {
        let mut config = Self::default();
        if system.frame.allows_rank_drop() {
            config.radius_scale = RANK_DROP_RADIUS_SCALE;
            config.starts = RANK_DROP_STARTS;
        }
        config
    }

    pub fn with_starts(mut self, starts: usize, seed: u64) -> Self {
        self.starts = starts;
        self.seed = seed;
        self
    }
}

/// A converged shooting solution.
#[derive(Clone, Debug, Serialize)]
pub struct MinimizerCandidate {
    pub p0: CoVector,
    /// `‖exp(p0) − x‖`.
    pub residual: f64,
    /// `J = 2 H(x̄, p0)`.
    pub cost: f64,
    /// Smallest singular value of `d exp` at `p0`.
    pub conjugate_sigma: f64,
    pub sigma_max: f64,
    pub terminal_p: CoVector,
    /// No conjugate time strictly inside `(0, 1)`.
    pub conjugate_free: bool,
}

impl MinimizerCandidate {
    pub fn relative_sigma(&self) -> f64 {
        if self.sigma_max > 0.0 {
            self.conjugate_sigma / self.sigma_max
        } else {
            0.0
        }
    }

    pub fn is_conjugate(&self, threshold: f64) -> bool {
        self.conjugate_sigma < threshold * self.sigma_max
    }

    /// `ζ = 2 p(1)`, an element of the limiting subdifferential of `V`.
    pub fn zeta(&self) -> CoVector {
        self.terminal_p.scaled(2.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizerSet {
    pub target: Point,
    /// One representative per `p0` cluster, by cost then lexicographic `p0`.
    pub candidates: Vec<MinimizerCandidate>,
    pub value: f64,
    /// Number of co-optimal clusters.
    pub multiplicity: usize,
}

impl MinimizerSet {
    /// Co-optimal candidates, lexicographically smallest `p0` first.
    pub fn optimal(&self) -> impl Iterator<Item = &MinimizerCandidate> {
        self.candidates.iter().take(self.multiplicity)
    }

    /// Tie-broken minimizer: the co-optimal cluster with lexicographically
    /// smallest `p0`.
    pub fn selected(&self) -> &MinimizerCandidate {
        &self.candidates[0]
    }

    fn trivial(target: Point) -> Self {
        let n = target.dim();
        Self {
            candidates: vec![MinimizerCandidate {
                p0: CoVector::zeros(n),
                residual: 0.0,
                cost: 0.0,
                conjugate_sigma: 0.0,
                sigma_max: 0.0,
                terminal_p: CoVector::zeros(n),
                conjugate_free: true,
            }],
            target,
            value: 0.0,
            multiplicity: 1,
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn is_base(system: &SubRiemannianSystem, x: &[f64]) -> bool {
    system.base.iter().zip(x).all(|(a, b)| a == b)
}

/// Damped Gauss–Newton (Levenberg–Marquardt) from one initial covector.
/// Returns `None` when the iteration fails to reach the feasibility tolerance.
pub fn solve_from(
    system: &SubRiemannianSystem,
    target: &Point,
    p_init: &CoVector,
    config: &ShootingConfig,
) -> Option<MinimizerCandidate> {
    let frame = &system.frame;
    let n = system.dim();
    let xbar = &system.base;
    let eval = |p: &[f64]| evaluate_exp(frame, xbar, p, config.steps).ok();
    let resid = |e: &ExpEvaluation| -> (Vec<f64>, f64) {
        let r: Vec<f64> = e.endpoint.iter().zip(target.iter()).map(|(a, b)| a - b).collect();
        let nr = norm(&r);
        (r, nr)
    };

    let mut p = p_init.0.clone();
    let mut cur = None;
    for _ in 0..6 {
        if let Some(e) = eval(&p) {
            cur = Some(e);
            break;
        }
        p.iter_mut().for_each(|v| *v *= 0.5);
    }
    let mut cur = cur?;
    let (mut r, mut rn) = resid(&cur);
    let tight = 1e-13 * (1.0 + target.norm());
    let mut lambda = 1e-3;
    let mut a = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for _ in 0..config.max_iterations {
        if rn <= tight {
            break;
        }
        let j = &cur.jacobian;
        let mut diag_max = 0.0f64;
        for r1 in 0..n {
            for c in 0..n {
                a[r1 * n + c] = (0..n).map(|k| j[k * n + r1] * j[k * n + c]).sum();
            }
            diag_max = diag_max.max(a[r1 * n + r1]);
            g[r1] = -(0..n).map(|k| j[k * n + r1] * r[k]).sum::<f64>();
        }
        let mu = lambda * diag_max.max(1e-300);
        let mut aa = a.clone();
        for k in 0..n {
            aa[k * n + k] += mu;
        }
        let mut step = g.clone();
        if !solve_in_place(&mut aa, &mut step, n) || step.iter().any(|v| !v.is_finite()) {
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
            continue;
        }
        let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
        match eval(&trial) {
            Some(e) => {
                let (r2, rn2) = resid(&e);
                if rn2 < rn {
                    p = trial;
                    cur = e;
                    r = r2;
                    let gain = rn2 / rn;
                    rn = rn2;
                    lambda = (lambda / 5.0).max(1e-15);
                    // stalled at round-off level
                    if gain > 0.999 && rn < config.feasibility_tol * 1e-3 {
                        break;
                    }
                } else {
                    lambda *= 4.0;
                }
            }
            None => lambda *= 4.0,
        }
        if lambda > 1e14 {
            break;
        }
    }
    if !(rn <= config.feasibility_tol) {
        return None;
    }
    let jac = DMatrix::from_row_slice(n, n, &cur.jacobian);
    let sv = jac.singular_values();
    let p0 = CoVector(p);
    Some(MinimizerCandidate {
        cost: 2.0 * raw_hamiltonian(frame, xbar, &p0),
        residual: rn,
        conjugate_sigma: sv.iter().cloned().fold(f64::INFINITY, f64::min),
        sigma_max: sv.iter().cloned().fold(0.0, f64::max),
        terminal_p: CoVector(cur.terminal_p),
        conjugate_free: cur.conjugate_free,
        p0,
    })
}

/// Random initial covectors: uniform directions on spheres whose radii
/// cycle through `start_radii × radius_scale`.
pub fn start_covectors(n: usize, config: &ShootingConfig) -> Vec<CoVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.starts)
        .map(|k| {
            let r = config.start_radii[k % config.start_radii.len()] * config.radius_scale;
            let dir = random_unit(&mut rng, n);
            CoVector(dir.into_iter().map(|v| v * r).collect())
        })
        .collect()
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = norm(&v);
        if s > 1e-3 && s <= 1.0 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Groups converged candidates into `p0` clusters and orders them.
pub fn assemble(
    target: Point,
    solutions: Vec<MinimizerCandidate>,
    config: &ShootingConfig,
    starts: usize,
) -> Result<MinimizerSet> {
    let mut reps: Vec<MinimizerCandidate> = Vec::new();
    // single-link agglomeration
    let mut clusters: Vec<Vec<MinimizerCandidate>> = Vec::new();
    for s in solutions {
        let hits: Vec<usize> = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|m| m.p0.distance(&s.p0) <= config.cluster_radius))
            .map(|(i, _)| i)
            .collect();
        match hits.split_first() {
            None => clusters.push(vec![s]),
            Some((&first, rest)) => {
                for &i in rest.iter().rev() {
                    let moved = clusters.remove(i);
                    clusters[first].extend(moved);
                }
                clusters[first].push(s);
            }
        }
    }
    for c in clusters {
        let best = c
            .into_iter()
            .min_by(|a, b| a.residual.total_cmp(&b.residual))
            .expect("clusters are non-empty");
        reps.push(best);
    }
    if reps.is_empty() {
        return Err(Error::UnresolvedTarget {
            target: target.0,
            starts,
        });
    }
    let value = reps.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
    let tol = config.cost_tol * value.max(1e-3);
    reps.sort_by(|a, b| {
        let ao = a.cost <= value + tol;
        let bo = b.cost <= value + tol;
        match (ao, bo) {
            (true, true) => lex_cmp(&a.p0, &b.p0),
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => a.cost.total_cmp(&b.cost).then_with(|| lex_cmp(&a.p0, &b.p0)),
        }
    });
    let multiplicity = reps.iter().filter(|c| c.cost <= value + tol).count();
    Ok(MinimizerSet {
        target,
        candidates: reps,
        value,
        multiplicity,
    })
}

/// Shooting with explicit configuration plus optional warm-start covectors,
/// which are tried before the random starts.
pub fn shoot_with(
    system: &SubRiemannianSystem,
    target: &Point,
    config: &ShootingConfig,
    hints: &[CoVector],
) -> Result<MinimizerSet> {
    system.frame.check_domain(target)?;
    if target.dim() != system.dim() {
        return Err(Error::Config("target dimension mismatch".into()));
    }
    if is_base(system, target) {
        return Ok(MinimizerSet::trivial(target.clone()));
    }
    let starts = start_covectors(system.dim(), config);
    let solutions: Vec<MinimizerCandidate> = hints
        .iter()
        .chain(starts.iter())
        .filter_map(|p| solve_from(system, target, p, config))
        .collect();
    assemble(target.clone(), solutions, config, hints.len() + config.starts)
}

/// Multi-start shooting with `starts` random initial covectors.
pub fn shoot(system: &SubRiemannianSystem, target: &Point, starts: usize, seed: u64) -> Result<MinimizerSet> {
    shoot_with(
        system,
        target,
        &ShootingConfig::for_system(system).with_starts(starts, seed),
        &[],
    )
}

/// `V(x) = d_SR(x̄, x)²`, with `V(x̄) = 0`.
pub fn value_function(system: &SubRiemannianSystem, x: &Point) -> Result<f64> {
    Ok(shoot_with(system, x, &ShootingConfig::for_system(system), &[])?.value)
}

/// Continuation solver for sequences of nearby targets.
///
/// Each target is first solved from the previous target's optimal covectors.
/// A warm solution is accepted only if its extremal is free of interior
/// conjugate points and `d exp` is non-singular at the end; otherwise the
/// full multi-start solve runs. Warm sets only contain the continued
/// branches, so their multiplicity is a lower bound.
#[derive(Clone, Debug)]
pub struct WarmShooter {
    pub system: SubRiemannianSystem,
    pub config: ShootingConfig,
    hints: Vec<CoVector>,
    pub warm_hits: usize,
    pub cold_solves: usize,
}

impl WarmShooter {
    pub fn new(system: SubRiemannianSystem, config: ShootingConfig) -> Self {
        Self {
            system,
            config,
            hints: Vec::new(),
            warm_hits: 0,
            cold_solves: 0,
        }
    }

    pub fn set_hints(&mut self, hints: Vec<CoVector>) {
        self.hints = hints;
    }

    pub fn hints(&self) -> &[CoVector] {
        &self.hints
    }

    fn remember(&mut self, set: &MinimizerSet) {
        if set.value > 0.0 {
            self.hints = set.optimal().map(|c| c.p0.clone()).collect();
        }
    }

    /// Warm solve with fallback to multi-start.
    pub fn solve(&mut self, x: &Point) -> Result<MinimizerSet> {
        self.system.frame.check_domain(x)?;
        if is_base(&self.system, x) {
            return Ok(MinimizerSet::trivial(x.clone()));
        }
        let warm: Vec<MinimizerCandidate> = self
            .hints
            .iter()
            .filter_map(|p| solve_from(&self.system, x, p, &self.config))
            .filter(|c| c.conjugate_free && !c.is_conjugate(self.config.conjugate_threshold))
            .collect();
        if !warm.is_empty() {
            let set = assemble(x.clone(), warm, &self.config, self.hints.len())?;
            self.warm_hits += 1;
            self.remember(&set);
            return Ok(set);
        }
        self.cold(x)
    }

    /// Multi-start solve, still seeded with the current hints.
    pub fn cold(&mut self, x: &Point) -> Result<MinimizerSet> {
        let set = shoot_with(&self.system, x, &self.config, &self.hints)?;
        self.cold_solves += 1;
        self.remember(&set);
        Ok(set)
    }
}

impl crate::oracle::ValueSampler for WarmShooter {
    fn value(&mut self, x: &Point) -> Result<f64> {
        Ok(self.solve(x)?.value)
    }
}

/// Differential of `V` from terminal covectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Gradient {
    /// `dV(x) = 2 p(1)` at a point with a unique, non-conjugate minimizer.
    Unique(CoVector),
    /// `2 p(1)` for each co-optimal cluster, or a conjugate minimizer.
    Set(Vec<CoVector>),
}

impl Gradient {
    pub fn covectors(&self) -> Vec<CoVector> {
        match self {
            Gradient::Unique(z) => vec![z.clone()],
            Gradient::Set(v) => v.clone(),
        }
    }
}

pub fn gradient_of(set: &MinimizerSet, config: &ShootingConfig) -> Gradient {
    if set.multiplicity == 1 && (set.value == 0.0 || !set.selected().is_conjugate(config.conjugate_threshold)) {
        Gradient::Unique(set.selected().zeta())
    } else {
        Gradient::Set(set.optimal().map(MinimizerCandidate::zeta).collect())
    }
}

pub fn gradient_from_shooting(system: &SubRiemannianSystem, x: &Point) -> Result<Gradient> {
    let config = ShootingConfig::for_system(system);
    let set = shoot_with(system, x, &config, &[])?;
    Ok(gradient_of(&set, &config))
}

/// Number of det samples over `(0, T]` and steps per unit time.
const CONJ_SAMPLES: usize = 200;
const CONJ_STEPS_PER_UNIT: f64 = 1000.0;

/// First time in `(0, tmax]` where `det d exp_t(p0)` changes sign,
/// refined by bisection to `1e-6`.
pub fn first_conjugate_time(system: &SubRiemannianSystem, p0: &CoVector, tmax: f64) -> Result<Option<f64>> {
    let frame = &system.frame;
    let n = system.dim();
    if raw_hamiltonian(frame, &system.base, p0) == 0.0 {
        return Err(Error::Config("conjugate time needs H(x̄, p0) ≠ 0".into()));
    }
    if !(tmax > 0.0) {
        return Err(Error::Config("tmax must be positive".into()));
    }
    let per_sample = ((CONJ_STEPS_PER_UNIT * tmax / CONJ_SAMPLES as f64).ceil() as usize).max(1);
    let total = per_sample * CONJ_SAMPLES;
    let dt = tmax / total as f64;
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(CONJ_SAMPLES);
    let mut block = vec![0.0; n * n];
    integrate(
        frame,
        initial_variational(&system.base, p0),
        tmax,
        total,
        true,
        |k, t, y| {
            if k > 0 && k % per_sample == 0 {
                block.copy_from_slice(&y[2 * n..2 * n + n * n]);
                samples.push((t, normalized_det(&block, n)));
            }
        },
    )?;
    let det_at = |t: f64| -> Result<f64> {
        let steps = ((t / dt).ceil() as usize).max(1);
        let y = integrate(
            frame,
            initial_variational(&system.base, p0),
            t,
            steps,
            true,
            |_, _, _| {},
        )?;
        Ok(normalized_det(&y[2 * n..2 * n + n * n], n))
    };
    let mut first: Option<(f64, f64)> = None;
    let mut prev_t = 0.0;
    for &(t, d) in &samples {
        if d.abs() <= DET_NOISE {
            continue;
        }
        match first {
            None => first = Some((t, d.signum())),
            Some((_, s)) if d.signum() != s => {
                let (mut lo, mut hi) = (prev_t, t);
                while hi - lo > 1e-6 {
                    let mid = 0.5 * (lo + hi);
                    let dm = det_at(mid)?;
                    if dm.signum() == s && dm.abs() > DET_NOISE {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
            _ => {}
        }
        prev_t = t;
    }
    Ok(None)
}
