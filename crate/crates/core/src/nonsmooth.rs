//! Numerical probes of the nonsmooth structure of `V`: semiconcavity
//! constants, limiting subdifferentials, and the singular, cut and
//! minimizing-conjugate loci.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{dist, ChartBox, CoVector, Point, SubRiemannianSystem};
use crate::error::{Error, Result};
use crate::oracle::ValueSampler;
use crate::shooting::{gradient_of, random_unit, solve_from, MinimizerSet, ShootingConfig, WarmShooter};

/// Sampling region for the semiconcavity probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Box(ChartBox),
    /// `inner ≤ |x − center| ≤ outer`.
    Annulus {
        center: Point,
        inner: f64,
        outer: f64,
    },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains(x),
            Region::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                r >= *inner && r <= *outer
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match self {
            Region::Box(b) => b.sample(rng),
            Region::Annulus { center, outer, .. } => loop {
                let x: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-outer..*outer)).collect();
                if self.contains(&x) {
                    return Point(x);
                }
            },
        }
    }
}

/// Pair-distance cap `δ` of the semiconcavity probe.
pub const SEMICONCAVITY_DELTA: f64 = 0.2;
/// Radius of the excluded ball around `x̄`.
pub const BASE_EXCLUSION: f64 = 0.1;
/// Triples with `μ(1−μ)|x−y|²` below this are redrawn: the quotient would
/// only amplify sampler round-off.
pub const SEMICONCAVITY_DENOM_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct SemiconcavityReport {
    pub samples: usize,
    /// Smallest `C ≥ 0` with `μV(x)+(1−μ)V(y)−V(μx+(1−μ)y) ≤ μ(1−μ)C|x−y|²`
    /// on every sample.
    pub fitted_c: f64,
    /// Samples violating the supplied constant, if any was supplied.
    pub violations: Option<usize>,
    pub checked_c: Option<f64>,
    /// Largest-quotient samples `(x, y, μ, quotient)`, best first.
    #[serde(skip)]
    pub top: Vec<(Point, Point, f64, f64)>,
}

const TOP_KEEP: usize = 8;

/// Draws `samples` triples `(x, y, μ)` in `region` with `|x − y| ≤ δ`.
/// Triples are ordered along a coarse space-filling sweep so that
/// continuation samplers stay warm.
pub fn semiconcavity_triples(region: &Region, base: &Point, samples: usize, seed: u64) -> Vec<(Point, Point, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = base.dim();
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let x = region.sample(&mut rng);
        let dir = random_unit(&mut rng, n);
        let r = SEMICONCAVITY_DELTA * rng.gen::<f64>();
        let y = Point(x.iter().zip(&dir).map(|(a, d)| a + r * d).collect());
        let mu: f64 = rng.gen();
        if !region.contains(&y) || mu * (1.0 - mu) * r * r < SEMICONCAVITY_DENOM_FLOOR {
            continue;
        }
        if segment_distance(base, &x, &y) <= BASE_EXCLUSION {
            continue;
        }
        out.push((x, y, mu));
    }
    let key = |p: &Point| sweep_key(p, SEMICONCAVITY_DELTA);
    out.sort_by_key(|t| key(&t.0));
    out
}

fn segment_distance(c: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let t = if dd == 0.0 {
        0.0
    } else {
        (c.iter().zip(a).zip(&d).map(|((c, a), d)| (c - a) * d).sum::<f64>() / dd).clamp(0.0, 1.0)
    };
    let p: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + t * d).collect();
    dist(c, &p)
}

/// Boustrophedon cell order: neighbouring keys are neighbouring cells.
fn sweep_key(p: &[f64], cell: f64) -> Vec<i64> {
    let idx: Vec<i64> = p.iter().map(|v| (v / cell).floor() as i64).collect();
    let mut key = vec![0; idx.len()];
    let mut flip = false;
    for k in (0..idx.len()).rev() {
        key[idx.len() - 1 - k] = if flip { -idx[k] } else { idx[k] };
        flip ^= idx[k].rem_euclid(2) == 1;
    }
    key
}

/// Fits the semiconcavity constant and, if `check_c` is given, counts its
/// violations.
pub fn semiconcavity_probe<S: ValueSampler + ?Sized>(
    v: &mut S,
    triples: &[(Point, Point, f64)],
    check_c: Option<f64>,
) -> Result<SemiconcavityReport> {
    let mut fitted = 0.0f64;
    let mut violations = 0;
    let mut top: Vec<(Point, Point, f64, f64)> = Vec::new();
    for (x, y, mu) in triples {
        let q = semiconcavity_quotient(v, x, y, *mu)?;
        fitted = fitted.max(q);
        if let Some(c) = check_c {
            if q > c {
                violations += 1;
            }
        }
        if top.len() < TOP_KEEP || q > top[top.len() - 1].3 {
            top.push((x.clone(), y.clone(), *mu, q));
            top.sort_by(|a, b| b.3.total_cmp(&a.3));
            top.truncate(TOP_KEEP);
        }
    }
    Ok(SemiconcavityReport {
        samples: triples.len(),
        fitted_c: fitted,
        violations: check_c.map(|_| violations),
        checked_c: check_c,
        top,
    })
}

/// `[μV(x)+(1−μ)V(y)−V(μx+(1−μ)y)] / (μ(1−μ)|x−y|²)`.
pub fn semiconcavity_quotient<S: ValueSampler + ?Sized>(v: &mut S, x: &Point, y: &Point, mu: f64) -> Result<f64> {
    let z = Point(x.iter().zip(y.iter()).map(|(a, b)| mu * a + (1.0 - mu) * b).collect());
    let vx = v.value(x)?;
    let vz = v.value(&z)?;
    let vy = v.value(y)?;
    Ok((mu * vx + (1.0 - mu) * vy - vz) / (mu * (1.0 - mu) * x.distance(y).powi(2)))
}

fn admissible_triple(region: &Region, base: &Point, x: &[f64], y: &[f64], mu: f64) -> bool {
    let r = dist(x, y);
    mu > 0.0
        && mu < 1.0
        && r <= SEMICONCAVITY_DELTA
        && mu * (1.0 - mu) * r * r >= SEMICONCAVITY_DENOM_FLOOR
        && region.contains(x)
        && region.contains(y)
        && segment_distance(base, x, y) > BASE_EXCLUSION
}

/// Pushes the fitted constant towards the supremum over admissible triples:
/// compass search on `(x, y, μ)` from each of the report's top samples,
/// `budget` quotient evaluations per start. Returns the larger of the
/// sampled and searched maxima.
pub fn refine_semiconcavity<S: ValueSampler + ?Sized>(
    v: &mut S,
    region: &Region,
    base: &Point,
    report: &SemiconcavityReport,
    budget: usize,
) -> Result<f64> {
    let mut best = report.fitted_c;
    for (x0, y0, mu0, q0) in &report.top {
        let n = x0.dim();
        let mut theta: Vec<f64> = x0.iter().chain(y0.iter()).copied().chain([*mu0]).collect();
        let mut q = *q0;
        let mut step = 0.02;
        let mut evals = 0;
        while step >= 1e-3 && evals < budget {
            let mut improved = false;
            for k in 0..theta.len() {
                for sign in [1.0, -1.0] {
                    let mut t = theta.clone();
                    t[k] += sign * if k == 2 * n { 2.5 * step } else { step };
                    let (x, y, mu) = (Point(t[..n].to_vec()), Point(t[n..2 * n].to_vec()), t[2 * n]);
                    if !admissible_triple(region, base, &x, &y, mu) {
                        continue;
                    }
                    evals += 1;
                    let qt = semiconcavity_quotient(v, &x, &y, mu)?;
                    if qt > q {
                        q = qt;
                        theta = t;
                        improved = true;
                        break;
                    }
                }
                if improved || evals >= budget {
                    break;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(q);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParaboloidProbe {
    pub upper: bool,
    pub lower: bool,
}

/// Tests `V(y) ≤ V(x)+⟨ζ,y−x⟩+σ|y−x|²` and `V(y) ≥ V(x)+⟨ζ,y−x⟩−σ|y−x|²`
/// on 200 points of the ball `|y − x| ≤ radius`.
pub fn upper_lower_paraboloid_probe<S: ValueSampler + ?Sized>(
    v: &mut S,
    x: &Point,
    zeta: &CoVector,
    radius: f64,
    sigma: f64,
    seed: u64,
) -> Result<ParaboloidProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.dim();
    let vx = v.value(x)?;
    let tol = 1e-9 * (1.0 + vx.abs());
    let (mut upper, mut lower) = (true, true);
    for _ in 0..200 {
        let dir = random_unit(&mut rng, n);
        let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
        let d: Vec<f64> = dir.iter().map(|u| r * u).collect();
        let y = Point(x.iter().zip(&d).map(|(a, b)| a + b).collect());
        let lin = vx + zeta.pair(&d);
        let vy = v.value(&y)?;
        upper &= vy <= lin + sigma * r * r + tol;
        lower &= vy >= lin - sigma * r * r - tol;
    }
    Ok(ParaboloidProbe { upper, lower })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedCovector {
    pub zeta: CoVector,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubdifferentialEstimate {
    pub x: Point,
    pub value: f64,
    pub clusters: Vec<WeightedCovector>,
    pub differentiable: bool,
}

pub const SUBDIFF_CLUSTER_RADIUS: f64 = 1e-2;
pub const PROBE_RADIUS: f64 = 5e-3;
pub const PROBE_COUNT: usize = 16;
/// Largest `|d(y) − d(x)|` accepted from a probe; `d` is continuous, so a
/// bigger jump means shooting at `y` missed the minimizer.
pub const PROBE_DISTANCE_JUMP: f64 = 0.1;

/// Limiting subdifferential from terminal covectors at `x` and at
/// `probe_count` perturbed points within `probe_radius`.
///
/// Covectors are single-link clustered at radius `1e-2`. A cluster that
/// holds a minimizer at `x` is represented by it. A cluster seen only at
/// probes is carried back to `x` by continuing its nearest probe minimizer;
/// when that lands on a minimizer at `x` its `2p(1)` represents the cluster,
/// otherwise the nearest probe covector does. Probes whose distance jumps by
/// more than [`PROBE_DISTANCE_JUMP`] from `x` are discarded.
pub fn limiting_subdifferential(
    shooter: &mut WarmShooter,
    x: &Point,
    probe_radius: f64,
    probe_count: usize,
    seed: u64,
) -> Result<SubdifferentialEstimate> {
    if x.iter().zip(shooter.system.base.iter()).all(|(a, b)| a == b) {
        return Err(Error::Config("limiting subdifferential probe needs x ≠ x̄".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.dim();
    let config = shooter.config.clone();
    let centre = shooter.cold(x)?;
    let own_hints = shooter.hints().to_vec();
    let mut members: Vec<Member> = optimal_members(&centre, &config, 0.0);
    for _ in 0..probe_count {
        let dir = random_unit(&mut rng, n);
        let r = probe_radius * rng.gen::<f64>().powf(1.0 / n as f64);
        let y = Point(x.iter().zip(&dir).map(|(a, d)| a + r * d).collect());
        shooter.set_hints(own_hints.clone());
        match shooter.solve(&y) {
            Ok(set) if (set.value.sqrt() - centre.value.sqrt()).abs() <= PROBE_DISTANCE_JUMP => {
                members.extend(optimal_members(&set, &config, r))
            }
            Ok(_) => {}
            Err(Error::UnresolvedTarget { .. }) | Err(Error::Domain { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let points: Vec<(CoVector, f64)> = members.iter().map(|m| (m.zeta.clone(), m.source)).collect();
    let total = members.len() as f64;
    let tol = config.cost_tol * centre.value.max(1e-3);
    let mut clusters: Vec<WeightedCovector> = Vec::new();
    for c in cluster_covectors(&points, SUBDIFF_CLUSTER_RADIUS) {
        let rep = &members[c.rep];
        let mut zeta = rep.zeta.clone();
        if rep.source > 0.0 {
            if let Some(m) = solve_from(&shooter.system, x, &rep.p0, &config) {
                if (m.cost - centre.value).abs() <= tol {
                    zeta = m.zeta();
                }
            }
        }
        let weight = c.size as f64 / total;
        match clusters
            .iter_mut()
            .find(|k| k.zeta.distance(&zeta) <= SUBDIFF_CLUSTER_RADIUS)
        {
            Some(k) => k.weight += weight,
            None => clusters.push(WeightedCovector { zeta, weight }),
        }
    }
    Ok(SubdifferentialEstimate {
        x: x.clone(),
        value: centre.value,
        differentiable: clusters.len() == 1,
        clusters,
    })
}

struct Member {
    zeta: CoVector,
    p0: CoVector,
    source: f64,
}

fn optimal_members(set: &MinimizerSet, config: &ShootingConfig, source: f64) -> Vec<Member> {
    let zetas = gradient_of(set, config).covectors();
    set.optimal()
        .zip(zetas)
        .map(|(c, zeta)| Member {
            zeta,
            p0: c.p0.clone(),
            source,
        })
        .collect()
}

struct Cluster {
    rep: usize,
    size: usize,
}

fn cluster_covectors(members: &[(CoVector, f64)], radius: f64) -> Vec<Cluster> {
    // union-find over the single-link graph
    let k = members.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..k {
        for b in a + 1..k {
            if members[a].0.distance(&members[b].0) <= radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb.max(ra)] = ra.min(rb);
                }
            }
        }
    }
    let mut out: Vec<(usize, Cluster)> = Vec::new();
    for i in 0..k {
        let root = find(&mut parent, i);
        match out.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => {
                c.size += 1;
                if members[i].1 < members[c.rep].1 {
                    c.rep = i;
                }
            }
            None => out.push((root, Cluster { rep: i, size: 1 })),
        }
    }
    out.into_iter().map(|(_, c)| c).collect()
}

/// `|−½V(x) + H(x, ½ζ)|` for each cluster.
pub fn cluster_hj_residuals(system: &SubRiemannianSystem, est: &SubdifferentialEstimate) -> Result<Vec<f64>> {
    est.clusters
        .iter()
        .map(|c| {
            let half = c.zeta.scaled(0.5);
            Ok((-0.5 * est.value + system.frame.hamiltonian(&est.x, &half)?).abs())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocusKind {
    SingularSet,
    Cut,
    ConjugateMin,
}

impl LocusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LocusKind::SingularSet => "singular_set",
            LocusKind::Cut => "cut",
            LocusKind::ConjugateMin => "conjugate_min",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocusEstimate {
    pub kind: LocusKind,
    pub points: Vec<Point>,
    pub detection_radius: f64,
}

impl LocusEstimate {
    pub fn empty(kind: LocusKind, detection_radius: f64) -> Self {
        Self {
            kind,
            points: Vec::new(),
            detection_radius,
        }
    }

    /// Chart distance from `x` to the point cloud (∞ when empty).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.points.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min)
    }
}

/// Shooting solution at one lattice node.
#[derive(Clone, Debug, Serialize)]
pub struct NodeSolution {
    pub x: Point,
    pub value: f64,
    pub multiplicity: usize,
    pub sigma_min: f64,
    /// Tie-broken `ζ = 2p(1)` and its initial covector.
    pub zeta: CoVector,
    pub p0: CoVector,
    pub conjugate: bool,
}

impl NodeSolution {
    fn from_set(set: &MinimizerSet, config: &ShootingConfig) -> Self {
        let best = set.selected();
        Self {
            x: set.target.clone(),
            value: set.value,
            multiplicity: set.multiplicity,
            sigma_min: best.relative_sigma(),
            zeta: best.zeta(),
            p0: best.p0.clone(),
            conjugate: set.value > 0.0 && best.is_conjugate(config.conjugate_threshold),
        }
    }
}

/// Lattice nodes of `bounds` with spacing `h`, in boustrophedon order,
/// minus the ball of radius `exclusion` around `x̄`.
pub fn sweep_nodes(bounds: &ChartBox, h: f64, base: &Point, exclusion: f64) -> Vec<Point> {
    let n = bounds.dim();
    let counts: Vec<usize> = (0..n)
        .map(|k| ((bounds.hi[k] - bounds.lo[k]) / h + 1e-9).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        // reflect lower axes whenever a higher axis index is odd
        let mut coord = vec![0.0; n];
        let mut flip = false;
        for k in (0..n).rev() {
            let i = if flip { counts[k] - 1 - idx[k] } else { idx[k] };
            coord[k] = bounds.lo[k] + i as f64 * h;
            flip ^= i % 2 == 1;
        }
        if dist(&coord, base) > exclusion {
            out.push(Point(coord));
        }
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Warm-started shooting over a node list. Nodes the shooter cannot resolve
/// are left out; callers compare lengths to count them.
pub fn sweep_grid(shooter: &mut WarmShooter, nodes: &[Point]) -> Result<Vec<NodeSolution>> {
    let config = shooter.config.clone();
    let mut out = Vec::with_capacity(nodes.len());
    for x in nodes {
        match shooter.solve(x) {
            Ok(set) => out.push(NodeSolution::from_set(&set, &config)),
            Err(Error::UnresolvedTarget { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Gradient jumps above this multiple of the median adjacent jump are
/// candidates for a discontinuity.
pub const JUMP_FACTOR: f64 = 10.0;
/// Bisection levels used to confirm a candidate jump.
pub const JUMP_LEVELS: usize = 7;

/// Nodes with several co-optimal clusters, or on either side of a confirmed
/// gradient discontinuity.
///
/// A candidate jump between adjacent nodes is bisected `JUMP_LEVELS` times,
/// following the half with the larger jump. A smooth but steep gradient
/// loses its jump linearly with the spacing; a discontinuity keeps at least
/// half of it.
pub fn singular_from_grid(shooter: &mut WarmShooter, grid: &[NodeSolution], h: f64) -> Result<LocusEstimate> {
    let mut flagged: Vec<bool> = grid.iter().map(|n| n.multiplicity >= 2).collect();
    let pairs = adjacent_pairs(grid, h);
    let jumps: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| grid[a].zeta.distance(&grid[b].zeta))
        .collect();
    if !jumps.is_empty() {
        let mut sorted = jumps.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        for (&(a, b), &j) in pairs.iter().zip(&jumps) {
            if j > JUMP_FACTOR * median && !(flagged[a] && flagged[b]) && confirm_jump(shooter, &grid[a], &grid[b])? {
                flagged[a] = true;
                flagged[b] = true;
            }
        }
    }
    Ok(LocusEstimate {
        kind: LocusKind::SingularSet,
        points: grid
            .iter()
            .zip(&flagged)
            .filter(|(_, f)| **f)
            .map(|(n, _)| n.x.clone())
            .collect(),
        detection_radius: h,
    })
}

fn confirm_jump(shooter: &mut WarmShooter, a: &NodeSolution, b: &NodeSolution) -> Result<bool> {
    let config = shooter.config.clone();
    let jump = a.zeta.distance(&b.zeta);
    let (mut lo, mut hi) = (
        (a.x.clone(), a.zeta.clone(), a.p0.clone()),
        (b.x.clone(), b.zeta.clone(), b.p0.clone()),
    );
    for _ in 0..JUMP_LEVELS {
        let mid = Point(lo.0.iter().zip(hi.0.iter()).map(|(u, v)| 0.5 * (u + v)).collect());
        shooter.set_hints(vec![lo.2.clone(), hi.2.clone()]);
        let node = match shooter.solve(&mid) {
            Ok(set) => NodeSolution::from_set(&set, &config),
            // an unresolved midpoint cannot confirm anything
            Err(Error::UnresolvedTarget { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        let m = (mid, node.zeta, node.p0);
        if lo.1.distance(&m.1) >= m.1.distance(&hi.1) {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(lo.1.distance(&hi.1) >= 0.5 * jump)
}

fn adjacent_pairs(grid: &[NodeSolution], h: f64) -> Vec<(usize, usize)> {
    use std::collections::HashMap;
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / h).round() as i64).collect() };
    let index: HashMap<Vec<i64>, usize> = grid.iter().enumerate().map(|(k, n)| (key(&n.x), k)).collect();
    let mut out = Vec::new();
    for (a, node) in grid.iter().enumerate() {
        let ka = key(&node.x);
        for axis in 0..ka.len() {
            let mut kb = ka.clone();
            kb[axis] += 1;
            if let Some(&b) = index.get(&kb) {
                out.push((a, b));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct LociReport {
    pub singular: LocusEstimate,
    pub cut: LocusEstimate,
    pub conjugate_min: LocusEstimate,
    /// Largest distance from a minimizing-conjugate node to the cut estimate.
    pub conjugate_to_cut: f64,
    /// `conjugate_min ⊂ cut` up to a `2h` dilation.
    pub inclusion_holds: bool,
}

/// Cut locus estimate `closure(Σ) \ {x̄}`, here the singular-set point
/// cloud itself, and the minimizing-conjugate nodes.
pub fn loci_from_grid(shooter: &mut WarmShooter, grid: &[NodeSolution], h: f64) -> Result<LociReport> {
    let singular = singular_from_grid(shooter, grid, h)?;
    let cut = LocusEstimate {
        kind: LocusKind::Cut,
        ..singular.clone()
    };
    let conjugate_min = LocusEstimate {
        kind: LocusKind::ConjugateMin,
        points: grid.iter().filter(|n| n.conjugate).map(|n| n.x.clone()).collect(),
        detection_radius: h,
    };
    let conjugate_to_cut = conjugate_min
        .points
        .iter()
        .map(|p| cut.distance_to(p))
        .fold(0.0, f64::max);
    Ok(LociReport {
        inclusion_holds: conjugate_to_cut <= 2.0 * h,
        singular,
        cut,
        conjugate_min,
        conjugate_to_cut,
    })
}

/// Sweeps the lattice of `bounds` and returns the singular-set estimate.
pub fn estimate_singular_set(system: &SubRiemannianSystem, bounds: &ChartBox, h: f64) -> Result<LocusEstimate> {
    Ok(estimate_cut_and_conjugate(system, bounds, h)?.singular)
}

/// Sweeps the lattice of `bounds` and returns all three loci.
pub fn estimate_cut_and_conjugate(system: &SubRiemannianSystem, bounds: &ChartBox, h: f64) -> Result<LociReport> {
    let mut shooter = WarmShooter::new(system.clone(), ShootingConfig::for_system(system));
    let nodes = sweep_nodes(bounds, h, &system.base, 2.0 * h);
    let grid = sweep_grid(&mut shooter, &nodes)?;
    loci_from_grid(&mut shooter, &grid, h)
}

/// Box-counting dimension: least-squares slope of `log N(s)` against
/// `log(1/s)` over the given scales.
pub fn box_counting_dimension(points: &[Point], scales: &[f64]) -> f64 {
    use std::collections::HashSet;
    if points.is_empty() || scales.len() < 2 {
        return 0.0;
    }
    let samples: Vec<(f64, f64)> = scales
        .iter()
        .map(|&s| {
            let boxes: HashSet<Vec<i64>> = points
                .iter()
                .map(|p| p.iter().map(|v| (v / s).floor() as i64).collect())
                .collect();
            ((1.0 / s).ln(), (boxes.len() as f64).ln())
        })
        .collect();
    let k = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / k;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::builtin_system;

    #[test]
    fn quadratic_semiconcavity_constant_is_one() {
        let base = Point::zeros(2);
        let region = Region::Box(ChartBox::cube(2, 2.0));
        let triples = semiconcavity_triples(&region, &base, 500, 1);
        let mut v = |x: &Point| Ok(x.norm().powi(2));
        let rep = semiconcavity_probe(&mut v, &triples, Some(1.0 + 1e-6)).unwrap();
        assert!((rep.fitted_c - 1.0).abs() < 1e-6, "{}", rep.fitted_c);
        assert_eq!(rep.violations, Some(0));
        let mut c = |_: &Point| Ok(3.0);
        assert_eq!(semiconcavity_probe(&mut c, &triples, None).unwrap().fitted_c, 0.0);
    }

    #[test]
    fn paraboloids() {
        let x = Point::from([0.5, -1.0]);
        let z = CoVector::from([1.0, -2.0]);
        let mut v = |y: &Point| Ok(y.norm().powi(2));
        let p = upper_lower_paraboloid_probe(&mut v, &x, &z, 0.1, 1.0, 3).unwrap();
        assert!(p.upper && p.lower);
        let p = upper_lower_paraboloid_probe(&mut v, &x, &z, 0.1, 0.0, 3).unwrap();
        assert!(!p.upper && p.lower);
    }

    #[test]
    fn euclidean_subdifferential_is_the_gradient() {
        let e = builtin_system("euclidean-2").unwrap();
        let mut s = WarmShooter::new(e.clone(), ShootingConfig::default());
        let x = Point::from([0.7, -0.4]);
        let est = limiting_subdifferential(&mut s, &x, PROBE_RADIUS, PROBE_COUNT, 2).unwrap();
        assert!(est.differentiable);
        assert!(est.clusters[0].zeta.distance(&CoVector::from([1.4, -0.8])) < 1e-8);
        assert!(cluster_hj_residuals(&e, &est).unwrap()[0] < 1e-9);
    }

    #[test]
    fn heisenberg_axis_has_several_clusters() {
        let h = builtin_system("heisenberg").unwrap();
        let mut s = WarmShooter::new(h.clone(), ShootingConfig::default());
        let x = Point::from([0.0, 0.0, 0.5]);
        let est = limiting_subdifferential(&mut s, &x, PROBE_RADIUS, PROBE_COUNT, 2).unwrap();
        assert!(!est.differentiable && est.clusters.len() >= 2);
        for r in cluster_hj_residuals(&h, &est).unwrap() {
            assert!(r < 1e-3, "{r}");
        }
    }

    #[test]
    fn euclidean_loci_are_empty() {
        let e = builtin_system("euclidean-2").unwrap();
        let rep = estimate_cut_and_conjugate(&e, &ChartBox::cube(2, 1.0), 0.25).unwrap();
        assert!(rep.singular.points.is_empty(), "{:?}", rep.singular.points);
        assert!(rep.conjugate_min.points.is_empty());
        assert!(rep.inclusion_holds);
    }

    #[test]
    fn sweep_order_is_adjacent() {
        let nodes = sweep_nodes(&ChartBox::cube(3, 1.0), 0.5, &Point::from([5.0, 5.0, 5.0]), 0.1);
        assert_eq!(nodes.len(), 125);
        for w in nodes.windows(2) {
            assert!((w[0].distance(&w[1]) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn box_counting_of_a_line_and_a_plane() {
        let line: Vec<Point> = (0..256).map(|k| Point::from([k as f64 / 256.0, 0.3, 0.3])).collect();
        let d = box_counting_dimension(&line, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
        assert!((d - 1.0).abs() < 0.05, "{d}");
        let plane: Vec<Point> = (0..4096)
            .map(|k| Point::from([(k % 64) as f64 / 64.0, (k / 64) as f64 / 64.0, 0.3]))
            .collect();
        let d = box_counting_dimension(&plane, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
        assert!((d - 2.0).abs() < 0.05, "{d}");
    }
}
