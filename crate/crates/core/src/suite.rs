//! The property checks shared by the `full-suite` job and the acceptance
//! tests. Every check reports a measured value, its threshold, and where
//! the baseline comes from.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{builtin_system, dist, ChartBox, CoVector, Point, SubRiemannianSystem};
use crate::error::Result;
use crate::extremal::{integrate_extremal, path_energy_and_length};
use crate::feedback::{decay_check, martinet_modified_system, FeedbackConfig, FeedbackField};
use crate::nonsmooth::{
    box_counting_dimension, cluster_hj_residuals, estimate_cut_and_conjugate, limiting_subdifferential,
    refine_semiconcavity, semiconcavity_probe, semiconcavity_triples, LociReport, LocusEstimate, Region, PROBE_COUNT,
    PROBE_RADIUS,
};
use crate::oracle::{fd_gradient, ValueOracle};
use crate::reference::heisenberg_distance;
use crate::shooting::{random_unit, shoot_with, ShootingConfig, WarmShooter};

/// Origin of a baseline number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Exact formula (Euclidean distance, Heisenberg closed form, symmetry).
    ClosedForm,
    /// Independent graph + transcription estimate.
    Oracle,
    /// Identity that holds exactly; the threshold is a numerical tolerance.
    Tolerance,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::ClosedForm => "closed-form",
            Baseline::Oracle => "oracle",
            Baseline::Tolerance => "tolerance",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: String,
    pub system: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub baseline: Baseline,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub(crate) fn new(id: u8, name: &str, system: &str, measured: f64, threshold: f64, baseline: Baseline) -> Self {
        Self {
            id,
            name: name.into(),
            system: system.into(),
            measured,
            threshold,
            pass: measured <= threshold,
            baseline,
            detail: String::new(),
            seconds: 0.0,
        }
    }

    pub(crate) fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub(crate) fn timed(mut self, start: Instant) -> Self {
        self.seconds = start.elapsed().as_secs_f64();
        self
    }

    /// Fails the check when a precondition could not be met.
    pub(crate) fn require(mut self, ok: bool, why: &str) -> Self {
        if !ok {
            self.pass = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(why);
        }
        self
    }

    /// Fails the check when it ran longer than `seconds`; call after `timed`.
    pub(crate) fn within(self, seconds: f64) -> Self {
        let over = self.seconds > seconds;
        self.require(!over, &format!("over the {seconds} s budget"))
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {:<18} measured {:.3e} threshold {:.3e} ({}){}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.system,
            self.measured,
            self.threshold,
            self.baseline.as_str(),
            if self.detail.is_empty() { "" } else { "  " },
            self.detail
        )
    }
}

/// Sample sizes and tolerances. Defaults are the acceptance values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSizes {
    pub extremals: usize,
    pub extremal_steps: usize,
    pub reparam_extremals: usize,
    pub closed_form_targets: usize,
    pub oracle_targets: usize,
    pub oracle_h: f64,
    pub calibration_targets: usize,
    pub hj_points: usize,
    pub gradient_targets: usize,
    pub gradient_step: f64,
    pub triples: usize,
    pub refine_budget: usize,
    pub loci_h: f64,
    pub loci_half_width: f64,
    pub srs_seeds: usize,
    pub srs_seeds_on_s: usize,
    pub horizon: f64,
    pub closed_loop_dt: f64,
    pub closed_loop_fine_dt: f64,
    pub martinet_seeds: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            extremals: 50,
            extremal_steps: 1000,
            reparam_extremals: 20,
            closed_form_targets: 100,
            oracle_targets: 50,
            oracle_h: 0.05,
            calibration_targets: 24,
            hj_points: 50,
            gradient_targets: 20,
            gradient_step: 1e-4,
            triples: 10_000,
            refine_budget: 300,
            loci_h: 0.1,
            loci_half_width: 1.0,
            srs_seeds: 100,
            srs_seeds_on_s: 10,
            horizon: 6.0,
            closed_loop_dt: 1e-2,
            closed_loop_fine_dt: 1e-3,
            martinet_seeds: 10,
        }
    }
}

impl SuiteSizes {
    /// A reduced suite for quick runs.
    pub fn quick() -> Self {
        Self {
            extremals: 10,
            reparam_extremals: 5,
            closed_form_targets: 20,
            oracle_targets: 5,
            oracle_h: 0.1,
            calibration_targets: 6,
            hj_points: 5,
            gradient_targets: 5,
            triples: 300,
            refine_budget: 60,
            loci_h: 0.25,
            srs_seeds: 6,
            srs_seeds_on_s: 2,
            martinet_seeds: 2,
            ..Self::default()
        }
    }

    fn closed_loop(&self) -> FeedbackConfig {
        FeedbackConfig {
            dt: self.closed_loop_dt,
            fine_dt: self.closed_loop_fine_dt,
            early_time: 0.1,
            ..FeedbackConfig::default()
        }
    }
}

fn rng_for(seed: u64, check: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(check as u64))
}

/// Uniform covector in the ball of radius `r`.
fn covector_in_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> CoVector {
    let s = r * rng.gen::<f64>().powf(1.0 / n as f64);
    CoVector(random_unit(rng, n).into_iter().map(|v| v * s).collect())
}

/// Uniform point in `[-half, half]^n` around `x̄`, at least `min_dist` away.
fn sample_point(rng: &mut ChaCha8Rng, base: &Point, half: f64, min_dist: f64) -> Point {
    loop {
        let x = Point(base.iter().map(|b| b + rng.gen_range(-half..half)).collect());
        if dist(&x, base) >= min_dist {
            return x;
        }
    }
}

fn names(systems: &[SubRiemannianSystem]) -> String {
    systems.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(",")
}

/// Extremals from random `‖p0‖ ≤ 3` over `[0, 1]`, per system. Draws whose
/// extremal leaves the chart are redrawn; their count is returned.
fn extremal_batch<F>(systems: &[SubRiemannianSystem], sizes: &SuiteSizes, seed: u64, mut each: F) -> Result<usize>
where
    F: FnMut(&SubRiemannianSystem, &crate::extremal::Extremal),
{
    let mut rng = rng_for(seed, 1);
    let mut escaped = 0;
    for sys in systems {
        let mut kept = 0;
        while kept < sizes.extremals {
            let p0 = covector_in_ball(&mut rng, sys.dim(), 3.0);
            match integrate_extremal(&sys.frame, &sys.base, &p0, 1.0, sizes.extremal_steps) {
                Ok(e) => {
                    each(sys, &e);
                    kept += 1;
                }
                Err(crate::Error::Escape { .. }) if escaped < 10 * sizes.extremals => escaped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(escaped)
}

/// Check 1: `max |H(ψ(t)) − H(ψ(0))|`.
pub fn energy_conservation(systems: &[SubRiemannianSystem], sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let escaped = extremal_batch(systems, sizes, seed, |sys, e| {
        worst = worst.max(e.max_energy_drift(&sys.frame))
    })?;
    Ok(CheckResult::new(
        1,
        "energy conservation",
        &names(systems),
        worst,
        1e-8,
        Baseline::Tolerance,
    )
    .detail(format!(
        "{} in-chart extremals per system, {escaped} redrawn",
        sizes.extremals
    ))
    .timed(start)
    .within(5.0))
}

/// Check 2: `|L − √(2 H0)|` for unit-time extremals.
pub fn length_identity(systems: &[SubRiemannianSystem], sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let escaped = extremal_batch(systems, sizes, seed, |sys, e| {
        let (_, l) = path_energy_and_length(&sys.frame, e);
        worst = worst.max((l - (2.0 * e.energy0).sqrt()).abs());
    })?;
    Ok(
        CheckResult::new(2, "length identity", &names(systems), worst, 1e-6, Baseline::Tolerance)
            .detail(format!("{escaped} draws redrawn after leaving the chart"))
            .timed(start),
    )
}

/// Check 3: Euclidean closed forms: `V = |x − x̄|²`, `X = −(x − x̄)`, exact decay.
pub fn euclidean_closed_form(system: &SubRiemannianSystem, sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = rng_for(seed, 3);
    let fb = FeedbackField::without_singular_set(system.clone());
    let mut selector = fb.selector();
    let (mut dv, mut dx) = (0.0f64, 0.0f64);
    for _ in 0..sizes.closed_form_targets {
        let x = sample_point(&mut rng, &system.base, 2.0, 0.0);
        let s = selector.select(&x, None)?;
        let d = dist(&x, &system.base);
        dv = dv.max((s.value - d * d).abs());
        for (v, (a, b)) in s.velocity.iter().zip(x.iter().zip(system.base.iter())) {
            dx = dx.max((v + (a - b)).abs());
        }
    }
    let mut x0 = system.base.clone();
    x0[0] += 1.0;
    let traj = fb.integrate_closed_loop(&x0, 3.0)?;
    let decay = decay_check(&traj);
    let measured = (dv / 1e-6).max(dx / 1e-8).max(decay / 1e-5);
    Ok(CheckResult::new(3, "euclidean closed form", &system.name, measured, 1.0, Baseline::ClosedForm)
        .detail(format!(
            "|V-|x|^2| {dv:.1e} (tol 1e-6), |X+x| {dx:.1e} (tol 1e-8), decay {decay:.1e} (tol 1e-5); measured is the worst ratio"
        ))
        .timed(start).within(10.0))
}

/// Check 4: `p̃ᵗ(s) = t p(st)` for the extremal from `t p0`.
pub fn reparametrization(systems: &[SubRiemannianSystem], sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = rng_for(seed, 4);
    let steps = sizes.extremal_steps;
    let mut worst = 0.0f64;
    let mut redrawn = 0;
    for sys in systems {
        let mut kept = 0;
        while kept < sizes.reparam_extremals {
            let p0 = covector_in_ball(&mut rng, sys.dim(), 3.0);
            // draws leaving the chart before t = 1 are replaced
            match integrate_extremal(&sys.frame, &sys.base, &p0, 1.0, steps) {
                Err(crate::Error::Escape { .. }) if redrawn < 10 * sizes.reparam_extremals => {
                    redrawn += 1;
                    continue;
                }
                r => r?,
            };
            kept += 1;
            for t in [0.25, 0.5, 0.75] {
                let orig = integrate_extremal(&sys.frame, &sys.base, &p0, t, steps)?;
                let scaled = integrate_extremal(&sys.frame, &sys.base, &p0.scaled(t), 1.0, steps)?;
                for (a, b) in orig.states.iter().zip(&scaled.states) {
                    for (pa, pb) in a.p.iter().zip(b.p.iter()) {
                        worst = worst.max((t * pa - pb).abs());
                    }
                    worst = worst.max(dist(&a.x, &b.x));
                }
            }
        }
    }
    Ok(CheckResult::new(
        4,
        "reparametrization law",
        &names(systems),
        worst,
        1e-7,
        Baseline::Tolerance,
    )
    .detail(format!(
        "{} in-chart extremals per system, {redrawn} redrawn",
        sizes.reparam_extremals
    ))
    .timed(start))
}

/// Heisenberg closed-form references for oracle calibration: random
/// targets plus targets near the vertical axis, where the oracle is
/// least accurate.
pub fn calibration_references(count: usize, half: f64, seed: u64) -> Vec<(Point, f64)> {
    let mut rng = rng_for(seed, 50);
    let base = Point::zeros(3);
    (0..count)
        .map(|k| {
            let x = if k % 4 == 3 {
                let z = rng.gen_range(0.3..half) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Point(vec![rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), z])
            } else {
                sample_point(&mut rng, &base, half, 0.2)
            };
            let d = heisenberg_distance(x[0], x[1], x[2]);
            (x, d)
        })
        .collect()
}

/// Calibrated error constant `c` for oracles of spacing `h`.
pub fn calibrated_error_constant(h: f64, half: f64, references: usize, seed: u64) -> Result<f64> {
    let heis = builtin_system("heisenberg")?;
    let mut oracle = ValueOracle::new(&heis, h, &ChartBox::cube(3, 1.5 * half))?;
    oracle.calibrate(&calibration_references(references, half, seed))
}

/// Check 5: `|√V_shoot − d̂| ≤ error_bound` at multiplicity-1 targets.
pub fn oracle_agreement(system: &SubRiemannianSystem, sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let half = 1.0;
    let c = calibrated_error_constant(sizes.oracle_h, half, sizes.calibration_targets, seed)?;
    let mut oracle = ValueOracle::new(system, sizes.oracle_h, &ChartBox::cube(system.dim(), 1.5 * half))?;
    oracle.config.error_constant = c;
    let bound = oracle.error_bound();
    let config = ShootingConfig::for_system(system);
    let mut rng = rng_for(seed, 5);
    let (mut worst, mut used, mut drawn) = (0.0f64, 0, 0);
    while used < sizes.oracle_targets && drawn < 20 * sizes.oracle_targets {
        drawn += 1;
        let x = sample_point(&mut rng, &system.base, half, 0.1);
        let Ok(set) = shoot_with(system, &x, &config, &[]) else {
            continue;
        };
        if set.multiplicity != 1 || set.selected().is_conjugate(config.conjugate_threshold) {
            continue;
        }
        let (d, _) = oracle.distance(&x)?;
        worst = worst.max((set.value.sqrt() - d).abs());
        used += 1;
    }
    Ok(
        CheckResult::new(5, "oracle agreement", &system.name, worst, bound, Baseline::Oracle)
            .detail(format!("h {}, calibrated c {c:.4}, {used} targets", sizes.oracle_h))
            .require(used == sizes.oracle_targets, "not enough multiplicity-1 targets")
            .timed(start)
            .within(180.0),
    )
}

/// Check 6: `|−½V + H(x, ½ζ)|` over every subdifferential cluster.
pub fn hj_identity(systems: &[SubRiemannianSystem], sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = rng_for(seed, 6);
    let mut worst = 0.0f64;
    let mut clusters = 0;
    let mut short = Vec::new();
    for sys in systems {
        let mut shooter = WarmShooter::new(sys.clone(), ShootingConfig::for_system(sys));
        let (mut used, mut drawn) = (0, 0);
        while used < sizes.hj_points && drawn < 4 * sizes.hj_points {
            drawn += 1;
            let x = sample_point(&mut rng, &sys.base, 1.0, 0.1);
            let est = match limiting_subdifferential(&mut shooter, &x, PROBE_RADIUS, PROBE_COUNT, drawn as u64) {
                Ok(e) => e,
                Err(crate::Error::UnresolvedTarget { .. }) => continue,
                Err(e) => return Err(e),
            };
            for r in cluster_hj_residuals(sys, &est)? {
                worst = worst.max(r.abs());
                clusters += 1;
            }
            used += 1;
        }
        if used < sizes.hj_points {
            short.push(sys.name.clone());
        }
    }
    Ok(CheckResult::new(
        6,
        "hamilton-jacobi identity",
        &names(systems),
        worst,
        1e-3,
        Baseline::Tolerance,
    )
    .detail(format!("{clusters} clusters"))
    .require(short.is_empty(), &format!("unresolved points on {}", short.join(",")))
    .timed(start))
}

/// Check 7: `ζ = 2p(1)` against central differences of `V`.
pub fn terminal_gradient(system: &SubRiemannianSystem, sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let config = ShootingConfig::for_system(system);
    let mut shooter = WarmShooter::new(system.clone(), config.clone());
    let mut rng = rng_for(seed, 7);
    let (mut worst, mut used, mut drawn) = (0.0f64, 0, 0);
    while used < sizes.gradient_targets && drawn < 20 * sizes.gradient_targets {
        drawn += 1;
        let x = sample_point(&mut rng, &system.base, 1.0, 0.2);
        let Ok(set) = shooter.cold(&x) else { continue };
        let best = set.selected();
        if set.multiplicity != 1 || best.relative_sigma() < 1e-3 {
            continue;
        }
        let zeta = best.zeta();
        let fd = fd_gradient(&mut shooter, &x, sizes.gradient_step)?;
        worst = worst.max(
            zeta.iter()
                .zip(fd.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        used += 1;
    }
    Ok(CheckResult::new(
        7,
        "terminal-covector gradient",
        &system.name,
        worst,
        1e-3,
        Baseline::Tolerance,
    )
    .detail(format!("{used} targets, step {:.0e}", sizes.gradient_step))
    .require(used == sizes.gradient_targets, "not enough multiplicity-1 targets")
    .timed(start))
}

/// Check 8: Semiconcavity in the annulus `0.3 ≤ |x − x̄| ≤ 1.5`: the constant
/// fitted on one seed must hold on the other's triples, and the two fits
/// must agree within 1.1×.
pub fn semiconcavity(system: &SubRiemannianSystem, sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let region = Region::Annulus {
        center: system.base.clone(),
        inner: 0.3,
        outer: 1.5,
    };
    let mut config = ShootingConfig::for_system(system);
    config.steps = 100;
    let mut fits = Vec::new();
    let mut triples = Vec::new();
    for s in [seed, seed + 1] {
        let mut shooter = WarmShooter::new(system.clone(), config.clone());
        let t = semiconcavity_triples(&region, &system.base, sizes.triples, rng_for(s, 8).gen());
        let report = semiconcavity_probe(&mut shooter, &t, None)?;
        fits.push(refine_semiconcavity(
            &mut shooter,
            &region,
            &system.base,
            &report,
            sizes.refine_budget,
        )?);
        triples.push(t);
    }
    let mut shooter = WarmShooter::new(system.clone(), config);
    let cross = semiconcavity_probe(&mut shooter, &triples[1], Some(fits[0]))?;
    let violations = cross.violations.unwrap_or(0);
    let ratio = fits[0].max(fits[1]) / fits[0].min(fits[1]).max(1e-300);
    Ok(
        CheckResult::new(8, "semiconcavity", &system.name, ratio, 1.1, Baseline::Tolerance)
            .detail(format!(
                "C {:.4} / {:.4}, {violations} violations of the first on the second seed's {} triples",
                fits[0], fits[1], sizes.triples
            ))
            .require(violations == 0, "fitted constant violated")
            .timed(start),
    )
}

/// Distance to the known singular set, where one is known.
pub fn reference_singular_distance(system: &SubRiemannianSystem, x: &[f64]) -> Option<f64> {
    match system.name.as_str() {
        "heisenberg" => Some((x[0] - system.base[0]).hypot(x[1] - system.base[1])),
        _ => None,
    }
}

/// Singular, cut and minimizing-conjugate loci on `[-w, w]^n` around `x̄`.
pub fn loci(system: &SubRiemannianSystem, sizes: &SuiteSizes) -> Result<LociReport> {
    let bounds = ChartBox::new(
        system.base.iter().map(|b| b - sizes.loci_half_width).collect(),
        system.base.iter().map(|b| b + sizes.loci_half_width).collect(),
    )?;
    estimate_cut_and_conjugate(system, &bounds, sizes.loci_h)
}

/// Check 9: Minimizing-conjugate points within `2h` of the cut estimate, and the
/// singular estimate within `2h` of the known singular set.
pub fn conjugate_in_cut(system: &SubRiemannianSystem, loci: &LociReport, sizes: &SuiteSizes) -> CheckResult {
    let start = Instant::now();
    let h = sizes.loci_h;
    let reference = loci
        .singular
        .points
        .iter()
        .filter_map(|p| reference_singular_distance(system, p))
        .fold(0.0, f64::max);
    let measured = loci.conjugate_to_cut.max(reference);
    let known = reference_singular_distance(system, &system.base).is_some();
    let euclidean = system.name.starts_with("euclidean-");
    CheckResult::new(
        9,
        "conjugate within cut",
        &system.name,
        measured,
        2.0 * h,
        Baseline::ClosedForm,
    )
    .detail(format!(
        "{} singular, {} conjugate points; conj-to-cut {:.3e}, singular-to-reference {:.3e}",
        loci.singular.points.len(),
        loci.conjugate_min.points.len(),
        loci.conjugate_to_cut,
        reference
    ))
    .require(!known || !loci.singular.points.is_empty(), "empty singular estimate")
    .require(
        !euclidean || loci.singular.points.is_empty(),
        "spurious singular points",
    )
    .timed(start)
}

/// Check 10: Closed-loop behaviour from random seeds and seeds on `S`: decay law,
/// convergence by the horizon, and repulsion from `S` after `t = 0.05`.
pub fn srs_behavior(
    system: &SubRiemannianSystem,
    singular: &LocusEstimate,
    sizes: &SuiteSizes,
    seed: u64,
) -> Result<CheckResult> {
    let start = Instant::now();
    let fb = FeedbackField::new(system.clone(), singular.clone()).with_config(sizes.closed_loop());
    let mut rng = rng_for(seed, 10);
    let on_s = sizes.srs_seeds_on_s.min(singular.points.len());
    let mut seeds: Vec<Point> = (0..on_s)
        .map(|k| singular.points[k * singular.points.len() / on_s.max(1)].clone())
        .collect();
    while seeds.len() < sizes.srs_seeds {
        seeds.push(sample_point(&mut rng, &system.base, 1.0, 0.1));
    }
    let (mut decay, mut convergence, mut repulsion) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut reference_repulsion = f64::INFINITY;
    for x0 in &seeds {
        let traj = fb.integrate_closed_loop(x0, sizes.horizon)?;
        decay = decay.max(decay_check(&traj));
        convergence = convergence.max(traj.final_value() / traj.initial_value());
        for (t, x) in traj.times.iter().zip(&traj.points) {
            if *t >= 0.05 {
                repulsion = repulsion.min(singular.distance_to(x));
                if let Some(d) = reference_singular_distance(system, x) {
                    reference_repulsion = reference_repulsion.min(d);
                }
            }
        }
    }
    let measured = (decay / 1e-2).max(convergence / 1e-4);
    Ok(
        CheckResult::new(10, "srs behaviour", &system.name, measured, 1.0, Baseline::Tolerance)
            .detail(format!(
                "{} seeds ({on_s} on S): decay {decay:.2e} (tol 1e-2), V(T)/V0 {convergence:.2e} (tol 1e-4), \
             min dist to S {repulsion:.2e}, to reference set {reference_repulsion:.2e}; measured is the worst ratio",
                seeds.len()
            ))
            .require(repulsion > 0.0 && reference_repulsion > 0.0, "trajectory met S")
            .timed(start)
            .within(300.0),
    )
}

/// Check 11: Modified Martinet closed loop from seeds on `x2 = 0`: the trajectory
/// leaves the surface at once and converges as in check 10.
pub fn martinet_construction(sizes: &SuiteSizes, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let system = martinet_modified_system(&builtin_system("martinet")?)?;
    let surface = LocusEstimate {
        kind: crate::nonsmooth::LocusKind::SingularSet,
        points: Vec::new(),
        detection_radius: 0.0,
    };
    let fb = FeedbackField::new(system.clone(), surface).with_config(sizes.closed_loop());
    let mut rng = rng_for(seed, 11);
    let (mut decay, mut convergence, mut off) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..sizes.martinet_seeds {
        let x0 = loop {
            let x = Point(vec![rng.gen_range(-1.0..1.0), 0.0, rng.gen_range(-0.3..0.3)]);
            if dist(&x, &system.base) > 0.2 {
                break x;
            }
        };
        let traj = fb.integrate_closed_loop(&x0, sizes.horizon)?;
        decay = decay.max(decay_check(&traj));
        convergence = convergence.max(traj.final_value() / traj.initial_value());
        for (t, x) in traj.times.iter().zip(&traj.points) {
            if *t > 0.0 && *t <= 0.05 {
                off = off.min(x[1].abs());
            }
        }
    }
    let measured = (decay / 1e-2).max(convergence / 1e-4);
    Ok(CheckResult::new(
        11,
        "martinet construction",
        &system.name,
        measured,
        1.0,
        Baseline::Tolerance,
    )
    .detail(format!(
        "{} seeds on x2 = 0: min |x2| on (0, 0.05] {off:.2e}, decay {decay:.2e}, V(T)/V0 {convergence:.2e}; \
             measured is the worst ratio",
        sizes.martinet_seeds
    ))
    .require(off > 0.0, "trajectory stayed on the surface")
    .timed(start))
}

/// Check 12: Box-counting dimension of the singular estimate at scales `2h, 4h, 8h`.
pub fn dimension_probe(system: &SubRiemannianSystem, loci: &LociReport, sizes: &SuiteSizes) -> CheckResult {
    let start = Instant::now();
    let h = sizes.loci_h;
    let dim = box_counting_dimension(&loci.singular.points, &[2.0 * h, 4.0 * h, 8.0 * h]);
    let bound = system.dim() as f64 - 1.0 + 0.3;
    CheckResult::new(12, "dimension probe", &system.name, dim, bound, Baseline::Tolerance)
        .detail(format!("{} points", loci.singular.points.len()))
        .timed(start)
}

/// A group of checks that runs independently of the others.
pub type CheckTask<'a> = Box<dyn Fn() -> Result<Vec<CheckResult>> + Send + Sync + 'a>;

/// Every check, each on its designated system(s): the extremal identities on
/// `systems`, the closed forms on `euclidean-n`, the Martinet construction
/// on its own frame, and everything else on `target`. Checks 9, 10 and 12
/// share one loci sweep and form a single task.
pub fn check_tasks<'a>(
    target: &'a SubRiemannianSystem,
    systems: &'a [SubRiemannianSystem],
    sizes: &'a SuiteSizes,
    seed: u64,
) -> Result<Vec<CheckTask<'a>>> {
    let euclid = if target.name.starts_with("euclidean-") {
        target.clone()
    } else {
        builtin_system(&format!("euclidean-{}", target.dim()))?
    };
    Ok(vec![
        Box::new(move || Ok(vec![energy_conservation(systems, sizes, seed)?])),
        Box::new(move || Ok(vec![length_identity(systems, sizes, seed)?])),
        Box::new(move || Ok(vec![euclidean_closed_form(&euclid, sizes, seed)?])),
        Box::new(move || Ok(vec![reparametrization(systems, sizes, seed)?])),
        Box::new(move || Ok(vec![oracle_agreement(target, sizes, seed)?])),
        Box::new(move || Ok(vec![hj_identity(systems, sizes, seed)?])),
        Box::new(move || Ok(vec![terminal_gradient(target, sizes, seed)?])),
        Box::new(move || Ok(vec![semiconcavity(target, sizes, seed)?])),
        Box::new(move || {
            let loci = loci(target, sizes)?;
            Ok(vec![
                conjugate_in_cut(target, &loci, sizes),
                srs_behavior(target, &loci.singular, sizes, seed)?,
                dimension_probe(target, &loci, sizes),
            ])
        }),
        Box::new(move || Ok(vec![martinet_construction(sizes, seed)?])),
    ])
}

/// Runs [`check_tasks`] in order, reporting each result as it completes.
pub fn run_all(
    target: &SubRiemannianSystem,
    systems: &[SubRiemannianSystem],
    sizes: &SuiteSizes,
    seed: u64,
    mut report: impl FnMut(&CheckResult),
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::with_capacity(12);
    for task in check_tasks(target, systems, sizes, seed)? {
        for r in task()? {
            report(&r);
            out.push(r);
        }
    }
    out.sort_by_key(|r| r.id);
    Ok(out)
}
