//! Configured experiments: one job per run, CSV artifacts plus a JSON report.
//!
//! Work is split into tiles and seed batches whose boundaries do not depend
//! on the worker count, so artifacts are byte-identical for any `--jobs`.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{builtin_system, ChartBox, CoVector, Point, SubRiemannianSystem, SystemDefinition, BUILTIN_NAMES};
use crate::error::{Error, Result};
use crate::export::{self, to_file};
use crate::extremal::{integrate_extremal, path_energy_and_length, DEFAULT_STEPS};
use crate::feedback::{decay_check, ClosedLoopTrajectory, FeedbackConfig, FeedbackField};
use crate::nonsmooth::{
    loci_from_grid, singular_from_grid, sweep_grid, sweep_nodes, LocusEstimate, LocusKind, NodeSolution,
};
use crate::oracle::{Provenance, ValueGrid, ValueOracle};
use crate::shooting::{ShootingConfig, WarmShooter};
use crate::suite::{self, Baseline, CheckResult, SuiteSizes};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "SRSTAB_OUT";
pub const DEFAULT_OUT: &str = "srstab-out";
/// Lattice nodes per independently warm-started sweep tile.
pub const TILE: usize = 64;

/// A built-in name or an inline definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Name(String),
    Inline(SystemDefinition),
}

impl SystemSpec {
    pub fn build(&self) -> Result<SubRiemannianSystem> {
        match self {
            SystemSpec::Name(name) => builtin_system(name),
            SystemSpec::Inline(def) => def.build(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Geodesic,
    ValueGrid,
    Loci,
    Feedback,
    FullSuite,
}

/// Lattice `[-half_width, half_width]^n + x̄` with spacing `h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    pub half_width: f64,
    /// Where value-grid samples come from.
    pub source: Provenance,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            h: 0.1,
            half_width: 1.0,
            source: Provenance::Shooting,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicSpec {
    pub p0: Vec<f64>,
    pub t: f64,
    pub steps: usize,
}

impl Default for GeodesicSpec {
    fn default() -> Self {
        Self {
            p0: Vec::new(),
            t: 1.0,
            steps: DEFAULT_STEPS,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackSpec {
    /// Explicit initial points.
    pub starts: Vec<Vec<f64>>,
    /// Extra initial points drawn uniformly from the grid box.
    pub random_starts: usize,
    pub horizon: f64,
    pub dt: f64,
    pub fine_dt: f64,
    /// Estimate `S` on the grid before integrating; otherwise `S = {x̄}`.
    pub estimate_singular_set: bool,
}

impl Default for FeedbackSpec {
    fn default() -> Self {
        Self {
            starts: Vec::new(),
            random_starts: 4,
            horizon: 6.0,
            dt: 1e-2,
            fine_dt: 1e-3,
            estimate_singular_set: true,
        }
    }
}

/// Pass thresholds for the geodesic and feedback jobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub energy: f64,
    pub length: f64,
    pub decay: f64,
    pub value_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            energy: 1e-8,
            length: 1e-6,
            decay: 1e-2,
            value_ratio: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub job: JobKind,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub geodesic: GeodesicSpec,
    #[serde(default)]
    pub feedback: FeedbackSpec,
    #[serde(default)]
    pub suite: SuiteSizes,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Resolves the system and checks every numeric setting.
    pub fn validate(&self) -> Result<SubRiemannianSystem> {
        let system = self.system.build()?;
        let t = &self.tolerances;
        let positive = [
            ("grid.h", self.grid.h),
            ("grid.half_width", self.grid.half_width),
            ("geodesic.t", self.geodesic.t),
            ("feedback.horizon", self.feedback.horizon),
            ("feedback.dt", self.feedback.dt),
            ("feedback.fine_dt", self.feedback.fine_dt),
            ("tolerances.energy", t.energy),
            ("tolerances.length", t.length),
            ("tolerances.decay", t.decay),
            ("tolerances.value_ratio", t.value_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let n = system.dim();
        match self.job {
            JobKind::Geodesic if self.geodesic.p0.len() != n => {
                return Err(Error::Config(format!("geodesic.p0 needs {n} entries")));
            }
            JobKind::Feedback => {
                if let Some(x) = self.feedback.starts.iter().find(|x| x.len() != n) {
                    return Err(Error::Config(format!("feedback start {x:?} needs {n} entries")));
                }
            }
            _ => {}
        }
        Ok(system)
    }

    /// Output directory: `SRSTAB_OUT`, then `cli`, then the config, then
    /// [`DEFAULT_OUT`].
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        env::var_os(OUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| cli.map(Path::to_path_buf))
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// A derived number and where it came from.
#[derive(Clone, Debug, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub provenance: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub system: String,
    pub job: JobKind,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub quantities: Vec<Quantity>,
    /// Artifact file names inside the output directory.
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join("report.json");
        fs::create_dir_all(out)?;
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    system: SubRiemannianSystem,
    out: &'a Path,
    checks: Vec<CheckResult>,
    quantities: Vec<Quantity>,
    artifacts: Vec<String>,
}

impl Run<'_> {
    fn artifact(&mut self, name: &str, write: impl FnOnce(fs::File) -> Result<()>) -> Result<()> {
        to_file(&self.out.join(name), write)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn quantity(&mut self, name: impl Into<String>, value: f64, provenance: &'static str) {
        self.quantities.push(Quantity {
            name: name.into(),
            value,
            provenance,
        });
    }

    fn check(&self, name: &str, measured: f64, threshold: f64, baseline: Baseline) -> CheckResult {
        CheckResult::new(0, name, &self.system.name, measured, threshold, baseline)
    }

    /// Appends a check, numbering it in order of appearance.
    fn push(&mut self, mut c: CheckResult) {
        c.id = self.checks.len() as u8 + 1;
        self.checks.push(c);
    }

    fn bounds(&self) -> Result<ChartBox> {
        let w = self.config.grid.half_width;
        let b = ChartBox::new(
            self.system.base.iter().map(|v| v - w).collect(),
            self.system.base.iter().map(|v| v + w).collect(),
        )?;
        if !self.system.frame.chart().contains_box(&b) {
            return Err(Error::Config(format!("grid box of half width {w} exceeds the chart")));
        }
        Ok(b)
    }

    /// Shooting sweep over the grid, tile by tile; unresolved nodes are
    /// dropped and counted.
    fn sweep(&mut self) -> Result<(Vec<NodeSolution>, WarmShooter)> {
        let h = self.config.grid.h;
        let nodes = sweep_nodes(&self.bounds()?, h, &self.system.base, 2.0 * h);
        let config = ShootingConfig::for_system(&self.system);
        let tiles: Vec<Vec<NodeSolution>> = nodes
            .par_chunks(TILE)
            .map(|tile| sweep_grid(&mut WarmShooter::new(self.system.clone(), config.clone()), tile))
            .collect::<Result<_>>()?;
        let solved = tiles.concat();
        self.quantity("unresolved nodes", (nodes.len() - solved.len()) as f64, "shooting");
        Ok((solved, WarmShooter::new(self.system.clone(), config)))
    }

    fn geodesic(&mut self) -> Result<()> {
        let g = &self.config.geodesic;
        let e = integrate_extremal(
            &self.system.frame,
            &self.system.base,
            &CoVector(g.p0.clone()),
            g.t,
            g.steps,
        )?;
        let system = self.system.clone();
        self.artifact("trajectory.csv", |f| export::write_trajectory(f, &system, &e))?;
        let (energy, length) = path_energy_and_length(&self.system.frame, &e);
        let tol = self.config.tolerances.clone();
        self.push(self.check(
            "energy conservation",
            e.max_energy_drift(&self.system.frame),
            tol.energy,
            Baseline::Tolerance,
        ));
        let expected = g.t * (2.0 * e.energy0).sqrt();
        self.push(self.check(
            "length identity",
            (length - expected).abs(),
            tol.length,
            Baseline::Tolerance,
        ));
        self.quantity("length", length, "extremal");
        self.quantity("energy", energy, "extremal");
        self.quantity("hamiltonian", e.energy0, "extremal");
        for (k, v) in e.endpoint().x.iter().enumerate() {
            self.quantity(format!("x{}(T)", k + 1), *v, "extremal");
        }
        Ok(())
    }

    fn value_grid(&mut self) -> Result<()> {
        let h = self.config.grid.h;
        let (nodes, mut shooter) = self.sweep()?;
        let grid = match self.config.grid.source {
            Provenance::Shooting => ValueGrid {
                h,
                points: nodes.iter().map(|n| n.x.clone()).collect(),
                values: nodes.iter().map(|n| n.value).collect(),
                provenance: Provenance::Shooting,
                error_bound: ShootingConfig::for_system(&self.system).feasibility_tol,
            },
            Provenance::Oracle => ValueOracle::new(&self.system, h, &self.bounds()?)?.value_grid(),
        };
        let singular = singular_from_grid(&mut shooter, &nodes, h)?;
        self.artifact("value_grid.csv", |f| export::write_value_grid(f, &grid))?;
        self.artifact("batch.csv", |f| export::write_batch(f, &nodes))?;
        self.artifact("singular_set.csv", |f| export::write_loci(f, &[&singular]))?;
        self.quantity("grid points", grid.points.len() as f64, grid.provenance.as_str());
        self.quantity("value error bound", grid.error_bound, grid.provenance.as_str());
        self.quantity("singular points", singular.points.len() as f64, "shooting");
        self.reference_check(&singular, h);
        Ok(())
    }

    /// Distance of the singular estimate to the known singular set, when
    /// there is a closed form for it.
    fn reference_check(&mut self, singular: &LocusEstimate, h: f64) {
        if suite::reference_singular_distance(&self.system, &self.system.base).is_none() {
            return;
        }
        let worst = singular
            .points
            .iter()
            .filter_map(|p| suite::reference_singular_distance(&self.system, p))
            .fold(0.0, f64::max);
        let c = self
            .check("singular set near reference", worst, 2.0 * h, Baseline::ClosedForm)
            .require(!singular.points.is_empty(), "empty singular estimate");
        self.push(c);
    }

    fn loci(&mut self) -> Result<()> {
        let h = self.config.grid.h;
        let (nodes, mut shooter) = self.sweep()?;
        let loci = loci_from_grid(&mut shooter, &nodes, h)?;
        self.artifact("batch.csv", |f| export::write_batch(f, &nodes))?;
        self.artifact("loci.csv", |f| {
            export::write_loci(f, &[&loci.singular, &loci.cut, &loci.conjugate_min])
        })?;
        let sizes = SuiteSizes {
            loci_h: h,
            loci_half_width: self.config.grid.half_width,
            ..self.config.suite.clone()
        };
        self.push(suite::conjugate_in_cut(&self.system, &loci, &sizes));
        self.push(suite::dimension_probe(&self.system, &loci, &sizes));
        self.quantity("singular points", loci.singular.points.len() as f64, "shooting");
        self.quantity("conjugate points", loci.conjugate_min.points.len() as f64, "shooting");
        Ok(())
    }

    fn feedback(&mut self) -> Result<()> {
        let opts = &self.config.feedback;
        let euclidean = self.system.name.starts_with("euclidean-");
        let singular = if opts.estimate_singular_set && !euclidean {
            let (nodes, mut shooter) = self.sweep()?;
            singular_from_grid(&mut shooter, &nodes, self.config.grid.h)?
        } else {
            LocusEstimate {
                kind: LocusKind::SingularSet,
                points: vec![self.system.base.clone()],
                detection_radius: 0.0,
            }
        };
        let config = FeedbackConfig {
            dt: opts.dt,
            fine_dt: opts.fine_dt,
            early_time: 0.1,
            ..FeedbackConfig::default()
        };
        let fb = FeedbackField::new(self.system.clone(), singular.clone()).with_config(config);
        let mut starts: Vec<Point> = opts.starts.iter().map(|x| Point(x.clone())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let w = self.config.grid.half_width;
        while starts.len() < opts.starts.len() + opts.random_starts {
            let x = Point(self.system.base.iter().map(|b| b + rng.gen_range(-w..w)).collect());
            if x.distance(&self.system.base) > 0.1 {
                starts.push(x);
            }
        }
        let horizon = opts.horizon;
        let trajs: Vec<ClosedLoopTrajectory> = starts
            .par_iter()
            .map(|x0| fb.integrate_closed_loop(x0, horizon))
            .collect::<Result<_>>()?;
        let system = self.system.clone();
        for (k, traj) in trajs.iter().enumerate() {
            self.artifact(&format!("closed_loop_{k:03}.csv"), |f| {
                export::write_closed_loop(f, &system, traj)
            })?;
        }
        self.artifact("singular_set.csv", |f| export::write_loci(f, &[&singular]))?;
        let (mut decay, mut ratio, mut repulsion) = (0.0f64, 0.0f64, f64::INFINITY);
        for traj in &trajs {
            decay = decay.max(decay_check(traj));
            if traj.initial_value() > 0.0 {
                ratio = ratio.max(traj.final_value() / traj.initial_value());
            }
            for (t, x) in traj.times.iter().zip(&traj.points) {
                if *t >= 0.05 {
                    repulsion = repulsion.min(singular.distance_to(x));
                }
            }
        }
        let tol = self.config.tolerances.clone();
        self.push(self.check("decay law", decay, tol.decay, Baseline::Tolerance));
        self.push(self.check("convergence", ratio, tol.value_ratio, Baseline::Tolerance));
        // a lower bound: pass when the distance exceeds the threshold
        let mut c = self
            .check("repulsion", repulsion, 0.0, Baseline::Tolerance)
            .detail("min distance to S for t >= 0.05 must exceed the threshold");
        c.pass = repulsion > 0.0;
        self.push(c);
        self.quantity("trajectories", trajs.len() as f64, "feedback");
        self.quantity(
            "singular points",
            singular.points.len() as f64,
            if euclidean { "closed-form" } else { "shooting" },
        );
        Ok(())
    }

    fn full_suite(&mut self) -> Result<()> {
        let mut systems: Vec<SubRiemannianSystem> = BUILTIN_NAMES
            .iter()
            .map(|name| SystemSpec::Name(name.to_string()).build())
            .collect::<Result<_>>()?;
        if !BUILTIN_NAMES.contains(&self.system.name.as_str()) {
            systems.push(self.system.clone());
        }
        let tasks = suite::check_tasks(&self.system, &systems, &self.config.suite, self.config.seed)?;
        let groups: Vec<Vec<CheckResult>> = tasks.par_iter().map(|task| task()).collect::<Result<_>>()?;
        self.checks = groups.concat();
        self.checks.sort_by_key(|c| c.id);
        Ok(())
    }
}

/// Runs the configured job on a pool of `jobs` workers (0 = all cores),
/// writing artifacts and `report.json` into `out`.
pub fn run(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunReport> {
    let system = config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    let start = Instant::now();
    let mut run = Run {
        config,
        system,
        out,
        checks: Vec::new(),
        quantities: Vec::new(),
        artifacts: Vec::new(),
    };
    pool.install(|| match config.job {
        JobKind::Geodesic => run.geodesic(),
        JobKind::ValueGrid => run.value_grid(),
        JobKind::Loci => run.loci(),
        JobKind::Feedback => run.feedback(),
        JobKind::FullSuite => run.full_suite(),
    })?;
    run.quantity("wall seconds", start.elapsed().as_secs_f64(), "timing");
    let report = RunReport {
        system: run.system.name.clone(),
        job: config.job,
        seed: config.seed,
        passed: run.checks.iter().all(|c| c.pass),
        checks: run.checks,
        quantities: run.quantities,
        artifacts: run.artifacts,
    };
    report.write(out)?;
    Ok(report)
}
