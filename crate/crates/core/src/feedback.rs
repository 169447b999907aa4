//! Stabilizing feedback built from minimizers: `ũ_i(x) = ½⟨ζ(x), f_i(x)⟩`,
//! `X(x) = −Σ ũ_i f_i(x)`, and closed-loop integration along which
//! `V(x(t)) = V(x0) e^{−2t}`.

use std::sync::Arc;

use serde::Serialize;

use crate::chart::{dist, dot, CoVector, Frame, MartinetModifiedFields, Point, SubRiemannianSystem};
use crate::error::{Error, Result};
use crate::nonsmooth::{LocusEstimate, LocusKind};
use crate::shooting::{assemble, solve_from, MinimizerSet, ShootingConfig, WarmShooter};

#[derive(Clone, Debug, Serialize)]
pub struct FeedbackConfig {
    /// Midpoint step away from `S`.
    pub dt: f64,
    /// Step within `refine_factor ×` the detection radius of `S`, and
    /// before `early_time`.
    pub fine_dt: f64,
    pub refine_factor: f64,
    pub early_time: f64,
    /// Stop once `V ≤ stop_ratio · V(x0)`.
    pub stop_ratio: f64,
    /// RK4 steps per exponential-map evaluation.
    pub shooting_steps: usize,
    /// Perturbed retries before reporting a feedback hole.
    pub retries: usize,
    pub perturbation: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            fine_dt: 1e-4,
            refine_factor: 2.0,
            early_time: 0.0,
            stop_ratio: 1e-8,
            shooting_steps: 100,
            retries: 3,
            perturbation: 1e-7,
        }
    }
}

/// The feedback of a system relative to a singular-set estimate. Immutable;
/// every evaluation or integration owns its own shooting state.
#[derive(Clone, Debug)]
pub struct FeedbackField {
    pub system: SubRiemannianSystem,
    pub shooting: ShootingConfig,
    pub singular: LocusEstimate,
    pub config: FeedbackConfig,
}

/// `ζ(x)` with the minimizer it came from.
#[derive(Clone, Debug)]
pub struct Selection {
    pub value: f64,
    pub zeta: CoVector,
    pub p0: CoVector,
    pub multiplicity: usize,
    pub control: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Minimizer-derived `ζ` with warm starts; the tie-break among co-optimal
/// minimizers is the shooting one (smallest `p0`).
pub struct ZetaSelector<'a> {
    field: &'a FeedbackField,
    shooter: WarmShooter,
}

impl<'a> ZetaSelector<'a> {
    /// `ζ` at `x`, continuing from `hint` when given.
    ///
    /// A hint is the rescaled covector of the minimizer selected one step
    /// earlier; its continuation is a sub-arc of that minimizer, hence still
    /// minimizing, and is accepted without the conditioning test that
    /// guards generic warm starts. Near rank-drop points `d exp` is badly
    /// conditioned although the arc is optimal.
    pub fn select(&mut self, x: &Point, hint: Option<&CoVector>) -> Result<Selection> {
        self.field.system.frame.check_domain(x)?;
        if let Some(p) = hint {
            if let Some(c) = solve_from(&self.field.system, x, p, &self.field.shooting).filter(|c| c.conjugate_free) {
                let set = assemble(x.clone(), vec![c], &self.field.shooting, 1)?;
                return Ok(self.field.selection(x, &set));
            }
        }
        let mut last = None;
        for attempt in 0..=self.field.config.retries {
            self.shooter.set_hints(hint.into_iter().cloned().collect());
            let probe = if attempt == 0 {
                x.clone()
            } else {
                self.perturbed(x, attempt)
            };
            match self.shooter.solve(&probe) {
                Ok(set) => return Ok(self.field.selection(x, &set)),
                Err(Error::UnresolvedTarget { .. }) => last = Some(probe),
                Err(e) => return Err(e),
            }
        }
        Err(Error::FeedbackHole {
            point: last.map(|p| p.0).unwrap_or_else(|| x.0.clone()),
            reason: "no minimizer found, perturbed retries exhausted".into(),
        })
    }

    fn perturbed(&self, x: &Point, attempt: usize) -> Point {
        let eps = self.field.config.perturbation * attempt as f64;
        Point(
            x.iter()
                .enumerate()
                .map(|(j, v)| v + if (j + attempt).is_multiple_of(2) { eps } else { -eps })
                .collect(),
        )
    }

    pub fn warm_hits(&self) -> usize {
        self.shooter.warm_hits
    }
}

impl FeedbackField {
    pub fn new(system: SubRiemannianSystem, singular: LocusEstimate) -> Self {
        let config = FeedbackConfig::default();
        let mut shooting = ShootingConfig::for_system(&system);
        shooting.steps = config.shooting_steps;
        Self {
            system,
            shooting,
            singular,
            config,
        }
    }

    /// Feedback with `S = {x̄}`, for systems whose singular set is empty
    /// apart from the base point.
    pub fn without_singular_set(system: SubRiemannianSystem) -> Self {
        let s = LocusEstimate {
            kind: LocusKind::SingularSet,
            points: vec![system.base.clone()],
            detection_radius: 0.0,
        };
        Self::new(system, s)
    }

    pub fn with_config(mut self, config: FeedbackConfig) -> Self {
        self.shooting.steps = config.shooting_steps;
        self.config = config;
        self
    }

    pub fn selector(&self) -> ZetaSelector<'_> {
        ZetaSelector {
            field: self,
            shooter: WarmShooter::new(self.system.clone(), self.shooting.clone()),
        }
    }

    fn selection(&self, x: &Point, set: &MinimizerSet) -> Selection {
        let best = set.selected();
        let zeta = best.zeta();
        let fields = self.system.frame.eval(x).expect("domain checked");
        let control: Vec<f64> = fields.iter().map(|f| 0.5 * dot(&zeta, f)).collect();
        let velocity = self
            .system
            .frame
            .combine(x, &control.iter().map(|u| -u).collect::<Vec<_>>());
        Selection {
            value: set.value,
            zeta,
            p0: best.p0.clone(),
            multiplicity: set.multiplicity,
            control,
            velocity,
        }
    }

    /// `ũ_i(x) = ½⟨ζ(x), f_i(x)⟩`; zero at `x̄`.
    pub fn feedback_control(&self, x: &Point) -> Result<Vec<f64>> {
        Ok(self.selector().select(x, None)?.control)
    }

    /// `X(x) = −Σ ũ_i(x) f_i(x)`.
    pub fn feedback_vector(&self, x: &Point) -> Result<Vec<f64>> {
        Ok(self.selector().select(x, None)?.velocity)
    }

    /// Distance to `S`, and whether the step must be refined. Close to `x̄`
    /// the cloud of `S` accumulates; there only points nearer to `S` than to
    /// `x̄` count as near.
    fn near_singular(&self, x: &[f64]) -> (f64, bool) {
        let d = self.singular.distance_to(x);
        let near = d <= self.config.refine_factor * self.singular.detection_radius && d < dist(x, &self.system.base);
        (d, near)
    }

    /// Explicit midpoint integration of `ẋ = X(x)` on `[0, t_end]`.
    ///
    /// The warm hint for the next minimizer is `p0 e^{−Δt}`: along the
    /// closed loop, `x(t) = γ(e^{−t})` for the minimizer `γ` selected at
    /// `x0`, and reparametrizing a minimizer scales its covector.
    pub fn integrate_closed_loop(&self, x0: &Point, t_end: f64) -> Result<ClosedLoopTrajectory> {
        let frame = &self.system.frame;
        frame.check_domain(x0)?;
        let mut sel = self.selector();
        let mut traj = ClosedLoopTrajectory::default();
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut here = sel.select(&x, None)?;
        let v0 = here.value;
        loop {
            let (d, near) = self.near_singular(&x);
            if near {
                traj.events.push(ProximityEvent {
                    time: t,
                    distance: d,
                    multiplicity: here.multiplicity,
                });
            }
            traj.push(t, &x, &here, d);
            self.check_stagnation(&traj)?;
            if here.value <= self.config.stop_ratio * v0 || t >= t_end - 1e-12 {
                break;
            }
            let fine = near || t < self.config.early_time;
            let dt = (if fine { self.config.fine_dt } else { self.config.dt }).min(t_end - t);
            let mid = Point(x.iter().zip(&here.velocity).map(|(a, v)| a + 0.5 * dt * v).collect());
            if frame.check_domain(&mid).is_err() {
                return Err(Error::Escape { time: t + 0.5 * dt });
            }
            let half = sel.select(&mid, Some(&here.p0.scaled((-0.5 * dt).exp())))?;
            let next = Point(x.iter().zip(&half.velocity).map(|(a, v)| a + dt * v).collect());
            if frame.check_domain(&next).is_err() {
                return Err(Error::Escape { time: t + dt });
            }
            here = sel.select(&next, Some(&half.p0.scaled((-0.5 * dt).exp())))?;
            x = next;
            t += dt;
        }
        if v0 == 0.0 && t < t_end {
            let d = traj.dist_to_s[0];
            traj.push(t_end, &x, &here, d);
        }
        Ok(traj)
    }

    /// `V(t)/V(t − 1)` must stay below `10 e^{−2}`.
    fn check_stagnation(&self, traj: &ClosedLoopTrajectory) -> Result<()> {
        let (t, v) = (*traj.times.last().unwrap(), *traj.values.last().unwrap());
        if t < 1.0 || v <= 0.0 {
            return Ok(());
        }
        let k = traj.times.partition_point(|&s| s <= t - 1.0 + 1e-12);
        let before = traj.values[k.saturating_sub(1)];
        let ratio = v / before;
        if ratio > 10.0 * (-2.0f64).exp() {
            return Err(Error::Stagnation { time: t, ratio });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProximityEvent {
    pub time: f64,
    pub distance: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ClosedLoopTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub controls: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub dist_to_s: Vec<f64>,
    /// Samples within the refinement radius of `S`.
    pub events: Vec<ProximityEvent>,
}

impl ClosedLoopTrajectory {
    fn push(&mut self, t: f64, x: &Point, s: &Selection, d: f64) {
        self.times.push(t);
        self.points.push(x.clone());
        self.controls.push(s.control.clone());
        self.values.push(s.value);
        self.dist_to_s.push(d);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn initial_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// `max_t |V(x(t)) − V(x0) e^{−2t}| / V(x0)`.
pub fn decay_check(traj: &ClosedLoopTrajectory) -> f64 {
    let v0 = traj.initial_value();
    if v0 == 0.0 {
        return 0.0;
    }
    traj.times
        .iter()
        .zip(&traj.values)
        .map(|(t, v)| (v - v0 * (-2.0 * t).exp()).abs() / v0)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct RepulsionReport {
    /// Smallest chart distance to the `S` cloud for `t ≥ t_min`.
    pub min_distance: f64,
    pub detection_radius: f64,
    pub passed: bool,
}

pub fn repulsion_check(traj: &ClosedLoopTrajectory, s: &LocusEstimate, t_min: f64) -> RepulsionReport {
    let min_distance = traj
        .times
        .iter()
        .zip(&traj.points)
        .filter(|(t, _)| **t >= t_min)
        .map(|(_, x)| s.distance_to(x))
        .fold(f64::INFINITY, f64::min);
    RepulsionReport {
        min_distance,
        detection_radius: s.detection_radius,
        passed: min_distance > s.detection_radius,
    }
}

/// The Martinet frame with `f1` replaced by `β f1`, `β = x2²`: on the
/// Martinet surface `x2 = 0` only `f2`, transversal to it, survives.
pub fn martinet_modified_system(base: &SubRiemannianSystem) -> Result<SubRiemannianSystem> {
    if base.name != "martinet" {
        return Err(Error::Config(format!(
            "the modified frame is built from the martinet system, got '{}'",
            base.name
        )));
    }
    let frame = Frame::new(Arc::new(MartinetModifiedFields), base.frame.chart().clone())?.with_rank_drop();
    SubRiemannianSystem::new("martinet-modified", frame, base.base.clone())
}
