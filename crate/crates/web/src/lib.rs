//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layout is documented per
//! function. The plain-Rust functions behind them are public so they can be
//! tested natively.

use srstab::extremal::integrate_extremal;
use srstab::feedback::{FeedbackConfig, FeedbackField};
use srstab::shooting::{ShootingConfig, WarmShooter};
use srstab::{builtin_system, CoVector, Error, Point, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// `count` extremals from `x̄` with `p0 = (r cos θ, r sin θ, twist, 0, …)`,
/// each sampled at `samples` times on `[0, 1]` as `(x1, x2)` pairs. Samples
/// after an extremal leaves the chart are NaN.
pub fn fan(system: &str, count: usize, radius: f64, twist: f64, samples: usize) -> Result<Vec<f64>> {
    let sys = builtin_system(system)?;
    let n = sys.dim();
    let samples = samples.max(2);
    let stride = 20;
    let mut out = Vec::with_capacity(count * samples * 2);
    for k in 0..count {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
        let mut p0 = vec![0.0; n];
        p0[0] = radius * theta.cos();
        p0[1] = radius * theta.sin();
        if n > 2 {
            p0[2] = twist;
        }
        match integrate_extremal(&sys.frame, &sys.base, &CoVector(p0), 1.0, (samples - 1) * stride) {
            Ok(e) => out.extend(e.states.iter().step_by(stride).flat_map(|s| [s.x[0], s.x[1]])),
            Err(Error::Escape { .. }) => out.extend(std::iter::repeat_n(f64::NAN, 2 * samples)),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Closed loop from `x0` over `[0, horizon]`, with `S = {x̄}`. Rows of
/// `(t, x1..xn, V)`, stride `n + 2`.
pub fn closed_loop_rows(system: &str, x0: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let sys = builtin_system(system)?;
    if x0.len() != sys.dim() {
        return Err(Error::Config(format!("x0 needs {} entries", sys.dim())));
    }
    let config = FeedbackConfig {
        dt: 1e-2,
        fine_dt: 1e-3,
        early_time: 0.1,
        ..FeedbackConfig::default()
    };
    let fb = FeedbackField::without_singular_set(sys).with_config(config);
    let traj = fb.integrate_closed_loop(&Point(x0.to_vec()), horizon)?;
    let mut out = Vec::new();
    for k in 0..traj.len() {
        out.push(traj.times[k]);
        out.extend(traj.points[k].iter());
        out.push(traj.values[k]);
    }
    Ok(out)
}

/// `V` on the `resolution × resolution` lattice of `[-w, w]²` in the
/// `(x1, x2)` plane at height `x3` (ignored in dimension 2), row-major with
/// `x2` varying slowest.
pub fn slice(system: &str, x3: f64, half_width: f64, resolution: usize) -> Result<Vec<f64>> {
    let sys = builtin_system(system)?;
    let n = sys.dim();
    let r = resolution.max(2);
    let mut shooter = WarmShooter::new(sys.clone(), ShootingConfig::for_system(&sys));
    let mut out = vec![0.0; r * r];
    let coord = |i: usize| -half_width + 2.0 * half_width * i as f64 / (r - 1) as f64;
    for j in 0..r {
        // serpentine order keeps consecutive targets adjacent for warm starts
        for step in 0..r {
            let i = if j % 2 == 0 { step } else { r - 1 - step };
            let mut x = vec![0.0; n];
            x[0] = coord(i);
            x[1] = coord(j);
            if n > 2 {
                x[2] = x3;
            }
            let x = Point(x);
            out[j * r + i] = if x.distance(&sys.base) < 1e-12 {
                0.0
            } else {
                shooter.solve(&x)?.value
            };
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn geodesic_fan(
    system: &str,
    count: usize,
    radius: f64,
    twist: f64,
    samples: usize,
) -> std::result::Result<Vec<f64>, JsValue> {
    fan(system, count, radius, twist, samples).map_err(js)
}

#[wasm_bindgen]
pub fn closed_loop(system: &str, x0: Vec<f64>, horizon: f64) -> std::result::Result<Vec<f64>, JsValue> {
    closed_loop_rows(system, &x0, horizon).map_err(js)
}

#[wasm_bindgen]
pub fn value_slice(
    system: &str,
    x3: f64,
    half_width: f64,
    resolution: usize,
) -> std::result::Result<Vec<f64>, JsValue> {
    slice(system, x3, half_width, resolution).map_err(js)
}

/// Dimension of a built-in system, or 0 for an unknown name.
#[wasm_bindgen]
pub fn system_dim(system: &str) -> usize {
    builtin_system(system).map_or(0, |s| s.dim())
}
