//! CSV artifacts and gnuplot scripts.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::Writer;

use crate::chart::{Point, SubRiemannianSystem};
use crate::error::{Error, Result};
use crate::extremal::{raw_hamiltonian, Extremal};
use crate::feedback::ClosedLoopTrajectory;
use crate::nonsmooth::{LocusEstimate, NodeSolution};
use crate::oracle::ValueGrid;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn header(prefix: &[&str], groups: &[(&str, usize)], suffix: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for (name, count) in groups {
        h.extend((1..=*count).map(|k| format!("{name}{k}")));
    }
    h.extend(suffix.iter().map(|s| s.to_string()));
    h
}

fn row<W: Write>(w: &mut Writer<W>, fields: impl IntoIterator<Item = String>) -> Result<()> {
    w.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(csv_err)
}

fn nums<'a>(v: impl IntoIterator<Item = &'a f64>) -> std::vec::IntoIter<String> {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().into_iter()
}

/// `t,x1..xn,p1..pn,H`.
pub fn write_trajectory<W: Write>(out: W, system: &SubRiemannianSystem, e: &Extremal) -> Result<()> {
    let n = system.dim();
    let mut w = Writer::from_writer(out);
    row(&mut w, header(&["t"], &[("x", n), ("p", n)], &["H"]))?;
    for (t, s) in e.times.iter().zip(&e.states) {
        let h = raw_hamiltonian(&system.frame, &s.x, &s.p);
        row(
            &mut w,
            nums([t])
                .chain(nums(s.x.iter()))
                .chain(nums(s.p.iter()))
                .chain(nums([&h])),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `x1..xn,V,multiplicity,sigma_min,zeta1..zetan`.
pub fn write_batch<W: Write>(out: W, nodes: &[NodeSolution]) -> Result<()> {
    let n = nodes.first().map_or(0, |s| s.x.dim());
    let mut w = Writer::from_writer(out);
    row(&mut w, {
        let mut h = header(&[], &[("x", n)], &["V", "multiplicity", "sigma_min"]);
        h.extend(header(&[], &[("zeta", n)], &[]));
        h
    })?;
    for s in nodes {
        row(
            &mut w,
            nums(s.x.iter())
                .chain([s.value.to_string(), s.multiplicity.to_string(), s.sigma_min.to_string()])
                .chain(nums(s.zeta.iter())),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `x1..xn,V,provenance`.
pub fn write_value_grid<W: Write>(out: W, grid: &ValueGrid) -> Result<()> {
    let n = grid.points.first().map_or(0, Point::dim);
    let mut w = Writer::from_writer(out);
    row(&mut w, header(&[], &[("x", n)], &["V", "provenance"]))?;
    for (x, v) in grid.points.iter().zip(&grid.values) {
        row(
            &mut w,
            nums(x.iter()).chain([v.to_string(), grid.provenance.as_str().to_string()]),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `kind,x1..xn`, one row per point of each locus.
pub fn write_loci<W: Write>(out: W, loci: &[&LocusEstimate]) -> Result<()> {
    let n = loci
        .iter()
        .flat_map(|l| l.points.first())
        .map(Point::dim)
        .next()
        .unwrap_or(0);
    let mut w = Writer::from_writer(out);
    row(&mut w, header(&["kind"], &[("x", n)], &[]))?;
    for locus in loci {
        for p in &locus.points {
            row(
                &mut w,
                [locus.kind.as_str().to_string()].into_iter().chain(nums(p.iter())),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,x1..xn,u1..um,V,dist_to_S`.
pub fn write_closed_loop<W: Write>(out: W, system: &SubRiemannianSystem, traj: &ClosedLoopTrajectory) -> Result<()> {
    let mut w = Writer::from_writer(out);
    row(
        &mut w,
        header(
            &["t"],
            &[("x", system.dim()), ("u", system.rank())],
            &["V", "dist_to_S"],
        ),
    )?;
    for k in 0..traj.len() {
        row(
            &mut w,
            nums([&traj.times[k]])
                .chain(nums(traj.points[k].iter()))
                .chain(nums(traj.controls[k].iter()))
                .chain(nums([&traj.values[k], &traj.dist_to_s[k]])),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an artifact to `path` through one of the writers above.
pub fn to_file(path: &Path, write: impl FnOnce(fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write(fs::File::create(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Extremal or closed-loop trajectory: `x1` against `x2`, and `V` or `H`
    /// against `t` when present.
    Trajectory,
    /// Heat map of a value grid on the slice nearest `x3 = 0`.
    ValueSlice,
    /// Scatter of locus point clouds, one series per kind.
    Loci,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trajectory" => Ok(Self::Trajectory),
            "value-slice" => Ok(Self::ValueSlice),
            "loci" => Ok(Self::Loci),
            _ => Err(Error::Config(format!(
                "unknown plot kind '{s}' (expected trajectory, value-slice or loci)"
            ))),
        }
    }
}

/// Writes `<artifact>.gp`, a gnuplot script rendering the CSV to
/// `<artifact>.png`, and returns its path.
pub fn emit_plot_script(artifact: &Path, kind: PlotKind) -> Result<PathBuf> {
    let text = fs::read_to_string(artifact)?;
    let head: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let col = |name: &str| head.iter().position(|h| *h == name).map(|i| i + 1);
    let file = artifact
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| Error::Config(format!("bad artifact path {}", artifact.display())))?;
    let stem = file.trim_end_matches(".csv");
    let need = |name: &str| col(name).ok_or_else(|| Error::Config(format!("{file} has no column '{name}'")));

    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,700\n");
    s.push_str(&format!("set output '{stem}.png'\n"));
    match kind {
        PlotKind::Trajectory => {
            let (x1, x2) = (need("x1")?, need("x2")?);
            let y = col("V").map(|c| (c, "V")).or_else(|| col("H").map(|c| (c, "H")));
            let t = need("t")?;
            if let Some((yc, label)) = y {
                s.push_str("set multiplot layout 1,2\n");
                s.push_str(&format!(
                    "set xlabel 'x1'\nset ylabel 'x2'\nplot '{file}' skip 1 using {x1}:{x2} with lines title 'path'\n"
                ));
                let log = if label == "V" { "set logscale y\n" } else { "" };
                s.push_str(&format!(
                    "{log}set xlabel 't'\nset ylabel '{label}'\nplot '{file}' skip 1 using {t}:{yc} with lines title '{label}'\n"
                ));
                s.push_str("unset multiplot\n");
            } else {
                s.push_str(&format!(
                    "plot '{file}' skip 1 using {x1}:{x2} with lines title 'path'\n"
                ));
            }
        }
        PlotKind::ValueSlice => {
            let (x1, x2, v) = (need("x1")?, need("x2")?, need("V")?);
            s.push_str("set xlabel 'x1'\nset ylabel 'x2'\nset cblabel 'V'\n");
            match col("x3") {
                Some(x3) => {
                    let z = nearest_slice(&text, x3 - 1);
                    s.push_str(&format!("set title 'x3 = {z}'\n"));
                    s.push_str(&format!(
                        "plot '{file}' skip 1 using {x1}:{x2}:(abs(${x3} - ({z})) < 1e-9 ? ${v} : 1/0) with points pt 5 ps 0.6 lc palette notitle\n"
                    ));
                }
                None => s.push_str(&format!(
                    "plot '{file}' skip 1 using {x1}:{x2}:{v} with points pt 5 ps 0.6 lc palette notitle\n"
                )),
            }
        }
        PlotKind::Loci => {
            let (x1, x2, k) = (need("x1")?, need("x2")?, need("kind")?);
            // rows of other kinds map to 1/0, which gnuplot skips
            let x3 = col("x3");
            let cmd = if x3.is_some() { "splot" } else { "plot" };
            let using = |kind: &str| match x3 {
                Some(x3) => format!("{x1}:{x2}:(strcol({k}) eq '{kind}' ? ${x3} : 1/0)"),
                None => format!("{x1}:(strcol({k}) eq '{kind}' ? ${x2} : 1/0)"),
            };
            let series: Vec<String> = ["singular_set", "cut", "conjugate_min"]
                .iter()
                .filter(|kind| text.lines().skip(1).any(|l| l.starts_with(&format!("{kind},"))))
                .map(|kind| {
                    format!(
                        "'{file}' skip 1 using {} with points pt 7 ps 0.5 title '{kind}'",
                        using(kind)
                    )
                })
                .collect();
            s.push_str("set xlabel 'x1'\nset ylabel 'x2'\n");
            if x3.is_some() {
                s.push_str("set zlabel 'x3'\n");
            }
            if series.is_empty() {
                s.push_str("set label 'no locus points' at graph 0.5, 0.5 center\nplot 1/0 notitle\n");
            } else {
                s.push_str(&format!("{cmd} {}\n", series.join(", \\\n     ")));
            }
        }
    }
    let out = artifact.with_extension("gp");
    fs::write(&out, s)?;
    Ok(out)
}

/// The `x3` value closest to zero among the data rows.
fn nearest_slice(text: &str, column: usize) -> f64 {
    text.lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(column)?.parse::<f64>().ok())
        .fold(f64::INFINITY, |best, z| if z.abs() < best.abs() { z } else { best })
}
