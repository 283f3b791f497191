//! The limiting vortex motion law `dy/dt = -grad omega(y)`, integrated with
//! classical RK4, plus pinning detection and separation diagnostics.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{dist, Grid2D};
use crate::pinning::{
    find_critical_points, polygon_contains, Classification, CriticalPoint, LogDensity, PinningProfile,
    SmoothFunction,
};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_PINNING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub initial: [f64; 2],
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    /// Set when a step left the domain; the trajectory is truncated there.
    pub exited: bool,
}

impl OdeTrajectory {
    pub fn last_point(&self) -> [f64; 2] {
        *self.points.last().expect("trajectories start with their initial point")
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectories start at t = 0")
    }

    /// Linear interpolation in time, clamped to the stored range.
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t).max(1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.points[k - 1], self.points[k]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }
}

fn rk4_step(grad: &impl Fn([f64; 2]) -> [f64; 2], y: [f64; 2], dt: f64) -> [f64; 2] {
    let f = |p: [f64; 2]| {
        let g = grad(p);
        [-g[0], -g[1]]
    };
    let k1 = f(y);
    let k2 = f([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
    let k3 = f([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
    let k4 = f([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
    [
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn integrate_with(
    grad: impl Fn([f64; 2]) -> [f64; 2],
    grid: &Grid2D,
    starts: &[[f64; 2]],
    t_end: f64,
    dt: f64,
) -> Result<Vec<OdeTrajectory>> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::config("ode_t_end", "must be positive"));
    }
    if !(dt > 0.0 && dt <= t_end) {
        return Err(Error::config("ode_dt", "must lie in (0, t_end]"));
    }
    for (k, &s) in starts.iter().enumerate() {
        if grid.distance_to_boundary(s) <= 0.0 {
            return Err(Error::config(
                "vortex_centers",
                format!("start {k} at ({}, {}) is not inside the domain", s[0], s[1]),
            ));
        }
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    Ok(starts
        .iter()
        .map(|&y0| {
            let mut times = Vec::with_capacity(steps + 1);
            let mut points = Vec::with_capacity(steps + 1);
            times.push(0.0);
            points.push(y0);
            let mut y = y0;
            let mut exited = false;
            for n in 1..=steps {
                let next = rk4_step(&grad, y, dt);
                if grid.distance_to_boundary(next) <= 0.0 || !next.iter().all(|c| c.is_finite()) {
                    exited = true;
                    break;
                }
                y = next;
                times.push(n as f64 * dt);
                points.push(y);
            }
            OdeTrajectory {
                initial: y0,
                times,
                points,
                exited,
            }
        })
        .collect())
}

/// Integrates `dy/dt = -grad omega(y)` from each start up to `t_end`.
///
/// The step is shrunk so that `t_end` is hit exactly. A trajectory leaving the
/// domain is truncated and flagged.
pub fn integrate(
    profile: &PinningProfile,
    starts: &[[f64; 2]],
    t_end: f64,
    dt: f64,
) -> Result<Vec<OdeTrajectory>> {
    integrate_with(|p| profile.grad_omega(p), profile.grid(), starts, t_end, dt)
}

/// Integrates the density form of the law, `dy/dt = -grad a(y) / a(y)`.
pub fn integrate_density_law(
    a: Arc<dyn SmoothFunction>,
    grid: &Grid2D,
    starts: &[[f64; 2]],
    t_end: f64,
    dt: f64,
) -> Result<Vec<OdeTrajectory>> {
    let log_a = LogDensity(a);
    integrate_with(
        |p| log_a.gradient(p).expect("log density supplies its gradient"),
        grid,
        starts,
        t_end,
        dt,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Pinning {
    Pinned { point: CriticalPoint },
    /// The trajectory came to rest but Newton's method could not resolve the
    /// limit, which happens at degenerate critical points.
    Undetermined { location: [f64; 2] },
    NotPinned,
}

impl Pinning {
    pub fn critical_point(&self) -> Option<&CriticalPoint> {
        match self {
            Pinning::Pinned { point } => Some(point),
            _ => None,
        }
    }

    pub fn is_pinned(&self) -> bool {
        matches!(self, Pinning::Pinned { .. })
    }
}

/// Decides whether a trajectory has settled at a critical point of `omega`.
///
/// Pinned means `|grad omega(y(T))| < tol` and `|y(T) - y(T/2)| < tol`; the
/// limit is then refined by Newton's method seeded at `y(T)`.
pub fn detect_pinning(traj: &OdeTrajectory, profile: &PinningProfile, tol: f64) -> Result<Pinning> {
    if !(tol > 0.0) {
        return Err(Error::config("pinning_tol", "must be positive"));
    }
    if traj.exited {
        return Ok(Pinning::NotPinned);
    }
    let end = traj.last_point();
    let half = traj.position_at(0.5 * traj.t_end());
    let g = profile.grad_omega(end);
    if g[0].hypot(g[1]) >= tol || dist(end, half) >= tol {
        return Ok(Pinning::NotPinned);
    }
    let search = find_critical_points(profile, &[end])?;
    Ok(match search.points.into_iter().next() {
        Some(point) if dist(point.location, end) < tol.max(1e-4) => Pinning::Pinned { point },
        _ => Pinning::Undetermined { location: end },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `min over t, i != j of |y_i(t) - y_j(t)|`; infinite for fewer than two trajectories.
    pub min_distance: f64,
    pub min_distance_time: f64,
    /// Per trajectory: whether it stayed inside its confinement polygon.
    /// Empty when no polygons were supplied.
    pub confined: Vec<bool>,
}

/// Pairwise separation over a shared time mesh and optional confinement checks.
pub fn separation_report(trajs: &[OdeTrajectory], boundaries: &[Vec<[f64; 2]>]) -> Result<SeparationReport> {
    if let Some(first) = trajs.first() {
        if trajs.iter().any(|t| t.times.len() != first.times.len() || t.times != first.times) {
            return Err(Error::config(
                "trajectories",
                "separation needs a shared time mesh (a trajectory may have exited early)",
            ));
        }
    }
    if !boundaries.is_empty() && boundaries.len() != trajs.len() {
        return Err(Error::config(
            "confinement",
            format!("{} polygons for {} trajectories", boundaries.len(), trajs.len()),
        ));
    }
    let mut min_distance = f64::INFINITY;
    let mut min_distance_time = 0.0;
    if trajs.len() >= 2 {
        for n in 0..trajs[0].times.len() {
            for a in 0..trajs.len() {
                for b in a + 1..trajs.len() {
                    let d = dist(trajs[a].points[n], trajs[b].points[n]);
                    if d < min_distance {
                        min_distance = d;
                        min_distance_time = trajs[0].times[n];
                    }
                }
            }
        }
    }
    let mut confined = Vec::with_capacity(boundaries.len());
    for (traj, poly) in trajs.iter().zip(boundaries) {
        crate::pinning::check_polygon(traj.initial, poly)?;
        confined.push(traj.points.iter().all(|&p| polygon_contains(p, poly)));
    }
    Ok(SeparationReport {
        min_distance,
        min_distance_time,
        confined,
    })
}

/// One line of the pinning summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningSummary {
    pub traj_id: usize,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub t_end: f64,
    pub exited: bool,
    pub pinning: Pinning,
}

impl PinningSummary {
    pub fn classification(&self) -> Option<Classification> {
        self.pinning.critical_point().map(|c| c.classification)
    }
}

pub fn summarize(trajs: &[OdeTrajectory], profile: &PinningProfile, tol: f64) -> Result<Vec<PinningSummary>> {
    trajs
        .iter()
        .enumerate()
        .map(|(traj_id, t)| {
            Ok(PinningSummary {
                traj_id,
                start: t.initial,
                end: t.last_point(),
                t_end: t.t_end(),
                exited: t.exited,
                pinning: detect_pinning(t, profile, tol)?,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct OdeRow {
    traj_id: usize,
    t: f64,
    x: f64,
    y: f64,
}

/// Writes `traj_id,t,x,y`, one row per stored step.
pub fn write_ode_csv<W: Write>(trajs: &[OdeTrajectory], mut out: W) -> Result<()> {
    writeln!(out, "traj_id,t,x,y")?;
    for (id, tr) in trajs.iter().enumerate() {
        for (t, p) in tr.times.iter().zip(&tr.points) {
            writeln!(out, "{id},{t:.16e},{:.16e},{:.16e}", p[0], p[1])?;
        }
    }
    Ok(())
}

/// Reads trajectories back; the `exited` flag is not stored in the CSV.
pub fn read_ode_csv<R: Read>(input: R) -> Result<Vec<OdeTrajectory>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out: Vec<OdeTrajectory> = Vec::new();
    for row in reader.deserialize() {
        let row: OdeRow = row?;
        if row.traj_id == out.len() {
            out.push(OdeTrajectory {
                initial: [row.x, row.y],
                times: Vec::new(),
                points: Vec::new(),
                exited: false,
            });
        }
        let tr = out
            .get_mut(row.traj_id)
            .ok_or_else(|| Error::config("traj_id", "trajectory ids must be contiguous"))?;
        tr.times.push(row.t);
        tr.points.push([row.x, row.y]);
    }
    Ok(out)
}
