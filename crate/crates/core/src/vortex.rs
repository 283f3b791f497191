//! Vortex detection by plaquette winding numbers, and assembly of detections
//! into time-matched tracks.
//!
//! A plaquette is the cell with lower-left node `(i, j)`. Its winding number is
//! the sum of the four wrapped phase increments around the cell divided by
//! `2 pi`. Detection does not use a modulus threshold; the minimum corner
//! modulus is recorded for diagnostics only.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{dist, ComplexField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexObservation {
    pub t: f64,
    pub position: [f64; 2],
    pub degree: i32,
    /// Smallest `|V|` over the host plaquette's corners.
    pub min_modulus: f64,
}

/// Phase increment from `a` to `b`, wrapped to `(-pi, pi]`.
#[inline]
fn phase_step(a: [f64; 2], b: [f64; 2]) -> f64 {
    // arg(b * conj(a))
    let re = b[0] * a[0] + b[1] * a[1];
    let im = b[1] * a[0] - b[0] * a[1];
    let d = im.atan2(re);
    if d == -PI {
        PI
    } else {
        d
    }
}

fn loop_winding(values: impl IntoIterator<Item = [f64; 2]>) -> i32 {
    let values: Vec<[f64; 2]> = values.into_iter().collect();
    let n = values.len();
    let total: f64 = (0..n).map(|k| phase_step(values[k], values[(k + 1) % n])).sum();
    (total / (2.0 * PI)).round() as i32
}

#[inline]
fn is_zero(v: [f64; 2]) -> bool {
    v[0] == 0.0 && v[1] == 0.0
}

fn corners(v: &ComplexField, i: usize, j: usize) -> [[f64; 2]; 4] {
    [
        v.get(i, j),
        v.get(i + 1, j),
        v.get(i + 1, j + 1),
        v.get(i, j + 1),
    ]
}

/// Degree of `v` around the plaquette with lower-left node `(i, j)`.
pub fn plaquette_winding(v: &ComplexField, i: usize, j: usize) -> Result<i32> {
    let grid = v.grid();
    if i + 1 >= grid.nx() || j + 1 >= grid.ny() {
        return Err(Error::config(
            "plaquette",
            format!("({i}, {j}) is not a plaquette of a {}x{} grid", grid.nx(), grid.ny()),
        ));
    }
    let c = corners(v, i, j);
    if c.iter().any(|&z| is_zero(z)) {
        return Err(Error::UndefinedWinding { i, j });
    }
    Ok(loop_winding(c))
}

/// Degree of `v` along the boundary loop of its grid.
pub fn boundary_winding(v: &ComplexField) -> Result<i32> {
    let grid = v.grid();
    let lp = grid.boundary_loop();
    if let Some(&(i, j)) = lp.iter().find(|&&(i, j)| is_zero(v.get(i, j))) {
        return Err(Error::UndefinedWinding { i, j });
    }
    Ok(loop_winding(lp.into_iter().map(|(i, j)| v.get(i, j))))
}

/// Zero of the bilinear interpolant of `(re, im)` on the unit cell, if the
/// system has a root inside it.
fn bilinear_zero(c: [[f64; 2]; 4]) -> Option<[f64; 2]> {
    // corners in (0,0), (1,0), (1,1), (0,1) order
    let coeffs = |k: usize| {
        let (f00, f10, f11, f01) = (c[0][k], c[1][k], c[2][k], c[3][k]);
        (f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00)
    };
    let (a1, b1, c1, d1) = coeffs(0);
    let (a2, b2, c2, d2) = coeffs(1);
    // eliminate t: (a2 + b2 s)(c1 + d1 s) - (c2 + d2 s)(a1 + b1 s) = 0
    let qa = b2 * d1 - d2 * b1;
    let qb = a2 * d1 + b2 * c1 - c2 * b1 - d2 * a1;
    let qc = a2 * c1 - c2 * a1;
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if scale == 0.0 {
        return None;
    }
    let mut roots = Vec::with_capacity(2);
    if qa.abs() <= 1e-12 * scale {
        if qb.abs() > 1e-12 * scale {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            roots.push(q / qa);
            if q != 0.0 {
                roots.push(qc / q);
            }
        }
    }
    const SLACK: f64 = 1e-9;
    roots
        .into_iter()
        .filter_map(|s| {
            let den1 = c1 + d1 * s;
            let den2 = c2 + d2 * s;
            let t = if den1.abs() >= den2.abs() {
                if den1 == 0.0 {
                    return None;
                }
                -(a1 + b1 * s) / den1
            } else {
                -(a2 + b2 * s) / den2
            };
            let inside = (-SLACK..=1.0 + SLACK).contains(&s) && (-SLACK..=1.0 + SLACK).contains(&t);
            inside.then(|| [s.clamp(0.0, 1.0), t.clamp(0.0, 1.0)])
        })
        .min_by(|p, q| {
            let dp = (p[0] - 0.5).hypot(p[1] - 0.5);
            let dq = (q[0] - 0.5).hypot(q[1] - 0.5);
            dp.total_cmp(&dq)
        })
}

/// Detections of one field, with scan diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub observations: Vec<VortexObservation>,
    /// Plaquettes skipped because a corner value was exactly zero.
    pub skipped: usize,
    /// Plaquettes whose winding has magnitude above one (not resolved further).
    pub high_degree: usize,
}

impl Detection {
    pub fn total_degree(&self) -> i32 {
        self.observations.iter().map(|o| o.degree).sum()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.observations.iter().map(|o| o.position).collect()
    }
}

/// Scans every plaquette in `(j, i)` order and reports those with nonzero winding.
pub fn detect_vortices(v: &ComplexField, t: f64) -> Result<Detection> {
    v.check_finite()?;
    let grid = *v.grid();
    let h = grid.h();
    let mut out = Detection::default();
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let c = corners(v, i, j);
            if c.iter().any(|&z| is_zero(z)) {
                out.skipped += 1;
                continue;
            }
            let degree = loop_winding(c);
            if degree == 0 {
                continue;
            }
            if degree.abs() > 1 {
                out.high_degree += 1;
            }
            let [s, tt] = bilinear_zero(c).unwrap_or([0.5, 0.5]);
            let [x0, y0] = grid.coords(i, j);
            let min_modulus = c.iter().map(|z| z[0].hypot(z[1])).fold(f64::INFINITY, f64::min);
            out.observations.push(VortexObservation {
                t,
                position: [x0 + s * h, y0 + tt * h],
                degree,
                min_modulus,
            });
        }
    }
    Ok(out)
}

/// Nodes with `|V| <= 1/2` farther than `radius` from every observation.
pub fn uncovered_core_nodes(
    v: &ComplexField,
    observations: &[VortexObservation],
    radius: f64,
) -> Vec<(usize, usize)> {
    let grid = v.grid();
    let m = v.modulus();
    (0..grid.len())
        .filter(|&k| m.values()[k] <= 0.5)
        .map(|k| grid.node(k))
        .filter(|&(i, j)| {
            let p = grid.coords(i, j);
            !observations.iter().any(|o| dist(o.position, p) <= radius)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexTrack {
    pub track_id: usize,
    pub observations: Vec<VortexObservation>,
    pub closed: bool,
}

impl VortexTrack {
    pub fn degree(&self) -> i32 {
        self.observations[0].degree
    }

    pub fn first(&self) -> &VortexObservation {
        &self.observations[0]
    }

    pub fn last(&self) -> &VortexObservation {
        self.observations.last().expect("tracks are never empty")
    }
}

/// Default matching radius: detection noise plus the distance a vortex can
/// cover in `interval` at speed `2 sup |grad omega|`.
pub fn default_jump_max(h: f64, interval: f64, sup_grad_omega: f64) -> f64 {
    10.0 * h + interval * 2.0 * sup_grad_omega
}

/// Extends open tracks with the detections of one snapshot.
///
/// Equal-degree (track, observation) pairs are assigned greedily in increasing
/// distance order; pairs farther apart than `jump_max` are refused. Open tracks
/// left unmatched are closed, and unmatched observations start new tracks.
pub fn match_tracks(
    mut tracks: Vec<VortexTrack>,
    now: &[VortexObservation],
    jump_max: f64,
) -> Vec<VortexTrack> {
    let mut pairs = Vec::new();
    for (ti, tr) in tracks.iter().enumerate() {
        if tr.closed {
            continue;
        }
        let last = tr.last();
        for (oi, obs) in now.iter().enumerate() {
            debug_assert!(obs.t > last.t, "observations must move forward in time");
            if obs.degree != last.degree {
                continue;
            }
            let d = dist(obs.position, last.position);
            if d <= jump_max {
                pairs.push((d, ti, oi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut obs_used = vec![false; now.len()];
    for (_, ti, oi) in pairs {
        if track_used[ti] || obs_used[oi] {
            continue;
        }
        track_used[ti] = true;
        obs_used[oi] = true;
        tracks[ti].observations.push(now[oi]);
    }
    for (tr, used) in tracks.iter_mut().zip(&track_used) {
        if !used {
            tr.closed = true;
        }
    }
    let mut next_id = tracks.iter().map(|t| t.track_id + 1).max().unwrap_or(0);
    for (obs, used) in now.iter().zip(&obs_used) {
        if !used {
            tracks.push(VortexTrack {
                track_id: next_id,
                observations: vec![*obs],
                closed: false,
            });
            next_id += 1;
        }
    }
    tracks
}

/// Detects and tracks vortices over a time-ordered sequence of fields.
pub fn track_fields<'a>(
    fields: impl IntoIterator<Item = (f64, &'a ComplexField)>,
    jump_max: f64,
) -> Result<(Vec<VortexTrack>, Vec<Detection>)> {
    let mut tracks = Vec::new();
    let mut detections = Vec::new();
    for (t, v) in fields {
        let det = detect_vortices(v, t)?;
        tracks = match_tracks(tracks, &det.observations, jump_max);
        detections.push(det);
    }
    Ok((tracks, detections))
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    track_id: usize,
    t: f64,
    x: f64,
    y: f64,
    degree: i32,
    min_modulus: f64,
}

/// Writes `track_id,t,x,y,degree,min_modulus`, one row per observation.
pub fn write_tracks_csv<W: Write>(tracks: &[VortexTrack], mut out: W) -> Result<()> {
    writeln!(out, "track_id,t,x,y,degree,min_modulus")?;
    for tr in tracks {
        for o in &tr.observations {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                tr.track_id, o.t, o.position[0], o.position[1], o.degree, o.min_modulus
            )?;
        }
    }
    Ok(())
}

pub fn read_tracks_csv<R: Read>(input: R) -> Result<Vec<VortexTrack>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut tracks: Vec<VortexTrack> = Vec::new();
    for row in reader.deserialize() {
        let row: TrackRow = row?;
        let obs = VortexObservation {
            t: row.t,
            position: [row.x, row.y],
            degree: row.degree,
            min_modulus: row.min_modulus,
        };
        match tracks.iter_mut().find(|t| t.track_id == row.track_id) {
            Some(t) => t.observations.push(obs),
            None => tracks.push(VortexTrack {
                track_id: row.track_id,
                observations: vec![obs],
                closed: true,
            }),
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid2D;
    use crate::glsolver::{initial_data, VortexSpec};

    fn unit(n: usize) -> Grid2D {
        Grid2D::unit_square(n).unwrap()
    }

    #[test]
    fn winding_of_simple_fields() {
        let g = unit(11);
        let c = [0.55, 0.45]; // centre of plaquette (5, 4)
        let one = ComplexField::constant(g, [1.0, 0.0]);
        assert_eq!(plaquette_winding(&one, 5, 4).unwrap(), 0);
        let z = ComplexField::from_fn(g, |p| [p[0] - c[0], p[1] - c[1]]).unwrap();
        assert_eq!(plaquette_winding(&z, 5, 4).unwrap(), 1);
        assert_eq!(plaquette_winding(&z, 3, 4).unwrap(), 0);
        let zbar = ComplexField::from_fn(g, |p| [p[0] - c[0], c[1] - p[1]]).unwrap();
        assert_eq!(plaquette_winding(&zbar, 5, 4).unwrap(), -1);
    }

    #[test]
    fn winding_with_zero_corner_is_undefined() {
        let g = unit(11);
        let z = ComplexField::from_fn(g, |p| [p[0] - 0.5, p[1] - 0.5]).unwrap();
        assert!(matches!(
            plaquette_winding(&z, 5, 5),
            Err(Error::UndefinedWinding { i: 5, j: 5 })
        ));
        let det = detect_vortices(&z, 0.0).unwrap();
        assert_eq!(det.skipped, 4);
    }

    #[test]
    fn uniform_field_has_no_vortices() {
        let det = detect_vortices(&ComplexField::constant(unit(9), [0.0, 1.0]), 0.0).unwrap();
        assert!(det.observations.is_empty());
    }

    #[test]
    fn single_vortex_is_located() {
        let g = unit(41);
        let b = [0.513, 0.472];
        let s = initial_data(&VortexSpec::single(b, 1), 0.1, g).unwrap();
        let det = detect_vortices(&s.v, 0.0).unwrap();
        assert_eq!(det.observations.len(), 1);
        let o = det.observations[0];
        assert_eq!(o.degree, 1);
        assert!(dist(o.position, b) <= g.h());
    }

    #[test]
    fn dipole_is_located() {
        let g = unit(65);
        let spec = VortexSpec::new(vec![[0.3, 0.41], [0.71, 0.6]], vec![1, -1]).unwrap();
        let s = initial_data(&spec, 0.05, g).unwrap();
        let det = detect_vortices(&s.v, 0.0).unwrap();
        assert_eq!(det.observations.len(), 2);
        let mut degs: Vec<i32> = det.observations.iter().map(|o| o.degree).collect();
        degs.sort();
        assert_eq!(degs, vec![-1, 1]);
        assert_eq!(det.total_degree(), boundary_winding(&s.v).unwrap());
    }

    #[test]
    fn bilinear_refinement_is_exact_for_affine_fields() {
        let g = unit(11);
        let c = [0.537, 0.418];
        let z = ComplexField::from_fn(g, |p| [p[0] - c[0], 2.0 * (p[1] - c[1]) + 0.3 * (p[0] - c[0])]).unwrap();
        let det = detect_vortices(&z, 0.0).unwrap();
        assert_eq!(det.observations.len(), 1);
        assert!(dist(det.observations[0].position, c) < 1e-12);
    }

    #[test]
    fn core_nodes_are_covered_when_resolved() {
        let g = unit(81);
        let h = g.h();
        let spec = VortexSpec::new(vec![[0.3, 0.41], [0.71, 0.6]], vec![1, 1]).unwrap();
        let s = initial_data(&spec, 2.0 * h, g).unwrap();
        let det = detect_vortices(&s.v, 0.0).unwrap();
        assert!(uncovered_core_nodes(&s.v, &det.observations, h * 2f64.sqrt()).is_empty());
    }

    fn obs(t: f64, x: f64, y: f64, d: i32) -> VortexObservation {
        VortexObservation {
            t,
            position: [x, y],
            degree: d,
            min_modulus: 0.1,
        }
    }

    #[test]
    fn stationary_vortex_forms_one_track() {
        let mut tracks = Vec::new();
        for k in 0..6 {
            tracks = match_tracks(tracks, &[obs(k as f64, 0.5, 0.5, 1)], 0.1);
        }
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 6);
        assert!(!tracks[0].closed);
    }

    #[test]
    fn crossing_paths_do_not_swap() {
        let mut tracks = Vec::new();
        for k in 0..10 {
            let t = k as f64;
            let now = [obs(t, 0.2 + 0.02 * t, 0.3, 1), obs(t, 0.8 - 0.02 * t, 0.7, 1)];
            tracks = match_tracks(tracks, &now, 0.05);
        }
        assert_eq!(tracks.len(), 2);
        for tr in &tracks {
            let y0 = tr.first().position[1];
            assert!(tr.observations.iter().all(|o| o.position[1] == y0));
        }
    }

    #[test]
    fn annihilation_closes_both_tracks() {
        let mut tracks = Vec::new();
        for k in 0..4 {
            let t = k as f64;
            let now = [obs(t, 0.4 + 0.03 * t, 0.5, 1), obs(t, 0.6 - 0.03 * t, 0.5, -1)];
            tracks = match_tracks(tracks, &now, 0.05);
        }
        tracks = match_tracks(tracks, &[], 0.05);
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.closed && t.observations.len() == 4));
    }

    #[test]
    fn jumps_beyond_limit_start_new_tracks() {
        let tracks = match_tracks(Vec::new(), &[obs(0.0, 0.1, 0.1, 1)], 0.05);
        let tracks = match_tracks(tracks, &[obs(1.0, 0.5, 0.5, 1)], 0.05);
        assert_eq!(tracks.len(), 2);
        assert!(tracks[0].closed);
        assert_eq!(tracks[1].track_id, 1);
    }

    #[test]
    fn tracks_csv_round_trip() {
        let tracks = match_tracks(Vec::new(), &[obs(0.0, 0.1, 0.2, 1), obs(0.0, 0.7, 0.2, -1)], 0.05);
        let mut buf = Vec::new();
        write_tracks_csv(&tracks, &mut buf).unwrap();
        let back = read_tracks_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].observations, tracks[1].observations);
    }
}
