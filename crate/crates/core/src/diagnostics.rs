//! Energy functionals, distance-weighted energies, deviation norms away from
//! vortex cores, convergence-rate fits and PDE-versus-ODE trajectory errors.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{dist, gradient, gradient_sq, masked_norms, ComplexField, RegionMask, ScalarField};
use crate::odelaw::OdeTrajectory;
use crate::pinning::PinningProfile;
use crate::vortex::VortexTrack;

/// `E(V) = (e^omega / 2) [|grad V|^2 + (B / (2 eps^2)) (1 - |V|^2)^2]` at every node.
pub fn energy_density(v: &ComplexField, profile: &PinningProfile, epsilon: f64) -> Result<ScalarField> {
    if v.grid() != profile.grid() {
        return Err(Error::GridMismatch);
    }
    let g2 = gradient_sq(v)?;
    let m2 = v.modulus_sq();
    let omega = profile.omega_field().values();
    let b = profile.b_field().values();
    let inv = 1.0 / (2.0 * epsilon * epsilon);
    let values = (0..v.grid().len())
        .map(|k| {
            let d = 1.0 - m2.values()[k];
            0.5 * omega[k].exp() * (g2.values()[k] + b[k] * inv * d * d)
        })
        .collect();
    Ok(ScalarField::from_parts_unchecked(*v.grid(), values))
}

/// `h^2 sum E(V)` over all nodes.
pub fn total_energy(v: &ComplexField, profile: &PinningProfile, epsilon: f64) -> Result<f64> {
    let e = energy_density(v, profile, epsilon)?;
    let h = v.grid().h();
    Ok(h * h * e.values().iter().sum::<f64>())
}

/// Distance weight: `r^2` up to `sigma`, `sigma^2` beyond `2 sigma`, and a cubic
/// Hermite bridge in between that is C^1 at both ends.
pub fn cutoff_weight(r: f64, sigma: f64) -> f64 {
    if r <= sigma {
        r * r
    } else if r >= 2.0 * sigma {
        sigma * sigma
    } else {
        // values sigma^2 at both ends, slopes 2 sigma and 0
        let s = (r - sigma) / sigma;
        sigma * sigma * (1.0 + 2.0 * s * (1.0 - s) * (1.0 - s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `h^2 sum phi(rho) E(V)` with `rho` the distance to the nearest centre.
    pub total_weighted: f64,
    /// `h^2 sum E(V)` over nodes farther than `sigma` from every centre.
    pub total_plain: f64,
    pub sigma: f64,
}

fn nearest(p: [f64; 2], centers: &[[f64; 2]]) -> f64 {
    centers.iter().map(|&c| dist(p, c)).fold(f64::INFINITY, f64::min)
}

/// Weighted and core-excluded energies around `centers` (typically the
/// detected vortex positions at time `t`).
pub fn weighted_energy(
    v: &ComplexField,
    profile: &PinningProfile,
    epsilon: f64,
    centers: &[[f64; 2]],
    sigma: f64,
    t: f64,
) -> Result<EnergyReport> {
    if !(sigma > 0.0) {
        return Err(Error::config("sigma", "must be positive"));
    }
    let e = energy_density(v, profile, epsilon)?;
    let grid = *v.grid();
    let h2 = grid.h() * grid.h();
    let mut weighted = 0.0;
    let mut plain = 0.0;
    for (k, &ek) in e.values().iter().enumerate() {
        let (i, j) = grid.node(k);
        let rho = nearest(grid.coords(i, j), centers);
        weighted += cutoff_weight(rho, sigma) * ek;
        if rho >= sigma {
            plain += ek;
        }
    }
    Ok(EnergyReport {
        t,
        total_weighted: h2 * weighted,
        total_plain: h2 * plain,
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub epsilon: f64,
    pub delta: f64,
    pub t: f64,
    /// `max | |V| - 1 |` outside the `delta`-balls.
    pub sup_dev: f64,
    /// Discrete `L^2` norm of `|V| - 1` outside the balls.
    pub l2_dev: f64,
    /// Discrete `H^1` norm of `|V| - 1` outside the balls.
    pub h1_dev: f64,
    /// Whether every node with `|V| <= 1/2` lies inside some ball.
    pub contained: bool,
}

/// How far `|V|` is from one away from the vortex cores.
pub fn deviation_report(
    v: &ComplexField,
    centers: &[[f64; 2]],
    epsilon: f64,
    delta: f64,
    t: f64,
) -> Result<DeviationReport> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::config("delta", "must lie in (0, 1/4)"));
    }
    let grid = *v.grid();
    let mask = RegionMask::excluding_balls(grid, centers, delta);
    let m = v.modulus();
    let dev = m.map(|x| x - 1.0)?;
    let (sup_dev, l2_dev) = masked_norms(&dev, &mask)?;
    let (gx, gy) = gradient(&m)?;
    let h2 = grid.h() * grid.h();
    let grad_sq: f64 = (0..grid.len())
        .filter(|&k| mask.flags()[k])
        .map(|k| gx.values()[k].powi(2) + gy.values()[k].powi(2))
        .sum();
    let h1_dev = (l2_dev * l2_dev + h2 * grad_sq).sqrt();
    let contained = (0..grid.len())
        .filter(|&k| m.values()[k] <= 0.5)
        .all(|k| {
            let (i, j) = grid.node(k);
            nearest(grid.coords(i, j), centers) < delta
        });
    Ok(DeviationReport {
        epsilon,
        delta,
        t,
        sup_dev,
        l2_dev,
        h1_dev,
        contained,
    })
}

/// Median and best (smallest) of a quantity over a set of snapshot reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub median: f64,
    pub best: f64,
}

pub fn summarize_series(values: &[f64]) -> Option<SeriesSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Some(SeriesSummary { median, best: v[0] })
}

/// Writes `epsilon,delta,t,sup_dev,l2_dev,h1_dev,contained`.
pub fn write_deviations_csv<W: Write>(reports: &[DeviationReport], mut out: W) -> Result<()> {
    writeln!(out, "epsilon,delta,t,sup_dev,l2_dev,h1_dev,contained")?;
    for r in reports {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.epsilon, r.delta, r.t, r.sup_dev, r.l2_dev, r.h1_dev, r.contained
        )?;
    }
    Ok(())
}

/// Least-squares fit of `ln value = slope ln eps + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::config("epsilon", "a rate fit needs at least three points"));
    }
    if pairs.iter().any(|&(e, v)| !(e > 0.0 && v > 0.0 && e.is_finite() && v.is_finite())) {
        return Err(Error::Refused("rate fits need positive finite values".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Refused("rate fits need distinct epsilon values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        pairs: pairs.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}

/// Distance between one PDE track and its matched ODE trajectory over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackComparison {
    pub track_id: usize,
    pub traj_id: usize,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub final_error: f64,
    /// Least-squares slope of error against time.
    pub trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: Vec<TrackComparison>,
    /// Tracks that started after the first snapshot or found no trajectory.
    pub unmatched_tracks: Vec<usize>,
    pub max_error: f64,
}

fn time_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return 0.0;
    }
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let sty: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    if stt == 0.0 {
        0.0
    } else {
        sty / stt
    }
}

/// Pairs tracks present at the first snapshot with ODE trajectories by
/// nearest initial position, then measures the distance at every tracked time
/// within the trajectory's range.
pub fn pde_vs_ode(tracks: &[VortexTrack], odes: &[OdeTrajectory]) -> Result<ComparisonReport> {
    let t0 = tracks
        .iter()
        .map(|t| t.first().t)
        .fold(f64::INFINITY, f64::min);
    let mut candidates = Vec::new();
    let mut unmatched = Vec::new();
    for (ti, tr) in tracks.iter().enumerate() {
        if tr.first().t > t0 {
            unmatched.push(tr.track_id);
            continue;
        }
        for (oi, ode) in odes.iter().enumerate() {
            candidates.push((dist(tr.first().position, ode.initial), ti, oi));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut ode_used = vec![false; odes.len()];
    let mut assigned = Vec::new();
    for (_, ti, oi) in candidates {
        if track_used[ti] || ode_used[oi] {
            continue;
        }
        track_used[ti] = true;
        ode_used[oi] = true;
        assigned.push((ti, oi));
    }
    for (ti, tr) in tracks.iter().enumerate() {
        if !track_used[ti] && tr.first().t <= t0 {
            unmatched.push(tr.track_id);
        }
    }
    assigned.sort();
    let mut pairs = Vec::with_capacity(assigned.len());
    for (ti, oi) in assigned {
        let (tr, ode) = (&tracks[ti], &odes[oi]);
        let t_max = ode.t_end() * (1.0 + 1e-12);
        let (times, errors): (Vec<f64>, Vec<f64>) = tr
            .observations
            .iter()
            .filter(|o| o.t <= t_max)
            .map(|o| (o.t, dist(o.position, ode.position_at(o.t))))
            .unzip();
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        pairs.push(TrackComparison {
            track_id: tr.track_id,
            traj_id: oi,
            final_error: errors.last().copied().unwrap_or(0.0),
            trend: time_slope(&times, &errors),
            times,
            errors,
            max_error,
        });
    }
    unmatched.sort();
    let max_error = pairs.iter().map(|p| p.max_error).fold(0.0, f64::max);
    Ok(ComparisonReport {
        pairs,
        unmatched_tracks: unmatched,
        max_error,
    })
}
