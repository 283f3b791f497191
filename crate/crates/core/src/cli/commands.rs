//! The `simulate`, `ode`, `sweep`, `compare` and `report` commands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{CenterSource, ExperimentConfig, ProfileKey};
use crate::diagnostics::{
    deviation_report, pde_vs_ode, rate_fit, summarize_series, total_energy, weighted_energy,
    write_deviations_csv, ComparisonReport, DeviationReport, EnergyReport, RateFit, SeriesSummary,
};
use crate::error::{Error, Result};
use crate::fields::{dist, write_complex_csv};
use crate::glsolver::{self, scheme_tolerance, stable_dt, MonitorLog};
use crate::odelaw::{self, OdeTrajectory, PinningSummary, SeparationReport};
use crate::pinning::{epsilon0, estimate_theta, Classification, PinningProfile};
use crate::vortex::{default_jump_max, read_tracks_csv, track_fields, write_tracks_csv, VortexTrack};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound {
            path: path.display().to_string(),
        },
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound {
            path: path.display().to_string(),
        },
        _ => Error::Io(e),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub max_modulus_sq: f64,
    /// `1 + eps^2 + 10 h^2`; enforced only when `A <= B`.
    pub modulus_bound: f64,
    pub a_below_b: bool,
    pub max_grad_sq: f64,
    pub violations: usize,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub profile: ProfileKey,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub epsilon_below_epsilon0: bool,
    pub h: f64,
    pub stable_dt: f64,
    pub dt: f64,
    pub jump_max: f64,
    pub snapshot_times: Vec<f64>,
    pub monitor_summary: MonitorSummary,
    pub monitors: MonitorLog,
    pub initial_weighted_energy: Option<f64>,
    /// Plaquettes skipped for a zero corner, per snapshot.
    pub detection_skipped: Vec<usize>,
    /// Plaquettes with winding of magnitude above one, per snapshot.
    pub detection_high_degree: Vec<usize>,
    /// Wall-clock seconds of the PDE integration; the only non-reproducible field.
    pub wall_clock_seconds: f64,
}

/// Everything one PDE run produces, kept in memory for sweep aggregation.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub epsilon: f64,
    pub dir: PathBuf,
    pub record: RunRecord,
    pub tracks: Vec<VortexTrack>,
    pub odes: Vec<OdeTrajectory>,
    /// Total energy and weighted report per snapshot.
    pub energies: Vec<(f64, EnergyReport)>,
    pub deviations: Vec<DeviationReport>,
    pub comparison: ComparisonReport,
}

impl RunResult {
    /// Last detected position of the longest-lived track.
    pub fn final_position(&self) -> Option<[f64; 2]> {
        self.tracks
            .iter()
            .max_by_key(|t| t.observations.len())
            .map(|t| t.last().position)
    }
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::config("output", "no output directory given (use --out)"))
}

fn write_energy_csv(path: &Path, rows: &[(f64, EnergyReport)]) -> Result<()> {
    use std::io::Write;
    let mut out = create(path)?;
    writeln!(out, "t,total_energy,total_weighted,total_plain,sigma")?;
    for (total, r) in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, total, r.total_weighted, r.total_plain, r.sigma
        )?;
    }
    Ok(())
}

/// One PDE run at `epsilon` written to `dir`.
pub fn simulate_one(cfg: &ExperimentConfig, epsilon: f64, dir: &Path) -> Result<RunResult> {
    fs::create_dir_all(dir)?;
    let profile = Arc::new(cfg.profile()?);
    let grid = *profile.grid();
    let spec = cfg.vortex_spec()?;
    let solver = cfg.solver_config(profile.clone(), epsilon)?;
    let e0 = epsilon0(&profile);
    let started = Instant::now();
    let out = glsolver::run(&solver, &spec)?;
    let wall = started.elapsed().as_secs_f64();
    log::info!("epsilon = {epsilon}: integrated to t = {} in {wall:.1} s", cfg.t_end);

    if cfg.write_snapshots {
        for (k, s) in out.snapshots.iter().enumerate() {
            write_complex_csv(&s.v, create(&dir.join(format!("snapshot_{k:04}.csv")))?)?;
        }
    }

    let jump_max = cfg.jump_max.unwrap_or_else(|| {
        default_jump_max(grid.h(), cfg.snapshot_interval(), profile.sup_grad_omega())
    });
    let (tracks, detections) = track_fields(out.snapshots.iter().map(|s| (s.t, &s.v)), jump_max)?;
    write_tracks_csv(&tracks, create(&dir.join("tracks.csv"))?)?;

    let odes = if spec.is_empty() {
        Vec::new()
    } else {
        odelaw::integrate(&profile, &spec.centers, cfg.t_end, cfg.ode_dt)?
    };
    let ode_positions = |t: f64| odes.iter().map(|o| o.position_at(t)).collect::<Vec<_>>();

    let mut energies = Vec::with_capacity(out.snapshots.len());
    let mut deviations = Vec::with_capacity(out.snapshots.len());
    for (s, det) in out.snapshots.iter().zip(&detections) {
        let detected = det.positions();
        let predicted = ode_positions(s.t);
        let rho_centers = if detected.is_empty() { &predicted } else { &detected };
        let total = total_energy(&s.v, &profile, epsilon)?;
        energies.push((total, weighted_energy(&s.v, &profile, epsilon, rho_centers, cfg.sigma, s.t)?));
        let dev_centers = match cfg.deviation_centers {
            CenterSource::Ode => &predicted,
            CenterSource::Detected => rho_centers,
        };
        deviations.push(deviation_report(&s.v, dev_centers, epsilon, cfg.delta, s.t)?);
    }
    write_energy_csv(&dir.join("energy.csv"), &energies)?;
    write_deviations_csv(&deviations, create(&dir.join("deviations.csv"))?)?;

    let comparison = pde_vs_ode(&tracks, &odes)?;
    write_json(&dir.join("compare.json"), &comparison)?;

    let a_below_b = profile.a_below_b();
    let record = RunRecord {
        config: cfg.clone(),
        profile: cfg.profile_key()?,
        epsilon,
        epsilon0: e0,
        epsilon_below_epsilon0: epsilon < e0,
        h: grid.h(),
        stable_dt: stable_dt(&solver),
        dt: out.dt,
        jump_max,
        snapshot_times: out.snapshot_times(),
        monitor_summary: MonitorSummary {
            max_modulus_sq: out.monitors.max_modulus_sq_overall(),
            modulus_bound: 1.0 + epsilon * epsilon + scheme_tolerance(&grid),
            a_below_b,
            max_grad_sq: out.monitors.max_grad_sq.iter().copied().fold(0.0, f64::max),
            violations: out.monitors.violations.len(),
        },
        monitors: out.monitors,
        initial_weighted_energy: out.initial_weighted_energy,
        detection_skipped: detections.iter().map(|d| d.skipped).collect(),
        detection_high_degree: detections.iter().map(|d| d.high_degree).collect(),
        wall_clock_seconds: wall,
    };
    write_json(&dir.join("run.json"), &record)?;
    Ok(RunResult {
        epsilon,
        dir: dir.to_path_buf(),
        record,
        tracks,
        odes,
        energies,
        deviations,
        comparison,
    })
}

/// `simulate`: a single-epsilon run directory.
pub fn simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunResult> {
    let eps = cfg.epsilons();
    if eps.len() != 1 {
        return Err(Error::config(
            "epsilon",
            format!("simulate takes a single value, got {} (use sweep)", eps.len()),
        ));
    }
    let dir = output_dir(cfg, out)?;
    let profile = cfg.profile()?;
    cfg.warn_epsilon0(&profile);
    simulate_one(cfg, eps[0], &dir)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub location: [f64; 2],
    pub theta1: f64,
    pub theta2: f64,
}

/// Contents of `pinning.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinningRecord {
    pub profile: ProfileKey,
    pub t_end: f64,
    pub dt: f64,
    pub tol: f64,
    pub trajectories: Vec<PinningSummary>,
    pub separation: SeparationReport,
    /// Gradient-inequality constants at each distinct non-degenerate limit.
    pub theta: Vec<ThetaEstimate>,
}

/// `ode`: trajectories of the limiting law from the configured vortex centres.
pub fn ode(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PinningRecord> {
    if cfg.vortex_centers.is_empty() {
        return Err(Error::config("vortex_centers", "the ODE needs at least one start"));
    }
    let dir = output_dir(cfg, out)?;
    fs::create_dir_all(&dir)?;
    let profile = cfg.profile()?;
    let trajs = odelaw::integrate(&profile, &cfg.vortex_centers, cfg.ode_horizon(), cfg.ode_dt)?;
    odelaw::write_ode_csv(&trajs, create(&dir.join("ode.csv"))?)?;
    let summaries = odelaw::summarize(&trajs, &profile, cfg.pinning_tol)?;
    let separation = if trajs.iter().all(|t| !t.exited) {
        odelaw::separation_report(&trajs, &cfg.confinement)?
    } else {
        log::warn!("a trajectory left the domain; separation is evaluated on the common prefix");
        let n = trajs.iter().map(|t| t.times.len()).min().unwrap_or(0);
        let clipped: Vec<OdeTrajectory> = trajs
            .iter()
            .map(|t| OdeTrajectory {
                times: t.times[..n].to_vec(),
                points: t.points[..n].to_vec(),
                ..t.clone()
            })
            .collect();
        odelaw::separation_report(&clipped, &cfg.confinement)?
    };
    let theta = theta_estimates(&profile, &summaries, cfg)?;
    let record = PinningRecord {
        profile: cfg.profile_key()?,
        t_end: cfg.ode_horizon(),
        dt: cfg.ode_dt,
        tol: cfg.pinning_tol,
        trajectories: summaries,
        separation,
        theta,
    };
    write_json(&dir.join("pinning.json"), &record)?;
    Ok(record)
}

fn theta_estimates(
    profile: &PinningProfile,
    summaries: &[PinningSummary],
    cfg: &ExperimentConfig,
) -> Result<Vec<ThetaEstimate>> {
    let mut out: Vec<ThetaEstimate> = Vec::new();
    for s in summaries {
        let Some(cp) = s.pinning.critical_point() else {
            continue;
        };
        if cp.classification == Classification::Degenerate
            || out.iter().any(|e| dist(e.location, cp.location) < 1e-6)
        {
            continue;
        }
        let radius = cfg
            .theta_radius
            .min(0.99 * profile.grid().distance_to_boundary(cp.location));
        match estimate_theta(profile, cp, radius, 4096, cfg.seed) {
            Ok((theta1, theta2)) => out.push(ThetaEstimate {
                location: cp.location,
                theta1,
                theta2,
            }),
            Err(e) => log::warn!("theta estimate at {:?} skipped: {e}", cp.location),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub dir: String,
    pub pde_vs_ode_max_error: f64,
    pub final_position: Option<[f64; 2]>,
    pub total_energy_final: f64,
    pub total_weighted_final: f64,
    pub max_modulus_sq: f64,
}

/// Contents of `rates.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesRecord {
    /// Snapshot time at which the rate fits are taken.
    pub t: f64,
    pub sup_dev: RateFit,
    pub l2_dev: RateFit,
    pub h1_dev: RateFit,
    /// Fits of the per-epsilon median and best over snapshots with `t > 0`.
    pub sup_dev_median: Option<RateFit>,
    pub sup_dev_best: Option<RateFit>,
    pub per_epsilon: Vec<EpsilonSummary>,
}

fn nearest_snapshot(devs: &[DeviationReport], t: f64) -> &DeviationReport {
    devs.iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .expect("runs store at least one snapshot")
}

fn series_fit(runs: &[RunResult], pick: impl Fn(&SeriesSummary) -> f64) -> Option<RateFit> {
    let pairs: Option<Vec<(f64, f64)>> = runs
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.deviations.iter().filter(|d| d.t > 0.0).map(|d| d.sup_dev).collect();
            summarize_series(&v).map(|s| (r.epsilon, pick(&s)))
        })
        .collect();
    pairs.and_then(|p| rate_fit(&p).ok())
}

pub fn rates(runs: &[RunResult], t: f64) -> Result<RatesRecord> {
    let at = |f: fn(&DeviationReport) -> f64| -> Result<RateFit> {
        let pairs: Vec<(f64, f64)> = runs
            .iter()
            .map(|r| (r.epsilon, f(nearest_snapshot(&r.deviations, t))))
            .collect();
        rate_fit(&pairs)
    };
    Ok(RatesRecord {
        t,
        sup_dev: at(|d| d.sup_dev)?,
        l2_dev: at(|d| d.l2_dev)?,
        h1_dev: at(|d| d.h1_dev)?,
        sup_dev_median: series_fit(runs, |s| s.median),
        sup_dev_best: series_fit(runs, |s| s.best),
        per_epsilon: runs
            .iter()
            .map(|r| {
                let (total, last) = *r.energies.last().expect("runs store at least one snapshot");
                EpsilonSummary {
                    epsilon: r.epsilon,
                    dir: r.dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                    pde_vs_ode_max_error: r.comparison.max_error,
                    final_position: r.final_position(),
                    total_energy_final: total,
                    total_weighted_final: last.total_weighted,
                    max_modulus_sq: r.record.monitor_summary.max_modulus_sq,
                }
            })
            .collect(),
    })
}

/// Result of a sweep: per-epsilon runs in configuration order plus the fits.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<RunResult>,
    pub rates: RatesRecord,
}

/// `sweep`: one run directory per epsilon plus aggregate `deviations.csv` and
/// `rates.json`. Up to `jobs` runs proceed concurrently; a failure aborts the
/// remaining queue but completed run directories are kept.
pub fn sweep(cfg: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<SweepResult> {
    let eps = cfg.epsilons();
    if eps.len() < 3 {
        return Err(Error::config("epsilon", "a sweep needs at least three values"));
    }
    let dir = output_dir(cfg, out)?;
    fs::create_dir_all(&dir)?;
    let profile = cfg.profile()?;
    cfg.warn_epsilon0(&profile);

    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(usize::MAX);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> = Mutex::new((0..eps.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, eps.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= eps.len() || failed.load(Ordering::SeqCst) != usize::MAX {
                    break;
                }
                let run_dir = dir.join(format!("eps_{k}"));
                let result = simulate_one(cfg, eps[k], &run_dir);
                if result.is_err() {
                    failed.fetch_min(k, Ordering::SeqCst);
                }
                slots.lock().expect("no panics while holding the lock")[k] = Some(result);
            });
        }
    });
    let mut runs = Vec::with_capacity(eps.len());
    for (k, slot) in slots.into_inner().expect("threads joined").into_iter().enumerate() {
        match slot {
            Some(Ok(r)) => runs.push(r),
            Some(Err(e)) => {
                log::error!("epsilon = {} failed; completed runs are kept in {}", eps[k], dir.display());
                return Err(e);
            }
            None => {}
        }
    }
    if runs.len() != eps.len() {
        return Err(Error::Refused("sweep aborted before every run finished".into()));
    }
    let all: Vec<DeviationReport> = runs.iter().flat_map(|r| r.deviations.iter().copied()).collect();
    write_deviations_csv(&all, create(&dir.join("deviations.csv"))?)?;
    let rates = rates(&runs, cfg.deviation_at())?;
    write_json(&dir.join("rates.json"), &rates)?;
    Ok(SweepResult { runs, rates })
}

/// `compare`: PDE tracks of `run_dir` against the trajectories in `ode_dir`.
pub fn compare(run_dir: &Path, ode_dir: &Path, out: Option<&Path>) -> Result<ComparisonReport> {
    let run = read_json(&run_dir.join("run.json"))?;
    let pin = read_json(&ode_dir.join("pinning.json"))?;
    if run.get("profile") != pin.get("profile") {
        return Err(Error::config(
            "profile",
            format!(
                "{} and {} were produced with different pinning profiles",
                run_dir.display(),
                ode_dir.display()
            ),
        ));
    }
    let tracks = read_tracks_csv(open(&run_dir.join("tracks.csv"))?)?;
    let odes = odelaw::read_ode_csv(open(&ode_dir.join("ode.csv"))?)?;
    let report = pde_vs_ode(&tracks, &odes)?;
    let dest = out.unwrap_or(run_dir);
    fs::create_dir_all(dest)?;
    write_json(&dest.join("compare.json"), &report)?;
    Ok(report)
}

fn fmt_fit(name: &str, f: &RateFit) -> String {
    format!("| {name} | {:.3} | {:.3} | {:.4} |\n", f.slope, f.intercept, f.r_squared)
}

/// `report`: a Markdown summary of a run or sweep directory, also written to
/// `report.md` inside it.
pub fn report(dir: &Path) -> Result<String> {
    let mut md = String::new();
    let rates_path = dir.join("rates.json");
    let run_path = dir.join("run.json");
    if rates_path.exists() {
        let r: RatesRecord = serde_json::from_value(read_json(&rates_path)?)?;
        let _ = writeln!(md, "# Sweep {}\n", dir.display());
        let _ = writeln!(md, "Rate fits of deviations at t = {}:\n", r.t);
        md.push_str("| quantity | slope | intercept | r^2 |\n|---|---|---|---|\n");
        md.push_str(&fmt_fit("sup_dev", &r.sup_dev));
        md.push_str(&fmt_fit("l2_dev", &r.l2_dev));
        md.push_str(&fmt_fit("h1_dev", &r.h1_dev));
        if let Some(f) = &r.sup_dev_median {
            md.push_str(&fmt_fit("sup_dev (median over t)", f));
        }
        if let Some(f) = &r.sup_dev_best {
            md.push_str(&fmt_fit("sup_dev (best over t)", f));
        }
        md.push_str("\n| epsilon | PDE-ODE max error | final position | energy | weighted energy |\n");
        md.push_str("|---|---|---|---|---|\n");
        for e in &r.per_epsilon {
            let pos = e
                .final_position
                .map(|p| format!("({:.4}, {:.4})", p[0], p[1]))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                md,
                "| {} | {:.4} | {pos} | {:.4} | {:.4e} |",
                e.epsilon, e.pde_vs_ode_max_error, e.total_energy_final, e.total_weighted_final
            );
        }
    } else if run_path.exists() {
        let r: RunRecord = serde_json::from_value(read_json(&run_path)?)?;
        let _ = writeln!(md, "# Run {}\n", dir.display());
        let _ = writeln!(md, "- epsilon = {} (epsilon0 = {:.4})", r.epsilon, r.epsilon0);
        let _ = writeln!(md, "- h = {:.6}, dt = {:.3e} (stable dt {:.3e})", r.h, r.dt, r.stable_dt);
        let m = &r.monitor_summary;
        let _ = writeln!(
            md,
            "- max |V|^2 = {:.6} (bound {:.6}, enforced: {})",
            m.max_modulus_sq, m.modulus_bound, m.a_below_b
        );
        let _ = writeln!(md, "- monitor violations: {}", m.violations);
        let _ = writeln!(md, "- snapshots: {}", r.snapshot_times.len());
        let tracks_path = dir.join("tracks.csv");
        if tracks_path.exists() {
            let tracks = read_tracks_csv(open(&tracks_path)?)?;
            let _ = writeln!(md, "- tracks: {}", tracks.len());
            for t in &tracks {
                let (a, b) = (t.first(), t.last());
                let _ = writeln!(
                    md,
                    "  - track {} (degree {}): ({:.4}, {:.4}) at t = {} to ({:.4}, {:.4}) at t = {}",
                    t.track_id, t.degree(), a.position[0], a.position[1], a.t, b.position[0], b.position[1], b.t
                );
            }
        }
    } else {
        return Err(Error::FileNotFound {
            path: run_path.display().to_string(),
        });
    }
    fs::write(dir.join("report.md"), &md)?;
    Ok(md)
}
