//! Time integration of
//!
//! ```text
//! dV/dt = lap V + grad(omega) . grad V + A V + (B V / eps^2) (1 - |V|^2)   in the interior
//! V = g                                                                   on the boundary
//! ```
//!
//! Two schemes are provided. `Explicit` is forward Euler on the full right-hand
//! side and needs `dt = O(eps^2)`. `Strang` splits off the reaction, whose
//! modulus obeys the logistic law `d(r^2)/dt = (2B/eps^2) r^2 (1 - r^2)` and is
//! integrated in closed form, leaving only the diffusive restriction `dt = O(h^2)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::fields::{dist, gradient_sq, ComplexField, Grid2D};
use crate::pinning::{epsilon0, PinningProfile};

pub mod reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    Explicit,
    Strang,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt_policy: DtPolicy,
    pub cfl_safety: f64,
    pub snapshot_every: f64,
    pub grid: Grid2D,
    pub profile: Arc<PinningProfile>,
    /// Frozen constant `C` for the gradient monitor `eps^2 max|grad V|^2 <= C`.
    pub gradient_constant: Option<f64>,
}

impl SolverConfig {
    pub fn new(
        profile: Arc<PinningProfile>,
        epsilon: f64,
        t_end: f64,
        dt_policy: DtPolicy,
    ) -> Result<Self> {
        let config = SolverConfig {
            epsilon,
            t_end,
            dt_policy,
            cfl_safety: 0.9,
            snapshot_every: t_end.max(f64::MIN_POSITIVE),
            grid: *profile.grid(),
            profile,
            gradient_constant: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_snapshot_every(mut self, every: f64) -> Result<Self> {
        self.snapshot_every = every;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cfl_safety(mut self, safety: f64) -> Result<Self> {
        self.cfl_safety = safety;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be non-negative"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config("cfl_safety", "must lie in (0, 1]"));
        }
        if !(self.snapshot_every > 0.0 && self.snapshot_every.is_finite()) {
            return Err(Error::config("snapshot_every", "must be positive"));
        }
        if self.grid != *self.profile.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Logs a warning and returns `false` when `epsilon >= epsilon0(profile)`.
    pub fn check_epsilon0(&self) -> bool {
        let e0 = epsilon0(&self.profile);
        if self.epsilon >= e0 {
            log::warn!(
                "epsilon = {} is not below epsilon0 = {e0:.6}; modulus bounds are not guaranteed",
                self.epsilon
            );
            false
        } else {
            true
        }
    }
}

/// Vortex centres and their integer degrees.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VortexSpec {
    pub centers: Vec<[f64; 2]>,
    pub degrees: Vec<i32>,
}

impl VortexSpec {
    pub fn new(centers: Vec<[f64; 2]>, degrees: Vec<i32>) -> Result<Self> {
        if centers.len() != degrees.len() {
            return Err(Error::config(
                "vortices",
                format!("{} centers but {} degrees", centers.len(), degrees.len()),
            ));
        }
        for (a, ca) in centers.iter().enumerate() {
            if !ca.iter().all(|v| v.is_finite()) {
                return Err(Error::config("vortices", format!("center {a} is not finite")));
            }
            if centers[..a].iter().any(|cb| cb == ca) {
                return Err(Error::config("vortices", format!("center {a} is repeated")));
            }
        }
        Ok(VortexSpec { centers, degrees })
    }

    pub fn empty() -> Self {
        VortexSpec::default()
    }

    pub fn single(center: [f64; 2], degree: i32) -> Self {
        VortexSpec {
            centers: vec![center],
            degrees: vec![degree],
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn total_degree(&self) -> i32 {
        self.degrees.iter().sum()
    }

    fn validate_for(&self, grid: &Grid2D) -> Result<()> {
        let margin = 3.0 * grid.h();
        for (k, &c) in self.centers.iter().enumerate() {
            if grid.distance_to_boundary(c) < margin {
                return Err(Error::config(
                    "vortices",
                    format!("center {k} at {c:?} lies within 3h of the boundary"),
                ));
            }
        }
        Ok(())
    }
}

/// Dirichlet data on the boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    nodes: Vec<usize>,
    values: Vec<[f64; 2]>,
}

impl BoundaryTrace {
    /// Node indices in counter-clockwise loop order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    fn apply(&self, re: &mut [f64], im: &mut [f64]) {
        for (&k, v) in self.nodes.iter().zip(&self.values) {
            re[k] = v[0];
            im[k] = v[1];
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub v: ComplexField,
    pub g: BoundaryTrace,
    pub step_count: u64,
}

/// The canonical multi-vortex field
/// `prod_j ((z - b_j)/|z - b_j|)^{d_j} tanh(|z - b_j| / eps)` at `p`.
pub fn vortex_product(spec: &VortexSpec, epsilon: f64, p: [f64; 2]) -> [f64; 2] {
    let mut modulus = 1.0;
    let mut phase = 0.0;
    for (c, &d) in spec.centers.iter().zip(&spec.degrees) {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let r = dx.hypot(dy);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        modulus *= (r / epsilon).tanh();
        phase += d as f64 * dy.atan2(dx);
    }
    let (s, c) = phase.sin_cos();
    [modulus * c, modulus * s]
}

/// Builds multi-vortex initial data and its unit-modulus boundary trace.
pub fn initial_data(spec: &VortexSpec, epsilon: f64, grid: Grid2D) -> Result<SolverState> {
    if !(epsilon > 0.0) {
        return Err(Error::config("epsilon", "must be positive"));
    }
    spec.validate_for(&grid)?;
    let v = ComplexField::from_fn(grid, |p| vortex_product(spec, epsilon, p))?;
    let nodes: Vec<usize> = grid
        .boundary_loop()
        .into_iter()
        .map(|(i, j)| grid.index(i, j))
        .collect();
    let values = nodes
        .iter()
        .map(|&k| {
            let (a, b) = (v.re()[k], v.im()[k]);
            let r = a.hypot(b);
            [a / r, b / r]
        })
        .collect();
    let g = BoundaryTrace { nodes, values };
    let mut state = SolverState {
        t: 0.0,
        v,
        g,
        step_count: 0,
    };
    let (re, im) = state.v.parts_mut();
    state.g.apply(re, im);
    Ok(state)
}

/// Largest stable time step for the configured scheme.
pub fn stable_dt(config: &SolverConfig) -> f64 {
    let h = config.grid.h();
    let transport = h * h / (4.0 + 2.0 * h * config.profile.sup_grad_omega());
    let dt = match config.dt_policy {
        DtPolicy::Strang => transport,
        DtPolicy::Explicit => {
            let reaction =
                config.epsilon * config.epsilon / (2.0 * config.profile.b_field().max());
            transport.min(reaction)
        }
    };
    config.cfl_safety * dt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EulerMode {
    FullReaction,
    ThenReactHalf,
}

/// Reusable stepping kernel with precomputed coefficients for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid2D,
    policy: DtPolicy,
    dt: f64,
    inv_eps2: f64,
    gx: Vec<f64>,
    gy: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `exp(-2 B (dt/2) / eps^2)` per node, for the half-step reaction.
    half_decay: Vec<f64>,
    scratch_re: Vec<f64>,
    scratch_im: Vec<f64>,
}

impl Stepper {
    pub fn new(config: &SolverConfig, dt: f64) -> Result<Self> {
        config.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        let p = &config.profile;
        let (gx, gy) = p.grad_omega_fields();
        let inv_eps2 = 1.0 / (config.epsilon * config.epsilon);
        let half_decay = p
            .b_field()
            .values()
            .iter()
            .map(|b| (-b * dt * inv_eps2).exp())
            .collect();
        let n = config.grid.len();
        Ok(Stepper {
            grid: config.grid,
            policy: config.dt_policy,
            dt,
            inv_eps2,
            gx: gx.values().to_vec(),
            gy: gy.values().to_vec(),
            a: p.a_field().values().to_vec(),
            b: p.b_field().values().to_vec(),
            half_decay,
            scratch_re: vec![0.0; n],
            scratch_im: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Exact reaction flow over half a step, interior nodes only.
    fn react_half(&self, re: &mut [f64], im: &mut [f64]) {
        let nx = self.grid.nx();
        for j in 1..self.grid.ny() - 1 {
            for k in j * nx + 1..(j + 1) * nx - 1 {
                let r2 = re[k] * re[k] + im[k] * im[k];
                let s = 1.0 / (r2 + (1.0 - r2) * self.half_decay[k]).sqrt();
                re[k] *= s;
                im[k] *= s;
            }
        }
    }

    /// Forward-Euler update of the interior into the scratch buffers, optionally
    /// followed by the half-step reaction at each updated node.
    /// Returns false when a non-finite value was produced.
    fn euler_into_scratch(&mut self, re: &[f64], im: &[f64], mode: EulerMode) -> bool {
        let nx = self.grid.nx();
        let h = self.grid.h();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let dt = self.dt;
        let mut finite = true;
        for j in 1..self.grid.ny() - 1 {
            let row = j * nx..(j + 1) * nx;
            let (rc, rs, rn) = (&re[row.clone()], &re[row.start - nx..row.end - nx], &re[row.start + nx..row.end + nx]);
            let (ic, is, inn) = (&im[row.clone()], &im[row.start - nx..row.end - nx], &im[row.start + nx..row.end + nx]);
            let (gx, gy) = (&self.gx[row.clone()], &self.gy[row.clone()]);
            let (a, b, decay) = (&self.a[row.clone()], &self.b[row.clone()], &self.half_decay[row.clone()]);
            let out_re = &mut self.scratch_re[row.clone()];
            let out_im = &mut self.scratch_im[row];
            for i in 1..nx - 1 {
                let (vr, vi) = (rc[i], ic[i]);
                let lap_r = (rc[i + 1] + rc[i - 1] + rn[i] + rs[i] - 4.0 * vr) * inv_h2;
                let lap_i = (ic[i + 1] + ic[i - 1] + inn[i] + is[i] - 4.0 * vi) * inv_h2;
                let (ax, ay) = (gx[i] * inv_2h, gy[i] * inv_2h);
                let adv_r = ax * (rc[i + 1] - rc[i - 1]) + ay * (rn[i] - rs[i]);
                let adv_i = ax * (ic[i + 1] - ic[i - 1]) + ay * (inn[i] - is[i]);
                let mut coef = a[i];
                if mode == EulerMode::FullReaction {
                    coef += b[i] * self.inv_eps2 * (1.0 - vr * vr - vi * vi);
                }
                let mut nr = vr + dt * (lap_r + adv_r + coef * vr);
                let mut ni = vi + dt * (lap_i + adv_i + coef * vi);
                if mode == EulerMode::ThenReactHalf {
                    let r2 = nr * nr + ni * ni;
                    let s = 1.0 / (r2 + (1.0 - r2) * decay[i]).sqrt();
                    nr *= s;
                    ni *= s;
                }
                finite &= nr.is_finite() & ni.is_finite();
                out_re[i] = nr;
                out_im[i] = ni;
            }
        }
        finite
    }

    /// Advances `state` by one step of the configured scheme.
    pub fn step(&mut self, state: &mut SolverState) -> Result<()> {
        match self.policy {
            DtPolicy::Explicit => self.step_explicit(state),
            DtPolicy::Strang => self.step_strang(state),
        }
    }

    pub fn step_explicit(&mut self, state: &mut SolverState) -> Result<()> {
        let finite = self.euler_into_scratch(state.v.re(), state.v.im(), EulerMode::FullReaction);
        self.finish(state, finite)
    }

    pub fn step_strang(&mut self, state: &mut SolverState) -> Result<()> {
        {
            let (re, im) = state.v.parts_mut();
            self.react_half(re, im);
        }
        let finite = self.euler_into_scratch(state.v.re(), state.v.im(), EulerMode::ThenReactHalf);
        self.finish(state, finite)
    }

    fn finish(&mut self, state: &mut SolverState, finite: bool) -> Result<()> {
        let (re, im) = state.v.parts_mut();
        std::mem::swap(re, &mut self.scratch_re);
        std::mem::swap(im, &mut self.scratch_im);
        state.t += self.dt;
        state.step_count += 1;
        let (re, im) = state.v.parts_mut();
        state.g.apply(re, im);
        if !finite {
            if let Err(Error::NonFinite { i, j }) = state.v.check_finite() {
                return Err(Error::BlowUp { t: state.t, i, j });
            }
        }
        Ok(())
    }
}

/// One forward-Euler step at the stable time step.
pub fn step_explicit(state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    let mut stepper = Stepper::new(config, stable_dt(config))?;
    let mut next = state.clone();
    stepper.step_explicit(&mut next)?;
    Ok(next)
}

/// One reaction-transport-reaction step at the stable time step.
pub fn step_strang(state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    let mut stepper = Stepper::new(config, stable_dt(config))?;
    let mut next = state.clone();
    stepper.step_strang(&mut next)?;
    Ok(next)
}

/// Closed-form modulus after the reaction flow `d(r^2)/dt = (2B/eps^2) r^2 (1 - r^2)`
/// over time `tau`.
pub fn reaction_modulus(r0: f64, b: f64, epsilon: f64, tau: f64) -> f64 {
    let r2 = r0 * r0;
    let e = (-2.0 * b * tau / (epsilon * epsilon)).exp();
    (r2 / (r2 + (1.0 - r2) * e)).sqrt()
}

/// Per-snapshot monitor series.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonitorLog {
    pub times: Vec<f64>,
    /// `max |V|^2` over all nodes.
    pub max_modulus_sq: Vec<f64>,
    /// `max |grad V|^2` over all nodes.
    pub max_grad_sq: Vec<f64>,
    /// Total Ginzburg-Landau energy `int E_eps` over the domain.
    pub energy: Vec<f64>,
    /// Human-readable records of bound violations; never fatal.
    pub violations: Vec<String>,
}

impl MonitorLog {
    pub fn max_modulus_sq_overall(&self) -> f64 {
        self.max_modulus_sq.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<SolverState>,
    pub monitors: MonitorLog,
    pub final_state: SolverState,
    pub dt: f64,
    /// `int rho^2 [|grad V0|^2 + (|V0|^2 - 1)^2 / (2 eps^2)]`, `None` without vortices.
    pub initial_weighted_energy: Option<f64>,
}

impl RunOutput {
    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

/// Tolerance of the discrete maximum principle checks.
pub fn scheme_tolerance(grid: &Grid2D) -> f64 {
    10.0 * grid.h() * grid.h()
}

fn record(log: &mut MonitorLog, state: &SolverState, config: &SolverConfig, a_below_b: bool) -> Result<()> {
    let eps = config.epsilon;
    let m2 = state.v.modulus_sq().max();
    let g2 = gradient_sq(&state.v)?.max();
    let energy = diagnostics::total_energy(&state.v, &config.profile, eps)?;
    if a_below_b && m2 > 1.0 + eps * eps + scheme_tolerance(&config.grid) {
        log.violations.push(format!(
            "t = {}: max |V|^2 = {m2} exceeds 1 + eps^2 + 10 h^2",
            state.t
        ));
    }
    if let Some(c) = config.gradient_constant {
        if state.t >= eps * eps && eps * eps * g2 > c {
            log.violations.push(format!(
                "t = {}: eps^2 max |grad V|^2 = {} exceeds C = {c}",
                state.t,
                eps * eps * g2
            ));
        }
    }
    log.times.push(state.t);
    log.max_modulus_sq.push(m2);
    log.max_grad_sq.push(g2);
    log.energy.push(energy);
    Ok(())
}

/// Number of snapshots a run stores: `floor(t_end / every) + 1`.
pub fn snapshot_count(t_end: f64, every: f64) -> usize {
    (t_end / every * (1.0 + 1e-12)).floor() as usize + 1
}

/// Integrates from multi-vortex initial data to `t_end`, storing snapshots
/// every `snapshot_every` (including `t = 0`).
///
/// The step is shrunk slightly so that snapshot times are hit exactly.
pub fn run(config: &SolverConfig, spec: &VortexSpec) -> Result<RunOutput> {
    config.validate()?;
    config.check_epsilon0();
    let state = initial_data(spec, config.epsilon, config.grid)?;
    let initial_weighted_energy = (!spec.is_empty())
        .then(|| initial_weighted_energy(&state.v, spec, config.epsilon))
        .transpose()?;
    let mut out = run_from(config, state)?;
    out.initial_weighted_energy = initial_weighted_energy;
    Ok(out)
}

/// Like [`run`], from an arbitrary initial state.
pub fn run_from(config: &SolverConfig, mut state: SolverState) -> Result<RunOutput> {
    config.validate()?;
    let dt_max = stable_dt(config);
    let every = config.snapshot_every;
    let per_snapshot = (every / dt_max).ceil().max(1.0) as u64;
    let dt = every / per_snapshot as f64;
    let count = snapshot_count(config.t_end, every);
    let a_below_b = config.profile.a_below_b();

    let mut stepper = Stepper::new(config, dt)?;
    let mut log = MonitorLog::default();
    let mut snapshots = Vec::with_capacity(count);
    let t0 = state.t;
    record(&mut log, &state, config, a_below_b)?;
    snapshots.push(state.clone());
    for s in 1..count {
        for _ in 0..per_snapshot {
            stepper.step(&mut state)?;
        }
        state.t = t0 + s as f64 * every;
        record(&mut log, &state, config, a_below_b)?;
        snapshots.push(state.clone());
    }
    let remaining = t0 + config.t_end - state.t;
    if remaining > 1e-12 * config.t_end.max(1.0) {
        let n = (remaining / dt_max).ceil().max(1.0) as u64;
        let mut tail = Stepper::new(config, remaining / n as f64)?;
        for _ in 0..n {
            tail.step(&mut state)?;
        }
        state.t = t0 + config.t_end;
    }
    Ok(RunOutput {
        snapshots,
        monitors: log,
        final_state: state,
        dt,
        initial_weighted_energy: None,
    })
}

/// `int rho^2 [|grad V|^2 + (|V|^2 - 1)^2 / (2 eps^2)]` with `rho` the distance
/// to the nearest vortex centre.
pub fn initial_weighted_energy(v: &ComplexField, spec: &VortexSpec, epsilon: f64) -> Result<f64> {
    let grid = *v.grid();
    let g2 = gradient_sq(v)?;
    let m2 = v.modulus_sq();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for k in 0..grid.len() {
        let (i, j) = grid.node(k);
        let p = grid.coords(i, j);
        let rho = spec
            .centers
            .iter()
            .map(|&c| dist(p, c))
            .fold(f64::INFINITY, f64::min);
        let dm = m2.values()[k] - 1.0;
        total += rho * rho * (g2.values()[k] + dm * dm / (2.0 * epsilon * epsilon));
    }
    Ok(h2 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinning::{Shape, SmoothFunction};
    use crate::vortex;

    fn profile(omega: Shape, a: f64, b: f64, n: usize) -> Arc<PinningProfile> {
        let w: Arc<dyn SmoothFunction> = Arc::new(omega);
        Arc::new(PinningProfile::with_constants(w, a, b, Grid2D::unit_square(n).unwrap()).unwrap())
    }

    fn flat(n: usize) -> Arc<PinningProfile> {
        profile(Shape::Constant { value: 0.0 }, 0.0, 1.0, n)
    }

    #[test]
    fn no_vortices_gives_unit_field() {
        let grid = Grid2D::unit_square(9).unwrap();
        let s = initial_data(&VortexSpec::empty(), 0.1, grid).unwrap();
        assert!(s.v.re().iter().all(|&v| v == 1.0));
        assert!(s.v.im().iter().all(|&v| v == 0.0));
        assert!(s.g.values().iter().all(|&g| g == [1.0, 0.0]));
    }

    #[test]
    fn single_vortex_initial_data() {
        let grid = Grid2D::unit_square(33).unwrap();
        let s = initial_data(&VortexSpec::single([0.5, 0.5], 1), 0.05, grid).unwrap();
        assert_eq!(s.v.get(16, 16), [0.0, 0.0]);
        assert_eq!(vortex::boundary_winding(&s.v).unwrap(), 1);
        assert!(s.g.values().iter().all(|g| (g[0].hypot(g[1]) - 1.0).abs() < 1e-15));
    }

    #[test]
    fn dipole_initial_data() {
        let grid = Grid2D::unit_square(41).unwrap();
        let spec = VortexSpec::new(vec![[0.3, 0.5], [0.7, 0.5]], vec![1, -1]).unwrap();
        let s = initial_data(&spec, 0.05, grid).unwrap();
        // oracle: direct wrapped angle summation along the boundary loop
        let lp = grid.boundary_loop();
        let mut total = 0.0;
        for w in 0..lp.len() {
            let (a, b) = (lp[w], lp[(w + 1) % lp.len()]);
            let (va, vb) = (s.v.get(a.0, a.1), s.v.get(b.0, b.1));
            let d = vb[1].atan2(vb[0]) - va[1].atan2(va[0]);
            let wrapped = d - 2.0 * std::f64::consts::PI * (d / (2.0 * std::f64::consts::PI)).round();
            total += wrapped;
        }
        assert!(total.abs() < 1e-9);
        for (i, j) in [(12, 20), (28, 20)] {
            let z = s.v.get(i, j);
            assert!(z[0].hypot(z[1]) < 1e-12);
        }
    }

    #[test]
    fn vortex_near_boundary_rejected() {
        let grid = Grid2D::unit_square(33).unwrap();
        let r = initial_data(&VortexSpec::single([0.05, 0.5], 1), 0.05, grid);
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn stable_dt_formula() {
        let p = flat(101); // h = 0.01
        let mut c = SolverConfig::new(p, 0.2, 1.0, DtPolicy::Explicit)
            .unwrap()
            .with_cfl_safety(1.0)
            .unwrap();
        assert!((stable_dt(&c) - 2.5e-5).abs() < 1e-15);
        c.epsilon = 0.001;
        assert!((stable_dt(&c) - 5e-7).abs() < 1e-18);
        c.dt_policy = DtPolicy::Strang;
        assert!((stable_dt(&c) - 2.5e-5).abs() < 1e-15);
    }

    #[test]
    fn unit_state_is_fixed_point() {
        let p = flat(17);
        let c = SolverConfig::new(p, 0.1, 1.0, DtPolicy::Explicit).unwrap();
        let s = initial_data(&VortexSpec::empty(), 0.1, c.grid).unwrap();
        let n = step_explicit(&s, &c).unwrap();
        assert_eq!(n.v, s.v);
        let n = step_strang(&s, &c).unwrap();
        assert_eq!(n.v, s.v);
    }

    #[test]
    fn sub_unit_modulus_grows() {
        let p = flat(17);
        let c = SolverConfig::new(p, 0.1, 1.0, DtPolicy::Explicit).unwrap();
        let grid = c.grid;
        let mut s = initial_data(&VortexSpec::empty(), 0.1, grid).unwrap();
        s.v = ComplexField::constant(grid, [0.4, 0.0]);
        let mut prev = 0.4;
        for _ in 0..50 {
            s = step_explicit(&s, &c).unwrap();
            let centre = s.v.get(8, 8)[0];
            assert!(centre > prev && centre <= 1.0);
            prev = centre;
        }
    }

    #[test]
    fn reaction_closed_form() {
        assert_eq!(reaction_modulus(1.0, 1.0, 0.1, 0.3), 1.0);
        assert_eq!(reaction_modulus(0.0, 1.0, 0.1, 0.3), 0.0);
        let r2 = reaction_modulus(0.5, 1.0, 0.1, 0.005).powi(2);
        let want = 0.25 / (0.25 + 0.75 * (-1.0f64).exp());
        assert!((r2 - want).abs() < 1e-15);
        assert!((r2 - 0.4754).abs() < 1e-4);
        // tiny-step Euler on d(r^2)/dt = 200 r^2 (1 - r^2)
        let mut w = 0.25;
        let n = 200_000;
        let dt = 0.005 / n as f64;
        for _ in 0..n {
            w += dt * 200.0 * w * (1.0 - w);
        }
        assert!((w - want).abs() < 1e-5);
    }

    #[test]
    fn boundary_is_preserved_bitwise() {
        let p = profile(
            Shape::Quadratic {
                center: [0.5, 0.5],
                lambda: 2.0,
                offset: 0.0,
            },
            0.0,
            1.0,
            33,
        );
        for policy in [DtPolicy::Explicit, DtPolicy::Strang] {
            let c = SolverConfig::new(p.clone(), 0.1, 1.0, policy).unwrap();
            let mut s = initial_data(&VortexSpec::single([0.6, 0.45], 1), 0.1, c.grid).unwrap();
            let before: Vec<[f64; 2]> = s.g.nodes().iter().map(|&k| [s.v.re()[k], s.v.im()[k]]).collect();
            let mut st = Stepper::new(&c, stable_dt(&c)).unwrap();
            for _ in 0..20 {
                st.step(&mut s).unwrap();
                for (&k, b) in s.g.nodes().iter().zip(&before) {
                    assert_eq!([s.v.re()[k], s.v.im()[k]], *b);
                }
            }
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let p = flat(9);
        let c = SolverConfig::new(p, 0.1, 1.0, DtPolicy::Explicit).unwrap();
        let mut s = initial_data(&VortexSpec::empty(), 0.1, c.grid).unwrap();
        s.v = ComplexField::constant(c.grid, [1e200, 0.0]);
        let mut st = Stepper::new(&c, 1e-3).unwrap();
        assert!(matches!(st.step_explicit(&mut s), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn snapshot_cadence() {
        let p = flat(9);
        let c = SolverConfig::new(p, 0.2, 0.25, DtPolicy::Strang)
            .unwrap()
            .with_snapshot_every(0.1)
            .unwrap();
        let out = run(&c, &VortexSpec::empty()).unwrap();
        assert_eq!(out.snapshots.len(), 3);
        assert_eq!(snapshot_count(0.25, 0.1), 3);
        assert_eq!(snapshot_count(0.3, 0.1), 4);
        assert!((out.final_state.t - 0.25).abs() < 1e-15);
        assert_eq!(out.monitors.times, vec![0.0, 0.1, 0.2]);
    }

    #[test]
    fn strang_and_explicit_agree_to_second_order_per_step() {
        let p = profile(
            Shape::Quadratic {
                center: [0.5, 0.5],
                lambda: 1.0,
                offset: 0.0,
            },
            0.3,
            1.0,
            33,
        );
        let c = SolverConfig::new(p, 0.3, 1.0, DtPolicy::Strang).unwrap();
        let grid = c.grid;
        let mut s0 = initial_data(&VortexSpec::empty(), 0.3, grid).unwrap();
        s0.v = ComplexField::from_fn(grid, |[x, y]| {
            let r = 0.6 + 0.2 * (3.0 * x).sin() * (2.0 * y).cos();
            let th = x + 0.5 * y;
            [r * th.cos(), r * th.sin()]
        })
        .unwrap();
        let diff = |dt: f64| {
            let mut a = s0.clone();
            let mut b = s0.clone();
            Stepper::new(&c, dt).unwrap().step_strang(&mut a).unwrap();
            Stepper::new(&c, dt).unwrap().step_explicit(&mut b).unwrap();
            a.v.max_distance(&b.v).unwrap()
        };
        let dt = stable_dt(&c);
        let (d1, d2) = (diff(dt), diff(dt / 2.0));
        let ratio = d1 / d2;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn deterministic_runs() {
        let p = profile(
            Shape::Quadratic {
                center: [0.5, 0.5],
                lambda: 2.0,
                offset: 0.0,
            },
            0.0,
            1.0,
            25,
        );
        let c = SolverConfig::new(p, 0.1, 0.02, DtPolicy::Strang)
            .unwrap()
            .with_snapshot_every(0.01)
            .unwrap();
        let spec = VortexSpec::single([0.55, 0.5], 1);
        let a = run(&c, &spec).unwrap();
        let b = run(&c, &spec).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.v, y.v);
        }
    }
}
