//! Experiment files: one experiment per flat TOML document.
//!
//! ```toml
//! model = "generic"            # generic | thin_film | density
//! omega = "quadratic"          # shape of omega (generic) ...
//! # density = "gaussian_bump"  # ... or of the density a (thin_film, density)
//! center = [0.5, 0.5]
//! lambda = 2.0
//! grid = 192                   # nodes per side of the unit square
//! epsilon = [0.08, 0.04, 0.02]
//! vortex_centers = [[0.75, 0.5]]
//! vortex_degrees = [1]
//! t_end = 1.0
//! snapshot_every = 0.05
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Grid2D;
use crate::glsolver::{DtPolicy, SolverConfig, VortexSpec};
use crate::odelaw;
use crate::pinning::{epsilon0, PinningProfile, Shape, SmoothFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `omega` given directly, constant `A` and `B`.
    #[default]
    Generic,
    /// `omega = ln a`, `A = 0`, `B = 1`.
    ThinFilm,
    /// `omega = ln a`, `A = lap(sqrt a) / sqrt a`, `B = a`.
    Density,
}

/// Where the exclusion balls of the deviation norms are centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSource {
    /// Positions predicted by the ODE law.
    #[default]
    Ode,
    /// Vortices detected in the snapshot, falling back to the ODE when none are found.
    Detected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_grid() -> usize {
    128
}
fn default_coef_b() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.15
}
fn default_sigma() -> f64 {
    0.1
}
fn default_dt_policy() -> DtPolicy {
    DtPolicy::Strang
}
fn default_cfl() -> f64 {
    0.9
}
fn default_ode_dt() -> f64 {
    odelaw::DEFAULT_DT
}
fn default_pinning_tol() -> f64 {
    odelaw::DEFAULT_PINNING_TOL
}
fn default_theta_radius() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

/// Every recognised key of an experiment file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Model,
    pub omega: Option<String>,
    pub density: Option<String>,

    // shape parameters, consumed according to the selected shape
    pub center: Option<[f64; 2]>,
    pub lambda: Option<f64>,
    pub offset: Option<f64>,
    pub ax: Option<f64>,
    pub ay: Option<f64>,
    pub well: Option<f64>,
    pub amplitude: Option<f64>,
    pub width: Option<f64>,
    pub value: Option<f64>,
    pub wavenumber: Option<f64>,

    /// Constant `A` of the generic model.
    #[serde(default)]
    pub coef_a: f64,
    /// Constant `B` of the generic model.
    #[serde(default = "default_coef_b")]
    pub coef_b: f64,

    #[serde(default = "default_grid")]
    pub grid: usize,
    pub epsilon: OneOrMany,
    #[serde(default)]
    pub vortex_centers: Vec<[f64; 2]>,
    /// Defaults to `+1` for every centre.
    #[serde(default)]
    pub vortex_degrees: Vec<i32>,
    pub t_end: f64,
    /// Defaults to `t_end / 20`.
    pub snapshot_every: Option<f64>,
    #[serde(default = "default_dt_policy")]
    pub dt_policy: DtPolicy,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Frozen constant of the gradient monitor.
    pub gradient_constant: Option<f64>,

    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Snapshot time used for rate fits; defaults to `t_end / 2`.
    pub deviation_time: Option<f64>,
    #[serde(default)]
    pub deviation_centers: CenterSource,
    /// Matching radius for tracks; defaults to `10 h + 2 sup|grad omega| * snapshot_every`.
    pub jump_max: Option<f64>,
    #[serde(default = "default_true")]
    pub write_snapshots: bool,

    #[serde(default = "default_ode_dt")]
    pub ode_dt: f64,
    /// Defaults to `t_end`.
    pub ode_t_end: Option<f64>,
    #[serde(default = "default_pinning_tol")]
    pub pinning_tol: f64,
    /// One confinement polygon per vortex, optional.
    #[serde(default)]
    pub confinement: Vec<Vec<[f64; 2]>>,
    #[serde(default = "default_theta_radius")]
    pub theta_radius: f64,
    #[serde(default)]
    pub seed: u64,

    /// Output directory; the `--out` flag takes precedence.
    pub output: Option<PathBuf>,
}

/// The parts of a config that determine the pinning profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileKey {
    pub model: Model,
    pub shape: Shape,
    pub coef_a: f64,
    pub coef_b: f64,
    pub grid: usize,
}

fn need<T: Copy>(v: Option<T>, key: &str, shape: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, format!("required by shape `{shape}`")))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound {
                path: path.display().to_string(),
            },
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon.values()
    }

    pub fn unit_grid(&self) -> Result<Grid2D> {
        if self.grid < 3 {
            return Err(Error::config("grid", "needs at least 3 nodes per side"));
        }
        Grid2D::unit_square(self.grid)
    }

    pub fn snapshot_interval(&self) -> f64 {
        self.snapshot_every.unwrap_or(self.t_end / 20.0)
    }

    pub fn ode_horizon(&self) -> f64 {
        self.ode_t_end.unwrap_or(self.t_end)
    }

    pub fn deviation_at(&self) -> f64 {
        self.deviation_time.unwrap_or(0.5 * self.t_end)
    }

    fn shape_name(&self) -> Result<(&str, &'static str)> {
        match self.model {
            Model::Generic => self
                .omega
                .as_deref()
                .map(|s| (s, "omega"))
                .ok_or_else(|| Error::config("omega", "the generic model needs an omega shape")),
            Model::ThinFilm | Model::Density => self
                .density
                .as_deref()
                .map(|s| (s, "density"))
                .ok_or_else(|| Error::config("density", "this model needs a density shape")),
        }
    }

    /// The closed-form function named by `omega` or `density`.
    pub fn shape(&self) -> Result<Shape> {
        let (name, key) = self.shape_name()?;
        let offset = self.offset.unwrap_or(0.0);
        Ok(match name {
            "constant" => Shape::Constant {
                value: need(self.value, "value", name)?,
            },
            "quadratic" => Shape::Quadratic {
                center: need(self.center, "center", name)?,
                lambda: need(self.lambda, "lambda", name)?,
                offset,
            },
            "anisotropic" => Shape::Anisotropic {
                center: need(self.center, "center", name)?,
                ax: need(self.ax, "ax", name)?,
                ay: need(self.ay, "ay", name)?,
                offset,
            },
            "double_well" => Shape::DoubleWell {
                center: need(self.center, "center", name)?,
                well: need(self.well, "well", name)?,
                offset,
            },
            "gaussian_bump" => Shape::GaussianBump {
                center: need(self.center, "center", name)?,
                offset: need(self.offset, "offset", name)?,
                amplitude: need(self.amplitude, "amplitude", name)?,
                width: need(self.width, "width", name)?,
            },
            "exp_quadratic" => Shape::ExpQuadratic {
                center: need(self.center, "center", name)?,
                lambda: need(self.lambda, "lambda", name)?,
            },
            "sinusoid" => Shape::Sinusoid {
                offset: need(self.offset, "offset", name)?,
                amplitude: need(self.amplitude, "amplitude", name)?,
                wavenumber: need(self.wavenumber, "wavenumber", name)?,
            },
            other => {
                return Err(Error::config(
                    key,
                    format!(
                        "unknown shape `{other}` (expected constant, quadratic, anisotropic, \
                         double_well, gaussian_bump, exp_quadratic or sinusoid)"
                    ),
                ))
            }
        })
    }

    pub fn profile_key(&self) -> Result<ProfileKey> {
        Ok(ProfileKey {
            model: self.model,
            shape: self.shape()?,
            coef_a: self.coef_a,
            coef_b: self.coef_b,
            grid: self.grid,
        })
    }

    pub fn profile(&self) -> Result<PinningProfile> {
        let grid = self.unit_grid()?;
        let f: Arc<dyn SmoothFunction> = Arc::new(self.shape()?);
        match self.model {
            Model::Generic => PinningProfile::with_constants(f, self.coef_a, self.coef_b, grid),
            Model::ThinFilm => PinningProfile::thin_film(f, grid),
            Model::Density => PinningProfile::from_density(f, grid),
        }
    }

    pub fn vortex_spec(&self) -> Result<VortexSpec> {
        let degrees = if self.vortex_degrees.is_empty() {
            vec![1; self.vortex_centers.len()]
        } else {
            self.vortex_degrees.clone()
        };
        if degrees.len() != self.vortex_centers.len() {
            return Err(Error::config(
                "vortex_degrees",
                format!(
                    "{} degrees for {} centres",
                    degrees.len(),
                    self.vortex_centers.len()
                ),
            ));
        }
        VortexSpec::new(self.vortex_centers.clone(), degrees)
    }

    pub fn solver_config(&self, profile: Arc<PinningProfile>, epsilon: f64) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(profile, epsilon, self.t_end, self.dt_policy)?
            .with_cfl_safety(self.cfl_safety)?
            .with_snapshot_every(self.snapshot_interval())?;
        cfg.gradient_constant = self.gradient_constant;
        Ok(cfg)
    }

    /// Checks everything that does not require building the profile.
    pub fn validate(&self) -> Result<()> {
        let grid = self.unit_grid()?;
        let eps = self.epsilons();
        if eps.is_empty() {
            return Err(Error::config("epsilon", "at least one value is required"));
        }
        if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config("epsilon", "values must be positive"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("epsilon", "values must be strictly decreasing"));
        }
        let eps_min = *eps.last().expect("non-empty");
        if eps_min < 2.0 * grid.h() {
            return Err(Error::config(
                "epsilon",
                format!(
                    "smallest value {eps_min} is not resolved by grid = {} (needs eps >= 2h = {})",
                    self.grid,
                    2.0 * grid.h()
                ),
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be positive"));
        }
        if let Some(s) = self.snapshot_every {
            if !(s > 0.0 && s <= self.t_end) {
                return Err(Error::config("snapshot_every", "must lie in (0, t_end]"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::config("delta", "must lie in (0, 1/4)"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::config("sigma", "must be positive"));
        }
        if !(self.ode_dt > 0.0) {
            return Err(Error::config("ode_dt", "must be positive"));
        }
        if !(self.ode_horizon() > 0.0) {
            return Err(Error::config("ode_t_end", "must be positive"));
        }
        if !(self.pinning_tol > 0.0) {
            return Err(Error::config("pinning_tol", "must be positive"));
        }
        if !(self.theta_radius > 0.0) {
            return Err(Error::config("theta_radius", "must be positive"));
        }
        if let Some(t) = self.deviation_time {
            if !(0.0..=self.t_end).contains(&t) {
                return Err(Error::config("deviation_time", "must lie in [0, t_end]"));
            }
        }
        if let Some(j) = self.jump_max {
            if !(j > 0.0) {
                return Err(Error::config("jump_max", "must be positive"));
            }
        }
        if !self.confinement.is_empty() && self.confinement.len() != self.vortex_centers.len() {
            return Err(Error::config("confinement", "give one polygon per vortex centre"));
        }
        for (k, c) in self.vortex_centers.iter().enumerate() {
            if grid.distance_to_boundary(*c) <= 0.0 {
                return Err(Error::config(
                    "vortex_centers",
                    format!("centre {k} at {c:?} is not inside the unit square"),
                ));
            }
        }
        self.vortex_spec()?;
        self.shape()?;
        Ok(())
    }

    /// Logs a warning for every epsilon not below `epsilon0` of the profile.
    pub fn warn_epsilon0(&self, profile: &PinningProfile) -> f64 {
        let e0 = epsilon0(profile);
        for e in self.epsilons() {
            if e >= e0 {
                log::warn!("epsilon = {e} is not below epsilon0 = {e0:.6}");
            }
        }
        e0
    }
}
