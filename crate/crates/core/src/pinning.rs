//! The inhomogeneity `(omega, A, B)` of the weighted Ginzburg-Landau system,
//! its construction from an equilibrium density `a(x)`, and the analysis of
//! the critical points of `omega` that vortices are pinned to.
//!
//! Two physical models reduce to the same system with `omega = ln a`:
//!
//! * the inhomogeneous-material model, giving `A = lap(sqrt a) / sqrt a` and `B = a`;
//! * the variable-thickness film model, giving `A = 0` and `B = 1`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{self, dist, Grid2D, ScalarField};

/// A smooth real function of the plane. Implementations may supply exact
/// derivatives; callers fall back to finite differences when they don't.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn value(&self, p: [f64; 2]) -> f64;

    fn gradient(&self, _p: [f64; 2]) -> Option<[f64; 2]> {
        None
    }

    fn laplacian(&self, _p: [f64; 2]) -> Option<f64> {
        None
    }
}

const FD_STEP: f64 = 1e-5;

fn gradient_or_fd(f: &dyn SmoothFunction, p: [f64; 2]) -> [f64; 2] {
    f.gradient(p).unwrap_or_else(|| {
        let dx = f.value([p[0] + FD_STEP, p[1]]) - f.value([p[0] - FD_STEP, p[1]]);
        let dy = f.value([p[0], p[1] + FD_STEP]) - f.value([p[0], p[1] - FD_STEP]);
        [dx / (2.0 * FD_STEP), dy / (2.0 * FD_STEP)]
    })
}

/// Closed-form functions referenced by name from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// `value`
    Constant { value: f64 },
    /// `offset + lambda |x - c|^2`
    Quadratic {
        center: [f64; 2],
        lambda: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + ax (x - cx)^2 + ay (y - cy)^2`
    Anisotropic {
        center: [f64; 2],
        ax: f64,
        ay: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + ((x - cx)^2 - well^2)^2 + (y - cy)^2`, minima at `c +- (well, 0)`.
    DoubleWell {
        center: [f64; 2],
        well: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + amplitude exp(-width |x - c|^2)`
    GaussianBump {
        center: [f64; 2],
        offset: f64,
        amplitude: f64,
        width: f64,
    },
    /// `exp(lambda |x - c|^2)`
    ExpQuadratic { center: [f64; 2], lambda: f64 },
    /// `offset + amplitude sin(2 pi k x)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        wavenumber: f64,
    },
}

impl SmoothFunction for Shape {
    fn value(&self, p: [f64; 2]) -> f64 {
        match *self {
            Shape::Constant { value } => value,
            Shape::Quadratic {
                center,
                lambda,
                offset,
            } => offset + lambda * sq_dist(p, center),
            Shape::Anisotropic {
                center,
                ax,
                ay,
                offset,
            } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                offset + ax * dx * dx + ay * dy * dy
            }
            Shape::DoubleWell {
                center,
                well,
                offset,
            } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let q = dx * dx - well * well;
                offset + q * q + dy * dy
            }
            Shape::GaussianBump {
                center,
                offset,
                amplitude,
                width,
            } => offset + amplitude * (-width * sq_dist(p, center)).exp(),
            Shape::ExpQuadratic { center, lambda } => (lambda * sq_dist(p, center)).exp(),
            Shape::Sinusoid {
                offset,
                amplitude,
                wavenumber,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * wavenumber * p[0]).sin(),
        }
    }

    fn gradient(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        Some(match *self {
            Shape::Constant { .. } => [0.0, 0.0],
            Shape::Quadratic { center, lambda, .. } => [
                2.0 * lambda * (p[0] - center[0]),
                2.0 * lambda * (p[1] - center[1]),
            ],
            Shape::Anisotropic { center, ax, ay, .. } => {
                [2.0 * ax * (p[0] - center[0]), 2.0 * ay * (p[1] - center[1])]
            }
            Shape::DoubleWell { center, well, .. } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                [4.0 * dx * (dx * dx - well * well), 2.0 * dy]
            }
            Shape::GaussianBump {
                center,
                amplitude,
                width,
                ..
            } => {
                let e = amplitude * (-width * sq_dist(p, center)).exp();
                [
                    -2.0 * width * (p[0] - center[0]) * e,
                    -2.0 * width * (p[1] - center[1]) * e,
                ]
            }
            Shape::ExpQuadratic { center, lambda } => {
                let e = (lambda * sq_dist(p, center)).exp();
                [
                    2.0 * lambda * (p[0] - center[0]) * e,
                    2.0 * lambda * (p[1] - center[1]) * e,
                ]
            }
            Shape::Sinusoid {
                amplitude,
                wavenumber,
                ..
            } => {
                let k = 2.0 * std::f64::consts::PI * wavenumber;
                [amplitude * k * (k * p[0]).cos(), 0.0]
            }
        })
    }

    fn laplacian(&self, p: [f64; 2]) -> Option<f64> {
        Some(match *self {
            Shape::Constant { .. } => 0.0,
            Shape::Quadratic { lambda, .. } => 4.0 * lambda,
            Shape::Anisotropic { ax, ay, .. } => 2.0 * (ax + ay),
            Shape::DoubleWell { center, well, .. } => {
                let dx = p[0] - center[0];
                12.0 * dx * dx - 4.0 * well * well + 2.0
            }
            Shape::GaussianBump {
                center,
                amplitude,
                width,
                ..
            } => {
                let r2 = sq_dist(p, center);
                amplitude * (-width * r2).exp() * (4.0 * width * width * r2 - 4.0 * width)
            }
            Shape::ExpQuadratic { center, lambda } => {
                let r2 = sq_dist(p, center);
                (lambda * r2).exp() * (4.0 * lambda + 4.0 * lambda * lambda * r2)
            }
            Shape::Sinusoid {
                amplitude,
                wavenumber,
                ..
            } => {
                let k = 2.0 * std::f64::consts::PI * wavenumber;
                -amplitude * k * k * (k * p[0]).sin()
            }
        })
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

type GradientFn = Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Wraps a plain closure, optionally with its gradient.
pub struct FnFunction<F> {
    f: F,
    grad: Option<GradientFn>,
}

impl<F: Fn([f64; 2]) -> f64 + Send + Sync> FnFunction<F> {
    pub fn new(f: F) -> Self {
        FnFunction { f, grad: None }
    }

    pub fn with_gradient(f: F, grad: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        FnFunction {
            f,
            grad: Some(Box::new(grad)),
        }
    }
}

impl<F> fmt::Debug for FnFunction<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunction")
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl<F: Fn([f64; 2]) -> f64 + Send + Sync> SmoothFunction for FnFunction<F> {
    fn value(&self, p: [f64; 2]) -> f64 {
        (self.f)(p)
    }

    fn gradient(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        self.grad.as_ref().map(|g| g(p))
    }
}

/// `ln a` for a positive density `a`, with derivatives derived from those of `a`.
#[derive(Debug, Clone)]
pub struct LogDensity(pub Arc<dyn SmoothFunction>);

impl SmoothFunction for LogDensity {
    fn value(&self, p: [f64; 2]) -> f64 {
        self.0.value(p).ln()
    }

    fn gradient(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let a = self.0.value(p);
        let g = gradient_or_fd(self.0.as_ref(), p);
        Some([g[0] / a, g[1] / a])
    }

    fn laplacian(&self, p: [f64; 2]) -> Option<f64> {
        let a = self.0.value(p);
        let g = self.0.gradient(p)?;
        let lap = self.0.laplacian(p)?;
        Some(lap / a - (g[0] * g[0] + g[1] * g[1]) / (a * a))
    }
}

/// `lap(sqrt a) / sqrt a = lap a / (2a) - |grad a|^2 / (4 a^2)`, exact when `a`
/// supplies its derivatives.
#[derive(Debug, Clone)]
struct SqrtLaplacianRatio(Arc<dyn SmoothFunction>);

impl SqrtLaplacianRatio {
    fn eval(&self, p: [f64; 2]) -> Option<f64> {
        let a = self.0.value(p);
        let g = self.0.gradient(p)?;
        let lap = self.0.laplacian(p)?;
        Some(lap / (2.0 * a) - (g[0] * g[0] + g[1] * g[1]) / (4.0 * a * a))
    }
}

/// Which physical model produced a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Generic,
    FromDensity,
    ThinFilm,
}

#[derive(Debug, Clone)]
enum Coefficient {
    Constant(f64),
    Function(Arc<dyn SmoothFunction>),
    DensityRatio(SqrtLaplacianRatio),
    Sampled,
}

/// `omega`, `grad omega`, `A` and `B` sampled on a grid, plus pointwise evaluators.
#[derive(Debug, Clone)]
pub struct PinningProfile {
    kind: ProfileKind,
    grid: Grid2D,
    omega_fn: Arc<dyn SmoothFunction>,
    density: Option<Arc<dyn SmoothFunction>>,
    a_coef: Coefficient,
    b_coef: Coefficient,
    omega: ScalarField,
    grad_x: ScalarField,
    grad_y: ScalarField,
    a_field: ScalarField,
    b_field: ScalarField,
    omega_positive: bool,
}

impl PinningProfile {
    /// Profile from an arbitrary potential and coefficient functions.
    pub fn generic(
        omega: Arc<dyn SmoothFunction>,
        a: Arc<dyn SmoothFunction>,
        b: Arc<dyn SmoothFunction>,
        grid: Grid2D,
    ) -> Result<Self> {
        let a_field = ScalarField::from_fn(grid, |p| a.value(p))
            .map_err(|e| Error::Model(format!("A is not finite: {e}")))?;
        let b_field = ScalarField::from_fn(grid, |p| b.value(p))
            .map_err(|e| Error::Model(format!("B is not finite: {e}")))?;
        Self::assemble(
            ProfileKind::Generic,
            grid,
            omega,
            None,
            Coefficient::Function(a),
            a_field,
            Coefficient::Function(b),
            b_field,
        )
    }

    /// Potential with constant coefficients `A` and `B`.
    pub fn with_constants(omega: Arc<dyn SmoothFunction>, a: f64, b: f64, grid: Grid2D) -> Result<Self> {
        Self::assemble(
            ProfileKind::Generic,
            grid,
            omega,
            None,
            Coefficient::Constant(a),
            ScalarField::constant(grid, a),
            Coefficient::Constant(b),
            ScalarField::constant(grid, b),
        )
    }

    /// Inhomogeneous-material model: `omega = ln a`, `A = lap(sqrt a)/sqrt a`, `B = a`.
    ///
    /// `A` is evaluated in closed form when `a` provides its gradient and
    /// Laplacian, otherwise by the five-point stencil on `sqrt a` samples.
    pub fn from_density(a: Arc<dyn SmoothFunction>, grid: Grid2D) -> Result<Self> {
        let b_field = sample_density(a.as_ref(), grid)?;
        let ratio = SqrtLaplacianRatio(a.clone());
        let centre = grid.center();
        let (a_coef, a_field) = if ratio.eval(centre).is_some() {
            let field = ScalarField::from_fn(grid, |p| ratio.eval(p).unwrap_or(f64::NAN))
                .map_err(|e| Error::Model(format!("A is not finite: {e}")))?;
            (Coefficient::DensityRatio(ratio), field)
        } else {
            let sqrt_a = b_field.map(f64::sqrt)?;
            let lap = fields::laplacian_scalar(&sqrt_a)?;
            let values = lap
                .values()
                .iter()
                .zip(sqrt_a.values())
                .map(|(l, s)| l / s)
                .collect();
            (Coefficient::Sampled, ScalarField::new(grid, values)?)
        };
        Self::assemble(
            ProfileKind::FromDensity,
            grid,
            Arc::new(LogDensity(a.clone())),
            Some(a.clone()),
            a_coef,
            a_field,
            Coefficient::Function(a),
            b_field,
        )
    }

    /// Variable-thickness film model: `omega = ln a`, `A = 0`, `B = 1`.
    pub fn thin_film(a: Arc<dyn SmoothFunction>, grid: Grid2D) -> Result<Self> {
        sample_density(a.as_ref(), grid)?;
        Self::assemble(
            ProfileKind::ThinFilm,
            grid,
            Arc::new(LogDensity(a.clone())),
            Some(a),
            Coefficient::Constant(0.0),
            ScalarField::constant(grid, 0.0),
            Coefficient::Constant(1.0),
            ScalarField::constant(grid, 1.0),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ProfileKind,
        grid: Grid2D,
        omega_fn: Arc<dyn SmoothFunction>,
        density: Option<Arc<dyn SmoothFunction>>,
        a_coef: Coefficient,
        a_field: ScalarField,
        b_coef: Coefficient,
        b_field: ScalarField,
    ) -> Result<Self> {
        let omega = ScalarField::from_fn(grid, |p| omega_fn.value(p))
            .map_err(|e| Error::Model(format!("omega is not finite: {e}")))?;
        let grad_x = ScalarField::from_fn(grid, |p| gradient_or_fd(omega_fn.as_ref(), p)[0])?;
        let grad_y = ScalarField::from_fn(grid, |p| gradient_or_fd(omega_fn.as_ref(), p)[1])?;
        if let Some(k) = b_field.values().iter().position(|&b| b <= 0.0) {
            let (i, j) = grid.node(k);
            return Err(Error::Model(format!(
                "B must be positive, found {} at node ({i}, {j})",
                b_field.values()[k]
            )));
        }
        let omega_positive = omega.min() > 0.0;
        if !omega_positive {
            log::warn!(
                "omega is not strictly positive (min {:.3e}); dynamics only see grad omega, accepting",
                omega.min()
            );
        }
        Ok(PinningProfile {
            kind,
            grid,
            omega_fn,
            density,
            a_coef,
            b_coef,
            omega,
            grad_x,
            grad_y,
            a_field,
            b_field,
            omega_positive,
        })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn omega_field(&self) -> &ScalarField {
        &self.omega
    }

    /// `grad omega` sampled at the nodes from the analytic evaluator.
    pub fn grad_omega_fields(&self) -> (&ScalarField, &ScalarField) {
        (&self.grad_x, &self.grad_y)
    }

    pub fn a_field(&self) -> &ScalarField {
        &self.a_field
    }

    pub fn b_field(&self) -> &ScalarField {
        &self.b_field
    }

    /// Whether `omega > 0` held at every node.
    pub fn omega_positive(&self) -> bool {
        self.omega_positive
    }

    /// The equilibrium density `a`, for profiles built from one.
    pub fn density(&self) -> Option<&Arc<dyn SmoothFunction>> {
        self.density.as_ref()
    }

    pub fn omega_function(&self) -> &Arc<dyn SmoothFunction> {
        &self.omega_fn
    }

    pub fn omega(&self, p: [f64; 2]) -> f64 {
        self.omega_fn.value(p)
    }

    pub fn grad_omega(&self, p: [f64; 2]) -> [f64; 2] {
        gradient_or_fd(self.omega_fn.as_ref(), p)
    }

    pub fn coef_a(&self, p: [f64; 2]) -> f64 {
        match &self.a_coef {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f.value(p),
            Coefficient::DensityRatio(r) => r.eval(p).unwrap_or(f64::NAN),
            Coefficient::Sampled => bilinear(&self.a_field, p),
        }
    }

    pub fn coef_b(&self, p: [f64; 2]) -> f64 {
        match &self.b_coef {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f.value(p),
            Coefficient::DensityRatio(r) => r.eval(p).unwrap_or(f64::NAN),
            Coefficient::Sampled => bilinear(&self.b_field, p),
        }
    }

    /// Largest `|grad omega|` over the nodes.
    pub fn sup_grad_omega(&self) -> f64 {
        self.grad_x
            .values()
            .iter()
            .zip(self.grad_y.values())
            .fold(0.0, |m, (x, y)| m.max(x.hypot(*y)))
    }

    /// Whether `A <= B` at every node.
    pub fn a_below_b(&self) -> bool {
        self.a_field
            .values()
            .iter()
            .zip(self.b_field.values())
            .all(|(a, b)| a <= b)
    }
}

fn sample_density(a: &dyn SmoothFunction, grid: Grid2D) -> Result<ScalarField> {
    let field = ScalarField::from_fn(grid, |p| a.value(p))
        .map_err(|e| Error::Model(format!("density is not finite: {e}")))?;
    if let Some(k) = field.values().iter().position(|&v| v <= 0.0) {
        let (i, j) = grid.node(k);
        return Err(Error::Model(format!(
            "density must be positive, found {} at node ({i}, {j})",
            field.values()[k]
        )));
    }
    Ok(field)
}

/// Bilinear interpolation of a nodal field, clamped to the grid.
pub fn bilinear(f: &ScalarField, p: [f64; 2]) -> f64 {
    let grid = f.grid();
    let (ci, cj) = grid.cell_of(p);
    let [x0, y0] = grid.coords(ci, cj);
    let s = ((p[0] - x0) / grid.h()).clamp(0.0, 1.0);
    let t = ((p[1] - y0) / grid.h()).clamp(0.0, 1.0);
    (1.0 - s) * (1.0 - t) * f.get(ci, cj)
        + s * (1.0 - t) * f.get(ci + 1, cj)
        + (1.0 - s) * t * f.get(ci, cj + 1)
        + s * t * f.get(ci + 1, cj + 1)
}

/// `sqrt(inf B / (1 + sup |A|))` over the grid nodes: the coherence length
/// below which the modulus of solutions stays bounded.
pub fn epsilon0(p: &PinningProfile) -> f64 {
    (p.b_field.min() / (1.0 + p.a_field.max_abs())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Min,
    Max,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: [f64; 2],
    pub omega_value: f64,
    pub classification: Classification,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: [f64; 2],
    /// Constants of the gradient inequality, once estimated.
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
}

/// Result of a multi-seed critical-point search.
#[derive(Debug, Clone, Default)]
pub struct CriticalPointSearch {
    pub points: Vec<CriticalPoint>,
    /// Indices of seeds whose Newton iteration did not converge.
    pub failed_seeds: Vec<usize>,
}

pub const TOL_CRIT: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 100;
const MERGE_RADIUS: f64 = 1e-6;
const EIGEN_TOL: f64 = 1e-6;

fn fd_hessian(p: &PinningProfile, x: [f64; 2]) -> [[f64; 2]; 2] {
    let gxp = p.grad_omega([x[0] + FD_STEP, x[1]]);
    let gxm = p.grad_omega([x[0] - FD_STEP, x[1]]);
    let gyp = p.grad_omega([x[0], x[1] + FD_STEP]);
    let gym = p.grad_omega([x[0], x[1] - FD_STEP]);
    let hxx = (gxp[0] - gxm[0]) / (2.0 * FD_STEP);
    let hyy = (gyp[1] - gym[1]) / (2.0 * FD_STEP);
    let hxy = 0.5 * ((gxp[1] - gxm[1]) + (gyp[0] - gym[0])) / (2.0 * FD_STEP);
    [[hxx, hxy], [hxy, hyy]]
}

fn sym_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    let disc = (0.25 * diff * diff + m[0][1] * m[0][1]).sqrt();
    [0.5 * tr - disc, 0.5 * tr + disc]
}

fn classify(eig: [f64; 2]) -> Classification {
    let scale = eig[0].abs().max(eig[1].abs()).max(1.0);
    let tol = EIGEN_TOL * scale;
    if eig[0].abs() <= tol || eig[1].abs() <= tol {
        Classification::Degenerate
    } else if eig[0] > 0.0 {
        Classification::Min
    } else if eig[1] < 0.0 {
        Classification::Max
    } else {
        Classification::Saddle
    }
}

/// Classifies the critical point of `omega` at `x` from its Hessian.
pub fn critical_point_at(p: &PinningProfile, x: [f64; 2]) -> CriticalPoint {
    let eig = sym_eigenvalues(fd_hessian(p, x));
    CriticalPoint {
        location: x,
        omega_value: p.omega(x),
        classification: classify(eig),
        eigenvalues: eig,
        theta1: None,
        theta2: None,
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn newton(p: &PinningProfile, seed: [f64; 2]) -> Option<[f64; 2]> {
    let grid = p.grid();
    let mut x = seed;
    let mut g = p.grad_omega(x);
    for _ in 0..MAX_NEWTON_ITERS {
        let res = norm(g);
        if res < TOL_CRIT {
            return Some(x);
        }
        let h = fd_hessian(p, x);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let scale = h[0][0].abs().max(h[1][1].abs()).max(h[0][1].abs());
        if det.abs() <= 1e-14 * scale.max(1e-300) * scale.max(1e-300) || scale == 0.0 {
            return None;
        }
        let step = [
            -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
            -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = [x[0] + lambda * step[0], x[1] + lambda * step[1]];
            let gt = p.grad_omega(trial);
            if grid.contains(trial) && norm(gt) <= res {
                accepted = Some((trial, gt));
                break;
            }
            lambda *= 0.5;
        }
        let (xn, gn) = accepted?;
        x = xn;
        g = gn;
    }
    (norm(g) < TOL_CRIT).then_some(x)
}

/// Damped Newton iteration on `grad omega` from each seed; converged points
/// closer than `1e-6` are merged and classified by Hessian eigenvalue signs.
pub fn find_critical_points(p: &PinningProfile, seeds: &[[f64; 2]]) -> Result<CriticalPointSearch> {
    let grid = p.grid();
    let mut search = CriticalPointSearch::default();
    for (idx, &seed) in seeds.iter().enumerate() {
        if !(grid.distance_to_boundary(seed) > 0.0) {
            return Err(Error::config(
                "seeds",
                format!("seed {idx} at {seed:?} is not in the domain interior"),
            ));
        }
        match newton(p, seed) {
            Some(x) => {
                if !search
                    .points
                    .iter()
                    .any(|c| dist(c.location, x) < MERGE_RADIUS)
                {
                    search.points.push(critical_point_at(p, x));
                }
            }
            None => search.failed_seeds.push(idx),
        }
    }
    Ok(search)
}

/// Van der Corput radical inverse in `base`.
fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    r
}

/// Estimates `theta1` in `|grad omega(x)| >= theta1 |omega(x) - omega(b)|^(1/2)`
/// on the punctured ball of radius `radius` around `b`; `theta2 = radius`.
///
/// Samples form a Halton set mapped to the disc, shifted by a rotation drawn
/// from `seed`.
pub fn estimate_theta(
    p: &PinningProfile,
    b: &CriticalPoint,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if b.classification == Classification::Degenerate {
        return Err(Error::Refused(format!(
            "critical point at {:?} is degenerate (Hessian eigenvalues {:?}); the gradient inequality needs a nondegenerate point",
            b.location, b.eigenvalues
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::config("radius", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 2] = [rng.random(), rng.random()];
    let wb = p.omega(b.location);
    let mut theta1 = f64::INFINITY;
    for n in 1..=samples as u64 {
        let u = (radical_inverse(n, 2) + shift[0]).fract();
        let v = (radical_inverse(n, 3) + shift[1]).fract();
        let r = radius * u.sqrt();
        if r == 0.0 {
            continue;
        }
        let angle = 2.0 * std::f64::consts::PI * v;
        let x = [b.location[0] + r * angle.cos(), b.location[1] + r * angle.sin()];
        let dw = (p.omega(x) - wb).abs();
        if dw <= 1e-14 * (1.0 + wb.abs()) {
            continue;
        }
        theta1 = theta1.min(norm(p.grad_omega(x)) / dw.sqrt());
    }
    if !theta1.is_finite() {
        return Err(Error::Refused("no usable samples in the ball".into()));
    }
    Ok((theta1, radius))
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Whether a polyline `boundary` (implicitly closed) is a valid confining
/// contour around `b`.
pub(crate) fn check_polygon(b: [f64; 2], boundary: &[[f64; 2]]) -> Result<()> {
    if boundary.len() < 3 {
        return Err(Error::config("polyline", "needs at least three vertices"));
    }
    if !point_in_polygon(b, boundary) {
        return Err(Error::config(
            "polyline",
            format!("point {b:?} is not enclosed by the polyline"),
        ));
    }
    Ok(())
}

pub(crate) fn polygon_contains(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    point_in_polygon(p, poly)
}

const SAMPLES_PER_SEGMENT: usize = 64;

/// Whether `min omega` along the closed polyline strictly exceeds `omega(b)`.
pub fn check_a4(p: &PinningProfile, b: [f64; 2], boundary: &[[f64; 2]]) -> Result<bool> {
    check_polygon(b, boundary)?;
    let n = boundary.len();
    let mut min_w = f64::INFINITY;
    for k in 0..n {
        let (s, e) = (boundary[k], boundary[(k + 1) % n]);
        for q in 0..SAMPLES_PER_SEGMENT {
            let t = q as f64 / SAMPLES_PER_SEGMENT as f64;
            min_w = min_w.min(p.omega([s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])]));
        }
    }
    Ok(min_w > p.omega(b))
}
