//! Direct integration of the untransformed density model
//!
//! ```text
//! du/dt = lap u + (u / eps^2) (a(x) - |u|^2)
//! ```
//!
//! used as an independent check of the `omega = ln a` reduction. It shares no
//! code with the reduced stepper: the transport term and `A` never appear, and
//! the reaction is the logistic flow with carrying capacity `a`.

use crate::error::{Error, Result};
use crate::fields::{ComplexField, ScalarField};

#[derive(Debug, Clone)]
pub struct DensityStepper {
    a: ScalarField,
    epsilon: f64,
    dt: f64,
    boundary: Vec<(usize, [f64; 2])>,
    scratch_re: Vec<f64>,
    scratch_im: Vec<f64>,
}

impl DensityStepper {
    /// `u0` supplies both the initial state and the Dirichlet data on the boundary.
    pub fn new(a: ScalarField, epsilon: f64, dt: f64, u0: &ComplexField) -> Result<Self> {
        if a.grid() != u0.grid() {
            return Err(Error::GridMismatch);
        }
        if !(epsilon > 0.0 && dt > 0.0) {
            return Err(Error::config("epsilon/dt", "must be positive"));
        }
        if a.min() <= 0.0 {
            return Err(Error::Model("density must be positive".into()));
        }
        let grid = *a.grid();
        let boundary = grid
            .boundary_loop()
            .into_iter()
            .map(|(i, j)| (grid.index(i, j), u0.get(i, j)))
            .collect();
        Ok(DensityStepper {
            a,
            epsilon,
            dt,
            boundary,
            scratch_re: vec![0.0; grid.len()],
            scratch_im: vec![0.0; grid.len()],
        })
    }

    /// `|u|^2 -> a r^2 / (r^2 + (a - r^2) exp(-2 a tau / eps^2))`, phase frozen.
    fn react(&self, re: &mut [f64], im: &mut [f64], tau: f64) {
        let grid = self.a.grid();
        let nx = grid.nx();
        let inv_eps2 = 1.0 / (self.epsilon * self.epsilon);
        for j in 1..grid.ny() - 1 {
            for k in j * nx + 1..(j + 1) * nx - 1 {
                let a = self.a.values()[k];
                let r2 = re[k] * re[k] + im[k] * im[k];
                let e = (-2.0 * a * tau * inv_eps2).exp();
                let s = (a / (r2 + (a - r2) * e)).sqrt();
                re[k] *= s;
                im[k] *= s;
            }
        }
    }

    fn diffuse(&mut self, re: &[f64], im: &[f64]) {
        let grid = self.a.grid();
        let nx = grid.nx();
        let c = self.dt / (grid.h() * grid.h());
        for j in 1..grid.ny() - 1 {
            for k in j * nx + 1..(j + 1) * nx - 1 {
                self.scratch_re[k] =
                    re[k] + c * (re[k + 1] + re[k - 1] + re[k + nx] + re[k - nx] - 4.0 * re[k]);
                self.scratch_im[k] =
                    im[k] + c * (im[k + 1] + im[k - 1] + im[k + nx] + im[k - nx] - 4.0 * im[k]);
            }
        }
    }

    /// Advances `u` by `steps` reaction-diffusion-reaction steps.
    pub fn advance(&mut self, u: &mut ComplexField, steps: u64) -> Result<()> {
        if u.grid() != self.a.grid() {
            return Err(Error::GridMismatch);
        }
        let half = 0.5 * self.dt;
        for _ in 0..steps {
            {
                let (re, im) = u.parts_mut();
                self.react(re, im, half);
            }
            self.diffuse(u.re(), u.im());
            let (re, im) = u.parts_mut();
            std::mem::swap(re, &mut self.scratch_re);
            std::mem::swap(im, &mut self.scratch_im);
            self.react(re, im, half);
            for &(k, g) in &self.boundary {
                re[k] = g[0];
                im[k] = g[1];
            }
        }
        u.check_finite()
    }
}
