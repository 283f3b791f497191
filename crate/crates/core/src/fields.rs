//! Grid geometry, nodal fields and the finite-difference operators shared by
//! the solver and the diagnostics.
//!
//! Nodes are stored row-major: node `(i, j)` lives at `j * nx + i`, with `i`
//! running along `x`. Every reduction in this module walks nodes in that
//! order, so repeated evaluations are bit-identical.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Uniform rectangular grid with spacing `h` in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::config(
                "grid",
                format!("need at least 3x3 nodes, got {nx}x{ny}"),
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config("grid", format!("spacing must be positive, got {h}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::config("grid", "origin must be finite"));
        }
        Ok(Grid2D { nx, ny, h, origin })
    }

    /// `n x n` nodes covering `[0, 1]^2`.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::square(n, [0.0, 0.0], 1.0)
    }

    /// `n x n` nodes covering the square of side `side` with lower-left corner `origin`.
    pub fn square(n: usize, origin: [f64; 2], side: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::config("grid", format!("need at least 3 nodes per side, got {n}")));
        }
        Self::new(n, n, side / (n - 1) as f64, origin)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    /// Side lengths `((nx-1) h, (ny-1) h)`.
    pub fn extent(&self) -> [f64; 2] {
        [(self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h]
    }

    pub fn area(&self) -> f64 {
        let [lx, ly] = self.extent();
        lx * ly
    }

    pub fn center(&self) -> [f64; 2] {
        let [lx, ly] = self.extent();
        [self.origin[0] + 0.5 * lx, self.origin[1] + 0.5 * ly]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Whether `p` lies in the closed rectangle.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [lx, ly] = self.extent();
        p[0] >= self.origin[0]
            && p[0] <= self.origin[0] + lx
            && p[1] >= self.origin[1]
            && p[1] <= self.origin[1] + ly
    }

    /// Distance from `p` to the rectangle's boundary (negative outside).
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let [lx, ly] = self.extent();
        let dx = (p[0] - self.origin[0]).min(self.origin[0] + lx - p[0]);
        let dy = (p[1] - self.origin[1]).min(self.origin[1] + ly - p[1]);
        dx.min(dy)
    }

    /// Boundary nodes as a closed counter-clockwise loop starting at `(0, 0)`;
    /// the first node is not repeated at the end.
    pub fn boundary_loop(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(2 * (nx + ny) - 4);
        out.extend((0..nx).map(|i| (i, 0)));
        out.extend((1..ny).map(|j| (nx - 1, j)));
        out.extend((0..nx - 1).rev().map(|i| (i, ny - 1)));
        out.extend((1..ny - 1).rev().map(|j| (0, j)));
        out
    }

    /// Cell `(i, j)` spanning nodes `(i..=i+1, j..=j+1)` that contains `p`,
    /// clamped to the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.h).floor();
        let fy = ((p[1] - self.origin[1]) / self.h).floor();
        let ci = (fx.max(0.0) as usize).min(self.nx - 2);
        let cj = (fy.max(0.0) as usize).min(self.ny - 2);
        (ci, cj)
    }
}

fn first_non_finite(grid: &Grid2D, values: &[f64]) -> Option<(usize, usize)> {
    values
        .iter()
        .position(|v| !v.is_finite())
        .map(|k| grid.node(k))
}

/// One real value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(
                "field",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        if let Some((i, j)) = first_non_finite(&grid, &values) {
            return Err(Error::NonFinite { i, j });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every node. Non-finite samples are reported by node.
    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.node(k);
                f(grid.coords(i, j))
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.grid, values)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }
}

/// Complex (two-component) value per node: the order parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid2D,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexField {
    pub fn new(grid: Grid2D, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != grid.len() || im.len() != grid.len() {
            return Err(Error::config(
                "field",
                format!(
                    "expected {} values per component, got {} and {}",
                    grid.len(),
                    re.len(),
                    im.len()
                ),
            ));
        }
        let field = ComplexField { grid, re, im };
        field.check_finite()?;
        Ok(field)
    }

    pub fn constant(grid: Grid2D, value: [f64; 2]) -> Self {
        ComplexField {
            grid,
            re: vec![value[0]; grid.len()],
            im: vec![value[1]; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let mut re = Vec::with_capacity(grid.len());
        let mut im = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (i, j) = grid.node(k);
            let [a, b] = f(grid.coords(i, j));
            re.push(a);
            im.push(b);
        }
        Self::new(grid, re, im)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<f64>) {
        (&mut self.re, &mut self.im)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        let k = self.grid.index(i, j);
        [self.re[k], self.im[k]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: [f64; 2]) {
        let k = self.grid.index(i, j);
        self.re[k] = value[0];
        self.im[k] = value[1];
    }

    pub fn check_finite(&self) -> Result<()> {
        let bad = first_non_finite(&self.grid, &self.re)
            .into_iter()
            .chain(first_non_finite(&self.grid, &self.im))
            .min_by_key(|&(i, j)| self.grid.index(i, j));
        match bad {
            Some((i, j)) => Err(Error::NonFinite { i, j }),
            None => Ok(()),
        }
    }

    pub fn modulus(&self) -> ScalarField {
        let values = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| a.hypot(*b))
            .collect();
        ScalarField::from_parts_unchecked(self.grid, values)
    }

    pub fn modulus_sq(&self) -> ScalarField {
        let values = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| a * a + b * b)
            .collect();
        ScalarField::from_parts_unchecked(self.grid, values)
    }

    pub fn real_part(&self) -> ScalarField {
        ScalarField::from_parts_unchecked(self.grid, self.re.clone())
    }

    pub fn imag_part(&self) -> ScalarField {
        ScalarField::from_parts_unchecked(self.grid, self.im.clone())
    }

    /// Nodewise complex product.
    pub fn mul(&self, other: &ComplexField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.len();
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (self.re[k], self.im[k]);
            let (c, d) = (other.re[k], other.im[k]);
            re.push(a * c - b * d);
            im.push(a * d + b * c);
        }
        Self::new(self.grid, re, im)
    }

    /// Multiplies every node by the unit complex number `exp(i * angle)`.
    pub fn rotate(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let re = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| c * a - s * b)
            .collect();
        let im = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| s * a + c * b)
            .collect();
        ComplexField {
            grid: self.grid,
            re,
            im,
        }
    }

    /// `alpha * self + beta * other` with real coefficients.
    pub fn lin_comb(&self, alpha: f64, other: &ComplexField, beta: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let comb = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| alpha * a + beta * b).collect()
        };
        Self::new(self.grid, comb(&self.re, &other.re), comb(&self.im, &other.im))
    }

    /// Largest nodewise distance `|self - other|`.
    pub fn max_distance(&self, other: &ComplexField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok((0..self.grid.len()).fold(0.0, |m, k| {
            m.max((self.re[k] - other.re[k]).hypot(self.im[k] - other.im[k]))
        }))
    }
}

/// Node inclusion flags, typically the domain minus a union of balls.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    grid: Grid2D,
    included: Vec<bool>,
}

impl RegionMask {
    pub fn full(grid: Grid2D) -> Self {
        RegionMask {
            grid,
            included: vec![true; grid.len()],
        }
    }

    /// Excludes every node strictly closer than `radius` to one of `centers`.
    pub fn excluding_balls(grid: Grid2D, centers: &[[f64; 2]], radius: f64) -> Self {
        let mut mask = Self::full(grid);
        for &c in centers {
            mask.exclude_ball(c, radius);
        }
        mask
    }

    pub fn exclude_ball(&mut self, center: [f64; 2], radius: f64) {
        for k in 0..self.grid.len() {
            let (i, j) = self.grid.node(k);
            if dist(self.grid.coords(i, j), center) < radius {
                self.included[k] = false;
            }
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn is_included(&self, i: usize, j: usize) -> bool {
        self.included[self.grid.index(i, j)]
    }

    pub fn flags(&self) -> &[bool] {
        &self.included
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

#[inline]
pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn laplacian_component(grid: &Grid2D, f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut out = vec![0.0; grid.len()];
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            out[k] = (f[k + 1] + f[k - 1] + f[k + nx] + f[k - nx] - 4.0 * f[k]) * inv_h2;
        }
    }
    out
}

/// Five-point Laplacian of each component; boundary nodes hold zero.
pub fn laplacian(f: &ComplexField) -> Result<ComplexField> {
    f.check_finite()?;
    let grid = *f.grid();
    Ok(ComplexField {
        grid,
        re: laplacian_component(&grid, &f.re),
        im: laplacian_component(&grid, &f.im),
    })
}

/// Five-point Laplacian of a scalar field; boundary nodes hold zero.
pub fn laplacian_scalar(f: &ScalarField) -> Result<ScalarField> {
    if let Some((i, j)) = first_non_finite(&f.grid, &f.values) {
        return Err(Error::NonFinite { i, j });
    }
    Ok(ScalarField::from_parts_unchecked(
        f.grid,
        laplacian_component(&f.grid, &f.values),
    ))
}

/// Derivative along one axis: central in the interior, second-order
/// one-sided at the two ends.
fn diff_axis(grid: &Grid2D, f: &[f64], along_x: bool) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv_2h = 0.5 / grid.h();
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let (pos, n, stride) = if along_x { (i, nx, 1) } else { (j, ny, nx) };
            out[k] = if pos == 0 {
                (-3.0 * f[k] + 4.0 * f[k + stride] - f[k + 2 * stride]) * inv_2h
            } else if pos == n - 1 {
                (3.0 * f[k] - 4.0 * f[k - stride] + f[k - 2 * stride]) * inv_2h
            } else {
                (f[k + stride] - f[k - stride]) * inv_2h
            };
        }
    }
    out
}

/// `(df/dx, df/dy)` with central differences inside and second-order
/// one-sided differences on boundary nodes.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    if let Some((i, j)) = first_non_finite(&f.grid, &f.values) {
        return Err(Error::NonFinite { i, j });
    }
    let gx = diff_axis(&f.grid, &f.values, true);
    let gy = diff_axis(&f.grid, &f.values, false);
    Ok((
        ScalarField::from_parts_unchecked(f.grid, gx),
        ScalarField::from_parts_unchecked(f.grid, gy),
    ))
}

/// Nodewise `|grad V|^2 = |dV/dx|^2 + |dV/dy|^2` using the same differences as [`gradient`].
pub fn gradient_sq(v: &ComplexField) -> Result<ScalarField> {
    v.check_finite()?;
    let grid = v.grid;
    let rx = diff_axis(&grid, &v.re, true);
    let ry = diff_axis(&grid, &v.re, false);
    let ix = diff_axis(&grid, &v.im, true);
    let iy = diff_axis(&grid, &v.im, false);
    let values = (0..grid.len())
        .map(|k| rx[k] * rx[k] + ry[k] * ry[k] + ix[k] * ix[k] + iy[k] * iy[k])
        .collect();
    Ok(ScalarField::from_parts_unchecked(grid, values))
}

/// Transport term `gx * dv/dx + gy * dv/dy` with central differences,
/// zero on boundary nodes.
pub fn advect(v: &ComplexField, gx: &ScalarField, gy: &ScalarField) -> Result<ComplexField> {
    if v.grid != gx.grid || v.grid != gy.grid {
        return Err(Error::GridMismatch);
    }
    v.check_finite()?;
    let grid = v.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv_2h = 0.5 / grid.h();
    let mut re = vec![0.0; grid.len()];
    let mut im = vec![0.0; grid.len()];
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            let (ax, ay) = (gx.values[k] * inv_2h, gy.values[k] * inv_2h);
            re[k] = ax * (v.re[k + 1] - v.re[k - 1]) + ay * (v.re[k + nx] - v.re[k - nx]);
            im[k] = ax * (v.im[k + 1] - v.im[k - 1]) + ay * (v.im[k + nx] - v.im[k - nx]);
        }
    }
    Ok(ComplexField { grid, re, im })
}

/// `(sup, l2)` of `f` over the included nodes: `sup = max |f|` and
/// `l2 = sqrt(h^2 * sum f^2)`, summed in row-major order.
pub fn masked_norms(f: &ScalarField, mask: &RegionMask) -> Result<(f64, f64)> {
    if f.grid != mask.grid {
        return Err(Error::GridMismatch);
    }
    let mut any = false;
    let mut sup = 0.0f64;
    let mut sum_sq = 0.0;
    for (v, &inc) in f.values.iter().zip(&mask.included) {
        if inc {
            any = true;
            sup = sup.max(v.abs());
            sum_sq += v * v;
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    let h = f.grid.h();
    Ok((sup, (h * h * sum_sq).sqrt()))
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `i,j,x,y,value`, one row per node in row-major order.
pub fn write_scalar_csv<W: Write>(f: &ScalarField, mut out: W) -> Result<()> {
    writeln!(out, "i,j,x,y,value")?;
    let grid = f.grid;
    for k in 0..grid.len() {
        let (i, j) = grid.node(k);
        let [x, y] = grid.coords(i, j);
        writeln!(out, "{i},{j},{},{},{}", fmt17(x), fmt17(y), fmt17(f.values[k]))?;
    }
    Ok(())
}

/// Writes `i,j,x,y,re,im`, one row per node in row-major order.
pub fn write_complex_csv<W: Write>(f: &ComplexField, mut out: W) -> Result<()> {
    writeln!(out, "i,j,x,y,re,im")?;
    let grid = f.grid;
    for k in 0..grid.len() {
        let (i, j) = grid.node(k);
        let [x, y] = grid.coords(i, j);
        writeln!(
            out,
            "{i},{j},{},{},{},{}",
            fmt17(x),
            fmt17(y),
            fmt17(f.re[k]),
            fmt17(f.im[k])
        )?;
    }
    Ok(())
}

/// Reads a field written by [`write_complex_csv`] back onto `grid`.
pub fn read_complex_csv<R: Read>(grid: Grid2D, input: R) -> Result<ComplexField> {
    let mut reader = csv::Reader::from_reader(input);
    let mut re = vec![f64::NAN; grid.len()];
    let mut im = vec![f64::NAN; grid.len()];
    for record in reader.deserialize() {
        let (i, j, _x, _y, a, b): (usize, usize, f64, f64, f64, f64) = record?;
        if i >= grid.nx() || j >= grid.ny() {
            return Err(Error::config("snapshot", format!("node ({i}, {j}) outside grid")));
        }
        let k = grid.index(i, j);
        re[k] = a;
        im[k] = b;
    }
    ComplexField::new(grid, re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid2D {
        Grid2D::unit_square(n).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(Grid2D::new(2, 5, 0.1, [0.0, 0.0]).is_err());
        assert!(Grid2D::new(5, 5, 0.0, [0.0, 0.0]).is_err());
        let g = Grid2D::new(5, 4, 0.5, [1.0, -1.0]).unwrap();
        assert_eq!(g.extent(), [2.0, 1.5]);
    }

    #[test]
    fn boundary_loop_visits_each_boundary_node_once() {
        let g = Grid2D::new(5, 4, 1.0, [0.0, 0.0]).unwrap();
        let lp = g.boundary_loop();
        assert_eq!(lp.len(), 2 * (5 + 4) - 4);
        assert!(lp.iter().all(|&(i, j)| g.is_boundary(i, j)));
        let mut sorted = lp.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), lp.len());
        // consecutive nodes are grid neighbours, including the wrap-around
        for w in 0..lp.len() {
            let (a, b) = (lp[w], lp[(w + 1) % lp.len()]);
            assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let f = ComplexField::constant(unit(9), [2.5, -1.0]);
        let l = laplacian(&f).unwrap();
        assert!(l.re().iter().chain(l.im()).all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = Grid2D::new(11, 13, 0.37, [-1.0, 0.5]).unwrap();
        let f = ComplexField::from_fn(g, |[x, y]| [x * x + y * y, 0.0]).unwrap();
        let l = laplacian(&f).unwrap();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let want = if g.is_boundary(i, j) { 0.0 } else { 4.0 };
                assert!((l.get(i, j)[0] - want).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn laplacian_of_sine_mode() {
        let g = unit(64);
        let f = ComplexField::from_fn(g, |[x, y]| [(PI * x).sin() * (PI * y).sin(), 0.0]).unwrap();
        let l = laplacian(&f).unwrap();
        let mut err = 0.0f64;
        for j in 1..63 {
            for i in 1..63 {
                let [x, y] = g.coords(i, j);
                let exact = -2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
                err = err.max((l.get(i, j)[0] - exact).abs());
            }
        }
        assert!(err <= 0.01, "max error {err}");
    }

    #[test]
    fn laplacian_names_non_finite_node() {
        let g = unit(5);
        let mut re = vec![0.0; 25];
        re[g.index(3, 2)] = f64::NAN;
        let f = ComplexField {
            grid: g,
            re,
            im: vec![0.0; 25],
        };
        match laplacian(&f) {
            Err(Error::NonFinite { i: 3, j: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = unit(7);
        let f = ScalarField::from_fn(g, |[x, _]| 3.0 * x).unwrap();
        let (gx, gy) = gradient(&f).unwrap();
        assert!(gx.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert!(gy.values().iter().all(|v| v.abs() < 1e-12));
        let c = ScalarField::constant(g, 4.0);
        let (cx, cy) = gradient(&c).unwrap();
        assert_eq!(cx.max_abs(), 0.0);
        assert_eq!(cy.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_x2y() {
        let g = unit(64);
        let f = ScalarField::from_fn(g, |[x, y]| x * x * y).unwrap();
        let (gx, gy) = gradient(&f).unwrap();
        let mut err = 0.0f64;
        for k in 0..g.len() {
            let (i, j) = g.node(k);
            let [x, y] = g.coords(i, j);
            err = err.max((gx.values()[k] - 2.0 * x * y).abs());
            err = err.max((gy.values()[k] - x * x).abs());
        }
        assert!(err <= 0.01, "max error {err}");
    }

    #[test]
    fn advect_affine_and_zero_velocity() {
        let g = unit(9);
        let v = ComplexField::from_fn(g, |[x, y]| [x + 0.3 * y, 1.0]).unwrap();
        let zero = ScalarField::constant(g, 0.0);
        let a0 = advect(&v, &zero, &zero).unwrap();
        assert!(a0.re().iter().chain(a0.im()).all(|&x| x == 0.0));
        let two = ScalarField::constant(g, 2.0);
        let a = advect(&v, &two, &zero).unwrap();
        for j in 1..8 {
            for i in 1..8 {
                let [re, im] = a.get(i, j);
                assert!((re - 2.0).abs() < 1e-12 && im.abs() < 1e-12);
            }
        }
        let other = unit(10);
        assert!(matches!(
            advect(&v, &ScalarField::constant(other, 0.0), &zero),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn advect_matches_gradient_then_dot() {
        let g = unit(33);
        let v = ComplexField::from_fn(g, |[x, y]| [(3.0 * x).sin() * y, (x * y).cos()]).unwrap();
        let gx = ScalarField::from_fn(g, |[x, y]| x - y * y).unwrap();
        let gy = ScalarField::from_fn(g, |[x, y]| (x + y).exp()).unwrap();
        let a = advect(&v, &gx, &gy).unwrap();
        let (rx, ry) = gradient(&v.real_part()).unwrap();
        let (ix, iy) = gradient(&v.imag_part()).unwrap();
        for j in 1..32 {
            for i in 1..32 {
                let k = g.index(i, j);
                let re = gx.values()[k] * rx.values()[k] + gy.values()[k] * ry.values()[k];
                let im = gx.values()[k] * ix.values()[k] + gy.values()[k] * iy.values()[k];
                let [ar, ai] = a.get(i, j);
                assert!((ar - re).abs() < 1e-12 && (ai - im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_norms_cases() {
        let g = unit(11);
        let f = ScalarField::constant(g, 0.5);
        let (sup, l2) = masked_norms(&f, &RegionMask::full(g)).unwrap();
        assert_eq!(sup, 0.5);
        // 121 nodes at weight h^2 = 0.01: node quadrature over-counts the unit area
        assert!((l2 - (0.01f64 * 121.0 * 0.25).sqrt()).abs() < 1e-14);
        assert!((l2 - 0.5).abs() < 0.06);

        let empty = RegionMask::excluding_balls(g, &[[0.5, 0.5]], 10.0);
        assert!(matches!(masked_norms(&f, &empty), Err(Error::EmptyMask)));

        let mut values = vec![0.0; g.len()];
        values[g.index(4, 6)] = -3.0;
        let spike = ScalarField::new(g, values).unwrap();
        let (sup, l2) = masked_norms(&spike, &RegionMask::full(g)).unwrap();
        assert_eq!(sup, 3.0);
        assert!((l2 - 3.0 * g.h()).abs() < 1e-15);
    }

    #[test]
    fn ball_exclusion_is_strict() {
        let g = unit(11);
        let mask = RegionMask::excluding_balls(g, &[[0.5, 0.5]], 0.2);
        // distance exactly 0.2 stays included
        assert!(mask.is_included(7, 5));
        assert!(!mask.is_included(6, 5));
        assert!(!mask.is_included(5, 5));
    }

    #[test]
    fn csv_layout() {
        let g = unit(3);
        let f = ComplexField::from_fn(g, |[x, y]| [x, -y]).unwrap();
        let mut buf = Vec::new();
        write_complex_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i,j,x,y,re,im"));
        assert_eq!(
            lines.nth(1),
            Some("1,0,5.0000000000000000e-1,0.0000000000000000e0,5.0000000000000000e-1,-0.0000000000000000e0")
        );
        let back = read_complex_csv(g, text.as_bytes()).unwrap();
        assert_eq!(back, f);
    }
}
