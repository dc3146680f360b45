//! Uniform grids on [0, 1], the triangle T = {0 <= y <= x <= 1}, composite
//! trapezoid quadrature and the finite-difference stencils used by the kernel
//! residual diagnostics.
//!
//! Triangle fields are stored flattened row-major over `(i, j <= i)`, so row
//! `i` (fixed `x_i`, `y` running from 0 to `x_i`) is a contiguous slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = i * dx` on [0, 1] with `dx = 1 / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
}

impl Grid1D {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        Ok(Self { n: n_points })
    }

    /// Grid whose spacing is `dx`; `1/dx` must be (close to) an integer.
    pub fn with_spacing(dx: f64) -> Result<Self> {
        if !(dx > 0.0 && dx <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "dx must lie in (0, 1], got {dx}"
            )));
        }
        let cells = (1.0 / dx).round();
        if ((1.0 / dx) - cells).abs() > 1e-6 * cells {
            return Err(Error::InvalidInput(format!(
                "1/dx must be an integer, got dx = {dx}"
            )));
        }
        Self::new(cells as usize + 1)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            1.0
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    pub fn tri(&self) -> TriGrid {
        TriGrid { n: self.n }
    }
}

/// Values of a function on the nodes of a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl ScalarField1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// `int_0^1 f^2 dx` by the trapezoid rule.
    pub fn l2_norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        trapz(&sq, self.grid.dx())
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn integral(&self) -> f64 {
        trapz(&self.values, self.grid.dx())
    }

    /// Piecewise-linear interpolation at `x`, clamped to [0, 1].
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let pos = x / self.grid.dx();
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let t = pos - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Linear interpolation onto another uniform grid.
    pub fn resample(&self, target: Grid1D) -> ScalarField1D {
        if target == self.grid {
            return self.clone();
        }
        ScalarField1D::from_fn(target, |x| self.eval(x))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Node set `{(x_i, y_j) : j <= i}` of a [`Grid1D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriGrid {
    n: usize,
}

impl TriGrid {
    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D { n: self.n }
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.n);
        i * (i + 1) / 2 + j
    }

    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        // largest i with i(i+1)/2 <= idx
        let mut i = (((8 * idx + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
        while (i + 1) * (i + 2) / 2 <= idx {
            i += 1;
        }
        while i * (i + 1) / 2 > idx {
            i -= 1;
        }
        (i, idx - i * (i + 1) / 2)
    }

    /// All query points `(x_i, y_j)` in storage order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let g = self.grid();
        let mut pts = Vec::with_capacity(self.len());
        for i in 0..self.n {
            for j in 0..=i {
                pts.push((g.node(i), g.node(j)));
            }
        }
        pts
    }
}

/// Values on the nodes of a [`TriGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriField {
    tri: TriGrid,
    values: Vec<f64>,
}

impl TriField {
    pub fn new(tri: TriGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != tri.len() {
            return Err(Error::ShapeMismatch(format!(
                "triangle field has {} values, expected {}",
                values.len(),
                tri.len()
            )));
        }
        Ok(Self { tri, values })
    }

    pub fn zeros(tri: TriGrid) -> Self {
        Self {
            tri,
            values: vec![0.0; tri.len()],
        }
    }

    pub fn from_fn(tri: TriGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = tri.points().into_iter().map(|(x, y)| f(x, y)).collect();
        Self { tri, values }
    }

    pub fn tri(&self) -> TriGrid {
        self.tri
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.tri.index_of(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.tri.index_of(i, j);
        self.values[idx] = v;
    }

    /// `k(x_i, y_j)` for `j = 0..=i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let start = self.tri.index_of(i, 0);
        &self.values[start..=start + i]
    }

    /// The diagonal trace `k(x_i, x_i)`.
    pub fn diagonal(&self) -> ScalarField1D {
        let grid = self.tri.grid();
        let values = (0..grid.n_points()).map(|i| self.get(i, i)).collect();
        ScalarField1D { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn sub(&self, other: &TriField) -> Result<TriField> {
        if self.tri != other.tri {
            return Err(Error::ShapeMismatch("triangle grids differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TriField {
            tri: self.tri,
            values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Restriction onto a coarser grid whose spacing is an integer multiple.
    pub fn restrict(&self, coarse: TriGrid) -> Result<TriField> {
        let (nf, nc) = (self.tri.n_points() - 1, coarse.n_points() - 1);
        if nc == 0 || nf % nc != 0 {
            return Err(Error::ShapeMismatch(format!(
                "cannot restrict {} intervals onto {}",
                nf, nc
            )));
        }
        let r = nf / nc;
        let mut out = TriField::zeros(coarse);
        for i in 0..=nc {
            for j in 0..=i {
                out.set(i, j, self.get(i * r, j * r));
            }
        }
        Ok(out)
    }
}

pub(crate) fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Composite trapezoid rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], dx: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "trapezoid needs at least 2 samples, got {}",
            values.len()
        )));
    }
    Ok(trapz(values, dx))
}

/// Trapezoid rule; a single sample spans an empty interval and integrates to 0.
#[inline]
pub(crate) fn trapz(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral `int_0^{x_i} f`, one entry per node.
pub fn cumulative_trapezoid(values: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dx * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// `d/dx [k(x, x)]` by second-order differences of the diagonal trace.
pub fn diff_diagonal(k: &TriField) -> Result<ScalarField1D> {
    let n = k.tri().n_points();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "diagonal derivative needs at least 3 points, got {n}"
        )));
    }
    let g = k.diagonal();
    let d = g.values();
    let h = g.grid().dx();
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (d[i + 1] - d[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * d[n - 1] - 4.0 * d[n - 2] + d[n - 3]) / (2.0 * h);
    ScalarField1D::new(g.grid(), out)
}

/// Second derivative of equally spaced samples `line` at position `p`.
/// Central where possible, one-sided 4-point at the ends. `line.len() >= 4`.
#[inline]
fn second_derivative_on_line(line: &[f64], p: usize, h2: f64) -> f64 {
    let l = line.len();
    if p == 0 {
        (2.0 * line[0] - 5.0 * line[1] + 4.0 * line[2] - line[3]) / h2
    } else if p == l - 1 {
        (2.0 * line[l - 1] - 5.0 * line[l - 2] + 4.0 * line[l - 3] - line[l - 4]) / h2
    } else {
        (line[p - 1] - 2.0 * line[p] + line[p + 1]) / h2
    }
}

/// `k_xx - k_yy` at every triangle node.
///
/// Lines of constant `y` (or `x`) holding fewer than four nodes sit in the two
/// corners of T; there the second derivative is linearly extrapolated from
/// the two neighbouring lines, which keeps second order.
pub fn tri_laplace_diff(k: &TriField) -> Result<TriField> {
    let tri = k.tri();
    let n = tri.n_points();
    if n < 5 {
        return Err(Error::InvalidInput(format!(
            "wave-operator stencil needs at least 5 points, got {n}"
        )));
    }
    let h = tri.grid().dx();
    let h2 = h * h;

    // k_xx along lines y = y_j, x from y_j to 1 (indices i = j..n-1).
    let mut kxx = TriField::zeros(tri);
    let mut line = Vec::with_capacity(n);
    for j in 0..n {
        if n - j < 4 {
            continue;
        }
        line.clear();
        line.extend((j..n).map(|i| k.get(i, j)));
        for i in j..n {
            kxx.set(i, j, second_derivative_on_line(&line, i - j, h2));
        }
    }
    for j in (n - 3)..n {
        for i in j..n {
            let v = 2.0 * kxx.get(i, j - 1) - kxx.get(i, j - 2);
            kxx.set(i, j, v);
        }
    }

    // k_yy along lines x = x_i, y from 0 to x_i (a contiguous row).
    let mut kyy = TriField::zeros(tri);
    for i in 3..n {
        let row = k.row(i).to_vec();
        for j in 0..=i {
            kyy.set(i, j, second_derivative_on_line(&row, j, h2));
        }
    }
    for i in (0..3).rev() {
        for j in 0..=i {
            let v = 2.0 * kyy.get(i + 1, j) - kyy.get(i + 2, j);
            kyy.set(i, j, v);
        }
    }

    kxx.sub(&kyy)
}
