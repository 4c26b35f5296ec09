//! Discrete domains and finite-difference operators on the flat chart.
//!
//! Two discretizations are supported: a radial profile grid on `[0, R]` for
//! rotationally symmetric fields, and a uniform Cartesian grid on
//! `[-R, R]^2`. The Laplacian is the flat `Δ = ∂²/∂x² + ∂²/∂y² = 4∂_z∂_z̄`.
//!
//! Boundary nodes carry Dirichlet data and are never evaluated by the
//! stencils; operators write `0` there. Use [`Grid::is_boundary`] to mask them.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest admissible radial cell count.
pub const MIN_RADIAL_CELLS: usize = 16;

/// Uniform samples `r_i = i R / N`, `i = 0..=N`, of a disk of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    radius: f64,
    cells: usize,
}

impl RadialGrid {
    pub fn new(radius: f64, cells: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if cells < MIN_RADIAL_CELLS {
            return Err(Error::InvalidGrid(format!(
                "radial grid needs at least {MIN_RADIAL_CELLS} cells, got {cells}"
            )));
        }
        Ok(Self { radius, cells })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.radius / self.cells as f64
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn r(&self, i: usize) -> f64 {
        if i == self.cells {
            self.radius
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.r(i)).collect()
    }

    /// Coefficients `(lower, diag, upper)` of the radial Laplacian
    /// `η'' + η'/r` at node `i < N`. At the origin the symmetry `η'(0) = 0`
    /// gives `4(η_1 - η_0)/h²`.
    pub fn laplacian_stencil(&self, i: usize) -> (f64, f64, f64) {
        let h = self.spacing();
        let h2 = h * h;
        if i == 0 {
            (0.0, -4.0 / h2, 4.0 / h2)
        } else {
            let r = self.r(i);
            let adv = 1.0 / (2.0 * h * r);
            (1.0 / h2 - adv, -2.0 / h2, 1.0 / h2 + adv)
        }
    }

    /// Locate `r` in the grid: returns `(i, frac)` with `r = r_i + frac*h`,
    /// `0 <= frac < 1`, plus whether `r` sits exactly on a node.
    pub fn locate(&self, r: f64) -> (usize, f64, bool) {
        let h = self.spacing();
        let x = (r / h).clamp(0.0, self.cells as f64);
        let i = (x.floor() as usize).min(self.cells - 1);
        let frac = x - i as f64;
        let on_node = frac.abs() < 1e-12 || (1.0 - frac).abs() < 1e-12;
        (i, frac, on_node)
    }
}

/// Uniform `(N+1) x (N+1)` node lattice on `[-R, R]^2`, spacing `h = 2R/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGrid {
    half_width: f64,
    cells: usize,
}

impl PlanarGrid {
    pub fn new(half_width: f64, cells: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if cells < 4 || cells % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "planar grid needs an even cell count >= 4, got {cells}"
            )));
        }
        Ok(Self { half_width, cells })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn side(&self) -> usize {
        self.cells + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, a: usize) -> f64 {
        if 2 * a == self.cells {
            0.0
        } else {
            -self.half_width + a as f64 * self.spacing()
        }
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        b * self.side() + a
    }

    /// `(a, b)` lattice position of flat index `i` (x index first).
    pub fn position(&self, i: usize) -> (usize, usize) {
        (i % self.side(), i / self.side())
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        let (a, b) = self.position(i);
        (self.coord(a), self.coord(b))
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        let (a, b) = self.position(i);
        a == 0 || b == 0 || a == self.cells || b == self.cells
    }
}

/// Either discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Planar(PlanarGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.len(),
            Grid::Planar(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        match self {
            Grid::Radial(g) => i == g.cells(),
            Grid::Planar(g) => g.is_boundary(i),
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.spacing(),
            Grid::Planar(g) => g.spacing(),
        }
    }

    /// Distance from the chart origin of node `i`.
    pub fn radius_of(&self, i: usize) -> f64 {
        match self {
            Grid::Radial(g) => g.r(i),
            Grid::Planar(g) => {
                let (x, y) = g.point(i);
                x.hypot(y)
            }
        }
    }

    /// Outer radius (radial) or half-width (planar).
    pub fn extent(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.radius(),
            Grid::Planar(g) => g.half_width(),
        }
    }

    pub fn as_radial(&self) -> Option<&RadialGrid> {
        match self {
            Grid::Radial(g) => Some(g),
            Grid::Planar(_) => None,
        }
    }

    pub fn as_planar(&self) -> Option<&PlanarGrid> {
        match self {
            Grid::Planar(g) => Some(g),
            Grid::Radial(_) => None,
        }
    }

    /// Sparse Laplacian row at an interior node: `(column, weight)` pairs.
    pub fn laplacian_row(&self, i: usize) -> Vec<(usize, f64)> {
        match self {
            Grid::Radial(g) => {
                let (lo, d, up) = g.laplacian_stencil(i);
                if i == 0 {
                    vec![(0, d), (1, up)]
                } else {
                    vec![(i - 1, lo), (i, d), (i + 1, up)]
                }
            }
            Grid::Planar(g) => {
                let h2 = g.spacing() * g.spacing();
                let s = g.side();
                vec![(i - s, 1.0 / h2), (i - 1, 1.0 / h2), (i, -4.0 / h2), (i + 1, 1.0 / h2), (i + s, 1.0 / h2)]
            }
        }
    }

    /// Apply the Laplacian stencil to raw node values at interior node `i`.
    pub fn laplacian_at(&self, values: &[f64], i: usize) -> f64 {
        match self {
            Grid::Radial(g) => {
                let (lo, d, up) = g.laplacian_stencil(i);
                if i == 0 {
                    d * values[0] + up * values[1]
                } else {
                    lo * values[i - 1] + d * values[i] + up * values[i + 1]
                }
            }
            Grid::Planar(g) => {
                let h2 = g.spacing() * g.spacing();
                let s = g.side();
                (values[i - s] + values[i - 1] - 4.0 * values[i] + values[i + 1] + values[i + s]) / h2
            }
        }
    }
}

impl From<RadialGrid> for Grid {
    fn from(g: RadialGrid) -> Self {
        Grid::Radial(g)
    }
}

impl From<PlanarGrid> for Grid {
    fn from(g: PlanarGrid) -> Self {
        Grid::Planar(g)
    }
}

/// Real node values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: impl Into<Grid>, values: Vec<f64>) -> Result<Self> {
        let grid = grid.into();
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: impl Into<Grid>) -> Self {
        let grid = grid.into();
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn constant(grid: impl Into<Grid>, c: f64) -> Self {
        let grid = grid.into();
        Self { values: vec![c; grid.len()], grid }
    }

    /// Sample a function of the node's chart position `(x, y)`; radial grids
    /// sample along the positive real axis.
    pub fn from_fn(grid: impl Into<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let grid = grid.into();
        let values = match &grid {
            Grid::Radial(g) => (0..g.len()).map(|i| f(g.r(i), 0.0)).collect(),
            Grid::Planar(g) => (0..g.len())
                .map(|i| {
                    let (x, y) = g.point(i);
                    f(x, y)
                })
                .collect(),
        };
        Self { grid, values }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `alpha*self + beta*other` on a shared grid.
    pub fn lin_comb(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("linear combination of fields on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
        Ok(Self { grid: self.grid, values })
    }

    /// Linear interpolation of a radial field at radius `r`.
    pub fn interpolate_radial(&self, r: f64) -> Option<f64> {
        let g = self.grid.as_radial()?;
        let (i, frac, _) = g.locate(r);
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Complex node values, used for `∂_z` of real fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

/// Discrete Laplacian at interior nodes; boundary nodes are left at `0`.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    let grid = *f.grid();
    if let Grid::Radial(g) = grid {
        if g.cells() < MIN_RADIAL_CELLS {
            return Err(Error::InvalidGrid("radial grid too coarse".into()));
        }
    }
    let vals = f.values();
    let mut out = vec![0.0; grid.len()];
    crate::par::fill(&mut out, |i| if grid.is_boundary(i) { 0.0 } else { grid.laplacian_at(vals, i) });
    Ok(ScalarField::from_parts_unchecked(grid, out))
}

/// `∂_z f = (∂_x f - i ∂_y f)/2` by central differences on a planar grid.
pub fn dz_derivative(f: &ScalarField) -> Result<ComplexField> {
    let g = f
        .grid()
        .as_planar()
        .copied()
        .ok_or_else(|| Error::InvalidArgument("dz_derivative needs a planar grid; use radial_dz".into()))?;
    let v = f.values();
    let h = g.spacing();
    let s = g.side();
    let values = (0..g.len())
        .map(|i| {
            if g.is_boundary(i) {
                return Complex64::new(0.0, 0.0);
            }
            let fx = (v[i + 1] - v[i - 1]) / (2.0 * h);
            let fy = (v[i + s] - v[i - s]) / (2.0 * h);
            Complex64::new(0.5 * fx, -0.5 * fy)
        })
        .collect();
    Ok(ComplexField { grid: Grid::Planar(g), values })
}

/// Radial derivative `f'(r_i)`: central differences inside, third-order
/// one-sided differences at both endpoints.
pub fn radial_derivative(f: &ScalarField) -> Result<Vec<f64>> {
    let g = f
        .grid()
        .as_radial()
        .copied()
        .ok_or_else(|| Error::InvalidArgument("radial derivative needs a radial grid".into()))?;
    let v = f.values();
    let h = g.spacing();
    let n = g.cells();
    Ok((0..=n)
        .map(|i| {
            if i == 0 {
                (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h)
            } else if i == n {
                (11.0 * v[n] - 18.0 * v[n - 1] + 9.0 * v[n - 2] - 2.0 * v[n - 3]) / (6.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect())
}

/// `∂_z` of a radially symmetric field along the ray `z = r e^{iθ}`:
/// `f'(r) e^{-iθ} / 2`.
pub fn radial_dz(f: &ScalarField, theta: f64) -> Result<Vec<Complex64>> {
    let phase = Complex64::from_polar(0.5, -theta);
    Ok(radial_derivative(f)?.into_iter().map(|d| phase * d).collect())
}
