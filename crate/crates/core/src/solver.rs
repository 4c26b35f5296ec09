//! Damped Newton solver for the Dirichlet problems of the error systems, and
//! the radial Helmholtz comparison solve `Δη = kη`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, PlanarGrid, RadialGrid, ScalarField};
use crate::linalg;
use crate::spectral::omega_factor;
use crate::toda::{self, Family, SystemKind, TodaState};

/// Inner linear solver for the Newton steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Block tridiagonal elimination on radial grids, CG on planar ones.
    #[default]
    Auto,
    DirectBanded,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Target sup-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum step halvings in the line search.
    pub max_halvings: usize,
    pub linear_solver: LinearSolver,
    /// Relative tolerance of the CG inner solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 40,
            max_halvings: 30,
            linear_solver: LinearSolver::Auto,
            inner_tol: 1e-13,
            inner_max_iter: 20_000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 1e-13) {
            return Err(Error::InvalidArgument(format!("tolerance must be >= 1e-13, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dirichlet values of one independent field.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryField {
    Constant(f64),
    /// Values indexed like the grid nodes; only boundary nodes are read.
    Nodal(Vec<f64>),
}

/// Dirichlet data for the independent unknowns. Mirrored fields take the
/// negated values implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    fields: Vec<BoundaryField>,
}

impl BoundaryData {
    pub fn new(fields: Vec<BoundaryField>) -> Self {
        Self { fields }
    }

    pub fn zeros(kind: SystemKind) -> Self {
        Self::constant(&vec![0.0; kind.independent_count()])
    }

    pub fn constant(values: &[f64]) -> Self {
        Self { fields: values.iter().map(|&v| BoundaryField::Constant(v)).collect() }
    }

    /// Constant data `α t^{-2/b} (p + 1 - j)` on field `j = 1..p`: a staircase
    /// that excites every eigenmode of the lattice.
    pub fn staircase(kind: SystemKind, t: f64, alpha: f64) -> Self {
        let p = kind.independent_count();
        let base = alpha * kind.amplitude_scale(t);
        Self::constant(&(1..=p).map(|j| base * (p + 1 - j) as f64).collect::<Vec<_>>())
    }

    pub fn fields(&self) -> &[BoundaryField] {
        &self.fields
    }

    /// Largest absolute boundary value `A`.
    pub fn amplitude(&self, grid: &Grid) -> f64 {
        self.fields
            .iter()
            .map(|f| match f {
                BoundaryField::Constant(c) => c.abs(),
                BoundaryField::Nodal(v) => v
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| grid.is_boundary(*i))
                    .fold(0.0_f64, |m, (_, x)| m.max(x.abs())),
            })
            .fold(0.0, f64::max)
    }

    fn value(&self, field: usize, node: usize) -> f64 {
        match &self.fields[field] {
            BoundaryField::Constant(c) => *c,
            BoundaryField::Nodal(v) => v[node],
        }
    }
}

/// Solved state with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSolution {
    pub state: TodaState,
    pub residual: f64,
    pub iterations: usize,
    pub boundary_amplitude: f64,
    /// Set when the boundary amplitude leaves the perturbative regime.
    pub warning: Option<String>,
}

impl MetricSolution {
    pub fn kind(&self) -> SystemKind {
        self.state.kind()
    }

    pub fn t(&self) -> f64 {
        self.state.t()
    }

    pub fn grid(&self) -> &Grid {
        self.state.grid()
    }
}

#[derive(Debug)]
pub enum SolveError {
    /// Iteration cap hit or line search stalled; carries the best iterate.
    NonConvergence { best: Box<MetricSolution>, reason: String },
    LinearSolveFailure(String),
    Invalid(Error),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NonConvergence { best, reason } => write!(
                f,
                "Newton did not converge ({reason}); best residual {:e} after {} iterations",
                best.residual, best.iterations
            ),
            SolveError::LinearSolveFailure(msg) => write!(f, "linear solve failed: {msg}"),
            SolveError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<Error> for SolveError {
    fn from(e: Error) -> Self {
        match e {
            Error::LinearSolve(msg) => SolveError::LinearSolveFailure(msg),
            other => SolveError::Invalid(other),
        }
    }
}

/// Radial cell count that puts about 20 nodes into the thinnest boundary
/// layer: the next power of two at or above `max(16, 40 R τ ω_max)`.
pub fn auto_cells(kind: SystemKind, t: f64, radius: f64) -> usize {
    let m = kind.lattice_len();
    let mut omega = (1..m).map(|k| omega_factor(m, k)).fold(0.0, f64::max);
    if kind.family() == Family::NMinus1Cyclic {
        // ṽ^1 decays at 2τ, i.e. like a mode with |1 - ζ^k| = 1
        omega = omega.max(1.0);
    }
    let target = (40.0 * radius * kind.rate_scale(t) * omega).ceil().max(16.0) as usize;
    target.next_power_of_two()
}

/// Solve `residual = 0` with the given Dirichlet data by damped Newton from
/// the zero interior state.
pub fn solve_dirichlet(
    kind: SystemKind,
    t: f64,
    grid: impl Into<Grid>,
    boundary: &BoundaryData,
    config: &SolveConfig,
) -> std::result::Result<MetricSolution, SolveError> {
    config.validate()?;
    let grid = grid.into();
    let p = kind.independent_count();
    if boundary.fields.len() != p {
        return Err(Error::InvalidArgument(format!(
            "boundary data has {} fields, system has {p} unknowns",
            boundary.fields.len()
        ))
        .into());
    }
    for f in &boundary.fields {
        match f {
            BoundaryField::Nodal(v) if v.len() != grid.len() => {
                return Err(Error::InvalidGrid("nodal boundary data does not match the grid".into()).into())
            }
            BoundaryField::Constant(c) if !c.is_finite() => {
                return Err(Error::InvalidArgument("non-finite boundary value".into()).into())
            }
            _ => {}
        }
    }
    let solver = match (config.linear_solver, grid) {
        (LinearSolver::Auto, Grid::Radial(_)) => LinearSolver::DirectBanded,
        (LinearSolver::Auto, Grid::Planar(_)) => LinearSolver::ConjugateGradient,
        (LinearSolver::DirectBanded, Grid::Planar(_)) => {
            return Err(Error::InvalidArgument("the banded direct solver needs a radial grid".into()).into())
        }
        // the radial stencil is not symmetric in the plain inner product
        (LinearSolver::ConjugateGradient, Grid::Radial(_)) => {
            return Err(Error::InvalidArgument("conjugate gradients need a planar grid".into()).into())
        }
        (s, _) => s,
    };

    let amplitude = boundary.amplitude(&grid);
    let warning = (amplitude > 0.5 * kind.amplitude_scale(t)).then(|| {
        format!(
            "boundary amplitude {amplitude:e} exceeds 0.5 t^(-2/b) = {:e}; outside the perturbative regime",
            0.5 * kind.amplitude_scale(t)
        )
    });

    let mut state = TodaState::zeros(kind, t, grid)?;
    for (j, f) in state.independent_mut().iter_mut().enumerate() {
        for (node, v) in f.values_mut().iter_mut().enumerate() {
            if grid.is_boundary(node) {
                *v = boundary.value(j, node);
            }
        }
    }

    let mut res = toda::residual(&state)?;
    let mut norm = sup(&res);
    let mut iterations = 0;
    let pack = |state: TodaState, residual: f64, iterations: usize| MetricSolution {
        state,
        residual,
        iterations,
        boundary_amplitude: amplitude,
        warning: warning.clone(),
    };

    let mut polished = false;
    while norm > 0.0 {
        if norm <= config.tol {
            if polished {
                break;
            }
            polished = true;
        }
        if iterations >= config.max_iter {
            if norm <= config.tol {
                break;
            }
            return Err(SolveError::NonConvergence {
                best: Box::new(pack(state, norm, iterations)),
                reason: format!("iteration cap {} reached", config.max_iter),
            });
        }
        let step = newton_step(&state, &res, solver, config)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let mut trial = state.clone();
            for (f, s) in trial.independent_mut().iter_mut().zip(&step) {
                for (v, dv) in f.values_mut().iter_mut().zip(s) {
                    *v += lambda * dv;
                }
            }
            let trial_res = toda::residual(&trial)?;
            let trial_norm = sup(&trial_res);
            if trial_norm.is_finite() && trial_norm < norm {
                accepted = Some((trial, trial_res, trial_norm));
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((s, r, n)) => {
                state = s;
                res = r;
                norm = n;
            }
            None if norm <= config.tol => break,
            None => {
                return Err(SolveError::NonConvergence {
                    best: Box::new(pack(state, norm, iterations)),
                    reason: "line search found no decrease".into(),
                })
            }
        }
    }
    Ok(pack(state, norm, iterations))
}

fn sup(fields: &[ScalarField]) -> f64 {
    fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
}

/// Newton direction `δ` with `J δ = -F`, zero on the boundary.
fn newton_step(
    state: &TodaState,
    res: &[ScalarField],
    solver: LinearSolver,
    config: &SolveConfig,
) -> std::result::Result<Vec<Vec<f64>>, SolveError> {
    let lin = toda::linearize(state);
    let grid = *state.grid();
    let p = lin.unknowns();
    let a = lin.prefactor();
    match (solver, grid) {
        (LinearSolver::DirectBanded, Grid::Radial(g)) => {
            // interior unknowns are nodes 0..N-1; solve (-J) δ = F
            let n = g.cells();
            let eye = DMatrix::<f64>::identity(p, p);
            let mut lower = Vec::with_capacity(n);
            let mut diag = Vec::with_capacity(n);
            let mut upper = Vec::with_capacity(n);
            let mut rhs = Vec::with_capacity(n);
            for i in 0..n {
                let (lo, d, up) = g.laplacian_stencil(i);
                lower.push(&eye * (-lo));
                diag.push(&eye * (-d) + lin.coupling(i) * a);
                upper.push(&eye * (-up));
                rhs.push(DVector::from_iterator(p, res.iter().map(|f| f.values()[i])));
            }
            let x = linalg::solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
            let mut out = vec![vec![0.0; g.len()]; p];
            for (i, xi) in x.iter().enumerate() {
                for j in 0..p {
                    out[j][i] = xi[j];
                }
            }
            Ok(out)
        }
        (LinearSolver::ConjugateGradient, Grid::Planar(_)) => {
            // unknowns: all fields stacked, boundary entries pinned to zero
            let len = grid.len();
            let center_weight = 4.0 / grid.spacing().powi(2);
            let mut precond = vec![1.0; p * len];
            let mut rhs = vec![0.0; p * len];
            for j in 0..p {
                for node in 0..len {
                    if !grid.is_boundary(node) {
                        precond[j * len + node] = center_weight + a * lin.coupling(node)[(j, j)];
                        rhs[j * len + node] = res[j].values()[node];
                    }
                }
            }
            let apply = |x: &[f64], y: &mut [f64]| {
                let views: Vec<&[f64]> = (0..p).map(|j| &x[j * len..(j + 1) * len]).collect();
                let mut out = vec![vec![0.0; len]; p];
                lin.apply_raw(&views, &mut out);
                for j in 0..p {
                    for node in 0..len {
                        y[j * len + node] = if grid.is_boundary(node) { x[j * len + node] } else { -out[j][node] };
                    }
                }
            };
            let (x, _) = linalg::conjugate_gradient(apply, &precond, &rhs, config.inner_tol, config.inner_max_iter)?;
            Ok((0..p).map(|j| x[j * len..(j + 1) * len].to_vec()).collect())
        }
        _ => {
            Err(SolveError::Invalid(Error::InvalidArgument("no linear solver for this grid".into())))
        }
    }
}

/// Planar Dirichlet data matching a radial solution on a disk that covers the
/// square: each boundary node gets the radial profile at its distance from
/// the origin.
pub fn planar_boundary_from_radial(radial: &MetricSolution, planar: &PlanarGrid) -> Result<BoundaryData> {
    let rg = radial
        .grid()
        .as_radial()
        .ok_or_else(|| Error::InvalidArgument("reference solution must be radial".into()))?;
    let corner = planar.half_width() * std::f64::consts::SQRT_2;
    if rg.radius() < corner * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "radial disk of radius {} does not cover the square (needs {corner})",
            rg.radius()
        )));
    }
    let fields = radial
        .state
        .independent()
        .iter()
        .map(|f| {
            let vals = (0..planar.len())
                .map(|i| {
                    if planar.is_boundary(i) {
                        let (x, y) = planar.point(i);
                        f.interpolate_radial(x.hypot(y).min(rg.radius())).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            BoundaryField::Nodal(vals)
        })
        .collect();
    Ok(BoundaryData::new(fields))
}

/// Finite-difference solution of `η'' + η'/r = kη`, `η(R) = 1`, `η'(0) = 0`.
pub fn solve_helmholtz_radial(k: f64, grid: &RadialGrid) -> Result<ScalarField> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("Helmholtz solve needs k > 0, got {k}")));
    }
    let n = grid.cells();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let (lo, d, up) = grid.laplacian_stencil(i);
        lower[i] = -lo;
        diag[i] = k - d;
        if i + 1 < n {
            upper[i] = -up;
        } else {
            rhs[i] = up;
        }
    }
    let mut eta = linalg::solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    eta.push(1.0);
    ScalarField::new(*grid, eta)
}
