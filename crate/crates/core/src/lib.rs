//! Numerical laboratory for the cyclic reductions of Hitchin's equations.
//!
//! The crate works on a flat local chart where the holomorphic differential is
//! `dz^b`. It provides
//!
//! * finite-difference calculus on radial and planar grids ([`grid`]),
//! * the n-cyclic and (n-1)-cyclic Toda error systems ([`toda`]),
//! * a damped Newton Dirichlet solver plus the radial comparison functions
//!   built on the modified Bessel function `I_0` ([`solver`], [`bessel`]),
//! * the discrete Fourier eigensolutions `w_k` and decay fits ([`spectral`]),
//! * parallel transport along rays in the rescaled frame, WKB exponents and
//!   vector distances in `SL(n,R)/SO(n)` ([`transport`]).
//!
//! Data-parallel loops go through [`par`], which falls back to sequential
//! iteration when the `parallel` feature is disabled.

pub mod bessel;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod solver;
pub mod spectral;
pub mod toda;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{ComplexField, Grid, PlanarGrid, RadialGrid, ScalarField};
pub use num_complex::Complex64;
pub use solver::{BoundaryData, LinearSolver, MetricSolution, SolveConfig, SolveError};
pub use toda::{Family, SystemKind, TodaState};
