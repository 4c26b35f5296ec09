//! The n-cyclic and (n-1)-cyclic error systems.
//!
//! Write the harmonic metric in the chart as `e^{u^j}` times its leading
//! value and collect the metric errors into the full vector
//! `e = (e_1, …, e_n)`. The determinant-one pairing forces
//! `e_{n+1-j} = -e_j`, so only the first `p = ⌊n/2⌋` entries are unknown.
//!
//! * n-cyclic: the error vector is the Toda vector, `d^i = e_i`, `m = n`.
//! * (n-1)-cyclic: `ṽ^1 = e_1` and the Toda vector has `m = n - 1` entries
//!   `d^i = e_{i+1}` for `i < m`, with `d^m = 0`.
//!
//! Both systems are gradient systems `Δx = a ∇W(x)` for an exponential
//! potential `W`; the residual is written out term by term and the Jacobian is
//! assembled from the potential, so that each checks the other.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{laplacian, Grid, ScalarField};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `φ = ẽ_1 + q_n e_{n-1}`, Toda vector of length `n`.
    NCyclic,
    /// `φ = ẽ_1 + q_{n-1} e_{n-2}`, Toda vector of length `n - 1` plus `ṽ^1`.
    NMinus1Cyclic,
}

/// Family plus rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemKind {
    family: Family,
    n: usize,
}

/// One exponential term `coef * exp(beta · x)` of a potential.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTerm {
    pub coef: f64,
    pub beta: Vec<f64>,
}

impl SystemKind {
    pub fn new(family: Family, n: usize) -> Result<Self> {
        let min = match family {
            Family::NCyclic => 2,
            Family::NMinus1Cyclic => 3,
        };
        if n < min {
            return Err(Error::InvalidArgument(format!("{family:?} needs n >= {min}, got {n}")));
        }
        Ok(Self { family, n })
    }

    pub fn n_cyclic(n: usize) -> Result<Self> {
        Self::new(Family::NCyclic, n)
    }

    pub fn n_minus_1_cyclic(n: usize) -> Result<Self> {
        Self::new(Family::NMinus1Cyclic, n)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Degree `b` of the differential `q_b`: `n` or `n - 1`.
    pub fn degree(&self) -> usize {
        match self.family {
            Family::NCyclic => self.n,
            Family::NMinus1Cyclic => self.n - 1,
        }
    }

    /// Length `m` of the Toda vector.
    pub fn lattice_len(&self) -> usize {
        self.degree()
    }

    /// Number of independent unknown fields, `⌊n/2⌋`.
    pub fn independent_count(&self) -> usize {
        self.n / 2
    }

    /// Coefficient `a` of the exponential terms: `4t^{2/n}` or `4(2t)^{2/(n-1)}`.
    pub fn prefactor(&self, t: f64) -> f64 {
        let s = self.rate_scale(t);
        4.0 * s * s
    }

    /// Natural rate scale: `t^{1/n}` or `(2t)^{1/(n-1)}`.
    pub fn rate_scale(&self, t: f64) -> f64 {
        match self.family {
            Family::NCyclic => t.powf(1.0 / self.n as f64),
            Family::NMinus1Cyclic => (2.0 * t).powf(1.0 / (self.n - 1) as f64),
        }
    }

    /// Natural amplitude scale `t^{-2/b}` of the metric errors.
    pub fn amplitude_scale(&self, t: f64) -> f64 {
        t.powf(-2.0 / self.degree() as f64)
    }

    /// Full error vector from the independent unknowns.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut e = vec![0.0; n];
        for (j, &v) in x.iter().enumerate().take(self.independent_count()) {
            e[j] = v;
            e[n - 1 - j] = -v;
        }
        e
    }

    /// Toda vector `d` (length `m`) and `ṽ^1` from a full error vector.
    pub fn lattice_from_full(&self, e: &[f64]) -> (Vec<f64>, f64) {
        match self.family {
            Family::NCyclic => (e.to_vec(), 0.0),
            Family::NMinus1Cyclic => {
                let m = self.n - 1;
                let mut d = vec![0.0; m];
                d[..m - 1].copy_from_slice(&e[1..m]);
                (d, e[0])
            }
        }
    }

    /// Exponential terms of the full (unconstrained) potential on `R^n`.
    pub fn full_potential(&self) -> Vec<PotentialTerm> {
        let n = self.n;
        let unit = |pairs: &[(usize, f64)]| {
            let mut b = vec![0.0; n];
            for &(j, v) in pairs {
                b[j] += v;
            }
            b
        };
        match self.family {
            Family::NCyclic => (0..n)
                .map(|j| PotentialTerm { coef: 1.0, beta: unit(&[(j, 1.0), ((j + 1) % n, -1.0)]) })
                .collect(),
            Family::NMinus1Cyclic => {
                let mut terms = vec![
                    PotentialTerm { coef: 0.5, beta: unit(&[(0, 1.0), (1, -1.0)]) },
                    PotentialTerm { coef: 0.5, beta: unit(&[(0, -1.0), (1, -1.0)]) },
                ];
                for j in 1..n - 2 {
                    terms.push(PotentialTerm { coef: 1.0, beta: unit(&[(j, 1.0), (j + 1, -1.0)]) });
                }
                terms.push(PotentialTerm { coef: 0.5, beta: unit(&[(n - 2, 1.0), (n - 1, -1.0)]) });
                terms.push(PotentialTerm { coef: 0.5, beta: unit(&[(n - 2, 1.0), (n - 1, 1.0)]) });
                terms
            }
        }
    }

    /// The potential restricted to the independent unknowns, `W(x) = ½ W_full(embed(x))`.
    pub fn reduced_potential(&self) -> Vec<PotentialTerm> {
        let n = self.n;
        let p = self.independent_count();
        self.full_potential()
            .into_iter()
            .map(|t| PotentialTerm {
                coef: 0.5 * t.coef,
                beta: (0..p).map(|j| t.beta[j] - t.beta[n - 1 - j]).collect(),
            })
            .collect()
    }

    fn check_t(t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("ray parameter t must be positive, got {t}")));
        }
        Ok(())
    }
}

/// Right-hand sides of the Toda rows, `e^{d^i-d^{i+1}} - e^{d^{i-1}-d^i} + f_i`
/// with cyclic indices. For the (n-1)-cyclic family `f_1 = -f`,
/// `f_{m-1} = +f` with `f = ½(e^{ṽ^1} + e^{-ṽ^1} - 2) e^{-d^1}`; otherwise `f = 0`.
pub fn lattice_rhs(family: Family, d: &[f64], vtilde1: f64) -> Vec<f64> {
    let m = d.len();
    let mut out: Vec<f64> = (0..m)
        .map(|i| (d[i] - d[(i + 1) % m]).exp() - (d[(i + m - 1) % m] - d[i]).exp())
        .collect();
    if family == Family::NMinus1Cyclic && m >= 2 {
        let f = perturbation(d, vtilde1);
        out[0] -= f;
        out[m - 2] += f;
    }
    out
}

/// `f = ½(e^{ṽ^1} + e^{-ṽ^1} - 2) e^{-d^1}`.
pub fn perturbation(d: &[f64], vtilde1: f64) -> f64 {
    0.5 * (vtilde1.exp() + (-vtilde1).exp() - 2.0) * (-d[0]).exp()
}

/// Nonlinear terms of the independent equations at one node, before the
/// prefactor: `Δx_j = a * reaction_j(x)`.
pub fn reaction(kind: SystemKind, x: &[f64]) -> Vec<f64> {
    let p = kind.independent_count();
    let e = kind.embed(x);
    let (d, v1) = kind.lattice_from_full(&e);
    match kind.family {
        Family::NCyclic => lattice_rhs(Family::NCyclic, &d, 0.0)[..p].to_vec(),
        Family::NMinus1Cyclic => {
            let rows = lattice_rhs(Family::NMinus1Cyclic, &d, v1);
            let mut out = Vec::with_capacity(p);
            out.push(0.5 * (v1.exp() - (-v1).exp()) * (-d[0]).exp());
            out.extend_from_slice(&rows[..p - 1]);
            out
        }
    }
}

/// Gradient of the reduced potential, the same quantity as [`reaction`]
/// assembled from the exponential terms.
pub fn potential_gradient(kind: SystemKind, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for term in kind.reduced_potential() {
        let w = term.coef * dot(&term.beta, x).exp();
        for (gj, bj) in g.iter_mut().zip(&term.beta) {
            *gj += w * bj;
        }
    }
    g
}

/// Hessian of the reduced potential at `x`.
pub fn potential_hessian(kind: SystemKind, x: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let mut h = DMatrix::zeros(p, p);
    for term in kind.reduced_potential() {
        let w = term.coef * dot(&term.beta, x).exp();
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] += w * term.beta[i] * term.beta[j];
            }
        }
    }
    h
}

/// Hessian of the full potential at a full error vector: the index-direction
/// coupling of the unconstrained lattice. At `e = 0` for the n-cyclic family
/// this is the circulant with rows `(-1, 2, -1)`.
pub fn index_coupling(kind: SystemKind, e: &[f64]) -> DMatrix<f64> {
    let n = kind.n();
    let mut h = DMatrix::zeros(n, n);
    for term in kind.full_potential() {
        let w = term.coef * dot(&term.beta, e).exp();
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] += w * term.beta[i] * term.beta[j];
            }
        }
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solution state: the independent metric-error fields on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TodaState {
    kind: SystemKind,
    t: f64,
    fields: Vec<ScalarField>,
}

impl TodaState {
    pub fn zeros(kind: SystemKind, t: f64, grid: impl Into<Grid>) -> Result<Self> {
        SystemKind::check_t(t)?;
        let grid = grid.into();
        let fields = (0..kind.independent_count()).map(|_| ScalarField::zeros(grid)).collect();
        Ok(Self { kind, t, fields })
    }

    /// Build from the independent fields `x_1..x_p`; mirrors are implied.
    pub fn from_independent(kind: SystemKind, t: f64, fields: Vec<ScalarField>) -> Result<Self> {
        SystemKind::check_t(t)?;
        if fields.len() != kind.independent_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} independent fields, got {}",
                kind.independent_count(),
                fields.len()
            )));
        }
        if fields.windows(2).any(|w| w[0].grid() != w[1].grid()) {
            return Err(Error::GridMismatch("state fields live on different grids".into()));
        }
        Ok(Self { kind, t, fields })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn independent(&self) -> &[ScalarField] {
        &self.fields
    }

    pub(crate) fn independent_mut(&mut self) -> &mut [ScalarField] {
        &mut self.fields
    }

    /// Independent values at one node.
    pub fn unknowns_at(&self, node: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f.values()[node]).collect()
    }

    /// Full error vector `e` at one node.
    pub fn full_at(&self, node: usize) -> Vec<f64> {
        self.kind.embed(&self.unknowns_at(node))
    }

    /// All `n` full error fields, mirrors materialized.
    pub fn full_fields(&self) -> Vec<ScalarField> {
        let n = self.kind.n();
        let grid = *self.grid();
        let mut out: Vec<ScalarField> = (0..n).map(|_| ScalarField::zeros(grid)).collect();
        for (j, f) in self.fields.iter().enumerate() {
            out[j] = f.clone();
            let neg: Vec<f64> = f.values().iter().map(|v| -v).collect();
            out[n - 1 - j] = ScalarField::from_parts_unchecked(grid, neg);
        }
        out
    }

    /// Toda fields `d^1..d^m`.
    pub fn dvec(&self) -> Vec<ScalarField> {
        let full = self.full_fields();
        match self.kind.family {
            Family::NCyclic => full,
            Family::NMinus1Cyclic => {
                let m = self.kind.n - 1;
                let mut d: Vec<ScalarField> = full[1..m].to_vec();
                d.push(ScalarField::zeros(*self.grid()));
                d
            }
        }
    }

    /// `ṽ^1`, present only for the (n-1)-cyclic family.
    pub fn vtilde1(&self) -> Option<&ScalarField> {
        match self.kind.family {
            Family::NCyclic => None,
            Family::NMinus1Cyclic => Some(&self.fields[0]),
        }
    }

    /// Toda vector and `ṽ^1` at one node.
    pub fn lattice_at(&self, node: usize) -> (Vec<f64>, f64) {
        self.kind.lattice_from_full(&self.full_at(node))
    }

    /// Largest absolute boundary value over all independent fields.
    pub fn boundary_amplitude(&self) -> f64 {
        let grid = *self.grid();
        let mut a = 0.0_f64;
        for f in &self.fields {
            for (i, v) in f.values().iter().enumerate() {
                if grid.is_boundary(i) {
                    a = a.max(v.abs());
                }
            }
        }
        a
    }

    pub fn sup_norm(&self) -> f64 {
        self.fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }

    pub fn q_orthogonality_defect(&self) -> f64 {
        q_orthogonality_defect(&self.full_fields()).unwrap_or(f64::INFINITY)
    }
}

/// `max |e_i + e_{n+1-i}|` over nodes and pairs of a full error vector.
pub fn q_orthogonality_defect(full: &[ScalarField]) -> Result<f64> {
    let n = full.len();
    if n == 0 {
        return Ok(0.0);
    }
    if full.windows(2).any(|w| w[0].grid() != w[1].grid()) {
        return Err(Error::GridMismatch("error fields live on different grids".into()));
    }
    let mut worst = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        for (a, b) in full[i].values().iter().zip(full[n - 1 - i].values()) {
            worst = worst.max((a + b).abs());
        }
    }
    Ok(worst)
}

/// Residuals `Δx_j - a * reaction_j(x)` of the independent equations, zero on
/// boundary nodes.
pub fn residual(state: &TodaState) -> Result<Vec<ScalarField>> {
    let kind = state.kind;
    let a = kind.prefactor(state.t);
    let grid = *state.grid();
    let p = kind.independent_count();
    let laps: Vec<ScalarField> = state.fields.iter().map(laplacian).collect::<Result<_>>()?;
    let react: Vec<Vec<f64>> = par::map_range(grid.len(), |node| {
        if grid.is_boundary(node) {
            vec![0.0; p]
        } else {
            reaction(kind, &state.unknowns_at(node))
        }
    });
    Ok((0..p)
        .map(|j| {
            let vals = (0..grid.len())
                .map(|node| if grid.is_boundary(node) { 0.0 } else { laps[j].values()[node] - a * react[node][j] })
                .collect();
            ScalarField::from_parts_unchecked(grid, vals)
        })
        .collect())
}

/// Sup-norm of the residual over all fields and interior nodes.
pub fn residual_norm(state: &TodaState) -> Result<f64> {
    Ok(residual(state)?.iter().map(|f| f.sup_norm()).fold(0.0, f64::max))
}

/// Jacobian of [`residual`] in the independent unknowns:
/// `J δ = Δδ - a H(x) δ` with `H` the reduced-potential Hessian per node.
#[derive(Debug, Clone)]
pub struct Linearization {
    grid: Grid,
    p: usize,
    prefactor: f64,
    hessians: Vec<DMatrix<f64>>,
}

impl Linearization {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn unknowns(&self) -> usize {
        self.p
    }

    /// Reduced-potential Hessian at a node (the coupling before `-a`).
    pub fn coupling(&self, node: usize) -> &DMatrix<f64> {
        &self.hessians[node]
    }

    /// `J δ` at interior nodes; `δ` is read everywhere, output is zero on the boundary.
    pub fn apply(&self, delta: &[ScalarField]) -> Result<Vec<ScalarField>> {
        if delta.len() != self.p {
            return Err(Error::InvalidArgument("direction has the wrong number of fields".into()));
        }
        if delta.iter().any(|f| *f.grid() != self.grid) {
            return Err(Error::GridMismatch("direction is on a different grid".into()));
        }
        let raw: Vec<&[f64]> = delta.iter().map(|f| f.values()).collect();
        let mut out = vec![vec![0.0; self.grid.len()]; self.p];
        self.apply_raw(&raw, &mut out);
        Ok(out.into_iter().map(|v| ScalarField::from_parts_unchecked(self.grid, v)).collect())
    }

    pub(crate) fn apply_raw(&self, delta: &[&[f64]], out: &mut [Vec<f64>]) {
        let grid = self.grid;
        let a = self.prefactor;
        for (j, o) in out.iter_mut().enumerate() {
            par::fill(o, |node| {
                if grid.is_boundary(node) {
                    return 0.0;
                }
                let h = &self.hessians[node];
                let coupled: f64 = (0..self.p).map(|l| h[(j, l)] * delta[l][node]).sum();
                grid.laplacian_at(delta[j], node) - a * coupled
            });
        }
    }
}

pub fn linearize(state: &TodaState) -> Linearization {
    let kind = state.kind;
    let grid = *state.grid();
    let hessians = par::map_range(grid.len(), |node| potential_hessian(kind, &state.unknowns_at(node)));
    Linearization { grid, p: kind.independent_count(), prefactor: kind.prefactor(state.t), hessians }
}

/// Leading value of `e^{u^j}` (`h_j` in the chart with `|q_b| = 1`), `1 <= j <= n`.
pub fn leading_metric_value(kind: SystemKind, t: f64, j: usize) -> Result<f64> {
    SystemKind::check_t(t)?;
    let n = kind.n;
    if j == 0 || j > n {
        return Err(Error::OutOfRange { index: j, bound: n });
    }
    let expo = |base: f64, den: usize| base.powf((n as f64 + 1.0 - 2.0 * j as f64) / den as f64);
    Ok(match kind.family {
        Family::NCyclic => expo(t, n),
        Family::NMinus1Cyclic => {
            if j == 1 {
                t
            } else if j == n {
                1.0 / t
            } else {
                expo(2.0 * t, n - 1)
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{PlanarGrid, RadialGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<SystemKind> {
        let mut v = Vec::new();
        for n in 2..=8 {
            v.push(SystemKind::n_cyclic(n).unwrap());
            if n >= 3 {
                v.push(SystemKind::n_minus_1_cyclic(n).unwrap());
            }
        }
        v
    }

    #[test]
    fn kind_validation() {
        assert!(SystemKind::n_cyclic(1).is_err());
        assert!(SystemKind::n_minus_1_cyclic(2).is_err());
        let k = SystemKind::n_minus_1_cyclic(5).unwrap();
        assert_eq!((k.lattice_len(), k.independent_count(), k.degree()), (4, 2, 4));
        assert!((k.prefactor(4.0) - 4.0 * 8.0_f64.powf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_state_has_zero_residual() {
        let g = RadialGrid::new(1.0, 32).unwrap();
        for kind in all_kinds() {
            let s = TodaState::zeros(kind, 7.0, g).unwrap();
            assert_eq!(residual_norm(&s).unwrap(), 0.0, "{kind:?}");
        }
        assert!(TodaState::zeros(SystemKind::n_cyclic(3).unwrap(), 0.0, g).is_err());
    }

    #[test]
    fn constant_states_hand_substitution() {
        let g = RadialGrid::new(1.0, 32).unwrap();
        let t = 125.0_f64;
        let c = 0.03;
        let kind = SystemKind::n_cyclic(3).unwrap();
        let s = TodaState::from_independent(kind, t, vec![ScalarField::constant(g, c)]).unwrap();
        let r = residual(&s).unwrap();
        let expected = -4.0 * t.powf(2.0 / 3.0) * (c.exp() - (-2.0 * c).exp());
        assert!((r[0].values()[5] - expected).abs() < 1e-9 * expected.abs());

        let kind = SystemKind::n_cyclic(2).unwrap();
        let s = TodaState::from_independent(kind, t, vec![ScalarField::constant(g, c)]).unwrap();
        let r = residual(&s).unwrap();
        let expected = -4.0 * t * ((2.0 * c).exp() - (-2.0 * c).exp());
        assert!((r[0].values()[5] - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn literal_terms_match_potential_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in all_kinds() {
            for _ in 0..20 {
                let x: Vec<f64> = (0..kind.independent_count()).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let lit = reaction(kind, &x);
                let grad = potential_gradient(kind, &x);
                for (a, b) in lit.iter().zip(&grad) {
                    assert!((a - b).abs() < 1e-13, "{kind:?} {x:?}: {lit:?} vs {grad:?}");
                }
            }
        }
    }

    #[test]
    fn lattice_rows_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in 2..9 {
            for family in [Family::NCyclic, Family::NMinus1Cyclic] {
                let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s: f64 = lattice_rhs(family, &d, rng.gen_range(-1.0..1.0)).iter().sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirrored_rows_are_consistent() {
        // the rows that are not independent hold automatically under the pairing
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in all_kinds() {
            let x: Vec<f64> = (0..kind.independent_count()).map(|_| rng.gen_range(-0.4..0.4)).collect();
            let e = kind.embed(&x);
            let (d, v1) = kind.lattice_from_full(&e);
            let rows = lattice_rhs(kind.family(), &d, v1);
            let m = d.len();
            for i in 0..m {
                let mirror = match kind.family() {
                    Family::NCyclic => m - 1 - i,
                    Family::NMinus1Cyclic => (2 * m - 2 - i) % m,
                };
                assert!((rows[i] + rows[mirror]).abs() < 1e-13, "{kind:?} row {i}");
            }
            if kind.family() == Family::NMinus1Cyclic {
                assert!(rows[m - 1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn coupling_at_zero_is_circulant() {
        for n in 2..=7 {
            let kind = SystemKind::n_cyclic(n).unwrap();
            let h = index_coupling(kind, &vec![0.0; n]);
            for i in 0..n {
                for j in 0..n {
                    let expected = if i == j {
                        2.0
                    } else if (i + 1) % n == j || (j + 1) % n == i {
                        if n == 2 { -2.0 } else { -1.0 }
                    } else {
                        0.0
                    };
                    assert_eq!(h[(i, j)], expected, "n = {n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = RadialGrid::new(1.0, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [SystemKind::n_cyclic(4).unwrap(), SystemKind::n_minus_1_cyclic(5).unwrap()] {
            let p = kind.independent_count();
            let base: Vec<ScalarField> =
                (0..p).map(|j| ScalarField::from_fn(g, |r, _| 0.05 * (j as f64 + 1.0) * (1.0 + r * r))).collect();
            let state = TodaState::from_independent(kind, 10.0, base.clone()).unwrap();
            let dir: Vec<ScalarField> = (0..p)
                .map(|_| {
                    let v = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    ScalarField::new(g, v).unwrap()
                })
                .collect();
            let jd = linearize(&state).apply(&dir).unwrap();
            let r0 = residual(&state).unwrap();
            let err = |eps: f64| {
                let shifted: Vec<ScalarField> =
                    base.iter().zip(&dir).map(|(b, d)| b.lin_comb(1.0, d, eps).unwrap()).collect();
                let r1 = residual(&TodaState::from_independent(kind, 10.0, shifted).unwrap()).unwrap();
                let mut worst = 0.0_f64;
                for j in 0..p {
                    for node in 0..g.len() {
                        let fd = r1[j].values()[node] - r0[j].values()[node] - eps * jd[j].values()[node];
                        worst = worst.max(fd.abs());
                    }
                }
                worst
            };
            let ratio = err(1e-3) / err(1e-4);
            assert!((50.0..200.0).contains(&ratio), "{kind:?}: ratio {ratio}");
        }
    }

    #[test]
    fn jacobian_is_symmetric_on_planar_grid() {
        let p = PlanarGrid::new(1.0, 8).unwrap();
        let kind = SystemKind::n_cyclic(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let field = |rng: &mut ChaCha8Rng, bc_zero: bool| {
            let v = (0..p.len())
                .map(|i| if bc_zero && p.is_boundary(i) { 0.0 } else { rng.gen_range(-0.2..0.2) })
                .collect();
            ScalarField::new(p, v).unwrap()
        };
        let state = TodaState::from_independent(kind, 3.0, vec![field(&mut rng, false), field(&mut rng, false)]).unwrap();
        let lin = linearize(&state);
        let u = vec![field(&mut rng, true), field(&mut rng, true)];
        let v = vec![field(&mut rng, true), field(&mut rng, true)];
        let ju = lin.apply(&u).unwrap();
        let jv = lin.apply(&v).unwrap();
        let inner = |a: &[ScalarField], b: &[ScalarField]| {
            a.iter().zip(b).map(|(x, y)| x.values().iter().zip(y.values()).map(|(s, t)| s * t).sum::<f64>()).sum::<f64>()
        };
        let (l, r) = (inner(&ju, &v), inner(&u, &jv));
        assert!((l - r).abs() <= 1e-10 * l.abs().max(1.0), "{l} vs {r}");
    }

    #[test]
    fn leading_metric_examples() {
        let c3 = SystemKind::n_cyclic(3).unwrap();
        let c4 = SystemKind::n_cyclic(4).unwrap();
        let m4 = SystemKind::n_minus_1_cyclic(4).unwrap();
        assert!((leading_metric_value(c3, 50.0, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((leading_metric_value(c4, 16.0, 1).unwrap() - 8.0).abs() < 1e-12);
        assert!((leading_metric_value(m4, 4.0, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!(leading_metric_value(c4, 16.0, 0).is_err());
        assert!(leading_metric_value(c4, 16.0, 5).is_err());
        for kind in all_kinds() {
            for t in [0.3, 2.0, 1e3] {
                let prod: f64 = (1..=kind.n()).map(|j| leading_metric_value(kind, t, j).unwrap()).product();
                assert!((prod - 1.0).abs() < 1e-12, "{kind:?} t={t}: {prod}");
            }
        }
    }

    #[test]
    fn orthogonality_defect() {
        let g = RadialGrid::new(1.0, 16).unwrap();
        let f = |c: f64| ScalarField::constant(g, c);
        assert_eq!(q_orthogonality_defect(&[f(0.1), f(0.0), f(-0.1)]).unwrap(), 0.0);
        assert!((q_orthogonality_defect(&[f(0.1), f(0.0), f(-0.2)]).unwrap() - 0.1).abs() < 1e-15);
        let kind = SystemKind::n_minus_1_cyclic(6).unwrap();
        let s = TodaState::from_independent(kind, 2.0, vec![f(0.3), f(-0.2), f(0.1)]).unwrap();
        assert_eq!(s.q_orthogonality_defect(), 0.0);
        let d = s.dvec();
        assert_eq!(d.len(), 5);
        assert_eq!(d[4].sup_norm(), 0.0);
        assert_eq!(d[0].values()[0], -0.2);
        assert_eq!(d[3].values()[0], 0.2);
        assert_eq!(s.vtilde1().unwrap().values()[0], 0.3);
    }
}
