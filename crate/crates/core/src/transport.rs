//! Parallel transport of the flat connection along rays `γ(s) = s e^{iθ}`.
//!
//! In the rescaled frame the connection along the ray is
//! `A(s) = e^{iθ} U + e^{-iθ} V` with `U = τ P + diag(-∂_z e)` and
//! `V = τ V̂(e)`, where `P` is the cyclic shift of the family and `V̂(0) = Pᵀ`.
//! The unitary matrix `S` diagonalizes the leading term,
//! `S⁻¹ (e^{iθ}P + e^{-iθ}Pᵀ) S = M = diag(μ_j)`, so in the `S` frame
//!
//! ```text
//! dΦ/ds = (τ M + R(s)) Φ,    R = S⁻¹ (e^{iθ} U_err + e^{-iθ} V_err) S.
//! ```
//!
//! The dominant diagonal part is applied analytically, `Φ = Φ_0 G` with
//! `Φ_0 = diag(e^{sτμ_j})`, and only the remainder `G` is integrated.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{radial_dz, RadialGrid};
use crate::linalg::{self, CMatrix};
use crate::solver::MetricSolution;
use crate::spectral::zeta;
use crate::toda::{Family, SystemKind};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigenvalues `μ_j` of the leading term. n-cyclic: `2cos(θ + 2π(j-1)/n)`;
/// (n-1)-cyclic: `μ_1 = 0`, `μ_j = 2cos(θ + 2π(j-2)/(n-1))`.
pub fn mu_values(kind: SystemKind, theta: f64) -> Vec<f64> {
    let n = kind.n();
    match kind.family() {
        Family::NCyclic => (0..n).map(|j| 2.0 * (theta + 2.0 * PI * j as f64 / n as f64).cos()).collect(),
        Family::NMinus1Cyclic => {
            let m = n - 1;
            std::iter::once(0.0)
                .chain((0..m).map(|j| 2.0 * (theta + 2.0 * PI * j as f64 / m as f64).cos()))
                .collect()
        }
    }
}

/// Largest `μ_j`, the predicted WKB exponent.
pub fn max_mu(kind: SystemKind, theta: f64) -> f64 {
    mu_values(kind, theta).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Unitary `S` whose columns are eigenvectors of the leading term, ordered
/// like [`mu_values`].
pub fn frame_basis(kind: SystemKind) -> CMatrix {
    let n = kind.n();
    match kind.family() {
        Family::NCyclic => CMatrix::from_fn(n, n, |j, k| zeta(n, -((j * k) as i64)) / (n as f64).sqrt()),
        Family::NMinus1Cyclic => {
            let m = n - 1;
            let mut s = CMatrix::zeros(n, n);
            s[(0, 0)] = c(FRAC_1_SQRT_2);
            s[(n - 1, 0)] = c(-FRAC_1_SQRT_2);
            // cycle b_0 = (e_1 + e_n)/√2, b_i = e_{i+1}
            for k in 0..m {
                let col = k + 1;
                let norm = (m as f64).sqrt();
                let w0 = c(1.0) / norm;
                s[(0, col)] = w0 * FRAC_1_SQRT_2;
                s[(n - 1, col)] = w0 * FRAC_1_SQRT_2;
                for i in 1..m {
                    s[(i, col)] = zeta(m, -((i * k) as i64)) / norm;
                }
            }
            s
        }
    }
}

/// The cyclic shift `P` of the leading term (`U = τP + …`).
pub fn shift_matrix(kind: SystemKind) -> CMatrix {
    let n = kind.n();
    let mut p = CMatrix::zeros(n, n);
    match kind.family() {
        Family::NCyclic => {
            for j in 0..n {
                p[((j + 1) % n, j)] = c(1.0);
            }
        }
        Family::NMinus1Cyclic => {
            let h = c(FRAC_1_SQRT_2);
            p[(1, 0)] = h;
            for j in 1..n - 2 {
                p[(j + 1, j)] = c(1.0);
            }
            p[(n - 1, n - 2)] = h;
            p[(0, n - 2)] = h;
            p[(1, n - 1)] = h;
        }
    }
    p
}

/// Entries of `V̂(e)` as `(row, col, weight, exponent vector)`; the entry is
/// `weight * exp(exponent · e)`.
fn v_entries(kind: SystemKind) -> Vec<(usize, usize, f64, Vec<f64>)> {
    let n = kind.n();
    let vec_of = |pairs: &[(usize, f64)]| {
        let mut v = vec![0.0; n];
        for &(i, x) in pairs {
            v[i] += x;
        }
        v
    };
    match kind.family() {
        Family::NCyclic => {
            (0..n).map(|j| (j, (j + 1) % n, 1.0, vec_of(&[(j, 1.0), ((j + 1) % n, -1.0)]))).collect()
        }
        Family::NMinus1Cyclic => {
            let mut out = vec![(0, 1, FRAC_1_SQRT_2, vec_of(&[(0, 1.0), (1, -1.0)]))];
            for j in 1..n - 2 {
                out.push((j, j + 1, 1.0, vec_of(&[(j, 1.0), (j + 1, -1.0)])));
            }
            out.push((n - 2, n - 1, FRAC_1_SQRT_2, vec_of(&[(n - 2, 1.0), (n - 1, -1.0)])));
            out.push((n - 2, 0, FRAC_1_SQRT_2, vec_of(&[(n - 2, 1.0), (n - 1, 1.0)])));
            out.push((n - 1, 1, FRAC_1_SQRT_2, vec_of(&[(0, -1.0), (1, -1.0)])));
            out
        }
    }
}

/// Metric errors and their `∂_z` at one point of the ray.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub e: Vec<f64>,
    pub ez: Vec<Complex64>,
    /// True when the point fell between grid nodes.
    pub interpolated: bool,
}

/// `U` and `V` from metric errors.
pub fn connection_matrices(kind: SystemKind, tau: f64, frame: &FrameSample) -> (CMatrix, CMatrix) {
    let n = kind.n();
    let mut u = shift_matrix(kind) * c(tau);
    for j in 0..n {
        u[(j, j)] -= frame.ez[j];
    }
    let mut v = CMatrix::zeros(n, n);
    for (r, col, w, beta) in v_entries(kind) {
        let x: f64 = beta.iter().zip(&frame.e).map(|(a, b)| a * b).sum();
        v[(r, col)] += c(tau * w * x.exp());
    }
    (u, v)
}

/// `R = S⁻¹ (e^{iθ} U_err + e^{-iθ} V_err) S`, with `V_err` built from
/// `expm1` so tiny errors keep full relative precision.
pub fn error_matrix(kind: SystemKind, tau: f64, theta: f64, frame: &FrameSample) -> CMatrix {
    let n = kind.n();
    let eith = Complex64::from_polar(1.0, theta);
    let mut err = CMatrix::zeros(n, n);
    for j in 0..n {
        err[(j, j)] = -eith * frame.ez[j];
    }
    for (r, col, w, beta) in v_entries(kind) {
        let x: f64 = beta.iter().zip(&frame.e).map(|(a, b)| a * b).sum();
        err[(r, col)] += eith.conj() * (tau * w * x.exp_m1());
    }
    let s = frame_basis(kind);
    s.adjoint() * err * s
}

/// Source of connection data along a ray.
pub trait ConnectionSource: Sync {
    fn kind(&self) -> SystemKind;
    /// Rate scale `τ` (`t^{1/n}` or `(2t)^{1/(n-1)}`).
    fn tau(&self) -> f64;
    fn theta(&self) -> f64;
    /// Largest admissible path length.
    fn reach(&self) -> f64;
    fn frame(&self, s: f64) -> Result<FrameSample>;

    fn connection(&self, s: f64) -> Result<(CMatrix, CMatrix)> {
        Ok(connection_matrices(self.kind(), self.tau(), &self.frame(s)?))
    }

    fn error_matrix(&self, s: f64) -> Result<CMatrix> {
        Ok(error_matrix(self.kind(), self.tau(), self.theta(), &self.frame(s)?))
    }
}

/// Connection built from a solved radial metric, sampled along the ray by
/// linear interpolation between grid nodes.
#[derive(Debug, Clone)]
pub struct SolvedChart {
    kind: SystemKind,
    tau: f64,
    theta: f64,
    grid: RadialGrid,
    e: Vec<Vec<f64>>,
    ez: Vec<Vec<Complex64>>,
}

impl SolvedChart {
    pub fn new(solution: &MetricSolution, theta: f64) -> Result<Self> {
        let grid = *solution
            .grid()
            .as_radial()
            .ok_or_else(|| Error::InvalidArgument("transport needs a radial solution".into()))?;
        let full = solution.state.full_fields();
        let ez = full.iter().map(|f| radial_dz(f, theta)).collect::<Result<Vec<_>>>()?;
        let e = full.into_iter().map(|f| f.into_values()).collect();
        let kind = solution.kind();
        Ok(Self { kind, tau: kind.rate_scale(solution.t()), theta, grid, e, ez })
    }
}

impl ConnectionSource for SolvedChart {
    fn kind(&self) -> SystemKind {
        self.kind
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn reach(&self) -> f64 {
        self.grid.radius()
    }

    fn frame(&self, s: f64) -> Result<FrameSample> {
        if !(0.0..=self.grid.radius() * (1.0 + 1e-12)).contains(&s) {
            return Err(Error::InvalidArgument(format!("s = {s} lies outside the solved disk")));
        }
        let (i, frac, on_node) = self.grid.locate(s);
        let lerp = |a: f64, b: f64| a * (1.0 - frac) + b * frac;
        let e = self.e.iter().map(|f| lerp(f[i], f[i + 1])).collect();
        let ez = self.ez.iter().map(|f| f[i] * (1.0 - frac) + f[i + 1] * frac).collect();
        Ok(FrameSample { e, ez, interpolated: !on_node })
    }
}

/// Zero error fields: the connection is exactly its leading term.
#[derive(Debug, Clone, Copy)]
pub struct ExactLeading {
    pub kind: SystemKind,
    pub tau: f64,
    pub theta: f64,
}

impl ConnectionSource for ExactLeading {
    fn kind(&self) -> SystemKind {
        self.kind
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn reach(&self) -> f64 {
        f64::INFINITY
    }

    fn frame(&self, _s: f64) -> Result<FrameSample> {
        let n = self.kind.n();
        Ok(FrameSample { e: vec![0.0; n], ez: vec![Complex64::new(0.0, 0.0); n], interpolated: false })
    }
}

/// Leading term plus a prescribed constant error matrix `R` in the `S` frame.
#[derive(Debug, Clone)]
pub struct SyntheticError {
    pub kind: SystemKind,
    pub tau: f64,
    pub theta: f64,
    pub r: CMatrix,
}

impl ConnectionSource for SyntheticError {
    fn kind(&self) -> SystemKind {
        self.kind
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn reach(&self) -> f64 {
        f64::INFINITY
    }

    fn frame(&self, _s: f64) -> Result<FrameSample> {
        let n = self.kind.n();
        Ok(FrameSample { e: vec![0.0; n], ez: vec![Complex64::new(0.0, 0.0); n], interpolated: false })
    }

    fn connection(&self, _s: f64) -> Result<(CMatrix, CMatrix)> {
        let s = frame_basis(self.kind);
        let p = shift_matrix(self.kind);
        let u = &p * c(self.tau) + &s * &self.r * s.adjoint() * Complex64::from_polar(1.0, -self.theta);
        Ok((u, p.transpose() * c(self.tau)))
    }

    fn error_matrix(&self, _s: f64) -> Result<CMatrix> {
        Ok(self.r.clone())
    }
}

/// The ray `s e^{iθ}`, `0 <= s <= L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPath {
    pub length: f64,
    pub theta: f64,
}

impl RayPath {
    pub fn new(length: f64, theta: f64) -> Result<Self> {
        if !(length >= 0.0 && length.is_finite()) || !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("bad ray: L = {length}, θ = {theta}")));
        }
        Ok(Self { length, theta })
    }

    /// Distance `R - L` from the path end to the edge of the solved disk.
    pub fn margin(&self, radius: f64) -> f64 {
        radius - self.length
    }
}

/// Connection data at one point of the ray.
#[derive(Debug, Clone)]
pub struct ConnectionSample {
    pub s: f64,
    pub u: CMatrix,
    pub v: CMatrix,
    pub mu: Vec<f64>,
    pub r_err: CMatrix,
    pub interpolated: bool,
}

impl ConnectionSample {
    /// `e^{iθ} U + e^{-iθ} V`.
    pub fn connection(&self, theta: f64) -> CMatrix {
        &self.u * Complex64::from_polar(1.0, theta) + &self.v * Complex64::from_polar(1.0, -theta)
    }
}

pub fn assemble_connection(source: &dyn ConnectionSource, s: f64) -> Result<ConnectionSample> {
    let frame = source.frame(s)?;
    let (u, v) = source.connection(s)?;
    Ok(ConnectionSample {
        s,
        u,
        v,
        mu: mu_values(source.kind(), source.theta()),
        r_err: source.error_matrix(s)?,
        interpolated: frame.interpolated,
    })
}

/// Step-size rule `h <= min(scale/τ, L/min_steps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub scale: f64,
    pub min_steps: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        Self { scale: 0.05, min_steps: 200 }
    }
}

impl StepRule {
    pub fn steps(&self, tau: f64, length: f64) -> Result<usize> {
        if length == 0.0 {
            return Ok(0);
        }
        let h = (self.scale / tau).min(length / self.min_steps.max(1) as f64);
        if !(h >= 1e-12 * length) {
            return Err(Error::StepUnderflow(h));
        }
        Ok(((length / h) * (1.0 - 1e-12)).ceil() as usize)
    }
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub kind: SystemKind,
    pub tau: f64,
    pub theta: f64,
    pub length: f64,
    pub mu: Vec<f64>,
    /// Remainder `G(L) = Φ_0(L)⁻¹ Φ(L)`.
    pub g: CMatrix,
    /// `Φ(L)` in the `S` frame.
    pub phi: CMatrix,
    /// `μ_j + ln|G_jj| / (Lτ)`, the log-diagonal of `Φ(L)` scaled by `1/(Lτ)`.
    pub diag_logs: Vec<f64>,
    /// `‖offdiag G‖_F / ‖diag G‖_F`.
    pub offdiag_norm: f64,
    pub wkb: f64,
    pub wkb_converged: bool,
    /// Largest `|det G - 1|` over the checkpoints.
    pub det_drift: f64,
    pub steps: usize,
    pub interpolated_samples: usize,
}

impl TransportResult {
    /// `Ψ(L) = S Φ(L) S⁻¹` in the original frame.
    pub fn psi(&self) -> CMatrix {
        let s = frame_basis(self.kind);
        &s * &self.phi * s.adjoint()
    }

    /// `T = Ψ(L)⁻¹`.
    pub fn transport_matrix(&self) -> Option<CMatrix> {
        self.psi().try_inverse()
    }
}

fn phi0(tau: f64, mu: &[f64], s: f64) -> Vec<f64> {
    mu.iter().map(|m| (s * tau * m).exp()).collect()
}

/// Integrate `G' = Φ_0(s-a)⁻¹ R(s) Φ_0(s-a) G`, `G(a) = I`, over `[a, b]`
/// with classical RK4. Returns `G(b)`, the checkpoint determinants and the
/// number of interpolated samples.
fn integrate_remainder(
    source: &dyn ConnectionSource,
    a: f64,
    b: f64,
    rule: &StepRule,
) -> Result<(CMatrix, Vec<Complex64>, usize, usize)> {
    let kind = source.kind();
    let n = kind.n();
    let tau = source.tau();
    let mu = mu_values(kind, source.theta());
    let len = b - a;
    let steps = rule.steps(tau, len)?;
    let mut g = CMatrix::identity(n, n);
    let mut dets = Vec::new();
    if steps == 0 {
        return Ok((g, vec![c(1.0)], 0, 0));
    }
    let h = len / steps as f64;
    let mut interpolated = 0;
    let rhs = |s: f64, g: &CMatrix, interpolated: &mut usize| -> Result<CMatrix> {
        let frame = source.frame(s)?;
        if frame.interpolated {
            *interpolated += 1;
        }
        let r = source.error_matrix(s)?;
        let rel = s - a;
        let mut k = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = r[(i, j)] * (rel * tau * (mu[j] - mu[i])).exp();
            }
        }
        Ok(k * g)
    };
    let checkpoint_every = (steps / 10).max(1);
    for step in 0..steps {
        let s = a + step as f64 * h;
        let k1 = rhs(s, &g, &mut interpolated)?;
        let k2 = rhs(s + 0.5 * h, &(&g + &k1 * c(0.5 * h)), &mut interpolated)?;
        let k3 = rhs(s + 0.5 * h, &(&g + &k2 * c(0.5 * h)), &mut interpolated)?;
        let k4 = rhs(s + h, &(&g + &k3 * c(h)), &mut interpolated)?;
        g += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        if (step + 1) % checkpoint_every == 0 || step + 1 == steps {
            dets.push(g.determinant());
        }
    }
    Ok((g, dets, steps, interpolated))
}

/// Propagator `Φ(b, a)` in the `S` frame together with the remainder over `[a, b]`.
pub fn integrate_segment(source: &dyn ConnectionSource, a: f64, b: f64, rule: &StepRule) -> Result<(CMatrix, CMatrix)> {
    if !(0.0 <= a && a <= b && b <= source.reach()) {
        return Err(Error::InvalidArgument(format!("segment [{a}, {b}] outside [0, {}]", source.reach())));
    }
    let (g, _, _, _) = integrate_remainder(source, a, b, rule)?;
    let mu = mu_values(source.kind(), source.theta());
    let d = phi0(source.tau(), &mu, b - a);
    let mut phi = g.clone();
    for i in 0..phi.nrows() {
        for j in 0..phi.ncols() {
            phi[(i, j)] *= d[i];
        }
    }
    Ok((phi, g))
}

/// Parallel transport along `[0, L]` with all diagnostics.
pub fn integrate_transport(source: &dyn ConnectionSource, path: &RayPath, rule: &StepRule) -> Result<TransportResult> {
    if (path.theta - source.theta()).abs() > 1e-15 {
        return Err(Error::InvalidArgument("path angle differs from the connection's angle".into()));
    }
    let length = path.length;
    if length > source.reach() {
        return Err(Error::InvalidArgument(format!("path length {length} exceeds reach {}", source.reach())));
    }
    let kind = source.kind();
    let tau = source.tau();
    let mu = mu_values(kind, path.theta);
    let (g, dets, steps, interpolated_samples) = integrate_remainder(source, 0.0, length, rule)?;
    let n = kind.n();
    let d = phi0(tau, &mu, length);
    let phi = CMatrix::from_fn(n, n, |i, j| g[(i, j)] * d[i]);
    let lt = length * tau;
    let diag_logs = (0..n)
        .map(|j| if lt > 0.0 { mu[j] + g[(j, j)].norm().ln() / lt } else { mu[j] })
        .collect();
    let mut off = 0.0;
    let mut on = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                on += g[(i, j)].norm_sqr();
            } else {
                off += g[(i, j)].norm_sqr();
            }
        }
    }
    let offdiag_norm = (off / on).sqrt();
    let det_drift = dets.iter().map(|z| (z - c(1.0)).norm()).fold(0.0, f64::max);
    let mut result = TransportResult {
        kind,
        tau,
        theta: path.theta,
        length,
        mu,
        g,
        phi,
        diag_logs,
        offdiag_norm,
        wkb: 0.0,
        wkb_converged: true,
        det_drift,
        steps,
        interpolated_samples,
    };
    let (wkb, ok) = wkb_exponent(&result);
    result.wkb = wkb;
    result.wkb_converged = ok;
    Ok(result)
}

/// `(1/(Lτ)) ln ‖Ψ(L)‖₂` from the largest eigenvalue of `Ψ*Ψ`, with `Ψ`
/// rescaled so that large exponents cannot overflow; power iteration is the
/// fallback if the eigen-solver fails. Returns the exponent and a convergence flag.
pub fn wkb_exponent(result: &TransportResult) -> (f64, bool) {
    let n = result.kind.n();
    let top = result.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lt = result.length * result.tau;
    if lt == 0.0 {
        return (top, true);
    }
    let scaled: Vec<f64> = result.mu.iter().map(|m| (lt * (m - top)).exp()).collect();
    let phi = CMatrix::from_fn(n, n, |i, j| result.g[(i, j)] * scaled[i]);
    let s = frame_basis(result.kind);
    let psi = &s * phi * s.adjoint();
    let gram = psi.adjoint() * &psi;
    match linalg::hermitian_eigenvalues(&gram, 1e-15) {
        Ok(eig) => {
            let largest = eig.iter().copied().fold(0.0, f64::max);
            (top + 0.5 * largest.ln() / lt, true)
        }
        Err(_) => {
            let (norm, ok) = linalg::spectral_norm(&psi, 200, 1e-14);
            (top + norm.ln() / lt, ok)
        }
    }
}

/// Sorted (descending) `(1/τ)·log`-eigenvalues of
/// `f_t = Ψ(L)^{-T} diag(e^{-e_j(L)}) conj(Ψ(L)^{-1})`.
pub fn vector_distance(source: &dyn ConnectionSource, result: &TransportResult) -> Result<Vec<f64>> {
    let kind = result.kind;
    let n = kind.n();
    let frame = source.frame(result.length)?;
    let s = frame_basis(kind);
    let h = CMatrix::from_diagonal(&DVector::from_iterator(n, frame.e.iter().map(|e| c((-e).exp()))));
    let k0 = s.transpose() * h * s.map(|z| z.conj());
    let ginv = result
        .g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearSolve("transport remainder is singular".into()))?;
    let core = ginv.transpose() * k0 * ginv.map(|z| z.conj());
    // f_t is similar to D core D with D = diag(e^{-Lτμ_j}); shift by the
    // midpoint exponent before exponentiating
    let lt = result.length * result.tau;
    let hi = result.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = result.mu.iter().copied().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (hi + lo);
    let d: Vec<f64> = result.mu.iter().map(|m| (-lt * (m - mid)).exp()).collect();
    let x = CMatrix::from_fn(n, n, |i, j| core[(i, j)] * d[i] * d[j]);
    let defect = linalg::hermitian_defect(&x);
    if defect > 1e-8 {
        return Err(Error::NotHermitian(defect));
    }
    let eig = linalg::hermitian_eigenvalues(&x, 1e-14)?;
    let mut out: Vec<f64> = eig
        .iter()
        .map(|&l| {
            if l > 0.0 {
                Ok((l.ln() - 2.0 * lt * mid) / result.tau)
            } else {
                Err(Error::LinearSolve(format!("non-positive eigenvalue {l:e} in f_t")))
            }
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Defect of the eigenvalue pairing. Even n-cyclic: `max |ℓ_j + ℓ_{σ(j)}|`
/// over the pairing `μ_{σ(j)} = -μ_j`. (n-1)-cyclic: `|ℓ_1|` (the eigenvalue
/// `1` slot), plus the pairing among the remaining slots when `n - 1` is even.
pub fn pairing_check(result: &TransportResult) -> Result<f64> {
    let kind = result.kind;
    let n = kind.n();
    let l = &result.diag_logs;
    match kind.family() {
        Family::NCyclic => {
            if n % 2 == 1 {
                return Err(Error::NoPairing(format!("odd n = {n} has no μ ↦ -μ pairing")));
            }
            Ok((0..n).map(|j| (l[j] + l[(j + n / 2) % n]).abs()).fold(0.0, f64::max))
        }
        Family::NMinus1Cyclic => {
            let m = n - 1;
            let mut defect = l[0].abs();
            if m % 2 == 0 {
                for j in 0..m {
                    defect = defect.max((l[1 + j] + l[1 + (j + m / 2) % m]).abs());
                }
            }
            Ok(defect)
        }
    }
}

/// Reference integration of `Ψ' = A(s) Ψ` in the original frame with `steps`
/// RK4 steps, no splitting. Used to cross-check the conjugated integrator.
pub fn integrate_raw(source: &dyn ConnectionSource, length: f64, steps: usize) -> Result<CMatrix> {
    let n = source.kind().n();
    let theta = source.theta();
    let a_at = |s: f64| -> Result<CMatrix> {
        let (u, v) = source.connection(s)?;
        Ok(u * Complex64::from_polar(1.0, theta) + v * Complex64::from_polar(1.0, -theta))
    };
    let mut psi = CMatrix::identity(n, n);
    if steps == 0 {
        return Ok(psi);
    }
    let h = length / steps as f64;
    for step in 0..steps {
        let s = step as f64 * h;
        let k1 = a_at(s)? * &psi;
        let k2 = a_at(s + 0.5 * h)? * (&psi + &k1 * c(0.5 * h));
        let k3 = a_at(s + 0.5 * h)? * (&psi + &k2 * c(0.5 * h));
        let k4 = a_at(s + h)? * (&psi + &k3 * c(h));
        psi += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kinds() -> Vec<SystemKind> {
        let mut v = Vec::new();
        for n in 2..=7 {
            v.push(SystemKind::n_cyclic(n).unwrap());
            if n >= 3 {
                v.push(SystemKind::n_minus_1_cyclic(n).unwrap());
            }
        }
        v
    }

    #[test]
    fn mu_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(&mu_values(SystemKind::n_cyclic(3).unwrap(), 0.0), &[2.0, -1.0, -1.0]));
        assert!(close(&mu_values(SystemKind::n_cyclic(4).unwrap(), 0.0), &[2.0, 0.0, -2.0, 0.0]));
        assert!(close(&mu_values(SystemKind::n_minus_1_cyclic(4).unwrap(), 0.0), &[0.0, 2.0, -1.0, -1.0]));
        assert_eq!(max_mu(SystemKind::n_cyclic(3).unwrap(), 0.0), 2.0);
    }

    #[test]
    fn basis_diagonalizes_leading_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in kinds() {
            let theta = rng.gen_range(-PI..PI);
            let s = frame_basis(kind);
            let id = s.adjoint() * &s;
            assert!((id - CMatrix::identity(kind.n(), kind.n())).norm() < 1e-12, "{kind:?} not unitary");
            let tau = 3.7;
            let sample = assemble_connection(&ExactLeading { kind, tau, theta }, 0.0).unwrap();
            let a = sample.connection(theta);
            assert!((&a - a.adjoint()).norm() < 1e-12, "{kind:?} leading term not Hermitian");
            assert!(a.trace().norm() < 1e-12);
            let m = s.adjoint() * a * &s;
            let mu = mu_values(kind, theta);
            for i in 0..kind.n() {
                for j in 0..kind.n() {
                    let want = if i == j { tau * mu[i] } else { 0.0 };
                    assert!((m[(i, j)] - c(want)).norm() < 1e-12, "{kind:?} ({i},{j})");
                }
            }
            assert!(sample.r_err.norm() == 0.0);
        }
    }

    #[test]
    fn two_by_two_model() {
        let kind = SystemKind::n_cyclic(2).unwrap();
        let t: f64 = 9.0;
        let sample = assemble_connection(&ExactLeading { kind, tau: t.sqrt(), theta: 0.0 }, 0.0).unwrap();
        let a = sample.connection(0.0);
        assert!((a[(0, 1)] - c(2.0 * 3.0)).norm() < 1e-14);
        assert!((a[(1, 0)] - c(2.0 * 3.0)).norm() < 1e-14);
    }

    #[test]
    fn error_matrix_matches_direct_subtraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in kinds() {
            let n = kind.n();
            let x: Vec<f64> = (0..kind.independent_count()).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let e = kind.embed(&x);
            let ez: Vec<Complex64> = {
                let y: Vec<f64> = (0..kind.independent_count()).map(|_| rng.gen_range(-0.1..0.1)).collect();
                let yr = kind.embed(&y);
                let phase = Complex64::from_polar(0.5, -0.3);
                yr.iter().map(|v| phase * v).collect()
            };
            let frame = FrameSample { e, ez, interpolated: false };
            let (tau, theta) = (2.5, 0.3);
            let (u, v) = connection_matrices(kind, tau, &frame);
            let a = u * Complex64::from_polar(1.0, theta) + v * Complex64::from_polar(1.0, -theta);
            assert!(a.trace().norm() < 1e-12, "{kind:?} trace");
            let s = frame_basis(kind);
            let mut direct = s.adjoint() * a * &s;
            let mu = mu_values(kind, theta);
            for j in 0..n {
                direct[(j, j)] -= c(tau * mu[j]);
            }
            let r = error_matrix(kind, tau, theta, &frame);
            assert!((direct - r).norm() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn zero_error_transport_is_diagonal() {
        for kind in kinds() {
            let src = ExactLeading { kind, tau: 4.0, theta: 0.7 };
            let res = integrate_transport(&src, &RayPath::new(0.4, 0.7).unwrap(), &StepRule::default()).unwrap();
            assert!((res.g.clone() - CMatrix::identity(kind.n(), kind.n())).norm() == 0.0);
            assert!(res.det_drift == 0.0);
            assert!((res.wkb - max_mu(kind, 0.7)).abs() < 1e-8, "{kind:?}: {}", res.wkb);
            let mu = mu_values(kind, 0.7);
            for (l, m) in res.diag_logs.iter().zip(&mu) {
                assert!((l - m).abs() < 1e-12);
            }
            let vd = vector_distance(&src, &res).unwrap();
            let mut want: Vec<f64> = mu.iter().map(|m| -2.0 * 0.4 * m).collect();
            want.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in vd.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{kind:?}: {vd:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn raw_integration_agrees_with_conjugated() {
        let kind = SystemKind::n_minus_1_cyclic(5).unwrap();
        let theta = 0.25;
        let mut r = CMatrix::zeros(5, 5);
        r[(0, 2)] = Complex64::new(0.01, 0.02);
        r[(3, 1)] = Complex64::new(-0.02, 0.0);
        let src = SyntheticError { kind, tau: 3.0, theta, r };
        let res = integrate_transport(&src, &RayPath::new(0.5, theta).unwrap(), &StepRule { scale: 0.005, min_steps: 2000 }).unwrap();
        let raw = integrate_raw(&src, 0.5, 4000).unwrap();
        let scale = raw.norm();
        let rel = (res.psi() - raw).norm() / scale;
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn pairing_rules() {
        let src = ExactLeading { kind: SystemKind::n_cyclic(4).unwrap(), tau: 4.0, theta: 0.3 };
        let res = integrate_transport(&src, &RayPath::new(0.4, 0.3).unwrap(), &StepRule::default()).unwrap();
        assert!(pairing_check(&res).unwrap() < 1e-10);
        let src = ExactLeading { kind: SystemKind::n_cyclic(3).unwrap(), tau: 4.0, theta: 0.3 };
        let res = integrate_transport(&src, &RayPath::new(0.4, 0.3).unwrap(), &StepRule::default()).unwrap();
        assert!(matches!(pairing_check(&res), Err(Error::NoPairing(_))));
        let src = ExactLeading { kind: SystemKind::n_minus_1_cyclic(4).unwrap(), tau: 4.0, theta: 0.0 };
        let res = integrate_transport(&src, &RayPath::new(0.4, 0.0).unwrap(), &StepRule::default()).unwrap();
        assert_eq!(res.diag_logs[0], 0.0);
        assert_eq!(pairing_check(&res).unwrap(), 0.0);
    }

    #[test]
    fn step_rule() {
        let r = StepRule::default();
        assert_eq!(r.steps(10.0, 0.3).unwrap(), 200);
        assert_eq!(r.steps(100.0, 1.0).unwrap(), 2000);
        assert_eq!(r.steps(1.0, 0.0).unwrap(), 0);
        assert!(StepRule { scale: 0.0, min_steps: 1 }.steps(1.0, 1.0).is_err());
    }
}
