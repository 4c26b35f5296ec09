//! Discrete Fourier eigensolutions of the cyclic lattice.
//!
//! For a Toda vector `d` of length `m` put `x̃_i = d^i - d^{i+1}` (indices in
//! `Z_m`, `d^0 = d^m`) and
//!
//! ```text
//! w_k = (1/√m) Σ_{i ∈ Z_m} ζ^{ik} x̃_i,    ζ = e^{2πi/m}.
//! ```
//!
//! The linearized lattice decouples in the `w_k`, and `Δw_k = a|1-ζ^k|² w_k + …`
//! so each mode decays into the disk at rate `√a |1 - ζ^k|`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{laplacian, radial_dz, Grid, ScalarField};
use crate::linalg::CMatrix;
use crate::solver::MetricSolution;
use crate::toda::{self, Family, SystemKind, TodaState};
use crate::transport::{ConnectionSource, SolvedChart};

pub fn zeta(m: usize, power: i64) -> Complex64 {
    let r = power.rem_euclid(m as i64) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * r / m as f64)
}

/// `|1 - ζ_m^k| = 2 sin(πk/m)`.
pub fn omega_factor(m: usize, k: usize) -> f64 {
    2.0 * (PI * (k % m) as f64 / m as f64).sin().abs()
}

/// The unitary DFT matrix `F_{jk} = ζ_m^{jk}/√m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DftMatrix {
    pub m: usize,
}

impl DftMatrix {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("DFT order must be positive".into()));
        }
        Ok(Self { m })
    }

    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        zeta(self.m, (j * k) as i64) / (self.m as f64).sqrt()
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.m, self.m, |j, k| self.entry(j, k))
    }

    /// `(F x)_k = Σ_j F_{kj} x_j`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.m).map(|k| (0..self.m).map(|j| self.entry(k, j) * x[j]).sum()).collect()
    }

    /// `F* y`, the inverse transform.
    pub fn apply_inverse(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..self.m).map(|j| (0..self.m).map(|k| self.entry(k, j).conj() * y[k]).sum()).collect()
    }
}

/// Lattice differences `x̃_i = d^i - d^{i+1}`, `i = 0..m-1`, with `d^0 = d^m`
/// (`d` is stored zero-based, `d[a] = d^{a+1}`).
pub fn differences(d: &[f64]) -> Vec<f64> {
    let m = d.len();
    (0..m).map(|i| d[(i + m - 1) % m] - d[i % m]).collect()
}

/// Least-squares exponential fit `|w(r)| ≈ A e^{-rate (R - r)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// Fitted value at `r = R`.
    pub amplitude: f64,
    pub r_squared: f64,
    /// Window actually used after dropping samples below the noise floor.
    pub window: (f64, f64),
    pub samples: usize,
}

/// One eigenmode `w_k` sampled on the state's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenProfile {
    pub k: usize,
    pub m: usize,
    pub grid: Grid,
    pub values: Vec<Complex64>,
    /// Largest dropped imaginary part (n-cyclic states, where `w_k` is real).
    pub imag_defect: f64,
    pub fit: Option<DecayFit>,
}

impl EigenProfile {
    pub fn real_part(&self) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(|z| z.re).collect()).expect("finite transform")
    }

    pub fn imag_part(&self) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(|z| z.im).collect()).expect("finite transform")
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// `Δw_k`, computed separately on real and imaginary parts.
    pub fn laplacian(&self) -> Result<Vec<Complex64>> {
        let re = laplacian(&self.real_part())?;
        let im = laplacian(&self.imag_part())?;
        Ok(re.values().iter().zip(im.values()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }
}

fn transform_at(d: &[f64], k: usize) -> Complex64 {
    let m = d.len();
    differences(d)
        .iter()
        .enumerate()
        .map(|(i, x)| zeta(m, (i * k) as i64) * x)
        .sum::<Complex64>()
        / (m as f64).sqrt()
}

/// `w_k` of a state, `0 <= k < m`.
pub fn compute_wk(state: &TodaState, k: usize) -> Result<EigenProfile> {
    let kind = state.kind();
    let m = kind.lattice_len();
    if k >= m {
        return Err(Error::OutOfRange { index: k, bound: m });
    }
    let grid = *state.grid();
    let mut values = crate::par::map_range(grid.len(), |node| transform_at(&state.lattice_at(node).0, k));
    let mut imag_defect = 0.0;
    if kind.family() == Family::NCyclic {
        imag_defect = values.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
        for z in &mut values {
            z.im = 0.0;
        }
    }
    Ok(EigenProfile { k, m, grid, values, imag_defect, fit: None })
}

/// All modes `w_0 .. w_{m-1}`.
pub fn compute_all_wk(state: &TodaState) -> Result<Vec<EigenProfile>> {
    (0..state.kind().lattice_len()).map(|k| compute_wk(state, k)).collect()
}

/// Ordered tuples `(r_1..r_s)` with entries in `1..m`, `Σr ≡ k (mod m)` and
/// `Σr <= k + max_cycles*m`, grouped by length `s`.
fn admissible_tuples(m: usize, k: usize, s_max: usize, max_cycles: usize) -> Vec<Vec<usize>> {
    let cap = k + max_cycles * m;
    let mut out = Vec::new();
    for s in 1..=s_max {
        let mut tuple = vec![1usize; s];
        loop {
            let total: usize = tuple.iter().sum();
            if total % m == k % m && total <= cap {
                out.push(tuple.clone());
            }
            // odometer increment over {1..m-1}^s
            let mut pos = 0;
            loop {
                if pos == s {
                    break;
                }
                tuple[pos] += 1;
                if tuple[pos] < m {
                    break;
                }
                tuple[pos] = 1;
                pos += 1;
            }
            if pos == s {
                break;
            }
        }
    }
    out
}

/// Truncated power-series right-hand side of `Δw_k`:
///
/// `a|1-ζ^k|² Σ_{s <= s_max} 1/(s! m^{(s-1)/2}) Σ_{r_1..r_s} w_{r_1}…w_{r_s}`
///
/// over ordered tuples with `Σr ≡ k (mod m)`, `Σr <= k + max_cycles*m`. For the
/// (n-1)-cyclic family the perturbation `(a/√m)(1-ζ^{-k}) Σ_i ζ^{ik} f_i` is
/// added. `profiles` must hold every mode `0..m`.
pub fn recursive_rhs(
    state: &TodaState,
    profiles: &[EigenProfile],
    k: usize,
    s_max: usize,
    max_cycles: usize,
) -> Result<Vec<Complex64>> {
    if s_max < 1 {
        return Err(Error::InvalidArgument("series needs at least one product order".into()));
    }
    let kind = state.kind();
    let m = kind.lattice_len();
    if k >= m {
        return Err(Error::OutOfRange { index: k, bound: m });
    }
    if profiles.len() != m {
        return Err(Error::InvalidArgument(format!("need all {m} modes, got {}", profiles.len())));
    }
    let a = kind.prefactor(state.t());
    let lead = a * omega_factor(m, k).powi(2);
    let terms: Vec<(f64, Vec<usize>)> = admissible_tuples(m, k, s_max, max_cycles)
        .into_iter()
        .map(|tuple| {
            let s = tuple.len();
            let fact: f64 = (1..=s).map(|v| v as f64).product();
            (lead / (fact * (m as f64).powf((s as f64 - 1.0) / 2.0)), tuple)
        })
        .collect();
    let grid = *state.grid();
    let perturbed = kind.family() == Family::NMinus1Cyclic;
    let twist = (Complex64::new(1.0, 0.0) - zeta(m, -(k as i64))) * (a / (m as f64).sqrt());
    Ok(crate::par::map_range(grid.len(), |node| {
        let mut acc: Complex64 = terms
            .iter()
            .map(|(c, tuple)| tuple.iter().fold(Complex64::new(*c, 0.0), |p, &r| p * profiles[r].values[node]))
            .sum();
        if perturbed {
            let (d, v1) = state.lattice_at(node);
            let f = toda::perturbation(&d, v1);
            // f_1 = -f, f_{m-1} = +f in lattice numbering
            let sum = zeta(m, (m - 1) as i64 * k as i64) * f - zeta(m, k as i64) * f;
            acc += twist * sum;
        }
        acc
    }))
}

/// Closed form `Δw_k = (a|1-ζ^k|²/√m) Σ_i ζ^{ik} e^{x̃_i} (+ perturbation)`.
pub fn exact_rhs(state: &TodaState, k: usize) -> Result<Vec<Complex64>> {
    let kind = state.kind();
    let m = kind.lattice_len();
    if k >= m {
        return Err(Error::OutOfRange { index: k, bound: m });
    }
    let a = kind.prefactor(state.t());
    let lead = a * omega_factor(m, k).powi(2) / (m as f64).sqrt();
    let twist = (Complex64::new(1.0, 0.0) - zeta(m, -(k as i64))) * (a / (m as f64).sqrt());
    let grid = *state.grid();
    Ok(crate::par::map_range(grid.len(), |node| {
        let (d, v1) = state.lattice_at(node);
        let x = differences(&d);
        let mut acc: Complex64 = x.iter().enumerate().map(|(i, xi)| zeta(m, (i * k) as i64) * xi.exp()).sum::<Complex64>() * lead;
        if kind.family() == Family::NMinus1Cyclic {
            let f = toda::perturbation(&d, v1);
            acc += twist * (zeta(m, (m - 1) as i64 * k as i64) * f - zeta(m, k as i64) * f);
        }
        acc
    }))
}

/// Predicted decay rate of mode `k`: `2|1-ζ_m^k| τ`.
pub fn predicted_rate(kind: SystemKind, t: f64, k: usize) -> f64 {
    2.0 * omega_factor(kind.lattice_len(), k) * kind.rate_scale(t)
}

/// Predicted decay rate of `ṽ^1`: `2(2t)^{1/(n-1)}`.
pub fn predicted_vtilde1_rate(kind: SystemKind, t: f64) -> f64 {
    2.0 * kind.rate_scale(t)
}

/// Fit `log|v(r)|` against `R - r` over `window` on a radial grid, ignoring
/// samples at or below `noise_floor`. The window shrinks from the inside so
/// that only the contiguous run of resolved samples next to `r_hi` is used.
pub fn fit_decay_samples(
    grid: &Grid,
    magnitudes: &[f64],
    window: (f64, f64),
    noise_floor: f64,
) -> Result<DecayFit> {
    let rg = grid
        .as_radial()
        .ok_or_else(|| Error::InvalidArgument("decay fits need a radial profile".into()))?;
    let radius = rg.radius();
    let (lo, hi) = window;
    if !(lo < hi) || lo < 0.0 || hi > radius {
        return Err(Error::InvalidArgument(format!("bad fit window [{lo}, {hi}] on [0, {radius}]")));
    }
    let mut idx: Vec<usize> = (0..rg.len()).filter(|&i| (lo..=hi).contains(&rg.r(i))).collect();
    idx.reverse();
    let resolved: Vec<usize> = idx.into_iter().take_while(|&i| magnitudes[i] > noise_floor).collect();
    if resolved.len() < 3 {
        return Err(Error::EmptyWindow);
    }
    let xs: Vec<f64> = resolved.iter().map(|&i| radius - rg.r(i)).collect();
    let ys: Vec<f64> = resolved.iter().map(|&i| magnitudes[i].ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let used_lo = rg.r(*resolved.last().unwrap());
    let used_hi = rg.r(resolved[0]);
    Ok(DecayFit { rate: -slope, amplitude: intercept.exp(), r_squared, window: (used_lo, used_hi), samples: resolved.len() })
}

/// Fit the decay of a mode profile; see [`fit_decay_samples`].
pub fn fit_decay(profile: &EigenProfile, window: (f64, f64), noise_floor: f64) -> Result<DecayFit> {
    fit_decay_samples(&profile.grid, &profile.magnitudes(), window, noise_floor)
}

/// Noise floor for decay fits: `100 ε A`.
pub fn noise_floor(boundary_amplitude: f64) -> f64 {
    100.0 * f64::EPSILON * boundary_amplitude
}

/// Compare the directly assembled error-matrix entry `R_kl` along the ray at
/// angle `theta` with its expression through `w_{k-l}`:
///
/// `R_kl = -e^{iθ} ζ^{-r} ∂_z w_r / (√n (1-ζ^{-r})) + e^{-iθ} ζ^{-k} Δw_r / (4√n t^{1/n} |1-ζ^r|²)`
///
/// with `r = k - l mod n`. Returns the largest relative defect over grid
/// nodes inside `window`. n-cyclic solutions only; `k ≠ l`.
pub fn wk_link_check(solution: &MetricSolution, theta: f64, k: usize, l: usize, window: (f64, f64)) -> Result<f64> {
    let kind = solution.kind();
    if kind.family() != Family::NCyclic {
        return Err(Error::InvalidArgument("the w-link identity is stated for n-cyclic systems".into()));
    }
    let n = kind.n();
    if k >= n || l >= n {
        return Err(Error::OutOfRange { index: k.max(l), bound: n });
    }
    if k == l {
        return Err(Error::InvalidArgument("diagonal entries carry no w-link".into()));
    }
    let rg = *solution
        .grid()
        .as_radial()
        .ok_or_else(|| Error::InvalidArgument("w-link check needs a radial solution".into()))?;
    let r = (k + n - l) % n;
    let profile = compute_wk(&solution.state, r)?;
    let w = profile.real_part();
    let wz = radial_dz(&w, theta)?;
    let lap = laplacian(&w)?;
    let chart = SolvedChart::new(solution, theta)?;
    let tau = kind.rate_scale(solution.t());
    let sqrt_n = (n as f64).sqrt();
    let one = Complex64::new(1.0, 0.0);
    let c1 = -Complex64::from_polar(1.0, theta) * zeta(n, -(r as i64)) / ((one - zeta(n, -(r as i64))) * sqrt_n);
    let c2 = Complex64::from_polar(1.0, -theta) * zeta(n, -(k as i64)) / (4.0 * sqrt_n * tau * omega_factor(n, r).powi(2));
    let mut worst = 0.0_f64;
    let mut any = false;
    for i in 0..rg.cells() {
        let s = rg.r(i);
        if s < window.0 || s > window.1 {
            continue;
        }
        let direct = chart.error_matrix(s)?[(k, l)];
        let predicted = c1 * wz[i] + c2 * lap.values()[i];
        let scale = direct.norm();
        if scale == 0.0 {
            if predicted.norm() != 0.0 {
                worst = f64::INFINITY;
            }
            continue;
        }
        any = true;
        worst = worst.max((direct - predicted).norm() / scale);
    }
    if !any {
        return Ok(0.0);
    }
    Ok(worst)
}
