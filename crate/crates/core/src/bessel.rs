//! Modified Bessel function `I_0` and the radial comparison functions
//! `y_k(r) = I_0(√k r) / I_0(√k R)` solving `Δη = kη`, `η = 1` on `|z| = R`.

use crate::error::{Error, Result};

/// Below this argument the power series is used, above it the asymptotic one.
pub const SERIES_CUTOFF: f64 = 15.0;

fn check_arg(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("I_0 needs a finite x >= 0, got {x}")));
    }
    Ok(())
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 1.0;
    while term > 1e-17 * sum {
        term *= q / (m * m);
        sum += term;
        m += 1.0;
    }
    sum
}

// Σ_k ((2k-1)!!)² / (k! (8x)^k), summed until the terms stop shrinking.
fn asymptotic_factor(x: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
        if next >= term || next < 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    sum
}

/// `I_0(x)` for `x >= 0`. Overflows to `inf` past `x ≈ 713`; use
/// [`bessel_i0_scaled`] there.
pub fn bessel_i0(x: f64) -> Result<f64> {
    check_arg(x)?;
    if x <= SERIES_CUTOFF {
        Ok(series(x))
    } else {
        Ok(x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * asymptotic_factor(x))
    }
}

/// `e^{-x} I_0(x)`, finite for every `x >= 0`.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    check_arg(x)?;
    if x <= SERIES_CUTOFF {
        Ok(series(x) * (-x).exp())
    } else {
        Ok(asymptotic_factor(x) / (2.0 * std::f64::consts::PI * x).sqrt())
    }
}

/// Comparison function `y_k(r) = I_0(√k r) / I_0(√k R)` on the disk of radius `R`.
pub fn comparison_yk(k: f64, radius: f64, r: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("comparison function needs k > 0, got {k}")));
    }
    if !(radius > 0.0) || !(0.0..=radius).contains(&r) {
        return Err(Error::InvalidArgument(format!("need 0 <= r <= R, got r = {r}, R = {radius}")));
    }
    if r == radius {
        return Ok(1.0);
    }
    let s = k.sqrt();
    let (a, b) = (s * r, s * radius);
    Ok((a - b).exp() * bessel_i0_scaled(a)? / bessel_i0_scaled(b)?)
}
