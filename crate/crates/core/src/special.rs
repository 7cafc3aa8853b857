//! Bessel function of the first kind, order zero.

use crate::error::{Error, Result};

/// Below this argument the power series is used, above it the Hankel
/// asymptotic expansion.
const SERIES_LIMIT: f64 = 12.0;

/// J₀(x), accurate to about 1e-12 absolute on |x| ≤ 50.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    let x = x.abs();
    Ok(if x < SERIES_LIMIT { series(x) } else { asymptotic(x) })
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let k = k as f64;
        term *= -q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > q.sqrt() {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    let eight_x = 8.0 * x;
    // t_k = prod_{j<=k} (2j-1)^2 / (k! (8x)^k)
    let mut t = 1.0;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..100usize {
        let odd = (2 * k - 1) as f64;
        t *= odd * odd / (k as f64 * eight_x);
        if t > prev || t < 1e-18 {
            break;
        }
        prev = t;
        match k % 4 {
            1 => q -= t,
            2 => p -= t,
            3 => q += t,
            _ => p += t,
        }
    }
    let chi = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
