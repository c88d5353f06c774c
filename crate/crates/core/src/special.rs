//! Log-gamma and digamma on the positive real axis.
//!
//! Both functions shift the argument upward with the recurrences
//! `Γ(x+1) = xΓ(x)` and `ψ(x+1) = ψ(x) + 1/x` until it reaches
//! [`ASYMPTOTIC_THRESHOLD`], then evaluate a truncated Stirling series.
//! In `f64` the absolute error is below `1e-13` on `[1e-3, 1e3]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// B_{2k} / (2k (2k-1)), k = 1..8.
const LN_GAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_{2k} / (2k), k = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn check_positive<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires a finite x > 0, got {x}")))
    }
}

/// Polynomial in `w` with coefficients `coef[0] + coef[1] w + ...` (Horner).
fn horner<T: Scalar>(coef: &[f64], w: T) -> T {
    coef.iter().rev().fold(T::zero(), |acc, &c| acc * w + T::c(c))
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> Result<T> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_pos(x))
}

/// `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    check_positive("digamma", x)?;
    Ok(digamma_pos(x))
}

/// Unchecked variant for callers that have already validated `x > 0`.
pub(crate) fn ln_gamma_pos<T: Scalar>(mut x: T) -> T {
    let threshold = T::c(ASYMPTOTIC_THRESHOLD);
    let mut shift = T::one();
    while x < threshold {
        shift *= x;
        x += T::one();
    }
    let inv = x.recip();
    let series = horner(&LN_GAMMA_SERIES, inv * inv) * inv;
    (x - T::c(0.5)) * x.ln() - x + T::c(HALF_LN_2PI) + series - shift.ln()
}

pub(crate) fn digamma_pos<T: Scalar>(mut x: T) -> T {
    let threshold = T::c(ASYMPTOTIC_THRESHOLD);
    let mut acc = T::zero();
    while x < threshold {
        acc -= x.recip();
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = horner(&DIGAMMA_SERIES, inv2) * inv2;
    acc + x.ln() - T::c(0.5) * inv - series
}
