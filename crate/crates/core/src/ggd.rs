//! Factorized generalized Gaussian distribution (GGD) numerics.
//!
//! Per dimension the density is
//! `β / (2 α Γ(1/β)) · exp(-(|x - μ| / α)^β)`; `β = 2` is a Gaussian with
//! variance `α²/2` and `β = 1` a Laplace distribution with diversity `α`.
//! Dimensions are independent, so log-densities and losses are sums.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::special::ln_gamma_pos;

/// Closed interval the shape parameter is confined to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for BetaBounds {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 10.0,
        }
    }
}

/// Per-dimension location, scale and shape of a factorized GGD.
#[derive(Debug, Clone, PartialEq)]
pub struct GgdParams<T> {
    mu: Vec<T>,
    alpha: Vec<T>,
    beta: Vec<T>,
}

impl<T: Scalar> GgdParams<T> {
    /// Validates against the default shape bounds `[0.1, 10]`.
    pub fn new(mu: Vec<T>, alpha: Vec<T>, beta: Vec<T>) -> Result<Self> {
        Self::with_beta_bounds(mu, alpha, beta, BetaBounds::default())
    }

    pub fn with_beta_bounds(
        mu: Vec<T>,
        alpha: Vec<T>,
        beta: Vec<T>,
        bounds: BetaBounds,
    ) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::domain("GGD needs at least one dimension"));
        }
        check_len("GgdParams alpha", mu.len(), alpha.len())?;
        check_len("GgdParams beta", mu.len(), beta.len())?;
        if let Some(i) = mu.iter().position(|m| !m.is_finite()) {
            return Err(Error::domain(format!("mu[{i}] is not finite")));
        }
        if let Some(i) = alpha.iter().position(|a| !(a.is_finite() && *a > T::zero())) {
            return Err(Error::domain(format!(
                "alpha[{i}] = {} must be finite and > 0",
                alpha[i]
            )));
        }
        let (lo, hi) = (T::c(bounds.min), T::c(bounds.max));
        if let Some(i) = beta.iter().position(|b| !(*b >= lo && *b <= hi)) {
            return Err(Error::domain(format!(
                "beta[{i}] = {} outside [{}, {}]",
                beta[i], bounds.min, bounds.max
            )));
        }
        Ok(Self { mu, alpha, beta })
    }

    /// Same value in every dimension.
    pub fn isotropic(dim: usize, mu: T, alpha: T, beta: T) -> Result<Self> {
        Self::new(vec![mu; dim], vec![alpha; dim], vec![beta; dim])
    }

    /// Skips validation; the adapter heads guarantee the invariants.
    pub(crate) fn from_parts_unchecked(mu: Vec<T>, alpha: Vec<T>, beta: Vec<T>) -> Self {
        debug_assert!(mu.len() == alpha.len() && mu.len() == beta.len());
        Self { mu, alpha, beta }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>, Vec<T>) {
        (self.mu, self.alpha, self.beta)
    }

    fn lex_cmp(&self, other: &Self) -> Ordering {
        let a = self.mu.iter().chain(&self.alpha).chain(&self.beta);
        let b = other.mu.iter().chain(&other.alpha).chain(&other.beta);
        a.zip(b)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }
}

/// `Σ_i ln β_i − ln(2 α_i) − ln Γ(1/β_i) − (|μ_i − z_i| / α_i)^β_i`.
pub fn logpdf<T: Scalar>(z: &[T], params: &GgdParams<T>) -> Result<T> {
    check_len("ggd logpdf", params.dim(), z.len())?;
    let two = T::c(2.0);
    Ok(per_dim(z, params)
        .map(|(r, a, b)| b.ln() - (two * a).ln() - ln_gamma_pos(b.recip()) - r.powf(b))
        .sum())
}

/// Negative log-likelihood without the constant `D · ln 2`:
/// `Σ_i r_i^β_i − ln(β_i / α_i) + ln Γ(1/β_i)` with `r_i = |μ_i − z_i| / α_i`.
pub fn nll<T: Scalar>(z: &[T], params: &GgdParams<T>) -> Result<T> {
    check_len("ggd nll", params.dim(), z.len())?;
    Ok(per_dim(z, params)
        .map(|(r, a, b)| r.powf(b) - (b / a).ln() + ln_gamma_pos(b.recip()))
        .sum())
}

/// [`nll`] with `r^β` replaced by its first-order expansion about `r = 1`,
/// `1 − β + β r`, which removes `β` from the exponent.
pub fn nll_stable<T: Scalar>(z: &[T], params: &GgdParams<T>) -> Result<T> {
    check_len("ggd nll_stable", params.dim(), z.len())?;
    let one = T::one();
    Ok(per_dim(z, params)
        .map(|(r, a, b)| one - b + b * r - (b / a).ln() + ln_gamma_pos(b.recip()))
        .sum())
}

/// Per-dimension variance `α² Γ(3/β) / Γ(1/β)`.
pub fn variance<T: Scalar>(params: &GgdParams<T>) -> Vec<T> {
    params
        .alpha
        .iter()
        .zip(&params.beta)
        .map(|(&a, &b)| {
            let inv = b.recip();
            a * a * (ln_gamma_pos(T::c(3.0) * inv) - ln_gamma_pos(inv)).exp()
        })
        .collect()
}

/// One draw `μ + s α G^{1/β}` per dimension, `G ~ Gamma(1/β, 1)`, `s = ±1`.
pub fn sample<T: Scalar, R: Rng + ?Sized>(params: &GgdParams<T>, rng: &mut R) -> Vec<T> {
    (0..params.dim())
        .map(|i| {
            let (m, a, b) = (
                params.mu[i].as_f64(),
                params.alpha[i].as_f64(),
                params.beta[i].as_f64(),
            );
            T::c(m + a * draw_standard(b, rng))
        })
        .collect()
}

fn draw_standard<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(beta.recip(), 1.0).expect("shape is positive");
    let g: f64 = gamma.sample(rng);
    let magnitude = g.powf(beta.recip());
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Monte-Carlo estimate of `p(z_v = z_u)` for independent `z_v ~ pv`,
/// `z_u ~ pt`: a Gaussian-kernel density estimate of `z_v − z_u` at the
/// origin, taken per dimension and multiplied across dimensions.
///
/// The pair is put in a canonical order before drawing so the estimate is
/// exactly symmetric in its two arguments for a given generator state.
pub fn mc_match_likelihood<T: Scalar, R: Rng + ?Sized>(
    pv: &GgdParams<T>,
    pt: &GgdParams<T>,
    n_samples: usize,
    bandwidth: f64,
    rng: &mut R,
) -> Result<f64> {
    check_len("mc_match_likelihood", pv.dim(), pt.dim())?;
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::domain(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    if n_samples < 1000 {
        return Err(Error::domain(format!(
            "mc_match_likelihood needs at least 1000 samples, got {n_samples}"
        )));
    }
    let (first, second) = if pv.lex_cmp(pt) == Ordering::Greater {
        (pt, pv)
    } else {
        (pv, pt)
    };
    let d = pv.dim();
    let mut kernel_sums = vec![0.0_f64; d];
    for _ in 0..n_samples {
        let a = sample(first, rng);
        let b = sample(second, rng);
        for i in 0..d {
            let u = (a[i].as_f64() - b[i].as_f64()) / bandwidth;
            kernel_sums[i] += (-0.5 * u * u).exp();
        }
    }
    let norm = n_samples as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt();
    Ok(kernel_sums.iter().map(|s| s / norm).product())
}

/// `(r, α, β)` per dimension with `r = |μ − z| / α`.
fn per_dim<'a, T: Scalar>(
    z: &'a [T],
    params: &'a GgdParams<T>,
) -> impl Iterator<Item = (T, T, T)> + 'a {
    z.iter()
        .zip(&params.mu)
        .zip(params.alpha.iter().zip(&params.beta))
        .map(|((&z, &m), (&a, &b))| ((m - z).abs() / a, a, b))
}
