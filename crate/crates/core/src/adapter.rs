//! Per-modality probabilistic adapter.
//!
//! A two-layer rectifier trunk (`d_in → d_hidden → d_hidden`, dropout after
//! each activation) feeds three linear heads of width `d_in`:
//!
//! * `mu    = z + H_mu(h)` (residual, zero-initialised head),
//! * `alpha = floor + softplus(H_alpha(h))`,
//! * `beta  = clamp(beta_min + softplus(H_beta(h)), beta_min, beta_max)`.
//!
//! Gradients are computed by hand in [`AdapterNetwork::backward`].

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::ggd::{BetaBounds, GgdParams};
use crate::scalar::{sigmoid, softplus, softplus_inv, Scalar};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-4;

const MAGIC: &[u8; 8] = b"PVLMADPT";
const FORMAT_VERSION: u32 = 1;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected layer `y = W x + b`, `W` stored `d_out × d_in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weight: vec![T::zero(); d_in * d_out],
            bias: vec![T::zero(); d_out],
        }
    }

    fn uniform<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        // He-uniform bound for rectifier layers
        let bound = (6.0 / d_in as f64).sqrt();
        let weight = (0..d_in * d_out)
            .map(|_| T::c(rng.random_range(-bound..bound)))
            .collect();
        Self {
            d_in,
            d_out,
            weight,
            bias: vec![T::zero(); d_out],
        }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.weight
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>())
            .collect()
    }

    /// `grad += dy ⊗ x`, bias `+= dy`.
    fn accumulate(&mut self, x: &[T], dy: &[T]) {
        for ((row, gb), &d) in self
            .weight
            .chunks_exact_mut(self.d_in)
            .zip(self.bias.iter_mut())
            .zip(dy)
        {
            *gb += d;
            if d != T::zero() {
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
    }

    /// `dx += Wᵀ dy`.
    fn back_input(&self, dy: &[T], dx: &mut [T]) {
        for (row, &d) in self.weight.chunks_exact(self.d_in).zip(dy) {
            if d != T::zero() {
                for (o, &w) in dx.iter_mut().zip(row) {
                    *o += w * d;
                }
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Every trainable tensor of an adapter; also the shape of its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub trunk1: Dense<T>,
    pub trunk2: Dense<T>,
    pub head_mu: Dense<T>,
    pub head_alpha: Dense<T>,
    pub head_beta: Dense<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(d_in: usize, d_hidden: usize) -> Self {
        Self {
            trunk1: Dense::zeros(d_in, d_hidden),
            trunk2: Dense::zeros(d_hidden, d_hidden),
            head_mu: Dense::zeros(d_hidden, d_in),
            head_alpha: Dense::zeros(d_hidden, d_in),
            head_beta: Dense::zeros(d_hidden, d_in),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.trunk1.d_in, self.trunk1.d_out)
    }

    fn layers(&self) -> [&Dense<T>; 5] {
        [
            &self.trunk1,
            &self.trunk2,
            &self.head_mu,
            &self.head_alpha,
            &self.head_beta,
        ]
    }

    /// Tensors in file order: W then b for trunk1, trunk2, mu, alpha, beta.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        [
            &mut self.trunk1,
            &mut self.trunk2,
            &mut self.head_mu,
            &mut self.head_alpha,
            &mut self.head_beta,
        ]
        .into_iter()
        .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
        .collect()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }
}

/// Output non-linearity limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadBounds {
    pub alpha_floor: f64,
    pub beta: BetaBounds,
}

impl Default for HeadBounds {
    fn default() -> Self {
        Self {
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            beta: BetaBounds::default(),
        }
    }
}

/// The probabilistic adapter for one modality.
#[derive(Debug, Clone)]
pub struct AdapterNetwork<T> {
    d_in: usize,
    d_hidden: usize,
    dropout_p: f64,
    bounds: HeadBounds,
    params: Parameters<T>,
    id: u64,
    generation: u64,
}

/// Equality of the architecture and every parameter value.
impl<T: Scalar> PartialEq for AdapterNetwork<T> {
    fn eq(&self, other: &Self) -> bool {
        self.d_in == other.d_in
            && self.d_hidden == other.d_hidden
            && self.dropout_p.to_bits() == other.dropout_p.to_bits()
            && self.bounds == other.bounds
            && self.params == other.params
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    net_id: u64,
    generation: u64,
    input: Vec<T>,
    pre1: Vec<T>,
    act1: Vec<T>,
    mask1: Option<Vec<T>>,
    pre2: Vec<T>,
    act2: Vec<T>,
    mask2: Option<Vec<T>>,
    pre_alpha: Vec<T>,
    pre_beta: Vec<T>,
    beta_unclamped: Vec<T>,
}

/// Predicted distribution plus the cache of the pass that produced it.
#[derive(Debug, Clone)]
pub struct AdapterOutput<T> {
    pub params: GgdParams<T>,
    pub cache: ForwardCache<T>,
}

impl<T> AdapterOutput<T> {
    pub fn mu(&self) -> &[T]
    where
        T: Scalar,
    {
        self.params.mu()
    }
}

impl<T: Scalar> AdapterNetwork<T> {
    /// Trunk drawn He-uniform from `seed`; heads zeroed with biases chosen so
    /// that the fresh network predicts `mu = z`, `alpha = 1`, `beta = 2`.
    pub fn init(d_in: usize, d_hidden: usize, dropout_p: f64, seed: u64) -> Result<Self> {
        Self::init_with_bounds(d_in, d_hidden, dropout_p, seed, HeadBounds::default())
    }

    pub fn init_with_bounds(
        d_in: usize,
        d_hidden: usize,
        dropout_p: f64,
        seed: u64,
        bounds: HeadBounds,
    ) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 {
            return Err(Error::domain("adapter dimensions must be >= 1"));
        }
        check_dropout(dropout_p)?;
        validate_bounds(&bounds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk1 = Dense::uniform(d_in, d_hidden, &mut rng);
        let trunk2 = Dense::uniform(d_hidden, d_hidden, &mut rng);
        let mut head_alpha = Dense::zeros(d_hidden, d_in);
        let mut head_beta = Dense::zeros(d_hidden, d_in);
        let alpha0 = T::c(1.0 - bounds.alpha_floor);
        let beta0 = T::c(2.0_f64.clamp(bounds.beta.min, bounds.beta.max) - bounds.beta.min);
        if alpha0 > T::zero() {
            head_alpha.bias.fill(softplus_inv(alpha0));
        }
        if beta0 > T::zero() {
            head_beta.bias.fill(softplus_inv(beta0));
        }
        Ok(Self {
            d_in,
            d_hidden,
            dropout_p,
            bounds,
            params: Parameters {
                trunk1,
                trunk2,
                head_mu: Dense::zeros(d_hidden, d_in),
                head_alpha,
                head_beta,
            },
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_hidden(&self) -> usize {
        self.d_hidden
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn bounds(&self) -> HeadBounds {
        self.bounds
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        self.generation += 1;
        &mut self.params
    }

    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        check_dropout(p)?;
        self.dropout_p = p;
        self.generation += 1;
        Ok(())
    }

    /// Deterministic pass with dropout disabled.
    pub fn forward(&self, z: &[T]) -> Result<AdapterOutput<T>> {
        self.forward_impl(z, None)
    }

    /// Pass with dropout masks drawn from `rng` (no draws when `p = 0`).
    pub fn forward_dropout(&self, z: &[T], rng: &mut dyn RngCore) -> Result<AdapterOutput<T>> {
        self.forward_impl(z, Some(rng))
    }

    /// Forward pass, dropout enabled iff `dropout_on`.
    pub fn forward_with(
        &self,
        z: &[T],
        dropout_on: bool,
        rng: &mut dyn RngCore,
    ) -> Result<AdapterOutput<T>> {
        self.forward_impl(z, if dropout_on { Some(rng) } else { None })
    }

    fn forward_impl(&self, z: &[T], mut rng: Option<&mut dyn RngCore>) -> Result<AdapterOutput<T>> {
        check_len("adapter input", self.d_in, z.len())?;
        let p = &self.params;

        let pre1 = p.trunk1.apply(z);
        let mask1 = rng.as_deref_mut().and_then(|r| self.draw_mask(r));
        let act1 = rectify(&pre1, mask1.as_deref());
        let pre2 = p.trunk2.apply(&act1);
        let mask2 = rng.as_deref_mut().and_then(|r| self.draw_mask(r));
        let act2 = rectify(&pre2, mask2.as_deref());

        let mu: Vec<T> = p
            .head_mu
            .apply(&act2)
            .into_iter()
            .zip(z)
            .map(|(h, &x)| x + h)
            .collect();
        let pre_alpha = p.head_alpha.apply(&act2);
        let pre_beta = p.head_beta.apply(&act2);
        let floor = T::c(self.bounds.alpha_floor);
        let (bmin, bmax) = (T::c(self.bounds.beta.min), T::c(self.bounds.beta.max));
        let alpha = pre_alpha.iter().map(|&a| floor + softplus(a)).collect();
        let beta_unclamped: Vec<T> = pre_beta.iter().map(|&b| bmin + softplus(b)).collect();
        let beta = beta_unclamped.iter().map(|&b| b.max(bmin).min(bmax)).collect();

        Ok(AdapterOutput {
            params: GgdParams::from_parts_unchecked(mu, alpha, beta),
            cache: ForwardCache {
                net_id: self.id,
                generation: self.generation,
                input: z.to_vec(),
                pre1,
                act1,
                mask1,
                pre2,
                act2,
                mask2,
                pre_alpha,
                pre_beta,
                beta_unclamped,
            },
        })
    }

    fn draw_mask(&self, rng: &mut dyn RngCore) -> Option<Vec<T>> {
        if self.dropout_p == 0.0 {
            return None;
        }
        let keep = T::c(1.0 / (1.0 - self.dropout_p));
        Some(
            (0..self.d_hidden)
                .map(|_| {
                    if rng.random::<f64>() < self.dropout_p {
                        T::zero()
                    } else {
                        keep
                    }
                })
                .collect(),
        )
    }

    /// Gradients of a scalar loss given its partials w.r.t. the outputs.
    pub fn backward(
        &self,
        z: &[T],
        grad_mu: &[T],
        grad_alpha: &[T],
        grad_beta: &[T],
        cache: &ForwardCache<T>,
    ) -> Result<Parameters<T>> {
        let mut grads = self.params.zeros_like();
        self.backward_into(z, grad_mu, grad_alpha, grad_beta, cache, &mut grads)?;
        Ok(grads)
    }

    /// As [`backward`](Self::backward) but adds into `grads`.
    pub fn backward_into(
        &self,
        z: &[T],
        grad_mu: &[T],
        grad_alpha: &[T],
        grad_beta: &[T],
        cache: &ForwardCache<T>,
        grads: &mut Parameters<T>,
    ) -> Result<()> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(Error::StaleCache(
                "forward cache was produced by a different network state".into(),
            ));
        }
        if cache.input.as_slice() != z {
            return Err(Error::StaleCache(
                "forward cache was produced for a different input".into(),
            ));
        }
        check_len("grad_mu", self.d_in, grad_mu.len())?;
        check_len("grad_alpha", self.d_in, grad_alpha.len())?;
        check_len("grad_beta", self.d_in, grad_beta.len())?;
        check_len("gradient buffer", self.params.num_scalars(), grads.num_scalars())?;
        let p = &self.params;
        let bmax = T::c(self.bounds.beta.max);

        let d_alpha: Vec<T> = grad_alpha
            .iter()
            .zip(&cache.pre_alpha)
            .map(|(&g, &a)| g * sigmoid(a))
            .collect();
        let d_beta: Vec<T> = grad_beta
            .iter()
            .zip(&cache.pre_beta)
            .zip(&cache.beta_unclamped)
            .map(|((&g, &b), &raw)| if raw > bmax { T::zero() } else { g * sigmoid(b) })
            .collect();

        grads.head_mu.accumulate(&cache.act2, grad_mu);
        grads.head_alpha.accumulate(&cache.act2, &d_alpha);
        grads.head_beta.accumulate(&cache.act2, &d_beta);

        let mut d_act2 = vec![T::zero(); self.d_hidden];
        p.head_mu.back_input(grad_mu, &mut d_act2);
        p.head_alpha.back_input(&d_alpha, &mut d_act2);
        p.head_beta.back_input(&d_beta, &mut d_act2);
        let d_pre2 = rectify_back(&d_act2, &cache.pre2, cache.mask2.as_deref());
        grads.trunk2.accumulate(&cache.act1, &d_pre2);

        let mut d_act1 = vec![T::zero(); self.d_hidden];
        p.trunk2.back_input(&d_pre2, &mut d_act1);
        let d_pre1 = rectify_back(&d_act1, &cache.pre1, cache.mask1.as_deref());
        grads.trunk1.accumulate(z, &d_pre1);
        Ok(())
    }

    /// Little-endian `PVLMADPT` v1 encoding; every value stored as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_hidden as u32).to_le_bytes());
        out.extend_from_slice(&self.dropout_p.to_le_bytes());
        for t in self.params.tensors() {
            for v in t {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). Head bounds are not stored
    /// in the file and come back as [`HeadBounds::default`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::format(0, "bad magic, expected PVLMADPT"));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(8, format!("unsupported version {version}")));
        }
        let d_in = r.u32("d_in")? as usize;
        let d_hidden = r.u32("d_hidden")? as usize;
        if d_in == 0 || d_hidden == 0 {
            return Err(Error::format(12, "zero dimension in header"));
        }
        let dropout_at = r.pos;
        let dropout_p = r.f64("dropout_p")?;
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::format(dropout_at, format!("dropout_p {dropout_p} not in [0, 1)")));
        }
        let mut params = Parameters::zeros(d_in, d_hidden);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                let at = r.pos;
                let x = r.f64("parameter tensor")?;
                if !x.is_finite() {
                    return Err(Error::format(at, "non-finite parameter"));
                }
                *v = T::c(x);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos, "trailing bytes after parameter tensors"));
        }
        Ok(Self {
            d_in,
            d_hidden,
            dropout_p,
            bounds: HeadBounds::default(),
            params,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

/// Convex combination `Σ w_i · net_i` of every parameter tensor.
///
/// Dropout probability is combined with the same weights; head bounds are
/// taken from the first network.
pub fn interpolate_adapters<T: Scalar>(
    nets: &[&AdapterNetwork<T>],
    weights: &[f64],
) -> Result<AdapterNetwork<T>> {
    let first = *nets
        .first()
        .ok_or_else(|| Error::domain("interpolation needs at least one network"))?;
    check_len("interpolation weights", nets.len(), weights.len())?;
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::domain(format!("interpolation weight {w} is negative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("interpolation weights sum to {total}, not 1")));
    }
    for n in nets {
        if n.d_in != first.d_in || n.d_hidden != first.d_hidden {
            return Err(Error::domain(format!(
                "cannot interpolate ({}, {}) with ({}, {})",
                first.d_in, first.d_hidden, n.d_in, n.d_hidden
            )));
        }
    }
    let mut params = first.params.zeros_like();
    for (net, &w) in nets.iter().zip(weights) {
        let w = T::c(w);
        for (dst, src) in params.tensors_mut().into_iter().zip(net.params.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    let dropout_p = nets
        .iter()
        .zip(weights)
        .map(|(n, w)| w * n.dropout_p)
        .sum::<f64>()
        .clamp(0.0, 1.0 - f64::EPSILON);
    Ok(AdapterNetwork {
        d_in: first.d_in,
        d_hidden: first.d_hidden,
        dropout_p,
        bounds: first.bounds,
        params,
        id: fresh_id(),
        generation: 0,
    })
}

fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("dropout probability {p} not in [0, 1)")))
    }
}

fn validate_bounds(b: &HeadBounds) -> Result<()> {
    if !(b.alpha_floor > 0.0 && b.beta.min > 0.0 && b.beta.min < b.beta.max) {
        return Err(Error::domain(format!("invalid head bounds {b:?}")));
    }
    Ok(())
}

fn rectify<T: Scalar>(pre: &[T], mask: Option<&[T]>) -> Vec<T> {
    match mask {
        Some(m) => pre.iter().zip(m).map(|(&x, &k)| x.max(T::zero()) * k).collect(),
        None => pre.iter().map(|&x| x.max(T::zero())).collect(),
    }
}

fn rectify_back<T: Scalar>(d_act: &[T], pre: &[T], mask: Option<&[T]>) -> Vec<T> {
    let gate = |i: usize| if pre[i] > T::zero() { T::one() } else { T::zero() };
    match mask {
        Some(m) => (0..pre.len()).map(|i| d_act[i] * gate(i) * m[i]).collect(),
        None => (0..pre.len()).map(|i| d_act[i] * gate(i)).collect(),
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Random network with non-trivial heads so every path carries gradient.
    pub(crate) fn scrambled(d_in: usize, d_hidden: usize, p: f64, seed: u64) -> AdapterNetwork<f64> {
        let mut net = AdapterNetwork::init(d_in, d_hidden, p, seed).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        for t in net.params_mut().tensors_mut() {
            for v in t.iter_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
        net
    }

    #[test]
    fn fresh_network_is_identity_with_unit_scale() {
        let net = AdapterNetwork::<f64>::init(5, 16, 0.1, 9).unwrap();
        let z = [0.3, -0.7, 1.2, 0.0, -2.5];
        let out = net.forward(&z).unwrap();
        assert_eq!(out.params.mu(), &z);
        for (&a, &b) in out.params.alpha().iter().zip(out.params.beta()) {
            assert!((a - 1.0).abs() < 1e-6);
            assert!((b - 2.0).abs() < 1e-6);
        }
        let two = AdapterNetwork::<f64>::init(2, 8, 0.1, 1).unwrap();
        assert_eq!(two.forward(&[0.3, -0.7]).unwrap().params.mu(), &[0.3, -0.7]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = AdapterNetwork::<f64>::init(7, 12, 0.1, 42).unwrap();
        let b = AdapterNetwork::<f64>::init(7, 12, 0.1, 42).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = AdapterNetwork::<f64>::init(7, 12, 0.1, 43).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(AdapterNetwork::<f64>::init(0, 4, 0.1, 0).is_err());
        assert!(AdapterNetwork::<f64>::init(4, 0, 0.1, 0).is_err());
        assert!(AdapterNetwork::<f64>::init(4, 4, 1.0, 0).is_err());
        assert!(AdapterNetwork::<f64>::init(4, 4, -0.1, 0).is_err());
    }

    #[test]
    fn zero_dropout_matches_deterministic_pass() {
        let net = scrambled(4, 10, 0.0, 3);
        let z = [0.1, 0.2, -0.3, 0.4];
        let off = net.forward(&z).unwrap();
        let on = net.forward_dropout(&z, &mut rng(1)).unwrap();
        assert_eq!(off.params, on.params);
    }

    #[test]
    fn dropout_pass_is_reproducible() {
        let net = scrambled(4, 32, 0.3, 3);
        let z = [0.1, 0.2, -0.3, 0.4];
        let a = net.forward_dropout(&z, &mut rng(8)).unwrap();
        let b = net.forward_dropout(&z, &mut rng(8)).unwrap();
        assert_eq!(a.params, b.params);
        let c = net.forward_dropout(&z, &mut rng(9)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn shape_errors() {
        let net = AdapterNetwork::<f64>::init(3, 4, 0.1, 0).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradient() {
        let net = scrambled(4, 8, 0.2, 5);
        let z = [0.5, -0.5, 0.25, 1.0];
        let out = net.forward_dropout(&z, &mut rng(2)).unwrap();
        let zeros = [0.0; 4];
        let g = net.backward(&z, &zeros, &zeros, &zeros, &out.cache).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = scrambled(3, 6, 0.1, 5);
        let z = [0.1, 0.2, 0.3];
        let out = net.forward(&z).unwrap();
        let g = [1.0; 3];
        assert!(net.backward(&[0.1, 0.2, 0.4], &g, &g, &g, &out.cache).is_err());
        let other = scrambled(3, 6, 0.1, 5);
        assert!(matches!(
            other.backward(&z, &g, &g, &g, &out.cache),
            Err(Error::StaleCache(_))
        ));
        net.params_mut().head_mu.bias[0] += 0.1;
        assert!(net.backward(&z, &g, &g, &g, &out.cache).is_err());
    }

    #[test]
    fn clamped_beta_unit_has_zero_gradient() {
        let mut net = scrambled(3, 6, 0.0, 5);
        // push unit 1 deep into the upper clamp
        net.params_mut().head_beta.bias[1] = 50.0;
        let z = [0.1, -0.2, 0.3];
        let out = net.forward(&z).unwrap();
        assert_eq!(out.params.beta()[1], 10.0);
        let zero = [0.0; 3];
        let gb = [0.0, 1.0, 0.0];
        let g = net.backward(&z, &zero, &zero, &gb, &out.cache).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn outputs_respect_distribution_invariants_for_extreme_weights() {
        let mut net = scrambled(4, 8, 0.1, 1);
        for t in net.params_mut().tensors_mut() {
            for (i, v) in t.iter_mut().enumerate() {
                *v *= if i % 2 == 0 { 300.0 } else { -300.0 };
            }
        }
        for z in [[1.0, -1.0, 5.0, 0.0], [-50.0, 20.0, 3.0, 1e3]] {
            let out = net.forward(&z).unwrap();
            let (mu, a, b) = out.params.clone().into_parts();
            assert!(GgdParams::new(mu, a, b).is_ok());
        }
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let net = scrambled(4, 6, 0.15, 12);
        let bytes = net.to_bytes();
        assert_eq!(bytes.len(), 28 + 8 * net.params().num_scalars());
        let back = AdapterNetwork::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(AdapterNetwork::<f64>::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(AdapterNetwork::<f64>::from_bytes(&bad), Err(Error::Format { offset: 8, .. })));
        let cut = &bytes[..bytes.len() - 3];
        match AdapterNetwork::<f64>::from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() - 8),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(AdapterNetwork::<f64>::from_bytes(&long).is_err());
    }

    #[test]
    fn loaded_network_enforces_its_input_width() {
        let net = AdapterNetwork::<f64>::init(512, 8, 0.1, 0).unwrap();
        let back = AdapterNetwork::<f64>::from_bytes(&net.to_bytes()).unwrap();
        assert!(back.forward(&vec![0.01; 512]).is_ok());
        assert!(matches!(back.forward(&vec![0.01; 256]), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_precision_network_serializes_as_f64() {
        let net = AdapterNetwork::<f32>::init(3, 4, 0.1, 2).unwrap();
        let back = AdapterNetwork::<f32>::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(back, net);
        let wide = AdapterNetwork::<f64>::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(wide.d_in(), 3);
    }

    #[test]
    fn interpolation_examples() {
        let a = scrambled(3, 5, 0.1, 1);
        let b = scrambled(3, 5, 0.1, 2);
        let c = scrambled(3, 5, 0.1, 3);
        let first = interpolate_adapters(&[&a, &b, &c], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(first, a);
        let same = interpolate_adapters(&[&a, &a], &[0.5, 0.5]).unwrap();
        assert_eq!(same, a);
        let mid = interpolate_adapters(&[&a, &b], &[0.5, 0.5]).unwrap();
        for ((m, x), y) in mid.params().tensors().iter().zip(a.params().tensors()).zip(b.params().tensors()) {
            for ((&m, &x), &y) in m.iter().zip(x).zip(y) {
                assert!((m - (x + y) / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interpolation_rejects_bad_inputs() {
        let a = scrambled(3, 5, 0.1, 1);
        let b = scrambled(4, 5, 0.1, 2);
        assert!(interpolate_adapters(&[&a, &b], &[0.5, 0.5]).is_err());
        assert!(interpolate_adapters(&[&a, &a], &[0.6, 0.6]).is_err());
        assert!(interpolate_adapters(&[&a, &a], &[1.5, -0.5]).is_err());
        assert!(interpolate_adapters(&[&a], &[0.5, 0.5]).is_err());
        assert!(interpolate_adapters::<f64>(&[], &[]).is_err());
    }
}
