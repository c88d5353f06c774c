use crate::error::{check_len, Result};
use crate::ggd::GgdParams;
use crate::scalar::Scalar;
use crate::special::{digamma_pos, ln_gamma_pos};

/// Partials of a scalar loss w.r.t. one adapter's `(mu, alpha, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<T> {
    pub mu: Vec<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> OutputGrads<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            mu: vec![T::zero(); d],
            alpha: vec![T::zero(); d],
            beta: vec![T::zero(); d],
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in self.mu.iter_mut().chain(&mut self.alpha).chain(&mut self.beta) {
            *v *= s;
        }
    }
}

/// Gradients for the vision and text outputs of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads<T> {
    pub vision: OutputGrads<T>,
    pub text: OutputGrads<T>,
}

/// Value of every term of the joint objective for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub rec_v: T,
    pub rec_t: T,
    pub cross: T,
    pub total: T,
}

/// NLL of `target` under `out`, adding `weight · ∂/∂(mu, alpha, beta)` to `grads`.
fn accumulate_nll<T: Scalar>(
    out: &GgdParams<T>,
    target: &[T],
    stable: bool,
    weight: T,
    grads: &mut OutputGrads<T>,
) -> Result<T> {
    check_len("loss target", out.dim(), target.len())?;
    check_len("loss gradient buffer", out.dim(), grads.mu.len())?;
    let one = T::one();
    let mut value = T::zero();
    for i in 0..out.dim() {
        let (m, a, b) = (out.mu()[i], out.alpha()[i], out.beta()[i]);
        let diff = m - target[i];
        let sign = if diff > T::zero() {
            one
        } else if diff < T::zero() {
            -one
        } else {
            T::zero()
        };
        let r = diff.abs() / a;
        let inv_b = b.recip();
        // d/dβ [ln Γ(1/β) − ln β]
        let shape_grad = -digamma_pos(inv_b) * inv_b * inv_b - inv_b;
        let common = -(b / a).ln() + ln_gamma_pos(inv_b);
        let (term, g_mu, g_alpha, g_beta) = if stable {
            (
                one - b + b * r + common,
                b * sign / a,
                (one - b * r) / a,
                r - one + shape_grad,
            )
        } else {
            let rb = r.powf(b);
            let rb1 = if r > T::zero() { b * r.powf(b - one) } else { T::zero() };
            let log_term = if r > T::zero() { rb * r.ln() } else { T::zero() };
            (
                rb + common,
                rb1 * sign / a,
                (one - b * rb) / a,
                log_term + shape_grad,
            )
        };
        value += term;
        grads.mu[i] += weight * g_mu;
        grads.alpha[i] += weight * g_alpha;
        grads.beta[i] += weight * g_beta;
    }
    Ok(value)
}

/// Intra-modal reconstruction loss: NLL (exact or Taylor-stabilized) of the
/// frozen embedding under the adapter's own prediction.
pub fn loss_rec<T: Scalar>(
    out: &GgdParams<T>,
    z_target: &[T],
    stable: bool,
) -> Result<(T, OutputGrads<T>)> {
    let mut g = OutputGrads::zeros(out.dim());
    let v = accumulate_nll(out, z_target, stable, T::one(), &mut g)?;
    Ok((v, g))
}

/// Cross-modal loss: NLL of `z_t` under the vision prediction plus NLL of
/// `z_v` under the text prediction.
pub fn loss_cross<T: Scalar>(
    out_v: &GgdParams<T>,
    z_t: &[T],
    out_t: &GgdParams<T>,
    z_v: &[T],
    stable: bool,
) -> Result<(T, PairGrads<T>)> {
    check_len("loss_cross", out_v.dim(), out_t.dim())?;
    let mut grads = PairGrads {
        vision: OutputGrads::zeros(out_v.dim()),
        text: OutputGrads::zeros(out_t.dim()),
    };
    let a = accumulate_nll(out_v, z_t, stable, T::one(), &mut grads.vision)?;
    let b = accumulate_nll(out_t, z_v, stable, T::one(), &mut grads.text)?;
    Ok((a + b, grads))
}

/// `L_rec^V + L_rec^T + λ · L_cross` for one matched pair.
pub fn loss_total<T: Scalar>(
    out_v: &GgdParams<T>,
    z_v: &[T],
    out_t: &GgdParams<T>,
    z_t: &[T],
    lambda_cross: T,
    stable: bool,
) -> Result<(LossTerms<T>, PairGrads<T>)> {
    check_len("loss_total", out_v.dim(), out_t.dim())?;
    let d = out_v.dim();
    let mut grads = PairGrads {
        vision: OutputGrads::zeros(d),
        text: OutputGrads::zeros(d),
    };
    let one = T::one();
    let rec_v = accumulate_nll(out_v, z_v, stable, one, &mut grads.vision)?;
    let rec_t = accumulate_nll(out_t, z_t, stable, one, &mut grads.text)?;
    let cross = accumulate_nll(out_v, z_t, stable, lambda_cross, &mut grads.vision)?
        + accumulate_nll(out_t, z_v, stable, lambda_cross, &mut grads.text)?;
    Ok((
        LossTerms {
            rec_v,
            rec_t,
            cross,
            total: rec_v + rec_t + lambda_cross * cross,
        },
        grads,
    ))
}
