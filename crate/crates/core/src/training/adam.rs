use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_shapes(lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = lens
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        Self { m, v }
    }
}

/// One bias-corrected Adam update at step `t >= 1`.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    t: u64,
    hyper: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::domain("Adam step count starts at 1"));
    }
    check_len("adam grads", params.len(), grads.len())?;
    check_len("adam first moments", params.len(), state.m.len())?;
    check_len("adam second moments", params.len(), state.v.len())?;
    for i in 0..params.len() {
        check_len("adam grad tensor", params[i].len(), grads[i].len())?;
        check_len("adam moment tensor", params[i].len(), state.m[i].len())?;
        check_len("adam moment tensor", params[i].len(), state.v[i].len())?;
    }
    let (b1, b2) = (T::c(hyper.beta1), T::c(hyper.beta2));
    let (one, lr, eps) = (T::one(), T::c(hyper.learning_rate), T::c(hyper.eps));
    let c1 = one - T::c(hyper.beta1.powf(t as f64));
    let c2 = one - T::c(hyper.beta2.powf(t as f64));
    for (k, theta) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (j, p) in theta.iter_mut().enumerate() {
            let g = grads[k][j];
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam bound to a fixed tensor layout, tracking its own step count.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, lens: impl IntoIterator<Item = usize>) -> Self {
        Self {
            config,
            state: AdamState::for_shapes(lens),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        self.t += 1;
        adam_step(params, grads, &mut self.state, self.t, &self.config)
    }
}
