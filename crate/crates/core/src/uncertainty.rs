//! Aleatoric (closed-form GGD variance), epistemic (Monte-Carlo dropout)
//! and total predictive uncertainty.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapter::AdapterNetwork;
use crate::data::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ggd::{self, GgdParams};
use crate::scalar::Scalar;

pub const DEFAULT_PASSES: usize = 10;

/// Which forward pass(es) the aleatoric term is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AleatoricSource {
    /// A single pass with dropout disabled.
    #[default]
    DeterministicPass,
    /// The mean of the per-pass variances over the dropout passes.
    DropoutAverage,
}

/// Vector the scalar summary averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalarSource {
    #[default]
    Total,
    Aleatoric,
    Epistemic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyConfig {
    pub m_passes: usize,
    pub aleatoric: AleatoricSource,
    pub scalar: ScalarSource,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            m_passes: DEFAULT_PASSES,
            aleatoric: AleatoricSource::default(),
            scalar: ScalarSource::default(),
        }
    }
}

impl UncertaintyConfig {
    pub fn with_passes(m_passes: usize) -> Self {
        Self {
            m_passes,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport<T> {
    pub aleatoric: Vec<T>,
    pub epistemic: Vec<T>,
    /// `aleatoric + epistemic`, elementwise.
    pub total: Vec<T>,
    /// Mean over dimensions of the vector selected by [`ScalarSource`].
    pub scalar: T,
    pub m_passes: usize,
}

impl<T: Scalar> UncertaintyReport<T> {
    pub fn scalar_of(&self, source: ScalarSource) -> T {
        mean(match source {
            ScalarSource::Total => &self.total,
            ScalarSource::Aleatoric => &self.aleatoric,
            ScalarSource::Epistemic => &self.epistemic,
        })
    }
}

/// Closed-form per-dimension variance of the predicted distribution.
pub fn aleatoric<T: Scalar>(out: &GgdParams<T>) -> Vec<T> {
    ggd::variance(out)
}

/// Population variance (divisor `m`) of `m` dropout-enabled mean predictions.
pub fn epistemic<T: Scalar>(
    net: &AdapterNetwork<T>,
    z: &[T],
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<T>> {
    check_passes(m)?;
    let passes = (0..m)
        .map(|_| net.forward_dropout(z, rng).map(|o| o.params.mu().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(population_variance(&passes))
}

/// Total uncertainty with the default configuration and `m` passes.
pub fn total_uncertainty<T: Scalar>(
    net: &AdapterNetwork<T>,
    z: &[T],
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<UncertaintyReport<T>> {
    total_uncertainty_with(net, z, &UncertaintyConfig::with_passes(m), rng)
}

pub fn total_uncertainty_with<T: Scalar>(
    net: &AdapterNetwork<T>,
    z: &[T],
    cfg: &UncertaintyConfig,
    rng: &mut dyn RngCore,
) -> Result<UncertaintyReport<T>> {
    check_passes(cfg.m_passes)?;
    let mut mus = Vec::with_capacity(cfg.m_passes);
    let mut variances = Vec::new();
    for _ in 0..cfg.m_passes {
        let out = net.forward_dropout(z, rng)?;
        if cfg.aleatoric == AleatoricSource::DropoutAverage {
            variances.push(aleatoric(&out.params));
        }
        mus.push(out.params.mu().to_vec());
    }
    let epistemic = population_variance(&mus);
    let aleatoric = match cfg.aleatoric {
        AleatoricSource::DeterministicPass => aleatoric(&net.forward(z)?.params),
        AleatoricSource::DropoutAverage => column_mean(&variances),
    };
    let total: Vec<T> = aleatoric.iter().zip(&epistemic).map(|(&a, &e)| a + e).collect();
    let mut report = UncertaintyReport {
        aleatoric,
        epistemic,
        total,
        scalar: T::zero(),
        m_passes: cfg.m_passes,
    };
    report.scalar = report.scalar_of(cfg.scalar);
    Ok(report)
}

/// Reports for every row of `store`. Row `i` uses its own generator
/// (seed `seed`, stream `i`), so results do not depend on evaluation order.
pub fn score_store<T: Scalar>(
    net: &AdapterNetwork<T>,
    store: &EmbeddingStore,
    cfg: &UncertaintyConfig,
    seed: u64,
) -> Result<Vec<UncertaintyReport<T>>> {
    if store.dim() != net.d_in() {
        return Err(Error::Shape {
            context: "adapter input vs. embedding store",
            expected: net.d_in(),
            got: store.dim(),
        });
    }
    store
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let z: Vec<T> = row.iter().map(|&v| T::c(v)).collect();
            let mut rng = row_rng(seed, i);
            total_uncertainty_with(net, &z, cfg, &mut rng)
        })
        .collect()
}

/// Per-row scalar uncertainty as `f64`.
pub fn scalar_scores<T: Scalar>(
    net: &AdapterNetwork<T>,
    store: &EmbeddingStore,
    cfg: &UncertaintyConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(score_store(net, store, cfg, seed)?
        .into_iter()
        .map(|r| r.scalar.as_f64())
        .collect())
}

pub(crate) fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn check_passes(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::domain(format!("need at least 2 dropout passes, got {m}")));
    }
    Ok(())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::c(v.len() as f64)
}

fn column_mean<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let n = T::c(rows.len() as f64);
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<T>() / n)
        .collect()
}

/// `(1/M) Σ_m (x_m − x̄)²` per column, shifted by the first row so that
/// identical rows give exactly zero.
pub fn population_variance<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let n = T::c(rows.len() as f64);
    (0..rows[0].len())
        .map(|j| {
            let origin = rows[0][j];
            let mean = rows.iter().map(|r| r[j] - origin).sum::<T>() / n;
            rows.iter()
                .map(|r| {
                    let d = r[j] - origin - mean;
                    d * d
                })
                .sum::<T>()
                / n
        })
        .collect()
}
