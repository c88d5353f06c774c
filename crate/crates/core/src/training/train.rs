use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::loss::loss_total;
use crate::adapter::{AdapterNetwork, Parameters, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use crate::data::{CorrespondenceMap, EmbeddingStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda_cross: f64,
    pub use_stable_nll: bool,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub d_hidden: usize,
    pub dropout_p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 64,
            lambda_cross: 1.0,
            use_stable_nll: true,
            seed: 0,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            d_hidden: DEFAULT_HIDDEN,
            dropout_p: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be >= 1"));
        }
        if !(self.lambda_cross.is_finite() && self.lambda_cross >= 0.0) {
            return Err(Error::domain("lambda_cross must be >= 0"));
        }
        if self.d_hidden == 0 {
            return Err(Error::domain("d_hidden must be >= 1"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Positive image–caption pairs over two embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset<T> {
    d: usize,
    images: Vec<T>,
    captions: Vec<T>,
    pairs: Vec<(usize, usize)>,
}

impl<T: Scalar> PairedDataset<T> {
    /// One example per ground-truth edge.
    pub fn from_stores(
        images: &EmbeddingStore,
        captions: &EmbeddingStore,
        map: &CorrespondenceMap,
    ) -> Result<Self> {
        if images.dim() != captions.dim() {
            return Err(Error::Shape {
                context: "image/caption embedding width",
                expected: images.dim(),
                got: captions.dim(),
            });
        }
        let convert = |s: &EmbeddingStore| s.data().iter().map(|&v| T::c(v)).collect();
        Ok(Self {
            d: images.dim(),
            images: convert(images),
            captions: convert(captions),
            pairs: map.index_pairs(images, captions)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn image(&self, i: usize) -> &[T] {
        &self.images[i * self.d..(i + 1) * self.d]
    }

    pub fn caption(&self, j: usize) -> &[T] {
        &self.captions[j * self.d..(j + 1) * self.d]
    }

    /// Keeps only the pairs whose image row satisfies `keep`.
    pub fn filter_images(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            pairs: self.pairs.iter().copied().filter(|&(i, _)| keep(i)).collect(),
            ..self.clone()
        }
    }
}

/// Epoch means of each loss term over all pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_rec_v: f64,
    pub loss_rec_t: f64,
    pub loss_cross: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,loss_rec_v,loss_rec_t,loss_cross,loss_total`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_rec_v,loss_rec_t,loss_cross,loss_total\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.epoch, r.loss_rec_v, r.loss_rec_t, r.loss_cross, r.loss_total
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPair<T> {
    pub vision: AdapterNetwork<T>,
    pub text: AdapterNetwork<T>,
    pub history: TrainHistory,
}

/// Jointly fits the vision and text adapters on shuffled mini-batches of
/// positive pairs, minimizing `L_rec^V + L_rec^T + λ L_cross` with dropout on.
pub fn train<T: Scalar>(data: &PairedDataset<T>, cfg: &TrainConfig) -> Result<TrainedPair<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("training set has no pairs"));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (seed_v, seed_t) = (seeder.random::<u64>(), seeder.random::<u64>());
    let mut vision = AdapterNetwork::init(data.d, cfg.d_hidden, cfg.dropout_p, seed_v)?;
    let mut text = AdapterNetwork::init(data.d, cfg.d_hidden, cfg.dropout_p, seed_t)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let lens = |n: &AdapterNetwork<T>| n.params().tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
    let mut opt_v = Adam::new(cfg.adam(), lens(&vision));
    let mut opt_t = Adam::new(cfg.adam(), lens(&text));
    let mut grad_v = vision.params().zeros_like();
    let mut grad_t = text.params().zeros_like();

    let lambda = T::c(cfg.lambda_cross);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0_f64; 4];
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad_v.fill_zero();
            grad_t.fill_zero();
            let scale = T::c(1.0 / chunk.len() as f64);
            for &k in chunk {
                let (i, j) = data.pairs[k];
                let (zv, zt) = (data.image(i), data.caption(j));
                let out_v = vision.forward_dropout(zv, &mut dropout_rng)?;
                let out_t = text.forward_dropout(zt, &mut dropout_rng)?;
                let (terms, mut g) =
                    loss_total(&out_v.params, zv, &out_t.params, zt, lambda, cfg.use_stable_nll)?;
                for (term, v) in [
                    ("loss_rec_v", terms.rec_v),
                    ("loss_rec_t", terms.rec_t),
                    ("loss_cross", terms.cross),
                ] {
                    if !v.is_finite() {
                        return Err(Error::NonFinite { epoch, batch, term });
                    }
                }
                sums[0] += terms.rec_v.as_f64();
                sums[1] += terms.rec_t.as_f64();
                sums[2] += terms.cross.as_f64();
                sums[3] += terms.total.as_f64();
                g.vision.scale(scale);
                g.text.scale(scale);
                let gv = &g.vision;
                vision.backward_into(zv, &gv.mu, &gv.alpha, &gv.beta, &out_v.cache, &mut grad_v)?;
                let gt = &g.text;
                text.backward_into(zt, &gt.mu, &gt.alpha, &gt.beta, &out_t.cache, &mut grad_t)?;
            }
            apply(&mut vision, &grad_v, &mut opt_v)?;
            apply(&mut text, &grad_t, &mut opt_t)?;
        }
        let n = data.len() as f64;
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            loss_rec_v: sums[0] / n,
            loss_rec_t: sums[1] / n,
            loss_cross: sums[2] / n,
            loss_total: sums[3] / n,
        });
    }
    Ok(TrainedPair {
        vision,
        text,
        history,
    })
}

fn apply<T: Scalar>(net: &mut AdapterNetwork<T>, grads: &Parameters<T>, opt: &mut Adam<T>) -> Result<()> {
    let g = grads.tensors();
    let mut p = net.params_mut().tensors_mut();
    opt.step(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SynthConfig, SynthDataset};

    fn tiny() -> PairedDataset<f64> {
        let ds = SynthDataset::generate(&SynthConfig {
            n_concepts: 3,
            d: 6,
            images_per_concept: 2,
            captions_per_concept: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        PairedDataset::from_stores(&ds.images, &ds.captions, &ds.correspondences).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            d_hidden: 8,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rejects_bad_configs_and_empty_data() {
        let data = tiny();
        for bad in [
            TrainConfig { epochs: 0, ..quick() },
            TrainConfig { learning_rate: 0.0, ..quick() },
            TrainConfig { batch_size: 0, ..quick() },
            TrainConfig { lambda_cross: -1.0, ..quick() },
        ] {
            assert!(train(&data, &bad).is_err());
        }
        let empty = data.filter_images(|_| false);
        assert!(matches!(train(&empty, &quick()), Err(Error::Domain(_))));
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let out = train(&tiny(), &quick()).unwrap();
        assert_eq!(out.history.records.len(), 3);
        let csv = out.history.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,loss_rec_v,loss_rec_t,loss_cross,loss_total\n"));
    }

    #[test]
    fn same_seed_same_bits() {
        let a = train(&tiny(), &quick()).unwrap();
        let b = train(&tiny(), &quick()).unwrap();
        assert_eq!(a.vision.to_bytes(), b.vision.to_bytes());
        assert_eq!(a.text.to_bytes(), b.text.to_bytes());
        assert_eq!(a.history, b.history);
        let c = train(&tiny(), &TrainConfig { seed: 1, ..quick() }).unwrap();
        assert_ne!(a.vision.to_bytes(), c.vision.to_bytes());
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let mut data = tiny();
        data.images[0] = f64::NAN;
        match train(&data, &quick()) {
            Err(Error::NonFinite { epoch, term, .. }) => {
                assert_eq!(epoch, 0);
                assert!(term.starts_with("loss_"));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
