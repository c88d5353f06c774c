use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CorrespondenceMap, EmbeddingStore, Modality};
use crate::error::{Error, Result};

/// Parameters of the synthetic paired-embedding benchmark.
///
/// `seed` fixes the concept geometry; `split` selects an independent draw of
/// samples around the same concepts (0 for training, 1.. for held-out sets).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_concepts: usize,
    pub d: usize,
    pub images_per_concept: usize,
    pub captions_per_concept: usize,
    pub noise_low: f64,
    pub noise_high: f64,
    pub cross_offset: f64,
    pub seed: u64,
    pub split: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_concepts: 16,
            d: 64,
            images_per_concept: 8,
            captions_per_concept: 8,
            noise_low: 0.05,
            noise_high: 0.6,
            cross_offset: 0.3,
            seed: 0,
            split: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_concepts == 0
            || self.d == 0
            || self.images_per_concept == 0
            || self.captions_per_concept == 0
        {
            return Err(Error::domain("synthetic counts and dimension must be >= 1"));
        }
        if !(self.noise_low >= 0.0 && self.noise_low <= self.noise_high && self.noise_high.is_finite()) {
            return Err(Error::domain(format!(
                "need 0 <= noise_low <= noise_high, got [{}, {}]",
                self.noise_low, self.noise_high
            )));
        }
        if !(self.cross_offset >= 0.0 && self.cross_offset.is_finite()) {
            return Err(Error::domain("cross_offset must be finite and >= 0"));
        }
        Ok(())
    }

    /// Same concepts, a different draw of samples.
    pub fn with_split(&self, split: u64) -> Self {
        Self {
            split,
            ..self.clone()
        }
    }
}

/// Generated stores, their ground-truth matches and injected noise scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub images: EmbeddingStore,
    pub captions: EmbeddingStore,
    pub correspondences: CorrespondenceMap,
    /// Per-image injected σ, aligned with `images` rows.
    pub image_sigma: Vec<f64>,
    /// Per-caption injected σ, aligned with `captions` rows.
    pub caption_sigma: Vec<f64>,
    /// Concept index of every image row.
    pub image_concept: Vec<usize>,
    /// Concept index of every caption row.
    pub caption_concept: Vec<usize>,
}

impl SynthDataset {
    /// Draws concepts on the unit sphere and noisy samples around them.
    ///
    /// Image `= normalize(c + σ g)`, caption `= normalize(c + offset · u_c + σ g)`
    /// with `g` standard normal projected orthogonal to `c`,
    /// `σ ~ U[noise_low, noise_high]` per sample and `u_c` a fixed unit
    /// direction per concept. Values are rounded to `f32` so the
    /// in-memory stores equal what the embedding file holds.
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut geometry = ChaCha8Rng::seed_from_u64(cfg.seed);
        let concepts: Vec<Vec<f64>> = (0..cfg.n_concepts)
            .map(|_| unit_gaussian(cfg.d, &mut geometry))
            .collect();
        let offsets: Vec<Vec<f64>> = (0..cfg.n_concepts)
            .map(|_| unit_gaussian(cfg.d, &mut geometry))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.split + 1);

        let mut img = Rows::default();
        let mut cap = Rows::default();
        for c in 0..cfg.n_concepts {
            for k in 0..cfg.images_per_concept {
                let sigma = draw_sigma(cfg, &mut rng);
                let row = noisy(&concepts[c], None, sigma, &mut rng);
                img.push(format!("img_{c:04}_{k:03}"), row, sigma, c);
            }
            for k in 0..cfg.captions_per_concept {
                let sigma = draw_sigma(cfg, &mut rng);
                let shift = Some((cfg.cross_offset, offsets[c].as_slice()));
                let row = noisy(&concepts[c], shift, sigma, &mut rng);
                cap.push(format!("cap_{c:04}_{k:03}"), row, sigma, c);
            }
        }

        let images = EmbeddingStore::new(Modality::Image, img.ids, cfg.d, img.data)?;
        let captions = EmbeddingStore::new(Modality::Text, cap.ids, cfg.d, cap.data)?;
        let mut edges = Vec::with_capacity(images.len() * cfg.captions_per_concept);
        for (i, &ci) in img.concept.iter().enumerate() {
            for (j, &cj) in cap.concept.iter().enumerate() {
                if ci == cj {
                    edges.push((images.ids()[i].clone(), captions.ids()[j].clone()));
                }
            }
        }
        let correspondences = CorrespondenceMap::new(edges, &images, &captions)?;
        Ok(Self {
            images,
            captions,
            correspondences,
            image_sigma: img.sigma,
            caption_sigma: cap.sigma,
            image_concept: img.concept,
            caption_concept: cap.concept,
        })
    }

    /// `(id, sigma)` for every image then every caption.
    pub fn noise_table(&self) -> Vec<(String, f64)> {
        self.images
            .ids()
            .iter()
            .zip(&self.image_sigma)
            .chain(self.captions.ids().iter().zip(&self.caption_sigma))
            .map(|(id, &s)| (id.clone(), s))
            .collect()
    }
}

#[derive(Default)]
struct Rows {
    ids: Vec<String>,
    data: Vec<f64>,
    sigma: Vec<f64>,
    concept: Vec<usize>,
}

impl Rows {
    fn push(&mut self, id: String, row: Vec<f64>, sigma: f64, concept: usize) {
        self.ids.push(id);
        self.data.extend(row);
        self.sigma.push(sigma);
        self.concept.push(concept);
    }
}

fn draw_sigma(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    cfg.noise_low + (cfg.noise_high - cfg.noise_low) * u
}

fn unit_gaussian(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn noisy(
    concept: &[f64],
    shift: Option<(f64, &[f64])>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    // The noise is confined to the concept's orthogonal complement so that the
    // angle to the concept, the only thing normalization keeps, is governed by
    // sigma and not by a random radial component.
    let mut g: Vec<f64> = (0..concept.len()).map(|_| rng.sample(StandardNormal)).collect();
    let along: f64 = g.iter().zip(concept).map(|(a, b)| a * b).sum();
    for (x, c) in g.iter_mut().zip(concept) {
        *x -= along * c;
    }
    let mut v: Vec<f64> = concept.iter().zip(&g).map(|(&c, &n)| c + sigma * n).collect();
    if let Some((scale, dir)) = shift {
        for (x, u) in v.iter_mut().zip(dir) {
            *x += scale * u;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    v.into_iter().map(|x| f64::from((x / norm) as f32)).collect()
}

/// CSV `id,sigma` with shortest round-trip float formatting.
pub fn write_noise_csv(table: &[(String, f64)]) -> String {
    let mut s = String::from("id,sigma\n");
    for (id, sigma) in table {
        s.push_str(&format!("{id},{sigma:?}\n"));
    }
    s
}

pub fn read_noise_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "id,sigma")) => {}
        _ => return Err(Error::validation(Some(1), "expected header id,sigma")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let (id, s) = l
                .split_once(',')
                .ok_or_else(|| Error::validation(Some(n + 1), "expected id,sigma"))?;
            let sigma = s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::validation(Some(n + 1), format!("bad sigma {s:?}")))?;
            Ok((id.to_owned(), sigma))
        })
        .collect()
}
