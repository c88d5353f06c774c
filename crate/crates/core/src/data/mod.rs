//! On-disk formats and the synthetic paired-embedding generator.

mod correspondence;
mod embeddings;
mod synth;

pub use correspondence::CorrespondenceMap;
pub use embeddings::{EmbeddingStore, Modality};
pub use synth::{read_noise_csv, write_noise_csv, SynthConfig, SynthDataset};
