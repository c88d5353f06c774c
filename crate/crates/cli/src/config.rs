//! `key=value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use pvlm::data::SynthConfig;
use pvlm::retrieval::{Abscissa, CalibrationConfig, Direction};
use pvlm::training::TrainConfig;
use pvlm::uncertainty::{AleatoricSource, ScalarSource, UncertaintyConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub n_levels: usize,
    pub m_passes: usize,
    pub direction: Direction,
    pub abscissa: Abscissa,
    pub aleatoric: AleatoricSource,
    pub scalar: ScalarSource,
    pub modality: ModalityArg,
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModalityArg {
    #[default]
    Image,
    Text,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            n_levels: 10,
            m_passes: pvlm::uncertainty::DEFAULT_PASSES,
            direction: Direction::I2t,
            abscissa: Abscissa::default(),
            aleatoric: AleatoricSource::default(),
            scalar: ScalarSource::default(),
            modality: ModalityArg::default(),
            budget: 10,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "n_concepts",
    "d",
    "images_per_concept",
    "captions_per_concept",
    "noise_low",
    "noise_high",
    "cross_offset",
    "split",
    "epochs",
    "learning_rate",
    "batch_size",
    "lambda_cross",
    "use_stable_nll",
    "d_hidden",
    "dropout",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "n_levels",
    "m_passes",
    "direction",
    "abscissa",
    "aleatoric",
    "scalar",
    "modality",
    "budget",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Input(format!("invalid value {value:?} for key {key}")))
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T, CliError> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            CliError::Input(format!("{key} must be one of {}, got {value:?}", names.join("|")))
        })
}

const DIRECTIONS: &[(&str, Direction)] = &[("i2t", Direction::I2t), ("t2i", Direction::T2i)];
const ABSCISSAE: &[(&str, Abscissa)] = &[
    ("level_index", Abscissa::LevelIndex),
    ("mean_uncertainty", Abscissa::MeanUncertainty),
];
const ALEATORIC: &[(&str, AleatoricSource)] = &[
    ("deterministic", AleatoricSource::DeterministicPass),
    ("dropout_average", AleatoricSource::DropoutAverage),
];
const SCALARS: &[(&str, ScalarSource)] = &[
    ("total", ScalarSource::Total),
    ("aleatoric", ScalarSource::Aleatoric),
    ("epistemic", ScalarSource::Epistemic),
];
const MODALITIES: &[(&str, ModalityArg)] = &[("image", ModalityArg::Image), ("text", ModalityArg::Text)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|(_, o)| o == v).map(|(n, _)| *n).unwrap_or("?")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_concepts" => self.synth.n_concepts = parse(key, value)?,
            "d" => self.synth.d = parse(key, value)?,
            "images_per_concept" => self.synth.images_per_concept = parse(key, value)?,
            "captions_per_concept" => self.synth.captions_per_concept = parse(key, value)?,
            "noise_low" => self.synth.noise_low = parse(key, value)?,
            "noise_high" => self.synth.noise_high = parse(key, value)?,
            "cross_offset" => self.synth.cross_offset = parse(key, value)?,
            "split" => self.synth.split = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lambda_cross" => self.train.lambda_cross = parse(key, value)?,
            "use_stable_nll" => self.train.use_stable_nll = parse(key, value)?,
            "d_hidden" => self.train.d_hidden = parse(key, value)?,
            "dropout" => self.train.dropout_p = parse(key, value)?,
            "adam_beta1" => self.train.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.train.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.train.adam_eps = parse(key, value)?,
            "n_levels" => self.n_levels = parse(key, value)?,
            "m_passes" => self.m_passes = parse(key, value)?,
            "direction" => self.direction = choice(key, value, DIRECTIONS)?,
            "abscissa" => self.abscissa = choice(key, value, ABSCISSAE)?,
            "aleatoric" => self.aleatoric = choice(key, value, ALEATORIC)?,
            "scalar" => self.scalar = choice(key, value, SCALARS)?,
            "modality" => self.modality = choice(key, value, MODALITIES)?,
            "budget" => self.budget = parse(key, value)?,
            _ => return Err(CliError::Input(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`; blank lines and `#` comments
    /// are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!("{origin}:{}: expected key=value, got {raw:?}", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Input(format!("{origin}:{}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    fn value_of(&self, key: &str) -> String {
        let (s, t) = (&self.synth, &self.train);
        match key {
            "seed" => self.seed.to_string(),
            "n_concepts" => s.n_concepts.to_string(),
            "d" => s.d.to_string(),
            "images_per_concept" => s.images_per_concept.to_string(),
            "captions_per_concept" => s.captions_per_concept.to_string(),
            "noise_low" => s.noise_low.to_string(),
            "noise_high" => s.noise_high.to_string(),
            "cross_offset" => s.cross_offset.to_string(),
            "split" => s.split.to_string(),
            "epochs" => t.epochs.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lambda_cross" => t.lambda_cross.to_string(),
            "use_stable_nll" => t.use_stable_nll.to_string(),
            "d_hidden" => t.d_hidden.to_string(),
            "dropout" => t.dropout_p.to_string(),
            "adam_beta1" => t.adam_beta1.to_string(),
            "adam_beta2" => t.adam_beta2.to_string(),
            "adam_eps" => t.adam_eps.to_string(),
            "n_levels" => self.n_levels.to_string(),
            "m_passes" => self.m_passes.to_string(),
            "direction" => name_of(DIRECTIONS, &self.direction).into(),
            "abscissa" => name_of(ABSCISSAE, &self.abscissa).into(),
            "aleatoric" => name_of(ALEATORIC, &self.aleatoric).into(),
            "scalar" => name_of(SCALARS, &self.scalar).into(),
            "modality" => name_of(MODALITIES, &self.modality).into(),
            "budget" => self.budget.to_string(),
            _ => unreachable!("key list and renderer disagree on {key}"),
        }
    }

    /// Every key in a fixed order; feeding the output back through
    /// [`RunConfig::apply_text`] reproduces the configuration.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.value_of(key));
        }
        out
    }

    /// The seed drives generation and training alike.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn uncertainty_config(&self) -> UncertaintyConfig {
        UncertaintyConfig {
            m_passes: self.m_passes,
            aleatoric: self.aleatoric,
            scalar: self.scalar,
        }
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            n_levels: self.n_levels,
            uncertainty: self.uncertainty_config(),
            seed: self.seed,
            abscissa: self.abscissa,
        }
    }
}
