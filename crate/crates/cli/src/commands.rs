//! The subcommands. Each reads its inputs, writes its documented files under
//! the output directory and returns a short summary for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pvlm::applications::{active_select, model_select, ModelCandidate};
use pvlm::data::{write_noise_csv, CorrespondenceMap, EmbeddingStore, SynthDataset};
use pvlm::ggd::logpdf;
use pvlm::retrieval::{evaluate_calibration, RetrievalTask};
use pvlm::training::{train, PairedDataset};
use pvlm::uncertainty::{score_store, ScalarSource};
use pvlm::Adapter;

use crate::config::{ModalityArg, RunConfig};
use crate::error::CliError;

pub const IMAGES_FILE: &str = "images.pvlmemb";
pub const CAPTIONS_FILE: &str = "captions.pvlmemb";
pub const CORRESPONDENCE_FILE: &str = "correspondences.tsv";
pub const NOISE_FILE: &str = "noise.csv";
pub const ADAPTER_V_FILE: &str = "adapter_v.pvlmadpt";
pub const ADAPTER_T_FILE: &str = "adapter_t.pvlmadpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const UNCERTAINTY_FILE: &str = "uncertainty.csv";
pub const SELECTION_FILE: &str = "selected.txt";
pub const MODEL_SELECTION_FILE: &str = "model_select.json";
pub const LOGLIK_FILE: &str = "loglik.csv";

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn with_path(path: &Path, e: pvlm::Error) -> CliError {
    match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_store(path: &Path) -> Result<EmbeddingStore, CliError> {
    EmbeddingStore::from_bytes(&read(path)?).map_err(|e| with_path(path, e))
}

fn load_adapter(path: &Path) -> Result<Adapter, CliError> {
    Adapter::from_bytes(&read(path)?).map_err(|e| with_path(path, e))
}

/// The three files every dataset directory holds.
pub struct DataDir {
    pub images: EmbeddingStore,
    pub captions: EmbeddingStore,
    pub correspondences: CorrespondenceMap,
}

impl DataDir {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let images = load_store(&dir.join(IMAGES_FILE))?;
        let captions = load_store(&dir.join(CAPTIONS_FILE))?;
        let path = dir.join(CORRESPONDENCE_FILE);
        let text = String::from_utf8(read(&path)?)
            .map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
        let correspondences =
            CorrespondenceMap::parse(&text, &images, &captions).map_err(|e| with_path(&path, e))?;
        Ok(Self {
            images,
            captions,
            correspondences,
        })
    }

    fn store(&self, m: ModalityArg) -> &EmbeddingStore {
        match m {
            ModalityArg::Image => &self.images,
            ModalityArg::Text => &self.captions,
        }
    }
}

pub struct AdapterPair {
    pub vision: Adapter,
    pub text: Adapter,
}

impl AdapterPair {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        Ok(Self {
            vision: load_adapter(&dir.join(ADAPTER_V_FILE))?,
            text: load_adapter(&dir.join(ADAPTER_T_FILE))?,
        })
    }

    fn get(&self, m: ModalityArg) -> &Adapter {
        match m {
            ModalityArg::Image => &self.vision,
            ModalityArg::Text => &self.text,
        }
    }
}

pub fn synth_gen(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let ds = SynthDataset::generate(&cfg.synth_config())?;
    write(out, IMAGES_FILE, ds.images.to_bytes()?)?;
    write(out, CAPTIONS_FILE, ds.captions.to_bytes()?)?;
    write(out, CORRESPONDENCE_FILE, ds.correspondences.to_text())?;
    write(out, NOISE_FILE, write_noise_csv(&ds.noise_table()))?;
    Ok(format!(
        "wrote {} images, {} captions, {} pairs to {}",
        ds.images.len(),
        ds.captions.len(),
        ds.correspondences.len(),
        out.display()
    ))
}

pub fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<String, CliError> {
    let d = DataDir::load(data)?;
    let paired = PairedDataset::<f64>::from_stores(&d.images, &d.captions, &d.correspondences)?;
    let fitted = train(&paired, &cfg.train_config())?;
    write(out, ADAPTER_V_FILE, fitted.vision.to_bytes())?;
    write(out, ADAPTER_T_FILE, fitted.text.to_bytes())?;
    write(out, HISTORY_FILE, fitted.history.to_csv())?;
    let last = fitted.history.records.last().expect("epochs >= 1 is validated");
    Ok(format!(
        "epoch {}: loss_rec_v={:.6} loss_rec_t={:.6} loss_cross={:.6} loss_total={:.6}",
        last.epoch, last.loss_rec_v, last.loss_rec_t, last.loss_cross, last.loss_total
    ))
}

fn json(value: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot encode report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn eval_calibration(
    cfg: &RunConfig,
    data: &Path,
    adapters: &Path,
    out: &Path,
) -> Result<String, CliError> {
    let d = DataDir::load(data)?;
    let nets = AdapterPair::load(adapters)?;
    let task = RetrievalTask::new(&d.images, &d.captions, &d.correspondences, cfg.direction)?;
    let net = match cfg.direction {
        pvlm::retrieval::Direction::I2t => &nets.vision,
        pvlm::retrieval::Direction::T2i => &nets.text,
    };
    let report = evaluate_calibration(net, &task, &cfg.calibration_config())?;
    write(out, CALIBRATION_FILE, json(&report)?)?;
    Ok(format!(
        "S={:.4} R2={:.4} -SR2={:.4}",
        report.spearman, report.r2, report.minus_sr2
    ))
}

pub fn uncertainty_cmd(
    cfg: &RunConfig,
    data: &Path,
    adapters: &Path,
    out: &Path,
) -> Result<String, CliError> {
    let d = DataDir::load(data)?;
    let nets = AdapterPair::load(adapters)?;
    let store = d.store(cfg.modality);
    let reports = score_store(nets.get(cfg.modality), store, &cfg.uncertainty_config(), cfg.seed)?;
    let mut csv = String::from("id,scalar_total,scalar_aleatoric,scalar_epistemic\n");
    for (id, r) in store.ids().iter().zip(&reports) {
        let _ = writeln!(
            csv,
            "{id},{:.16e},{:.16e},{:.16e}",
            r.scalar_of(ScalarSource::Total),
            r.scalar_of(ScalarSource::Aleatoric),
            r.scalar_of(ScalarSource::Epistemic)
        );
    }
    write(out, UNCERTAINTY_FILE, csv)?;
    Ok(format!("scored {} samples", reports.len()))
}

pub fn active_select_cmd(
    cfg: &RunConfig,
    data: &Path,
    adapters: &Path,
    out: &Path,
) -> Result<String, CliError> {
    let images = load_store(&data.join(IMAGES_FILE))?;
    let vision = load_adapter(&adapters.join(ADAPTER_V_FILE))?;
    let ids = active_select(&vision, &images, cfg.budget, &cfg.uncertainty_config(), cfg.seed)?;
    let mut text = ids.join("\n");
    text.push('\n');
    write(out, SELECTION_FILE, text)?;
    Ok(format!("selected {} of {} images", ids.len(), images.len()))
}

/// `NAME=DIR` where DIR holds an adapter pair.
pub fn parse_candidate(arg: &str) -> Result<(String, PathBuf), CliError> {
    match arg.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => Err(CliError::Input(format!("candidate must be NAME=DIR, got {arg:?}"))),
    }
}

pub fn model_select_cmd(
    cfg: &RunConfig,
    candidates: &[(String, PathBuf)],
    target: &Path,
    out: &Path,
) -> Result<String, CliError> {
    let images = load_store(&target.join(IMAGES_FILE))?;
    let cands = candidates
        .iter()
        .map(|(name, dir)| {
            let pair = AdapterPair::load(dir)?;
            Ok(ModelCandidate::new(
                name.clone(),
                pair.vision,
                pair.text,
                dir.display().to_string(),
            )?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let result = model_select(&cands, &images, &cfg.uncertainty_config(), cfg.seed)?;
    write(out, MODEL_SELECTION_FILE, json(&result)?)?;
    Ok(format!("selected {}", result.selected))
}

pub fn loglik_scan(
    cfg: &RunConfig,
    data: &Path,
    adapters: &Path,
    source: &str,
    out: &Path,
) -> Result<String, CliError> {
    let d = DataDir::load(data)?;
    let nets = AdapterPair::load(adapters)?;
    let store = d.store(cfg.modality);
    let row = store
        .index_of(source)
        .ok_or_else(|| CliError::Input(format!("unknown source id {source:?}")))?;
    let predicted = nets.get(cfg.modality).forward(store.row(row))?.params;
    let mut csv = String::from("id,loglik\n");
    for (id, z) in store.ids().iter().zip(store.rows()) {
        let v = logpdf(z, &predicted)?;
        let _ = writeln!(csv, "{id},{v:.16e}");
    }
    write(out, LOGLIK_FILE, csv)?;
    Ok(format!("scanned {} samples against {source}", store.len()))
}
