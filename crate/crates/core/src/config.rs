//! Experiment configuration as a flat `key = value` document.
//!
//! Keys are dotted (`channel.kind`, `unlearn.alpha1`); list values are
//! comma separated; `#` starts a comment. Unknown or repeated keys are
//! rejected, and every key has a default, so an empty document describes
//! the desk-scale experiment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelKind};
use crate::codec::{ClassifierConfig, CodecConfig};
use crate::data::BackdoorSpec;
use crate::error::{Error, Result};
use crate::losses::UnlearnConfig;
use crate::tensor::OptimizerKind;
use crate::unlearn::{Method, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic {
        n_train: usize,
        n_test: usize,
        height: usize,
        width: usize,
        classes: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            n_train: 2000,
            n_test: 500,
            height: 8,
            width: 8,
            classes: 10,
        }
    }
}

/// Codec architecture minus the input width, which comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSettings {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub beta: f64,
}

impl Default for CodecSettings {
    fn default() -> Self {
        let desk = CodecConfig::desk(0);
        CodecSettings {
            latent_dim: desk.latent_dim,
            hidden: desk.hidden,
            beta: desk.beta,
        }
    }
}

impl CodecSettings {
    pub fn for_input(&self, input_dim: usize) -> CodecConfig {
        CodecConfig {
            input_dim,
            latent_dim: self.latent_dim,
            hidden: self.hidden.clone(),
            beta: self.beta,
        }
    }
}

/// Channels swept by an experiment: every kind at every SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSweep {
    pub kinds: Vec<ChannelKind>,
    pub snr_db: Vec<f64>,
    pub rician_k: f64,
}

impl Default for ChannelSweep {
    fn default() -> Self {
        ChannelSweep {
            kinds: vec![ChannelKind::Awgn],
            snr_db: vec![5.0],
            rician_k: 1.0,
        }
    }
}

impl ChannelSweep {
    pub fn configs(&self) -> Vec<ChannelConfig> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &snr_db in &self.snr_db {
                out.push(ChannelConfig {
                    kind,
                    snr_db,
                    rician_k: self.rician_k,
                    seed: 0,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub backdoor: BackdoorSpec,
    pub codec: CodecSettings,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub channel: ChannelSweep,
    pub edr: Vec<f64>,
    pub methods: Vec<Method>,
    pub unlearn: UnlearnConfig,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    /// Record wall-clock runtimes. When off, every runtime is reported as
    /// zero so that reports depend on the configuration alone.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            backdoor: BackdoorSpec::default(),
            codec: CodecSettings::default(),
            train: TrainConfig {
                epochs: 30,
                lr: 1e-3,
                batch: 16,
            },
            classifier: ClassifierConfig::default(),
            channel: ChannelSweep::default(),
            edr: vec![0.06],
            methods: vec![Method::Scu, Method::Vbu, Method::Hbu],
            unlearn: UnlearnConfig {
                tau: 2.0,
                lr: 7e-4,
                clip_norm: 1.0,
                ..UnlearnConfig::default()
            },
            seeds: vec![0],
            output: None,
            timing: true,
        }
    }
}

fn parse_value<T>(key: &str, raw: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {raw:?}: {e}")))
}

fn parse_list<T>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: list is empty")));
    }
    Ok(items)
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Splits a document into key/value pairs, rejecting malformed lines and
/// repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if pairs.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Builds a validated configuration from flat pairs layered over the
    /// defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let kind = pairs.get("dataset.kind").map(|s| s.as_str()).unwrap_or("synthetic");
        cfg.dataset = match kind {
            "synthetic" => DatasetSpec::default(),
            "idx" => DatasetSpec::Idx {
                train_images: PathBuf::new(),
                train_labels: PathBuf::new(),
                test_images: PathBuf::new(),
                test_labels: PathBuf::new(),
            },
            other => return Err(Error::Config(format!("dataset.kind: unknown kind {other:?}"))),
        };
        for (key, raw) in pairs {
            cfg.set(key, raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let kind = self.dataset_kind();
        let wrong_kind = || Error::Config(format!("{key} does not apply to dataset.kind = {kind}"));
        match key {
            "dataset.kind" => {}
            "dataset.n_train" | "dataset.n_test" | "dataset.height" | "dataset.width" | "dataset.classes" => {
                let v: usize = parse_value(key, raw)?;
                let DatasetSpec::Synthetic {
                    n_train,
                    n_test,
                    height,
                    width,
                    classes,
                } = &mut self.dataset
                else {
                    return Err(wrong_kind());
                };
                *match key {
                    "dataset.n_train" => n_train,
                    "dataset.n_test" => n_test,
                    "dataset.height" => height,
                    "dataset.width" => width,
                    _ => classes,
                } = v;
            }
            "dataset.train_images" | "dataset.train_labels" | "dataset.test_images" | "dataset.test_labels" => {
                let DatasetSpec::Idx {
                    train_images,
                    train_labels,
                    test_images,
                    test_labels,
                } = &mut self.dataset
                else {
                    return Err(wrong_kind());
                };
                *match key {
                    "dataset.train_images" => train_images,
                    "dataset.train_labels" => train_labels,
                    "dataset.test_images" => test_images,
                    _ => test_labels,
                } = PathBuf::from(raw.trim());
            }
            "backdoor.patch_side" => self.backdoor.patch_side = parse_value(key, raw)?,
            "backdoor.patch_value" => self.backdoor.patch_value = parse_value(key, raw)?,
            "backdoor.target_label" => self.backdoor.target_label = parse_value(key, raw)?,
            "codec.latent_dim" => self.codec.latent_dim = parse_value(key, raw)?,
            "codec.hidden" => self.codec.hidden = parse_list(key, raw)?,
            "codec.beta" => self.codec.beta = parse_value(key, raw)?,
            "train.epochs" => self.train.epochs = parse_value(key, raw)?,
            "train.lr" => self.train.lr = parse_value(key, raw)?,
            "train.batch" => self.train.batch = parse_value(key, raw)?,
            "classifier.hidden" => self.classifier.hidden = parse_value(key, raw)?,
            "classifier.epochs" => self.classifier.epochs = parse_value(key, raw)?,
            "classifier.lr" => self.classifier.lr = parse_value(key, raw)?,
            "classifier.batch" => self.classifier.batch = parse_value(key, raw)?,
            "channel.kind" => self.channel.kinds = parse_list(key, raw)?,
            "channel.snr_db" => self.channel.snr_db = parse_list(key, raw)?,
            "channel.rician_k" => self.channel.rician_k = parse_value(key, raw)?,
            "edr" => self.edr = parse_list(key, raw)?,
            "method" => self.methods = parse_list(key, raw)?,
            "seeds" => self.seeds = parse_list(key, raw)?,
            "output" => self.output = Some(PathBuf::from(raw.trim())),
            "timing" => self.timing = parse_bool(key, raw)?,
            "unlearn.alpha1" => self.unlearn.alpha1 = parse_value(key, raw)?,
            "unlearn.alpha2" => self.unlearn.alpha2 = parse_value(key, raw)?,
            "unlearn.tau" => self.unlearn.tau = parse_value(key, raw)?,
            "unlearn.beta" => self.unlearn.beta = parse_value(key, raw)?,
            "unlearn.epochs" => self.unlearn.epochs = parse_value(key, raw)?,
            "unlearn.lr" => self.unlearn.lr = parse_value(key, raw)?,
            "unlearn.optimizer" => self.unlearn.optimizer = parse_value::<OptimizerKind>(key, raw)?,
            "unlearn.batch" => self.unlearn.batch = parse_value(key, raw)?,
            "unlearn.damping" => self.unlearn.damping = parse_value(key, raw)?,
            "unlearn.clip_norm" => self.unlearn.clip_norm = parse_value(key, raw)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn dataset_kind(&self) -> &'static str {
        match self.dataset {
            DatasetSpec::Synthetic { .. } => "synthetic",
            DatasetSpec::Idx { .. } => "idx",
        }
    }

    /// Canonical flat form; `from_pairs(&cfg.to_pairs())` reproduces `cfg`.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            p.insert(k.to_string(), v);
        };
        put("dataset.kind", self.dataset_kind().into());
        match &self.dataset {
            DatasetSpec::Synthetic {
                n_train,
                n_test,
                height,
                width,
                classes,
            } => {
                put("dataset.n_train", n_train.to_string());
                put("dataset.n_test", n_test.to_string());
                put("dataset.height", height.to_string());
                put("dataset.width", width.to_string());
                put("dataset.classes", classes.to_string());
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                put("dataset.train_images", train_images.display().to_string());
                put("dataset.train_labels", train_labels.display().to_string());
                put("dataset.test_images", test_images.display().to_string());
                put("dataset.test_labels", test_labels.display().to_string());
            }
        }
        put("backdoor.patch_side", self.backdoor.patch_side.to_string());
        put("backdoor.patch_value", self.backdoor.patch_value.to_string());
        put("backdoor.target_label", self.backdoor.target_label.to_string());
        put("codec.latent_dim", self.codec.latent_dim.to_string());
        put("codec.hidden", join(&self.codec.hidden));
        put("codec.beta", self.codec.beta.to_string());
        put("train.epochs", self.train.epochs.to_string());
        put("train.lr", self.train.lr.to_string());
        put("train.batch", self.train.batch.to_string());
        put("classifier.hidden", self.classifier.hidden.to_string());
        put("classifier.epochs", self.classifier.epochs.to_string());
        put("classifier.lr", self.classifier.lr.to_string());
        put("classifier.batch", self.classifier.batch.to_string());
        put("channel.kind", join(&self.channel.kinds));
        put("channel.snr_db", join(&self.channel.snr_db));
        put("channel.rician_k", self.channel.rician_k.to_string());
        put("edr", join(&self.edr));
        put("method", join(&self.methods));
        put("seeds", join(&self.seeds));
        if let Some(out) = &self.output {
            put("output", out.display().to_string());
        }
        put("timing", self.timing.to_string());
        let u = &self.unlearn;
        put("unlearn.alpha1", u.alpha1.to_string());
        put("unlearn.alpha2", u.alpha2.to_string());
        put("unlearn.tau", u.tau.to_string());
        put("unlearn.beta", u.beta.to_string());
        put("unlearn.epochs", u.epochs.to_string());
        put("unlearn.lr", u.lr.to_string());
        put("unlearn.optimizer", u.optimizer.to_string());
        put("unlearn.batch", u.batch.to_string());
        put("unlearn.damping", u.damping.to_string());
        put("unlearn.clip_norm", u.clip_norm.to_string());
        p
    }

    /// The canonical document: one sorted `key = value` line per key.
    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let classes = match &self.dataset {
            DatasetSpec::Synthetic {
                n_train,
                n_test,
                height,
                width,
                classes,
            } => {
                if *n_train < 2 || *n_test == 0 || *height == 0 || *width == 0 {
                    return bad("synthetic dataset sizes must be positive (n_train ≥ 2)".into());
                }
                if self.backdoor.patch_side > (*height).min(*width) {
                    return bad(format!("backdoor.patch_side {} exceeds the image", self.backdoor.patch_side));
                }
                Some(*classes)
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                for (name, p) in [
                    ("train_images", train_images),
                    ("train_labels", train_labels),
                    ("test_images", test_images),
                    ("test_labels", test_labels),
                ] {
                    if p.as_os_str().is_empty() {
                        return bad(format!("dataset.{name} is required for idx datasets"));
                    }
                }
                None
            }
        };
        if let Some(classes) = classes {
            if classes < 2 {
                return bad("dataset.classes must be at least 2".into());
            }
            if self.backdoor.target_label >= classes {
                return bad(format!("backdoor.target_label {} out of range", self.backdoor.target_label));
            }
        }
        if self.backdoor.patch_side == 0 || !(0.0..=1.0).contains(&self.backdoor.patch_value) {
            return bad("backdoor patch must have a positive side and a value in [0, 1]".into());
        }
        if self.codec.latent_dim == 0 || self.codec.hidden.contains(&0) || !(self.codec.beta >= 0.0) {
            return bad("codec.latent_dim and codec.hidden must be positive; codec.beta non-negative".into());
        }
        if self.train.epochs == 0 || self.train.batch == 0 || !(self.train.lr >= 0.0) {
            return bad("train.epochs and train.batch must be positive; train.lr non-negative".into());
        }
        if self.classifier.hidden == 0 || self.classifier.epochs == 0 || self.classifier.batch == 0 {
            return bad("classifier sizes must be positive".into());
        }
        for cfg in self.channel.configs() {
            cfg.validate()?;
        }
        if let Some(e) = self.edr.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("edr {e} outside (0, 1)"));
        }
        if self.edr.is_empty() || self.methods.is_empty() || self.seeds.is_empty() || self.channel.configs().is_empty() {
            return bad("edr, method, seeds and channel lists must be non-empty".into());
        }
        self.unlearn.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ExperimentConfig::from_text("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn parses_dotted_keys_lists_and_comments() {
        let cfg = ExperimentConfig::from_text(
            "# sweep\nchannel.kind = awgn, rayleigh\nchannel.snr_db = 5,15 # inline\nunlearn.alpha1=0.5\nedr=0.02,0.1\nmethod=scu,retrain\nseeds=1,2,3\n",
        )
        .unwrap();
        assert_eq!(cfg.channel.kinds, vec![ChannelKind::Awgn, ChannelKind::Rayleigh]);
        assert_eq!(cfg.channel.snr_db, vec![5.0, 15.0]);
        assert_eq!(cfg.unlearn.alpha1, 0.5);
        assert_eq!(cfg.edr, vec![0.02, 0.1]);
        assert_eq!(cfg.methods, vec![Method::Scu, Method::Retrain]);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.channel.configs().len(), 4);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(ExperimentConfig::from_text("unlearn.gamma = 1").is_err());
        assert!(ExperimentConfig::from_text("edr = 0.1\nedr = 0.2").is_err());
        assert!(ExperimentConfig::from_text("edr = 1.5").is_err());
        assert!(ExperimentConfig::from_text("unlearn.tau = 0").is_err());
        assert!(ExperimentConfig::from_text("channel.kind = wifi").is_err());
        assert!(ExperimentConfig::from_text("no equals sign").is_err());
        assert!(ExperimentConfig::from_text("dataset.train_images = a.idx").is_err());
        assert!(ExperimentConfig::from_text("dataset.kind = idx").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig {
            edr: vec![0.02, 0.04],
            output: Some("out/report".into()),
            timing: false,
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        let idx = ExperimentConfig::from_text(
            "dataset.kind=idx\ndataset.train_images=a\ndataset.train_labels=b\ndataset.test_images=c\ndataset.test_labels=d",
        )
        .unwrap();
        assert_eq!(ExperimentConfig::from_text(&idx.to_text()).unwrap(), idx);
    }
}
