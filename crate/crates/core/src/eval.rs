//! Evaluation metrics and the experiment matrix runner.
//!
//! Each cell of the matrix builds its data, backdoors the erased set,
//! trains a codec on the poisoned union, fits the downstream classifier on
//! that codec's decoded outputs, and then applies every configured method
//! to the same trained codec. The classifier stays fixed throughout.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, ChannelKind, Transmit};
use crate::codec::{ClassifierConfig, CodecConfig, DownstreamClassifier, SemanticCodec};
use crate::config::{DatasetSpec, ExperimentConfig};
use crate::data::{generate_synthetic, inject_backdoor, load_idx, split_erased_among, LabeledDataset, SplitDataset};
use crate::error::{Error, Result};
use crate::losses::{pixel_mse, UnlearnConfig};
use crate::tensor::{no_grad, Tensor};
use crate::unlearn::{
    hbu_unlearn, scu_unlearn_observed, train_original, train_original_observed, vbu_unlearn_observed, EpochObserver,
    Method, TrainConfig, TrainReport,
};

/// Rows pushed through the codec per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

/// Decodes `indices` of `data` after a pass through the channel. Output is
/// row-major, one `pixels()`-wide row per index.
pub fn decode_subset(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    indices: &[usize],
    channel: &ChannelConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut latent_rng = ChaCha8Rng::seed_from_u64(seed);
    latent_rng.set_stream(11);
    let mut link = Channel::with_stream(channel.with_seed(channel.seed ^ seed), 12);
    let mut out = Vec::with_capacity(indices.len() * data.pixels());
    no_grad(|| -> Result<()> {
        for chunk in indices.chunks(EVAL_CHUNK) {
            let z = codec.encode(&data.batch(chunk)?)?.reparameterize(&mut latent_rng)?;
            out.extend_from_slice(&codec.decode(&link.transmit(&z)?)?.values());
        }
        Ok(())
    })?;
    Ok(out)
}

fn nonempty(indices: &[usize], what: &str) -> Result<()> {
    if indices.is_empty() {
        Err(Error::contract(format!("{what} subset is empty")))
    } else {
        Ok(())
    }
}

/// Mean per-pixel squared error between inputs and their decoded
/// reconstructions.
pub fn decode_mse(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    indices: &[usize],
    channel: &ChannelConfig,
    seed: u64,
) -> Result<f64> {
    nonempty(indices, "evaluation")?;
    let decoded = decode_subset(codec, data, indices, channel, seed)?;
    let original = data.batch(indices)?;
    let mse = pixel_mse(&original.values(), &decoded);
    Ok(mse)
}

fn predict_decoded(
    classifier: &DownstreamClassifier,
    codec: &SemanticCodec,
    data: &LabeledDataset,
    indices: &[usize],
    channel: &ChannelConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let decoded = decode_subset(codec, data, indices, channel, seed)?;
    classifier.predict(&Tensor::new(&[indices.len(), data.pixels()], decoded)?)
}

/// Fraction of decoded erased samples the classifier assigns to the
/// backdoor target.
pub fn backdoor_accuracy(
    classifier: &DownstreamClassifier,
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    target_label: usize,
    channel: &ChannelConfig,
    seed: u64,
) -> Result<f64> {
    nonempty(erased, "erased")?;
    let pred = predict_decoded(classifier, codec, data, erased, channel, seed)?;
    Ok(pred.iter().filter(|&&p| p == target_label).count() as f64 / erased.len() as f64)
}

/// Fraction of decoded clean samples classified with their true label.
pub fn clean_accuracy(
    classifier: &DownstreamClassifier,
    codec: &SemanticCodec,
    data: &LabeledDataset,
    indices: &[usize],
    channel: &ChannelConfig,
    seed: u64,
) -> Result<f64> {
    nonempty(indices, "clean")?;
    let pred = predict_decoded(classifier, codec, data, indices, channel, seed)?;
    let hits = pred.iter().zip(indices).filter(|(p, &i)| **p == data.labels[i]).count();
    Ok(hits as f64 / indices.len() as f64)
}

/// The four headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub clean_acc: f64,
    pub backdoor_acc: f64,
    pub mse_clean: f64,
    pub mse_erased: f64,
}

/// Per-epoch measurements taken while a method runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub loss: Vec<f64>,
    pub mse_clean: Vec<f64>,
    pub mse_erased: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub edr: f64,
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub seed: u64,
    pub clean_acc: f64,
    pub backdoor_acc: f64,
    pub mse_clean: f64,
    pub mse_erased: f64,
    pub runtime_s: f64,
    /// Metrics of the trained, backdoored codec before the method ran.
    pub pre: Headline,
    pub classifier_train_acc: f64,
    pub erased_count: usize,
    pub checksum: String,
    pub curves: Curves,
    pub config: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn headline(&self) -> Headline {
        Headline {
            clean_acc: self.clean_acc,
            backdoor_acc: self.backdoor_acc,
            mse_clean: self.mse_clean,
            mse_erased: self.mse_erased,
        }
    }
}

/// A cell of the experiment matrix that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub edr: f64,
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub seed: u64,
    pub numeric: bool,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<CellFailure>,
}

/// Clean test data, backdoored training data, split and derived seeds for
/// one `(edr, channel, seed)` cell.
pub struct PreparedCell {
    pub test: LabeledDataset,
    pub poisoned: LabeledDataset,
    pub split: SplitDataset,
    pub channel: ChannelConfig,
    pub codec_cfg: CodecConfig,
    pub original: SemanticCodec,
    pub classifier: DownstreamClassifier,
    pub classifier_train_acc: f64,
    pub pre: Headline,
    pub seed: u64,
    test_indices: Vec<usize>,
    target_label: usize,
}

const TEST_SET_SALT: u64 = 0x7e57_5e7a;
const EVAL_SALT: u64 = 0xe7a1_0000;

fn load_datasets(spec: &DatasetSpec, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    match spec {
        DatasetSpec::Synthetic {
            n_train,
            n_test,
            height,
            width,
            classes,
        } => Ok((
            generate_synthetic(*n_train, *height, *width, *classes, seed)?,
            generate_synthetic(*n_test, *height, *width, *classes, seed ^ TEST_SET_SALT)?,
        )),
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            if train.pixels() != test.pixels() {
                return Err(Error::contract("train and test images differ in size"));
            }
            Ok((train, test))
        }
    }
}

/// Clean test set, backdoored training set and its erased/remaining split.
#[derive(Debug, Clone)]
pub struct CellData {
    pub test: LabeledDataset,
    pub poisoned: LabeledDataset,
    pub split: SplitDataset,
    pub target_label: usize,
}

impl CellData {
    /// Loads or generates the data for `seed` and backdoors an `edr`
    /// fraction of it. Erased samples are drawn among non-target labels.
    pub fn build(cfg: &ExperimentConfig, edr: f64, seed: u64) -> Result<Self> {
        let (train, test) = load_datasets(&cfg.dataset, seed)?;
        let target = cfg.backdoor.target_label;
        if target >= train.classes {
            return Err(Error::contract(format!("target label {target} out of range")));
        }
        let eligible: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] != target).collect();
        let split = split_erased_among(train.len(), &eligible, edr, seed)?;
        let poisoned = inject_backdoor(&train, &split.erased_indices, &cfg.backdoor)?;
        Ok(CellData {
            test,
            poisoned,
            split,
            target_label: target,
        })
    }
}

/// Fits the downstream classifier on `codec`'s decoded training outputs.
/// Returns the classifier and its training accuracy.
pub fn fit_classifier(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    channel: &ChannelConfig,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(DownstreamClassifier, f64)> {
    let all = data.all_indices();
    let decoded = decode_subset(codec, data, &all, channel, seed)?;
    let decoded = Tensor::new(&[all.len(), data.pixels()], decoded)?;
    DownstreamClassifier::train(&decoded, &data.labels, data.classes, cfg, seed)
}

impl PreparedCell {
    /// Builds data, backdoors `D_e`, trains the codec on the poisoned union
    /// and fits the downstream classifier on its decoded outputs.
    pub fn prepare(cfg: &ExperimentConfig, edr: f64, channel: ChannelConfig, seed: u64) -> Result<Self> {
        let data = CellData::build(cfg, edr, seed)?;
        let codec_cfg = cfg.codec.for_input(data.poisoned.pixels());
        let all = data.poisoned.all_indices();
        let (original, _) = train_original(&data.poisoned, &all, &codec_cfg, &channel, &cfg.train, seed)?;
        let (classifier, acc) = fit_classifier(&original, &data.poisoned, &channel, &cfg.classifier, seed)?;
        PreparedCell::assemble(data, channel, original, classifier, acc, seed)
    }

    /// Wraps an already trained codec and classifier and records the
    /// pre-unlearning metrics.
    pub fn assemble(
        data: CellData,
        channel: ChannelConfig,
        original: SemanticCodec,
        classifier: DownstreamClassifier,
        classifier_train_acc: f64,
        seed: u64,
    ) -> Result<Self> {
        if original.input_dim() != data.poisoned.pixels() {
            return Err(Error::contract(format!(
                "codec expects {} pixels, data has {}",
                original.input_dim(),
                data.poisoned.pixels()
            )));
        }
        if classifier.classes() != data.poisoned.classes {
            return Err(Error::contract("classifier and data disagree on the number of classes"));
        }
        let mut cell = PreparedCell {
            test_indices: data.test.all_indices(),
            test: data.test,
            poisoned: data.poisoned,
            split: data.split,
            channel,
            codec_cfg: original.config(),
            original,
            classifier,
            classifier_train_acc,
            pre: Headline {
                clean_acc: 0.0,
                backdoor_acc: 0.0,
                mse_clean: 0.0,
                mse_erased: 0.0,
            },
            seed,
            target_label: data.target_label,
        };
        cell.pre = cell.headline(&cell.original)?;
        Ok(cell)
    }

    fn eval_seed(&self) -> u64 {
        self.seed ^ EVAL_SALT
    }

    /// Headline metrics of `codec` under this cell's fixed evaluation noise.
    pub fn headline(&self, codec: &SemanticCodec) -> Result<Headline> {
        let s = self.eval_seed();
        let erased = &self.split.erased_indices;
        Ok(Headline {
            clean_acc: clean_accuracy(&self.classifier, codec, &self.test, &self.test_indices, &self.channel, s)?,
            backdoor_acc: backdoor_accuracy(
                &self.classifier,
                codec,
                &self.poisoned,
                erased,
                self.target_label,
                &self.channel,
                s,
            )?,
            mse_clean: decode_mse(codec, &self.test, &self.test_indices, &self.channel, s)?,
            mse_erased: decode_mse(codec, &self.poisoned, erased, &self.channel, s)?,
        })
    }

    /// Runs `method` from the trained codec. Returns the resulting codec,
    /// its engine report (if any) and the per-epoch curves.
    pub fn apply(
        &self,
        method: Method,
        train: &TrainConfig,
        unlearn: &UnlearnConfig,
    ) -> Result<(SemanticCodec, Option<TrainReport>, Curves)> {
        let (erased, remaining) = (&self.split.erased_indices, &self.split.remaining_indices);
        let data = &self.poisoned;
        let mut rec = CurveRecorder::new(self);
        let out = match method {
            Method::None => return Ok((self.original.deep_clone(), None, Curves::default())),
            Method::Scu => scu_unlearn_observed(&self.original, data, erased, remaining, &self.channel, unlearn, self.seed, &mut rec)?,
            Method::ScuNoCc => {
                let cfg = UnlearnConfig {
                    alpha2: 0.0,
                    ..unlearn.clone()
                };
                scu_unlearn_observed(&self.original, data, erased, remaining, &self.channel, &cfg, self.seed, &mut rec)?
            }
            Method::Vbu => vbu_unlearn_observed(&self.original, data, erased, &self.channel, unlearn, self.seed, &mut rec)?,
            Method::Hbu => {
                let (codec, rep) = hbu_unlearn(&self.original, data, erased, remaining, &self.channel, unlearn, self.seed)?;
                rec.after_epoch(0, &codec, rep.losses[0])?;
                (codec, rep)
            }
            Method::Retrain => {
                train_original_observed(data, remaining, &self.codec_cfg, &self.channel, train, self.seed, &mut rec)?
            }
        };
        let curves = rec.curves;
        Ok((out.0, Some(out.1), curves))
    }
}

/// Short-hand evaluation after each epoch: reconstruction error on the
/// clean test set and on `D_e`.
struct CurveRecorder<'a> {
    cell: &'a PreparedCell,
    curves: Curves,
}

impl<'a> CurveRecorder<'a> {
    fn new(cell: &'a PreparedCell) -> Self {
        CurveRecorder {
            cell,
            curves: Curves::default(),
        }
    }
}

impl EpochObserver for CurveRecorder<'_> {
    fn after_epoch(&mut self, _: usize, codec: &SemanticCodec, loss: f64) -> Result<()> {
        let c = self.cell;
        let s = c.eval_seed();
        self.curves.loss.push(loss);
        self.curves.mse_clean.push(decode_mse(codec, &c.test, &c.test_indices, &c.channel, s)?);
        self.curves.mse_erased.push(decode_mse(codec, &c.poisoned, &c.split.erased_indices, &c.channel, s)?);
        Ok(())
    }
}

fn run_cell(cfg: &ExperimentConfig, edr: f64, channel: ChannelConfig, seed: u64) -> Result<Vec<MetricsReport>> {
    let cell = PreparedCell::prepare(cfg, edr, channel, seed)?;
    let echo = cfg.to_pairs();
    let mut reports = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let (codec, rep, curves) = cell.apply(method, &cfg.train, &cfg.unlearn)?;
        let h = cell.headline(&codec)?;
        let runtime_s = match (&rep, cfg.timing) {
            (Some(r), true) => r.seconds,
            _ => 0.0,
        };
        reports.push(MetricsReport {
            method,
            edr,
            snr_db: channel.snr_db,
            channel: channel.kind,
            seed,
            clean_acc: h.clean_acc,
            backdoor_acc: h.backdoor_acc,
            mse_clean: h.mse_clean,
            mse_erased: h.mse_erased,
            runtime_s,
            pre: cell.pre,
            classifier_train_acc: cell.classifier_train_acc,
            erased_count: cell.split.erased_indices.len(),
            checksum: codec.checksum(),
            curves,
            config: echo.clone(),
        });
    }
    Ok(reports)
}

/// Worker count from the `THREADS` environment variable, defaulting to the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var("THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sort_key(r: &MetricsReport) -> (&'static str, f64, f64, String, u64) {
    (r.method.name(), r.edr, r.snr_db, r.channel.to_string(), r.seed)
}

/// Sorts by `(method, edr, snr_db, channel, seed)`.
pub fn sort_reports(reports: &mut [MetricsReport]) {
    reports.sort_by(|a, b| {
        let (ka, kb) = (sort_key(a), sort_key(b));
        ka.0.cmp(kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
            .then(ka.4.cmp(&kb.4))
    });
}

/// Runs every `(edr, channel, seed)` cell on up to `workers` threads. A
/// failing cell is recorded in `failures` and does not affect the others.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &edr in &cfg.edr {
        for channel in cfg.channel.configs() {
            for &seed in &cfg.seeds {
                cells.push((edr, channel, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(edr, channel, seed)| (edr, channel, seed, run_cell(cfg, edr, channel, seed)))
            .collect()
    });
    let mut outcome = ExperimentOutcome::default();
    for (edr, channel, seed, result) in results {
        match result {
            Ok(mut reports) => outcome.reports.append(&mut reports),
            Err(e) => outcome.failures.push(CellFailure {
                edr,
                snr_db: channel.snr_db,
                channel: channel.kind,
                seed,
                numeric: e.is_numeric(),
                message: e.to_string(),
            }),
        }
    }
    sort_reports(&mut outcome.reports);
    Ok(outcome)
}
