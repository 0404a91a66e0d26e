//! End-to-end procedures: original VIB training, the three unlearning
//! engines (SCU, VBU, HBU) and retraining from scratch.
//!
//! Every engine returns a fresh codec and leaves its input untouched.
//! Reported seconds cover the engine's own work only; per-epoch
//! observers run outside the timed region.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, Transmit};
use crate::codec::{CodecConfig, SemanticCodec};
use crate::data::{sample_batch, LabeledDataset};
use crate::error::{Error, Result};
use crate::losses::{
    cc_loss, joint_unlearn_terms, kl_diag_gauss_to_std_normal, recon_nll, total_unlearn_loss, vib_loss,
    UnlearnConfig,
};
use crate::tensor::{Adam, Optimizer, Parameter};

/// What an experiment does to the trained codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "scu")]
    Scu,
    /// SCU with the contrastive compensation switched off (`α2 = 0`).
    #[serde(rename = "scu-nocc")]
    ScuNoCc,
    #[serde(rename = "vbu")]
    Vbu,
    #[serde(rename = "hbu")]
    Hbu,
    #[serde(rename = "retrain")]
    Retrain,
    /// Leave the codec as trained.
    #[serde(rename = "none")]
    None,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Scu,
        Method::ScuNoCc,
        Method::Vbu,
        Method::Hbu,
        Method::Retrain,
        Method::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scu => "scu",
            Method::ScuNoCc => "scu-nocc",
            Method::Vbu => "vbu",
            Method::Hbu => "hbu",
            Method::Retrain => "retrain",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Settings for fitting a codec from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 1e-4,
            batch: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per epoch.
    pub losses: Vec<f64>,
    pub seconds: f64,
    pub checksum: String,
    pub seed: u64,
}

/// Called after every epoch with the codec as it currently stands.
pub trait EpochObserver {
    fn after_epoch(&mut self, epoch: usize, codec: &SemanticCodec, loss: f64) -> Result<()>;
}

/// Observer that does nothing.
pub struct Unobserved;

impl EpochObserver for Unobserved {
    fn after_epoch(&mut self, _: usize, _: &SemanticCodec, _: f64) -> Result<()> {
        Ok(())
    }
}

/// Random streams used by one engine invocation.
struct Streams {
    sampling: ChaCha8Rng,
    latent: ChaCha8Rng,
    channel: Channel,
}

impl Streams {
    fn new(channel: &ChannelConfig, seed: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Streams {
            sampling: stream(1),
            latent: stream(2),
            channel: Channel::with_stream(channel.with_seed(channel.seed ^ seed), 3),
        }
    }
}

struct Stopwatch(Duration);

impl Stopwatch {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0 += start.elapsed();
        out
    }

    fn seconds(&self) -> f64 {
        self.0.as_secs_f64().max(f64::MIN_POSITIVE)
    }
}

fn check_loss(value: f64, what: &str, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("{what} diverged at step {step}")))
    }
}

fn report(losses: Vec<f64>, clock: &Stopwatch, codec: &SemanticCodec, seed: u64) -> TrainReport {
    TrainReport {
        losses,
        seconds: clock.seconds(),
        checksum: codec.checksum(),
        seed,
    }
}

/// Fits a fresh codec on `indices` of `data` with the VIB loss.
pub fn train_original(
    data: &LabeledDataset,
    indices: &[usize],
    codec_cfg: &CodecConfig,
    channel: &ChannelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SemanticCodec, TrainReport)> {
    train_original_observed(data, indices, codec_cfg, channel, cfg, seed, &mut Unobserved)
}

pub fn train_original_observed(
    data: &LabeledDataset,
    indices: &[usize],
    codec_cfg: &CodecConfig,
    channel: &ChannelConfig,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn EpochObserver,
) -> Result<(SemanticCodec, TrainReport)> {
    if indices.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    if codec_cfg.input_dim != data.pixels() {
        return Err(Error::Dimension {
            op: "train_original",
            lhs: vec![codec_cfg.input_dim],
            rhs: vec![data.pixels()],
        });
    }
    let mut clock = Stopwatch(Duration::ZERO);
    let codec = clock.time(|| SemanticCodec::new(codec_cfg, seed))?;
    let params = codec.parameters();
    let mut opt = Adam::new(cfg.lr);
    let mut streams = Streams::new(channel, seed);
    let mut order = indices.to_vec();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let epoch_loss = clock.time(|| -> Result<f64> {
            order.shuffle(&mut streams.sampling);
            let mut total = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(cfg.batch.max(1)) {
                let x = data.batch(chunk)?;
                let loss = vib_loss(&x, &codec, &mut streams.channel, &mut streams.latent)?;
                check_loss(loss.item(), "training loss", step)?;
                loss.backward()?;
                opt.step(&params)?;
                total += loss.item();
                batches += 1;
                step += 1;
            }
            Ok(total / batches as f64)
        })?;
        losses.push(epoch_loss);
        observer.after_epoch(epoch, &codec, epoch_loss)?;
    }
    let rep = report(losses, &clock, &codec, seed);
    Ok((codec, rep))
}

/// Retraining from scratch on the remaining set: the gold standard every
/// unlearning method is compared against.
pub fn retrain_oracle(
    data: &LabeledDataset,
    remaining: &[usize],
    codec_cfg: &CodecConfig,
    channel: &ChannelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SemanticCodec, TrainReport)> {
    train_original(data, remaining, codec_cfg, channel, cfg, seed)
}

fn check_sets(erased: &[usize], remaining: Option<&[usize]>, cfg: &UnlearnConfig) -> Result<()> {
    if erased.is_empty() {
        return Err(Error::contract("erased set is empty"));
    }
    if cfg.batch < 2 {
        return Err(Error::contract("unlearning minibatch must hold at least 2 samples"));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::contract("unlearning learning rate must be positive"));
    }
    if let Some(remaining) = remaining {
        if remaining.is_empty() {
            return Err(Error::contract("remaining set is empty"));
        }
        let mut sorted = remaining.to_vec();
        sorted.sort_unstable();
        if erased.iter().any(|i| sorted.binary_search(i).is_ok()) {
            return Err(Error::contract("erased and remaining sets overlap"));
        }
    }
    Ok(())
}

/// Semantic communication unlearning: each epoch draws one minibatch from
/// each of `D_e` and `D_r` and takes one gradient step on
/// `α1·L_JU + α2·L_CC` against a frozen copy of the input codec.
pub fn scu_unlearn(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    remaining: &[usize],
    channel: &ChannelConfig,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<(SemanticCodec, TrainReport)> {
    scu_unlearn_observed(codec, data, erased, remaining, channel, cfg, seed, &mut Unobserved)
}

#[allow(clippy::too_many_arguments)]
pub fn scu_unlearn_observed(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    remaining: &[usize],
    channel: &ChannelConfig,
    cfg: &UnlearnConfig,
    seed: u64,
    observer: &mut dyn EpochObserver,
) -> Result<(SemanticCodec, TrainReport)> {
    check_sets(erased, Some(remaining), cfg)?;
    let mut clock = Stopwatch(Duration::ZERO);
    let (live, frozen) = clock.time(|| (codec.deep_clone(), codec.frozen_clone()));
    let params = live.parameters();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut streams = Streams::new(channel, seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = clock.time(|| -> Result<f64> {
            let x_e = data.batch(&sample_batch(erased, cfg.batch, &mut streams.sampling))?;
            let x_r = data.batch(&sample_batch(remaining, cfg.batch, &mut streams.sampling))?;
            let lat_e = live.encode(&x_e)?;
            let z_e = lat_e.reparameterize(&mut streams.latent)?;
            let received_e = streams.channel.transmit(&z_e)?;
            let ju = joint_unlearn_terms(&x_e, &lat_e, &received_e, &live, &frozen)?.total()?;
            let loss = if cfg.alpha2 == 0.0 {
                ju.scale(cfg.alpha1)?
            } else {
                let z_r = live.encode(&x_r)?.reparameterize(&mut streams.latent)?;
                let cc = cc_loss(&z_r, &z_e, &x_r, &live, &mut streams.channel, cfg.tau)?;
                total_unlearn_loss(&ju, &cc, cfg)?
            };
            check_loss(loss.item(), "SCU loss", epoch)?;
            loss.backward()?;
            opt.step(&params)?;
            Ok(loss.item())
        })?;
        losses.push(loss);
        observer.after_epoch(epoch, &live, loss)?;
    }
    let rep = report(losses, &clock, &live, seed);
    Ok((live, rep))
}

/// Variational Bayesian unlearning baseline: only the mutual-information
/// terms on erased minibatches, with no anchor to the trained codec and no
/// compensation on remaining data.
pub fn vbu_unlearn(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    channel: &ChannelConfig,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<(SemanticCodec, TrainReport)> {
    vbu_unlearn_observed(codec, data, erased, channel, cfg, seed, &mut Unobserved)
}

pub fn vbu_unlearn_observed(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    channel: &ChannelConfig,
    cfg: &UnlearnConfig,
    seed: u64,
    observer: &mut dyn EpochObserver,
) -> Result<(SemanticCodec, TrainReport)> {
    check_sets(erased, None, cfg)?;
    let mut clock = Stopwatch(Duration::ZERO);
    let live = clock.time(|| codec.deep_clone());
    let params = live.parameters();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut streams = Streams::new(channel, seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = clock.time(|| -> Result<f64> {
            let x_e = data.batch(&sample_batch(erased, cfg.batch, &mut streams.sampling))?;
            let lat = live.encode(&x_e)?;
            let received = streams.channel.transmit(&lat.reparameterize(&mut streams.latent)?)?;
            let x_hat = live.decode(&received)?;
            let loss = kl_diag_gauss_to_std_normal(&lat)?.sub(&recon_nll(&x_e, &x_hat)?)?;
            check_loss(loss.item(), "VBU loss", epoch)?;
            loss.backward()?;
            opt.step(&params)?;
            Ok(loss.item())
        })?;
        losses.push(loss);
        observer.after_epoch(epoch, &live, loss)?;
    }
    let rep = report(losses, &clock, &live, seed);
    Ok((live, rep))
}

/// One-step Fisher-preconditioned removal:
/// `u = (F + λI)⁻¹ Σ_e ∇ℓ_e`, with `F` the mean of squared per-sample
/// gradients over the remaining set, rescaled so `‖u‖ ≤ clip_norm`.
pub fn fisher_removal_update(
    remaining_grads: &[Vec<f64>],
    erased_grads: &[Vec<f64>],
    damping: f64,
    clip_norm: f64,
) -> Result<Vec<f64>> {
    let dim = erased_grads
        .first()
        .or(remaining_grads.first())
        .map(Vec::len)
        .ok_or_else(|| Error::contract("no gradients supplied"))?;
    if remaining_grads.is_empty() {
        return Err(Error::contract("Fisher estimate needs remaining samples"));
    }
    let mut fisher = vec![0.0; dim];
    for g in remaining_grads {
        fisher.iter_mut().zip(g).for_each(|(f, g)| *f += g * g);
    }
    let n = remaining_grads.len() as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    if fisher.iter().any(|f| !f.is_finite()) {
        return Err(Error::numeric("Fisher diagonal"));
    }
    let mut total = vec![0.0; dim];
    for g in erased_grads {
        total.iter_mut().zip(g).for_each(|(t, g)| *t += g);
    }
    let mut update: Vec<f64> = total.iter().zip(&fisher).map(|(g, f)| g / (f + damping)).collect();
    let norm = update.iter().map(|u| u * u).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::numeric("HBU update"));
    }
    if norm > clip_norm {
        let s = clip_norm / norm;
        update.iter_mut().for_each(|u| *u *= s);
    }
    Ok(update)
}

fn flat_grads(params: &[Parameter]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| p.tensor.grad().unwrap_or_else(|| vec![0.0; p.tensor.len()]))
        .collect()
}

/// Hessian-based unlearning baseline with a diagonal empirical Fisher in
/// place of the Hessian. One update: `θ ← θ + u` per
/// [`fisher_removal_update`].
pub fn hbu_unlearn(
    codec: &SemanticCodec,
    data: &LabeledDataset,
    erased: &[usize],
    remaining: &[usize],
    channel: &ChannelConfig,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<(SemanticCodec, TrainReport)> {
    if erased.is_empty() || remaining.is_empty() {
        return Err(Error::contract("HBU needs non-empty erased and remaining sets"));
    }
    if !(cfg.damping > 0.0) || !(cfg.clip_norm > 0.0) {
        return Err(Error::contract("HBU damping and clip norm must be positive"));
    }
    let mut clock = Stopwatch(Duration::ZERO);
    let (live, erased_loss) = clock.time(|| -> Result<(SemanticCodec, f64)> {
        let mut live = codec.deep_clone();
        live.beta = cfg.beta;
        let params = live.parameters();
        let mut streams = Streams::new(channel, seed);
        let mut per_sample = |i: usize| -> Result<(Vec<f64>, f64)> {
            let loss = vib_loss(&data.batch(&[i])?, &live, &mut streams.channel, &mut streams.latent)?;
            loss.backward()?;
            let g = flat_grads(&params);
            params.iter().for_each(|p| p.tensor.zero_grad());
            Ok((g, loss.item()))
        };
        let mut remaining_grads = Vec::with_capacity(remaining.len());
        for &i in remaining {
            remaining_grads.push(per_sample(i)?.0);
        }
        let mut erased_grads = Vec::with_capacity(erased.len());
        let mut erased_loss = 0.0;
        for &i in erased {
            let (g, l) = per_sample(i)?;
            erased_grads.push(g);
            erased_loss += l;
        }
        let update = fisher_removal_update(&remaining_grads, &erased_grads, cfg.damping, cfg.clip_norm)?;
        let mut offset = 0;
        for p in &params {
            let n = p.tensor.len();
            p.tensor.update_values(|v| v.iter_mut().zip(&update[offset..offset + n]).for_each(|(v, u)| *v += u));
            offset += n;
        }
        live.beta = codec.beta;
        Ok((live, erased_loss / erased.len() as f64))
    })?;
    let rep = report(vec![erased_loss], &clock, &live, seed);
    Ok((live, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelKind;
    use crate::data::generate_synthetic;
    use crate::tensor::Tensor;

    fn tiny() -> (LabeledDataset, CodecConfig) {
        let ds = generate_synthetic(40, 4, 4, 4, 3).unwrap();
        let cfg = CodecConfig {
            input_dim: 16,
            latent_dim: 2,
            hidden: vec![8],
            beta: 0.01,
        };
        (ds, cfg)
    }

    fn fast_unlearn() -> UnlearnConfig {
        UnlearnConfig {
            epochs: 3,
            lr: 0.01,
            batch: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_lr_training_leaves_initialisation() {
        let (ds, cfg) = tiny();
        let train = TrainConfig {
            epochs: 1,
            lr: 0.0,
            batch: 8,
        };
        let ch = ChannelConfig::new(ChannelKind::Awgn, 10.0);
        let (codec, rep) = train_original(&ds, &ds.all_indices(), &cfg, &ch, &train, 5).unwrap();
        assert_eq!(codec.checksum(), SemanticCodec::new(&cfg, 5).unwrap().checksum());
        assert_eq!(rep.losses.len(), 1);
        assert!(rep.seconds > 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, cfg) = tiny();
        let train = TrainConfig {
            epochs: 2,
            lr: 1e-3,
            batch: 8,
        };
        let ch = ChannelConfig::new(ChannelKind::Rayleigh, 10.0);
        let a = train_original(&ds, &ds.all_indices(), &cfg, &ch, &train, 9).unwrap().1;
        let b = train_original(&ds, &ds.all_indices(), &cfg, &ch, &train, 9).unwrap().1;
        assert_eq!(a.checksum, b.checksum);
        assert_eq!(a.losses, b.losses);
        assert!(train_original(&ds, &[], &cfg, &ch, &train, 9).is_err());
    }

    #[test]
    fn retrain_on_full_set_equals_original() {
        let (ds, cfg) = tiny();
        let train = TrainConfig {
            epochs: 1,
            lr: 1e-3,
            batch: 8,
        };
        let ch = ChannelConfig::default();
        let all = ds.all_indices();
        let a = train_original(&ds, &all, &cfg, &ch, &train, 2).unwrap().1;
        let b = retrain_oracle(&ds, &all, &cfg, &ch, &train, 2).unwrap().1;
        assert_eq!(a.checksum, b.checksum);
    }

    #[test]
    fn zero_epochs_return_input_unchanged() {
        let (ds, cfg) = tiny();
        let codec = SemanticCodec::new(&cfg, 1).unwrap();
        let ch = ChannelConfig::default();
        let un = UnlearnConfig {
            epochs: 0,
            ..fast_unlearn()
        };
        let (erased, remaining): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|i| i % 5 == 0);
        let (scu, rep) = scu_unlearn(&codec, &ds, &erased, &remaining, &ch, &un, 1).unwrap();
        assert_eq!(scu.checksum(), codec.checksum());
        assert!(rep.losses.is_empty());
        let (vbu, _) = vbu_unlearn(&codec, &ds, &erased, &ch, &un, 1).unwrap();
        assert_eq!(vbu.checksum(), codec.checksum());
    }

    #[test]
    fn engines_are_deterministic_and_leave_input_alone() {
        let (ds, cfg) = tiny();
        let codec = SemanticCodec::new(&cfg, 1).unwrap();
        let before = codec.checksum();
        let ch = ChannelConfig::default();
        let un = fast_unlearn();
        let (erased, remaining): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|i| i % 5 == 0);
        let a = scu_unlearn(&codec, &ds, &erased, &remaining, &ch, &un, 4).unwrap().1;
        let b = scu_unlearn(&codec, &ds, &erased, &remaining, &ch, &un, 4).unwrap().1;
        assert_eq!(a.checksum, b.checksum);
        assert_ne!(a.checksum, before);
        assert_eq!(a.losses.len(), 3);
        let h1 = hbu_unlearn(&codec, &ds, &erased, &remaining, &ch, &un, 4).unwrap().1;
        let h2 = hbu_unlearn(&codec, &ds, &erased, &remaining, &ch, &un, 4).unwrap().1;
        assert_eq!(h1.checksum, h2.checksum);
        assert_eq!(codec.checksum(), before);
    }

    #[test]
    fn engine_contracts() {
        let (ds, cfg) = tiny();
        let codec = SemanticCodec::new(&cfg, 1).unwrap();
        let ch = ChannelConfig::default();
        let un = UnlearnConfig {
            batch: 1,
            ..fast_unlearn()
        };
        assert!(scu_unlearn(&codec, &ds, &[0], &[1, 2], &ch, &un, 0).is_err());
        assert!(scu_unlearn(&codec, &ds, &[0, 1], &[1, 2], &ch, &fast_unlearn(), 0).is_err());
        assert!(scu_unlearn(&codec, &ds, &[], &[1, 2], &ch, &fast_unlearn(), 0).is_err());
        assert!(vbu_unlearn(&codec, &ds, &[], &ch, &fast_unlearn(), 0).is_err());
    }

    #[test]
    fn small_erased_set_is_sampled_with_replacement() {
        let (ds, cfg) = tiny();
        let codec = SemanticCodec::new(&cfg, 1).unwrap();
        let remaining: Vec<usize> = (2..ds.len()).collect();
        let un = UnlearnConfig {
            batch: 6,
            ..fast_unlearn()
        };
        scu_unlearn(&codec, &ds, &[0, 1], &remaining, &ChannelConfig::default(), &un, 0).unwrap();
    }

    /// Scalar model `ℓ(θ; x) = ½(θ − x)²` differentiated by the tape.
    fn toy_grad(theta: f64, x: f64) -> Vec<f64> {
        let t = Tensor::variable(&[1], vec![theta]).unwrap();
        let target = Tensor::new(&[1], vec![x]).unwrap();
        t.sub(&target).unwrap().square().unwrap().sum().unwrap().scale(0.5).unwrap().backward().unwrap();
        t.grad().unwrap()
    }

    #[test]
    fn fisher_update_matches_closed_form() {
        let theta = 0.4;
        let remaining = [1.0, -0.5, 2.0];
        let erased = 3.0;
        let damping = 1e-3;
        let rg: Vec<Vec<f64>> = remaining.iter().map(|&x| toy_grad(theta, x)).collect();
        let eg = vec![toy_grad(theta, erased)];
        let fisher: f64 = remaining.iter().map(|x| (theta - x).powi(2)).sum::<f64>() / 3.0;
        let expected = (theta - erased) / (fisher + damping);
        let got = fisher_removal_update(&rg, &eg, damping, 100.0).unwrap();
        assert!((got[0] - expected).abs() < 1e-10, "{} vs {expected}", got[0]);
        let clipped = fisher_removal_update(&rg, &eg, damping, 0.1).unwrap();
        assert!((clipped[0] - 0.1 * expected.signum()).abs() < 1e-10);
        let none = fisher_removal_update(&rg, &[toy_grad(theta, theta)], damping, 5.0).unwrap();
        assert_eq!(none, vec![0.0]);
        assert!(fisher_removal_update(&[vec![f64::INFINITY]], &eg, damping, 5.0).is_err());
    }
}
