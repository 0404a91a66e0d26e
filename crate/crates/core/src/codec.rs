//! VIB semantic encoder/decoder pair and the downstream classifier.
//!
//! The encoder maps a flattened image to `2·d` outputs split into the
//! mean and log-variance of a diagonal Gaussian over the latent; the
//! decoder maps a (channel-corrupted) latent back to pixel space through a
//! sigmoid. Both halves are ReLU MLPs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{no_grad, Parameter, Tensor};

/// Clamp range of the encoder's log-variance head.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// One affine layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    fn init(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        let b = (0..fan_out).map(|_| dist.sample(rng)).collect();
        Ok(Linear {
            weight: Parameter::new(format!("{name}.weight"), &[fan_in, fan_out], w)?,
            bias: Parameter::new(format!("{name}.bias"), &[fan_out], b)?,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.tensor.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight.tensor)?.add(&self.bias.tensor)
    }
}

/// ReLU between layers, identity after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new(name: &str, widths: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::contract(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_features()];
        w.extend(self.layers.iter().map(Linear::out_features));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::out_features)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "mlp_forward",
                lhs: x.shape().to_vec(),
                rhs: vec![self.input_dim()],
            });
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                h = h.relu()?;
            }
        }
        Ok(h)
    }

    pub fn parameters(&self) -> Vec<Parameter> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect()
    }

    /// Deep copy. With `trainable == false` the copy never accumulates
    /// gradients.
    fn duplicate(&self, trainable: bool) -> Mlp {
        let copy = |p: &Parameter| {
            let shape = p.tensor.shape().to_vec();
            let values = p.tensor.to_vec();
            let tensor = if trainable {
                Tensor::variable(&shape, values)
            } else {
                Tensor::new(&shape, values)
            }
            .expect("shape already validated");
            Parameter {
                name: p.name.clone(),
                tensor,
            }
        };
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: copy(&l.weight),
                    bias: copy(&l.bias),
                })
                .collect(),
        }
    }

    fn to_record(&self) -> MlpRecord {
        MlpRecord {
            widths: self.widths(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weight: l.weight.tensor.to_vec(),
                    bias: l.bias.tensor.to_vec(),
                })
                .collect(),
        }
    }

    fn from_record(name: &str, rec: &MlpRecord) -> Result<Mlp> {
        if rec.widths.len() != rec.layers.len() + 1 {
            return Err(Error::contract("layer count does not match widths"));
        }
        let layers = rec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (fan_in, fan_out) = (rec.widths[i], rec.widths[i + 1]);
                Ok(Linear {
                    weight: Parameter::new(format!("{name}.{i}.weight"), &[fan_in, fan_out], l.weight.clone())?,
                    bias: Parameter::new(format!("{name}.{i}.bias"), &[fan_out], l.bias.clone())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }
}

/// Hex SHA-256 over the bit patterns of every parameter value.
pub fn parameter_checksum(params: &[Parameter]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.name.as_bytes());
        for v in p.tensor.values().iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Diagonal Gaussian `N(mu, exp(logvar))` per row.
#[derive(Debug, Clone)]
pub struct GaussianLatent {
    pub mu: Tensor,
    pub logvar: Tensor,
}

impl GaussianLatent {
    pub fn new(mu: Tensor, logvar: Tensor) -> Result<Self> {
        if mu.shape() != logvar.shape() {
            return Err(Error::Dimension {
                op: "gaussian_latent",
                lhs: mu.shape().to_vec(),
                rhs: logvar.shape().to_vec(),
            });
        }
        Ok(GaussianLatent { mu, logvar })
    }

    pub fn batch(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }

    /// Pathwise sample `mu + exp(logvar/2) ⊙ ε`, `ε ~ N(0, I)` held constant.
    pub fn reparameterize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Tensor> {
        let eps: Vec<f64> = (0..self.mu.len()).map(|_| rng.sample(StandardNormal)).collect();
        let eps = Tensor::new(self.mu.shape(), eps)?;
        let std = self.logvar.scale(0.5)?.exp()?;
        self.mu.add(&std.mul(&eps)?)
    }
}

/// Architecture of a [`SemanticCodec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub beta: f64,
}

impl CodecConfig {
    pub fn desk(input_dim: usize) -> Self {
        CodecConfig {
            input_dim,
            latent_dim: 16,
            hidden: vec![256, 128, 64],
            beta: 1e-2,
        }
    }
}

/// Encoder `f_θ` and decoder `g_θ` of one semantic link.
#[derive(Debug, Clone)]
pub struct SemanticCodec {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub beta: f64,
}

impl SemanticCodec {
    pub fn new(cfg: &CodecConfig, seed: u64) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.input_dim == 0 {
            return Err(Error::contract("codec dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_widths = vec![cfg.input_dim];
        enc_widths.extend(&cfg.hidden);
        enc_widths.push(2 * cfg.latent_dim);
        let mut dec_widths = vec![cfg.latent_dim];
        dec_widths.extend(cfg.hidden.iter().rev());
        dec_widths.push(cfg.input_dim);
        Ok(SemanticCodec {
            encoder: Mlp::new("encoder", &enc_widths, &mut rng)?,
            decoder: Mlp::new("decoder", &dec_widths, &mut rng)?,
            latent_dim: cfg.latent_dim,
            beta: cfg.beta,
        })
    }

    pub fn config(&self) -> CodecConfig {
        let enc = self.encoder.widths();
        CodecConfig {
            input_dim: self.input_dim(),
            latent_dim: self.latent_dim,
            hidden: enc[1..enc.len() - 1].to_vec(),
            beta: self.beta,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn encode(&self, x: &Tensor) -> Result<GaussianLatent> {
        let h = self.encoder.forward(x)?;
        let d = self.latent_dim;
        let mu = h.narrow(0, d)?;
        let logvar = h.narrow(d, d)?.clamp(LOGVAR_MIN, LOGVAR_MAX)?;
        GaussianLatent::new(mu, logvar)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.forward(z)?.sigmoid()
    }

    pub fn parameters(&self) -> Vec<Parameter> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p
    }

    pub fn checksum(&self) -> String {
        parameter_checksum(&self.parameters())
    }

    /// A trainable deep copy.
    pub fn deep_clone(&self) -> SemanticCodec {
        SemanticCodec {
            encoder: self.encoder.duplicate(true),
            decoder: self.decoder.duplicate(true),
            latent_dim: self.latent_dim,
            beta: self.beta,
        }
    }

    /// A copy whose parameters are graph constants: it participates in
    /// forward passes but never receives gradients or updates.
    pub fn frozen_clone(&self) -> SemanticCodec {
        SemanticCodec {
            encoder: self.encoder.duplicate(false),
            decoder: self.decoder.duplicate(false),
            latent_dim: self.latent_dim,
            beta: self.beta,
        }
    }

    pub fn same_architecture(&self, other: &SemanticCodec) -> bool {
        self.encoder.widths() == other.encoder.widths() && self.decoder.widths() == other.decoder.widths()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = CodecRecord {
            format: CODEC_FORMAT.into(),
            input_dim: self.input_dim(),
            latent_dim: self.latent_dim,
            beta: self.beta,
            encoder: self.encoder.to_record(),
            decoder: self.decoder.to_record(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: CodecRecord = serde_json::from_str(text)?;
        if rec.format != CODEC_FORMAT {
            return Err(Error::contract(format!("not a codec document: {}", rec.format)));
        }
        let codec = SemanticCodec {
            encoder: Mlp::from_record("encoder", &rec.encoder)?,
            decoder: Mlp::from_record("decoder", &rec.decoder)?,
            latent_dim: rec.latent_dim,
            beta: rec.beta,
        };
        if codec.encoder.output_dim() != 2 * rec.latent_dim
            || codec.decoder.input_dim() != rec.latent_dim
            || codec.decoder.output_dim() != rec.input_dim
            || codec.encoder.input_dim() != rec.input_dim
        {
            return Err(Error::contract("codec layer widths disagree with declared dimensions"));
        }
        Ok(codec)
    }
}

const CODEC_FORMAT: &str = "semantic-codec/v1";
const CLASSIFIER_FORMAT: &str = "downstream-classifier/v1";

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpRecord {
    widths: Vec<usize>,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct CodecRecord {
    format: String,
    input_dim: usize,
    latent_dim: usize,
    beta: f64,
    encoder: MlpRecord,
    decoder: MlpRecord,
}

#[derive(Serialize, Deserialize)]
struct ClassifierRecord {
    format: String,
    network: MlpRecord,
}

/// Classifier trained on decoder outputs; it is what carries the
/// backdoor signal downstream of the semantic link.
#[derive(Debug, Clone)]
pub struct DownstreamClassifier {
    pub network: Mlp,
}

/// Training settings for [`DownstreamClassifier::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 128,
            epochs: 20,
            lr: 1e-3,
            batch: 16,
        }
    }
}

impl DownstreamClassifier {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(DownstreamClassifier {
            network: Mlp::new("classifier", &[input_dim, hidden, classes], &mut rng)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.network.output_dim()
    }

    pub fn classify(&self, x_hat: &Tensor) -> Result<Tensor> {
        self.network.forward(x_hat)
    }

    /// Arg-max class per row.
    pub fn predict(&self, x_hat: &Tensor) -> Result<Vec<usize>> {
        let logits = no_grad(|| self.classify(x_hat))?;
        let c = self.classes();
        let values = logits.values();
        Ok(values
            .chunks(c)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    /// Fits a fresh classifier with softmax cross-entropy and Adam.
    /// Returns the classifier and its final training accuracy.
    pub fn train(
        samples: &Tensor,
        labels: &[usize],
        classes: usize,
        cfg: &ClassifierConfig,
        seed: u64,
    ) -> Result<(Self, f64)> {
        let n = samples.rows();
        if labels.is_empty() || n != labels.len() {
            return Err(Error::contract("classifier training needs a non-empty labelled set"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!("label {bad} out of range for {classes} classes")));
        }
        let dim = samples.cols();
        let clf = DownstreamClassifier::new(dim, cfg.hidden, classes, seed)?;
        let params = clf.network.parameters();
        let mut opt = crate::tensor::Adam::new(cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c1a5);
        let data = samples.values().clone();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch.max(1)) {
                let x = gather_rows(&data, dim, chunk)?;
                let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let loss = cross_entropy(&clf.classify(&x)?, &y)?;
                loss.backward()?;
                opt.step(&params)?;
            }
        }
        let pred = clf.predict(samples)?;
        let acc = pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / n as f64;
        Ok((clf, acc))
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ClassifierRecord {
            format: CLASSIFIER_FORMAT.into(),
            network: self.network.to_record(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ClassifierRecord = serde_json::from_str(text)?;
        if rec.format != CLASSIFIER_FORMAT {
            return Err(Error::contract(format!("not a classifier document: {}", rec.format)));
        }
        Ok(DownstreamClassifier {
            network: Mlp::from_record("classifier", &rec.network)?,
        })
    }
}

/// Mean softmax cross-entropy of `logits` (`batch × classes`).
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (m, c) = (logits.rows(), logits.cols());
    if labels.len() != m {
        return Err(Error::Dimension {
            op: "cross_entropy",
            lhs: logits.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let mut onehot = vec![0.0; m * c];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * c + l] = 1.0;
    }
    let onehot = Tensor::new(&[m, c], onehot)?;
    let picked = logits.mul(&onehot)?.sum_axis(1)?;
    logits.log_sum_exp(1)?.sub(&picked)?.mean()
}

/// Rows `idx` of a row-major `? × dim` buffer, as a constant tensor.
pub fn gather_rows(data: &[f64], dim: usize, idx: &[usize]) -> Result<Tensor> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }
    Tensor::new(&[idx.len(), dim], out)
}
