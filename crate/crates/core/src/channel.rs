//! Physical link between encoder and decoder: `z' = h·z + n`.
//!
//! Fading is scalar per sample with perfect channel knowledge at the
//! receiver, which equalises by zero forcing, so the decoder sees
//! `z + n/|h|`. Noise power follows the configured SNR relative to the
//! mean power of the transmitted batch. The perturbation is a graph
//! constant; no gradient flows into `n` or `h`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gains below this magnitude are redrawn.
const MIN_GAIN: f64 = 1e-6;
const MAX_GAIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Rician,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Rician => "rician",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "rician" => Ok(ChannelKind::Rician),
            other => Err(Error::Config(format!("unknown channel kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    /// Line-of-sight to scattered power ratio; only read for Rician links.
    pub rician_k: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            kind: ChannelKind::Awgn,
            snr_db: 5.0,
            rician_k: 1.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn new(kind: ChannelKind, snr_db: f64) -> Self {
        ChannelConfig {
            kind,
            snr_db,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::Config(format!("rician_k must be non-negative, got {}", self.rician_k)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `σ² = signal_power / 10^(snr_db/10)`.
pub fn snr_db_to_noise_var(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(Error::contract(format!(
            "signal power must be positive, got {signal_power} (all-zero latent batch?)"
        )));
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (re / std::f64::consts::SQRT_2, im / std::f64::consts::SQRT_2)
}

/// Draws one fading magnitude `|h|` for `kind`; AWGN is always 1.
pub fn fading_gain<R: Rng + ?Sized>(kind: ChannelKind, rician_k: f64, rng: &mut R) -> Result<f64> {
    if kind == ChannelKind::Awgn {
        return Ok(1.0);
    }
    for _ in 0..MAX_GAIN_DRAWS {
        let (re, im) = complex_normal(rng);
        let g = match kind {
            ChannelKind::Rayleigh => re.hypot(im),
            _ => {
                let los = (rician_k / (rician_k + 1.0)).sqrt();
                let scatter = (1.0 / (rician_k + 1.0)).sqrt();
                (los + scatter * re).hypot(scatter * im)
            }
        };
        if g >= MIN_GAIN {
            return Ok(g);
        }
    }
    Err(Error::numeric(format!("fading gain below {MIN_GAIN} after {MAX_GAIN_DRAWS} draws")))
}

/// The additive perturbation `n/|h|` the receiver sees for a batch with
/// values `z` laid out `rows × cols`.
pub fn draw_perturbation<R: Rng + ?Sized>(
    z: &[f64],
    rows: usize,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("transmit input"));
    }
    let power = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    let sigma = snr_db_to_noise_var(cfg.snr_db, power)?.sqrt();
    let cols = z.len() / rows.max(1);
    let mut out = Vec::with_capacity(z.len());
    for _ in 0..rows {
        let gain = fading_gain(cfg.kind, cfg.rician_k, rng)?;
        for _ in 0..cols {
            let n: f64 = rng.sample(StandardNormal);
            out.push(sigma * n / gain);
        }
    }
    Ok(out)
}

/// Sends a `batch × d` latent through the channel.
pub fn transmit<R: Rng + ?Sized>(z: &Tensor, cfg: &ChannelConfig, rng: &mut R) -> Result<Tensor> {
    let noise = draw_perturbation(&z.values(), z.rows(), cfg, rng)?;
    z.add(&Tensor::new(z.shape(), noise)?)
}

/// Anything that can carry a latent batch from encoder to decoder.
pub trait Transmit {
    fn transmit(&mut self, z: &Tensor) -> Result<Tensor>;
}

/// A simulated link owning its own noise stream.
#[derive(Debug, Clone)]
pub struct Channel {
    pub cfg: ChannelConfig,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(cfg: ChannelConfig) -> Self {
        Channel {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        }
    }

    /// Same configuration, independent stream derived from `stream`.
    pub fn with_stream(cfg: ChannelConfig, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Channel { cfg, rng }
    }
}

impl Transmit for Channel {
    fn transmit(&mut self, z: &Tensor) -> Result<Tensor> {
        transmit(z, &self.cfg, &mut self.rng)
    }
}

/// Replays a fixed sequence of perturbations, one per call. Used to hold
/// channel noise constant while a loss is differentiated numerically.
#[derive(Debug, Clone)]
pub struct ReplayChannel {
    perturbations: Vec<Vec<f64>>,
    next: usize,
}

impl ReplayChannel {
    pub fn new(perturbations: Vec<Vec<f64>>) -> Self {
        ReplayChannel { perturbations, next: 0 }
    }

    /// Records what `inner` adds on each call.
    pub fn record<T: Transmit>(inner: &mut T, batches: &[Tensor]) -> Result<Self> {
        let mut perturbations = Vec::with_capacity(batches.len());
        for z in batches {
            let out = inner.transmit(z)?;
            perturbations.push(out.values().iter().zip(z.values().iter()).map(|(o, i)| o - i).collect());
        }
        Ok(ReplayChannel::new(perturbations))
    }

    pub fn rewind(&mut self) {
        self.next = 0;
    }
}

impl Transmit for ReplayChannel {
    fn transmit(&mut self, z: &Tensor) -> Result<Tensor> {
        let noise = self
            .perturbations
            .get(self.next % self.perturbations.len().max(1))
            .ok_or_else(|| Error::contract("replay channel holds no perturbations"))?;
        self.next += 1;
        z.add(&Tensor::new(z.shape(), noise.clone())?)
    }
}

/// A noiseless link.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealChannel;

impl Transmit for IdealChannel {
    fn transmit(&mut self, z: &Tensor) -> Result<Tensor> {
        Ok(z.clone())
    }
}
