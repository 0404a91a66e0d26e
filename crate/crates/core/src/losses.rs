//! Training and unlearning objectives as differentiable expressions.
//!
//! * [`vib_loss`]: unsupervised VIB, `β·KL(q(z|x) ‖ N(0, I)) + NLL(x | z')`.
//! * [`ju_loss`]: joint unlearning on erased samples. Mutual-information
//!   terms use the same variational bounds as training (KL to the prior
//!   for the encoder, negated reconstruction NLL for the decoder), each
//!   paired with a KL anchor to a frozen copy of the trained codec.
//! * [`cc_loss`]: contrastive compensation. Remaining samples are anchors
//!   and positives, erased samples the only negatives, plus the
//!   reconstruction loss on remaining samples.
//!
//! The decoder likelihood is a unit-variance Gaussian around `x̂`, so
//! NLL reduces to `0.5‖x − x̂‖²` and KL between two decoders reduces to
//! `0.5‖x̂₁ − x̂₂‖²`. Every batch term is a mean over rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Transmit;
use crate::codec::{GaussianLatent, SemanticCodec};
use crate::error::{Error, Result};
use crate::tensor::{OptimizerKind, Tensor};

/// Added inside the contrastive log to keep the ratio finite.
pub const CC_EPS: f64 = 1e-12;

/// Hyper-parameters shared by the unlearning engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnConfig {
    /// Weight of the joint-unlearning loss.
    pub alpha1: f64,
    /// Weight of the contrastive-compensation loss.
    pub alpha2: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// β of the VIB loss whenever the engines evaluate it (HBU gradients).
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Minibatch size drawn from each of the erased and remaining sets.
    pub batch: usize,
    /// Diagonal damping added to the Fisher approximation (HBU).
    pub damping: f64,
    /// Norm threshold on the HBU update.
    pub clip_norm: f64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            alpha1: 1.0,
            alpha2: 1.0,
            tau: 0.5,
            beta: 1e-2,
            epochs: 20,
            lr: 1e-4,
            optimizer: OptimizerKind::Adam,
            batch: 16,
            damping: 1e-3,
            clip_norm: 5.0,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.tau > 0.0) {
            return bad("unlearn.tau must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("unlearn.lr must be positive");
        }
        if self.batch < 2 {
            return bad("unlearn.batch must be at least 2");
        }
        if !(self.damping > 0.0) || !(self.clip_norm > 0.0) {
            return bad("unlearn.damping and unlearn.clip_norm must be positive");
        }
        if !self.alpha1.is_finite() || !self.alpha2.is_finite() || !self.beta.is_finite() {
            return bad("unlearn weights must be finite");
        }
        Ok(())
    }
}

/// `KL(N(μ, e^{lv}) ‖ N(0, I))`, summed over latent dims, averaged over rows.
pub fn kl_diag_gauss_to_std_normal(lat: &GaussianLatent) -> Result<Tensor> {
    let per_entry = lat
        .mu
        .square()?
        .add(&lat.logvar.exp()?)?
        .sub(&lat.logvar)?
        .add_scalar(-1.0)?;
    per_entry.sum()?.scale(0.5 / lat.batch() as f64)
}

/// `KL(p ‖ q)` between diagonal Gaussians, row-wise, averaged over rows.
/// `q` is treated as a constant.
pub fn kl_diag_gauss_pair(p: &GaussianLatent, q: &GaussianLatent) -> Result<Tensor> {
    if p.mu.shape() != q.mu.shape() {
        return Err(Error::Dimension {
            op: "kl_diag_gauss_pair",
            lhs: p.mu.shape().to_vec(),
            rhs: q.mu.shape().to_vec(),
        });
    }
    let (q_mu, q_lv) = (q.mu.detach(), q.logvar.detach());
    let q_var = q_lv.exp()?;
    let ratio = p.logvar.exp()?.add(&p.mu.sub(&q_mu)?.square()?)?.div(&q_var)?;
    let per_entry = q_lv.sub(&p.logvar)?.add(&ratio)?.add_scalar(-1.0)?;
    per_entry.sum()?.scale(0.5 / p.batch() as f64)
}

/// `0.5 · mean_rows ‖x − x̂‖²`.
pub fn recon_nll(x: &Tensor, x_hat: &Tensor) -> Result<Tensor> {
    x.sub(x_hat)?.square()?.sum()?.scale(0.5 / x.rows() as f64)
}

/// Per-pixel mean squared error, the reported MSE metric.
pub fn pixel_mse(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

/// Unsupervised VIB loss through the channel.
pub fn vib_loss<C: Transmit, R: Rng + ?Sized>(
    x: &Tensor,
    codec: &SemanticCodec,
    channel: &mut C,
    rng: &mut R,
) -> Result<Tensor> {
    let lat = codec.encode(x)?;
    let z = lat.reparameterize(rng)?;
    let x_hat = codec.decode(&channel.transmit(&z)?)?;
    let kl = kl_diag_gauss_to_std_normal(&lat)?.scale(codec.beta)?;
    kl.add(&recon_nll(x, &x_hat)?)
}

/// The four pieces of the joint-unlearning loss.
#[derive(Debug, Clone)]
pub struct JointUnlearnTerms {
    /// Encoder MI bound on erased samples: KL to the prior.
    pub encoder_mi: Tensor,
    /// KL from the live to the frozen encoder posterior.
    pub encoder_anchor: Tensor,
    /// Decoder MI bound on erased samples: negated reconstruction NLL.
    pub decoder_mi: Tensor,
    /// KL between live and frozen unit-variance decoder outputs.
    pub decoder_anchor: Tensor,
}

impl JointUnlearnTerms {
    pub fn total(&self) -> Result<Tensor> {
        self.encoder_mi
            .add(&self.encoder_anchor)?
            .add(&self.decoder_mi)?
            .add(&self.decoder_anchor)
    }

    /// Both MI terms without the anchors.
    pub fn mi_only(&self) -> Result<Tensor> {
        self.encoder_mi.add(&self.decoder_mi)
    }
}

/// Joint-unlearning terms from an already encoded and transmitted batch.
/// `received` must be the channel output fed to both decoders.
pub fn joint_unlearn_terms(
    x_e: &Tensor,
    latent: &GaussianLatent,
    received: &Tensor,
    codec: &SemanticCodec,
    frozen: &SemanticCodec,
) -> Result<JointUnlearnTerms> {
    if !codec.same_architecture(frozen) {
        return Err(Error::contract("frozen codec architecture differs from the live codec"));
    }
    let frozen_latent = frozen.encode(x_e)?;
    let x_hat = codec.decode(received)?;
    let x_fix = frozen.decode(received)?;
    Ok(JointUnlearnTerms {
        encoder_mi: kl_diag_gauss_to_std_normal(latent)?,
        encoder_anchor: kl_diag_gauss_pair(latent, &frozen_latent)?,
        decoder_mi: recon_nll(x_e, &x_hat)?.neg()?,
        decoder_anchor: recon_nll(&x_fix, &x_hat)?,
    })
}

/// Joint-unlearning loss on an erased batch.
pub fn ju_loss<C: Transmit, R: Rng + ?Sized>(
    x_e: &Tensor,
    codec: &SemanticCodec,
    frozen: &SemanticCodec,
    channel: &mut C,
    rng: &mut R,
) -> Result<Tensor> {
    let latent = codec.encode(x_e)?;
    let received = channel.transmit(&latent.reparameterize(rng)?)?;
    joint_unlearn_terms(x_e, &latent, &received, codec, frozen)?.total()
}

/// Contrastive term over L2-normalised embeddings.
///
/// Each remaining row `i` is an anchor whose positives are the other
/// remaining rows and whose negatives are all erased rows:
/// `Σ_i −1/|P(i)| Σ_{p≠i} log(exp(z_i·z_p/τ) / (Σ_e exp(z_i·z_e/τ) + ε))`.
pub fn contrastive_term(z_r: &Tensor, z_e: &Tensor, tau: f64) -> Result<Tensor> {
    let m = z_r.rows();
    if m < 2 {
        return Err(Error::contract("contrastive compensation needs a remaining batch of at least 2"));
    }
    if z_e.rows() == 0 {
        return Err(Error::contract("contrastive compensation needs erased negatives"));
    }
    if !(tau > 0.0) {
        return Err(Error::contract(format!("temperature must be positive, got {tau}")));
    }
    let r = z_r.l2_normalize()?;
    let e = z_e.l2_normalize()?;
    let pos = r.matmul(&r.transpose()?)?.scale(1.0 / tau)?;
    let neg = r.matmul(&e.transpose()?)?.scale(1.0 / tau)?;
    let log_denominator = neg.exp()?.sum_axis(1)?.add_scalar(CC_EPS)?.log()?;
    let mut off_diagonal = vec![1.0; m * m];
    (0..m).for_each(|i| off_diagonal[i * m + i] = 0.0);
    let mask = Tensor::new(&[m, m], off_diagonal)?;
    let positives = pos.mul(&mask)?.sum()?.scale(-1.0 / (m - 1) as f64)?;
    positives.add(&log_denominator.sum()?)
}

/// Contrastive compensation: contrastive encoder term plus reconstruction
/// of the remaining batch through the channel.
pub fn cc_loss<C: Transmit>(
    z_r: &Tensor,
    z_e: &Tensor,
    x_r: &Tensor,
    codec: &SemanticCodec,
    channel: &mut C,
    tau: f64,
) -> Result<Tensor> {
    let contrastive = contrastive_term(z_r, z_e, tau)?;
    let x_hat = codec.decode(&channel.transmit(z_r)?)?;
    contrastive.add(&recon_nll(x_r, &x_hat)?)
}

/// `α1·ju + α2·cc`.
pub fn total_unlearn_loss(ju: &Tensor, cc: &Tensor, cfg: &UnlearnConfig) -> Result<Tensor> {
    ju.scale(cfg.alpha1)?.add(&cc.scale(cfg.alpha2)?)
}
