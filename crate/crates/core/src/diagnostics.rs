//! Finite-difference gradient checks for every training and unlearning
//! objective, run on a small random codec with channel noise held fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, ChannelKind, ReplayChannel, Transmit};
use crate::codec::{CodecConfig, SemanticCodec};
use crate::error::Result;
use crate::losses::{cc_loss, joint_unlearn_terms, total_unlearn_loss, vib_loss, UnlearnConfig};
use crate::tensor::{grad_check, Parameter, Tensor};

/// Central-difference step used by the suite.
pub const GRADCHECK_EPS: f64 = 1e-4;
/// Largest acceptable relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheck {
    pub loss: String,
    pub max_rel_error: f64,
}

const CHECKED_LOSSES: [&str; 4] = ["vib", "ju", "cc", "total"];

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor> {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.random::<f64>()).collect())
}

/// Fixed latent noise for the reparameterisation step, replayed on every
/// evaluation of the loss.
struct FixedDraws {
    rng_seed: u64,
}

impl FixedDraws {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

/// Records one channel realisation per distinct batch the losses transmit.
fn frozen_channel(codec: &SemanticCodec, batches: &[&Tensor], seed: u64, draws: &FixedDraws) -> Result<ReplayChannel> {
    let mut link = Channel::new(ChannelConfig {
        seed,
        ..ChannelConfig::new(ChannelKind::Rayleigh, 10.0)
    });
    let mut rng = draws.rng();
    let mut z = Vec::with_capacity(batches.len());
    for x in batches {
        z.push(codec.encode(x)?.reparameterize(&mut rng)?.detach());
    }
    ReplayChannel::record(&mut link, &z)
}

fn check_seed(seed: u64, eps: f64) -> Result<[f64; 4]> {
    let cfg = CodecConfig {
        input_dim: 6,
        latent_dim: 3,
        hidden: vec![5],
        beta: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let live = SemanticCodec::new(&cfg, seed)?;
    let frozen = SemanticCodec::new(&cfg, seed.wrapping_add(1))?.frozen_clone();
    let x_e = random_batch(&mut rng, 3, cfg.input_dim)?;
    let x_r = random_batch(&mut rng, 4, cfg.input_dim)?;
    let params: Vec<Parameter> = live.parameters();
    let draws = FixedDraws { rng_seed: seed ^ 0x9e37 };
    let ucfg = UnlearnConfig {
        alpha1: 1.0,
        alpha2: 0.7,
        tau: 0.5,
        ..UnlearnConfig::default()
    };

    let vib = {
        let replay = frozen_channel(&live, &[&x_r], seed, &draws)?;
        grad_check(
            || {
                let mut link = replay.clone();
                vib_loss(&x_r, &live, &mut link, &mut draws.rng())
            },
            &params,
            eps,
        )?
    };

    let ju_of = |link: &mut ReplayChannel, rng: &mut ChaCha8Rng| -> Result<Tensor> {
        let latent = live.encode(&x_e)?;
        let received = link.transmit(&latent.reparameterize(rng)?)?;
        joint_unlearn_terms(&x_e, &latent, &received, &live, &frozen)?.total()
    };
    let cc_of = |link: &mut ReplayChannel, rng: &mut ChaCha8Rng| -> Result<Tensor> {
        let z_r = live.encode(&x_r)?.reparameterize(rng)?;
        let z_e = live.encode(&x_e)?.reparameterize(rng)?;
        cc_loss(&z_r, &z_e, &x_r, &live, link, ucfg.tau)
    };

    let ju_replay = frozen_channel(&live, &[&x_e], seed, &draws)?;
    let ju = grad_check(|| ju_of(&mut ju_replay.clone(), &mut draws.rng()), &params, eps)?;
    let cc_replay = frozen_channel(&live, &[&x_r], seed, &draws)?;
    let cc = grad_check(|| cc_of(&mut cc_replay.clone(), &mut draws.rng()), &params, eps)?;
    let total_replay = frozen_channel(&live, &[&x_e, &x_r], seed, &draws)?;
    let total = grad_check(
        || {
            let mut link = total_replay.clone();
            let mut rng = draws.rng();
            let ju = ju_of(&mut link, &mut rng)?;
            let cc = cc_of(&mut link, &mut rng)?;
            total_unlearn_loss(&ju, &cc, &ucfg)
        },
        &params,
        eps,
    )?;
    Ok([vib, ju, cc, total])
}

/// Worst relative error per loss across `seeds`.
pub fn gradcheck_suite(seeds: &[u64], eps: f64) -> Result<Vec<LossCheck>> {
    let mut worst = [0.0f64; 4];
    for &seed in seeds {
        for (w, e) in worst.iter_mut().zip(check_seed(seed, eps)?) {
            *w = w.max(e);
        }
    }
    Ok(CHECKED_LOSSES
        .iter()
        .zip(worst)
        .map(|(name, max_rel_error)| LossCheck {
            loss: name.to_string(),
            max_rel_error,
        })
        .collect())
}
