//! Measured channel statistics against their configured values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scu_core::channel::{draw_perturbation, fading_gain, transmit};
use scu_core::{ChannelConfig, ChannelKind, Tensor};

const ROWS: usize = 4000;
const COLS: usize = 16;

fn latent_batch(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ROWS * COLS).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal) + 0.2).collect()
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

#[test]
fn awgn_post_channel_snr_is_calibrated() {
    let z = latent_batch(1);
    let signal = mean_square(&z);
    for snr in [5.0, 15.0, 25.0] {
        let cfg = ChannelConfig::new(ChannelKind::Awgn, snr);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sent = Tensor::new(&[ROWS, COLS], z.clone()).unwrap();
        let received = transmit(&sent, &cfg, &mut rng).unwrap();
        let noise: Vec<f64> = received.values().iter().zip(&z).map(|(r, s)| r - s).collect();
        let measured = 10.0 * (signal / mean_square(&noise)).log10();
        assert!((measured - snr).abs() < 0.5, "configured {snr} dB, measured {measured} dB");
    }
}

#[test]
fn rayleigh_gain_has_unit_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let power = (0..n)
        .map(|_| fading_gain(ChannelKind::Rayleigh, 0.0, &mut rng).unwrap().powi(2))
        .sum::<f64>()
        / n as f64;
    assert!((power - 1.0).abs() < 0.02, "E|h|² = {power}");
}

#[test]
fn rician_gain_has_unit_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200_000;
    for k in [0.5, 3.0] {
        let power = (0..n)
            .map(|_| fading_gain(ChannelKind::Rician, k, &mut rng).unwrap().powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((power - 1.0).abs() < 0.02, "K = {k}: E|h|² = {power}");
    }
}

#[test]
fn strong_line_of_sight_rician_matches_awgn() {
    let z = latent_batch(5);
    let mse = |cfg: ChannelConfig| {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        mean_square(&draw_perturbation(&z, ROWS, &cfg, &mut rng).unwrap())
    };
    let awgn = mse(ChannelConfig::new(ChannelKind::Awgn, 10.0));
    let rician = mse(ChannelConfig {
        rician_k: 1e6,
        ..ChannelConfig::new(ChannelKind::Rician, 10.0)
    });
    assert!((rician - awgn).abs() / awgn < 0.05, "rician {rician} vs awgn {awgn}");
}

#[test]
fn fading_raises_effective_noise_after_equalisation() {
    let z = latent_batch(7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let awgn = mean_square(&draw_perturbation(&z, ROWS, &ChannelConfig::new(ChannelKind::Awgn, 10.0), &mut rng).unwrap());
    let rayleigh =
        mean_square(&draw_perturbation(&z, ROWS, &ChannelConfig::new(ChannelKind::Rayleigh, 10.0), &mut rng).unwrap());
    assert!(rayleigh > awgn);
    let _: f64 = rng.random();
}
