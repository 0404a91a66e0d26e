//! Closed-form Gaussian KLs against sampling estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scu_core::codec::GaussianLatent;
use scu_core::losses::{kl_diag_gauss_pair, kl_diag_gauss_to_std_normal};
use scu_core::Tensor;

const SAMPLES: usize = 100_000;
const DIM: usize = 4;
const TOLERANCE: f64 = 0.02;

fn log_density(x: &[f64], mu: &[f64], logvar: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(logvar)
        .map(|((x, m), lv)| -0.5 * ((x - m).powi(2) / lv.exp() + lv + (2.0 * std::f64::consts::PI).ln()))
        .sum()
}

/// `E_p[log p(x) − log q(x)]` by sampling from `p`.
fn monte_carlo_kl(p: (&[f64], &[f64]), q: (&[f64], &[f64]), rng: &mut ChaCha8Rng) -> f64 {
    let mut x = vec![0.0; DIM];
    let mut total = 0.0;
    for _ in 0..SAMPLES {
        for (xd, (mu, logvar)) in x.iter_mut().zip(p.0.iter().zip(p.1)) {
            let e: f64 = rng.sample(StandardNormal);
            *xd = mu + (0.5 * logvar).exp() * e;
        }
        total += log_density(&x, p.0, p.1) - log_density(&x, q.0, q.1);
    }
    total / SAMPLES as f64
}

fn random_params(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mu = (0..DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    let lv = (0..DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    (mu, lv)
}

fn latent(mu: &[f64], lv: &[f64]) -> GaussianLatent {
    GaussianLatent::new(
        Tensor::new(&[1, DIM], mu.to_vec()).unwrap(),
        Tensor::new(&[1, DIM], lv.to_vec()).unwrap(),
    )
    .unwrap()
}

fn relative(closed: f64, sampled: f64) -> f64 {
    (closed - sampled).abs() / closed.abs()
}

#[test]
fn prior_kl_matches_sampling_on_twenty_parameterizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let zeros = vec![0.0; DIM];
    for trial in 0..20 {
        let (mu, lv) = random_params(&mut rng);
        let closed = kl_diag_gauss_to_std_normal(&latent(&mu, &lv)).unwrap().item();
        let sampled = monte_carlo_kl((&mu, &lv), (&zeros, &zeros), &mut rng);
        assert!(relative(closed, sampled) < TOLERANCE, "trial {trial}: {closed} vs {sampled}");
    }
}

#[test]
fn pair_kl_matches_sampling_on_twenty_parameterizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let (pm, plv) = random_params(&mut rng);
        let (qm, qlv) = random_params(&mut rng);
        let closed = kl_diag_gauss_pair(&latent(&pm, &plv), &latent(&qm, &qlv)).unwrap().item();
        let sampled = monte_carlo_kl((&pm, &plv), (&qm, &qlv), &mut rng);
        assert!(relative(closed, sampled) < TOLERANCE, "trial {trial}: {closed} vs {sampled}");
    }
}
