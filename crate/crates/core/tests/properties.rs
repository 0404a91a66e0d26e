//! Property tests over random inputs.

use proptest::prelude::*;
use scu_core::codec::GaussianLatent;
use scu_core::data::split_erased;
use scu_core::losses::{contrastive_term, kl_diag_gauss_pair, kl_diag_gauss_to_std_normal};
use scu_core::{Parameter, Tensor};

fn latent(mu: Vec<f64>, lv: Vec<f64>, rows: usize) -> GaussianLatent {
    let d = mu.len() / rows;
    GaussianLatent::new(Tensor::new(&[rows, d], mu).unwrap(), Tensor::new(&[rows, d], lv).unwrap()).unwrap()
}

fn gaussian_params(rows: usize, d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0..5.0f64, rows * d),
        prop::collection::vec(-10.0..10.0f64, rows * d),
    )
}

/// Rotation in the plane of two coordinates.
fn rotate(rows: &[f64], d: usize, a: usize, b: usize, angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = rows.to_vec();
    for r in 0..rows.len() / d {
        let (x, y) = (rows[r * d + a], rows[r * d + b]);
        out[r * d + a] = c * x - s * y;
        out[r * d + b] = s * x + c * y;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prior_kl_is_non_negative((mu, lv) in gaussian_params(3, 4)) {
        let kl = kl_diag_gauss_to_std_normal(&latent(mu, lv, 3)).unwrap().item();
        prop_assert!(kl >= 0.0, "{kl}");
    }

    #[test]
    fn pair_kl_is_non_negative_and_zero_on_itself(
        (pm, plv) in gaussian_params(2, 3),
        (qm, qlv) in gaussian_params(2, 3),
    ) {
        let p = latent(pm, plv, 2);
        let q = latent(qm, qlv, 2);
        prop_assert!(kl_diag_gauss_pair(&p, &q).unwrap().item() >= 0.0);
        prop_assert!(kl_diag_gauss_pair(&p, &p).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn contrastive_term_is_rotation_invariant(
        zr in prop::collection::vec(-3.0..3.0f64, 4 * 3),
        ze in prop::collection::vec(-3.0..3.0f64, 2 * 3),
        angle in -3.1..3.1f64,
        tau in 0.2..4.0f64,
    ) {
        prop_assume!(zr.chunks(3).chain(ze.chunks(3)).all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-3));
        let term = |r: Vec<f64>, e: Vec<f64>| {
            contrastive_term(&Tensor::new(&[4, 3], r).unwrap(), &Tensor::new(&[2, 3], e).unwrap(), tau).unwrap().item()
        };
        let base = term(zr.clone(), ze.clone());
        let turned = term(rotate(&zr, 3, 0, 2, angle), rotate(&ze, 3, 0, 2, angle));
        prop_assert!((base - turned).abs() <= 1e-9 * base.abs().max(1.0), "{base} vs {turned}");
    }

    #[test]
    fn backward_is_linear_in_the_loss(
        w in prop::collection::vec(-2.0..2.0f64, 6),
        x in prop::collection::vec(-2.0..2.0f64, 6),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let p = Parameter::new("w", &[2, 3], w).unwrap();
        let x = Tensor::new(&[3, 2], x).unwrap();
        let f = || p.tensor.matmul(&x).unwrap().sigmoid().unwrap().sum().unwrap();
        let g = || p.tensor.square().unwrap().exp().unwrap().mean().unwrap();
        let grad_of = |loss: Tensor| {
            p.tensor.zero_grad();
            loss.backward().unwrap();
            p.tensor.grad().unwrap()
        };
        let gf = grad_of(f());
        let gg = grad_of(g());
        let combined = grad_of(f().scale(a).unwrap().add(&g().scale(b).unwrap()).unwrap());
        for ((c, f), g) in combined.iter().zip(&gf).zip(&gg) {
            prop_assert!((c - (a * f + b * g)).abs() < 1e-10);
        }
    }

    #[test]
    fn split_is_disjoint_and_covers(n in 2usize..400, edr in 0.01..0.99f64, seed in any::<u64>()) {
        let k = (edr * n as f64).round() as usize;
        prop_assume!(k >= 1 && k < n);
        let split = split_erased(n, edr, seed).unwrap();
        prop_assert_eq!(split.erased_indices.len(), k);
        let mut all: Vec<usize> = split.erased_indices.iter().chain(&split.remaining_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
