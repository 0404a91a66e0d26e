//! Reverse-mode gradients against central differences, op by op and for
//! every objective.

use scu_core::diagnostics::{gradcheck_suite, GRADCHECK_EPS, GRADCHECK_TOLERANCE};
use scu_core::tensor::grad_check;
use scu_core::{Parameter, Tensor};

fn param(name: &str, shape: &[usize], values: &[f64]) -> Parameter {
    Parameter::new(name, shape, values.to_vec()).unwrap()
}

fn check(params: &[Parameter], loss: impl FnMut() -> scu_core::Result<Tensor>) {
    let err = grad_check(loss, params, GRADCHECK_EPS).unwrap();
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn elementwise_ops() {
    let a = param("a", &[2, 3], &[0.3, -1.2, 0.8, 1.5, -0.4, 0.9]);
    let b = param("b", &[2, 3], &[1.1, 0.7, 1.9, 0.6, 1.3, 0.5]);
    let (ta, tb) = (a.tensor.clone(), b.tensor.clone());
    let ps = [a, b];
    check(&ps, || ta.mul(&tb)?.sum());
    check(&ps, || ta.div(&tb)?.sum());
    check(&ps, || ta.sub(&tb)?.square()?.mean());
    check(&ps, || tb.log()?.add(&ta.exp()?)?.sum());
    check(&ps, || tb.sqrt()?.mul(&ta.sigmoid()?)?.sum());
    check(&ps, || ta.neg()?.add_scalar(2.0)?.scale(-0.5)?.mul(&tb)?.sum());
    check(&ps, || ta.clamp(-2.0, 2.0)?.mul(&tb)?.sum());
    check(&ps, || ta.relu()?.mul(&tb)?.sum());
}

#[test]
fn matrix_and_shape_ops() {
    let a = param("a", &[2, 3], &[0.3, -1.2, 0.8, 1.5, -0.4, 0.9]);
    let w = param("w", &[3, 2], &[0.2, -0.5, 1.1, 0.4, -0.7, 0.6]);
    let bias = param("b", &[2], &[0.1, -0.3]);
    let (ta, tw, tb) = (a.tensor.clone(), w.tensor.clone(), bias.tensor.clone());
    let ps = [a, w, bias];
    check(&ps, || ta.matmul(&tw)?.add(&tb)?.square()?.sum());
    check(&ps, || ta.transpose()?.mul(&tw)?.sum_axis(1)?.square()?.sum());
    check(&ps, || ta.sum_axis(0)?.square()?.sum()?.add(&tw.sum_axis(1)?.exp()?.sum()?));
    check(&ps, || ta.l2_normalize()?.matmul(&tw)?.sum());
    check(&ps, || ta.log_sum_exp(1)?.sum()?.add(&tw.log_sum_exp(0)?.sum()?));
    check(&ps, || ta.narrow(1, 2)?.square()?.sum());
    check(&ps, || Tensor::concat(&[ta.clone(), tw.transpose()?])?.sigmoid()?.sum());
}

#[test]
fn every_objective_on_ten_seeds() {
    let seeds: Vec<u64> = (0..10).collect();
    for c in gradcheck_suite(&seeds, GRADCHECK_EPS).unwrap() {
        assert!(c.max_rel_error < GRADCHECK_TOLERANCE, "{c:?}");
    }
}
