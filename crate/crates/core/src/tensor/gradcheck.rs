use super::{no_grad, Parameter, Tensor};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients against central differences.
///
/// Returns the largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`
/// over every entry of every parameter. `loss_fn` must rebuild the loss
/// from scratch on each call and be deterministic; any randomness it uses
/// has to be re-seeded inside the closure.
pub fn grad_check<F>(mut loss_fn: F, params: &[Parameter], eps: f64) -> Result<f64>
where
    F: FnMut() -> Result<Tensor>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::contract(format!("finite-difference step must be in (0, 1e-2], got {eps}")));
    }
    params.iter().for_each(|p| p.tensor.zero_grad());
    let loss = loss_fn()?;
    let base = loss.item();
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.tensor.grad().unwrap_or_else(|| vec![0.0; p.tensor.len()]))
        .collect();
    params.iter().for_each(|p| p.tensor.zero_grad());

    let mut eval = || no_grad(|| loss_fn().map(|l| l.item()));
    let again = eval()?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::contract(format!(
            "loss is not deterministic under a frozen seed ({base} vs {again})"
        )));
    }

    let mut worst: f64 = 0.0;
    for (p, grad) in params.iter().zip(&analytic) {
        for j in 0..p.tensor.len() {
            let original = p.tensor.values()[j];
            p.tensor.update_values(|v| v[j] = original + eps);
            let plus = eval();
            p.tensor.update_values(|v| v[j] = original - eps);
            let minus = eval();
            p.tensor.update_values(|v| v[j] = original);
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = grad[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = Parameter::new("w", &[3], vec![0.5, -1.5, 2.0]).unwrap();
        let target = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = p.tensor.clone();
        let err = grad_check(|| w.sub(&target)?.square()?.sum()?.scale(0.5), &[p], 1e-4).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn detects_nondeterminism() {
        let p = Parameter::new("w", &[1], vec![1.0]).unwrap();
        let w = p.tensor.clone();
        let mut calls = 0.0;
        let res = grad_check(
            || {
                calls += 1.0;
                w.scale(calls)?.sum()
            },
            &[p],
            1e-4,
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_bad_step() {
        let p = Parameter::new("w", &[1], vec![1.0]).unwrap();
        let w = p.tensor.clone();
        assert!(grad_check(|| w.sum(), &[p], 0.1).is_err());
    }
}
