use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A named trainable leaf. Cloning shares the underlying buffer.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::variable(shape, values)?,
        })
    }
}

fn take_grads(params: &[Parameter]) -> Result<Vec<Vec<f64>>> {
    params
        .iter()
        .map(|p| {
            p.tensor
                .grad()
                .ok_or_else(|| Error::contract(format!("parameter {} has no gradient", p.name)))
        })
        .collect()
}

/// Plain gradient descent: `θ ← θ − lr·∇θ`, then clears the gradients.
pub fn sgd_step(params: &[Parameter], lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
    }
    let grads = take_grads(params)?;
    for (p, g) in params.iter().zip(grads) {
        p.tensor.update_values(|v| v.iter_mut().zip(&g).for_each(|(v, g)| *v -= lr * g));
        p.tensor.zero_grad();
    }
    Ok(())
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        let grads = take_grads(params)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::contract("optimizer reused with a different parameter set"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            p.tensor.update_values(|vals| {
                for j in 0..vals.len() {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    vals[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                }
            });
            p.tensor.zero_grad();
        }
        Ok(())
    }
}

/// Update rule selector for the unlearning engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// A stateful optimizer of either kind.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(f64),
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd(lr),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)),
        }
    }

    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        match self {
            Optimizer::Sgd(lr) => sgd_step(params, *lr),
            Optimizer::Adam(adam) => adam.step(params),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param_with_grad(value: f64, grad: f64) -> Parameter {
        let p = Parameter::new("w", &[1], vec![value]).unwrap();
        p.tensor.accumulate_grad(&[grad]);
        p
    }

    #[test]
    fn sgd_single_step() {
        let p = param_with_grad(1.0, 2.0);
        sgd_step(std::slice::from_ref(&p), 0.1).unwrap();
        assert!((p.tensor.item() - 0.8).abs() < 1e-15);
        assert!(p.tensor.grad().is_none());
    }

    #[test]
    fn sgd_zero_grad_unchanged() {
        let p = param_with_grad(1.25, 0.0);
        sgd_step(std::slice::from_ref(&p), 0.1).unwrap();
        assert_eq!(p.tensor.item(), 1.25);
    }

    #[test]
    fn sgd_two_steps_equal_summed_update() {
        let a = param_with_grad(0.7, 0.3);
        sgd_step(std::slice::from_ref(&a), 0.05).unwrap();
        a.tensor.accumulate_grad(&[0.3]);
        sgd_step(std::slice::from_ref(&a), 0.05).unwrap();
        let b = param_with_grad(0.7, 0.6);
        sgd_step(std::slice::from_ref(&b), 0.05).unwrap();
        assert!((a.tensor.item() - b.tensor.item()).abs() < 1e-15);
    }

    #[test]
    fn sgd_missing_grad_is_contract_error() {
        let p = Parameter::new("w", &[1], vec![1.0]).unwrap();
        assert!(matches!(sgd_step(&[p], 0.1), Err(Error::Contract(_))));
        assert!(sgd_step(&[param_with_grad(1.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let p = param_with_grad(0.5, 3.0);
        Adam::new(0.0).step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.tensor.item(), 0.5);
    }
}
