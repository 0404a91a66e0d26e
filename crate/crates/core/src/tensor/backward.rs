use std::collections::{HashMap, HashSet};

use super::ops::{gemm, Op};
use super::Tensor;
use crate::error::{Error, Result};

impl Tensor {
    /// Accumulates `∂self/∂leaf` into every reachable leaf that requires
    /// gradients. `self` must hold exactly one element.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = topological_order(self);
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            let Some(node) = t.node() else {
                t.accumulate_grad(&g);
                continue;
            };
            let grads = vjp(&node.op, &node.inputs, t, &g);
            for (input, grad) in node.inputs.iter().zip(grads) {
                let Some(grad) = grad else { continue };
                match pending.get_mut(&input.id()) {
                    Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(input.id(), grad);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Post-order over the differentiable part of the graph: every node
/// appears once, after all of its inputs.
fn topological_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = t.node() {
            for input in node.inputs.iter().filter(|i| i.requires_grad()) {
                if !seen.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

fn map(g: &[f64], x: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    g.iter().zip(x).map(|(&g, &x)| f(g, x)).collect()
}

/// Vector-Jacobian products of one node. Inputs that do not require
/// gradients get `None`.
fn vjp(op: &Op, inputs: &[Tensor], out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let want = |i: usize| inputs[i].requires_grad();
    let x = |i: usize| inputs[i].values();
    match op {
        Op::MatMul => {
            let (m, k) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            let n = inputs[1].shape()[1];
            let da = want(0).then(|| gemm(m, n, k, g, false, &x(1), true));
            let db = want(1).then(|| gemm(k, m, n, &x(0), true, g, false));
            vec![da, db]
        }
        Op::Add => vec![want(0).then(|| g.to_vec()), want(1).then(|| g.to_vec())],
        Op::AddRowBroadcast => {
            let n = inputs[0].cols();
            let db = want(1).then(|| {
                let mut acc = vec![0.0; n];
                for row in g.chunks(n) {
                    acc.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                acc
            });
            vec![want(0).then(|| g.to_vec()), db]
        }
        Op::Sub => vec![want(0).then(|| g.to_vec()), want(1).then(|| g.iter().map(|v| -v).collect())],
        Op::Mul => vec![
            want(0).then(|| map(g, &x(1), |g, b| g * b)),
            want(1).then(|| map(g, &x(0), |g, a| g * a)),
        ],
        Op::Div => {
            let (a, b) = (x(0), x(1));
            let da = want(0).then(|| map(g, &b, |g, b| g / b));
            let db = want(1).then(|| {
                g.iter()
                    .zip(a.iter().zip(b.iter()))
                    .map(|(&g, (&a, &b))| -g * a / (b * b))
                    .collect()
            });
            vec![da, db]
        }
        Op::Neg => vec![Some(g.iter().map(|v| -v).collect())],
        Op::Exp => vec![Some(map(g, &out.values(), |g, y| g * y))],
        Op::Log => vec![Some(map(g, &x(0), |g, a| g / a))],
        Op::Relu => vec![Some(map(g, &x(0), |g, a| if a > 0.0 { g } else { 0.0 }))],
        Op::Sigmoid => vec![Some(map(g, &out.values(), |g, y| g * y * (1.0 - y)))],
        Op::Square => vec![Some(map(g, &x(0), |g, a| 2.0 * a * g))],
        Op::Sqrt => vec![Some(map(g, &out.values(), |g, y| g / (2.0 * y)))],
        Op::Scale(c) => vec![Some(g.iter().map(|v| v * c).collect())],
        Op::AddScalar => vec![Some(g.to_vec())],
        Op::Sum => vec![Some(vec![g[0]; inputs[0].len()])],
        Op::Mean => {
            let n = inputs[0].len();
            vec![Some(vec![g[0] / n as f64; n])]
        }
        Op::SumAxis(axis) => {
            let (m, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            let da = (0..m * n)
                .map(|idx| if *axis == 1 { g[idx / n] } else { g[idx % n] })
                .collect();
            vec![Some(da)]
        }
        Op::Transpose => {
            // out is n × m; its gradient transposed back to m × n.
            let (m, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            let mut da = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    da[i * n + j] = g[j * m + i];
                }
            }
            vec![Some(da)]
        }
        Op::L2Normalize => {
            let n = inputs[0].cols();
            let (xs, ys) = (x(0), out.values());
            let mut da = vec![0.0; xs.len()];
            for ((dx, gy), (xr, yr)) in da
                .chunks_mut(n)
                .zip(g.chunks(n))
                .zip(xs.chunks(n).zip(ys.chunks(n)))
            {
                let norm = (xr.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
                let dot: f64 = gy.iter().zip(yr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    dx[j] = (gy[j] - yr[j] * dot) / norm;
                }
            }
            vec![Some(da)]
        }
        Op::LogSumExp(axis) => {
            let (m, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            let (xs, lse) = (x(0), out.values());
            let da = (0..m * n)
                .map(|idx| {
                    let r = if *axis == 1 { idx / n } else { idx % n };
                    g[r] * (xs[idx] - lse[r]).exp()
                })
                .collect();
            vec![Some(da)]
        }
        Op::Concat(widths) => {
            let total: usize = widths.iter().sum();
            let m = out.shape()[0];
            let mut offset = 0;
            widths
                .iter()
                .enumerate()
                .map(|(p, &w)| {
                    let col0 = offset;
                    offset += w;
                    want(p).then(|| (0..m).flat_map(|i| g[i * total + col0..i * total + col0 + w].iter().copied()).collect())
                })
                .collect()
        }
        Op::Narrow { start, len } => {
            let (m, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            let mut da = vec![0.0; m * n];
            for i in 0..m {
                da[i * n + start..i * n + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
            }
            vec![Some(da)]
        }
        Op::Clamp { lo, hi } => vec![Some(map(g, &x(0), |g, a| if a >= *lo && a <= *hi { g } else { 0.0 }))],
    }
}
