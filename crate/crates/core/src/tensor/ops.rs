//! Forward operators. Each one validates shapes, computes its output
//! buffer and records itself for [`super::backward`].

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    MatMul,
    Add,
    AddRowBroadcast,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Relu,
    Sigmoid,
    Square,
    Sqrt,
    Scale(f64),
    AddScalar,
    Sum,
    Mean,
    SumAxis(usize),
    Transpose,
    L2Normalize,
    LogSumExp(usize),
    Concat(Vec<usize>),
    Narrow { start: usize, len: usize },
    Clamp { lo: f64, hi: f64 },
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::AddRowBroadcast => "add_row_broadcast",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis(_) => "sum_axis",
            Op::Transpose => "transpose",
            Op::L2Normalize => "l2_normalize",
            Op::LogSumExp(_) => "log_sum_exp",
            Op::Concat(_) => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Clamp { .. } => "clamp",
        }
    }
}

/// `c = op(a) · op(b)` for row-major buffers; `op` optionally transposes.
/// `a` is `m × k` after `op`, `b` is `k × n` after `op`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above describe exactly the `m*k`, `k*n` and `m*n`
    // buffers, whose lengths are checked by every caller.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

fn same_shape(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn axis_shape(rows: usize, cols: usize, axis: usize, op: &'static str) -> Result<Vec<usize>> {
    match axis {
        0 => Ok(vec![1, cols]),
        1 => Ok(vec![rows, 1]),
        _ => Err(Error::Dimension {
            op,
            lhs: vec![rows, cols],
            rhs: vec![axis],
        }),
    }
}

impl Tensor {
    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let values = self.values().iter().map(|&v| f(v)).collect();
        Tensor::record(op, vec![self.clone()], self.shape().to_vec(), values)
    }

    fn binary(&self, other: &Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_shape(self, other, op.name())?;
        let values = self
            .values()
            .iter()
            .zip(other.values().iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::record(op, vec![self.clone(), other.clone()], self.shape().to_vec(), values)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = dims2(self, "matmul")?;
        let (k2, n) = dims2(other, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let values = gemm(m, k, n, &self.values(), false, &other.values(), false);
        Tensor::record(Op::MatMul, vec![self.clone(), other.clone()], vec![m, n], values)
    }

    /// Elementwise sum. A `[n]` or `[1, n]` right operand is broadcast
    /// over the rows of a `[m, n]` left operand.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() == other.shape() {
            return self.binary(other, Op::Add, |a, b| a + b);
        }
        let (m, n) = dims2(self, "add")?;
        let broadcastable = matches!(*other.shape(), [w] if w == n) || matches!(*other.shape(), [1, w] if w == n);
        if !broadcastable {
            return Err(Error::Dimension {
                op: "add",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let bias = other.values();
        let mut values = self.to_vec();
        for row in values.chunks_mut(n) {
            row.iter_mut().zip(bias.iter()).for_each(|(v, b)| *v += b);
        }
        drop(bias);
        Tensor::record(Op::AddRowBroadcast, vec![self.clone(), other.clone()], vec![m, n], values)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Div, |a, b| a / b)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.unary(Op::Neg, |v| -v)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary(Op::Exp, f64::exp)
    }

    pub fn log(&self) -> Result<Tensor> {
        self.unary(Op::Log, f64::ln)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary(Op::Relu, |v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary(Op::Sigmoid, |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary(Op::Square, |v| v * v)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary(Op::Sqrt, f64::sqrt)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.unary(Op::Scale(c), |v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.unary(Op::AddScalar, |v| v + c)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        self.unary(Op::Clamp { lo, hi }, |v| v.clamp(lo, hi))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Result<Tensor> {
        let s = self.values().iter().sum();
        Tensor::record(Op::Sum, vec![self.clone()], vec![], vec![s])
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&self) -> Result<Tensor> {
        let s: f64 = self.values().iter().sum();
        Tensor::record(Op::Mean, vec![self.clone()], vec![], vec![s / self.len() as f64])
    }

    /// Sum of a 2-D tensor along `axis`, keeping the reduced axis as 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let (m, n) = dims2(self, "sum_axis")?;
        let shape = axis_shape(m, n, axis, "sum_axis")?;
        let v = self.values();
        let values = if axis == 1 {
            v.chunks(n).map(|r| r.iter().sum()).collect()
        } else {
            (0..n).map(|j| (0..m).map(|i| v[i * n + j]).sum()).collect()
        };
        drop(v);
        Tensor::record(Op::SumAxis(axis), vec![self.clone()], shape, values)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = dims2(self, "transpose")?;
        let v = self.values();
        let mut values = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = v[i * n + j];
            }
        }
        drop(v);
        Tensor::record(Op::Transpose, vec![self.clone()], vec![n, m], values)
    }

    /// Scales every row of a 2-D tensor to unit Euclidean norm
    /// (norm guarded by an additive `1e-12` under the root).
    pub fn l2_normalize(&self) -> Result<Tensor> {
        let (_, n) = dims2(self, "l2_normalize")?;
        let mut values = self.to_vec();
        for row in values.chunks_mut(n) {
            let norm = (row.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Tensor::record(Op::L2Normalize, vec![self.clone()], self.shape().to_vec(), values)
    }

    /// Numerically stable `log Σ exp` of a 2-D tensor along `axis`.
    pub fn log_sum_exp(&self, axis: usize) -> Result<Tensor> {
        let (m, n) = dims2(self, "log_sum_exp")?;
        let shape = axis_shape(m, n, axis, "log_sum_exp")?;
        let v = self.values();
        let lse = |xs: &mut dyn Iterator<Item = f64>| {
            let xs: Vec<f64> = xs.collect();
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
        };
        let values = if axis == 1 {
            (0..m).map(|i| lse(&mut (0..n).map(|j| v[i * n + j]))).collect()
        } else {
            (0..n).map(|j| lse(&mut (0..m).map(|i| v[i * n + j]))).collect()
        };
        drop(v);
        Tensor::record(Op::LogSumExp(axis), vec![self.clone()], shape, values)
    }

    /// Concatenates 2-D tensors with equal row counts along the last axis.
    pub fn concat(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of nothing"))?;
        let (m, _) = dims2(first, "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = dims2(p, "concat")?;
            if r != m {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut values = Vec::with_capacity(m * total);
        let bufs: Vec<_> = parts.iter().map(|p| p.values()).collect();
        for i in 0..m {
            for (buf, &w) in bufs.iter().zip(&widths) {
                values.extend_from_slice(&buf[i * w..(i + 1) * w]);
            }
        }
        drop(bufs);
        Tensor::record(Op::Concat(widths), parts.to_vec(), vec![m, total], values)
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn narrow(&self, start: usize, len: usize) -> Result<Tensor> {
        let (m, n) = dims2(self, "narrow")?;
        if len == 0 || start + len > n {
            return Err(Error::Dimension {
                op: "narrow",
                lhs: self.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let v = self.values();
        let values = (0..m).flat_map(|i| v[i * n + start..i * n + start + len].iter().copied()).collect();
        drop(v);
        Tensor::record(Op::Narrow { start, len }, vec![self.clone()], vec![m, len], values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_is_noop() {
        let a = t(&[vec![1.5, -2.0], vec![0.25, 4.0]]);
        let eye = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(eye.matmul(&a).unwrap().to_vec(), a.to_vec());
    }

    #[test]
    fn matmul_hand_multiplied() {
        let a = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = t(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        let err = a.matmul(&a).unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "matmul", .. }), "{err}");
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(x.relu().unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn bias_broadcast_over_rows() {
        let x = Tensor::zeros(&[3, 2]).unwrap();
        let b = Tensor::new(&[2], vec![1.0, -1.0]).unwrap();
        assert_eq!(x.add(&b).unwrap().to_vec(), vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let bad = Tensor::new(&[3], vec![0.0; 3]).unwrap();
        assert!(x.add(&bad).is_err());
    }

    #[test]
    fn log_of_zero_is_numeric_error() {
        let x = Tensor::new(&[1], vec![0.0]).unwrap();
        let err = x.log().unwrap_err();
        assert!(err.to_string().contains("log"));
    }

    #[test]
    fn reductions_and_reshapers() {
        let x = t(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(x.sum().unwrap().item(), 21.0);
        assert_eq!(x.mean().unwrap().item(), 3.5);
        assert_eq!(x.sum_axis(1).unwrap().to_vec(), vec![6.0, 15.0]);
        assert_eq!(x.sum_axis(0).unwrap().to_vec(), vec![5.0, 7.0, 9.0]);
        assert_eq!(x.transpose().unwrap().to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(x.narrow(1, 2).unwrap().to_vec(), vec![2.0, 3.0, 5.0, 6.0]);
        let c = Tensor::concat(&[x.narrow(0, 1).unwrap(), x.narrow(1, 2).unwrap()]).unwrap();
        assert_eq!(c.to_vec(), x.to_vec());
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let x = t(&[vec![0.1, -0.3, 2.0], vec![5.0, 5.0, 5.0]]);
        let got = x.log_sum_exp(1).unwrap().to_vec();
        let direct = |r: &[f64]| r.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((got[0] - direct(&[0.1, -0.3, 2.0])).abs() < 1e-12);
        assert!((got[1] - (5.0 + 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_rows() {
        let x = t(&[vec![3.0, 4.0], vec![0.0, -2.0]]);
        let y = x.l2_normalize().unwrap().to_vec();
        assert!((y[0] - 0.6).abs() < 1e-12 && (y[1] - 0.8).abs() < 1e-12);
        assert!((y[3] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let x = Tensor::new(&[3], vec![-800.0, 0.0, 800.0]).unwrap();
        assert_eq!(x.sigmoid().unwrap().to_vec(), vec![0.0, 0.5, 1.0]);
    }
}
