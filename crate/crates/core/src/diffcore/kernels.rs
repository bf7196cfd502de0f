use super::Tensor;
use crate::error::{Error, Result};
use crate::graphs::AdjacencyMatrix;

/// Negative-side slope used when none is configured.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

fn require_matrix(t: &Tensor, what: &str) -> Result<()> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} must be a matrix, shape {:?}", t.shape())))
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_matrix(a, "lhs")?;
    require_matrix(b, "rhs")?;
    let (n, p) = (a.rows(), a.cols());
    let (p2, q) = (b.rows(), b.cols());
    if p != p2 {
        return Err(Error::Dimension(format!("matmul {n}x{p} by {p2}x{q}")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * q];
    for i in 0..n {
        let row = &mut out[i * q..(i + 1) * q];
        for k in 0..p {
            let aik = ad[i * p + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[k * q..(k + 1) * q];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, q], out))
}

/// Returns `(dL/da, dL/db)` given `dL/d(ab)`.
pub fn matmul_vjp(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    if grad.shape() != [a.rows(), b.cols()] {
        return Err(Error::Dimension(format!(
            "matmul upstream gradient has shape {:?}, expected [{}, {}]",
            grad.shape(),
            a.rows(),
            b.cols()
        )));
    }
    Ok((matmul(grad, &b.transpose())?, matmul(&a.transpose(), grad)?))
}

/// Row-wise softmax restricted to the entries where `mask` is set; masked-out
/// entries are exactly zero.
pub fn masked_softmax(logits: &Tensor, mask: &AdjacencyMatrix) -> Result<Tensor> {
    require_matrix(logits, "logits")?;
    let n = mask.n();
    if logits.rows() != n || logits.cols() != n {
        return Err(Error::Dimension(format!(
            "logits {:?} against a {n}-node adjacency",
            logits.shape()
        )));
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = logits.row(i);
        let max = (0..n)
            .filter(|&j| mask.get(i, j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::EmptyNeighborhood { row: i });
        }
        let orow = &mut out[i * n..(i + 1) * n];
        let mut sum = 0.0;
        for j in 0..n {
            if mask.get(i, j) {
                let e = (row[j] - max).exp();
                orow[j] = e;
                sum += e;
            }
        }
        orow.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(Tensor::from_parts(vec![n, n], out))
}

/// VJP of [`masked_softmax`] from its output. Masked-out entries have zero
/// probability, so they receive zero gradient without consulting the mask.
pub fn masked_softmax_vjp(probs: &Tensor, grad: &Tensor) -> Tensor {
    let n = probs.cols();
    let mut out = vec![0.0; probs.len()];
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = grad.row(i);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for j in 0..n {
            out[i * n + j] = p[j] * (g[j] - inner);
        }
    }
    Tensor::from_parts(probs.shape().to_vec(), out)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Uses the right derivative (1) at the kink.
pub fn leaky_relu_vjp(x: &Tensor, slope: f64, grad: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

#[inline]
pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// VJP of [`sigmoid`] from its output `y`.
pub fn sigmoid_vjp(y: &Tensor, grad: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}
