//! Softmax and the fused softmax-cross-entropy loss.
//!
//! The loss path never materializes probabilities through a bare exp sum:
//! every row is shifted by its maximum before exponentiation, so logits up
//! to +/-1e4 stay finite.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability vector of a rank-1 logit vector, max-shifted. Components lie
/// in [0,1] and sum to 1 within 1e-6.
pub fn softmax(z: &Tensor) -> Result<Tensor> {
    if z.rank() != 1 {
        return Err(Error::InvalidShape(format!("softmax needs rank 1, got {:?}", z.shape())));
    }
    if z.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit in softmax input".into()));
    }
    let max = z.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = z.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Tensor::from_vec(z.shape(), out)
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits [N,K]`, and its gradient `(softmax - onehot) / N`.
pub fn cross_entropy_loss(logits: &Tensor, targets: &[usize]) -> Result<(f32, Tensor)> {
    if logits.rank() != 2 {
        return Err(Error::InvalidShape(format!(
            "cross entropy needs [N,K] logits, got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if targets.len() != n {
        return Err(Error::Label(format!("{n} logit rows but {} targets", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::Label(format!("target {t} out of range for {k} classes")));
    }
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit in loss input".into()));
    }
    let mut d = vec![0.0f32; n * k];
    let mut loss_sum = 0.0f64;
    let inv_n = 1.0 / n as f32;
    for (row, (&target, d_row)) in logits
        .data()
        .chunks_exact(k)
        .zip(targets.iter().zip(d.chunks_exact_mut(k)))
        .map(|(r, td)| (r, td))
    {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for (dv, &z) in d_row.iter_mut().zip(row) {
            let e = (z - max).exp();
            *dv = e;
            sum += e;
        }
        // loss_n = log-sum-exp - z_target, evaluated without forming p first
        loss_sum += (max + sum.ln() - row[target]) as f64;
        for dv in d_row.iter_mut() {
            *dv = *dv / sum * inv_n;
        }
        d_row[target] -= inv_n;
    }
    let loss = (loss_sum / n as f64) as f32;
    Ok((loss, Tensor::from_vec(&[n, k], d)?))
}
