use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax - onehot) / B`. Uses max subtraction, so large
/// logits do not overflow.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (b, k) = check(logits, labels)?;
    let mut d = vec![T::zero(); b * k];
    let total = cross_entropy_into(logits.data(), k, labels, 1.0 / b as f64, &mut d);
    Ok((total / b as f64, Tensor::new(vec![b, k], d)?))
}

/// Row-wise softmax.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().expect("tensors have at least one dimension");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = T::of((v.as_f64() - lse).exp());
        }
    }
    out
}

fn check<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let &[b, k] = logits.shape() else {
        return Err(Error::Shape(format!("logits must be [B, K], got {:?}", logits.shape())));
    };
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Shape(format!("label {bad} out of range for {k} classes")));
    }
    Ok((b, k))
}

fn log_sum_exp<T: Real>(row: &[T]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, v| {
        let v = v.as_f64();
        if v.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(v)
        }
    });
    m + row.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln()
}

/// Writes `(softmax - onehot) * scale` into `dlogits` and returns the summed
/// (not averaged) loss.
pub(crate) fn cross_entropy_into<T: Real>(logits: &[T], k: usize, labels: &[usize], scale: f64, dlogits: &mut [T]) -> f64 {
    let mut total = 0.0;
    for ((row, d), &label) in logits.chunks_exact(k).zip(dlogits.chunks_exact_mut(k)).zip(labels) {
        let lse = log_sum_exp(row);
        total += lse - row[label].as_f64();
        for (j, (dv, z)) in d.iter_mut().zip(row).enumerate() {
            let p = (z.as_f64() - lse).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *dv = T::of((p - onehot) * scale);
        }
    }
    total
}
