use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Mean sparse categorical cross-entropy together with its gradient and the
/// softmax probabilities it was computed from.
#[derive(Debug, Clone)]
pub struct SoftmaxXent<T: Real> {
    pub loss: T,
    /// `(probs - onehot) / N`
    pub grad: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Row-wise softmax of `[N, K]` logits, max-shifted before exponentiation.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = logits.dims2("softmax")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

pub fn softmax_xent<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<SoftmaxXent<T>> {
    let [n, k] = logits.dims2("softmax_xent")?;
    if labels.len() != n {
        return Err(Error::Shape {
            op: "softmax_xent",
            expected: format!("{n} labels"),
            got: format!("{}", labels.len()),
        });
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::LabelOutOfRange {
            row,
            label,
            classes: k,
        });
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v)).f64();
        let lse = max + row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[label].f64();
    }
    let inv_n = T::of(1.0 / n as f64);
    let mut grad = probs.data().to_vec();
    for (row, &label) in grad.chunks_exact_mut(k).zip(labels) {
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok(SoftmaxXent {
        loss: T::of(loss / n as f64),
        grad: Tensor::from_vec(&[n, k], grad)?,
        probs,
    })
}
