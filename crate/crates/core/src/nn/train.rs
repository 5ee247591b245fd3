use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::cross_entropy_into;
use super::model::Model;
use super::real::Real;
use crate::afprims::Mode;
use crate::data::{batches, Samples};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Samples pushed through the network at once. Gradients of a mini-batch are
/// accumulated over chunks of this size, which bounds memory without
/// changing the update.
pub const MICRO_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            adam: AdamConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
}

/// One tenth of the training set, at least one sample.
pub fn batch_size_for(n: usize) -> usize {
    (n / 10).max(1)
}

/// Copies the selected samples into a contiguous buffer.
pub(crate) fn gather<T: Real>(data: &dyn Samples, indices: &[usize]) -> (Vec<T>, Vec<usize>) {
    let per = data.sample_len();
    let mut x = Vec::with_capacity(indices.len() * per);
    let mut y = Vec::with_capacity(indices.len());
    for &i in indices {
        x.extend(data.image(i).iter().map(|&v| T::of(v as f64)));
        y.push(data.label(i));
    }
    (x, y)
}

/// Trains with Adam on `indices` for `config.epochs` passes, each in a fresh
/// seeded order with mini-batches of [`batch_size_for`] (the last partial
/// batch included). Aborts with [`Error::NonFiniteLoss`] as soon as a
/// mini-batch loss is NaN or infinite.
pub fn train<T: Real>(model: &mut Model<T>, data: &dyn Samples, indices: &[usize], config: &TrainConfig) -> Result<TrainReport> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dims() != model.spec().input_dims {
        return Err(Error::Shape(format!(
            "data dims {:?} do not match model input {:?}",
            data.dims(),
            model.spec().input_dims
        )));
    }
    let batch_size = batch_size_for(indices.len());
    let k = model.n_classes();
    let mut adam = AdamState::new(model.params(), config.adam);
    let mut grads = model.zero_grads();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let previous_mode = model.mode();
    model.set_mode(Mode::Train);
    let mut batches_per_epoch = 0;
    let result = (|| {
        for epoch in 0..config.epochs {
            let order = batches(indices, batch_size, derive_seed(config.seed, epoch as u64));
            batches_per_epoch = order.len();
            let mut epoch_loss = 0.0;
            for (bi, batch) in order.iter().enumerate() {
                grads.iter_mut().for_each(|g| g.fill(T::zero()));
                let scale = 1.0 / batch.len() as f64;
                let mut batch_loss = 0.0;
                for chunk in batch.chunks(MICRO_BATCH) {
                    let (x, labels) = gather::<T>(data, chunk);
                    let (logits, cache) = model.forward_flat(x, chunk.len(), true, None);
                    let mut dlogits = vec![T::zero(); logits.len()];
                    batch_loss += cross_entropy_into(&logits, k, &labels, scale, &mut dlogits);
                    if !batch_loss.is_finite() {
                        break;
                    }
                    model.backward_into(&cache, dlogits, &mut grads);
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: bi });
                }
                adam.step(model.params_mut(), &grads);
                epoch_loss += batch_loss;
            }
            epoch_losses.push(epoch_loss / indices.len() as f64);
        }
        Ok(())
    })();
    model.set_mode(previous_mode);
    result?;
    Ok(TrainReport {
        epoch_losses,
        batch_size,
        batches_per_epoch,
    })
}

/// Outcome of scoring a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Some logit was NaN or infinite.
    pub non_finite: bool,
}

/// Index of the largest value; ties go to the lowest index and NaN never wins.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] || (row[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Scores `indices` in eval mode (dropout off, expected RReLU slopes).
pub fn evaluate<T: Real>(model: &mut Model<T>, data: &dyn Samples, indices: &[usize]) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.n_classes();
    let previous_mode = model.mode();
    model.set_mode(Mode::Eval);
    let mut correct = 0;
    let mut non_finite = false;
    for chunk in indices.chunks(MICRO_BATCH) {
        let (x, labels) = gather::<T>(data, chunk);
        let (logits, _) = model.forward_flat(x, chunk.len(), false, None);
        for (row, &label) in logits.chunks_exact(k).zip(&labels) {
            non_finite |= row.iter().any(|v| !v.is_finite());
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    model.set_mode(previous_mode);
    Ok(Evaluation {
        accuracy: correct as f64 / indices.len() as f64,
        correct,
        total: indices.len(),
        non_finite,
    })
}

/// Fraction of `indices` whose top logit is the label.
pub fn evaluate_accuracy<T: Real>(model: &mut Model<T>, data: &dyn Samples, indices: &[usize]) -> Result<f64> {
    evaluate(model, data, indices).map(|e| e.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_rule() {
        assert_eq!(batch_size_for(5100), 510);
        assert_eq!(batch_size_for(9), 1);
        assert_eq!(batch_size_for(0), 1);
    }

    #[test]
    fn argmax_ties_and_nan() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f32::NAN, 0.0, 1.0]), 2);
        assert_eq!(argmax(&[0.0f32, f32::NAN, -1.0]), 0);
        assert_eq!(argmax(&[f32::NAN; 3]), 0);
    }
}
