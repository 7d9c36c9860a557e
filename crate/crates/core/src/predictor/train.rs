use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cnn::{bce_loss, binary_accuracy, CnnModel};
use crate::anim::Trajectory;
use crate::error::{Error, Result};

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 4096,
            epochs: 20,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Batch size for datasets of a few thousand trajectories.
    pub const DESK_BATCH_SIZE: usize = 256;
    pub const MAX_EPOCHS: usize = 100;

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.epochs == 0 || self.epochs > Self::MAX_EPOCHS {
            return Err(Error::InvalidArgument(format!("epochs must be in 1..={}", Self::MAX_EPOCHS)));
        }
        Ok(())
    }
}

/// Averages over one epoch, measured on each batch before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub binary_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: CnnModel,
    pub history: Vec<EpochStats>,
}

/// Fits a [`CnnModel`] with minibatch Adam on binary cross-entropy.
///
/// Per-example gradients run in parallel but are summed in dataset order,
/// so the result depends only on the data, its order and `config`.
pub fn train(dataset: &[(Trajectory, Vec<f64>)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (first, first_labels) = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let input_len = first.values.len();
    let b_max = first_labels.len();
    if b_max == 0 {
        return Err(Error::InvalidArgument("labels must be non-empty".into()));
    }
    for (i, (t, y)) in dataset.iter().enumerate() {
        if t.values.len() != input_len {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has trajectory length {}, expected {input_len}",
                t.values.len()
            )));
        }
        if y.len() != b_max {
            return Err(Error::ShapeMismatch(format!("sample {i} has {} labels, expected {b_max}", y.len())));
        }
    }

    let mut model = CnnModel::init(b_max, input_len, config.seed);
    let mut first_moment = CnnModel::zeros(b_max, input_len);
    let mut second_moment = CnnModel::zeros(b_max, input_len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0i32;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (t, y) = &dataset[i];
                    let pass = model.forward_pass(&t.values)?;
                    let loss = bce_loss(y, &pass.probabilities)?;
                    let acc = binary_accuracy(y, &pass.probabilities)?;
                    Ok((model.backward_from(&t.values, y, &pass), loss, acc))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut grad = CnnModel::zeros(b_max, input_len);
            let scale = 1.0 / batch.len() as f64;
            for (g, loss, acc) in &results {
                grad.add_scaled(g, scale);
                loss_sum += loss;
                acc_sum += acc;
            }

            step += 1;
            let bias1 = 1.0 - config.adam_beta1.powi(step);
            let bias2 = 1.0 - config.adam_beta2.powi(step);
            let params = model.parameters_mut();
            let ms = first_moment.parameters_mut();
            let vs = second_moment.parameters_mut();
            for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grad.parameters()) {
                for k in 0..p.len() {
                    m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * g[k];
                    v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * g[k] * g[k];
                    let m_hat = m[k] / bias1;
                    let v_hat = v[k] / bias2;
                    p[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
                }
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            binary_accuracy: acc_sum / dataset.len() as f64,
        };
        log::info!("epoch {epoch}: loss {:.6} binary accuracy {:.4}", stats.loss, stats.binary_accuracy);
        history.push(stats);
    }
    Ok(TrainOutcome { model, history })
}

/// Mean loss and binary accuracy of `model` over a labelled set.
pub fn evaluate_model(model: &CnnModel, dataset: &[(Trajectory, Vec<f64>)]) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let scores = dataset
        .par_iter()
        .map(|(t, y)| {
            let p = model.forward(&t.values)?;
            Ok((bce_loss(y, &p)?, binary_accuracy(y, &p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = dataset.len() as f64;
    let loss = scores.iter().map(|s| s.0).sum::<f64>() / n;
    let acc = scores.iter().map(|s| s.1).sum::<f64>() / n;
    Ok((loss, acc))
}
