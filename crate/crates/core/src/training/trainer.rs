use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::eval::{evaluate, EvalReport};
use crate::dataset::{augment, normalize, AugmentConfig, Sample};
use crate::error::{Error, Result};
use crate::net::{layers::loss_mse, ModelState, Tensor};
use crate::seed::stream_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps.
    pub max_iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 30,
            epochs: 10,
            max_iterations: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid Adam moments or eps".into()));
        }
        Ok(())
    }

    /// Optimizer steps a run over `n_train` samples will take.
    pub fn total_steps(&self, n_train: usize) -> usize {
        (self.epochs * n_train.div_ceil(self.batch_size)).min(self.max_iterations)
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelState<f32>,
    pub adam: AdamState<f32>,
    /// Training loss of every optimizer step.
    pub train_loss: Vec<f64>,
    /// Eval-mode validation loss after every epoch (empty without a
    /// validation set).
    pub val_loss: Vec<f64>,
    pub val_msd: Vec<f64>,
    /// Model with the lowest validation MSD; the final model when there is no
    /// validation set or no epoch completed.
    pub best: ModelState<f32>,
    pub best_val_msd: Option<f64>,
    pub steps: usize,
}

/// Stacks samples into an input tensor `(B, 1, H, W)` and a target tensor
/// `(B, 2N)`.
pub fn make_batch(samples: &[Sample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (w, h) = (first.image.width(), first.image.height());
    let n_out = 2 * first.landmarks.len();
    let mut xs = Vec::with_capacity(samples.len() * w * h);
    let mut ys = Vec::with_capacity(samples.len() * n_out);
    for s in samples {
        if (s.image.width(), s.image.height()) != (w, h) || 2 * s.landmarks.len() != n_out {
            return Err(Error::Shape(format!(
                "sample `{}` does not match the batch geometry",
                s.id
            )));
        }
        let (img, target) = normalize(s)?;
        xs.extend(img);
        ys.extend(target.into_iter().map(|v| v as f32));
    }
    Ok((
        Tensor::from_vec(&[samples.len(), 1, h, w], xs)?,
        Tensor::from_vec(&[samples.len(), n_out], ys)?,
    ))
}

/// Eval-mode MSE over a sample set, in chunks.
pub fn mean_loss(model: &ModelState<f32>, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(32) {
        let (x, y) = make_batch(chunk)?;
        let (l, _) = loss_mse(&model.predict(&x)?, &y)?;
        total += l as f64 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch Adam training with online augmentation.
///
/// Each epoch shuffles the training set; a final partial minibatch is topped
/// up from the start of that epoch's order so every step sees `batch_size`
/// samples. Training stops after `min(epochs * ceil(n / batch_size),
/// max_iterations)` steps. Randomness comes from streams keyed on
/// `(seed, epoch, item)` and `(seed, step)`, so a run is reproducible bit for
/// bit.
pub fn train(
    model: ModelState<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if train_set.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "training set of {} is smaller than batch_size {}",
            train_set.len(),
            cfg.batch_size
        )));
    }
    let mut model = model;
    let mut adam = AdamState::new(model.params().iter().map(|p| p.len()));
    let adam_cfg = cfg.adam();
    let total = cfg.total_steps(train_set.len());
    let per_epoch = train_set.len().div_ceil(cfg.batch_size);

    let mut out = TrainOutcome {
        best: model.clone(),
        model: model.clone(),
        adam: adam.clone(),
        train_loss: Vec::with_capacity(total),
        val_loss: Vec::new(),
        val_msd: Vec::new(),
        best_val_msd: None,
        steps: 0,
    };
    let mut step = 0;
    let mut epoch = 0;
    while step < total {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch as u64, u64::MAX)));
        for b in 0..per_epoch {
            if step == total {
                break;
            }
            let batch: Vec<Sample> = (0..cfg.batch_size)
                .map(|j| {
                    let idx = order[(b * cfg.batch_size + j) % order.len()];
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch as u64, idx as u64));
                    augment(&train_set[idx], &cfg.augment, &mut rng)
                })
                .collect();
            let (x, y) = make_batch(&batch)?;
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed ^ 0x5eed, step as u64, 1));
            let (pred, cache) = model.forward_train(&x, &mut rng)?;
            let (loss, grad) = loss_mse(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Contract(format!("training loss diverged at step {step}")));
            }
            let grads = model.backward(&cache, &grad)?;
            adam_step(&mut model.params_mut(), &grads.0, &mut adam, &adam_cfg)?;
            out.train_loss.push(loss as f64);
            step += 1;
        }
        epoch += 1;
        if !val_set.is_empty() {
            out.val_loss.push(mean_loss(&model, val_set)?);
            let msd = evaluate(&model, val_set)?.mean;
            out.val_msd.push(msd);
            if out.best_val_msd.is_none_or(|best| msd < best) {
                out.best_val_msd = Some(msd);
                out.best = model.clone();
            }
        }
    }
    if out.best_val_msd.is_none() {
        out.best = model.clone();
    }
    out.steps = step;
    out.model = model;
    out.adam = adam;
    Ok(out)
}

/// Convenience: evaluates both the final and the best model on `test_set`.
pub fn evaluate_outcome(out: &TrainOutcome, test_set: &[Sample]) -> Result<(EvalReport, EvalReport)> {
    Ok((evaluate(&out.model, test_set)?, evaluate(&out.best, test_set)?))
}
