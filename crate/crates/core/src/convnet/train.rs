//! Mini-batch SGD with momentum, coupled weight decay and early stopping.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{loss_xent, xent_grad, Gradients, Mode, Network};
use super::params::ModelParams;
use crate::augment::AugmentMode;
use crate::error::{Error, Result};
use crate::synth::derive_seed;
use crate::training::{check_finite, EarlyStopping, EpochRecord, TrainingLog};

/// Batch gradients are summed over this many fixed partitions so the result
/// does not depend on the thread count.
const GRAD_PARTITIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub input: Vec<f64>,
    pub class_index: usize,
}

/// Indexed examples whose inputs may be produced on demand.
pub trait ExampleSet: Sync {
    fn len(&self) -> usize;
    fn class_index(&self, i: usize) -> usize;
    fn input(&self, i: usize) -> Cow<'_, [f64]>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSet for [TrainExample] {
    fn len(&self) -> usize {
        <[TrainExample]>::len(self)
    }
    fn class_index(&self, i: usize) -> usize {
        self[i].class_index
    }
    fn input(&self, i: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self[i].input)
    }
}

impl ExampleSet for Vec<TrainExample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn class_index(&self, i: usize) -> usize {
        self[i].class_index
    }
    fn input(&self, i: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self[i].input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.01,
            batch_size: 128,
            patience: 2000,
            max_epochs: 5000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be ≥ 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size and max epochs must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max epochs".into()));
        }
        Ok(())
    }

    /// Copies `(patience, max_epochs)` from [`regime`].
    pub fn with_regime(
        self,
        transfer: bool,
        displacement_samples: usize,
        augment: AugmentMode,
    ) -> Self {
        let (patience, max_epochs) = regime(transfer, displacement_samples, augment);
        Self {
            patience,
            max_epochs,
            ..self
        }
    }
}

/// Early-stopping patience and epoch budget for a training setup.
///
/// Displacements of 25 samples or less count as the dense (0.1 s) regime.
pub fn regime(transfer: bool, displacement_samples: usize, augment: AugmentMode) -> (usize, usize) {
    if !transfer {
        return (2000, 5000);
    }
    let dense = displacement_samples <= 25;
    match (dense, augment) {
        (false, AugmentMode::Full) => (50, 500),
        (false, _) => (500, 5000),
        (true, AugmentMode::None) => (200, 5000),
        (true, _) => (250, 2000),
    }
}

/// One optimizer step on every tensor that has a gradient:
/// `g' = g + λθ`, `v ← μv + g'`, `θ ← θ − lr·v`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
    for (name, g) in &grads.params {
        let t = params.get_mut(name)?;
        if t.frozen {
            continue;
        }
        if g.len() != t.data.len() {
            return Err(Error::Shape(format!(
                "gradient for {name} has {} values, tensor has {}",
                g.len(),
                t.data.len()
            )));
        }
        if t.velocity.len() != t.data.len() {
            t.velocity = vec![0.0; t.data.len()];
        }
        for ((theta, v), &gi) in t.data.iter_mut().zip(t.velocity.iter_mut()).zip(g) {
            let g2 = gi + cfg.weight_decay * *theta;
            *v = cfg.momentum * *v + g2;
            *theta -= cfg.lr * *v;
        }
    }
    Ok(())
}

/// Index of the largest logit; ties go to the lower index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and accuracy in inference mode.
pub fn evaluate<D: ExampleSet + ?Sized>(
    net: &Network,
    params: &ModelParams,
    data: &D,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let per: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let logits = net.predict_logits(params, &data.input(i))?;
            let class = data.class_index(i);
            Ok((loss_xent(&logits, class), argmax(&logits) == class))
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Predicted class per example.
pub fn predict(net: &Network, params: &ModelParams, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
    inputs
        .par_iter()
        .map(|x| Ok(argmax(&net.predict_logits(params, x)?)))
        .collect()
}

/// Mean loss and gradient over `batch` (indices into `data`).
///
/// Dropout masks are seeded per `(seed, epoch, example)` so results are
/// reproducible for any thread count.
pub fn batch_gradient<D: ExampleSet + ?Sized>(
    net: &Network,
    params: &ModelParams,
    data: &D,
    batch: &[usize],
    seed: u64,
    epoch: usize,
) -> Result<(f64, Gradients)> {
    let part = batch.len().div_ceil(GRAD_PARTITIONS).max(1);
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(part)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut acc = Gradients::default();
            for &i in chunk {
                let class = data.class_index(i);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64, i as u64]));
                let (logits, cache) = net.forward(params, &data.input(i), Mode::Train, &mut rng)?;
                loss += loss_xent(&logits, class);
                let g = net.backward(params, &cache, &xent_grad(&logits, class), false)?;
                acc.accumulate(&g);
            }
            Ok((loss, acc))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = Gradients::default();
    for (l, g) in &partials {
        loss += l;
        grads.accumulate(g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss * inv, grads))
}

/// Trains from `params` and returns the parameters from the epoch
/// with the lowest validation loss, plus the per-epoch log.
pub fn train<S: ExampleSet + ?Sized, V: ExampleSet + ?Sized>(
    net: &Network,
    params: ModelParams,
    train_set: &S,
    val_set: &V,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    cfg.validate()?;
    params.check_against(net.spec())?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let n_out = net.n_outputs();
    let classes = (0..train_set.len())
        .map(|i| train_set.class_index(i))
        .chain((0..val_set.len()).map(|i| val_set.class_index(i)));
    if let Some(c) = classes.into_iter().find(|&c| c >= n_out) {
        return Err(Error::Data(format!(
            "class index {c} out of range for a {n_out}-way network"
        )));
    }
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut log = TrainingLog::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(net, &params, train_set, chunk, cfg.seed, epoch)?;
            check_finite(loss, "training loss")?;
            sgd_step(&mut params, &grads, cfg)?;
            loss_sum += loss;
            n_batches += 1;
        }
        let (val_loss, val_acc) = evaluate(net, &params, val_set)?;
        check_finite(val_loss, "validation loss")?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
            val_acc,
        });
        if stopper.observe(epoch, val_loss) {
            best.clone_from(&params);
        }
        if stopper.should_stop() {
            break;
        }
    }
    log.best_epoch = stopper.best_epoch().unwrap_or(0);
    Ok((best, log))
}
