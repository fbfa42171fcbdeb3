//! Linear SVM on flattened 8×3 spectrograms, trained with mini-batch SGD
//! with momentum on the regularized hinge loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convnet::{ModelParams, ParamTensor};
use crate::error::{Error, Result};
use crate::training::{check_finite, EarlyStopping, EpochRecord, TrainingLog};

pub const N_FEATURES: usize = 24;

/// One training example with `y ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmExample {
    pub x: [f64; N_FEATURES],
    pub y: f64,
}

impl SvmExample {
    /// Class 0 → −1, class 1 → +1.
    pub fn from_class(x: [f64; N_FEATURES], class_index: usize) -> Self {
        Self {
            x,
            y: if class_index == 0 { -1.0 } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmModel {
    pub w: [f64; N_FEATURES],
    pub b: f64,
}

impl Default for SvmModel {
    fn default() -> Self {
        Self {
            w: [0.0; N_FEATURES],
            b: 0.0,
        }
    }
}

impl SvmModel {
    pub fn decision(&self, x: &[f64; N_FEATURES]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// `sign(w·x + b)` as a class index; a zero decision maps to class 0 (−1).
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> usize {
        if self.decision(x) > 0.0 {
            1
        } else {
            0
        }
    }

    pub fn to_params(&self) -> ModelParams {
        let mut p = ModelParams::default();
        p.insert(
            "svm.weight",
            ParamTensor::new(vec![N_FEATURES], self.w.to_vec()),
        );
        p.insert("svm.bias", ParamTensor::new(vec![1], vec![self.b]));
        p
    }

    pub fn from_params(p: &ModelParams) -> Result<Self> {
        let w = p.get("svm.weight")?;
        let b = p.get("svm.bias")?;
        if w.data.len() != N_FEATURES || b.data.len() != 1 {
            return Err(Error::Shape("SVM parameter shapes".into()));
        }
        let mut model = SvmModel::default();
        model.w.copy_from_slice(&w.data);
        model.b = b.data[0];
        Ok(model)
    }
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svm_predict(model: &SvmModel, x: &[f64; N_FEATURES]) -> usize {
    model.predict(x)
}

/// Mean hinge loss plus `(c/2)·‖w‖²`.
pub fn svm_loss(model: &SvmModel, batch: &[SvmExample], reg_c: f64) -> f64 {
    assert!(!batch.is_empty(), "svm_loss of an empty batch");
    let hinge = batch
        .iter()
        .map(|e| (1.0 - e.y * model.decision(&e.x)).max(0.0))
        .sum::<f64>()
        / batch.len() as f64;
    hinge + 0.5 * reg_c * dot(&model.w, &model.w)
}

/// Subgradient of [`svm_loss`]; the kink (margin exactly 1) contributes zero.
pub fn svm_gradient(model: &SvmModel, batch: &[SvmExample], reg_c: f64) -> SvmModel {
    let mut g = SvmModel::default();
    let scale = 1.0 / batch.len() as f64;
    for e in batch {
        if e.y * model.decision(&e.x) < 1.0 {
            for (gw, xi) in g.w.iter_mut().zip(&e.x) {
                *gw -= scale * e.y * xi;
            }
            g.b -= scale * e.y;
        }
    }
    for (gw, w) in g.w.iter_mut().zip(&model.w) {
        *gw += reg_c * w;
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub reg_c: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            reg_c: 0.01,
            batch_size: 128,
            patience: 200,
            max_epochs: 5000,
            seed: 0,
        }
    }
}

impl SvmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("SVM learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("SVM momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size and max epochs must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max epochs".into()));
        }
        if !(self.reg_c >= 0.0) {
            return Err(Error::Config("regularization must be ≥ 0".into()));
        }
        Ok(())
    }
}

fn accuracy(model: &SvmModel, data: &[SvmExample]) -> f64 {
    let correct = data
        .iter()
        .filter(|e| (model.predict(&e.x) == 1) == (e.y > 0.0))
        .count();
    correct as f64 / data.len() as f64
}

/// Trains with early stopping on validation loss; returns the best model.
pub fn svm_train(
    train: &[SvmExample],
    val: &[SvmExample],
    cfg: &SvmTrainConfig,
) -> Result<(SvmModel, TrainingLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(
            "SVM training needs non-empty train and validation sets".into(),
        ));
    }
    if !(train.iter().any(|e| e.y > 0.0) && train.iter().any(|e| e.y < 0.0)) {
        return Err(Error::Data(
            "SVM training data contains a single class".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SvmModel::default();
    let mut velocity = SvmModel::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model;
    let mut log = TrainingLog::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            loss_sum += svm_loss(&model, &batch, cfg.reg_c);
            n_batches += 1;
            let g = svm_gradient(&model, &batch, cfg.reg_c);
            for i in 0..N_FEATURES {
                velocity.w[i] = cfg.momentum * velocity.w[i] + g.w[i];
                model.w[i] -= cfg.lr * velocity.w[i];
            }
            velocity.b = cfg.momentum * velocity.b + g.b;
            model.b -= cfg.lr * velocity.b;
        }
        let val_loss = check_finite(svm_loss(&model, val, cfg.reg_c), "SVM validation loss")?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
            val_acc: accuracy(&model, val),
        });
        if stopper.observe(epoch, val_loss) {
            best = model;
        }
        if stopper.should_stop() {
            break;
        }
    }
    log.best_epoch = stopper.best_epoch().unwrap_or(0);
    Ok((best, log))
}
