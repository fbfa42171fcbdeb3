//! Leave-one-subject-out experiment driver.

mod metrics;
mod split;

use std::borrow::Cow;

use rayon::prelude::*;

pub use metrics::{
    metrics, ClassStats, Confusion, EvalReport, Metrics, SubjectResult, REPORT_HEADER,
};
pub use split::{check_no_leakage, class_counts, loso_split, Split, SplitSpec, Windowed};

use crate::augment::expand_dataset;
use crate::config::{Classifier, RunConfig};
use crate::convnet::{self, replace_head, ExampleSet, ModelParams, Network, NetworkSpec};
use crate::data::{LabelMap, TrialStore, WindowId};
use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::fbcca::Fbcca;
use crate::linsvm::{svm_train, SvmExample, SvmModel};
use crate::preprocess::{flatten_for_svm, raw_windows, resize_nearest, Preprocessor, RawWindow};
use crate::synth::derive_seed;
use crate::training::TrainingLog;

/// Independent random streams derived from the run seed, per test subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedStream {
    Split = 1,
    Svm = 2,
    Init = 3,
    Train = 4,
}

pub fn stream_seed(seed: u64, subject_id: u16, stream: SeedStream) -> u64 {
    derive_seed(seed, &[stream as u64, subject_id as u64])
}

/// Labeled inputs built once per store.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Images(Vec<LabeledImage>),
    Raw(Vec<RawWindow>),
}

impl Prepared {
    pub fn len(&self) -> usize {
        match self {
            Self::Images(v) => v.len(),
            Self::Raw(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Spectrogram images for learned classifiers, raw windows for FBCCA.
pub fn prepare(cfg: &RunConfig, store: &TrialStore) -> Result<Prepared> {
    if cfg.classifier == Classifier::Fbcca {
        let labels = LabelMap::new(&cfg.fbcca.candidate_freqs_hz)?;
        Ok(Prepared::Raw(raw_windows(
            store,
            &labels,
            &cfg.fbcca_channels,
            cfg.pipeline.car,
            &cfg.pipeline.window,
        )?))
    } else {
        Ok(Prepared::Images(
            Preprocessor::new(cfg.pipeline.clone())?.process_store(store)?,
        ))
    }
}

/// Spectrograms resized to the network input when requested.
#[derive(Debug, Clone, Copy)]
pub struct ResizedImages<'a> {
    images: &'a [LabeledImage],
    height: usize,
    width: usize,
}

impl<'a> ResizedImages<'a> {
    pub fn new(images: &'a [LabeledImage], net: &NetworkSpec) -> Result<Self> {
        if net.input.channels != 1 || net.input.height == 0 || net.input.width == 0 {
            return Err(Error::Config(format!(
                "network input {:?} is not a single-channel image",
                net.input
            )));
        }
        Ok(Self {
            images,
            height: net.input.height,
            width: net.input.width,
        })
    }
}

impl ExampleSet for ResizedImages<'_> {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn class_index(&self, i: usize) -> usize {
        self.images[i].class_index
    }

    fn input(&self, i: usize) -> Cow<'_, [f64]> {
        let img = &self.images[i].image;
        if img.shape() == (self.height, self.width) {
            Cow::Borrowed(&img.values)
        } else {
            let resized =
                resize_nearest(img, self.height, self.width).expect("non-zero target size");
            Cow::Owned(resized.values)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Fbcca,
    Majority {
        class_index: usize,
    },
    Svm(SvmModel),
    Cnn {
        network: NetworkSpec,
        params: ModelParams,
    },
}

impl TrainedModel {
    /// Parameters in the named-tensor format, when the model has any.
    pub fn params(&self) -> Option<ModelParams> {
        match self {
            Self::Svm(m) => Some(m.to_params()),
            Self::Cnn { params, .. } => Some(params.clone()),
            _ => None,
        }
    }
}

/// Everything produced for one held-out subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRun {
    pub subject_id: u16,
    pub model: TrainedModel,
    pub log: Option<TrainingLog>,
    pub test_ids: Vec<WindowId>,
    pub preds: Vec<usize>,
    pub labels: Vec<usize>,
    pub metrics: Metrics,
}

fn split_spec(cfg: &RunConfig, seed: u64, subject_id: u16) -> SplitSpec {
    SplitSpec {
        test_subject_id: subject_id,
        train_fraction: cfg.split.train_fraction,
        val_fraction: cfg.split.val_fraction,
        seed: stream_seed(seed, subject_id, SeedStream::Split),
        stratified: cfg.split.stratified,
    }
}

fn svm_examples(images: &[LabeledImage]) -> Result<Vec<SvmExample>> {
    images
        .iter()
        .map(|im| {
            Ok(SvmExample::from_class(
                flatten_for_svm(&im.image)?,
                im.class_index,
            ))
        })
        .collect()
}

/// Model plus test window ids, predictions and labels.
type FbccaRun = (TrainedModel, Vec<WindowId>, Vec<usize>, Vec<usize>);

fn run_fbcca(cfg: &RunConfig, windows: &[RawWindow], subject_id: u16) -> Result<FbccaRun> {
    let test: Vec<&RawWindow> = windows
        .iter()
        .filter(|w| w.id.subject_id == subject_id)
        .collect();
    let first = test
        .first()
        .ok_or_else(|| Error::Data(format!("test subject {subject_id} has no windows")))?;
    let fb = Fbcca::new(
        cfg.fbcca.clone(),
        first.sample_rate_hz,
        cfg.pipeline.window.window_len_samples,
    )?;
    let preds = test
        .iter()
        .map(|w| Ok(fb.classify(&w.channels)?.class_index))
        .collect::<Result<_>>()?;
    Ok((
        TrainedModel::Fbcca,
        test.iter().map(|w| w.id).collect(),
        preds,
        test.iter().map(|w| w.class_index).collect(),
    ))
}

/// Trains (when applicable) and evaluates with `subject_id` held out.
pub fn run_subject(
    cfg: &RunConfig,
    prepared: &Prepared,
    subject_id: u16,
    pretrained: Option<&ModelParams>,
) -> Result<SubjectRun> {
    let seed = cfg.seed.unwrap_or(0);
    let (model, log, test_ids, preds, labels) = match (cfg.classifier, prepared) {
        (Classifier::Fbcca, Prepared::Raw(windows)) => {
            let (m, ids, p, l) = run_fbcca(cfg, windows, subject_id)?;
            (m, None, ids, p, l)
        }
        (Classifier::Fbcca, Prepared::Images(_)) | (_, Prepared::Raw(_)) => {
            return Err(Error::Config(format!(
                "prepared inputs do not match classifier {}",
                cfg.classifier
            )))
        }
        (classifier, Prepared::Images(images)) => {
            let split = loso_split(images, &split_spec(cfg, seed, subject_id))?;
            check_no_leakage(&split)?;
            let test_ids: Vec<WindowId> = split.test.iter().map(|x| x.id).collect();
            let labels: Vec<usize> = split.test.iter().map(|x| x.class_index).collect();
            match classifier {
                Classifier::Majority => {
                    let counts = class_counts(&split.train, 2);
                    let class_index = if counts[1] > counts[0] { 1 } else { 0 };
                    let preds = vec![class_index; labels.len()];
                    (
                        TrainedModel::Majority { class_index },
                        None,
                        test_ids,
                        preds,
                        labels,
                    )
                }
                Classifier::Svm => {
                    let train = svm_examples(&expand_dataset(&split.train, cfg.augment)?)?;
                    let val = svm_examples(&split.val)?;
                    let svm_cfg = crate::linsvm::SvmTrainConfig {
                        seed: stream_seed(seed, subject_id, SeedStream::Svm),
                        ..cfg.svm.clone()
                    };
                    let (model, log) = svm_train(&train, &val, &svm_cfg)?;
                    let preds = svm_examples(&split.test)?
                        .iter()
                        .map(|e| model.predict(&e.x))
                        .collect();
                    (TrainedModel::Svm(model), Some(log), test_ids, preds, labels)
                }
                Classifier::Cnn | Classifier::CnnNoTransfer => {
                    let spec = cfg.network.spec();
                    let init_seed = stream_seed(seed, subject_id, SeedStream::Init);
                    let transfer = classifier == Classifier::Cnn;
                    let params = if transfer {
                        let source = pretrained.ok_or_else(|| {
                            Error::Config("classifier cnn needs pretrained parameters".into())
                        })?;
                        replace_head(source, &spec, init_seed, cfg.freeze_prefix)?.0
                    } else {
                        ModelParams::init(&spec, init_seed)?
                    };
                    let mut tcfg = cfg.cnn;
                    tcfg.seed = stream_seed(seed, subject_id, SeedStream::Train);
                    if cfg.use_regime {
                        tcfg = tcfg.with_regime(
                            transfer,
                            cfg.pipeline.window.displacement_samples,
                            cfg.augment,
                        );
                    }
                    let net = Network::new(spec.clone())?;
                    let train_imgs = expand_dataset(&split.train, cfg.augment)?;
                    let (params, log) = convnet::train(
                        &net,
                        params,
                        &ResizedImages::new(&train_imgs, &spec)?,
                        &ResizedImages::new(&split.val, &spec)?,
                        &tcfg,
                    )?;
                    let test = ResizedImages::new(&split.test, &spec)?;
                    let preds = (0..test.len())
                        .into_par_iter()
                        .map(|i| {
                            Ok(convnet::argmax(
                                &net.predict_logits(&params, &test.input(i))?,
                            ))
                        })
                        .collect::<Result<_>>()?;
                    (
                        TrainedModel::Cnn {
                            network: spec,
                            params,
                        },
                        Some(log),
                        test_ids,
                        preds,
                        labels,
                    )
                }
                Classifier::Fbcca => unreachable!("handled above"),
            }
        }
    };
    let metrics = metrics(&preds, &labels)?;
    Ok(SubjectRun {
        subject_id,
        model,
        log,
        test_ids,
        preds,
        labels,
        metrics,
    })
}

/// Test subjects selected by the config, checked against the store.
pub fn test_subjects(cfg: &RunConfig, store: &TrialStore) -> Result<Vec<u16>> {
    let available = store.subjects();
    match &cfg.test_subjects {
        None => Ok(available),
        Some(list) => {
            if let Some(s) = list.iter().find(|s| !available.contains(s)) {
                return Err(Error::Data(format!(
                    "test subject {s} not in store (subjects {available:?})"
                )));
            }
            Ok(list.clone())
        }
    }
}

/// Runs every selected test subject; `jobs = 0` uses the global thread pool.
/// Results are in subject order and identical for any `jobs`.
pub fn run_subjects(
    cfg: &RunConfig,
    store: &TrialStore,
    pretrained: Option<&ModelParams>,
    jobs: usize,
) -> Result<Vec<SubjectRun>> {
    cfg.validate()?;
    if cfg.classifier == Classifier::Cnn && pretrained.is_none() {
        return Err(Error::Config(
            "classifier cnn needs pretrained parameters (set `pretrained`, or use cnn_no_transfer)"
                .into(),
        ));
    }
    let subjects = test_subjects(cfg, store)?;
    let prepared = prepare(cfg, store)?;
    let work = || {
        subjects
            .par_iter()
            .map(|&s| {
                run_subject(cfg, &prepared, s, pretrained)
                    .map_err(|e| e.context(format!("test subject {s}")))
            })
            .collect::<Result<Vec<_>>>()
    };
    if jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)
    }
}

pub fn run_experiment(
    cfg: &RunConfig,
    store: &TrialStore,
    pretrained: Option<&ModelParams>,
    jobs: usize,
) -> Result<EvalReport> {
    let runs = run_subjects(cfg, store, pretrained, jobs)?;
    Ok(report_from_runs(cfg.classifier, &runs))
}

pub fn report_from_runs(classifier: Classifier, runs: &[SubjectRun]) -> EvalReport {
    EvalReport {
        classifier: classifier.name().to_string(),
        rows: runs
            .iter()
            .map(|r| SubjectResult {
                subject_id: r.subject_id,
                metrics: r.metrics.clone(),
            })
            .collect(),
    }
}
