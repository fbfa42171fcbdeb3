//! SSVEP classification from short EEG windows.
//!
//! The crate covers the whole path from raw trials to leave-one-subject-out
//! reports:
//!
//! - [`data`]: trial containers and the `SSVB` store format.
//! - [`synth`]: seeded synthetic SSVEP trials.
//! - [`preprocess`]: CAR, window slicing, STFT spectrograms, band selection.
//! - [`augment`]: enumerated time/frequency masking.
//! - [`fbcca`]: filter-bank canonical correlation analysis.
//! - [`linsvm`]: linear SVM on flattened spectrograms.
//! - [`convnet`]: small convnets with manual backprop and head replacement.
//! - [`harness`]: splits, metrics and experiment runs.
//! - [`config`]: the JSON run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
mod codec;
pub mod config;
pub mod convnet;
pub mod data;
pub mod dataset;
pub mod error;
pub mod fbcca;
pub mod harness;
pub mod linsvm;
pub mod preprocess;
pub mod synth;
pub mod training;

pub use augment::{AugmentMode, MaskVariant};
pub use config::{Classifier, NetworkPreset, RunConfig};
pub use data::{Label, LabelMap, RawTrial, TrialStore, WindowId};
pub use dataset::LabeledImage;
pub use error::{Error, ErrorKind, Result};
pub use preprocess::Spectrogram;
