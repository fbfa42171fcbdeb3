//! Raw trial → model input: common average reference, window slicing, STFT,
//! dB scaling with per-image normalization, band selection and resizing.

mod image;
mod stft;

pub use image::{
    band_select, db_normalize, flatten_for_svm, pgm_bytes, resize_nearest, write_pgm, BandSpec,
    Spectrogram, SVM_COLS, SVM_ROWS,
};
pub use stft::{stft_magnitude, Stft, StftConfig, WindowFn};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::MaskVariant;
use crate::data::{LabelMap, RawTrial, TrialStore, WindowId, WindowSlice, OZ};
use crate::dataset::LabeledImage;
use crate::error::{Error, Result};

/// Subtracts the across-channel mean from every channel at each sample.
pub fn car_filter(trial: &RawTrial) -> Result<RawTrial> {
    let n_ch = trial.n_channels();
    if n_ch < 2 {
        return Err(Error::Data(
            "common average reference needs at least two channels".into(),
        ));
    }
    let n = trial.n_samples();
    let mut out = trial.clone();
    for t in 0..n {
        let mean = trial.samples.iter().map(|row| row[t] as f64).sum::<f64>() / n_ch as f64;
        for (dst, src) in out.samples.iter_mut().zip(&trial.samples) {
            dst[t] = (src[t] as f64 - mean) as f32;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub window_len_samples: usize,
    pub displacement_samples: usize,
}

impl Default for WindowConfig {
    /// 0.5 s windows, 0.5 s displacement at 250 Hz.
    fn default() -> Self {
        Self {
            window_len_samples: 125,
            displacement_samples: 125,
        }
    }
}

impl WindowConfig {
    pub fn from_seconds(window_s: f64, displacement_s: f64, sample_rate_hz: f64) -> Result<Self> {
        let to_samples = |s: f64| {
            let n = s * sample_rate_hz;
            if !(n >= 1.0) || (n - n.round()).abs() > 1e-6 {
                Err(Error::Config(format!(
                    "{s} s is not a whole number of samples at {sample_rate_hz} Hz"
                )))
            } else {
                Ok(n.round() as usize)
            }
        };
        let cfg = Self {
            window_len_samples: to_samples(window_s)?,
            displacement_samples: to_samples(displacement_s)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.displacement_samples == 0 || self.displacement_samples > self.window_len_samples {
            return Err(Error::Config(format!(
                "window slicing needs 0 < displacement ≤ window ({} / {})",
                self.displacement_samples, self.window_len_samples
            )));
        }
        Ok(())
    }
}

/// Start offsets `0, d, 2d, …` of every window that fits entirely in `len`
/// samples; there are `⌊(len − W)/d⌋ + 1` of them.
pub fn window_starts(len: usize, cfg: &WindowConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if cfg.window_len_samples > len {
        return Err(Error::Config(format!(
            "window of {} samples does not fit a {len}-sample signal",
            cfg.window_len_samples
        )));
    }
    Ok((0..=(len - cfg.window_len_samples))
        .step_by(cfg.displacement_samples)
        .collect())
}

/// Slices one channel of a trial into fixed-length windows.
pub fn slice_windows(
    trial: &RawTrial,
    channel: usize,
    cfg: &WindowConfig,
) -> Result<Vec<WindowSlice>> {
    let row = trial
        .samples
        .get(channel)
        .ok_or_else(|| Error::Data(format!("channel index {channel} out of range")))?;
    Ok(window_starts(row.len(), cfg)?
        .into_iter()
        .map(|start| WindowSlice {
            source: WindowId::new(
                trial.subject_id,
                trial.stimulus_hz,
                trial.trial_index,
                start,
            ),
            sample_rate_hz: trial.sample_rate_hz as f64,
            samples: row[start..start + cfg.window_len_samples]
                .iter()
                .map(|&v| v as f64)
                .collect(),
        })
        .collect())
}

/// When to apply the common average reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarMode {
    /// Apply whenever the trial has at least two channels.
    #[default]
    Auto,
    Always,
    Never,
}

impl CarMode {
    pub fn apply(self, trial: &RawTrial) -> Result<RawTrial> {
        match self {
            CarMode::Never => Ok(trial.clone()),
            CarMode::Auto if trial.n_channels() < 2 => Ok(trial.clone()),
            _ => car_filter(trial),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub car: CarMode,
    /// Electrode turned into spectrograms.
    pub channel: String,
    pub window: WindowConfig,
    pub stft: StftConfig,
    pub bands: BandSpec,
    pub label_freqs_hz: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            car: CarMode::Auto,
            channel: OZ.to_string(),
            window: WindowConfig::default(),
            stft: StftConfig::default(),
            bands: BandSpec::default(),
            label_freqs_hz: vec![12.0, 15.0],
        }
    }
}

/// Reusable spectrogram pipeline (planned FFT + configuration).
#[derive(Debug)]
pub struct Preprocessor {
    cfg: PipelineConfig,
    labels: LabelMap,
    stft: Stft,
}

impl Preprocessor {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.window.validate()?;
        let labels = LabelMap::new(&cfg.label_freqs_hz)?;
        BandSpec::new(cfg.bands.0.clone())?;
        Ok(Self {
            stft: Stft::new(cfg.stft.clone())?,
            labels,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    /// Magnitude STFT → dB + min-max normalization → band selection.
    pub fn spectrogram(&self, slice: &WindowSlice) -> Result<Spectrogram> {
        let mag = self.stft.magnitude(&slice.samples, slice.sample_rate_hz)?;
        let norm = db_normalize(&mag, self.cfg.stft.db_floor_eps);
        band_select(&norm, &self.cfg.bands)
    }

    /// All labeled (unmasked) images of one trial.
    pub fn process_trial(&self, trial: &RawTrial) -> Result<Vec<LabeledImage>> {
        let label = self
            .labels
            .label_for(trial.stimulus_hz as f64)
            .ok_or_else(|| {
                Error::Data(format!(
                    "trial stimulus {} Hz is not in the label set {:?}",
                    trial.stimulus_hz,
                    self.labels.freqs_hz()
                ))
            })?;
        let referenced = self.cfg.car.apply(trial)?;
        let channel = referenced
            .channels
            .iter()
            .position(|c| *c == self.cfg.channel)
            .ok_or_else(|| Error::UnknownChannel {
                name: self.cfg.channel.clone(),
                available: referenced.channels.clone(),
            })?;
        slice_windows(&referenced, channel, &self.cfg.window)?
            .iter()
            .map(|slice| {
                Ok(LabeledImage {
                    id: slice.source,
                    class_index: label.class_index,
                    mask: MaskVariant::NONE,
                    image: self.spectrogram(slice)?,
                })
            })
            .collect()
    }

    /// Processes every trial of a store; order follows the store.
    pub fn process_store(&self, store: &TrialStore) -> Result<Vec<LabeledImage>> {
        let per_trial: Vec<Vec<LabeledImage>> = store
            .trials
            .par_iter()
            .map(|t| self.process_trial(t))
            .collect::<Result<_>>()?;
        Ok(per_trial.into_iter().flatten().collect())
    }
}

/// Window of one or more raw channels, used by training-free classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub id: WindowId,
    pub class_index: usize,
    pub sample_rate_hz: f64,
    /// `[n_channels][window_len]`.
    pub channels: Vec<Vec<f64>>,
}

/// CAR (per `car`), channel selection, then window slicing of raw signals.
pub fn raw_windows<S: AsRef<str>>(
    store: &TrialStore,
    labels: &LabelMap,
    channels: &[S],
    car: CarMode,
    window: &WindowConfig,
) -> Result<Vec<RawWindow>> {
    let mut out = Vec::new();
    for trial in &store.trials {
        let label = labels.label_for(trial.stimulus_hz as f64).ok_or_else(|| {
            Error::Data(format!(
                "trial stimulus {} Hz is not labeled",
                trial.stimulus_hz
            ))
        })?;
        let selected = car.apply(trial)?.select_channels(channels)?;
        for start in window_starts(selected.n_samples(), window)? {
            out.push(RawWindow {
                id: WindowId::new(
                    trial.subject_id,
                    trial.stimulus_hz,
                    trial.trial_index,
                    start,
                ),
                class_index: label.class_index,
                sample_rate_hz: trial.sample_rate_hz as f64,
                channels: selected
                    .samples
                    .iter()
                    .map(|row| {
                        row[start..start + window.window_len_samples]
                            .iter()
                            .map(|&v| v as f64)
                            .collect()
                    })
                    .collect(),
            });
        }
    }
    Ok(out)
}
