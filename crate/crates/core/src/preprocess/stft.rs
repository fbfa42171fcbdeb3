use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::image::Spectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    Rectangular,
    Hann,
    Blackman,
}

impl WindowFn {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / nf;
                match self {
                    WindowFn::Rectangular => 1.0,
                    WindowFn::Hann => 0.5 - 0.5 * x.cos(),
                    WindowFn::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub fft_window_len: usize,
    pub hop: usize,
    pub window_fn: WindowFn,
    pub db_floor_eps: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_window_len: 125,
            hop: 62,
            window_fn: WindowFn::Rectangular,
            db_floor_eps: 1e-10,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.fft_window_len {
            return Err(Error::Config(format!(
                "STFT hop must satisfy 0 < hop ≤ window ({} / {})",
                self.hop, self.fft_window_len
            )));
        }
        if !(self.db_floor_eps >= 0.0) {
            return Err(Error::Config("db_floor_eps must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Planned magnitude STFT, reusable across slices.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_window_len);
        Ok(Self {
            window: cfg.window_fn.coefficients(cfg.fft_window_len),
            cfg,
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Number of frames for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        len / self.cfg.hop + 1
    }

    /// Center-padded magnitude STFT: `n_fft/2` zeros on each side, frames every
    /// `hop` samples, rows are rFFT bins `0..=n_fft/2`.
    pub fn magnitude(&self, x: &[f64], sample_rate_hz: f64) -> Result<Spectrogram> {
        if x.is_empty() {
            return Err(Error::Data("STFT of an empty signal".into()));
        }
        let n_fft = self.cfg.fft_window_len;
        let pad = n_fft / 2;
        let n_bins = n_fft / 2 + 1;
        let n_frames = self.n_frames(x.len());

        let sample = |i: isize| -> f64 {
            if i < 0 || i as usize >= x.len() {
                0.0
            } else {
                x[i as usize]
            }
        };

        let mut values = vec![0.0; n_bins * n_frames];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        for frame in 0..n_frames {
            let start = (frame * self.cfg.hop) as isize - pad as isize;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(sample(start + k as isize) * self.window[k], 0.0);
            }
            self.fft.process(&mut buf);
            for (bin, c) in buf[..n_bins].iter().enumerate() {
                values[bin * n_frames + frame] = c.norm();
            }
        }
        Spectrogram::new(
            n_bins,
            n_frames,
            values,
            (0..n_bins)
                .map(|b| b as f64 * sample_rate_hz / n_fft as f64)
                .collect(),
            (0..n_frames)
                .map(|f| (f * self.cfg.hop) as f64 / sample_rate_hz)
                .collect(),
        )
    }
}

/// One-shot convenience wrapper around [`Stft::magnitude`].
pub fn stft_magnitude(x: &[f64], sample_rate_hz: f64, cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(cfg.clone())?.magnitude(x, sample_rate_hz)
}
