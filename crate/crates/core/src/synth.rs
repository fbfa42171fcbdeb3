//! Synthetic SSVEP-like trials: a harmonic series at the stimulus frequency
//! plus white Gaussian noise at a controlled SNR.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{RawTrial, TrialStore, OZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub stimulus_hz: f64,
    pub n_harmonics: usize,
    /// Harmonic `k` has amplitude `k^-amplitude_decay`.
    pub amplitude_decay: f64,
    /// `+inf` disables noise; `-inf` yields noise only (unit variance).
    pub snr_db: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stimulus_hz: 12.0,
            n_harmonics: 2,
            amplitude_decay: 1.0,
            snr_db: 10.0,
            duration_s: 5.0,
            sample_rate_hz: 250.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> Result<usize> {
        let n = self.duration_s * self.sample_rate_hz;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "duration_s × sample_rate_hz must be a positive integer, got {n}"
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_harmonics == 0 {
            return Err(Error::Config("n_harmonics must be ≥ 1".into()));
        }
        if !(self.amplitude_decay >= 0.0) {
            return Err(Error::Config("amplitude_decay must be ≥ 0".into()));
        }
        if !(self.stimulus_hz > 0.0) || !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("frequencies must be positive".into()));
        }
        if self.n_harmonics as f64 * self.stimulus_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::Config(format!(
                "{} harmonics of {} Hz exceed Nyquist at {} Hz",
                self.n_harmonics, self.stimulus_hz, self.sample_rate_hz
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db is NaN".into()));
        }
        self.n_samples().map(|_| ())
    }
}

/// Separate clean and noise components of a generated trial.
#[derive(Debug, Clone)]
pub struct SynthParts {
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SynthParts {
    pub fn combined(&self) -> Vec<f64> {
        self.clean
            .iter()
            .zip(&self.noise)
            .map(|(c, n)| c + n)
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a list of keys.
pub(crate) fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Generates clean and noise parts separately.
///
/// Noise is scaled so that the realized power ratio of the two parts equals
/// the configured SNR exactly.
pub fn generate_parts(cfg: &SynthConfig, subject_id: u16, trial_index: u16) -> Result<SynthParts> {
    cfg.validate()?;
    let n = cfg.n_samples()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        &[
            subject_id as u64,
            trial_index as u64,
            cfg.stimulus_hz.to_bits(),
        ],
    ));
    let phases: Vec<f64> = (0..cfg.n_harmonics)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();

    let clean: Vec<f64> = if cfg.snr_db == f64::NEG_INFINITY {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|i| {
                let t = i as f64 / cfg.sample_rate_hz;
                phases
                    .iter()
                    .enumerate()
                    .map(|(j, phi)| {
                        let k = (j + 1) as f64;
                        k.powf(-cfg.amplitude_decay)
                            * (2.0 * PI * k * cfg.stimulus_hz * t + phi).sin()
                    })
                    .sum()
            })
            .collect()
    };

    let noise = if cfg.snr_db == f64::INFINITY {
        vec![0.0; n]
    } else {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let target_power = if cfg.snr_db == f64::NEG_INFINITY {
            1.0
        } else {
            mean_square(&clean) / 10f64.powf(cfg.snr_db / 10.0)
        };
        let scale = (target_power / mean_square(&z)).sqrt();
        z.into_iter().map(|v| v * scale).collect()
    };
    Ok(SynthParts { clean, noise })
}

/// Single-channel (`Oz`) synthetic trial, deterministic in
/// `(cfg, subject_id, trial_index)`.
pub fn generate_trial(cfg: &SynthConfig, subject_id: u16, trial_index: u16) -> Result<RawTrial> {
    let parts = generate_parts(cfg, subject_id, trial_index)?;
    let samples = parts.combined().into_iter().map(|v| v as f32).collect();
    RawTrial::new(
        subject_id,
        cfg.stimulus_hz as f32,
        trial_index,
        cfg.sample_rate_hz as f32,
        vec![OZ.to_string()],
        vec![samples],
    )
}

/// Builds a store of `subjects × freqs × trials_per_freq` single-channel
/// trials. Subject ids start at 1.
pub fn generate_store(
    base: &SynthConfig,
    n_subjects: u16,
    freqs_hz: &[f64],
    trials_per_freq: u16,
) -> Result<TrialStore> {
    let mut store = TrialStore::new(base.sample_rate_hz as f32, vec![OZ.to_string()]);
    for subject in 1..=n_subjects {
        for &f in freqs_hz {
            let cfg = SynthConfig {
                stimulus_hz: f,
                ..base.clone()
            };
            for trial in 0..trials_per_freq {
                store.push(generate_trial(&cfg, subject, trial)?)?;
            }
        }
    }
    Ok(store)
}
