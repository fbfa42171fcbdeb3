//! Filter bank canonical correlation analysis.
//!
//! Each window is split into sub-bands by zero-phase FFT band-pass filters;
//! per sub-band, the canonical correlation against sine/cosine references at
//! the candidate frequency and its harmonics is computed; squared
//! correlations are combined with weights `n^-a + b` and the candidate with
//! the largest score wins.

mod cca;

pub use cca::{
    cca_max_corr, centered_basis, jacobi_svd, max_corr_from_bases, Basis, CcaResult, RANK_TOL,
};

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabelMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbccaConfig {
    pub n_subbands: usize,
    pub weight_a: f64,
    pub weight_b: f64,
    pub n_harmonics: usize,
    pub candidate_freqs_hz: Vec<f64>,
    /// `(lo, hi)` per sub-band; defaults to `(8n, 88)` Hz for `n = 1..=N`.
    pub subband_edges_hz: Vec<(f64, f64)>,
}

impl Default for FbccaConfig {
    fn default() -> Self {
        let n_subbands = 7;
        Self {
            n_subbands,
            weight_a: 1.25,
            weight_b: 0.25,
            n_harmonics: 5,
            candidate_freqs_hz: vec![12.0, 15.0],
            subband_edges_hz: (1..=n_subbands).map(|n| (8.0 * n as f64, 88.0)).collect(),
        }
    }
}

impl FbccaConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.n_subbands == 0 {
            return Err(Error::Config("FBCCA needs at least one sub-band".into()));
        }
        if self.subband_edges_hz.len() != self.n_subbands {
            return Err(Error::Config(format!(
                "{} sub-bands configured but {} edge pairs given",
                self.n_subbands,
                self.subband_edges_hz.len()
            )));
        }
        if self.n_harmonics == 0 {
            return Err(Error::Config("FBCCA needs at least one harmonic".into()));
        }
        if self.subband_edges_hz.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Config("sub-band edges must ascend in lo".into()));
        }
        if self.candidate_freqs_hz.len() < 2 {
            return Err(Error::Config(
                "FBCCA needs at least two candidate frequencies".into(),
            ));
        }
        let fmax = self
            .candidate_freqs_hz
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if self.n_harmonics as f64 * fmax >= sample_rate_hz / 2.0 {
            return Err(Error::Config(format!(
                "{} harmonics of {fmax} Hz exceed Nyquist at {sample_rate_hz} Hz",
                self.n_harmonics
            )));
        }
        for &(lo, hi) in &self.subband_edges_hz {
            if !(0.0 <= lo && lo < hi && hi <= sample_rate_hz / 2.0) {
                return Err(Error::Config(format!(
                    "sub-band ({lo}, {hi}) outside [0, {}]",
                    sample_rate_hz / 2.0
                )));
            }
        }
        Ok(())
    }

    /// Sub-band weight `n^-a + b` for 1-based `n`.
    pub fn weight(&self, n: usize) -> f64 {
        (n as f64).powf(-self.weight_a) + self.weight_b
    }
}

/// Rows `sin(2πkft), cos(2πkft)` for `k = 1..=n_harmonics`.
pub fn reference_signals(
    f_hz: f64,
    n_harmonics: usize,
    n_samples: usize,
    sample_rate_hz: f64,
) -> Result<Vec<Vec<f64>>> {
    if n_harmonics as f64 * f_hz >= sample_rate_hz / 2.0 {
        return Err(Error::Config(format!(
            "reference harmonic {} × {f_hz} Hz is at or above Nyquist",
            n_harmonics
        )));
    }
    let mut rows = Vec::with_capacity(2 * n_harmonics);
    for k in 1..=n_harmonics {
        let w = 2.0 * PI * k as f64 * f_hz / sample_rate_hz;
        rows.push((0..n_samples).map(|i| (w * i as f64).sin()).collect());
        rows.push((0..n_samples).map(|i| (w * i as f64).cos()).collect());
    }
    Ok(rows)
}

/// Zero-phase brick-wall band-pass: bins with frequency outside `[lo, hi]`
/// are zeroed in the DFT domain.
pub fn subband_filter(x: &[f64], band: (f64, f64), sample_rate_hz: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let (lo, hi) = band;
    if !(0.0 <= lo && lo < hi && hi <= sample_rate_hz / 2.0) {
        return Err(Error::Config(format!("invalid band ({lo}, {hi})")));
    }
    if n == 0 {
        return Err(Error::Data("cannot filter an empty signal".into()));
    }
    let bin_freq = |k: usize| k.min(n - k) as f64 * sample_rate_hz / n as f64;
    let keep: Vec<bool> = (0..n)
        .map(|k| {
            let f = bin_freq(k);
            f >= lo && f <= hi
        })
        .collect();
    if !keep.iter().any(|&k| k) {
        return Err(Error::Data(format!(
            "band ({lo}, {hi}) Hz contains no DFT bin at length {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (c, &k) in buf.iter_mut().zip(&keep) {
        if !k {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

/// FBCCA with references pre-decomposed for one window length.
#[derive(Debug, Clone)]
pub struct Fbcca {
    cfg: FbccaConfig,
    labels: LabelMap,
    sample_rate_hz: f64,
    n_samples: usize,
    /// Orthonormal reference bases, in `labels` order.
    ref_bases: Vec<Basis>,
}

impl Fbcca {
    pub fn new(cfg: FbccaConfig, sample_rate_hz: f64, n_samples: usize) -> Result<Self> {
        cfg.validate(sample_rate_hz)?;
        let labels = LabelMap::new(&cfg.candidate_freqs_hz)?;
        let ref_bases = labels
            .freqs_hz()
            .iter()
            .map(|&f| {
                let refs = reference_signals(f, cfg.n_harmonics, n_samples, sample_rate_hz)?;
                centered_basis(&refs)?
                    .ok_or_else(|| Error::Numeric(format!("degenerate references at {f} Hz")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            labels,
            sample_rate_hz,
            n_samples,
            ref_bases,
        })
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    fn check(&self, x: &[Vec<f64>]) -> Result<()> {
        if x.is_empty() || x.iter().any(|r| r.len() != self.n_samples) {
            return Err(Error::Shape(format!(
                "FBCCA expects channels of {} samples",
                self.n_samples
            )));
        }
        if self.n_samples <= x.len() + 2 * self.cfg.n_harmonics {
            return Err(Error::Data(format!(
                "window of {} samples too short for {} channels and {} reference rows",
                self.n_samples,
                x.len(),
                2 * self.cfg.n_harmonics
            )));
        }
        Ok(())
    }

    /// Per-sub-band orthonormal bases of the filtered input (None when a
    /// sub-band carries no variance).
    fn subband_bases(&self, x: &[Vec<f64>]) -> Result<Vec<Option<Basis>>> {
        self.cfg
            .subband_edges_hz
            .iter()
            .map(|&band| {
                let filtered = x
                    .iter()
                    .map(|row| subband_filter(row, band, self.sample_rate_hz))
                    .collect::<Result<Vec<_>>>()?;
                centered_basis(&filtered)
            })
            .collect()
    }

    /// Scores for every candidate frequency, in ascending frequency order.
    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check(x)?;
        let bases = self.subband_bases(x)?;
        Ok(self
            .ref_bases
            .iter()
            .map(|qy| {
                bases
                    .iter()
                    .enumerate()
                    .map(|(i, qx)| {
                        let rho = qx.as_ref().map_or(0.0, |qx| max_corr_from_bases(qx, qy));
                        self.cfg.weight(i + 1) * rho * rho
                    })
                    .sum()
            })
            .collect())
    }

    /// Argmax over candidates; ties go to the lower frequency.
    pub fn classify(&self, x: &[Vec<f64>]) -> Result<Label> {
        let scores = self.scores(x)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite FBCCA score".into()));
        }
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(self
            .labels
            .label_of_class(best)
            .expect("index within label map"))
    }
}

/// `Σ_n w(n)·ρ_n²` for one candidate frequency.
pub fn fbcca_score(
    x: &[Vec<f64>],
    f_hz: f64,
    cfg: &FbccaConfig,
    sample_rate_hz: f64,
) -> Result<f64> {
    cfg.validate(sample_rate_hz)?;
    let n = x.first().map_or(0, Vec::len);
    let refs = reference_signals(f_hz, cfg.n_harmonics, n, sample_rate_hz)?;
    let mut score = 0.0;
    for (i, &band) in cfg.subband_edges_hz.iter().enumerate() {
        let filtered = x
            .iter()
            .map(|row| subband_filter(row, band, sample_rate_hz))
            .collect::<Result<Vec<_>>>()?;
        let rho = cca_max_corr(&filtered, &refs)?.rho;
        score += cfg.weight(i + 1) * rho * rho;
    }
    Ok(score)
}

pub fn fbcca_classify(x: &[Vec<f64>], cfg: &FbccaConfig, sample_rate_hz: f64) -> Result<Label> {
    let n = x.first().map_or(0, Vec::len);
    Fbcca::new(cfg.clone(), sample_rate_hz, n)?.classify(x)
}
