use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Magnitude image: frequency rows × time columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_freqs_hz: Vec<f64>,
    pub col_times_s: Vec<f64>,
    /// Set once `db_normalize` has been applied; values then lie in `[0, 1]`.
    pub normalized: bool,
}

impl Spectrogram {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        row_freqs_hz: Vec<f64>,
        col_times_s: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != rows * cols || row_freqs_hz.len() != rows || col_times_s.len() != cols {
            return Err(Error::Shape(format!(
                "spectrogram {rows}×{cols} with {} values, {} row freqs, {} col times",
                values.len(),
                row_freqs_hz.len(),
                col_times_s.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            row_freqs_hz,
            col_times_s,
            normalized: false,
        })
    }

    /// Image with placeholder axes (row index as frequency, column index as time).
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(
            rows,
            cols,
            values,
            (0..rows).map(|r| r as f64).collect(),
            (0..cols).map(|c| c as f64).collect(),
        )
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Half-open frequency intervals `[lo, hi)` in Hz.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandSpec(pub Vec<(f64, f64)>);

impl BandSpec {
    pub fn new(bands: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bands.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Config(format!("empty band [{lo}, {hi})")));
            }
            if i > 0 && bands[i - 1].1 > lo {
                return Err(Error::Config(format!(
                    "bands must be ascending and disjoint: {:?}",
                    bands
                )));
            }
        }
        Ok(Self(bands))
    }

    pub fn contains(&self, f: f64) -> bool {
        self.0.iter().any(|&(lo, hi)| f >= lo && f < hi)
    }
}

impl Default for BandSpec {
    /// Fundamentals and harmonics of 12 and 15 Hz: bins 10–16, 22–24 and 28–30 Hz.
    fn default() -> Self {
        Self(vec![(10.0, 18.0), (22.0, 26.0), (28.0, 32.0)])
    }
}

/// Keeps the rows whose bin frequency lies in any band.
pub fn band_select(spec: &Spectrogram, bands: &BandSpec) -> Result<Spectrogram> {
    let keep: Vec<usize> = (0..spec.rows)
        .filter(|&r| bands.contains(spec.row_freqs_hz[r]))
        .collect();
    if keep.is_empty() {
        return Err(Error::Data(format!(
            "band selection {:?} keeps no rows",
            bands.0
        )));
    }
    let mut values = Vec::with_capacity(keep.len() * spec.cols);
    for &r in &keep {
        values.extend_from_slice(&spec.values[r * spec.cols..(r + 1) * spec.cols]);
    }
    Ok(Spectrogram {
        rows: keep.len(),
        cols: spec.cols,
        values,
        row_freqs_hz: keep.iter().map(|&r| spec.row_freqs_hz[r]).collect(),
        col_times_s: spec.col_times_s.clone(),
        normalized: spec.normalized,
    })
}

/// `20·log10(v + eps)` followed by per-image min-max scaling to `[0, 1]`.
/// A constant image maps to all zeros.
pub fn db_normalize(spec: &Spectrogram, eps: f64) -> Spectrogram {
    let db: Vec<f64> = spec
        .values
        .iter()
        .map(|&v| 20.0 * (v + eps).log10())
        .collect();
    let (lo, hi) = db
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let values = if span > 0.0 {
        db.iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; db.len()]
    };
    Spectrogram {
        values,
        normalized: true,
        ..spec.clone()
    }
}

/// Nearest-neighbour resize: `out[r][c] = in[r·in_rows/out_rows][c·in_cols/out_cols]`.
pub fn resize_nearest(spec: &Spectrogram, out_rows: usize, out_cols: usize) -> Result<Spectrogram> {
    if spec.rows == 0 || spec.cols == 0 || out_rows == 0 || out_cols == 0 {
        return Err(Error::Shape("resize of an empty image".into()));
    }
    let src_row = |r: usize| r * spec.rows / out_rows;
    let src_col = |c: usize| c * spec.cols / out_cols;
    let mut values = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let sr = src_row(r);
        for c in 0..out_cols {
            values.push(spec.get(sr, src_col(c)));
        }
    }
    Ok(Spectrogram {
        rows: out_rows,
        cols: out_cols,
        values,
        row_freqs_hz: (0..out_rows)
            .map(|r| spec.row_freqs_hz[src_row(r)])
            .collect(),
        col_times_s: (0..out_cols)
            .map(|c| spec.col_times_s[src_col(c)])
            .collect(),
        normalized: spec.normalized,
    })
}

pub const SVM_ROWS: usize = 8;
pub const SVM_COLS: usize = 3;

/// Row-major flattening of an 8×3 image into the SVM feature vector.
pub fn flatten_for_svm(spec: &Spectrogram) -> Result<[f64; SVM_ROWS * SVM_COLS]> {
    if spec.shape() != (SVM_ROWS, SVM_COLS) {
        return Err(Error::Shape(format!(
            "SVM features need an 8×3 image, got {}×{}",
            spec.rows, spec.cols
        )));
    }
    let mut out = [0.0; SVM_ROWS * SVM_COLS];
    out.copy_from_slice(&spec.values);
    Ok(out)
}

/// Binary PGM (P5) with `value × 255` rounded to the nearest integer.
pub fn pgm_bytes(spec: &Spectrogram) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", spec.cols, spec.rows).into_bytes();
    out.extend(
        spec.values
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&pgm_bytes(spec))
        .map_err(|e| Error::io(path, e))
}
