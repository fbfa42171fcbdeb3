//! Offline SpecAugment variant: one single-column time mask and one
//! single-row frequency mask, every combination enumerated, masked cells
//! filled with the image mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::preprocess::Spectrogram;

/// A masked column and/or row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MaskVariant {
    pub time_col: Option<usize>,
    pub freq_row: Option<usize>,
}

impl MaskVariant {
    pub const NONE: MaskVariant = MaskVariant {
        time_col: None,
        freq_row: None,
    };

    pub fn is_identity(&self) -> bool {
        self.time_col.is_none() && self.freq_row.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    #[default]
    None,
    #[serde(alias = "time")]
    TimeOnly,
    #[serde(alias = "freq")]
    FreqOnly,
    Full,
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "time" | "time_only" => Ok(Self::TimeOnly),
            "freq" | "freq_only" => Ok(Self::FreqOnly),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!(
                "unknown augmentation mode {other:?} (none|time|freq|full)"
            ))),
        }
    }
}

/// All mask variants for a `rows × cols` image, identity first, then time
/// index ascending (outer) and frequency index ascending (inner).
pub fn enumerate_variants(rows: usize, cols: usize, mode: AugmentMode) -> Vec<MaskVariant> {
    let times: Vec<Option<usize>> = match mode {
        AugmentMode::TimeOnly | AugmentMode::Full => {
            std::iter::once(None).chain((0..cols).map(Some)).collect()
        }
        _ => vec![None],
    };
    let freqs: Vec<Option<usize>> = match mode {
        AugmentMode::FreqOnly | AugmentMode::Full => {
            std::iter::once(None).chain((0..rows).map(Some)).collect()
        }
        _ => vec![None],
    };
    times
        .iter()
        .flat_map(|&time_col| {
            freqs
                .iter()
                .map(move |&freq_row| MaskVariant { time_col, freq_row })
        })
        .collect()
}

/// Fills the masked column and row with the mean of the unmasked input.
pub fn apply_mask(image: &Spectrogram, v: MaskVariant) -> Result<Spectrogram> {
    if v.time_col.is_some_and(|c| c >= image.cols) || v.freq_row.is_some_and(|r| r >= image.rows) {
        return Err(Error::Shape(format!(
            "mask {v:?} out of bounds for a {}×{} image",
            image.rows, image.cols
        )));
    }
    let mut out = image.clone();
    if v.is_identity() {
        return Ok(out);
    }
    let fill = image.mean();
    if let Some(c) = v.time_col {
        for r in 0..image.rows {
            out.set(r, c, fill);
        }
    }
    if let Some(r) = v.freq_row {
        for c in 0..image.cols {
            out.set(r, c, fill);
        }
    }
    Ok(out)
}

/// Every image expanded into all variants of `mode`, image-major order.
pub fn expand_dataset(images: &[LabeledImage], mode: AugmentMode) -> Result<Vec<LabeledImage>> {
    let expanded: Vec<Vec<LabeledImage>> = images
        .par_iter()
        .map(|img| {
            enumerate_variants(img.image.rows, img.image.cols, mode)
                .into_iter()
                .map(|v| {
                    Ok(LabeledImage {
                        id: img.id,
                        class_index: img.class_index,
                        mask: v,
                        image: apply_mask(&img.image, v)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(expanded.into_iter().flatten().collect())
}
