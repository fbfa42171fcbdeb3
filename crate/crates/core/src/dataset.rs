//! Labeled image sets and their `SSVI` file format.
//!
//! Images are stored at their pre-resize (band-selected) shape so that
//! augmentation can run on a saved set.
//!
//! ```text
//! "SSVI" magic, u8 version (1)
//! rows u16, cols u16
//! row_freqs_hz  rows × f64
//! col_times_s   cols × f64
//! n_images u32
//! per image:
//!   subject_id u16, stimulus_mhz u32, trial_index u16, start_sample u32,
//!   class_index u8, time_col i16 (-1 = none), freq_row i16 (-1 = none),
//!   normalized u8, values rows × cols f64 (row-major)
//! ```

use std::path::Path;

use crate::augment::MaskVariant;
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::data::WindowId;
use crate::error::{Error, Result};
use crate::preprocess::Spectrogram;

pub const IMAGESET_MAGIC: [u8; 4] = *b"SSVI";
pub const IMAGESET_VERSION: u8 = 1;

/// A spectrogram with its class and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: WindowId,
    pub class_index: usize,
    /// Mask applied to produce this image (`NONE` for originals).
    pub mask: MaskVariant,
    pub image: Spectrogram,
}

fn encode_index(v: Option<usize>) -> Result<i16> {
    match v {
        None => Ok(-1),
        Some(i) => i16::try_from(i).map_err(|_| Error::Data(format!("mask index {i} too large"))),
    }
}

fn decode_index(v: i16, offset: usize) -> Result<Option<usize>> {
    match v {
        -1 => Ok(None),
        i if i >= 0 => Ok(Some(i as usize)),
        i => Err(Error::Malformed {
            offset,
            reason: format!("invalid mask index {i}"),
        }),
    }
}

pub fn imageset_to_bytes(images: &[LabeledImage]) -> Result<Vec<u8>> {
    let (rows, cols, row_freqs, col_times) = match images.first() {
        Some(first) => (
            first.image.rows,
            first.image.cols,
            first.image.row_freqs_hz.clone(),
            first.image.col_times_s.clone(),
        ),
        None => (0, 0, vec![], vec![]),
    };
    let mut w = Writer::new();
    w.bytes(&IMAGESET_MAGIC);
    w.u8(IMAGESET_VERSION);
    let dim =
        |n: usize| u16::try_from(n).map_err(|_| Error::Data(format!("dimension {n} too large")));
    w.u16(dim(rows)?);
    w.u16(dim(cols)?);
    row_freqs.iter().for_each(|&f| w.f64(f));
    col_times.iter().for_each(|&t| w.f64(t));
    w.u32(u32::try_from(images.len()).map_err(|_| Error::Data("too many images".into()))?);
    for img in images {
        if img.image.shape() != (rows, cols)
            || img.image.row_freqs_hz != row_freqs
            || img.image.col_times_s != col_times
        {
            return Err(Error::Shape(
                "all images of a set must share shape and axes".into(),
            ));
        }
        w.u16(img.id.subject_id);
        w.u32(img.id.stimulus_mhz);
        w.u16(img.id.trial_index);
        w.u32(img.id.start_sample);
        w.u8(u8::try_from(img.class_index)
            .map_err(|_| Error::Data("class index too large".into()))?);
        w.i16(encode_index(img.mask.time_col)?);
        w.i16(encode_index(img.mask.freq_row)?);
        w.u8(img.image.normalized as u8);
        img.image.values.iter().for_each(|&v| w.f64(v));
    }
    Ok(w.into_bytes())
}

pub fn imageset_from_bytes(bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    let mut r = Reader::new(bytes);
    r.magic(IMAGESET_MAGIC)?;
    r.version(IMAGESET_VERSION)?;
    let rows = r.u16()? as usize;
    let cols = r.u16()? as usize;
    let row_freqs = r.f64_vec(rows)?;
    let col_times = r.f64_vec(cols)?;
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = WindowId {
            subject_id: r.u16()?,
            stimulus_mhz: r.u32()?,
            trial_index: r.u16()?,
            start_sample: r.u32()?,
        };
        let class_index = r.u8()? as usize;
        let off = r.offset();
        let time_col = decode_index(r.i16()?, off)?;
        let off = r.offset();
        let freq_row = decode_index(r.i16()?, off)?;
        let normalized = r.u8()? != 0;
        let values = r.f64_vec(rows * cols)?;
        let mut image = Spectrogram::new(rows, cols, values, row_freqs.clone(), col_times.clone())?;
        image.normalized = normalized;
        out.push(LabeledImage {
            id,
            class_index,
            mask: MaskVariant { time_col, freq_row },
            image,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn save_imageset(images: &[LabeledImage], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &imageset_to_bytes(images)?)
}

pub fn load_imageset(path: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    imageset_from_bytes(&read_file(path.as_ref())?)
}
