//! Domain types shared across the pipeline and the `SSVB` trial container.
//!
//! Layout of an `SSVB` v1 file (all little-endian):
//!
//! ```text
//! "SSVB"            4 bytes magic (53 53 56 42)
//! version           u8  (1)
//! sample_rate_hz    f32
//! n_channels        u16
//! channel names     n_channels × (u16 byte length, UTF-8 bytes)
//! n_trials          u32
//! per trial:
//!   subject_id      u16
//!   stimulus_hz     f32
//!   trial_index     u16
//!   n_samples       u32
//!   samples         n_channels × n_samples f32, channel-major
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"SSVB";
pub const STORE_VERSION: u8 = 1;

/// Electrode used by the single-channel pipeline.
pub const OZ: &str = "Oz";

/// Nine occipital/parietal electrodes used by multichannel FBCCA.
pub const OCCIPITAL_9: [&str; 9] = ["Pz", "PO5", "PO3", "POz", "PO4", "PO6", "O1", "Oz", "O2"];

/// One multichannel EEG recording for a single stimulus presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub subject_id: u16,
    pub stimulus_hz: f32,
    pub trial_index: u16,
    pub sample_rate_hz: f32,
    pub channels: Vec<String>,
    /// `[n_channels][n_samples]`.
    pub samples: Vec<Vec<f32>>,
}

impl RawTrial {
    pub fn new(
        subject_id: u16,
        stimulus_hz: f32,
        trial_index: u16,
        sample_rate_hz: f32,
        channels: Vec<String>,
        samples: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let trial = Self {
            subject_id,
            stimulus_hz,
            trial_index,
            sample_rate_hz,
            channels,
            samples,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Data("trial has no channels".into()));
        }
        if self.channels.len() != self.samples.len() {
            return Err(Error::Data(format!(
                "{} channel names but {} sample rows",
                self.channels.len(),
                self.samples.len()
            )));
        }
        for (i, name) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(name) {
                return Err(Error::Data(format!("duplicate channel name {name:?}")));
            }
        }
        let n = self.samples[0].len();
        if n == 0 {
            return Err(Error::Data("trial has no samples".into()));
        }
        if self.samples.iter().any(|row| row.len() != n) {
            return Err(Error::Data("channel rows have unequal lengths".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Data(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn channel(&self, name: &str) -> Option<&[f32]> {
        self.channels
            .iter()
            .position(|c| c == name)
            .map(|i| self.samples[i].as_slice())
    }

    /// Returns a trial with exactly `names`, in that order.
    pub fn select_channels<S: AsRef<str>>(&self, names: &[S]) -> Result<RawTrial> {
        let mut channels = Vec::with_capacity(names.len());
        let mut samples = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let idx = self
                .channels
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownChannel {
                    name: name.to_string(),
                    available: self.channels.clone(),
                })?;
            channels.push(name.to_string());
            samples.push(self.samples[idx].clone());
        }
        RawTrial::new(
            self.subject_id,
            self.stimulus_hz,
            self.trial_index,
            self.sample_rate_hz,
            channels,
            samples,
        )
    }
}

/// Where a window came from. Unique per window across a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowId {
    pub subject_id: u16,
    /// Stimulus frequency in millihertz, so the id stays `Eq + Hash`.
    pub stimulus_mhz: u32,
    pub trial_index: u16,
    pub start_sample: u32,
}

impl WindowId {
    pub fn new(subject_id: u16, stimulus_hz: f32, trial_index: u16, start_sample: usize) -> Self {
        Self {
            subject_id,
            stimulus_mhz: (stimulus_hz as f64 * 1000.0).round() as u32,
            trial_index,
            start_sample: start_sample as u32,
        }
    }

    pub fn stimulus_hz(&self) -> f32 {
        (self.stimulus_mhz as f64 / 1000.0) as f32
    }
}

/// Fixed-length single-channel segment of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSlice {
    pub source: WindowId,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

/// Class label: index into the configured (ascending) frequency list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub class_index: usize,
    pub stimulus_hz: f64,
}

/// Bijection between stimulus frequencies and class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    freqs_hz: Vec<f64>,
}

const FREQ_MATCH_TOL_HZ: f64 = 1e-3;

impl LabelMap {
    /// Sorts `freqs_hz` ascending; rejects empty lists and duplicates.
    pub fn new(freqs_hz: &[f64]) -> Result<Self> {
        if freqs_hz.is_empty() {
            return Err(Error::Config(
                "label map needs at least one frequency".into(),
            ));
        }
        if freqs_hz.iter().any(|f| !f.is_finite()) {
            return Err(Error::Config("label frequencies must be finite".into()));
        }
        let mut freqs = freqs_hz.to_vec();
        freqs.sort_by(f64::total_cmp);
        if freqs
            .windows(2)
            .any(|w| (w[1] - w[0]).abs() < FREQ_MATCH_TOL_HZ)
        {
            return Err(Error::Config(format!(
                "duplicate label frequency in {freqs_hz:?}"
            )));
        }
        Ok(Self { freqs_hz: freqs })
    }

    /// The 12 Hz / 15 Hz pair.
    pub fn binary_default() -> Self {
        Self {
            freqs_hz: vec![12.0, 15.0],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn label_for(&self, stimulus_hz: f64) -> Option<Label> {
        self.freqs_hz
            .iter()
            .position(|f| (f - stimulus_hz).abs() < FREQ_MATCH_TOL_HZ)
            .map(|class_index| Label {
                class_index,
                stimulus_hz: self.freqs_hz[class_index],
            })
    }

    pub fn label_of_class(&self, class_index: usize) -> Option<Label> {
        self.freqs_hz.get(class_index).map(|&stimulus_hz| Label {
            class_index,
            stimulus_hz,
        })
    }
}

/// A collection of trials sharing one sample rate and channel table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStore {
    pub sample_rate_hz: f32,
    pub channels: Vec<String>,
    pub trials: Vec<RawTrial>,
}

impl TrialStore {
    pub fn new(sample_rate_hz: f32, channels: Vec<String>) -> Self {
        Self {
            sample_rate_hz,
            channels,
            trials: Vec::new(),
        }
    }

    pub fn push(&mut self, trial: RawTrial) -> Result<()> {
        self.check_trial(&trial)?;
        self.trials.push(trial);
        Ok(())
    }

    fn check_trial(&self, trial: &RawTrial) -> Result<()> {
        trial.validate()?;
        if trial.sample_rate_hz.to_bits() != self.sample_rate_hz.to_bits() {
            return Err(Error::Data(format!(
                "trial sample rate {} differs from store rate {}",
                trial.sample_rate_hz, self.sample_rate_hz
            )));
        }
        if trial.channels != self.channels {
            return Err(Error::Data(
                "trial channel table differs from the store's".into(),
            ));
        }
        Ok(())
    }

    /// Sorted, de-duplicated subject ids.
    pub fn subjects(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.trials.iter().map(|t| t.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(&STORE_MAGIC);
        w.u8(STORE_VERSION);
        w.f32(self.sample_rate_hz);
        let n_ch = u16::try_from(self.channels.len())
            .map_err(|_| Error::Data("too many channels".into()))?;
        w.u16(n_ch);
        for name in &self.channels {
            w.str(name)?;
        }
        let n_trials =
            u32::try_from(self.trials.len()).map_err(|_| Error::Data("too many trials".into()))?;
        w.u32(n_trials);
        for trial in &self.trials {
            self.check_trial(trial)?;
            w.u16(trial.subject_id);
            w.f32(trial.stimulus_hz);
            w.u16(trial.trial_index);
            let n = u32::try_from(trial.n_samples())
                .map_err(|_| Error::Data("trial too long".into()))?;
            w.u32(n);
            for row in &trial.samples {
                for &v in row {
                    w.f32(v);
                }
            }
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(STORE_MAGIC)?;
        r.version(STORE_VERSION)?;
        let sample_rate_hz = r.f32()?;
        let n_ch = r.u16()? as usize;
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            channels.push(r.str()?);
        }
        let n_trials = r.u32()? as usize;
        let mut store = TrialStore::new(sample_rate_hz, channels);
        for _ in 0..n_trials {
            let offset = r.offset();
            let subject_id = r.u16()?;
            let stimulus_hz = r.f32()?;
            let trial_index = r.u16()?;
            let n = r.u32()? as usize;
            let mut samples = Vec::with_capacity(n_ch);
            for _ in 0..n_ch {
                samples.push(r.f32_vec(n)?);
            }
            let trial = RawTrial {
                subject_id,
                stimulus_hz,
                trial_index,
                sample_rate_hz,
                channels: store.channels.clone(),
                samples,
            };
            store.push(trial).map_err(|e| Error::Malformed {
                offset,
                reason: e.to_string(),
            })?;
        }
        r.finish()?;
        Ok(store)
    }
}

pub fn save_store(store: &TrialStore, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &store.to_bytes()?)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<TrialStore> {
    TrialStore::from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    fn trial(n_ch: usize, n: usize) -> RawTrial {
        let samples = (0..n_ch)
            .map(|c| (0..n).map(|i| (c * 1000 + i) as f32).collect())
            .collect();
        RawTrial::new(1, 12.0, 0, 250.0, names(n_ch), samples).unwrap()
    }

    #[test]
    fn empty_store_is_header_only() {
        let store = TrialStore::new(250.0, vec!["Oz".into()]);
        let bytes = store.to_bytes().unwrap();
        // magic + version + rate + n_ch + ("Oz" with prefix) + n_trials
        assert_eq!(bytes.len(), 4 + 1 + 4 + 2 + (2 + 2) + 4);
        assert_eq!(&bytes[..4], &[0x53, 0x53, 0x56, 0x42]);
        assert_eq!(TrialStore::from_bytes(&bytes).unwrap(), store);
    }

    #[test]
    fn zero_trial_payload_is_32_bytes() {
        let mut store = TrialStore::new(250.0, names(2));
        let t = RawTrial::new(3, 15.0, 2, 250.0, names(2), vec![vec![0.0; 4]; 2]).unwrap();
        store.push(t).unwrap();
        let empty_len = TrialStore::new(250.0, names(2)).to_bytes().unwrap().len();
        let bytes = store.to_bytes().unwrap();
        assert_eq!(bytes.len() - empty_len, 2 + 4 + 2 + 4 + 32);
        assert_eq!(TrialStore::from_bytes(&bytes).unwrap(), store);
    }

    #[test]
    fn distinct_errors_for_corruption() {
        let mut store = TrialStore::new(250.0, names(1));
        store.push(trial(1, 8)).unwrap();
        let bytes = store.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            TrialStore::from_bytes(&bad),
            Err(Error::BadMagic { offset: 0, .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            TrialStore::from_bytes(&bad),
            Err(Error::VersionMismatch {
                offset: 4,
                found: 9,
                ..
            })
        ));

        let cut = &bytes[..bytes.len() - 3];
        match TrialStore::from_bytes(cut) {
            Err(Error::Truncated { offset, needed, .. }) => {
                assert_eq!(needed, 32);
                assert_eq!(offset, bytes.len() - 32);
            }
            other => panic!("expected truncation, got {other:?}"),
        }

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            TrialStore::from_bytes(&long),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn select_channels_reorders_and_copies() {
        let t = trial(4, 5);
        let s = t.select_channels(&["C2", "C0"]).unwrap();
        assert_eq!(s.channels, vec!["C2", "C0"]);
        assert_eq!(s.samples[0], t.samples[2]);
        assert_eq!(s.samples[1], t.samples[0]);

        let all = t.select_channels(&t.channels).unwrap();
        assert_eq!(all, t);
    }

    #[test]
    fn select_unknown_channel_lists_available() {
        let t = trial(2, 5);
        match t.select_channels(&["Oz"]) {
            Err(Error::UnknownChannel { name, available }) => {
                assert_eq!(name, "Oz");
                assert_eq!(available, vec!["C0", "C1"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_map_is_sorted_bijection() {
        let map = LabelMap::new(&[15.0, 12.0]).unwrap();
        assert_eq!(map.label_for(12.0).unwrap().class_index, 0);
        assert_eq!(map.label_for(15.0).unwrap().class_index, 1);
        assert!(map.label_for(13.0).is_none());
        assert_eq!(map.label_of_class(1).unwrap().stimulus_hz, 15.0);
        assert!(LabelMap::new(&[12.0, 12.0]).is_err());
        assert!(LabelMap::new(&[]).is_err());
    }

    #[test]
    fn invalid_trials_rejected() {
        assert!(RawTrial::new(1, 12.0, 0, 250.0, vec![], vec![]).is_err());
        assert!(RawTrial::new(1, 12.0, 0, 250.0, names(1), vec![vec![]]).is_err());
        assert!(RawTrial::new(
            1,
            12.0,
            0,
            250.0,
            vec!["A".into(), "A".into()],
            vec![vec![0.0], vec![0.0]]
        )
        .is_err());
        assert!(
            RawTrial::new(1, 12.0, 0, 250.0, names(2), vec![vec![0.0], vec![0.0, 1.0]]).is_err()
        );
    }
}
