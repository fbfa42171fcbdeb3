use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowId;
use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::preprocess::RawWindow;

/// Slack for floating-point products such as `2040 · (1/3)`.
const ROUNDING_SLACK: f64 = 1e-9;

/// Anything that carries a window id and a class.
pub trait Windowed {
    fn window_id(&self) -> WindowId;
    fn class_index(&self) -> usize;
}

impl Windowed for LabeledImage {
    fn window_id(&self) -> WindowId {
        self.id
    }
    fn class_index(&self) -> usize {
        self.class_index
    }
}

impl Windowed for RawWindow {
    fn window_id(&self) -> WindowId {
        self.id
    }
    fn class_index(&self) -> usize {
        self.class_index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_subject_id: u16,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_subject_id: 1,
            train_fraction: 2.0 / 3.0,
            val_fraction: 1.0 / 3.0,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.val_fraction > 0.0) {
            return Err(Error::Config("split fractions must be positive".into()));
        }
        if self.train_fraction + self.val_fraction > 1.0 + 1e-3 {
            return Err(Error::Config("split fractions sum to more than 1".into()));
        }
        Ok(())
    }

    /// Whether the fractions cover every window up to rounding, in which
    /// case rounding residue goes to train.
    fn covers_all(&self) -> bool {
        self.train_fraction + self.val_fraction >= 1.0 - 1e-2
    }

    /// `(n_train, n_val)` for a group of `n` windows.
    pub fn counts(&self, n: usize) -> (usize, usize) {
        let n_val = (n as f64 * self.val_fraction + ROUNDING_SLACK).floor() as usize;
        let n_train = if self.covers_all() {
            n - n_val
        } else {
            ((n as f64 * self.train_fraction + ROUNDING_SLACK).floor() as usize).min(n - n_val)
        };
        (n_train, n_val)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Test = every window of the test subject; the rest is shuffled with the
/// split seed and partitioned per class (when stratified).
pub fn loso_split<T: Windowed + Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    let subjects: HashSet<u16> = items.iter().map(|x| x.window_id().subject_id).collect();
    if !subjects.contains(&spec.test_subject_id) {
        return Err(Error::Data(format!(
            "test subject {} not present in the data",
            spec.test_subject_id
        )));
    }
    if subjects.len() < 2 {
        return Err(Error::Data(
            "leave-one-subject-out needs at least 2 subjects".into(),
        ));
    }
    let (test, rest): (Vec<&T>, Vec<&T>) = items
        .iter()
        .partition(|x| x.window_id().subject_id == spec.test_subject_id);
    let n_classes = rest.iter().map(|x| x.class_index() + 1).max().unwrap_or(0);
    let groups: Vec<Vec<&T>> = if spec.stratified {
        (0..n_classes)
            .map(|c| {
                rest.iter()
                    .copied()
                    .filter(|x| x.class_index() == c)
                    .collect()
            })
            .collect()
    } else {
        vec![rest]
    };
    if spec.stratified && groups.iter().filter(|g| !g.is_empty()).count() < 2 {
        return Err(Error::Data(
            "training subjects cover fewer than 2 classes".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut group in groups {
        group.shuffle(&mut rng);
        let (n_train, n_val) = spec.counts(group.len());
        val.extend(group[..n_val].iter().map(|&x| x.clone()));
        train.extend(group[n_val..n_val + n_train].iter().map(|&x| x.clone()));
    }
    Ok(Split {
        train,
        val,
        test: test.into_iter().cloned().collect(),
    })
}

/// Fails if any window id appears in more than one part.
pub fn check_no_leakage<T: Windowed>(split: &Split<T>) -> Result<()> {
    let ids = |v: &[T]| v.iter().map(|x| x.window_id()).collect::<HashSet<_>>();
    let (tr, va, te) = (ids(&split.train), ids(&split.val), ids(&split.test));
    if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
        return Err(Error::Data("train/val/test share window ids".into()));
    }
    Ok(())
}

/// Number of items per class index.
pub fn class_counts<T: Windowed>(items: &[T], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for x in items {
        if let Some(c) = counts.get_mut(x.class_index()) {
            *c += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone)]
    struct W(WindowId, usize);

    impl Windowed for W {
        fn window_id(&self) -> WindowId {
            self.0
        }
        fn class_index(&self) -> usize {
            self.1
        }
    }

    fn corpus(subjects: u16, trials: u16, windows: usize) -> Vec<W> {
        let mut out = Vec::new();
        for s in 1..=subjects {
            for (c, f) in [12.0f32, 15.0].into_iter().enumerate() {
                for t in 0..trials {
                    for w in 0..windows {
                        out.push(W(WindowId::new(s, f, t, w * 125), c));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn default_split_sizes() {
        let items = corpus(35, 6, 10);
        let spec = SplitSpec {
            test_subject_id: 7,
            ..Default::default()
        };
        let s = loso_split(&items, &spec).unwrap();
        assert_eq!(s.test.len(), 120);
        assert_eq!(s.train.len(), 2720);
        assert_eq!(s.val.len(), 1360);
        assert_eq!(class_counts(&s.train, 2), vec![1360, 1360]);
        assert_eq!(class_counts(&s.val, 2), vec![680, 680]);
        check_no_leakage(&s).unwrap();
        assert!(s.test.iter().all(|w| w.0.subject_id == 7));
    }

    #[test]
    fn literal_fractions_would_floor_differently() {
        let spec = SplitSpec {
            train_fraction: 0.666,
            val_fraction: 0.333,
            ..Default::default()
        };
        assert_eq!(spec.counts(2040), (1361, 679));
        assert_eq!(SplitSpec::default().counts(2040), (1360, 680));
    }

    #[test]
    fn minimal_two_subjects() {
        let s = loso_split(&corpus(2, 1, 2), &SplitSpec::default()).unwrap();
        assert_eq!(s.test.len(), 4);
        assert!(s.test.iter().all(|w| w.0.subject_id == 1));
    }

    #[test]
    fn errors() {
        let items = corpus(2, 1, 2);
        let bad_subject = SplitSpec {
            test_subject_id: 9,
            ..Default::default()
        };
        assert!(loso_split(&items, &bad_subject).is_err());
        let one = corpus(1, 1, 2);
        assert!(loso_split(&one, &SplitSpec::default()).is_err());
        let single_class: Vec<W> = items.iter().filter(|w| w.1 == 0).cloned().collect();
        assert!(loso_split(&single_class, &SplitSpec::default()).is_err());
    }

    #[test]
    fn seed_changes_partition_not_sizes() {
        let items = corpus(3, 4, 5);
        let a = loso_split(
            &items,
            &SplitSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = loso_split(
            &items,
            &SplitSpec {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.train.len(), b.train.len());
        let ids = |v: &[W]| v.iter().map(|w| w.0).collect::<Vec<_>>();
        assert_ne!(ids(&a.train), ids(&b.train));
    }
}
