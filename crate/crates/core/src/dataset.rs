//! Labeled samples, match-grouped and streamer-grouped splits, class
//! balancing and min-max feature scaling.
//!
//! Splits and balanced sets are index lists into one sample slice, so the
//! feature data is never copied per fold.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::labeling::{classify, LabelConfig, LabeledRecord};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// 1 = high engagement, 0 = low.
    pub label: u8,
    pub match_id: String,
    pub streamer_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// `fold-<i>` or `loso-<streamer>`.
    pub descriptor: String,
}

/// Samples retained under `cfg`, in record order. Discarded events are skipped.
pub fn samples_from_records(records: &[LabeledRecord], cfg: LabelConfig) -> Vec<LabeledSample> {
    let mut tags: BTreeMap<&str, Arc<str>> = BTreeMap::new();
    records
        .iter()
        .filter_map(|r| {
            let label = classify(r.norm_freq, cfg).class()?;
            let tag = tags
                .entry(&r.catalog_hash)
                .or_insert_with(|| Arc::from(r.catalog_hash.as_str()));
            Some(LabeledSample {
                features: FeatureVector {
                    values: r.features.clone(),
                    catalog_version: Arc::clone(tag),
                },
                label,
                match_id: r.match_id.clone(),
                streamer_id: r.streamer_id.clone(),
            })
        })
        .collect()
}

/// Distinct match ids in sorted order.
fn match_ids(samples: &[LabeledSample]) -> Vec<&str> {
    samples
        .iter()
        .map(|s| s.match_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Shuffles matches with a seeded generator and deals them round-robin into `k` folds.
pub fn kfold_by_match(samples: &[LabeledSample], k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    let mut matches = match_ids(samples);
    if matches.len() < k {
        return Err(Error::TooFewMatches {
            have: matches.len(),
            need: k,
        });
    }
    matches.shuffle(&mut rng::seeded(seed));
    let fold_of: BTreeMap<&str, usize> = matches.iter().enumerate().map(|(i, m)| (*m, i % k)).collect();

    let mut splits: Vec<Split> = (0..k)
        .map(|i| Split {
            train: Vec::new(),
            test: Vec::new(),
            descriptor: format!("fold-{i}"),
        })
        .collect();
    for (idx, s) in samples.iter().enumerate() {
        let fold = fold_of[s.match_id.as_str()];
        for (i, split) in splits.iter_mut().enumerate() {
            if i == fold {
                split.test.push(idx);
            } else {
                split.train.push(idx);
            }
        }
    }
    Ok(splits)
}

/// One split per streamer, holding that streamer out as the test set.
pub fn loso_splits(samples: &[LabeledSample]) -> Result<Vec<Split>> {
    let streamers: BTreeSet<&str> = samples.iter().map(|s| s.streamer_id.as_str()).collect();
    if streamers.len() < 2 {
        return Err(Error::TooFewStreamers(streamers.len()));
    }
    Ok(streamers
        .into_iter()
        .map(|held_out| {
            let (test, train) = (0..samples.len()).partition(|&i| samples[i].streamer_id == held_out);
            Split {
                train,
                test,
                descriptor: format!("loso-{held_out}"),
            }
        })
        .collect())
}

/// Resamples `indices` so both classes have `round((n_high + n_low) / 2)` members.
///
/// The minority class is drawn with replacement, the majority without. A class
/// already at the target is kept as is.
pub fn balance(samples: &[LabeledSample], indices: &[usize], seed: u64) -> Result<Vec<usize>> {
    let (high, low): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| samples[i].label == 1);
    if high.is_empty() || low.is_empty() {
        return Err(Error::DegenerateClasses {
            high: high.len(),
            low: low.len(),
        });
    }
    let target = ((high.len() + low.len()) as f64 / 2.0).round() as usize;
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(2 * target);
    for class in [high, low] {
        if class.len() == target {
            out.extend_from_slice(&class);
        } else if class.len() > target {
            let mut picked = index::sample(&mut rng, class.len(), target).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|j| class[j]));
        } else {
            out.extend((0..target).map(|_| class[rng.random_range(0..class.len())]));
        }
    }
    Ok(out)
}

/// Class counts (high, low) of an index set.
pub fn class_counts(samples: &[LabeledSample], indices: &[usize]) -> (usize, usize) {
    let high = indices.iter().filter(|&&i| samples[i].label == 1).count();
    (high, indices.len() - high)
}

/// Per-feature min-max scaler fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot fit a scaler on no rows"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in iter {
            if row.len() != min.len() {
                return Err(Error::DimensionMismatch {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Identity-preserving scaler for already scaled inputs.
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    /// Scales `x` in place; constant features map to 0 and nothing is clamped.
    pub fn apply_in_place(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.min).zip(&self.max) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }
}

/// Fits a scaler on the samples selected by `indices`.
pub fn fit_scaler(samples: &[LabeledSample], indices: &[usize]) -> Result<Scaler> {
    Scaler::fit(indices.iter().map(|&i| samples[i].features.values.as_slice()))
}
