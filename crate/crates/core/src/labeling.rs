//! Engagement labels from the chat that follows each event.
//!
//! Quiet chat is read as engaged viewers: an event whose normalized message
//! frequency sits at or below `alpha - epsilon` is HIGH engagement, above
//! `alpha + epsilon` is LOW, and anything in between is discarded as ambiguous.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHA_GRID: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
pub const EPSILON_GRID: [f64; 4] = [0.0, 0.02, 0.05, 0.08];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub alpha: f64,
    pub epsilon: f64,
}

impl LabelConfig {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { alpha, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < self.alpha + 1.0) {
            return Err(Error::invalid(format!(
                "epsilon {} must satisfy 0 <= epsilon < alpha + 1",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// The default 4 x 4 grid, alpha-major.
    pub fn grid() -> Vec<LabelConfig> {
        ALPHA_GRID
            .iter()
            .flat_map(|&alpha| EPSILON_GRID.iter().map(move |&epsilon| LabelConfig { alpha, epsilon }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Engagement {
    High,
    Low,
    Discarded,
}

impl Engagement {
    /// Binary class (HIGH = 1, LOW = 0); `None` when discarded.
    pub fn class(self) -> Option<u8> {
        match self {
            Engagement::High => Some(1),
            Engagement::Low => Some(0),
            Engagement::Discarded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementLabel {
    pub value: Engagement,
    pub norm_freq: f64,
    pub raw_count: u32,
}

/// Message count in `[t_i, t_{i+1})` per event; the last event also takes
/// messages up to and including `match_end`.
pub fn chat_counts(event_times: &[f64], chat_times: &[f64], match_end: f64) -> Result<Vec<u32>> {
    let Some(&last) = event_times.last() else {
        return Err(Error::NoEvents);
    };
    if match_end < last {
        return Err(Error::invalid(format!(
            "match end {match_end} precedes last event at {last}"
        )));
    }
    let count_below = |t: f64| chat_times.partition_point(|&m| m < t);
    let counts = event_times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let start = count_below(t);
            let end = match event_times.get(i + 1) {
                Some(&next) => count_below(next),
                None => chat_times.partition_point(|&m| m <= match_end),
            };
            u32::try_from(end.saturating_sub(start)).unwrap_or(u32::MAX)
        })
        .collect();
    Ok(counts)
}

/// Min-max normalization within one match; a flat match maps to zeros.
pub fn normalize(counts: &[u32]) -> Vec<f64> {
    let (Some(&min), Some(&max)) = (counts.iter().min(), counts.iter().max()) else {
        return Vec::new();
    };
    if max == min {
        return vec![0.0; counts.len()];
    }
    let range = f64::from(max - min);
    counts.iter().map(|&c| f64::from(c - min) / range).collect()
}

/// Real-valued variant used for noise-free expected counts.
pub fn normalize_rates(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max <= min {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - min) / (max - min)).collect()
}

/// HIGH iff `f <= alpha - epsilon`, LOW iff `f > alpha + epsilon`, otherwise DISCARDED.
pub fn classify(norm_freq: f64, cfg: LabelConfig) -> Engagement {
    if norm_freq <= cfg.alpha - cfg.epsilon {
        Engagement::High
    } else if norm_freq > cfg.alpha + cfg.epsilon {
        Engagement::Low
    } else {
        Engagement::Discarded
    }
}

pub fn binarize(norm_freqs: &[f64], cfg: LabelConfig) -> Vec<Engagement> {
    norm_freqs.iter().map(|&f| classify(f, cfg)).collect()
}

/// Counts, normalizes and labels one match.
pub fn label_match(
    event_times: &[f64],
    chat_times: &[f64],
    match_end: f64,
    cfg: LabelConfig,
) -> Result<Vec<EngagementLabel>> {
    let counts = chat_counts(event_times, chat_times, match_end)?;
    let freqs = normalize(&counts);
    Ok(counts
        .iter()
        .zip(freqs)
        .map(|(&raw_count, norm_freq)| EngagementLabel {
            value: classify(norm_freq, cfg),
            norm_freq,
            raw_count,
        })
        .collect())
}

/// One line of a labels file. Every event is written, discarded ones included,
/// so the file can be re-labeled under any other configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub match_id: String,
    pub streamer_id: String,
    pub event_index: usize,
    pub t: f64,
    pub norm_freq: f64,
    pub raw_count: u32,
    pub label: Engagement,
    pub alpha: f64,
    pub epsilon: f64,
    pub catalog_hash: String,
    pub features: Vec<f64>,
}

impl LabeledRecord {
    pub fn relabel(&mut self, cfg: LabelConfig) {
        self.label = classify(self.norm_freq, cfg);
        self.alpha = cfg.alpha;
        self.epsilon = cfg.epsilon;
    }
}

pub fn write_records<'a, W, I>(mut writer: W, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a LabeledRecord>,
{
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<LabeledRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(alpha: f64, epsilon: f64) -> LabelConfig {
        LabelConfig { alpha, epsilon }
    }

    #[test]
    fn counts_follow_half_open_gaps() {
        assert_eq!(
            chat_counts(&[0.0, 10.0, 20.0], &[1.0, 2.0, 11.0], 30.0).unwrap(),
            vec![2, 1, 0]
        );
        assert_eq!(chat_counts(&[0.0, 10.0, 20.0], &[], 30.0).unwrap(), vec![0, 0, 0]);
        assert_eq!(chat_counts(&[0.0, 10.0], &[10.0], 30.0).unwrap(), vec![0, 1]);
        // The match end itself belongs to the last event.
        assert_eq!(chat_counts(&[0.0, 10.0], &[30.0, 30.5], 30.0).unwrap(), vec![0, 1]);
        assert!(matches!(chat_counts(&[], &[1.0], 3.0), Err(Error::NoEvents)));
        assert!(chat_counts(&[5.0], &[], 4.0).is_err());
    }

    #[test]
    fn min_max_normalization() {
        assert_eq!(normalize(&[0, 2, 5, 0, 10]), vec![0.0, 0.2, 0.5, 0.0, 1.0]);
        assert_eq!(normalize(&[3, 3, 3]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize(&[0, 10]), vec![0.0, 1.0]);
        assert_eq!(normalize(&[2, 4, 6]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn threshold_rule() {
        use Engagement::*;
        assert_eq!(
            binarize(&[0.0, 0.2, 0.5, 1.0], cfg(0.3, 0.05)),
            vec![High, High, Low, Low]
        );
        assert_eq!(classify(0.28, cfg(0.3, 0.05)), Discarded);
        assert_eq!(classify(0.0, cfg(0.0, 0.0)), High);
        assert_eq!(classify(0.01, cfg(0.0, 0.0)), Low);
        // Exactly alpha with a positive band is ambiguous.
        assert_eq!(classify(0.3, cfg(0.3, 0.05)), Discarded);
    }

    /// Exhaustive oracle over a small rational grid: the label is decided by
    /// comparing integers, independent of floating-point thresholds.
    #[test]
    fn boundary_semantics_match_integer_oracle() {
        for a in 0..=10u32 {
            for e in 0..=3u32 {
                for f in 0..=100u32 {
                    // Work in hundredths: alpha = a/10, epsilon = e/100, f = f/100.
                    let (a100, e100) = (10 * a, e);
                    let expected = if f + e100 <= a100 {
                        Engagement::High
                    } else if f > a100 + e100 {
                        Engagement::Low
                    } else {
                        Engagement::Discarded
                    };
                    let got = classify(f64::from(f) / 100.0, cfg(f64::from(a) / 10.0, f64::from(e) / 100.0));
                    // Decimal thresholds are not exact in binary; only compare away from ties.
                    if f + e100 != a100 && f != a100 + e100 {
                        assert_eq!(got, expected, "a={a} e={e} f={f}");
                    }
                }
            }
        }
        // The ties the grid actually relies on at epsilon = 0.
        for a in ALPHA_GRID {
            assert_eq!(classify(a, cfg(a, 0.0)), Engagement::High);
        }
    }

    #[test]
    fn label_match_golden() {
        let labels = label_match(&[0.0, 10.0, 20.0], &[1.0, 2.0, 11.0], 30.0, cfg(0.3, 0.05)).unwrap();
        let freqs: Vec<f64> = labels.iter().map(|l| l.norm_freq).collect();
        assert_eq!(freqs, vec![1.0, 0.5, 0.0]);
        let values: Vec<Engagement> = labels.iter().map(|l| l.value).collect();
        assert_eq!(values, vec![Engagement::Low, Engagement::Low, Engagement::High]);
    }

    #[test]
    fn config_validation() {
        assert!(LabelConfig::new(0.3, 0.05).is_ok());
        assert!(LabelConfig::new(1.5, 0.0).is_err());
        assert!(LabelConfig::new(0.2, -0.1).is_err());
        assert_eq!(LabelConfig::grid().len(), 16);
    }

    fn rank(e: Engagement) -> u8 {
        e.class().expect("not discarded")
    }

    proptest! {
        #[test]
        fn labels_partition_and_are_monotone(
            fa in 0.0..=1.0f64, fb in 0.0..=1.0f64,
            alpha in 0.0..=1.0f64, epsilon in 0.0..0.5f64,
        ) {
            let c = cfg(alpha, epsilon);
            let (la, lb) = (classify(fa, c), classify(fb, c));
            let (lo, hi) = if fa <= fb { (la, lb) } else { (lb, la) };
            if lo != Engagement::Discarded && hi != Engagement::Discarded {
                prop_assert!(rank(lo) >= rank(hi));
            }
            let n = [fa <= alpha - epsilon, fa > alpha + epsilon,
                     fa > alpha - epsilon && fa <= alpha + epsilon]
                .iter().filter(|&&b| b).count();
            prop_assert_eq!(n, 1);
        }

        #[test]
        fn widening_epsilon_only_discards(f in 0.0..=1.0f64, alpha in 0.0..=1.0f64,
                                          e1 in 0.0..0.3f64, de in 0.0..0.3f64) {
            let narrow = classify(f, cfg(alpha, e1));
            let wide = classify(f, cfg(alpha, e1 + de));
            prop_assert!(wide == narrow || wide == Engagement::Discarded);
        }

        #[test]
        fn raising_alpha_never_loses_high(freqs in proptest::collection::vec(0.0..=1.0f64, 1..50),
                                          a1 in 0.0..=1.0f64, da in 0.0..=1.0f64, e in 0.0..0.1f64) {
            let a2 = (a1 + da).min(1.0);
            let count = |a: f64| binarize(&freqs, cfg(a, e)).iter().filter(|&&l| l == Engagement::High).count();
            prop_assert!(count(a2) >= count(a1));
        }

        #[test]
        fn normalized_values_in_unit_interval(counts in proptest::collection::vec(0u32..50, 1..40)) {
            let f = normalize(&counts);
            prop_assert_eq!(f.len(), counts.len());
            prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
