//! Cross-validation, the alpha x epsilon grid search and report formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{self, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::labeling::{classify, LabelConfig, LabeledRecord, ALPHA_GRID, EPSILON_GRID};
use crate::model::{self, MlpModel, TrainConfig};
use crate::rng;

/// Anything that maps a scaled feature row to a binary label.
pub trait Classifier {
    fn classify(&self, x: &[f64]) -> Result<u8>;
}

impl Classifier for MlpModel {
    fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(self.predict(x)?.label)
    }
}

impl<F: Fn(&[f64]) -> u8> Classifier for F {
    fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(self(x))
    }
}

/// Fraction of rows whose predicted label equals the truth.
pub fn accuracy<C, X>(clf: &C, rows: &[X], labels: &[u8]) -> Result<f64>
where
    C: Classifier + ?Sized,
    X: AsRef<[f64]>,
{
    if rows.is_empty() {
        return Err(Error::invalid("accuracy of an empty test set"));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let mut correct = 0usize;
    for (x, &y) in rows.iter().zip(labels) {
        correct += usize::from(clf.classify(x.as_ref())? == y);
    }
    Ok(correct as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Kfold,
    Loso,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kfold" => Ok(Self::Kfold),
            "loso" => Ok(Self::Loso),
            other => Err(Error::invalid(format!(
                "unknown mode `{other}` (expected kfold or loso)"
            ))),
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Kfold => "kfold",
            Self::Loso => "loso",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub folds: usize,
    pub train: TrainConfig,
    /// Parent seed for splits, balancing and per-split model seeds.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Kfold,
            folds: 5,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub descriptor: String,
    /// Accuracy on the balanced test set.
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub label_config: LabelConfig,
    pub config: EvalConfig,
    pub retained: usize,
    pub splits: Vec<SplitResult>,
    pub mean: f64,
    pub ci95_half_width: f64,
    pub best: f64,
}

/// `t_{0.975, n-1} * s / sqrt(n)` with the sample standard deviation `s`.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * var.sqrt() / (n as f64).sqrt()
}

pub fn splits_for(samples: &[LabeledSample], cfg: &EvalConfig) -> Result<Vec<Split>> {
    match cfg.mode {
        EvalMode::Kfold => dataset::kfold_by_match(samples, cfg.folds, rng::derive_seed(cfg.seed, "folds", 0)),
        EvalMode::Loso => dataset::loso_splits(samples),
    }
}

fn scaled_rows(samples: &[LabeledSample], idx: &[usize], scaler: &dataset::Scaler) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let mut rows = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        rows.push(scaler.apply(&samples[i].features.values)?);
        labels.push(samples[i].label);
    }
    Ok((rows, labels))
}

/// Runs every split with a caller-supplied learner.
///
/// Per split the train and test sets are balanced independently, a scaler is
/// fitted on the balanced training rows, and the learner sees scaled rows.
pub fn cross_validate_with<C, F>(
    samples: &[LabeledSample],
    splits: &[Split],
    seed: u64,
    fit: F,
) -> Result<Vec<SplitResult>>
where
    C: Classifier,
    F: Fn(usize, &[Vec<f64>], &[u8], &dataset::Scaler) -> Result<C> + Sync,
{
    // Splits run concurrently; `collect` keeps split order.
    splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            let split_no = i as u64;
            let train_idx = dataset::balance(samples, &split.train, rng::derive_seed(seed, "balance-train", split_no))?;
            let test_idx = dataset::balance(samples, &split.test, rng::derive_seed(seed, "balance-test", split_no))?;
            let scaler = dataset::fit_scaler(samples, &train_idx)?;
            let (train_rows, train_labels) = scaled_rows(samples, &train_idx, &scaler)?;
            let clf = fit(i, &train_rows, &train_labels, &scaler)?;
            let (test_rows, test_labels) = scaled_rows(samples, &test_idx, &scaler)?;
            let acc = accuracy(&clf, &test_rows, &test_labels)?;
            log::info!(
                "{}: accuracy {:.4} ({} train, {} test)",
                split.descriptor,
                acc,
                train_idx.len(),
                test_idx.len()
            );
            Ok(SplitResult {
                descriptor: split.descriptor.clone(),
                accuracy: acc,
                train_size: train_idx.len(),
                test_size: test_idx.len(),
            })
        })
        .collect()
}

pub fn report_from(
    splits: Vec<SplitResult>,
    label_config: LabelConfig,
    retained: usize,
    cfg: &EvalConfig,
) -> EvalReport {
    let accs: Vec<f64> = splits.iter().map(|s| s.accuracy).collect();
    EvalReport {
        mode: cfg.mode,
        label_config,
        config: *cfg,
        retained,
        mean: accs.iter().sum::<f64>() / accs.len().max(1) as f64,
        ci95_half_width: ci95_half_width(&accs),
        best: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        splits,
    }
}

/// Trains and scores one network per split.
pub fn cross_validate(samples: &[LabeledSample], label_config: LabelConfig, cfg: &EvalConfig) -> Result<EvalReport> {
    let splits = splits_for(samples, cfg)?;
    let results = cross_validate_with(samples, &splits, cfg.seed, |i, rows, labels, _| {
        let train_cfg = TrainConfig {
            seed: rng::derive_seed(cfg.seed, "model", i as u64),
            ..cfg.train
        };
        Ok(model::train(rows, labels, &train_cfg)?.model)
    })?;
    Ok(report_from(results, label_config, samples.len(), cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub label_config: LabelConfig,
    pub retained: usize,
    pub high: usize,
    pub low: usize,
    /// `None` when the cell is infeasible.
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub infeasible_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub mode: EvalMode,
    /// Alpha-major order over the 4 x 4 grid.
    pub cells: Vec<GridCell>,
    pub selected: LabelConfig,
}

impl GridReport {
    pub fn cell(&self, cfg: LabelConfig) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.label_config == cfg)
    }

    pub fn selected_report(&self) -> &EvalReport {
        self.cell(self.selected)
            .and_then(|c| c.report.as_ref())
            .expect("the selected cell is feasible")
    }
}

fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateClasses { .. } | Error::TooFewMatches { .. } | Error::TooFewStreamers(_)
    )
}

/// Picks the feasible cell with the highest mean accuracy. Ties go to more
/// retained samples, then smaller epsilon, then smaller alpha.
pub fn select_cell(cells: &[GridCell]) -> Result<LabelConfig> {
    cells
        .iter()
        .filter_map(|c| c.report.as_ref().map(|r| (c, r.mean)))
        .max_by(|(a, ma), (b, mb)| {
            ma.total_cmp(mb)
                .then(a.retained.cmp(&b.retained))
                .then(b.label_config.epsilon.total_cmp(&a.label_config.epsilon))
                .then(b.label_config.alpha.total_cmp(&a.label_config.alpha))
        })
        .map(|(c, _)| c.label_config)
        .ok_or(Error::AllCellsInfeasible)
}

/// Evaluates every alpha x epsilon cell with a caller-supplied evaluator.
///
/// Cells run concurrently and are merged in grid order.
pub fn grid_search_with<F>(records: &[LabeledRecord], mode: EvalMode, eval: F) -> Result<GridReport>
where
    F: Fn(&[LabeledSample], LabelConfig) -> Result<EvalReport> + Sync,
{
    let outcomes: Vec<Result<GridCell>> = LabelConfig::grid()
        .into_par_iter()
        .map(|cfg| {
            let samples = dataset::samples_from_records(records, cfg);
            let high = samples.iter().filter(|s| s.label == 1).count();
            let low = samples.len() - high;
            let (report, reason) = match eval(&samples, cfg) {
                Ok(r) => (Some(r), None),
                Err(e) if is_infeasible(&e) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            match &report {
                Some(r) => log::info!("alpha {} eps {}: mean {:.4}", cfg.alpha, cfg.epsilon, r.mean),
                None => log::info!("alpha {} eps {}: infeasible", cfg.alpha, cfg.epsilon),
            }
            Ok(GridCell {
                label_config: cfg,
                retained: samples.len(),
                high,
                low,
                report,
                infeasible_reason: reason,
            })
        })
        .collect();
    let cells = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let selected = select_cell(&cells)?;
    Ok(GridReport { mode, cells, selected })
}

pub fn grid_search(records: &[LabeledRecord], cfg: &EvalConfig) -> Result<GridReport> {
    grid_search_with(records, cfg.mode, |samples, lc| cross_validate(samples, lc, cfg))
}

/// Retained-sample count for a cell without training anything.
pub fn retained_count(records: &[LabeledRecord], cfg: LabelConfig) -> usize {
    records
        .iter()
        .filter(|r| classify(r.norm_freq, cfg).class().is_some())
        .count()
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

/// Aligned table: epsilon rows, alpha columns, `mean ± ci` per cell.
pub fn format_grid(report: &GridReport) -> String {
    const W: usize = 18;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Mean balanced accuracy and 95% CI ({} mode); * marks the selected cell",
        report.mode
    );
    let _ = write!(out, "{:<8}", "eps\\alpha");
    for a in ALPHA_GRID {
        let _ = write!(out, "{:>W$}", format!("{a:.1}"));
    }
    out.push('\n');
    let mut counts = String::from("Retained samples\n");
    let _ = write!(counts, "{:<8}", "eps\\alpha");
    for a in ALPHA_GRID {
        let _ = write!(counts, "{:>W$}", format!("{a:.1}"));
    }
    counts.push('\n');
    for e in EPSILON_GRID {
        let _ = write!(out, "{:<8}", format!("{e:.2}"));
        let _ = write!(counts, "{:<8}", format!("{e:.2}"));
        for a in ALPHA_GRID {
            let cfg = LabelConfig { alpha: a, epsilon: e };
            let cell = report.cell(cfg);
            let text = match cell.and_then(|c| c.report.as_ref()) {
                Some(r) => {
                    let mark = if cfg == report.selected { "*" } else { "" };
                    format!("{mark}{} ± {}", pct(r.mean), pct(r.ci95_half_width))
                }
                None => "infeasible".to_string(),
            };
            let _ = write!(out, "{text:>W$}");
            let _ = write!(counts, "{:>W$}", cell.map_or(0, |c| c.retained));
        }
        out.push('\n');
        counts.push('\n');
    }
    let _ = writeln!(
        out,
        "selected: alpha={} epsilon={}",
        report.selected.alpha, report.selected.epsilon
    );
    out.push('\n');
    out.push_str(&counts);
    out
}

/// Per-split listing for a single evaluation.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} evaluation, alpha={} epsilon={}, {} retained samples",
        report.mode, report.label_config.alpha, report.label_config.epsilon, report.retained
    );
    for s in &report.splits {
        let _ = writeln!(
            out,
            "  {:<24} {:>7}  (train {}, test {})",
            s.descriptor,
            pct(s.accuracy),
            s.train_size,
            s.test_size
        );
    }
    let _ = writeln!(
        out,
        "mean {} ± {} (95% CI), best {}",
        pct(report.mean),
        pct(report.ci95_half_width),
        pct(report.best)
    );
    out
}

/// Report documents carry the tool version and the caller's effective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument<T> {
    pub tool_version: String,
    pub run_config: BTreeMap<String, String>,
    pub report: T,
}

impl<T> ReportDocument<T> {
    pub fn new(report: T, run_config: BTreeMap<String, String>) -> Self {
        Self {
            tool_version: crate::TOOL_VERSION.to_string(),
            run_config,
            report,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use std::sync::Arc;

    fn samples(n_matches: usize, per_match: usize) -> Vec<LabeledSample> {
        let tag: Arc<str> = Arc::from("t");
        (0..n_matches)
            .flat_map(|m| {
                let tag = Arc::clone(&tag);
                (0..per_match).map(move |k| LabeledSample {
                    features: FeatureVector {
                        values: vec![(k % 3) as f64, m as f64],
                        catalog_version: Arc::clone(&tag),
                    },
                    label: u8::from(k % 4 == 0),
                    match_id: format!("m{m:03}"),
                    streamer_id: format!("s{}", m % 3),
                })
            })
            .collect()
    }

    #[test]
    fn accuracy_fractions() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let one = |_: &[f64]| 1u8;
        assert_eq!(accuracy(&one, &rows, &[1, 1, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&one, &rows, &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&one, &rows, &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(accuracy(&one, &Vec::<Vec<f64>>::new(), &[]).is_err());
    }

    #[test]
    fn constant_classifier_scores_half_on_balanced_splits() {
        let s = samples(20, 12);
        let cfg = EvalConfig::default();
        let splits = splits_for(&s, &cfg).unwrap();
        let results = cross_validate_with(&s, &splits, 3, |_, _, _, _| Ok(|_: &[f64]| 1u8)).unwrap();
        assert_eq!(results.len(), 5);
        assert!(results.iter().all(|r| r.accuracy == 0.5));
    }

    #[test]
    fn ci_of_identical_values_is_zero() {
        assert_eq!(ci95_half_width(&[0.8; 5]), 0.0);
        let r = report_from(
            (0..5)
                .map(|i| SplitResult {
                    descriptor: format!("fold-{i}"),
                    accuracy: 0.8,
                    train_size: 1,
                    test_size: 1,
                })
                .collect(),
            LabelConfig {
                alpha: 0.2,
                epsilon: 0.0,
            },
            10,
            &EvalConfig::default(),
        );
        assert!((r.mean - 0.8).abs() < 1e-15);
        assert_eq!(r.ci95_half_width, 0.0);
    }

    #[test]
    fn ci_uses_student_t() {
        let v = [0.7, 0.8, 0.75, 0.72, 0.78];
        let mean = v.iter().sum::<f64>() / 5.0;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let expected = 2.776_445_105_197_8 * sd / 5f64.sqrt();
        assert!((ci95_half_width(&v) - expected).abs() < 1e-9);
    }

    #[test]
    fn loso_holds_out_each_streamer() {
        let s = samples(12, 8);
        let cfg = EvalConfig {
            mode: EvalMode::Loso,
            ..EvalConfig::default()
        };
        let splits = splits_for(&s, &cfg).unwrap();
        assert_eq!(splits.len(), 3);
        for sp in &splits {
            let held = sp.descriptor.trim_start_matches("loso-");
            assert!(sp.train.iter().all(|&i| s[i].streamer_id != held));
            assert!(sp.test.iter().all(|&i| s[i].streamer_id == held));
        }
    }

    fn cell(alpha: f64, epsilon: f64, retained: usize, mean: Option<f64>) -> GridCell {
        let lc = LabelConfig { alpha, epsilon };
        GridCell {
            label_config: lc,
            retained,
            high: 1,
            low: 1,
            report: mean.map(|m| EvalReport {
                mode: EvalMode::Kfold,
                label_config: lc,
                config: EvalConfig::default(),
                retained,
                splits: vec![],
                mean: m,
                ci95_half_width: 0.0,
                best: m,
            }),
            infeasible_reason: None,
        }
    }

    #[test]
    fn selection_tie_breaks() {
        let cells = vec![
            cell(0.1, 0.05, 100, Some(0.7)),
            cell(0.2, 0.02, 120, Some(0.7)),
            cell(0.3, 0.0, 120, Some(0.7)),
            cell(0.0, 0.02, 500, None),
        ];
        assert_eq!(
            select_cell(&cells).unwrap(),
            LabelConfig {
                alpha: 0.3,
                epsilon: 0.0
            }
        );
        let cells = vec![cell(0.2, 0.0, 50, Some(0.7)), cell(0.1, 0.0, 50, Some(0.7))];
        assert_eq!(
            select_cell(&cells).unwrap(),
            LabelConfig {
                alpha: 0.1,
                epsilon: 0.0
            }
        );
        assert!(matches!(
            select_cell(&[cell(0.0, 0.02, 1, None)]),
            Err(Error::AllCellsInfeasible)
        ));
    }

    #[test]
    fn grid_marks_infeasible_cells_and_formats() {
        let records: Vec<LabeledRecord> = (0..40)
            .map(|i| LabeledRecord {
                match_id: format!("m{}", i % 10),
                streamer_id: "s".into(),
                event_index: i,
                t: i as f64,
                norm_freq: (i % 5) as f64 / 4.0,
                raw_count: 0,
                label: crate::labeling::Engagement::Discarded,
                alpha: 0.0,
                epsilon: 0.0,
                catalog_hash: "h".into(),
                features: vec![i as f64],
            })
            .collect();
        let report = grid_search_with(&records, EvalMode::Kfold, |samples, lc| {
            let (h, l) = dataset::class_counts(samples, &(0..samples.len()).collect::<Vec<_>>());
            if h == 0 || l == 0 {
                return Err(Error::DegenerateClasses { high: h, low: l });
            }
            Ok(cell(lc.alpha, lc.epsilon, samples.len(), Some(lc.alpha))
                .report
                .unwrap())
        })
        .unwrap();
        assert_eq!(report.cells.len(), 16);
        let infeasible = report
            .cell(LabelConfig {
                alpha: 0.0,
                epsilon: 0.05,
            })
            .unwrap();
        assert!(infeasible.report.is_none());
        assert_eq!(
            report.selected,
            LabelConfig {
                alpha: 0.3,
                epsilon: 0.0
            }
        );
        let table = format_grid(&report);
        assert!(table.contains("infeasible") && table.contains("*30.0%"));
        for a in ALPHA_GRID {
            let counts: Vec<usize> = EPSILON_GRID
                .iter()
                .map(|&e| retained_count(&records, LabelConfig { alpha: a, epsilon: e }))
                .collect();
            assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
