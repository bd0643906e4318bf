//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! output. A criterion listed in `KNOWN_FAILURES` is expected to fail; the
//! process exits non-zero if any other criterion fails or a known failure
//! starts passing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use engage_core::dataset::{self, balance, kfold_by_match, samples_from_records, LabeledSample};
use engage_core::engagement_line::smooth;
use engage_core::eval::{self, cross_validate, retained_count, EvalConfig, EvalMode, EvalReport, ReportDocument};
use engage_core::features::{default_catalog, FeatureVector};
use engage_core::labeling::{
    chat_counts, label_match, normalize, Engagement, LabelConfig, LabeledRecord, ALPHA_GRID, EPSILON_GRID,
};
use engage_core::model::{self, gradient_check, MlpModel, TrainConfig};
use engage_core::pipeline::{self, Dataset};
use engage_core::rng;
use engage_core::styles::{self, adjusted_rand_index, kmeans, partition_entropy, Style, DEFAULT_RESTARTS};
use engage_core::synth::{self, SynthConfig, SynthOutput};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Criterion 1 contains the fixture (86, 238) -> 0.84 +/- 0.005, while the
/// normalized entropy of those sizes is 0.834833.
const KNOWN_FAILURES: &[u32] = &[1];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Default synthetic corpus written to disk and read back through ingest.
struct Corpus {
    _dir: tempfile::TempDir,
    synth: SynthOutput,
    data: Dataset,
}

fn corpus(cfg: &SynthConfig) -> Corpus {
    let synth = synth::generate(cfg).expect("synth");
    let dir = tempfile::tempdir().expect("tempdir");
    synth::write_to_dir(&synth, dir.path()).expect("write");
    let data = pipeline::load_dir(dir.path()).expect("load");
    Corpus { _dir: dir, synth, data }
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let cases: [(&[usize], f64); 3] = [(&[155, 105, 64], 0.95), (&[86, 238], 0.84), (&[152, 53, 95, 24], 0.87)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (sizes, target) in cases {
        let h = partition_entropy(sizes).expect("entropy");
        let ok = within(h, target, 0.005);
        pass &= ok;
        parts.push(format!(
            "{sizes:?} -> {h:.6} (target {target} +/- 0.005, {})",
            if ok { "ok" } else { "out" }
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    verdict(pass, format!("{}; {:.3} s", parts.join("; "), secs(elapsed)))
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut r = rng::seeded(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = r.random_range(3..=10);
        let h = r.random_range(2..=8);
        let mut m = MlpModel::zeros(d, h);
        let w1 = Normal::new(0.0, (2.0 / d as f64).sqrt()).unwrap();
        let w2 = Normal::new(0.0, (2.0 / h as f64).sqrt()).unwrap();
        m.w1.iter_mut().for_each(|w| *w = w1.sample(&mut r));
        m.w2.iter_mut().for_each(|w| *w = w2.sample(&mut r));
        m.b1.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        m.b2 = r.random_range(-0.5..0.5);
        let batch: Vec<(Vec<f64>, u8)> = (0..8)
            .map(|_| ((0..d).map(|_| r.random::<f64>()).collect(), r.random_range(0..=1)))
            .collect();
        worst = worst.max(gradient_check(&m, &batch).expect("gradient check"));
    }
    let elapsed = t.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.3e} over 20 nets; {:.2} s", secs(elapsed)),
    )
}

fn label_default(c: &Corpus, cfg: LabelConfig) -> Vec<LabeledRecord> {
    pipeline::label_matches(&c.data.matches, &default_catalog(), cfg).expect("label")
}

/// Same features, labels permuted across all retained samples.
fn shuffled(samples: &[LabeledSample], seed: u64) -> Vec<LabeledSample> {
    let mut labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    labels.shuffle(&mut rng::seeded(seed));
    samples
        .iter()
        .zip(labels)
        .map(|(s, label)| LabeledSample { label, ..s.clone() })
        .collect()
}

fn criterion_3(kfold: &EvalReport, pipeline_time: Duration, control: &EvalReport) -> Verdict {
    let pass = kfold.mean >= 0.70 && within(control.mean, 0.5, 0.03) && pipeline_time < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "5-fold mean {:.4} +/- {:.4} (need >= 0.70); shuffled control {:.4} (need 0.50 +/- 0.03); synth->label->5-fold {:.1} s",
            kfold.mean,
            kfold.ci95_half_width,
            control.mean,
            secs(pipeline_time)
        ),
    )
}

fn criterion_4(records: &[LabeledRecord]) -> Verdict {
    let t = Instant::now();
    let cfg = EvalConfig {
        train: TrainConfig {
            epochs: FAST_EPOCHS,
            ..TrainConfig::default()
        },
        ..EvalConfig::default()
    };
    let grid = eval::grid_search(records, &cfg).expect("grid");
    let elapsed = t.elapsed();
    println!("{}", eval::format_grid(&grid));
    let mut monotone = true;
    for a in ALPHA_GRID {
        let counts: Vec<usize> = EPSILON_GRID
            .iter()
            .map(|&e| retained_count(records, LabelConfig { alpha: a, epsilon: e }))
            .collect();
        monotone &= counts.windows(2).all(|w| w[1] <= w[0]);
    }
    let pass = grid.selected.alpha == 0.2 && monotone && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "selected alpha {} eps {} (mean {:.4}); retained counts non-increasing in eps: {monotone}; fast mode ({FAST_EPOCHS} epochs) {:.1} s",
            grid.selected.alpha,
            grid.selected.epsilon,
            grid.selected_report().mean,
            secs(elapsed)
        ),
    )
}

const FAST_EPOCHS: usize = 5;

fn criterion_5(kfold: &EvalReport, loso: &EvalReport) -> Verdict {
    let gap = (loso.mean - kfold.mean).abs();
    verdict(
        gap <= 0.08,
        format!(
            "LOSO mean {:.4} vs 5-fold {:.4}: gap {:.2} points (need <= 8)",
            loso.mean,
            kfold.mean,
            100.0 * gap
        ),
    )
}

fn criterion_6(c: &Corpus) -> Verdict {
    let t = Instant::now();
    let catalog = default_catalog();
    let vectors = pipeline::match_vectors(&c.data.matches, &catalog).expect("vectors");
    let report = styles::discover(vectors, &styles::match_feature_names(&catalog), 2, 10, 0).expect("discover");
    let elapsed = t.elapsed();
    let planted: Vec<usize> = report
        .assignments
        .keys()
        .map(|id| c.synth.truth.style_of(id).expect("planted") as usize)
        .collect();
    let found: Vec<usize> = report.assignments.values().copied().collect();
    let ari = adjusted_rand_index(&planted, &found).expect("ari");
    let mut names_ok = report.k == 3;
    for cluster in &report.clusters {
        let mut votes = [0usize; 3];
        for (id, &cl) in &report.assignments {
            if cl == cluster.cluster {
                votes[c.synth.truth.style_of(id).expect("planted") as usize] += 1;
            }
        }
        let majority = [Style::Noob, Style::Explorer, Style::Pro][(0..3).max_by_key(|&i| votes[i]).unwrap()];
        names_ok &= cluster.style == Some(majority);
    }
    let pass = report.k == 3 && ari >= 0.9 && names_ok && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "k = {}; ARI {ari:.4} (need >= 0.9); names match plant: {names_ok}; {} matches in {:.2} s",
            report.k,
            report.assignments.len(),
            secs(elapsed)
        ),
    )
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exhaustive search over all 2-partitions. Returns the QE of the partition
/// with the least within-cluster squared error (ties to the smaller QE).
fn exhaustive_qe(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = (f64::INFINITY, f64::INFINITY);
    for mask in 1..(1u32 << (n - 1)) {
        let mut sse = 0.0;
        let mut qe = 0.0;
        for side in [true, false] {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| ((mask >> i) & 1 == 1) == side)
                .map(|i| &points[i])
                .collect();
            let mut centroid = vec![0.0; dim];
            for p in &members {
                centroid.iter_mut().zip(p.iter()).for_each(|(c, x)| *c += x);
            }
            centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
            for p in &members {
                let d = sq(p, &centroid);
                sse += d;
                qe += d.sqrt();
            }
        }
        if sse < best.0 - 1e-12 || (sse <= best.0 + 1e-12 && qe < best.1) {
            best = (sse, qe);
        }
    }
    best.1
}

fn criterion_7() -> Verdict {
    let t = Instant::now();
    let mut r = rng::seeded(77);
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = r.random_range(3..=8);
        let dim = r.random_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(0.0..10.0)).collect())
            .collect();
        let got = kmeans(&points, 2, i, DEFAULT_RESTARTS).expect("kmeans").qe;
        let want = exhaustive_qe(&points);
        let diff = (got - want).abs();
        worst = worst.max(diff);
        if diff <= 1e-9 * want.max(1.0) {
            matched += 1;
        }
    }
    let elapsed = t.elapsed();
    verdict(
        matched == 50 && elapsed < Duration::from_secs(30),
        format!(
            "{matched}/50 instances match the exhaustive optimum (max |diff| {worst:.2e}); {:.3} s",
            secs(elapsed)
        ),
    )
}

fn criterion_8() -> Verdict {
    let events = [0.0, 10.0, 20.0];
    let chat = [1.0, 2.0, 11.0];
    let counts = chat_counts(&events, &chat, 30.0).expect("counts");
    let freqs = normalize(&counts);
    let labels: Vec<Engagement> = label_match(&events, &chat, 30.0, LabelConfig::new(0.3, 0.05).unwrap())
        .expect("labels")
        .into_iter()
        .map(|l| l.value)
        .collect();
    let pass = counts == [2, 1, 0]
        && freqs == [1.0, 0.5, 0.0]
        && labels == [Engagement::Low, Engagement::Low, Engagement::High];
    verdict(
        pass,
        format!("counts {counts:?}, normalized {freqs:?}, labels {labels:?}"),
    )
}

fn criterion_9() -> Verdict {
    let s = smooth(&[0.0, 0.0, 1.0, 1.0], 3).expect("smooth");
    let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    let err = s.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(err <= 1e-12, format!("{s:?}, max error {err:.1e}"))
}

fn sample(label: u8, match_id: &str, streamer: &str) -> LabeledSample {
    LabeledSample {
        features: FeatureVector {
            values: vec![f64::from(label)],
            catalog_version: "fixture".into(),
        },
        label,
        match_id: match_id.to_string(),
        streamer_id: streamer.to_string(),
    }
}

fn criterion_10() -> Verdict {
    let mut r = rng::seeded(10);
    let mut balanced_ok = 0;
    let mut majority_ok = 0;
    for i in 0..100 {
        let (h, l) = (r.random_range(1..=300), r.random_range(1..=300));
        let samples: Vec<LabeledSample> = (0..h + l)
            .map(|j| sample(u8::from(j < h), &format!("m{j}"), "s"))
            .collect();
        let all: Vec<usize> = (0..samples.len()).collect();
        let idx = balance(&samples, &all, i).expect("balance");
        let (bh, bl) = dataset::class_counts(&samples, &idx);
        balanced_ok += usize::from(bh == bl);
        let majority = u8::from(h >= l);
        let correct = idx.iter().filter(|&&j| samples[j].label == majority).count();
        majority_ok += usize::from(correct * 2 == idx.len());
    }
    let matches: Vec<LabeledSample> = (0..324)
        .flat_map(|m| {
            let events = 1 + (m * 7) % 5;
            (0..events).map(move |e| sample(u8::from((m + e) % 2 == 0), &format!("m{m:03}"), &format!("s{}", m % 5)))
        })
        .collect();
    let mut folds_ok = 0;
    for seed in 0..100 {
        let splits = kfold_by_match(&matches, 5, seed).expect("kfold");
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        let mut clean = true;
        let mut sizes = Vec::new();
        for (f, split) in splits.iter().enumerate() {
            let ids: BTreeSet<&str> = split.test.iter().map(|&i| matches[i].match_id.as_str()).collect();
            let train_ids: BTreeSet<&str> = split.train.iter().map(|&i| matches[i].match_id.as_str()).collect();
            clean &= ids.is_disjoint(&train_ids);
            for id in &ids {
                clean &= fold_of.insert(id, f).is_none();
            }
            sizes.push(ids.len());
        }
        sizes.sort_unstable();
        clean &= fold_of.len() == 324 && sizes == [64, 65, 65, 65, 65];
        folds_ok += usize::from(clean);
    }
    verdict(
        balanced_ok == 100 && majority_ok == 100 && folds_ok == 100,
        format!("equal counts {balanced_ok}/100; majority vote at 0.5 {majority_ok}/100; clean 65/65/65/65/64 folds {folds_ok}/100"),
    )
}

/// One small end-to-end run; returns the model document, the report document
/// and the engagement-line CSV.
fn pipeline_run(root: &Path) -> (String, String, String) {
    let cfg = SynthConfig {
        n_streamers: 2,
        matches_per_streamer: 10,
        ..SynthConfig::default()
    };
    let out = synth::generate(&cfg).expect("synth");
    synth::write_to_dir(&out, root).expect("write");
    let data = pipeline::load_dir(root).expect("load");
    let catalog = default_catalog();
    let lc = LabelConfig::new(0.2, 0.02).unwrap();
    let records = pipeline::label_matches(&data.matches, &catalog, lc).expect("label");
    let train = TrainConfig {
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let run_config = BTreeMap::from([("epochs".to_string(), "5".to_string())]);
    let model = pipeline::train_model(&records, lc, &train, run_config.clone()).expect("train");
    let model_path = root.join("model.json");
    model::save(&model, &model_path).expect("save");
    let reloaded = model::load(&model_path, &catalog.hash()).expect("load model");
    let eval_cfg = EvalConfig {
        train,
        seed: 3,
        ..EvalConfig::default()
    };
    let report = cross_validate(&samples_from_records(&records, lc), lc, &eval_cfg).expect("eval");
    let report_doc = serde_json::to_string_pretty(&ReportDocument::new(report, run_config)).unwrap();
    let m = &data.matches[0];
    let line = pipeline::engagement_line(
        &reloaded,
        &catalog,
        &m.match_id,
        &m.streamer_id,
        &m.events,
        m.duration_s,
        10,
    )
    .expect("line");
    (std::fs::read_to_string(&model_path).unwrap(), report_doc, line.to_csv())
}

fn criterion_11() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_run(a.path());
    let second = pipeline_run(b.path());
    let same = [first.0 == second.0, first.1 == second.1, first.2 == second.2];
    verdict(
        same.iter().all(|&s| s),
        format!(
            "model document identical: {}; report identical: {}; line CSV identical: {}",
            same[0], same[1], same[2]
        ),
    )
}

fn main() {
    // libtest flags such as `--nocapture` are accepted and ignored; `--list`
    // must report no tests so tooling that enumerates tests keeps working.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let total = Instant::now();
    let mut results: Vec<(u32, Verdict)> = vec![(1, criterion_1()), (2, criterion_2())];

    // Runtime covers generation, ingest, labeling and the 5-fold run.
    let t = Instant::now();
    let c = corpus(&SynthConfig::default());
    let lc = LabelConfig::new(0.2, 0.02).unwrap();
    let records = label_default(&c, lc);
    let samples = samples_from_records(&records, lc);
    let kfold = cross_validate(&samples, lc, &EvalConfig::default()).expect("5-fold");
    let pipeline_time = t.elapsed();
    let control = cross_validate(&shuffled(&samples, 99), lc, &EvalConfig::default()).expect("control");
    results.push((3, criterion_3(&kfold, pipeline_time, &control)));
    results.push((4, criterion_4(&records)));
    let loso = cross_validate(
        &samples,
        lc,
        &EvalConfig {
            mode: EvalMode::Loso,
            ..EvalConfig::default()
        },
    )
    .expect("loso");
    results.push((5, criterion_5(&kfold, &loso)));
    results.push((6, criterion_6(&c)));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));
    results.push((11, criterion_11()));

    let mut unexpected = Vec::new();
    for (n, v) in &results {
        let known = KNOWN_FAILURES.contains(n);
        let tag = match (v.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (unexpected)",
        };
        println!("criterion {n:>2}: {tag}: {}", v.detail);
        if v.pass == known {
            unexpected.push(*n);
        }
    }
    println!("acceptance finished in {:.1} s", secs(total.elapsed()));
    if !unexpected.is_empty() {
        println!("unexpected results for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
