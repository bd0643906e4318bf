use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use engage_core::dataset::samples_from_records;
use engage_core::eval::{self, EvalConfig, EvalMode, ReportDocument};
use engage_core::features::{default_catalog, FeatureCatalog};
use engage_core::ingest::{parse_telemetry, MatchManifest};
use engage_core::labeling::{read_records, write_records, LabelConfig, LabeledRecord};
use engage_core::model::{self, TrainConfig};
use engage_core::synth::{self, SynthConfig};
use engage_core::{pipeline, styles, Error, TOOL_VERSION};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Cli, CliError, Command, TrainFlags, UsageError};

type Outcome = Result<(), CliError>;

pub fn run(cli: &Cli) -> Outcome {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::Synth(a) => synth(file, a),
        Command::Label(a) => label(file, a),
        Command::Train(a) => train(file, a),
        Command::Eval(a) => evaluate(file, a),
        Command::Grid(a) => grid(file, a),
        Command::Cluster(a) => cluster(file, a),
        Command::Line(a) => line(file, a),
    }
}

/// `<path>.meta.json`, written next to artifacts whose format has no room for metadata.
fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    tool_version: &'static str,
    artifact: String,
    run_config: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<T>,
}

fn write_sidecar<T: Serialize>(artifact: &Path, run_config: &BTreeMap<String, String>, details: Option<T>) -> Outcome {
    let doc = Sidecar {
        tool_version: TOOL_VERSION,
        artifact: artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        run_config,
        details,
    };
    fs::write(
        sidecar_path(artifact),
        serde_json::to_string_pretty(&doc).map_err(Error::from)? + "\n",
    )?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    fs::write(path, serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")?;
    Ok(())
}

fn load_catalog(path: Option<&Path>) -> Result<FeatureCatalog, CliError> {
    match path {
        None => Ok(default_catalog()),
        Some(p) => {
            let catalog: FeatureCatalog = serde_json::from_str(&fs::read_to_string(p)?).map_err(Error::from)?;
            catalog.validate()?;
            Ok(catalog)
        }
    }
}

fn load_records(path: &Path) -> Result<Vec<LabeledRecord>, CliError> {
    let records = read_records(BufReader::new(fs::File::open(path)?))?;
    if records.is_empty() {
        return Err(Error::NoEvents.into());
    }
    Ok(records)
}

/// Labeling stored in a labels file, taken from its first record.
fn records_label_config(records: &[LabeledRecord]) -> Result<LabelConfig, CliError> {
    let first = &records[0];
    Ok(LabelConfig::new(first.alpha, first.epsilon)?)
}

const TRAIN_DEFAULTS: [(&str, &str); 6] = [
    ("seed", "0"),
    ("epochs", "100"),
    ("learning_rate", "0.00001"),
    ("batch_size", "32"),
    ("dropout", "0.2"),
    ("hidden_units", "128"),
];

fn train_flags(f: &TrainFlags) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("seed", f.seed.clone()),
        ("epochs", f.epochs.clone()),
        ("learning_rate", f.learning_rate.clone()),
        ("batch_size", f.batch_size.clone()),
        ("dropout", f.dropout.clone()),
        ("hidden_units", f.hidden_units.clone()),
    ]
}

fn train_config(run: &RunConfig) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        learning_rate: run.get("learning_rate")?,
        epochs: run.get("epochs")?,
        batch_size: run.get("batch_size")?,
        dropout_rate: run.get("dropout")?,
        hidden_units: run.get("hidden_units")?,
        seed: run.get("seed")?,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn synth(file: Option<&Path>, a: &crate::SynthArgs) -> Outcome {
    let d = SynthConfig::default();
    let (streamers, matches, gain, rate) = (
        d.n_streamers.to_string(),
        d.matches_per_streamer.to_string(),
        d.inverse_gain.to_string(),
        d.base_chat_rate.to_string(),
    );
    let run = RunConfig::from_process(
        &[
            ("seed", "7"),
            ("streamers", &streamers),
            ("matches", &matches),
            ("style_mix", "1/3,1/3,1/3"),
            ("inverse_gain", &gain),
            ("base_chat_rate", &rate),
        ],
        file,
        &[
            ("seed", a.seed.clone()),
            ("streamers", a.streamers.clone()),
            ("matches", a.matches.clone()),
            ("style_mix", a.style_mix.clone()),
            ("inverse_gain", a.inverse_gain.clone()),
            ("base_chat_rate", a.base_chat_rate.clone()),
        ],
    )?;
    let mix = run.reals("style_mix")?;
    let style_mix: [f64; 3] = mix
        .try_into()
        .map_err(|_| UsageError("style_mix needs exactly three values".into()))?;
    let cfg = SynthConfig {
        seed: run.get("seed")?,
        n_streamers: run.get("streamers")?,
        matches_per_streamer: run.get("matches")?,
        style_mix,
        inverse_gain: run.get("inverse_gain")?,
        base_chat_rate: run.get("base_chat_rate")?,
        ..d
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let out = synth::generate(&cfg)?;
    synth::write_to_dir(&out, &a.out)?;
    write_sidecar::<()>(&a.out.join(synth::GROUND_TRUTH_FILE), &run.to_map(), None)?;
    info!(
        "wrote {} matches in {} videos to {}",
        out.truth.matches.len(),
        out.videos.len(),
        a.out.display()
    );
    Ok(())
}

fn label(file: Option<&Path>, a: &crate::LabelArgs) -> Outcome {
    let run = RunConfig::from_process(
        &[("alpha", "0.2"), ("epsilon", "0.02")],
        file,
        &[("alpha", a.alpha.clone()), ("epsilon", a.epsilon.clone())],
    )?;
    let cfg = LabelConfig::new(run.get("alpha")?, run.get("epsilon")?).map_err(|e| UsageError(e.to_string()))?;
    let catalog = load_catalog(a.catalog.as_deref())?;
    let data = pipeline::load_dir(&a.data)?;
    let records = pipeline::label_matches(&data.matches, &catalog, cfg)?;
    let mut w = BufWriter::new(fs::File::create(&a.out)?);
    write_records(&mut w, &records)?;
    w.flush()?;
    let mut details = pipeline::label_summary(&records);
    details.insert("matches".into(), data.matches.len());
    details.insert("dropped_chat".into(), data.dropped_chat);
    details.insert("skipped_events".into(), data.skipped_events);
    write_sidecar(&a.out, &run.to_map(), Some((catalog.hash(), details)))?;
    info!("labeled {} events from {} matches", records.len(), data.matches.len());
    Ok(())
}

fn train(file: Option<&Path>, a: &crate::TrainArgs) -> Outcome {
    let run = RunConfig::from_process(&TRAIN_DEFAULTS, file, &train_flags(&a.train))?;
    let cfg = train_config(&run)?;
    let records = load_records(&a.labels)?;
    let lc = records_label_config(&records)?;
    let model = pipeline::train_model(&records, lc, &cfg, run.to_map())?;
    model::save(&model, &a.out)?;
    info!(
        "final training loss {:.6}",
        model.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn eval_config(run: &RunConfig) -> Result<EvalConfig, CliError> {
    let mode: EvalMode = run.get("mode")?;
    Ok(EvalConfig {
        mode,
        folds: run.get("folds")?,
        train: train_config(run)?,
        seed: run.get("seed")?,
    })
}

fn eval_defaults(extra: &[(&'static str, &'static str)]) -> Vec<(&'static str, &'static str)> {
    let mut v = TRAIN_DEFAULTS.to_vec();
    v.extend([("mode", "kfold"), ("folds", "5")]);
    v.extend_from_slice(extra);
    v
}

fn evaluate(file: Option<&Path>, a: &crate::EvalArgs) -> Outcome {
    let mut flags = train_flags(&a.train);
    flags.extend([("mode", a.mode.clone()), ("folds", a.folds.clone())]);
    let run = RunConfig::from_process(&eval_defaults(&[]), file, &flags)?;
    let cfg = eval_config(&run)?;
    let records = load_records(&a.labels)?;
    let lc = records_label_config(&records)?;
    let samples = samples_from_records(&records, lc);
    let report = eval::cross_validate(&samples, lc, &cfg)?;
    print!("{}", eval::format_report(&report));
    write_json(&a.out, &ReportDocument::new(report, run.to_map()))
}

fn grid(file: Option<&Path>, a: &crate::GridArgs) -> Outcome {
    let mut flags = train_flags(&a.train);
    flags.extend([
        ("mode", a.mode.clone()),
        ("folds", a.folds.clone()),
        ("fast", a.fast.clone()),
        ("fast_epochs", a.fast_epochs.clone()),
    ]);
    let run = RunConfig::from_process(&eval_defaults(&[("fast", "false"), ("fast_epochs", "5")]), file, &flags)?;
    let mut cfg = eval_config(&run)?;
    if run.flag("fast")? {
        cfg.train.epochs = run.get("fast_epochs")?;
        cfg.train.validate().map_err(|e| UsageError(e.to_string()))?;
    }
    let records = load_records(&a.labels)?;
    let report = eval::grid_search(&records, &cfg)?;
    print!("{}", eval::format_grid(&report));
    write_json(&a.out, &ReportDocument::new(report, run.to_map()))
}

fn cluster(file: Option<&Path>, a: &crate::ClusterArgs) -> Outcome {
    let run = RunConfig::from_process(
        &[("kmin", "2"), ("kmax", "10"), ("seed", "0")],
        file,
        &[
            ("kmin", a.kmin.clone()),
            ("kmax", a.kmax.clone()),
            ("seed", a.seed.clone()),
        ],
    )?;
    let (kmin, kmax, seed): (usize, usize, u64) = (run.get("kmin")?, run.get("kmax")?, run.get("seed")?);
    if kmin < 2 || kmax < kmin {
        return Err(UsageError(format!("need 2 <= kmin <= kmax (got {kmin}..{kmax})")).into());
    }
    let catalog = load_catalog(a.catalog.as_deref())?;
    let data = pipeline::load_dir(&a.data)?;
    let vectors = pipeline::match_vectors(&data.matches, &catalog)?;
    let report = styles::discover(vectors, &styles::match_feature_names(&catalog), kmin, kmax, seed)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!("k = {} over {} matches", report.k, report.assignments.len());
    for c in &report.clusters {
        let name = c.style.map_or_else(|| "-".to_string(), |s| s.to_string());
        println!(
            "  cluster {}: {:<8} {} matches, {} events",
            c.cluster, name, c.matches, c.events
        );
    }
    if let Some(p) = &a.means_csv {
        fs::write(p, report.means_csv())?;
        write_sidecar::<()>(p, &run.to_map(), None)?;
    }
    write_json(&a.out, &ReportDocument::new(report, run.to_map()))
}

fn line(file: Option<&Path>, a: &crate::LineArgs) -> Outcome {
    let run = RunConfig::from_process(&[("window", "10")], file, &[("window", a.window.clone())])?;
    let window: usize = run.get("window")?;
    if window == 0 {
        return Err(UsageError("window must be at least 1 s".into()).into());
    }
    let catalog = load_catalog(a.catalog.as_deref())?;
    let model = model::load(&a.model, &catalog.hash())?;
    let log = parse_telemetry(BufReader::new(fs::File::open(&a.telemetry)?))?;
    let events = log
        .matches
        .get(&a.match_id)
        .ok_or_else(|| Error::InvalidArgument(format!("match {} not in telemetry", a.match_id)))?;
    let streamer = match &a.streamer {
        Some(s) => s.clone(),
        None => pipeline::dominant_actor(events).ok_or(Error::NoEvents)?,
    };
    let duration = match &a.manifest {
        Some(p) => MatchManifest::from_json(&fs::read_to_string(p)?)?
            .entry(&a.match_id)
            .map(|e| e.duration_s)
            .ok_or_else(|| Error::Manifest(format!("match {} not in manifest", a.match_id)))?,
        None => events.iter().map(|e| e.t).fold(0.0, f64::max),
    };
    let built = pipeline::engagement_line(&model, &catalog, &a.match_id, &streamer, events, duration, window)?;
    let mut effective = run.to_map();
    effective.insert("streamer".into(), streamer);
    effective.insert("match".into(), a.match_id.clone());
    effective.insert("duration_s".into(), duration.to_string());
    fs::write(&a.out, built.to_csv())?;
    write_sidecar::<()>(&a.out, &effective, None)?;
    if let Some(p) = &a.svg {
        fs::write(p, built.to_svg())?;
        write_sidecar::<()>(p, &effective, None)?;
    }
    if let Some(p) = &a.json {
        fs::write(p, built.to_json(&effective)? + "\n")?;
    }
    Ok(())
}
