//! Loading a data directory and turning it into labeled records and match vectors.
//!
//! A data directory holds `manifests/<video>.json`, `chat/<video>.jsonl` and
//! `telemetry/<video>.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::dataset::{self, samples_from_records};
use crate::engagement_line::EngagementLine;
use crate::error::{Error, Result};
use crate::features::{extract_match, FeatureCatalog};
use crate::ingest::{
    align_chat, filter_streamer, parse_chat, parse_telemetry, MatchManifest, TelemetryEvent, TelemetryLog,
};
use crate::labeling::{chat_counts, classify, normalize, LabelConfig, LabeledRecord};
use crate::model::{self, MlpModel, TrainConfig};
use crate::rng;
use crate::styles::{aggregate, MatchVector};

/// One match ready for labeling: its streamer events and aligned chat times.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchData {
    pub match_id: String,
    pub streamer_id: String,
    pub video_id: String,
    pub duration_s: f64,
    /// Streamer events only, sorted by time.
    pub events: Vec<TelemetryEvent>,
    /// Chat times relative to match start.
    pub chat: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub matches: Vec<MatchData>,
    pub dropped_chat: usize,
    pub skipped_events: usize,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

fn read_telemetry(path: &Path) -> Result<TelemetryLog> {
    parse_telemetry(BufReader::new(fs::File::open(path)?))
}

/// Assembles matches from one manifest, its chat and its telemetry.
pub fn assemble(
    manifest: &MatchManifest,
    chat: &[crate::ingest::ChatMessage],
    log: &TelemetryLog,
) -> Result<Vec<MatchData>> {
    let aligned = align_chat(chat, manifest)?;
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let events = log
            .matches
            .get(&entry.match_id)
            .ok_or_else(|| Error::Manifest(format!("no telemetry for match {}", entry.match_id)))?;
        let events = filter_streamer(events, &manifest.streamer_id)?;
        out.push(MatchData {
            match_id: entry.match_id.clone(),
            streamer_id: manifest.streamer_id.clone(),
            video_id: manifest.video_id.clone(),
            duration_s: entry.duration_s,
            events,
            chat: aligned.per_match.get(&entry.match_id).cloned().unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Reads every manifest under `dir/manifests` with its chat and telemetry.
pub fn load_dir(dir: &Path) -> Result<Dataset> {
    let manifests = sorted_files(&dir.join("manifests"), "json")?;
    if manifests.is_empty() {
        return Err(Error::Manifest(format!("no manifests under {}", dir.display())));
    }
    let mut data = Dataset::default();
    for path in manifests {
        let manifest = MatchManifest::from_json(&fs::read_to_string(&path)?)?;
        let chat_path = dir.join("chat").join(format!("{}.jsonl", manifest.video_id));
        let chat = parse_chat(BufReader::new(fs::File::open(&chat_path)?))?;
        let log = read_telemetry(&dir.join("telemetry").join(format!("{}.jsonl", manifest.video_id)))?;
        data.skipped_events += log.skipped_unknown;
        let before = chat.len();
        let matches = assemble(&manifest, &chat, &log)?;
        data.dropped_chat += before - matches.iter().map(|m| m.chat.len()).sum::<usize>();
        data.matches.extend(matches);
    }
    Ok(data)
}

/// Counts, normalizes and labels every streamer event, keeping discarded ones.
pub fn label_matches(matches: &[MatchData], catalog: &FeatureCatalog, cfg: LabelConfig) -> Result<Vec<LabeledRecord>> {
    cfg.validate()?;
    let hash = catalog.hash();
    let mut records = Vec::new();
    for m in matches {
        if m.events.is_empty() {
            return Err(Error::NoEvents);
        }
        let times: Vec<f64> = m.events.iter().map(|e| e.t).collect();
        let counts = chat_counts(&times, &m.chat, m.duration_s)?;
        let freqs = normalize(&counts);
        let features = extract_match(catalog, &m.streamer_id, &m.events);
        for (i, ((&t, (&raw_count, norm_freq)), fv)) in
            times.iter().zip(counts.iter().zip(freqs)).zip(features).enumerate()
        {
            records.push(LabeledRecord {
                match_id: m.match_id.clone(),
                streamer_id: m.streamer_id.clone(),
                event_index: i,
                t,
                norm_freq,
                raw_count,
                label: classify(norm_freq, cfg),
                alpha: cfg.alpha,
                epsilon: cfg.epsilon,
                catalog_hash: hash.clone(),
                features: fv.values,
            });
        }
    }
    Ok(records)
}

/// Per-match aggregate vectors for play-style clustering (not yet normalized).
pub fn match_vectors(matches: &[MatchData], catalog: &FeatureCatalog) -> Result<Vec<MatchVector>> {
    matches
        .iter()
        .map(|m| aggregate(catalog, &m.streamer_id, &m.match_id, &m.events, m.duration_s))
        .collect()
}

/// Trains the final model on every retained record under `cfg`, after class
/// balancing, and stamps it with its scaler, labeling and provenance.
pub fn train_model(
    records: &[LabeledRecord],
    cfg: LabelConfig,
    train: &TrainConfig,
    provenance: BTreeMap<String, String>,
) -> Result<MlpModel> {
    let catalog_hash = match records.first() {
        Some(r) => r.catalog_hash.clone(),
        None => return Err(Error::NoEvents),
    };
    if records.iter().any(|r| r.catalog_hash != catalog_hash) {
        return Err(Error::invalid("labels mix feature catalogs"));
    }
    let samples = samples_from_records(records, cfg);
    let all: Vec<usize> = (0..samples.len()).collect();
    let (high, low) = dataset::class_counts(&samples, &all);
    if high == 0 || low == 0 {
        return Err(Error::DegenerateClasses { high, low });
    }
    let idx = dataset::balance(&samples, &all, rng::derive_seed(train.seed, "balance-train", 0))?;
    let scaler = dataset::fit_scaler(&samples, &idx)?;
    let mut rows = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in &idx {
        rows.push(scaler.apply(&samples[i].features.values)?);
        labels.push(samples[i].label);
    }
    let mut m = model::train(&rows, &labels, train)?.model;
    m.scaler = scaler;
    m.label_config = cfg;
    m.catalog_hash = catalog_hash;
    m.provenance = provenance;
    Ok(m)
}

/// Per-event engagement probabilities for one match, smoothed into a line.
///
/// `events` may contain other players' events; only the streamer's are scored.
pub fn engagement_line(
    model: &MlpModel,
    catalog: &FeatureCatalog,
    match_id: &str,
    streamer: &str,
    events: &[TelemetryEvent],
    duration_s: f64,
    window_s: usize,
) -> Result<EngagementLine> {
    let mine = filter_streamer(events, streamer)?;
    let times: Vec<f64> = mine.iter().map(|e| e.t).collect();
    let probs = extract_match(catalog, streamer, &mine)
        .iter()
        .map(|fv| model.predict_raw(&fv.values).map(|p| p.p))
        .collect::<Result<Vec<f64>>>()?;
    EngagementLine::build(match_id, &times, &probs, duration_s, window_s)
}

/// Number of retained samples per label class, keyed by label name.
pub fn label_summary(records: &[LabeledRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(format!("{:?}", r.label).to_lowercase()).or_insert(0) += 1;
    }
    out
}

/// The most frequent actor of a match, used when no streamer id is supplied.
pub fn dominant_actor(events: &[TelemetryEvent]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        *counts.entry(e.actor_id.as_str()).or_insert(0) += 1;
    }
    // Ties resolve to the lexicographically smallest id.
    counts
        .into_iter()
        .fold(None, |best: Option<(&str, usize)>, (id, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((id, n)),
        })
        .map(|(id, _)| id.to_string())
}
