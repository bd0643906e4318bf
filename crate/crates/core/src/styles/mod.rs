//! Play-style discovery over per-match aggregates.

mod kmeans;
mod metrics;
mod ward;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_match, FeatureCatalog, FeatureKind};
use crate::ingest::{EventType, TelemetryEvent};

pub use kmeans::{kmeans, KMeansResult, DEFAULT_RESTARTS};
pub use metrics::{adjusted_rand_index, cluster_sizes, partition_entropy, percent_decrease, silhouette};
pub use ward::{ward_cluster, Dendrogram, Merge};

pub const KILLS: &str = "Kills";
pub const TIME: &str = "Time";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVector {
    pub match_id: String,
    pub streamer_id: String,
    /// Aggregated values before cross-match normalization.
    pub raw: Vec<f64>,
    /// Min-max normalized across the match set; empty until normalized.
    pub values: Vec<f64>,
    pub event_count: usize,
}

/// Column names of a match vector: the catalog followed by Kills and Time.
pub fn match_feature_names(catalog: &FeatureCatalog) -> Vec<String> {
    catalog
        .names()
        .map(str::to_string)
        .chain([KILLS.to_string(), TIME.to_string()])
        .collect()
}

/// Sums boolean features and averages scalar ones over a match's streamer events.
pub fn aggregate(
    catalog: &FeatureCatalog,
    streamer: &str,
    match_id: &str,
    events: &[TelemetryEvent],
    duration_s: f64,
) -> Result<MatchVector> {
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    let vectors = extract_match(catalog, streamer, events);
    let n = vectors.len() as f64;
    let mut raw: Vec<f64> = catalog
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let sum: f64 = vectors.iter().map(|v| v.values[j]).sum();
            match spec.kind {
                FeatureKind::Boolean => sum,
                FeatureKind::Scalar => sum / n,
            }
        })
        .collect();
    let kills = events
        .iter()
        .filter(|e| e.event_type == EventType::Kill && e.payload.killer_id.as_deref() == Some(streamer))
        .count();
    raw.push(kills as f64);
    raw.push(duration_s);
    Ok(MatchVector {
        match_id: match_id.to_string(),
        streamer_id: streamer.to_string(),
        raw,
        values: Vec::new(),
        event_count: events.len(),
    })
}

/// Per-feature min-max normalization across matches; constant columns map to 0.
pub fn normalize_matches(vectors: &mut [MatchVector]) {
    let Some(first) = vectors.first() else {
        return;
    };
    let dim = first.raw.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for v in vectors.iter() {
        for (j, &x) in v.raw.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    for v in vectors.iter_mut() {
        v.values = v
            .raw
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                if hi[j] > lo[j] {
                    (x - lo[j]) / (hi[j] - lo[j])
                } else {
                    0.0
                }
            })
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDiagnostics {
    pub k: usize,
    pub qe: f64,
    pub percent_decrease: Option<f64>,
    pub silhouette: Option<f64>,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub candidates: Vec<usize>,
    pub diagnostics: Vec<KDiagnostics>,
    pub assignment: Vec<usize>,
}

/// Top three `k` by silhouette, then the one whose k-means partition has the
/// highest entropy. Ties prefer the higher silhouette, then the smaller `k`.
pub fn select_k(points: &[Vec<f64>], kmin: usize, kmax: usize, seed: u64) -> Result<Selection> {
    if kmin < 2 || kmax < kmin || kmax > points.len() {
        return Err(Error::invalid(format!(
            "need 2 <= kmin <= kmax <= {} (got {kmin}..{kmax})",
            points.len()
        )));
    }
    let mut diagnostics = Vec::new();
    let mut runs = BTreeMap::new();
    let mut prev_qe = None;
    for k in 1..=kmax {
        let run = kmeans(points, k, seed, DEFAULT_RESTARTS)?;
        let pd = prev_qe.and_then(|p: f64| percent_decrease(&[p, run.qe])[0]);
        prev_qe = Some(run.qe);
        let (sil, ent) = if k >= kmin {
            let sizes = cluster_sizes(&run.assignment, k);
            let ent = if sizes.contains(&0) {
                None
            } else {
                Some(partition_entropy(&sizes)?)
            };
            (Some(silhouette(points, &run.assignment)?), ent)
        } else {
            (None, None)
        };
        diagnostics.push(KDiagnostics {
            k,
            qe: run.qe,
            percent_decrease: pd,
            silhouette: sil,
            entropy: ent,
        });
        runs.insert(k, run);
    }
    let mut ranked: Vec<&KDiagnostics> = diagnostics.iter().filter(|d| d.silhouette.is_some()).collect();
    ranked.sort_by(|a, b| {
        b.silhouette
            .unwrap()
            .total_cmp(&a.silhouette.unwrap())
            .then(a.k.cmp(&b.k))
    });
    let candidates: Vec<usize> = ranked.iter().take(3).map(|d| d.k).collect();
    let chosen = ranked
        .iter()
        .take(3)
        .max_by(|a, b| {
            let (ea, eb) = (a.entropy.unwrap_or(-1.0), b.entropy.unwrap_or(-1.0));
            ea.total_cmp(&eb)
                .then(a.silhouette.unwrap().total_cmp(&b.silhouette.unwrap()))
                .then(b.k.cmp(&a.k))
        })
        .expect("at least one candidate")
        .k;
    Ok(Selection {
        k: chosen,
        candidates,
        assignment: runs.remove(&chosen).expect("run for chosen k").assignment,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Style {
    Noob,
    Explorer,
    Pro,
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleNames {
    /// Name of each cluster, by cluster index.
    pub names: Vec<Style>,
    pub warnings: Vec<String>,
}

fn argmax_among(values: &[f64], among: &[usize]) -> (usize, bool) {
    let best = among
        .iter()
        .copied()
        .fold(among[0], |b, c| if values[c] > values[b] { c } else { b });
    let tied = among.iter().filter(|&&c| values[c] == values[best]).count() > 1;
    (best, tied)
}

/// Explorer has the highest mean Delta Location, Pro the highest mean Kills of
/// the remaining two, Noob is the rest.
pub fn name_styles(delta_location: &[f64], kills: &[f64], time: &[f64]) -> Result<StyleNames> {
    if delta_location.len() != 3 || kills.len() != 3 || time.len() != 3 {
        return Err(Error::invalid("style naming needs exactly 3 clusters"));
    }
    let mut warnings = Vec::new();
    let (explorer, tied) = argmax_among(delta_location, &[0, 1, 2]);
    if tied {
        warnings.push("tie on Delta Location; lowest cluster index chosen as Explorer".to_string());
    }
    let rest: Vec<usize> = (0..3).filter(|&c| c != explorer).collect();
    let (pro, tied) = argmax_among(kills, &rest);
    if tied {
        warnings.push("tie on Kills; lowest cluster index chosen as Pro".to_string());
    }
    let noob = rest.into_iter().find(|&c| c != pro).expect("three clusters");
    if (0..3).any(|c| c != noob && time[c] < time[noob]) {
        warnings.push("the Noob cluster does not have the shortest mean match time".to_string());
    }
    let mut names = vec![Style::Noob; 3];
    names[explorer] = Style::Explorer;
    names[pro] = Style::Pro;
    Ok(StyleNames { names, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub style: Option<Style>,
    pub matches: usize,
    pub events: usize,
    /// Mean normalized feature values, in `feature_names` order.
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub k: usize,
    pub seed: u64,
    pub kmin: usize,
    pub kmax: usize,
    pub feature_names: Vec<String>,
    pub assignments: BTreeMap<String, usize>,
    pub clusters: Vec<ClusterSummary>,
    pub candidates: Vec<usize>,
    pub diagnostics: Vec<KDiagnostics>,
    /// Adjusted Rand index between the k-means partition and the Ward tree cut into `k` groups.
    pub ward_agreement: f64,
    /// The largest Ward merge costs, last merge first.
    pub ward_top_costs: Vec<f64>,
    pub warnings: Vec<String>,
}

impl StyleReport {
    pub fn style_of(&self, match_id: &str) -> Option<Style> {
        let c = *self.assignments.get(match_id)?;
        self.clusters[c].style
    }

    /// One row per cluster: id, style, match count, then mean of each feature.
    pub fn means_csv(&self) -> String {
        let mut out = String::from("cluster,style,matches");
        for n in &self.feature_names {
            out.push(',');
            out.push_str(&n.replace(',', " "));
        }
        out.push('\n');
        for c in &self.clusters {
            let _ = write!(
                out,
                "{},{},{}",
                c.cluster,
                c.style.map(|s| s.to_string()).unwrap_or_default(),
                c.matches
            );
            for m in &c.means {
                let _ = write!(out, ",{m:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Normalizes the match vectors, picks `k`, clusters, and names styles when `k = 3`.
pub fn discover(
    mut vectors: Vec<MatchVector>,
    feature_names: &[String],
    kmin: usize,
    kmax: usize,
    seed: u64,
) -> Result<StyleReport> {
    if vectors.is_empty() {
        return Err(Error::NoEvents);
    }
    normalize_matches(&mut vectors);
    let points: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    if points[0].len() != feature_names.len() {
        return Err(Error::DimensionMismatch {
            expected: feature_names.len(),
            got: points[0].len(),
        });
    }
    let kmax = kmax.min(points.len());
    let selection = select_k(&points, kmin, kmax, seed)?;
    let k = selection.k;
    let dim = feature_names.len();
    let mut clusters: Vec<ClusterSummary> = (0..k)
        .map(|c| ClusterSummary {
            cluster: c,
            style: None,
            matches: 0,
            events: 0,
            means: vec![0.0; dim],
        })
        .collect();
    for (v, &c) in vectors.iter().zip(&selection.assignment) {
        let s = &mut clusters[c];
        s.matches += 1;
        s.events += v.event_count;
        s.means.iter_mut().zip(&v.values).for_each(|(m, x)| *m += x);
    }
    for s in &mut clusters {
        let n = s.matches.max(1) as f64;
        s.means.iter_mut().for_each(|m| *m /= n);
    }
    let mut warnings = Vec::new();
    if k == 3 {
        let col = |name: &str| -> Result<Vec<f64>> {
            let j = feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::invalid(format!("feature `{name}` needed for style naming")))?;
            Ok(clusters.iter().map(|c| c.means[j]).collect())
        };
        let named = name_styles(&col("Delta Location")?, &col(KILLS)?, &col(TIME)?)?;
        for (c, name) in clusters.iter_mut().zip(named.names) {
            c.style = Some(name);
        }
        warnings.extend(named.warnings);
    }
    let dendrogram = ward_cluster(&points)?;
    let ward_labels = dendrogram.cut_k(k)?;
    let ward_agreement = adjusted_rand_index(&ward_labels, &selection.assignment)?;
    let ward_top_costs = dendrogram.merges.iter().rev().take(10).map(|m| m.cost).collect();
    Ok(StyleReport {
        k,
        seed,
        kmin,
        kmax,
        feature_names: feature_names.to_vec(),
        assignments: vectors
            .iter()
            .zip(&selection.assignment)
            .map(|(v, &c)| (v.match_id.clone(), c))
            .collect(),
        clusters,
        candidates: selection.candidates,
        diagnostics: selection.diagnostics,
        ward_agreement,
        ward_top_costs,
        warnings,
    })
}
