//! Per-second engagement lines built from per-event model probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_S: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePoint {
    pub t_s: u64,
    pub engagement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementLine {
    pub match_id: String,
    pub window_s: usize,
    pub samples: Vec<LinePoint>,
}

/// Step-hold sampling at every whole second from 0 to `floor(duration_s)`.
///
/// Each second takes the probability of the latest event at or before it;
/// seconds before the first event take the first event's value.
pub fn resample(event_times: &[f64], probabilities: &[f64], duration_s: f64) -> Result<Vec<f64>> {
    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }
    if event_times.len() != probabilities.len() {
        return Err(Error::DimensionMismatch {
            expected: event_times.len(),
            got: probabilities.len(),
        });
    }
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(Error::invalid("duration must be finite and non-negative"));
    }
    if event_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("event times must be sorted"));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    let last = duration_s.floor() as u64;
    Ok((0..=last)
        .map(|t| {
            let held = event_times.partition_point(|&e| e <= t as f64);
            probabilities[held.saturating_sub(1)]
        })
        .collect())
}

/// Centered moving average, truncated at the edges.
///
/// The window spans `(w - 1) / 2` samples before and `w / 2` after each point.
pub fn smooth(series: &[f64], window_s: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::invalid("cannot smooth an empty series"));
    }
    if window_s == 0 {
        return Err(Error::invalid("window must be at least 1 s"));
    }
    let (before, after) = ((window_s - 1) / 2, window_s / 2);
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            let span = &series[lo..=hi];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

impl EngagementLine {
    pub fn build(
        match_id: &str,
        event_times: &[f64],
        probabilities: &[f64],
        duration_s: f64,
        window_s: usize,
    ) -> Result<Self> {
        let smoothed = smooth(&resample(event_times, probabilities, duration_s)?, window_s)?;
        Ok(Self {
            match_id: match_id.to_string(),
            window_s,
            samples: smoothed
                .into_iter()
                .enumerate()
                .map(|(t, engagement)| LinePoint {
                    t_s: t as u64,
                    // Averages of values in [0, 1] can drift past the bounds by an ulp.
                    engagement: engagement.clamp(0.0, 1.0),
                })
                .collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,engagement\n");
        for p in &self.samples {
            let _ = writeln!(out, "{},{:.6}", p.t_s, p.engagement);
        }
        out
    }

    pub fn to_json(&self, run_config: &BTreeMap<String, String>) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'static str,
            tool_version: &'static str,
            run_config: &'a BTreeMap<String, String>,
            #[serde(flatten)]
            line: &'a EngagementLine,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            format: "engagement-line.v1",
            tool_version: crate::TOOL_VERSION,
            run_config,
            line: self,
        })?)
    }

    /// A single polyline over axes spanning 0..duration by 0..1.
    pub fn to_svg(&self) -> String {
        const W: f64 = 800.0;
        const H: f64 = 240.0;
        const PAD: f64 = 30.0;
        let span = self.samples.last().map_or(1, |p| p.t_s.max(1)) as f64;
        let x = |t: f64| PAD + (W - 2.0 * PAD) * t / span;
        let y = |e: f64| H - PAD - (H - 2.0 * PAD) * e;
        let points: Vec<String> = self
            .samples
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.t_s as f64), y(p.engagement)))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, "  <title>{}</title>", xml_escape(&self.match_id));
        let _ = writeln!(
            out,
            r##"  <g stroke="#444" stroke-width="1"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"##,
            b = H - PAD,
            r = W - PAD
        );
        let _ = writeln!(
            out,
            r#"  <g font-size="10" font-family="sans-serif"><text x="{PAD}" y="{}">0</text><text x="{}" y="{}">{span}s</text><text x="4" y="{}">1</text><text x="4" y="{}">0</text></g>"#,
            H - 12.0,
            W - PAD - 20.0,
            H - 12.0,
            PAD + 4.0,
            H - PAD
        );
        let _ = writeln!(
            out,
            r##"  <polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{}"/>"##,
            points.join(" ")
        );
        out.push_str("</svg>\n");
        out
    }

    pub fn export(&self, format: &str, run_config: &BTreeMap<String, String>) -> Result<String> {
        match format {
            "csv" => Ok(self.to_csv()),
            "json" => self.to_json(run_config),
            "svg" => Ok(self.to_svg()),
            other => Err(Error::invalid(format!("unknown export format `{other}`"))),
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads the `t_s,engagement` CSV written by [`EngagementLine::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<LinePoint>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "t_s,engagement")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `t_s,engagement`".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let (t, e) = l.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            Ok(LinePoint {
                t_s: t.parse().map_err(|_| bad("bad t_s"))?,
                engagement: e.parse().map_err(|_| bad("bad engagement"))?,
            })
        })
        .collect()
}
