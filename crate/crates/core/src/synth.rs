//! Deterministic synthetic streams with a planted gameplay-to-chat link and
//! planted play styles.
//!
//! Every streamer event belongs to an intensity tier (combat, loot or calm)
//! chosen from its match's style mix. The chat rate in the gap that follows an
//! event is `base * max(0, 1 - gain * a)`, with `a` the event's action
//! intensity, so quiet chat follows action. Inter-event gaps are drawn
//! independently of event type; with `gain = 0` no feature carries signal.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_chat, write_telemetry, ChatMessage, EventType, ManifestEntry, MatchManifest, Payload, TelemetryEvent,
};
use crate::labeling::{classify, normalize_rates, Engagement, LabelConfig};
use crate::rng::{self, SeededRng};
use crate::styles::Style;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Combat,
    Loot,
    Calm,
}

/// Per-style generation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylePlan {
    pub duration_s: (f64, f64),
    /// Probabilities of the combat, loot and calm tiers.
    pub tier_mix: [f64; 3],
    /// Inclusive range of kills by the streamer.
    pub kills: (u32, u32),
    pub death_probability: f64,
    /// Mean movement speed in map units per second.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_streamers: usize,
    pub matches_per_streamer: usize,
    pub matches_per_video: usize,
    /// Probabilities of Noob, Explorer and Pro.
    pub style_mix: [f64; 3],
    /// Chat messages per second in a fully calm stretch.
    pub base_chat_rate: f64,
    pub inverse_gain: f64,
    /// Action intensity of loot-tier events (combat is 1, calm is 0).
    pub loot_intensity: f64,
    /// Standard deviation of per-event intensity jitter.
    pub intensity_jitter: f64,
    /// Streamer events per second of match time.
    pub event_rate: f64,
    /// Gamma shape of inter-event gaps (higher is more regular).
    pub gap_shape: f64,
    /// Per-streamer chat multipliers are drawn from `1 +/- spread`.
    pub streamer_rate_spread: f64,
    /// Extra events by other players, as a fraction of streamer events.
    pub noise_event_fraction: f64,
    pub lobby_s: (f64, f64),
    pub noob: StylePlan,
    pub explorer: StylePlan,
    pub pro: StylePlan,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_streamers: 5,
            matches_per_streamer: 60,
            matches_per_video: 20,
            style_mix: [1.0 / 3.0; 3],
            base_chat_rate: 0.95,
            inverse_gain: 1.0,
            loot_intensity: 0.84,
            intensity_jitter: 0.03,
            event_rate: 377.0 / 574.0,
            gap_shape: 16.0,
            streamer_rate_spread: 0.15,
            noise_event_fraction: 0.15,
            lobby_s: (60.0, 180.0),
            noob: StylePlan {
                duration_s: (200.0, 400.0),
                tier_mix: [0.35, 0.40, 0.25],
                kills: (0, 1),
                death_probability: 1.0,
                speed: 2.5,
            },
            explorer: StylePlan {
                duration_s: (500.0, 800.0),
                tier_mix: [0.30, 0.30, 0.40],
                kills: (0, 3),
                death_probability: 0.8,
                speed: 9.0,
            },
            pro: StylePlan {
                duration_s: (650.0, 1000.0),
                tier_mix: [0.65, 0.20, 0.15],
                kills: (5, 10),
                death_probability: 0.2,
                speed: 3.5,
            },
        }
    }
}

fn check_mix(name: &str, mix: &[f64]) -> Result<()> {
    if mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} must be non-negative and sum to 1")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn plan(&self, style: Style) -> &StylePlan {
        match style {
            Style::Noob => &self.noob,
            Style::Explorer => &self.explorer,
            Style::Pro => &self.pro,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_streamers == 0 || self.matches_per_streamer == 0 || self.matches_per_video == 0 {
            return Err(Error::invalid("streamer, match and per-video counts must be positive"));
        }
        check_mix("style mix", &self.style_mix)?;
        let positive = [
            ("base chat rate", self.base_chat_rate),
            ("event rate", self.event_rate),
            ("gap shape", self.gap_shape),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.inverse_gain.is_finite() && self.inverse_gain >= 0.0) {
            return Err(Error::invalid("inverse gain must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.loot_intensity)
            || !(0.0..1.0).contains(&self.streamer_rate_spread)
            || self.intensity_jitter < 0.0
            || self.noise_event_fraction < 0.0
        {
            return Err(Error::invalid(
                "intensity, spread, jitter or noise fraction out of range",
            ));
        }
        if !(self.lobby_s.0 >= 0.0 && self.lobby_s.1 >= self.lobby_s.0) {
            return Err(Error::invalid("lobby range must be ordered and non-negative"));
        }
        for style in [Style::Noob, Style::Explorer, Style::Pro] {
            let p = self.plan(style);
            check_mix("tier mix", &p.tier_mix)?;
            if !(p.duration_s.0 > 0.0 && p.duration_s.1 >= p.duration_s.0) {
                return Err(Error::invalid(format!(
                    "{style} durations must be positive and ordered"
                )));
            }
            if p.kills.1 < p.kills.0 || !(0.0..=1.0).contains(&p.death_probability) || p.speed < 0.0 {
                return Err(Error::invalid(format!("{style} plan out of range")));
            }
        }
        Ok(())
    }
}

/// Planted quantities of one streamer event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub t: f64,
    pub tier: Tier,
    pub intensity: f64,
    /// True chat rate in the gap after this event, messages per second.
    pub chat_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTruth {
    pub match_id: String,
    pub streamer_id: String,
    pub video_id: String,
    pub style: Style,
    pub duration_s: f64,
    pub kills: u32,
    pub died: bool,
    pub chat_messages: usize,
    /// Streamer events in time order.
    pub events: Vec<EventTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tool_version: String,
    pub config: SynthConfig,
    pub matches: Vec<MatchTruth>,
}

impl GroundTruth {
    pub fn style_of(&self, match_id: &str) -> Option<Style> {
        self.matches.iter().find(|m| m.match_id == match_id).map(|m| m.style)
    }
}

/// Noise-free expected chat count in each inter-event gap of a match.
pub fn expected_counts(m: &MatchTruth) -> Vec<f64> {
    m.events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let end = m.events.get(i + 1).map_or(m.duration_s, |n| n.t);
            e.chat_rate * (end - e.t)
        })
        .collect()
}

/// Labels each event from its expected (not sampled) chat count.
pub fn oracle_labels(truth: &GroundTruth, cfg: LabelConfig) -> BTreeMap<String, Vec<Engagement>> {
    truth
        .matches
        .iter()
        .map(|m| {
            let labels = normalize_rates(&expected_counts(m))
                .into_iter()
                .map(|f| classify(f, cfg))
                .collect();
            (m.match_id.clone(), labels)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub video_id: String,
    pub streamer_id: String,
    pub manifest: MatchManifest,
    pub chat: Vec<ChatMessage>,
    pub telemetry: Vec<TelemetryEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub videos: Vec<VideoData>,
    pub truth: GroundTruth,
}

const WORDS: [&str; 12] = [
    "gg",
    "lol",
    "nice",
    "wow",
    "pog",
    "clutch",
    "rip",
    "hype",
    "lmao",
    "go go",
    "what a shot",
    "unlucky",
];

pub fn streamer_name(i: usize) -> String {
    format!("streamer_{}", (b'a' + (i % 26) as u8) as char)
}

fn pick_type(r: &mut SeededRng, table: &[(EventType, Option<Slot>, f64)]) -> (EventType, Option<Slot>) {
    let (t, s, _) = table.choose_weighted(r, |e| e.2).expect("non-empty weights");
    (*t, *s)
}

/// Where the streamer sits in a two-party event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Streamer inflicts it.
    Killer,
    /// Streamer suffers it.
    Victim,
}

const COMBAT: [(EventType, Option<Slot>, f64); 11] = [
    (EventType::Attack, None, 0.20),
    (EventType::WeaponFire, None, 0.25),
    (EventType::TakeDamage, Some(Slot::Victim), 0.15),
    (EventType::TakeDamage, Some(Slot::Killer), 0.15),
    (EventType::MakeGroggy, Some(Slot::Killer), 0.05),
    (EventType::MakeGroggy, Some(Slot::Victim), 0.02),
    (EventType::ArmorDestroy, Some(Slot::Killer), 0.04),
    (EventType::ArmorDestroy, Some(Slot::Victim), 0.03),
    (EventType::ObjectDestroy, None, 0.05),
    (EventType::WheelDestroy, None, 0.03),
    (EventType::VehicleDestroy, None, 0.03),
];

const LOOT: [(EventType, Option<Slot>, f64); 13] = [
    (EventType::ItemPickup, None, 0.20),
    (EventType::ItemEquip, None, 0.10),
    (EventType::ItemUnequip, None, 0.05),
    (EventType::ItemDrop, None, 0.05),
    (EventType::ItemUse, None, 0.10),
    (EventType::ItemAttach, None, 0.10),
    (EventType::ItemDetach, None, 0.04),
    (EventType::ItemPickupFromLootbox, None, 0.06),
    (EventType::ItemPickupFromCarepackage, None, 0.03),
    (EventType::Heal, None, 0.12),
    (EventType::Revive, Some(Slot::Killer), 0.05),
    (EventType::Revive, Some(Slot::Victim), 0.03),
    (EventType::VaultStart, None, 0.07),
];

const CALM: [(EventType, Option<Slot>, f64); 7] = [
    (EventType::Position, None, 0.55),
    (EventType::VehicleRide, None, 0.08),
    (EventType::VehicleLeave, None, 0.08),
    (EventType::SwimStart, None, 0.05),
    (EventType::SwimEnd, None, 0.05),
    (EventType::BlueZone, None, 0.12),
    (EventType::RedZone, None, 0.07),
];

struct MatchSim<'a> {
    cfg: &'a SynthConfig,
    streamer: String,
    match_id: String,
    r: SeededRng,
    health: f64,
    pos: [f64; 2],
    heading: f64,
    speed: f64,
    last_t: f64,
}

impl MatchSim<'_> {
    fn move_to(&mut self, t: f64) -> [f64; 3] {
        let dt = (t - self.last_t).max(0.0);
        self.last_t = t;
        self.heading += self.r.random_range(-0.6..0.6);
        let v = self.speed * self.r.random_range(0.5..1.5);
        self.pos[0] = (self.pos[0] + v * dt * self.heading.cos()).clamp(0.0, 8000.0);
        self.pos[1] = (self.pos[1] + v * dt * self.heading.sin()).clamp(0.0, 8000.0);
        [self.pos[0], self.pos[1], 0.0]
    }

    fn state_payload(t: f64) -> Payload {
        let alive = (100.0 * (1.0 - t / 1100.0)).round().max(2.0) as u32;
        Payload {
            alive_players: Some(alive),
            alive_teams: Some(alive.div_ceil(4)),
            phase: Some((t / 150.0) as u32),
            ..Payload::default()
        }
    }

    fn event(&self, t: f64, event_type: EventType, actor: &str, payload: Payload) -> TelemetryEvent {
        TelemetryEvent {
            match_id: self.match_id.clone(),
            t,
            event_type,
            actor_id: actor.to_string(),
            payload,
        }
    }

    fn enemy(&mut self) -> String {
        format!("enemy_{:02}", self.r.random_range(0..60))
    }

    /// One streamer event of the given type with a consistent payload.
    fn streamer_event(&mut self, t: f64, ty: EventType, slot: Option<Slot>) -> TelemetryEvent {
        let me = self.streamer.clone();
        let mut p = Payload::default();
        let actor = match (ty, slot) {
            (EventType::TakeDamage, Some(Slot::Victim)) => {
                let dmg = self.r.random_range(5.0..35.0);
                self.health = (self.health - dmg).max(1.0);
                p.damage = Some(dmg);
                p.health = Some(self.health);
                p.killer_id = Some(self.enemy());
                me.clone()
            }
            (EventType::TakeDamage, _) => {
                let dmg = self.r.random_range(5.0..45.0);
                p.damage = Some(dmg);
                p.health = Some(self.r.random_range(0.0..=100.0f64).min(100.0 - dmg).max(0.0));
                p.killer_id = Some(me.clone());
                self.enemy()
            }
            (EventType::Kill | EventType::MakeGroggy | EventType::ArmorDestroy, Some(Slot::Victim)) => {
                let e = self.enemy();
                p.killer_id = Some(e.clone());
                p.victim_id = Some(me.clone());
                e
            }
            (EventType::Kill | EventType::MakeGroggy | EventType::ArmorDestroy, _) => {
                p.killer_id = Some(me.clone());
                p.victim_id = Some(self.enemy());
                me.clone()
            }
            (EventType::Revive, Some(Slot::Victim)) => {
                let mate = format!("mate_{}", self.r.random_range(1..4));
                p.victim_id = Some(me.clone());
                mate
            }
            (EventType::Revive, _) => {
                p.victim_id = Some(format!("mate_{}", self.r.random_range(1..4)));
                me.clone()
            }
            (EventType::Heal, _) => {
                self.health = (self.health + self.r.random_range(10.0..40.0)).min(100.0);
                p.health = Some(self.health);
                me.clone()
            }
            (EventType::WeaponFire, _) => {
                p.shot_count = Some(self.r.random_range(1..=30));
                me.clone()
            }
            (EventType::Position, _) => {
                p = Self::state_payload(t);
                me.clone()
            }
            _ => me.clone(),
        };
        if actor == me {
            p.location = Some(self.move_to(t));
        }
        self.event(t, ty, &actor, p)
    }

    fn noise_event(&mut self, t: f64) -> TelemetryEvent {
        let actor = self.enemy();
        let ty = *[
            EventType::Position,
            EventType::Attack,
            EventType::WeaponFire,
            EventType::ItemPickup,
        ]
        .choose(&mut self.r)
        .expect("non-empty");
        let mut p = match ty {
            EventType::Position => Self::state_payload(t),
            _ => Payload::default(),
        };
        if ty == EventType::WeaponFire {
            p.shot_count = Some(self.r.random_range(1..=30));
        }
        p.location = Some([self.r.random_range(0.0..8000.0), self.r.random_range(0.0..8000.0), 0.0]);
        self.event(t, ty, &actor, p)
    }
}

struct GeneratedMatch {
    truth: MatchTruth,
    telemetry: Vec<TelemetryEvent>,
    /// Match-relative chat times.
    chat: Vec<f64>,
}

fn generate_match(
    cfg: &SynthConfig,
    streamer: &str,
    video_id: &str,
    match_id: &str,
    rate_multiplier: f64,
    seed: u64,
) -> Result<GeneratedMatch> {
    let mut r = rng::seeded(seed);
    let style = *[Style::Noob, Style::Explorer, Style::Pro]
        .choose_weighted(&mut r, |s| cfg.style_mix[*s as usize])
        .map_err(|e| Error::invalid(format!("style mix: {e}")))?;
    let plan = cfg.plan(style).clone();
    let duration = r.random_range(plan.duration_s.0..=plan.duration_s.1);
    let n = ((duration * cfg.event_rate).round() as usize).max(2);
    let gamma = Gamma::new(cfg.gap_shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let raw_gaps: Vec<f64> = (0..=n).map(|_| gamma.sample(&mut r)).collect();
    let scale = duration / raw_gaps.iter().sum::<f64>();
    let mut times = Vec::with_capacity(n);
    let mut acc = 0.0;
    for g in &raw_gaps[..n] {
        acc += g * scale;
        times.push(acc);
    }

    let tiers = [Tier::Combat, Tier::Loot, Tier::Calm];
    let mut event_tiers: Vec<Tier> = (0..n)
        .map(|_| {
            *tiers
                .choose_weighted(&mut r, |t| plan.tier_mix[*t as usize])
                .expect("valid tier mix")
        })
        .collect();
    let died = r.random_bool(plan.death_probability);
    if died {
        event_tiers[n - 1] = Tier::Combat;
    }
    let mut slots: Vec<(EventType, Option<Slot>)> = event_tiers
        .iter()
        .map(|t| match t {
            Tier::Combat => pick_type(&mut r, &COMBAT),
            Tier::Loot => pick_type(&mut r, &LOOT),
            Tier::Calm => pick_type(&mut r, &CALM),
        })
        .collect();
    let combat_slots: Vec<usize> = (0..n - usize::from(died))
        .filter(|&i| event_tiers[i] == Tier::Combat)
        .collect();
    let kills = r
        .random_range(plan.kills.0..=plan.kills.1)
        .min(combat_slots.len() as u32);
    for &i in combat_slots.choose_multiple(&mut r, kills as usize) {
        slots[i] = (EventType::Kill, Some(Slot::Killer));
    }
    if died {
        slots[n - 1] = (EventType::Kill, Some(Slot::Victim));
    }

    let mut sim = MatchSim {
        cfg,
        streamer: streamer.to_string(),
        match_id: match_id.to_string(),
        r: rng::seeded(rng::derive_seed(seed, "payload", 0)),
        health: 100.0,
        pos: [0.0, 0.0],
        heading: 0.0,
        speed: plan.speed,
        last_t: 0.0,
    };
    sim.pos = [sim.r.random_range(1000.0..7000.0), sim.r.random_range(1000.0..7000.0)];
    sim.heading = sim.r.random_range(0.0..std::f64::consts::TAU);
    let mut telemetry: Vec<TelemetryEvent> = times
        .iter()
        .zip(&slots)
        .map(|(&t, &(ty, slot))| sim.streamer_event(t, ty, slot))
        .collect();
    let noise_n = (n as f64 * sim.cfg.noise_event_fraction).round() as usize;
    for _ in 0..noise_n {
        let t = sim.r.random_range(0.0..duration);
        telemetry.push(sim.noise_event(t));
    }
    telemetry.sort_by(|a, b| a.t.total_cmp(&b.t));

    let jitter = Normal::new(0.0, cfg.intensity_jitter.max(f64::MIN_POSITIVE)).expect("finite jitter");
    let base = cfg.base_chat_rate * rate_multiplier;
    let mut events = Vec::with_capacity(n);
    let mut chat = Vec::new();
    for (i, (&t, &tier)) in times.iter().zip(&event_tiers).enumerate() {
        let nominal = match tier {
            Tier::Combat => 1.0,
            Tier::Loot => cfg.loot_intensity,
            Tier::Calm => 0.0,
        };
        let intensity = (nominal + jitter.sample(&mut r)).clamp(0.0, 1.0);
        let chat_rate = base * (1.0 - cfg.inverse_gain * intensity).max(0.0);
        let end = times.get(i + 1).copied().unwrap_or(duration);
        chat.extend(poisson_times(&mut r, chat_rate, t, end)?);
        events.push(EventTruth {
            t,
            tier,
            intensity,
            chat_rate,
        });
    }
    // Chat before the first event belongs to no gap.
    chat.extend(poisson_times(&mut r, base * 0.5, 0.0, times[0])?);
    chat.sort_by(f64::total_cmp);

    Ok(GeneratedMatch {
        truth: MatchTruth {
            match_id: match_id.to_string(),
            streamer_id: streamer.to_string(),
            video_id: video_id.to_string(),
            style,
            duration_s: duration,
            kills,
            died,
            chat_messages: chat.iter().filter(|&&c| c >= times[0]).count(),
            events,
        },
        telemetry,
        chat,
    })
}

/// Poisson-process arrival times with constant `rate` on `[start, end)`.
fn poisson_times(r: &mut SeededRng, rate: f64, start: f64, end: f64) -> Result<Vec<f64>> {
    let mean = rate * (end - start);
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?.sample(r) as usize;
    Ok((0..count).map(|_| r.random_range(start..end)).collect())
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut videos = Vec::new();
    let mut matches = Vec::new();
    for s in 0..cfg.n_streamers {
        let streamer = streamer_name(s);
        let mut sr = rng::seeded(rng::derive_seed(cfg.seed, "streamer", s as u64));
        let multiplier = 1.0 + sr.random_range(-cfg.streamer_rate_spread..=cfg.streamer_rate_spread);
        let per_video = cfg.matches_per_video;
        for (v, first) in (0..cfg.matches_per_streamer).step_by(per_video).enumerate() {
            let video_id = format!("{streamer}-v{v:02}");
            let mut vr = rng::seeded(rng::derive_seed(cfg.seed, &video_id, 0));
            let mut clock = vr.random_range(cfg.lobby_s.0..=cfg.lobby_s.1);
            let mut entries = Vec::new();
            let mut chat = Vec::new();
            let mut telemetry = Vec::new();
            let mut lobby_chat = poisson_times(&mut vr, cfg.base_chat_rate * multiplier, 0.0, clock)?;
            let last = (first + per_video).min(cfg.matches_per_streamer);
            for m in first..last {
                let match_id = format!("{streamer}-m{m:03}");
                let seed = rng::derive_seed(cfg.seed, "match", (s * cfg.matches_per_streamer + m) as u64);
                let g = generate_match(cfg, &streamer, &video_id, &match_id, multiplier, seed)?;
                entries.push(ManifestEntry {
                    match_id: match_id.clone(),
                    video_start_s: clock,
                    duration_s: g.truth.duration_s,
                });
                chat.extend(g.chat.iter().map(|t| clock + t));
                telemetry.extend(g.telemetry);
                clock += g.truth.duration_s;
                let lobby = vr.random_range(cfg.lobby_s.0..=cfg.lobby_s.1);
                // Lobby chat starts strictly after the match end so it never aligns.
                lobby_chat.extend(poisson_times(
                    &mut vr,
                    cfg.base_chat_rate * multiplier,
                    clock + 1e-3,
                    clock + lobby,
                )?);
                clock += lobby;
                matches.push(g.truth);
            }
            chat.extend(lobby_chat);
            chat.sort_by(f64::total_cmp);
            let chat = chat
                .into_iter()
                .map(|t| ChatMessage {
                    video_id: video_id.clone(),
                    t_video: t,
                    user: format!("viewer{}", vr.random_range(0..400)),
                    message: WORDS.choose(&mut vr).expect("non-empty").to_string(),
                })
                .collect();
            videos.push(VideoData {
                manifest: MatchManifest {
                    schema: 1,
                    video_id: video_id.clone(),
                    streamer_id: streamer.clone(),
                    entries,
                },
                video_id,
                streamer_id: streamer.clone(),
                chat,
                telemetry,
            });
        }
    }
    Ok(SynthOutput {
        videos,
        truth: GroundTruth {
            tool_version: crate::TOOL_VERSION.to_string(),
            config: cfg.clone(),
            matches,
        },
    })
}

/// Writes `manifests/`, `chat/` and `telemetry/` per video plus the ground truth.
pub fn write_to_dir(output: &SynthOutput, dir: &Path) -> Result<()> {
    for sub in ["manifests", "chat", "telemetry"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for v in &output.videos {
        fs::write(
            dir.join("manifests").join(format!("{}.json", v.video_id)),
            serde_json::to_string_pretty(&v.manifest)? + "\n",
        )?;
        let mut buf = Vec::new();
        write_chat(&mut buf, &v.chat)?;
        fs::write(dir.join("chat").join(format!("{}.jsonl", v.video_id)), buf)?;
        let mut buf = Vec::new();
        write_telemetry(&mut buf, &v.telemetry)?;
        fs::write(dir.join("telemetry").join(format!("{}.jsonl", v.video_id)), buf)?;
    }
    fs::write(
        dir.join(GROUND_TRUTH_FILE),
        serde_json::to_string(&output.truth)? + "\n",
    )?;
    Ok(())
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(GROUND_TRUTH_FILE))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{align_chat, filter_streamer};
    use crate::labeling::chat_counts;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_streamers: 2,
            matches_per_streamer: 6,
            matches_per_video: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.truth.matches[0].duration_s,
            generate(&small(4)).unwrap().truth.matches[0].duration_s
        );
    }

    #[test]
    fn noob_only_mix_is_short() {
        let cfg = SynthConfig {
            style_mix: [1.0, 0.0, 0.0],
            ..small(1)
        };
        let out = generate(&cfg).unwrap();
        let limit = cfg.explorer.duration_s.0.min(cfg.pro.duration_s.0);
        for m in &out.truth.matches {
            assert_eq!(m.style, Style::Noob);
            assert!(m.duration_s < limit);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = SynthConfig {
            style_mix: [0.5, 0.5, 0.5],
            ..small(1)
        };
        assert!(generate(&bad).is_err());
        let mut zero = small(1);
        zero.noob.duration_s = (0.0, 0.0);
        assert!(generate(&zero).is_err());
    }

    #[test]
    fn chat_rate_follows_the_inverse_link() {
        let out = generate(&small(5)).unwrap();
        for m in &out.truth.matches {
            for pair in m.events.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if a.intensity < b.intensity {
                    assert!(a.chat_rate >= b.chat_rate);
                }
            }
        }
    }

    #[test]
    fn streamer_events_and_chat_align_with_truth() {
        let out = generate(&small(9)).unwrap();
        for v in &out.videos {
            let aligned = align_chat(&v.chat, &v.manifest).unwrap();
            assert!(aligned.dropped > 0, "lobby chat must be dropped");
            for entry in &v.manifest.entries {
                let truth = out.truth.matches.iter().find(|m| m.match_id == entry.match_id).unwrap();
                let events: Vec<TelemetryEvent> = v
                    .telemetry
                    .iter()
                    .filter(|e| e.match_id == entry.match_id)
                    .cloned()
                    .collect();
                let mine = filter_streamer(&events, &v.streamer_id).unwrap();
                assert_eq!(mine.len(), truth.events.len());
                assert!(mine.len() < events.len());
                let times: Vec<f64> = mine.iter().map(|e| e.t).collect();
                let chat = &aligned.per_match[&entry.match_id];
                let counts = chat_counts(&times, chat, entry.duration_s).unwrap();
                assert_eq!(counts.iter().sum::<u32>() as usize, truth.chat_messages);
            }
        }
    }

    #[test]
    fn aggregate_targets_within_a_quarter() {
        let cfg = SynthConfig {
            n_streamers: 2,
            matches_per_streamer: 60,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        let n = out.truth.matches.len() as f64;
        let duration = out.truth.matches.iter().map(|m| m.duration_s).sum::<f64>() / n;
        let chat = out.truth.matches.iter().map(|m| m.chat_messages as f64).sum::<f64>() / n;
        let events = out.truth.matches.iter().map(|m| m.events.len() as f64).sum::<f64>() / n;
        assert!((duration / 574.0 - 1.0).abs() <= 0.25, "duration {duration}");
        assert!((chat / 171.0 - 1.0).abs() <= 0.25, "chat {chat}");
        assert!((events / 377.0 - 1.0).abs() <= 0.25, "events {events}");
    }

    #[test]
    fn oracle_fixtures() {
        let m = MatchTruth {
            match_id: "m".into(),
            streamer_id: "s".into(),
            video_id: "v".into(),
            style: Style::Pro,
            duration_s: 30.0,
            kills: 0,
            died: false,
            chat_messages: 0,
            events: vec![
                EventTruth {
                    t: 0.0,
                    tier: Tier::Calm,
                    intensity: 0.0,
                    chat_rate: 1.0,
                },
                EventTruth {
                    t: 10.0,
                    tier: Tier::Combat,
                    intensity: 1.0,
                    chat_rate: 0.0,
                },
                EventTruth {
                    t: 20.0,
                    tier: Tier::Loot,
                    intensity: 0.7,
                    chat_rate: 0.3,
                },
            ],
        };
        let truth = GroundTruth {
            tool_version: String::new(),
            config: SynthConfig::default(),
            matches: vec![m],
        };
        let labels = &oracle_labels(
            &truth,
            LabelConfig {
                alpha: 0.3,
                epsilon: 0.0,
            },
        )["m"];
        assert_eq!(labels[..2], [Engagement::Low, Engagement::High]);
        // Expected counts 10, 0, 3 normalize to exactly 0.3 for the last event.
        let banded = &oracle_labels(
            &truth,
            LabelConfig {
                alpha: 0.3,
                epsilon: 0.02,
            },
        )["m"];
        assert_eq!(banded[2], Engagement::Discarded);
    }
}
