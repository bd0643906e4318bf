//! Telemetry and chat log ingestion.
//!
//! Both inputs are line-delimited JSON records. Telemetry lines look like
//!
//! ```text
//! {"schema":1,"match_id":"m1","t":4.0,"event_type":"TAKE_DAMAGE","actor":"s1","payload":{"damage":12.5,"health":80.0}}
//! ```
//!
//! and chat lines like `{"schema":1,"video":"v1","t":10.2,"user":"u9","message":"PogChamp"}`.
//! The `schema` field is optional on input and always written on output.
//! A match manifest maps video-clock chat onto match-relative time.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Telemetry event codes understood by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    TakeDamage,
    Heal,
    Revive,
    ArmorDestroy,
    MakeGroggy,
    Kill,
    Position,
    BlueZone,
    RedZone,
    SwimStart,
    SwimEnd,
    VaultStart,
    VehicleRide,
    VehicleLeave,
    Attack,
    WeaponFire,
    ObjectDestroy,
    WheelDestroy,
    VehicleDestroy,
    ItemDrop,
    ItemEquip,
    ItemUnequip,
    ItemPickup,
    ItemPickupFromCarepackage,
    ItemPickupFromLootbox,
    ItemUse,
    ItemAttach,
    ItemDetach,
}

impl EventType {
    pub const ALL: [EventType; 28] = [
        EventType::TakeDamage,
        EventType::Heal,
        EventType::Revive,
        EventType::ArmorDestroy,
        EventType::MakeGroggy,
        EventType::Kill,
        EventType::Position,
        EventType::BlueZone,
        EventType::RedZone,
        EventType::SwimStart,
        EventType::SwimEnd,
        EventType::VaultStart,
        EventType::VehicleRide,
        EventType::VehicleLeave,
        EventType::Attack,
        EventType::WeaponFire,
        EventType::ObjectDestroy,
        EventType::WheelDestroy,
        EventType::VehicleDestroy,
        EventType::ItemDrop,
        EventType::ItemEquip,
        EventType::ItemUnequip,
        EventType::ItemPickup,
        EventType::ItemPickupFromCarepackage,
        EventType::ItemPickupFromLootbox,
        EventType::ItemUse,
        EventType::ItemAttach,
        EventType::ItemDetach,
    ];

    pub fn code(self) -> &'static str {
        match self {
            EventType::TakeDamage => "TAKE_DAMAGE",
            EventType::Heal => "HEAL",
            EventType::Revive => "REVIVE",
            EventType::ArmorDestroy => "ARMOR_DESTROY",
            EventType::MakeGroggy => "MAKE_GROGGY",
            EventType::Kill => "KILL",
            EventType::Position => "POSITION",
            EventType::BlueZone => "BLUE_ZONE",
            EventType::RedZone => "RED_ZONE",
            EventType::SwimStart => "SWIM_START",
            EventType::SwimEnd => "SWIM_END",
            EventType::VaultStart => "VAULT_START",
            EventType::VehicleRide => "VEHICLE_RIDE",
            EventType::VehicleLeave => "VEHICLE_LEAVE",
            EventType::Attack => "ATTACK",
            EventType::WeaponFire => "WEAPON_FIRE",
            EventType::ObjectDestroy => "OBJECT_DESTROY",
            EventType::WheelDestroy => "WHEEL_DESTROY",
            EventType::VehicleDestroy => "VEHICLE_DESTROY",
            EventType::ItemDrop => "ITEM_DROP",
            EventType::ItemEquip => "ITEM_EQUIP",
            EventType::ItemUnequip => "ITEM_UNEQUIP",
            EventType::ItemPickup => "ITEM_PICKUP",
            EventType::ItemPickupFromCarepackage => "ITEM_PICKUP_FROM_CAREPACKAGE",
            EventType::ItemPickupFromLootbox => "ITEM_PICKUP_FROM_LOOTBOX",
            EventType::ItemUse => "ITEM_USE",
            EventType::ItemAttach => "ITEM_ATTACH",
            EventType::ItemDetach => "ITEM_DETACH",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|e| e.code() == code)
    }

    /// Payload fields that must be present for this event type.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            EventType::TakeDamage => &["damage", "health"],
            EventType::Heal => &["health"],
            EventType::WeaponFire => &["shot_count"],
            EventType::Position => &["location"],
            EventType::Kill | EventType::MakeGroggy | EventType::ArmorDestroy | EventType::Revive => &["victim_id"],
            _ => &[],
        }
    }
}

/// Scalar payload carried by a telemetry record. Absent fields are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub health: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alive_players: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alive_teams: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub victim_id: Option<String>,
}

impl Payload {
    fn has(&self, field: &str) -> bool {
        match field {
            "health" => self.health.is_some(),
            "damage" => self.damage.is_some(),
            "location" => self.location.is_some(),
            "shot_count" => self.shot_count.is_some(),
            "phase" => self.phase.is_some(),
            "alive_players" => self.alive_players.is_some(),
            "alive_teams" => self.alive_teams.is_some(),
            "killer_id" => self.killer_id.is_some(),
            "victim_id" => self.victim_id.is_some(),
            _ => false,
        }
    }

    fn check_ranges(&self) -> std::result::Result<(), String> {
        if let Some(h) = self.health {
            if !(0.0..=100.0).contains(&h) {
                return Err(format!("health {h} outside 0..=100"));
            }
        }
        if let Some(d) = self.damage {
            if !(d.is_finite() && d >= 0.0) {
                return Err(format!("damage {d} must be finite and non-negative"));
            }
        }
        if let Some(loc) = self.location {
            if loc.iter().any(|v| !v.is_finite()) {
                return Err("location must be finite".into());
            }
        }
        Ok(())
    }
}

/// One timestamped game event of one match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub match_id: String,
    /// Seconds since match start.
    pub t: f64,
    pub event_type: EventType,
    #[serde(rename = "actor")]
    pub actor_id: String,
    #[serde(default)]
    pub payload: Payload,
}

impl TelemetryEvent {
    /// True when `player` appears as actor, victim or killer.
    pub fn involves(&self, player: &str) -> bool {
        self.actor_id == player
            || self.payload.victim_id.as_deref() == Some(player)
            || self.payload.killer_id.as_deref() == Some(player)
    }
}

#[derive(Deserialize)]
struct RawTelemetry {
    #[serde(default)]
    schema: Option<u32>,
    match_id: String,
    t: f64,
    event_type: String,
    actor: String,
    #[serde(default)]
    payload: Payload,
}

#[derive(Serialize)]
struct TelemetryOut<'a> {
    schema: u32,
    #[serde(flatten)]
    event: &'a TelemetryEvent,
}

/// Result of parsing one telemetry stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryLog {
    /// Events grouped by match, each list sorted stably by `t`.
    pub matches: BTreeMap<String, Vec<TelemetryEvent>>,
    /// Non-blank lines read.
    pub records: usize,
    /// Records skipped because of an unknown event type.
    pub skipped_unknown: usize,
}

impl TelemetryLog {
    pub fn event_count(&self) -> usize {
        self.matches.values().map(Vec::len).sum()
    }
}

fn check_schema(schema: Option<u32>, line: usize) -> Result<()> {
    match schema {
        None | Some(SCHEMA_VERSION) => Ok(()),
        Some(v) => Err(Error::Parse {
            line,
            message: format!("unsupported schema version {v}"),
        }),
    }
}

/// Parses line-delimited telemetry. Blank lines are ignored.
pub fn parse_telemetry<R: BufRead>(reader: R) -> Result<TelemetryLog> {
    let mut log = TelemetryLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        log.records += 1;
        let raw: RawTelemetry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        check_schema(raw.schema, line_no)?;
        if !(raw.t.is_finite() && raw.t >= 0.0) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("event time {} must be finite and non-negative", raw.t),
            });
        }
        let Some(event_type) = EventType::from_code(&raw.event_type) else {
            log::warn!("line {line_no}: skipping unknown event type {}", raw.event_type);
            log.skipped_unknown += 1;
            continue;
        };
        if let Some(field) = event_type.required_fields().iter().find(|f| !raw.payload.has(f)) {
            return Err(Error::MissingField {
                line: line_no,
                field,
                event_type: event_type.code(),
            });
        }
        raw.payload
            .check_ranges()
            .map_err(|message| Error::Parse { line: line_no, message })?;
        log.matches
            .entry(raw.match_id.clone())
            .or_default()
            .push(TelemetryEvent {
                match_id: raw.match_id,
                t: raw.t,
                event_type,
                actor_id: raw.actor,
                payload: raw.payload,
            });
    }
    for events in log.matches.values_mut() {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(log)
}

/// Writes events as line-delimited telemetry records.
pub fn write_telemetry<'a, W, I>(mut writer: W, events: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a TelemetryEvent>,
{
    for event in events {
        serde_json::to_writer(
            &mut writer,
            &TelemetryOut {
                schema: SCHEMA_VERSION,
                event,
            },
        )?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One viewer chat message on the video clock. The text is never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    #[serde(rename = "video")]
    pub video_id: String,
    #[serde(rename = "t")]
    pub t_video: f64,
    pub user: String,
    pub message: String,
}

#[derive(Deserialize)]
struct RawChat {
    #[serde(default)]
    schema: Option<u32>,
    #[serde(flatten)]
    msg: ChatMessage,
}

#[derive(Serialize)]
struct ChatOut<'a> {
    schema: u32,
    #[serde(flatten)]
    msg: &'a ChatMessage,
}

/// Parses line-delimited chat records, sorted stably by video time.
pub fn parse_chat<R: BufRead>(reader: R) -> Result<Vec<ChatMessage>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawChat = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        check_schema(raw.schema, line_no)?;
        if !(raw.msg.t_video.is_finite() && raw.msg.t_video >= 0.0) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("chat time {} must be finite and non-negative", raw.msg.t_video),
            });
        }
        out.push(raw.msg);
    }
    out.sort_by(|a, b| a.t_video.total_cmp(&b.t_video));
    Ok(out)
}

pub fn write_chat<'a, W, I>(mut writer: W, messages: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ChatMessage>,
{
    for msg in messages {
        serde_json::to_writer(
            &mut writer,
            &ChatOut {
                schema: SCHEMA_VERSION,
                msg,
            },
        )?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub match_id: String,
    pub video_start_s: f64,
    pub duration_s: f64,
}

/// Places each match of one video on the video clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchManifest {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub video_id: String,
    pub streamer_id: String,
    pub entries: Vec<ManifestEntry>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl MatchManifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Manifest(format!("unsupported schema version {}", self.schema)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !(e.duration_s.is_finite() && e.duration_s > 0.0) {
                return Err(Error::Manifest(format!(
                    "match {} has non-positive duration {}",
                    e.match_id, e.duration_s
                )));
            }
            if !(e.video_start_s.is_finite() && e.video_start_s >= 0.0) {
                return Err(Error::Manifest(format!(
                    "match {} has invalid video start {}",
                    e.match_id, e.video_start_s
                )));
            }
            if !seen.insert(e.match_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate match {}", e.match_id)));
            }
        }
        let mut spans: Vec<&ManifestEntry> = self.entries.iter().collect();
        spans.sort_by(|a, b| a.video_start_s.total_cmp(&b.video_start_s));
        for pair in spans.windows(2) {
            if pair[0].video_start_s + pair[0].duration_s > pair[1].video_start_s {
                return Err(Error::Manifest(format!(
                    "matches {} and {} overlap in video time",
                    pair[0].match_id, pair[1].match_id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: MatchManifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn entry(&self, match_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.match_id == match_id)
    }
}

/// Chat message times per match, relative to match start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignedChat {
    pub per_match: BTreeMap<String, Vec<f64>>,
    /// Messages that fall outside every match (or belong to another video).
    pub dropped: usize,
}

/// Assigns each message to the match whose half-open video interval contains it.
pub fn align_chat(chat: &[ChatMessage], manifest: &MatchManifest) -> Result<AlignedChat> {
    manifest.validate()?;
    let mut spans: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    spans.sort_by(|a, b| a.video_start_s.total_cmp(&b.video_start_s));

    let mut out = AlignedChat::default();
    for e in &spans {
        out.per_match.insert(e.match_id.clone(), Vec::new());
    }
    for msg in chat {
        if msg.video_id != manifest.video_id {
            out.dropped += 1;
            continue;
        }
        // Last span starting at or before the message.
        let idx = spans.partition_point(|e| e.video_start_s <= msg.t_video);
        let hit = idx
            .checked_sub(1)
            .map(|i| spans[i])
            .filter(|e| msg.t_video < e.video_start_s + e.duration_s);
        match hit {
            Some(e) => {
                let rel = (msg.t_video - e.video_start_s).max(0.0);
                // Guard against rounding pushing the time onto the open end.
                let rel = if rel < e.duration_s {
                    rel
                } else {
                    e.duration_s.next_down()
                };
                out.per_match.get_mut(&e.match_id).expect("span registered").push(rel);
            }
            None => out.dropped += 1,
        }
    }
    for times in out.per_match.values_mut() {
        times.sort_by(f64::total_cmp);
    }
    Ok(out)
}

/// Keeps the events that name `streamer_id` as actor, victim or killer.
pub fn filter_streamer(events: &[TelemetryEvent], streamer_id: &str) -> Result<Vec<TelemetryEvent>> {
    let kept: Vec<TelemetryEvent> = events.iter().filter(|e| e.involves(streamer_id)).cloned().collect();
    if kept.is_empty() {
        return Err(Error::StreamerNotFound {
            streamer: streamer_id.to_string(),
        });
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TelemetryLog> {
        parse_telemetry(text.as_bytes())
    }

    #[test]
    fn parses_take_damage_line() {
        let log = parse(r#"{"match_id":"m1","t":4.0,"event_type":"TAKE_DAMAGE","actor":"s1","payload":{"damage":12.5,"health":80.0}}"#).unwrap();
        let events = &log.matches["m1"];
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].event_type, EventType::TakeDamage);
        assert_eq!(events[0].payload.damage, Some(12.5));
        assert_eq!(events[0].payload.health, Some(80.0));
        assert_eq!(events[0].actor_id, "s1");
    }

    #[test]
    fn sorts_events_by_time() {
        let text = "{\"match_id\":\"m1\",\"t\":9.0,\"event_type\":\"ATTACK\",\"actor\":\"s1\"}\n\
                    {\"match_id\":\"m1\",\"t\":3.0,\"event_type\":\"ATTACK\",\"actor\":\"s1\"}\n";
        let log = parse(text).unwrap();
        let ts: Vec<f64> = log.matches["m1"].iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![3.0, 9.0]);
    }

    #[test]
    fn ties_keep_input_order() {
        let text = "{\"match_id\":\"m\",\"t\":1.0,\"event_type\":\"ATTACK\",\"actor\":\"a\"}\n\
                    {\"match_id\":\"m\",\"t\":1.0,\"event_type\":\"ATTACK\",\"actor\":\"b\"}\n\
                    {\"match_id\":\"m\",\"t\":0.5,\"event_type\":\"ATTACK\",\"actor\":\"c\"}\n";
        let log = parse(text).unwrap();
        let actors: Vec<&str> = log.matches["m"].iter().map(|e| e.actor_id.as_str()).collect();
        assert_eq!(actors, vec!["c", "a", "b"]);
    }

    #[test]
    fn skips_unknown_event_types() {
        let log = parse(r#"{"match_id":"m1","t":1.0,"event_type":"LOG_UNKNOWN_FUTURE","actor":"s1"}"#).unwrap();
        assert_eq!(log.skipped_unknown, 1);
        assert_eq!(log.event_count(), 0);
        assert_eq!(log.records, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"match_id\":\"m1\",\"t\":1.0,\"event_type\":\"ATTACK\",\"actor\":\"s1\"}\n{not json\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_payload_field_is_named() {
        let text = r#"{"match_id":"m1","t":1.0,"event_type":"TAKE_DAMAGE","actor":"s1","payload":{"damage":3.0}}"#;
        match parse(text) {
            Err(Error::MissingField { field, line, .. }) => {
                assert_eq!(field, "health");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_time_and_bad_schema_rejected() {
        assert!(matches!(
            parse(r#"{"match_id":"m","t":-1.0,"event_type":"ATTACK","actor":"s"}"#),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse(r#"{"schema":2,"match_id":"m","t":1.0,"event_type":"ATTACK","actor":"s"}"#),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn chat_parses_and_preserves_text() {
        let msgs = parse_chat(r#"{"video":"v1","t":10.2,"user":"u9","message":"PogChamp"}"#.as_bytes()).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].message, "PogChamp");
        assert!(parse_chat("".as_bytes()).unwrap().is_empty());

        let text = "α ± ε 😀";
        let msg = ChatMessage {
            video_id: "v".into(),
            t_video: 1.0,
            user: "u".into(),
            message: text.into(),
        };
        let mut buf = Vec::new();
        write_chat(&mut buf, [&msg]).unwrap();
        let back = parse_chat(buf.as_slice()).unwrap();
        assert_eq!(back[0].message.as_bytes(), text.as_bytes());
    }

    #[test]
    fn chat_malformed_line() {
        let text = "{\"video\":\"v\",\"t\":1.0,\"user\":\"u\",\"message\":\"a\"}\n\n{\"video\":\"v\"}\n";
        assert!(matches!(parse_chat(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    fn manifest() -> MatchManifest {
        MatchManifest {
            schema: 1,
            video_id: "v".into(),
            streamer_id: "s1".into(),
            entries: vec![ManifestEntry {
                match_id: "m".into(),
                video_start_s: 100.0,
                duration_s: 60.0,
            }],
        }
    }

    fn msg(t: f64) -> ChatMessage {
        ChatMessage {
            video_id: "v".into(),
            t_video: t,
            user: "u".into(),
            message: "x".into(),
        }
    }

    #[test]
    fn align_uses_half_open_intervals() {
        let aligned = align_chat(&[msg(130.0), msg(99.9), msg(160.0), msg(100.0)], &manifest()).unwrap();
        assert_eq!(aligned.per_match["m"], vec![0.0, 30.0]);
        assert_eq!(aligned.dropped, 2);
    }

    #[test]
    fn manifest_rejects_overlap_and_zero_duration() {
        let mut m = manifest();
        m.entries.push(ManifestEntry {
            match_id: "m2".into(),
            video_start_s: 150.0,
            duration_s: 10.0,
        });
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
        let mut m = manifest();
        m.entries[0].duration_s = 0.0;
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    }

    fn ev(actor: &str, killer: Option<&str>, victim: Option<&str>) -> TelemetryEvent {
        TelemetryEvent {
            match_id: "m".into(),
            t: 0.0,
            event_type: EventType::Kill,
            actor_id: actor.into(),
            payload: Payload {
                killer_id: killer.map(Into::into),
                victim_id: victim.map(Into::into),
                ..Payload::default()
            },
        }
    }

    #[test]
    fn filter_keeps_every_role() {
        let mut events = vec![ev("s1", None, None); 3];
        events.extend(vec![ev("s2", None, None); 2]);
        assert_eq!(filter_streamer(&events, "s1").unwrap().len(), 3);

        let kill = ev("s2", Some("s2"), Some("s1"));
        assert_eq!(filter_streamer(&[kill], "s1").unwrap().len(), 1);

        let fight = ev("s2", Some("s2"), Some("s3"));
        assert!(matches!(
            filter_streamer(std::slice::from_ref(&fight), "s1"),
            Err(Error::StreamerNotFound { .. })
        ));
        let mixed = vec![fight, ev("s1", None, None)];
        assert_eq!(filter_streamer(&mixed, "s1").unwrap().len(), 1);
    }
}
