//! Gameplay feature catalog and per-event feature extraction.
//!
//! The catalog is data: every entry names where its value comes from, so a new
//! boolean event feature is a catalog edit rather than a code change. Vectors
//! are always laid out in catalog order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{EventType, TelemetryEvent};

pub const CATALOG_FORMAT: &str = "catalog.v1";
pub const DEFAULT_CATALOG_VERSION: &str = "pubg-39";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Health,
    Traversal,
    Combat,
    ItemUse,
    GeneralGameState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Boolean,
    Scalar,
}

/// Which participant slot of an event the streamer must occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actor,
    Victim,
    Killer,
}

impl Role {
    pub fn holds(self, event: &TelemetryEvent, streamer: &str) -> bool {
        match self {
            Role::Actor => event.actor_id == streamer,
            Role::Victim => event.payload.victim_id.as_deref() == Some(streamer),
            Role::Killer => event.payload.killer_id.as_deref() == Some(streamer),
        }
    }
}

/// Where a feature value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FeatureSource {
    /// 1 when the event has this type and the streamer holds the role.
    Event {
        event_type: EventType,
        role: Role,
    },
    HealthLevel,
    DeltaLocation,
    ShotCount,
    DamageDone,
    ElapsedTime,
    AliveTeams,
    AlivePlayers,
    Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub category: Category,
    pub kind: FeatureKind,
    #[serde(flatten)]
    pub source: FeatureSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub format: String,
    pub version: String,
    pub features: Vec<FeatureSpec>,
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Boolean feature indices that fire for `event_type` when the streamer holds `role`.
    pub fn booleans_for(&self, event_type: EventType, role: Role) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                matches!(f.source, FeatureSource::Event { event_type: t, role: r } if t == event_type && r == role)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Canonical `catalog.v1` document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// Hex SHA-256 of the canonical compact document. Labels and models embed it.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("catalog serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.format != CATALOG_FORMAT {
            return Err(crate::Error::invalid(format!(
                "unsupported catalog format {}",
                self.format
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(crate::Error::invalid(format!("duplicate feature {}", f.name)));
            }
            let is_event = matches!(f.source, FeatureSource::Event { .. });
            if is_event != (f.kind == FeatureKind::Boolean) {
                return Err(crate::Error::invalid(format!(
                    "feature {} kind does not match its source",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

fn boolean(name: &str, category: Category, event_type: EventType, role: Role) -> FeatureSpec {
    FeatureSpec {
        name: name.into(),
        category,
        kind: FeatureKind::Boolean,
        source: FeatureSource::Event { event_type, role },
    }
}

fn scalar(name: &str, category: Category, source: FeatureSource) -> FeatureSpec {
    FeatureSpec {
        name: name.into(),
        category,
        kind: FeatureKind::Scalar,
        source,
    }
}

/// The 39-entry catalog across the five gameplay categories.
pub fn default_catalog() -> FeatureCatalog {
    use Category::*;
    use EventType as E;
    use Role::*;
    let features = vec![
        scalar("Health Level", Health, FeatureSource::HealthLevel),
        boolean("Healing", Health, E::Heal, Actor),
        boolean("Reviving", Health, E::Revive, Actor),
        boolean("Receiving Revive", Health, E::Revive, Victim),
        boolean("Armor Being Destroyed", Health, E::ArmorDestroy, Victim),
        boolean("Made Groggy", Health, E::MakeGroggy, Victim),
        boolean("Taking Damage", Health, E::TakeDamage, Actor),
        boolean("Being Killed", Health, E::Kill, Victim),
        scalar("Delta Location", Traversal, FeatureSource::DeltaLocation),
        boolean("In Blue Zone", Traversal, E::BlueZone, Actor),
        boolean("In Red Zone", Traversal, E::RedZone, Actor),
        boolean("Swim Start", Traversal, E::SwimStart, Actor),
        boolean("Swim End", Traversal, E::SwimEnd, Actor),
        boolean("Vault Start", Traversal, E::VaultStart, Actor),
        boolean("Vehicle Ride", Traversal, E::VehicleRide, Actor),
        boolean("Vehicle Leave", Traversal, E::VehicleLeave, Actor),
        scalar("Shot Count", Combat, FeatureSource::ShotCount),
        scalar("Damage Done", Combat, FeatureSource::DamageDone),
        boolean("Is Attacking", Combat, E::Attack, Actor),
        boolean("Weapon Fired", Combat, E::WeaponFire, Actor),
        boolean("Caused Damage", Combat, E::TakeDamage, Killer),
        boolean("Destroyed Object", Combat, E::ObjectDestroy, Actor),
        boolean("Destroyed Armour", Combat, E::ArmorDestroy, Killer),
        boolean("Destroyed Wheel", Combat, E::WheelDestroy, Actor),
        boolean("Destroyed Vehicle", Combat, E::VehicleDestroy, Actor),
        boolean("Made Enemy Groggy", Combat, E::MakeGroggy, Killer),
        boolean("Item Drop", ItemUse, E::ItemDrop, Actor),
        boolean("Item Equip", ItemUse, E::ItemEquip, Actor),
        boolean("Item Unequip", ItemUse, E::ItemUnequip, Actor),
        boolean("Item Pickup", ItemUse, E::ItemPickup, Actor),
        boolean(
            "Item Pickup From Carepackage",
            ItemUse,
            E::ItemPickupFromCarepackage,
            Actor,
        ),
        boolean("Item Pickup From Lootbox", ItemUse, E::ItemPickupFromLootbox, Actor),
        boolean("Item Use", ItemUse, E::ItemUse, Actor),
        boolean("Item Attach", ItemUse, E::ItemAttach, Actor),
        boolean("Item Detach", ItemUse, E::ItemDetach, Actor),
        scalar("Elapsed Time", GeneralGameState, FeatureSource::ElapsedTime),
        scalar("Number of Alive Teams", GeneralGameState, FeatureSource::AliveTeams),
        scalar("Number of Alive Players", GeneralGameState, FeatureSource::AlivePlayers),
        scalar("Phase", GeneralGameState, FeatureSource::Phase),
    ];
    FeatureCatalog {
        format: CATALOG_FORMAT.into(),
        version: DEFAULT_CATALOG_VERSION.into(),
        features,
    }
}

/// One event's features in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub catalog_version: Arc<str>,
}

/// Values assumed for carried-forward state before the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarryDefaults {
    pub health: f64,
    pub alive_players: f64,
    pub alive_teams: f64,
    pub phase: f64,
}

impl Default for CarryDefaults {
    fn default() -> Self {
        Self {
            health: 100.0,
            alive_players: 100.0,
            alive_teams: 100.0,
            phase: 0.0,
        }
    }
}

/// Sequential per-match extractor holding the carried-forward game state.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<'a> {
    catalog: &'a FeatureCatalog,
    version: Arc<str>,
    streamer: String,
    health: f64,
    alive_players: f64,
    alive_teams: f64,
    phase: f64,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(catalog: &'a FeatureCatalog, streamer: &str) -> Self {
        Self::with_defaults(catalog, streamer, CarryDefaults::default())
    }

    pub fn with_defaults(catalog: &'a FeatureCatalog, streamer: &str, defaults: CarryDefaults) -> Self {
        Self {
            catalog,
            version: Arc::from(catalog.version.as_str()),
            streamer: streamer.to_string(),
            health: defaults.health,
            alive_players: defaults.alive_players,
            alive_teams: defaults.alive_teams,
            phase: defaults.phase,
        }
    }

    /// Location of the streamer at `event`, known only for events the streamer acted in.
    fn streamer_location(&self, event: &TelemetryEvent) -> Option<[f64; 3]> {
        (event.actor_id == self.streamer)
            .then_some(event.payload.location)
            .flatten()
    }

    pub fn extract(&mut self, event: &TelemetryEvent, prev: Option<&TelemetryEvent>) -> FeatureVector {
        let p = &event.payload;
        let is_actor = event.actor_id == self.streamer;
        if is_actor {
            if let Some(h) = p.health {
                self.health = h;
            }
        }
        if let Some(v) = p.alive_players {
            self.alive_players = f64::from(v);
        }
        if let Some(v) = p.alive_teams {
            self.alive_teams = f64::from(v);
        }
        if let Some(v) = p.phase {
            self.phase = f64::from(v);
        }

        let delta = match (
            self.streamer_location(event),
            prev.and_then(|e| self.streamer_location(e)),
        ) {
            (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
            _ => 0.0,
        };
        let damage_done = if Role::Killer.holds(event, &self.streamer) {
            p.damage.unwrap_or(0.0)
        } else {
            0.0
        };
        let shot_count = if is_actor {
            p.shot_count.map_or(0.0, f64::from)
        } else {
            0.0
        };

        let values = self
            .catalog
            .features
            .iter()
            .map(|f| match f.source {
                FeatureSource::Event { event_type, role } => {
                    if event.event_type == event_type && role.holds(event, &self.streamer) {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureSource::HealthLevel => self.health,
                FeatureSource::DeltaLocation => delta,
                FeatureSource::ShotCount => shot_count,
                FeatureSource::DamageDone => damage_done,
                FeatureSource::ElapsedTime => event.t,
                FeatureSource::AliveTeams => self.alive_teams,
                FeatureSource::AlivePlayers => self.alive_players,
                FeatureSource::Phase => self.phase,
            })
            .collect();
        FeatureVector {
            values,
            catalog_version: self.version.clone(),
        }
    }
}

/// Extracts every event of one streamer-filtered match in order.
pub fn extract_match(catalog: &FeatureCatalog, streamer: &str, events: &[TelemetryEvent]) -> Vec<FeatureVector> {
    let mut extractor = FeatureExtractor::new(catalog, streamer);
    events
        .iter()
        .enumerate()
        .map(|(i, e)| extractor.extract(e, i.checked_sub(1).map(|j| &events[j])))
        .collect()
}
