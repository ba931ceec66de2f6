//! Scenario files: who is in the room, how they behave and for how long.

use std::collections::BTreeSet;
use std::path::Path;

use puffer_core::{BadgeValue, Boundary, BubbleConfig, Constants, RoomId, RoomSeed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InvalidScript {
    #[error("cannot read scenario {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cast is empty")]
    EmptyCast,
    #[error("cast name `{0}` appears more than once")]
    DuplicateName(String),
    #[error("cast member `{name}`: {reason}")]
    Member { name: String, reason: String },
    #[error("subject `{0}` is not in the cast")]
    UnknownSubject(String),
    #[error("room capacity {capacity} is smaller than the cast ({cast})")]
    Capacity { capacity: u32, cast: usize },
    #[error("{0}")]
    Setting(String),
}

/// How the subject turns on their bubble once they notice an approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessPath {
    /// Navigating the bubble menu.
    Menu,
    /// The one-button shortcut.
    Hotkey,
    /// Accepting a bubble suggestion sent by a bystander.
    SuggestionAssist,
}

impl AccessPath {
    pub const ALL: [AccessPath; 3] = [
        AccessPath::Menu,
        AccessPath::Hotkey,
        AccessPath::SuggestionAssist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AccessPath::Menu => "menu",
            AccessPath::Hotkey => "hotkey",
            AccessPath::SuggestionAssist => "suggestion_assist",
        }
    }
}

impl std::str::FromStr for AccessPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccessPath::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown access path `{s}` (menu, hotkey, suggestion_assist)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    HumanProxy,
    Tagger,
    Wanderer,
    Greeter,
    Spammer,
}

/// Reaction times of the human proxy, in seconds, before jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub menu_s: f64,
    pub hotkey_s: f64,
    pub suggestion_assist_s: f64,
    /// Relative half-width of the uniform jitter applied to each latency.
    pub jitter: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            menu_s: 2.5,
            hotkey_s: 0.4,
            suggestion_assist_s: 0.8,
            jitter: 0.2,
        }
    }
}

impl LatencyModel {
    pub fn base_s(&self, path: AccessPath) -> f64 {
        match path {
            AccessPath::Menu => self.menu_s,
            AccessPath::Hotkey => self.hotkey_s,
            AccessPath::SuggestionAssist => self.suggestion_assist_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSpec {
    pub enabled: bool,
    pub boundary: Boundary,
    pub radius_al: f64,
    #[serde(default = "yes")]
    pub alerts_enabled: bool,
}

fn yes() -> bool {
    true
}

impl BubbleSpec {
    pub fn to_config(&self) -> BubbleConfig {
        BubbleConfig {
            enabled: self.enabled,
            boundary: self.boundary,
            radius_al: self.radius_al,
            alerts_enabled: self.alerts_enabled,
            ..BubbleConfig::default()
        }
    }
}

/// What a bot does with a suggestion addressed to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnSuggestion {
    #[default]
    Ignore,
    Decline,
    Accept,
    BlockSender,
    BlockAll,
}

/// Role parameters. Each role reads the fields that concern it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Movement speed, m/s.
    pub speed_mps: f64,
    /// Random-walk heading changes every this many ticks.
    pub turn_every: u64,
    /// Bots steer back toward the origin beyond this distance.
    pub arena_m: f64,
    /// Distance within which an approaching player is noticed.
    pub notice_m: f64,
    /// Greeter: greeting distance.
    pub greet_m: f64,
    /// Greeter: distance kept from players who ask for no interaction.
    pub keep_m: f64,
    pub on_suggestion: OnSuggestion,
    /// Human proxy: watch over this player and suggest a bubble when
    /// someone closes in on them.
    pub assist: Option<String>,
    /// Spammer: only target this player.
    pub target: Option<String>,
    /// Spammer: first tick to send on.
    pub start_tick: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            speed_mps: 1.0,
            turn_every: 40,
            arena_m: 15.0,
            notice_m: 8.0,
            greet_m: 1.0,
            keep_m: 2.0,
            on_suggestion: OnSuggestion::Ignore,
            assist: None,
            target: None,
            start_tick: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastMember {
    pub name: String,
    pub role: Role,
    pub position: [f64; 2],
    #[serde(default)]
    pub facing: f64,
    #[serde(default)]
    pub badges: Vec<BadgeValue>,
    #[serde(default)]
    pub bubble: Option<BubbleSpec>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    pub seed: u64,
    pub duration_ticks: u64,
    pub access_path: AccessPath,
    /// The human proxy whose activation and tagging are measured.
    #[serde(default)]
    pub subject: Option<String>,
    pub room: RoomSeed,
    pub cast: Vec<CastMember>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_tag_range")]
    pub tag_range_m: f64,
    /// Removes every badge from the cast, for A/B comparisons.
    #[serde(default)]
    pub strip_badges: bool,
}

fn default_tag_range() -> f64 {
    0.4
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, InvalidScript> {
        let script: ScenarioScript = serde_json::from_str(text)?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, InvalidScript> {
        let text = std::fs::read_to_string(path).map_err(|source| InvalidScript::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn room_id(&self) -> &RoomId {
        &self.room.room_id
    }

    pub fn validate(&self, c: &Constants) -> Result<(), InvalidScript> {
        if self.cast.is_empty() {
            return Err(InvalidScript::EmptyCast);
        }
        let mut names = BTreeSet::new();
        for m in &self.cast {
            if !names.insert(m.name.as_str()) {
                return Err(InvalidScript::DuplicateName(m.name.clone()));
            }
        }
        let member = |name: &str, reason: String| InvalidScript::Member {
            name: name.to_owned(),
            reason,
        };
        for m in &self.cast {
            if !puffer_server::protocol::valid_name(&m.name) {
                return Err(member(&m.name, "invalid display name".into()));
            }
            if !m.position.iter().chain([&m.facing]).all(|v| v.is_finite()) {
                return Err(member(&m.name, "non-finite position".into()));
            }
            if let Some(b) = &m.bubble {
                b.to_config()
                    .validate(c)
                    .map_err(|e| member(&m.name, e.to_string()))?;
            }
            let p = &m.params;
            if !(p.speed_mps >= 0.0 && p.speed_mps <= c.max_speed_mps) {
                return Err(member(
                    &m.name,
                    format!("speed must lie in [0, {}] m/s", c.max_speed_mps),
                ));
            }
            if p.turn_every == 0 {
                return Err(member(&m.name, "turn_every must be positive".into()));
            }
            for other in [&p.assist, &p.target].into_iter().flatten() {
                if !names.contains(other.as_str()) || other == &m.name {
                    return Err(member(&m.name, format!("names unknown player `{other}`")));
                }
            }
        }
        if let Some(s) = &self.subject {
            let Some(m) = self.cast.iter().find(|m| &m.name == s) else {
                return Err(InvalidScript::UnknownSubject(s.clone()));
            };
            if m.role != Role::HumanProxy {
                return Err(member(s, "the subject must be a human proxy".into()));
            }
        }
        if (self.room.capacity as usize) < self.cast.len() {
            return Err(InvalidScript::Capacity {
                capacity: self.room.capacity,
                cast: self.cast.len(),
            });
        }
        let l = &self.latency;
        let finite = [l.menu_s, l.hotkey_s, l.suggestion_assist_s]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite || !(0.0..1.0).contains(&l.jitter) {
            return Err(InvalidScript::Setting(
                "latencies must be non-negative and jitter in [0, 1)".into(),
            ));
        }
        if !(self.tag_range_m.is_finite() && self.tag_range_m > 0.0) {
            return Err(InvalidScript::Setting(
                "tag_range_m must be positive".into(),
            ));
        }
        Ok(())
    }
}
