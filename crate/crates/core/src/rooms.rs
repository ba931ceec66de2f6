//! Room directory with live crowd/noise levels and preference filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::RoomError;
use crate::safety::{BadgeSet, Interaction, Sound};
use crate::types::PlayerId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(pub String);

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoomId {
    fn from(s: &str) -> Self {
        RoomId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrowdLevel {
    Uncrowded,
    Medium,
    Crowded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Quiet,
    Medium,
    Loud,
}

/// Occupancy below one third is uncrowded, below two thirds medium.
/// Boundaries belong to the denser level.
pub fn crowd_level(player_count: u32, capacity: u32) -> Result<CrowdLevel, RoomError> {
    if capacity == 0 || player_count > capacity {
        return Err(RoomError::InvalidCapacity);
    }
    let (n, c) = (u64::from(player_count), u64::from(capacity));
    Ok(if 3 * n < c {
        CrowdLevel::Uncrowded
    } else if 3 * n < 2 * c {
        CrowdLevel::Medium
    } else {
        CrowdLevel::Crowded
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseThresholds {
    pub quiet_max: u32,
    pub medium_max: u32,
}

impl Default for NoiseThresholds {
    fn default() -> Self {
        NoiseThresholds {
            quiet_max: 3,
            medium_max: 8,
        }
    }
}

impl NoiseThresholds {
    pub fn level(&self, unmuted_count: u32) -> NoiseLevel {
        if unmuted_count <= self.quiet_max {
            NoiseLevel::Quiet
        } else if unmuted_count <= self.medium_max {
            NoiseLevel::Medium
        } else {
            NoiseLevel::Loud
        }
    }
}

/// Noise from the number of unmuted players, with default thresholds.
pub fn noise_level(unmuted_count: u32) -> NoiseLevel {
    NoiseThresholds::default().level(unmuted_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RoomFilter {
    #[serde(default)]
    pub uncrowded_only: bool,
    #[serde(default)]
    pub quiet_only: bool,
}

impl RoomFilter {
    /// Checked boxes narrow the listing independently (conjunction).
    pub fn accepts(&self, meta: &RoomMeta) -> bool {
        (!self.uncrowded_only || meta.crowd == CrowdLevel::Uncrowded)
            && (!self.quiet_only || meta.noise == NoiseLevel::Quiet)
    }
}

pub fn default_filter_from_badges(badges: &BadgeSet) -> RoomFilter {
    RoomFilter {
        uncrowded_only: matches!(
            badges.interaction,
            Interaction::ArmLength | Interaction::NoPhysical
        ),
        quiet_only: badges.sound == Sound::Quiet,
    }
}

/// One entry of the room configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSeed {
    pub room_id: RoomId,
    pub name: String,
    #[serde(default)]
    pub theme_tags: Vec<String>,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomMeta {
    pub room_id: RoomId,
    pub name: String,
    pub theme_tags: Vec<String>,
    pub capacity: u32,
    pub player_count: u32,
    pub unmuted_count: u32,
    pub crowd: CrowdLevel,
    pub noise: NoiseLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RoomEntry {
    meta: RoomMeta,
    members: BTreeSet<PlayerId>,
    muted: BTreeSet<PlayerId>,
}

impl RoomEntry {
    fn refresh(&mut self, thresholds: &NoiseThresholds) {
        let m = &mut self.meta;
        m.player_count = self.members.len() as u32;
        m.unmuted_count = self.members.difference(&self.muted).count() as u32;
        m.crowd = crowd_level(m.player_count, m.capacity).expect("membership bounded by capacity");
        m.noise = thresholds.level(m.unmuted_count);
    }
}

/// Serialized room directory. Metadata is refreshed on every membership or
/// mute event, so reads never see stale levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directory {
    thresholds: NoiseThresholds,
    rooms: BTreeMap<RoomId, RoomEntry>,
    locations: BTreeMap<PlayerId, RoomId>,
}

impl Directory {
    pub fn new(seeds: impl IntoIterator<Item = RoomSeed>) -> Result<Self, RoomError> {
        Self::with_thresholds(seeds, NoiseThresholds::default())
    }

    pub fn with_thresholds(
        seeds: impl IntoIterator<Item = RoomSeed>,
        thresholds: NoiseThresholds,
    ) -> Result<Self, RoomError> {
        let mut rooms = BTreeMap::new();
        for seed in seeds {
            if seed.capacity == 0 {
                return Err(RoomError::InvalidCapacity);
            }
            if rooms.contains_key(&seed.room_id) {
                return Err(RoomError::DuplicateRoom(seed.room_id));
            }
            let mut entry = RoomEntry {
                meta: RoomMeta {
                    room_id: seed.room_id.clone(),
                    name: seed.name,
                    theme_tags: seed.theme_tags,
                    capacity: seed.capacity,
                    player_count: 0,
                    unmuted_count: 0,
                    crowd: CrowdLevel::Uncrowded,
                    noise: NoiseLevel::Quiet,
                },
                members: BTreeSet::new(),
                muted: BTreeSet::new(),
            };
            entry.refresh(&thresholds);
            rooms.insert(seed.room_id, entry);
        }
        Ok(Directory {
            thresholds,
            rooms,
            locations: BTreeMap::new(),
        })
    }

    /// Parses a JSON array of room seeds.
    pub fn from_json(text: &str) -> Result<Vec<RoomSeed>, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn meta(&self, room: &RoomId) -> Option<&RoomMeta> {
        self.rooms.get(room).map(|e| &e.meta)
    }

    pub fn rooms(&self) -> impl Iterator<Item = &RoomMeta> {
        self.rooms.values().map(|e| &e.meta)
    }

    pub fn members(&self, room: &RoomId) -> Option<&BTreeSet<PlayerId>> {
        self.rooms.get(room).map(|e| &e.members)
    }

    pub fn location(&self, player: PlayerId) -> Option<&RoomId> {
        self.locations.get(&player)
    }

    pub fn join_room(&mut self, player: PlayerId, room: &RoomId) -> Result<&RoomMeta, RoomError> {
        if let Some(current) = self.locations.get(&player) {
            return Err(RoomError::AlreadyInRoom(player, current.clone()));
        }
        let entry = self
            .rooms
            .get_mut(room)
            .ok_or_else(|| RoomError::UnknownRoom(room.clone()))?;
        if entry.members.len() as u32 >= entry.meta.capacity {
            return Err(RoomError::RoomFull(room.clone()));
        }
        entry.members.insert(player);
        entry.refresh(&self.thresholds);
        self.locations.insert(player, room.clone());
        Ok(&entry.meta)
    }

    /// Removes the player from their room and returns it.
    pub fn leave_room(&mut self, player: PlayerId) -> Result<RoomId, RoomError> {
        let room = self
            .locations
            .remove(&player)
            .ok_or(RoomError::NotInRoom(player))?;
        let entry = self
            .rooms
            .get_mut(&room)
            .expect("location points at a room");
        entry.members.remove(&player);
        entry.muted.remove(&player);
        entry.refresh(&self.thresholds);
        Ok(room)
    }

    pub fn set_muted(&mut self, player: PlayerId, muted: bool) -> Result<&RoomMeta, RoomError> {
        let room = self
            .locations
            .get(&player)
            .ok_or(RoomError::NotInRoom(player))?;
        let entry = self.rooms.get_mut(room).expect("location points at a room");
        if muted {
            entry.muted.insert(player);
        } else {
            entry.muted.remove(&player);
        }
        entry.refresh(&self.thresholds);
        Ok(&entry.meta)
    }

    pub fn is_muted(&self, player: PlayerId) -> bool {
        self.locations
            .get(&player)
            .and_then(|r| self.rooms.get(r))
            .is_some_and(|e| e.muted.contains(&player))
    }

    pub fn filter_rooms(&self, filter: &RoomFilter) -> Vec<RoomMeta> {
        filter_rooms(self.rooms(), filter)
    }
}

/// Matching rooms, busiest first, ties by room id.
pub fn filter_rooms<'a>(
    rooms: impl IntoIterator<Item = &'a RoomMeta>,
    filter: &RoomFilter,
) -> Vec<RoomMeta> {
    let mut out: Vec<RoomMeta> = rooms
        .into_iter()
        .filter(|m| filter.accepts(m))
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        b.player_count
            .cmp(&a.player_count)
            .then_with(|| a.room_id.cmp(&b.room_id))
    });
    out
}
