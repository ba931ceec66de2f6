//! Per-recipient views of room state.

use puffer_core::{
    BadgeSet, Boundary, Effect, Interaction, PlayerId, PlayerState, Pose, RoomMeta, SocialEnergy,
    Sound, Suggestion,
};
use serde::{Deserialize, Serialize};

/// Badges as others see them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicBadges {
    pub interaction: Interaction,
    pub sound: Sound,
    pub social: SocialEnergy,
}

impl From<&BadgeSet> for PublicBadges {
    fn from(b: &BadgeSet) -> Self {
        PublicBadges {
            interaction: b.interaction,
            sound: b.sound,
            social: b.social,
        }
    }
}

/// What others may know about a bubble: never its radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicBubble {
    pub enabled: bool,
    pub boundary: Boundary,
    pub flashing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicPlayer {
    pub player_id: PlayerId,
    pub name: String,
    pub pose: Pose,
    pub badges: PublicBadges,
    pub bubble: PublicBubble,
}

impl PublicPlayer {
    pub fn of(id: PlayerId, p: &PlayerState, tick: u64) -> Self {
        PublicPlayer {
            player_id: id,
            name: p.name.clone(),
            pose: p.pose,
            badges: (&p.badges).into(),
            bubble: PublicBubble {
                enabled: p.bubble.enabled,
                boundary: p.bubble.boundary,
                flashing: p.is_flashing(tick),
            },
        }
    }
}

/// The recipient's own bubble settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwnBubble {
    pub enabled: bool,
    pub boundary: Boundary,
    pub radius_al: f64,
    pub alerts_enabled: bool,
    pub flashing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfView {
    pub player_id: PlayerId,
    pub name: String,
    pub pose: Pose,
    pub badges: PublicBadges,
    pub bubble: OwnBubble,
    /// End tick of the recipient's suggestion cooldown, if cooling down.
    pub cooldown_until: Option<u64>,
}

/// One tick of replicated state for one recipient.
///
/// `players` holds entries that are new or changed relative to the
/// snapshot at `base_tick` (everything when `base_tick` is absent);
/// `roster` lists every player currently visible to the recipient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub base_tick: Option<u64>,
    pub roster: Vec<PlayerId>,
    pub players: Vec<PublicPlayer>,
    pub me: SelfView,
    /// Effects addressed to the recipient that it has not acknowledged.
    pub events: Vec<Effect>,
    /// Pending suggestions addressed to the recipient.
    pub suggestions: Vec<Suggestion>,
    pub room: RoomMeta,
}
