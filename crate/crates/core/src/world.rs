use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Constants;
use crate::error::SafetyError;
use crate::proximity::{AlertBook, MoveIntent, TickReport, VisibilityRelation};
use crate::safety::{BadgeSet, BubbleConfig, SocialGraph};
use crate::suggestions::{Feature, RejectReason, SuggestionBook};
use crate::types::{PlayerId, PlayerPair, Pose, SuggestionId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub name: String,
    pub pose: Pose,
    pub bubble: BubbleConfig,
    pub badges: BadgeSet,
    /// Last tick (exclusive) of an active violation flash.
    pub flash_until: Option<u64>,
}

impl PlayerState {
    pub fn new(name: impl Into<String>, pose: Pose) -> Self {
        PlayerState {
            name: name.into(),
            pose,
            bubble: BubbleConfig::default(),
            badges: BadgeSet::default(),
            flash_until: None,
        }
    }

    pub fn is_flashing(&self, tick: u64) -> bool {
        self.flash_until.is_some_and(|t| tick < t)
    }
}

/// Authoritative per-room snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub constants: Constants,
    pub tick: u64,
    pub players: BTreeMap<PlayerId, PlayerState>,
    pub social: SocialGraph,
    pub visibility: VisibilityRelation,
    pub alerts: AlertBook,
    pub suggestions: SuggestionBook,
    pub dropped_intents: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EffectKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectKind {
    BubbleFlash {
        owner: PlayerId,
        duration_s: f64,
    },
    AlertRaised {
        target: PlayerId,
        approacher: PlayerId,
        bearing_rad: f64,
    },
    SuggestionDelivered {
        id: SuggestionId,
        sender: PlayerId,
        receiver: PlayerId,
        feature: Feature,
    },
    SuggestionRejected {
        sender: PlayerId,
        receiver: PlayerId,
        reason: RejectReason,
    },
    CooldownStarted {
        sender: PlayerId,
        until: u64,
    },
    FeatureActivated {
        player: PlayerId,
        feature: Feature,
    },
    /// Client-directed: open the menu holding `feature` without changing state.
    FeatureMenuOpened {
        player: PlayerId,
        feature: Feature,
    },
    /// Client-directed: remove the receiver's pop-up.
    SuggestionDismissed {
        receiver: PlayerId,
        id: SuggestionId,
    },
    VisibilityChanged {
        pair: PlayerPair,
        visible: bool,
    },
}

impl EffectKind {
    /// Every player this effect names.
    pub fn players(&self) -> Vec<PlayerId> {
        let mut v = match self {
            EffectKind::BubbleFlash { owner, .. } => vec![*owner],
            EffectKind::AlertRaised {
                target, approacher, ..
            } => vec![*target, *approacher],
            EffectKind::SuggestionDelivered {
                sender,
                receiver,
                feature,
                ..
            } => vec![*sender, *receiver]
                .into_iter()
                .chain(feature.subject())
                .collect(),
            EffectKind::SuggestionRejected {
                sender, receiver, ..
            } => vec![*sender, *receiver],
            EffectKind::CooldownStarted { sender, .. } => vec![*sender],
            EffectKind::FeatureActivated { player, feature }
            | EffectKind::FeatureMenuOpened { player, feature } => {
                std::iter::once(*player).chain(feature.subject()).collect()
            }
            EffectKind::SuggestionDismissed { receiver, .. } => vec![*receiver],
            EffectKind::VisibilityChanged { pair, .. } => vec![pair.low(), pair.high()],
        };
        v.dedup();
        v
    }
}

impl WorldState {
    pub fn new(constants: Constants) -> Self {
        WorldState {
            constants,
            tick: 0,
            players: BTreeMap::new(),
            social: SocialGraph::default(),
            visibility: VisibilityRelation::default(),
            alerts: AlertBook::default(),
            suggestions: SuggestionBook::default(),
            dropped_intents: 0,
        }
    }

    pub(crate) fn effect(&self, kind: EffectKind) -> Effect {
        Effect {
            tick: self.tick,
            kind,
        }
    }

    /// Adds a player with default bubble and badges.
    pub fn add_player(
        &mut self,
        id: PlayerId,
        name: impl Into<String>,
        pose: Pose,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.insert_player(id, PlayerState::new(name, pose))
    }

    /// Adds a player carrying an existing bubble/badge profile.
    pub fn insert_player(
        &mut self,
        id: PlayerId,
        mut state: PlayerState,
    ) -> Result<Vec<Effect>, SafetyError> {
        if self.players.contains_key(&id) {
            return Err(SafetyError::DuplicatePlayer(id));
        }
        state.bubble.validate(&self.constants)?;
        state.pose = Pose::new(state.pose.position, state.pose.facing);
        state.flash_until = None;
        self.players.insert(id, state);
        Ok(self.refresh_visibility())
    }

    /// Removes a player and every relation, episode and pending suggestion
    /// naming them. Returns their final state.
    pub fn remove_player(
        &mut self,
        id: PlayerId,
    ) -> Result<(PlayerState, Vec<Effect>), SafetyError> {
        let state = self
            .players
            .remove(&id)
            .ok_or(SafetyError::UnknownPlayer(id))?;
        self.social.forget(id);
        self.alerts.forget(id);
        let mut effects = self.suggestions.forget(id, self.tick);
        // Visibility pairs naming the departed player vanish silently: the
        // player no longer exists for anyone.
        self.visibility.forget(id);
        effects.extend(self.refresh_visibility());
        Ok((state, effects))
    }

    /// One full authoritative step: movement, visibility, alerts, flashes,
    /// then suggestion expiry.
    pub fn advance(&mut self, intents: &[MoveIntent]) -> TickReport {
        let mut report = self.tick_proximity(intents);
        let now = self.tick;
        report.effects.extend(self.expire_pending(now));
        report
    }

    pub fn is_hidden(&self, a: PlayerId, b: PlayerId) -> bool {
        self.visibility.is_hidden(a, b)
    }

    /// Whether `viewer` may perceive `other`: soft-hidden and blocked pairs
    /// do not replicate to each other.
    pub fn can_see(&self, viewer: PlayerId, other: PlayerId) -> bool {
        viewer == other
            || !(self.is_hidden(viewer, other) || self.social.is_blocked_pair(viewer, other))
    }

    /// Canonical JSON form (stable key order) for golden comparisons.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("world state serializes")
    }
}
