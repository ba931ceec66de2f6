//! Bubble, badge and social-graph semantics.
//!
//! Every operation validates its inputs before touching state, so an `Err`
//! leaves the world exactly as it was.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::Constants;
use crate::error::SafetyError;
use crate::types::{PlayerId, PlayerPair};
use crate::world::{Effect, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Non-exempt avatars cannot enter.
    Hard,
    /// Entering makes both avatars invisible to each other.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleConfig {
    pub enabled: bool,
    pub boundary: Boundary,
    pub radius_al: f64,
    /// Proximity alerts; only operative while the bubble is disabled.
    pub alerts_enabled: bool,
    pub alert_muted: BTreeSet<PlayerId>,
    pub exempt: BTreeSet<PlayerId>,
}

impl Default for BubbleConfig {
    fn default() -> Self {
        BubbleConfig {
            enabled: false,
            boundary: Boundary::Hard,
            radius_al: 1.0,
            alerts_enabled: true,
            alert_muted: BTreeSet::new(),
            exempt: BTreeSet::new(),
        }
    }
}

impl BubbleConfig {
    pub fn hard(radius_al: f64) -> Self {
        BubbleConfig {
            enabled: true,
            boundary: Boundary::Hard,
            radius_al,
            ..Default::default()
        }
    }

    pub fn soft(radius_al: f64) -> Self {
        BubbleConfig {
            enabled: true,
            boundary: Boundary::Soft,
            radius_al,
            ..Default::default()
        }
    }

    pub fn validate(&self, c: &Constants) -> Result<(), SafetyError> {
        if !self.radius_al.is_finite()
            || self.radius_al < c.radius_min_al
            || self.radius_al > c.radius_max_al
        {
            return Err(SafetyError::InvalidRadius(self.radius_al));
        }
        Ok(())
    }

    /// Whether alerts can fire for this owner right now.
    pub fn alerts_operative(&self) -> bool {
        !self.enabled && self.alerts_enabled
    }

    /// Radius in meters when this is an enabled bubble of the given kind that
    /// applies against `other`.
    pub fn applies_to(&self, kind: Boundary, other: PlayerId, c: &Constants) -> Option<f64> {
        (self.enabled && self.boundary == kind && !self.exempt.contains(&other))
            .then_some(self.radius_al * c.arm_length_m)
    }

    pub fn hard_radius_m(&self, c: &Constants) -> Option<f64> {
        (self.enabled && self.boundary == Boundary::Hard).then_some(self.radius_al * c.arm_length_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    #[default]
    Open,
    ArmLength,
    NoPhysical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sound {
    #[default]
    None,
    Quiet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialEnergy {
    #[default]
    None,
    Social,
    FriendsOnly,
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadgeSlot {
    Interaction,
    Sound,
    Social,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "slot", content = "value")]
pub enum BadgeValue {
    Interaction(Interaction),
    Sound(Sound),
    Social(SocialEnergy),
}

impl BadgeValue {
    pub fn slot(&self) -> BadgeSlot {
        match self {
            BadgeValue::Interaction(_) => BadgeSlot::Interaction,
            BadgeValue::Sound(_) => BadgeSlot::Sound,
            BadgeValue::Social(_) => BadgeSlot::Social,
        }
    }
}

/// Public preference badges, plus the bubble that an interaction badge
/// displaced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BadgeSet {
    pub interaction: Interaction,
    pub sound: Sound,
    pub social: SocialEnergy,
    pub saved_bubble: Option<BubbleConfig>,
}

impl BadgeSet {
    /// Bubble radius forced by the interaction badge, if it couples.
    pub fn coupled_radius_al(&self, c: &Constants) -> Option<f64> {
        match self.interaction {
            Interaction::Open => None,
            Interaction::ArmLength => Some(1.0),
            Interaction::NoPhysical => Some(c.radius_max_al),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SocialGraph {
    friends: BTreeSet<PlayerPair>,
    blocked_suggestion_senders: BTreeMap<PlayerId, BTreeSet<PlayerId>>,
    block_all_suggestions: BTreeSet<PlayerId>,
    blocked_players: BTreeMap<PlayerId, BTreeSet<PlayerId>>,
    voice_muted: BTreeMap<PlayerId, BTreeSet<PlayerId>>,
}

impl SocialGraph {
    pub fn are_friends(&self, a: PlayerId, b: PlayerId) -> bool {
        a != b && self.friends.contains(&PlayerPair::new(a, b))
    }

    pub fn friends_of(&self, p: PlayerId) -> impl Iterator<Item = PlayerId> + '_ {
        self.friends.iter().filter_map(move |pair| pair.other(p))
    }

    /// True when `receiver` refuses suggestions from `sender` for any reason.
    pub fn refuses_suggestions(&self, receiver: PlayerId, sender: PlayerId) -> bool {
        self.block_all_suggestions.contains(&receiver)
            || contains(&self.blocked_suggestion_senders, receiver, sender)
            || contains(&self.blocked_players, receiver, sender)
    }

    pub fn blocks_all_suggestions(&self, p: PlayerId) -> bool {
        self.block_all_suggestions.contains(&p)
    }

    pub fn blocked_suggestion_senders(&self, p: PlayerId) -> impl Iterator<Item = PlayerId> + '_ {
        self.blocked_suggestion_senders
            .get(&p)
            .into_iter()
            .flatten()
            .copied()
    }

    /// Either player has blocked the other.
    pub fn is_blocked_pair(&self, a: PlayerId, b: PlayerId) -> bool {
        contains(&self.blocked_players, a, b) || contains(&self.blocked_players, b, a)
    }

    pub fn blocked_by(&self, p: PlayerId) -> impl Iterator<Item = PlayerId> + '_ {
        self.blocked_players.get(&p).into_iter().flatten().copied()
    }

    pub fn voice_muted_by(&self, p: PlayerId) -> impl Iterator<Item = PlayerId> + '_ {
        self.voice_muted.get(&p).into_iter().flatten().copied()
    }

    pub(crate) fn block_suggestions_from(&mut self, receiver: PlayerId, sender: PlayerId) {
        self.blocked_suggestion_senders
            .entry(receiver)
            .or_default()
            .insert(sender);
    }

    pub(crate) fn block_all(&mut self, receiver: PlayerId) {
        self.block_all_suggestions.insert(receiver);
    }

    /// Drops every edge touching `p`.
    pub(crate) fn forget(&mut self, p: PlayerId) {
        self.friends.retain(|pair| !pair.contains(p));
        self.block_all_suggestions.remove(&p);
        for map in [
            &mut self.blocked_suggestion_senders,
            &mut self.blocked_players,
            &mut self.voice_muted,
        ] {
            map.remove(&p);
            map.values_mut().for_each(|s| {
                s.remove(&p);
            });
            map.retain(|_, s| !s.is_empty());
        }
    }
}

fn contains(map: &BTreeMap<PlayerId, BTreeSet<PlayerId>>, owner: PlayerId, p: PlayerId) -> bool {
    map.get(&owner).is_some_and(|s| s.contains(&p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "player")]
pub enum SocialAction {
    AddFriend(PlayerId),
    RemoveFriend(PlayerId),
    MuteAlertsFrom(PlayerId),
    DisableAllAlerts,
    EnableAllAlerts,
    /// Avatar block: the pair stops replicating to each other.
    Block(PlayerId),
    Unblock(PlayerId),
    /// Voice mute. Recorded and replicated; there is no audio transport.
    Mute(PlayerId),
    Unmute(PlayerId),
    /// Clears every suggestion block held by the actor.
    AllowSuggestions,
}

impl SocialAction {
    pub fn subject(&self) -> Option<PlayerId> {
        match *self {
            SocialAction::AddFriend(q)
            | SocialAction::RemoveFriend(q)
            | SocialAction::MuteAlertsFrom(q)
            | SocialAction::Block(q)
            | SocialAction::Unblock(q)
            | SocialAction::Mute(q)
            | SocialAction::Unmute(q) => Some(q),
            SocialAction::DisableAllAlerts
            | SocialAction::EnableAllAlerts
            | SocialAction::AllowSuggestions => None,
        }
    }
}

impl WorldState {
    fn require(&self, p: PlayerId) -> Result<(), SafetyError> {
        if self.players.contains_key(&p) {
            Ok(())
        } else {
            Err(SafetyError::UnknownPlayer(p))
        }
    }

    /// Replaces a player's bubble. An active interaction badge is cleared
    /// first and its saved bubble discarded.
    pub fn set_bubble(
        &mut self,
        player: PlayerId,
        cfg: BubbleConfig,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.require(player)?;
        cfg.validate(&self.constants)?;
        let state = self.players.get_mut(&player).expect("checked above");
        if state.badges.interaction != Interaction::Open {
            state.badges.interaction = Interaction::Open;
            state.badges.saved_bubble = None;
        }
        state.bubble = cfg;
        Ok(self.refresh_visibility())
    }

    /// Shortcut activation: turns on the default hard bubble unless some
    /// bubble is already on.
    pub fn activate_default_bubble(
        &mut self,
        player: PlayerId,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.require(player)?;
        let default_radius = self.constants.default_radius_al;
        let state = self.players.get_mut(&player).expect("checked above");
        if state.bubble.enabled {
            return Ok(Vec::new());
        }
        state.bubble.enabled = true;
        state.bubble.boundary = Boundary::Hard;
        state.bubble.radius_al = default_radius;
        Ok(self.refresh_visibility())
    }

    pub fn set_badge(
        &mut self,
        player: PlayerId,
        slot: BadgeSlot,
        value: BadgeValue,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.require(player)?;
        if value.slot() != slot {
            return Err(SafetyError::IllegalValue);
        }
        let max_al = self.constants.radius_max_al;
        let state = self.players.get_mut(&player).expect("checked above");
        match value {
            BadgeValue::Sound(s) => state.badges.sound = s,
            BadgeValue::Social(s) => state.badges.social = s,
            BadgeValue::Interaction(Interaction::Open) => {
                return self.clear_badge(player, BadgeSlot::Interaction);
            }
            BadgeValue::Interaction(i) => {
                if state.badges.interaction == i {
                    return Ok(Vec::new());
                }
                if state.badges.interaction == Interaction::Open {
                    state.badges.saved_bubble = Some(state.bubble.clone());
                }
                state.badges.interaction = i;
                state.bubble.enabled = true;
                state.bubble.boundary = Boundary::Hard;
                state.bubble.radius_al = match i {
                    Interaction::ArmLength => 1.0,
                    _ => max_al,
                };
                return Ok(self.refresh_visibility());
            }
        }
        Ok(Vec::new())
    }

    pub fn clear_badge(
        &mut self,
        player: PlayerId,
        slot: BadgeSlot,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.require(player)?;
        let state = self.players.get_mut(&player).expect("checked above");
        match slot {
            BadgeSlot::Sound => state.badges.sound = Sound::None,
            BadgeSlot::Social => state.badges.social = SocialEnergy::None,
            BadgeSlot::Interaction => {
                if state.badges.interaction == Interaction::Open {
                    return Ok(Vec::new());
                }
                state.badges.interaction = Interaction::Open;
                if let Some(saved) = state.badges.saved_bubble.take() {
                    state.bubble = saved;
                }
                return Ok(self.refresh_visibility());
            }
        }
        Ok(Vec::new())
    }

    pub fn apply_social(
        &mut self,
        actor: PlayerId,
        action: SocialAction,
    ) -> Result<Vec<Effect>, SafetyError> {
        self.require(actor)?;
        if let Some(q) = action.subject() {
            if q == actor {
                return Err(SafetyError::SelfReference);
            }
            self.require(q)?;
        }

        // Bubble-level settings apply to the live bubble and to any bubble
        // saved behind an interaction badge, so a later restore keeps them.
        fn edit_bubbles(world: &mut WorldState, p: PlayerId, f: impl Fn(&mut BubbleConfig)) {
            let state = world.players.get_mut(&p).expect("validated");
            f(&mut state.bubble);
            if let Some(saved) = state.badges.saved_bubble.as_mut() {
                f(saved);
            }
        }

        match action {
            SocialAction::AddFriend(q) => {
                self.social.friends.insert(PlayerPair::new(actor, q));
                edit_bubbles(self, actor, |b| {
                    b.exempt.insert(q);
                });
                edit_bubbles(self, q, |b| {
                    b.exempt.insert(actor);
                });
            }
            SocialAction::RemoveFriend(q) => {
                if self.social.friends.remove(&PlayerPair::new(actor, q)) {
                    edit_bubbles(self, actor, |b| {
                        b.exempt.remove(&q);
                    });
                    edit_bubbles(self, q, |b| {
                        b.exempt.remove(&actor);
                    });
                }
            }
            SocialAction::MuteAlertsFrom(q) => {
                edit_bubbles(self, actor, |b| {
                    b.alert_muted.insert(q);
                });
            }
            SocialAction::DisableAllAlerts => {
                edit_bubbles(self, actor, |b| b.alerts_enabled = false)
            }
            SocialAction::EnableAllAlerts => edit_bubbles(self, actor, |b| b.alerts_enabled = true),
            SocialAction::Block(q) => {
                self.social
                    .blocked_players
                    .entry(actor)
                    .or_default()
                    .insert(q);
            }
            SocialAction::Unblock(q) => {
                if let Some(s) = self.social.blocked_players.get_mut(&actor) {
                    s.remove(&q);
                    if s.is_empty() {
                        self.social.blocked_players.remove(&actor);
                    }
                }
            }
            SocialAction::Mute(q) => {
                self.social.voice_muted.entry(actor).or_default().insert(q);
            }
            SocialAction::Unmute(q) => {
                if let Some(s) = self.social.voice_muted.get_mut(&actor) {
                    s.remove(&q);
                    if s.is_empty() {
                        self.social.voice_muted.remove(&actor);
                    }
                }
            }
            SocialAction::AllowSuggestions => {
                self.social.block_all_suggestions.remove(&actor);
                self.social.blocked_suggestion_senders.remove(&actor);
            }
        }
        self.alerts.prune(&self.players, &self.social);
        Ok(self.refresh_visibility())
    }

    /// Checks the badge-coupling invariant for every player.
    pub fn coupling_holds(&self) -> bool {
        self.players.values().all(|p| {
            let coupled = p.badges.coupled_radius_al(&self.constants);
            match coupled {
                None => p.badges.saved_bubble.is_none(),
                Some(r) => {
                    p.bubble.enabled
                        && p.bubble.boundary == Boundary::Hard
                        && p.bubble.radius_al == r
                        && p.badges.saved_bubble.is_some()
                }
            }
        })
    }
}
