//! Safety suggestions: one-click, pre-programmed recommendations sent by a
//! bystander. Senders are rate limited with a sliding window and cooldown;
//! receivers can accept, open the feature menu, decline, or block.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::SafetyError;
use crate::safety::SocialAction;
use crate::types::{PlayerId, SuggestionId};
use crate::world::{Effect, EffectKind, WorldState};

/// The fixed feature catalogue. There is no free-text field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Feature {
    PersonalBubble,
    /// Block the named player.
    Block {
        subject: PlayerId,
    },
    /// Voice-mute the named player.
    Mute {
        subject: PlayerId,
    },
}

impl Feature {
    pub fn subject(&self) -> Option<PlayerId> {
        match *self {
            Feature::PersonalBubble => None,
            Feature::Block { subject } | Feature::Mute { subject } => Some(subject),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionState {
    Pending,
    Accepted,
    Opened,
    Declined,
    Blocked,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: SuggestionId,
    pub sender: PlayerId,
    pub receiver: PlayerId,
    pub feature: Feature,
    pub sent_at: u64,
    pub state: SuggestionState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum SendOutcome {
    Delivered {
        id: SuggestionId,
    },
    /// The receiver blocks this sender or all suggestions; which one is not
    /// revealed.
    NotReceiving,
    CoolingDown {
        until: u64,
    },
    PairPending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum RejectReason {
    NotReceiving,
    CoolingDown { until: u64 },
    PairPending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Accept,
    More,
    Decline,
    BlockSender,
    BlockAll,
}

/// Sliding-window send history for one sender.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RateWindow {
    pub send_ticks: VecDeque<u64>,
    pub cooldown_until: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateDecision {
    Allowed { cooldown_started: Option<u64> },
    CoolingDown { until: u64 },
}

impl RateWindow {
    pub fn cooling_until(&self, now: u64) -> Option<u64> {
        self.cooldown_until.filter(|&u| now < u)
    }

    /// Records a send at `now` unless cooling down. More than `limit` sends
    /// within the last `window` ticks starts a cooldown of `cooldown` ticks;
    /// the send that crosses the threshold still goes through.
    pub fn try_send(&mut self, now: u64, limit: u32, window: u64, cooldown: u64) -> RateDecision {
        if let Some(until) = self.cooling_until(now) {
            return RateDecision::CoolingDown { until };
        }
        self.check_send(now, limit, window, cooldown)
    }

    /// Like [`RateWindow::try_send`] but assumes the caller already checked
    /// the cooldown.
    fn check_send(&mut self, now: u64, limit: u32, window: u64, cooldown: u64) -> RateDecision {
        while self
            .send_ticks
            .front()
            .is_some_and(|&t| now.saturating_sub(t) >= window)
        {
            self.send_ticks.pop_front();
        }
        self.send_ticks.push_back(now);
        if self.send_ticks.len() > limit as usize {
            let until = now + cooldown;
            debug_assert!(self.cooldown_until.is_none_or(|u| u <= until));
            self.cooldown_until = Some(until);
            RateDecision::Allowed {
                cooldown_started: Some(until),
            }
        } else {
            RateDecision::Allowed {
                cooldown_started: None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuggestionBook {
    next_id: u64,
    items: BTreeMap<SuggestionId, Suggestion>,
    windows: BTreeMap<PlayerId, RateWindow>,
}

impl SuggestionBook {
    pub fn get(&self, id: SuggestionId) -> Option<&Suggestion> {
        self.items.get(&id)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Suggestion> {
        self.items
            .values()
            .filter(|s| s.state == SuggestionState::Pending)
    }

    pub fn pending_for(&self, receiver: PlayerId) -> impl Iterator<Item = &Suggestion> {
        self.pending().filter(move |s| s.receiver == receiver)
    }

    pub fn window(&self, sender: PlayerId) -> Option<&RateWindow> {
        self.windows.get(&sender)
    }

    fn pair_pending(&self, sender: PlayerId, receiver: PlayerId) -> bool {
        self.pending()
            .any(|s| s.sender == sender && s.receiver == receiver)
    }

    /// Drops everything naming `p`; pending pop-ups addressed to others from
    /// `p` are dismissed.
    pub(crate) fn forget(&mut self, p: PlayerId, now: u64) -> Vec<Effect> {
        let mut effects = Vec::new();
        for s in self.items.values_mut() {
            let names_p = s.sender == p || s.receiver == p || s.feature.subject() == Some(p);
            if names_p && s.state == SuggestionState::Pending {
                s.state = SuggestionState::Expired;
                if s.receiver != p {
                    effects.push(Effect {
                        tick: now,
                        kind: EffectKind::SuggestionDismissed {
                            receiver: s.receiver,
                            id: s.id,
                        },
                    });
                }
            }
        }
        self.items
            .retain(|_, s| !(s.sender == p || s.receiver == p || s.feature.subject() == Some(p)));
        self.windows.remove(&p);
        effects
    }
}

impl WorldState {
    pub fn send_suggestion(
        &mut self,
        sender: PlayerId,
        receiver: PlayerId,
        feature: Feature,
        now: u64,
    ) -> Result<(SendOutcome, Vec<Effect>), SafetyError> {
        if sender == receiver {
            return Err(SafetyError::SelfSuggestion);
        }
        for p in [sender, receiver] {
            if !self.players.contains_key(&p) {
                return Err(SafetyError::UnknownPlayer(p));
            }
        }
        if let Some(subject) = feature.subject() {
            if subject == receiver {
                return Err(SafetyError::SelfReference);
            }
            if !self.players.contains_key(&subject) {
                return Err(SafetyError::UnknownPlayer(subject));
            }
        }
        let c = &self.constants;
        let stamp = |kind| Effect { tick: now, kind };

        if self.social.refuses_suggestions(receiver, sender) {
            let fx = stamp(EffectKind::SuggestionRejected {
                sender,
                receiver,
                reason: RejectReason::NotReceiving,
            });
            return Ok((SendOutcome::NotReceiving, vec![fx]));
        }
        let window = self.suggestions.windows.entry(sender).or_default();
        if let Some(until) = window.cooling_until(now) {
            let fx = stamp(EffectKind::SuggestionRejected {
                sender,
                receiver,
                reason: RejectReason::CoolingDown { until },
            });
            return Ok((SendOutcome::CoolingDown { until }, vec![fx]));
        }
        if self.suggestions.pair_pending(sender, receiver) {
            let fx = stamp(EffectKind::SuggestionRejected {
                sender,
                receiver,
                reason: RejectReason::PairPending,
            });
            return Ok((SendOutcome::PairPending, vec![fx]));
        }

        let window = self.suggestions.windows.entry(sender).or_default();
        let decision = window.check_send(
            now,
            c.suggestion_limit,
            c.window_ticks(),
            c.cooldown_ticks(),
        );
        let RateDecision::Allowed { cooldown_started } = decision else {
            unreachable!("cooldown checked above");
        };
        let id = SuggestionId(self.suggestions.next_id);
        self.suggestions.next_id += 1;
        self.suggestions.items.insert(
            id,
            Suggestion {
                id,
                sender,
                receiver,
                feature,
                sent_at: now,
                state: SuggestionState::Pending,
            },
        );
        let mut effects = vec![stamp(EffectKind::SuggestionDelivered {
            id,
            sender,
            receiver,
            feature,
        })];
        if let Some(until) = cooldown_started {
            effects.push(stamp(EffectKind::CooldownStarted { sender, until }));
        }
        Ok((SendOutcome::Delivered { id }, effects))
    }

    pub fn respond(
        &mut self,
        receiver: PlayerId,
        id: SuggestionId,
        action: Response,
        now: u64,
    ) -> Result<Vec<Effect>, SafetyError> {
        let s = self
            .suggestions
            .items
            .get(&id)
            .ok_or(SafetyError::UnknownSuggestion(id))?;
        if s.receiver != receiver {
            return Err(SafetyError::NotAddressee(id));
        }
        if s.state != SuggestionState::Pending {
            return Err(SafetyError::AlreadyResolved(id));
        }
        let (sender, feature) = (s.sender, s.feature);
        let stamp = |kind| Effect { tick: now, kind };

        let (state, effects) = match action {
            Response::Accept => {
                let mut fx = match feature {
                    Feature::PersonalBubble => self.activate_default_bubble(receiver)?,
                    Feature::Block { subject } => {
                        self.apply_social(receiver, SocialAction::Block(subject))?
                    }
                    Feature::Mute { subject } => {
                        self.apply_social(receiver, SocialAction::Mute(subject))?
                    }
                };
                fx.push(stamp(EffectKind::FeatureActivated {
                    player: receiver,
                    feature,
                }));
                (SuggestionState::Accepted, fx)
            }
            Response::More => (
                SuggestionState::Opened,
                vec![stamp(EffectKind::FeatureMenuOpened {
                    player: receiver,
                    feature,
                })],
            ),
            Response::Decline => (SuggestionState::Declined, Vec::new()),
            Response::BlockSender => {
                self.social.block_suggestions_from(receiver, sender);
                (SuggestionState::Blocked, Vec::new())
            }
            Response::BlockAll => {
                self.social.block_all(receiver);
                (SuggestionState::Blocked, Vec::new())
            }
        };
        self.suggestions.items.get_mut(&id).expect("checked").state = state;
        Ok(effects)
    }

    /// Expires pending suggestions that reached the expiry age and forgets
    /// resolved ones old enough that nobody can still refer to them.
    pub fn expire_pending(&mut self, now: u64) -> Vec<Effect> {
        let expiry = self.constants.expiry_ticks();
        let retention = expiry + self.constants.window_ticks();
        let mut effects = Vec::new();
        for s in self.suggestions.items.values_mut() {
            if s.state == SuggestionState::Pending && now.saturating_sub(s.sent_at) >= expiry {
                s.state = SuggestionState::Expired;
                effects.push(Effect {
                    tick: now,
                    kind: EffectKind::SuggestionDismissed {
                        receiver: s.receiver,
                        id: s.id,
                    },
                });
            }
        }
        self.suggestions.items.retain(|_, s| {
            s.state == SuggestionState::Pending || now.saturating_sub(s.sent_at) < retention
        });
        effects
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Constants;
    use crate::safety::{Boundary, BubbleConfig};
    use crate::types::Pose;

    const A: PlayerId = PlayerId(1);
    const B: PlayerId = PlayerId(2);

    fn world(n: u64) -> WorldState {
        let mut w = WorldState::new(Constants::default());
        for i in 1..=n {
            w.add_player(PlayerId(i), format!("p{i}"), Pose::at(5.0 * i as f64, 0.0))
                .unwrap();
        }
        w
    }

    fn delivered(o: SendOutcome) -> SuggestionId {
        match o {
            SendOutcome::Delivered { id } => id,
            other => panic!("expected delivery, got {other:?}"),
        }
    }

    #[test]
    fn block_all_receiver_is_not_receiving() {
        let mut w = world(2);
        w.social.block_all(B);
        let before = w.players[&B].clone();
        let (out, _) = w.send_suggestion(A, B, Feature::PersonalBubble, 1).unwrap();
        assert_eq!(out, SendOutcome::NotReceiving);
        assert_eq!(w.players[&B], before);
        assert_eq!(w.suggestions.pending().count(), 0);
    }

    #[test]
    fn sixth_send_starts_cooldown() {
        let mut w = world(8);
        for (i, r) in (2..=7).enumerate() {
            let (out, fx) = w
                .send_suggestion(A, PlayerId(r), Feature::PersonalBubble, 100 + i as u64)
                .unwrap();
            delivered(out);
            if r == 7 {
                assert!(fx.iter().any(|e| e.kind
                    == EffectKind::CooldownStarted {
                        sender: A,
                        until: 105 + 2400
                    }));
            }
        }
        let (out, _) = w
            .send_suggestion(A, PlayerId(8), Feature::PersonalBubble, 110)
            .unwrap();
        assert_eq!(out, SendOutcome::CoolingDown { until: 2505 });
        let (out, _) = w
            .send_suggestion(A, PlayerId(8), Feature::PersonalBubble, 2505)
            .unwrap();
        delivered(out);
    }

    #[test]
    fn self_and_unknown() {
        let mut w = world(2);
        assert_eq!(
            w.send_suggestion(A, A, Feature::PersonalBubble, 0),
            Err(SafetyError::SelfSuggestion)
        );
        assert_eq!(
            w.send_suggestion(A, PlayerId(3), Feature::PersonalBubble, 0),
            Err(SafetyError::UnknownPlayer(PlayerId(3)))
        );
        assert_eq!(
            w.send_suggestion(A, B, Feature::Block { subject: B }, 0),
            Err(SafetyError::SelfReference)
        );
    }

    #[test]
    fn one_pending_per_pair() {
        let mut w = world(2);
        delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        assert_eq!(
            w.send_suggestion(A, B, Feature::PersonalBubble, 1)
                .unwrap()
                .0,
            SendOutcome::PairPending
        );
        // the reverse direction is a different pair
        delivered(
            w.send_suggestion(B, A, Feature::PersonalBubble, 1)
                .unwrap()
                .0,
        );
        // pair-pending attempts do not count toward the rate window
        assert_eq!(w.suggestions.window(A).unwrap().send_ticks.len(), 1);
    }

    #[test]
    fn accept_turns_on_default_bubble() {
        let mut w = world(2);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        assert!(!w.players[&B].bubble.enabled);
        let fx = w.respond(B, id, Response::Accept, 1).unwrap();
        let b = &w.players[&B].bubble;
        assert!(b.enabled && b.boundary == Boundary::Hard && b.radius_al == 1.0);
        assert!(fx.iter().any(|e| e.kind
            == EffectKind::FeatureActivated {
                player: B,
                feature: Feature::PersonalBubble
            }));
        assert_eq!(
            w.suggestions.get(id).unwrap().state,
            SuggestionState::Accepted
        );
        assert_eq!(
            w.respond(B, id, Response::Accept, 2),
            Err(SafetyError::AlreadyResolved(id))
        );
    }

    #[test]
    fn accept_block_and_mute_update_the_graph() {
        let mut w = world(3);
        let c = PlayerId(3);
        let id = delivered(
            w.send_suggestion(A, B, Feature::Block { subject: c }, 0)
                .unwrap()
                .0,
        );
        w.respond(B, id, Response::Accept, 1).unwrap();
        assert!(w.social.is_blocked_pair(B, c));
        let id = delivered(
            w.send_suggestion(A, B, Feature::Mute { subject: c }, 2)
                .unwrap()
                .0,
        );
        w.respond(B, id, Response::Accept, 3).unwrap();
        assert_eq!(w.social.voice_muted_by(B).collect::<Vec<_>>(), vec![c]);
    }

    #[test]
    fn more_opens_menu_without_state_change() {
        let mut w = world(2);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        let bubble = w.players[&B].bubble.clone();
        let fx = w.respond(B, id, Response::More, 1).unwrap();
        assert_eq!(
            fx[0].kind,
            EffectKind::FeatureMenuOpened {
                player: B,
                feature: Feature::PersonalBubble
            }
        );
        assert_eq!(w.players[&B].bubble, bubble);
        assert_eq!(
            w.suggestions.get(id).unwrap().state,
            SuggestionState::Opened
        );
    }

    #[test]
    fn block_sender_then_sends_are_refused() {
        let mut w = world(3);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        w.respond(B, id, Response::BlockSender, 1).unwrap();
        assert_eq!(
            w.send_suggestion(A, B, Feature::PersonalBubble, 2)
                .unwrap()
                .0,
            SendOutcome::NotReceiving
        );
        // another sender still gets through
        delivered(
            w.send_suggestion(PlayerId(3), B, Feature::PersonalBubble, 2)
                .unwrap()
                .0,
        );
    }

    #[test]
    fn respond_errors() {
        let mut w = world(3);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        assert_eq!(
            w.respond(PlayerId(3), id, Response::Accept, 1),
            Err(SafetyError::NotAddressee(id))
        );
        assert_eq!(
            w.respond(B, SuggestionId(99), Response::Accept, 1),
            Err(SafetyError::UnknownSuggestion(SuggestionId(99)))
        );
    }

    #[test]
    fn expiry_threshold() {
        let mut w = world(2);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 10)
                .unwrap()
                .0,
        );
        assert!(w.expire_pending(10 + 599).is_empty());
        assert_eq!(
            w.suggestions.get(id).unwrap().state,
            SuggestionState::Pending
        );
        let fx = w.expire_pending(10 + 600);
        assert_eq!(
            fx[0].kind,
            EffectKind::SuggestionDismissed { receiver: B, id }
        );
        assert_eq!(
            w.suggestions.get(id).unwrap().state,
            SuggestionState::Expired
        );
        // nothing reaches the sender
        assert!(fx.iter().all(|e| !e.kind.players().contains(&A)));
    }

    #[test]
    fn suggestion_never_changes_receiver_without_accept() {
        let mut w = world(2);
        let bubble = w.players[&B].bubble.clone();
        for (t, action) in [Response::More, Response::Decline, Response::BlockSender]
            .into_iter()
            .enumerate()
        {
            w.social = Default::default();
            let id = delivered(
                w.send_suggestion(A, B, Feature::PersonalBubble, t as u64 * 10)
                    .unwrap()
                    .0,
            );
            w.respond(B, id, action, t as u64 * 10 + 1).unwrap();
            assert_eq!(w.players[&B].bubble, bubble);
        }
        assert_ne!(bubble, BubbleConfig::hard(1.0));
    }

    #[test]
    fn leaving_player_dismisses_their_suggestions() {
        let mut w = world(2);
        let id = delivered(
            w.send_suggestion(A, B, Feature::PersonalBubble, 0)
                .unwrap()
                .0,
        );
        let (_, fx) = w.remove_player(A).unwrap();
        assert!(fx
            .iter()
            .any(|e| e.kind == EffectKind::SuggestionDismissed { receiver: B, id }));
        assert!(w.suggestions.get(id).is_none());
    }
}
