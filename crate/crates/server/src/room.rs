//! One authoritative room: command handling, the fixed tick and
//! visibility-filtered replication.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use puffer_core::{
    BadgeSet, BubbleConfig, Constants, Effect, EffectKind, MoveIntent, PlayerId, PlayerState, Pose,
    RoomId, RoomMeta, SafetyError, Vec3, WorldState,
};

use crate::protocol::{ClientMessage, ServerMessage};
use crate::snapshot::{OwnBubble, PublicPlayer, SelfView, Snapshot};

/// Settings that follow a player from room to room.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub name: String,
    pub bubble: BubbleConfig,
    pub badges: BadgeSet,
}

impl Profile {
    pub fn new(name: impl Into<String>) -> Self {
        Profile {
            name: name.into(),
            bubble: BubbleConfig::default(),
            badges: BadgeSet::default(),
        }
    }

    /// Friend exemptions name room-local relations and do not travel.
    fn from_state(state: PlayerState) -> Self {
        let mut bubble = state.bubble;
        bubble.exempt.clear();
        let mut badges = state.badges;
        if let Some(saved) = badges.saved_bubble.as_mut() {
            saved.exempt.clear();
        }
        Profile {
            name: state.name,
            bubble,
            badges,
        }
    }
}

/// A message for one player, optionally answering request `re`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub to: PlayerId,
    pub re: Option<u64>,
    pub msg: ServerMessage,
}

impl Reply {
    fn new(to: PlayerId, re: u64, msg: ServerMessage) -> Self {
        Reply {
            to,
            re: Some(re),
            msg,
        }
    }
}

#[derive(Debug, Default)]
pub struct TickOutput {
    pub replies: Vec<Reply>,
    /// Every effect produced since the previous tick, in order.
    pub effects: Vec<Effect>,
}

/// Queued events per client are capped; the oldest are dropped first.
const MAX_QUEUED_EVENTS: usize = 256;

#[derive(Debug)]
struct QueuedEvent {
    effect: Effect,
    first_sent: Option<u64>,
}

type View = BTreeMap<PlayerId, PublicPlayer>;

/// Replication state for one connected player.
#[derive(Debug, Default)]
struct Replica {
    baseline: Option<(u64, View)>,
    sent: VecDeque<(u64, View)>,
    last_ack: Option<u64>,
    /// Tick of the last ack or forced full snapshot.
    last_sync: u64,
    events: VecDeque<QueuedEvent>,
}

#[derive(Debug)]
pub struct RoomCore {
    world: WorldState,
    meta: RoomMeta,
    replicas: BTreeMap<PlayerId, Replica>,
    intents: BTreeMap<PlayerId, (u64, Pose)>,
    backlog: Vec<Effect>,
}

impl RoomCore {
    pub fn new(meta: RoomMeta, constants: Constants) -> Self {
        RoomCore {
            world: WorldState::new(constants),
            meta,
            replicas: BTreeMap::new(),
            intents: BTreeMap::new(),
            backlog: Vec::new(),
        }
    }

    pub fn id(&self) -> &RoomId {
        &self.meta.room_id
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn meta(&self) -> &RoomMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: RoomMeta) {
        self.meta = meta;
    }

    pub fn contains(&self, player: PlayerId) -> bool {
        self.replicas.contains_key(&player)
    }

    /// Places a player, at `spawn` or at the first free spot on a spiral
    /// around the origin. The player gets a full snapshot next tick.
    pub fn attach(
        &mut self,
        player: PlayerId,
        profile: Profile,
        spawn: Option<Pose>,
    ) -> Result<(), SafetyError> {
        let pose = spawn.unwrap_or_else(|| self.spawn_point(&profile.bubble));
        let mut state = PlayerState::new(profile.name, pose);
        state.bubble = profile.bubble;
        state.badges = profile.badges;
        let effects = self.world.insert_player(player, state)?;
        self.backlog.extend(effects);
        self.replicas.insert(
            player,
            Replica {
                last_sync: self.world.tick,
                ..Default::default()
            },
        );
        tracing::debug!(room = %self.meta.room_id.0, %player, "attached");
        Ok(())
    }

    pub fn detach(&mut self, player: PlayerId) -> Option<Profile> {
        self.replicas.remove(&player)?;
        self.intents.remove(&player);
        let (state, effects) = self.world.remove_player(player).ok()?;
        self.backlog.extend(effects);
        tracing::debug!(room = %self.meta.room_id.0, %player, "detached");
        Some(Profile::from_state(state))
    }

    fn spawn_point(&self, bubble: &BubbleConfig) -> Pose {
        let c = &self.world.constants;
        let reach = |b: &BubbleConfig| {
            if b.enabled {
                b.radius_al * c.arm_length_m
            } else {
                0.0
            }
        };
        let own = reach(bubble);
        const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
        for k in 0u32.. {
            let r = f64::from(k).sqrt();
            let a = f64::from(k) * GOLDEN_ANGLE;
            let p = Vec3::planar(r * a.cos(), r * a.sin());
            let free = self
                .world
                .players
                .values()
                .all(|q| p.distance(q.pose.position) >= own.max(reach(&q.bubble)) + 0.25);
            if free {
                return Pose::new(p, 0.0);
            }
        }
        unreachable!("spiral is unbounded")
    }

    /// Handles a room-bound command from `player`, answering request `seq`.
    pub fn handle(&mut self, player: PlayerId, seq: u64, msg: ClientMessage) -> Vec<Reply> {
        if !self.contains(player) {
            return vec![Reply::new(
                player,
                seq,
                ServerMessage::error("not_in_room", "not in a room"),
            )];
        }
        let now = self.world.tick;
        let result: Result<ServerMessage, SafetyError> = match msg {
            ClientMessage::Move { x, y, facing } => {
                self.intents
                    .insert(player, (seq, Pose::new(Vec3::planar(x, y), facing)));
                return Vec::new();
            }
            ClientMessage::Ack { tick } => {
                self.ack(player, tick);
                return Vec::new();
            }
            ClientMessage::SetBubble {
                enabled,
                boundary,
                radius_al,
                alerts_enabled,
            } => {
                let mut cfg = self.world.players[&player].bubble.clone();
                cfg.enabled = enabled;
                cfg.boundary = boundary;
                cfg.radius_al = radius_al;
                if let Some(a) = alerts_enabled {
                    cfg.alerts_enabled = a;
                }
                self.world.set_bubble(player, cfg).map(|e| self.ok(e))
            }
            ClientMessage::ActivateDefaultBubble {} => self
                .world
                .activate_default_bubble(player)
                .map(|e| self.ok(e)),
            ClientMessage::SetBadge(value) => self
                .world
                .set_badge(player, value.slot(), value)
                .map(|e| self.ok(e)),
            ClientMessage::ClearBadge { slot } => {
                self.world.clear_badge(player, slot).map(|e| self.ok(e))
            }
            ClientMessage::Social(action) => {
                self.world.apply_social(player, action).map(|e| self.ok(e))
            }
            ClientMessage::SendSuggestion { receiver, feature } => {
                // players the sender cannot see are indistinguishable from absent ones
                let hidden = [Some(receiver), feature.subject()]
                    .into_iter()
                    .flatten()
                    .find(|&q| q != player && !self.sees(player, q));
                match hidden {
                    Some(q) => Err(SafetyError::UnknownPlayer(q)),
                    None => self
                        .world
                        .send_suggestion(player, receiver, feature, now)
                        .map(|(outcome, e)| {
                            self.backlog.extend(e);
                            ServerMessage::SuggestionResult(outcome)
                        }),
                }
            }
            ClientMessage::Respond { id, response } => self
                .world
                .respond(player, id, response, now)
                .map(|e| self.ok(e)),
            other => {
                return vec![Reply::new(
                    player,
                    seq,
                    ServerMessage::error(
                        "protocol_error",
                        format!("`{}` is not a room command", other.type_name()),
                    ),
                )]
            }
        };
        let msg = result.unwrap_or_else(|e| ServerMessage::error(e.code(), e));
        vec![Reply::new(player, seq, msg)]
    }

    fn ok(&mut self, effects: Vec<Effect>) -> ServerMessage {
        self.backlog.extend(effects);
        ServerMessage::Ok {}
    }

    fn sees(&self, viewer: PlayerId, other: PlayerId) -> bool {
        self.world.players.contains_key(&other) && self.world.can_see(viewer, other)
    }

    /// Records that `player` holds the snapshot for `tick`.
    pub fn ack(&mut self, player: PlayerId, tick: u64) {
        let now = self.world.tick;
        let Some(r) = self.replicas.get_mut(&player) else {
            return;
        };
        if r.last_ack.is_some_and(|a| tick <= a) {
            return;
        }
        let Some(pos) = r.sent.iter().position(|(t, _)| *t == tick) else {
            return;
        };
        r.last_ack = Some(tick);
        r.last_sync = now;
        let entry = r
            .sent
            .drain(..=pos)
            .next_back()
            .expect("position is in range");
        r.baseline = Some(entry);
        r.events.retain(|e| e.first_sent.is_none_or(|t| t > tick));
    }

    /// Advances the world one tick and builds every client's snapshot.
    pub fn tick(&mut self) -> TickOutput {
        let now = self.world.tick;
        let pending = std::mem::take(&mut self.intents);
        let seqs: BTreeMap<PlayerId, u64> = pending.iter().map(|(p, (s, _))| (*p, *s)).collect();
        let intents: Vec<MoveIntent> = pending
            .into_iter()
            .map(|(player, (_, target))| MoveIntent {
                player,
                target,
                tick: now,
            })
            .collect();
        let report = self.world.advance(&intents);
        let mut out = TickOutput::default();
        for (player, reason) in report.dropped {
            out.replies.push(Reply {
                to: player,
                re: seqs.get(&player).copied(),
                msg: ServerMessage::DroppedIntent { reason },
            });
        }
        let mut effects = std::mem::take(&mut self.backlog);
        effects.extend(report.effects);
        for e in &effects {
            for (id, r) in self.replicas.iter_mut() {
                if addressed_to(&e.kind, *id) {
                    r.events.push_back(QueuedEvent {
                        effect: e.clone(),
                        first_sent: None,
                    });
                    if r.events.len() > MAX_QUEUED_EVENTS {
                        r.events.pop_front();
                    }
                }
            }
        }
        out.effects = effects;
        let ids: Vec<PlayerId> = self.replicas.keys().copied().collect();
        for id in ids {
            let snap = self.snapshot_for(id);
            out.replies.push(Reply {
                to: id,
                re: None,
                msg: ServerMessage::Snapshot(Box::new(snap)),
            });
        }
        out
    }

    /// Everything `viewer` may perceive right now.
    fn visible_view(&self, viewer: PlayerId) -> View {
        let now = self.world.tick;
        self.world
            .players
            .iter()
            .filter(|(id, _)| **id != viewer && self.world.can_see(viewer, **id))
            .map(|(id, p)| (*id, PublicPlayer::of(*id, p, now)))
            .collect()
    }

    fn snapshot_for(&mut self, viewer: PlayerId) -> Snapshot {
        let now = self.world.tick;
        let full_after = self.world.constants.ticks(FULL_SNAPSHOT_AFTER_S);
        let view = self.visible_view(viewer);
        let visible: BTreeSet<PlayerId> = view.keys().copied().collect();
        let perceivable =
            |named: &[PlayerId]| named.iter().all(|p| *p == viewer || visible.contains(p));
        let present = |named: &[PlayerId]| named.iter().all(|p| self.world.players.contains_key(p));

        let r = self
            .replicas
            .get_mut(&viewer)
            .expect("caller iterates replicas");
        let full = r.baseline.is_none() || now.saturating_sub(r.last_sync) >= full_after;
        let (base_tick, players) = match (&r.baseline, full) {
            (Some((bt, base)), false) => (
                Some(*bt),
                view.values()
                    .filter(|p| base.get(&p.player_id) != Some(*p))
                    .cloned()
                    .collect(),
            ),
            _ => {
                r.last_sync = now;
                (None, view.values().cloned().collect())
            }
        };

        // Events naming someone the viewer cannot see wait until they are
        // visible again, but not indefinitely.
        r.events.retain(|q| {
            let named = q.effect.kind.players();
            present(&named) && (perceivable(&named) || now - q.effect.tick < full_after)
        });
        let mut events = Vec::new();
        for q in r.events.iter_mut() {
            if perceivable(&q.effect.kind.players()) {
                q.first_sent.get_or_insert(now);
                events.push(q.effect.clone());
            }
        }

        r.sent.push_back((now, view));
        while r.sent.len() > full_after as usize + 1 {
            r.sent.pop_front();
        }

        let suggestions = self
            .world
            .suggestions
            .pending_for(viewer)
            .filter(|s| {
                let mut named = vec![s.sender];
                named.extend(s.feature.subject());
                perceivable(&named)
            })
            .cloned()
            .collect();
        let me = &self.world.players[&viewer];
        Snapshot {
            tick: now,
            base_tick,
            roster: visible.into_iter().collect(),
            players,
            me: SelfView {
                player_id: viewer,
                name: me.name.clone(),
                pose: me.pose,
                badges: (&me.badges).into(),
                bubble: OwnBubble {
                    enabled: me.bubble.enabled,
                    boundary: me.bubble.boundary,
                    radius_al: me.bubble.radius_al,
                    alerts_enabled: me.bubble.alerts_enabled,
                    flashing: me.is_flashing(now),
                },
                cooldown_until: self
                    .world
                    .suggestions
                    .window(viewer)
                    .and_then(|w| w.cooling_until(now)),
            },
            events,
            suggestions,
            room: self.meta.clone(),
        }
    }
}

/// Without an ack for this long a client gets a full snapshot.
pub const FULL_SNAPSHOT_AFTER_S: f64 = 3.0;

/// Which players an effect is delivered to. Visibility changes are not
/// sent; the roster carries them.
fn addressed_to(kind: &EffectKind, player: PlayerId) -> bool {
    match *kind {
        EffectKind::BubbleFlash { .. } => true,
        EffectKind::AlertRaised { target, .. } => target == player,
        EffectKind::SuggestionDelivered {
            sender, receiver, ..
        } => player == sender || player == receiver,
        EffectKind::SuggestionRejected { sender, .. }
        | EffectKind::CooldownStarted { sender, .. } => sender == player,
        EffectKind::FeatureActivated { player: p, .. }
        | EffectKind::FeatureMenuOpened { player: p, .. } => p == player,
        EffectKind::SuggestionDismissed { receiver, .. } => receiver == player,
        EffectKind::VisibilityChanged { .. } => false,
    }
}
