//! Bot policies. A bot sees exactly what a client would: its own
//! reconstructed view, the events delivered to it and replies to its
//! requests. It never reads server state.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use puffer_core::{
    Effect, EffectKind, Feature, Interaction, PlayerId, Response, SendOutcome, SocialEnergy, Sound,
    SuggestionId, SuggestionState, Vec3,
};
use puffer_server::{ClientMessage, ClientView, PublicPlayer, ServerMessage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scenario::{AccessPath, CastMember, LatencyModel, OnSuggestion, Params, Role};

/// Everything a bot may look at when deciding.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub view: &'a ClientView,
    /// Events first delivered since the previous step.
    pub events: &'a [Effect],
    /// Replies to this bot's requests since the previous step.
    pub replies: &'a [ServerMessage],
}

/// Scenario-wide settings a bot may know about.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub tick_hz: u32,
    pub access_path: AccessPath,
    pub latency: LatencyModel,
    pub tag_range_m: f64,
}

impl Context {
    fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_hz)
    }
}

/// Something a bot noticed or decided, for the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    Noticed {
        player: PlayerId,
    },
    Reacting {
        path: AccessPath,
        due_tick: u64,
    },
    Activating {
        path: AccessPath,
    },
    Pursuing {
        player: PlayerId,
    },
    Touched {
        player: PlayerId,
    },
    Wandering,
    Greeted {
        player: PlayerId,
    },
    Avoiding {
        player: PlayerId,
    },
    Warned {
        player: PlayerId,
        about: PlayerId,
    },
    Responded {
        id: SuggestionId,
        response: Response,
    },
    Outcome {
        outcome: SendOutcome,
    },
    SawBadge {
        player: PlayerId,
    },
    SawFlash {
        player: PlayerId,
    },
}

impl Note {
    /// Other players this note is about.
    pub fn players(&self) -> Vec<PlayerId> {
        match *self {
            Note::Noticed { player }
            | Note::Pursuing { player }
            | Note::Touched { player }
            | Note::Greeted { player }
            | Note::Avoiding { player }
            | Note::SawBadge { player }
            | Note::SawFlash { player } => vec![player],
            Note::Warned { player, about } => vec![player, about],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Decision {
    pub messages: Vec<ClientMessage>,
    pub notes: Vec<Note>,
    /// The player the bot's movement is aimed at this step.
    pub focus: Option<PlayerId>,
}

/// First ticks at which a bystander perceived each safety signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Signals {
    pub saw_badge: Option<u64>,
    pub saw_flash: Option<u64>,
}

#[derive(Debug)]
pub struct Bot {
    pub name: String,
    pub role: Role,
    pub is_subject: bool,
    params: Params,
    heading: f64,
    handled: BTreeSet<SuggestionId>,
    steer: Steer,
    state: RoleState,
}

/// Walks around hard bubbles: after a blocked step the bot follows the
/// tangent of the nearest bubble for a few ticks before heading straight
/// for its goal again.
#[derive(Debug, Default)]
struct Steer {
    last: Option<(Vec3, f64)>,
    detour: u32,
}

const DETOUR_TICKS: u32 = 10;

impl Steer {
    fn observe(&mut self, here: Vec3) {
        if let Some((from, step)) = self.last.take() {
            if here.distance(from) < 0.25 * step {
                self.detour = DETOUR_TICKS;
            } else {
                self.detour = self.detour.saturating_sub(1);
            }
        }
    }

    fn toward(&mut self, view: &ClientView, here: Vec3, to: Vec3, step_m: f64) -> ClientMessage {
        let delta = to - here;
        let dist = delta.norm();
        if dist <= 1e-12 || step_m <= 0.0 {
            return move_toward(here, to, 0.0, 0.0);
        }
        let step = step_m.min(dist);
        let mut dir = delta * (1.0 / dist);
        let obstacle = nearest(view, here, |p| {
            p.bubble.enabled && p.bubble.boundary == puffer_core::Boundary::Hard
        });
        if let (true, Some(o)) = (self.detour > 0, obstacle) {
            let out = here - o.pose.position;
            let n = out.norm();
            if n > 1e-9 {
                let radial = out * (1.0 / n);
                let mut tangent = Vec3::planar(-radial.y, radial.x);
                if tangent.dot(dir) < 0.0 {
                    tangent = tangent * -1.0;
                }
                let t = tangent + radial * 0.2;
                dir = t * (1.0 / t.norm());
            }
        }
        self.last = Some((here, step));
        move_toward(
            here,
            Vec3::planar(here.x + dir.x * step, here.y + dir.y * step),
            step,
            0.0,
        )
    }
}

#[derive(Debug)]
enum RoleState {
    Human(Human),
    Tagger { touched: BTreeSet<PlayerId> },
    Wanderer,
    Greeter(Greeter),
    Spammer { next: usize },
}

#[derive(Debug, Default)]
struct Human {
    last_seen: BTreeMap<PlayerId, Vec3>,
    cue: Option<u64>,
    due: Option<(u64, Option<SuggestionId>)>,
    acted: bool,
    warned: bool,
    signals: Signals,
}

#[derive(Debug, Default)]
struct Greeter {
    greeted: BTreeSet<PlayerId>,
    avoided: BTreeSet<PlayerId>,
    target: Option<PlayerId>,
}

impl Bot {
    pub fn new(member: &CastMember, is_subject: bool, rng: &mut ChaCha8Rng) -> Self {
        let state = match member.role {
            Role::HumanProxy => RoleState::Human(Human::default()),
            Role::Tagger => RoleState::Tagger {
                touched: BTreeSet::new(),
            },
            Role::Wanderer => RoleState::Wanderer,
            Role::Greeter => RoleState::Greeter(Greeter::default()),
            Role::Spammer => RoleState::Spammer { next: 0 },
        };
        Bot {
            name: member.name.clone(),
            role: member.role,
            is_subject,
            params: member.params.clone(),
            heading: rng.gen_range(0.0..TAU),
            handled: BTreeSet::new(),
            steer: Steer::default(),
            state,
        }
    }

    /// Signals perceived so far, for human proxies.
    pub fn signals(&self) -> Option<Signals> {
        match &self.state {
            RoleState::Human(h) => Some(h.signals),
            _ => None,
        }
    }

    /// One decision from one observation.
    pub fn step(&mut self, obs: Observation<'_>, ctx: &Context, rng: &mut ChaCha8Rng) -> Decision {
        let mut d = Decision::default();
        let Some(me) = obs.view.me.as_ref() else {
            return d;
        };
        let tick = obs.view.tick;
        let here = me.pose.position;
        let step_m = self.params.speed_mps * ctx.dt();
        self.steer.observe(here);
        for r in obs.replies {
            if let ServerMessage::SuggestionResult(outcome) = r {
                d.notes.push(Note::Outcome { outcome: *outcome });
            }
        }
        match &mut self.state {
            RoleState::Human(h) => {
                h.perceive(obs, tick, &mut d);
                let subject_path = self.is_subject.then_some(ctx.access_path);
                let approaching = h.approachers(obs.view, here, self.params.notice_m);
                if let Some(path) = subject_path {
                    if h.cue.is_none() {
                        if let Some(&p) = approaching.first() {
                            h.cue = Some(tick);
                            d.notes.push(Note::Noticed { player: p });
                            if path != AccessPath::SuggestionAssist {
                                let due = tick + reaction_ticks(ctx, path, rng);
                                h.due = Some((due, None));
                                d.notes.push(Note::Reacting {
                                    path,
                                    due_tick: due,
                                });
                            }
                        }
                    }
                    if path == AccessPath::SuggestionAssist && h.due.is_none() && !h.acted {
                        let offer = obs.view.suggestions.iter().find(|s| {
                            s.state == SuggestionState::Pending
                                && s.feature == Feature::PersonalBubble
                                && !self.handled.contains(&s.id)
                        });
                        if let Some(s) = offer {
                            let due = tick + reaction_ticks(ctx, path, rng);
                            h.due = Some((due, Some(s.id)));
                            self.handled.insert(s.id);
                            d.notes.push(Note::Reacting {
                                path,
                                due_tick: due,
                            });
                        }
                    }
                    if let Some((due, offer)) = h.due {
                        if tick >= due && !h.acted {
                            h.acted = true;
                            if !me.bubble.enabled {
                                d.notes.push(Note::Activating { path });
                                d.messages.push(match (path, offer) {
                                    (AccessPath::Hotkey, _) => {
                                        ClientMessage::ActivateDefaultBubble {}
                                    }
                                    (AccessPath::SuggestionAssist, Some(id)) => {
                                        ClientMessage::Respond {
                                            id,
                                            response: Response::Accept,
                                        }
                                    }
                                    _ => ClientMessage::SetBubble {
                                        enabled: true,
                                        boundary: me.bubble.boundary,
                                        radius_al: me.bubble.radius_al,
                                        alerts_enabled: None,
                                    },
                                });
                            }
                        }
                    }
                }
                if let (Some(name), false) = (&self.params.assist, h.warned) {
                    if let Some(friend) = by_name(obs.view, name) {
                        let threat = obs.view.players.values().find(|q| {
                            q.player_id != friend.player_id
                                && h.closing_on(q, friend.pose.position, self.params.notice_m)
                        });
                        if let (Some(q), false) = (threat, friend.bubble.enabled) {
                            h.warned = true;
                            d.notes.push(Note::Warned {
                                player: friend.player_id,
                                about: q.player_id,
                            });
                            d.messages.push(ClientMessage::SendSuggestion {
                                receiver: friend.player_id,
                                feature: Feature::PersonalBubble,
                            });
                        }
                    }
                }
                h.remember(obs.view);
            }
            RoleState::Tagger { touched } => {
                let target = nearest(obs.view, here, |p| {
                    !p.bubble.enabled && !touched.contains(&p.player_id)
                });
                match target {
                    Some(p) if here.distance(p.pose.position) <= ctx.tag_range_m => {
                        touched.insert(p.player_id);
                        d.notes.push(Note::Touched {
                            player: p.player_id,
                        });
                    }
                    Some(p) => {
                        d.focus = Some(p.player_id);
                        d.messages
                            .push(self.steer.toward(obs.view, here, p.pose.position, step_m));
                    }
                    None => d
                        .messages
                        .extend(self.wander(obs.view, here, tick, step_m, rng)),
                }
            }
            RoleState::Wanderer => d
                .messages
                .extend(self.wander(obs.view, here, tick, step_m, rng)),
            RoleState::Greeter(g) => {
                for e in obs.events {
                    if let EffectKind::BubbleFlash { owner, .. } = e.kind {
                        if g.target == Some(owner) && g.avoided.insert(owner) {
                            g.target = None;
                            d.notes.push(Note::Avoiding { player: owner });
                        }
                    }
                }
                let keep = self.params.keep_m;
                let crowding = nearest(obs.view, here, |p| {
                    p.badges.social == SocialEnergy::Individual
                        && here.distance(p.pose.position) < keep
                });
                if let Some(p) = crowding {
                    d.focus = Some(p.player_id);
                    let away = here + (here - p.pose.position);
                    d.messages
                        .push(self.steer.toward(obs.view, here, away, step_m));
                } else {
                    let target = nearest(obs.view, here, |p| {
                        p.badges.social != SocialEnergy::Individual
                            && !g.greeted.contains(&p.player_id)
                            && !g.avoided.contains(&p.player_id)
                    });
                    g.target = target.map(|p| p.player_id);
                    match target {
                        Some(p) => {
                            let gap = here.distance(p.pose.position);
                            if gap <= self.params.greet_m {
                                g.greeted.insert(p.player_id);
                                d.notes.push(Note::Greeted {
                                    player: p.player_id,
                                });
                            } else {
                                d.focus = Some(p.player_id);
                                let stop = 0.8 * self.params.greet_m;
                                d.messages.push(self.steer.toward(
                                    obs.view,
                                    here,
                                    p.pose.position,
                                    step_m.min(gap - stop),
                                ));
                            }
                        }
                        None => d
                            .messages
                            .extend(self.wander(obs.view, here, tick, step_m, rng)),
                    }
                }
            }
            RoleState::Spammer { next } => {
                let cooling = me.cooldown_until.is_some_and(|u| u > tick);
                if tick >= self.params.start_tick && !cooling {
                    let receiver = match &self.params.target {
                        Some(name) => by_name(obs.view, name).map(|p| p.player_id),
                        None => {
                            let ids: Vec<PlayerId> = obs.view.players.keys().copied().collect();
                            (!ids.is_empty()).then(|| {
                                *next += 1;
                                ids[(*next - 1) % ids.len()]
                            })
                        }
                    };
                    if let Some(receiver) = receiver {
                        d.messages.push(ClientMessage::SendSuggestion {
                            receiver,
                            feature: Feature::PersonalBubble,
                        });
                    }
                }
            }
        }
        if !(self.is_subject && self.role == Role::HumanProxy) {
            d.messages
                .extend(self.answer_suggestions(obs.view, &mut d.notes));
        }
        d
    }

    fn answer_suggestions(
        &mut self,
        view: &ClientView,
        notes: &mut Vec<Note>,
    ) -> Vec<ClientMessage> {
        let response = match self.params.on_suggestion {
            OnSuggestion::Ignore => return Vec::new(),
            OnSuggestion::Decline => Response::Decline,
            OnSuggestion::Accept => Response::Accept,
            OnSuggestion::BlockSender => Response::BlockSender,
            OnSuggestion::BlockAll => Response::BlockAll,
        };
        let mut out = Vec::new();
        for s in &view.suggestions {
            if s.state == SuggestionState::Pending && self.handled.insert(s.id) {
                notes.push(Note::Responded { id: s.id, response });
                out.push(ClientMessage::Respond { id: s.id, response });
            }
        }
        out
    }

    /// Random walk inside the arena.
    fn wander(
        &mut self,
        view: &ClientView,
        here: Vec3,
        tick: u64,
        step_m: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<ClientMessage> {
        if tick.is_multiple_of(self.params.turn_every) {
            self.heading = rng.gen_range(0.0..TAU);
        }
        if here.norm() > self.params.arena_m {
            self.heading = (-here.y).atan2(-here.x);
        }
        if step_m <= 0.0 {
            return None;
        }
        let (s, c) = self.heading.sin_cos();
        let to = Vec3::planar(here.x + c * step_m, here.y + s * step_m);
        Some(self.steer.toward(view, here, to, step_m))
    }
}

impl Human {
    fn perceive(&mut self, obs: Observation<'_>, tick: u64, d: &mut Decision) {
        if self.signals.saw_badge.is_none() {
            if let Some(p) = obs.view.players.values().find(|p| wears_badge(p)) {
                self.signals.saw_badge = Some(tick);
                d.notes.push(Note::SawBadge {
                    player: p.player_id,
                });
            }
        }
        if self.signals.saw_flash.is_none() {
            let flashed = obs
                .events
                .iter()
                .find_map(|e| match e.kind {
                    EffectKind::BubbleFlash { owner, .. }
                        if obs.view.players.contains_key(&owner) =>
                    {
                        Some(owner)
                    }
                    _ => None,
                })
                .or_else(|| {
                    obs.view
                        .players
                        .values()
                        .find(|p| p.bubble.flashing)
                        .map(|p| p.player_id)
                });
            if let Some(p) = flashed {
                self.signals.saw_flash = Some(tick);
                d.notes.push(Note::SawFlash { player: p });
            }
        }
    }

    /// Visible players within `notice_m` that closed in since the last
    /// observation, nearest first.
    fn approachers(&self, view: &ClientView, here: Vec3, notice_m: f64) -> Vec<PlayerId> {
        let mut v: Vec<(f64, PlayerId)> = view
            .players
            .values()
            .filter(|p| self.closing_on(p, here, notice_m))
            .map(|p| (here.distance(p.pose.position), p.player_id))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().map(|(_, id)| id).collect()
    }

    fn closing_on(&self, p: &PublicPlayer, point: Vec3, notice_m: f64) -> bool {
        let now = p.pose.position.distance(point);
        let before = self.last_seen.get(&p.player_id).map(|q| q.distance(point));
        now <= notice_m && before.is_some_and(|b| b - now > 1e-3)
    }

    fn remember(&mut self, view: &ClientView) {
        self.last_seen = view
            .players
            .values()
            .map(|p| (p.player_id, p.pose.position))
            .collect();
    }
}

fn wears_badge(p: &PublicPlayer) -> bool {
    p.badges.interaction != Interaction::Open
        || p.badges.sound != Sound::None
        || p.badges.social != SocialEnergy::None
}

fn by_name<'a>(view: &'a ClientView, name: &str) -> Option<&'a PublicPlayer> {
    view.players.values().find(|p| p.name == name)
}

fn nearest(
    view: &ClientView,
    here: Vec3,
    keep: impl Fn(&PublicPlayer) -> bool,
) -> Option<&PublicPlayer> {
    view.players.values().filter(|p| keep(p)).min_by(|a, b| {
        here.distance(a.pose.position)
            .total_cmp(&here.distance(b.pose.position))
            .then(a.player_id.cmp(&b.player_id))
    })
}

/// A move of at most `step_m` from `from` toward `to`.
fn move_toward(from: Vec3, to: Vec3, step_m: f64, default_facing: f64) -> ClientMessage {
    let delta = to - from;
    let dist = delta.norm();
    let (x, y, facing) = if dist <= 1e-12 || step_m <= 0.0 {
        (from.x, from.y, default_facing)
    } else {
        let k = step_m.min(dist) / dist;
        (
            from.x + delta.x * k,
            from.y + delta.y * k,
            delta.y.atan2(delta.x),
        )
    };
    ClientMessage::Move { x, y, facing }
}

/// Reaction delay for `path`, with seeded uniform jitter.
fn reaction_ticks(ctx: &Context, path: AccessPath, rng: &mut ChaCha8Rng) -> u64 {
    let j = ctx.latency.jitter;
    let factor = if j > 0.0 {
        1.0 + rng.gen_range(-j..=j)
    } else {
        1.0
    };
    (ctx.latency.base_s(path) * factor * f64::from(ctx.tick_hz)).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn move_toward_caps_step() {
        let ClientMessage::Move { x, y, .. } =
            move_toward(Vec3::ZERO, Vec3::planar(3.0, 4.0), 0.5, 0.0)
        else {
            unreachable!()
        };
        assert!((x - 0.3).abs() < 1e-12 && (y - 0.4).abs() < 1e-12);
        let ClientMessage::Move { x, y, .. } =
            move_toward(Vec3::ZERO, Vec3::planar(0.1, 0.0), 0.5, 0.0)
        else {
            unreachable!()
        };
        assert_eq!((x, y), (0.1, 0.0));
    }

    #[test]
    fn reaction_jitter_stays_in_band() {
        use rand::SeedableRng;
        let ctx = Context {
            tick_hz: 20,
            access_path: AccessPath::Menu,
            latency: LatencyModel::default(),
            tag_range_m: 0.4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = reaction_ticks(&ctx, AccessPath::Menu, &mut rng);
            assert!((40..=60).contains(&t), "{t}");
            let t = reaction_ticks(&ctx, AccessPath::Hotkey, &mut rng);
            assert!((6..=10).contains(&t), "{t}");
        }
    }
}
