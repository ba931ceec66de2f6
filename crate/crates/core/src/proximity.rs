//! Per-tick geometry: hard-boundary clamping, soft-boundary visibility with
//! hysteresis, violation flashes and approach alerts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::Constants;
use crate::safety::{Boundary, BubbleConfig, SocialGraph};
use crate::spatial::SpatialHash;
use crate::types::{wrap_signed, PlayerId, PlayerPair, Pose, Vec3};
use crate::world::{Effect, EffectKind, PlayerState, WorldState};

/// Slack for "did not move further than the cap" and "on the plane" checks.
const INTENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveIntent {
    pub player: PlayerId,
    pub target: Pose,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    UnknownPlayer,
    Duplicate,
    NonFinite,
    OffPlane,
    SpeedCap,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub effects: Vec<Effect>,
    pub dropped: Vec<(PlayerId, DropReason)>,
    /// Movers stopped by a hard boundary this tick, with the players that
    /// stopped them.
    pub contacts: Vec<Contact>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contact {
    pub mover: PlayerId,
    pub blockers: Vec<PlayerId>,
}

/// Pairs currently invisible to each other. Symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisibilityRelation {
    pub hidden_pairs: BTreeSet<PlayerPair>,
}

impl VisibilityRelation {
    pub fn is_hidden(&self, a: PlayerId, b: PlayerId) -> bool {
        a != b && self.hidden_pairs.contains(&PlayerPair::new(a, b))
    }

    pub fn hidden_from(&self, p: PlayerId) -> impl Iterator<Item = PlayerId> + '_ {
        self.hidden_pairs
            .iter()
            .filter_map(move |pair| pair.other(p))
    }

    pub(crate) fn forget(&mut self, p: PlayerId) {
        self.hidden_pairs.retain(|pair| !pair.contains(p));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeState {
    /// Inside the alert radius but not yet reported (pair currently hidden).
    Armed,
    Fired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertEpisode {
    pub state: EpisodeState,
    pub entered_tick: u64,
}

/// Open alert episodes keyed by target, then approacher.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlertBook {
    episodes: BTreeMap<PlayerId, BTreeMap<PlayerId, AlertEpisode>>,
}

impl AlertBook {
    pub fn get(&self, target: PlayerId, approacher: PlayerId) -> Option<&AlertEpisode> {
        self.episodes.get(&target)?.get(&approacher)
    }

    pub fn len(&self) -> usize {
        self.episodes.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn forget(&mut self, p: PlayerId) {
        self.episodes.remove(&p);
        for m in self.episodes.values_mut() {
            m.remove(&p);
        }
        self.episodes.retain(|_, m| !m.is_empty());
    }

    /// Drops episodes that are no longer eligible after a settings change.
    pub(crate) fn prune(
        &mut self,
        players: &BTreeMap<PlayerId, PlayerState>,
        social: &SocialGraph,
    ) {
        self.episodes.retain(|target, inner| {
            let Some(t) = players.get(target) else {
                return false;
            };
            if !t.bubble.alerts_operative() {
                return false;
            }
            inner.retain(|a, _| alert_eligible(&t.bubble, *target, *a, social));
            !inner.is_empty()
        });
    }
}

fn alert_eligible(
    target_bubble: &BubbleConfig,
    target: PlayerId,
    approacher: PlayerId,
    social: &SocialGraph,
) -> bool {
    target != approacher
        && !target_bubble.alert_muted.contains(&approacher)
        && !target_bubble.exempt.contains(&approacher)
        && !social.are_friends(target, approacher)
}

/// Minimal separation a pair must keep, from whichever enabled hard bubbles
/// apply between them (the larger radius wins).
pub fn required_separation(
    a: PlayerId,
    a_bubble: &BubbleConfig,
    b: PlayerId,
    b_bubble: &BubbleConfig,
    c: &Constants,
) -> Option<f64> {
    let ra = a_bubble.applies_to(Boundary::Hard, b, c);
    let rb = b_bubble.applies_to(Boundary::Hard, a, c);
    match (ra, rb) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    }
}

/// Largest applicable soft radius between a pair, in meters.
pub fn soft_radius(
    a: PlayerId,
    a_bubble: &BubbleConfig,
    b: PlayerId,
    b_bubble: &BubbleConfig,
    c: &Constants,
) -> Option<f64> {
    let ra = a_bubble.applies_to(Boundary::Soft, b, c);
    let rb = b_bubble.applies_to(Boundary::Soft, a, c);
    match (ra, rb) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    }
}

/// Fraction `t ∈ [0, 1]` of the segment `start → start + delta` that can be
/// travelled before coming closer than `sep` to `obstacle`.
///
/// A mover already at or inside the separation may only move in directions
/// that do not decrease its distance; distance along a segment is convex,
/// so a non-decreasing start never turns back inward.
pub fn first_contact(start: Vec3, delta: Vec3, obstacle: Vec3, sep: f64) -> f64 {
    let a = delta.norm_sq();
    if a == 0.0 {
        return 1.0;
    }
    let w = start - obstacle;
    let b = 2.0 * w.dot(delta);
    let c = w.norm_sq() - sep * sep;
    if c <= 0.0 {
        return if b < 0.0 { 0.0 } else { 1.0 };
    }
    if b >= 0.0 {
        return 1.0;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return 1.0;
    }
    // stable form of (-b - sqrt(disc)) / 2a for b < 0
    let t = 2.0 * c / (-b + disc.sqrt());
    t.clamp(0.0, 1.0)
}

/// One hard-boundary participant.
#[derive(Debug, Clone, Copy)]
pub struct Body<'a> {
    pub position: Vec3,
    pub bubble: &'a BubbleConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub positions: BTreeMap<PlayerId, Vec3>,
    pub contacts: Vec<Contact>,
}

/// Moves each intent's player toward its target, stopping at the first point
/// where a non-exempt hard constraint would be violated. Movers are processed
/// in ascending id order against the already-resolved positions of the
/// others. Players without an intent stay put.
pub fn resolve_hard(
    bodies: &BTreeMap<PlayerId, Body<'_>>,
    intents: &BTreeMap<PlayerId, Vec3>,
    c: &Constants,
) -> Resolution {
    let mut positions: BTreeMap<PlayerId, Vec3> =
        bodies.iter().map(|(id, b)| (*id, b.position)).collect();
    let mut contacts = Vec::new();

    let max_sep = bodies
        .values()
        .filter_map(|b| b.bubble.hard_radius_m(c))
        .fold(0.0_f64, f64::max);
    let max_step = intents
        .iter()
        .filter_map(|(id, t)| bodies.get(id).map(|b| b.position.distance(*t)))
        .fold(0.0_f64, f64::max);
    if max_sep == 0.0 {
        for (id, t) in intents {
            if bodies.contains_key(id) {
                positions.insert(*id, *t);
            }
        }
        return Resolution {
            positions,
            contacts,
        };
    }

    let grid = SpatialHash::build(
        2.0 * c.max_radius_m().max(max_sep),
        bodies.iter().map(|(id, b)| (*id, &b.position)),
    );
    // an obstacle may itself have moved up to max_step earlier this pass
    let reach = max_sep + 2.0 * max_step;

    for (&mover, &target) in intents {
        let Some(body) = bodies.get(&mover) else {
            continue;
        };
        let start = positions[&mover];
        let delta = target - start;
        let mut t_hit = 1.0;
        let mut blockers: Vec<PlayerId> = Vec::new();
        for other in grid.query(body.position, reach) {
            if other == mover {
                continue;
            }
            let Some(sep) =
                required_separation(mover, body.bubble, other, bodies[&other].bubble, c)
            else {
                continue;
            };
            let t = first_contact(start, delta, positions[&other], sep);
            if t < t_hit {
                t_hit = t;
                blockers.clear();
                blockers.push(other);
            } else if t == t_hit && t < 1.0 {
                blockers.push(other);
            }
        }
        let end = if t_hit >= 1.0 {
            target
        } else {
            start + delta * t_hit
        };
        positions.insert(mover, end);
        if t_hit < 1.0 {
            contacts.push(Contact { mover, blockers });
        }
    }
    Resolution {
        positions,
        contacts,
    }
}

/// Recomputes the hidden-pair set from positions, keeping previously hidden
/// pairs until they pass the hysteresis exit distance.
pub fn compute_hidden(
    players: &BTreeMap<PlayerId, PlayerState>,
    prev: &BTreeSet<PlayerPair>,
    c: &Constants,
) -> BTreeSet<PlayerPair> {
    let max_soft = players
        .values()
        .filter(|p| p.bubble.enabled && p.bubble.boundary == Boundary::Soft)
        .map(|p| p.bubble.radius_al * c.arm_length_m)
        .fold(0.0_f64, f64::max);
    let mut hidden = BTreeSet::new();
    if max_soft == 0.0 {
        return hidden;
    }
    let reach = max_soft * c.soft_exit_factor;
    let grid = SpatialHash::build(
        2.0 * c.max_radius_m().max(max_soft),
        players.iter().map(|(id, p)| (*id, &p.pose.position)),
    );
    for (&a, pa) in players {
        if !(pa.bubble.enabled && pa.bubble.boundary == Boundary::Soft) {
            continue;
        }
        for b in grid.query(pa.pose.position, reach) {
            if b == a {
                continue;
            }
            let pair = PlayerPair::new(a, b);
            if hidden.contains(&pair) {
                continue;
            }
            let pb = &players[&b];
            let Some(r) = soft_radius(a, &pa.bubble, b, &pb.bubble, c) else {
                continue;
            };
            let d = pa.pose.position.distance(pb.pose.position);
            let stays = if prev.contains(&pair) {
                d <= c.soft_exit_factor * r
            } else {
                d < r
            };
            if stays {
                hidden.insert(pair);
            }
        }
    }
    hidden
}

fn visibility_effects(prev: &BTreeSet<PlayerPair>, next: &BTreeSet<PlayerPair>) -> Vec<EffectKind> {
    // both sets are sorted; merge in pair order
    let mut out: Vec<(PlayerPair, bool)> = prev
        .difference(next)
        .map(|p| (*p, true))
        .chain(next.difference(prev).map(|p| (*p, false)))
        .collect();
    out.sort_by_key(|(p, _)| *p);
    out.into_iter()
        .map(|(pair, visible)| EffectKind::VisibilityChanged { pair, visible })
        .collect()
}

impl WorldState {
    /// Recomputes visibility after a settings change, outside the tick.
    pub fn refresh_visibility(&mut self) -> Vec<Effect> {
        let next = compute_hidden(
            &self.players,
            &self.visibility.hidden_pairs,
            &self.constants,
        );
        let kinds = visibility_effects(&self.visibility.hidden_pairs, &next);
        self.visibility.hidden_pairs = next;
        kinds.into_iter().map(|k| self.effect(k)).collect()
    }

    /// Movement, visibility, flashes and alerts for one tick. Does not expire
    /// suggestions; see [`WorldState::advance`].
    pub fn tick_proximity(&mut self, intents: &[MoveIntent]) -> TickReport {
        self.tick += 1;
        let now = self.tick;
        let c = self.constants.clone();
        let mut report = TickReport::default();

        let mut accepted: BTreeMap<PlayerId, Pose> = BTreeMap::new();
        for intent in intents {
            let reason = match self.players.get(&intent.player) {
                None => Some(DropReason::UnknownPlayer),
                Some(_) if accepted.contains_key(&intent.player) => Some(DropReason::Duplicate),
                Some(_)
                    if !intent.target.position.is_finite() || !intent.target.facing.is_finite() =>
                {
                    Some(DropReason::NonFinite)
                }
                Some(_) if intent.target.position.z.abs() > INTENT_SLACK => {
                    Some(DropReason::OffPlane)
                }
                Some(p)
                    if p.pose.position.distance(intent.target.position)
                        > c.max_step_m() + INTENT_SLACK =>
                {
                    Some(DropReason::SpeedCap)
                }
                Some(_) => None,
            };
            match reason {
                Some(r) => report.dropped.push((intent.player, r)),
                None => {
                    accepted.insert(intent.player, intent.target);
                }
            }
        }
        if !report.dropped.is_empty() {
            self.dropped_intents += report.dropped.len() as u64;
            tracing::debug!(
                tick = now,
                dropped = report.dropped.len(),
                "dropped move intents"
            );
        }

        // hard boundaries
        let targets: BTreeMap<PlayerId, Vec3> =
            accepted.iter().map(|(id, p)| (*id, p.position)).collect();
        let resolution = {
            let bodies: BTreeMap<PlayerId, Body<'_>> = self
                .players
                .iter()
                .map(|(id, p)| {
                    (
                        *id,
                        Body {
                            position: p.pose.position,
                            bubble: &p.bubble,
                        },
                    )
                })
                .collect();
            resolve_hard(&bodies, &targets, &c)
        };
        for (id, pose) in &accepted {
            let p = self.players.get_mut(id).expect("validated");
            p.pose.position = resolution.positions[id];
            p.pose.facing = crate::types::normalize_yaw(pose.facing);
        }

        // violation flashes: an owner flashes when a mover's intent would
        // have ended inside the owner's own applicable hard radius
        let mut flash_owners = BTreeSet::new();
        for contact in &resolution.contacts {
            let target = targets[&contact.mover];
            for &other in &contact.blockers {
                let mover_state = &self.players[&contact.mover];
                let other_state = &self.players[&other];
                if let Some(r) = other_state
                    .bubble
                    .applies_to(Boundary::Hard, contact.mover, &c)
                {
                    if target.distance(other_state.pose.position) < r {
                        flash_owners.insert(other);
                    }
                }
                if let Some(r) = mover_state.bubble.applies_to(Boundary::Hard, other, &c) {
                    if target.distance(other_state.pose.position) < r {
                        flash_owners.insert(contact.mover);
                    }
                }
            }
        }
        report.contacts = resolution.contacts;

        // soft boundaries
        let prev = std::mem::take(&mut self.visibility.hidden_pairs);
        let next = compute_hidden(&self.players, &prev, &c);
        for pair in next.difference(&prev) {
            let (a, b) = (pair.low(), pair.high());
            let (pa, pb) = (&self.players[&a], &self.players[&b]);
            let d = pa.pose.position.distance(pb.pose.position);
            if pa
                .bubble
                .applies_to(Boundary::Soft, b, &c)
                .is_some_and(|r| d < r)
            {
                flash_owners.insert(a);
            }
            if pb
                .bubble
                .applies_to(Boundary::Soft, a, &c)
                .is_some_and(|r| d < r)
            {
                flash_owners.insert(b);
            }
        }
        let vis_kinds = visibility_effects(&prev, &next);
        self.visibility.hidden_pairs = next;

        let flash_ticks = c.flash_ticks();
        for owner in flash_owners {
            let p = self.players.get_mut(&owner).expect("present");
            if !p.is_flashing(now) {
                report.effects.push(Effect {
                    tick: now,
                    kind: EffectKind::BubbleFlash {
                        owner,
                        duration_s: c.flash_duration_s,
                    },
                });
            }
            p.flash_until = Some(now + flash_ticks);
        }
        for p in self.players.values_mut() {
            if p.flash_until.is_some_and(|t| t <= now) {
                p.flash_until = None;
            }
        }
        report
            .effects
            .extend(vis_kinds.into_iter().map(|kind| Effect { tick: now, kind }));

        let alert_effects = self.update_alerts();
        report.effects.extend(alert_effects);
        report
    }

    /// Advances alert episodes. A target is any player whose bubble is off
    /// with alerts on; an approacher inside the target's configured radius
    /// fires once per contiguous incursion.
    pub fn update_alerts(&mut self) -> Vec<Effect> {
        let c = &self.constants;
        let now = self.tick;
        let max_alert = self
            .players
            .values()
            .filter(|p| p.bubble.alerts_operative())
            .map(|p| p.bubble.radius_al * c.arm_length_m)
            .fold(0.0_f64, f64::max);
        let mut book = AlertBook::default();
        let mut effects = Vec::new();
        if max_alert > 0.0 {
            let grid = SpatialHash::build(
                2.0 * c.max_radius_m().max(max_alert),
                self.players.iter().map(|(id, p)| (*id, &p.pose.position)),
            );
            for (&target, t) in &self.players {
                if !t.bubble.alerts_operative() {
                    continue;
                }
                let radius = t.bubble.radius_al * c.arm_length_m;
                for approacher in grid.query(t.pose.position, radius) {
                    if !alert_eligible(&t.bubble, target, approacher, &self.social) {
                        continue;
                    }
                    let a = &self.players[&approacher];
                    let offset = a.pose.position - t.pose.position;
                    if offset.norm() >= radius {
                        continue;
                    }
                    let prev = self.alerts.get(target, approacher).copied();
                    let hidden = self.visibility.is_hidden(target, approacher)
                        || self.social.is_blocked_pair(target, approacher);
                    let state = match prev.map(|e| e.state) {
                        Some(EpisodeState::Fired) => EpisodeState::Fired,
                        _ if hidden => EpisodeState::Armed,
                        _ => {
                            let bearing = wrap_signed(offset.y.atan2(offset.x) - t.pose.facing);
                            effects.push(Effect {
                                tick: now,
                                kind: EffectKind::AlertRaised {
                                    target,
                                    approacher,
                                    bearing_rad: bearing,
                                },
                            });
                            EpisodeState::Fired
                        }
                    };
                    book.episodes.entry(target).or_default().insert(
                        approacher,
                        AlertEpisode {
                            state,
                            entered_tick: prev.map_or(now, |e| e.entered_tick),
                        },
                    );
                }
            }
        }
        self.alerts = book;
        effects
    }
}
