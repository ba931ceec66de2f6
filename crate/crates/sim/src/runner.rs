//! Runs one scenario against the in-process server.

use std::collections::BTreeMap;

use puffer_core::{
    proximity::required_separation, Constants, Effect, EffectKind, PlayerId, Pose, Response,
    WorldState,
};
use puffer_server::{ClientMessage, ClientView, ConnId, LocalServer, ServerMessage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bots::{Bot, Context, Note, Observation, Signals};
use crate::scenario::{AccessPath, InvalidScript, Role, ScenarioScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SuggestionCounts {
    pub sent: u32,
    pub delivered: u32,
    pub accepted: u32,
    pub blocked: u32,
    pub cooldowns: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run: u32,
    pub seed: u64,
    pub access_path: AccessPath,
    pub badges: bool,
    pub ticks: u64,
    pub tagged_before_activation: bool,
    pub time_to_activation_s: Option<f64>,
    pub tags: u32,
    pub alerts_raised: u32,
    pub suggestions: SuggestionCounts,
    /// Hard-boundary separation violations, summed over ticks.
    pub violations: u32,
    /// Bot decisions that referred to a player the bot could not see.
    pub hygiene_violations: u32,
    pub greetings: u32,
    /// Signals perceived by each human proxy other than the subject.
    pub bystanders: BTreeMap<String, Signals>,
}

/// Ground-truth happenings recorded by the harness.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Tagged {
        tagger: PlayerId,
        player: PlayerId,
    },
    Activated {
        player: PlayerId,
    },
    SeparationViolation {
        a: PlayerId,
        b: PlayerId,
        distance_m: f64,
    },
    HygieneViolation {
        bot: PlayerId,
        player: PlayerId,
    },
}

#[derive(Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum Entry<'a> {
    Engine {
        effect: &'a Effect,
    },
    Bot {
        bot: &'a str,
        #[serde(flatten)]
        note: &'a Note,
    },
    Sim(&'a SimEvent),
}

#[derive(Serialize)]
struct LogLine<'a> {
    run: u32,
    tick: u64,
    #[serde(flatten)]
    entry: Entry<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// JSON lines, one per logged event.
    pub log: Vec<String>,
}

struct Actor {
    bot: Bot,
    conn: ConnId,
    id: PlayerId,
    view: ClientView,
    rng: ChaCha8Rng,
}

impl Actor {
    fn absorb(&mut self, frames: Vec<String>) {
        for f in frames {
            self.view.apply_frame(&f).expect("server frames decode");
        }
    }
}

/// Runs `script` with the default constants.
pub fn run_scenario(script: &ScenarioScript, run: u32) -> Result<RunOutput, InvalidScript> {
    run_with(script, &Constants::default(), run)
}

pub fn run_with(
    script: &ScenarioScript,
    c: &Constants,
    run: u32,
) -> Result<RunOutput, InvalidScript> {
    run_probed(script, c, run, &mut |_| {})
}

/// Like [`run_with`], calling `probe` with the authoritative world after
/// every tick.
pub fn run_probed(
    script: &ScenarioScript,
    c: &Constants,
    run: u32,
    probe: &mut dyn FnMut(&WorldState),
) -> Result<RunOutput, InvalidScript> {
    script.validate(c)?;
    let mut server = LocalServer::new(c.clone(), vec![script.room.clone()])
        .map_err(|e| InvalidScript::Setting(e.to_string()))?;
    let room = script.room_id().clone();
    let ctx = Context {
        tick_hz: c.tick_hz,
        access_path: script.access_path,
        latency: script.latency,
        tag_range_m: script.tag_range_m,
    };

    let mut actors = Vec::with_capacity(script.cast.len());
    for (i, m) in script.cast.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
        rng.set_stream(i as u64);
        let is_subject = script.subject.as_deref() == Some(m.name.as_str());
        let bot = Bot::new(m, is_subject, &mut rng);
        let conn = server.connect();
        let mut view = ClientView::new();
        let hello = view.encode(&ClientMessage::Hello {
            name: m.name.clone(),
        });
        let mut frames = server.receive(conn, &hello);
        frames.extend(server.join_at(
            conn,
            &room,
            Pose::new(
                puffer_core::Vec3::planar(m.position[0], m.position[1]),
                m.facing,
            ),
        ));
        let mut setup = Vec::new();
        if let Some(b) = &m.bubble {
            setup.push(ClientMessage::SetBubble {
                enabled: b.enabled,
                boundary: b.boundary,
                radius_al: b.radius_al,
                alerts_enabled: Some(b.alerts_enabled),
            });
        }
        if !script.strip_badges {
            setup.extend(m.badges.iter().map(|v| ClientMessage::SetBadge(*v)));
        }
        for msg in setup {
            let text = view.encode(&msg);
            frames.extend(server.receive(conn, &text));
        }
        for f in &frames {
            view.apply_frame(f).expect("server frames decode");
        }
        let failed = view.inbox.iter().find_map(|o| match &o.msg {
            ServerMessage::Error { code, message } => Some(format!("{code}: {message}")),
            _ => None,
        });
        if let Some(reason) = failed {
            return Err(InvalidScript::Member {
                name: m.name.clone(),
                reason,
            });
        }
        view.inbox.clear();
        let id = view.player_id.expect("welcomed");
        actors.push(Actor {
            bot,
            conn,
            id,
            view,
            rng,
        });
    }

    let subject = actors.iter().find(|a| a.bot.is_subject).map(|a| a.id);
    let taggers: Vec<PlayerId> = actors
        .iter()
        .filter(|a| a.bot.role == Role::Tagger)
        .map(|a| a.id)
        .collect();
    let roles: BTreeMap<PlayerId, Role> = actors.iter().map(|a| (a.id, a.bot.role)).collect();

    let mut m = RunMetrics {
        run,
        seed: script.seed,
        access_path: script.access_path,
        badges: !script.strip_badges,
        ticks: script.duration_ticks,
        tagged_before_activation: false,
        time_to_activation_s: None,
        tags: 0,
        alerts_raised: 0,
        suggestions: SuggestionCounts::default(),
        violations: 0,
        hygiene_violations: 0,
        greetings: 0,
        bystanders: BTreeMap::new(),
    };
    let mut log = Vec::new();
    let mut emit = |tick: u64, entry: Entry<'_>| {
        log.push(
            serde_json::to_string(&LogLine { run, tick, entry }).expect("log lines serialize"),
        );
    };
    let mut subject_was_on =
        subject.is_some_and(|s| world(&server, &room).players[&s].bubble.enabled);
    let mut tagged: BTreeMap<PlayerId, u64> = BTreeMap::new();
    let mut activated_at: Option<u64> = None;
    let mut last_focus: BTreeMap<PlayerId, Option<PlayerId>> = BTreeMap::new();
    let mut separation = SeparationAudit::default();
    separation.advance(world(&server, &room));

    for _ in 0..script.duration_ticks {
        let now = world(&server, &room).tick;

        // every bot decides from the same round of observations
        let mut decisions = Vec::with_capacity(actors.len());
        for a in actors.iter_mut() {
            let replies: Vec<ServerMessage> = a.view.inbox.drain(..).map(|o| o.msg).collect();
            let events = a.view.drain_events();
            let obs = Observation {
                view: &a.view,
                events: &events,
                replies: &replies,
            };
            decisions.push(a.bot.step(obs, &ctx, &mut a.rng));
        }

        let w = world(&server, &room);
        for (a, d) in actors.iter().zip(&decisions) {
            let mut named: Vec<PlayerId> = d.notes.iter().flat_map(Note::players).collect();
            named.extend(d.focus);
            for p in named {
                if !w.can_see(a.id, p) {
                    m.hygiene_violations += 1;
                    emit(
                        now,
                        Entry::Sim(&SimEvent::HygieneViolation {
                            bot: a.id,
                            player: p,
                        }),
                    );
                }
            }
            for note in &d.notes {
                match note {
                    Note::Greeted { .. } => m.greetings += 1,
                    Note::Responded {
                        response: Response::BlockSender | Response::BlockAll,
                        ..
                    } => m.suggestions.blocked += 1,
                    _ => {}
                }
                emit(
                    now,
                    Entry::Bot {
                        bot: &a.bot.name,
                        note,
                    },
                );
            }
            if a.bot.role == Role::Tagger && last_focus.insert(a.id, d.focus) != Some(d.focus) {
                let note = d
                    .focus
                    .map_or(Note::Wandering, |p| Note::Pursuing { player: p });
                emit(
                    now,
                    Entry::Bot {
                        bot: &a.bot.name,
                        note: &note,
                    },
                );
            }
        }

        for (a, d) in actors.iter_mut().zip(decisions) {
            for msg in d.messages {
                if let ClientMessage::SendSuggestion { .. } = msg {
                    m.suggestions.sent += 1;
                }
                let text = a.view.encode(&msg);
                let frames = server.receive(a.conn, &text);
                a.absorb(frames);
            }
        }

        let out = server.tick();
        let by_conn: BTreeMap<ConnId, usize> = actors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conn, i))
            .collect();
        for (conn, frame) in out.frames {
            let a = &mut actors[by_conn[&conn]];
            if let Some(ack) = a.view.apply_frame(&frame).expect("server frames decode") {
                let text = a.view.encode(&ack);
                let frames = server.receive(conn, &text);
                a.absorb(frames);
            }
        }

        let w = world(&server, &room);
        let tick = w.tick;
        for (_, e) in &out.effects {
            match e.kind {
                EffectKind::AlertRaised { .. } => m.alerts_raised += 1,
                EffectKind::SuggestionDelivered { .. } => m.suggestions.delivered += 1,
                EffectKind::CooldownStarted { .. } => m.suggestions.cooldowns += 1,
                EffectKind::FeatureActivated { .. } => m.suggestions.accepted += 1,
                _ => {}
            }
            emit(e.tick, Entry::Engine { effect: e });
        }

        for (a, b, d) in separation.advance(w) {
            m.violations += 1;
            emit(
                tick,
                Entry::Sim(&SimEvent::SeparationViolation {
                    a,
                    b,
                    distance_m: d,
                }),
            );
        }

        for &t in &taggers {
            let tp = w.players[&t].pose.position;
            for (&p, ps) in &w.players {
                let taggable = p != t
                    && roles[&p] != Role::Tagger
                    && !ps.bubble.enabled
                    && !tagged.contains_key(&p)
                    && w.can_see(t, p)
                    && tp.distance(ps.pose.position) <= script.tag_range_m;
                if taggable {
                    tagged.insert(p, tick);
                    m.tags += 1;
                    emit(
                        tick,
                        Entry::Sim(&SimEvent::Tagged {
                            tagger: t,
                            player: p,
                        }),
                    );
                }
            }
        }

        probe(w);
        if let Some(s) = subject {
            let on = w.players[&s].bubble.enabled;
            if on && !subject_was_on && activated_at.is_none() {
                activated_at = Some(tick);
                emit(tick, Entry::Sim(&SimEvent::Activated { player: s }));
            }
            subject_was_on = on;
        }
    }

    if let Some(s) = subject {
        m.time_to_activation_s = activated_at.map(|t| t as f64 / f64::from(c.tick_hz));
        m.tagged_before_activation = match (tagged.get(&s), activated_at) {
            (Some(&tag), Some(act)) => tag < act,
            (Some(_), None) => true,
            (None, _) => false,
        };
    }
    for a in &actors {
        if !a.bot.is_subject {
            if let Some(sig) = a.bot.signals() {
                m.bystanders.insert(a.bot.name.clone(), sig);
            }
        }
    }
    Ok(RunOutput { metrics: m, log })
}

fn world<'a>(server: &'a LocalServer, room: &puffer_core::RoomId) -> &'a WorldState {
    server.room(room).expect("scenario room exists").world()
}

/// Tracks hard-constrained pairs between ticks. A pair already inside a
/// constraint when it appears (a bubble switched on around someone) may stay
/// there while not moving closer; anything else under the required
/// separation is a violation.
#[derive(Debug, Default)]
struct SeparationAudit {
    prev: BTreeMap<(PlayerId, PlayerId), (f64, f64)>,
}

impl SeparationAudit {
    fn advance(&mut self, w: &WorldState) -> Vec<(PlayerId, PlayerId, f64)> {
        let c = &w.constants;
        let eps = c.separation_epsilon_m;
        let ps: Vec<_> = w.players.iter().collect();
        let mut next = BTreeMap::new();
        let mut out = Vec::new();
        for (i, (a, pa)) in ps.iter().enumerate() {
            for (b, pb) in &ps[i + 1..] {
                let Some(r) = required_separation(**a, &pa.bubble, **b, &pb.bubble, c) else {
                    continue;
                };
                let d = pa.pose.position.distance(pb.pose.position);
                if d < r - eps {
                    let bad = match self.prev.get(&(**a, **b)) {
                        Some(&(pd, pr)) if pr == r => pd >= pr - eps || d < pd - eps,
                        _ => false,
                    };
                    if bad {
                        out.push((**a, **b, d));
                    }
                }
                next.insert((**a, **b), (d, r));
            }
        }
        self.prev = next;
        out
    }
}
