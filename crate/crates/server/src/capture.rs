//! Protocol capture and audit: records every frame a scripted session
//! sends, together with the ground-truth visibility at that tick, and checks
//! that no frame describes a player hidden from its recipient.

use std::collections::BTreeSet;

use puffer_core::{Boundary, Constants, Feature, PlayerId, Pose, RoomId, RoomSeed};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::ClientView;
use crate::local::{ConnId, LocalServer};
use crate::protocol::ClientMessage;

/// One outbound frame as seen on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub tick: u64,
    pub to: PlayerId,
    /// Players the recipient could not see when the frame was produced.
    pub hidden: Vec<PlayerId>,
    pub frame: String,
}

/// Player ids a frame says anything about: roster entries, player records
/// and every id-valued field of events and suggestions.
pub fn mentioned_players(frame: &str) -> BTreeSet<PlayerId> {
    fn walk(v: &Value, out: &mut BTreeSet<PlayerId>) {
        match v {
            Value::Object(m) => {
                for (k, v) in m {
                    let id_field = matches!(
                        k.as_str(),
                        "player_id"
                            | "owner"
                            | "sender"
                            | "receiver"
                            | "approacher"
                            | "target"
                            | "subject"
                            | "player"
                    );
                    if id_field {
                        out.extend(v.as_u64().map(PlayerId));
                    }
                    if k == "roster" || k == "pair" {
                        out.extend(
                            v.as_array()
                                .into_iter()
                                .flatten()
                                .filter_map(|x| x.as_u64())
                                .map(PlayerId),
                        );
                    }
                    walk(v, out);
                }
            }
            Value::Array(a) => a.iter().for_each(|v| walk(v, out)),
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    if let Ok(v) = serde_json::from_str::<Value>(frame) {
        walk(&v, &mut out);
    }
    out
}

/// Frames that mention a player hidden from their recipient, by id or by
/// display name.
pub fn audit<'a>(
    records: &'a [CaptureRecord],
    names: &[(PlayerId, String)],
) -> Vec<&'a CaptureRecord> {
    records
        .iter()
        .filter(|r| {
            let ids = mentioned_players(&r.frame);
            r.hidden.iter().any(|h| {
                ids.contains(h)
                    || names
                        .iter()
                        .any(|(id, name)| id == h && r.frame.contains(&format!("\"{name}\"")))
            })
        })
        .collect()
}

/// A fixed three-player session: `pim` raises a soft bubble, `quill` walks
/// through it and back out while `rook` watches, sends a suggestion and
/// later turns on its own bubble.
pub fn scripted_three_client_session() -> (Vec<CaptureRecord>, Vec<(PlayerId, String)>) {
    let room = RoomId("plaza".into());
    let mut server = LocalServer::new(
        Constants::default(),
        vec![RoomSeed {
            room_id: room.clone(),
            name: "Plaza".into(),
            theme_tags: vec!["social".into()],
            capacity: 16,
        }],
    )
    .expect("valid seed");
    let cast = [("pim", 0.0, 0.0), ("quill", 3.0, 0.0), ("rook", 0.0, 4.0)];
    let mut clients: Vec<(ConnId, ClientView)> = Vec::new();
    let mut names = Vec::new();
    let mut records = Vec::new();
    for (name, x, y) in cast {
        let conn = server.connect();
        let mut view = ClientView::new();
        let hello = view.encode(&ClientMessage::Hello { name: name.into() });
        let mut frames = server.receive(conn, &hello);
        frames.extend(server.join_at(conn, &room, Pose::at(x, y)));
        for f in &frames {
            view.apply_frame(f).expect("server frames decode");
        }
        let id = view.player_id.expect("welcomed");
        names.push((id, name.to_owned()));
        records.extend(frames.into_iter().map(|frame| CaptureRecord {
            tick: 0,
            to: id,
            hidden: Vec::new(),
            frame,
        }));
        clients.push((conn, view));
    }
    let ids: Vec<PlayerId> = names.iter().map(|(id, _)| *id).collect();
    let (pim, quill, rook) = (0, 1, 2);

    let hidden_now = |server: &LocalServer, me: PlayerId| -> Vec<PlayerId> {
        let world = server.room(&room).expect("room exists").world();
        world
            .players
            .keys()
            .copied()
            .filter(|&q| q != me && !world.can_see(me, q))
            .collect()
    };

    for t in 0..90u64 {
        let mut script: Vec<(usize, ClientMessage)> = Vec::new();
        match t {
            0 => script.push((
                pim,
                ClientMessage::SetBubble {
                    enabled: true,
                    boundary: Boundary::Soft,
                    radius_al: 2.0,
                    alerts_enabled: None,
                },
            )),
            2 => script.push((
                rook,
                ClientMessage::SendSuggestion {
                    receiver: ids[quill],
                    feature: Feature::PersonalBubble,
                },
            )),
            5 => script.push((
                quill,
                ClientMessage::SetBadge(puffer_core::BadgeValue::Social(
                    puffer_core::SocialEnergy::Individual,
                )),
            )),
            60 => script.push((rook, ClientMessage::ActivateDefaultBubble {})),
            _ => {}
        }
        // quill walks into pim's bubble and back out again
        let (qx, qy) = {
            let world = server.room(&room).expect("room exists").world();
            let p = world.players[&ids[quill]].pose.position;
            (p.x, p.y)
        };
        let dx = if t < 30 {
            -0.1
        } else if t < 60 {
            0.1
        } else {
            0.0
        };
        let dy = if t >= 60 { 0.1 } else { 0.0 };
        script.push((
            quill,
            ClientMessage::Move {
                x: qx + dx,
                y: qy + dy,
                facing: 0.0,
            },
        ));
        for (who, msg) in script {
            let (conn, view) = &mut clients[who];
            let text = view.encode(&msg);
            for frame in server.receive(*conn, &text) {
                view.apply_frame(&frame).expect("server frames decode");
                records.push(CaptureRecord {
                    tick: t,
                    to: ids[who],
                    hidden: hidden_now(&server, ids[who]),
                    frame,
                });
            }
        }
        let out = server.tick();
        for (conn, frame) in out.frames {
            let who = clients
                .iter()
                .position(|(c, _)| *c == conn)
                .expect("known conn");
            let (_, view) = &mut clients[who];
            let ack = view.apply_frame(&frame).expect("server frames decode");
            records.push(CaptureRecord {
                tick: t + 1,
                to: ids[who],
                hidden: hidden_now(&server, ids[who]),
                frame,
            });
            if let Some(ack) = ack {
                let text = view.encode(&ack);
                server.receive(conn, &text);
            }
        }
    }
    (records, names)
}
