//! The whole server in one thread, without sockets. Connections are plain
//! handles; frames go in as strings and come out as strings, so tests and
//! the simulator see exactly the bytes a socket client would.

use std::collections::BTreeMap;

use puffer_core::rooms::default_filter_from_badges;
use puffer_core::{Constants, Directory, Effect, PlayerId, Pose, RoomError, RoomId, RoomSeed};

use crate::protocol::ServerMessage;
use crate::room::{Profile, Reply, RoomCore};
use crate::session::{DirectoryCommand, Route, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnId(pub u64);

#[derive(Debug, Default)]
pub struct LocalTick {
    /// Outbound frames in delivery order.
    pub frames: Vec<(ConnId, String)>,
    /// Effects of this tick per room, in room order.
    pub effects: Vec<(RoomId, Effect)>,
}

#[derive(Debug)]
struct Conn {
    session: Session,
    /// Profile held while the player is between rooms.
    profile: Option<Profile>,
}

#[derive(Debug)]
pub struct LocalServer {
    constants: Constants,
    directory: Directory,
    rooms: BTreeMap<RoomId, RoomCore>,
    conns: BTreeMap<ConnId, Conn>,
    by_player: BTreeMap<PlayerId, ConnId>,
    next_conn: u64,
    next_player: u64,
}

impl LocalServer {
    pub fn new(constants: Constants, seeds: Vec<RoomSeed>) -> Result<Self, RoomError> {
        let directory = Directory::new(seeds)?;
        let rooms = directory
            .rooms()
            .map(|m| {
                (
                    m.room_id.clone(),
                    RoomCore::new(m.clone(), constants.clone()),
                )
            })
            .collect();
        Ok(LocalServer {
            constants,
            directory,
            rooms,
            conns: BTreeMap::new(),
            by_player: BTreeMap::new(),
            next_conn: 0,
            next_player: 0,
        })
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn room(&self, id: &RoomId) -> Option<&RoomCore> {
        self.rooms.get(id)
    }

    pub fn player(&self, conn: ConnId) -> Option<PlayerId> {
        self.conns.get(&conn)?.session.player
    }

    pub fn connect(&mut self) -> ConnId {
        self.next_conn += 1;
        let id = ConnId(self.next_conn);
        self.conns.insert(
            id,
            Conn {
                session: Session::default(),
                profile: None,
            },
        );
        id
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(player) = self.player(conn) {
            self.leave(player);
            self.by_player.remove(&player);
        }
        self.conns.remove(&conn);
    }

    /// Handles one inbound frame and returns the immediate responses.
    pub fn receive(&mut self, conn: ConnId, text: &str) -> Vec<String> {
        let Some(c) = self.conns.get_mut(&conn) else {
            return Vec::new();
        };
        let (seq, route) = match c.session.accept(text) {
            Ok(x) => x,
            Err((re, err)) => {
                tracing::debug!(?conn, %err, "protocol error");
                return vec![c.session.protocol_error(re, &err)];
            }
        };
        let replies = match route {
            Route::Hello { name } => {
                self.next_player += 1;
                let player = PlayerId(self.next_player);
                c.session.player = Some(player);
                c.profile = Some(Profile::new(name));
                self.by_player.insert(player, conn);
                vec![Reply {
                    to: player,
                    re: Some(seq),
                    msg: ServerMessage::Welcome {
                        player_id: player,
                        tick_rate: self.constants.tick_hz,
                    },
                }]
            }
            Route::Directory(cmd) => {
                let player = c.session.player.expect("routed after hello");
                self.directory_command(player, seq, cmd, None)
            }
            Route::Room(msg) => {
                let player = c.session.player.expect("routed after hello");
                match c.session.room.clone().and_then(|r| self.rooms.get_mut(&r)) {
                    Some(room) => room.handle(player, seq, msg),
                    None => vec![not_in_room(player, seq)],
                }
            }
        };
        self.encode_all(replies)
            .into_iter()
            .map(|(_, frame)| frame)
            .collect()
    }

    /// Joins a room at a chosen pose. Scripted setups use this in place of
    /// `join_room` so scenarios control where players start.
    pub fn join_at(&mut self, conn: ConnId, room: &RoomId, pose: Pose) -> Vec<String> {
        let Some(player) = self.player(conn) else {
            return Vec::new();
        };
        let replies =
            self.directory_command(player, 0, DirectoryCommand::Join(room.clone()), Some(pose));
        self.encode_all(replies)
            .into_iter()
            .map(|(_, frame)| frame)
            .collect()
    }

    fn directory_command(
        &mut self,
        player: PlayerId,
        seq: u64,
        cmd: DirectoryCommand,
        spawn: Option<Pose>,
    ) -> Vec<Reply> {
        let reply = |msg| Reply {
            to: player,
            re: Some(seq),
            msg,
        };
        let room_error = |e: RoomError| ServerMessage::error(e.code(), e);
        let conn = self.by_player[&player];
        match cmd {
            DirectoryCommand::List(filter) => {
                let filter = filter.unwrap_or_else(|| {
                    let c = &self.conns[&conn];
                    let badges = match &c.session.room {
                        Some(r) => self.rooms[r].world().players[&player].badges.clone(),
                        None => c
                            .profile
                            .as_ref()
                            .map(|p| p.badges.clone())
                            .unwrap_or_default(),
                    };
                    default_filter_from_badges(&badges)
                });
                vec![reply(ServerMessage::Rooms {
                    rooms: self.directory.filter_rooms(&filter),
                })]
            }
            DirectoryCommand::Join(room_id) => {
                if let Some(current) = self.directory.location(player) {
                    return vec![reply(room_error(RoomError::AlreadyInRoom(
                        player,
                        current.clone(),
                    )))];
                }
                let meta = match self.directory.join_room(player, &room_id) {
                    Ok(m) => m.clone(),
                    Err(e) => return vec![reply(room_error(e))],
                };
                let c = self.conns.get_mut(&conn).expect("connected");
                let profile = c.profile.take().expect("held between rooms");
                let room = self
                    .rooms
                    .get_mut(&room_id)
                    .expect("directory and rooms agree");
                room.set_meta(meta);
                if let Err(e) = room.attach(player, profile.clone(), spawn) {
                    c.profile = Some(profile);
                    self.directory.leave_room(player).expect("just joined");
                    self.refresh_meta(&room_id);
                    return vec![reply(ServerMessage::error(e.code(), e))];
                }
                c.session.room = Some(room_id.clone());
                vec![reply(ServerMessage::Joined {
                    room_id,
                    player_id: player,
                })]
            }
            DirectoryCommand::Leave => match self.leave(player) {
                Some(room_id) => vec![reply(ServerMessage::Left { room_id })],
                None => vec![not_in_room(player, seq)],
            },
            DirectoryCommand::SetMute(muted) => match self.directory.set_muted(player, muted) {
                Ok(meta) => {
                    let meta = meta.clone();
                    if let Some(room) = self.rooms.get_mut(&meta.room_id) {
                        room.set_meta(meta);
                    }
                    vec![reply(ServerMessage::Ok {})]
                }
                Err(e) => vec![reply(room_error(e))],
            },
        }
    }

    fn leave(&mut self, player: PlayerId) -> Option<RoomId> {
        let conn = *self.by_player.get(&player)?;
        let room_id = self.directory.leave_room(player).ok()?;
        let profile = self.rooms.get_mut(&room_id)?.detach(player)?;
        let c = self.conns.get_mut(&conn)?;
        c.profile = Some(profile);
        c.session.room = None;
        self.refresh_meta(&room_id);
        Some(room_id)
    }

    fn refresh_meta(&mut self, room_id: &RoomId) {
        if let (Some(meta), Some(room)) =
            (self.directory.meta(room_id), self.rooms.get_mut(room_id))
        {
            room.set_meta(meta.clone());
        }
    }

    /// Runs one tick in every room and returns all outbound frames.
    pub fn tick(&mut self) -> LocalTick {
        let mut replies = Vec::new();
        let mut effects = Vec::new();
        for (id, room) in self.rooms.iter_mut() {
            let out = room.tick();
            replies.extend(out.replies);
            effects.extend(out.effects.into_iter().map(|e| (id.clone(), e)));
        }
        LocalTick {
            frames: self.encode_all(replies),
            effects,
        }
    }

    fn encode_all(&mut self, replies: Vec<Reply>) -> Vec<(ConnId, String)> {
        replies
            .into_iter()
            .filter_map(|r| {
                let conn = *self.by_player.get(&r.to)?;
                let c = self.conns.get_mut(&conn)?;
                Some((conn, c.session.encode(r.re, &r.msg)))
            })
            .collect()
    }
}

fn not_in_room(player: PlayerId, seq: u64) -> Reply {
    Reply {
        to: player,
        re: Some(seq),
        msg: ServerMessage::error("not_in_room", "not in a room"),
    }
}
