//! WebSocket transport. One task per room tick loop, one for the room
//! directory and one reader/writer pair per connection; they talk only
//! through channels.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use puffer_core::rooms::{default_filter_from_badges, RoomFilter};
use puffer_core::{
    BadgeSet, Constants, Directory, PlayerId, RoomError, RoomId, RoomMeta, RoomSeed, SafetyError,
};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{encode_server, ServerMessage, MAX_FRAME_BYTES};
use crate::room::{Profile, RoomCore};
use crate::session::{DirectoryCommand, Route, Session};

/// Replies waiting for a slow connection beyond this are dropped.
const REPLY_QUEUE: usize = 256;
const ROOM_QUEUE: usize = 1024;

type Frame = (Option<u64>, ServerMessage);

/// How a room reaches one connection: a bounded reply queue plus a
/// latest-only snapshot slot, so a slow reader never grows server memory.
#[derive(Debug, Clone)]
struct ClientLink {
    replies: mpsc::Sender<Frame>,
    snapshots: watch::Sender<Option<ServerMessage>>,
}

impl ClientLink {
    fn send(&self, re: Option<u64>, msg: ServerMessage) {
        if let ServerMessage::Snapshot(_) = msg {
            self.snapshots.send_replace(Some(msg));
        } else if self.replies.try_send((re, msg)).is_err() {
            tracing::warn!("reply queue full or closed; dropping reply");
        }
    }
}

enum RoomRequest {
    Attach {
        player: PlayerId,
        profile: Profile,
        link: ClientLink,
        reply: oneshot::Sender<Result<(), SafetyError>>,
    },
    Detach {
        player: PlayerId,
        reply: oneshot::Sender<Option<Profile>>,
    },
    Badges {
        player: PlayerId,
        reply: oneshot::Sender<Option<BadgeSet>>,
    },
    Command {
        player: PlayerId,
        seq: u64,
        msg: crate::protocol::ClientMessage,
    },
    Meta(RoomMeta),
}

enum DirRequest {
    List {
        filter: RoomFilter,
        reply: oneshot::Sender<Vec<RoomMeta>>,
    },
    Join {
        player: PlayerId,
        room: RoomId,
        reply: oneshot::Sender<Result<mpsc::Sender<RoomRequest>, RoomError>>,
    },
    Leave {
        player: PlayerId,
        reply: oneshot::Sender<Result<RoomId, RoomError>>,
    },
    SetMute {
        player: PlayerId,
        muted: bool,
        reply: oneshot::Sender<Result<(), RoomError>>,
    },
}

/// A running server.
pub struct NetServer {
    pub addr: SocketAddr,
    pub handle: JoinHandle<()>,
}

/// Binds and starts serving in the background.
pub async fn start(
    bind: SocketAddr,
    constants: Constants,
    seeds: Vec<RoomSeed>,
) -> Result<NetServer, ServeError> {
    let directory = Directory::new(seeds)?;
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, constants, directory));
    tracing::info!(%addr, "listening");
    Ok(NetServer { addr, handle })
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rooms(#[from] RoomError),
}

async fn serve(listener: TcpListener, constants: Constants, directory: Directory) {
    let mut room_txs = BTreeMap::new();
    for meta in directory.rooms() {
        let (tx, rx) = mpsc::channel(ROOM_QUEUE);
        tokio::spawn(room_loop(
            RoomCore::new(meta.clone(), constants.clone()),
            rx,
        ));
        room_txs.insert(meta.room_id.clone(), tx);
    }
    let (dir_tx, dir_rx) = mpsc::channel(ROOM_QUEUE);
    tokio::spawn(directory_loop(directory, room_txs, dir_rx));
    let ids = Arc::new(AtomicU64::new(0));
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                tokio::spawn(connection(
                    stream,
                    peer,
                    dir_tx.clone(),
                    ids.clone(),
                    constants.tick_hz,
                ));
            }
            Err(e) => tracing::warn!(error = %e, "accept failed"),
        }
    }
}

async fn room_loop(mut room: RoomCore, mut rx: mpsc::Receiver<RoomRequest>) {
    let period = Duration::from_secs_f64(room.world().constants.dt());
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let mut links: BTreeMap<PlayerId, ClientLink> = BTreeMap::new();
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let out = room.tick();
                for r in out.replies {
                    if let Some(link) = links.get(&r.to) {
                        link.send(r.re, r.msg);
                    }
                }
            }
            req = rx.recv() => {
                let Some(req) = req else { break };
                match req {
                    RoomRequest::Attach { player, profile, link, reply } => {
                        let res = room.attach(player, profile, None);
                        if res.is_ok() {
                            links.insert(player, link);
                        }
                        let _ = reply.send(res);
                    }
                    RoomRequest::Detach { player, reply } => {
                        links.remove(&player);
                        let _ = reply.send(room.detach(player));
                    }
                    RoomRequest::Badges { player, reply } => {
                        let badges = room.world().players.get(&player).map(|p| p.badges.clone());
                        let _ = reply.send(badges);
                    }
                    RoomRequest::Command { player, seq, msg } => {
                        for r in room.handle(player, seq, msg) {
                            if let Some(link) = links.get(&r.to) {
                                link.send(r.re, r.msg);
                            }
                        }
                    }
                    RoomRequest::Meta(meta) => room.set_meta(meta),
                }
            }
        }
    }
}

async fn directory_loop(
    mut directory: Directory,
    rooms: BTreeMap<RoomId, mpsc::Sender<RoomRequest>>,
    mut rx: mpsc::Receiver<DirRequest>,
) {
    let publish = |directory: &Directory, room: &RoomId| {
        if let (Some(meta), Some(tx)) = (directory.meta(room), rooms.get(room)) {
            let _ = tx.try_send(RoomRequest::Meta(meta.clone()));
        }
    };
    while let Some(req) = rx.recv().await {
        match req {
            DirRequest::List { filter, reply } => {
                let _ = reply.send(directory.filter_rooms(&filter));
            }
            DirRequest::Join {
                player,
                room,
                reply,
            } => {
                let res = directory.join_room(player, &room).map(|_| ());
                if res.is_ok() {
                    publish(&directory, &room);
                }
                let _ = reply.send(res.map(|_| rooms[&room].clone()));
            }
            DirRequest::Leave { player, reply } => {
                let res = directory.leave_room(player);
                if let Ok(room) = &res {
                    publish(&directory, room);
                }
                let _ = reply.send(res);
            }
            DirRequest::SetMute {
                player,
                muted,
                reply,
            } => {
                let res = directory
                    .set_muted(player, muted)
                    .map(|m| m.room_id.clone());
                if let Ok(room) = &res {
                    publish(&directory, room);
                }
                let _ = reply.send(res.map(|_| ()));
            }
        }
    }
}

/// Per-connection state held by the reader task.
struct Conn {
    session: Session,
    dir: mpsc::Sender<DirRequest>,
    room: Option<mpsc::Sender<RoomRequest>>,
    profile: Option<Profile>,
    name: String,
    link: ClientLink,
}

async fn connection(
    stream: TcpStream,
    peer: SocketAddr,
    dir: mpsc::Sender<DirRequest>,
    ids: Arc<AtomicU64>,
    tick_rate: u32,
) {
    let config = tokio_tungstenite::tungstenite::protocol::WebSocketConfig {
        max_message_size: Some(MAX_FRAME_BYTES * 4),
        max_frame_size: Some(MAX_FRAME_BYTES * 4),
        ..Default::default()
    };
    let ws = match tokio_tungstenite::accept_async_with_config(stream, Some(config)).await {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!(%peer, error = %e, "handshake failed");
            return;
        }
    };
    tracing::debug!(%peer, "connected");
    let (mut sink, mut source) = ws.split();
    let (reply_tx, mut reply_rx) = mpsc::channel::<Frame>(REPLY_QUEUE);
    let (snap_tx, mut snap_rx) = watch::channel::<Option<ServerMessage>>(None);
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        loop {
            let (re, msg) = tokio::select! {
                biased;
                r = reply_rx.recv() => match r {
                    Some(f) => f,
                    None => break,
                },
                changed = snap_rx.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    match snap_rx.borrow_and_update().clone() {
                        Some(m) => (None, m),
                        None => continue,
                    }
                }
            };
            seq += 1;
            if sink
                .send(Message::text(encode_server(seq, re, &msg)))
                .await
                .is_err()
            {
                break;
            }
        }
    });

    let mut conn = Conn {
        session: Session::default(),
        dir,
        room: None,
        profile: None,
        name: String::new(),
        link: ClientLink {
            replies: reply_tx,
            snapshots: snap_tx,
        },
    };
    while let Some(frame) = source.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t.to_string(),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(Message::Binary(_)) => {
                let msg = ServerMessage::error("protocol_error", "binary frames are not supported");
                conn.link.send(None, msg);
                continue;
            }
            Ok(_) => continue,
        };
        conn.handle(&text, &ids, tick_rate).await;
    }
    conn.leave().await;
    drop(conn);
    let _ = writer.await;
    tracing::debug!(%peer, "disconnected");
}

impl Conn {
    async fn handle(&mut self, text: &str, ids: &AtomicU64, tick_rate: u32) {
        let (seq, route) = match self.session.accept(text) {
            Ok(x) => x,
            Err((re, err)) => {
                let msg = ServerMessage::error("protocol_error", format!("{}: {err}", err.kind()));
                self.link.send(re, msg);
                return;
            }
        };
        let reply = match route {
            Route::Hello { name } => {
                let player = PlayerId(ids.fetch_add(1, Ordering::Relaxed) + 1);
                self.session.player = Some(player);
                self.profile = Some(Profile::new(name.clone()));
                self.name = name;
                ServerMessage::Welcome {
                    player_id: player,
                    tick_rate,
                }
            }
            Route::Room(msg) => match &self.room {
                Some(room) => {
                    let player = self.player();
                    if room
                        .send(RoomRequest::Command { player, seq, msg })
                        .await
                        .is_err()
                    {
                        tracing::warn!("room task gone");
                    }
                    return;
                }
                None => not_in_room(),
            },
            Route::Directory(cmd) => self.directory(cmd).await,
        };
        self.link.send(Some(seq), reply);
    }

    fn player(&self) -> PlayerId {
        self.session.player.expect("routed after hello")
    }

    async fn directory(&mut self, cmd: DirectoryCommand) -> ServerMessage {
        let player = self.player();
        let room_error = |e: RoomError| ServerMessage::error(e.code(), e);
        match cmd {
            DirectoryCommand::List(filter) => {
                let filter = match filter {
                    Some(f) => f,
                    None => default_filter_from_badges(&self.badges().await),
                };
                let (reply, rx) = oneshot::channel();
                let _ = self.dir.send(DirRequest::List { filter, reply }).await;
                match rx.await {
                    Ok(rooms) => ServerMessage::Rooms { rooms },
                    Err(_) => unavailable(),
                }
            }
            DirectoryCommand::Join(room_id) => {
                let Some(profile) = self.profile.take() else {
                    let current = self.session.room.clone().unwrap_or(RoomId(String::new()));
                    return room_error(RoomError::AlreadyInRoom(player, current));
                };
                let (reply, rx) = oneshot::channel();
                let _ = self
                    .dir
                    .send(DirRequest::Join {
                        player,
                        room: room_id.clone(),
                        reply,
                    })
                    .await;
                let room = match rx.await {
                    Ok(Ok(room)) => room,
                    Ok(Err(e)) => {
                        self.profile = Some(profile);
                        return room_error(e);
                    }
                    Err(_) => {
                        self.profile = Some(profile);
                        return unavailable();
                    }
                };
                let (reply, rx) = oneshot::channel();
                let attach = RoomRequest::Attach {
                    player,
                    profile: profile.clone(),
                    link: self.link.clone(),
                    reply,
                };
                let attached = match room.send(attach).await {
                    Ok(()) => rx.await.unwrap_or(Err(SafetyError::UnknownPlayer(player))),
                    Err(_) => Err(SafetyError::UnknownPlayer(player)),
                };
                match attached {
                    Ok(()) => {
                        self.room = Some(room);
                        self.session.room = Some(room_id.clone());
                        ServerMessage::Joined {
                            room_id,
                            player_id: player,
                        }
                    }
                    Err(e) => {
                        self.profile = Some(profile);
                        let (reply, rx) = oneshot::channel();
                        let _ = self.dir.send(DirRequest::Leave { player, reply }).await;
                        let _ = rx.await;
                        ServerMessage::error(e.code(), e)
                    }
                }
            }
            DirectoryCommand::Leave => match self.leave().await {
                Some(room_id) => ServerMessage::Left { room_id },
                None => not_in_room(),
            },
            DirectoryCommand::SetMute(muted) => {
                let (reply, rx) = oneshot::channel();
                let _ = self
                    .dir
                    .send(DirRequest::SetMute {
                        player,
                        muted,
                        reply,
                    })
                    .await;
                match rx.await {
                    Ok(Ok(())) => ServerMessage::Ok {},
                    Ok(Err(e)) => room_error(e),
                    Err(_) => unavailable(),
                }
            }
        }
    }

    async fn badges(&self) -> BadgeSet {
        match (&self.room, &self.profile) {
            (Some(room), _) => {
                let (reply, rx) = oneshot::channel();
                let player = self.player();
                let _ = room.send(RoomRequest::Badges { player, reply }).await;
                rx.await.ok().flatten().unwrap_or_default()
            }
            (None, Some(p)) => p.badges.clone(),
            (None, None) => BadgeSet::default(),
        }
    }

    async fn leave(&mut self) -> Option<RoomId> {
        let room = self.room.take()?;
        let player = self.player();
        let (reply, rx) = oneshot::channel();
        let _ = room.send(RoomRequest::Detach { player, reply }).await;
        let profile = rx.await.ok().flatten();
        let (reply, rx) = oneshot::channel();
        let _ = self.dir.send(DirRequest::Leave { player, reply }).await;
        let left = rx.await.ok().and_then(Result::ok);
        self.profile = Some(profile.unwrap_or_else(|| Profile::new(self.name.clone())));
        self.session.room = None;
        left
    }
}

fn not_in_room() -> ServerMessage {
    ServerMessage::error("not_in_room", "not in a room")
}

fn unavailable() -> ServerMessage {
    ServerMessage::error("unavailable", "service stopped")
}
