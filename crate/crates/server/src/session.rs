//! Connection-level state shared by the in-process and networked servers:
//! sequence checks, the hello handshake and message routing.

use puffer_core::rooms::RoomFilter;
use puffer_core::{PlayerId, RoomId};

use crate::protocol::{
    encode_server, parse_envelope, valid_name, ClientMessage, ProtocolError, SeqGuard,
    ServerMessage,
};

/// Where an accepted message goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Route {
    Hello { name: String },
    Directory(DirectoryCommand),
    Room(ClientMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectoryCommand {
    List(Option<RoomFilter>),
    Join(RoomId),
    Leave,
    SetMute(bool),
}

#[derive(Debug, Default)]
pub struct Session {
    guard: SeqGuard,
    out_seq: u64,
    pub player: Option<PlayerId>,
    pub room: Option<RoomId>,
}

impl Session {
    /// Parses and classifies one inbound frame.
    pub fn accept(&mut self, text: &str) -> Result<(u64, Route), (Option<u64>, ProtocolError)> {
        let inbound = parse_envelope(text).inspect_err(|(seq, _)| {
            // a readable seq is consumed even when the rest is invalid
            if let Some(seq) = seq {
                let _ = self.guard.accept(*seq);
            }
        })?;
        let seq = inbound.seq;
        self.guard.accept(seq).map_err(|e| (Some(seq), e))?;
        let route = match (inbound.msg, self.player) {
            (ClientMessage::Hello { name }, None) => {
                if !valid_name(&name) {
                    return Err((Some(seq), ProtocolError::BadName));
                }
                Route::Hello { name }
            }
            (ClientMessage::Hello { .. }, Some(_)) => {
                return Err((Some(seq), ProtocolError::AlreadyAuthenticated))
            }
            (msg, None) => {
                return Err((Some(seq), ProtocolError::NotAuthenticated(msg.type_name())))
            }
            (ClientMessage::ListRooms { filter }, Some(_)) => {
                Route::Directory(DirectoryCommand::List(filter))
            }
            (ClientMessage::JoinRoom { room_id }, Some(_)) => {
                Route::Directory(DirectoryCommand::Join(room_id))
            }
            (ClientMessage::LeaveRoom {}, Some(_)) => Route::Directory(DirectoryCommand::Leave),
            (ClientMessage::SetMute { muted }, Some(_)) => {
                Route::Directory(DirectoryCommand::SetMute(muted))
            }
            (msg, Some(_)) => Route::Room(msg),
        };
        Ok((seq, route))
    }

    /// Wraps a message in the next outbound envelope.
    pub fn encode(&mut self, re: Option<u64>, msg: &ServerMessage) -> String {
        self.out_seq += 1;
        encode_server(self.out_seq, re, msg)
    }

    pub fn protocol_error(&mut self, re: Option<u64>, err: &ProtocolError) -> String {
        let msg = ServerMessage::error("protocol_error", format!("{}: {err}", err.kind()));
        self.encode(re, &msg)
    }
}
