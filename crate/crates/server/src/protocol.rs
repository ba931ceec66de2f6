//! Wire protocol: JSON envelopes `{type, seq, payload}` over text frames.

use puffer_core::rooms::RoomFilter;
use puffer_core::{
    BadgeSlot, BadgeValue, Boundary, DropReason, Feature, PlayerId, Response, RoomId, RoomMeta,
    SendOutcome, SocialAction, SuggestionId,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::snapshot::Snapshot;

/// Longest accepted display name, in characters.
pub const MAX_NAME_CHARS: usize = 32;

/// Largest accepted text frame, in bytes.
pub const MAX_FRAME_BYTES: usize = 16 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        name: String,
    },
    Move {
        x: f64,
        y: f64,
        #[serde(default)]
        facing: f64,
    },
    SetBubble {
        enabled: bool,
        boundary: Boundary,
        radius_al: f64,
        #[serde(default)]
        alerts_enabled: Option<bool>,
    },
    ActivateDefaultBubble {},
    SetBadge(BadgeValue),
    ClearBadge {
        slot: BadgeSlot,
    },
    Social(SocialAction),
    SendSuggestion {
        receiver: PlayerId,
        feature: Feature,
    },
    Respond {
        id: SuggestionId,
        response: Response,
    },
    ListRooms {
        #[serde(default)]
        filter: Option<RoomFilter>,
    },
    JoinRoom {
        room_id: RoomId,
    },
    LeaveRoom {},
    SetMute {
        muted: bool,
    },
    Ack {
        tick: u64,
    },
}

impl ClientMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::Move { .. } => "move",
            ClientMessage::SetBubble { .. } => "set_bubble",
            ClientMessage::ActivateDefaultBubble {} => "activate_default_bubble",
            ClientMessage::SetBadge(_) => "set_badge",
            ClientMessage::ClearBadge { .. } => "clear_badge",
            ClientMessage::Social(_) => "social",
            ClientMessage::SendSuggestion { .. } => "send_suggestion",
            ClientMessage::Respond { .. } => "respond",
            ClientMessage::ListRooms { .. } => "list_rooms",
            ClientMessage::JoinRoom { .. } => "join_room",
            ClientMessage::LeaveRoom {} => "leave_room",
            ClientMessage::SetMute { .. } => "set_mute",
            ClientMessage::Ack { .. } => "ack",
        }
    }
}

pub const CLIENT_TYPES: &[&str] = &[
    "hello",
    "move",
    "set_bubble",
    "activate_default_bubble",
    "set_badge",
    "clear_badge",
    "social",
    "send_suggestion",
    "respond",
    "list_rooms",
    "join_room",
    "leave_room",
    "set_mute",
    "ack",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        player_id: PlayerId,
        tick_rate: u32,
    },
    Ok {},
    Error {
        code: String,
        message: String,
    },
    Rooms {
        rooms: Vec<RoomMeta>,
    },
    Joined {
        room_id: RoomId,
        player_id: PlayerId,
    },
    Left {
        room_id: RoomId,
    },
    SuggestionResult(SendOutcome),
    DroppedIntent {
        reason: DropReason,
    },
    Snapshot(Box<Snapshot>),
}

impl ServerMessage {
    pub fn error(code: &str, message: impl std::fmt::Display) -> Self {
        ServerMessage::Error {
            code: code.to_owned(),
            message: message.to_string(),
        }
    }
}

/// A parsed inbound envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub seq: u64,
    pub msg: ClientMessage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("frame exceeds {MAX_FRAME_BYTES} bytes")]
    TooLarge,
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("envelope must be a JSON object")]
    NotAnObject,
    #[error("missing or invalid `{0}`")]
    BadField(&'static str),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("invalid payload for `{kind}`: {detail}")]
    BadPayload { kind: String, detail: String },
    #[error("seq {got} is not greater than {last}")]
    StaleSeq { got: u64, last: u64 },
    #[error("hello required before `{0}`")]
    NotAuthenticated(&'static str),
    #[error("already authenticated")]
    AlreadyAuthenticated,
    #[error("display name must be 1..={MAX_NAME_CHARS} printable characters")]
    BadName,
}

impl ProtocolError {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolError::TooLarge => "too_large",
            ProtocolError::Malformed(_) => "malformed",
            ProtocolError::NotAnObject => "not_an_object",
            ProtocolError::BadField(_) => "bad_field",
            ProtocolError::UnknownType(_) => "unknown_type",
            ProtocolError::BadPayload { .. } => "bad_payload",
            ProtocolError::StaleSeq { .. } => "stale_seq",
            ProtocolError::NotAuthenticated(_) => "not_authenticated",
            ProtocolError::AlreadyAuthenticated => "already_authenticated",
            ProtocolError::BadName => "bad_name",
        }
    }
}

/// Parses one text frame. `seq` is returned alongside errors when it could be
/// read, so the error response can reference it.
pub fn parse_envelope(text: &str) -> Result<Inbound, (Option<u64>, ProtocolError)> {
    if text.len() > MAX_FRAME_BYTES {
        return Err((None, ProtocolError::TooLarge));
    }
    let value: Value =
        serde_json::from_str(text).map_err(|e| (None, ProtocolError::Malformed(e.to_string())))?;
    let Value::Object(mut obj) = value else {
        return Err((None, ProtocolError::NotAnObject));
    };
    let seq = obj
        .get("seq")
        .and_then(Value::as_u64)
        .ok_or((None, ProtocolError::BadField("seq")))?;
    let kind = match obj.remove("type") {
        Some(Value::String(s)) => s,
        _ => return Err((Some(seq), ProtocolError::BadField("type"))),
    };
    if !CLIENT_TYPES.contains(&kind.as_str()) {
        return Err((Some(seq), ProtocolError::UnknownType(kind)));
    }
    let payload = match obj.remove("payload") {
        None | Some(Value::Null) => Value::Object(Default::default()),
        Some(p @ Value::Object(_)) => p,
        Some(_) => return Err((Some(seq), ProtocolError::BadField("payload"))),
    };
    let mut tagged = serde_json::Map::new();
    tagged.insert("type".into(), Value::String(kind.clone()));
    tagged.insert("payload".into(), payload);
    let msg = serde_json::from_value(Value::Object(tagged)).map_err(|e| {
        (
            Some(seq),
            ProtocolError::BadPayload {
                kind,
                detail: e.to_string(),
            },
        )
    })?;
    Ok(Inbound { seq, msg })
}

/// Encodes an outbound envelope. Keys come out sorted, so equal messages
/// always produce equal bytes.
pub fn encode_server(seq: u64, re: Option<u64>, msg: &ServerMessage) -> String {
    let mut value = serde_json::to_value(msg).expect("server messages serialize");
    let obj = value.as_object_mut().expect("adjacently tagged");
    obj.insert("seq".into(), seq.into());
    if let Some(re) = re {
        obj.insert("re".into(), re.into());
    }
    if !obj.contains_key("payload") {
        obj.insert("payload".into(), Value::Object(Default::default()));
    }
    serde_json::to_string(&value).expect("value serializes")
}

pub fn encode_client(seq: u64, msg: &ClientMessage) -> String {
    let mut value = serde_json::to_value(msg).expect("client messages serialize");
    let obj = value.as_object_mut().expect("adjacently tagged");
    obj.insert("seq".into(), seq.into());
    if !obj.contains_key("payload") {
        obj.insert("payload".into(), Value::Object(Default::default()));
    }
    serde_json::to_string(&value).expect("value serializes")
}

/// An outbound envelope decoded by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub seq: u64,
    pub re: Option<u64>,
    pub msg: ServerMessage,
}

pub fn decode_server(text: &str) -> Result<Outbound, serde_json::Error> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| serde::de::Error::custom("envelope must be an object"))?;
    let seq = obj
        .remove("seq")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| serde::de::Error::custom("missing seq"))?;
    let re = obj.remove("re").and_then(|v| v.as_u64());
    let msg = serde_json::from_value(value)?;
    Ok(Outbound { seq, re, msg })
}

/// Per-connection inbound sequence check.
#[derive(Debug, Clone, Default)]
pub struct SeqGuard {
    last: Option<u64>,
}

impl SeqGuard {
    pub fn accept(&mut self, seq: u64) -> Result<(), ProtocolError> {
        match self.last {
            Some(last) if seq <= last => Err(ProtocolError::StaleSeq { got: seq, last }),
            _ => {
                self.last = Some(seq);
                Ok(())
            }
        }
    }
}

pub fn valid_name(name: &str) -> bool {
    let n = name.chars().count();
    (1..=MAX_NAME_CHARS).contains(&n) && name.chars().all(|c| !c.is_control())
}
