use thiserror::Error;

use crate::rooms::RoomId;
use crate::types::{PlayerId, SuggestionId};

/// Errors raised by the safety engine and the suggestion protocol.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafetyError {
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("player {0} is already present")]
    DuplicatePlayer(PlayerId),
    #[error("bubble radius {0} arm-lengths is outside the allowed range")]
    InvalidRadius(f64),
    #[error("value is not legal for this badge slot")]
    IllegalValue,
    #[error("a player cannot target themselves")]
    SelfReference,
    #[error("a player cannot send a suggestion to themselves")]
    SelfSuggestion,
    #[error("unknown suggestion {0:?}")]
    UnknownSuggestion(SuggestionId),
    #[error("suggestion {0:?} is addressed to someone else")]
    NotAddressee(SuggestionId),
    #[error("suggestion {0:?} was already resolved")]
    AlreadyResolved(SuggestionId),
}

impl SafetyError {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            SafetyError::UnknownPlayer(_) => "unknown_player",
            SafetyError::DuplicatePlayer(_) => "duplicate_player",
            SafetyError::InvalidRadius(_) => "invalid_radius",
            SafetyError::IllegalValue => "illegal_value",
            SafetyError::SelfReference => "self_reference",
            SafetyError::SelfSuggestion => "self_suggestion",
            SafetyError::UnknownSuggestion(_) => "unknown_suggestion",
            SafetyError::NotAddressee(_) => "not_addressee",
            SafetyError::AlreadyResolved(_) => "already_resolved",
        }
    }
}

/// Errors raised by the room directory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoomError {
    #[error("room capacity must be positive and cover the player count")]
    InvalidCapacity,
    #[error("room {0} is full")]
    RoomFull(RoomId),
    #[error("player {0} is already in room {1}")]
    AlreadyInRoom(PlayerId, RoomId),
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("player {0} is not in a room")]
    NotInRoom(PlayerId),
    #[error("duplicate room id {0}")]
    DuplicateRoom(RoomId),
}

impl RoomError {
    pub fn code(&self) -> &'static str {
        match self {
            RoomError::InvalidCapacity => "invalid_capacity",
            RoomError::RoomFull(_) => "room_full",
            RoomError::AlreadyInRoom(..) => "already_in_room",
            RoomError::UnknownRoom(_) => "unknown_room",
            RoomError::NotInRoom(_) => "not_in_room",
            RoomError::DuplicateRoom(_) => "duplicate_room",
        }
    }
}
