//! Deterministic safety engine for a shared social space.
//!
//! All state lives in [`WorldState`]; operations consume explicit inputs
//! (player ids, configs, intents, tick numbers) and return the effects they
//! produce. Nothing here reads a clock, draws random numbers or performs I/O.

pub mod config;
pub mod error;
pub mod proximity;
pub mod rooms;
pub mod safety;
pub mod spatial;
pub mod suggestions;
pub mod types;
pub mod world;

pub use config::Constants;
pub use error::{RoomError, SafetyError};
pub use proximity::{DropReason, MoveIntent, TickReport, VisibilityRelation};
pub use rooms::{Directory, RoomFilter, RoomId, RoomMeta, RoomSeed};
pub use safety::{
    BadgeSet, BadgeSlot, BadgeValue, Boundary, BubbleConfig, Interaction, SocialAction,
    SocialEnergy, SocialGraph, Sound,
};
pub use suggestions::{Feature, Response, SendOutcome, Suggestion, SuggestionState};
pub use types::{PlayerId, PlayerPair, Pose, SuggestionId, Vec3};
pub use world::{Effect, EffectKind, PlayerState, WorldState};
