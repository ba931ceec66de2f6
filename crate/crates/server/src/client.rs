//! Client-side reconstruction of replicated state, used by bots, tests and
//! the over-the-wire smoke client.

use std::collections::{BTreeMap, VecDeque};

use puffer_core::{Effect, PlayerId, RoomMeta, Suggestion};
use thiserror::Error;

use crate::protocol::{decode_server, encode_client, ClientMessage, Outbound, ServerMessage};
use crate::snapshot::{PublicPlayer, SelfView, Snapshot};

/// How many reconstructed ticks a client keeps as delta baselines.
const KEPT_STATES: usize = 128;

/// How many recent events are remembered for de-duplication.
const KEPT_EVENTS: usize = 512;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("undecodable frame: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("delta against unknown base tick {0}")]
    MissingBase(u64),
    #[error("roster lists {0} without data")]
    IncompleteRoster(PlayerId),
}

/// The latest state one player can perceive.
#[derive(Debug, Default)]
pub struct ClientView {
    out_seq: u64,
    pub player_id: Option<PlayerId>,
    pub tick: u64,
    pub players: BTreeMap<PlayerId, PublicPlayer>,
    pub me: Option<SelfView>,
    pub room: Option<RoomMeta>,
    pub suggestions: Vec<Suggestion>,
    /// Every distinct event received, in arrival order.
    pub events: Vec<Effect>,
    recent: VecDeque<Effect>,
    /// Non-snapshot messages, in arrival order.
    pub inbox: Vec<Outbound>,
    states: BTreeMap<u64, BTreeMap<PlayerId, PublicPlayer>>,
}

impl ClientView {
    pub fn new() -> Self {
        Self::default()
    }

    /// Encodes an outbound message with the next sequence number.
    pub fn encode(&mut self, msg: &ClientMessage) -> String {
        self.out_seq += 1;
        encode_client(self.out_seq, msg)
    }

    pub fn last_seq(&self) -> u64 {
        self.out_seq
    }

    /// Applies one inbound frame. Returns the ack to send, if any.
    pub fn apply_frame(&mut self, text: &str) -> Result<Option<ClientMessage>, ClientError> {
        let out = decode_server(text)?;
        self.apply(out)
    }

    pub fn apply(&mut self, out: Outbound) -> Result<Option<ClientMessage>, ClientError> {
        match out.msg {
            ServerMessage::Snapshot(snap) => self.apply_snapshot(*snap).map(Some),
            ServerMessage::Welcome { player_id, .. } => {
                self.player_id = Some(player_id);
                self.inbox.push(out);
                Ok(None)
            }
            ServerMessage::Left { .. } => {
                self.players.clear();
                self.states.clear();
                self.me = None;
                self.room = None;
                self.suggestions.clear();
                self.inbox.push(out);
                Ok(None)
            }
            _ => {
                self.inbox.push(out);
                Ok(None)
            }
        }
    }

    fn apply_snapshot(&mut self, snap: Snapshot) -> Result<ClientMessage, ClientError> {
        let mut next = match snap.base_tick {
            None => BTreeMap::new(),
            Some(b) => self
                .states
                .get(&b)
                .cloned()
                .ok_or(ClientError::MissingBase(b))?,
        };
        next.retain(|id, _| snap.roster.binary_search(id).is_ok());
        for p in snap.players {
            next.insert(p.player_id, p);
        }
        if let Some(missing) = snap.roster.iter().find(|id| !next.contains_key(id)) {
            return Err(ClientError::IncompleteRoster(*missing));
        }
        for e in snap.events {
            // unacknowledged events are resent; keep the first copy only
            if !self.recent.contains(&e) {
                self.recent.push_back(e.clone());
                if self.recent.len() > KEPT_EVENTS {
                    self.recent.pop_front();
                }
                self.events.push(e);
            }
        }
        if let Some(b) = snap.base_tick {
            self.states.retain(|t, _| *t >= b);
        }
        self.states.insert(snap.tick, next.clone());
        while self.states.len() > KEPT_STATES {
            self.states.pop_first();
        }
        self.tick = snap.tick;
        self.players = next;
        self.me = Some(snap.me);
        self.room = Some(snap.room);
        self.suggestions = snap.suggestions;
        Ok(ClientMessage::Ack { tick: snap.tick })
    }

    /// Removes and returns events received so far.
    pub fn drain_events(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.events)
    }
}
