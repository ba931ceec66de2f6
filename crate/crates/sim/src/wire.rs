//! Runs a scenario's bots against a live server over WebSockets. Timing
//! follows the wall clock, so results are not reproducible; this mode
//! exists to smoke-test the real transport.

use std::time::Duration;

use futures::stream::SplitSink;
use futures::{SinkExt, StreamExt};
use puffer_core::{Constants, EffectKind};
use puffer_server::client::ClientError;
use puffer_server::{ClientMessage, ClientView, ServerMessage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::{self, Message};
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::bots::{Bot, Context, Note, Observation};
use crate::scenario::{InvalidScript, ScenarioScript};

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Script(#[from] InvalidScript),
    #[error("websocket: {0}")]
    Socket(#[from] tungstenite::Error),
    #[error("bad server frame: {0}")]
    Frame(#[from] ClientError),
    #[error("connection for `{0}` closed early")]
    Closed(String),
}

/// What the bots observed. Ground truth is unavailable over the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WireSummary {
    pub ticks: u64,
    pub frames: u64,
    pub snapshots: u64,
    /// Error replies, as `name: code`.
    pub errors: Vec<String>,
    pub subject_activated: bool,
    pub alerts_seen: u32,
    pub touches: u32,
}

type Sink = SplitSink<WebSocketStream<MaybeTlsStream<TcpStream>>, Message>;

struct Remote {
    bot: Bot,
    view: ClientView,
    sink: Sink,
    rng: ChaCha8Rng,
}

impl Remote {
    async fn send(&mut self, msg: &ClientMessage) -> Result<(), WireError> {
        let text = self.view.encode(msg);
        self.sink.send(Message::text(text)).await?;
        Ok(())
    }
}

pub async fn run_over_wire(script: &ScenarioScript, url: &str) -> Result<WireSummary, WireError> {
    let c = Constants::default();
    script.validate(&c)?;
    let ctx = Context {
        tick_hz: c.tick_hz,
        access_path: script.access_path,
        latency: script.latency,
        tag_range_m: script.tag_range_m,
    };
    let (tx, mut rx) = mpsc::unbounded_channel::<(usize, Option<String>)>();
    let mut remotes = Vec::new();
    for (i, m) in script.cast.iter().enumerate() {
        let (ws, _) = connect_async(url).await?;
        let (sink, mut stream) = ws.split();
        let tx = tx.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                if let Message::Text(t) = msg {
                    if tx.send((i, Some(t.to_string()))).is_err() {
                        return;
                    }
                }
            }
            let _ = tx.send((i, None));
        });
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
        rng.set_stream(i as u64);
        let is_subject = script.subject.as_deref() == Some(m.name.as_str());
        let mut r = Remote {
            bot: Bot::new(m, is_subject, &mut rng),
            view: ClientView::new(),
            sink,
            rng,
        };
        r.send(&ClientMessage::Hello {
            name: m.name.clone(),
        })
        .await?;
        r.send(&ClientMessage::JoinRoom {
            room_id: script.room_id().clone(),
        })
        .await?;
        if let Some(b) = &m.bubble {
            r.send(&ClientMessage::SetBubble {
                enabled: b.enabled,
                boundary: b.boundary,
                radius_al: b.radius_al,
                alerts_enabled: Some(b.alerts_enabled),
            })
            .await?;
        }
        if !script.strip_badges {
            for v in &m.badges {
                r.send(&ClientMessage::SetBadge(*v)).await?;
            }
        }
        remotes.push(r);
    }
    drop(tx);

    let mut summary = WireSummary::default();
    let mut interval = tokio::time::interval(Duration::from_secs_f64(c.dt()));
    for _ in 0..script.duration_ticks {
        interval.tick().await;
        while let Ok((i, frame)) = rx.try_recv() {
            let r = &mut remotes[i];
            let Some(text) = frame else {
                return Err(WireError::Closed(r.bot.name.clone()));
            };
            summary.frames += 1;
            if let Some(ack) = r.view.apply_frame(&text)? {
                summary.snapshots += 1;
                r.send(&ack).await?;
            }
        }
        for r in remotes.iter_mut() {
            let replies: Vec<ServerMessage> = r.view.inbox.drain(..).map(|o| o.msg).collect();
            for msg in &replies {
                if let ServerMessage::Error { code, .. } = msg {
                    summary.errors.push(format!("{}: {code}", r.bot.name));
                }
            }
            let events = r.view.drain_events();
            if r.bot.is_subject {
                summary.alerts_seen += events
                    .iter()
                    .filter(|e| matches!(e.kind, EffectKind::AlertRaised { .. }))
                    .count() as u32;
            }
            let obs = Observation {
                view: &r.view,
                events: &events,
                replies: &replies,
            };
            let d = r.bot.step(obs, &ctx, &mut r.rng);
            summary.touches += d
                .notes
                .iter()
                .filter(|n| matches!(n, Note::Touched { .. }))
                .count() as u32;
            for msg in &d.messages {
                r.send(msg).await?;
            }
            if r.bot.is_subject && r.view.me.as_ref().is_some_and(|me| me.bubble.enabled) {
                summary.subject_activated = true;
            }
        }
        summary.ticks += 1;
    }
    for r in remotes.iter_mut() {
        let _ = r.sink.close().await;
    }
    Ok(summary)
}
