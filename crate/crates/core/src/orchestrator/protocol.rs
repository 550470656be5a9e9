//! Solver/agent message framing.
//!
//! A frame is a little-endian `u32` byte count of everything after it, a
//! one-byte message type, `cfd_id`, `marl_id` and `step` as little-endian
//! `u32`, then the payload as little-endian `f64`.
//!
//! Per episode: the coordinator sends `Hello` with the episode seed; the
//! worker answers with one `State` per pseudo-environment; each `Action` is
//! answered by the next `State`, which carries `[R, r]` for the previous
//! action after the observation. The last action is answered by `Reward`,
//! then one `EpisodeEnd` with the flattened `(t, C_l, C_d)` force record.
//! The worker's own `Hello` on connect carries
//! `[version, obs_size, act_size, n_marl, n_actions]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 12;
pub const MAX_PAYLOAD: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Hello,
    State,
    Action,
    Reward,
    EpisodeEnd,
    Shutdown,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        match self {
            MessageKind::Hello => 0,
            MessageKind::State => 1,
            MessageKind::Action => 2,
            MessageKind::Reward => 3,
            MessageKind::EpisodeEnd => 4,
            MessageKind::Shutdown => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => MessageKind::Hello,
            1 => MessageKind::State,
            2 => MessageKind::Action,
            3 => MessageKind::Reward,
            4 => MessageKind::EpisodeEnd,
            5 => MessageKind::Shutdown,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub cfd_id: u32,
    pub marl_id: u32,
    pub step: u32,
    pub payload: Vec<f64>,
}

impl WireMessage {
    pub fn new(kind: MessageKind, cfd_id: u32, marl_id: u32, step: u32, payload: Vec<f64>) -> Self {
        Self {
            kind,
            cfd_id,
            marl_id,
            step,
            payload,
        }
    }

    pub fn shutdown() -> Self {
        Self::new(MessageKind::Shutdown, 0, 0, 0, Vec::new())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("truncated frame: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad frame length {len} at offset 0")]
    BadLength { len: usize },
    #[error("unknown message type {tag} at offset 4")]
    UnknownType { tag: u8 },
    #[error("payload of {0} floats exceeds the frame limit")]
    PayloadTooLarge(usize),
}

pub fn encode_message(msg: &WireMessage) -> Result<Vec<u8>, FrameError> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(msg.payload.len()));
    }
    let body = 1 + 12 + 8 * msg.payload.len();
    let mut out = Vec::with_capacity(4 + body);
    out.extend_from_slice(&(body as u32).to_le_bytes());
    out.push(msg.kind.tag());
    for id in [msg.cfd_id, msg.marl_id, msg.step] {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for x in &msg.payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Length of the frame starting at `bytes`, from its prefix.
pub fn frame_len(bytes: &[u8]) -> Result<usize, FrameError> {
    if bytes.len() < 4 {
        return Err(FrameError::Truncated {
            offset: 0,
            needed: 4,
            available: bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len < 13 || !(len - 13).is_multiple_of(8) || (len - 13) / 8 > MAX_PAYLOAD {
        return Err(FrameError::BadLength { len });
    }
    Ok(4 + len)
}

/// Decodes one frame from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(WireMessage, usize), FrameError> {
    let total = frame_len(bytes)?;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            offset: 4,
            needed: total - 4,
            available: bytes.len() - 4,
        });
    }
    let tag = bytes[4];
    let kind = MessageKind::from_tag(tag).ok_or(FrameError::UnknownType { tag })?;
    let word = |k: usize| u32::from_le_bytes(bytes[5 + 4 * k..9 + 4 * k].try_into().expect("4 bytes"));
    let payload = bytes[HEADER_LEN..total]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((
        WireMessage {
            kind,
            cfd_id: word(0),
            marl_id: word(1),
            step: word(2),
            payload,
        },
        total,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    AwaitState(u32),
    AwaitAction(u32),
    AwaitReward(u32),
    Finished,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("protocol violation on channel ({cfd_id}, {marl_id}): got {got}, expected {expected}")]
pub struct ProtocolViolation {
    pub cfd_id: u32,
    pub marl_id: u32,
    pub got: String,
    pub expected: String,
}

/// Enforces state -> action alternation on one (cfd_id, marl_id) channel.
#[derive(Clone, Debug)]
pub struct ProtocolGuard {
    cfd_id: u32,
    marl_id: u32,
    n_actions: u32,
    phase: Phase,
}

impl ProtocolGuard {
    pub fn new(cfd_id: u32, marl_id: u32, n_actions: u32) -> Self {
        Self {
            cfd_id,
            marl_id,
            n_actions,
            phase: Phase::Idle,
        }
    }

    pub fn start_episode(&mut self) {
        self.phase = Phase::AwaitState(0);
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Checks `kind` at `step` against the expected next message and advances.
    pub fn observe(&mut self, kind: MessageKind, step: u32) -> Result<(), ProtocolViolation> {
        let next = match (self.phase, kind) {
            (Phase::AwaitState(k), MessageKind::State) if k == step => Some(Phase::AwaitAction(k)),
            (Phase::AwaitAction(k), MessageKind::Action) if k == step => Some(if k + 1 < self.n_actions {
                Phase::AwaitState(k + 1)
            } else {
                Phase::AwaitReward(k)
            }),
            (Phase::AwaitReward(k), MessageKind::Reward) if k == step => Some(Phase::Finished),
            _ => None,
        };
        match next {
            Some(p) => {
                self.phase = p;
                Ok(())
            }
            None => Err(ProtocolViolation {
                cfd_id: self.cfd_id,
                marl_id: self.marl_id,
                got: format!("{kind:?} for step {step}"),
                expected: match self.phase {
                    Phase::Idle => "no message before the episode starts".into(),
                    Phase::AwaitState(k) => format!("State for step {k}"),
                    Phase::AwaitAction(k) => format!("Action for step {k}"),
                    Phase::AwaitReward(k) => format!("Reward for step {k}"),
                    Phase::Finished => "EpisodeEnd".into(),
                },
            }),
        }
    }
}
