use std::collections::VecDeque;
use std::path::Path;

use super::message::{payload_bits, SemMessage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Transmitter to receiver.
    Forward = 0,
    /// Receiver to transmitter.
    Backward = 1,
}

impl Direction {
    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptFrame {
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

/// Every frame that crossed a channel, in send order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub frames: Vec<TranscriptFrame>,
}

const LOG_MAGIC: &[u8; 4] = b"TCLG";
const LOG_VERSION: u8 = 1;

impl Transcript {
    /// `TCLG`, a version byte, then per frame a direction byte, a 32-bit
    /// big-endian length and the raw message bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = LOG_MAGIC.to_vec();
        out.push(LOG_VERSION);
        for f in &self.frames {
            out.push(f.direction as u8);
            out.extend((f.bytes.len() as u32).to_be_bytes());
            out.extend(&f.bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != LOG_MAGIC {
            return Err(Error::Format("not a transcript log".into()));
        }
        if bytes[4] != LOG_VERSION {
            return Err(Error::Format(format!("unsupported transcript version {}", bytes[4])));
        }
        let mut rest = &bytes[5..];
        let mut frames = Vec::new();
        while !rest.is_empty() {
            if rest.len() < 5 {
                return Err(Error::Format("truncated frame header".into()));
            }
            let direction = match rest[0] {
                0 => Direction::Forward,
                1 => Direction::Backward,
                d => return Err(Error::Format(format!("bad frame direction {d}"))),
            };
            let len = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
            rest = &rest[5..];
            if len > rest.len() {
                return Err(Error::Format("truncated frame".into()));
            }
            frames.push(TranscriptFrame { direction, bytes: rest[..len].to_vec() });
            rest = &rest[len..];
        }
        Ok(Self { frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Parses every frame back into a message.
    pub fn messages(&self) -> Result<Vec<(Direction, SemMessage)>> {
        self.frames.iter().map(|f| Ok((f.direction, SemMessage::deserialize(&f.bytes)?))).collect()
    }
}

/// In-order, lossless two-way byte channel with per-direction counters.
#[derive(Debug, Default)]
pub struct Channel {
    queues: [VecDeque<Vec<u8>>; 2],
    sent_bits: [u64; 2],
    delivered_bits: [u64; 2],
    wire_bytes: [u64; 2],
    messages: [u64; 2],
    transcript: Transcript,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Serializes and enqueues; returns the message's payload bits.
    pub fn send(&mut self, direction: Direction, msg: &SemMessage) -> Result<u64> {
        let bytes = msg.serialize()?;
        let bits = payload_bits(msg);
        let i = direction.slot();
        self.sent_bits[i] += bits;
        self.wire_bytes[i] += bytes.len() as u64;
        self.messages[i] += 1;
        self.transcript.frames.push(TranscriptFrame { direction, bytes: bytes.clone() });
        self.queues[i].push_back(bytes);
        Ok(bits)
    }

    /// Next message in `direction`, if any.
    pub fn receive(&mut self, direction: Direction) -> Result<Option<SemMessage>> {
        let i = direction.slot();
        let Some(bytes) = self.queues[i].pop_front() else {
            return Ok(None);
        };
        let msg = SemMessage::deserialize(&bytes)?;
        self.delivered_bits[i] += payload_bits(&msg);
        Ok(Some(msg))
    }

    pub fn pending(&self, direction: Direction) -> usize {
        self.queues[direction.slot()].len()
    }

    /// Payload bits sent so far in `direction`.
    pub fn sent_bits(&self, direction: Direction) -> u64 {
        self.sent_bits[direction.slot()]
    }

    pub fn delivered_bits(&self, direction: Direction) -> u64 {
        self.delivered_bits[direction.slot()]
    }

    /// Serialized bytes including headers and padding.
    pub fn wire_bytes(&self, direction: Direction) -> u64 {
        self.wire_bytes[direction.slot()]
    }

    pub fn message_count(&self, direction: Direction) -> u64 {
        self.messages[direction.slot()]
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}
